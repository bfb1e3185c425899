//! Uniform periodic grids standing in for the real line.
//!
//! A [`Grid`] covers `[-L, L)` with `N` equispaced nodes; a [`Field`] is a set of
//! real samples on such a grid. Differentiation, Sobolev norms and products are
//! computed pseudospectrally. Norms use the Fourier multiplier `(1 + k^2)^{s/2}`
//! and include the mean mode with weight one, so `H^{-1}` on the box is a
//! genuine norm.

use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Uniform periodic grid on `[-L, L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_length: f64,
    points: usize,
}

impl Grid {
    /// Builds a grid with `points` nodes on `[-half_length, half_length)`.
    pub fn new(half_length: f64, points: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half length must be positive, got {half_length}"
            )));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "point count must be even and at least 8, got {points}"
            )));
        }
        Ok(Self {
            half_length,
            points,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    /// Position of node `j`, `x_j = -L + j h`.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.node(j)).collect()
    }

    /// Wavenumber `k = pi m / L` attached to FFT index `j`.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> f64 {
        std::f64::consts::PI * fft::mode(j, self.points) as f64 / self.half_length
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.wavenumber(j)).collect()
    }

    /// Same box, `factor` times as many points.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid {
            half_length: self.half_length,
            points: self.points * factor,
        }
    }

    /// Same point count on `[-aL, aL)`.
    pub fn dilated(&self, factor: f64) -> Result<Grid> {
        Grid::new(self.half_length * factor, self.points)
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.points == other.points && self.half_length == other.half_length
    }
}

/// Real samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    samples: Vec<f64>,
}

impl Field {
    /// Wraps samples, checking their count and finiteness.
    pub fn new(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: samples.len(),
            });
        }
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(j));
        }
        Ok(Self { grid, samples })
    }

    /// Internal constructor for samples produced by trusted arithmetic.
    pub(crate) fn from_vec(grid: Grid, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.len());
        Self { grid, samples }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_vec(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self::from_vec(grid, vec![value; grid.len()])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(grid, (0..grid.len()).map(|j| f(grid.node(j))).collect())
    }

    /// Builds a field from a function of the node index.
    pub fn from_fn_indexed(grid: Grid, f: impl Fn(usize) -> f64) -> Self {
        Self::from_vec(grid, (0..grid.len()).map(f).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_vec(self.grid, self.samples.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination with access to the node position.
    pub fn map_with_x(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let g = self.grid;
        Field::from_vec(
            g,
            self.samples
                .iter()
                .enumerate()
                .map(|(j, &v)| f(g.node(j), v))
                .collect(),
        )
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_grid(other)?;
        Ok(Field::from_vec(
            self.grid,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    /// Plain (aliased) pointwise product.
    pub fn pointwise(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Rectangle-rule integral over the box.
    pub fn integral(&self) -> f64 {
        self.grid.spacing() * self.samples.iter().sum::<f64>()
    }

    /// Largest absolute sample among the `margin` nodes nearest either edge.
    pub fn edge_magnitude(&self, margin: usize) -> f64 {
        let n = self.samples.len();
        let m = margin.min(n / 2).max(1);
        self.samples[..m]
            .iter()
            .chain(&self.samples[n - m..])
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Unnormalised DFT of the samples in FFT order.
    pub fn spectrum(&self) -> Vec<Complex64> {
        fft::forward(&self.samples)
    }

    /// Builds a field from an FFT-ordered spectrum, discarding imaginary parts
    /// of the inverse transform.
    pub fn from_spectrum(grid: Grid, spectrum: &[Complex64]) -> Field {
        Field::from_vec(grid, fft::inverse(spectrum))
    }

    /// `f(x - a)` by phase rotation; exact for band-limited periodic data.
    pub fn translate(&self, a: f64) -> Field {
        let g = self.grid;
        let mut spec = self.spectrum();
        let n = g.len();
        for (j, c) in spec.iter_mut().enumerate() {
            if j == n / 2 {
                // The Nyquist mode has no consistent real shift.
                *c *= (g.wavenumber(j) * a).cos();
                continue;
            }
            *c *= Complex64::from_polar(1.0, -g.wavenumber(j) * a);
        }
        Field::from_spectrum(g, &spec)
    }

    /// Band-limited interpolant evaluated at arbitrary `x` (periodic).
    pub fn evaluate_at(&self, x: f64) -> f64 {
        let spec = self.spectrum();
        evaluate_spectrum(&self.grid, &spec, x)
    }

    /// Band-limited interpolation onto a grid of `factor` times as many points.
    pub fn refine(&self, factor: usize) -> Field {
        let fine = self.grid.refined(factor);
        let spec = fft::pad(&self.spectrum(), fine.len());
        Field::from_vec(fine, fft::inverse(&spec))
    }

    /// Projection onto a coarser grid with the same box (drops high modes).
    pub fn coarsen(&self, points: usize) -> Result<Field> {
        let coarse = Grid::new(self.grid.half_length, points)?;
        if points > self.grid.len() {
            return Err(Error::InvalidGrid("coarsen target has more points".into()));
        }
        let spec = fft::truncate(&self.spectrum(), points);
        Ok(Field::from_vec(coarse, fft::inverse(&spec)))
    }

    pub fn to_snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            half_length: self.grid.half_length,
            points: self.grid.points,
            samples: self.samples.clone(),
        }
    }

    /// Writes `x,value` rows without a header.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        for (j, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.node(j), v)?;
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_snapshot())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Field> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snap: FieldSnapshot = serde_json::from_str(&text)?;
        snap.into_field()
    }
}

pub(crate) fn evaluate_spectrum(grid: &Grid, spec: &[Complex64], x: f64) -> f64 {
    let n = grid.len();
    let shifted = x + grid.half_length;
    let mut acc = 0.0;
    for (j, c) in spec.iter().enumerate() {
        let phase = grid.wavenumber(j) * shifted;
        // The Nyquist mode enters as a cosine to keep the interpolant real.
        acc += if j == n / 2 {
            c.re * phase.cos()
        } else {
            c.re * phase.cos() - c.im * phase.sin()
        };
    }
    acc / n as f64
}

/// JSON form of a field: `{"L": .., "N": .., "samples": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldSnapshot {
    #[serde(rename = "L")]
    pub half_length: f64,
    #[serde(rename = "N")]
    pub points: usize,
    pub samples: Vec<f64>,
}

impl FieldSnapshot {
    pub fn into_field(self) -> Result<Field> {
        Field::new(Grid::new(self.half_length, self.points)?, self.samples)
    }
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_snapshot().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        FieldSnapshot::deserialize(d)?
            .into_field()
            .map_err(serde::de::Error::custom)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a + b).expect("grid mismatch in Field + Field")
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a - b).expect("grid mismatch in Field - Field")
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|v| -v)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}

/// Smooth cutoff selecting a half-line `(a, inf)`.
///
/// The transition is a C-infinity step: exactly 0 left of `a - width`, exactly 1
/// right of `a + width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub position: f64,
    pub width: f64,
}

impl WindowSpec {
    pub const DEFAULT_WIDTH: f64 = 2.0;

    pub fn new(position: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && position.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "window width must be positive, got {width}"
            )));
        }
        Ok(Self { position, width })
    }

    pub fn at(position: f64) -> Self {
        Self {
            position,
            width: Self::DEFAULT_WIDTH,
        }
    }

    pub fn cutoff(&self, x: f64) -> f64 {
        smooth_step((x - self.position + self.width) / (2.0 * self.width))
    }
}

/// C-infinity step from 0 (t <= 0) to 1 (t >= 1).
pub(crate) fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Derivative of order `order` by multiplication with `(ik)^order`.
///
/// The Nyquist coefficient is dropped for odd orders so the result stays real.
pub fn spectral_derivative(f: &Field, order: u32) -> Field {
    let g = f.grid;
    let mut spec = f.spectrum();
    apply_derivative(&g, &mut spec, order);
    Field::from_spectrum(g, &spec)
}

pub(crate) fn apply_derivative(g: &Grid, spec: &mut [Complex64], order: u32) {
    if order == 0 {
        return;
    }
    let n = g.len();
    let i_pow = match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    for (j, c) in spec.iter_mut().enumerate() {
        if j == n / 2 && order % 2 == 1 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let k = g.wavenumber(j);
        *c *= i_pow * k.powi(order as i32);
    }
}

/// Antiderivative `F` with `F' = f - mean(f)` and zero mean.
pub fn spectral_antiderivative(f: &Field) -> Field {
    let g = f.grid;
    let mut spec = f.spectrum();
    let n = g.len();
    for (j, c) in spec.iter_mut().enumerate() {
        if j == 0 || j == n / 2 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= Complex64::new(0.0, g.wavenumber(j));
        }
    }
    Field::from_spectrum(g, &spec)
}

/// `H^s` norm, optionally restricted to a half-line through a smooth window.
pub fn sobolev_norm(f: &Field, s: f64, window: Option<&WindowSpec>) -> Result<f64> {
    match window {
        None => Ok(spectral_sobolev_norm(f, s)),
        Some(w) => {
            if s < 0.0 || s.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "windowed norms need a nonnegative integer order, got {s}"
                )));
            }
            let cut = f.map_with_x(|x, v| w.cutoff(x) * v);
            Ok(spectral_sobolev_norm(&cut, s))
        }
    }
}

fn spectral_sobolev_norm(f: &Field, s: f64) -> f64 {
    let g = f.grid;
    let spec = f.spectrum();
    let n = g.len() as f64;
    let sum: f64 = spec
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let k = g.wavenumber(j);
            (1.0 + k * k).powf(s) * c.norm_sqr()
        })
        .sum();
    (2.0 * g.half_length * sum / (n * n)).sqrt()
}

/// `H^s` norm of `x -> a f(kappa x)`, computed from the spectrum of `f` so no
/// resampling is needed.
pub fn dilated_sobolev_norm(f: &Field, amplitude: f64, kappa: f64, s: f64) -> f64 {
    let g = f.grid;
    let spec = f.spectrum();
    let n = g.len() as f64;
    let sum: f64 = spec
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let k = kappa * g.wavenumber(j);
            (1.0 + k * k).powf(s) * c.norm_sqr()
        })
        .sum();
    amplitude.abs() * (2.0 * g.half_length * sum / (n * n * kappa)).sqrt()
}

/// Shorthand for the unwindowed `H^{-1}` norm.
pub fn hm1_norm(f: &Field) -> f64 {
    spectral_sobolev_norm(f, -1.0)
}

pub fn l2_norm(f: &Field) -> f64 {
    (f.grid.spacing() * f.samples.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// `H^1` norm squared computed as `||f||^2 + ||f_x||^2`.
pub fn h1_norm(f: &Field) -> f64 {
    spectral_sobolev_norm(f, 1.0)
}

/// Rectangle-rule pairing `h sum f_j g_j`.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.check_grid(g)?;
    Ok(f.grid.spacing() * f.samples.iter().zip(&g.samples).map(|(a, b)| a * b).sum::<f64>())
}

/// Pointwise product computed on a 3/2-padded grid and truncated back, so a
/// product of two fields carrying modes `|m| <= N/3` is free of aliasing.
pub fn multiply_dealiased(f: &Field, g: &Field) -> Result<Field> {
    f.check_grid(g)?;
    let n = f.grid.len();
    let m = 3 * n / 2;
    let fine_f = fft::inverse(&fft::pad(&f.spectrum(), m));
    let fine_g = fft::inverse(&fft::pad(&g.spectrum(), m));
    let prod: Vec<f64> = fine_f.iter().zip(&fine_g).map(|(a, b)| a * b).collect();
    let spec = fft::truncate(&fft::forward(&prod), n);
    Ok(Field::from_spectrum(f.grid, &spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn grid_examples() {
        let g = Grid::new(PI, 8).unwrap();
        assert!((g.spacing() - PI / 4.0).abs() < 1e-15);
        assert!((g.node(0) + PI).abs() < 1e-15);
        assert!((g.node(7) - 3.0 * PI / 4.0).abs() < 1e-15);
        let g = Grid::new(50.0, 2048).unwrap();
        assert!((g.spacing() - 100.0 / 2048.0).abs() < 1e-15);
        assert!(Grid::new(1.0, 7).is_err());
        assert!(Grid::new(0.0, 8).is_err());
        assert!(Grid::new(-1.0, 8).is_err());
        assert!(Grid::new(1.0, 6).is_err());
    }

    #[test]
    fn wavenumbers_follow_fft_order() {
        let g = Grid::new(PI, 8).unwrap();
        let k = g.wavenumbers();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn field_rejects_bad_samples() {
        let g = Grid::new(1.0, 8).unwrap();
        assert!(matches!(
            Field::new(g, vec![0.0; 7]),
            Err(Error::LengthMismatch { .. })
        ));
        let mut s = vec![0.0; 8];
        s[3] = f64::NAN;
        assert!(matches!(Field::new(g, s), Err(Error::NonFinite(3))));
    }

    #[test]
    fn derivative_of_sine_and_constant() {
        let g = Grid::new(PI, 32).unwrap();
        let d = spectral_derivative(&Field::from_fn(g, f64::sin), 1);
        let err = d.zip_with(&Field::from_fn(g, f64::cos), |a, b| a - b).unwrap();
        assert!(err.max_abs() < 1e-14);
        for order in 1..5 {
            assert!(spectral_derivative(&Field::constant(g, 3.5), order).max_abs() < 1e-13);
        }
    }

    #[test]
    fn third_derivative_of_sech() {
        let g = Grid::new(50.0, 2048).unwrap();
        let d3 = spectral_derivative(&Field::from_fn(g, sech), 3);
        let exact = Field::from_fn(g, |x| {
            let s = sech(x);
            let t = x.tanh();
            -s * t * t * t + 5.0 * s * s * s * t
        });
        let err = (&d3 - &exact).max_abs();
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = Grid::new(PI, 64).unwrap();
        let k = 5.0;
        let f = Field::from_fn(g, |x| (k * x).cos() / PI.sqrt());
        assert!((l2_norm(&f) - 1.0).abs() < 1e-13);
        let n = sobolev_norm(&f, -1.0, None).unwrap();
        assert!((n - (1.0 + k * k).powf(-0.5)).abs() < 1e-13);

        let g = Grid::new(50.0, 2048).unwrap();
        let s = Field::from_fn(g, sech);
        assert!((sobolev_norm(&s, 0.0, None).unwrap() - 2f64.sqrt()).abs() < 1e-10);
        let w = WindowSpec::at(-50.0);
        let a = sobolev_norm(&s, 1.0, Some(&w)).unwrap();
        let b = sobolev_norm(&s, 1.0, None).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(sobolev_norm(&s, -1.0, Some(&w)).is_err());
        assert!(sobolev_norm(&s, 0.5, Some(&w)).is_err());
    }

    #[test]
    fn window_is_exactly_zero_and_one_outside_transition() {
        let w = WindowSpec::new(1.0, 2.0).unwrap();
        assert_eq!(w.cutoff(-1.0), 0.0);
        assert_eq!(w.cutoff(-5.0), 0.0);
        assert_eq!(w.cutoff(3.0), 1.0);
        assert!((w.cutoff(1.0) - 0.5).abs() < 1e-15);
        assert!(WindowSpec::new(0.0, 0.0).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = Grid::new(50.0, 2048).unwrap();
        let s2 = Field::from_fn(g, |x| sech(x).powi(2));
        let t = Field::from_fn(g, f64::tanh);
        // The grid is symmetric about 0 except for the node at -L, where both
        // factors are at their tails.
        assert!(inner_product(&s2, &t).unwrap().abs() < 1e-12);
        let s = Field::from_fn(g, sech);
        assert!((inner_product(&s, &s).unwrap() - 2.0).abs() < 1e-10);
        let other = Field::zeros(Grid::new(10.0, 2048).unwrap());
        assert!(matches!(inner_product(&s, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn multiply_examples() {
        let g = Grid::new(50.0, 2048).unwrap();
        let s = Field::from_fn(g, sech);
        let p = multiply_dealiased(&s, &Field::constant(g, 1.0)).unwrap();
        assert!((&p - &s).max_abs() < 1e-15);
        let sq = multiply_dealiased(&s, &s).unwrap();
        let exact = Field::from_fn(g, |x| sech(x).powi(2));
        assert!((&sq - &exact).max_abs() < 1e-12);
    }

    #[test]
    fn translate_and_interpolate() {
        let g = Grid::new(50.0, 1024).unwrap();
        let s = Field::from_fn(g, sech);
        let shifted = s.translate(1.7);
        let exact = Field::from_fn(g, |x| sech(x - 1.7));
        assert!((&shifted - &exact).max_abs() < 1e-12);
        assert!((s.evaluate_at(0.3) - sech(0.3)).abs() < 1e-12);
        let fine = s.refine(4);
        assert!((&fine - &Field::from_fn(fine.grid(), sech)).max_abs() < 1e-12);
    }

    #[test]
    fn snapshot_json_round_trip() {
        let g = Grid::new(3.0, 8).unwrap();
        let f = Field::from_fn(g, |x| x.sin() / 3.0);
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.starts_with("{\"L\":3.0,\"N\":8,\"samples\":["));
        let back: Field = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let mut out = Vec::new();
        f.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.starts_with("-3,"));
    }
}
