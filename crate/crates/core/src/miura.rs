//! Miura maps, KdV symmetries and the Miura identity as a residual check.
//!
//! Functions that tend to different constants at `-inf` and `+inf` cannot be
//! differentiated spectrally on a periodic box. [`KinkField`] stores such a
//! function as an analytic kink `lambda tanh(lambda (x - x0))` plus a periodic
//! remainder; the kink part is differentiated exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{spectral_derivative, Field, Grid};

/// Something that can be sampled and differentiated on a grid.
pub trait LineFunction: Sized {
    fn grid(&self) -> Grid;
    /// Samples on the grid nodes.
    fn values(&self) -> Field;
    fn derivative(&self, order: u32) -> Field;
    /// Same function on a grid with `factor` times as many points.
    fn refine(&self, factor: usize) -> Self;
    /// `f(x - a)`.
    fn shifted(&self, a: f64) -> Self;
    fn plus_constant(&self, c: f64) -> Self;
}

impl LineFunction for Field {
    fn grid(&self) -> Grid {
        Field::grid(self)
    }

    fn values(&self) -> Field {
        self.clone()
    }

    fn derivative(&self, order: u32) -> Field {
        spectral_derivative(self, order)
    }

    fn refine(&self, factor: usize) -> Self {
        Field::refine(self, factor)
    }

    fn shifted(&self, a: f64) -> Self {
        self.translate(a)
    }

    fn plus_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }
}

/// `lambda tanh(lambda (x - center)) + remainder(x)` with a periodic remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct KinkField {
    lambda: f64,
    center: f64,
    remainder: Field,
}

impl KinkField {
    pub fn new(lambda: f64, center: f64, remainder: Field) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kink scale must be positive, got {lambda}"
            )));
        }
        if !center.is_finite() {
            return Err(Error::InvalidParameter("kink center must be finite".into()));
        }
        Ok(Self {
            lambda,
            center,
            remainder,
        })
    }

    /// The bare kink `lambda tanh(lambda (x - center))`.
    pub fn pure(lambda: f64, center: f64, grid: Grid) -> Result<Self> {
        Self::new(lambda, center, Field::zeros(grid))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn remainder(&self) -> &Field {
        &self.remainder
    }

    /// Samples of `d^order/dx^order lambda tanh(lambda (x - center))`.
    pub fn kink_derivative(&self, order: u32) -> Field {
        let poly = tanh_derivative_poly(order);
        let scale = self.lambda.powi(order as i32 + 1);
        Field::from_fn(self.remainder.grid(), |x| {
            let t = (self.lambda * (x - self.center)).tanh();
            scale * horner(&poly, t)
        })
    }
}

/// Coefficients `p` with `d^n tanh / dz^n = p(tanh z)`, lowest degree first.
fn tanh_derivative_poly(order: u32) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    for _ in 0..order {
        // d/dz p(T) = p'(T) (1 - T^2)
        let dp: Vec<f64> = (1..p.len()).map(|k| k as f64 * p[k]).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (k, c) in dp.iter().enumerate() {
            next[k] += c;
            next[k + 2] -= c;
        }
        p = next;
    }
    p
}

fn horner(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

impl LineFunction for KinkField {
    fn grid(&self) -> Grid {
        self.remainder.grid()
    }

    fn values(&self) -> Field {
        &self.kink_derivative(0) + &self.remainder
    }

    fn derivative(&self, order: u32) -> Field {
        if order == 0 {
            return self.values();
        }
        &self.kink_derivative(order) + &spectral_derivative(&self.remainder, order)
    }

    fn refine(&self, factor: usize) -> Self {
        Self {
            lambda: self.lambda,
            center: self.center,
            remainder: self.remainder.refine(factor),
        }
    }

    fn shifted(&self, a: f64) -> Self {
        Self {
            lambda: self.lambda,
            center: self.center + a,
            remainder: self.remainder.translate(a),
        }
    }

    fn plus_constant(&self, c: f64) -> Self {
        Self {
            lambda: self.lambda,
            center: self.center,
            remainder: self.remainder.map(|v| v + c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiuraVariant {
    /// `u_x + u^2`
    Plus,
    /// `-u_x + u^2`
    Star,
}

/// Galilean speed and scaling parameter of the KdV symmetry group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryParams {
    pub h: f64,
    pub lambda_scale: f64,
}

impl SymmetryParams {
    pub fn new(h: f64, lambda_scale: f64) -> Result<Self> {
        if !h.is_finite() {
            return Err(Error::InvalidParameter("Galilean speed must be finite".into()));
        }
        check_scale(lambda_scale)?;
        Ok(Self { h, lambda_scale })
    }
}

fn check_scale(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "scaling parameter must be positive, got {lambda}"
        )))
    }
}

/// `u_x + u^2` or `-u_x + u^2`.
pub fn miura<F: LineFunction>(u: &F, variant: MiuraVariant) -> Field {
    let v = u.values();
    let d = u.derivative(1);
    let sign = match variant {
        MiuraVariant::Plus => 1.0,
        MiuraVariant::Star => -1.0,
    };
    v.zip_with(&d, |a, b| sign * b + a * a)
        .expect("derivative shares the grid")
}

/// `u(x - h t) - h/6`.
pub fn galilean_shift<F: LineFunction>(u: &F, h: f64, t: f64) -> F {
    u.shifted(h * t).plus_constant(-h / 6.0)
}

/// Output of [`rescale`]: the field and the time dilation factor `lambda^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub field: Field,
    /// Time `t` of the rescaled solution corresponds to `t / time_dilation` of
    /// the original one.
    pub time_dilation: f64,
}

/// `lambda^{-2} u(x / lambda)` on the grid `[-lambda L, lambda L)` with the
/// same number of points, where the nodes map onto each other exactly.
pub fn rescale(u: &Field, lambda: f64) -> Result<Rescaled> {
    check_scale(lambda)?;
    let grid = u.grid().dilated(lambda)?;
    let inv = lambda.powi(-2);
    Ok(Rescaled {
        field: Field::new(grid, u.samples().iter().map(|v| inv * v).collect())?,
        time_dilation: lambda.powi(3),
    })
}

/// [`rescale`] resampled onto an arbitrary target grid by band-limited
/// interpolation. Target nodes whose preimage `x / lambda` leaves the source
/// box are rejected.
pub fn rescale_onto(u: &Field, lambda: f64, target: Grid) -> Result<Rescaled> {
    check_scale(lambda)?;
    let src = u.grid();
    let l = src.half_length();
    let spec = u.spectrum();
    let inv = lambda.powi(-2);
    let mut out = Vec::with_capacity(target.len());
    for x in target.nodes() {
        let s = x / lambda;
        if s < -l - 1e-12 || s > l - src.spacing() + 1e-12 {
            return Err(Error::OutsideDomain(x));
        }
        out.push(inv * crate::grid::evaluate_spectrum(&src, &spec, s));
    }
    Ok(Rescaled {
        field: Field::new(target, out)?,
        time_dilation: lambda.powi(3),
    })
}

/// `u_t + u_xxx - 6 u u_x`
fn kdv_expression(v: &Field, v_t: &Field) -> Field {
    let vx = spectral_derivative(v, 1);
    let vxxx = spectral_derivative(v, 3);
    Field::from_fn_indexed(v.grid(), |j| {
        v_t.samples()[j] + vxxx.samples()[j] - 6.0 * v.samples()[j] * vx.samples()[j]
    })
}

/// Max-norm residual of `KdV(miura(u)) = (mKdV(u))_x + 2 u mKdV(u)` for given
/// `u` and `u_t`.
///
/// Everything is evaluated on a four times refined grid so that the products
/// of band-limited inputs are represented exactly. The left side is built from
/// `v = u_x + u^2` and `v_t = (u_t)_x + 2 u u_t`, differentiating `v` itself.
pub fn miura_identity_residual<F: LineFunction>(u: &F, u_t: &Field) -> Result<f64> {
    if u.grid() != u_t.grid() {
        return Err(Error::GridMismatch);
    }
    let uf = u.refine(4);
    let utf = u_t.refine(4);
    let g = uf.grid();
    let u0 = uf.values();
    let ux = uf.derivative(1);
    let uxxx = uf.derivative(3);
    let utx = spectral_derivative(&utf, 1);
    let (a, ax, axxx, at, atx) = (
        u0.samples(),
        ux.samples(),
        uxxx.samples(),
        utf.samples(),
        utx.samples(),
    );

    let v = Field::from_fn_indexed(g, |j| ax[j] + a[j] * a[j]);
    let v_t = Field::from_fn_indexed(g, |j| atx[j] + 2.0 * a[j] * at[j]);
    let lhs = kdv_expression(&v, &v_t);

    let m = Field::from_fn_indexed(g, |j| at[j] + axxx[j] - 6.0 * a[j] * a[j] * ax[j]);
    let mx = spectral_derivative(&m, 1);
    let rhs = Field::from_fn_indexed(g, |j| mx.samples()[j] + 2.0 * a[j] * m.samples()[j]);
    Ok((&lhs - &rhs).max_abs())
}

/// KdV-side field attached to a kink-frame perturbation `w`:
/// `v(x) = w(x - 6t)^2 + 2 w(x - 6t) tanh(x - y - 6t) + w_x(x - 6t)`.
pub fn kink_frame_to_kdv(w: &Field, y: f64, t: f64) -> Field {
    let wx = spectral_derivative(w, 1);
    let g = Field::from_fn_indexed(w.grid(), |j| {
        let x = w.grid().node(j);
        let a = w.samples()[j];
        a * a + 2.0 * a * (x - y).tanh() + wx.samples()[j]
    });
    g.translate(6.0 * t)
}

/// Random trigonometric polynomial with wavenumbers `0 < k <= kmax`, periodic
/// on the grid and scaled to sup norm `amplitude`.
pub fn random_band_limited(grid: Grid, kmax: f64, amplitude: f64, rng: &mut impl Rng) -> Field {
    let l = grid.half_length();
    let modes = ((kmax * l / std::f64::consts::PI).floor() as usize).min(grid.len() / 3);
    let coeffs: Vec<(f64, f64)> = (1..=modes)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let raw = Field::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, (a, b))| {
                let phase = std::f64::consts::PI * (m + 1) as f64 * (x + l) / l;
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    });
    let m = raw.max_abs();
    if m == 0.0 {
        raw
    } else {
        raw.scale(amplitude / m)
    }
}

/// Miura identity residuals on random band-limited `(u, u_t)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub max_wavenumber: f64,
    pub amplitude: f64,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

pub fn identity_battery(
    grid: Grid,
    pairs: usize,
    max_wavenumber: f64,
    amplitude: f64,
    seed: u64,
) -> Result<IdentityReport> {
    if !(max_wavenumber > 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidParameter(
            "identity battery needs a positive wavenumber and finite amplitude".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residuals = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let u = random_band_limited(grid, max_wavenumber, amplitude, &mut rng);
        let ut = random_band_limited(grid, max_wavenumber, amplitude, &mut rng);
        residuals.push(miura_identity_residual(&u, &ut)?);
    }
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(IdentityReport {
        seed,
        max_wavenumber,
        amplitude,
        residuals,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::hm1_norm;
    use crate::profiles::{sech2, soliton};

    fn grid() -> Grid {
        Grid::new(30.0, 512).unwrap()
    }

    #[test]
    fn tanh_derivative_polynomials() {
        // tanh' = 1 - T^2, tanh'' = -2T + 2T^3
        assert_eq!(tanh_derivative_poly(1), vec![1.0, 0.0, -1.0]);
        assert_eq!(tanh_derivative_poly(2), vec![0.0, -2.0, 0.0, 2.0]);
        let z: f64 = 0.37;
        let t = z.tanh();
        let s = sech2(z);
        let d3 = horner(&tanh_derivative_poly(3), t);
        assert!((d3 - (4.0 * s * t * t - 2.0 * s * s)).abs() < 1e-14);
    }

    #[test]
    fn miura_of_kink() {
        let k = KinkField::pure(1.0, 0.0, grid()).unwrap();
        let plus = miura(&k, MiuraVariant::Plus);
        assert!(plus.samples().iter().all(|v| (v - 1.0).abs() < 1e-14));
        let star = miura(&k, MiuraVariant::Star);
        let expect = Field::from_fn(grid(), |x| 1.0 - 2.0 * sech2(x));
        assert!((&star - &expect).max_abs() < 1e-14);
        let zero = miura(&Field::zeros(grid()), MiuraVariant::Plus);
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn miura_reflection() {
        let u = Field::from_fn(grid(), |x| (-(x - 1.0) * (x - 1.0)).exp() * x.sin());
        let a = miura(&(-&u), MiuraVariant::Plus);
        let b = miura(&u, MiuraVariant::Star);
        assert_eq!(a, b);
    }

    #[test]
    fn galilean_examples() {
        let z = Field::zeros(grid());
        let s = galilean_shift(&z, 6.0, 0.7);
        assert!(s.samples().iter().all(|v| (v + 1.0).abs() < 1e-15));
        let u = Field::from_fn(grid(), |x| sech2(x));
        let s = galilean_shift(&u, -6.0, 0.0);
        assert!((&s - &u.map(|v| v + 1.0)).max_abs() < 1e-14);
        assert!((&galilean_shift(&u, 0.0, 3.0) - &u).max_abs() < 1e-14);
        let back = galilean_shift(&galilean_shift(&u, 1.3, 0.4), -1.3, 0.4);
        assert!((&back - &u).max_abs() < 1e-12);
    }

    #[test]
    fn galilean_shift_moves_kink_center() {
        let k = KinkField::pure(1.0, 0.0, grid()).unwrap();
        let s = galilean_shift(&k, 2.0, 1.5);
        assert_eq!(s.center(), 3.0);
        let expect = Field::from_fn(grid(), |x| (x - 3.0).tanh() - 1.0 / 3.0);
        assert!((&s.values() - &expect).max_abs() < 1e-14);
    }

    #[test]
    fn rescale_soliton() {
        let u = Field::from_fn(Grid::new(25.0, 1024).unwrap(), |x| soliton(4.0, x));
        let r = rescale(&u, 2.0).unwrap();
        assert_eq!(r.time_dilation, 8.0);
        assert_eq!(r.field.grid().half_length(), 50.0);
        let expect = Field::from_fn(r.field.grid(), |x| soliton(1.0, x));
        assert!((&r.field - &expect).max_abs() < 1e-10);
        assert_eq!(rescale(&u, 1.0).unwrap().field, u);
        let c = Field::constant(grid(), 3.0);
        let r = rescale(&c, 3.0).unwrap();
        assert!(r.field.samples().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn rescale_composition() {
        let u = Field::from_fn(grid(), |x| (-x * x).exp());
        let ab = rescale(&rescale(&u, 1.5).unwrap().field, 0.8).unwrap();
        let direct = rescale(&u, 1.2).unwrap();
        assert!((ab.field.grid().half_length() - 36.0).abs() < 1e-12);
        let d = ab
            .field
            .samples()
            .iter()
            .zip(direct.field.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-14);
    }

    #[test]
    fn rescale_onto_grid() {
        let u = Field::from_fn(Grid::new(25.0, 1024).unwrap(), |x| soliton(4.0, x));
        let target = Grid::new(40.0, 1024).unwrap();
        let r = rescale_onto(&u, 2.0, target).unwrap();
        let expect = Field::from_fn(target, |x| soliton(1.0, x));
        assert!((&r.field - &expect).max_abs() < 1e-10);
        let too_big = Grid::new(60.0, 1024).unwrap();
        assert!(matches!(
            rescale_onto(&u, 2.0, too_big),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn identity_vanishes_on_kink() {
        let k = KinkField::pure(1.0, 0.0, grid()).unwrap();
        let ut = Field::from_fn(grid(), |x| 2.0 * sech2(x));
        assert!(miura_identity_residual(&k, &ut).unwrap() < 1e-10);
        let z = Field::zeros(grid());
        assert_eq!(miura_identity_residual(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn kink_frame_map_examples() {
        let g = grid();
        assert_eq!(kink_frame_to_kdv(&Field::zeros(g), 0.3, 1.0).max_abs(), 0.0);
        let w = Field::from_fn(g, |x| 0.1 * (-(x - 1.0) * (x - 1.0)).exp());
        let v = kink_frame_to_kdv(&w, 0.0, 0.0);
        let k = KinkField::new(1.0, 0.0, w.clone()).unwrap();
        let m = miura(&k, MiuraVariant::Plus).map(|v| v - 1.0);
        assert!((&v - &m).max_abs() < 1e-10);
        let moved = kink_frame_to_kdv(&w, 0.0, 1.0);
        assert!((&moved - &v.translate(6.0)).max_abs() < 1e-12);
        assert!(hm1_norm(&v) > 0.0);
    }
}
