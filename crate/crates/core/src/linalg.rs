//! Matrix-free symmetric operators `a (-d^2) + V + sum w_i |v_i><v_i|` on a
//! grid, preconditioned conjugate gradients, and shifted inverse iteration for
//! the lowest (generalized) eigenpair.
//!
//! Vectors are plain sample arrays; inner products carry the grid spacing so
//! that `x . A x` is the quadrature of the quadratic form.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::Grid;

#[derive(Debug, Clone)]
pub(crate) struct SpectralOperator {
    pub grid: Grid,
    pub kinetic: f64,
    pub potential: Vec<f64>,
    pub rank_one: Vec<(f64, Vec<f64>)>,
}

pub(crate) fn dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.spacing() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

impl SpectralOperator {
    pub fn schroedinger(grid: Grid, potential: Vec<f64>) -> Self {
        Self {
            grid,
            kinetic: 1.0,
            potential,
            rank_one: Vec::new(),
        }
    }

    pub fn identity(grid: Grid) -> Self {
        Self {
            grid,
            kinetic: 0.0,
            potential: vec![1.0; grid.len()],
            rank_one: Vec::new(),
        }
    }

    /// Gram operator of the `H^1` inner product, `1 - d^2`.
    pub fn h1_gram(grid: Grid) -> Self {
        Self {
            grid,
            kinetic: 1.0,
            potential: vec![1.0; grid.len()],
            rank_one: Vec::new(),
        }
    }

    /// `self - sigma * metric` for a metric without rank-one terms.
    pub fn shifted(&self, sigma: f64, metric: &SpectralOperator) -> Self {
        Self {
            grid: self.grid,
            kinetic: self.kinetic - sigma * metric.kinetic,
            potential: self
                .potential
                .iter()
                .zip(&metric.potential)
                .map(|(v, m)| v - sigma * m)
                .collect(),
            rank_one: self.rank_one.clone(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = if self.kinetic != 0.0 {
            let mut spec = fft::forward(x);
            for (j, c) in spec.iter_mut().enumerate() {
                let k = self.grid.wavenumber(j);
                *c *= self.kinetic * k * k;
            }
            fft::inverse(&spec)
        } else {
            vec![0.0; x.len()]
        };
        for ((o, v), xi) in out.iter_mut().zip(&self.potential).zip(x) {
            *o += v * xi;
        }
        for (w, v) in &self.rank_one {
            let c = w * dot(&self.grid, v, x);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        out
    }

    pub fn form(&self, x: &[f64]) -> f64 {
        dot(&self.grid, x, &self.apply(x))
    }

    /// Inverse of `kinetic k^2 + c` applied in Fourier space.
    fn precondition(&self, r: &[f64], c: f64) -> Vec<f64> {
        let mut spec = fft::forward(r);
        let a = self.kinetic.max(0.0);
        for (j, s) in spec.iter_mut().enumerate() {
            let k = self.grid.wavenumber(j);
            *s /= Complex64::new(a * k * k + c, 0.0);
        }
        fft::inverse(&spec)
    }
}

pub(crate) enum CgFailure {
    Indefinite,
    NotConverged(f64),
}

/// Preconditioned conjugate gradients for `op y = b`, stopping when the
/// residual falls below `rtol * |b|`.
pub(crate) fn pcg(
    op: &SpectralOperator,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> std::result::Result<Vec<f64>, CgFailure> {
    let g = op.grid;
    let n = b.len();
    let mean_v = op.potential.iter().sum::<f64>() / n as f64;
    let c = mean_v.max(0.1);
    let bnorm = dot(&g, b, b).sqrt();
    let mut y = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(y);
    }
    let mut r = b.to_vec();
    let mut z = op.precondition(&r, c);
    let mut p = z.clone();
    let mut rz = dot(&g, &r, &z);
    for _ in 0..max_iter {
        let ap = op.apply(&p);
        let pap = dot(&g, &p, &ap);
        if !(pap > 0.0) {
            return Err(CgFailure::Indefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            y[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = dot(&g, &r, &r).sqrt();
        if rn <= rtol * bnorm {
            return Ok(y);
        }
        z = op.precondition(&r, c);
        let rz_new = dot(&g, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rn = dot(&g, &r, &r).sqrt();
    Err(CgFailure::NotConverged(rn / bnorm))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EigenOptions {
    /// Initial shift; must lie below the lowest eigenvalue.
    pub shift: f64,
    /// Distance kept between the Rayleigh quotient and the updated shift.
    pub margin: f64,
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) struct EigenPair {
    pub value: f64,
    /// Normalised in the metric.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Lowest eigenpair of `a x = mu m x` by shifted inverse iteration.
///
/// The shift starts at `opts.shift` and moves to `mu - margin` once the
/// Rayleigh quotient settles. If the moved shift makes the system indefinite
/// the iteration falls back to the initial shift.
pub(crate) fn lowest_eigenpair(
    a: &SpectralOperator,
    m: &SpectralOperator,
    start: Vec<f64>,
    opts: EigenOptions,
) -> Result<EigenPair> {
    let g = a.grid;
    let mut x = start;
    let norm = m.form(&x).sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let mut sigma = opts.shift;
    let mut moved = false;
    let mut allow_move = true;
    let mut mu_prev = f64::INFINITY;
    let mut shifted = a.shifted(sigma, m);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let rhs = m.apply(&x);
        let y = match pcg(&shifted, &rhs, 1e-13, 5000) {
            Ok(y) => y,
            Err(CgFailure::Indefinite) if moved => {
                sigma = opts.shift;
                moved = false;
                allow_move = false;
                shifted = a.shifted(sigma, m);
                continue;
            }
            Err(CgFailure::Indefinite) => {
                return Err(Error::NotConverged {
                    solver: "eigensolver (shift above the spectrum)",
                    iterations: it,
                    residual,
                })
            }
            Err(CgFailure::NotConverged(r)) => {
                return Err(Error::NotConverged {
                    solver: "conjugate gradients",
                    iterations: it,
                    residual: r,
                })
            }
        };
        let norm = m.form(&y).sqrt();
        x = y.iter().map(|v| v / norm).collect();
        let ax = a.apply(&x);
        let mx = m.apply(&x);
        let mu = dot(&g, &x, &ax);
        let res: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p - mu * q).collect();
        residual = dot(&g, &res, &res).sqrt();
        if residual < opts.tol * (1.0 + mu.abs()) {
            return Ok(EigenPair {
                value: mu,
                vector: x,
                residual,
                iterations: it,
            });
        }
        if allow_move && !moved && (mu - mu_prev).abs() < 1e-3 * (1.0 + mu.abs()) {
            let candidate = mu - opts.margin;
            if candidate > sigma {
                sigma = candidate;
                moved = true;
                shifted = a.shifted(sigma, m);
            }
        }
        mu_prev = mu;
    }
    Err(Error::NotConverged {
        solver: "shifted inverse iteration",
        iterations: opts.max_iter,
        residual,
    })
}
