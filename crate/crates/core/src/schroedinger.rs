//! Schrödinger operators `H_q = -d^2 + q`, Riccati shooting and the two
//! inverse Miura maps.
//!
//! With `S = sech^2(lambda x)` and `T = tanh(lambda x)` the forward maps are
//!
//! ```text
//! F_lambda(r) = ( r^2 + 2 lambda T r + r_x ,  <r, S> )
//! F_star(r, lambda) = r^2 + 2 lambda T r - r_x - 2 lambda^2 S
//! ```
//!
//! `F_lambda` is inverted by Riccati shooting for `r = lambda T + r_tilde`
//! and polishing with Newton steps built on the explicit right inverse
//! [`apply_t`]. `F_star` is inverted by
//! computing the ground state energy `-lambda^2` and shooting the
//! logarithmic derivative of the ground state inwards from both edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    hm1_norm, inner_product, l2_norm, spectral_antiderivative, spectral_derivative, Field, Grid,
};
use crate::linalg::{lowest_eigenpair, EigenOptions, SpectralOperator};
use crate::profiles::sech2;

/// Substeps of the Riccati integrator per grid cell.
const SUBSTEPS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    /// Unit `L^2` norm, strictly positive.
    pub psi: Field,
    pub residual: f64,
    pub iterations: usize,
}

/// Lowest eigenpair of the spectral discretisation of `-d^2 + q`.
///
/// Returns [`Error::NoBoundState`] when the lowest eigenvalue is not below
/// `-tol`.
pub fn ground_state(q: &Field, tol: f64) -> Result<GroundState> {
    let grid = q.grid();
    let qmin = q.samples().iter().cloned().fold(f64::INFINITY, f64::min);
    if qmin >= -tol {
        return Err(Error::NoBoundState(qmin.min(0.0)));
    }
    let op = SpectralOperator::schroedinger(grid, q.samples().to_vec());
    let metric = SpectralOperator::identity(grid);
    // Start from the well: exp(-q_+ distance) style guess centred at the minimum.
    let jmin = q
        .samples()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc })
        .0;
    let x0 = grid.node(jmin);
    let start: Vec<f64> = grid.nodes().iter().map(|x| sech2(0.5 * (x - x0)) + 1e-3).collect();
    let pair = lowest_eigenpair(
        &op,
        &metric,
        start,
        EigenOptions {
            shift: qmin - 0.5,
            margin: 0.5,
            tol: 1e-10,
            max_iter: 500,
        },
    )?;
    if pair.value >= -tol {
        return Err(Error::NoBoundState(pair.value));
    }
    let sign = if pair.vector.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    // Rounding can leave exponentially small tails with the wrong sign; the
    // exact ground state is positive, so they are reflected.
    let psi: Vec<f64> = pair
        .vector
        .iter()
        .map(|v| (sign * v).abs().max(f64::MIN_POSITIVE))
        .collect();
    Ok(GroundState {
        energy: pair.value,
        psi: Field::new(grid, psi)?,
        residual: pair.residual,
        iterations: pair.iterations,
    })
}

/// `||(-d^2 + q - E) psi||_2`.
pub fn eigen_residual(q: &Field, gs: &GroundState) -> f64 {
    let pxx = spectral_derivative(&gs.psi, 2);
    let r = Field::from_fn_indexed(q.grid(), |j| {
        -pxx.samples()[j] + (q.samples()[j] - gs.energy) * gs.psi.samples()[j]
    });
    l2_norm(&r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// Solution of `r_x + r^2 = q + lambda^2`.
    pub r: Field,
    pub lambda: f64,
    /// Always `None` for a returned solution; blow-up is reported as
    /// [`Error::SpectrumBelowThreshold`].
    pub blowup_location: Option<f64>,
    /// `||r - lambda tanh(lambda x)||_2`.
    pub tilde_norm: f64,
}

impl RiccatiSolution {
    pub fn r_tilde(&self) -> Field {
        let l = self.lambda;
        self.r.map_with_x(|x, v| v - l * (l * x).tanh())
    }
}

/// Samples of a field refined by `factor`, addressed by fine index.
struct Fine {
    values: Vec<f64>,
    x0: f64,
    dx: f64,
}

impl Fine {
    fn new(f: &Field, factor: usize) -> Self {
        let g = f.grid();
        let vals = f.refine(factor).into_samples();
        Self {
            values: vals,
            x0: g.node(0),
            dx: g.spacing() / factor as f64,
        }
    }

    fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }
}

/// Classical RK4 along grid nodes `from -> to` (either direction) with
/// `SUBSTEPS` substeps per cell. `f(i, x, y)` is evaluated at fine indices
/// with spacing `h / (2 SUBSTEPS)`. Returns the values at every node passed,
/// in order, or the position where `abort` first fired.
fn rk4_nodes(
    grid: &Grid,
    from: usize,
    to: usize,
    y0: f64,
    f: impl Fn(usize, f64, f64) -> f64,
    abort: impl Fn(f64, f64) -> bool,
) -> std::result::Result<Vec<f64>, f64> {
    let m2 = 2 * SUBSTEPS;
    let fdx = grid.spacing() / m2 as f64;
    let x0 = grid.node(0);
    let xi = |i: usize| x0 + i as f64 * fdx;
    let mut out = vec![y0];
    let mut y = y0;
    let forward = to >= from;
    let mut j = from;
    while j != to {
        let base = j * m2;
        for s in 0..SUBSTEPS {
            let (i0, i1, i2, dt) = if forward {
                let i0 = base + 2 * s;
                (i0, i0 + 1, i0 + 2, 2.0 * fdx)
            } else {
                let i0 = base - 2 * s;
                (i0, i0 - 1, i0 - 2, -2.0 * fdx)
            };
            let k1 = f(i0, xi(i0), y);
            let k2 = f(i1, xi(i1), y + 0.5 * dt * k1);
            let k3 = f(i1, xi(i1), y + 0.5 * dt * k2);
            let k4 = f(i2, xi(i2), y + dt * k3);
            y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !y.is_finite() || abort(xi(i2), y) {
                return Err(xi(i2));
            }
        }
        j = if forward { j + 1 } else { j - 1 };
        out.push(y);
    }
    Ok(out)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )))
    }
}

/// Solves `r' = q + lambda^2 - r^2` for the logarithmic derivative of a
/// solution of `(-d^2 + q + lambda^2) phi = 0` that grows at both ends, so
/// that `r -> -lambda` on the left and `r -> +lambda` on the right.
///
/// The solution decaying on the right is shot from the right edge
/// (`r = -lambda`, the stable direction of the Riccati flow) to the left
/// edge. Blow-up (`r > 10 lambda`) marks a zero of that solution, and a
/// solution that also decays on the left marks `-lambda^2` as an
/// eigenvalue; both mean the spectrum is not contained in
/// `(-lambda^2, inf)` and are reported as [`Error::SpectrumBelowThreshold`].
/// The one-sided solution is then turned into a two-sided one by
/// [`reduce_order`], whose constant is fixed so that `q = 0` gives
/// `lambda tanh(lambda x)`.
pub fn riccati_shoot(q: &Field, lambda: f64) -> Result<RiccatiSolution> {
    check_lambda(lambda)?;
    let grid = q.grid();
    let edge = q.edge_magnitude(1);
    if edge > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "potential must vanish at the box edges, |q| = {edge:e}"
        )));
    }
    let fine = Fine::new(q, 2 * SUBSTEPS);
    let n = grid.len();
    let l2 = lambda * lambda;
    let mut decaying = rk4_nodes(
        &grid,
        n - 1,
        0,
        -lambda,
        |i, _x, y| fine.values[i] + l2 - y * y,
        |_x, y| y > 10.0 * lambda,
    )
    .map_err(|location| Error::SpectrumBelowThreshold { location })?;
    decaying.reverse();
    let decaying = Field::new(grid, decaying)?;
    let probe = index_at(&grid, -grid.half_length() + ASYMPTOTIC_DISTANCE);
    if (decaying.samples()[probe] + lambda).abs() >= ASYMPTOTIC_TOL {
        return Err(Error::SpectrumBelowThreshold {
            location: grid.node(probe),
        });
    }
    let r = reduce_order(&decaying, lambda)?;
    if let Some(miss) = asymptotic_miss(&r, lambda) {
        return Err(Error::NotConverged {
            solver: "Riccati shooting (asymptotics)",
            iterations: 1,
            residual: miss,
        });
    }
    let sol = RiccatiSolution {
        tilde_norm: 0.0,
        r,
        lambda,
        blowup_location: None,
    };
    let tilde_norm = l2_norm(&sol.r_tilde());
    Ok(RiccatiSolution { tilde_norm, ..sol })
}

const ASYMPTOTIC_DISTANCE: f64 = 10.0;
const ASYMPTOTIC_TOL: f64 = 1e-4;

/// Largest of `|r(x) -+ lambda|` at distance 10 from the two edges, if it is
/// not below `1e-4`.
pub fn asymptotic_miss(r: &Field, lambda: f64) -> Option<f64> {
    let g = r.grid();
    let jl = index_at(&g, -g.half_length() + ASYMPTOTIC_DISTANCE);
    let jr = index_at(&g, g.half_length() - ASYMPTOTIC_DISTANCE);
    let miss = (r.samples()[jl] + lambda)
        .abs()
        .max((r.samples()[jr] - lambda).abs());
    (miss >= ASYMPTOTIC_TOL).then_some(miss)
}

/// Node index nearest to `x`.
pub(crate) fn index_at(g: &Grid, x: f64) -> usize {
    let j = ((x + g.half_length()) / g.spacing()).round();
    (j.max(0.0) as usize).min(g.len() - 1)
}

/// Given the logarithmic derivative `r` of a solution `phi` that grows on the
/// left and decays on the right (`r -> -lambda` at both ends), returns that of
/// `C phi + phi int_0^x phi^{-2}`, namely `r + phi^{-2} / (C + int_0^x phi^{-2})`.
///
/// `C = -2 int_0^{x_L} phi^{-2}` keeps `C + int_0^x phi^{-2}` positive and
/// centres the transition at zero when `r = -lambda`. The integral uses a
/// refined grid and the Euler-Maclaurin end correction with the exact
/// derivative `(phi^{-2})' = -2 r phi^{-2}`. On the right the integral is
/// carried relative to `phi^{-2}` to avoid overflow.
fn reduce_order(r: &Field, lambda: f64) -> Result<Field> {
    const FACTOR: usize = 32;
    let grid = r.grid();
    let localized = r.map(|v| v + lambda).refine(FACTOR);
    let fg = localized.grid();
    let h = fg.spacing();
    let n = fg.len();
    let c0 = n / 2;
    let rf: Vec<f64> = localized.samples().iter().map(|v| v - lambda).collect();
    // log(phi) relative to x = 0.
    let log_phi: Vec<f64> = primitive(&localized)
        .samples()
        .iter()
        .enumerate()
        .map(|(i, g)| g - lambda * fg.node(i))
        .collect();
    let dw0 = -2.0 * rf[c0];
    let corr = h * h / 12.0;

    let mut add = vec![0.0; n];
    // Left half, direct: w = phi^{-2} <= O(1) there.
    let w = |i: usize| (-2.0 * log_phi[i]).exp();
    let mut left = vec![0.0; c0 + 1];
    let mut t = 0.0;
    for i in (0..c0).rev() {
        t -= 0.5 * h * (w(i) + w(i + 1));
        left[i] = t - corr * (-2.0 * rf[i] * w(i) - dw0);
    }
    let c = -2.0 * left[0];
    for i in 0..=c0 {
        add[i] = w(i) / (c + left[i]);
    }
    // Right half, scaled by w: s = I / w, T / w accumulated with ratios.
    let mut ts = 0.0;
    for i in c0 + 1..n {
        let ratio = (2.0 * (log_phi[i] - log_phi[i - 1])).exp();
        ts = ts * ratio + 0.5 * h * (ratio + 1.0);
        let inv_w = (2.0 * log_phi[i]).exp();
        let s = ts - corr * (-2.0 * rf[i] - dw0 * inv_w);
        add[i] = 1.0 / (c * inv_w + s);
    }
    let out: Vec<f64> = (0..grid.len())
        .map(|j| rf[j * FACTOR] + add[j * FACTOR])
        .collect();
    Field::new(grid, out)
}

/// `int_0^x f` sampled at the nodes (not periodic in general).
pub fn primitive(f: &Field) -> Field {
    let mean = f.mean();
    let a = spectral_antiderivative(f);
    let a0 = a.evaluate_at(0.0);
    a.map_with_x(|x, v| v - a0 + mean * x)
}

/// [`primitive`] evaluated at an arbitrary point.
fn primitive_at(f: &Field, x: f64) -> f64 {
    let a = spectral_antiderivative(f);
    a.evaluate_at(x) - a.evaluate_at(0.0) + f.mean() * x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    FLambda,
    FStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub branch: Branch,
    pub lambda: f64,
    pub rho: Option<f64>,
    pub residual: f64,
    pub r_tilde: Field,
}

/// Evaluates `F_lambda` (returning `rho`) or `F_star` (no `rho`).
pub fn forward(branch: Branch, r_tilde: &Field, lambda: f64) -> (Field, Option<f64>) {
    let rx = spectral_derivative(r_tilde, 1);
    let sign = match branch {
        Branch::FLambda => 1.0,
        Branch::FStar => -1.0,
    };
    let g = r_tilde.grid();
    let out = Field::from_fn_indexed(g, |j| {
        let x = g.node(j);
        let r = r_tilde.samples()[j];
        let mut v = r * r + 2.0 * lambda * (lambda * x).tanh() * r + sign * rx.samples()[j];
        if branch == Branch::FStar {
            v -= 2.0 * lambda * lambda * sech2(lambda * x);
        }
        v
    });
    let rho = match branch {
        Branch::FLambda => Some(rho_of(r_tilde, lambda)),
        Branch::FStar => None,
    };
    (out, rho)
}

fn rho_of(r_tilde: &Field, lambda: f64) -> f64 {
    let g = r_tilde.grid();
    let h = g.spacing();
    (0..g.len())
        .map(|j| r_tilde.samples()[j] * sech2(lambda * g.node(j)))
        .sum::<f64>()
        * h
}

/// `||forward(branch, r_tilde, lambda) - target||_{H^{-1}}`.
pub fn forward_residual(branch: Branch, r_tilde: &Field, lambda: f64, target: &Field) -> f64 {
    let (f, _) = forward(branch, r_tilde, lambda);
    hm1_norm(&(&f - target))
}

/// Inverts one branch of the Miura-type maps.
///
/// For `F_lambda`, `lambda` must be supplied; for `F_star` it is computed
/// from the ground state and must be `None`.
pub fn invert(
    target: &Field,
    branch: Branch,
    lambda: Option<f64>,
    tol: f64,
) -> Result<InversionResult> {
    match branch {
        Branch::FLambda => {
            let lambda = lambda.ok_or_else(|| {
                Error::InvalidParameter("the F_lambda branch needs lambda".into())
            })?;
            let sol = riccati_shoot(target, lambda)?;
            let r_tilde = sol.r_tilde();
            let rho = rho_of(&r_tilde, lambda);
            let residual = forward_residual(branch, &r_tilde, lambda, target);
            if residual < tol {
                return Ok(InversionResult {
                    branch,
                    lambda,
                    rho: Some(rho),
                    residual,
                    r_tilde,
                });
            }
            newton_refine(target, lambda, rho, &r_tilde, tol)
        }
        Branch::FStar => {
            if lambda.is_some() {
                return Err(Error::InvalidParameter(
                    "the F_star branch determines lambda itself".into(),
                ));
            }
            invert_star(target, tol)
        }
    }
}

/// Inward shooting of `R = -psi'/psi`, `R' = R^2 - q - lambda^2`, in the
/// variable `r_tilde = R - lambda tanh(lambda x)`:
/// `r_tilde' = r_tilde^2 + 2 lambda T r_tilde - 2 lambda^2 S - q`.
/// Both halves start from zero at their edge and meet at node `jm`.
fn shoot_inward(fine: &Fine, grid: &Grid, lambda: f64, jm: usize) -> Result<(Vec<f64>, f64)> {
    let rhs = |i: usize, x: f64, y: f64| {
        let t = (lambda * x).tanh();
        y * y + 2.0 * lambda * t * y - 2.0 * lambda * lambda * sech2(lambda * x) - fine.values[i]
    };
    let big = |_x: f64, y: f64| y.abs() > 1e6;
    let n = grid.len();
    let left = rk4_nodes(grid, 0, jm, 0.0, rhs, big)
        .map_err(|location| Error::SpectrumBelowThreshold { location })?;
    let right = rk4_nodes(grid, n - 1, jm, 0.0, rhs, big)
        .map_err(|location| Error::SpectrumBelowThreshold { location })?;
    let mismatch = left[left.len() - 1] - right[right.len() - 1];
    let mut out = vec![0.0; n];
    out[..=jm].copy_from_slice(&left);
    for (k, v) in right.iter().enumerate() {
        let j = n - 1 - k;
        if j > jm {
            out[j] = *v;
        }
    }
    Ok((out, mismatch))
}

fn invert_star(target: &Field, tol: f64) -> Result<InversionResult> {
    let grid = target.grid();
    let gs = ground_state(target, 1e-12)?;
    let jm = gs
        .psi
        .samples()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc })
        .0;
    let fine = Fine::new(target, 2 * SUBSTEPS);
    // Secant iteration on lambda for a continuous logarithmic derivative.
    let mut l0 = (-gs.energy).sqrt();
    let (mut prof0, mut m0) = shoot_inward(&fine, &grid, l0, jm)?;
    let mut l1 = l0 * (1.0 + 1e-7);
    let mut best = (prof0.clone(), l0, m0.abs());
    for _ in 0..50 {
        if best.2 < 1e-12 {
            break;
        }
        let (prof1, m1) = shoot_inward(&fine, &grid, l1, jm)?;
        if m1.abs() < best.2 {
            best = (prof1.clone(), l1, m1.abs());
        }
        if m1 == m0 {
            break;
        }
        let l2 = l1 - m1 * (l1 - l0) / (m1 - m0);
        l0 = l1;
        m0 = m1;
        prof0 = prof1;
        l1 = l2;
        if !(l1 > 0.0) {
            break;
        }
    }
    let _ = prof0;
    let (r_vals, lambda, _) = best;
    let r_tilde = Field::new(grid, r_vals)?;
    let residual = forward_residual(Branch::FStar, &r_tilde, lambda, target);
    if residual >= tol {
        return Err(Error::NotConverged {
            solver: "F_star inversion",
            iterations: 50,
            residual,
        });
    }
    Ok(InversionResult {
        branch: Branch::FStar,
        lambda,
        rho: None,
        residual,
        r_tilde,
    })
}

/// C-infinity bump: 1 on `[-1, 1]`, 0 outside `(-2, 2)`,
/// `exp(1 - 1/(1 - (|y| - 1)^2))` in between.
pub fn bump(y: f64) -> f64 {
    let a = y.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let s = a - 1.0;
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Kernel of the right inverse `T` of `v -> v_x + 2 tanh(x) v`, optionally
/// weighted by `exp(-2 int_0^x r + 2 int_0^y r)`.
pub fn kernel_k(x: f64, y: f64, r: Option<&Field>) -> f64 {
    let base = (y.cosh() / x.cosh()).powi(2);
    let k = if y < x && x <= 0.0 {
        bump(y) * base
    } else if y < 0.0 && 0.0 < x {
        bump(y) * base
    } else if x <= y && y <= 0.0 {
        -(1.0 - bump(y)) * base
    } else if 0.0 <= y && y < x {
        base
    } else {
        0.0
    };
    match r {
        None => k,
        Some(r) if k != 0.0 => k * (-2.0 * primitive_at(r, x) + 2.0 * primitive_at(r, y)).exp(),
        Some(_) => 0.0,
    }
}

/// Right inverse `T_r g` of `v -> v_x + 2 (tanh(x) + r) v`.
pub fn apply_t(r: &Field, g: &Field) -> Result<Field> {
    apply_t_lambda(1.0, r, g)
}

/// Right inverse of `L v = v_x + 2 (lambda tanh(lambda x) + r) v`:
/// `v(x) = exp(-A(x)) [ int_{-inf}^x e^{A} eta g + int_0^x e^{A} (1 - eta) g ]`
/// with `A(x) = 2 ln cosh(lambda x) + 2 int_0^x r` and the bump `eta`.
///
/// The value at zero is a quadrature over `[-2, 0]`; the rest follows by
/// integrating the differential equation outwards, which is stable in both
/// directions because the homogeneous solution decays away from zero.
pub fn apply_t_lambda(lambda: f64, r: &Field, g: &Field) -> Result<Field> {
    check_lambda(lambda)?;
    r.check_grid(g)?;
    let grid = g.grid();
    let m2 = 2 * SUBSTEPS;
    let fr = Fine::new(r, m2);
    let fg = Fine::new(g, m2);
    let pr = primitive(&r.refine(m2));
    // Composite Simpson over [x_s, 0] on the fine grid, where x_s <= -2 and
    // the number of intervals is even.
    let n = grid.len();
    let i0 = (n / 2) * m2;
    let mut is = i0;
    while fg.x(is) > -2.0 && is >= 2 {
        is -= 2;
    }
    let integrand = |i: usize| {
        let x = fg.x(i);
        bump(x) * (lambda * x).cosh().powi(2) * (2.0 * pr.samples()[i]).exp() * fg.values[i]
    };
    let mut v0 = integrand(is) + integrand(i0);
    for i in is + 1..i0 {
        v0 += if (i - is) % 2 == 1 { 4.0 } else { 2.0 } * integrand(i);
    }
    v0 *= fg.dx / 3.0;

    let f = |i: usize, x: f64, v: f64| {
        fg.values[i] - 2.0 * (lambda * (lambda * x).tanh() + fr.values[i]) * v
    };
    let never = |_: f64, _: f64| false;
    let right = rk4_nodes(&grid, n / 2, n - 1, v0, f, never)
        .map_err(|location| Error::SpectrumBelowThreshold { location })?;
    let left = rk4_nodes(&grid, n / 2, 0, v0, f, never)
        .map_err(|location| Error::SpectrumBelowThreshold { location })?;
    let mut out = vec![0.0; n];
    for (k, v) in right.iter().enumerate() {
        out[n / 2 + k] = *v;
    }
    for (k, v) in left.iter().enumerate() {
        out[n / 2 - k] = *v;
    }
    Field::new(grid, out)
}

/// `||v_x + 2 (lambda tanh(lambda x) + r) v - g||_2`, the defining relation
/// of the right inverse.
pub fn right_inverse_residual(lambda: f64, r: &Field, v: &Field, g: &Field) -> f64 {
    let vx = spectral_derivative(v, 1);
    let grid = v.grid();
    let res = Field::from_fn_indexed(grid, |j| {
        let x = grid.node(j);
        vx.samples()[j]
            + 2.0 * (lambda * (lambda * x).tanh() + r.samples()[j]) * v.samples()[j]
            - g.samples()[j]
    });
    l2_norm(&res)
}

/// Newton iteration for `F_lambda(r) = (target, rho_target)`.
///
/// Each step solves the linearisation `L_{lambda,r} delta = -e` with the
/// right inverse and adds the multiple of the null vector
/// `phi_r = sech^2(lambda x) exp(-2 int_0^x r)` that fixes the second
/// component. Two consecutive residual increases abort with the history.
pub fn newton_refine(
    target: &Field,
    lambda: f64,
    rho_target: f64,
    r_init: &Field,
    tol: f64,
) -> Result<InversionResult> {
    newton_refine_traced(target, lambda, rho_target, r_init, tol).map(|(res, _)| res)
}

/// [`newton_refine`] that also returns the residual after every iterate,
/// starting with the initial one.
pub fn newton_refine_traced(
    target: &Field,
    lambda: f64,
    rho_target: f64,
    r_init: &Field,
    tol: f64,
) -> Result<(InversionResult, Vec<f64>)> {
    check_lambda(lambda)?;
    target.check_grid(r_init)?;
    let grid = target.grid();
    let sech = Field::from_fn(grid, |x| sech2(lambda * x));
    let measure = |r: &Field| -> (Field, f64, f64) {
        let (f, rho) = forward(Branch::FLambda, r, lambda);
        let e = &f - target;
        let drho = rho.unwrap_or(0.0) - rho_target;
        let res = hm1_norm(&e) + drho.abs();
        (e, drho, res)
    };
    let mut r = r_init.clone();
    let (mut e, mut drho, mut res) = measure(&r);
    let mut history = vec![res];
    let mut increases = 0;
    let mut iterations = 0;
    while res >= tol {
        if iterations >= 50 {
            return Err(Error::NotConverged {
                solver: "Newton refinement",
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let te = apply_t_lambda(lambda, &r, &e)?;
        let pr = primitive(&r);
        let phi = Field::from_fn_indexed(grid, |j| {
            sech.samples()[j] * (-2.0 * pr.samples()[j]).exp()
        });
        let alpha = (-drho + inner_product(&te, &sech)?) / inner_product(&phi, &sech)?;
        let delta = Field::from_fn_indexed(grid, |j| -te.samples()[j] + alpha * phi.samples()[j]);
        r = &r + &delta;
        let (e2, d2, res2) = measure(&r);
        if !res2.is_finite() {
            history.push(res2);
            return Err(Error::Diverged { history });
        }
        if res2 > res {
            increases += 1;
            if increases >= 2 {
                history.push(res2);
                return Err(Error::Diverged { history });
            }
        } else {
            increases = 0;
        }
        e = e2;
        drho = d2;
        res = res2;
        history.push(res);
    }
    let rho = rho_of(&r, lambda);
    let result = InversionResult {
        branch: Branch::FLambda,
        lambda,
        rho: Some(rho),
        residual: forward_residual(Branch::FLambda, &r, lambda, target),
        r_tilde: r,
    };
    Ok((result, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_shape() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(-1.0), 1.0);
        assert_eq!(bump(2.0), 0.0);
        assert!(bump(1.5) > 0.0 && bump(1.5) < 1.0);
        assert!(bump(1.999) < 1e-100);
    }

    #[test]
    fn kernel_examples() {
        let k = kernel_k(1.0, 0.5, None);
        let expect = 0.5f64.cosh().powi(2) / 1.0f64.cosh().powi(2);
        assert!((k - expect).abs() < 1e-15);
        assert!((k - 0.534013).abs() < 1e-5);
        assert_eq!(kernel_k(-1.0, 2.0, None), 0.0);
    }

    #[test]
    fn primitive_of_constant_and_gaussian() {
        let g = Grid::new(20.0, 256).unwrap();
        let c = primitive(&Field::constant(g, 2.0));
        for (j, v) in c.samples().iter().enumerate() {
            assert!((v - 2.0 * g.node(j)).abs() < 1e-12);
        }
        let f = Field::from_fn(g, |x| (-x * x).exp());
        let p = primitive(&f);
        let half = std::f64::consts::PI.sqrt() / 2.0;
        assert!((p.samples()[255] - half).abs() < 1e-10);
        assert!((p.samples()[0] + half).abs() < 1e-10);
    }

    #[test]
    fn reduction_of_order_on_decaying_solution() {
        // r = -1 everywhere is the logarithmic derivative of exp(-x), which
        // grows only on the left. The construction must produce tanh(x).
        let g = Grid::new(15.0, 512).unwrap();
        let r = Field::constant(g, -1.0);
        let out = reduce_order(&r, 1.0).unwrap();
        let exact = Field::from_fn(g, f64::tanh);
        let err = &out - &exact;
        let j = (0..512).max_by(|&a, &b| err.samples()[a].abs().total_cmp(&err.samples()[b].abs())).unwrap();
        assert!(err.max_abs() < 1e-9, "{} at {}", err.max_abs(), g.node(j));
    }
}
