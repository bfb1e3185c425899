//! The quadratic forms controlling the kink's weighted energy:
//!
//! ```text
//! B(f)         = int f_x^2 + (5/4 + V) f^2,   V = -2 sech^2 - 4 sech^2 tanh
//! B_{eps,R}(f) = int f_x^2 + (5/4 - 2 sech^2
//!                  - 8 sech^2 tanh cosh^2((x-R)/2) (1 + eps + tanh((x-R)/2))) f^2
//! B_hat(f)     = B_{eps,R}(f) + 2 e^R <eta_x^{-1/2} eta sech^2, f>^2
//! ```
//!
//! together with the Lieb-Thirring bracketing of the ground state of
//! `-d^2 + V` and a discrete certification of coercivity by generalized
//! eigenvalues.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner_product, l2_norm, spectral_derivative, Field, Grid};
use crate::linalg::{lowest_eigenpair, EigenOptions, SpectralOperator};
use crate::profiles::{default_delta, quadform_potential, sech2, Eta, DEFAULT_R};
use crate::schroedinger::ground_state;

/// `567/320`, the value of `(3/16) int |V|_-^2`.
pub const LIEB_THIRRING_VALUE: f64 = 567.0 / 320.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadFormKind {
    B,
    BEpsR { epsilon: f64, r: f64 },
    BHat { epsilon: f64, r: f64 },
}

impl QuadFormKind {
    /// `B_hat` with `eps = e^{-20}` and `R = 10`.
    pub fn default_hat() -> Self {
        QuadFormKind::BHat {
            epsilon: default_delta(),
            r: DEFAULT_R,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadFormKind::B => Ok(()),
            QuadFormKind::BEpsR { epsilon, r } | QuadFormKind::BHat { epsilon, r } => {
                Eta::new(r, epsilon).map(|_| ())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            QuadFormKind::B => "B",
            QuadFormKind::BEpsR { .. } => "B_eps_R",
            QuadFormKind::BHat { .. } => "B_hat",
        }
    }

    /// Multiplier of `f^2` in the form.
    pub fn potential(&self, x: f64) -> f64 {
        match *self {
            QuadFormKind::B => 1.25 + quadform_potential(x),
            QuadFormKind::BEpsR { epsilon, r } | QuadFormKind::BHat { epsilon, r } => {
                // cosh^2(a) (1 + tanh a) = (e^{2a} + 1) / 2 and
                // cosh^2(a) = (cosh(2a) + 1) / 2 with a = (x - R)/2.
                let s = sech2(x);
                let weight = 0.5 * ((x - r).exp() + 1.0) + epsilon * 0.5 * ((x - r).cosh() + 1.0);
                let kink = if s == 0.0 { 0.0 } else { 8.0 * s * x.tanh() * weight };
                1.25 - 2.0 * s - kink
            }
        }
    }

    /// Rank-one part `w <v, f>^2` built into the form (only `B_hat`).
    pub fn intrinsic_rank_one(&self, x: f64) -> Option<(f64, f64)> {
        match *self {
            QuadFormKind::BHat { epsilon, r } => {
                let eta = Eta { r, delta: epsilon };
                // eta_x^{-1/2} = sqrt(2) cosh((x-R)/2).
                let v = 2f64.sqrt() * (0.5 * (x - r)).cosh() * eta.value(x) * sech2(x);
                Some((2.0 * r.exp(), v))
            }
            _ => None,
        }
    }
}

/// `u*(x) = e^{x/2} sech^2(x)`, the direction of the rank-one correction.
pub fn u_star(x: f64) -> f64 {
    (0.5 * x).exp() * sech2(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    H1,
}

/// Quadrature of the form at `f` (spectral derivative, rectangle rule).
pub fn eval_form(kind: QuadFormKind, f: &Field) -> f64 {
    let g = f.grid();
    let fx = spectral_derivative(f, 1);
    let h = g.spacing();
    let mut total = 0.0;
    let mut proj = 0.0;
    for j in 0..g.len() {
        let x = g.node(j);
        let v = f.samples()[j];
        total += h * (fx.samples()[j].powi(2) + kind.potential(x) * v * v);
        if let Some((_, w)) = kind.intrinsic_rank_one(x) {
            proj += h * w * v;
        }
    }
    if let Some((weight, _)) = kind.intrinsic_rank_one(0.0) {
        total += weight * proj * proj;
    }
    total
}

/// `B(f) + 2 <f, u*>^2`.
pub fn eval_corrected(f: &Field) -> f64 {
    let u = Field::from_fn(f.grid(), u_star);
    let p = inner_product(f, &u).unwrap_or(0.0);
    eval_form(QuadFormKind::B, f) + 2.0 * p * p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityOptions {
    pub half_length: f64,
    pub points: usize,
    /// Also solve on `2 points` and report the change.
    pub check_refinement: bool,
}

impl Default for CoercivityOptions {
    fn default() -> Self {
        Self {
            half_length: 40.0,
            points: 2048,
            check_refinement: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub kind: QuadFormKind,
    pub metric: Metric,
    /// Whether `2 |u*><u*|` was added (for `B_hat` the built-in term is
    /// always present).
    pub rank_one: bool,
    pub min_generalized_eigenvalue: f64,
    pub half_length: f64,
    pub points: usize,
    pub eigen_residual: f64,
    pub refined_eigenvalue: Option<f64>,
    pub refinement_change: Option<f64>,
}

fn assemble(kind: QuadFormKind, rank_one: bool, grid: Grid) -> SpectralOperator {
    let nodes = grid.nodes();
    let potential: Vec<f64> = nodes.iter().map(|&x| kind.potential(x)).collect();
    let mut op = SpectralOperator::schroedinger(grid, potential);
    if rank_one && !matches!(kind, QuadFormKind::BHat { .. }) {
        op.rank_one
            .push((2.0, nodes.iter().map(|&x| u_star(x)).collect()));
    }
    if let Some((w, _)) = kind.intrinsic_rank_one(0.0) {
        op.rank_one.push((
            w,
            nodes
                .iter()
                .map(|&x| kind.intrinsic_rank_one(x).map_or(0.0, |p| p.1))
                .collect(),
        ));
    }
    op
}

/// Lowest `mu` with `A f = mu M f` on one grid; returns `(mu, residual)`.
fn min_eigenvalue(kind: QuadFormKind, metric: Metric, rank_one: bool, grid: Grid) -> Result<(f64, f64)> {
    let a = assemble(kind, rank_one, grid);
    let m = match metric {
        Metric::L2 => SpectralOperator::identity(grid),
        Metric::H1 => SpectralOperator::h1_gram(grid),
    };
    let vmin = a.potential.iter().cloned().fold(f64::INFINITY, f64::min);
    // A - sigma M is positive definite once sigma < min(potential) (L2) or
    // sigma < min(1, potential) (H1); rank-one terms are nonnegative.
    let shift = match metric {
        Metric::L2 => vmin - 0.5,
        Metric::H1 => vmin.min(1.0) - 0.5,
    };
    let start: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| (-0.25 * x * x).exp() + 0.1 * sech2(0.5 * x))
        .collect();
    let pair = lowest_eigenpair(
        &a,
        &m,
        start,
        EigenOptions {
            shift,
            margin: 0.2,
            tol: 1e-10,
            max_iter: 2000,
        },
    )?;
    Ok((pair.value, pair.residual))
}

/// Minimum generalized eigenvalue of the form against the chosen metric.
pub fn coercivity(
    kind: QuadFormKind,
    metric: Metric,
    rank_one: bool,
    opts: &CoercivityOptions,
) -> Result<CoercivityReport> {
    kind.validate()?;
    let grid = Grid::new(opts.half_length, opts.points)?;
    let (mu, residual) = min_eigenvalue(kind, metric, rank_one, grid)?;
    let refined = if opts.check_refinement {
        let fine = Grid::new(opts.half_length, 2 * opts.points)?;
        Some(min_eigenvalue(kind, metric, rank_one, fine)?.0)
    } else {
        None
    };
    Ok(CoercivityReport {
        kind,
        metric,
        rank_one,
        min_generalized_eigenvalue: mu,
        half_length: opts.half_length,
        points: opts.points,
        eigen_residual: residual,
        refined_eigenvalue: refined,
        refinement_change: refined.map(|r| (r - mu).abs()),
    })
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Zero of `f` in `[a, b]` by bisection; `f(a)` and `f(b)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    if fa * f(b) > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no sign change on [{a}, {b}]"
        )));
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Lower end of the support of `|V|_-` (where `V` changes sign).
pub fn negative_part_start() -> Result<f64> {
    bisect(quadform_potential, -2.0, 0.0, 1e-13)
}

/// `(3/16) int |V|_-^2` by adaptive quadrature over the support of `|V|_-`.
pub fn lieb_thirring_integral() -> Result<f64> {
    let a = negative_part_start()?;
    let f = |x: f64| quadform_potential(x).min(0.0).powi(2);
    // The integrand is below 1e-60 past x = 40.
    let mut total = 0.0;
    let mut lo = a;
    for hi in [0.0, 2.0, 5.0, 10.0, 20.0, 40.0] {
        if hi > lo {
            total += adaptive_simpson(&f, lo, hi, 1e-15);
            lo = hi;
        }
    }
    Ok(3.0 / 16.0 * total)
}

/// `h(s) = (-5/4 + m(s)) / (s + m(s))`, `m(s) = (567/320 - |s|^{3/2})^{2/3}`:
/// the lower bound for the squared overlap when the ground state energy is `s`.
pub fn overlap_bound_function(s: f64) -> f64 {
    let m = (LIEB_THIRRING_VALUE - s.abs().powf(1.5)).max(0.0).powf(2.0 / 3.0);
    (-1.25 + m) / (s + m)
}

/// Closed-form minimiser and minimum of [`overlap_bound_function`] on
/// `[-(567/320)^{2/3}, -5/4]`.
pub fn overlap_bound_closed_form() -> (f64, f64) {
    let root = 1_435_533f64.sqrt();
    (
        -(721_489.0 + 567.0 * root) / 960_000.0,
        (1701.0 + root) / 3402.0,
    )
}

/// Minimum of [`overlap_bound_function`] by dense sampling of the bracket.
pub fn overlap_bound_sampled(samples: usize) -> (f64, f64) {
    let lo = -LIEB_THIRRING_VALUE.powf(2.0 / 3.0);
    let hi = -1.25;
    (0..=samples)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / samples as f64;
            (s, overlap_bound_function(s))
        })
        .fold((f64::NAN, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiebThirringReport {
    pub integral: f64,
    pub support_start: f64,
    /// `(567/320)^{2/3}`.
    pub bound_exponent_value: f64,
    pub e0: f64,
    pub rayleigh: f64,
    pub overlap_sq: f64,
    pub overlap_bound: f64,
    pub h_argmin: f64,
    pub h_min_sampled: f64,
}

/// Lieb-Thirring integral, ground state of `-d^2 + V`, Rayleigh quotient at
/// the normalised `u*` and the overlap with the ground state, on `grid`.
pub fn lieb_thirring_report(grid: Grid) -> Result<LiebThirringReport> {
    let q = Field::from_fn(grid, quadform_potential);
    let gs = ground_state(&q, 1e-12)?;
    let u = Field::from_fn(grid, |x| (2.0 / std::f64::consts::PI).sqrt() * u_star(x));
    let rayleigh = eval_form(QuadFormKind::B, &u) - 1.25 * l2_norm(&u).powi(2);
    let overlap = inner_product(&u, &gs.psi)?;
    let (_, bound) = overlap_bound_closed_form();
    let (s_min, h_min) = overlap_bound_sampled(200_000);
    Ok(LiebThirringReport {
        integral: lieb_thirring_integral()?,
        support_start: negative_part_start()?,
        bound_exponent_value: LIEB_THIRRING_VALUE.powf(2.0 / 3.0),
        e0: gs.energy,
        rayleigh,
        overlap_sq: overlap * overlap,
        overlap_bound: bound,
        h_argmin: s_min,
        h_min_sampled: h_min,
    })
}

/// Everything the `quadform` experiment reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadformReport {
    pub lieb_thirring: LiebThirringReport,
    pub coercivity: Vec<CoercivityReport>,
    /// The constants the certified eigenvalues are compared with, in the
    /// order of `coercivity`.
    pub claimed_constants: Vec<f64>,
}

/// Lieb-Thirring report plus the three coercivity certificates
/// (`B + rank one` in `L^2` and `H^1`, `B_hat` in `H^1`).
pub fn full_report(opts: &CoercivityOptions) -> Result<QuadformReport> {
    let grid = Grid::new(opts.half_length, opts.points)?;
    let cases = [
        (QuadFormKind::B, Metric::L2, true, 1.0 / 3.0),
        (QuadFormKind::B, Metric::H1, true, 0.1),
        (QuadFormKind::default_hat(), Metric::H1, false, 0.05),
    ];
    let coercivity = cases
        .iter()
        .map(|&(k, m, r, _)| coercivity(k, m, r, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuadformReport {
        lieb_thirring: lieb_thirring_report(grid)?,
        coercivity,
        claimed_constants: cases.iter().map(|c| c.3).collect(),
    })
}
