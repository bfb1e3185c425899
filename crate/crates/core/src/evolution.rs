//! Time stepping for KdV, mKdV and the kink-frame perturbation equation.
//!
//! All three models are written as `u_t = L u + N(u)` with `L` diagonal in
//! Fourier space and integrated by the fourth-order exponential time
//! differencing scheme of Cox and Matthews, with the phi-functions evaluated
//! by contour averaging (Kassam and Trefethen).
//!
//! | model        | `L(k)`          | `N(u)`                                             |
//! |--------------|-----------------|----------------------------------------------------|
//! | `kdv`        | `i k^3`         | `3 (u^2)_x`                                        |
//! | `mkdv`       | `i k^3`         | `2 (u^3)_x`                                        |
//! | `kink_frame` | `i k^3 + 4 i k` | `-(6 sech^2(x) w - 6 tanh(x) w^2 - 2 w^3)_x`       |
//!
//! The kink-frame unknown is the perturbation `w = u - tanh(x)` of an mKdV
//! solution in the frame `x = X + 2t` moving with the kink.
//!
//! Nonlinear terms are evaluated on a twice refined grid and projected onto the
//! modes `|m| <= N/3`, so quadratic and cubic products are alias free.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{hm1_norm, l2_norm, smooth_step, spectral_derivative, Field, Grid};
use crate::profiles::sech2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Kdv,
    Mkdv,
    KinkFrame,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Kdv => "kdv",
            ModelKind::Mkdv => "mkdv",
            ModelKind::KinkFrame => "kink_frame",
        }
    }
}

/// Step size, final time and output cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Diagnostics are recorded every this many steps (and at the final step).
    pub diagnostic_stride: usize,
    /// Snapshots are kept every this many steps; zero keeps none.
    pub snapshot_stride: usize,
}

impl StepConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            diagnostic_stride: 100,
            snapshot_stride: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if self.diagnostic_stride == 0 {
            return Err(Error::InvalidParameter(
                "diagnostic_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps; the step actually taken is `t_end / steps`.
    pub fn steps(&self) -> usize {
        if self.t_end == 0.0 {
            0
        } else {
            ((self.t_end / self.dt).round() as usize).max(1)
        }
    }
}

/// Absorbing layer `-sigma(x) u` added to the right-hand side near both box
/// edges. The profile is smooth across the periodic wrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sponge {
    pub strength: f64,
    /// Extent of the left layer, ramp included.
    pub left_width: f64,
    /// Extent of the right layer, ramp included.
    pub right_width: f64,
    /// Length over which the damping switches on.
    pub ramp: f64,
}

impl Default for Sponge {
    fn default() -> Self {
        Self {
            strength: 50.0,
            left_width: 20.0,
            right_width: 8.0,
            ramp: 6.0,
        }
    }
}

impl Sponge {
    /// Damping rate at `x`: `strength` on the outer part of each layer,
    /// smoothly decreasing to exactly zero over `ramp` towards the interior.
    pub fn sigma(&self, grid: &Grid, x: f64) -> f64 {
        let l = grid.half_length();
        let left = 1.0 - smooth_step((x + l - self.left_width + self.ramp) / self.ramp);
        let right = smooth_step((x - l + self.right_width) / self.ramp);
        self.strength * left.max(right)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.strength, self.left_width, self.right_width, self.ramp]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.ramp > 0.0
            && self.ramp <= self.left_width.min(self.right_width);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "sponge widths must be at least the ramp, which must be positive".into(),
            ))
        }
    }
}

/// Safety checks and absorbing layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOptions {
    pub sponge: Option<Sponge>,
    /// Largest admissible `|u|` among the outermost nodes; `None` disables the check.
    pub edge_tolerance: Option<f64>,
    /// Number of nodes at each end inspected by the edge check.
    pub edge_margin: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            sponge: None,
            edge_tolerance: Some(1e-8),
            edge_margin: 4,
        }
    }
}

impl EvolveOptions {
    /// Defaults per model: the kink frame gets an absorbing layer because all
    /// linear waves travel left into the periodic wrap.
    pub fn for_model(model: ModelKind) -> Self {
        match model {
            ModelKind::KinkFrame => Self {
                sponge: Some(Sponge::default()),
                ..Self::default()
            },
            _ => Self::default(),
        }
    }

    pub fn unchecked() -> Self {
        Self {
            sponge: None,
            edge_tolerance: None,
            edge_margin: 4,
        }
    }
}

/// One row of the diagnostics table. Missing values serialize as `null` and
/// are written as empty CSV cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    #[serde(rename = "P0")]
    pub p0: Option<f64>,
    #[serde(rename = "P1")]
    pub p1: Option<f64>,
    #[serde(rename = "P2")]
    pub p2: Option<f64>,
    #[serde(rename = "P3")]
    pub p3: Option<f64>,
    pub l2: Option<f64>,
    pub hm1: Option<f64>,
    pub y: Option<f64>,
    pub ydot_plus2: Option<f64>,
    pub eta_mass: Option<f64>,
    pub virial_accum: Option<f64>,
    pub kato_accum: Option<f64>,
}

impl DiagnosticRow {
    pub const COLUMNS: [&'static str; 12] = [
        "t",
        "P0",
        "P1",
        "P2",
        "P3",
        "l2",
        "hm1",
        "y",
        "ydot_plus2",
        "eta_mass",
        "virial_accum",
        "kato_accum",
    ];

    pub fn cells(&self) -> [Option<f64>; 12] {
        [
            Some(self.t),
            self.p0,
            self.p1,
            self.p2,
            self.p3,
            self.l2,
            self.hm1,
            self.y,
            self.ydot_plus2,
            self.eta_mass,
            self.virial_accum,
            self.kato_accum,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub index: usize,
    pub t: f64,
    pub field: Field,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub model: ModelKind,
    /// Times of the diagnostic rows.
    pub times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticRow>,
    /// State at the last completed step.
    pub final_state: Field,
    pub final_time: f64,
}

/// Receives the state at every diagnostic step and may fill further columns.
pub trait Observer {
    fn observe(&mut self, t: f64, state: &Field, row: &mut DiagnosticRow) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(f64, &Field, &mut DiagnosticRow) -> Result<()>,
{
    fn observe(&mut self, t: f64, state: &Field, row: &mut DiagnosticRow) -> Result<()> {
        self(t, state, row)
    }
}

/// Observer that adds nothing.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: f64, _: &Field, _: &mut DiagnosticRow) -> Result<()> {
        Ok(())
    }
}

/// Conserved quantities of KdV, `u_t + u_xxx - 6 u u_x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub p0: f64,
    pub p1: f64,
    pub p2: Option<f64>,
    pub p3: Option<f64>,
}

/// Coefficients of `u u_x^2` and `u^4` in the fourth conserved density, whose
/// leading term is `u_xx^2`.
pub const P3_COEFFICIENTS: [f64; 2] = [10.0, 5.0];

/// `P0 = int u`, `P1 = int u^2`, and for KdV also `P2 = int u_x^2 + 2 u^3` and
/// `P3 = int u_xx^2 + 10 u u_x^2 + 5 u^4`.
pub fn conserved_quantities(u: &Field, model: ModelKind) -> Conserved {
    let p0 = u.integral();
    let p1 = l2_norm(u).powi(2);
    if model != ModelKind::Kdv {
        return Conserved {
            p0,
            p1,
            p2: None,
            p3: None,
        };
    }
    let [a, b] = P3_COEFFICIENTS;
    let ux = spectral_derivative(u, 1);
    let uxx = spectral_derivative(u, 2);
    let h = u.grid().spacing();
    let (mut p2, mut p3) = (0.0, 0.0);
    for j in 0..u.samples().len() {
        let (v, d1, d2) = (u.samples()[j], ux.samples()[j], uxx.samples()[j]);
        p2 += d1 * d1 + 2.0 * v * v * v;
        p3 += d2 * d2 + a * v * d1 * d1 + b * v.powi(4);
    }
    Conserved {
        p0,
        p1,
        p2: Some(h * p2),
        p3: Some(h * p3),
    }
}

/// Contour points for the phi-function averages.
const CONTOUR_POINTS: usize = 64;

/// Precomputed exponential integrator for one model, grid and step size.
pub struct Stepper {
    model: ModelKind,
    grid: Grid,
    dt: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
    /// `i k` on kept modes, zero on removed ones.
    ik: Vec<Complex64>,
    keep: Vec<bool>,
    fine_sech2: Vec<f64>,
    fine_tanh: Vec<f64>,
    fine_sigma: Option<Vec<f64>>,
    fwd_fine: Arc<dyn Fft<f64>>,
    inv_fine: Arc<dyn Fft<f64>>,
    fine: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Stepper {
    pub fn new(model: ModelKind, grid: Grid, dt: f64, sponge: Option<&Sponge>) -> Self {
        let n = grid.len();
        let m = 2 * n;
        let fine_grid = grid.refined(2);
        let mut keep = vec![false; n];
        let mut ik = vec![Complex64::new(0.0, 0.0); n];
        let mut lin = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let k = grid.wavenumber(j);
            keep[j] = 3 * fft::mode(j, n).unsigned_abs() as usize <= n;
            if keep[j] {
                ik[j] = Complex64::new(0.0, k);
            }
            let mut l = k * k * k;
            if model == ModelKind::KinkFrame {
                l += 4.0 * k;
            }
            lin[j] = Complex64::new(0.0, l);
        }
        let (e, e2, q, f1, f2, f3) = etd_coefficients(&lin, dt);
        let xs = fine_grid.nodes();
        let fwd_fine = fft::plan_forward(m);
        let inv_fine = fft::plan_inverse(m);
        let scratch_len = fwd_fine
            .get_inplace_scratch_len()
            .max(inv_fine.get_inplace_scratch_len());
        Self {
            model,
            grid,
            dt,
            e,
            e2,
            q,
            f1,
            f2,
            f3,
            ik,
            keep,
            fine_sech2: xs.iter().map(|&x| sech2(x)).collect(),
            fine_tanh: xs.iter().map(|&x| x.tanh()).collect(),
            fine_sigma: sponge.map(|s| xs.iter().map(|&x| s.sigma(&grid, x)).collect()),
            fwd_fine,
            inv_fine,
            fine: vec![Complex64::new(0.0, 0.0); m],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Spectrum of `u` restricted to the modes the stepper keeps.
    pub fn project(&self, u: &Field) -> Vec<Complex64> {
        let mut spec = u.spectrum();
        for (c, &k) in spec.iter_mut().zip(&self.keep) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        spec
    }

    /// Nonlinear part `N(v)` for a spectrum `v`, written into `out`.
    pub fn nonlinear(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.len();
        let m = 2 * n;
        let half = n / 2;
        let zero = Complex64::new(0.0, 0.0);
        self.fine.iter_mut().for_each(|c| *c = zero);
        // Pad (the Nyquist mode is never kept) and undo the 1/m of the inverse
        // transform together with the m/n padding factor.
        let scale = 1.0 / n as f64;
        for j in 0..half {
            self.fine[j] = v[j] * scale;
        }
        for j in half + 1..n {
            self.fine[m - (n - j)] = v[j] * scale;
        }
        self.inv_fine
            .process_with_scratch(&mut self.fine, &mut self.scratch);
        for (i, c) in self.fine.iter_mut().enumerate() {
            let u = c.re;
            let flux = match self.model {
                ModelKind::Kdv => 3.0 * u * u,
                ModelKind::Mkdv => 2.0 * u * u * u,
                ModelKind::KinkFrame => {
                    -(6.0 * self.fine_sech2[i] * u - 6.0 * self.fine_tanh[i] * u * u
                        - 2.0 * u * u * u)
                }
            };
            let damp = self.fine_sigma.as_ref().map_or(0.0, |s| s[i] * u);
            *c = Complex64::new(flux, damp);
        }
        self.fwd_fine
            .process_with_scratch(&mut self.fine, &mut self.scratch);
        // Separate the transforms of the two real signals and truncate.
        let fine_index = |j: usize| if j < half { j } else { m - (n - j) };
        for j in 0..n {
            if !self.keep[j] {
                out[j] = zero;
                continue;
            }
            let a = self.fine[fine_index(j)];
            let b = self.fine[(m - fine_index(j)) % m].conj();
            let flux = (a + b) * 0.5;
            let damp = (a - b) * Complex64::new(0.0, -0.5);
            out[j] = (self.ik[j] * flux - damp) * 0.5;
        }
    }

    /// Advances the spectrum `v` by one step.
    pub fn step(&mut self, v: &mut [Complex64]) {
        let n = v.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut nv = vec![zero; n];
        let mut na = vec![zero; n];
        let mut nb = vec![zero; n];
        let mut nc = vec![zero; n];
        self.nonlinear(v, &mut nv);
        let a: Vec<Complex64> = (0..n).map(|j| self.e2[j] * v[j] + self.q[j] * nv[j]).collect();
        self.nonlinear(&a, &mut na);
        let b: Vec<Complex64> = (0..n).map(|j| self.e2[j] * v[j] + self.q[j] * na[j]).collect();
        self.nonlinear(&b, &mut nb);
        let c: Vec<Complex64> = (0..n)
            .map(|j| self.e2[j] * a[j] + self.q[j] * (2.0 * nb[j] - nv[j]))
            .collect();
        self.nonlinear(&c, &mut nc);
        for j in 0..n {
            v[j] = self.e[j] * v[j]
                + nv[j] * self.f1[j]
                + (na[j] + nb[j]) * 2.0 * self.f2[j]
                + nc[j] * self.f3[j];
        }
    }
}

type EtdCoefficients = (
    Vec<Complex64>,
    Vec<Complex64>,
    Vec<Complex64>,
    Vec<Complex64>,
    Vec<Complex64>,
    Vec<Complex64>,
);

fn etd_coefficients(lin: &[Complex64], dt: f64) -> EtdCoefficients {
    let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
        .map(|p| {
            let theta = std::f64::consts::PI * (p as f64 + 0.5) / CONTOUR_POINTS as f64 * 2.0;
            Complex64::from_polar(1.0, theta)
        })
        .collect();
    let mp = CONTOUR_POINTS as f64;
    let n = lin.len();
    let mut out: EtdCoefficients = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &l in lin {
        let lh = l * dt;
        let (mut q, mut f1, mut f2, mut f3) = (
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        for r in &roots {
            let z = lh + r;
            let ez = z.exp();
            let z3 = z * z * z;
            q += ((z * 0.5).exp() - 1.0) / z;
            f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
            f2 += (2.0 + z + ez * (z - 2.0)) / z3;
            f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
        }
        out.0.push(lh.exp());
        out.1.push((lh * 0.5).exp());
        out.2.push(q * (dt / mp));
        out.3.push(f1 * (dt / mp));
        out.4.push(f2 * (dt / mp));
        out.5.push(f3 * (dt / mp));
    }
    out
}

/// Standard diagnostic columns for a state.
pub fn base_diagnostics(model: ModelKind, t: f64, state: &Field) -> DiagnosticRow {
    let mut row = DiagnosticRow {
        t,
        l2: Some(l2_norm(state)),
        hm1: Some(hm1_norm(state)),
        ..Default::default()
    };
    if model != ModelKind::KinkFrame {
        let c = conserved_quantities(state, model);
        row.p0 = Some(c.p0);
        row.p1 = Some(c.p1);
        row.p2 = c.p2;
        row.p3 = c.p3;
    }
    row
}

/// Result of [`evolve_partial`]: whatever was computed, and the error that
/// stopped the run early, if any.
pub struct PartialTrajectory {
    pub trajectory: Trajectory,
    pub failure: Option<Error>,
}

/// Integrates `model` from `initial` and records diagnostics and snapshots.
///
/// For `kink_frame`, `initial` is the perturbation `w` of the static kink.
/// Non-finite values abort with [`Error::BlowUp`]; values above the edge
/// tolerance near the box ends abort with [`Error::BoundaryContamination`].
pub fn evolve(
    model: ModelKind,
    initial: &Field,
    cfg: &StepConfig,
    options: &EvolveOptions,
    observer: &mut dyn Observer,
) -> Result<Trajectory> {
    let partial = evolve_partial(model, initial, cfg, options, observer)?;
    match partial.failure {
        Some(e) => Err(e),
        None => Ok(partial.trajectory),
    }
}

/// Like [`evolve`] but keeps the partial trajectory when the run stops early.
/// Invalid inputs are still reported as errors.
pub fn evolve_partial(
    model: ModelKind,
    initial: &Field,
    cfg: &StepConfig,
    options: &EvolveOptions,
    observer: &mut dyn Observer,
) -> Result<PartialTrajectory> {
    cfg.validate()?;
    if let Some(s) = &options.sponge {
        s.validate()?;
    }
    if !initial.is_finite() {
        return Err(Error::NonFinite(
            initial.samples().iter().position(|v| !v.is_finite()).unwrap_or(0),
        ));
    }
    let grid = initial.grid();
    let steps = cfg.steps();
    let dt = if steps == 0 { cfg.dt } else { cfg.t_end / steps as f64 };
    let mut stepper = Stepper::new(model, grid, dt, options.sponge.as_ref());
    let mut spec = stepper.project(initial);

    let mut traj = Trajectory {
        model,
        times: Vec::new(),
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        final_state: Field::from_spectrum(grid, &spec),
        final_time: 0.0,
    };
    let mut failure = None;
    for i in 0..=steps {
        if i > 0 {
            stepper.step(&mut spec);
        }
        let t = i as f64 * dt;
        let diag = i % cfg.diagnostic_stride == 0 || i == steps;
        let snap = cfg.snapshot_stride > 0 && i % cfg.snapshot_stride == 0;
        if !(diag || snap) {
            if spec.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                failure = Some(Error::BlowUp { t });
                break;
            }
            continue;
        }
        let state = Field::from_spectrum(grid, &spec);
        if !state.is_finite() {
            failure = Some(Error::BlowUp { t });
            break;
        }
        traj.final_state = state.clone();
        traj.final_time = t;
        if let Some(tol) = options.edge_tolerance {
            let edge = state.edge_magnitude(options.edge_margin);
            if edge > tol {
                failure = Some(Error::BoundaryContamination { t, value: edge });
                break;
            }
        }
        if diag {
            let mut row = base_diagnostics(model, t, &state);
            if let Err(e) = observer.observe(t, &state, &mut row) {
                failure = Some(e);
                break;
            }
            traj.times.push(t);
            traj.diagnostics.push(row);
        }
        if snap {
            traj.snapshots.push(Snapshot {
                index: traj.snapshots.len(),
                t,
                field: state,
            });
        }
    }
    Ok(PartialTrajectory {
        trajectory: traj,
        failure,
    })
}
