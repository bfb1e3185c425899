//! Modulation tracking and the kink and soliton stability experiments.
//!
//! Kink runs evolve the perturbation `w(t, xi) = u - tanh(xi)` in the frame
//! `xi = x + 2t` moving with the kink. The modulated position `y~` is found in
//! that frame and reported in the lab frame as `y = y~ - 2t`; the modulated
//! deviation is `w_mod = tanh(xi) + w - tanh(xi - y~)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evolution::{
    evolve_partial, DiagnosticRow, EvolveOptions, ModelKind, NoObserver, Sponge, StepConfig,
    Trajectory,
};
use crate::grid::{
    dilated_sobolev_norm, h1_norm, hm1_norm, l2_norm, sobolev_norm, spectral_derivative, Field,
    Grid, WindowSpec,
};
use crate::miura::rescale;
use crate::profiles::{sech2, Eta, Phi, ProfileSpec, Psi};
use crate::schroedinger::{invert, Branch};

/// Largest Newton iteration count of the modulation solve.
const MODULATION_MAX_ITER: usize = 50;
/// Smallest admissible `|Y'(y)|`.
const MODULATION_MIN_DERIVATIVE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationPoint {
    pub t: f64,
    pub y: f64,
    pub ydot_plus2: f64,
}

/// Root of the orthogonality condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationSolve {
    pub y: f64,
    /// `|Y(y)|` at the returned root.
    pub residual: f64,
    pub derivative: f64,
    pub iterations: usize,
}

/// `tanh(x) + w - tanh(x - y)`.
pub fn modulated_deviation(w: &Field, y: f64) -> Field {
    w.map_with_x(|x, v| x.tanh() + v - (x - y).tanh())
}

/// `Y(y) = <tanh + w - tanh(. - y), psi(. - y)>` and its derivative in `y`.
pub fn orthogonality(w: &Field, y: f64, psi: &Psi) -> (f64, f64) {
    let g = w.grid();
    let (mut val, mut der) = (0.0, 0.0);
    for (j, &v) in w.samples().iter().enumerate() {
        let x = g.node(j);
        let z = x - y;
        let d = x.tanh() + v - z.tanh();
        let p = psi.derivatives(z);
        val += d * p[0];
        der += sech2(z) * p[0] - d * p[1];
    }
    (g.spacing() * val, g.spacing() * der)
}

/// Solves `Y(y) = 0` for the state `u = tanh(x) + w` by damped Newton from
/// `y_guess`.
pub fn solve_modulation(w: &Field, y_guess: f64, psi: &Psi, tol: f64) -> Result<ModulationSolve> {
    let dist = l2_norm(&modulated_deviation(w, y_guess));
    if !(dist < 0.5) {
        return Err(Error::Modulation(format!(
            "state is {dist:.3e} away from the kink at the initial guess (limit 0.5)"
        )));
    }
    let mut y = y_guess;
    let (mut val, mut der) = orthogonality(w, y, psi);
    for it in 0..MODULATION_MAX_ITER {
        if der.abs() < MODULATION_MIN_DERIVATIVE {
            return Err(Error::Modulation(format!(
                "derivative {der:.3e} below {MODULATION_MIN_DERIVATIVE:e} at y = {y}"
            )));
        }
        let step = -val / der;
        if val.abs() < tol && step.abs() < 1e-12 {
            return Ok(ModulationSolve {
                y,
                residual: val.abs(),
                derivative: der,
                iterations: it,
            });
        }
        let mut damping = 1.0;
        loop {
            let trial = y + damping * step;
            let (v, d) = orthogonality(w, trial, psi);
            if v.abs() < val.abs() || (v.abs() < tol && val.abs() < tol) {
                y = trial;
                val = v;
                der = d;
                break;
            }
            damping *= 0.5;
            if damping < 1e-4 {
                if val.abs() < tol {
                    return Ok(ModulationSolve {
                        y,
                        residual: val.abs(),
                        derivative: der,
                        iterations: it,
                    });
                }
                return Err(Error::Modulation(format!(
                    "Newton stalled at y = {y} with |Y| = {:.3e}",
                    val.abs()
                )));
            }
        }
    }
    if val.abs() < tol {
        Ok(ModulationSolve {
            y,
            residual: val.abs(),
            derivative: der,
            iterations: MODULATION_MAX_ITER,
        })
    } else {
        Err(Error::Modulation(format!(
            "no convergence after {MODULATION_MAX_ITER} iterations, |Y| = {:.3e}",
            val.abs()
        )))
    }
}

/// `y' + 2` obtained by differentiating the orthogonality condition in time
/// along the kink-frame equation, for the modulated deviation `w_mod`.
pub fn ydot_from_orthogonality(w_mod: &Field, y: f64, psi: &Psi) -> f64 {
    let g = w_mod.grid();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (j, &w) in w_mod.samples().iter().enumerate() {
        let z = g.node(j) - y;
        let t = z.tanh();
        let p = psi.derivatives(z);
        a += w * p[3] - 2.0 * (3.0 * t * t * w + 3.0 * t * w * w + w * w * w) * p[1];
        b += sech2(z) * p[0];
        c += w * p[1];
    }
    -(a + 2.0 * c) / (b - c)
}

/// Central differences of `y` against `t`, one-sided second order at the ends.
pub fn central_differences(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    if n == 2 {
        let d = (y[1] - y[0]) / (t[1] - t[0]);
        return vec![d, d];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
                let (d1, d2) = ((y[1] - y[0]) / h1, (y[2] - y[1]) / h2);
                d1 - h1 * (d2 - d1) / (h1 + h2)
            } else if i == n - 1 {
                let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
                let (d1, d2) = ((y[n - 2] - y[n - 3]) / h1, (y[n - 1] - y[n - 2]) / h2);
                d2 + h2 * (d2 - d1) / (h1 + h2)
            } else {
                (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1])
            }
        })
        .collect()
}

/// Largest `m(t) - m(s)` over `s <= t`.
pub fn max_increase(series: &[f64]) -> f64 {
    let mut lowest = f64::INFINITY;
    let mut worst = 0.0f64;
    for &v in series {
        lowest = lowest.min(v);
        worst = worst.max(v - lowest);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSeries {
    #[serde(rename = "A")]
    pub a: f64,
    pub values: Vec<f64>,
    pub final_over_initial: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSeries {
    pub s: u32,
    pub gamma: f64,
    pub values: Vec<f64>,
    pub decay_factor: Option<f64>,
}

/// `sup_t ||w(t)||_{H^s} / ||w(0)||_{H^s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HigherNorm {
    pub s: u32,
    pub initial: f64,
    pub sup: f64,
    pub ratio: f64,
}

/// Outcome of the KdV soliton pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub c: f64,
    pub lambda: f64,
    pub c_tilde: f64,
    pub inversion_residual: f64,
    /// `||R_c - u_0||_{H^{-1}}`.
    pub perturbation_hm1: f64,
    pub deviation_hm1: Vec<f64>,
    pub sup_deviation_hm1: f64,
    pub speed_error: f64,
    pub deviation_ratio: Option<f64>,
    pub speed_ratio: Option<f64>,
    /// Largest distance of the normalized kink from its levels `-1` and `1`
    /// just inside the absorbing layers.
    pub asymptotic_level_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub experiment: String,
    pub completed: bool,
    pub failure: Option<String>,
    pub t: Vec<f64>,
    pub modulation: Vec<ModulationPoint>,
    /// Largest `|Y(y)|` accepted along the run.
    pub orthogonality_residual: f64,
    pub initial_l2: f64,
    pub sup_ratio: f64,
    pub virial_integral: f64,
    pub virial_ratio: Option<f64>,
    pub kato_integral: f64,
    pub weighted_mass: Vec<f64>,
    pub weighted_mass_max_increase: f64,
    /// `y' + 2` from the time derivative of the orthogonality condition.
    pub ydot_crosscheck: Vec<f64>,
    pub ydot_crosscheck_max_difference: f64,
    /// Smallest `C` with `|y' + 2| <= C (a + a b^2)`, `a`, `b` the `L^2` and
    /// sup norms of `eta_x^{1/2} w`.
    pub ydot_bound_constant: Option<f64>,
    pub higher_norm: Vec<HigherNorm>,
    pub phi_weighted: Vec<PhiSeries>,
    pub windowed_norms: Vec<WindowedSeries>,
    pub recovered: Option<Recovered>,
}

/// A completed or interrupted experiment.
pub struct StabilityRun {
    pub report: StabilityReport,
    pub trajectory: Trajectory,
    pub failure: Option<Error>,
}

/// What a kink run records besides the standard columns.
struct TrackSpec {
    phis: Vec<Phi>,
    windows: Vec<u32>,
    gamma: f64,
    /// Sobolev orders of the higher-norm record.
    higher: Vec<u32>,
}

#[derive(Default)]
struct TrackSamples {
    t: Vec<f64>,
    y_tilde: Vec<f64>,
    residual: f64,
    l2: Vec<f64>,
    hs: Vec<Vec<f64>>,
    eta_mass: Vec<f64>,
    phi_mass: Vec<Vec<f64>>,
    windowed: Vec<Vec<f64>>,
    ydot_orth: Vec<f64>,
    eta_x_l2: Vec<f64>,
    eta_x_sup: Vec<f64>,
    extra: Vec<f64>,
    level_drift: f64,
}

/// Evolves the kink frame from `w0`, solving the modulation at every
/// diagnostic step. `extra` sees `(t, y~, w, w_mod)` and its value is stored
/// per sample.
#[allow(clippy::too_many_arguments)]
fn track_kink(
    w0: &Field,
    step: &StepConfig,
    options: &EvolveOptions,
    eta: Eta,
    tol: f64,
    spec: &TrackSpec,
    extra: &mut dyn FnMut(f64, f64, &Field, &Field) -> f64,
) -> Result<(Trajectory, TrackSamples, Option<Error>)> {
    let psi = Psi::new(eta);
    let g = w0.grid();
    let first = solve_modulation(w0, 0.0, &psi, tol);
    let mut y_prev = match first {
        Ok(m) => m.y,
        Err(e) => return Err(e),
    };
    let mut samples = TrackSamples {
        hs: vec![Vec::new(); spec.higher.len()],
        phi_mass: vec![Vec::new(); spec.phis.len()],
        windowed: vec![Vec::new(); spec.windows.len()],
        ..Default::default()
    };
    let mut prev: Option<(f64, f64, f64)> = None;
    let (mut virial, mut kato) = (0.0, 0.0);
    let l = g.half_length();
    let (x_left, x_right) = match &options.sponge {
        Some(s) => (-l + s.left_width + 2.0, l - s.right_width - 2.0),
        None => (-l + 2.0, l - 2.0),
    };
    let (j_left, j_right) = (nearest(g, x_left), nearest(g, x_right));

    let mut observer = |t: f64, w: &Field, row: &mut DiagnosticRow| -> Result<()> {
        let m = solve_modulation(w, y_prev, &psi, tol)?;
        y_prev = m.y;
        let y = m.y;
        let wm = modulated_deviation(w, y);
        let eta_x = Field::from_fn(g, |x| eta.dx(x - y).sqrt());
        let weighted = wm.pointwise(&eta_x)?;
        let vir = h1_norm(&weighted).powi(2);
        let wx = spectral_derivative(&wm, 1);
        let kat = g.spacing()
            * wx.samples()
                .iter()
                .enumerate()
                .map(|(j, d)| sech2(g.node(j) - y) * d * d)
                .sum::<f64>();
        if let Some((t0, v0, k0)) = prev {
            virial += 0.5 * (t - t0) * (v0 + vir);
            kato += 0.5 * (t - t0) * (k0 + kat);
        }
        prev = Some((t, vir, kat));
        let mass = g.spacing()
            * wm.samples()
                .iter()
                .enumerate()
                .map(|(j, v)| eta.value(g.node(j) - y) * v * v)
                .sum::<f64>();

        samples.t.push(t);
        samples.y_tilde.push(y);
        samples.residual = samples.residual.max(m.residual);
        samples.l2.push(l2_norm(&wm));
        for (k, &s) in spec.higher.iter().enumerate() {
            samples.hs[k].push(sobolev_norm(&wm, s as f64, None)?);
        }
        samples.eta_mass.push(mass);
        for (k, phi) in spec.phis.iter().enumerate() {
            let v = g.spacing()
                * wm.samples()
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let xi = g.node(j);
                        eta.value(xi - y) * phi.value(t, xi - 2.0 * t) * v * v
                    })
                    .sum::<f64>();
            samples.phi_mass[k].push(v);
        }
        if !spec.windows.is_empty() {
            let window = WindowSpec::at((2.0 - spec.gamma) * t);
            for (k, &s) in spec.windows.iter().enumerate() {
                samples.windowed[k].push(sobolev_norm(&wm, s as f64, Some(&window))?);
            }
        }
        samples.ydot_orth.push(ydot_from_orthogonality(&wm, y, &psi));
        samples.eta_x_l2.push(l2_norm(&weighted));
        samples.eta_x_sup.push(weighted.max_abs());
        samples.extra.push(extra(t, y, w, &wm));
        let level = |j: usize| g.node(j).tanh() + w.samples()[j];
        samples.level_drift = samples
            .level_drift
            .max((level(j_right) - 1.0).abs())
            .max((level(j_left) + 1.0).abs());

        row.y = Some(y - 2.0 * t);
        row.eta_mass = Some(mass);
        row.virial_accum = Some(virial);
        row.kato_accum = Some(kato);
        Ok(())
    };
    let partial = evolve_partial(ModelKind::KinkFrame, w0, step, options, &mut observer)?;
    Ok((partial.trajectory, samples, partial.failure))
}

fn nearest(g: Grid, x: f64) -> usize {
    (((x + g.half_length()) / g.spacing()).round().max(0.0) as usize).min(g.len() - 1)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

/// Assembles the report shared by all kink-frame experiments and fills the
/// `ydot_plus2` column.
fn kink_report(
    experiment: &str,
    w0_l2: f64,
    traj: &mut Trajectory,
    s: &TrackSamples,
    spec: &TrackSpec,
    failure: Option<&Error>,
) -> StabilityReport {
    let ydot = central_differences(&s.t, &s.y_tilde);
    for (row, d) in traj.diagnostics.iter_mut().zip(&ydot) {
        row.ydot_plus2 = Some(*d);
    }
    let modulation = s
        .t
        .iter()
        .zip(&s.y_tilde)
        .zip(&ydot)
        .map(|((&t, &y), &d)| ModulationPoint {
            t,
            y: y - 2.0 * t,
            ydot_plus2: d,
        })
        .collect();
    let sup_l2 = s.l2.iter().cloned().fold(0.0, f64::max);
    let sup_ratio = if w0_l2 > 0.0 { sup_l2 / w0_l2 } else { 1.0 };
    let virial = s.eta_mass.len().checked_sub(1).map_or(0.0, |_| {
        traj.diagnostics
            .last()
            .and_then(|r| r.virial_accum)
            .unwrap_or(0.0)
    });
    let kato = traj
        .diagnostics
        .last()
        .and_then(|r| r.kato_accum)
        .unwrap_or(0.0);
    let cross = ydot
        .iter()
        .zip(&s.ydot_orth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut bound: Option<f64> = None;
    for i in 0..ydot.len() {
        let (a, b) = (s.eta_x_l2[i], s.eta_x_sup[i]);
        let den = a + a * b * b;
        if den > 1e-300 {
            let c = ydot[i].abs() / den;
            bound = Some(bound.map_or(c, |v: f64| v.max(c)));
        }
    }
    let higher = spec
        .higher
        .iter()
        .enumerate()
        .map(|(k, &order)| {
            let series = &s.hs[k];
            let initial = series.first().copied().unwrap_or(0.0);
            let sup = series.iter().cloned().fold(0.0, f64::max);
            HigherNorm {
                s: order,
                initial,
                sup,
                ratio: if initial > 0.0 { sup / initial } else { 1.0 },
            }
        })
        .collect();
    let phi_weighted = spec
        .phis
        .iter()
        .enumerate()
        .map(|(k, phi)| {
            let v = &s.phi_mass[k];
            PhiSeries {
                a: phi.a,
                values: v.clone(),
                final_over_initial: match (v.first(), v.last()) {
                    (Some(&a), Some(&b)) => ratio(b, a),
                    _ => None,
                },
            }
        })
        .collect();
    let windowed_norms = spec
        .windows
        .iter()
        .enumerate()
        .map(|(k, &order)| {
            let v = &s.windowed[k];
            WindowedSeries {
                s: order,
                gamma: spec.gamma,
                values: v.clone(),
                decay_factor: match (v.first(), v.last()) {
                    (Some(&a), Some(&b)) => ratio(b, a),
                    _ => None,
                },
            }
        })
        .collect();
    StabilityReport {
        experiment: experiment.to_string(),
        completed: failure.is_none(),
        failure: failure.map(|e| e.to_string()),
        t: s.t.clone(),
        modulation,
        orthogonality_residual: s.residual,
        initial_l2: w0_l2,
        sup_ratio,
        virial_integral: virial,
        virial_ratio: ratio(virial, w0_l2 * w0_l2),
        kato_integral: kato,
        weighted_mass: s.eta_mass.clone(),
        weighted_mass_max_increase: max_increase(&s.eta_mass),
        ydot_crosscheck: s.ydot_orth.clone(),
        ydot_crosscheck_max_difference: cross,
        ydot_bound_constant: bound,
        higher_norm: higher,
        phi_weighted,
        windowed_norms,
        recovered: None,
    }
}

fn kink_run(cfg: &ExperimentConfig, w0: &Field, spec: TrackSpec, name: &str) -> Result<StabilityRun> {
    let eta = cfg.weights.eta()?;
    let (mut traj, samples, failure) = track_kink(
        w0,
        &cfg.stepping,
        &cfg.evolve_options(),
        eta,
        cfg.tolerances.modulation,
        &spec,
        &mut |_, _, _, _| 0.0,
    )?;
    let report = kink_report(name, l2_norm(w0), &mut traj, &samples, &spec, failure.as_ref());
    Ok(StabilityRun {
        report,
        trajectory: traj,
        failure,
    })
}

/// Kink orbital stability: the state is `tanh + w(0)` with `w(0)` from the
/// configured perturbation (or field file).
pub fn run_kink_stability(cfg: &ExperimentConfig) -> Result<StabilityRun> {
    cfg.validate()?;
    let w0 = cfg.kink_perturbation()?;
    let spec = TrackSpec {
        phis: Vec::new(),
        windows: Vec::new(),
        gamma: cfg.weights.gamma,
        higher: vec![1],
    };
    kink_run(cfg, &w0, spec, "kink-stability")
}

/// Asymptotic decay: additionally records the `phi`-weighted masses for every
/// configured `A` and the windowed `H^s` norms right of `-gamma t`.
pub fn run_asymptotic_decay(cfg: &ExperimentConfig) -> Result<StabilityRun> {
    cfg.validate()?;
    let gamma = cfg.weights.gamma;
    if gamma >= 6.0 {
        return Err(Error::InvalidParameter(format!("gamma must be below 6, got {gamma}")));
    }
    let w0 = cfg.kink_perturbation()?;
    let mut a_values = cfg.decay.a_values.clone();
    if !a_values.contains(&cfg.weights.a) {
        a_values.insert(0, cfg.weights.a);
    }
    let phis = a_values
        .iter()
        .map(|&a| cfg.weights.phi(a))
        .collect::<Result<Vec<_>>>()?;
    let spec = TrackSpec {
        phis,
        windows: cfg.decay.s.clone(),
        gamma,
        higher: cfg.decay.s.iter().copied().filter(|&s| s > 0).collect(),
    };
    kink_run(cfg, &w0, spec, "decay")
}

/// KdV soliton stability through the inverse Miura map.
///
/// `u_0` is rescaled to speed 4, inverted on the `F_star` branch, normalized to
/// a unit kink by the mKdV scaling and evolved in the kink frame. At every
/// diagnostic step the KdV solution is reassembled as the soliton
/// `R_{c~}(x - y)` plus a deviation whose `H^{-1}` norm is recorded.
pub fn run_soliton_pipeline(cfg: &ExperimentConfig) -> Result<StabilityRun> {
    cfg.validate()?;
    let c = match cfg.profile {
        ProfileSpec::Soliton { c, .. } => c,
        _ => {
            return Err(Error::Config(
                "soliton-pipeline needs a soliton profile".into(),
            ))
        }
    };
    let u0 = cfg.initial_field()?;
    let reference = cfg.base_field()?;
    let perturbation_hm1 = hm1_norm(&(&u0 - &reference));
    pipeline(cfg, c, &u0, perturbation_hm1)
}

fn pipeline(cfg: &ExperimentConfig, c: f64, u0: &Field, perturbation_hm1: f64) -> Result<StabilityRun> {
    let mu = c.sqrt() / 2.0;
    let u4 = if mu == 1.0 {
        u0.clone()
    } else {
        rescale(u0, mu)?.field
    };
    let inv = invert(&u4, Branch::FStar, None, cfg.tolerances.inversion)?;
    let lambda = inv.lambda;
    let kappa = mu * lambda;
    let grid = inv.r_tilde.grid().dilated(lambda)?;
    let w0 = Field::new(
        grid,
        inv.r_tilde.samples().iter().map(|v| v / lambda).collect(),
    )?;
    let k3 = kappa.powi(3);
    let step = StepConfig {
        dt: cfg.stepping.dt * k3,
        t_end: cfg.stepping.t_end * k3,
        ..cfg.stepping
    };
    let spec = TrackSpec {
        phis: Vec::new(),
        windows: Vec::new(),
        gamma: cfg.weights.gamma,
        higher: vec![1],
    };
    let eta = cfg.weights.eta()?;
    let mut deviation = |_: f64, y: f64, _: &Field, wm: &Field| -> f64 {
        let wx = spectral_derivative(wm, 1);
        let d = Field::from_fn_indexed(wm.grid(), |j| {
            let v = wm.samples()[j];
            v * v + 2.0 * (wm.grid().node(j) - y).tanh() * v - wx.samples()[j]
        });
        dilated_sobolev_norm(&d, kappa * kappa, kappa, -1.0)
    };
    let (mut traj, samples, failure) = track_kink(
        &w0,
        &step,
        &cfg.evolve_options(),
        eta,
        cfg.tolerances.modulation,
        &spec,
        &mut deviation,
    )?;
    let mut report = kink_report(
        "soliton-pipeline",
        l2_norm(&w0),
        &mut traj,
        &samples,
        &spec,
        failure.as_ref(),
    );

    // Back to KdV time and position: t = tau / kappa^3, y = c~ t + y~ / kappa.
    let c_tilde = c * lambda * lambda;
    for t in report.t.iter_mut() {
        *t /= k3;
    }
    let kdv_y: Vec<f64> = samples
        .t
        .iter()
        .zip(&samples.y_tilde)
        .map(|(&tau, &yt)| c_tilde * tau / k3 + yt / kappa)
        .collect();
    let ydot = central_differences(&report.t, &kdv_y);
    report.modulation = report
        .t
        .iter()
        .zip(&kdv_y)
        .zip(&ydot)
        .map(|((&t, &y), &d)| ModulationPoint {
            t,
            y,
            ydot_plus2: d,
        })
        .collect();
    traj.times = report.t.clone();
    for (row, (p, tau)) in traj
        .diagnostics
        .iter_mut()
        .zip(report.modulation.iter().zip(&samples.t))
    {
        row.t = tau / k3;
        row.y = Some(p.y);
    }
    for s in traj.snapshots.iter_mut() {
        s.t /= k3;
    }
    traj.final_time /= k3;

    let sup = samples.extra.iter().cloned().fold(0.0, f64::max);
    let speed_error = (c - c_tilde).abs();
    report.recovered = Some(Recovered {
        c,
        lambda,
        c_tilde,
        inversion_residual: inv.residual,
        perturbation_hm1,
        deviation_hm1: samples.extra.clone(),
        sup_deviation_hm1: sup,
        speed_error,
        deviation_ratio: ratio(sup, perturbation_hm1),
        speed_ratio: ratio(speed_error, perturbation_hm1),
        asymptotic_level_drift: samples.level_drift,
    });
    Ok(StabilityRun {
        report,
        trajectory: traj,
        failure,
    })
}

/// Direct KdV evolution of `u(lambda x)`-normalized data compared with the
/// normalized form of the original run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub lambda: f64,
    /// `sup_t ||u(t, lambda .)|| / ||u_0(lambda .)||` from the original run.
    pub normalized_ratio: f64,
    /// Same ratio from evolving `lambda^2 u_0(lambda x)` directly.
    pub rescaled_ratio: f64,
    pub relative_difference: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriMember {
    pub index: usize,
    pub hm1_initial: f64,
    pub sup_hm1: Option<f64>,
    /// `sup_t ||u(t)||_{H^{-1}} / (||u_0|| + ||u_0||^3)`; zero for `u_0 = 0`.
    pub ratio: Option<f64>,
    /// Whether `u_0` lies in the range of `F_lambda` with `lambda = 1`.
    pub admissible: bool,
    pub inversion_residual: Option<f64>,
    pub rho: Option<f64>,
    pub scaling: Option<ScalingCheck>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub completed: bool,
    pub members: Vec<AprioriMember>,
    /// Largest ratio over the family.
    pub constant: Option<f64>,
    pub t_end: f64,
}

/// Largest rescaling factor used by the scaling consistency check.
const SCALING_LAMBDA_CAP: f64 = 2.0;
const SCALING_TOLERANCE: f64 = 0.2;

struct MemberRun {
    member: AprioriMember,
    trajectory: Option<Trajectory>,
}

fn apriori_member(index: usize, u0: &Field, cfg: &ExperimentConfig) -> MemberRun {
    let n0 = hm1_norm(u0);
    let mut member = AprioriMember {
        index,
        hm1_initial: n0,
        sup_hm1: None,
        ratio: None,
        admissible: false,
        inversion_residual: None,
        rho: None,
        scaling: None,
        failure: None,
    };
    match invert(u0, Branch::FLambda, Some(1.0), cfg.tolerances.inversion) {
        Ok(inv) => {
            member.admissible = true;
            member.inversion_residual = Some(inv.residual);
            member.rho = inv.rho;
        }
        Err(e) => member.failure = Some(format!("inversion: {e}")),
    }
    let lam = if n0 > 0.0 {
        Some(n0.powi(-2).min(SCALING_LAMBDA_CAP))
    } else {
        None
    };
    let mut scaled = Vec::new();
    let mut observer = |_: f64, u: &Field, _: &mut DiagnosticRow| -> Result<()> {
        if let Some(l) = lam {
            scaled.push(dilated_sobolev_norm(u, 1.0, l, -1.0));
        }
        Ok(())
    };
    let run = evolve_partial(
        ModelKind::Kdv,
        u0,
        &cfg.stepping,
        &cfg.evolve_options(),
        &mut observer,
    );
    let traj = match run {
        Ok(p) => {
            if let Some(e) = p.failure {
                member.failure = Some(format!("evolution: {e}"));
            }
            p.trajectory
        }
        Err(e) => {
            member.failure = Some(format!("evolution: {e}"));
            return MemberRun {
                member,
                trajectory: None,
            };
        }
    };
    let sup = traj
        .diagnostics
        .iter()
        .filter_map(|r| r.hm1)
        .fold(0.0, f64::max);
    member.sup_hm1 = Some(sup);
    member.ratio = Some(if n0 > 0.0 { sup / (n0 + n0.powi(3)) } else { 0.0 });

    if let (Some(l), Some(&first)) = (lam, scaled.first()) {
        let normalized = scaled.iter().cloned().fold(0.0, f64::max) / first;
        match rescaled_ratio(u0, l, cfg) {
            Ok(r) => {
                let rel = (r - normalized).abs() / normalized;
                member.scaling = Some(ScalingCheck {
                    lambda: l,
                    normalized_ratio: normalized,
                    rescaled_ratio: r,
                    relative_difference: rel,
                    consistent: rel <= SCALING_TOLERANCE,
                });
            }
            Err(e) => {
                member.failure.get_or_insert(format!("scaling check: {e}"));
            }
        }
    }
    MemberRun {
        member,
        trajectory: Some(traj),
    }
}

/// `sup_t ||v(t)|| / ||v(0)||` for `v(0, x) = lambda^2 u_0(lambda x)` with the
/// step, horizon and absorbing layer transformed by the same symmetry.
fn rescaled_ratio(u0: &Field, lambda: f64, cfg: &ExperimentConfig) -> Result<f64> {
    let v0 = rescale(u0, 1.0 / lambda)?.field;
    let l3 = lambda.powi(3);
    let step = StepConfig {
        dt: cfg.stepping.dt / l3,
        t_end: cfg.stepping.t_end / l3,
        ..cfg.stepping
    };
    let mut options = cfg.evolve_options();
    options.edge_tolerance = options.edge_tolerance.map(|e| e * lambda * lambda);
    options.sponge = options.sponge.map(|s| Sponge {
        strength: s.strength * l3,
        left_width: s.left_width / lambda,
        right_width: s.right_width / lambda,
        ramp: s.ramp / lambda,
    });
    let traj = evolve_partial(ModelKind::Kdv, &v0, &step, &options, &mut NoObserver)?;
    if let Some(e) = traj.failure {
        return Err(e);
    }
    let norms: Vec<f64> = traj
        .trajectory
        .diagnostics
        .iter()
        .filter_map(|r| r.hm1)
        .collect();
    let first = norms.first().copied().unwrap_or(0.0);
    Ok(norms.iter().cloned().fold(0.0, f64::max) / first)
}

/// Evolves every datum under KdV and reports the smallest constant `C` with
/// `sup_t ||u(t)||_{H^{-1}} <= C (||u_0|| + ||u_0||^3)` over the family.
/// Members run in parallel. The trajectory of the member with the largest
/// initial norm is returned alongside.
pub fn apriori_check(
    family: &[Field],
    cfg: &ExperimentConfig,
) -> Result<(AprioriReport, Option<Trajectory>)> {
    cfg.validate()?;
    let mut runs: Vec<MemberRun> = family
        .par_iter()
        .enumerate()
        .map(|(i, u0)| apriori_member(i, u0, cfg))
        .collect();
    let constant = runs
        .iter()
        .filter_map(|r| r.member.ratio)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let completed = runs.iter().all(|r| r.member.failure.is_none());
    let largest = (0..runs.len()).max_by(|&a, &b| {
        runs[a]
            .member
            .hm1_initial
            .total_cmp(&runs[b].member.hm1_initial)
    });
    let traj = largest.and_then(|i| runs[i].trajectory.take());
    let report = AprioriReport {
        completed,
        members: runs.into_iter().map(|r| r.member).collect(),
        constant,
        t_end: cfg.stepping.t_end,
    };
    Ok((report, traj))
}

/// The configured family `a exp(-((x - center)/width)^2)`, plus the
/// configured profile when it is not the default soliton.
pub fn apriori_family(cfg: &ExperimentConfig) -> Result<Vec<Field>> {
    let g = cfg.grid.build()?;
    let (c, w) = (cfg.apriori.center, cfg.apriori.width);
    Ok(cfg
        .apriori
        .amplitudes
        .iter()
        .map(|&a| Field::from_fn(g, |x| a * (-((x - c) / w).powi(2)).exp()))
        .collect())
}

pub fn run_apriori(cfg: &ExperimentConfig) -> Result<(AprioriReport, Option<Trajectory>)> {
    cfg.validate()?;
    let family = apriori_family(cfg)?;
    apriori_check(&family, cfg)
}
