use miura_lab::config::{Command, ExperimentConfig};
use miura_lab::grid::{Field, Grid};
use miura_lab::profiles::{Eta, Perturbation, ProfileSpec, Psi};
use miura_lab::stability::{
    orthogonality, run_apriori, run_asymptotic_decay, run_kink_stability, run_soliton_pipeline,
    solve_modulation,
};
use miura_lab::Error;

fn psi() -> Psi {
    Psi::new(Eta::default())
}

fn grid() -> Grid {
    Grid::new(40.0, 512).unwrap()
}

#[test]
fn modulation_of_exact_kinks() {
    let g = grid();
    let m = solve_modulation(&Field::zeros(g), 0.0, &psi(), 1e-10).unwrap();
    assert_eq!(m.y, 0.0);
    assert_eq!(m.residual, 0.0);

    let w = Field::from_fn(g, |x| (x - 0.3).tanh() - x.tanh());
    let m = solve_modulation(&w, 0.0, &psi(), 1e-10).unwrap();
    assert!((m.y - 0.3).abs() < 1e-10, "{}", m.y);
    assert!(m.residual < 1e-10);
}

#[test]
fn modulation_root_is_unique_on_unit_interval() {
    let g = grid();
    let w = Field::from_fn(g, |x| 0.05 * (-x * x).exp());
    let p = psi();
    let m = solve_modulation(&w, 0.0, &p, 1e-10).unwrap();
    // Dense sampling of Y on [-1, 1]: exactly one sign change, next to the root.
    let ys: Vec<f64> = (0..=2000).map(|i| -1.0 + i as f64 * 1e-3).collect();
    let vals: Vec<f64> = ys.iter().map(|&y| orthogonality(&w, y, &p).0).collect();
    let changes: Vec<usize> = (1..vals.len())
        .filter(|&i| vals[i - 1].signum() != vals[i].signum())
        .collect();
    assert_eq!(changes.len(), 1);
    let i = changes[0];
    assert!(ys[i - 1] <= m.y && m.y <= ys[i], "{} not in [{}, {}]", m.y, ys[i - 1], ys[i]);
}

#[test]
fn modulation_rejects_far_states() {
    let g = grid();
    let w = Field::from_fn(g, |x| (-x * x / 4.0).exp());
    let r = solve_modulation(&w, 0.0, &psi(), 1e-10);
    assert!(matches!(r, Err(Error::Modulation(_))));
}

fn short(mut cfg: ExperimentConfig, t_end: f64) -> ExperimentConfig {
    cfg.stepping.t_end = t_end;
    cfg
}

#[test]
fn unperturbed_kink_stays_put() {
    let mut cfg = short(ExperimentConfig::defaults(Command::KinkStability), 2.0);
    cfg.perturbation = Perturbation::None;
    let run = run_kink_stability(&cfg).unwrap();
    assert!(run.failure.is_none());
    let r = run.report;
    assert_eq!(r.sup_ratio, 1.0);
    for p in &r.modulation {
        assert!(p.ydot_plus2.abs() < 1e-8);
        assert!((p.y + 2.0 * p.t).abs() < 1e-12);
    }
    assert_eq!(r.virial_integral, 0.0);
}

#[test]
fn decay_of_zero_perturbation_is_zero() {
    let mut cfg = short(ExperimentConfig::defaults(Command::Decay), 1.0);
    cfg.perturbation = Perturbation::None;
    let run = run_asymptotic_decay(&cfg).unwrap();
    for series in &run.report.windowed_norms {
        assert!(series.values.iter().all(|v| *v < 1e-10));
    }
}

#[test]
fn kink_stability_protocol() {
    let cfg = ExperimentConfig::defaults(Command::KinkStability);
    let run = run_kink_stability(&cfg).unwrap();
    assert!(run.failure.is_none(), "{:?}", run.failure);
    let r = &run.report;
    println!(
        "sup_ratio {} virial {} ({}) kato {} mass increase {:e} ydot C {:?} cross {:e} h1 {:?}",
        r.sup_ratio,
        r.virial_integral,
        r.virial_ratio.unwrap(),
        r.kato_integral,
        r.weighted_mass_max_increase,
        r.ydot_bound_constant,
        r.ydot_crosscheck_max_difference,
        r.higher_norm
    );
    // Central differences against the orthogonality formula.
    let worst = r.modulation.iter().map(|p| p.ydot_plus2.abs()).fold(0.0, f64::max);
    assert!(r.ydot_crosscheck_max_difference < 0.1 * worst);
    assert!((r.initial_l2 - 0.05).abs() < 1e-12);
    assert!(r.sup_ratio <= 10.0);
    assert!(r.weighted_mass_max_increase <= 1e-6);
    assert!(r.virial_integral <= 100.0 * 0.05 * 0.05);
    assert!(r.orthogonality_residual < 1e-10);
    let rows = &run.trajectory.diagnostics;
    assert_eq!(rows.len(), r.t.len());
    assert!(rows.iter().all(|row| row.y.is_some() && row.ydot_plus2.is_some()));
}

#[test]
fn asymptotic_decay_protocol() {
    let cfg = ExperimentConfig::defaults(Command::Decay);
    let run = run_asymptotic_decay(&cfg).unwrap();
    assert!(run.failure.is_none(), "{:?}", run.failure);
    let r = &run.report;
    for w in &r.windowed_norms {
        println!("s = {}: decay factor {:?}", w.s, w.decay_factor);
        assert!(w.decay_factor.unwrap() <= 0.1);
    }
    for p in &r.phi_weighted {
        println!("A = {}: phi-weighted final/initial {:?}", p.a, p.final_over_initial);
    }
}

#[test]
fn soliton_pipeline_exact_soliton() {
    let mut cfg = short(ExperimentConfig::defaults(Command::SolitonPipeline), 1.0);
    cfg.perturbation = Perturbation::None;
    let run = run_soliton_pipeline(&cfg).unwrap();
    assert!(run.failure.is_none(), "{:?}", run.failure);
    let rec = run.report.recovered.unwrap();
    println!("{rec:?}");
    assert!((rec.lambda - 1.0).abs() < 1e-6);
    assert!((rec.c_tilde - 4.0).abs() < 1e-6);
    assert!(rec.sup_deviation_hm1 < 1e-6);
}

#[test]
fn soliton_pipeline_perturbed() {
    let cfg = ExperimentConfig::defaults(Command::SolitonPipeline);
    let run = run_soliton_pipeline(&cfg).unwrap();
    assert!(run.failure.is_none(), "{:?}", run.failure);
    let rec = run.report.recovered.unwrap();
    println!(
        "c~ {} sup dev {} pert {} ratios {:?} {:?} drift {:e}",
        rec.c_tilde,
        rec.sup_deviation_hm1,
        rec.perturbation_hm1,
        rec.deviation_ratio,
        rec.speed_ratio,
        rec.asymptotic_level_drift
    );
    assert!(rec.deviation_ratio.unwrap() <= 10.0);
    assert!(rec.speed_ratio.unwrap() <= 10.0);
}

#[test]
fn soliton_pipeline_rescales_slow_solitons() {
    let mut cfg = short(ExperimentConfig::defaults(Command::SolitonPipeline), 1.0);
    cfg.profile = ProfileSpec::Soliton { c: 1.0, x0: 0.0 };
    cfg.perturbation = Perturbation::Gaussian {
        amplitude: 0.005,
        center: 0.0,
        width: 2.0,
    };
    let run = run_soliton_pipeline(&cfg).unwrap();
    assert!(run.failure.is_none(), "{:?}", run.failure);
    let rec = run.report.recovered.unwrap();
    println!("{} {} {}", rec.c_tilde, rec.speed_error, rec.perturbation_hm1);
    assert!(rec.speed_ratio.unwrap() <= 10.0);
}

#[test]
fn apriori_family_protocol() {
    let cfg = ExperimentConfig::defaults(Command::Apriori);
    let (report, traj) = run_apriori(&cfg).unwrap();
    assert!(traj.is_some());
    for m in &report.members {
        println!("{m:?}");
        assert!(m.admissible);
        let s = m.scaling.unwrap();
        assert!(s.consistent);
    }
    println!("constant {:?}", report.constant);
    assert!(report.completed);
    assert!(report.constant.unwrap() <= 5.0);
}

#[test]
fn apriori_zero_member_has_zero_ratio() {
    let mut cfg = short(ExperimentConfig::defaults(Command::Apriori), 0.1);
    cfg.apriori.amplitudes = vec![0.0];
    let (report, _) = run_apriori(&cfg).unwrap();
    assert_eq!(report.members[0].ratio, Some(0.0));
    assert!(report.members[0].scaling.is_none());
}
