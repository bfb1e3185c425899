use miura_lab::evolution::{
    conserved_quantities, evolve, EvolveOptions, ModelKind, NoObserver, StepConfig, Stepper,
};
use miura_lab::grid::{spectral_derivative, Field, Grid};
use miura_lab::miura::galilean_shift;
use miura_lab::profiles::{sech2, soliton, Perturbation};
use rustfft::num_complex::Complex64;

fn soliton_error(dt: f64, t_end: f64) -> f64 {
    let g = Grid::new(50.0, 2048).unwrap();
    let u0 = Field::from_fn(g, |x| soliton(4.0, x));
    let cfg = StepConfig {
        dt,
        t_end,
        diagnostic_stride: 1_000_000,
        snapshot_stride: 0,
    };
    let traj = evolve(
        ModelKind::Kdv,
        &u0,
        &cfg,
        &EvolveOptions::default(),
        &mut NoObserver,
    )
    .unwrap();
    let exact = Field::from_fn(g, |x| soliton(4.0, x - 4.0 * t_end));
    (&traj.final_state - &exact).max_abs()
}

#[test]
fn soliton_travels_at_its_speed() {
    let err = soliton_error(1e-4, 1.0);
    assert!(err < 1e-6, "error {err}");
}

#[test]
fn fourth_order_in_time() {
    let errs: Vec<f64> = [8e-4, 4e-4, 2e-4]
        .iter()
        .map(|&dt| soliton_error(dt, 1.0))
        .collect();
    println!("soliton errors {errs:?}");
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 3.5, "errors {errs:?}, order {order}");
    }
}

fn random_kdv_datum(seed: u64) -> Field {
    let g = Grid::new(20.0, 256).unwrap();
    Perturbation::Noise {
        amplitude: 0.3,
        center: 0.0,
        width: 4.0,
        max_wavenumber: 1.5,
        seed,
    }
    .render(g)
    .unwrap()
}

#[test]
fn conservation_over_soliton_run() {
    let g = Grid::new(50.0, 2048).unwrap();
    let u0 = Field::from_fn(g, |x| soliton(4.0, x));
    let c = conserved_quantities(&u0, ModelKind::Kdv);
    assert!((c.p1 - 16.0 / 3.0).abs() < 1e-8);
    assert!((c.p0 + 4.0).abs() < 1e-8);
    let cfg = StepConfig {
        dt: 1e-4,
        t_end: 5.0,
        diagnostic_stride: 5000,
        snapshot_stride: 0,
    };
    let traj = evolve(
        ModelKind::Kdv,
        &u0,
        &cfg,
        &EvolveOptions::default(),
        &mut NoObserver,
    )
    .unwrap();
    let first = traj.diagnostics[0];
    for row in &traj.diagnostics {
        for (a, b) in [
            (row.p0, first.p0),
            (row.p1, first.p1),
            (row.p2, first.p2),
        ] {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert!((a - b).abs() / (1.0 + b.abs()) < 1e-7, "{a} vs {b}");
        }
    }
}

/// Fits the coefficients of `u u_x^2` and `u^4` that make
/// `int u_xx^2 + a u u_x^2 + b u^4` stationary along random KdV runs.
#[test]
fn fourth_conserved_density_coefficients() {
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for seed in [11, 12, 13] {
        let u0 = random_kdv_datum(seed);
        let densities = |u: &Field| {
            let ux = spectral_derivative(u, 1);
            let uxx = spectral_derivative(u, 2);
            let h = u.grid().spacing();
            let mut s = [0.0; 3];
            for j in 0..u.samples().len() {
                let (v, d1, d2) = (u.samples()[j], ux.samples()[j], uxx.samples()[j]);
                s[0] += h * d2 * d2;
                s[1] += h * v * d1 * d1;
                s[2] += h * v.powi(4);
            }
            s
        };
        let start = densities(&u0);
        let cfg = StepConfig {
            dt: 1e-3,
            t_end: 2.0,
            diagnostic_stride: 500,
            snapshot_stride: 500,
        };
        let traj = evolve(
            ModelKind::Kdv,
            &u0,
            &cfg,
            &EvolveOptions::unchecked(),
            &mut NoObserver,
        )
        .unwrap();
        for snap in traj.snapshots.iter().skip(1) {
            let d = densities(&snap.field);
            rows.push([d[0] - start[0], d[1] - start[1], d[2] - start[2]]);
        }
    }
    // Least squares for d0 + a d1 + b d2 = 0.
    let (mut m11, mut m12, mut m22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for d in &rows {
        m11 += d[1] * d[1];
        m12 += d[1] * d[2];
        m22 += d[2] * d[2];
        r1 -= d[0] * d[1];
        r2 -= d[0] * d[2];
    }
    let det = m11 * m22 - m12 * m12;
    let a = (r1 * m22 - r2 * m12) / det;
    let b = (m11 * r2 - m12 * r1) / det;
    println!("fitted coefficients a = {a}, b = {b}");
    assert!((a - 10.0).abs() < 1e-3 && (b - 5.0).abs() < 1e-3);

    for seed in [11, 12, 13] {
        let u0 = random_kdv_datum(seed);
        let p3 = conserved_quantities(&u0, ModelKind::Kdv).p3.unwrap();
        let cfg = StepConfig {
            dt: 1e-3,
            t_end: 2.0,
            diagnostic_stride: 500,
            snapshot_stride: 0,
        };
        let traj = evolve(
            ModelKind::Kdv,
            &u0,
            &cfg,
            &EvolveOptions::unchecked(),
            &mut NoObserver,
        )
        .unwrap();
        for row in &traj.diagnostics {
            let drift = (row.p3.unwrap() - p3).abs() / (1.0 + p3.abs());
            assert!(drift < 1e-9, "seed {seed}: drift {drift}");
        }
    }
}

#[test]
fn mkdv_commutes_with_sign_flip() {
    let u0 = random_kdv_datum(3);
    let cfg = StepConfig::new(1e-3, 0.5);
    let opts = EvolveOptions::unchecked();
    let a = evolve(ModelKind::Mkdv, &u0, &cfg, &opts, &mut NoObserver).unwrap();
    let b = evolve(ModelKind::Mkdv, &(-&u0), &cfg, &opts, &mut NoObserver).unwrap();
    assert!((&a.final_state + &b.final_state).max_abs() < 1e-14);
}

#[test]
fn galilean_boost_commutes_with_flow() {
    let g = Grid::new(50.0, 2048).unwrap();
    let u0 = Field::from_fn(g, |x| soliton(4.0, x));
    let (h, t_end) = (1.5, 0.5);
    let cfg = StepConfig::new(1e-4, t_end);
    let opts = EvolveOptions::unchecked();
    let plain = evolve(ModelKind::Kdv, &u0, &cfg, &opts, &mut NoObserver).unwrap();
    let boosted0 = galilean_shift(&u0, h, 0.0);
    let boosted = evolve(ModelKind::Kdv, &boosted0, &cfg, &opts, &mut NoObserver).unwrap();
    let expect = galilean_shift(&plain.final_state, h, t_end);
    let exact = Field::from_fn(g, |x| soliton(4.0, x - 4.0 * t_end));
    let scheme_err = (&plain.final_state - &exact).max_abs();
    let diff = (&boosted.final_state - &expect).max_abs();
    assert!(diff < 10.0 * scheme_err.max(1e-12), "{diff} vs {scheme_err}");
}

#[test]
fn kink_frame_linearisation() {
    // For tiny w the right-hand side is 4 w_x - w_xxx - 6 (sech^2 w)_x.
    let g = Grid::new(30.0, 512).unwrap();
    let eps = 1e-7;
    let w = Field::from_fn(g, |x| (-(x - 1.0) * (x - 1.0)).exp());
    let mut st = Stepper::new(ModelKind::KinkFrame, g, 1e-3, None);
    let spec = st.project(&w.scale(eps));
    let mut nl = vec![Complex64::new(0.0, 0.0); g.len()];
    st.nonlinear(&spec, &mut nl);
    let mut full = nl.clone();
    for (j, c) in full.iter_mut().enumerate() {
        let k = g.wavenumber(j);
        *c += Complex64::new(0.0, k * k * k + 4.0 * k) * spec[j];
    }
    let generator = Field::from_spectrum(g, &full).scale(1.0 / eps);
    let wx = spectral_derivative(&w, 1);
    let wxxx = spectral_derivative(&w, 3);
    let sw = spectral_derivative(&Field::from_fn(g, |x| sech2(x) * (-(x - 1.0) * (x - 1.0)).exp()), 1);
    let expect = Field::from_fn_indexed(g, |j| {
        4.0 * wx.samples()[j] - wxxx.samples()[j] - 6.0 * sw.samples()[j]
    });
    assert!((&generator - &expect).max_abs() < 1e-5);
}

#[test]
fn blow_up_is_reported() {
    let g = Grid::new(10.0, 128).unwrap();
    let u0 = Field::from_fn(g, |x| 40.0 * (-x * x).exp());
    let cfg = StepConfig {
        dt: 0.05,
        t_end: 5.0,
        diagnostic_stride: 1,
        snapshot_stride: 0,
    };
    let r = evolve(
        ModelKind::Mkdv,
        &u0,
        &cfg,
        &EvolveOptions::unchecked(),
        &mut NoObserver,
    );
    assert!(matches!(r, Err(miura_lab::Error::BlowUp { .. })));
}

#[test]
fn edge_contamination_is_reported() {
    let g = Grid::new(10.0, 128).unwrap();
    let u0 = Field::from_fn(g, |x| 0.1 * (-(x - 9.0) * (x - 9.0)).exp());
    let cfg = StepConfig::new(1e-3, 0.1);
    let r = evolve(
        ModelKind::Kdv,
        &u0,
        &cfg,
        &EvolveOptions::default(),
        &mut NoObserver,
    );
    assert!(matches!(
        r,
        Err(miura_lab::Error::BoundaryContamination { .. })
    ));
}
