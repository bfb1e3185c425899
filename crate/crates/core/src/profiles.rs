//! Closed-form profiles: solitons, kinks, the monotone weights and the
//! potential of the coercivity problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Default offset of the monotone weight.
pub const DEFAULT_R: f64 = 10.0;

/// Default floor of the monotone weight, `e^{-20}`.
pub fn default_delta() -> f64 {
    (-20.0f64).exp()
}

#[inline]
pub fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

#[inline]
pub fn sech2(x: f64) -> f64 {
    let s = sech(x);
    s * s
}

/// Derivatives of `sech^2` up to order three, `[s, s', s'', s''']`.
pub fn sech2_derivatives(x: f64) -> [f64; 4] {
    let s = sech2(x);
    let t = x.tanh();
    [
        s,
        -2.0 * s * t,
        4.0 * s * t * t - 2.0 * s * s,
        -8.0 * s * t * t * t + 16.0 * s * s * t,
    ]
}

/// `1 + tanh(z)` without cancellation for negative `z`.
#[inline]
pub fn one_plus_tanh(z: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * z).exp())
}

/// KdV soliton `R_c(x) = -(c/2) sech^2(sqrt(c) x / 2)`, travelling right at speed `c`.
pub fn soliton(c: f64, x: f64) -> f64 {
    -0.5 * c * sech2(0.5 * c.sqrt() * x)
}

/// mKdV kink `lambda tanh(lambda x + 2 lambda^3 t)`.
pub fn kink(lambda: f64, t: f64, x: f64) -> f64 {
    lambda * (lambda * x + 2.0 * lambda.powi(3) * t).tanh()
}

/// The potential `-2 sech^2 x - 4 sech^2 x tanh x`.
pub fn quadform_potential(x: f64) -> f64 {
    let s = sech2(x);
    -2.0 * s - 4.0 * s * x.tanh()
}

/// Increasing weight `eta(x) = tanh((x - R)/2) + 1 + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub r: f64,
    pub delta: f64,
}

impl Default for Eta {
    fn default() -> Self {
        Self {
            r: DEFAULT_R,
            delta: default_delta(),
        }
    }
}

impl Eta {
    pub fn new(r: f64, delta: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::InvalidParameter(format!("R must be finite, got {r}")));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {delta}"
            )));
        }
        Ok(Self { r, delta })
    }

    pub fn value(&self, x: f64) -> f64 {
        one_plus_tanh(0.5 * (x - self.r)) + self.delta
    }

    /// `eta_x = sech^2((x-R)/2) / 2`.
    pub fn dx(&self, x: f64) -> f64 {
        0.5 * sech2(0.5 * (x - self.r))
    }

    pub fn dxx(&self, x: f64) -> f64 {
        let z = 0.5 * (x - self.r);
        -0.5 * sech2(z) * z.tanh()
    }

    pub fn dxxx(&self, x: f64) -> f64 {
        let s = sech2(0.5 * (x - self.r));
        0.5 * s - 0.75 * s * s
    }

    /// `[eta, eta', eta'', eta''']` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        [self.value(x), self.dx(x), self.dxx(x), self.dxxx(x)]
    }
}

/// Orthogonality weight `psi(x) = eta(x) sech^2(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Psi {
    pub eta: Eta,
}

impl Psi {
    pub fn new(eta: Eta) -> Self {
        Self { eta }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eta.value(x) * sech2(x)
    }

    /// `[psi, psi', psi'', psi''']` at `x` by the Leibniz rule.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        let e = self.eta.derivatives(x);
        let s = sech2_derivatives(x);
        [
            e[0] * s[0],
            e[1] * s[0] + e[0] * s[1],
            e[2] * s[0] + 2.0 * e[1] * s[1] + e[0] * s[2],
            e[3] * s[0] + 3.0 * e[2] * s[1] + 3.0 * e[1] * s[2] + e[0] * s[3],
        ]
    }
}

/// Moving weight `phi(t, x) = 1 + tanh((x - x0 + gamma t)/A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub x0: f64,
    pub a: f64,
    pub gamma: f64,
}

impl Phi {
    pub fn new(x0: f64, a: f64, gamma: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!("A must be positive, got {a}")));
        }
        if !(x0.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidParameter("x0 and gamma must be finite".into()));
        }
        Ok(Self { x0, a, gamma })
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        one_plus_tanh((x - self.x0 + self.gamma * t) / self.a)
    }
}

/// A closed-form profile together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Soliton {
        c: f64,
        #[serde(default)]
        x0: f64,
    },
    Kink {
        lambda: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        t: f64,
    },
    Eta {
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        y: f64,
    },
    Phi {
        #[serde(default)]
        x0: f64,
        a: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default)]
        t: f64,
    },
    Psi {
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        y: f64,
    },
    QuadformPotential,
}

fn default_r() -> f64 {
    DEFAULT_R
}

fn default_gamma() -> f64 {
    1.0
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

impl ProfileSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProfileSpec::Soliton { c, x0 } => {
                finite("x0", x0)?;
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "soliton speed must be positive, got {c}"
                    )));
                }
            }
            ProfileSpec::Kink { lambda, x0, t } => {
                finite("x0", x0)?;
                finite("t", t)?;
                if !(lambda.is_finite() && lambda > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "kink scale must be positive, got {lambda}"
                    )));
                }
            }
            ProfileSpec::Eta { r, delta, y } | ProfileSpec::Psi { r, delta, y } => {
                finite("y", y)?;
                Eta::new(r, delta)?;
            }
            ProfileSpec::Phi { x0, a, gamma, t } => {
                finite("t", t)?;
                Phi::new(x0, a, gamma)?;
            }
            ProfileSpec::QuadformPotential => {}
        }
        Ok(())
    }

    /// Value of the profile at `x`. Parameters are assumed valid.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::Soliton { c, x0 } => soliton(c, x - x0),
            ProfileSpec::Kink { lambda, x0, t } => kink(lambda, t, x - x0),
            ProfileSpec::Eta { r, delta, y } => Eta { r, delta }.value(x - y),
            ProfileSpec::Phi { x0, a, gamma, t } => Phi { x0, a, gamma }.value(t, x),
            ProfileSpec::Psi { r, delta, y } => Psi::new(Eta { r, delta }).value(x - y),
            ProfileSpec::QuadformPotential => quadform_potential(x),
        }
    }
}

/// Samples a profile on a grid.
pub fn render_profile(spec: &ProfileSpec, grid: Grid) -> Result<Field> {
    spec.validate()?;
    Field::new(grid, grid.nodes().into_iter().map(|x| spec.value(x)).collect())
}

/// The travelling soliton or kink at time `t`.
///
/// A soliton centred at `x0` is moved to `x0 + c t`; a kink has its own time
/// parameter advanced by `t`.
pub fn exact_solution(spec: &ProfileSpec, t: f64, grid: Grid) -> Result<Field> {
    finite("t", t)?;
    let moved = match *spec {
        ProfileSpec::Soliton { c, x0 } => ProfileSpec::Soliton { c, x0: x0 + c * t },
        ProfileSpec::Kink { lambda, x0, t: t0 } => ProfileSpec::Kink {
            lambda,
            x0,
            t: t0 + t,
        },
        _ => {
            return Err(Error::InvalidParameter(
                "exact solutions exist only for solitons and kinks".into(),
            ))
        }
    };
    render_profile(&moved, grid)
}

/// Deterministic perturbations added to reference profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    None,
    /// `amplitude exp(-((x - center)/width)^2)`
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `amplitude sech(x - center)`
    Sech { amplitude: f64, center: f64 },
    /// Random smooth noise: a sum of Fourier modes with wavenumbers up to
    /// `max_wavenumber` and random phases, under a gaussian envelope, scaled
    /// so its maximum is `amplitude`.
    Noise {
        amplitude: f64,
        center: f64,
        width: f64,
        max_wavenumber: f64,
        seed: u64,
    },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Perturbation::None => Ok(()),
            Perturbation::Gaussian {
                amplitude,
                center,
                width,
            } => {
                finite("amplitude", amplitude)?;
                finite("center", center)?;
                positive("width", width)
            }
            Perturbation::Sech { amplitude, center } => {
                finite("amplitude", amplitude)?;
                finite("center", center)
            }
            Perturbation::Noise {
                amplitude,
                center,
                width,
                max_wavenumber,
                ..
            } => {
                finite("amplitude", amplitude)?;
                finite("center", center)?;
                positive("width", width)?;
                positive("max_wavenumber", max_wavenumber)
            }
        }
    }

    /// Replaces the seed of a noise perturbation.
    pub fn with_seed(self, new_seed: u64) -> Self {
        match self {
            Perturbation::Noise {
                amplitude,
                center,
                width,
                max_wavenumber,
                ..
            } => Perturbation::Noise {
                amplitude,
                center,
                width,
                max_wavenumber,
                seed: new_seed,
            },
            other => other,
        }
    }

    pub fn render(&self, grid: Grid) -> Result<Field> {
        self.validate()?;
        let f = match *self {
            Perturbation::None => Field::zeros(grid),
            Perturbation::Gaussian {
                amplitude,
                center,
                width,
            } => Field::from_fn(grid, |x| {
                let z = (x - center) / width;
                amplitude * (-z * z).exp()
            }),
            Perturbation::Sech { amplitude, center } => {
                Field::from_fn(grid, |x| amplitude * sech(x - center))
            }
            Perturbation::Noise {
                amplitude,
                center,
                width,
                max_wavenumber,
                seed,
            } => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let modes: Vec<(f64, f64, f64)> = (0..16)
                    .map(|_| {
                        (
                            rng.gen_range(0.0..max_wavenumber),
                            rng.gen_range(0.0..std::f64::consts::TAU),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect();
                let raw = Field::from_fn(grid, |x| {
                    let z = (x - center) / width;
                    let s: f64 = modes.iter().map(|(k, p, a)| a * (k * x + p).cos()).sum();
                    s * (-z * z).exp()
                });
                let m = raw.max_abs();
                if m == 0.0 {
                    raw
                } else {
                    raw.scale(amplitude / m)
                }
            }
        };
        Ok(f)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_points() -> Vec<f64> {
        (0..=400).map(|j| -30.0 + 0.15 * j as f64).collect()
    }

    #[test]
    fn soliton_centre_value() {
        assert_eq!(soliton(4.0, 0.0), -2.0);
        for x in sample_points() {
            assert_eq!(soliton(2.5, x), soliton(2.5, -x));
        }
    }

    #[test]
    fn eta_at_offset() {
        let eta = Eta::default();
        let spec = ProfileSpec::Eta {
            r: 10.0,
            delta: default_delta(),
            y: 0.0,
        };
        assert_eq!(spec.value(10.0), 1.0 + (-20.0f64).exp());
        assert_eq!(eta.value(10.0), 1.0 + (-20.0f64).exp());
    }

    #[test]
    fn kink_limits_and_oddness() {
        assert_eq!(kink(1.0, 0.0, 0.0), 0.0);
        assert!((kink(1.0, 0.0, 40.0) - 1.0).abs() < 1e-15);
        assert!((kink(1.0, 0.0, -40.0) + 1.0).abs() < 1e-15);
        for x in sample_points() {
            assert_eq!(kink(0.7, 0.0, x), -kink(0.7, 0.0, -x));
        }
    }

    #[test]
    fn eta_third_derivative_identity() {
        let eta = Eta::default();
        for x in sample_points() {
            let [_, e1, _, e3] = eta.derivatives(x + 10.0);
            assert!((e3 - (-3.0 * e1 * e1 + e1)).abs() < 1e-10);
        }
    }

    #[test]
    fn eta_second_derivative_identity() {
        let eta = Eta::default();
        for x in sample_points() {
            let [_, e1, e2, _] = eta.derivatives(x + 10.0);
            if e1 > 1e-280 {
                assert!((e2 * e2 / e1 - (e1 - 2.0 * e1 * e1)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eta_derivatives_match_finite_differences() {
        let eta = Eta::new(2.0, 0.1).unwrap();
        let h = 1e-4;
        for x in [-3.0, 0.0, 1.5, 4.0] {
            let fd = (eta.value(x + h) - eta.value(x - h)) / (2.0 * h);
            assert!((fd - eta.dx(x)).abs() < 1e-8);
            let fd = (eta.dx(x + h) - eta.dx(x - h)) / (2.0 * h);
            assert!((fd - eta.dxx(x)).abs() < 1e-8);
            let fd = (eta.dxx(x + h) - eta.dxx(x - h)) / (2.0 * h);
            assert!((fd - eta.dxxx(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn psi_derivatives_match_finite_differences() {
        let psi = Psi::new(Eta::new(1.0, 0.2).unwrap());
        let h = 1e-4;
        for x in [-2.0, -0.3, 0.0, 0.8, 2.5] {
            let d = psi.derivatives(x);
            let p = psi.derivatives(x + h);
            let m = psi.derivatives(x - h);
            for k in 0..3 {
                assert!(((p[k] - m[k]) / (2.0 * h) - d[k + 1]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn cosh_tanh_identity() {
        let r = 10.0;
        for x in sample_points() {
            let z: f64 = 0.5 * (x + 10.0 - r);
            let lhs = z.cosh().powi(2) * one_plus_tanh(z);
            let rhs = 0.5 * ((x + 10.0 - r).exp() + 1.0);
            assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_monotone_and_bounded() {
        let eta = Eta::default();
        let phi = Phi::new(0.0, 20.0, 1.0).unwrap();
        let xs = sample_points();
        for w in xs.windows(2) {
            let (a, b) = (eta.value(w[0] + 10.0), eta.value(w[1] + 10.0));
            assert!(b > a && a > eta.delta && b < 2.0 + eta.delta);
            let (a, b) = (phi.value(0.0, w[0]), phi.value(0.0, w[1]));
            assert!(b > a && a > 0.0 && b < 2.0);
        }
    }

    #[test]
    fn exact_solutions_travel() {
        let grid = Grid::new(20.0, 256).unwrap();
        let s = exact_solution(&ProfileSpec::Soliton { c: 4.0, x0: 0.0 }, 0.5, grid).unwrap();
        let expect = Field::from_fn(grid, |x| soliton(4.0, x - 2.0));
        assert_eq!(s, expect);
        let k = exact_solution(
            &ProfileSpec::Kink {
                lambda: 1.0,
                x0: 0.0,
                t: 0.0,
            },
            1.0,
            grid,
        )
        .unwrap();
        let expect = Field::from_fn(grid, |x| (x + 2.0).tanh());
        assert!((&k - &expect).max_abs() < 1e-15);
        let s0 = exact_solution(&ProfileSpec::Soliton { c: 1.0, x0: 0.0 }, 0.0, grid).unwrap();
        assert_eq!(s0, Field::from_fn(grid, |x| soliton(1.0, x)));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let grid = Grid::new(5.0, 16).unwrap();
        assert!(render_profile(&ProfileSpec::Soliton { c: 0.0, x0: 0.0 }, grid).is_err());
        assert!(render_profile(
            &ProfileSpec::Kink {
                lambda: -1.0,
                x0: 0.0,
                t: 0.0
            },
            grid
        )
        .is_err());
        assert!(render_profile(
            &ProfileSpec::Eta {
                r: 10.0,
                delta: 0.0,
                y: 0.0
            },
            grid
        )
        .is_err());
        assert!(render_profile(
            &ProfileSpec::Phi {
                x0: 0.0,
                a: 0.0,
                gamma: 1.0,
                t: 0.0
            },
            grid
        )
        .is_err());
        let err = serde_json::from_str::<ProfileSpec>(r#"{"kind":"breather"}"#);
        assert!(err.is_err());
    }

    #[test]
    fn perturbations_render() {
        let grid = Grid::new(20.0, 256).unwrap();
        let g = Perturbation::Gaussian {
            amplitude: 0.1,
            center: 1.0,
            width: 2.0,
        }
        .render(grid)
        .unwrap();
        assert!((g.max_abs() - 0.1).abs() < 1e-3);
        let noise = Perturbation::Noise {
            amplitude: 0.05,
            center: 0.0,
            width: 3.0,
            max_wavenumber: 2.0,
            seed: 7,
        };
        let a = noise.render(grid).unwrap();
        assert_eq!(a, noise.render(grid).unwrap());
        assert!((a.max_abs() - 0.05).abs() < 1e-15);
        assert_ne!(a, noise.with_seed(8).render(grid).unwrap());
        assert_eq!(Perturbation::None.render(grid).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn spec_parses_from_json() {
        let s: ProfileSpec = serde_json::from_str(r#"{"kind":"soliton","c":4.0}"#).unwrap();
        assert_eq!(s, ProfileSpec::Soliton { c: 4.0, x0: 0.0 });
        let p: ProfileSpec = serde_json::from_str(r#"{"kind":"quadform_potential"}"#).unwrap();
        assert_eq!(p.value(0.0), -2.0);
    }
}
