//! Experiment configuration.
//!
//! A configuration is a single JSON object. Loading merges it over the
//! defaults of the requested command, then deserializes strictly: unknown
//! keys are errors and the resolved value carries every default explicitly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evolution::{EvolveOptions, ModelKind, Sponge, StepConfig};
use crate::grid::{Field, Grid};
use crate::profiles::{
    default_delta, render_profile, Eta, Perturbation, Phi, ProfileSpec, DEFAULT_R,
};
use crate::quadform::CoercivityOptions;
use crate::schroedinger::Branch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Simulate,
    Invert,
    Quadform,
    IdentityCheck,
    KinkStability,
    SolitonPipeline,
    Apriori,
    Decay,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Invert,
        Command::Quadform,
        Command::IdentityCheck,
        Command::KinkStability,
        Command::SolitonPipeline,
        Command::Apriori,
        Command::Decay,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Invert => "invert",
            Command::Quadform => "quadform",
            Command::IdentityCheck => "identity-check",
            Command::KinkStability => "kink-stability",
            Command::SolitonPipeline => "soliton-pipeline",
            Command::Apriori => "apriori",
            Command::Decay => "decay",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_length: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.half_length, self.points)
    }
}

/// Weight and frame constants of the stability experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(rename = "R")]
    pub r: f64,
    pub delta: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub gamma: f64,
    pub x0: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            r: DEFAULT_R,
            delta: default_delta(),
            a: 20.0,
            gamma: 1.0,
            x0: 0.0,
        }
    }
}

impl WeightConfig {
    pub fn eta(&self) -> Result<Eta> {
        Eta::new(self.r, self.delta)
    }

    pub fn phi(&self, a: f64) -> Result<Phi> {
        Phi::new(self.x0, a, self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Residual requested from the inverse maps.
    pub inversion: f64,
    /// `|Y(y)|` accepted by the modulation solve.
    pub modulation: f64,
    /// Largest `|w|` allowed near the box edges; `null` disables the check.
    pub edge: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inversion: 1e-8,
            modulation: 1e-10,
            edge: Some(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub branch: Branch,
    /// Required for `f_lambda`, absent for `f_star`.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Sobolev indices of the windowed norms.
    pub s: Vec<u32>,
    /// Widths `A` of the moving weight whose sensitivity is reported.
    pub a_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AprioriConfig {
    /// Multiples of the base bump `exp(-((x - center)/width)^2)`.
    pub amplitudes: Vec<f64>,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    pub pairs: usize,
    /// Largest wavenumber of the random band-limited fields.
    pub max_wavenumber: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelKind,
    pub grid: GridConfig,
    pub stepping: StepConfig,
    /// Reference profile; the initial datum is this plus `perturbation`.
    pub profile: ProfileSpec,
    /// Replaces `profile` when present: a field file (`{"L", "N", "samples"}`).
    pub field_file: Option<PathBuf>,
    pub perturbation: Perturbation,
    /// When present the perturbation is rescaled to this `L^2` norm.
    pub perturbation_l2: Option<f64>,
    pub weights: WeightConfig,
    pub sponge: Option<Sponge>,
    pub tolerances: Tolerances,
    pub inversion: InversionConfig,
    pub decay: DecayConfig,
    pub apriori: AprioriConfig,
    pub identity: IdentityConfig,
    pub quadform: CoercivityOptions,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Fully populated defaults of `command`.
    pub fn defaults(command: Command) -> Self {
        let kink_stepping = StepConfig {
            dt: 2e-3,
            t_end: 20.0,
            diagnostic_stride: 50,
            snapshot_stride: 1000,
        };
        let mut cfg = Self {
            name: command.name().to_string(),
            model: ModelKind::Kdv,
            grid: GridConfig {
                half_length: 50.0,
                points: 1024,
            },
            stepping: StepConfig {
                dt: 1e-3,
                t_end: 1.0,
                diagnostic_stride: 100,
                snapshot_stride: 100,
            },
            profile: ProfileSpec::Soliton { c: 4.0, x0: 0.0 },
            field_file: None,
            perturbation: Perturbation::None,
            perturbation_l2: None,
            weights: WeightConfig::default(),
            sponge: None,
            tolerances: Tolerances::default(),
            inversion: InversionConfig {
                branch: Branch::FStar,
                lambda: None,
            },
            decay: DecayConfig {
                s: vec![0, 1],
                a_values: vec![10.0, 20.0, 40.0],
            },
            apriori: AprioriConfig {
                amplitudes: vec![0.1, 0.2, 0.4],
                center: 0.0,
                width: 1.0,
            },
            identity: IdentityConfig {
                pairs: 20,
                max_wavenumber: 4.0,
                amplitude: 0.5,
            },
            quadform: CoercivityOptions::default(),
            seed: 0,
            output_dir: PathBuf::from("runs"),
        };
        match command {
            Command::Simulate | Command::Quadform => {}
            Command::Invert => {
                cfg.grid = GridConfig {
                    half_length: 30.0,
                    points: 512,
                };
            }
            Command::IdentityCheck => {
                cfg.grid = GridConfig {
                    half_length: 30.0,
                    points: 256,
                };
            }
            Command::KinkStability | Command::Decay => {
                cfg.model = ModelKind::KinkFrame;
                cfg.grid = GridConfig {
                    half_length: 60.0,
                    points: 1024,
                };
                cfg.stepping = kink_stepping;
                cfg.profile = ProfileSpec::Kink {
                    lambda: 1.0,
                    x0: 0.0,
                    t: 0.0,
                };
                cfg.perturbation = Perturbation::Sech {
                    amplitude: 0.05,
                    center: 3.0,
                };
                cfg.perturbation_l2 = Some(0.05);
                cfg.sponge = Some(Sponge::default());
            }
            Command::SolitonPipeline => {
                cfg.model = ModelKind::KinkFrame;
                cfg.grid = GridConfig {
                    half_length: 60.0,
                    points: 1024,
                };
                cfg.stepping = StepConfig {
                    t_end: 10.0,
                    ..kink_stepping
                };
                cfg.perturbation = Perturbation::Gaussian {
                    amplitude: 0.01,
                    center: 0.0,
                    width: 1.0,
                };
                cfg.sponge = Some(Sponge::default());
            }
            Command::Apriori => {
                cfg.grid = GridConfig {
                    half_length: 60.0,
                    points: 1024,
                };
                cfg.stepping = StepConfig {
                    dt: 1e-3,
                    t_end: 10.0,
                    diagnostic_stride: 100,
                    snapshot_stride: 0,
                };
                // Short dispersive waves reach the left layer within t ~ 0.5.
                cfg.sponge = Some(Sponge {
                    strength: 200.0,
                    ..Sponge::default()
                });
            }
        }
        cfg
    }

    /// Parses `text` over the defaults of `command`.
    pub fn from_json(command: Command, text: &str) -> Result<Self> {
        let user: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        if !user.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let mut merged = serde_json::to_value(Self::defaults(command))?;
        merge(&mut merged, user);
        let cfg: Self =
            serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(command: Command, path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(command, &text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// Overrides every seed in the configuration.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.perturbation = self.perturbation.with_seed(seed);
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.stepping.validate()?;
        self.profile.validate()?;
        self.perturbation.validate()?;
        if let Some(s) = &self.sponge {
            s.validate()?;
        }
        self.weights.eta()?;
        self.weights.phi(self.weights.a)?;
        if let Some(n) = self.perturbation_l2 {
            if !(n.is_finite() && n >= 0.0) {
                return Err(Error::Config(format!("perturbation_l2 must be >= 0, got {n}")));
            }
        }
        for (name, v) in [
            ("tolerances.inversion", self.tolerances.inversion),
            ("tolerances.modulation", self.tolerances.modulation),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inversion.branch == Branch::FLambda
            && !matches!(self.inversion.lambda, Some(l) if l > 0.0 && l.is_finite())
        {
            return Err(Error::Config(
                "inversion.lambda must be a positive number for the f_lambda branch".into(),
            ));
        }
        if self.inversion.branch == Branch::FStar && self.inversion.lambda.is_some() {
            return Err(Error::Config(
                "inversion.lambda must be null for the f_star branch".into(),
            ));
        }
        if self.weights.gamma >= 6.0 {
            return Err(Error::Config(format!(
                "weights.gamma must be below 6, got {}",
                self.weights.gamma
            )));
        }
        if self.apriori.amplitudes.is_empty() || self.decay.a_values.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Config(
                "apriori.amplitudes must be non-empty and decay.a_values positive".into(),
            ));
        }
        if !(self.apriori.width > 0.0) {
            return Err(Error::Config("apriori.width must be positive".into()));
        }
        if self.identity.pairs == 0 {
            return Err(Error::Config("identity.pairs must be positive".into()));
        }
        if self.quadform.points < 8 || self.quadform.points % 2 != 0 {
            return Err(Error::Config("quadform.points must be even and >= 8".into()));
        }
        Ok(())
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            sponge: self.sponge,
            edge_tolerance: self.tolerances.edge,
            ..EvolveOptions::default()
        }
    }

    /// Reference profile (or field file) on the configured grid, without the
    /// perturbation.
    pub fn base_field(&self) -> Result<Field> {
        match &self.field_file {
            Some(path) => Field::load_json(path),
            None => render_profile(&self.profile, self.grid.build()?),
        }
    }

    /// The configured perturbation on `grid`, rescaled to `perturbation_l2`
    /// when set.
    pub fn perturbation_field(&self, grid: Grid) -> Result<Field> {
        let p = self.perturbation.render(grid)?;
        match self.perturbation_l2 {
            None => Ok(p),
            Some(target) => {
                let n = crate::grid::l2_norm(&p);
                if n == 0.0 {
                    Ok(p)
                } else {
                    Ok(p.scale(target / n))
                }
            }
        }
    }

    /// `base_field + perturbation_field`.
    pub fn initial_field(&self) -> Result<Field> {
        let base = self.base_field()?;
        let p = self.perturbation_field(base.grid())?;
        Ok(&base + &p)
    }

    /// Initial state of a kink-frame run: the field file if given, the
    /// perturbation otherwise. `profile` is not used.
    pub fn kink_perturbation(&self) -> Result<Field> {
        match &self.field_file {
            Some(path) => Field::load_json(path),
            None => self.perturbation_field(self.grid.build()?),
        }
    }

    /// State handed to the integrator for `model`.
    pub fn initial_state(&self) -> Result<Field> {
        if self.model == ModelKind::KinkFrame {
            self.kink_perturbation()
        } else {
            self.initial_field()
        }
    }
}

/// Recursive object merge: keys of `over` replace those of `base`, nested
/// objects merge, everything else is replaced wholesale.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Tagged enums are replaced whole so that switching the
                    // kind does not inherit fields of the default variant.
                    Some(slot) if slot.is_object() && v.is_object() && !is_tagged(slot, &v) => {
                        merge(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn is_tagged(a: &Value, b: &Value) -> bool {
    a.get("kind").is_some() || b.get("kind").is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for c in Command::ALL {
            let cfg = ExperimentConfig::defaults(c);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_json(c, &cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(Command::Simulate, r#"{"tolerances": {"inversoin": 1}}"#);
        assert!(matches!(err, Err(Error::Config(_))));
        let err = ExperimentConfig::from_json(Command::Simulate, r#"{"gird": {}}"#);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn partial_sections_merge_and_kinds_replace() {
        let cfg = ExperimentConfig::from_json(
            Command::Simulate,
            r#"{"grid": {"N": 256}, "perturbation": {"kind": "sech", "amplitude": 0.1, "center": 1}}"#,
        )
        .unwrap();
        assert_eq!(cfg.grid.points, 256);
        assert_eq!(cfg.grid.half_length, 50.0);
        assert_eq!(
            cfg.perturbation,
            Perturbation::Sech {
                amplitude: 0.1,
                center: 1.0
            }
        );
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(Command::from_name(c.name()), Some(c));
        }
        assert_eq!(Command::from_name("nope"), None);
    }
}
