//! Run configuration: a TOML document, schema version 1.
//!
//! ```toml
//! schema_version = 1          # optional, must be 1
//! name = "ablation-implicit"  # optional; defaults to problem-solver-seed
//! solver = "implicit"         # explicit | implicit | linear(λ) | pcgrad | mgda
//! problem = "toyflow-image"   # quadratic | nonconvex | toyflow-image | toyflow-video | attention-toy
//! seed = 0                    # required
//! max_steps = 1000
//! instrumentation = "light"   # light | full
//! drift = "trailing"          # trailing | look-ahead
//!
//! [schedules]                 # number = constant, table = power decay
//! alpha = 1e-3
//! beta = 0.1
//! epsilon = { base = 0.01, exponent = 0.5 }
//!
//! [losses]
//! gamma1 = 0.01
//! gamma2 = 1.0
//! eta = 2.0
//! tau = 0.07
//! irrelevant = 3
//! ```
//!
//! Remaining sections (`quadratic`, `nonconvex`, `video`, `pretrain`,
//! `eval`) are listed on their structs. Unknown keys anywhere are errors.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tolcone_core::{DriftMode, Instrumentation, Schedule, SolverKind, SurgeryConfig};
use tolcone_toyzoo::{ErasureSettings, PretrainConfig};

use crate::{BenchError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Solver name as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SolverSpec(pub SolverKind);

impl TryFrom<String> for SolverSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
            .map(SolverSpec)
            .map_err(|e: tolcone_core::Error| e.to_string())
    }
}

impl From<SolverSpec> for String {
    fn from(s: SolverSpec) -> String {
        s.0.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Quadratic,
    Nonconvex,
    ToyflowImage,
    ToyflowVideo,
    AttentionToy,
}

impl ProblemKind {
    pub fn is_flow(&self) -> bool {
        matches!(self, ProblemKind::ToyflowImage | ProblemKind::ToyflowVideo)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Nonconvex => "nonconvex",
            ProblemKind::ToyflowImage => "toyflow-image",
            ProblemKind::ToyflowVideo => "toyflow-video",
            ProblemKind::AttentionToy => "attention-toy",
        })
    }
}

/// A constant (`0.1`) or a power decay (`{ base = 0.1, exponent = 0.5 }`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Constant(f64),
    Decay(Decay),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decay {
    pub base: f64,
    pub exponent: f64,
}

impl ScheduleSpec {
    pub fn to_schedule(self) -> Schedule {
        match self {
            ScheduleSpec::Constant(b) => Schedule::constant(b),
            ScheduleSpec::Decay(d) => Schedule::power_decay(d.base, d.exponent),
        }
    }

    fn base(self) -> f64 {
        match self {
            ScheduleSpec::Constant(b) => b,
            ScheduleSpec::Decay(d) => d.base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedules {
    pub alpha: ScheduleSpec,
    pub beta: ScheduleSpec,
    pub epsilon: ScheduleSpec,
}

impl Default for Schedules {
    fn default() -> Self {
        Self {
            alpha: ScheduleSpec::Constant(1e-3),
            beta: ScheduleSpec::Constant(0.1),
            epsilon: ScheduleSpec::Constant(0.01),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSettings {
    pub gamma1: f64,
    pub gamma2: f64,
    pub eta: f64,
    pub tau: f64,
    /// Number of irrelevant concepts, K.
    pub irrelevant: usize,
    pub esd_probes: usize,
    pub preserve_probes: usize,
    pub feature_probes: usize,
}

impl Default for LossSettings {
    fn default() -> Self {
        let e = ErasureSettings::default();
        Self {
            gamma1: e.gamma1,
            gamma2: e.gamma2,
            eta: e.eta,
            tau: e.tau,
            irrelevant: e.irrelevant,
            esd_probes: e.esd_probes,
            preserve_probes: e.preserve_probes,
            feature_probes: e.feature_probes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticSettings {
    pub dim: usize,
    /// Eigenvalues of each curvature span `[1, condition]`.
    pub condition: f64,
    /// Distance between the two minimizers.
    pub separation: f64,
}

impl Default for QuadraticSettings {
    fn default() -> Self {
        Self {
            dim: 8,
            condition: 4.0,
            separation: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonconvexSettings {
    pub dim: usize,
    pub spread: f64,
    pub ripple: f64,
}

impl Default for NonconvexSettings {
    fn default() -> Self {
        Self {
            dim: 8,
            spread: 2.0,
            ripple: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoSettings {
    pub frames: usize,
}

impl Default for VideoSettings {
    fn default() -> Self {
        Self { frames: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSettings {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        let p = PretrainConfig::default();
        Self {
            steps: p.steps,
            batch: p.batch,
            learning_rate: p.learning_rate,
        }
    }
}

/// Post-run generation for the flow problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Samples per concept and frame.
    pub samples: usize,
    pub euler_steps: usize,
    /// A sample counts for a concept within this distance of its mode.
    pub radius: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            samples: 200,
            euler_steps: 28,
            radius: 0.5,
        }
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_steps() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub solver: SolverSpec,
    pub problem: ProblemKind,
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub instrumentation: Instrumentation,
    #[serde(default)]
    pub drift: DriftMode,
    #[serde(default)]
    pub schedules: Schedules,
    #[serde(default)]
    pub losses: LossSettings,
    #[serde(default)]
    pub quadratic: QuadraticSettings,
    #[serde(default)]
    pub nonconvex: NonconvexSettings,
    #[serde(default)]
    pub video: VideoSettings,
    #[serde(default)]
    pub pretrain: PretrainSettings,
    #[serde(default)]
    pub eval: EvalSettings,
}

fn invalid(path: &str, msg: impl Into<String>) -> BenchError {
    BenchError::Invalid {
        path: path.into(),
        msg: msg.into(),
    }
}

fn check_schedule(path: &str, s: ScheduleSpec) -> Result<()> {
    s.to_schedule().validate().map_err(|e| invalid(path, e.to_string()))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be > 0, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be >= 0, got {v}")))
    }
}

fn at_least_one(path: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(path, "must be >= 1"))
    }
}

impl RunConfig {
    /// A config with every optional field at its default.
    pub fn new(solver: SolverKind, problem: ProblemKind, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: None,
            solver: SolverSpec(solver),
            problem,
            seed,
            max_steps: default_steps(),
            instrumentation: Instrumentation::default(),
            drift: DriftMode::default(),
            schedules: Schedules::default(),
            losses: LossSettings::default(),
            quadratic: QuadraticSettings::default(),
            nonconvex: NonconvexSettings::default(),
            video: VideoSettings::default(),
            pretrain: PretrainSettings::default(),
            eval: EvalSettings::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| BenchError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(invalid("name", format!("`{name}` is not a usable directory name")));
            }
        }
        at_least_one("max_steps", self.max_steps)?;
        let s = &self.schedules;
        check_schedule("schedules.alpha", s.alpha)?;
        check_schedule("schedules.beta", s.beta)?;
        check_schedule("schedules.epsilon", s.epsilon)?;
        if s.alpha.base().is_nan() || s.alpha.base() <= 0.0 {
            return Err(invalid("schedules.alpha", "step size must be > 0"));
        }
        if s.epsilon.base() < 0.0 {
            return Err(invalid("schedules.epsilon", "tolerance must be >= 0"));
        }
        let l = &self.losses;
        non_negative("losses.gamma1", l.gamma1)?;
        non_negative("losses.gamma2", l.gamma2)?;
        non_negative("losses.eta", l.eta)?;
        positive("losses.tau", l.tau)?;
        if !(1..=3).contains(&l.irrelevant) {
            return Err(invalid(
                "losses.irrelevant",
                format!("must be in 1..=3, got {}", l.irrelevant),
            ));
        }
        at_least_one("losses.esd_probes", l.esd_probes)?;
        at_least_one("losses.preserve_probes", l.preserve_probes)?;
        at_least_one("losses.feature_probes", l.feature_probes)?;
        at_least_one("quadratic.dim", self.quadratic.dim)?;
        if !(self.quadratic.condition >= 1.0 && self.quadratic.condition.is_finite()) {
            return Err(invalid("quadratic.condition", "must be >= 1"));
        }
        non_negative("quadratic.separation", self.quadratic.separation)?;
        at_least_one("nonconvex.dim", self.nonconvex.dim)?;
        non_negative("nonconvex.spread", self.nonconvex.spread)?;
        non_negative("nonconvex.ripple", self.nonconvex.ripple)?;
        at_least_one("video.frames", self.video.frames)?;
        at_least_one("pretrain.steps", self.pretrain.steps)?;
        at_least_one("pretrain.batch", self.pretrain.batch)?;
        positive("pretrain.learning_rate", self.pretrain.learning_rate)?;
        at_least_one("eval.samples", self.eval.samples)?;
        at_least_one("eval.euler_steps", self.eval.euler_steps)?;
        positive("eval.radius", self.eval.radius)?;
        Ok(())
    }

    pub fn solver(&self) -> SolverKind {
        self.solver.0
    }

    /// `name`, or `problem-solver-sSEED` with characters outside
    /// `[A-Za-z0-9._-]` replaced by `_`.
    pub fn run_name(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("{}-{}-s{}", self.problem, self.solver(), self.seed)
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || "._-".contains(c) {
                        c
                    } else {
                        '_'
                    }
                })
                .collect(),
        }
    }

    pub fn surgery(&self) -> SurgeryConfig {
        SurgeryConfig {
            alpha: self.schedules.alpha.to_schedule(),
            beta: self.schedules.beta.to_schedule(),
            epsilon: self.schedules.epsilon.to_schedule(),
            max_steps: self.max_steps,
            drift: self.drift,
            instrumentation: self.instrumentation,
            ..SurgeryConfig::default()
        }
    }

    pub fn erasure_settings(&self) -> ErasureSettings {
        let l = &self.losses;
        ErasureSettings {
            eta: l.eta,
            gamma1: l.gamma1,
            gamma2: l.gamma2,
            tau: l.tau,
            irrelevant: l.irrelevant,
            esd_probes: l.esd_probes,
            preserve_probes: l.preserve_probes,
            feature_probes: l.feature_probes,
            seed: derive_seed(self.seed, 1),
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain.steps,
            batch: self.pretrain.batch,
            learning_rate: self.pretrain.learning_rate,
            seed: derive_seed(self.seed, 0),
            ..PretrainConfig::default()
        }
    }

    /// Seed of the generation noise, shared by the base and tuned models.
    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, 2)
    }

    /// SHA-256 of the canonical TOML form (every default filled in), as hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

/// Independent per-purpose seeds from one run seed.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    use rand::RngCore;
    tolcone_core::SeededRng::new(seed).substream(purpose).next_u64()
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    RunConfig::from_toml_str(&text).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "solver = \"implicit\"\nproblem = \"toyflow-image\"\nseed = 3\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.schedules.alpha, ScheduleSpec::Constant(1e-3));
        assert_eq!(c.schedules.beta, ScheduleSpec::Constant(0.1));
        assert_eq!(c.losses.tau, 0.07);
        assert_eq!(c.losses.eta, 2.0);
        assert_eq!(c.losses.irrelevant, 3);
        assert_eq!(c.losses.gamma1, 0.01);
        assert_eq!(c.losses.gamma2, 1.0);
        assert_eq!(c.max_steps, 1000);
        assert_eq!(c, RunConfig::new(SolverKind::Implicit, ProblemKind::ToyflowImage, 3));
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RunConfig::from_toml_str(&format!("{MINIMAL}alpha_lr = 0.1\n")).unwrap_err();
        assert!(err.to_string().contains("alpha_lr"), "{err}");
        let err = RunConfig::from_toml_str(&format!("{MINIMAL}[losses]\ngama1 = 0.1\n")).unwrap_err();
        assert!(err.to_string().contains("gama1"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = RunConfig::from_toml_str(&format!("{MINIMAL}[schedules]\nepsilon = -0.1\n")).unwrap_err();
        assert!(err.to_string().contains("schedules.epsilon"), "{err}");
        let err = RunConfig::from_toml_str(&format!("{MINIMAL}[losses]\ntau = 0.0\n")).unwrap_err();
        assert!(err.to_string().contains("losses.tau"), "{err}");
        let err = RunConfig::from_toml_str("solver = \"implicit\"\nproblem = \"quadratic\"\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let err = RunConfig::from_toml_str("solver = \"adam\"\nproblem = \"quadratic\"\nseed = 1\n").unwrap_err();
        assert!(err.to_string().contains("adam"), "{err}");
        let err = RunConfig::from_toml_str(&format!("schema_version = 2\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("schema_version"), "{err}");
    }

    #[test]
    fn parse_errors_carry_a_position() {
        let err = RunConfig::from_toml_str("solver = \"implicit\"\nseed = = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn round_trip_and_hash() {
        let mut c = RunConfig::new(SolverKind::Linear { lambda: 0.1 }, ProblemKind::Quadratic, 9);
        c.schedules.epsilon = ScheduleSpec::Decay(Decay {
            base: 0.1,
            exponent: 0.5,
        });
        c.instrumentation = Instrumentation::Full;
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.seed = 10;
        assert_ne!(d.hash(), c.hash());
        // defaults written out or left implicit hash the same
        let minimal = RunConfig::from_toml_str(MINIMAL).unwrap();
        let explicit = RunConfig::from_toml_str(&minimal.to_toml_string()).unwrap();
        assert_eq!(minimal.hash(), explicit.hash());
    }

    #[test]
    fn run_names_are_path_safe() {
        let c = RunConfig::new(SolverKind::Linear { lambda: 0.1 }, ProblemKind::Quadratic, 9);
        assert_eq!(c.run_name(), "quadratic-linear_0.1_-s9");
        let bad = format!("name = \"../x\"\n{MINIMAL}");
        assert!(RunConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_ne!(derive_seed(0, 0), derive_seed(1, 0));
        assert_eq!(derive_seed(5, 2), derive_seed(5, 2));
    }
}
