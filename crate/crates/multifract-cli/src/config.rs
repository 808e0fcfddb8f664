//! Run configuration: a single TOML document driving every subcommand.
//!
//! The schema is a bag of optional sections; each subcommand reads the
//! sections it needs and ignores the rest, so one file can drive a whole
//! pipeline (`construct` → `kinks` → `tau`). Unknown keys are rejected so
//! typos fail loudly instead of silently running defaults. All validation
//! happens before any computation starts.
//!
//! ```toml
//! [sequence]
//! kind = "constant"
//! p = 0.3
//!
//! [qgrid]
//! min = -2.0
//! max = 3.0
//! step = 0.05
//!
//! [depths]
//! list = [10, 100, 1000]
//! tail_fraction = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use multifract::measure::{BlockRule, WeightSequence, DEFAULT_ENUMERATION_CAP};
use multifract::spectrum::{q_grid, DepthSchedule, TauCurve};
use multifract::transitions::{ConstructionParams, SupTau};

use crate::AppError;

/// Everything a run can be told. Sections are independent; a command errors
/// only when a section it actually needs is missing or inconsistent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The measure under analysis, in the library's serialisation schema.
    pub sequence: Option<WeightSequence>,
    pub qgrid: GridSpec,
    pub alphagrid: AlphaGridSpec,
    pub depths: DepthSpec,
    pub construct: Option<ConstructSpec>,
    pub kinks: KinksSpec,
    pub sample: SampleSpec,
    pub coarse: CoarseSpec,
    pub gibbs: GibbsSpec,
    pub output: OutputSpec,
    pub tolerances: Tolerances,
    pub enumeration: EnumerationSpec,
    pub verify: VerifySpec,
}

impl RunConfig {
    /// Parse and validate a TOML file.
    pub fn load(path: &Path) -> Result<RunConfig, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Io(format!("reading {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("parsing {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks that serde cannot express.
    pub fn validate(&self) -> Result<(), AppError> {
        if let Some(seq) = &self.sequence {
            seq.validate()
                .map_err(|e| AppError::Config(format!("[sequence] {e}")))?;
        }
        self.qgrid.build().map(|_| ())?;
        self.alphagrid.build().map(|_| ())?;
        self.depths.validate()?;
        self.tolerances.validate()?;
        if !(self.sample.count > 0) {
            return Err(AppError::Config("[sample] count must be positive".into()));
        }
        if self.coarse.bins == 0 {
            return Err(AppError::Config("[coarse] bins must be positive".into()));
        }
        Ok(())
    }

    /// The sequence, or a uniform config error telling the user where to
    /// put one.
    pub fn require_sequence(&self) -> Result<&WeightSequence, AppError> {
        self.sequence.as_ref().ok_or_else(|| {
            AppError::Config(
                "no weight sequence configured: add a [sequence] table or pass --p".into(),
            )
        })
    }
}

/// Arithmetic grid of moments `q`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min: -2.0,
            max: 3.0,
            step: 0.05,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<f64>, AppError> {
        q_grid(self.min, self.max, self.step)
            .map_err(|e| AppError::Config(format!("[qgrid] {e}")))
    }
}

/// Arithmetic grid of exponents `α` for the Legendre transform.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaGridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for AlphaGridSpec {
    fn default() -> Self {
        AlphaGridSpec {
            min: 0.05,
            max: 1.95,
            step: 0.01,
        }
    }
}

impl AlphaGridSpec {
    pub fn build(&self) -> Result<Vec<f64>, AppError> {
        q_grid(self.min, self.max, self.step)
            .map_err(|e| AppError::Config(format!("[alphagrid] {e}")))
    }
}

/// Depth schedule: an explicit list, or the block ends of a rule, or (when
/// neither is given) a doubling default `10, 20, …, 10240`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthSpec {
    pub list: Option<Vec<u64>>,
    pub rule: Option<BlockRule>,
    pub max_depth: Option<u64>,
    /// Fraction of the schedule treated as the tail by limit estimators.
    pub tail_fraction: f64,
}

impl Default for DepthSpec {
    fn default() -> Self {
        DepthSpec {
            list: None,
            rule: None,
            max_depth: None,
            tail_fraction: 0.5,
        }
    }
}

impl DepthSpec {
    pub fn schedule(&self) -> Result<DepthSchedule, AppError> {
        let wrap = |e: multifract::Error| AppError::Config(format!("[depths] {e}"));
        if let Some(list) = &self.list {
            return DepthSchedule::new(list.clone()).map_err(wrap);
        }
        if let Some(rule) = &self.rule {
            let max = self.max_depth.ok_or_else(|| {
                AppError::Config("[depths] a rule needs max_depth alongside it".into())
            })?;
            return DepthSchedule::block_ends(rule, max).map_err(wrap);
        }
        DepthSchedule::geometric(10, 2.0, 11).map_err(wrap)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(AppError::Config(format!(
                "[depths] tail_fraction must lie in (0, 1], got {}",
                self.tail_fraction
            )));
        }
        self.schedule().map(|_| ())
    }
}

/// Inputs for the staged synthesis. Optional knobs fall back to the
/// library defaults rather than restating them here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructSpec {
    /// Nested target pairs `[a2, b2, a3, b3, …]`.
    pub targets: Vec<f64>,
    /// Number of curves; defaults to one more than the number of pairs.
    pub stages: Option<usize>,
    pub p_low: Option<f64>,
    pub p_high: Option<f64>,
    pub p5_fraction: Option<f64>,
    pub shrink_budget: Option<u32>,
    pub max_stages: Option<usize>,
    /// Splicing rule for the realised measures.
    #[serde(default = "default_block_rule")]
    pub rule: BlockRule,
}

fn default_block_rule() -> BlockRule {
    BlockRule::default_squared()
}

impl ConstructSpec {
    /// Targets from the command line, everything else left to defaults.
    pub fn from_targets(targets: Vec<f64>) -> Self {
        ConstructSpec {
            targets,
            stages: None,
            p_low: None,
            p_high: None,
            p5_fraction: None,
            shrink_budget: None,
            max_stages: None,
            rule: default_block_rule(),
        }
    }

    pub fn params(&self) -> ConstructionParams {
        let stages = self.stages.unwrap_or(self.targets.len() / 2 + 1);
        let mut params = ConstructionParams::new(self.targets.clone(), stages);
        if let Some(v) = self.p_low {
            params.p_low = v;
        }
        if let Some(v) = self.p_high {
            params.p_high = v;
        }
        if let Some(v) = self.p5_fraction {
            params.p5_fraction = v;
        }
        if let Some(v) = self.shrink_budget {
            params.shrink_budget = v;
        }
        if let Some(v) = self.max_stages {
            params.max_stages = v;
        }
        params
    }
}

/// Where the `kinks` command finds its upper envelope: a saved construction
/// state, or curves given inline as lists of `[lambda, p]` pairs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinksSpec {
    pub state: Option<PathBuf>,
    pub curves: Option<Vec<Vec<(f64, f64)>>>,
}

impl KinksSpec {
    pub fn build_sup(&self, state_override: Option<&Path>) -> Result<SupTau, AppError> {
        if let Some(path) = state_override.or(self.state.as_deref()) {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Io(format!("reading {}: {e}", path.display())))?;
            let state: multifract::transitions::ConstructionState =
                serde_json::from_str(&text).map_err(|e| {
                    AppError::Config(format!("parsing state {}: {e}", path.display()))
                })?;
            return Ok(state.sup());
        }
        if let Some(curve_specs) = &self.curves {
            let curves = curve_specs
                .iter()
                .map(|c| TauCurve::new(c.clone()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| AppError::Config(format!("[kinks] curves: {e}")))?;
            return SupTau::new(curves).map_err(|e| AppError::Config(format!("[kinks] {e}")));
        }
        Err(AppError::Config(
            "kinks needs a construction state (--state or [kinks] state) \
             or inline [kinks] curves"
                .into(),
        ))
    }
}

/// Monte Carlo sampling of measure-typical paths.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSpec {
    pub seed: u64,
    pub count: usize,
    pub depth: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            seed: 17,
            count: 1000,
            depth: 10_000,
        }
    }
}

/// Exhaustive coarse-grained spectrum estimation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseSpec {
    pub depth: u32,
    pub bins: usize,
}

impl Default for CoarseSpec {
    fn default() -> Self {
        CoarseSpec { depth: 12, bins: 64 }
    }
}

/// Moment parameters for the `gibbs` command.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSpec {
    /// Reweighting moment.
    pub q: f64,
    /// Outer moment for the composition-law check.
    pub s: f64,
    /// Enumeration depth for the refinement check.
    pub depth: u32,
}

impl Default for GibbsSpec {
    fn default() -> Self {
        GibbsSpec {
            q: 2.0,
            s: 1.5,
            depth: 8,
        }
    }
}

/// Output destination; `None` writes to stdout.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
}

/// Every numeric pass/fail threshold in one place, overridable per run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Averaged moment exponents vs brute-force cylinder sums.
    pub oracle: f64,
    /// Total-mass defect of an exhaustive enumeration.
    pub conservation: f64,
    /// Analytic derivatives vs central finite differences.
    pub finite_difference: f64,
    /// Reweighted product masses vs normalised powers.
    pub consistency: f64,
    /// Scaling-curve composition law.
    pub composition: f64,
    /// Interpolation and matching residuals.
    pub residual: f64,
    /// Corner locations recovered by the kink detector.
    pub kink_location: f64,
    /// Exact algebraic identities (fixed points, semigroup law).
    pub identity: f64,
    /// Allowed excess of coarse-spectrum values over the Legendre curve.
    pub coarse_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle: 1e-9,
            conservation: 1e-12,
            finite_difference: 1e-6,
            consistency: 1e-12,
            composition: 1e-10,
            residual: 1e-10,
            kink_location: 1e-6,
            identity: 1e-12,
            coarse_slack: 0.15,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), AppError> {
        let all = [
            ("oracle", self.oracle),
            ("conservation", self.conservation),
            ("finite_difference", self.finite_difference),
            ("consistency", self.consistency),
            ("composition", self.composition),
            ("residual", self.residual),
            ("kink_location", self.kink_location),
            ("identity", self.identity),
            ("coarse_slack", self.coarse_slack),
        ];
        for (name, value) in all {
            if !(value.is_finite() && value > 0.0) {
                return Err(AppError::Config(format!(
                    "[tolerances] {name} must be a positive number, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Budget cap on exhaustive enumeration depth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnumerationSpec {
    pub cap: u32,
}

impl Default for EnumerationSpec {
    fn default() -> Self {
        EnumerationSpec {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Controls for the `verify` suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Seed for every randomised check; fixed default keeps runs identical.
    pub seed: u64,
    /// Self-test hook: replace one identity implementation with a
    /// deliberately wrong one (`tau`, `curvature`, or `gibbs`) and confirm
    /// the suite notices.
    pub perturb: Option<String>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            seed: 2718,
            perturb: None,
        }
    }
}
