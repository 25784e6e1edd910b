use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajopt::gp::FitOptions;
use trajopt::kernels::KernelFamily;
use trajopt::optimizer::{CampaignSettings, OutputTransform, SurrogateKind};
use trajopt::seir::{FixedBlock, ParamRanges};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    SeirSingle,
    SeirBiobjective,
    #[serde(rename = "toy_1d")]
    Toy1d,
    SyntheticCrngp,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::SeirSingle => "seir_single",
            ProblemKind::SeirBiobjective => "seir_biobjective",
            ProblemKind::Toy1d => "toy_1d",
            ProblemKind::SyntheticCrngp => "synthetic_crngp",
        }
    }
}

/// Ground truth: observed vectors given directly, or a simulator run.
/// Without it, each repetition draws a uniform input and uses a reserved
/// seed label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSpec {
    Observed { observed: Vec<Vec<f64>> },
    Run { x: Vec<f64>, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeirOptions {
    pub fixed: FixedBlock,
    pub ranges: ParamRanges,
    pub horizon_days: u32,
    pub output_days: Vec<u32>,
}

impl Default for SeirOptions {
    fn default() -> Self {
        SeirOptions {
            fixed: FixedBlock::default(),
            ranges: ParamRanges::default(),
            horizon_days: trajopt::seir::DEFAULT_HORIZON,
            output_days: trajopt::seir::DEFAULT_OUTPUT_DAYS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticOptions {
    pub dim: usize,
    pub n_outputs: usize,
    pub rho: f64,
    pub problem_seed: u64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            dim: 2,
            n_outputs: 1,
            rho: 0.8,
            problem_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schema_version: u32,
    pub problem: ProblemKind,
    #[serde(default = "defaults::n_init")]
    pub n_init: usize,
    #[serde(default = "defaults::n_max")]
    pub n_max: usize,
    #[serde(default = "defaults::n_initial_seeds")]
    pub n_initial_seeds: usize,
    #[serde(default = "defaults::one")]
    pub batch_size: usize,
    #[serde(default = "defaults::grid_size")]
    pub grid_size: usize,
    #[serde(default = "defaults::refit_interval")]
    pub refit_interval: usize,
    #[serde(default = "defaults::surrogate")]
    pub surrogate: SurrogateKind,
    #[serde(default)]
    pub family: KernelFamily,
    #[serde(default = "defaults::cut_points")]
    pub cut_points: Vec<f64>,
    #[serde(default)]
    pub coupled_cells: bool,
    /// Scale the surrogate is fitted on; square root for the SEIR problems
    /// and identity otherwise when absent.
    #[serde(default)]
    pub transform: Option<OutputTransform>,
    #[serde(default = "defaults::n_restarts")]
    pub fit_restarts: usize,
    #[serde(default = "defaults::refit_restarts")]
    pub refit_restarts: usize,
    #[serde(default = "defaults::k_report")]
    pub k_report: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub truth: Option<TruthSpec>,
    #[serde(default = "defaults::repetitions")]
    pub repetitions: usize,
    /// Surrogates of the two `compare` arms.
    #[serde(default = "defaults::compare_arms")]
    pub compare_arms: [SurrogateKind; 2],
    #[serde(default)]
    pub seir: SeirOptions,
    #[serde(default)]
    pub synthetic: SyntheticOptions,
}

mod defaults {
    use super::*;

    pub fn n_init() -> usize {
        50
    }
    pub fn n_max() -> usize {
        200
    }
    pub fn n_initial_seeds() -> usize {
        5
    }
    pub fn one() -> usize {
        1
    }
    pub fn grid_size() -> usize {
        256
    }
    pub fn refit_interval() -> usize {
        10
    }
    pub fn surrogate() -> SurrogateKind {
        SurrogateKind::Crngp
    }
    pub fn cut_points() -> Vec<f64> {
        vec![0.5]
    }
    pub fn n_restarts() -> usize {
        FitOptions::default().n_restarts
    }
    pub fn refit_restarts() -> usize {
        2
    }
    pub fn k_report() -> usize {
        50
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn repetitions() -> usize {
        20
    }
    pub fn compare_arms() -> [SurrogateKind; 2] {
        [SurrogateKind::Crngp, SurrogateKind::MeanGpBaseline]
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub budget_init: Option<usize>,
    pub budget_max: Option<usize>,
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out_dir = p.clone();
        }
        if let Some(n) = o.budget_init {
            self.n_init = n;
        }
        if let Some(n) = o.budget_max {
            self.n_max = n;
        }
    }

    pub fn n_objectives(&self) -> usize {
        match self.problem {
            ProblemKind::SeirBiobjective => 2,
            ProblemKind::SyntheticCrngp => self.synthetic.n_outputs,
            _ => 1,
        }
    }

    pub fn transform(&self) -> OutputTransform {
        self.transform.unwrap_or(match self.problem {
            ProblemKind::SeirSingle | ProblemKind::SeirBiobjective => OutputTransform::Sqrt,
            _ => OutputTransform::Identity,
        })
    }

    pub fn settings(&self, surrogate: SurrogateKind) -> CampaignSettings {
        CampaignSettings {
            n_init: self.n_init,
            n_max: self.n_max,
            n_initial_seeds: self.n_initial_seeds,
            batch_size: self.batch_size,
            grid_size: self.grid_size,
            refit_interval: self.refit_interval,
            surrogate,
            family: self.family,
            cut_points: self.cut_points.clone(),
            coupled_cells: self.coupled_cells,
            fit: FitOptions {
                n_restarts: self.fit_restarts,
                ..FitOptions::default()
            },
            refit_restarts: self.refit_restarts,
            k_report: self.k_report,
        }
    }

    /// Checks every field; messages name the offending fields.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.n_initial_seeds == 0 {
            return bad("n_initial_seeds must be at least 1".into());
        }
        if self.n_init < 2 * self.n_initial_seeds {
            return bad(format!(
                "n_init ({}) must be at least 2 * n_initial_seeds ({})",
                self.n_init, self.n_initial_seeds
            ));
        }
        if self.n_max < self.n_init {
            return bad(format!("n_max ({}) must be at least n_init ({})", self.n_max, self.n_init));
        }
        if self.cut_points.iter().any(|c| !(*c > 0.0 && *c < 1.0)) || self.cut_points.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("cut_points {:?} must be strictly increasing inside (0, 1)", self.cut_points));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("grid_size", self.grid_size),
            ("refit_interval", self.refit_interval),
            ("fit_restarts", self.fit_restarts),
            ("refit_restarts", self.refit_restarts),
            ("repetitions", self.repetitions),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.batch_size > self.grid_size {
            return bad(format!(
                "batch_size ({}) cannot exceed grid_size ({})",
                self.batch_size, self.grid_size
            ));
        }
        match self.problem {
            ProblemKind::SeirSingle | ProblemKind::SeirBiobjective => {
                let s = &self.seir;
                if s.output_days.is_empty() || s.output_days.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("seir.output_days must be non-empty and strictly increasing".into());
                }
                if s.output_days.iter().any(|&d| d == 0 || d > s.horizon_days) {
                    return bad(format!("seir.output_days must lie in 1..={}", s.horizon_days));
                }
                s.ranges
                    .validate()
                    .map_err(|e| CliError::Config(format!("seir.ranges: {e}")))?;
                trajopt::seir::SeirParams {
                    beta: s.ranges.beta.0,
                    kappa_a: s.ranges.kappa_a.0,
                    kappa_s: s.ranges.kappa_s.0,
                    fixed: s.fixed.clone(),
                }
                .validate()
                .map_err(|e| CliError::Config(format!("seir.fixed: {e}")))?;
            }
            ProblemKind::SyntheticCrngp => {
                let s = &self.synthetic;
                if s.dim == 0 || !(1..=2).contains(&s.n_outputs) {
                    return bad("synthetic.dim must be positive and synthetic.n_outputs 1 or 2".into());
                }
                if !(0.0..=1.0).contains(&s.rho) {
                    return bad(format!("synthetic.rho ({}) must lie in [0, 1]", s.rho));
                }
            }
            ProblemKind::Toy1d => {}
        }
        let (dim, n_times) = crate::problem::shape(self);
        match &self.truth {
            Some(TruthSpec::Run { x, .. }) => {
                if x.len() != dim || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad(format!("truth.x must have {dim} entries in [0, 1]"));
                }
            }
            Some(TruthSpec::Observed { observed }) => {
                if observed.len() != self.n_objectives() || observed.iter().any(|o| o.len() != n_times) {
                    return bad(format!(
                        "truth.observed must hold {} vectors of {n_times} values",
                        self.n_objectives()
                    ));
                }
                if observed.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("truth.observed values must be finite".into());
                }
            }
            None => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> CampaignConfig {
        CampaignConfig::from_json(r#"{"schema_version": 1, "problem": "toy_1d"}"#).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = base();
        assert_eq!((c.n_init, c.n_max, c.n_initial_seeds), (50, 200, 5));
        assert_eq!(c.repetitions, 20);
        assert_eq!(c.transform(), OutputTransform::Identity);
        c.validate().unwrap();
    }

    #[test]
    fn budget_errors_name_fields() {
        let mut c = base();
        c.n_max = 10;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("n_max") && msg.contains("n_init"), "{msg}");
        let mut c = base();
        c.n_init = 8;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("n_initial_seeds"), "{msg}");
    }

    #[test]
    fn cut_points_must_increase() {
        let mut c = base();
        c.cut_points = vec![0.6, 0.4];
        assert!(c.validate().unwrap_err().to_string().contains("cut_points"));
        c.cut_points = vec![1.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn parse_errors_carry_positions() {
        let msg = CampaignConfig::from_json("{\n  \"schema_version\": 1,\n  \"problem\": \"nope\"\n}")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let msg = CampaignConfig::from_json(r#"{"schema_version": 1, "problem": "toy_1d", "n_maxx": 3}"#)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("n_maxx"), "{msg}");
    }

    #[test]
    fn truth_variants() {
        let c = CampaignConfig::from_json(
            r#"{"schema_version": 1, "problem": "seir_single", "truth": {"x": [0.5, 0.5, 0.5], "seed": 7}}"#,
        )
        .unwrap();
        assert_eq!(c.truth, Some(TruthSpec::Run { x: vec![0.5; 3], seed: 7 }));
        c.validate().unwrap();
        let c = CampaignConfig::from_json(
            r#"{"schema_version": 1, "problem": "toy_1d", "truth": {"observed": [[0, 0, 0]]}}"#,
        )
        .unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("truth.observed"));
    }

    #[test]
    fn overrides_apply() {
        let mut c = base();
        c.apply(&Overrides {
            seed: Some(9),
            out: Some("x".into()),
            budget_init: Some(12),
            budget_max: Some(20),
        });
        assert_eq!((c.seed, c.n_init, c.n_max), (9, 12, 20));
        assert_eq!(c.out_dir, PathBuf::from("x"));
    }
}
