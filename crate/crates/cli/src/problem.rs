use rand::Rng;
use trajopt::problems::{SeirProblem, Simulator, SyntheticCrngp, Toy1d, TRUTH_SEED_BASE};
use trajopt::Result;

use crate::config::{CampaignConfig, ProblemKind, TruthSpec};

/// The simulator selected by a config.
pub enum Problem {
    Seir(SeirProblem),
    Toy(Toy1d),
    Synthetic(SyntheticCrngp),
}

impl Problem {
    pub fn from_config(cfg: &CampaignConfig) -> Self {
        match cfg.problem {
            ProblemKind::SeirSingle | ProblemKind::SeirBiobjective => Problem::Seir(SeirProblem {
                fixed: cfg.seir.fixed.clone(),
                ranges: cfg.seir.ranges.clone(),
                horizon_days: cfg.seir.horizon_days,
                output_days: cfg.seir.output_days.clone(),
            }),
            ProblemKind::Toy1d => Problem::Toy(Toy1d::default()),
            ProblemKind::SyntheticCrngp => {
                let s = &cfg.synthetic;
                Problem::Synthetic(SyntheticCrngp::new(s.dim, s.n_outputs, s.rho, s.problem_seed))
            }
        }
    }

    /// Column names of the output series.
    pub fn output_names(&self) -> Vec<String> {
        match self {
            Problem::Seir(_) => vec!["cum_hosp".into(), "cum_death".into()],
            Problem::Toy(_) => vec!["y".into()],
            Problem::Synthetic(s) => (1..=s.n_outputs).map(|k| format!("y{k}")).collect(),
        }
    }
}

/// Input dimension and number of output times implied by a config.
pub fn shape(cfg: &CampaignConfig) -> (usize, usize) {
    let p = Problem::from_config(cfg);
    (p.dim(), p.times().len())
}

impl Simulator for Problem {
    fn dim(&self) -> usize {
        match self {
            Problem::Seir(p) => p.dim(),
            Problem::Toy(p) => p.dim(),
            Problem::Synthetic(p) => p.dim(),
        }
    }

    fn times(&self) -> Vec<f64> {
        match self {
            Problem::Seir(p) => p.times(),
            Problem::Toy(p) => p.times(),
            Problem::Synthetic(p) => p.times(),
        }
    }

    fn n_outputs(&self) -> usize {
        match self {
            Problem::Seir(p) => p.n_outputs(),
            Problem::Toy(p) => p.n_outputs(),
            Problem::Synthetic(p) => p.n_outputs(),
        }
    }

    fn simulate(&self, x: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        match self {
            Problem::Seir(p) => p.simulate(x, seed),
            Problem::Toy(p) => p.simulate(x, seed),
            Problem::Synthetic(p) => p.simulate(x, seed),
        }
    }
}

/// Resolved ground truth of one repetition.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Truth {
    pub x: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub observed: Vec<Vec<f64>>,
}

/// Observations for repetition `rep`: as configured, or a uniform input
/// run under the reserved seed label `TRUTH_SEED_BASE + rep`.
pub fn resolve_truth<S: Simulator + ?Sized, R: Rng + ?Sized>(
    cfg: &CampaignConfig,
    problem: &S,
    rep: u64,
    rng: &mut R,
) -> Result<Truth> {
    let n_obj = cfg.n_objectives();
    let (x, seed) = match &cfg.truth {
        Some(TruthSpec::Observed { observed }) => {
            return Ok(Truth {
                x: None,
                seed: None,
                observed: observed.clone(),
            })
        }
        Some(TruthSpec::Run { x, seed }) => (x.clone(), *seed),
        None => (
            (0..problem.dim()).map(|_| rng.random()).collect(),
            TRUTH_SEED_BASE + rep,
        ),
    };
    let mut observed = problem.simulate(&x, seed)?;
    observed.truncate(n_obj);
    Ok(Truth {
        x: Some(x),
        seed: Some(seed),
        observed,
    })
}
