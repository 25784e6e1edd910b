//! Experiment harness behind the `trajopt` binary: config loading,
//! campaign runs, paired comparisons and artifact files.

pub mod artifacts;
pub mod config;
pub mod problem;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use trajopt::kernels::KernelParams;
use trajopt::optimizer::{
    front_hypervolume, reference_point, run_campaign_from, CampaignResult, InitialDesign, ObjectiveSpec,
    SurrogateKind,
};
use trajopt::problems::Simulator;
use trajopt::seir::{self, FixedBlock, SeirParams};

use crate::config::{CampaignConfig, SCHEMA_VERSION};
use crate::problem::{resolve_truth, Problem, Truth};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration (exit code 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure while running (exit code 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub const EVALS_CSV: &str = "evals.csv";
pub const BEST_K_CSV: &str = "best_k.csv";
pub const PARETO_CSV: &str = "pareto.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const PLOTDATA_CSV: &str = "plotdata_trajectories.csv";
pub const COMPARE_CSV: &str = "compare.csv";
pub const COMPARE_SUMMARY_JSON: &str = "compare_summary.json";

/// Rng of repetition `rep`: draws the truth and the initial design.
fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * rep);
    rng
}

/// Rng of one arm's Thompson sampling in repetition `rep`.
fn arm_rng(seed: u64, rep: u64, arm: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * rep + 1);
    rng.set_word_pos((arm as u128) << 60);
    rng
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    command: &'static str,
    status: &'static str,
    error: Option<String>,
    problem: &'static str,
    surrogate: &'static str,
    config: &'a CampaignConfig,
    times: Vec<f64>,
    output_names: &'a [String],
    truth: &'a Truth,
    n_evals: usize,
    refits: usize,
    best_g: Vec<f64>,
    best_k_ids: &'a [usize],
    pareto_ids: Vec<usize>,
    final_hypervolume: Option<f64>,
    fitted_params: &'a [Vec<KernelParams>],
    wall_clock_seconds: f64,
}

/// Runs one campaign per the config and writes all artifacts to its
/// output directory. Artifacts are written even when the campaign stops
/// early; the error is returned afterwards.
pub fn optimize(cfg: &CampaignConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let problem = Problem::from_config(cfg);
    let names = problem.output_names();
    optimize_with(cfg, &problem, &names)
}

/// [`optimize`] against any simulator with the config's shape.
pub fn optimize_with<S: Simulator + ?Sized>(cfg: &CampaignConfig, sim: &S, output_names: &[String]) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let mut rng = rep_rng(cfg.seed, 0);
    let truth = resolve_truth(cfg, sim, 0, &mut rng).map_err(runtime)?;
    let spec = ObjectiveSpec::new(truth.observed.clone())
        .map_err(|e| CliError::Config(e.to_string()))?
        .with_transform(cfg.transform());
    let settings = cfg.settings(cfg.surrogate);
    let design = InitialDesign::generate(cfg.n_init, sim.dim(), cfg.n_initial_seeds, &mut rng)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let mut ts_rng = arm_rng(cfg.seed, 0, 0);
    let (result, error) = match run_campaign_from(sim, &spec, &settings, &design, &mut ts_rng) {
        Ok(r) => (r, None),
        Err(f) => (f.partial, Some(f.error)),
    };

    let times = sim.times();
    let p = spec.n_objectives();
    artifacts::write_evals(&out.join(EVALS_CSV), &result.records, sim.dim(), p, output_names, times.len())?;
    artifacts::write_best_k(&out.join(BEST_K_CSV), &result.records, &result.best_k, sim.dim(), p)?;
    artifacts::write_plotdata(&out.join(PLOTDATA_CSV), &result.records, &result.best_k, &truth, output_names, &times)?;
    let final_hypervolume = if p == 2 {
        artifacts::write_pareto(&out.join(PARETO_CSV), &result.archive, sim.dim())?;
        Some(front_hypervolume(&result.archive, reference_point(&result.records)))
    } else {
        None
    };
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: "optimize",
        status: if error.is_some() { "failed" } else { "completed" },
        error: error.as_ref().map(|e| e.to_string()),
        problem: cfg.problem.as_str(),
        surrogate: cfg.surrogate.as_str(),
        config: cfg,
        times,
        output_names,
        truth: &truth,
        n_evals: result.records.len(),
        refits: result.refits,
        best_g: best_per_objective(&result, p),
        best_k_ids: &result.best_k,
        pareto_ids: if p == 2 { result.archive.ids() } else { Vec::new() },
        final_hypervolume,
        fitted_params: &result.params,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    artifacts::write_json(&out.join(SUMMARY_JSON), &summary)?;
    match error {
        Some(e) => Err(CliError::Runtime(format!(
            "campaign stopped after {} evaluations: {e}",
            result.records.len()
        ))),
        None => Ok(out.clone()),
    }
}

fn best_per_objective(result: &CampaignResult, p: usize) -> Vec<f64> {
    (0..p)
        .map(|k| result.records.iter().map(|r| r.g[k]).fold(f64::INFINITY, f64::min))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub rep: usize,
    pub truth_seed: Option<u64>,
    pub arms: [SurrogateKind; 2],
    pub best_g: [f64; 2],
}

impl CompareRow {
    pub fn winner(&self) -> &'static str {
        match self.best_g[0].total_cmp(&self.best_g[1]) {
            std::cmp::Ordering::Less => "a",
            std::cmp::Ordering::Greater => "b",
            std::cmp::Ordering::Equal => "tie",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub schema_version: u32,
    pub arms: [SurrogateKind; 2],
    pub repetitions: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// `(wins_a + ties / 2) / repetitions`.
    pub win_rate_a: f64,
    pub median_best_g: [f64; 2],
    pub wall_clock_seconds: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Paired campaigns of the two configured arms over `repetitions`
/// repetitions. Both arms of a repetition share the truth and the initial
/// design; each arm samples from its own rng stream. Only the first
/// objective is compared.
pub fn compare(cfg: &CampaignConfig) -> Result<CompareSummary, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = Problem::from_config(cfg);
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut rows = Vec::with_capacity(cfg.repetitions);
    for rep in 0..cfg.repetitions {
        let mut rng = rep_rng(cfg.seed, rep as u64);
        let truth = resolve_truth(cfg, &problem, rep as u64, &mut rng).map_err(runtime)?;
        let spec = ObjectiveSpec::new(truth.observed.clone())
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_transform(cfg.transform());
        let design = InitialDesign::generate(cfg.n_init, problem.dim(), cfg.n_initial_seeds, &mut rng)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut best_g = [0.0; 2];
        for (arm, kind) in cfg.compare_arms.iter().enumerate() {
            let mut ts_rng = arm_rng(cfg.seed, rep as u64, arm as u64);
            let res = run_campaign_from(&problem, &spec, &cfg.settings(*kind), &design, &mut ts_rng)
                .map_err(|f| CliError::Runtime(format!("repetition {rep}, arm {}: {f}", kind.as_str())))?;
            best_g[arm] = res.best_g();
        }
        rows.push(CompareRow {
            rep,
            truth_seed: truth.seed,
            arms: cfg.compare_arms,
            best_g,
        });
    }
    artifacts::write_compare(&out.join(COMPARE_CSV), &rows)?;
    let count = |w: &str| rows.iter().filter(|r| r.winner() == w).count();
    let (wins_a, wins_b, ties) = (count("a"), count("b"), count("tie"));
    let mut ga: Vec<f64> = rows.iter().map(|r| r.best_g[0]).collect();
    let mut gb: Vec<f64> = rows.iter().map(|r| r.best_g[1]).collect();
    let summary = CompareSummary {
        schema_version: SCHEMA_VERSION,
        arms: cfg.compare_arms,
        repetitions: rows.len(),
        wins_a,
        wins_b,
        ties,
        win_rate_a: (wins_a as f64 + ties as f64 / 2.0) / rows.len() as f64,
        median_best_g: [median(&mut ga), median(&mut gb)],
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    artifacts::write_json(&out.join(COMPARE_SUMMARY_JSON), &summary)?;
    Ok(summary)
}

/// Arguments of the `simulate` command, in physical units.
#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub beta: f64,
    pub kappa_a: f64,
    pub kappa_s: f64,
    pub seed: u64,
    pub days: Vec<u32>,
    pub horizon: Option<u32>,
    pub fixed: FixedBlock,
}

/// One SEIR trajectory as CSV:
/// `seed, beta, kappa_a, kappa_s, day, cum_hosp, cum_death`.
pub fn simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let params = SeirParams {
        beta: args.beta,
        kappa_a: args.kappa_a,
        kappa_s: args.kappa_s,
        fixed: args.fixed.clone(),
    };
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let horizon = args
        .horizon
        .unwrap_or_else(|| args.days.iter().copied().max().unwrap_or(0));
    let tr = seir::simulate(&params, args.seed, horizon, &args.days).map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["seed", "beta", "kappa_a", "kappa_s", "day", "cum_hosp", "cum_death"])
        .map_err(io)?;
    for ((day, h), d) in tr.times.iter().zip(&tr.hosp).zip(&tr.death) {
        w.write_record([
            args.seed.to_string(),
            args.beta.to_string(),
            args.kappa_a.to_string(),
            args.kappa_s.to_string(),
            day.to_string(),
            h.to_string(),
            d.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(runtime)
}
