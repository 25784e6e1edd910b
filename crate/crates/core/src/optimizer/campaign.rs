use rand::Rng;
use serde::{Deserialize, Serialize};

use super::objective::{EvalRecord, ObjectiveSpec, Phase};
use super::pareto::{hypervolume_2d, ParetoArchive};
use super::thompson::{Candidate, Surrogate};
use crate::crngp::{cell_rows, Axis, LocalCrngp, Partition, DEFAULT_EPSILON};
use crate::doe::{assign_seeds, latin_hypercube};
use crate::error::{Error, Result};
use crate::gp::{fit_with, Dataset, FitOptions};
use crate::kernels::{AugmentedInput, KernelFamily, KernelParams, KernelSpec};
use crate::problems::Simulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Crngp,
    LocalCrngp,
    /// Seed-blind GP of the mean behavior.
    MeanGpBaseline,
}

impl SurrogateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SurrogateKind::Crngp => "crngp",
            SurrogateKind::LocalCrngp => "local_crngp",
            SurrogateKind::MeanGpBaseline => "mean_gp_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSettings {
    pub n_init: usize,
    pub n_max: usize,
    pub n_initial_seeds: usize,
    pub batch_size: usize,
    pub grid_size: usize,
    /// Hyperparameters are re-estimated after this many acquisitions;
    /// in between the surrogate is only conditioned on new runs.
    pub refit_interval: usize,
    pub surrogate: SurrogateKind,
    pub family: KernelFamily,
    /// Time-axis cut points of the local surrogate.
    pub cut_points: Vec<f64>,
    /// Couple per-cell draws of the local surrogate.
    pub coupled_cells: bool,
    /// Options of the initial fit.
    pub fit: FitOptions,
    /// Restarts of the warm-started periodic refits.
    pub refit_restarts: usize,
    pub k_report: usize,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        CampaignSettings {
            n_init: 50,
            n_max: 200,
            n_initial_seeds: 5,
            batch_size: 1,
            grid_size: 256,
            refit_interval: 10,
            surrogate: SurrogateKind::Crngp,
            family: KernelFamily::Gaussian,
            cut_points: vec![0.5],
            coupled_cells: false,
            fit: FitOptions::default(),
            refit_restarts: 2,
            k_report: 50,
        }
    }
}

impl CampaignSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_initial_seeds == 0 {
            return Err(Error::invalid("n_initial_seeds must be at least 1"));
        }
        if self.n_init < 2 * self.n_initial_seeds {
            return Err(Error::invalid(format!(
                "n_init ({}) must be at least twice n_initial_seeds ({})",
                self.n_init, self.n_initial_seeds
            )));
        }
        if self.n_max < self.n_init {
            return Err(Error::invalid(format!(
                "n_max ({}) must be at least n_init ({})",
                self.n_max, self.n_init
            )));
        }
        if self.batch_size == 0 || self.grid_size == 0 || self.refit_interval == 0 {
            return Err(Error::invalid("batch_size, grid_size and refit_interval must be positive"));
        }
        if self.batch_size > self.grid_size {
            return Err(Error::invalid("batch_size cannot exceed grid_size"));
        }
        if self.refit_restarts == 0 {
            return Err(Error::invalid("refit_restarts must be at least 1"));
        }
        if self.surrogate == SurrogateKind::LocalCrngp {
            Partition::new(Axis::Time, self.cut_points.clone())?;
        }
        self.fit.bounds.validate()
    }

    fn kernel_spec(&self) -> KernelSpec {
        match self.surrogate {
            SurrogateKind::MeanGpBaseline => KernelSpec::pooled(self.family),
            _ => KernelSpec::crn(self.family),
        }
    }
}

/// Initial design: points in the unit cube and their seed labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDesign {
    pub points: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

impl InitialDesign {
    pub fn generate<R: Rng + ?Sized>(n: usize, dim: usize, n_seeds: usize, rng: &mut R) -> Result<Self> {
        let points = latin_hypercube(n, dim, rng);
        let seeds = assign_seeds(n, n_seeds, rng)?;
        Ok(InitialDesign { points, seeds })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CampaignResult {
    pub records: Vec<EvalRecord>,
    pub archive: ParetoArchive,
    /// Record ids of the best `k_report` trajectories, best first.
    pub best_k: Vec<usize>,
    /// Running minimum of the first objective after each evaluation.
    pub best_g_trace: Vec<f64>,
    /// Archive hypervolume after each evaluation (two objectives only).
    pub hypervolume_trace: Vec<f64>,
    pub refits: usize,
    /// Final hyperparameters per objective (one entry per cell).
    pub params: Vec<Vec<KernelParams>>,
}

impl CampaignResult {
    pub fn best_g(&self) -> f64 {
        self.best_g_trace.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// A campaign that stopped early; `partial` holds everything evaluated.
#[derive(Debug)]
pub struct CampaignFailure {
    pub partial: CampaignResult,
    pub error: Error,
}

impl std::fmt::Display for CampaignFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "campaign stopped after {} evaluations: {}",
            self.partial.records.len(),
            self.error
        )
    }
}

impl std::error::Error for CampaignFailure {}

/// Reference point `1.1 * max g` per objective.
pub fn reference_point(records: &[EvalRecord]) -> (f64, f64) {
    let max = |k: usize| records.iter().map(|r| r.g[k]).fold(0.0, f64::max);
    let r = |m: f64| if m > 0.0 { 1.1 * m } else { 1.0 };
    (r(max(0)), r(max(1)))
}

/// Hypervolume of the archive front against `reference`, ignoring points
/// outside it.
pub fn front_hypervolume(archive: &ParetoArchive, reference: (f64, f64)) -> f64 {
    let inside: Vec<(f64, f64)> = archive
        .front()
        .into_iter()
        .filter(|p| p.0 < reference.0 && p.1 < reference.1)
        .collect();
    hypervolume_2d(&inside, reference).unwrap_or(0.0)
}

/// Ids of the `k` best records: by `g` for one objective, by the sum of
/// `g` normalized by each objective's maximum for two. Ties by id.
pub fn best_k(records: &[EvalRecord], k: usize) -> Vec<usize> {
    let p = records.first().map_or(1, |r| r.g.len());
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let m = records.iter().map(|r| r.g[j]).fold(0.0, f64::max);
            if p == 1 || m <= 0.0 {
                1.0
            } else {
                m
            }
        })
        .collect();
    let score = |r: &EvalRecord| r.g.iter().zip(&scale).map(|(g, s)| g / s).sum::<f64>();
    let mut order: Vec<&EvalRecord> = records.iter().collect();
    order.sort_by(|a, b| score(a).total_cmp(&score(b)).then(a.id.cmp(&b.id)));
    order.into_iter().take(k).map(|r| r.id).collect()
}

struct Tracker<'a> {
    spec: &'a ObjectiveSpec,
    result: CampaignResult,
}

impl Tracker<'_> {
    fn evaluate<S: Simulator + ?Sized>(
        &mut self,
        sim: &S,
        x: Vec<f64>,
        seed: u64,
        phase: Phase,
        iteration: usize,
    ) -> Result<()> {
        let outputs = sim.simulate(&x, seed)?;
        let g = self.spec.evaluate(&outputs)?;
        let rec = EvalRecord {
            id: self.result.records.len(),
            x,
            seed,
            outputs,
            g,
            phase,
            iteration,
        };
        let r = &mut self.result;
        let best = r.best_g_trace.last().copied().unwrap_or(f64::INFINITY).min(rec.g[0]);
        r.best_g_trace.push(best);
        r.archive.insert(rec.clone());
        r.records.push(rec);
        if self.spec.n_objectives() == 2 {
            let reference = reference_point(&r.records);
            r.hypervolume_trace.push(front_hypervolume(&r.archive, reference));
        }
        Ok(())
    }

    fn finish(mut self, k: usize) -> CampaignResult {
        self.result.best_k = best_k(&self.result.records, k);
        self.result
    }
}

/// Surrogate training rows for objective `k`: one per record and output time.
fn training_rows(records: &[EvalRecord], times: &[f64], spec: &ObjectiveSpec, k: usize) -> (Vec<AugmentedInput>, Vec<f64>) {
    let mut inputs = Vec::with_capacity(records.len() * times.len());
    let mut outputs = Vec::with_capacity(records.len() * times.len());
    for r in records {
        for (j, &t) in times.iter().enumerate() {
            inputs.push(AugmentedInput::new(r.x.clone(), t, r.seed));
            outputs.push(spec.transform.forward(r.outputs[k][j]));
        }
    }
    (inputs, outputs)
}

fn surrogate_params(s: &Surrogate) -> Vec<KernelParams> {
    match s {
        Surrogate::Global(m) => vec![m.params().clone()],
        Surrogate::Local(m) => m.models.iter().map(|c| c.params().clone()).collect(),
    }
}

fn fit_surrogates<R: Rng + ?Sized>(
    records: &[EvalRecord],
    times: &[f64],
    spec: &ObjectiveSpec,
    settings: &CampaignSettings,
    previous: Option<&[Surrogate]>,
    rng: &mut R,
) -> Result<Vec<Surrogate>> {
    let kspec = settings.kernel_spec();
    (0..spec.n_objectives())
        .map(|k| {
            let (inputs, outputs) = training_rows(records, times, spec, k);
            let data = Dataset::new(inputs, outputs)?;
            let warm = previous.map(|p| surrogate_params(&p[k]));
            let opts = |cell: usize| match &warm {
                Some(w) => FitOptions {
                    n_restarts: settings.refit_restarts,
                    warm_start: w.get(cell).cloned(),
                    ..settings.fit.clone()
                },
                None => settings.fit.clone(),
            };
            match settings.surrogate {
                SurrogateKind::LocalCrngp => {
                    let partition = Partition::new(Axis::Time, settings.cut_points.clone())?;
                    let rows = cell_rows(&data, &partition);
                    if let Some((cell, r)) = rows.iter().enumerate().find(|(_, r)| r.len() < 2) {
                        return Err(Error::PartitionInfeasible {
                            cell,
                            rows: r.len(),
                            required: 2,
                        });
                    }
                    let models = rows
                        .iter()
                        .enumerate()
                        .map(|(l, r)| fit_with(&data.subset(r)?, kspec, &opts(l), rng))
                        .collect::<Result<_>>()?;
                    Ok(Surrogate::Local(LocalCrngp {
                        partition,
                        models,
                        epsilon: DEFAULT_EPSILON,
                        coupled: settings.coupled_cells,
                    }))
                }
                _ => Ok(Surrogate::Global(fit_with(&data, kspec, &opts(0), rng)?)),
            }
        })
        .collect()
}

/// Runs a campaign from a freshly drawn initial design.
pub fn run_campaign<S: Simulator + ?Sized, R: Rng + ?Sized>(
    sim: &S,
    spec: &ObjectiveSpec,
    settings: &CampaignSettings,
    rng: &mut R,
) -> std::result::Result<CampaignResult, CampaignFailure> {
    let design = InitialDesign::generate(settings.n_init, sim.dim(), settings.n_initial_seeds, rng).map_err(|error| {
        CampaignFailure {
            partial: CampaignResult::default(),
            error,
        }
    })?;
    run_campaign_from(sim, spec, settings, &design, rng)
}

/// Thompson-sampling campaign: evaluate the design, fit, then repeatedly
/// select `(x, seed)` pairs on fresh candidate sets, simulate them and
/// update the surrogate until `n_max` evaluations.
pub fn run_campaign_from<S: Simulator + ?Sized, R: Rng + ?Sized>(
    sim: &S,
    spec: &ObjectiveSpec,
    settings: &CampaignSettings,
    design: &InitialDesign,
    rng: &mut R,
) -> std::result::Result<CampaignResult, CampaignFailure> {
    let mut tracker = Tracker {
        spec,
        result: CampaignResult::default(),
    };
    match campaign_loop(sim, spec, settings, design, rng, &mut tracker) {
        Ok(()) => Ok(tracker.finish(settings.k_report)),
        Err(error) => Err(CampaignFailure {
            partial: tracker.finish(settings.k_report),
            error,
        }),
    }
}

fn campaign_loop<S: Simulator + ?Sized, R: Rng + ?Sized>(
    sim: &S,
    spec: &ObjectiveSpec,
    settings: &CampaignSettings,
    design: &InitialDesign,
    rng: &mut R,
    tracker: &mut Tracker,
) -> Result<()> {
    settings.validate()?;
    spec.validate()?;
    let times = sim.times();
    if times.len() != spec.n_times() {
        return Err(Error::invalid(format!(
            "simulator reports {} output times, observations have {}",
            times.len(),
            spec.n_times()
        )));
    }
    if sim.n_outputs() < spec.n_objectives() {
        return Err(Error::invalid("simulator has fewer outputs than objectives"));
    }
    if design.points.len() != design.seeds.len() || design.points.len() > settings.n_max {
        return Err(Error::invalid("initial design does not fit the budget"));
    }
    for (x, &seed) in design.points.iter().zip(&design.seeds) {
        tracker.evaluate(sim, x.clone(), seed, Phase::Initial, 0)?;
    }
    if tracker.result.records.len() >= settings.n_max {
        return Ok(());
    }

    let mut models = fit_surrogates(&tracker.result.records, &times, spec, settings, None, rng)?;
    let mut since_refit = 0;
    let mut iteration = 0;
    while tracker.result.records.len() < settings.n_max {
        iteration += 1;
        let q = settings.batch_size.min(settings.n_max - tracker.result.records.len());
        let mut seeds = models[0].candidate_seeds();
        seeds.push(models[0].fresh_seed());
        let candidates = cross_candidates(settings.grid_size, sim.dim(), &seeds, rng);
        let picks = select(&models, &candidates, spec, &times, &tracker.result, q, rng)?;

        let start = tracker.result.records.len();
        for c in picks {
            tracker.evaluate(sim, c.x, c.seed, Phase::Acquired, iteration)?;
        }
        since_refit += q;
        if tracker.result.records.len() >= settings.n_max {
            break;
        }
        let records = &tracker.result.records;
        let updated = if since_refit >= settings.refit_interval {
            None
        } else {
            condition_all(&models, &records[start..], &times, spec).ok()
        };
        models = match updated {
            Some(m) => m,
            None => {
                since_refit = 0;
                tracker.result.refits += 1;
                match fit_surrogates(records, &times, spec, settings, Some(&models), rng) {
                    Ok(m) => m,
                    Err(_) => condition_all(&models, &records[start..], &times, spec)?,
                }
            }
        };
    }
    tracker.result.params = models.iter().map(surrogate_params).collect();
    Ok(())
}

fn cross_candidates<R: Rng + ?Sized>(grid: usize, dim: usize, seeds: &[u64], rng: &mut R) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(grid * seeds.len());
    for _ in 0..grid {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        out.extend(seeds.iter().map(|&seed| Candidate { x: x.clone(), seed }));
    }
    out
}

fn condition_all(models: &[Surrogate], new: &[EvalRecord], times: &[f64], spec: &ObjectiveSpec) -> Result<Vec<Surrogate>> {
    models
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let (inputs, outputs) = training_rows(new, times, spec, k);
            m.condition_many(inputs, outputs)
        })
        .collect()
}

fn select<R: Rng + ?Sized>(
    models: &[Surrogate],
    candidates: &[Candidate],
    spec: &ObjectiveSpec,
    times: &[f64],
    state: &CampaignResult,
    q: usize,
    rng: &mut R,
) -> Result<Vec<Candidate>> {
    if spec.n_objectives() == 1 {
        super::thompson::ts_select_batch(&models[0], candidates, spec, times, q, rng)
    } else {
        let reference = reference_point(&state.records);
        let front = state.archive.front();
        super::thompson::ts_select_mo_batch(models, candidates, spec, times, &front, reference, q, rng)
    }
}

/// `n_evals` runs at uniform random inputs, each with its own seed label.
pub fn random_search<S: Simulator + ?Sized, R: Rng + ?Sized>(
    sim: &S,
    spec: &ObjectiveSpec,
    n_evals: usize,
    k_report: usize,
    rng: &mut R,
) -> std::result::Result<CampaignResult, CampaignFailure> {
    let mut tracker = Tracker {
        spec,
        result: CampaignResult::default(),
    };
    let mut run = || -> Result<()> {
        spec.validate()?;
        for i in 0..n_evals {
            let x: Vec<f64> = (0..sim.dim()).map(|_| rng.random()).collect();
            tracker.evaluate(sim, x, i as u64, Phase::Random, 0)?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => Ok(tracker.finish(k_report)),
        Err(error) => Err(CampaignFailure {
            partial: tracker.finish(k_report),
            error,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Counted, Toy1d};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_spec() -> ObjectiveSpec {
        let toy = Toy1d::default();
        ObjectiveSpec::new(toy.simulate(&[0.37], 1).unwrap()).unwrap()
    }

    fn small_settings() -> CampaignSettings {
        CampaignSettings {
            n_init: 6,
            n_max: 14,
            n_initial_seeds: 3,
            grid_size: 32,
            refit_interval: 4,
            fit: FitOptions {
                n_restarts: 2,
                max_evals: 150,
                ..FitOptions::default()
            },
            refit_restarts: 1,
            k_report: 5,
            ..CampaignSettings::default()
        }
    }

    #[test]
    fn exact_budget_and_prefix_seeds() {
        for kind in [SurrogateKind::Crngp, SurrogateKind::LocalCrngp, SurrogateKind::MeanGpBaseline] {
            let sim = Counted::new(Toy1d::default());
            let settings = CampaignSettings {
                surrogate: kind,
                ..small_settings()
            };
            let res = run_campaign(&sim, &toy_spec(), &settings, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(sim.calls(), 14);
            assert_eq!(res.records.len(), 14);
            let mut seeds: Vec<u64> = res.records.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            assert_eq!(seeds, (0..seeds.len() as u64).collect::<Vec<_>>());
            assert!(res.best_g_trace.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(res.best_k.len(), 5);
            assert!(res.refits >= 1);
        }
    }

    #[test]
    fn no_acquisitions_when_budget_is_the_design() {
        let sim = Counted::new(Toy1d::default());
        let settings = CampaignSettings {
            n_max: 6,
            ..small_settings()
        };
        let res = run_campaign(&sim, &toy_spec(), &settings, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(sim.calls(), 6);
        assert!(res.records.iter().all(|r| r.phase == Phase::Initial));
    }

    #[test]
    fn deterministic_given_rng() {
        let sim = Toy1d::default();
        let a = run_campaign(&sim, &toy_spec(), &small_settings(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = run_campaign(&sim, &toy_spec(), &small_settings(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn batches_and_validation() {
        let sim = Counted::new(Toy1d::default());
        let settings = CampaignSettings {
            batch_size: 3,
            ..small_settings()
        };
        let res = run_campaign(&sim, &toy_spec(), &settings, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(res.records.len(), 14);
        let bad = CampaignSettings {
            n_max: 4,
            ..small_settings()
        };
        let err = run_campaign(&sim, &toy_spec(), &bad, &mut ChaCha8Rng::seed_from_u64(4)).unwrap_err();
        assert!(err.partial.records.is_empty());
    }

    struct Failing;

    impl Simulator for Failing {
        fn dim(&self) -> usize {
            1
        }
        fn times(&self) -> Vec<f64> {
            Toy1d::default().times
        }
        fn n_outputs(&self) -> usize {
            1
        }
        fn simulate(&self, x: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
            if seed == 2 && x[0] > 0.0 {
                Err(Error::Simulator("boom".into()))
            } else {
                Toy1d::default().simulate(x, seed)
            }
        }
    }

    #[test]
    fn simulator_failure_keeps_partial_results() {
        let err = run_campaign(&Failing, &toy_spec(), &small_settings(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap_err();
        assert!(matches!(err.error, Error::Simulator(_)));
        assert!(err.partial.records.len() < 6);
    }

    #[test]
    fn best_k_ordering() {
        let rec = |id: usize, g: Vec<f64>| EvalRecord {
            id,
            x: vec![],
            seed: 0,
            outputs: vec![],
            g,
            phase: Phase::Initial,
            iteration: 0,
        };
        let records = vec![rec(0, vec![3.0]), rec(1, vec![1.0]), rec(2, vec![1.0]), rec(3, vec![0.5])];
        assert_eq!(best_k(&records, 3), vec![3, 1, 2]);
        let two = vec![rec(0, vec![10.0, 0.0]), rec(1, vec![0.0, 1.0]), rec(2, vec![5.0, 0.5])];
        assert_eq!(best_k(&two, 3), vec![0, 1, 2]);
    }

    #[test]
    fn random_search_uses_distinct_seeds() {
        let sim = Toy1d::default();
        let res = random_search(&sim, &toy_spec(), 10, 3, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(res.records.len(), 10);
        assert!(res.records.iter().enumerate().all(|(i, r)| r.seed == i as u64));
    }
}
