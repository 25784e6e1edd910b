use nalgebra::DVector;
use rand::Rng;

use super::objective::ObjectiveSpec;
use super::pareto::hv_contribution;
use crate::crngp::LocalCrngp;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::{AugmentedInput, SeedMode};

/// A fitted surrogate for one objective's output.
#[derive(Debug, Clone)]
pub enum Surrogate {
    Global(GpModel),
    Local(LocalCrngp),
}

impl Surrogate {
    pub fn sample<R: Rng + ?Sized>(
        &self,
        targets: &[AugmentedInput],
        n_draws: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>> {
        match self {
            Surrogate::Global(m) => m.sample_joint(targets, n_draws, rng),
            Surrogate::Local(m) => m.sample(targets, n_draws, rng),
        }
    }

    pub fn condition_many(&self, inputs: Vec<AugmentedInput>, outputs: Vec<f64>) -> Result<Surrogate> {
        Ok(match self {
            Surrogate::Global(m) => Surrogate::Global(m.condition_many(inputs, outputs)?),
            Surrogate::Local(m) => Surrogate::Local(m.condition_many(inputs, outputs)?),
        })
    }

    pub fn observed_seeds(&self) -> Vec<u64> {
        match self {
            Surrogate::Global(m) => m.observed_seeds(),
            Surrogate::Local(m) => m.observed_seeds(),
        }
    }

    pub fn fresh_seed(&self) -> u64 {
        match self {
            Surrogate::Global(m) => m.fresh_seed(),
            Surrogate::Local(m) => m.fresh_seed(),
        }
    }

    fn seed_mode(&self) -> SeedMode {
        match self {
            Surrogate::Global(m) => m.spec().seed_mode,
            Surrogate::Local(m) => m.models[0].spec().seed_mode,
        }
    }

    /// Seed labels worth offering as candidates. A seed-blind surrogate
    /// cannot tell replicates apart, so it only gets the fresh label.
    pub fn candidate_seeds(&self) -> Vec<u64> {
        match self.seed_mode() {
            SeedMode::Crn => self.observed_seeds(),
            SeedMode::Pooled => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub seed: u64,
}

/// Fresh uniform points in `[0,1]^dim` crossed with the observed seeds plus
/// the next unused label. Candidates are ordered point-major.
pub fn ts_candidates<R: Rng + ?Sized>(
    grid_size: usize,
    dim: usize,
    observed_seeds: &[u64],
    rng: &mut R,
) -> Vec<Candidate> {
    let mut seeds = observed_seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let fresh = seeds.last().map_or(0, |s| s + 1);
    seeds.push(fresh);
    let mut out = Vec::with_capacity(grid_size * seeds.len());
    for _ in 0..grid_size {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        for &seed in &seeds {
            out.push(Candidate { x: x.clone(), seed });
        }
    }
    out
}

/// Sampled objective values: `n_draws` realizations, each holding one `g`
/// vector (one entry per candidate) per objective.
pub fn sample_objectives<R: Rng + ?Sized>(
    models: &[Surrogate],
    candidates: &[Candidate],
    spec: &ObjectiveSpec,
    times: &[f64],
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates"));
    }
    if models.len() != spec.n_objectives() || times.len() != spec.n_times() {
        return Err(Error::invalid("models, objectives and output times do not line up"));
    }
    let nt = times.len();
    let targets: Vec<AugmentedInput> = candidates
        .iter()
        .flat_map(|c| times.iter().map(|&t| AugmentedInput::new(c.x.clone(), t, c.seed)))
        .collect();
    let per_objective: Vec<Vec<DVector<f64>>> = models
        .iter()
        .map(|m| m.sample(&targets, n_draws, rng))
        .collect::<Result<_>>()?;
    Ok((0..n_draws)
        .map(|k| {
            per_objective
                .iter()
                .zip(&spec.observed)
                .map(|(draws, obs)| {
                    let d = &draws[k];
                    (0..candidates.len())
                        .map(|c| {
                            (0..nt)
                                .map(|j| (spec.transform.inverse(d[c * nt + j]) - obs[j]).powi(2))
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Candidate indices in ascending score order (ties by index).
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx
}

/// One pick per realization; a candidate already taken is replaced by the
/// realization's next best.
fn pick_distinct(score_sets: &[Vec<f64>], candidates: &[Candidate]) -> Vec<Candidate> {
    let mut picked: Vec<usize> = Vec::new();
    for scores in score_sets {
        if let Some(i) = ranking(scores).into_iter().find(|i| !picked.contains(i)) {
            picked.push(i);
        }
    }
    picked.into_iter().map(|i| candidates[i].clone()).collect()
}

/// Thompson sampling: one joint realization, the candidate minimizing `g`.
pub fn ts_select<R: Rng + ?Sized>(
    model: &Surrogate,
    candidates: &[Candidate],
    spec: &ObjectiveSpec,
    times: &[f64],
    rng: &mut R,
) -> Result<Candidate> {
    Ok(ts_select_batch(model, candidates, spec, times, 1, rng)?.remove(0))
}

/// `q` independent realizations, each contributing its own minimizer.
pub fn ts_select_batch<R: Rng + ?Sized>(
    model: &Surrogate,
    candidates: &[Candidate],
    spec: &ObjectiveSpec,
    times: &[f64],
    q: usize,
    rng: &mut R,
) -> Result<Vec<Candidate>> {
    check_batch(q, candidates.len())?;
    if spec.n_objectives() != 1 {
        return Err(Error::invalid("single-objective selection needs exactly one objective"));
    }
    let draws = sample_objectives(std::slice::from_ref(model), candidates, spec, times, q, rng)?;
    let scores: Vec<Vec<f64>> = draws.into_iter().map(|mut d| d.remove(0)).collect();
    Ok(pick_distinct(&scores, candidates))
}

fn check_batch(q: usize, n: usize) -> Result<()> {
    if q == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if q > n {
        return Err(Error::invalid(format!("batch size {q} exceeds the {n} candidates")));
    }
    Ok(())
}

/// Bi-objective selection by hypervolume contribution of the sampled
/// `(g1, g2)` to the archive front. Falls back to the smallest `g1 + g2`
/// when no candidate contributes.
pub fn ts_select_mo<R: Rng + ?Sized>(
    models: &[Surrogate],
    candidates: &[Candidate],
    spec: &ObjectiveSpec,
    times: &[f64],
    front: &[(f64, f64)],
    reference: (f64, f64),
    rng: &mut R,
) -> Result<Candidate> {
    Ok(ts_select_mo_batch(models, candidates, spec, times, front, reference, 1, rng)?.remove(0))
}

#[allow(clippy::too_many_arguments)]
pub fn ts_select_mo_batch<R: Rng + ?Sized>(
    models: &[Surrogate],
    candidates: &[Candidate],
    spec: &ObjectiveSpec,
    times: &[f64],
    front: &[(f64, f64)],
    reference: (f64, f64),
    q: usize,
    rng: &mut R,
) -> Result<Vec<Candidate>> {
    check_batch(q, candidates.len())?;
    if spec.n_objectives() != 2 {
        return Err(Error::invalid("hypervolume selection needs exactly two objectives"));
    }
    let draws = sample_objectives(models, candidates, spec, times, q, rng)?;
    let scores: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| {
            let contrib: Vec<f64> = d[0]
                .iter()
                .zip(&d[1])
                .map(|(&a, &b)| hv_contribution(front, (a, b), reference))
                .collect();
            if contrib.iter().all(|&c| c <= 0.0) {
                d[0].iter().zip(&d[1]).map(|(a, b)| a + b).collect()
            } else {
                contrib.into_iter().map(|c| -c).collect()
            }
        })
        .collect();
    Ok(pick_distinct(&scores, candidates))
}
