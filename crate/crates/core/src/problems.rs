//! Simulators the optimizer can drive.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seir::{self, FixedBlock, ParamRanges};

/// A stochastic simulator over unit-cube inputs, deterministic per seed.
pub trait Simulator {
    fn dim(&self) -> usize;
    /// Output times scaled to `[0, 1]`.
    fn times(&self) -> Vec<f64>;
    /// Number of output series per run.
    fn n_outputs(&self) -> usize;
    /// One series per output, sampled at [`Simulator::times`].
    fn simulate(&self, x: &[f64], seed: u64) -> Result<Vec<Vec<f64>>>;
}

fn check_x(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::invalid(format!("expected {dim} inputs, got {}", x.len())));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("input {v} outside [0, 1]")));
    }
    Ok(())
}

/// The SEIR model over `(beta, kappa_a, kappa_s)`; outputs cumulative
/// hospitalizations and deaths.
#[derive(Debug, Clone, Default)]
pub struct SeirProblem {
    pub fixed: FixedBlock,
    pub ranges: ParamRanges,
    pub horizon_days: u32,
    pub output_days: Vec<u32>,
}

impl SeirProblem {
    pub fn new() -> Self {
        SeirProblem {
            fixed: FixedBlock::default(),
            ranges: ParamRanges::default(),
            horizon_days: seir::DEFAULT_HORIZON,
            output_days: seir::DEFAULT_OUTPUT_DAYS.to_vec(),
        }
    }

    pub fn trajectory(&self, x: &[f64], seed: u64) -> Result<seir::Trajectory> {
        let params = seir::from_unit_cube(x, &self.ranges, &self.fixed)?;
        let mut tr = seir::simulate(&params, seed, self.horizon_days, &self.output_days)?;
        tr.x = x.to_vec();
        Ok(tr)
    }
}

impl Simulator for SeirProblem {
    fn dim(&self) -> usize {
        3
    }

    fn times(&self) -> Vec<f64> {
        self.output_days
            .iter()
            .map(|&d| d as f64 / self.horizon_days as f64)
            .collect()
    }

    fn n_outputs(&self) -> usize {
        2
    }

    fn simulate(&self, x: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        let tr = self.trajectory(x, seed)?;
        Ok(vec![
            tr.hosp.iter().map(|&v| v as f64).collect(),
            tr.death.iter().map(|&v| v as f64).collect(),
        ])
    }
}

/// `f(x, t, r) = sin(6x) t + a_r t^2` with a per-seed offset
/// `a_r ~ N(0, 0.5^2)` drawn from the seed label.
#[derive(Debug, Clone)]
pub struct Toy1d {
    pub times: Vec<f64>,
}

impl Default for Toy1d {
    fn default() -> Self {
        Toy1d {
            times: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

impl Toy1d {
    pub fn offset(seed: u64) -> f64 {
        0.5 * ChaCha8Rng::seed_from_u64(seed).sample::<f64, _>(StandardNormal)
    }
}

impl Simulator for Toy1d {
    fn dim(&self) -> usize {
        1
    }

    fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn simulate(&self, x: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        check_x(x, 1)?;
        let a = Toy1d::offset(seed);
        Ok(vec![self
            .times
            .iter()
            .map(|&t| (6.0 * x[0]).sin() * t + a * t * t)
            .collect()])
    }
}

/// Smooth random functions with CRN structure:
/// `f_k(x, t, r) = sqrt(rho) h_k(x, t) + sqrt(1 - rho) h_{k,r}(x, t)`, each
/// `h` a random-Fourier-feature draw from a unit-variance Gaussian-kernel
/// GP with the given lengthscale.
#[derive(Debug, Clone)]
pub struct SyntheticCrngp {
    pub dim: usize,
    pub n_outputs: usize,
    pub rho: f64,
    pub lengthscale: f64,
    pub n_features: usize,
    pub problem_seed: u64,
    pub times: Vec<f64>,
}

impl SyntheticCrngp {
    pub fn new(dim: usize, n_outputs: usize, rho: f64, problem_seed: u64) -> Self {
        SyntheticCrngp {
            dim,
            n_outputs,
            rho,
            lengthscale: 0.3,
            n_features: 200,
            problem_seed,
            times: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }

    fn features(&self, stream: u64) -> Vec<(Vec<f64>, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.problem_seed);
        rng.set_stream(stream);
        (0..self.n_features)
            .map(|_| {
                let w: Vec<f64> = (0..=self.dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) / self.lengthscale)
                    .collect();
                let b = rng.random_range(0.0..std::f64::consts::TAU);
                let a: f64 = rng.sample(StandardNormal);
                (w, b, a)
            })
            .collect()
    }

    fn eval(feats: &[(Vec<f64>, f64, f64)], z: &[f64]) -> f64 {
        let scale = (2.0 / feats.len() as f64).sqrt();
        scale
            * feats
                .iter()
                .map(|(w, b, a)| a * (w.iter().zip(z).map(|(wi, zi)| wi * zi).sum::<f64>() + b).cos())
                .sum::<f64>()
    }
}

impl Simulator for SyntheticCrngp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    fn simulate(&self, x: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        check_x(x, self.dim)?;
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [0, 1]"));
        }
        Ok((0..self.n_outputs as u64)
            .map(|k| {
                // stream layout: output in the high bits, seed label + 1 in
                // the low bits, 0 for the shared component
                let shared = self.features(k << 40);
                let own = self.features((k << 40) + (seed & ((1 << 40) - 1)) + 1);
                self.times
                    .iter()
                    .map(|&t| {
                        let mut z = x.to_vec();
                        z.push(t);
                        self.rho.sqrt() * Self::eval(&shared, &z) + (1.0 - self.rho).sqrt() * Self::eval(&own, &z)
                    })
                    .collect()
            })
            .collect())
    }
}

/// Counts simulator calls.
#[derive(Debug)]
pub struct Counted<S> {
    pub inner: S,
    calls: Cell<usize>,
}

impl<S> Counted<S> {
    pub fn new(inner: S) -> Self {
        Counted {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<S: Simulator> Simulator for Counted<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    fn n_outputs(&self) -> usize {
        self.inner.n_outputs()
    }

    fn simulate(&self, x: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.simulate(x, seed)
    }
}

/// Seed labels at or above this value are reserved for ground-truth runs,
/// so a campaign never evaluates the truth's own replicate.
pub const TRUTH_SEED_BASE: u64 = 1_000_000;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seir_problem_shapes() {
        let p = SeirProblem::new();
        assert_eq!(p.times(), vec![0.2, 0.4, 0.6, 0.8, 1.0]);
        let out = p.simulate(&[0.5, 0.5, 0.5], 3).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), 5);
        assert!(p.simulate(&[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn toy_is_deterministic_and_seed_dependent() {
        let toy = Toy1d::default();
        assert_eq!(toy.simulate(&[0.3], 1).unwrap(), toy.simulate(&[0.3], 1).unwrap());
        assert_ne!(toy.simulate(&[0.3], 1).unwrap(), toy.simulate(&[0.3], 2).unwrap());
    }

    #[test]
    fn synthetic_has_unit_scale_and_crn_structure() {
        let sim = SyntheticCrngp::new(2, 1, 0.8, 7);
        let mut same = Vec::new();
        let mut other = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..200u64 {
            let x = [rng.random(), rng.random()];
            same.push(sim.simulate(&x, s).unwrap()[0][4]);
            other.push(sim.simulate(&x, s + 1000).unwrap()[0][4]);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!(var(&same) > 0.2 && var(&same) < 3.0, "{}", var(&same));
        let cov = same.iter().zip(&other).map(|(a, b)| (a - mean(&same)) * (b - mean(&other))).sum::<f64>() / 200.0;
        let corr = cov / (var(&same) * var(&other)).sqrt();
        assert!(corr > 0.5, "{corr}");
    }

    #[test]
    fn counted_wrapper() {
        let c = Counted::new(Toy1d::default());
        c.simulate(&[0.1], 0).unwrap();
        c.simulate(&[0.2], 0).unwrap();
        assert_eq!(c.calls(), 2);
    }
}
