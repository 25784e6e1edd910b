//! Exact joint posterior sampling for large target sets.
//!
//! A posterior draw is a prior draw corrected by the data (Matheron's
//! rule):
//!
//! ```text
//! f*|y = f* + eps* + K*X (K + tau^2 I)^{-1} (y - f_X - eps_X)
//! ```
//!
//! where `(f*, f_X)` is a joint prior draw over targets and training inputs.
//! The kernel is a product of factors (time, the remaining continuous
//! coordinates, seed), so over the grid spanned by the distinct factor
//! values the prior covariance is a Kronecker product. Both the prior draw
//! and the `K*X w` product are then mode-wise matrix products over that
//! grid and never form a target-by-target matrix.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{jittered_cholesky, solve_with_lower, GpModel};
use crate::error::{Error, Result};
use crate::kernels::{correlation, AugmentedInput, KernelFamily, SeedMode};

/// Largest grid handled by the pathwise sampler.
const MAX_GRID: usize = 4_000_000;
/// Largest single factor that gets a dense Cholesky.
const MAX_FACTOR: usize = 3_000;
/// Target counts up to this size are sampled from the dense predictive
/// covariance instead.
const DENSE_TARGETS: usize = 400;

struct Factor {
    corr: DMatrix<f64>,
    chol: DMatrix<f64>,
}

struct KroneckerGrid {
    factors: Vec<Factor>,
    shape: Vec<usize>,
    train: Vec<usize>,
    targets: Vec<usize>,
}

/// Assigns each point a flat index into the product grid.
struct Indexer {
    keys: Vec<HashMap<Vec<u64>, usize>>,
    values: Vec<Vec<Vec<f64>>>,
}

impl KroneckerGrid {
    fn build(model: &GpModel, targets: &[AugmentedInput]) -> Result<Option<KroneckerGrid>> {
        let params = model.params();
        let spec = model.spec();
        let d = model.dim - 1;
        let continuous: Vec<Vec<usize>> = match spec.family {
            KernelFamily::Gaussian if d > 0 => vec![(0..d).collect(), vec![d]],
            _ => vec![(0..=d).collect()],
        };
        let nf = continuous.len();
        let mut idx = Indexer {
            keys: vec![HashMap::new(); nf + 1],
            values: vec![Vec::new(); nf + 1],
        };
        let mut locate = |p: &AugmentedInput| -> Vec<usize> {
            let coords: Vec<f64> = p.coords().collect();
            let mut out = Vec::with_capacity(nf + 1);
            for (f, dims) in continuous.iter().enumerate() {
                let v: Vec<f64> = dims.iter().map(|&k| coords[k]).collect();
                let key: Vec<u64> = v.iter().map(|c| c.to_bits()).collect();
                let next = idx.values[f].len();
                let i = *idx.keys[f].entry(key).or_insert(next);
                if i == next {
                    idx.values[f].push(v);
                }
                out.push(i);
            }
            let seed = match spec.seed_mode {
                SeedMode::Crn => p.seed,
                SeedMode::Pooled => 0,
            };
            let next = idx.values[nf].len();
            let i = *idx.keys[nf].entry(vec![seed]).or_insert(next);
            if i == next {
                idx.values[nf].push(vec![seed as f64]);
            }
            out.push(i);
            out
        };
        let train_multi: Vec<Vec<usize>> = model.data().inputs().iter().map(&mut locate).collect();
        let target_multi: Vec<Vec<usize>> = targets.iter().map(&mut locate).collect();

        let shape: Vec<usize> = idx.values.iter().map(|v| v.len()).collect();
        let total = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        match total {
            Some(t) if t <= MAX_GRID && shape.iter().all(|&n| n <= MAX_FACTOR) => {}
            _ => return Ok(None),
        }

        let mut factors = Vec::with_capacity(nf + 1);
        for (f, dims) in continuous.iter().enumerate() {
            let pts = &idx.values[f];
            let ls: Vec<f64> = dims.iter().map(|&k| params.lengthscales[k]).collect();
            let corr = DMatrix::from_fn(pts.len(), pts.len(), |a, b| {
                let d2: f64 = pts[a]
                    .iter()
                    .zip(&pts[b])
                    .zip(&ls)
                    .map(|((u, v), l)| ((u - v) / l).powi(2))
                    .sum();
                correlation(spec.family, d2)
            });
            factors.push(Factor::new(corr)?);
        }
        let ns = shape[nf];
        let seed_corr = DMatrix::from_fn(ns, ns, |a, b| if a == b { 1.0 } else { params.rho });
        factors.push(Factor::new(seed_corr)?);

        let flat = |m: &Vec<usize>| m.iter().zip(&shape).fold(0usize, |acc, (i, n)| acc * n + i);
        Ok(Some(KroneckerGrid {
            factors,
            train: train_multi.iter().map(flat).collect(),
            targets: target_multi.iter().map(flat).collect(),
            shape,
        }))
    }

    fn size(&self) -> usize {
        self.shape.iter().product()
    }

    /// Applies `mats[m]` along every mode `m` of the row-major tensor.
    fn apply(&self, mut data: Vec<f64>, pick: impl Fn(&Factor) -> &DMatrix<f64>) -> Vec<f64> {
        let total = data.len();
        for (m, factor) in self.factors.iter().enumerate() {
            let n = self.shape[m];
            let inner: usize = self.shape[m + 1..].iter().product();
            let outer = total / (n * inner);
            let mat = pick(factor);
            if inner == 1 {
                // column-major n x outer
                let c = DMatrix::from_column_slice(n, outer, &data);
                data = (mat * c).as_slice().to_vec();
                continue;
            }
            let mt = mat.transpose();
            for o in 0..outer {
                let block = &mut data[o * n * inner..(o + 1) * n * inner];
                // row-major n x inner is column-major inner x n
                let b = DMatrix::from_column_slice(inner, n, block);
                block.copy_from_slice((b * &mt).as_slice());
            }
        }
        data
    }
}

impl Factor {
    fn new(corr: DMatrix<f64>) -> Result<Factor> {
        let chol = jittered_cholesky(&corr, 1e-10, 1e-4)
            .ok_or_else(|| Error::numerical("prior factor could not be factorized", None))?;
        Ok(Factor { corr, chol })
    }
}

impl GpModel {
    /// Joint posterior draws at `targets` by pathwise conditioning on a
    /// Kronecker-structured prior draw. Errors if the product grid spanned
    /// by the training inputs and targets is too large.
    pub fn sample_pathwise<R: Rng + ?Sized>(
        &self,
        targets: &[AugmentedInput],
        n_draws: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>> {
        self.check_targets(targets)?;
        let grid = KroneckerGrid::build(self, targets)?
            .ok_or_else(|| Error::invalid("target grid too large for pathwise sampling"))?;
        Ok(self.pathwise_draws(&grid, n_draws, rng))
    }

    /// Joint posterior draws: dense for small target sets, pathwise for
    /// large ones.
    pub fn sample_joint<R: Rng + ?Sized>(
        &self,
        targets: &[AugmentedInput],
        n_draws: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>> {
        self.check_targets(targets)?;
        if targets.len() > DENSE_TARGETS {
            if let Some(grid) = KroneckerGrid::build(self, targets)? {
                return Ok(self.pathwise_draws(&grid, n_draws, rng));
            }
        }
        self.sample_posterior(targets, n_draws, rng)
    }

    fn pathwise_draws<R: Rng + ?Sized>(
        &self,
        grid: &KroneckerGrid,
        n_draws: usize,
        rng: &mut R,
    ) -> Vec<DVector<f64>> {
        let p = self.params();
        let sd = p.variance.sqrt();
        let tau = p.nugget.sqrt();
        let (shift, scale) = self.data().shift_scale();
        let y = self.data().outputs();
        let size = grid.size();
        (0..n_draws)
            .map(|_| {
                let z: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
                let prior = grid.apply(z, |f| &f.chol);
                let mut correction = vec![0.0; size];
                if !self.is_empty() {
                    let resid = DVector::from_fn(y.len(), |i, _| {
                        let eps: f64 = rng.sample(StandardNormal);
                        y[i] - sd * prior[grid.train[i]] - tau * eps
                    });
                    let w = solve_with_lower(&self.chol, &resid);
                    let mut scatter = vec![0.0; size];
                    for (i, wi) in w.iter().enumerate() {
                        scatter[grid.train[i]] += wi;
                    }
                    correction = grid.apply(scatter, |f| &f.corr);
                }
                DVector::from_fn(grid.targets.len(), |j, _| {
                    let k = grid.targets[j];
                    let eps: f64 = rng.sample(StandardNormal);
                    let v = sd * prior[k] + tau * eps + p.variance * correction[k];
                    v * scale + shift
                })
            })
            .collect()
    }
}
