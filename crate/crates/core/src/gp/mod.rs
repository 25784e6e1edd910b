//! Zero-mean Gaussian process regression over augmented inputs.
//!
//! Outputs are standardized before fitting; [`GpModel`] predictions are
//! reported back on the original output scale. The factorization of
//! `K + tau^2 I` is kept so that prediction, sampling and incremental
//! conditioning are all triangular solves.

mod fit;
mod likelihood;
mod pathwise;

pub use fit::{fit, fit_with, FitOptions, HyperBounds};
pub use likelihood::{
    log_marginal_likelihood, log_marginal_likelihood_dense, log_marginal_likelihood_gridded,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{build_covariance, cross_covariance, AugmentedInput, KernelParams, KernelSpec};

/// Training inputs with standardized outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<AugmentedInput>,
    outputs: DVector<f64>,
    shift: f64,
    scale: f64,
}

impl Dataset {
    /// Standardizes `raw` to zero mean and unit variance. A single
    /// observation, or a constant output vector, is only centered when that
    /// is well defined.
    pub fn new(inputs: Vec<AugmentedInput>, raw: Vec<f64>) -> Result<Self> {
        Self::check(&inputs, &raw)?;
        let n = raw.len() as f64;
        let (shift, scale) = if raw.len() >= 2 {
            let mean = raw.iter().sum::<f64>() / n;
            let var = raw.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        let outputs = DVector::from_iterator(raw.len(), raw.iter().map(|y| (y - shift) / scale));
        Ok(Dataset {
            inputs,
            outputs,
            shift,
            scale,
        })
    }

    /// Keeps outputs as given (shift 0, scale 1).
    pub fn unscaled(inputs: Vec<AugmentedInput>, outputs: Vec<f64>) -> Result<Self> {
        Self::check(&inputs, &outputs)?;
        Ok(Dataset {
            inputs,
            outputs: DVector::from_vec(outputs),
            shift: 0.0,
            scale: 1.0,
        })
    }

    fn check(inputs: &[AugmentedInput], outputs: &[f64]) -> Result<()> {
        if inputs.len() != outputs.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        let d = inputs[0].x.len();
        if inputs.iter().any(|p| p.x.len() != d) {
            return Err(Error::invalid("inputs have inconsistent dimensions"));
        }
        if let Some(y) = outputs.iter().find(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("non-finite output {y}")));
        }
        Ok(())
    }

    fn empty() -> Self {
        Dataset {
            inputs: Vec::new(),
            outputs: DVector::zeros(0),
            shift: 0.0,
            scale: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[AugmentedInput] {
        &self.inputs
    }

    /// Standardized outputs.
    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn shift_scale(&self) -> (f64, f64) {
        (self.shift, self.scale)
    }

    pub fn raw_outputs(&self) -> Vec<f64> {
        self.outputs.iter().map(|y| y * self.scale + self.shift).collect()
    }

    /// Subset of rows, re-standardized.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let raw = self.raw_outputs();
        Dataset::new(
            rows.iter().map(|&i| self.inputs[i].clone()).collect(),
            rows.iter().map(|&i| raw[i]).collect(),
        )
    }

    fn push(&mut self, input: AugmentedInput, raw: f64) {
        self.inputs.push(input);
        let n = self.outputs.len();
        let y = (raw - self.shift) / self.scale;
        self.outputs = std::mem::replace(&mut self.outputs, DVector::zeros(0)).insert_row(n, y);
    }
}

/// Predictive mean and covariance on the original output scale.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Prediction {
    pub fn variance(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

/// A GP conditioned on a dataset with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GpModel {
    data: Dataset,
    params: KernelParams,
    spec: KernelSpec,
    dim: usize,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GpModel {
    pub fn new(data: Dataset, params: KernelParams, spec: KernelSpec) -> Result<Self> {
        params.validate()?;
        let dim = data.inputs[0].dim();
        if dim != params.dim() {
            return Err(Error::invalid(format!(
                "inputs have {dim} continuous coordinates but {} lengthscales were given",
                params.dim()
            )));
        }
        let k = build_covariance(&data.inputs, &params, spec, true)?;
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::numerical("training covariance is not positive definite", Some(&params)))?
            .unpack();
        let alpha = solve_with_lower(&chol, &data.outputs);
        Ok(GpModel {
            data,
            params,
            spec,
            dim,
            chol,
            alpha,
        })
    }

    /// The unconditioned prior over inputs with `params.dim()` continuous
    /// coordinates.
    pub fn prior(params: KernelParams, spec: KernelSpec) -> Result<Self> {
        params.validate()?;
        let dim = params.dim();
        Ok(GpModel {
            data: Dataset::empty(),
            params,
            spec,
            dim,
            chol: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    /// Lower Cholesky factor of `K_N + tau^2 I` (standardized units).
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `(K_N + tau^2 I)^{-1} Y` (standardized units).
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Sorted distinct seed labels in the training data.
    pub fn observed_seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.data.inputs.iter().map(|p| p.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// A seed label never used in training: `max + 1`, or 0 without data.
    pub fn fresh_seed(&self) -> u64 {
        self.data
            .inputs
            .iter()
            .map(|p| p.seed + 1)
            .max()
            .unwrap_or(0)
    }

    fn check_targets(&self, targets: &[AugmentedInput]) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::invalid("no prediction targets"));
        }
        if let Some(p) = targets.iter().find(|p| p.dim() != self.dim) {
            return Err(Error::invalid(format!(
                "target has {} continuous coordinates, model expects {}",
                p.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Standardized predictive moments, covariance including the nugget.
    fn predict_standardized(&self, targets: &[AugmentedInput]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_targets(targets)?;
        let mut cov = build_covariance(targets, &self.params, self.spec, true)?;
        if self.is_empty() {
            return Ok((DVector::zeros(targets.len()), cov));
        }
        let kx = cross_covariance(&self.data.inputs, targets, &self.params, self.spec)?;
        let mean = kx.tr_mul(&self.alpha);
        let v = lower_solve(&self.chol, kx);
        cov -= v.tr_mul(&v);
        symmetrize_clamp(&mut cov);
        Ok((mean, cov))
    }

    /// Kriging mean and covariance at `targets`, on the output scale.
    pub fn predict(&self, targets: &[AugmentedInput]) -> Result<Prediction> {
        let (mean, cov) = self.predict_standardized(targets)?;
        let (shift, scale) = self.data.shift_scale();
        Ok(Prediction {
            mean: mean.map(|m| m * scale + shift),
            cov: cov * (scale * scale),
        })
    }

    /// Predictive mean only; linear in the number of training points per
    /// target.
    pub fn predict_mean(&self, targets: &[AugmentedInput]) -> Result<DVector<f64>> {
        self.check_targets(targets)?;
        let (shift, scale) = self.data.shift_scale();
        if self.is_empty() {
            return Ok(DVector::from_element(targets.len(), shift));
        }
        let kx = cross_covariance(&self.data.inputs, targets, &self.params, self.spec)?;
        Ok(kx.tr_mul(&self.alpha).map(|m| m * scale + shift))
    }

    /// Joint posterior draws `mean + L z`, where `L` factors the predictive
    /// covariance plus a jitter escalated from 1e-10 by factors of ten up to
    /// 1e-4 (standardized units).
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        targets: &[AugmentedInput],
        n_draws: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>> {
        let (mean, cov) = self.predict_standardized(targets)?;
        let l = jittered_cholesky(&cov, 1e-10, 1e-4)
            .ok_or_else(|| Error::numerical("predictive covariance could not be factorized", Some(&self.params)))?;
        let (shift, scale) = self.data.shift_scale();
        let m = targets.len();
        Ok((0..n_draws)
            .map(|_| {
                let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&mean + &l * z).map(|v| v * scale + shift)
            })
            .collect())
    }

    /// Adds one observation without touching the hyperparameters.
    pub fn condition(&self, input: AugmentedInput, output: f64) -> Result<GpModel> {
        self.condition_many(vec![input], vec![output])
    }

    /// Adds a block of observations by extending the Cholesky factor. The
    /// output transform of the current dataset is kept.
    pub fn condition_many(&self, inputs: Vec<AugmentedInput>, outputs: Vec<f64>) -> Result<GpModel> {
        if inputs.len() != outputs.len() {
            return Err(Error::invalid("inputs and outputs differ in length"));
        }
        if inputs.is_empty() {
            return Ok(self.clone());
        }
        self.check_targets(&inputs)?;
        if let Some(y) = outputs.iter().find(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("non-finite output {y}")));
        }
        if self.is_empty() {
            return GpModel::new(Dataset::new(inputs, outputs)?, self.params.clone(), self.spec);
        }
        let n = self.len();
        let k = inputs.len();
        let k_new = build_covariance(&inputs, &self.params, self.spec, true)?;
        let k_cross = cross_covariance(&self.data.inputs, &inputs, &self.params, self.spec)?;
        // [L 0; B C] with B = (L^{-1} k_cross)^T and C C^T = K_new - B B^T.
        let b = lower_solve(&self.chol, k_cross);
        let schur = k_new - b.tr_mul(&b);
        let c = schur
            .cholesky()
            .ok_or_else(|| Error::numerical("conditioning update is not positive definite", Some(&self.params)))?
            .unpack();
        let mut chol = DMatrix::zeros(n + k, n + k);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        chol.view_mut((n, 0), (k, n)).copy_from(&b.transpose());
        chol.view_mut((n, n), (k, k)).copy_from(&c);

        let mut data = self.data.clone();
        for (p, y) in inputs.into_iter().zip(outputs) {
            data.push(p, y);
        }
        let alpha = solve_with_lower(&chol, &data.outputs);
        Ok(GpModel {
            data,
            params: self.params.clone(),
            spec: self.spec,
            dim: self.dim,
            chol,
            alpha,
        })
    }

    /// Same data and hyperparameters, factorization rebuilt from scratch.
    pub fn rebuild(&self) -> Result<GpModel> {
        GpModel::new(self.data.clone(), self.params.clone(), self.spec)
    }
}

/// `L^{-1} B` for lower-triangular `L`.
pub(crate) fn lower_solve(l: &DMatrix<f64>, mut b: DMatrix<f64>) -> DMatrix<f64> {
    if l.nrows() > 0 {
        l.solve_lower_triangular_mut(&mut b);
    }
    b
}

/// `(L L^T)^{-1} y`.
pub(crate) fn solve_with_lower(l: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut v = y.clone();
    if l.nrows() == 0 {
        return v;
    }
    l.solve_lower_triangular_mut(&mut v);
    l.tr_solve_lower_triangular_mut(&mut v);
    v
}

/// Lower Cholesky factor of `m + jitter I`, escalating `jitter` by factors
/// of ten from `start` to `max`. Tries the bare matrix first.
pub(crate) fn jittered_cholesky(m: &DMatrix<f64>, start: f64, max: f64) -> Option<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c.unpack());
    }
    let mut jitter = start;
    while jitter <= max * (1.0 + 1e-9) {
        let mut mj = m.clone();
        for i in 0..mj.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = mj.cholesky() {
            return Some(c.unpack());
        }
        jitter *= 10.0;
    }
    None
}

fn symmetrize_clamp(cov: &mut DMatrix<f64>) {
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        if cov[(i, i)] < 0.0 {
            cov[(i, i)] = 0.0;
        }
    }
}
