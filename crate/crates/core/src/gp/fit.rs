use rand::Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{gridded_or_dense, TimeGrid};
use super::{Dataset, GpModel};
use crate::error::{Error, Result};
use crate::kernels::{KernelParams, KernelSpec, SeedMode};
use crate::optim::NelderMead;

/// Search box for the hyperparameters (standardized outputs, unit-cube
/// inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub variance: (f64, f64),
    pub nugget: (f64, f64),
    pub rho: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            lengthscale: (1e-2, 2.0),
            variance: (1e-2, 1e2),
            nugget: (1e-8, 1e-1),
            rho: (0.01, 0.99),
        }
    }
}

impl HyperBounds {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("lengthscale", self.lengthscale),
            ("variance", self.variance),
            ("nugget", self.nugget),
        ];
        for (name, (lo, hi)) in pos {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::invalid(format!("{name} bounds must satisfy 0 < lower < upper")));
            }
        }
        let (lo, hi) = self.rho;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::invalid("rho bounds must satisfy 0 < lower < upper < 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub bounds: HyperBounds,
    pub n_restarts: usize,
    /// Objective evaluations per local search.
    pub max_evals: usize,
    /// Used as the first start point when present.
    pub warm_start: Option<KernelParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            bounds: HyperBounds::default(),
            n_restarts: 5,
            max_evals: 400,
            warm_start: None,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Unconstrained coordinates: log lengthscales, log variance, log nugget
/// and, for seed-aware kernels, logit rho.
struct Transform {
    dim: usize,
    with_rho: bool,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Transform {
    fn new(dim: usize, spec: KernelSpec, b: &HyperBounds) -> Self {
        let with_rho = spec.seed_mode == SeedMode::Crn;
        let mut lower = vec![b.lengthscale.0.ln(); dim];
        let mut upper = vec![b.lengthscale.1.ln(); dim];
        lower.extend([b.variance.0.ln(), b.nugget.0.ln()]);
        upper.extend([b.variance.1.ln(), b.nugget.1.ln()]);
        if with_rho {
            lower.push(logit(b.rho.0));
            upper.push(logit(b.rho.1));
        }
        Transform {
            dim,
            with_rho,
            lower,
            upper,
        }
    }

    fn decode(&self, z: &[f64]) -> KernelParams {
        let d = self.dim;
        KernelParams {
            lengthscales: z[..d].iter().map(|v| v.exp()).collect(),
            variance: z[d].exp(),
            nugget: z[d + 1].exp(),
            // pooled kernels never read rho; keep a valid placeholder
            rho: if self.with_rho { sigmoid(z[d + 2]) } else { 0.5 },
        }
    }

    fn encode(&self, p: &KernelParams) -> Vec<f64> {
        let mut z: Vec<f64> = p.lengthscales.iter().map(|l| l.ln()).collect();
        z.extend([p.variance.ln(), p.nugget.ln()]);
        if self.with_rho {
            z.push(logit(p.rho));
        }
        for ((v, lo), hi) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
        z
    }

    fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.random_range(*l..=*u))
            .collect()
    }
}

/// Maximum-likelihood fit with the default options.
pub fn fit<R: Rng + ?Sized>(
    data: &Dataset,
    spec: KernelSpec,
    bounds: &HyperBounds,
    n_restarts: usize,
    rng: &mut R,
) -> Result<GpModel> {
    let opts = FitOptions {
        bounds: bounds.clone(),
        n_restarts,
        ..FitOptions::default()
    };
    fit_with(data, spec, &opts, rng)
}

/// Multi-start Nelder–Mead maximization of the log marginal likelihood in
/// transformed coordinates. Returns the best local optimum over all
/// restarts; each local search only ever improves on its start point.
pub fn fit_with<R: Rng + ?Sized>(
    data: &Dataset,
    spec: KernelSpec,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<GpModel> {
    if data.len() < 2 {
        return Err(Error::invalid("fitting needs at least two observations"));
    }
    if opts.n_restarts == 0 {
        return Err(Error::invalid("n_restarts must be at least 1"));
    }
    opts.bounds.validate()?;
    let dim = data.inputs()[0].dim();
    let tf = Transform::new(dim, spec, &opts.bounds);
    let grid = TimeGrid::detect(data, spec.family);
    let objective = |z: &[f64]| -> f64 {
        let p = tf.decode(z);
        match gridded_or_dense(grid.as_ref(), data, &p, spec) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        }
    };

    let nm = NelderMead {
        max_evals: opts.max_evals,
        ..NelderMead::default()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..opts.n_restarts {
        let start = match (&opts.warm_start, r) {
            (Some(p), 0) if p.dim() == dim => tf.encode(p),
            (None, 0) => tf.center(),
            _ => tf.random(rng),
        };
        let m = nm.minimize(objective, &start, &tf.lower, &tf.upper);
        if m.f.is_finite() && best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((m.x, m.f));
        }
    }
    let (z, _) = best.ok_or_else(|| Error::FitFailure("no restart produced a factorizable covariance".into()))?;
    GpModel::new(data.clone(), tf.decode(&z), spec)
}
