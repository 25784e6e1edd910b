use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{build_covariance, correlation, seed_factor, KernelFamily, KernelParams, KernelSpec};

/// Log marginal likelihood of the standardized outputs,
/// `-1/2 y^T (K + tau^2 I)^{-1} y - 1/2 log det(K + tau^2 I) - N/2 log 2 pi`.
///
/// Datasets observed on a shared time grid under the Gaussian family use
/// the Kronecker-factored route; everything else goes through a dense
/// Cholesky factorization. Both give the same value.
pub fn log_marginal_likelihood(data: &Dataset, params: &KernelParams, spec: KernelSpec) -> Result<f64> {
    match TimeGrid::detect(data, spec.family) {
        Some(grid) => gridded(&grid, data, params, spec),
        None => log_marginal_likelihood_dense(data, params, spec),
    }
}

pub(crate) fn gridded_or_dense(
    grid: Option<&TimeGrid>,
    data: &Dataset,
    params: &KernelParams,
    spec: KernelSpec,
) -> Result<f64> {
    match grid {
        Some(g) => gridded(g, data, params, spec),
        None => log_marginal_likelihood_dense(data, params, spec),
    }
}

pub fn log_marginal_likelihood_dense(data: &Dataset, params: &KernelParams, spec: KernelSpec) -> Result<f64> {
    params.validate()?;
    let k = build_covariance(data.inputs(), params, spec, true)?;
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::numerical("covariance not positive definite", Some(params)))?;
    let l = chol.l_dirty();
    let mut v = data.outputs().clone();
    l.solve_lower_triangular_mut(&mut v);
    let quad = v.norm_squared();
    let logdet: f64 = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let n = data.len() as f64;
    Ok(-0.5 * quad - 0.5 * logdet - 0.5 * n * (2.0 * PI).ln())
}

/// Kronecker route. Returns an invalid-argument error when the dataset is
/// not a complete `(x, seed) x time` grid or the family is not separable.
pub fn log_marginal_likelihood_gridded(data: &Dataset, params: &KernelParams, spec: KernelSpec) -> Result<f64> {
    let grid = TimeGrid::detect(data, spec.family)
        .ok_or_else(|| Error::invalid("dataset is not a complete time grid under a separable kernel"))?;
    gridded(&grid, data, params, spec)
}

/// Row layout of a dataset where every `(x, seed)` group is observed at the
/// same set of times.
#[derive(Debug)]
pub(crate) struct TimeGrid {
    /// First row of each group (carries the group's `x` and seed).
    group_rows: Vec<usize>,
    times: Vec<f64>,
    /// `rows[g * T + j]` is the dataset row for group `g` at `times[j]`.
    rows: Vec<usize>,
}

impl TimeGrid {
    pub(crate) fn detect(data: &Dataset, family: KernelFamily) -> Option<TimeGrid> {
        if family != KernelFamily::Gaussian || data.is_empty() {
            return None;
        }
        let inputs = data.inputs();
        let mut times: Vec<f64> = inputs.iter().map(|p| p.t).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup();
        let nt = times.len();
        if inputs.len() % nt != 0 {
            return None;
        }
        let t_index: HashMap<u64, usize> = times.iter().enumerate().map(|(j, t)| (t.to_bits(), j)).collect();

        let mut group_of: HashMap<(Vec<u64>, u64), usize> = HashMap::new();
        let mut group_rows = Vec::new();
        let mut rows: Vec<usize> = Vec::new();
        for (i, p) in inputs.iter().enumerate() {
            let key = (p.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), p.seed);
            let g = *group_of.entry(key).or_insert_with(|| {
                group_rows.push(i);
                rows.extend(std::iter::repeat_n(usize::MAX, nt));
                group_rows.len() - 1
            });
            let slot = &mut rows[g * nt + t_index[&p.t.to_bits()]];
            if *slot != usize::MAX {
                return None;
            }
            *slot = i;
        }
        if rows.contains(&usize::MAX) {
            return None;
        }
        Some(TimeGrid {
            group_rows,
            times,
            rows,
        })
    }
}

fn gridded(grid: &TimeGrid, data: &Dataset, params: &KernelParams, spec: KernelSpec) -> Result<f64> {
    params.validate()?;
    let inputs = data.inputs();
    let d = inputs[0].x.len();
    if params.dim() != d + 1 {
        return Err(Error::invalid("lengthscale count does not match the inputs"));
    }
    let ls_x = &params.lengthscales[..d];
    let ls_t = params.lengthscales[d];
    let ng = grid.group_rows.len();
    let nt = grid.times.len();

    // Group correlation (x part times seed part) and time correlation.
    let a = DMatrix::from_fn(ng, ng, |g, h| {
        let (p, q) = (&inputs[grid.group_rows[g]], &inputs[grid.group_rows[h]]);
        let d2: f64 = p
            .x
            .iter()
            .zip(&q.x)
            .zip(ls_x)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        correlation(spec.family, d2) * seed_factor(p.seed, q.seed, params.rho, spec.seed_mode)
    });
    let b = DMatrix::from_fn(nt, nt, |j, k| {
        correlation(spec.family, ((grid.times[j] - grid.times[k]) / ls_t).powi(2))
    });
    let eig = SymmetricEigen::new(b);
    let y = data.outputs();
    let ymat = DMatrix::from_fn(ng, nt, |g, j| y[grid.rows[g * nt + j]]);
    let rotated = ymat * &eig.eigenvectors;

    let mut quad = 0.0;
    let mut logdet = 0.0;
    for j in 0..nt {
        let gamma = eig.eigenvalues[j].max(0.0);
        let mut m = &a * (params.variance * gamma);
        for i in 0..ng {
            m[(i, i)] += params.nugget;
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::numerical("covariance not positive definite", Some(params)))?;
        let l = chol.l_dirty();
        let mut v: DVector<f64> = rotated.column(j).into_owned();
        l.solve_lower_triangular_mut(&mut v);
        quad += v.norm_squared();
        logdet += 2.0 * (0..ng).map(|i| l[(i, i)].ln()).sum::<f64>();
    }
    let n = data.len() as f64;
    Ok(-0.5 * quad - 0.5 * logdet - 0.5 * n * (2.0 * PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{augmented_kernel, AugmentedInput};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_closed_form() {
        let data = Dataset::unscaled(vec![AugmentedInput::new(vec![], 0.5, 0)], vec![0.3]).unwrap();
        let params = KernelParams::new(vec![0.5], 1.0, 0.5, 0.001).unwrap();
        let lml = log_marginal_likelihood(&data, &params, KernelSpec::default()).unwrap();
        assert!((lml - (-0.964_393_328_326_259_3)).abs() < 1e-9, "{lml}");
    }

    #[test]
    fn duplicates_are_regularized() {
        let p = AugmentedInput::new(vec![0.3], 0.5, 0);
        let data = Dataset::unscaled(vec![p.clone(), p], vec![0.4, 0.4]).unwrap();
        let params = KernelParams::new(vec![0.5, 0.5], 1.0, 0.5, 1e-8).unwrap();
        let lml = log_marginal_likelihood_dense(&data, &params, KernelSpec::default()).unwrap();
        assert!(lml.is_finite());
    }

    /// Explicit inverse and determinant through nalgebra's LU.
    fn naive_lml(data: &Dataset, params: &KernelParams, spec: KernelSpec) -> f64 {
        let n = data.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            augmented_kernel(&data.inputs()[i], &data.inputs()[j], params, spec).unwrap()
                + if i == j { params.nugget } else { 0.0 }
        });
        let det = k.clone().determinant();
        let inv = k.try_inverse().unwrap();
        let y = data.outputs();
        let quad = (y.transpose() * inv * y)[(0, 0)];
        -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * PI).ln()
    }

    #[test]
    fn dense_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let n = rng.random_range(1..=6);
            let inputs: Vec<_> = (0..n)
                .map(|_| AugmentedInput::new(vec![rng.random()], rng.random(), rng.random_range(0..3)))
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let data = Dataset::unscaled(inputs, y).unwrap();
            let params = KernelParams::new(
                vec![rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)],
                rng.random_range(0.1..5.0),
                rng.random_range(0.01..0.99),
                rng.random_range(1e-3..0.1),
            )
            .unwrap();
            for family in [KernelFamily::Gaussian, KernelFamily::Matern52] {
                let spec = KernelSpec::crn(family);
                let a = log_marginal_likelihood_dense(&data, &params, spec).unwrap();
                let b = naive_lml(&data, &params, spec);
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gridded_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let times = [0.2, 0.4, 0.6, 0.8, 1.0];
        for case in 0..20 {
            let groups = rng.random_range(2..12);
            let mut inputs = Vec::new();
            let mut y = Vec::new();
            for g in 0..groups {
                let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
                let seed = (g % 3) as u64;
                for &t in times.iter().rev() {
                    inputs.push(AugmentedInput::new(x.clone(), t, seed));
                    y.push(rng.random_range(-3.0..3.0));
                }
            }
            let data = Dataset::new(inputs, y).unwrap();
            let params = KernelParams::new(
                (0..4).map(|_| rng.random_range(0.05..2.0)).collect(),
                rng.random_range(0.1..5.0),
                rng.random_range(0.01..0.99),
                10f64.powf(rng.random_range(-6.0..-1.0)),
            )
            .unwrap();
            let spec = if case % 2 == 0 {
                KernelSpec::crn(KernelFamily::Gaussian)
            } else {
                KernelSpec::pooled(KernelFamily::Gaussian)
            };
            let a = log_marginal_likelihood_gridded(&data, &params, spec).unwrap();
            let b = log_marginal_likelihood_dense(&data, &params, spec).unwrap();
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn incomplete_grid_is_not_gridded() {
        let inputs = vec![
            AugmentedInput::new(vec![0.1], 0.0, 0),
            AugmentedInput::new(vec![0.1], 1.0, 0),
            AugmentedInput::new(vec![0.5], 0.0, 0),
            AugmentedInput::new(vec![0.5], 0.0, 1),
        ];
        let data = Dataset::unscaled(inputs, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(TimeGrid::detect(&data, KernelFamily::Gaussian).is_none());
        let params = KernelParams::new(vec![0.5, 0.5], 1.0, 0.5, 1e-3).unwrap();
        assert!(log_marginal_likelihood_gridded(&data, &params, KernelSpec::default()).is_err());
        assert!(log_marginal_likelihood(&data, &params, KernelSpec::default()).is_ok());
    }
}
