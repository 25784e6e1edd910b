//! Trajectory-level and mean-behavior prediction with the CRN Gaussian
//! process, and the locally approximated CRNGP built from one independent
//! model per partition cell.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit_with, Dataset, FitOptions, GpModel, Prediction};
use crate::kernels::{AugmentedInput, KernelSpec};

/// Augmented inputs `(x, t_j, seed)` for every requested time.
pub fn trajectory_targets(x: &[f64], seed: u64, times: &[f64]) -> Vec<AugmentedInput> {
    times
        .iter()
        .map(|&t| AugmentedInput::new(x.to_vec(), t, seed))
        .collect()
}

/// Prediction of the replicate `(x, seed)` along `times`.
pub fn predict_trajectory(model: &GpModel, x: &[f64], seed: u64, times: &[f64]) -> Result<Prediction> {
    model.predict(&trajectory_targets(x, seed, times))
}

/// Seed-marginal prediction: a trajectory at a seed label never used in
/// training.
pub fn predict_mean_behavior(model: &GpModel, x: &[f64], times: &[f64]) -> Result<Prediction> {
    predict_trajectory(model, x, model.fresh_seed(), times)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Time,
    Param(usize),
}

impl Axis {
    pub fn coordinate(self, p: &AugmentedInput) -> f64 {
        match self {
            Axis::Time => p.t,
            Axis::Param(j) => p.x[j],
        }
    }
}

/// Cells `[c_l, c_{l+1})` of `[0,1]` along one axis; the last cell is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    axis: Axis,
    cut_points: Vec<f64>,
}

impl Partition {
    pub fn new(axis: Axis, cut_points: Vec<f64>) -> Result<Self> {
        if cut_points.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
            return Err(Error::invalid("cut points must lie strictly inside (0, 1)"));
        }
        if cut_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("cut points must be strictly increasing"));
        }
        Ok(Partition { axis, cut_points })
    }

    /// A single cell.
    pub fn whole(axis: Axis) -> Self {
        Partition {
            axis,
            cut_points: Vec::new(),
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn cut_points(&self) -> &[f64] {
        &self.cut_points
    }

    pub fn n_cells(&self) -> usize {
        self.cut_points.len() + 1
    }

    pub fn bounds(&self, cell: usize) -> (f64, f64) {
        let lo = if cell == 0 { 0.0 } else { self.cut_points[cell - 1] };
        let hi = self.cut_points.get(cell).copied().unwrap_or(1.0);
        (lo, hi)
    }

    pub fn cell_of(&self, v: f64) -> usize {
        self.cut_points.iter().take_while(|&&c| c <= v).count()
    }

    /// Distance from `v` to the closure of the cell (0 inside).
    pub fn distance(&self, v: f64, cell: usize) -> f64 {
        let (lo, hi) = self.bounds(cell);
        (lo - v).max(v - hi).max(0.0)
    }

    /// Inverse-distance weights `w_l / sum w`, `w_l = 1 / (dist_l + epsilon)`.
    pub fn weights(&self, v: f64, epsilon: f64) -> Vec<f64> {
        let w: Vec<f64> = (0..self.n_cells())
            .map(|l| 1.0 / (self.distance(v, l) + epsilon))
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|wl| wl / total).collect()
    }
}

/// Independent CRNGPs per partition cell, combined on realizations.
#[derive(Debug, Clone)]
pub struct LocalCrngp {
    pub partition: Partition,
    pub models: Vec<GpModel>,
    pub epsilon: f64,
    /// Per-cell draws reuse one normal stream instead of independent ones.
    pub coupled: bool,
}

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Rows of `data` per cell of `partition`.
pub fn cell_rows(data: &Dataset, partition: &Partition) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); partition.n_cells()];
    for (i, p) in data.inputs().iter().enumerate() {
        rows[partition.cell_of(partition.axis.coordinate(p))].push(i);
    }
    rows
}

/// Fits one model per cell, each with its own hyperparameters. Cells are
/// fitted in order from the same rng.
pub fn fit_local<R: Rng + ?Sized>(
    data: &Dataset,
    partition: &Partition,
    spec: KernelSpec,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<LocalCrngp> {
    let models = if partition.n_cells() == 1 {
        vec![fit_with(data, spec, opts, rng)?]
    } else {
        let rows = cell_rows(data, partition);
        if let Some((cell, r)) = rows.iter().enumerate().find(|(_, r)| r.len() < 2) {
            return Err(Error::PartitionInfeasible {
                cell,
                rows: r.len(),
                required: 2,
            });
        }
        rows.iter()
            .map(|r| fit_with(&data.subset(r)?, spec, opts, rng))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(LocalCrngp {
        partition: partition.clone(),
        models,
        epsilon: DEFAULT_EPSILON,
        coupled: false,
    })
}

impl LocalCrngp {
    pub fn weights(&self, target: &AugmentedInput) -> Vec<f64> {
        self.partition
            .weights(self.partition.axis.coordinate(target), self.epsilon)
    }

    /// Combined realizations `sum_l alpha_l(target) Y^(l)(target)`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        targets: &[AugmentedInput],
        n_draws: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>> {
        let per_cell: Vec<Vec<DVector<f64>>> = if self.coupled {
            let sub: u64 = rng.random();
            self.models
                .iter()
                .map(|m| m.sample_posterior(targets, n_draws, &mut ChaCha8Rng::seed_from_u64(sub)))
                .collect::<Result<_>>()?
        } else {
            self.models
                .iter()
                .map(|m| m.sample_joint(targets, n_draws, rng))
                .collect::<Result<_>>()?
        };
        let weights: Vec<Vec<f64>> = targets.iter().map(|p| self.weights(p)).collect();
        Ok((0..n_draws)
            .map(|k| {
                DVector::from_fn(targets.len(), |j, _| {
                    weights[j]
                        .iter()
                        .zip(&per_cell)
                        .map(|(w, draws)| w * draws[k][j])
                        .sum()
                })
            })
            .collect())
    }

    /// Mean of the combined realization (exact, the combination is linear).
    pub fn predict_mean(&self, targets: &[AugmentedInput]) -> Result<DVector<f64>> {
        let means: Vec<DVector<f64>> = self
            .models
            .iter()
            .map(|m| m.predict_mean(targets))
            .collect::<Result<_>>()?;
        Ok(DVector::from_fn(targets.len(), |j, _| {
            self.weights(&targets[j])
                .iter()
                .zip(&means)
                .map(|(w, m)| w * m[j])
                .sum()
        }))
    }

    /// Routes each new observation to the cell containing it.
    pub fn condition_many(&self, inputs: Vec<AugmentedInput>, outputs: Vec<f64>) -> Result<LocalCrngp> {
        let n = self.partition.n_cells();
        let mut split: Vec<(Vec<AugmentedInput>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
        for (p, y) in inputs.into_iter().zip(outputs) {
            let l = self.partition.cell_of(self.partition.axis.coordinate(&p));
            split[l].0.push(p);
            split[l].1.push(y);
        }
        let models = self
            .models
            .iter()
            .zip(split)
            .map(|(m, (x, y))| m.condition_many(x, y))
            .collect::<Result<_>>()?;
        Ok(LocalCrngp {
            models,
            ..self.clone()
        })
    }

    pub fn observed_seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.models.iter().flat_map(|m| m.observed_seeds()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn fresh_seed(&self) -> u64 {
        self.models.iter().map(|m| m.fresh_seed()).max().unwrap_or(0)
    }
}

/// Combined realizations of the replicate `(x, seed)` along `times`.
pub fn sample_local<R: Rng + ?Sized>(
    model: &LocalCrngp,
    x: &[f64],
    seed: u64,
    times: &[f64],
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    model.sample(&trajectory_targets(x, seed, times), n_draws, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::HyperBounds;
    use crate::kernels::{KernelFamily, KernelParams};

    fn toy_model(nugget: f64) -> (GpModel, Vec<Vec<f64>>) {
        let times = [0.2, 0.6, 1.0];
        let mut inputs = Vec::new();
        let mut y = Vec::new();
        let mut trajs = Vec::new();
        for (k, x) in [0.1f64, 0.5, 0.9].iter().enumerate() {
            let mut tr = Vec::new();
            for &t in &times {
                let v = (4.0 * x).sin() * t + 0.2 * k as f64;
                inputs.push(AugmentedInput::new(vec![*x], t, k as u64));
                y.push(v);
                tr.push(v);
            }
            trajs.push(tr);
        }
        let params = KernelParams::new(vec![0.3, 0.5], 1.0, 0.5, nugget).unwrap();
        (GpModel::new(Dataset::new(inputs, y).unwrap(), params, KernelSpec::default()).unwrap(), trajs)
    }

    #[test]
    fn reproduces_training_trajectories() {
        let (model, trajs) = toy_model(1e-6);
        for (k, x) in [0.1, 0.5, 0.9].iter().enumerate() {
            let p = predict_trajectory(&model, &[*x], k as u64, &[0.2, 0.6, 1.0]).unwrap();
            for (m, y) in p.mean.iter().zip(&trajs[k]) {
                assert!((m - y).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn unobserved_seed_far_away_reverts_to_prior() {
        let inputs = vec![AugmentedInput::new(vec![0.0], 0.0, 0), AugmentedInput::new(vec![0.02], 0.0, 1)];
        let data = Dataset::unscaled(inputs, vec![1.0, 2.0]).unwrap();
        let params = KernelParams::new(vec![0.05, 0.05], 1.0, 0.5, 1e-4).unwrap();
        let model = GpModel::new(data, params, KernelSpec::default()).unwrap();
        let p = predict_mean_behavior(&model, &[1.0], &[1.0]).unwrap();
        assert!(p.mean[0].abs() < 1e-4);
    }

    #[test]
    fn mean_behavior_without_data() {
        let params = KernelParams::new(vec![0.3, 0.3], 2.0, 0.5, 1e-3).unwrap();
        let model = GpModel::prior(params, KernelSpec::default()).unwrap();
        let p = predict_mean_behavior(&model, &[0.4], &[0.5, 0.7]).unwrap();
        assert_eq!(p.mean.as_slice(), &[0.0, 0.0]);
        assert!((p.cov[(0, 0)] - 2.001).abs() < 1e-12);
    }

    #[test]
    fn mean_behavior_two_seed_closed_form() {
        let (s2, tau2, rho) = (1.3, 0.01, 0.56);
        let inputs = vec![AugmentedInput::new(vec![0.4], 0.5, 0), AugmentedInput::new(vec![0.4], 0.5, 1)];
        let (y0, y1) = (0.7, -0.2);
        let data = Dataset::unscaled(inputs, vec![y0, y1]).unwrap();
        let params = KernelParams::new(vec![0.3, 0.3], s2, rho, tau2).unwrap();
        let model = GpModel::new(data, params, KernelSpec::default()).unwrap();
        let p = predict_mean_behavior(&model, &[0.4], &[0.5]).unwrap();
        // 1^T K^{-1} y for K = [[a, b], [b, a]] is (y0 + y1) / (a + b)
        let expect = rho * s2 * (y0 + y1) / (s2 + tau2 + rho * s2);
        assert!((p.mean[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn mean_behavior_is_less_certain_than_observed_replicate() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 6;
            let inputs: Vec<_> = (0..n)
                .map(|i| AugmentedInput::new(vec![rng.random()], rng.random(), (i % 3) as u64))
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let params = KernelParams::new(
                vec![rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)],
                rng.random_range(0.5..3.0),
                rng.random_range(0.05..0.95),
                1e-4,
            )
            .unwrap();
            let model = GpModel::new(Dataset::new(inputs.clone(), y).unwrap(), params, KernelSpec::default()).unwrap();
            for p in &inputs {
                let rep = predict_trajectory(&model, &p.x, p.seed, &[p.t]).unwrap();
                let mb = predict_mean_behavior(&model, &p.x, &[p.t]).unwrap();
                assert!(mb.cov[(0, 0)] >= rep.cov[(0, 0)] - 1e-12);
            }
        }
    }

    #[test]
    fn partition_geometry() {
        let part = Partition::new(Axis::Time, vec![0.5]).unwrap();
        assert_eq!(part.cell_of(0.0), 0);
        assert_eq!(part.cell_of(0.5), 1);
        assert_eq!(part.cell_of(1.0), 1);
        let w = part.weights(0.5, DEFAULT_EPSILON);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        let w = part.weights(0.25, 1e-6);
        // the other cell is 0.25 away
        assert!((w[1] - 1e-6 / 0.25).abs() < 1e-9);
        assert!(Partition::new(Axis::Time, vec![0.6, 0.4]).is_err());
        assert!(Partition::new(Axis::Time, vec![0.0]).is_err());
    }

    #[test]
    fn thin_cell_is_infeasible() {
        let inputs: Vec<_> = (0..6)
            .map(|i| AugmentedInput::new(vec![i as f64 / 6.0], if i == 0 { 0.9 } else { 0.1 }, 0))
            .collect();
        let data = Dataset::new(inputs, (0..6).map(|i| i as f64).collect()).unwrap();
        let part = Partition::new(Axis::Time, vec![0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = fit_local(&data, &part, KernelSpec::default(), &FitOptions::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::PartitionInfeasible { cell: 1, rows: 1, .. }));
    }

    #[test]
    fn single_cell_matches_global_fit() {
        let (model, _) = toy_model(1e-3);
        let data = model.data().clone();
        let opts = FitOptions {
            n_restarts: 2,
            bounds: HyperBounds::default(),
            ..FitOptions::default()
        };
        let local = fit_local(
            &data,
            &Partition::whole(Axis::Time),
            KernelSpec::crn(KernelFamily::Gaussian),
            &opts,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let global = fit_with(&data, KernelSpec::crn(KernelFamily::Gaussian), &opts, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let targets = trajectory_targets(&[0.3], 5, &[0.1, 0.5, 0.9]);
        let a = local.predict_mean(&targets).unwrap();
        let b = global.predict_mean(&targets).unwrap();
        assert!((a - b).amax() < 1e-10);
        let da = sample_local(&local, &[0.3], 1, &[0.1, 0.5], 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let db = global
            .sample_posterior(&trajectory_targets(&[0.3], 1, &[0.1, 0.5]), 3, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        for (u, v) in da.iter().zip(&db) {
            assert!((u - v).amax() < 1e-12);
        }
    }

    #[test]
    fn midpoint_draw_follows_own_cell() {
        let (model, _) = toy_model(1e-3);
        let shifted = GpModel::new(
            Dataset::new(model.data().inputs().to_vec(), model.data().raw_outputs().iter().map(|v| v + 5.0).collect())
                .unwrap(),
            model.params().clone(),
            model.spec(),
        )
        .unwrap();
        let local = LocalCrngp {
            partition: Partition::new(Axis::Time, vec![0.5]).unwrap(),
            models: vec![model.clone(), shifted],
            epsilon: 1e-6,
            coupled: true,
        };
        let targets = trajectory_targets(&[0.5], 1, &[0.25]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let combined = local.sample(&targets, 1, &mut rng).unwrap();
        let own = model.sample_posterior(&targets, 1, &mut ChaCha8Rng::seed_from_u64(ChaCha8Rng::seed_from_u64(6).random())).unwrap();
        assert!((combined[0][0] - own[0][0]).abs() < 1e-3);
    }

    #[test]
    fn local_conditioning_routes_by_cell() {
        let (model, _) = toy_model(1e-3);
        let local = LocalCrngp {
            partition: Partition::new(Axis::Time, vec![0.5]).unwrap(),
            models: vec![model.clone(), model],
            epsilon: 1e-6,
            coupled: false,
        };
        let cond = local
            .condition_many(trajectory_targets(&[0.2], 3, &[0.1, 0.9, 1.0]), vec![0.0, 1.0, 1.5])
            .unwrap();
        assert_eq!(cond.models[0].len(), 10);
        assert_eq!(cond.models[1].len(), 11);
        assert_eq!(cond.fresh_seed(), 4);
    }
}
