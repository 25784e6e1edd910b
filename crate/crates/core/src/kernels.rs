//! Covariance kernels over augmented inputs `(x, t, seed)`.
//!
//! The continuous part `(x, t)` uses a stationary anisotropic kernel
//! (Gaussian or Matérn-5/2). The seed part is categorical: two inputs with
//! the same seed label are fully correlated, two inputs with different
//! labels are scaled by a constant `rho` (the common-random-number kernel).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary family used for the continuous coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Gaussian,
    Matern52,
}

/// How seed labels enter the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// Cross-seed covariance scaled by `rho`.
    #[default]
    Crn,
    /// Seed labels ignored; the model tracks mean behavior and the nugget
    /// absorbs replicate scatter.
    Pooled,
}

/// Kernel family plus seed handling. Together with [`KernelParams`] this
/// fully determines a covariance function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub seed_mode: SeedMode,
}

impl KernelSpec {
    pub fn crn(family: KernelFamily) -> Self {
        KernelSpec {
            family,
            seed_mode: SeedMode::Crn,
        }
    }

    pub fn pooled(family: KernelFamily) -> Self {
        KernelSpec {
            family,
            seed_mode: SeedMode::Pooled,
        }
    }
}

/// Hyperparameters: one lengthscale per continuous coordinate (the time
/// coordinate last), process variance, seed correlation and nugget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    pub rho: f64,
    pub nugget: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, variance: f64, rho: f64, nugget: f64) -> Result<Self> {
        let params = KernelParams {
            lengthscales,
            variance,
            rho,
            nugget,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::invalid("at least one lengthscale is required"));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::invalid(format!("lengthscale must be positive, got {l}")));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::invalid(format!(
                "variance must be positive, got {}",
                self.variance
            )));
        }
        if !(self.nugget.is_finite() && self.nugget > 0.0) {
            return Err(Error::invalid(format!(
                "nugget must be positive, got {}",
                self.nugget
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Number of continuous coordinates (parameters plus time).
    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// A simulator input augmented with an output-time coordinate and a seed
/// label. All continuous coordinates live in the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedInput {
    pub x: Vec<f64>,
    pub t: f64,
    pub seed: u64,
}

impl AugmentedInput {
    pub fn new(x: Vec<f64>, t: f64, seed: u64) -> Self {
        AugmentedInput { x, t, seed }
    }

    /// Validating constructor: every continuous coordinate must be in [0, 1].
    pub fn checked(x: Vec<f64>, t: f64, seed: u64) -> Result<Self> {
        if let Some(v) = x
            .iter()
            .chain(std::iter::once(&t))
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!(
                "coordinate {v} outside the unit interval"
            )));
        }
        Ok(AugmentedInput { x, t, seed })
    }

    /// Continuous coordinates `(x_1, .., x_d, t)`.
    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().copied().chain(std::iter::once(self.t))
    }

    pub fn dim(&self) -> usize {
        self.x.len() + 1
    }
}

/// Scaled squared distance `sum_d ((a_d - b_d) / l_d)^2`.
fn scaled_sq_dist(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>, ls: &[f64]) -> f64 {
    a.zip(b)
        .zip(ls)
        .map(|((a, b), l)| {
            let z = (a - b) / l;
            z * z
        })
        .sum()
}

/// Unit-variance correlation as a function of the scaled squared distance.
pub(crate) fn correlation(family: KernelFamily, sq_dist: f64) -> f64 {
    match family {
        KernelFamily::Gaussian => (-0.5 * sq_dist).exp(),
        KernelFamily::Matern52 => {
            let r = (5.0 * sq_dist).sqrt();
            (1.0 + r + r * r / 3.0) * (-r).exp()
        }
    }
}

fn check_dims(a: usize, b: usize, params: &KernelParams) -> Result<()> {
    if a != b || a != params.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {a} vs {b} coordinates with {} lengthscales",
            params.dim()
        )));
    }
    Ok(())
}

/// Stationary kernel on continuous coordinates.
pub fn continuous_kernel(
    a: &[f64],
    b: &[f64],
    params: &KernelParams,
    family: KernelFamily,
) -> Result<f64> {
    check_dims(a.len(), b.len(), params)?;
    let d2 = scaled_sq_dist(a.iter().copied(), b.iter().copied(), &params.lengthscales);
    Ok(params.variance * correlation(family, d2))
}

/// Seed factor of the product kernel.
#[inline]
pub fn seed_factor(s1: u64, s2: u64, rho: f64, mode: SeedMode) -> f64 {
    match mode {
        SeedMode::Pooled => 1.0,
        SeedMode::Crn if s1 == s2 => 1.0,
        SeedMode::Crn => rho,
    }
}

/// Common-random-number kernel: the continuous kernel on `(x, t)`, scaled
/// by `rho` when the seed labels differ.
pub fn crn_kernel(
    p: &AugmentedInput,
    q: &AugmentedInput,
    params: &KernelParams,
    family: KernelFamily,
) -> Result<f64> {
    augmented_kernel(p, q, params, KernelSpec::crn(family))
}

/// Kernel between augmented inputs under an arbitrary seed mode.
pub fn augmented_kernel(
    p: &AugmentedInput,
    q: &AugmentedInput,
    params: &KernelParams,
    spec: KernelSpec,
) -> Result<f64> {
    check_dims(p.dim(), q.dim(), params)?;
    Ok(augmented_kernel_unchecked(p, q, params, spec))
}

#[inline]
pub(crate) fn augmented_kernel_unchecked(
    p: &AugmentedInput,
    q: &AugmentedInput,
    params: &KernelParams,
    spec: KernelSpec,
) -> f64 {
    let d2 = scaled_sq_dist(p.coords(), q.coords(), &params.lengthscales);
    params.variance
        * correlation(spec.family, d2)
        * seed_factor(p.seed, q.seed, params.rho, spec.seed_mode)
}

fn check_inputs(inputs: &[AugmentedInput], params: &KernelParams) -> Result<()> {
    for p in inputs {
        check_dims(p.dim(), params.dim(), params)?;
    }
    Ok(())
}

/// Covariance matrix `K[i][j] = k(inputs[i], inputs[j])`, optionally with
/// the nugget added to every diagonal entry.
pub fn build_covariance(
    inputs: &[AugmentedInput],
    params: &KernelParams,
    spec: KernelSpec,
    with_nugget: bool,
) -> Result<DMatrix<f64>> {
    if inputs.is_empty() {
        return Err(Error::invalid("covariance of an empty input list"));
    }
    check_inputs(inputs, params)?;
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = augmented_kernel_unchecked(&inputs[i], &inputs[j], params, spec);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        if with_nugget {
            k[(i, i)] += params.nugget;
        }
    }
    Ok(k)
}

/// Rectangular cross-covariance `K[i][j] = k(a[i], b[j])`.
pub fn cross_covariance(
    a: &[AugmentedInput],
    b: &[AugmentedInput],
    params: &KernelParams,
    spec: KernelSpec,
) -> Result<DMatrix<f64>> {
    check_inputs(a, params)?;
    check_inputs(b, params)?;
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        augmented_kernel_unchecked(&a[i], &b[j], params, spec)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(ls: Vec<f64>, var: f64, rho: f64, nugget: f64) -> KernelParams {
        KernelParams::new(ls, var, rho, nugget).unwrap()
    }

    #[test]
    fn zero_distance_gives_variance() {
        let p = params(vec![0.3, 0.7], 2.5, 0.5, 1e-3);
        for fam in [KernelFamily::Gaussian, KernelFamily::Matern52] {
            let v = continuous_kernel(&[0.2, 0.4], &[0.2, 0.4], &p, fam).unwrap();
            assert_eq!(v, 2.5);
        }
    }

    #[test]
    fn gaussian_closed_form() {
        let p = params(vec![0.5], 1.0, 0.5, 1e-3);
        let v = continuous_kernel(&[0.0], &[0.5], &p, KernelFamily::Gaussian).unwrap();
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-12);

        let p = params(vec![0.01], 1.0, 0.5, 1e-3);
        let v = continuous_kernel(&[0.0], &[1.0], &p, KernelFamily::Gaussian).unwrap();
        assert!(v < 1e-300);
    }

    #[test]
    fn matern52_closed_form() {
        // r = sqrt(5) * 0.5 / 0.5
        let p = params(vec![0.5], 1.0, 0.5, 1e-3);
        let v = continuous_kernel(&[0.0], &[0.5], &p, KernelFamily::Matern52).unwrap();
        let r = 5f64.sqrt();
        assert!((v - (1.0 + r + r * r / 3.0) * (-r).exp()).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = params(vec![0.5, 0.5], 1.0, 0.5, 1e-3);
        assert!(matches!(
            continuous_kernel(&[0.0], &[0.5], &p, KernelFamily::Gaussian),
            Err(Error::InvalidArgument(_))
        ));
        let a = AugmentedInput::new(vec![0.1, 0.2], 0.0, 0);
        let b = AugmentedInput::new(vec![0.1], 0.0, 0);
        assert!(crn_kernel(&a, &b, &p, KernelFamily::Gaussian).is_err());
    }

    #[test]
    fn crn_cases() {
        let p = params(vec![0.5], 1.0, 0.56, 1e-3);
        let a = AugmentedInput::new(vec![], 0.0, 3);
        let same = crn_kernel(&a, &a, &p, KernelFamily::Gaussian).unwrap();
        assert_eq!(same, 1.0);
        let b = AugmentedInput::new(vec![], 0.0, 7);
        let cross = crn_kernel(&a, &b, &p, KernelFamily::Gaussian).unwrap();
        assert!((cross - 0.56).abs() < 1e-15);
        let c = AugmentedInput::new(vec![], 0.5, 7);
        let v = crn_kernel(&a, &c, &p, KernelFamily::Gaussian).unwrap();
        assert!((v - 0.339_657_169_439_074_7).abs() < 1e-12);
    }

    #[test]
    fn covariance_small_cases() {
        let p = params(vec![0.4, 0.4], 1.5, 0.3, 0.01);
        let a = AugmentedInput::new(vec![0.2], 0.5, 0);
        let k = build_covariance(std::slice::from_ref(&a), &p, KernelSpec::default(), true).unwrap();
        assert_eq!(k.shape(), (1, 1));
        assert!((k[(0, 0)] - 1.51).abs() < 1e-15);

        let b = AugmentedInput::new(vec![0.2], 0.5, 1);
        let k = build_covariance(&[a, b], &p, KernelSpec::default(), true).unwrap();
        assert!((k[(0, 0)] - 1.51).abs() < 1e-15);
        assert!((k[(1, 1)] - 1.51).abs() < 1e-15);
        assert!((k[(0, 1)] - 0.45).abs() < 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
    }

    #[test]
    fn covariance_matches_double_loop() {
        let p = params(vec![0.3, 0.6, 0.2], 0.8, 0.4, 1e-4);
        let pts: Vec<_> = (0..5)
            .map(|i| {
                let f = i as f64;
                AugmentedInput::new(vec![0.1 * f, 0.9 - 0.15 * f], 0.2 * f, (i % 2) as u64)
            })
            .collect();
        let k = build_covariance(&pts, &p, KernelSpec::default(), false).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                // independent evaluation of the closed form
                let xi: Vec<f64> = pts[i].coords().collect();
                let xj: Vec<f64> = pts[j].coords().collect();
                let mut s = 0.0;
                for d in 0..3 {
                    s += (xi[d] - xj[d]).powi(2) / (2.0 * p.lengthscales[d].powi(2));
                }
                let rho = if pts[i].seed == pts[j].seed { 1.0 } else { 0.4 };
                let expect = 0.8 * (-s).exp() * rho;
                assert!((k[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(KernelParams::new(vec![0.0], 1.0, 0.5, 1e-3).is_err());
        assert!(KernelParams::new(vec![0.1], -1.0, 0.5, 1e-3).is_err());
        assert!(KernelParams::new(vec![0.1], 1.0, 1.0, 1e-3).is_err());
        assert!(KernelParams::new(vec![0.1], 1.0, 0.5, 0.0).is_err());
        assert!(AugmentedInput::checked(vec![1.2], 0.0, 0).is_err());
    }

    fn arb_input(d: usize) -> impl Strategy<Value = AugmentedInput> {
        (prop::collection::vec(0.0..=1.0f64, d), 0.0..=1.0f64, 0u64..4)
            .prop_map(|(x, t, s)| AugmentedInput::new(x, t, s))
    }

    fn arb_params(d: usize) -> impl Strategy<Value = KernelParams> {
        (
            prop::collection::vec(0.01..2.0f64, d + 1),
            0.01..100.0f64,
            0.01..0.99f64,
            1e-8..0.1f64,
        )
            .prop_map(|(l, v, r, n)| KernelParams::new(l, v, r, n).unwrap())
    }

    proptest! {
        #[test]
        fn symmetric_and_separable(p in arb_input(2), q in arb_input(2), prm in arb_params(2),
                                    matern in any::<bool>()) {
            let fam = if matern { KernelFamily::Matern52 } else { KernelFamily::Gaussian };
            let kpq = crn_kernel(&p, &q, &prm, fam).unwrap();
            let kqp = crn_kernel(&q, &p, &prm, fam).unwrap();
            prop_assert_eq!(kpq, kqp);
            let a: Vec<f64> = p.coords().collect();
            let b: Vec<f64> = q.coords().collect();
            let c = continuous_kernel(&a, &b, &prm, fam).unwrap();
            prop_assert!(c > 0.0 || c == 0.0 && kpq == 0.0);
            prop_assert!(c <= prm.variance);
            if c > 0.0 {
                let ratio = kpq / c;
                let expect = if p.seed == q.seed { 1.0 } else { prm.rho };
                prop_assert!((ratio - expect).abs() <= 1e-15 * expect.max(1.0));
            }
        }

        #[test]
        fn strictly_increasing_in_rho(p in arb_input(1), q in arb_input(1),
                                      r1 in 0.01..0.98f64, dr in 0.001..0.01f64) {
            prop_assume!(p.seed != q.seed);
            let prm = KernelParams::new(vec![1.0, 1.0], 1.0, r1, 1e-4).unwrap();
            let prm2 = KernelParams { rho: r1 + dr, ..prm.clone() };
            let k1 = crn_kernel(&p, &q, &prm, KernelFamily::Gaussian).unwrap();
            let k2 = crn_kernel(&p, &q, &prm2, KernelFamily::Gaussian).unwrap();
            prop_assert!(k2 > k1);
        }
    }

    #[test]
    fn covariance_with_nugget_is_positive_definite() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=30);
            let d = rng.random_range(0..=3);
            let ls: Vec<f64> = (0..=d).map(|_| rng.random_range(0.01..2.0)).collect();
            let prm = KernelParams::new(
                ls,
                rng.random_range(0.01..100.0),
                rng.random_range(0.01..0.99),
                10f64.powf(rng.random_range(-8.0..-1.0)),
            )
            .unwrap();
            let pts: Vec<_> = (0..n)
                .map(|_| {
                    AugmentedInput::new(
                        (0..d).map(|_| rng.random::<f64>()).collect(),
                        rng.random(),
                        rng.random_range(0..4),
                    )
                })
                .collect();
            for fam in [KernelFamily::Gaussian, KernelFamily::Matern52] {
                let k = build_covariance(&pts, &prm, KernelSpec::crn(fam), true).unwrap();
                assert!(
                    k.clone().cholesky().is_some(),
                    "cholesky failed n={n} params={prm:?}"
                );
            }
        }
    }
}
