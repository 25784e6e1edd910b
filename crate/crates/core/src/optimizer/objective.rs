use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum of squared deviations between a trajectory and the observations.
pub fn objective_g(values: &[f64], observed: &[f64]) -> Result<f64> {
    if values.len() != observed.len() {
        return Err(Error::invalid(format!(
            "trajectory has {} values, observations have {}",
            values.len(),
            observed.len()
        )));
    }
    Ok(values.iter().zip(observed).map(|(v, y)| (v - y).powi(2)).sum())
}

/// Map between simulator outputs and the scale the surrogate is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    #[default]
    Identity,
    /// `ln(1 + y)`; for non-negative counts.
    Log1p,
    /// `sqrt(y)`; variance-stabilizing for counts.
    Sqrt,
}

impl OutputTransform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            OutputTransform::Identity => y,
            OutputTransform::Log1p => y.max(0.0).ln_1p(),
            OutputTransform::Sqrt => y.max(0.0).sqrt(),
        }
    }

    pub fn inverse(self, z: f64) -> f64 {
        match self {
            OutputTransform::Identity => z,
            OutputTransform::Log1p => z.exp_m1().max(0.0),
            OutputTransform::Sqrt => z.max(0.0).powi(2),
        }
    }
}

/// Observed vectors, one per objective, at the simulator's output times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub observed: Vec<Vec<f64>>,
    #[serde(default)]
    pub transform: OutputTransform,
}

impl ObjectiveSpec {
    pub fn new(observed: Vec<Vec<f64>>) -> Result<Self> {
        let spec = ObjectiveSpec {
            observed,
            transform: OutputTransform::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_transform(mut self, transform: OutputTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.observed.len()) {
            return Err(Error::invalid("only one or two objectives are supported"));
        }
        let n = self.observed[0].len();
        if n == 0 || self.observed.iter().any(|o| o.len() != n) {
            return Err(Error::invalid("observed vectors must be non-empty and of equal length"));
        }
        Ok(())
    }

    pub fn n_objectives(&self) -> usize {
        self.observed.len()
    }

    pub fn n_times(&self) -> usize {
        self.observed[0].len()
    }

    /// `g` per objective for simulator outputs (one series per objective;
    /// extra series are ignored).
    pub fn evaluate(&self, outputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if outputs.len() < self.n_objectives() {
            return Err(Error::invalid("fewer output series than objectives"));
        }
        self.observed
            .iter()
            .zip(outputs)
            .map(|(obs, out)| objective_g(out, obs))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Acquired,
    Random,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Initial => "initial",
            Phase::Acquired => "acquired",
            Phase::Random => "random",
        }
    }
}

/// One simulator evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: usize,
    pub x: Vec<f64>,
    pub seed: u64,
    /// Output series per simulator output, at the output times.
    pub outputs: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub phase: Phase,
    /// Acquisition round (0 for the initial design).
    pub iteration: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        assert_eq!(objective_g(&[1.0, 2.0], &[3.0, 5.0]).unwrap(), 13.0);
        assert_eq!(objective_g(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(objective_g(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn transform_round_trip() {
        for t in [OutputTransform::Log1p, OutputTransform::Sqrt] {
            for y in [0.0, 1.0, 17.0, 5000.0] {
                assert!((t.inverse(t.forward(y)) - y).abs() < 1e-9 * (1.0 + y));
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ObjectiveSpec::new(vec![]).is_err());
        assert!(ObjectiveSpec::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let s = ObjectiveSpec::new(vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(s.evaluate(&[vec![1.0, 4.0], vec![0.0, 0.0]]).unwrap(), vec![4.0]);
    }

    proptest! {
        #[test]
        fn homogeneous_of_degree_two(v in prop::collection::vec(-10.0f64..10.0, 1..8), c in -5.0f64..5.0) {
            let obs: Vec<f64> = v.iter().map(|a| a * 0.5 + 1.0).collect();
            let g = objective_g(&v, &obs).unwrap();
            let vs: Vec<f64> = v.iter().map(|a| a * c).collect();
            let os: Vec<f64> = obs.iter().map(|a| a * c).collect();
            let gs = objective_g(&vs, &os).unwrap();
            prop_assert!(g >= 0.0);
            prop_assert!((gs - c * c * g).abs() <= 1e-9 * (1.0 + gs.abs()));
        }
    }
}
