use serde::{Deserialize, Serialize};

use super::objective::EvalRecord;
use crate::error::{Error, Result};

/// `a` dominates `b`: no worse everywhere, strictly better somewhere
/// (minimization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Indices of the non-dominated points.
pub fn non_dominated(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .collect()
}

/// Area dominated by `points` and bounded by `reference`. Every point must
/// be strictly below the reference in both objectives.
pub fn hypervolume_2d(points: &[(f64, f64)], reference: (f64, f64)) -> Result<f64> {
    if let Some(p) = points.iter().find(|p| !(p.0 < reference.0 && p.1 < reference.1)) {
        return Err(Error::invalid(format!(
            "point ({}, {}) does not dominate the reference ({}, {})",
            p.0, p.1, reference.0, reference.1
        )));
    }
    Ok(staircase(points, reference))
}

fn staircase(points: &[(f64, f64)], reference: (f64, f64)) -> f64 {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut ceiling = reference.1;
    for (g1, g2) in sorted {
        if g2 < ceiling {
            area += (reference.0 - g1) * (ceiling - g2);
            ceiling = g2;
        }
    }
    area
}

/// Increase in dominated area from adding `candidate` to `front`. Points not
/// strictly below the reference are ignored; a candidate outside contributes 0.
pub fn hv_contribution(front: &[(f64, f64)], candidate: (f64, f64), reference: (f64, f64)) -> f64 {
    if !(candidate.0 < reference.0 && candidate.1 < reference.1) {
        return 0.0;
    }
    let inside: Vec<(f64, f64)> = front
        .iter()
        .copied()
        .filter(|p| p.0 < reference.0 && p.1 < reference.1)
        .collect();
    let base = staircase(&inside, reference);
    let mut with = inside;
    with.push(candidate);
    (staircase(&with, reference) - base).max(0.0)
}

/// Mutually non-dominated evaluation records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    records: Vec<EvalRecord>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        ParetoArchive::default()
    }

    /// Inserts unless dominated; evicts everything the record dominates.
    /// Returns whether the record was added.
    pub fn insert(&mut self, record: EvalRecord) -> bool {
        if self.records.iter().any(|r| dominates(&r.g, &record.g)) {
            return false;
        }
        self.records.retain(|r| !dominates(&record.g, &r.g));
        self.records.push(record);
        true
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Front as `(g1, g2)` pairs; requires two objectives.
    pub fn front(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.g[0], r.g[1])).collect()
    }
}
