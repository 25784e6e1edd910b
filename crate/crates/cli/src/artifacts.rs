//! CSV and JSON writers. Every CSV has a header row; numbers use the
//! shortest representation that parses back to the same value.

use std::fs::File;
use std::path::Path;

use serde::Serialize;
use trajopt::optimizer::{EvalRecord, ParetoArchive};

use crate::problem::Truth;
use crate::CliError;

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn x_headers(dim: usize) -> impl Iterator<Item = String> {
    (1..=dim).map(|j| format!("x{j}"))
}

fn g_headers(p: usize) -> impl Iterator<Item = String> {
    (1..=p).map(|k| format!("g{k}"))
}

fn nums(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|a| a.to_string())
}

/// `id, phase, iteration, seed, x1..xd, g1..gp, <output>_t1..<output>_tT`
/// per record.
pub fn write_evals(
    path: &Path,
    records: &[EvalRecord],
    dim: usize,
    n_objectives: usize,
    output_names: &[String],
    n_times: usize,
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["id", "phase", "iteration", "seed"].iter().map(|s| s.to_string()).collect();
    header.extend(x_headers(dim));
    header.extend(g_headers(n_objectives));
    for name in output_names {
        header.extend((1..=n_times).map(|j| format!("{name}_t{j}")));
    }
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for r in records {
        let mut row = vec![
            r.id.to_string(),
            r.phase.as_str().to_string(),
            r.iteration.to_string(),
            r.seed.to_string(),
        ];
        row.extend(nums(&r.x));
        row.extend(nums(&r.g));
        for series in &r.outputs {
            row.extend(nums(series));
        }
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

/// `rank, id, seed, x1..xd, g1..gp` for the reported best records.
pub fn write_best_k(path: &Path, records: &[EvalRecord], best: &[usize], dim: usize, n_objectives: usize) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = vec!["rank".into(), "id".into(), "seed".into()];
    header.extend(x_headers(dim));
    header.extend(g_headers(n_objectives));
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for (rank, &id) in best.iter().enumerate() {
        let r = &records[id];
        let mut row = vec![(rank + 1).to_string(), r.id.to_string(), r.seed.to_string()];
        row.extend(nums(&r.x));
        row.extend(nums(&r.g));
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

/// `id, seed, x1..xd, g1, g2` for the archive, ordered by `g1`.
pub fn write_pareto(path: &Path, archive: &ParetoArchive, dim: usize) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = vec!["id".into(), "seed".into()];
    header.extend(x_headers(dim));
    header.extend(g_headers(2));
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    let mut recs: Vec<&EvalRecord> = archive.records().iter().collect();
    recs.sort_by(|a, b| a.g[0].total_cmp(&b.g[0]).then(a.id.cmp(&b.id)));
    for r in recs {
        let mut row = vec![r.id.to_string(), r.seed.to_string()];
        row.extend(nums(&r.x));
        row.extend(nums(&r.g));
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

/// Long format `run_id, t, value, objective, rank`: the observations
/// (`run_id` "observed", rank 0) followed by the best records in rank
/// order.
pub fn write_plotdata(
    path: &Path,
    records: &[EvalRecord],
    best: &[usize],
    truth: &Truth,
    output_names: &[String],
    times: &[f64],
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["run_id", "t", "value", "objective", "rank"])
        .map_err(|e| CliError::io(path, e))?;
    let mut emit = |run_id: &str, rank: usize, series: &[Vec<f64>]| -> Result<(), CliError> {
        for (k, s) in series.iter().enumerate().take(truth.observed.len()) {
            for (t, v) in times.iter().zip(s) {
                w.write_record([run_id, &t.to_string(), &v.to_string(), &output_names[k], &rank.to_string()])
                    .map_err(|e| CliError::io(path, e))?;
            }
        }
        Ok(())
    };
    emit("observed", 0, &truth.observed)?;
    for (rank, &id) in best.iter().enumerate() {
        emit(&id.to_string(), rank + 1, &records[id].outputs)?;
    }
    finish(w, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// `rep, truth_seed, arm_a, best_g_a, arm_b, best_g_b, winner` per
/// repetition; `winner` is `a`, `b` or `tie`.
pub fn write_compare(path: &Path, rows: &[crate::CompareRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["rep", "truth_seed", "arm_a", "best_g_a", "arm_b", "best_g_b", "winner"])
        .map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record([
            r.rep.to_string(),
            r.truth_seed.map_or(String::new(), |s| s.to_string()),
            r.arms[0].as_str().to_string(),
            r.best_g[0].to_string(),
            r.arms[1].as_str().to_string(),
            r.best_g[1].to_string(),
            r.winner().to_string(),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}
