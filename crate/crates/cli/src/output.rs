//! Result files. All writes happen on the calling thread.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use kmodes::algorithms::{Algorithm, BatchFailure};
use kmodes::eval::{ComparisonReport, FiellerInterval};
use kmodes::simgen::SimOutput;
use kmodes::{Dataset, RunResult};
use serde::Serialize;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// One JSON object per run.
pub fn write_runs(path: &Path, runs: &[RunResult]) -> Result<()> {
    let mut w = create(path)?;
    for r in runs {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns: algorithm, k, init_id, objective, wall_time_secs, ari.
pub fn write_summary_csv(path: &Path, runs: &[RunResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["algorithm", "k", "init_id", "objective", "wall_time_secs", "ari"])?;
    for r in runs {
        w.write_record([
            r.algorithm.to_string(),
            r.k.to_string(),
            r.init_id.to_string(),
            r.final_objective.to_string(),
            r.wall_time_secs.to_string(),
            opt(r.ari),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub best_objective: u64,
    pub mean_objective: f64,
    /// Runs reaching the best objective over all algorithms at this K.
    pub hits_at_best: usize,
    pub mean_ari: Option<f64>,
    pub nonconverged: usize,
    pub runs_with_empty_clusters: usize,
}

#[derive(Debug, Serialize)]
pub struct KSummary {
    pub k: usize,
    pub best_objective: u64,
    pub runs_at_best: usize,
    /// Mean ARI over all runs (any algorithm) reaching the best objective.
    pub mean_ari_at_best: Option<f64>,
    pub algorithms: Vec<AlgorithmSummary>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub per_k: Vec<KSummary>,
    pub failures: Vec<BatchFailure>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

pub fn summarize(runs: &[RunResult], failures: &[BatchFailure]) -> Summary {
    let mut by_k: BTreeMap<usize, Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        by_k.entry(r.k).or_default().push(r);
    }
    let per_k = by_k
        .into_iter()
        .map(|(k, rs)| {
            let best = rs.iter().map(|r| r.final_objective).min().expect("nonempty");
            let at_best: Vec<&&RunResult> = rs.iter().filter(|r| r.final_objective == best).collect();
            let mut algs: BTreeMap<Algorithm, Vec<&RunResult>> = BTreeMap::new();
            for r in &rs {
                algs.entry(r.algorithm).or_default().push(r);
            }
            KSummary {
                k,
                best_objective: best,
                runs_at_best: at_best.len(),
                mean_ari_at_best: mean(at_best.iter().filter_map(|r| r.ari)),
                algorithms: algs
                    .into_iter()
                    .map(|(algorithm, v)| AlgorithmSummary {
                        algorithm,
                        runs: v.len(),
                        best_objective: v.iter().map(|r| r.final_objective).min().expect("nonempty"),
                        mean_objective: mean(v.iter().map(|r| r.final_objective as f64)).expect("nonempty"),
                        hits_at_best: v.iter().filter(|r| r.final_objective == best).count(),
                        mean_ari: mean(v.iter().filter_map(|r| r.ari)),
                        nonconverged: v.iter().filter(|r| !r.converged).count(),
                        runs_with_empty_clusters: v.iter().filter(|r| !r.empty_clusters.is_empty()).count(),
                    })
                    .collect(),
            }
        })
        .collect();
    Summary {
        per_k,
        failures: failures.to_vec(),
    }
}

/// Assignment and modes of the lowest-objective run at each K (first in result order on ties).
pub fn write_best(dir: &Path, ds: &Dataset, runs: &[RunResult]) -> Result<()> {
    let mut best: BTreeMap<usize, &RunResult> = BTreeMap::new();
    for r in runs {
        let e = best.entry(r.k).or_insert(r);
        if r.final_objective < e.final_objective {
            *e = r;
        }
    }
    for (k, r) in best {
        let mut w = csv_writer(&dir.join(format!("best_assignment_k{k}.csv")))?;
        match ds.labels() {
            Some(labels) => {
                w.write_record(["observation", "cluster", "label"])?;
                for (i, c) in r.assignment.iter().enumerate() {
                    w.write_record([i.to_string(), c.to_string(), labels.names[labels.ids[i]].clone()])?;
                }
            }
            None => {
                w.write_record(["observation", "cluster"])?;
                for (i, c) in r.assignment.iter().enumerate() {
                    w.write_record([i.to_string(), c.to_string()])?;
                }
            }
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join(format!("best_modes_k{k}.csv")))?;
        let mut header = vec!["cluster".to_string()];
        header.extend(ds.column_names().iter().cloned());
        w.write_record(&header)?;
        for (c, m) in r.modes.iter().enumerate() {
            let mut rec = vec![c.to_string()];
            rec.extend(ds.decode(m.values()).into_iter().map(str::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_comparisons(dir: &Path, reports: &[ComparisonReport]) -> Result<()> {
    write_json(&dir.join("comparisons.json"), &reports)?;
    let mut w = csv_writer(&dir.join("comparisons.csv"))?;
    w.write_record([
        "k",
        "first",
        "second",
        "target",
        "target_mode",
        "pairs",
        "n10",
        "n01",
        "left_tail",
        "holm_adjusted",
        "probit_value",
        "rate_ratio",
        "rate_ratio_lo",
        "rate_ratio_hi",
        "wait_mean_first",
        "wait_mean_second",
        "wald_statistic",
        "wald_p_value",
        "time_ratio_kind",
        "time_ratio_lo",
        "time_ratio_hi",
    ])?;
    for r in reports {
        let wait = r.wait.as_ref();
        let (kind, lo, hi) = match wait.map(|w| w.time_ratio) {
            Some(FiellerInterval::Bounded { lo, hi }) => ("bounded", Some(lo), Some(hi)),
            Some(FiellerInterval::Exclusive { lo, hi }) => ("exclusive", Some(lo), Some(hi)),
            Some(FiellerInterval::Unbounded) => ("unbounded", None, None),
            None => ("", None, None),
        };
        let mode = serde_json::to_value(r.target_mode)?;
        w.write_record([
            r.k.to_string(),
            r.first.to_string(),
            r.second.to_string(),
            r.target.to_string(),
            mode.as_str().unwrap_or_default().to_string(),
            r.pairs.to_string(),
            r.n10.to_string(),
            r.n01.to_string(),
            r.left_tail.to_string(),
            r.holm_adjusted.to_string(),
            r.probit_value.to_string(),
            r.rate_ratio.ratio.to_string(),
            r.rate_ratio.lo.to_string(),
            r.rate_ratio.hi.to_string(),
            opt(wait.map(|w| w.wald.mean1)),
            opt(wait.map(|w| w.wald.mean2)),
            opt(wait.map(|w| w.wald.statistic)),
            opt(wait.map(|w| w.wald.p_value)),
            kind.to_string(),
            opt(lo),
            opt(hi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// data.csv, labels.csv and modes.csv for a simulated dataset.
pub fn write_simulation(dir: &Path, out: &SimOutput) -> Result<()> {
    let ds = &out.dataset;
    let mut w = csv_writer(&dir.join("data.csv"))?;
    w.write_record(ds.column_names())?;
    for row in ds.rows() {
        w.write_record(ds.decode(row))?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("labels.csv"))?;
    w.write_record(["label"])?;
    for l in &out.labels {
        w.write_record([l.to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("modes.csv"))?;
    let mut header = vec!["cluster".to_string()];
    header.extend(ds.column_names().iter().cloned());
    w.write_record(&header)?;
    for (c, m) in out.true_modes.iter().enumerate() {
        let mut rec = vec![c.to_string()];
        rec.extend(ds.decode(m.values()).into_iter().map(str::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
