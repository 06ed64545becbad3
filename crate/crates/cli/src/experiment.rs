use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use kmodes::algorithms::{alpha_rule_inits, run_batch, Algorithm, BatchConfig};
use kmodes::dataset::{parse_delimited, ColumnRef, MissingPolicy, ParseOptions};
use kmodes::eval::{compare_all, TargetMode};
use kmodes::simgen::{ctmc_change_prob, empirical_change_rate, simulate, SimConfig};
use kmodes::RunResult;
use serde::{Deserialize, Serialize};

use crate::output;
use crate::{CompareArgs, InputArgs, RunArgs, SimArgs};

/// Everything needed to reproduce a command's non-timing outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub version: String,
    pub input: Option<PathBuf>,
    pub parse: Option<ParseOptions>,
    pub ks: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub n_inits: usize,
    pub alpha_rule: Option<AlphaRule>,
    pub master_seed: u64,
    pub threads: usize,
    pub target_mode: TargetMode,
    pub min_hits: usize,
    pub simulation: Option<SimConfig>,
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaRule {
    pub p_prime: u64,
    pub alpha: u64,
    /// α·n·K·p′ for each requested K.
    pub inits_per_k: Vec<(usize, u64)>,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_options(a: &InputArgs) -> Result<ParseOptions> {
    ensure!(a.delimiter.is_ascii(), "delimiter must be a single ASCII character");
    Ok(ParseOptions {
        delimiter: a.delimiter as u8,
        has_header: a.header,
        label_column: a.label_col.as_deref().map(|s| s.parse::<ColumnRef>().expect("infallible")),
        missing_token: Some(a.missing_token.clone()),
        missing_policy: if a.drop_missing_rows {
            MissingPolicy::DropRows
        } else {
            MissingPolicy::DropColumns
        },
    })
}

fn config_from_args(a: &RunArgs, bench: bool) -> Result<ExperimentConfig> {
    if let Some(path) = &a.manifest {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if let Some(t) = a.common.threads {
            cfg.threads = t;
        }
        return Ok(cfg);
    }
    let input = a.input.input.clone().context("--input is required unless --manifest is given")?;
    let input = fs::canonicalize(&input).with_context(|| format!("reading {}", input.display()))?;
    let ks: Vec<usize> = match (a.k_min, a.k_max) {
        (Some(lo), Some(hi)) => {
            ensure!(lo <= hi, "--k-min must not exceed --k-max");
            (lo..=hi).collect()
        }
        _ => a.k.clone(),
    };
    ensure!(!ks.is_empty(), "give --k or --k-min/--k-max");
    ensure!(ks.iter().all(|&k| k >= 1), "K must be at least 1");
    ensure!(a.inits >= 1, "--inits must be at least 1");
    let mut algorithms = a.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    if bench {
        ensure!(algorithms.len() >= 2, "bench needs at least two algorithms");
    }
    Ok(ExperimentConfig {
        command: if bench { "bench" } else { "cluster" }.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: Some(input),
        parse: Some(parse_options(&a.input)?),
        ks,
        algorithms,
        n_inits: a.inits,
        alpha_rule: None,
        master_seed: a.common.seed,
        threads: a.common.threads.unwrap_or_else(default_threads),
        target_mode: a.target.into(),
        min_hits: a.min_hits,
        simulation: None,
        runs: None,
    })
}

pub fn cmd_cluster(a: &RunArgs, bench: bool) -> Result<()> {
    let mut cfg = config_from_args(a, bench)?;
    let bench = cfg.command == "bench";
    let input = cfg.input.clone().context("manifest has no input")?;
    let opts = cfg.parse.clone().context("manifest has no parse options")?;
    let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
    let ds = parse_delimited(&bytes, &opts).with_context(|| format!("parsing {}", input.display()))?;

    if a.alpha_rule {
        let p_prime = a.p_prime.context("--alpha-rule needs --p-prime")?;
        let max_k = *cfg.ks.iter().max().expect("nonempty K list") as u64;
        let alpha = alpha_rule_inits(ds.n() as u64, p_prime, max_k);
        let inits_per_k: Vec<(usize, u64)> =
            cfg.ks.iter().map(|&k| (k, alpha * ds.n() as u64 * k as u64 * p_prime)).collect();
        println!("alpha rule: alpha = {alpha} (n = {}, p' = {p_prime}, max K = {max_k})", ds.n());
        for (k, m) in &inits_per_k {
            println!("  K = {k}: {m} suggested initializations");
        }
        cfg.alpha_rule = Some(AlphaRule {
            p_prime,
            alpha,
            inits_per_k,
        });
    }

    let out_dir = &a.common.out_dir;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let batch = run_batch(
        &ds,
        &BatchConfig {
            ks: cfg.ks.clone(),
            n_inits: cfg.n_inits,
            algorithms: cfg.algorithms.clone(),
            master_seed: cfg.master_seed,
            threads: cfg.threads,
        },
    )?;
    for f in &batch.failures {
        eprintln!("warning: K = {} init {}: {}", f.k, f.init_id, f.error);
    }
    if batch.results.is_empty() {
        bail!("no run succeeded; see warnings above");
    }

    output::write_json(&out_dir.join("manifest.json"), &cfg)?;
    output::write_json(&out_dir.join("dataset.json"), &ds.summary())?;
    output::write_runs(&out_dir.join("runs.jsonl"), &batch.results)?;
    output::write_summary_csv(&out_dir.join("summary.csv"), &batch.results)?;
    let summary = output::summarize(&batch.results, &batch.failures);
    output::write_json(&out_dir.join("summary.json"), &summary)?;
    output::write_best(out_dir, &ds, &batch.results)?;
    for k in &summary.per_k {
        let per_alg: Vec<String> =
            k.algorithms.iter().map(|s| format!("{}={}", s.algorithm, s.best_objective)).collect();
        print!("K = {}: best objective {} ({})", k.k, k.best_objective, per_alg.join(", "));
        if let Some(m) = k.mean_ari_at_best {
            print!(", mean ARI at best {m:.4}");
        }
        println!();
    }

    if bench {
        let reports = compare_all(&batch.results, cfg.target_mode, cfg.min_hits);
        output::write_comparisons(out_dir, &reports)?;
        for r in &reports {
            println!(
                "K = {} {} vs {}: target {} n10 = {} n01 = {} probit {:.4}",
                r.k, r.first, r.second, r.target, r.n10, r.n01, r.probit_value
            );
        }
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimArgs) -> Result<()> {
    let sim = SimConfig {
        n: a.n,
        p: a.p,
        k: a.k,
        j: a.j,
        t: a.t,
        t0: a.t0,
        seed: a.common.seed,
    };
    let out = simulate(&sim)?;
    let dir = &a.common.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    output::write_simulation(dir, &out)?;
    let cfg = ExperimentConfig {
        command: "simulate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: None,
        parse: None,
        ks: vec![],
        algorithms: vec![],
        n_inits: 0,
        alpha_rule: None,
        master_seed: a.common.seed,
        threads: 1,
        target_mode: TargetMode::ExactMin,
        min_hits: 0,
        simulation: Some(sim.clone()),
        runs: None,
    };
    let manifest = SimManifest {
        config: cfg,
        t0: out.t0,
        change_prob: ctmc_change_prob(sim.t, sim.j),
        empirical_change_rate: empirical_change_rate(&out),
        proportions: out.proportions.clone(),
        sizes: out.sizes.clone(),
        rejections: out.rejections,
    };
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} observations in {} clusters to {} (change rate {:.4})",
        sim.n,
        sim.k,
        dir.display(),
        manifest.empirical_change_rate
    );
    Ok(())
}

#[derive(Serialize)]
struct SimManifest {
    config: ExperimentConfig,
    t0: f64,
    change_prob: f64,
    empirical_change_rate: f64,
    proportions: Vec<f64>,
    sizes: Vec<usize>,
    rejections: kmodes::simgen::Rejections,
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let results = read_runs(&a.runs)?;
    ensure!(!results.is_empty(), "{} holds no runs", a.runs.display());
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let cfg = ExperimentConfig {
        command: "compare".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: None,
        parse: None,
        ks: vec![],
        algorithms: vec![],
        n_inits: 0,
        alpha_rule: None,
        master_seed: 0,
        threads: 1,
        target_mode: a.target.into(),
        min_hits: a.min_hits,
        simulation: None,
        runs: Some(fs::canonicalize(&a.runs)?),
    };
    let reports = compare_all(&results, cfg.target_mode, cfg.min_hits);
    output::write_json(&a.out_dir.join("manifest.json"), &cfg)?;
    output::write_comparisons(&a.out_dir, &reports)?;
    println!("wrote {} comparisons to {}", reports.len(), a.out_dir.display());
    Ok(())
}

fn read_runs(path: &Path) -> Result<Vec<RunResult>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("line {} of {}", i + 1, path.display())))
        .collect()
}
