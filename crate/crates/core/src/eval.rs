//! Scoring and paired comparison of optimizers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};
use thiserror::Error;

use crate::algorithms::{Algorithm, RunResult};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} items")]
    TooShort(usize),
    #[error("value {0} is outside the accepted range")]
    OutOfRange(f64),
    #[error("degenerate test: {0}")]
    DegenerateTest(String),
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

fn choose2(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

/// Hubert–Arabie adjusted Rand index.
///
/// Identical partitions (up to relabelling) score 1. When the index has no
/// room above its expectation the score is 0.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooShort(2));
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    if cells.len() == rows.len() && cells.len() == cols.len() {
        return Ok(1.0);
    }
    let index: f64 = cells.values().map(|&v| choose2(v)).sum();
    let sa: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sb: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(a.len() as u64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(0.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    ExactMin,
    Percentile5,
}

/// Nearest-rank 5th percentile of `values`.
pub fn percentile5(values: &[u64]) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = (5 * sorted.len()).div_ceil(100).max(1);
    Some(sorted[rank - 1])
}

/// Target objective and the rule that produced it.
///
/// The exact minimum is used unless fewer than `min_hits` runs reach it, in
/// which case the 5th percentile is used instead.
pub fn target_from_objectives(
    objectives: &[u64],
    mode: TargetMode,
    min_hits: usize,
) -> Option<(u64, TargetMode)> {
    let min = *objectives.iter().min()?;
    if mode == TargetMode::ExactMin && objectives.iter().filter(|&&o| o <= min).count() >= min_hits {
        return Some((min, TargetMode::ExactMin));
    }
    percentile5(objectives).map(|t| (t, TargetMode::Percentile5))
}

pub fn target_objective(
    results: &[RunResult],
    mode: TargetMode,
    min_hits: usize,
) -> Option<(u64, TargetMode)> {
    let objs: Vec<u64> = results.iter().map(|r| r.final_objective).collect();
    target_from_objectives(&objs, mode, min_hits)
}

/// (n10, n01): initializations where only the first, or only the second, run hits.
pub fn paired_counts(first: &[bool], second: &[bool]) -> Result<(u64, u64), EvalError> {
    if first.len() != second.len() {
        return Err(EvalError::LengthMismatch(first.len(), second.len()));
    }
    let n10 = first.iter().zip(second).filter(|(&a, &b)| a && !b).count() as u64;
    let n01 = first.iter().zip(second).filter(|(&a, &b)| !a && b).count() as u64;
    Ok((n10, n01))
}

/// P(X <= x) for X ~ Bin(n, 1/2).
fn binom_half_cdf(x: u64, n: u64) -> f64 {
    if x >= n {
        return 1.0;
    }
    if n <= 62 {
        let mut term: u64 = 1;
        let mut total: u64 = 1;
        for i in 1..=x {
            term = term * (n - i + 1) / i;
            total += term;
        }
        return total as f64 / (1u64 << n) as f64;
    }
    Binomial::new(0.5, n).expect("valid binomial").cdf(x)
}

/// Tail probability of the paired sign test, with one pseudo-count per side.
///
/// The smaller of the two counts sits in the lower tail of Bin(n10 + n01 + 2, 1/2),
/// so swapping the arguments gives the same value.
pub fn paired_sign_test(n10: u64, n01: u64) -> f64 {
    let n = n10 + n01 + 2;
    if n10 <= n01 {
        binom_half_cdf(n10 + 1, n)
    } else {
        1.0 - binom_half_cdf(n10, n)
    }
}

/// Holm step-down adjustment, made monotone and capped at 0.5.
pub fn holm_adjust(ps: &[f64]) -> Vec<f64> {
    let m = ps.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in idx.iter().enumerate() {
        running = running.max(((m - rank) as f64 * ps[i]).min(1.0));
        out[i] = running.min(0.5);
    }
    out
}

/// −sign(x) Φ⁻¹(|x|).
pub fn probit_transform(x: f64) -> Result<f64, EvalError> {
    if x == 0.0 || !(x.abs() <= 1.0) {
        return Err(EvalError::OutOfRange(x));
    }
    let v = -x.signum() * normal_quantile(x.abs());
    Ok(if v == 0.0 { 0.0 } else { v })
}

/// Tail probability carrying the direction of the comparison: negative when the first algorithm hit more.
pub fn signed_tail(adjusted: f64, n10: u64, n01: u64) -> f64 {
    if n10 > n01 {
        -adjusted
    } else {
        adjusted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRatio {
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
}

/// (n10+1)/(n01+1) with a 95% log-normal interval.
pub fn rate_ratio_ci(n10: u64, n01: u64) -> RateRatio {
    let (a, b) = ((n10 + 1) as f64, (n01 + 1) as f64);
    let ratio = a / b;
    let margin = normal_quantile(0.975) * (1.0 / a + 1.0 / b).sqrt();
    RateRatio {
        ratio,
        lo: ratio * (-margin).exp(),
        hi: ratio * margin.exp(),
    }
}

/// Time spent between consecutive target strikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wait {
    pub seconds: f64,
    /// Position of the previous strike (0 when none), 1-based.
    pub left: usize,
    /// Position of this strike, 1-based.
    pub right: usize,
}

/// Waits from per-initialization run times (in initialization order) and strike flags.
pub fn wait_times(run_times: &[f64], hits: &[bool]) -> Result<Vec<Wait>, EvalError> {
    if run_times.len() != hits.len() {
        return Err(EvalError::LengthMismatch(run_times.len(), hits.len()));
    }
    let mut out = Vec::new();
    let mut left = 0;
    let mut acc = 0.0;
    for (pos, (&t, &h)) in run_times.iter().zip(hits).enumerate() {
        acc += t;
        if h {
            out.push(Wait {
                seconds: acc,
                left,
                right: pos + 1,
            });
            left = pos + 1;
            acc = 0.0;
        }
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample covariance of paired per-initialization run times.
pub fn paired_time_covariance(t1: &[f64], t2: &[f64]) -> Result<f64, EvalError> {
    if t1.len() != t2.len() {
        return Err(EvalError::LengthMismatch(t1.len(), t2.len()));
    }
    if t1.len() < 2 {
        return Ok(0.0);
    }
    let (m1, m2) = (mean(t1), mean(t2));
    Ok(t1.iter().zip(t2).map(|(a, b)| (a - m1) * (b - m2)).sum::<f64>() / (t1.len() - 1) as f64)
}

/// Number of initializations shared by two wait windows.
pub fn window_overlap(a: &Wait, b: &Wait) -> usize {
    a.right.min(b.right).saturating_sub(a.left.max(b.left))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub mean1: f64,
    pub mean2: f64,
    /// Var(T̄1), Var(T̄2) and Cov(T̄1, T̄2).
    pub var_mean1: f64,
    pub var_mean2: f64,
    pub cov_means: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Wald test of equal mean waits; windows sharing initializations are correlated through `c12`.
pub fn wald_wait_test(w1: &[Wait], w2: &[Wait], c12: f64) -> Result<WaldTest, EvalError> {
    if w1.is_empty() || w2.is_empty() {
        return Err(EvalError::TooShort(1));
    }
    let s1: Vec<f64> = w1.iter().map(|w| w.seconds).collect();
    let s2: Vec<f64> = w2.iter().map(|w| w.seconds).collect();
    let (n1, n2) = (w1.len() as f64, w2.len() as f64);
    let shared: usize = w1
        .iter()
        .flat_map(|a| w2.iter().map(move |b| window_overlap(a, b)))
        .sum();
    let var_mean1 = sample_variance(&s1) / n1;
    let var_mean2 = sample_variance(&s2) / n2;
    let cov_means = c12 * shared as f64 / (n1 * n2);
    let variance = var_mean1 + var_mean2 - 2.0 * cov_means;
    let (mean1, mean2) = (mean(&s1), mean(&s2));
    let diff = mean1 - mean2;
    let (statistic, p_value) = if variance > 0.0 {
        let z = diff / variance.sqrt();
        (z, 2.0 * (1.0 - std_normal().cdf(z.abs())))
    } else if diff == 0.0 {
        (0.0, 1.0)
    } else {
        return Err(EvalError::DegenerateTest(format!(
            "variance of the mean difference is {variance}"
        )));
    };
    Ok(WaldTest {
        mean1,
        mean2,
        var_mean1,
        var_mean2,
        cov_means,
        statistic,
        p_value,
    })
}

/// Confidence set for a ratio of means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiellerInterval {
    Bounded { lo: f64, hi: f64 },
    /// Everything outside (lo, hi).
    Exclusive { lo: f64, hi: f64 },
    Unbounded,
}

/// 95% Fieller confidence set for `mean1 / mean2`.
pub fn fieller_ci(mean1: f64, mean2: f64, var1: f64, var2: f64, cov: f64) -> FiellerInterval {
    let z2 = normal_quantile(0.975).powi(2);
    let a = mean2 * mean2 - z2 * var2;
    let b = -2.0 * (mean1 * mean2 - z2 * cov);
    let c = mean1 * mean1 - z2 * var1;
    let disc = b * b - 4.0 * a * c;
    if a > 0.0 {
        let root = disc.max(0.0).sqrt();
        let (r1, r2) = ((-b - root) / (2.0 * a), (-b + root) / (2.0 * a));
        FiellerInterval::Bounded { lo: r1, hi: r2 }
    } else if a < 0.0 && disc > 0.0 {
        let root = disc.sqrt();
        let (r1, r2) = ((-b + root) / (2.0 * a), (-b - root) / (2.0 * a));
        FiellerInterval::Exclusive { lo: r1, hi: r2 }
    } else {
        FiellerInterval::Unbounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitComparison {
    pub strikes1: usize,
    pub strikes2: usize,
    pub c12: f64,
    pub wald: WaldTest,
    pub time_ratio: FiellerInterval,
}

/// Paired comparison of two algorithms at one K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub k: usize,
    pub first: Algorithm,
    pub second: Algorithm,
    pub target: u64,
    pub target_mode: TargetMode,
    pub pairs: usize,
    pub n10: u64,
    pub n01: u64,
    pub left_tail: f64,
    pub holm_adjusted: f64,
    /// Positive values favour the second algorithm.
    pub probit_value: f64,
    pub rate_ratio: RateRatio,
    pub wait: Option<WaitComparison>,
    pub wait_error: Option<String>,
}

fn compare_pair(
    k: usize,
    first: Algorithm,
    second: Algorithm,
    target: (u64, TargetMode),
    runs1: &[&RunResult],
    runs2: &[&RunResult],
) -> ComparisonReport {
    let hit = |rs: &[&RunResult]| rs.iter().map(|r| r.final_objective <= target.0).collect::<Vec<_>>();
    let times = |rs: &[&RunResult]| rs.iter().map(|r| r.wall_time_secs).collect::<Vec<_>>();
    let (h1, h2) = (hit(runs1), hit(runs2));
    let (t1, t2) = (times(runs1), times(runs2));
    let (n10, n01) = paired_counts(&h1, &h2).expect("paired runs");
    let left_tail = paired_sign_test(n10, n01);

    let wait = (|| -> Result<WaitComparison, EvalError> {
        let w1 = wait_times(&t1, &h1)?;
        let w2 = wait_times(&t2, &h2)?;
        let c12 = paired_time_covariance(&t1, &t2)?;
        let wald = wald_wait_test(&w1, &w2, c12)?;
        let time_ratio = fieller_ci(wald.mean1, wald.mean2, wald.var_mean1, wald.var_mean2, wald.cov_means);
        Ok(WaitComparison {
            strikes1: w1.len(),
            strikes2: w2.len(),
            c12,
            wald,
            time_ratio,
        })
    })();

    ComparisonReport {
        k,
        first,
        second,
        target: target.0,
        target_mode: target.1,
        pairs: h1.len(),
        n10,
        n01,
        left_tail,
        holm_adjusted: left_tail,
        probit_value: f64::NAN,
        rate_ratio: rate_ratio_ci(n10, n01),
        wait_error: wait.as_ref().err().map(|e| e.to_string()),
        wait: wait.ok(),
    }
}

/// Reports for every K and algorithm pair present in `results`.
///
/// The target at each K pools all algorithms. Holm's adjustment runs over the
/// K values of one algorithm pair. Runs are paired by `init_id`.
pub fn compare_all(results: &[RunResult], mode: TargetMode, min_hits: usize) -> Vec<ComparisonReport> {
    let mut by_k: BTreeMap<usize, BTreeMap<Algorithm, BTreeMap<usize, &RunResult>>> = BTreeMap::new();
    for r in results {
        by_k.entry(r.k).or_default().entry(r.algorithm).or_default().insert(r.init_id, r);
    }
    let mut reports = Vec::new();
    for (&k, algs) in &by_k {
        let pooled: Vec<u64> = algs.values().flat_map(|m| m.values().map(|r| r.final_objective)).collect();
        let Some(target) = target_from_objectives(&pooled, mode, min_hits) else {
            continue;
        };
        let names: Vec<Algorithm> = algs.keys().copied().collect();
        for (x, &a) in names.iter().enumerate() {
            for &b in &names[x + 1..] {
                let (ma, mb) = (&algs[&a], &algs[&b]);
                let shared: Vec<usize> = ma.keys().filter(|id| mb.contains_key(id)).copied().collect();
                let ra: Vec<&RunResult> = shared.iter().map(|id| ma[id]).collect();
                let rb: Vec<&RunResult> = shared.iter().map(|id| mb[id]).collect();
                reports.push(compare_pair(k, a, b, target, &ra, &rb));
            }
        }
    }
    let mut families: BTreeMap<(Algorithm, Algorithm), Vec<usize>> = BTreeMap::new();
    for (idx, r) in reports.iter().enumerate() {
        families.entry((r.first, r.second)).or_default().push(idx);
    }
    for members in families.values() {
        let raw: Vec<f64> = members.iter().map(|&i| reports[i].left_tail).collect();
        for (&i, adj) in members.iter().zip(holm_adjust(&raw)) {
            let r = &mut reports[i];
            r.holm_adjusted = adj;
            r.probit_value = probit_transform(signed_tail(adj, r.n10, r.n01)).unwrap_or(f64::NAN);
        }
    }
    reports
}
