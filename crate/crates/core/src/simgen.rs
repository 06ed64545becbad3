//! Synthetic clustered categorical data.
//!
//! A random ancestor evolves for time `t0` into each true mode; each mode then
//! evolves for time `t` into the observations of its cluster. Substitutions
//! follow an equal-rate chain with rate normalisation 1/3, so
//! `q(t) = ((J-1)/J)(1 - exp(-t/3))` is the probability a coordinate changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Code, Dataset, DatasetError};
use crate::state::Mode;

/// Probability of a change at the inner (ancestor to mode) level.
pub const INNER_CHANGE_PROB: f64 = 0.70;

/// Cap on redraws in each rejection loop.
pub const MAX_ATTEMPTS: u64 = 1_000_000;

const RATE: f64 = 1.0 / 3.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{k} distinct modes are impossible with {j}^{p} possible vectors")]
    InfeasibleModes { k: usize, j: usize, p: usize },
    #[error("change probability {prob} is unreachable with {j} categories (limit {limit})")]
    UnreachableChangeProb { prob: f64, j: usize, limit: f64 },
    #[error("gave up after {0} rejected draws")]
    RejectionCap(u64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub j: usize,
    /// Mode-to-observation time.
    pub t: f64,
    /// Ancestor-to-mode time; defaults to the time giving [`INNER_CHANGE_PROB`].
    pub t0: Option<f64>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 10,
            k: 5,
            j: 4,
            t: 1.0,
            t0: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejections {
    pub empty_cluster: u64,
    pub duplicate_modes: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub labels: Vec<usize>,
    pub true_modes: Vec<Mode>,
    pub proportions: Vec<f64>,
    pub sizes: Vec<usize>,
    pub t0: f64,
    pub rejections: Rejections,
}

/// Probability that a coordinate differs from its start after time `t`.
pub fn ctmc_change_prob(t: f64, j: usize) -> f64 {
    let ceiling = (j as f64 - 1.0) / j as f64;
    ceiling * (1.0 - (-RATE * t).exp())
}

/// Time at which the change probability reaches `prob`.
pub fn ctmc_time_for(prob: f64, j: usize) -> Result<f64, SimError> {
    let limit = (j as f64 - 1.0) / j as f64;
    if !(0.0..limit).contains(&prob) {
        return Err(SimError::UnreachableChangeProb { prob, j, limit });
    }
    Ok(-(1.0 - prob / limit).ln() / RATE)
}

/// One draw from the chain started at `code` after time `t`.
pub fn ctmc_step<R: Rng + ?Sized>(code: Code, t: f64, j: usize, rng: &mut R) -> Code {
    if rng.gen::<f64>() >= ctmc_change_prob(t, j) {
        return code;
    }
    let other = rng.gen_range(0..j as Code - 1);
    if other >= code {
        other + 1
    } else {
        other
    }
}

fn validate(cfg: &SimConfig) -> Result<(), SimError> {
    let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
    if cfg.k == 0 || cfg.n < cfg.k {
        return bad("need n >= K >= 1");
    }
    if cfg.j < 2 {
        return bad("need at least 2 categories");
    }
    if cfg.p == 0 {
        return bad("need at least 1 coordinate");
    }
    if !(cfg.t > 0.0 && cfg.t.is_finite()) {
        return bad("t must be positive and finite");
    }
    if let Some(t0) = cfg.t0 {
        if !(t0 >= 0.0 && t0.is_finite()) {
            return bad("t0 must be non-negative and finite");
        }
    }
    let vectors = (cfg.j as f64).powi(cfg.p.min(1024) as i32);
    if (cfg.k as f64) > vectors {
        return Err(SimError::InfeasibleModes {
            k: cfg.k,
            j: cfg.j,
            p: cfg.p,
        });
    }
    Ok(())
}

/// Multinomial(n, π) via sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: usize, probs: &[f64], rng: &mut R) -> Vec<usize> {
    let mut left = n as u64;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (idx, &pk) in probs.iter().enumerate() {
        if idx + 1 == probs.len() {
            out.push(left as usize);
            break;
        }
        let share = if mass > 0.0 { (pk / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, share).expect("valid binomial").sample(rng);
        out.push(draw as usize);
        left -= draw;
        mass -= pk;
    }
    out
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    validate(cfg)?;
    let t0 = match cfg.t0 {
        Some(t0) => t0,
        None => ctmc_time_for(INNER_CHANGE_PROB, cfg.j)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rejections = Rejections::default();

    let (proportions, sizes) = loop {
        let raw: Vec<f64> = (0..cfg.k).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        let pi: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let sizes = multinomial(cfg.n, &pi, &mut rng);
        if sizes.iter().all(|&s| s > 0) {
            break (pi, sizes);
        }
        rejections.empty_cluster += 1;
        if rejections.empty_cluster >= MAX_ATTEMPTS {
            return Err(SimError::RejectionCap(rejections.empty_cluster));
        }
    };

    let ancestor: Vec<Code> = (0..cfg.p).map(|_| rng.gen_range(0..cfg.j as Code)).collect();
    let modes: Vec<Vec<Code>> = loop {
        let modes: Vec<Vec<Code>> = (0..cfg.k)
            .map(|_| ancestor.iter().map(|&a| ctmc_step(a, t0, cfg.j, &mut rng)).collect())
            .collect();
        let distinct = (0..cfg.k).all(|a| (0..a).all(|b| modes[a] != modes[b]));
        if distinct {
            break modes;
        }
        rejections.duplicate_modes += 1;
        if rejections.duplicate_modes >= MAX_ATTEMPTS {
            return Err(SimError::RejectionCap(rejections.duplicate_modes));
        }
    };

    let mut rows = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    for (c, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            rows.push(modes[c].iter().map(|&m| ctmc_step(m, cfg.t, cfg.j, &mut rng)).collect());
            labels.push(c);
        }
    }
    let dataset = Dataset::from_codes(&rows, Some(&vec![cfg.j; cfg.p]))?.with_label_ids(labels.clone())?;
    Ok(SimOutput {
        dataset,
        labels,
        true_modes: modes.into_iter().map(Mode).collect(),
        proportions,
        sizes,
        t0,
        rejections,
    })
}

/// Fraction of coordinates at which observations differ from their true mode.
pub fn empirical_change_rate(out: &SimOutput) -> f64 {
    let ds = &out.dataset;
    let mismatches: usize = (0..ds.n())
        .map(|i| {
            let mode = &out.true_modes[out.labels[i]].0;
            ds.row(i).iter().zip(mode).filter(|(a, b)| a != b).count()
        })
        .sum();
    mismatches as f64 / (ds.n() * ds.p()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn change_prob_limits() {
        assert_eq!(ctmc_change_prob(0.0, 4), 0.0);
        assert!((ctmc_change_prob(1e6, 4) - 0.75).abs() < 1e-12);
        assert!((ctmc_change_prob(1e6, 2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn change_prob_grid_rounds_to_published_column() {
        let expected = [0.12, 0.21, 0.25, 0.36];
        for (t, e) in [0.5, 1.0, 1.2, 2.0].into_iter().zip(expected) {
            let q = ctmc_change_prob(t, 4);
            assert_eq!((q * 100.0).round() / 100.0, e, "t = {t}, q = {q}");
        }
    }

    #[test]
    fn inner_time_inverts_change_prob() {
        let t0 = ctmc_time_for(0.70, 4).unwrap();
        assert!((t0 - 3.0 * 15f64.ln()).abs() < 1e-12);
        assert!((ctmc_change_prob(t0, 4) - 0.70).abs() < 1e-12);
        assert!(ctmc_time_for(0.70, 3).is_err());
        assert!(ctmc_time_for(0.5, 2).is_err());
    }

    #[test]
    fn step_at_zero_time_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in 0..4 {
            assert_eq!(ctmc_step(c, 0.0, 4, &mut rng), c);
        }
    }

    #[test]
    fn binary_change_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let t = 1.5;
        let changed = (0..draws).filter(|_| ctmc_step(0, t, 2, &mut rng) != 0).count();
        assert!((changed as f64 / draws as f64 - ctmc_change_prob(t, 2)).abs() < 0.005);
    }

    #[test]
    fn substitutions_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hist = [0usize; 5];
        let mut changed = 0;
        for _ in 0..100_000 {
            let c = ctmc_step(2, 4.0, 5, &mut rng);
            if c != 2 {
                hist[c as usize] += 1;
                changed += 1;
            }
        }
        assert_eq!(hist[2], 0);
        let expected = changed as f64 / 4.0;
        let chi2: f64 = [0, 1, 3, 4]
            .iter()
            .map(|&c| (hist[c] as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square 0.99 quantile with 3 degrees of freedom
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn single_cluster() {
        let out = simulate(&SimConfig { k: 1, n: 50, p: 3, seed: 4, ..Default::default() }).unwrap();
        assert!(out.labels.iter().all(|&l| l == 0));
        assert_eq!(out.rejections.duplicate_modes, 0);
        assert_eq!(out.sizes, vec![50]);
    }

    #[test]
    fn infeasible_mode_count() {
        let cfg = SimConfig { k: 5, j: 2, p: 2, n: 20, ..Default::default() };
        assert!(matches!(simulate(&cfg), Err(SimError::InfeasibleModes { .. })));
        assert!(simulate(&SimConfig { n: 3, k: 5, ..Default::default() }).is_err());
        assert!(simulate(&SimConfig { t: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn accepted_output_invariants() {
        for seed in 0..20 {
            let out = simulate(&SimConfig { seed, n: 60, p: 3, k: 5, ..Default::default() }).unwrap();
            assert!(out.sizes.iter().all(|&s| s > 0));
            assert_eq!(out.sizes.iter().sum::<usize>(), 60);
            assert!((out.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for a in 0..5 {
                for b in 0..a {
                    assert_ne!(out.true_modes[a], out.true_modes[b]);
                }
            }
            for c in 0..5 {
                assert_eq!(out.labels.iter().filter(|&&l| l == c).count(), out.sizes[c]);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SimConfig { seed: 11, n: 200, ..Default::default() };
        let (a, b) = (simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.true_modes, b.true_modes);
        let rows = |o: &SimOutput| o.dataset.rows().map(<[Code]>::to_vec).collect::<Vec<_>>();
        assert_eq!(rows(&a), rows(&b));
    }

    #[test]
    fn mismatch_rate_at_half_time() {
        let out = simulate(&SimConfig { n: 1000, p: 10, k: 5, t: 0.5, seed: 7, ..Default::default() }).unwrap();
        assert!((empirical_change_rate(&out) - 0.12).abs() <= 0.01);
    }

    #[test]
    fn coordinates_independent_given_labels() {
        let out = simulate(&SimConfig { n: 1000, p: 10, k: 5, t: 2.0, seed: 9, ..Default::default() }).unwrap();
        let ds = &out.dataset;
        let flag = |i: usize, l: usize| (ds.row(i)[l] != out.true_modes[out.labels[i]].0[l]) as u8 as f64;
        let (a, b): (Vec<f64>, Vec<f64>) = (0..ds.n()).map(|i| (flag(i, 0), flag(i, 1))).unzip();
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
        let rho = cov / (sa * sb);
        assert!(rho.abs() < 0.05, "rho = {rho}");
    }
}
