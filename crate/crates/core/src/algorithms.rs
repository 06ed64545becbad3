//! The three optimizers and the shared-initialization batch runner.
//!
//! `H97` reallocates each observation to its nearest mode. `OT` moves an
//! observation whenever the exact objective change is negative, even if the
//! target mode is farther away. `OTQT` interleaves `OT` passes with a cheaper
//! stage that only looks at each observation's recorded runner-up cluster.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Code, Dataset};
use crate::eval;
use crate::movecost::{join_cost, membership_cost, JoinCost};
use crate::state::{distance, ClusterState, Mode, StateError, Transfer, NONE};

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("K = {k} exceeds the {distinct} distinct rows in the data")]
    InfeasibleK { k: usize, distinct: usize },
    #[error("initial modes {0} and {1} coincide")]
    DuplicateModes(usize, usize),
    #[error("initial mode {index} is invalid: {reason}")]
    InvalidMode { index: usize, reason: String },
    #[error("processing order is not a permutation of 0..{0}")]
    InvalidOrder(usize),
    #[error("unknown algorithm `{0}` (expected h97, ot or otqt)")]
    UnknownAlgorithm(String),
    #[error("batch needs at least one initialization, one K and one algorithm")]
    EmptyBatch,
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    H97,
    Ot,
    Otqt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::H97, Algorithm::Ot, Algorithm::Otqt];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::H97 => "h97",
            Algorithm::Ot => "ot",
            Algorithm::Otqt => "otqt",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = AlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h97" => Ok(Algorithm::H97),
            "ot" => Ok(Algorithm::Ot),
            "otqt" => Ok(Algorithm::Otqt),
            other => Err(AlgorithmError::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// Which phase of an optimizer produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GettingStarted,
    Reallocation,
    OptimalTransfer,
    QuickTransfer,
}

/// Observer hooks for auditing optimizer runs.
pub trait Monitor {
    fn transfer(&mut self, _stage: Stage, _transfer: &Transfer, _state: &ClusterState) {}
    fn pass_complete(&mut self, _stage: Stage, _state: &ClusterState) {}
}

pub struct NoMonitor;

impl Monitor for NoMonitor {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterations {
    /// Full reallocation sweeps (`H97`).
    pub reallocation: u32,
    /// Optimal-transfer passes.
    pub optimal_transfer: u32,
    /// Quick-transfer sweeps over the observations.
    pub quick_transfer: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Sweep limit for `H97`, which has no termination guarantee.
    pub max_reallocation_passes: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_reallocation_passes: 1000,
        }
    }
}

/// Terminal state of one optimizer run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fit {
    pub assignment: Vec<usize>,
    pub modes: Vec<Mode>,
    pub objective: u64,
    pub iterations: Iterations,
    pub transfers: u64,
    pub converged: bool,
    pub empty_clusters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub k: usize,
    pub init_id: usize,
    pub seed: u64,
    pub final_objective: u64,
    pub iterations: Iterations,
    pub transfers: u64,
    pub wall_time_secs: f64,
    pub converged: bool,
    pub empty_clusters: Vec<usize>,
    pub ari: Option<f64>,
    pub modes: Vec<Mode>,
    pub assignment: Vec<usize>,
}

/// K modes copied from K distinct rows, chosen uniformly without replacement.
pub fn init_random_modes<R: Rng + ?Sized>(
    ds: &Dataset,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Mode>, AlgorithmError> {
    init_from_distinct(ds, &ds.distinct_rows(), k, rng)
}

/// As [`init_random_modes`] with the distinct rows precomputed.
pub fn init_from_distinct<R: Rng + ?Sized>(
    ds: &Dataset,
    distinct: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Mode>, AlgorithmError> {
    if k == 0 {
        return Err(StateError::ZeroClusters.into());
    }
    if k > distinct.len() {
        return Err(AlgorithmError::InfeasibleK {
            k,
            distinct: distinct.len(),
        });
    }
    Ok(index::sample(rng, distinct.len(), k)
        .into_iter()
        .map(|j| Mode::from(ds.row(distinct[j])))
        .collect())
}

fn validate(ds: &Dataset, init: &[Mode], order: &[usize]) -> Result<(), AlgorithmError> {
    if init.is_empty() {
        return Err(StateError::ZeroClusters.into());
    }
    for (index, m) in init.iter().enumerate() {
        if m.0.len() != ds.p() {
            return Err(AlgorithmError::InvalidMode {
                index,
                reason: format!("length {} but p = {}", m.0.len(), ds.p()),
            });
        }
        if let Some(l) = (0..ds.p()).find(|&l| m.0[l] as usize >= ds.cardinality(l)) {
            return Err(AlgorithmError::InvalidMode {
                index,
                reason: format!("code {} out of range at coordinate {l}", m.0[l]),
            });
        }
        if let Some(j) = init[..index].iter().position(|o| o == m) {
            return Err(AlgorithmError::DuplicateModes(j, index));
        }
    }
    let mut seen = vec![false; ds.n()];
    if order.len() != ds.n() {
        return Err(AlgorithmError::InvalidOrder(ds.n()));
    }
    for &i in order {
        if i >= ds.n() || seen[i] {
            return Err(AlgorithmError::InvalidOrder(ds.n()));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Effective centres: the frozen mode while a cluster is empty, otherwise the count mode.
struct Centres {
    frozen: Vec<Option<Vec<Code>>>,
}

impl Centres {
    fn get<'s>(&'s self, st: &'s ClusterState, c: usize) -> &'s [Code] {
        match &self.frozen[c] {
            Some(m) if st.size(c) == 0 => m,
            _ => st.mode(c),
        }
    }

    fn modes(&self, st: &ClusterState) -> Vec<Mode> {
        (0..st.k()).map(|c| Mode::from(self.get(st, c))).collect()
    }
}

/// Assign each observation in `order` to its nearest centre, updating that centre at once.
///
/// The two closest centres are recorded as they stand when the observation is visited.
fn getting_started<'a>(
    ds: &'a Dataset,
    init: &[Mode],
    order: &[usize],
) -> Result<(ClusterState<'a>, Centres), AlgorithmError> {
    let k = init.len();
    let mut st = ClusterState::empty(ds, k)?;
    let centres = Centres {
        frozen: init.iter().map(|m| Some(m.0.clone())).collect(),
    };
    for &i in order {
        let row = ds.row(i);
        let (mut first, mut second) = ((usize::MAX, NONE), (usize::MAX, NONE));
        for c in 0..k {
            let d = distance(row, centres.get(&st, c));
            if d < first.0 {
                second = first;
                first = (d, c);
            } else if d < second.0 {
                second = (d, c);
            }
        }
        st.insert(i, first.1);
        st.set_second(i, second.1);
    }
    Ok((st, centres))
}

fn fit_from(st: &ClusterState, modes: Vec<Mode>, iterations: Iterations, transfers: u64, converged: bool) -> Fit {
    Fit {
        assignment: st.assignment().to_vec(),
        modes,
        objective: st.objective(),
        iterations,
        transfers,
        converged,
        empty_clusters: st.empty_clusters(),
    }
}

pub fn h97_run(ds: &Dataset, init: &[Mode], order: &[usize]) -> Result<Fit, AlgorithmError> {
    h97_run_with(ds, init, order, &RunOptions::default(), &mut NoMonitor)
}

/// Nearest-mode reallocation with immediate mode updates.
///
/// A cluster that loses its last member keeps its last mode as a frozen centre
/// and may regain members later.
pub fn h97_run_with<M: Monitor + ?Sized>(
    ds: &Dataset,
    init: &[Mode],
    order: &[usize],
    opts: &RunOptions,
    monitor: &mut M,
) -> Result<Fit, AlgorithmError> {
    validate(ds, init, order)?;
    let (mut st, mut centres) = getting_started(ds, init, order)?;
    monitor.pass_complete(Stage::GettingStarted, &st);
    Ok(reallocate(&mut st, &mut centres, order, opts, monitor))
}

fn reallocate<M: Monitor + ?Sized>(
    st: &mut ClusterState,
    centres: &mut Centres,
    order: &[usize],
    opts: &RunOptions,
    monitor: &mut M,
) -> Fit {
    let k = st.k();
    let ds = st.data();
    let mut iterations = Iterations::default();
    let mut transfers = 0;
    let mut converged = false;
    while iterations.reallocation < opts.max_reallocation_passes {
        iterations.reallocation += 1;
        let mut moved = false;
        for &i in order {
            let row = ds.row(i);
            let own = st.cluster_of(i);
            let own_d = distance(row, centres.get(st, own));
            let (mut best_d, mut best) = (usize::MAX, NONE);
            for c in 0..k {
                let d = distance(row, centres.get(st, c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if best_d >= own_d {
                continue;
            }
            let last_mode = st.mode(own).to_vec();
            let t = st.apply_transfer(i, best);
            if t.emptied_source {
                centres.frozen[own] = Some(last_mode);
            }
            transfers += 1;
            moved = true;
            monitor.transfer(Stage::Reallocation, &t, st);
        }
        monitor.pass_complete(Stage::Reallocation, st);
        if !moved {
            converged = true;
            break;
        }
    }
    let modes = centres.modes(st);
    fit_from(st, modes, iterations, transfers, converged)
}

pub fn ot_run(ds: &Dataset, init: &[Mode], order: &[usize]) -> Result<Fit, AlgorithmError> {
    ot_run_with(ds, init, order, &mut NoMonitor)
}

pub fn ot_run_with<M: Monitor + ?Sized>(
    ds: &Dataset,
    init: &[Mode],
    order: &[usize],
    monitor: &mut M,
) -> Result<Fit, AlgorithmError> {
    validate(ds, init, order)?;
    let (mut st, _) = getting_started(ds, init, order)?;
    monitor.pass_complete(Stage::GettingStarted, &st);
    Ok(TransferSearch::new(&mut st, order, monitor).run(false))
}

pub fn otqt_run(ds: &Dataset, init: &[Mode], order: &[usize]) -> Result<Fit, AlgorithmError> {
    otqt_run_with(ds, init, order, &mut NoMonitor)
}

pub fn otqt_run_with<M: Monitor + ?Sized>(
    ds: &Dataset,
    init: &[Mode],
    order: &[usize],
    monitor: &mut M,
) -> Result<Fit, AlgorithmError> {
    validate(ds, init, order)?;
    let (mut st, _) = getting_started(ds, init, order)?;
    monitor.pass_complete(Stage::GettingStarted, &st);
    Ok(TransferSearch::new(&mut st, order, monitor).run(true))
}

/// Dispatch to one optimizer.
pub fn run_algorithm(
    alg: Algorithm,
    ds: &Dataset,
    init: &[Mode],
    order: &[usize],
    opts: &RunOptions,
) -> Result<Fit, AlgorithmError> {
    match alg {
        Algorithm::H97 => h97_run_with(ds, init, order, opts, &mut NoMonitor),
        Algorithm::Ot => ot_run(ds, init, order),
        Algorithm::Otqt => otqt_run(ds, init, order),
    }
}

/// Continue optimizing an existing state with `alg`, every cluster initially live.
pub fn refine<M: Monitor + ?Sized>(
    st: &mut ClusterState,
    alg: Algorithm,
    order: &[usize],
    opts: &RunOptions,
    monitor: &mut M,
) -> Fit {
    match alg {
        Algorithm::H97 => {
            let mut centres = Centres {
                frozen: vec![None; st.k()],
            };
            reallocate(st, &mut centres, order, opts, monitor)
        }
        Algorithm::Ot => TransferSearch::new(st, order, monitor).run(false),
        Algorithm::Otqt => TransferSearch::new(st, order, monitor).run(true),
    }
}

/// Live-set and cost-set bookkeeping.
///
/// A cluster is live while its membership changed recently enough to make new
/// moves possible. The cost set is tracked through version stamps: a cached
/// membership cost is stale exactly when its cluster's version moved on.
#[derive(Debug, Clone)]
pub struct LiveCostSets {
    pub live: Vec<bool>,
    version: Vec<u64>,
    clock: u64,
}

impl LiveCostSets {
    fn new(k: usize) -> Self {
        Self {
            live: vec![true; k],
            version: (1..=k as u64).collect(),
            clock: k as u64,
        }
    }

    fn touch(&mut self, c: usize) {
        self.clock += 1;
        self.version[c] = self.clock;
    }

    /// Clusters whose cached membership costs may be stale relative to `stamp`.
    pub fn in_cost_set(&self, c: usize, stamp: u64) -> bool {
        self.version[c] != stamp
    }
}

struct TransferSearch<'s, 'a, M: ?Sized> {
    st: &'s mut ClusterState<'a>,
    order: &'s [usize],
    monitor: &'s mut M,
    sets: LiveCostSets,
    cost: Vec<u32>,
    stamp: Vec<u64>,
    iterations: Iterations,
    transfers: u64,
}

impl<'s, 'a, M: Monitor + ?Sized> TransferSearch<'s, 'a, M> {
    fn new(st: &'s mut ClusterState<'a>, order: &'s [usize], monitor: &'s mut M) -> Self {
        let (k, n) = (st.k(), st.data().n());
        Self {
            st,
            order,
            monitor,
            sets: LiveCostSets::new(k),
            cost: vec![0; n],
            stamp: vec![0; n],
            iterations: Iterations::default(),
            transfers: 0,
        }
    }

    fn run(mut self, quick: bool) -> Fit {
        loop {
            let touched = self.optimal_transfer_pass();
            self.iterations.optimal_transfer += 1;
            self.monitor.pass_complete(Stage::OptimalTransfer, self.st);
            if !touched.iter().any(|&t| t) {
                break;
            }
            self.sets.live = touched;
            if quick {
                let qt = self.quick_transfer_stage();
                for (l, q) in self.sets.live.iter_mut().zip(qt) {
                    *l |= q;
                }
            }
        }
        let modes = self.st.modes();
        fit_from(self.st, modes, self.iterations, self.transfers, true)
    }

    fn membership(&mut self, i: usize) -> u32 {
        let c = self.st.cluster_of(i);
        if self.sets.in_cost_set(c, self.stamp[i]) {
            self.cost[i] = membership_cost(self.st, i);
            self.stamp[i] = self.sets.version[c];
        }
        self.cost[i]
    }

    fn transfer(&mut self, stage: Stage, i: usize, r: usize) -> Transfer {
        let t = self.st.apply_transfer(i, r);
        self.sets.touch(t.from);
        self.sets.touch(t.to);
        self.transfers += 1;
        self.monitor.transfer(stage, &t, self.st);
        t
    }

    fn optimal_transfer_pass(&mut self) -> Vec<bool> {
        let k = self.st.k();
        let mut touched = vec![false; k];
        for idx in 0..self.order.len() {
            let i = self.order[idx];
            let own = self.st.cluster_of(i);
            let mc = self.membership(i);
            if mc == 0 {
                continue;
            }
            let all_targets = self.sets.live[own];
            let mut bound = mc - 1;
            let mut best: Option<(u32, usize)> = None;
            let runner_up = self.st.second(i);
            let candidates = std::iter::once(runner_up).chain((0..k).filter(|&r| r != runner_up));
            for r in candidates {
                if r == NONE || r == own || !(all_targets || self.sets.live[r]) {
                    continue;
                }
                if let JoinCost::Cost(c) = join_cost(self.st, i, r, Some(bound)) {
                    if best.map_or(true, |(bc, br)| c < bc || (c == bc && r < br)) {
                        best = Some((c, r));
                        bound = c;
                    }
                }
            }
            if let Some((_, r)) = best {
                let t = self.transfer(Stage::OptimalTransfer, i, r);
                for c in [t.from, t.to] {
                    self.sets.live[c] = true;
                    touched[c] = true;
                }
            }
        }
        touched
    }

    /// Returns the clusters touched during the stage.
    fn quick_transfer_stage(&mut self) -> Vec<bool> {
        let k = self.st.k();
        let n = self.order.len() as u64;
        // a cluster is live at step s while s < live_until
        let mut live_until: Vec<u64> = self.sets.live.iter().map(|&l| if l { n + 1 } else { 0 }).collect();
        let mut touched = vec![false; k];
        let mut step = 0u64;
        let mut idle = 0u64;
        while idle < n {
            let i = self.order[(step % n) as usize];
            step += 1;
            idle += 1;
            let own = self.st.cluster_of(i);
            let r = self.st.second(i);
            if r == NONE || !(step < live_until[own] || step < live_until[r]) {
                continue;
            }
            let mc = self.membership(i);
            if mc == 0 {
                continue;
            }
            if let JoinCost::Cost(_) = join_cost(self.st, i, r, Some(mc - 1)) {
                let t = self.transfer(Stage::QuickTransfer, i, r);
                for c in [t.from, t.to] {
                    live_until[c] = step + n;
                    touched[c] = true;
                }
                idle = 0;
            }
        }
        self.iterations.quick_transfer += step.div_ceil(n) as u32;
        self.monitor.pass_complete(Stage::QuickTransfer, self.st);
        touched
    }
}

/// Smallest α with α·n·p′·max_k > 500 000.
pub fn alpha_rule_inits(n: u64, p_prime: u64, max_k: u64) -> u64 {
    500_000 / (n * p_prime * max_k).max(1) + 1
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (K, initialization) cell, independent of execution order.
pub fn run_seed(master_seed: u64, k: usize, init_id: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ k as u64) ^ init_id as u64)
}

/// Initial modes and processing order for one (K, initialization) cell.
pub fn initialization(
    ds: &Dataset,
    distinct: &[usize],
    k: usize,
    seed: u64,
) -> Result<(Vec<Mode>, Vec<usize>), AlgorithmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = init_from_distinct(ds, distinct, k, &mut rng)?;
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.shuffle(&mut rng);
    Ok((modes, order))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchConfig {
    pub ks: Vec<usize>,
    pub n_inits: usize,
    pub algorithms: Vec<Algorithm>,
    pub master_seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchFailure {
    pub k: usize,
    pub init_id: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutput {
    /// Ordered by (K, init_id, algorithm).
    pub results: Vec<RunResult>,
    pub failures: Vec<BatchFailure>,
}

/// Every requested algorithm from the same initializations, in parallel.
pub fn run_batch(ds: &Dataset, cfg: &BatchConfig) -> Result<BatchOutput, AlgorithmError> {
    let mut algs = cfg.algorithms.clone();
    algs.sort();
    algs.dedup();
    if cfg.n_inits == 0 || cfg.ks.is_empty() || algs.is_empty() {
        return Err(AlgorithmError::EmptyBatch);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| AlgorithmError::ThreadPool(e.to_string()))?;
    let distinct = ds.distinct_rows();
    let cells: Vec<(usize, usize)> = cfg
        .ks
        .iter()
        .flat_map(|&k| (0..cfg.n_inits).map(move |id| (k, id)))
        .collect();
    let opts = RunOptions::default();
    let outcomes: Vec<Result<Vec<RunResult>, BatchFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(k, init_id)| {
                let seed = run_seed(cfg.master_seed, k, init_id);
                let fail = |e: AlgorithmError| BatchFailure {
                    k,
                    init_id,
                    error: e.to_string(),
                };
                let (modes, order) = initialization(ds, &distinct, k, seed).map_err(fail)?;
                algs.iter()
                    .map(|&alg| {
                        let start = Instant::now();
                        let fit = run_algorithm(alg, ds, &modes, &order, &opts).map_err(fail)?;
                        let wall_time_secs = start.elapsed().as_secs_f64();
                        let ari = ds.labels().map(|l| eval::ari(&l.ids, &fit.assignment).unwrap_or(f64::NAN));
                        Ok(RunResult {
                            algorithm: alg,
                            k,
                            init_id,
                            seed,
                            final_objective: fit.objective,
                            iterations: fit.iterations,
                            transfers: fit.transfers,
                            wall_time_secs,
                            converged: fit.converged,
                            empty_clusters: fit.empty_clusters,
                            ari,
                            modes: fit.modes,
                            assignment: fit.assignment,
                        })
                    })
                    .collect()
            })
            .collect()
    });
    let mut out = BatchOutput::default();
    for o in outcomes {
        match o {
            Ok(rs) => out.results.extend(rs),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::hamming;
    use std::collections::HashMap;

    fn ds(rows: &[&[Code]]) -> Dataset {
        let rows: Vec<Vec<Code>> = rows.iter().map(|r| r.to_vec()).collect();
        Dataset::from_codes(&rows, None).unwrap()
    }

    fn modes_of(data: &Dataset, idx: &[usize]) -> Vec<Mode> {
        idx.iter().map(|&i| Mode::from(data.row(i))).collect()
    }

    fn witness() -> Dataset {
        ds(&[&[0, 0, 0], &[1, 0, 1], &[2, 2, 2], &[2, 1, 0], &[2, 0, 2]])
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, p: usize, j: u32) -> Vec<Vec<Code>> {
        (0..n).map(|_| (0..p).map(|_| rng.gen_range(0..j)).collect()).collect()
    }

    /// Global minimum over all K-partitions (empty clusters allowed) by enumeration.
    fn brute_force_min(data: &Dataset, k: usize) -> u64 {
        let n = data.n();
        (0..k.pow(n as u32))
            .map(|code| {
                let assign: Vec<usize> = (0..n).map(|i| code / k.pow(i as u32) % k).collect();
                ClusterState::build(data, &assign, k).unwrap().objective()
            })
            .min()
            .unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("kmeans".parse::<Algorithm>().is_err());
        assert_eq!(serde_json::to_string(&Algorithm::Otqt).unwrap(), "\"otqt\"");
    }

    #[test]
    fn init_k1_and_exhaustion() {
        let data = ds(&[&[0, 1], &[1, 0], &[1, 1], &[1, 0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = init_random_modes(&data, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        let mut all = init_random_modes(&data, 3, &mut rng).unwrap();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(all, vec![Mode(vec![0, 1]), Mode(vec![1, 0]), Mode(vec![1, 1])]);
        assert!(matches!(
            init_random_modes(&data, 4, &mut rng),
            Err(AlgorithmError::InfeasibleK { k: 4, distinct: 3 })
        ));
    }

    #[test]
    fn init_pairs_are_uniform() {
        let data = ds(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let mut freq: HashMap<Vec<Vec<Code>>, usize> = HashMap::new();
        for _ in 0..draws {
            let mut pair: Vec<Vec<Code>> = init_random_modes(&data, 2, &mut rng).unwrap().into_iter().map(|m| m.0).collect();
            pair.sort();
            *freq.entry(pair).or_default() += 1;
        }
        assert_eq!(freq.len(), 6);
        for &f in freq.values() {
            assert!((f as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.02);
        }
    }

    #[test]
    fn validate_rejects_bad_inputs() {
        let data = witness();
        let order: Vec<usize> = (0..5).collect();
        assert!(matches!(
            ot_run(&data, &modes_of(&data, &[0, 0]), &order),
            Err(AlgorithmError::DuplicateModes(0, 1))
        ));
        assert!(matches!(
            ot_run(&data, &modes_of(&data, &[0, 1]), &[0, 1, 2, 3, 3]),
            Err(AlgorithmError::InvalidOrder(5))
        ));
        assert!(matches!(
            h97_run(&data, &[Mode(vec![0, 0])], &order),
            Err(AlgorithmError::InvalidMode { .. })
        ));
    }

    #[test]
    fn saturated_clustering() {
        let data = ds(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        let order: Vec<usize> = vec![2, 0, 3, 1];
        let init = modes_of(&data, &[0, 1, 2, 3]);
        for fit in [
            h97_run(&data, &init, &order).unwrap(),
            ot_run(&data, &init, &order).unwrap(),
            otqt_run(&data, &init, &order).unwrap(),
        ] {
            assert_eq!(fit.objective, 0);
            assert_eq!(fit.transfers, 0);
            assert!(fit.converged);
        }
    }

    #[test]
    fn witness_h97_stops_where_ot_improves() {
        let data = witness();
        let init = modes_of(&data, &[3, 2]);
        let order = [4, 1, 2, 0, 3];
        let h = h97_run(&data, &init, &order).unwrap();
        assert_eq!(h.assignment, vec![1, 1, 0, 0, 1]);
        assert_eq!(h.objective, 6);
        assert!(h.converged);

        let mut st = ClusterState::build(&data, &h.assignment, 2).unwrap();
        let fit = refine(&mut st, Algorithm::Ot, &[0, 1, 2, 3, 4], &RunOptions::default(), &mut NoMonitor);
        assert_eq!(fit.transfers, 1);
        assert_eq!(fit.objective, 5);
        assert_eq!(fit.assignment, vec![1, 1, 1, 0, 1]);

        let mut again = ClusterState::build(&data, &h.assignment, 2).unwrap();
        let fit = refine(&mut again, Algorithm::H97, &order, &RunOptions::default(), &mut NoMonitor);
        assert_eq!(fit.transfers, 0);
    }

    #[test]
    fn k1_objective_is_distance_to_data_mode() {
        let data = ds(&[&[0, 1, 2], &[0, 0, 2], &[1, 1, 0], &[0, 1, 1]]);
        let st = ClusterState::build(&data, &[0; 4], 1).unwrap();
        let expected: u64 = (0..4).map(|i| hamming(data.row(i), st.mode(0)).unwrap() as u64).sum();
        let order = [3, 1, 0, 2];
        for alg in Algorithm::ALL {
            let fit = run_algorithm(alg, &data, &modes_of(&data, &[2]), &order, &RunOptions::default()).unwrap();
            assert_eq!(fit.objective, expected);
        }
    }

    #[test]
    fn micro_instances_never_beat_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..60 {
            let n = rng.gen_range(3..=8);
            let p = rng.gen_range(1..=3);
            let data = Dataset::from_codes(&random_rows(&mut rng, n, p, 3), Some(&vec![3; p])).unwrap();
            let distinct = data.distinct_rows();
            if distinct.len() < 2 {
                continue;
            }
            let best = brute_force_min(&data, 2);
            let (init, order) = initialization(&data, &distinct, 2, rng.gen()).unwrap();
            let h = h97_run(&data, &init, &order).unwrap();
            let o = ot_run(&data, &init, &order).unwrap();
            assert!(h.objective >= best);
            assert!(o.objective >= best);
        }
    }

    #[test]
    fn ot_refines_h97_terminal_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.gen_range(6..=20);
            let data = Dataset::from_codes(&random_rows(&mut rng, n, 4, 3), Some(&[3; 4])).unwrap();
            let distinct = data.distinct_rows();
            let k = rng.gen_range(2..=3).min(distinct.len());
            let (init, order) = initialization(&data, &distinct, k, rng.gen()).unwrap();
            let h = h97_run(&data, &init, &order).unwrap();
            let mut st = ClusterState::build(&data, &h.assignment, k).unwrap();
            let fit = refine(&mut st, Algorithm::Ot, &order, &RunOptions::default(), &mut NoMonitor);
            assert!(fit.objective <= h.objective);
        }
    }

    #[test]
    fn optimizers_are_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let n = rng.gen_range(10..=40);
            let data = Dataset::from_codes(&random_rows(&mut rng, n, 5, 4), Some(&[4; 5])).unwrap();
            let distinct = data.distinct_rows();
            let k = rng.gen_range(2..=4);
            let (init, order) = initialization(&data, &distinct, k, rng.gen()).unwrap();
            for alg in [Algorithm::Ot, Algorithm::Otqt] {
                let fit = run_algorithm(alg, &data, &init, &order, &RunOptions::default()).unwrap();
                let mut st = ClusterState::build(&data, &fit.assignment, k).unwrap();
                let again = refine(&mut st, alg, &order, &RunOptions::default(), &mut NoMonitor);
                assert_eq!(again.transfers, 0, "{alg} moved from its own fixed point");
                // no single move improves an OT fixed point
                for i in 0..n {
                    for r in (0..k).filter(|&r| r != fit.assignment[i]) {
                        assert!(crate::movecost::move_delta(&st, i, r) >= 0);
                    }
                }
            }
            let h = h97_run(&data, &init, &order).unwrap();
            if h.converged && h.empty_clusters.is_empty() {
                let mut st = ClusterState::build(&data, &h.assignment, k).unwrap();
                let again = refine(&mut st, Algorithm::H97, &order, &RunOptions::default(), &mut NoMonitor);
                assert_eq!(again.transfers, 0);
            }
        }
    }

    #[test]
    fn alpha_rule() {
        assert_eq!(alpha_rule_inits(1000, 10, 9), 6);
        assert!(6 * 1000 * 10 * 9 > 500_000 && 5 * 1000 * 10 * 9 <= 500_000);
        assert_eq!(alpha_rule_inits(500_000, 1, 1), 2);
    }

    #[test]
    fn seeds_depend_on_every_input() {
        let s = run_seed(1, 2, 3);
        assert_ne!(s, run_seed(2, 2, 3));
        assert_ne!(s, run_seed(1, 3, 3));
        assert_ne!(s, run_seed(1, 2, 4));
        assert_eq!(s, run_seed(1, 2, 3));
    }

    #[test]
    fn batch_shares_initializations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = Dataset::from_codes(&random_rows(&mut rng, 40, 4, 3), Some(&[3; 4])).unwrap();
        let cfg = BatchConfig {
            ks: vec![2, 3],
            n_inits: 1,
            algorithms: vec![Algorithm::Otqt, Algorithm::H97, Algorithm::Ot],
            master_seed: 42,
            threads: 2,
        };
        let out = run_batch(&data, &cfg).unwrap();
        assert_eq!(out.results.len(), 6);
        let keys: Vec<_> = out.results.iter().map(|r| (r.k, r.init_id, r.algorithm)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(out.results.iter().all(|r| r.init_id == 0));
        assert_eq!(out.results[0].seed, out.results[2].seed);

        let again = run_batch(&data, &BatchConfig { threads: 1, ..cfg }).unwrap();
        let strip = |o: &BatchOutput| -> Vec<(u64, Vec<usize>)> {
            o.results.iter().map(|r| (r.final_objective, r.assignment.clone())).collect()
        };
        assert_eq!(strip(&out), strip(&again));
    }

    #[test]
    fn batch_reports_infeasible_k() {
        let data = ds(&[&[0, 0], &[1, 1], &[0, 0]]);
        let cfg = BatchConfig {
            ks: vec![2, 3],
            n_inits: 2,
            algorithms: vec![Algorithm::Ot],
            master_seed: 1,
            threads: 1,
        };
        let out = run_batch(&data, &cfg).unwrap();
        assert_eq!(out.results.len(), 2);
        assert_eq!(out.failures.len(), 2);
        assert!(out.failures.iter().all(|f| f.k == 3));
        assert!(run_batch(&data, &BatchConfig { n_inits: 0, ..cfg }).is_err());
    }
}
