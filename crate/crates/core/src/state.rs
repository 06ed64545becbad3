//! Incremental cluster state.
//!
//! Counts are stored per cluster in one flat block of width `Σ_l |J_l|`.
//! Modes and minor modes are kept consistent after every insertion and
//! transfer using local repair rules, so no transfer ever rescans a cluster.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Code, Dataset};

/// Sentinel for "no cluster".
pub const NONE: usize = usize::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("code vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("K must be at least 1")]
    ZeroClusters,
    #[error("assignment vector has length {found}, expected {expected}")]
    AssignmentLength { expected: usize, found: usize },
    #[error("observation {obs} assigned to cluster {cluster}, but K = {k}")]
    ClusterOutOfRange { obs: usize, cluster: usize, k: usize },
}

/// A cluster centre: one category code per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mode(pub Vec<Code>);

impl Mode {
    pub fn values(&self) -> &[Code] {
        &self.0
    }
}

impl From<&[Code]> for Mode {
    fn from(v: &[Code]) -> Self {
        Mode(v.to_vec())
    }
}

/// Number of coordinates at which `a` and `b` differ.
pub fn hamming(a: &[Code], b: &[Code]) -> Result<usize, StateError> {
    if a.len() != b.len() {
        return Err(StateError::LengthMismatch(a.len(), b.len()));
    }
    Ok(distance(a, b))
}

#[inline]
pub(crate) fn distance(a: &[Code], b: &[Code]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Outcome of a single-observation transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub obs: usize,
    pub from: usize,
    pub to: usize,
    pub objective_change: i64,
    pub emptied_source: bool,
}

/// Fields that must agree between an incrementally maintained state and a rebuild.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDigest {
    pub assign: Vec<usize>,
    pub counts: Vec<u32>,
    pub modes: Vec<Code>,
    pub minors: Vec<Code>,
    pub sizes: Vec<usize>,
    pub objective: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub modes: Vec<Mode>,
    pub sizes: Vec<usize>,
    pub objective: u64,
}

#[derive(Debug, Clone)]
pub struct ClusterState<'a> {
    data: &'a Dataset,
    k: usize,
    offsets: Vec<usize>,
    width: usize,
    assign: Vec<usize>,
    counts: Vec<u32>,
    modes: Vec<Code>,
    minors: Vec<Code>,
    sizes: Vec<usize>,
    second: Vec<usize>,
    objective: u64,
}

impl<'a> ClusterState<'a> {
    /// K empty clusters, nothing assigned.
    pub fn empty(data: &'a Dataset, k: usize) -> Result<Self, StateError> {
        if k == 0 {
            return Err(StateError::ZeroClusters);
        }
        let p = data.p();
        let mut offsets = Vec::with_capacity(p);
        let mut width = 0;
        for l in 0..p {
            offsets.push(width);
            width += data.cardinality(l);
        }
        Ok(Self {
            data,
            k,
            offsets,
            width,
            assign: vec![NONE; data.n()],
            counts: vec![0; k * width],
            // empty clusters carry the count-derived mode 0 and minor mode 1
            modes: vec![0; k * p],
            minors: vec![1; k * p],
            sizes: vec![0; k],
            second: vec![NONE; data.n()],
            objective: 0,
        })
    }

    /// Tally a state from scratch. Empty clusters are allowed; see [`Self::empty_clusters`].
    pub fn build(data: &'a Dataset, assign: &[usize], k: usize) -> Result<Self, StateError> {
        let mut st = Self::empty(data, k)?;
        if assign.len() != data.n() {
            return Err(StateError::AssignmentLength {
                expected: data.n(),
                found: assign.len(),
            });
        }
        for (obs, &c) in assign.iter().enumerate() {
            if c >= k {
                return Err(StateError::ClusterOutOfRange { obs, cluster: c, k });
            }
        }
        let p = data.p();
        for (i, &c) in assign.iter().enumerate() {
            let base = c * st.width;
            for (l, &x) in data.row(i).iter().enumerate() {
                st.counts[base + st.offsets[l] + x as usize] += 1;
            }
            st.sizes[c] += 1;
        }
        st.assign.copy_from_slice(assign);
        let mut objective = 0u64;
        for c in 0..k {
            for l in 0..p {
                let (mode, minor) = st.scan_mode(c, l);
                st.modes[c * p + l] = mode;
                st.minors[c * p + l] = minor;
                objective += (st.sizes[c] as u64) - st.count(c, l, mode) as u64;
            }
        }
        st.objective = objective;
        st.refresh_nearest();
        Ok(st)
    }

    /// Recompute every second-closest cluster from the current modes (lowest index on ties).
    pub fn refresh_nearest(&mut self) {
        for i in 0..self.data.n() {
            let own = self.assign[i];
            let row = self.data.row(i);
            let mut best = (usize::MAX, NONE);
            for c in 0..self.k {
                if c == own {
                    continue;
                }
                let d = distance(row, self.mode(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            self.second[i] = best.1;
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn objective(&self) -> u64 {
        self.objective
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    #[inline]
    pub fn cluster_of(&self, i: usize) -> usize {
        self.assign[i]
    }

    #[inline]
    pub fn second(&self, i: usize) -> usize {
        self.second[i]
    }

    pub fn set_second(&mut self, i: usize, c: usize) {
        self.second[i] = c;
    }

    #[inline]
    pub fn size(&self, c: usize) -> usize {
        self.sizes[c]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    #[inline]
    pub fn mode(&self, c: usize) -> &[Code] {
        let p = self.data.p();
        &self.modes[c * p..(c + 1) * p]
    }

    #[inline]
    pub fn minor(&self, c: usize) -> &[Code] {
        let p = self.data.p();
        &self.minors[c * p..(c + 1) * p]
    }

    #[inline]
    pub fn count(&self, c: usize, l: usize, x: Code) -> u32 {
        self.counts[c * self.width + self.offsets[l] + x as usize]
    }

    pub fn modes(&self) -> Vec<Mode> {
        (0..self.k).map(|c| Mode::from(self.mode(c))).collect()
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        (0..self.k).filter(|&c| self.sizes[c] == 0).collect()
    }

    /// Cost of cluster `c` alone: Σ_l (|C| − n_{c,l,mode}).
    pub fn cluster_cost(&self, c: usize) -> u64 {
        (0..self.data.p())
            .map(|l| self.sizes[c] as u64 - self.count(c, l, self.mode(c)[l]) as u64)
            .sum()
    }

    pub fn digest(&self) -> StateDigest {
        StateDigest {
            assign: self.assign.clone(),
            counts: self.counts.clone(),
            modes: self.modes.clone(),
            minors: self.minors.clone(),
            sizes: self.sizes.clone(),
            objective: self.objective,
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            k: self.k,
            assignment: self.assign.clone(),
            modes: self.modes(),
            sizes: self.sizes.clone(),
            objective: self.objective,
        }
    }

    /// Add an unassigned observation to cluster `c`. Returns the objective change.
    pub fn insert(&mut self, i: usize, c: usize) -> u64 {
        debug_assert_eq!(self.assign[i], NONE);
        let before = self.cluster_cost(c);
        self.add(i, c);
        self.assign[i] = c;
        let after = self.cluster_cost(c);
        self.objective = self.objective + after - before;
        after - before
    }

    /// Move observation `i` to cluster `to`, repairing both affected clusters.
    pub fn apply_transfer(&mut self, i: usize, to: usize) -> Transfer {
        let from = self.assign[i];
        debug_assert!(from != NONE && from != to && to < self.k);
        let before = self.cluster_cost(from) + self.cluster_cost(to);
        self.remove(i, from);
        self.add(i, to);
        self.assign[i] = to;
        self.second[i] = from;
        let after = self.cluster_cost(from) + self.cluster_cost(to);
        self.objective = self.objective + after - before;
        Transfer {
            obs: i,
            from,
            to,
            objective_change: after as i64 - before as i64,
            emptied_source: self.sizes[from] == 0,
        }
    }

    /// Full recount check; returns a description of the first inconsistency found.
    pub fn audit(&self) -> Result<(), String> {
        let rebuilt = Self::build(self.data, &self.assign, self.k).map_err(|e| e.to_string())?;
        let (a, b) = (self.digest(), rebuilt.digest());
        if a.counts != b.counts {
            return Err("counts differ from recount".into());
        }
        if a.sizes != b.sizes {
            return Err("sizes differ from recount".into());
        }
        if a.modes != b.modes {
            return Err("modes differ from recount".into());
        }
        if a.minors != b.minors {
            return Err("minor modes differ from recount".into());
        }
        if a.objective != b.objective {
            return Err(format!(
                "objective {} differs from recount {}",
                a.objective, b.objective
            ));
        }
        Ok(())
    }

    fn slot(&self, c: usize, l: usize, x: Code) -> usize {
        c * self.width + self.offsets[l] + x as usize
    }

    /// Mode and minor mode of (c, l) by full scan.
    fn scan_mode(&self, c: usize, l: usize) -> (Code, Code) {
        let j = self.data.cardinality(l) as Code;
        let mut mode = 0;
        for x in 1..j {
            if self.count(c, l, x) > self.count(c, l, mode) {
                mode = x;
            }
        }
        (mode, self.scan_minor(c, l, mode))
    }

    fn scan_minor(&self, c: usize, l: usize, mode: Code) -> Code {
        let j = self.data.cardinality(l) as Code;
        let mut minor = if mode == 0 { 1 } else { 0 };
        for x in minor + 1..j {
            if x != mode && self.count(c, l, x) > self.count(c, l, minor) {
                minor = x;
            }
        }
        minor
    }

    fn add(&mut self, i: usize, c: usize) {
        let p = self.data.p();
        let row = self.data.row(i);
        for (l, &x) in row.iter().enumerate() {
            let s = self.slot(c, l, x);
            self.counts[s] += 1;
            let at = c * p + l;
            let (mu, m) = (self.modes[at], self.minors[at]);
            if x == mu {
                continue;
            }
            let cx = self.counts[s];
            let cmu = self.count(c, l, mu);
            if cx > cmu || (cx == cmu && x < mu) {
                self.minors[at] = mu;
                self.modes[at] = x;
            } else if x != m {
                let cm = self.count(c, l, m);
                if cx > cm || (cx == cm && x < m) {
                    self.minors[at] = x;
                }
            }
        }
        self.sizes[c] += 1;
    }

    fn remove(&mut self, i: usize, c: usize) {
        let p = self.data.p();
        let row = self.data.row(i);
        for (l, &x) in row.iter().enumerate() {
            let s = self.slot(c, l, x);
            self.counts[s] -= 1;
            let at = c * p + l;
            let (mu, m) = (self.modes[at], self.minors[at]);
            if x == mu {
                let cmu = self.counts[s];
                let cm = self.count(c, l, m);
                if cmu > cm || (cmu == cm && mu < m) {
                    continue;
                }
                let j = self.data.cardinality(l) as Code;
                self.modes[at] = m;
                if cmu == cm {
                    // m ranks below x; the first tied code after m becomes the minor mode
                    self.minors[at] = (m + 1..=x).find(|&y| self.count(c, l, y) == cm).unwrap();
                } else {
                    // x lost its lead by one: a code tied with m beats x, else the first code tied with x
                    self.minors[at] = (m + 1..j)
                        .find(|&y| self.count(c, l, y) == cm)
                        .unwrap_or_else(|| {
                            (0..=x).find(|&y| self.count(c, l, y) == cmu).unwrap()
                        });
                }
            } else if x == m {
                self.minors[at] = self.scan_minor(c, l, mu);
            }
        }
        self.sizes[c] -= 1;
    }
}
