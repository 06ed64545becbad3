use kmodes::algorithms::{
    h97_run, initialization, otqt_run_with, ot_run_with, refine, Algorithm, Monitor, NoMonitor, RunOptions, Stage,
};
use kmodes::simgen::{simulate, SimConfig};
use kmodes::state::{ClusterState, Transfer};
use kmodes::{Code, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Default)]
struct Audit {
    last_objective: Option<u64>,
    transfers: u64,
    violations: Vec<String>,
}

impl Monitor for Audit {
    fn transfer(&mut self, stage: Stage, t: &Transfer, st: &ClusterState) {
        self.transfers += 1;
        if t.objective_change >= 0 {
            self.violations.push(format!("{stage:?} transfer changed objective by {}", t.objective_change));
        }
        if t.emptied_source {
            self.violations.push(format!("{stage:?} transfer emptied cluster {}", t.from));
        }
        if let Some(prev) = self.last_objective {
            if st.objective() >= prev {
                self.violations.push("objective did not decrease".into());
            }
        }
        self.last_objective = Some(st.objective());
    }

    fn pass_complete(&mut self, stage: Stage, st: &ClusterState) {
        if stage == Stage::GettingStarted {
            self.last_objective = Some(st.objective());
            return;
        }
        if let Err(e) = st.audit() {
            self.violations.push(format!("{stage:?}: {e}"));
        }
        if !st.empty_clusters().is_empty() {
            self.violations.push(format!("{stage:?}: empty clusters {:?}", st.empty_clusters()));
        }
        let modes = st.modes();
        for a in 0..modes.len() {
            for b in 0..a {
                if modes[a] == modes[b] {
                    self.violations.push(format!("{stage:?}: modes {b} and {a} coincide"));
                }
            }
        }
    }
}

fn random_data(rng: &mut ChaCha8Rng) -> Dataset {
    let n = rng.gen_range(20..=120);
    let p = rng.gen_range(2..=8);
    let j = rng.gen_range(2..=5);
    let rows: Vec<Vec<Code>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(0..j)).collect()).collect();
    Dataset::from_codes(&rows, Some(&vec![j as usize; p])).unwrap()
}

#[test]
fn transfer_optimizers_keep_their_guarantees() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..150 {
        let data = if case % 3 == 0 {
            simulate(&SimConfig { n: 150, p: 6, k: 4, t: 1.0 + (case % 4) as f64 * 0.3, seed: case, ..Default::default() })
                .unwrap()
                .dataset
        } else {
            random_data(&mut rng)
        };
        let distinct = data.distinct_rows();
        let k = rng.gen_range(2..=6).min(distinct.len());
        let (init, order) = initialization(&data, &distinct, k, rng.gen()).unwrap();
        for alg in [Algorithm::Ot, Algorithm::Otqt] {
            let mut audit = Audit::default();
            let fit = match alg {
                Algorithm::Ot => ot_run_with(&data, &init, &order, &mut audit),
                _ => otqt_run_with(&data, &init, &order, &mut audit),
            }
            .unwrap();
            assert!(audit.violations.is_empty(), "case {case} {alg}: {:?}", audit.violations);
            let bound = ((data.n() - k) * data.p()) as u64;
            assert!(fit.objective <= bound);
            assert!(audit.transfers <= bound);
        }
    }
}

#[test]
fn ot_never_loses_to_h97_from_its_terminal_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let data = random_data(&mut rng);
        let distinct = data.distinct_rows();
        let k = rng.gen_range(2..=5).min(distinct.len());
        let (init, order) = initialization(&data, &distinct, k, rng.gen()).unwrap();
        let h = h97_run(&data, &init, &order).unwrap();
        let mut st = ClusterState::build(&data, &h.assignment, k).unwrap();
        let fit = refine(&mut st, Algorithm::Otqt, &order, &RunOptions::default(), &mut NoMonitor);
        assert!(fit.objective <= h.objective);
    }
}
