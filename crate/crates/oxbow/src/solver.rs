//! Portfolio orchestration.
//!
//! One LP worker streams relaxation snapshots, one fix-propagate worker
//! dives on every new snapshot and on dequeued partials, one pump worker
//! alternates projection and rounding, and N tabu instances search
//! independently. Everything meets in the shared pool. Two schedulers are
//! provided: one OS thread per worker with a wall-clock deadline, and a
//! deterministic single-thread round-robin driven by a virtual clock for
//! reproducible runs.

use crate::feaspump::{pump, repair_partial, DEFAULT_MAX_ITERS, DEFAULT_REPAIR_ITERS};
use crate::fpr::{fixing_order, fpr_dive, DiveOutcome, DEFAULT_CONFLICT_BUDGET};
use crate::lp::{LpSnapshot, PdhgSolver, DEFAULT_CHECKPOINTS};
use crate::metrics::TraceEntry;
use crate::model::ProblemInstance;
use crate::pool::SolutionPool;
use crate::scoring::FlipSweep;
use crate::tabu::{TabuParams, TabuWorker};
use crate::util::{clamp, Clock, VirtualClock, WallClock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::{Duration, Instant};

const LP_SLICE: usize = 512;
const TABU_SLICE: usize = 24;
const TICK_SECONDS: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct SolveConfig {
    /// Wall-clock budget in seconds (virtual seconds in deterministic mode).
    pub time_limit: f64,
    /// 0 means all available hardware threads.
    pub threads: usize,
    /// 0 derives the count from `threads` minus the three reserved workers.
    pub tabu_instances: usize,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub deterministic: bool,
    pub column_wise_flips: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            time_limit: 10.0,
            threads: 0,
            tabu_instances: 0,
            seed: 0,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            deterministic: false,
            column_wise_flips: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WorkerStat {
    pub name: String,
    pub steps: u64,
    pub submissions: u64,
    /// Incumbents in the final trace attributed to this worker.
    pub wins: u64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Best feasible point and its objective in the user's original sense.
    pub best: Option<(Vec<f64>, f64)>,
    /// Least violation over stored partials when nothing feasible exists.
    pub best_violation: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub workers: Vec<WorkerStat>,
    pub elapsed: f64,
}

impl SolveReport {
    pub fn is_feasible(&self) -> bool {
        self.best.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkerStatus {
    Progress,
    Idle,
    Done,
}

/// One portfolio member. `step` does a bounded slice of work so that the
/// deterministic scheduler can interleave members fairly.
pub trait Worker: Send {
    fn name(&self) -> &str;
    fn step(&mut self, pool: &SolutionPool) -> WorkerStatus;
    fn submissions(&self) -> u64;
}

struct LpWorker {
    solver: PdhgSolver,
    checkpoints: Vec<usize>,
    done: bool,
    submissions: u64,
}

impl LpWorker {
    fn new(inst: Arc<ProblemInstance>, clock: Arc<dyn Clock>, checkpoints: Vec<usize>) -> LpWorker {
        LpWorker {
            solver: PdhgSolver::new(inst, clock),
            checkpoints,
            done: false,
            submissions: 0,
        }
    }
}

impl Worker for LpWorker {
    fn name(&self) -> &str {
        "lp"
    }

    fn step(&mut self, pool: &SolutionPool) -> WorkerStatus {
        if self.done {
            return WorkerStatus::Done;
        }
        let mut budget = LP_SLICE;
        let sched = self.checkpoints.clone();
        let mut submitted = 0u64;
        let snap = self.solver.run(
            &sched,
            || {
                if pool.is_closed() {
                    return true;
                }
                if budget == 0 {
                    return true;
                }
                budget -= 1;
                false
            },
            |s: LpSnapshot| {
                if sched.binary_search(&s.checkpoint).is_ok() && pool.submit_lp(s).is_accepted() {
                    submitted += 1;
                }
            },
        );
        self.submissions += submitted;
        let final_cp = *self.checkpoints.last().expect("nonempty schedule");
        if self.solver.is_converged()
            || self.solver.iterations() >= final_cp
            || !snap.is_usable()
            || pool.is_closed()
        {
            self.done = true;
        }
        WorkerStatus::Progress
    }

    fn submissions(&self) -> u64 {
        self.submissions
    }
}

struct FprWorker {
    inst: Arc<ProblemInstance>,
    last_lp: usize,
    submissions: u64,
    dives: u64,
}

impl FprWorker {
    fn new(inst: Arc<ProblemInstance>) -> FprWorker {
        FprWorker {
            inst,
            last_lp: 0,
            submissions: 0,
            dives: 0,
        }
    }

    fn dive(&mut self, pool: &SolutionPool, guide: &[f64], rc: Option<&[f64]>) {
        let order = fixing_order(&self.inst, guide, rc);
        let res = fpr_dive(&self.inst, &order, guide, pool, DEFAULT_CONFLICT_BUDGET);
        self.dives += 1;
        match res.outcome {
            DiveOutcome::Feasible(_) => self.submissions += 1,
            DiveOutcome::Partial { point, .. } => {
                pool.submit_partial(point, "fpr");
            }
            DiveOutcome::Abort => {}
        }
    }
}

impl Worker for FprWorker {
    fn name(&self) -> &str {
        "fpr"
    }

    fn step(&mut self, pool: &SolutionPool) -> WorkerStatus {
        if pool.is_closed() {
            return WorkerStatus::Done;
        }
        let fresh = pool
            .latest_lp()
            .filter(|s| s.is_usable() && s.iterations > self.last_lp);
        if let Some(snap) = fresh {
            self.last_lp = snap.iterations;
            let guide: Vec<f64> = snap
                .primal
                .iter()
                .enumerate()
                .map(|(j, &v)| clamp(v, self.inst.lower[j], self.inst.upper[j]))
                .collect();
            self.dive(pool, &guide, Some(&snap.reduced_costs));
            return WorkerStatus::Progress;
        }
        if let Some(partial) = pool.take_partial() {
            let rc = pool.latest_lp().map(|s| s.reduced_costs);
            let guide = partial.point;
            self.dive(pool, &guide, rc.as_deref());
            return WorkerStatus::Progress;
        }
        WorkerStatus::Idle
    }

    fn submissions(&self) -> u64 {
        self.submissions
    }
}

struct PumpWorker {
    inst: Arc<ProblemInstance>,
    rng: ChaCha8Rng,
    last_lp: usize,
    submissions: u64,
}

impl PumpWorker {
    fn new(inst: Arc<ProblemInstance>, seed: u64) -> PumpWorker {
        PumpWorker {
            inst,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x70_75_6d_70),
            last_lp: 0,
            submissions: 0,
        }
    }
}

impl Worker for PumpWorker {
    fn name(&self) -> &str {
        "pump"
    }

    fn step(&mut self, pool: &SolutionPool) -> WorkerStatus {
        if pool.is_closed() {
            return WorkerStatus::Done;
        }
        let fresh = pool
            .latest_lp()
            .filter(|s| s.is_usable() && s.iterations > self.last_lp);
        if let Some(snap) = fresh {
            self.last_lp = snap.iterations;
            let (out, _) = pump(
                &self.inst,
                &snap,
                pool,
                DEFAULT_MAX_ITERS,
                &mut self.rng,
                || pool.is_closed(),
            );
            if matches!(out, crate::feaspump::PumpOutcome::Feasible(_)) {
                self.submissions += 1;
            }
            return WorkerStatus::Progress;
        }
        if let Some(partial) = pool.take_partial() {
            let (out, _) = repair_partial(
                &self.inst,
                &partial.point,
                pool,
                DEFAULT_REPAIR_ITERS,
                &mut self.rng,
                || pool.is_closed(),
            );
            if matches!(out, crate::feaspump::PumpOutcome::Feasible(_)) {
                self.submissions += 1;
            }
            return WorkerStatus::Progress;
        }
        WorkerStatus::Idle
    }

    fn submissions(&self) -> u64 {
        self.submissions
    }
}

struct TabuDriver {
    worker: TabuWorker,
    name: String,
}

impl Worker for TabuDriver {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, pool: &SolutionPool) -> WorkerStatus {
        if self.worker.pulse(pool, TABU_SLICE) {
            WorkerStatus::Progress
        } else {
            WorkerStatus::Done
        }
    }

    fn submissions(&self) -> u64 {
        self.worker.submissions
    }
}

/// Domain value closest to zero, the start point before LP snapshots
/// exist.
fn zero_start(inst: &ProblemInstance) -> Vec<f64> {
    (0..inst.n())
        .map(|j| clamp(0.0, inst.lower[j], inst.upper[j]))
        .collect()
}

pub fn solve(inst: Arc<ProblemInstance>, cfg: &SolveConfig) -> SolveReport {
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map_or(4, |v| v.get())
    } else {
        cfg.threads
    };
    let n_tabu = if cfg.tabu_instances == 0 {
        threads.saturating_sub(3).max(1)
    } else {
        cfg.tabu_instances
    };

    let vclock = cfg
        .deterministic
        .then(|| Arc::new(VirtualClock::new(TICK_SECONDS)));
    let clock: Arc<dyn Clock> = match &vclock {
        Some(v) => Arc::clone(v) as Arc<dyn Clock>,
        None => Arc::new(WallClock::new()),
    };
    let pool = Arc::new(SolutionPool::new(Arc::clone(&inst), Arc::clone(&clock)));

    if cfg.time_limit <= 0.0 {
        pool.close();
        return build_report(&inst, &pool, Vec::new(), clock.elapsed());
    }

    let mut checkpoints = cfg.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if checkpoints.is_empty() {
        checkpoints = DEFAULT_CHECKPOINTS.to_vec();
    }

    // Worker-level parallelism owns the cores; the batch kernels run their
    // sequential paths inside the portfolio.
    let params = TabuParams {
        sweep: if cfg.column_wise_flips {
            FlipSweep::ColumnWise
        } else {
            FlipSweep::RowWise
        },
        parallel: false,
        ..TabuParams::default()
    };
    let start = zero_start(&inst);

    let mut workers: Vec<Box<dyn Worker>> = Vec::new();
    workers.push(Box::new(LpWorker::new(
        Arc::clone(&inst),
        Arc::clone(&clock),
        checkpoints,
    )));
    workers.push(Box::new(FprWorker::new(Arc::clone(&inst))));
    workers.push(Box::new(PumpWorker::new(Arc::clone(&inst), cfg.seed)));
    for k in 0..n_tabu {
        let worker = TabuWorker::new(
            Arc::clone(&inst),
            params,
            cfg.seed.wrapping_add(k as u64),
            &start,
            k,
        );
        workers.push(Box::new(TabuDriver {
            worker,
            name: format!("tabu-{k}"),
        }));
    }

    let stats = if let Some(v) = &vclock {
        run_round_robin(workers, &pool, v, cfg.time_limit)
    } else {
        run_threaded(workers, &pool, &clock, cfg.time_limit)
    };
    build_report(&inst, &pool, stats, clock.elapsed())
}

fn run_threaded(
    workers: Vec<Box<dyn Worker>>,
    pool: &Arc<SolutionPool>,
    clock: &Arc<dyn Clock>,
    limit: f64,
) -> Vec<WorkerStat> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .into_iter()
            .map(|mut w| {
                let pool = Arc::clone(pool);
                let clock = Arc::clone(clock);
                scope.spawn(move || {
                    let mut steps = 0u64;
                    loop {
                        if pool.is_closed() || clock.elapsed() >= limit {
                            break;
                        }
                        match w.step(&pool) {
                            WorkerStatus::Done => break,
                            WorkerStatus::Idle => std::thread::sleep(Duration::from_millis(2)),
                            WorkerStatus::Progress => {}
                        }
                        steps += 1;
                    }
                    (w.name().to_string(), steps, w.submissions())
                })
            })
            .collect();
        while clock.elapsed() < limit && !handles.iter().all(|h| h.is_finished()) {
            std::thread::sleep(Duration::from_millis(2));
        }
        pool.close();
        handles
            .into_iter()
            .map(|h| {
                let (name, steps, submissions) = h.join().expect("worker thread panicked");
                WorkerStat {
                    name,
                    steps,
                    submissions,
                    wins: 0,
                }
            })
            .collect()
    })
}

fn run_round_robin(
    mut workers: Vec<Box<dyn Worker>>,
    pool: &Arc<SolutionPool>,
    vclock: &VirtualClock,
    limit: f64,
) -> Vec<WorkerStat> {
    let wall = Instant::now();
    let wall_budget = 60.0 + limit;
    let mut done = vec![false; workers.len()];
    let mut steps = vec![0u64; workers.len()];
    'outer: loop {
        let mut live = false;
        for (k, w) in workers.iter_mut().enumerate() {
            if done[k] {
                continue;
            }
            live = true;
            if vclock.elapsed() >= limit || wall.elapsed().as_secs_f64() > wall_budget {
                break 'outer;
            }
            if w.step(pool) == WorkerStatus::Done {
                done[k] = true;
            }
            steps[k] += 1;
            vclock.advance(1);
        }
        if !live {
            break;
        }
    }
    pool.close();
    workers
        .iter()
        .zip(steps)
        .map(|(w, steps)| WorkerStat {
            name: w.name().to_string(),
            steps,
            submissions: w.submissions(),
            wins: 0,
        })
        .collect()
}

fn build_report(
    inst: &ProblemInstance,
    pool: &SolutionPool,
    mut workers: Vec<WorkerStat>,
    elapsed: f64,
) -> SolveReport {
    let trace = pool.trace();
    for ws in &mut workers {
        ws.wins = trace.iter().filter(|e| e.source == ws.name).count() as u64;
    }
    let best = pool
        .best_incumbent()
        .map(|(point, z)| (point, inst.to_user_objective(z)));
    let best_violation = pool.peek_partials().first().map(|p| p.violation);
    SolveReport {
        best,
        best_violation,
        trace,
        workers,
        elapsed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture_names, load_fixture};

    fn det_config(limit: f64) -> SolveConfig {
        SolveConfig {
            time_limit: limit,
            threads: 4,
            tabu_instances: 2,
            seed: 7,
            deterministic: true,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn zero_time_limit_returns_immediately_without_solutions() {
        let inst = Arc::new(load_fixture("knapsack").unwrap());
        let report = solve(Arc::clone(&inst), &det_config(0.0));
        assert!(report.best.is_none());
        assert!(report.trace.is_empty());
    }

    #[test]
    fn knapsack_fixture_solves_in_deterministic_mode() {
        let inst = Arc::new(load_fixture("knapsack").unwrap());
        let report = solve(Arc::clone(&inst), &det_config(2.0));
        let (point, obj) = report.best.expect("feasible knapsack");
        assert!(inst.validate_default(&point).is_feasible());
        assert_eq!(obj, inst.user_objective(&point));
        assert!(!report.trace.is_empty());
    }

    #[test]
    fn deterministic_runs_replay_identical_traces() {
        let inst = Arc::new(load_fixture("setcover").unwrap());
        let a = solve(Arc::clone(&inst), &det_config(1.0));
        let b = solve(Arc::clone(&inst), &det_config(1.0));
        assert_eq!(a.trace.len(), b.trace.len());
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x.elapsed, y.elapsed);
            assert_eq!(x.objective, y.objective);
            assert_eq!(x.source, y.source);
        }
        assert_eq!(a.best.map(|(_, z)| z), b.best.map(|(_, z)| z));
    }

    #[test]
    fn infeasible_fixture_reports_no_incumbent() {
        let inst = Arc::new(load_fixture("infeas").unwrap());
        let report = solve(Arc::clone(&inst), &det_config(0.5));
        assert!(report.best.is_none());
    }

    #[test]
    fn threaded_mode_solves_a_fixture() {
        let inst = Arc::new(load_fixture("setpart").unwrap());
        let cfg = SolveConfig {
            time_limit: 3.0,
            threads: 4,
            tabu_instances: 1,
            seed: 3,
            ..SolveConfig::default()
        };
        let report = solve(Arc::clone(&inst), &cfg);
        let (point, _) = report.best.expect("feasible set partition");
        assert!(inst.validate_default(&point).is_feasible());
    }

    #[test]
    fn every_feasible_fixture_is_solved_quickly() {
        for name in fixture_names() {
            if name == "infeas" {
                continue;
            }
            let inst = Arc::new(load_fixture(name).unwrap());
            let report = solve(Arc::clone(&inst), &det_config(5.0));
            assert!(
                report.best.is_some(),
                "no incumbent on fixture {name} within the budget"
            );
        }
    }
}
