//! The shared solution pool: three bounded sections (feasible incumbents,
//! partial candidates, LP snapshots) plus the global objective cutoff.
//!
//! Every worker holds an `Arc<SolutionPool>`. Writers serialize per
//! section; readers clone entries out under a read lock and never block
//! each other. The cutoff is a lock-free f64 that only ever decreases.

use crate::lp::LpSnapshot;
use crate::metrics::TraceEntry;
use crate::model::ProblemInstance;
use crate::scoring::cutoff_rhs;
use crate::util::{point_key, Clock};
use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

pub const FEASIBLE_CAPACITY: usize = 20;
pub const PARTIAL_CAPACITY: usize = 50;
pub const LP_CAPACITY: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleEntry {
    pub point: Vec<f64>,
    /// Internal (minimization) objective.
    pub objective: f64,
    pub source: String,
    pub elapsed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartialEntry {
    pub point: Vec<f64>,
    /// Total row violation sum(max(0, r_i)).
    pub violation: f64,
    pub source: String,
    pub elapsed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    /// A point with the same dedup key was submitted before (even if it
    /// has since been evicted).
    Duplicate,
    /// Claimed feasible but failed validation.
    InfeasibleClaim,
    /// Section at capacity and the entry is no better than its floor.
    WorseThanFloor,
    /// The run deadline passed; the pool accepts no more writes.
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted,
    Rejected(RejectReason),
}

impl SubmitOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, SubmitOutcome::Accepted)
    }
}

struct Section<T> {
    entries: Vec<T>,
    seen: HashSet<u64>,
}

impl<T> Section<T> {
    fn new() -> Section<T> {
        Section {
            entries: Vec::new(),
            seen: HashSet::new(),
        }
    }
}

pub struct SolutionPool {
    inst: Arc<ProblemInstance>,
    clock: Arc<dyn Clock>,
    feasible: RwLock<Section<FeasibleEntry>>,
    partial: RwLock<Section<PartialEntry>>,
    lp: RwLock<VecDeque<LpSnapshot>>,
    /// Bits of the cutoff rhs; NaN bits mean "no incumbent yet".
    cutoff_bits: AtomicU64,
    closed: AtomicBool,
    trace: Mutex<Vec<TraceEntry>>,
}

impl SolutionPool {
    pub fn new(inst: Arc<ProblemInstance>, clock: Arc<dyn Clock>) -> SolutionPool {
        SolutionPool {
            inst,
            clock,
            feasible: RwLock::new(Section::new()),
            partial: RwLock::new(Section::new()),
            lp: RwLock::new(VecDeque::new()),
            cutoff_bits: AtomicU64::new(f64::NAN.to_bits()),
            closed: AtomicBool::new(false),
            trace: Mutex::new(Vec::new()),
        }
    }

    pub fn instance(&self) -> &Arc<ProblemInstance> {
        &self.inst
    }

    pub fn elapsed(&self) -> f64 {
        self.clock.elapsed()
    }

    /// Stops all further writes (reads keep working).
    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Submits a claimed-feasible point. Validation, dedup and the
    /// capacity floor are checked in that order; an accepted entry that
    /// improves the best objective lowers the global cutoff and appends a
    /// trace record.
    pub fn submit_feasible(&self, point: Vec<f64>, source: &str) -> SubmitOutcome {
        if self.is_closed() {
            return SubmitOutcome::Rejected(RejectReason::Closed);
        }
        if !self.inst.validate_default(&point).is_feasible() {
            return SubmitOutcome::Rejected(RejectReason::InfeasibleClaim);
        }
        let objective = self.inst.objective(&point);
        let key = point_key(&point);
        let elapsed = self.clock.elapsed();

        let mut sec = self.feasible.write().unwrap();
        if !sec.seen.insert(key) {
            return SubmitOutcome::Rejected(RejectReason::Duplicate);
        }
        if sec.entries.len() >= FEASIBLE_CAPACITY
            && objective >= sec.entries.last().unwrap().objective
        {
            return SubmitOutcome::Rejected(RejectReason::WorseThanFloor);
        }
        let improved = sec.entries.first().map_or(true, |b| objective < b.objective);
        let pos = sec
            .entries
            .partition_point(|e| e.objective <= objective);
        sec.entries.insert(
            pos,
            FeasibleEntry {
                point,
                objective,
                source: source.to_string(),
                elapsed,
            },
        );
        sec.entries.truncate(FEASIBLE_CAPACITY);
        if improved {
            self.lower_cutoff(cutoff_rhs(objective));
            self.trace.lock().unwrap().push(TraceEntry {
                elapsed,
                objective: self.inst.to_user_objective(objective),
                source: source.to_string(),
            });
        }
        SubmitOutcome::Accepted
    }

    /// Submits an integrality-complete but violating point. The violation
    /// measure is recomputed here so section order never depends on
    /// caller-side arithmetic.
    pub fn submit_partial(&self, point: Vec<f64>, source: &str) -> SubmitOutcome {
        if self.is_closed() {
            return SubmitOutcome::Rejected(RejectReason::Closed);
        }
        let violation = self.inst.violation_measure(&point);
        let key = point_key(&point);
        let elapsed = self.clock.elapsed();

        let mut sec = self.partial.write().unwrap();
        if !sec.seen.insert(key) {
            return SubmitOutcome::Rejected(RejectReason::Duplicate);
        }
        if sec.entries.len() >= PARTIAL_CAPACITY
            && violation >= sec.entries.last().unwrap().violation
        {
            return SubmitOutcome::Rejected(RejectReason::WorseThanFloor);
        }
        let pos = sec
            .entries
            .partition_point(|e| e.violation <= violation);
        sec.entries.insert(
            pos,
            PartialEntry {
                point,
                violation,
                source: source.to_string(),
                elapsed,
            },
        );
        sec.entries.truncate(PARTIAL_CAPACITY);
        SubmitOutcome::Accepted
    }

    /// Stores an LP snapshot, keeping only the most recent few.
    pub fn submit_lp(&self, snap: LpSnapshot) -> SubmitOutcome {
        if self.is_closed() {
            return SubmitOutcome::Rejected(RejectReason::Closed);
        }
        let mut sec = self.lp.write().unwrap();
        sec.push_back(snap);
        while sec.len() > LP_CAPACITY {
            sec.pop_front();
        }
        SubmitOutcome::Accepted
    }

    pub fn best_incumbent(&self) -> Option<(Vec<f64>, f64)> {
        let sec = self.feasible.read().unwrap();
        sec.entries
            .first()
            .map(|e| (e.point.clone(), e.objective))
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.feasible
            .read()
            .unwrap()
            .entries
            .first()
            .map(|e| e.objective)
    }

    /// Current cutoff right-hand side (c.x <= z* - delta), if any
    /// incumbent exists yet.
    pub fn cutoff(&self) -> Option<f64> {
        let bits = self.cutoff_bits.load(Ordering::Acquire);
        let v = f64::from_bits(bits);
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    fn lower_cutoff(&self, new: f64) {
        let mut cur = self.cutoff_bits.load(Ordering::Acquire);
        loop {
            let cur_val = f64::from_bits(cur);
            if !cur_val.is_nan() && new >= cur_val {
                return;
            }
            match self.cutoff_bits.compare_exchange_weak(
                cur,
                new.to_bits(),
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return,
                Err(actual) => cur = actual,
            }
        }
    }

    pub fn latest_lp(&self) -> Option<LpSnapshot> {
        self.lp.read().unwrap().back().cloned()
    }

    pub fn lp_snapshots(&self) -> Vec<LpSnapshot> {
        self.lp.read().unwrap().iter().cloned().collect()
    }

    /// Removes and returns the least-violated partial entry.
    pub fn take_partial(&self) -> Option<PartialEntry> {
        let mut sec = self.partial.write().unwrap();
        if sec.entries.is_empty() {
            None
        } else {
            Some(sec.entries.remove(0))
        }
    }

    pub fn peek_partials(&self) -> Vec<PartialEntry> {
        self.partial.read().unwrap().entries.clone()
    }

    pub fn feasible_entries(&self) -> Vec<FeasibleEntry> {
        self.feasible.read().unwrap().entries.clone()
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.trace.lock().unwrap().clone()
    }

    pub fn feasible_len(&self) -> usize {
        self.feasible.read().unwrap().entries.len()
    }

    pub fn partial_len(&self) -> usize {
        self.partial.read().unwrap().entries.len()
    }
}
