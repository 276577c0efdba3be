//! Tabu search over flip and best-shift moves.
//!
//! Each instance keeps its own point, residuals, constraint weights, and
//! tabu expiries. A step scores every binary flip plus the best shift of
//! every non-binary integer (continuous columns join on a fixed period),
//! then applies the highest scoring admissible move. Stuck states bump the
//! weights of violated rows and perturb. Instances talk to each other only
//! through the solution pool: incumbents out, partials out on a cadence,
//! restarts in from pool material.

use crate::bestshift::{best_shifts_batch, ShiftOptions};
use crate::model::ProblemInstance;
use crate::pool::SolutionPool;
use crate::scoring::{
    apply_move, build_slot_map, default_feas_tol, flip_scores_batch, update_weights,
    BatchOptions, FlipSweep, SearchState, Weights,
};
use crate::util::{clamp, round_half_up};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Clone, Copy, Debug)]
pub struct TabuParams {
    /// Continuous columns are rescored every this many iterations.
    pub continuous_period: u64,
    /// Submit the current point as a partial every this many iterations.
    pub partial_period: u64,
    /// Poll the pool for restart material every this many iterations.
    pub poll_period: u64,
    /// Probability of restarting when the poll finds something new.
    pub restart_prob: f64,
    pub sweep: FlipSweep,
    pub parallel: bool,
}

impl Default for TabuParams {
    fn default() -> Self {
        TabuParams {
            continuous_period: 10,
            partial_period: 500,
            poll_period: 2000,
            restart_prob: 0.25,
            sweep: FlipSweep::RowWise,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Moved { j: usize, target: f64 },
    NewIncumbent(Vec<f64>),
    Stuck,
}

/// One independent tabu trajectory. Pool-free; see [`TabuWorker`] for the
/// pool-connected driver.
pub struct TabuInstance {
    pub state: SearchState,
    pub weights: Weights,
    params: TabuParams,
    expiry: Vec<u64>,
    iteration: u64,
    tenure: u64,
    rng: ChaCha8Rng,
    /// Best feasible objective this instance has reached (internal sense).
    best_feasible: Option<f64>,
    stagnation: u64,
    binary_cols: Vec<usize>,
    slot_map: Vec<i32>,
    int_cols: Vec<usize>,
    cont_cols: Vec<usize>,
    flip_buf: Vec<f64>,
    pub moves: u64,
    pub perturbations: u64,
}

/// Integer entries rounded, everything clamped into the box.
fn conform(inst: &ProblemInstance, x: &[f64]) -> Vec<f64> {
    (0..inst.n())
        .map(|j| {
            let v = if inst.integer[j] {
                round_half_up(x[j])
            } else {
                x[j]
            };
            clamp(v, inst.lower[j], inst.upper[j])
        })
        .collect()
}

impl TabuInstance {
    pub fn new(
        inst: &ProblemInstance,
        params: TabuParams,
        seed: u64,
        start: &[f64],
    ) -> TabuInstance {
        let n = inst.n();
        let is_binary = {
            let mut mask = vec![false; n];
            for &j in &inst.binaries {
                mask[j] = true;
            }
            mask
        };
        let binary_cols = inst.binaries.clone();
        let int_cols: Vec<usize> = (0..n)
            .filter(|&j| inst.integer[j] && !is_binary[j])
            .collect();
        let cont_cols: Vec<usize> = (0..n).filter(|&j| !inst.integer[j]).collect();
        let candidates = binary_cols.len() + int_cols.len() + cont_cols.len();
        let tenure = 10 + (0.05 * candidates as f64).ceil() as u64;
        let slot_map = build_slot_map(n, &binary_cols);
        let state = SearchState::new(inst, conform(inst, start), default_feas_tol());
        TabuInstance {
            state,
            weights: Weights::new(inst.m()),
            params,
            expiry: vec![0; n],
            iteration: 0,
            tenure,
            rng: ChaCha8Rng::seed_from_u64(seed),
            best_feasible: None,
            stagnation: 0,
            binary_cols,
            slot_map,
            int_cols,
            cont_cols,
            flip_buf: Vec::new(),
            moves: 0,
            perturbations: 0,
        }
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn best_feasible(&self) -> Option<f64> {
        self.best_feasible
    }

    pub fn tenure(&self) -> u64 {
        self.tenure
    }

    fn is_tabu(&self, j: usize) -> bool {
        self.iteration < self.expiry[j]
    }

    /// Rows and integrality would hold after moving j to target, and the
    /// objective strictly beats this instance's best feasible value.
    fn aspiration_ok(&self, inst: &ProblemInstance, j: usize, target: f64) -> bool {
        let x = self.state.x[j];
        let dx = target - x;
        let frac_here = inst.integer[j]
            && (x - round_half_up(x)).abs() > crate::INT_TOL;
        let frac_after = self.state.frac_int_count - usize::from(frac_here);
        if frac_after != 0 {
            return false;
        }
        let tol = self.state.feas_tol;
        let mut cured = 0usize;
        for (i, a) in inst.col(j) {
            let r_new = self.state.residuals[i] + a * dx;
            if r_new > tol {
                return false;
            }
            if self.state.residuals[i] > tol {
                cured += 1;
            }
        }
        if cured != self.state.violated {
            return false;
        }
        let new_obj = self.state.objective + inst.obj[j] * dx;
        self.best_feasible.map_or(true, |bf| new_obj < bf)
    }

    /// One tabu iteration: score all candidate moves, apply the best
    /// admissible one.
    pub fn step(&mut self, inst: &ProblemInstance) -> StepOutcome {
        self.iteration += 1;

        let mut best: Option<(f64, usize, f64)> = None;
        let mut held: Vec<(f64, usize, f64)> = Vec::new();
        let mut consider =
            |score: f64, j: usize, target: f64, tabu: bool, held: &mut Vec<(f64, usize, f64)>| {
                if tabu {
                    if score > 0.0 {
                        held.push((score, j, target));
                    }
                    return;
                }
                let better = match best {
                    None => score > 0.0,
                    Some((bs, bj, _)) => score > bs || (score == bs && j < bj),
                };
                if better {
                    best = Some((score, j, target));
                }
            };

        let opts = BatchOptions {
            sweep: self.params.sweep,
            parallel: self.params.parallel,
        };
        let mut flips = std::mem::take(&mut self.flip_buf);
        flip_scores_batch(
            inst,
            &self.state,
            &self.weights,
            &self.binary_cols,
            &self.slot_map,
            opts,
            &mut flips,
        );
        for (k, &j) in self.binary_cols.iter().enumerate() {
            let target = 1.0 - self.state.x[j];
            consider(flips[k], j, target, self.is_tabu(j), &mut held);
        }
        self.flip_buf = flips;

        let shift_opts = ShiftOptions {
            parallel: self.params.parallel,
            force_general_sort: false,
        };
        let mut shift_cols = self.int_cols.clone();
        if !self.cont_cols.is_empty() && self.iteration % self.params.continuous_period == 0 {
            shift_cols.extend_from_slice(&self.cont_cols);
        }
        if !shift_cols.is_empty() {
            let shifts = best_shifts_batch(inst, &self.state, &self.weights, &shift_cols, shift_opts);
            for (k, &j) in shift_cols.iter().enumerate() {
                let (target, score) = shifts[k];
                if target == self.state.x[j] {
                    continue;
                }
                consider(score, j, target, self.is_tabu(j), &mut held);
            }
        }

        // Aspiration: a tabu move may override when it lands feasible and
        // strictly improves on this instance's best.
        held.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let floor = best.map_or(0.0, |(s, _, _)| s);
        for &(score, j, target) in &held {
            if score <= floor {
                break;
            }
            if self.aspiration_ok(inst, j, target) {
                best = Some((score, j, target));
                break;
            }
        }

        let Some((_, j, target)) = best else {
            self.stagnation += 1;
            return StepOutcome::Stuck;
        };

        apply_move(inst, &mut self.state, j, target);
        self.expiry[j] = self.iteration + self.tenure;
        self.moves += 1;
        self.stagnation = 0;

        let rows_ok = self.state.violated == 0 && self.state.frac_int_count == 0;
        if rows_ok {
            let improved = self
                .best_feasible
                .map_or(true, |bf| self.state.objective < bf);
            if improved {
                self.best_feasible = Some(self.state.objective);
                if self.state.cutoff_ok() {
                    return StepOutcome::NewIncumbent(self.state.x.clone());
                }
            }
        }
        StepOutcome::Moved { j, target }
    }

    /// Weight bump plus random kick, the stuck response.
    pub fn escape(&mut self, inst: &ProblemInstance) {
        update_weights(&self.state, &mut self.weights, true);
        self.perturb(inst);
    }

    /// Sets a random variable of a random violated row (cutoff row
    /// included) to a random other domain value.
    pub fn perturb(&mut self, inst: &ProblemInstance) {
        let m = inst.m();
        let mut rows = self.state.violated_rows();
        let cutoff_id = m;
        if self.state.cutoff_violated() {
            rows.push(cutoff_id);
        }
        if rows.is_empty() {
            rows.extend(0..m);
        }
        let j = if rows.is_empty() {
            if inst.n() == 0 {
                return;
            }
            self.rng.gen_range(0..inst.n())
        } else {
            let row = rows[self.rng.gen_range(0..rows.len())];
            let vars: Vec<usize> = if row == cutoff_id {
                (0..inst.n()).filter(|&j| inst.obj[j] != 0.0).collect()
            } else {
                inst.row(row).map(|(j, _)| j).collect()
            };
            if vars.is_empty() {
                return;
            }
            vars[self.rng.gen_range(0..vars.len())]
        };
        if let Some(v) = self.random_domain_value(inst, j) {
            apply_move(inst, &mut self.state, j, v);
            self.moves += 1;
            self.perturbations += 1;
        }
    }

    fn random_domain_value(&mut self, inst: &ProblemInstance, j: usize) -> Option<f64> {
        let (l, u) = (inst.lower[j], inst.upper[j]);
        let cur = self.state.x[j];
        if inst.integer[j] {
            let lo = if l.is_finite() { l.ceil() } else { cur - 10.0 };
            let hi = if u.is_finite() { u.floor() } else { cur + 10.0 };
            let span = (hi - lo) as i64;
            if span <= 0 {
                return None;
            }
            for _ in 0..16 {
                let v = lo + self.rng.gen_range(0..=span) as f64;
                if v != cur {
                    return Some(v);
                }
            }
            Some(if cur > lo { lo } else { hi })
        } else {
            let lo = if l.is_finite() { l } else { cur - 10.0 };
            let hi = if u.is_finite() { u } else { cur + 10.0 };
            if hi - lo <= 0.0 {
                return None;
            }
            let v = self.rng.gen_range(lo..hi);
            Some(if v == cur { (lo + hi) / 2.0 } else { v })
        }
    }

    /// One random kick used to decorrelate instances sharing a start.
    pub fn kick(&mut self, inst: &ProblemInstance) {
        self.perturb(inst);
    }

    fn restart_from(&mut self, inst: &ProblemInstance, point: &[f64]) {
        self.state.set_point(inst, conform(inst, point));
        self.expiry.iter_mut().for_each(|e| *e = 0);
        self.stagnation = 0;
    }
}

/// Pool-connected driver around one [`TabuInstance`].
pub struct TabuWorker {
    inst: Arc<ProblemInstance>,
    pub tabu: TabuInstance,
    source: String,
    started: bool,
    last_lp_seen: usize,
    pub restarts: u64,
    pub submissions: u64,
}

impl TabuWorker {
    pub fn new(
        inst: Arc<ProblemInstance>,
        params: TabuParams,
        seed: u64,
        start: &[f64],
        index: usize,
    ) -> TabuWorker {
        let tabu = TabuInstance::new(&inst, params, seed, start);
        TabuWorker {
            inst,
            tabu,
            source: format!("tabu-{index}"),
            started: false,
            last_lp_seen: 0,
            restarts: 0,
            submissions: 0,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn sync_cutoff(&mut self, pool: &SolutionPool) {
        if let Some(z) = pool.best_objective() {
            self.tabu.state.set_cutoff_for(z);
        }
    }

    fn poll(&mut self, pool: &SolutionPool) {
        self.sync_cutoff(pool);
        let better = pool
            .best_incumbent()
            .filter(|(_, z)| self.tabu.best_feasible.map_or(true, |bf| *z < bf));
        let fresh = pool
            .latest_lp()
            .filter(|s| s.is_usable() && s.iterations > self.last_lp_seen);
        if let Some(s) = &fresh {
            self.last_lp_seen = s.iterations;
        }
        if better.is_none() && fresh.is_none() {
            return;
        }
        if !self.tabu.rng.gen_bool(self.tabu.params.restart_prob) {
            return;
        }
        let point = match better {
            Some((p, _)) => p,
            None => fresh.expect("one of the two is set").primal,
        };
        let inst = Arc::clone(&self.inst);
        self.tabu.restart_from(&inst, &point);
        self.restarts += 1;
    }

    /// Runs up to `iters` tabu iterations, honoring pool cadences.
    /// Returns false once the pool is closed.
    pub fn pulse(&mut self, pool: &SolutionPool, iters: usize) -> bool {
        let inst = Arc::clone(&self.inst);
        if !self.started {
            self.started = true;
            self.sync_cutoff(pool);
            if self.tabu.state.is_feasible() {
                if pool
                    .submit_feasible(self.tabu.state.x.clone(), &self.source)
                    .is_accepted()
                {
                    self.submissions += 1;
                }
                self.tabu.best_feasible = Some(self.tabu.state.objective);
            }
            self.tabu.kick(&inst);
        }
        for _ in 0..iters {
            if pool.is_closed() {
                return false;
            }
            match self.tabu.step(&inst) {
                StepOutcome::NewIncumbent(x) => {
                    if pool.submit_feasible(x, &self.source).is_accepted() {
                        self.submissions += 1;
                    }
                    self.sync_cutoff(pool);
                }
                StepOutcome::Stuck => self.tabu.escape(&inst),
                StepOutcome::Moved { .. } => {}
            }
            let it = self.tabu.iteration;
            if it % self.tabu.params.partial_period == 0 && !self.tabu.state.is_feasible() {
                pool.submit_partial(self.tabu.state.x.clone(), &self.source);
            }
            if it % self.tabu.params.poll_period == 0 {
                self.poll(pool);
            }
        }
        true
    }
}

/// Convenience loop for tests and single-instance use: pulses until
/// `should_stop` fires or the pool closes.
pub fn run_instance(
    inst: &Arc<ProblemInstance>,
    params: TabuParams,
    seed: u64,
    start: &[f64],
    pool: &SolutionPool,
    mut should_stop: impl FnMut() -> bool,
) {
    let mut worker = TabuWorker::new(Arc::clone(inst), params, seed, start, 0);
    while !should_stop() {
        if !worker.pulse(pool, 64) {
            return;
        }
    }
}
