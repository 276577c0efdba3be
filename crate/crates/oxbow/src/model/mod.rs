//! Problem representation: raw parsed form, normalized instance, validation.
//!
//! Everything downstream of [`normalize`] sees one canonical shape:
//! `min c.x  s.t.  A.x <= b,  l <= x <= u`, with an integrality flag per
//! variable. Greater-equal rows are negated, equalities and ranged rows are
//! split into <= pairs, and maximization is folded into the objective sign
//! (the original sense is kept so reported objectives are in user terms).

mod mps;

pub use mps::{parse_mps, parse_mps_file};

use crate::{INT_TOL, FEAS_TOL};

#[derive(thiserror::Error, Debug)]
pub enum ModelError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model infeasible at load: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row sense as written in the input file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct RawRow {
    pub name: String,
    pub sense: RowSense,
    pub rhs: f64,
    pub range: Option<f64>,
}

/// Parsed but not yet normalized problem.
#[derive(Clone, Debug, Default)]
pub struct RawInstance {
    pub name: String,
    pub maximize: bool,
    pub objective_name: String,
    /// Constant term of the objective (already in "add to c.x" form).
    pub objective_offset: f64,
    pub objective: Vec<f64>,
    pub rows: Vec<RawRow>,
    /// Constraint coefficients as (row, col, value) triplets.
    pub entries: Vec<(u32, u32, f64)>,
    pub var_names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
}

/// Normalized instance: `min c.x` over `A.x <= b`, `l <= x <= u`.
///
/// The constraint matrix is stored twice, row-ordered and column-ordered,
/// so both sweep directions are contiguous. The two layouts always hold the
/// same coefficient triplets.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub name: String,
    pub obj: Vec<f64>,
    pub obj_offset: f64,
    /// +1.0 when the input minimized, -1.0 when it maximized;
    /// user objective = sense_factor * (c.x + offset).
    pub sense_factor: f64,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    /// Integer variables with bounds exactly [0, 1].
    pub binaries: Vec<usize>,
    pub var_names: Vec<String>,
    pub row_names: Vec<String>,
    row_ptr: Vec<usize>,
    row_cols: Vec<u32>,
    row_vals: Vec<f64>,
    col_ptr: Vec<usize>,
    col_rows: Vec<u32>,
    col_vals: Vec<f64>,
}

/// Result of checking a point against an instance.
#[derive(Clone, Debug, Default)]
pub struct Validation {
    /// (row, violation amount) for rows with r_i > tol * max(1, |b_i|).
    pub row_violations: Vec<(usize, f64)>,
    /// Variables outside [l - tol, u + tol].
    pub bound_violations: Vec<usize>,
    /// Integer variables farther than the integrality tolerance from a whole
    /// number.
    pub integrality_violations: Vec<usize>,
}

impl Validation {
    pub fn is_feasible(&self) -> bool {
        self.row_violations.is_empty()
            && self.bound_violations.is_empty()
            && self.integrality_violations.is_empty()
    }
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn m(&self) -> usize {
        self.rhs.len()
    }

    pub fn nnz(&self) -> usize {
        self.row_vals.len()
    }

    /// Nonzeros of row i as (column, coefficient).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.row_cols[lo..hi]
            .iter()
            .zip(&self.row_vals[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// Nonzeros of column j as (row, coefficient).
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        self.col_rows[lo..hi]
            .iter()
            .zip(&self.col_vals[lo..hi])
            .map(|(&r, &v)| (r as usize, v))
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// Row activity a_i . x computed from the row-ordered layout.
    pub fn row_activity(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, a)| a * x[j]).sum()
    }

    /// Residuals r = A.x - b for every row.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m())
            .map(|i| self.row_activity(i, x) - self.rhs[i])
            .collect()
    }

    /// Internal (minimization) objective value c.x + offset.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let dot: f64 = self.obj.iter().zip(x).map(|(c, v)| c * v).sum();
        dot + self.obj_offset
    }

    /// Objective in the sense the input file used.
    pub fn user_objective(&self, x: &[f64]) -> f64 {
        self.sense_factor * self.objective(x)
    }

    pub fn to_user_objective(&self, internal: f64) -> f64 {
        self.sense_factor * internal
    }

    /// Violation threshold for row i: tol * max(1, |b_i|).
    pub fn violation_threshold(&self, i: usize, feas_tol: f64) -> f64 {
        feas_tol * self.rhs[i].abs().max(1.0)
    }

    /// Sum of positive residuals; the pool's ordering measure for partials.
    pub fn violation_measure(&self, x: &[f64]) -> f64 {
        (0..self.m())
            .map(|i| (self.row_activity(i, x) - self.rhs[i]).max(0.0))
            .sum()
    }

    /// Checks rows, bounds, and integrality at the given tolerances.
    pub fn validate(&self, x: &[f64], feas_tol: f64, int_tol: f64) -> Validation {
        let mut out = Validation::default();
        for i in 0..self.m() {
            let r = self.row_activity(i, x) - self.rhs[i];
            if r > self.violation_threshold(i, feas_tol) {
                out.row_violations.push((i, r));
            }
        }
        for j in 0..self.n() {
            if x[j] < self.lower[j] - feas_tol || x[j] > self.upper[j] + feas_tol {
                out.bound_violations.push(j);
            }
        }
        for j in 0..self.n() {
            if self.integer[j] && (x[j] - x[j].round()).abs() > int_tol {
                out.integrality_violations.push(j);
            }
        }
        out
    }

    pub fn validate_default(&self, x: &[f64]) -> Validation {
        self.validate(x, FEAS_TOL, INT_TOL)
    }

    /// Solution file body: an `=obj=` comment then one `name value` line per
    /// nonzero variable, in the user's objective sense.
    pub fn format_sol(&self, x: &[f64]) -> String {
        let mut s = String::new();
        s.push_str(&format!("=obj= {}\n", self.user_objective(x)));
        for j in 0..self.n() {
            if x[j] != 0.0 {
                s.push_str(&format!("{} {}\n", self.var_names[j], x[j]));
            }
        }
        s
    }

    /// All coefficient triplets from the row-ordered layout.
    pub fn triplets_by_row(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.m() {
            for (j, v) in self.row(i) {
                out.push((i as u32, j as u32, v));
            }
        }
        out
    }

    /// All coefficient triplets from the column-ordered layout.
    pub fn triplets_by_col(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..self.n() {
            for (i, v) in self.col(j) {
                out.push((i as u32, j as u32, v));
            }
        }
        out
    }

    /// Builds a minimization instance directly from <= rows.
    ///
    /// Rows are (sparse coefficients, rhs). Integer bounds are tightened
    /// inward to whole numbers; a crossed bound pair is an infeasibility.
    /// Used by generators, tests, and derived LPs (e.g. projection problems).
    pub fn from_parts(
        name: &str,
        obj: Vec<f64>,
        rows: Vec<(Vec<(usize, f64)>, f64)>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        integer: Vec<bool>,
    ) -> Result<ProblemInstance, ModelError> {
        let n = obj.len();
        if lower.len() != n || upper.len() != n || integer.len() != n {
            return Err(ModelError::Invalid(
                "objective/bounds/integrality lengths differ".into(),
            ));
        }
        let mut entries = Vec::new();
        let mut rhs = Vec::with_capacity(rows.len());
        let mut row_names = Vec::with_capacity(rows.len());
        for (i, (coeffs, b)) in rows.into_iter().enumerate() {
            for (j, v) in coeffs {
                if j >= n {
                    return Err(ModelError::Invalid(format!(
                        "row {i} references column {j} out of {n}"
                    )));
                }
                entries.push((i as u32, j as u32, v));
            }
            rhs.push(b);
            row_names.push(format!("r{i}"));
        }
        let var_names = (0..n).map(|j| format!("x{j}")).collect();
        build_instance(
            name.to_string(),
            obj,
            0.0,
            1.0,
            rhs,
            row_names,
            entries,
            lower,
            upper,
            integer,
            var_names,
        )
    }
}

/// Turns a parsed file into the canonical `min c.x, A.x <= b` form.
pub fn normalize(raw: &RawInstance) -> Result<ProblemInstance, ModelError> {
    let n = raw.var_names.len();
    let (sense_factor, obj, obj_offset) = if raw.maximize {
        (
            -1.0,
            raw.objective.iter().map(|c| -c).collect::<Vec<f64>>(),
            -raw.objective_offset,
        )
    } else {
        (1.0, raw.objective.clone(), raw.objective_offset)
    };

    // Map each raw row to one or two <= rows: (multiplier, rhs, name).
    let mut forms: Vec<Vec<(f64, f64, String)>> = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        let mut f = Vec::with_capacity(2);
        match row.sense {
            RowSense::Le => {
                f.push((1.0, row.rhs, row.name.clone()));
                if let Some(r) = row.range {
                    // b - |r| <= a.x <= b
                    f.push((-1.0, -(row.rhs - r.abs()), format!("{}'", row.name)));
                }
            }
            RowSense::Ge => {
                f.push((-1.0, -row.rhs, row.name.clone()));
                if let Some(r) = row.range {
                    // b <= a.x <= b + |r|
                    f.push((1.0, row.rhs + r.abs(), format!("{}'", row.name)));
                }
            }
            RowSense::Eq => match row.range {
                None => {
                    f.push((1.0, row.rhs, row.name.clone()));
                    f.push((-1.0, -row.rhs, format!("{}'", row.name)));
                }
                Some(r) if r >= 0.0 => {
                    // b <= a.x <= b + r
                    f.push((1.0, row.rhs + r, row.name.clone()));
                    f.push((-1.0, -row.rhs, format!("{}'", row.name)));
                }
                Some(r) => {
                    // b + r <= a.x <= b
                    f.push((1.0, row.rhs, row.name.clone()));
                    f.push((-1.0, -(row.rhs + r), format!("{}'", row.name)));
                }
            },
        }
        forms.push(f);
    }

    let mut entries: Vec<(u32, u32, f64)> = Vec::new();
    let mut rhs = Vec::new();
    let mut row_names = Vec::new();
    let mut next = 0u32;
    let mut ids: Vec<Vec<u32>> = Vec::with_capacity(forms.len());
    for f in &forms {
        let mut v = Vec::with_capacity(f.len());
        for (_, b, name) in f {
            v.push(next);
            rhs.push(*b);
            row_names.push(name.clone());
            next += 1;
        }
        ids.push(v);
    }
    for &(ri, ci, val) in &raw.entries {
        for (k, &(mult, _, _)) in forms[ri as usize].iter().enumerate() {
            entries.push((ids[ri as usize][k], ci, mult * val));
        }
    }

    build_instance(
        raw.name.clone(),
        obj,
        obj_offset,
        sense_factor,
        rhs,
        row_names,
        entries,
        raw.lower.clone(),
        raw.upper.clone(),
        raw.integer.clone(),
        if raw.var_names.is_empty() {
            (0..n).map(|j| format!("x{j}")).collect()
        } else {
            raw.var_names.clone()
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn build_instance(
    name: String,
    obj: Vec<f64>,
    obj_offset: f64,
    sense_factor: f64,
    mut rhs: Vec<f64>,
    mut row_names: Vec<String>,
    mut entries: Vec<(u32, u32, f64)>,
    mut lower: Vec<f64>,
    mut upper: Vec<f64>,
    integer: Vec<bool>,
    var_names: Vec<String>,
) -> Result<ProblemInstance, ModelError> {
    let n = lower.len();

    // Integer bounds move inward to whole numbers (with a guard against
    // chopping values that are whole up to roundoff).
    for j in 0..n {
        if integer[j] {
            if lower[j].is_finite() {
                lower[j] = (lower[j] - 1e-9).ceil();
            }
            if upper[j].is_finite() {
                upper[j] = (upper[j] + 1e-9).floor();
            }
        }
        if lower[j] > upper[j] {
            return Err(ModelError::Infeasible(format!(
                "variable {} has lower bound {} above upper bound {}",
                var_names[j], lower[j], upper[j]
            )));
        }
    }

    // Combine duplicate coefficients and drop exact zeros.
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
    for e in entries {
        match merged.last_mut() {
            Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
            _ => merged.push(e),
        }
    }
    merged.retain(|e| e.2 != 0.0);

    // Drop structurally empty rows: trivially satisfied when b >= 0,
    // otherwise the model cannot be satisfied at all.
    let m0 = rhs.len();
    let mut has_entry = vec![false; m0];
    for &(r, _, _) in &merged {
        has_entry[r as usize] = true;
    }
    let mut remap = vec![u32::MAX; m0];
    let mut keep = 0u32;
    for i in 0..m0 {
        if has_entry[i] {
            remap[i] = keep;
            keep += 1;
        } else if rhs[i] >= 0.0 {
            log::warn!(
                "dropping empty row {} (trivially satisfied, rhs {})",
                row_names[i],
                rhs[i]
            );
        } else {
            return Err(ModelError::Infeasible(format!(
                "empty row {} requires activity <= {}",
                row_names[i], rhs[i]
            )));
        }
    }
    if keep as usize != m0 {
        let mut new_rhs = Vec::with_capacity(keep as usize);
        let mut new_names = Vec::with_capacity(keep as usize);
        for i in 0..m0 {
            if remap[i] != u32::MAX {
                new_rhs.push(rhs[i]);
                new_names.push(std::mem::take(&mut row_names[i]));
            }
        }
        rhs = new_rhs;
        row_names = new_names;
        for e in &mut merged {
            e.0 = remap[e.0 as usize];
        }
    }
    let m = rhs.len();

    // Row-ordered layout (entries already sorted by row, then column).
    let mut row_ptr = vec![0usize; m + 1];
    for &(r, _, _) in &merged {
        row_ptr[r as usize + 1] += 1;
    }
    for i in 0..m {
        row_ptr[i + 1] += row_ptr[i];
    }
    let row_cols: Vec<u32> = merged.iter().map(|e| e.1).collect();
    let row_vals: Vec<f64> = merged.iter().map(|e| e.2).collect();

    // Column-ordered layout; scanning rows in order keeps rows sorted
    // within each column.
    let mut col_ptr = vec![0usize; n + 1];
    for &(_, c, _) in &merged {
        col_ptr[c as usize + 1] += 1;
    }
    for j in 0..n {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut cursor = col_ptr.clone();
    let mut col_rows = vec![0u32; merged.len()];
    let mut col_vals = vec![0f64; merged.len()];
    for &(r, c, v) in &merged {
        let k = cursor[c as usize];
        col_rows[k] = r;
        col_vals[k] = v;
        cursor[c as usize] += 1;
    }

    let binaries = (0..n)
        .filter(|&j| integer[j] && lower[j] == 0.0 && upper[j] == 1.0)
        .collect();

    Ok(ProblemInstance {
        name,
        obj,
        obj_offset,
        sense_factor,
        rhs,
        lower,
        upper,
        integer,
        binaries,
        var_names,
        row_names,
        row_ptr,
        row_cols,
        row_vals,
        col_ptr,
        col_rows,
        col_vals,
    })
}
