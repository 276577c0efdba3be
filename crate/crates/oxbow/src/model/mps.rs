//! MPS reader: fixed and free format, integer markers, ranges, bounds.
//!
//! Lines are tokenized on whitespace, which accepts both the classic
//! column-aligned layout and free-format files. Comment lines start with
//! `*`. Sections: NAME, OBJSENSE, ROWS, COLUMNS (with INTORG/INTEND
//! markers), RHS, RANGES, BOUNDS, ENDATA.

use std::collections::HashMap;
use std::collections::HashSet;

use super::{ModelError, RawInstance, RawRow, RowSense};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Start,
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    Done,
}

struct Parser {
    raw: RawInstance,
    row_index: HashMap<String, u32>,
    col_index: HashMap<String, u32>,
    /// Free rows (second and later N rows): declared but dropped, their
    /// coefficients are ignored.
    free_rows: HashSet<String>,
    objective_seen: bool,
    integer_mode: bool,
}

fn err(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num(tok: &str, line: usize) -> Result<f64, ModelError> {
    if let Ok(v) = tok.parse::<f64>() {
        return Ok(v);
    }
    // Fortran-style exponents (1.0D+2) appear in old files.
    let fixed = tok.replace(['D', 'd'], "E");
    fixed
        .parse::<f64>()
        .map_err(|_| err(line, format!("cannot parse number '{tok}'")))
}

impl Parser {
    fn new() -> Self {
        Parser {
            raw: RawInstance::default(),
            row_index: HashMap::new(),
            col_index: HashMap::new(),
            free_rows: HashSet::new(),
            objective_seen: false,
            integer_mode: false,
        }
    }

    fn ensure_col(&mut self, name: &str) -> u32 {
        if let Some(&j) = self.col_index.get(name) {
            return j;
        }
        let j = self.raw.var_names.len() as u32;
        self.col_index.insert(name.to_string(), j);
        self.raw.var_names.push(name.to_string());
        self.raw.objective.push(0.0);
        self.raw.lower.push(0.0);
        self.raw.upper.push(f64::INFINITY);
        self.raw.integer.push(self.integer_mode);
        j
    }

    fn lookup_col(&self, name: &str, line: usize) -> Result<u32, ModelError> {
        self.col_index
            .get(name)
            .copied()
            .ok_or_else(|| err(line, format!("reference to undeclared column '{name}'")))
    }

    fn declare_row(&mut self, sense: &str, name: &str, line: usize) -> Result<(), ModelError> {
        if self.row_index.contains_key(name) || self.free_rows.contains(name) {
            return Err(err(line, format!("duplicate row '{name}'")));
        }
        let sense = match sense.to_ascii_uppercase().as_str() {
            "N" => {
                if self.objective_seen {
                    log::warn!("dropping free row '{name}' (objective already declared)");
                    self.free_rows.insert(name.to_string());
                    return Ok(());
                }
                self.objective_seen = true;
                self.raw.objective_name = name.to_string();
                return Ok(());
            }
            "L" => RowSense::Le,
            "G" => RowSense::Ge,
            "E" => RowSense::Eq,
            other => return Err(err(line, format!("unknown row sense '{other}'"))),
        };
        self.row_index
            .insert(name.to_string(), self.raw.rows.len() as u32);
        self.raw.rows.push(RawRow {
            name: name.to_string(),
            sense,
            rhs: 0.0,
            range: None,
        });
        Ok(())
    }

    fn column_line(&mut self, toks: &[&str], line: usize) -> Result<(), ModelError> {
        // Marker lines toggle integrality for the following columns.
        if toks.iter().any(|t| t.trim_matches('\'') == "MARKER") {
            if toks.iter().any(|t| t.trim_matches('\'') == "INTORG") {
                self.integer_mode = true;
            } else if toks.iter().any(|t| t.trim_matches('\'') == "INTEND") {
                self.integer_mode = false;
            } else {
                return Err(err(line, "marker line without INTORG/INTEND"));
            }
            return Ok(());
        }
        if toks.len() < 3 || toks.len() % 2 == 0 {
            return Err(err(line, "COLUMNS line needs column then row/value pairs"));
        }
        let j = self.ensure_col(toks[0]);
        for pair in toks[1..].chunks(2) {
            let row = pair[0];
            let val = parse_num(pair[1], line)?;
            if row == self.raw.objective_name && self.objective_seen {
                self.raw.objective[j as usize] += val;
            } else if let Some(&ri) = self.row_index.get(row) {
                self.raw.entries.push((ri, j, val));
            } else if self.free_rows.contains(row) {
                // Coefficient on a dropped free row.
            } else {
                return Err(err(line, format!("reference to undeclared row '{row}'")));
            }
        }
        Ok(())
    }

    fn rhs_line(&mut self, toks: &[&str], line: usize) -> Result<(), ModelError> {
        let items = if toks.len() % 2 == 1 { &toks[1..] } else { toks };
        if items.is_empty() {
            return Err(err(line, "RHS line without entries"));
        }
        for pair in items.chunks(2) {
            let row = pair[0];
            let val = parse_num(pair[1], line)?;
            if row == self.raw.objective_name && self.objective_seen {
                // RHS on the objective row encodes the negated constant term.
                self.raw.objective_offset = -val;
            } else if let Some(&ri) = self.row_index.get(row) {
                self.raw.rows[ri as usize].rhs = val;
            } else if self.free_rows.contains(row) {
                // Ignored alongside the row itself.
            } else {
                return Err(err(line, format!("reference to undeclared row '{row}'")));
            }
        }
        Ok(())
    }

    fn ranges_line(&mut self, toks: &[&str], line: usize) -> Result<(), ModelError> {
        let items = if toks.len() % 2 == 1 { &toks[1..] } else { toks };
        if items.is_empty() {
            return Err(err(line, "RANGES line without entries"));
        }
        for pair in items.chunks(2) {
            let row = pair[0];
            let val = parse_num(pair[1], line)?;
            let ri = *self
                .row_index
                .get(row)
                .ok_or_else(|| err(line, format!("reference to undeclared row '{row}'")))?;
            self.raw.rows[ri as usize].range = Some(val);
        }
        Ok(())
    }

    fn bounds_line(&mut self, toks: &[&str], line: usize) -> Result<(), ModelError> {
        if toks.is_empty() {
            return Ok(());
        }
        let kind = toks[0].to_ascii_uppercase();
        let valued = matches!(kind.as_str(), "LO" | "UP" | "FX" | "LI" | "UI");
        // With a bound-set name: TYPE SET VAR [VALUE]; without: TYPE VAR [VALUE].
        let (var_tok, val_tok) = if valued {
            match toks.len() {
                3 => (toks[1], Some(toks[2])),
                4 => (toks[2], Some(toks[3])),
                _ => return Err(err(line, format!("{kind} bound needs a variable and value"))),
            }
        } else {
            match toks.len() {
                2 => (toks[1], None),
                3 | 4 => (toks[2], None),
                _ => return Err(err(line, format!("{kind} bound needs a variable"))),
            }
        };
        let j = self.lookup_col(var_tok, line)? as usize;
        let val = match val_tok {
            Some(t) => Some(parse_num(t, line)?),
            None => None,
        };
        match kind.as_str() {
            "LO" => {
                self.raw.lower[j] = val.unwrap();
            }
            "UP" => self.raw.upper[j] = val.unwrap(),
            "FX" => {
                self.raw.lower[j] = val.unwrap();
                self.raw.upper[j] = val.unwrap();
            }
            "FR" => {
                self.raw.lower[j] = f64::NEG_INFINITY;
                self.raw.upper[j] = f64::INFINITY;
            }
            "MI" => {
                self.raw.lower[j] = f64::NEG_INFINITY;
            }
            "PL" => self.raw.upper[j] = f64::INFINITY,
            "BV" => {
                self.raw.integer[j] = true;
                self.raw.lower[j] = 0.0;
                self.raw.upper[j] = 1.0;
            }
            "LI" => {
                self.raw.integer[j] = true;
                self.raw.lower[j] = val.unwrap();
            }
            "UI" => {
                self.raw.integer[j] = true;
                self.raw.upper[j] = val.unwrap();
            }
            other => return Err(err(line, format!("unknown bound type '{other}'"))),
        }
        Ok(())
    }
}

/// Parses MPS text into a [`RawInstance`]. Errors carry 1-based line numbers.
pub fn parse_mps(text: &str) -> Result<RawInstance, ModelError> {
    let mut p = Parser::new();
    let mut section = Section::Start;

    for (lineno, rawline) in text.lines().enumerate() {
        let line = lineno + 1;
        if rawline.trim_start().starts_with('*') || rawline.trim().is_empty() {
            continue;
        }
        let header = !rawline.starts_with(' ') && !rawline.starts_with('\t');
        let toks: Vec<&str> = rawline.split_whitespace().collect();

        if header {
            let name = toks[0].to_ascii_uppercase();
            section = match name.as_str() {
                "NAME" => {
                    if toks.len() > 1 {
                        p.raw.name = toks[1].to_string();
                    }
                    Section::Name
                }
                "OBJSENSE" => {
                    if toks.len() > 1 {
                        apply_objsense(&mut p, toks[1], line)?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::Done,
                other => return Err(err(line, format!("malformed section header '{other}'"))),
            };
            if section == Section::Done {
                break;
            }
            continue;
        }

        match section {
            Section::ObjSense => {
                apply_objsense(&mut p, toks[0], line)?;
            }
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(err(line, "ROWS line needs a sense and a name"));
                }
                p.declare_row(toks[0], toks[1], line)?;
            }
            Section::Columns => p.column_line(&toks, line)?,
            Section::Rhs => p.rhs_line(&toks, line)?,
            Section::Ranges => p.ranges_line(&toks, line)?,
            Section::Bounds => p.bounds_line(&toks, line)?,
            Section::Start | Section::Name => {
                return Err(err(line, "data before any section header"));
            }
            Section::Done => {}
        }
    }
    if section != Section::Done {
        log::warn!("file ended without ENDATA");
    }
    if !p.objective_seen {
        return Err(err(0, "no objective (N) row declared"));
    }
    Ok(p.raw)
}

fn apply_objsense(p: &mut Parser, tok: &str, line: usize) -> Result<(), ModelError> {
    match tok.to_ascii_uppercase().as_str() {
        "MAX" | "MAXIMIZE" => p.raw.maximize = true,
        "MIN" | "MINIMIZE" => p.raw.maximize = false,
        other => return Err(err(line, format!("unknown objective sense '{other}'"))),
    }
    Ok(())
}

/// Reads and parses an MPS file from disk.
pub fn parse_mps_file(path: &std::path::Path) -> Result<RawInstance, ModelError> {
    let text = std::fs::read_to_string(path)?;
    parse_mps(&text)
}
