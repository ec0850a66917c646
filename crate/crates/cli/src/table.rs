//! CSV tables. Floats are written in scientific notation with three significant digits,
//! missing values as empty fields.

use std::fmt;

use hypercircle::adapt::{ConvergenceHistory, EnergyRow, GoalRow, HistoryStep};
use hypercircle::estimate::EstimatorKind;

#[derive(Debug, Clone, PartialEq)]
pub enum TableError {
    NonFinite { row: usize, column: String },
    Parse(String),
}

impl fmt::Display for TableError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableError::NonFinite { row, column } => write!(f, "non-finite value in row {row}, column {column}"),
            TableError::Parse(m) => write!(f, "malformed table: {m}"),
        }
    }
}

impl std::error::Error for TableError {}

pub const ENERGY_COLUMNS: [&str; 8] =
    ["level", "dofs", "true_sq_err", "rate", "eta_mixed", "ieff_mixed", "eta_local", "ieff_local"];
pub const HISTORY_COLUMNS: [&str; 7] = ["step", "dofs", "true_err", "eta", "i_eff", "i_osc", "rate"];
pub const PERFORMANCE_COLUMNS: [&str; 4] = ["estimator", "step", "dofs", "goal_err"];

/// One line of a goal table: the fixed columns plus `(eta, ieff, iosc)` per estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalTableRow {
    pub level: usize,
    pub dofs: usize,
    pub goal_err: f64,
    pub rate: Option<f64>,
    pub entries: Vec<[f64; 3]>,
}

impl GoalTableRow {
    /// Picks the columns of `kinds` out of a study row.
    pub fn from_row(row: &GoalRow, kinds: &[EstimatorKind]) -> Self {
        let entries = kinds
            .iter()
            .map(|&k| row.column(k).map_or([f64::NAN; 3], |c| [c.eta, c.i_eff, c.i_osc]))
            .collect();
        GoalTableRow { level: row.level, dofs: row.dofs, goal_err: row.goal_err, rate: row.rate, entries }
    }
}

struct Writer {
    out: String,
    row: usize,
    header: Vec<String>,
    col: usize,
}

impl Writer {
    fn new(header: Vec<String>) -> Self {
        let out = header.join(",") + "\n";
        Writer { out, row: 0, header, col: 0 }
    }

    fn sep(&mut self) {
        if self.col > 0 {
            self.out.push(',');
        }
        self.col += 1;
    }

    fn int(&mut self, v: usize) {
        self.sep();
        self.out.push_str(&v.to_string());
    }

    fn text(&mut self, v: &str) {
        self.sep();
        self.out.push_str(v);
    }

    fn float(&mut self, v: Option<f64>) -> Result<(), TableError> {
        self.sep();
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(TableError::NonFinite { row: self.row, column: self.header[self.col - 1].clone() });
            }
            self.out.push_str(&format!("{v:.2e}"));
        }
        Ok(())
    }

    fn end_row(&mut self) {
        self.out.push('\n');
        self.row += 1;
        self.col = 0;
    }
}

pub fn format_energy(rows: &[EnergyRow]) -> Result<String, TableError> {
    let mut w = Writer::new(ENERGY_COLUMNS.iter().map(|s| s.to_string()).collect());
    for r in rows {
        w.int(r.level);
        w.int(r.dofs);
        w.float(Some(r.true_sq_err))?;
        for v in [r.rate, r.eta_mixed, r.ieff_mixed, r.eta_local, r.ieff_local] {
            w.float(v)?;
        }
        w.end_row();
    }
    Ok(w.out)
}

fn goal_header(kinds: &[EstimatorKind]) -> Vec<String> {
    let mut h: Vec<String> = ["level", "dofs", "goal_err", "rate"].iter().map(|s| s.to_string()).collect();
    for k in kinds {
        for prefix in ["eta", "ieff", "iosc"] {
            h.push(format!("{prefix}_{}", k.name()));
        }
    }
    h
}

pub fn format_goal(kinds: &[EstimatorKind], rows: &[GoalTableRow]) -> Result<String, TableError> {
    let mut w = Writer::new(goal_header(kinds));
    for r in rows {
        if r.entries.len() != kinds.len() {
            return Err(TableError::Parse(format!("row {} has {} estimator entries", w.row, r.entries.len())));
        }
        w.int(r.level);
        w.int(r.dofs);
        w.float(Some(r.goal_err))?;
        w.float(r.rate)?;
        for e in &r.entries {
            for v in e {
                w.float(Some(*v))?;
            }
        }
        w.end_row();
    }
    Ok(w.out)
}

pub fn format_history(h: &ConvergenceHistory) -> Result<String, TableError> {
    let mut w = Writer::new(HISTORY_COLUMNS.iter().map(|s| s.to_string()).collect());
    for s in &h.steps {
        w.int(s.step);
        w.int(s.dofs);
        for v in [Some(s.true_err), Some(s.eta), Some(s.i_eff), Some(s.i_osc), s.rate] {
            w.float(v)?;
        }
        w.end_row();
    }
    Ok(w.out)
}

/// Long-format plot data: one line per estimator and step.
pub fn format_performance(runs: &[(EstimatorKind, &ConvergenceHistory)]) -> Result<String, TableError> {
    let mut w = Writer::new(PERFORMANCE_COLUMNS.iter().map(|s| s.to_string()).collect());
    for (kind, h) in runs {
        for s in &h.steps {
            w.text(kind.name());
            w.int(s.step);
            w.int(s.dofs);
            w.float(Some(s.true_err))?;
            w.end_row();
        }
    }
    Ok(w.out)
}

fn split_lines(text: &str, expected: Option<&[&str]>) -> Result<(Vec<String>, Vec<Vec<String>>), TableError> {
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().ok_or_else(|| TableError::Parse("missing header".into()))?.split(',').map(String::from).collect();
    if let Some(exp) = expected {
        if header != exp {
            return Err(TableError::Parse(format!("unexpected header {}", header.join(","))));
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<String> = line.split(',').map(String::from).collect();
        if fields.len() != header.len() {
            return Err(TableError::Parse(format!("row {i} has {} fields, expected {}", fields.len(), header.len())));
        }
        rows.push(fields);
    }
    Ok((header, rows))
}

fn int(s: &str) -> Result<usize, TableError> {
    s.parse().map_err(|_| TableError::Parse(format!("bad integer `{s}`")))
}

fn opt(s: &str) -> Result<Option<f64>, TableError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| TableError::Parse(format!("bad number `{s}`")))
}

fn req(s: &str) -> Result<f64, TableError> {
    opt(s)?.ok_or_else(|| TableError::Parse("missing required value".into()))
}

pub fn parse_energy(text: &str) -> Result<Vec<EnergyRow>, TableError> {
    let (_, rows) = split_lines(text, Some(&ENERGY_COLUMNS))?;
    rows.iter()
        .map(|f| {
            Ok(EnergyRow {
                level: int(&f[0])?,
                dofs: int(&f[1])?,
                true_sq_err: req(&f[2])?,
                rate: opt(&f[3])?,
                eta_mixed: opt(&f[4])?,
                ieff_mixed: opt(&f[5])?,
                eta_local: opt(&f[6])?,
                ieff_local: opt(&f[7])?,
            })
        })
        .collect()
}

pub fn parse_goal(text: &str) -> Result<(Vec<EstimatorKind>, Vec<GoalTableRow>), TableError> {
    let (header, rows) = split_lines(text, None)?;
    if header.len() < 4 || (header.len() - 4) % 3 != 0 || header[..4] != ["level", "dofs", "goal_err", "rate"] {
        return Err(TableError::Parse(format!("unexpected header {}", header.join(","))));
    }
    let mut kinds = Vec::new();
    for chunk in header[4..].chunks(3) {
        let name = chunk[0].strip_prefix("eta_").unwrap_or("");
        let kind = EstimatorKind::parse(name).ok_or_else(|| TableError::Parse(format!("unknown column {}", chunk[0])))?;
        if chunk[1] != format!("ieff_{name}") || chunk[2] != format!("iosc_{name}") {
            return Err(TableError::Parse(format!("columns of {name} out of order")));
        }
        kinds.push(kind);
    }
    let rows = rows
        .iter()
        .map(|f| {
            let entries = f[4..]
                .chunks(3)
                .map(|c| Ok([req(&c[0])?, req(&c[1])?, req(&c[2])?]))
                .collect::<Result<Vec<_>, TableError>>()?;
            Ok(GoalTableRow { level: int(&f[0])?, dofs: int(&f[1])?, goal_err: req(&f[2])?, rate: opt(&f[3])?, entries })
        })
        .collect::<Result<Vec<_>, TableError>>()?;
    Ok((kinds, rows))
}

pub fn parse_history(text: &str) -> Result<ConvergenceHistory, TableError> {
    let (_, rows) = split_lines(text, Some(&HISTORY_COLUMNS))?;
    let steps = rows
        .iter()
        .map(|f| {
            Ok(HistoryStep {
                step: int(&f[0])?,
                dofs: int(&f[1])?,
                true_err: req(&f[2])?,
                eta: req(&f[3])?,
                i_eff: req(&f[4])?,
                i_osc: req(&f[5])?,
                rate: opt(&f[6])?,
            })
        })
        .collect::<Result<Vec<_>, TableError>>()?;
    Ok(ConvergenceHistory { steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_significant_digit_formatting() {
        let row = EnergyRow {
            level: 3,
            dofs: 4225,
            true_sq_err: 1.8512e-5,
            rate: Some(1.9966),
            eta_mixed: None,
            ieff_mixed: None,
            eta_local: Some(1.868e-5),
            ieff_local: Some(1.00912),
        };
        let text = format_energy(&[row]).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line, "3,4225,1.85e-5,2.00e0,,,1.87e-5,1.01e0");
        assert_eq!(line.split(',').count(), 8);
    }

    #[test]
    fn empty_rows_give_header_only() {
        assert_eq!(format_energy(&[]).unwrap(), ENERGY_COLUMNS.join(",") + "\n");
        assert_eq!(format_history(&ConvergenceHistory::default()).unwrap().lines().count(), 1);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let h = ConvergenceHistory {
            steps: vec![HistoryStep { step: 1, dofs: 9, true_err: 1.0, eta: f64::NAN, i_eff: 1.0, i_osc: 1.0, rate: None }],
        };
        assert_eq!(format_history(&h), Err(TableError::NonFinite { row: 0, column: "eta".into() }));
    }
}
