//! Per-step trace tables.
//!
//! Comma-separated, one header row, then one row per step `t = 0..=T`.
//! Integer columns (`t`, `alarm`) are written as integers, every other
//! value with 17 significant digits so that reloading and re-emitting gives
//! the same bytes. Quantities that do not exist at a step (the injection and
//! residual at the final state, or steps after a run was stopped) are empty.

use std::io::{Read, Write};
use std::path::Path;

use fdia_core::attack::CampaignResult;
use fdia_core::dynamics::Trajectory;

use crate::error::{AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Integer,
    Real,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<(String, ColumnKind)>,
    pub rows: Vec<Vec<Option<f64>>>,
}

fn vector_columns(name: &str, n: usize) -> impl Iterator<Item = (String, ColumnKind)> + '_ {
    (0..n).map(move |i| (format!("{name}_{i}"), ColumnKind::Real))
}

fn push_vector(row: &mut Vec<Option<f64>>, v: Option<&fdia_core::Vector>, n: usize) {
    match v {
        Some(v) => row.extend(v.iter().map(|x| Some(*x))),
        None => row.extend(std::iter::repeat_n(None, n)),
    }
}

fn alarm_cell(alarms: Option<&[bool]>, t: usize) -> Option<f64> {
    alarms.and_then(|a| a.get(t)).map(|&b| if b { 1.0 } else { 0.0 })
}

impl TraceTable {
    pub fn new(columns: Vec<(String, ColumnKind)>) -> Self {
        TraceTable { columns, rows: Vec::new() }
    }

    /// Attacked campaign: counterfactual `x`, attacked `x^a`, virtual `e`,
    /// `‖x − e‖`, injection `a`, attacked residual norm and alarm flag.
    pub fn from_campaign(result: &CampaignResult, alarms: Option<&[bool]>) -> Self {
        let n = result.attacked.states.first().map_or(0, |x| x.len());
        let p = result.attacked.injections.first().map_or(0, |a| a.len());
        let mut columns = vec![("t".to_string(), ColumnKind::Integer)];
        columns.extend(vector_columns("x", n));
        columns.extend(vector_columns("xa", n));
        columns.extend(vector_columns("e", n));
        columns.push(("gap".into(), ColumnKind::Real));
        columns.extend(vector_columns("a", p));
        columns.push(("residual_norm".into(), ColumnKind::Real));
        columns.push(("alarm".into(), ColumnKind::Integer));
        let mut table = TraceTable::new(columns);
        let rows = result.attacked.horizon + 1;
        for t in 0..rows {
            let mut row = vec![Some(t as f64)];
            push_vector(&mut row, result.counterfactual.states.get(t), n);
            push_vector(&mut row, result.attacked.states.get(t), n);
            push_vector(&mut row, result.virtual_states.get(t), n);
            row.push(result.state_gap.get(t).copied());
            push_vector(&mut row, result.attacked.injections.get(t), p);
            row.push(result.attacked.innovations.get(t).map(|i| i.residual.norm()));
            row.push(alarm_cell(alarms, t));
            table.rows.push(row);
        }
        table
    }

    /// Attack-free run: state, residual norm and alarm flag.
    pub fn from_trajectory(tr: &Trajectory, alarms: Option<&[bool]>) -> Self {
        let n = tr.states.first().map_or(0, |x| x.len());
        let mut columns = vec![("t".to_string(), ColumnKind::Integer)];
        columns.extend(vector_columns("x", n));
        columns.push(("residual_norm".into(), ColumnKind::Real));
        columns.push(("alarm".into(), ColumnKind::Integer));
        let mut table = TraceTable::new(columns);
        for t in 0..=tr.horizon {
            let mut row = vec![Some(t as f64)];
            push_vector(&mut row, tr.states.get(t), n);
            row.push(tr.innovations.get(t).map(|i| i.residual.norm()));
            row.push(alarm_cell(alarms, t));
            table.rows.push(row);
        }
        table
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|(c, _)| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_to<W: Write>(&self, out: W) -> AppResult<()> {
        let fmt = |e: csv::Error| AppError::Format(format!("cannot write trace table: {e}"));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(self.columns.iter().map(|(c, _)| c.as_str())).map_err(fmt)?;
        for row in &self.rows {
            let cells = row.iter().zip(&self.columns).map(|(v, (_, kind))| match (v, kind) {
                (None, _) => String::new(),
                (Some(x), ColumnKind::Integer) => format!("{}", *x as i64),
                (Some(x), ColumnKind::Real) => format!("{x:.16e}"),
            });
            w.write_record(cells).map_err(fmt)?;
        }
        w.flush().map_err(|e| AppError::Format(format!("cannot write trace table: {e}")))
    }

    pub fn to_bytes(&self) -> AppResult<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    /// Read a table back. Column kinds are inferred from the names.
    pub fn read_from<R: Read>(input: R) -> AppResult<Self> {
        let fmt = |e: csv::Error| AppError::Format(format!("cannot read trace table: {e}"));
        let mut r = csv::ReaderBuilder::new().from_reader(input);
        let columns = r
            .headers()
            .map_err(fmt)?
            .iter()
            .map(|h| {
                let kind = if h == "t" || h == "alarm" { ColumnKind::Integer } else { ColumnKind::Real };
                (h.to_string(), kind)
            })
            .collect();
        let mut table = TraceTable::new(columns);
        for rec in r.records() {
            let rec = rec.map_err(fmt)?;
            let row = rec
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>().map(Some).map_err(|e| AppError::Format(format!("bad cell `{c}`: {e}")))
                    }
                })
                .collect::<AppResult<Vec<_>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }
}

/// Write `table` to `path`.
pub fn emit_traces(table: &TraceTable, path: &Path) -> AppResult<()> {
    let bytes = table.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}
