//! Plot-ready tables and their CSV / JSON encodings.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{Mode, SweepResult, SweepRow};

/// Significant digits kept in every emitted number.
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    pub fn num(x: Option<f64>) -> Cell {
        match x {
            Some(v) if v.is_finite() => Cell::Num(round_sig(v)),
            _ => Cell::Empty,
        }
    }

    pub fn text(s: Option<&str>) -> Cell {
        s.map_or(Cell::Empty, |s| Cell::Text(s.to_owned()))
    }

    fn csv_field(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => Value::from(*x),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Shortest decimal that parses back to `x`; exponent form outside `[1e-5, 1e15)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// One row per grid point, or per grid point and time when `curves` is set
    /// and the rows carry curves.
    pub fn from_sweep(res: &SweepResult, curves: bool) -> Table {
        let mut cols: Vec<String> = res.axis_names.iter().map(|a| a.to_string()).collect();
        let long = curves && res.mode == Mode::Evolve;
        if long {
            cols.push("t".into());
        }
        cols.push("EN".into());
        if res.mode == Mode::Evolve && !long {
            cols.push("tPeak".into());
        }
        for c in [
            "stable",
            "verdict",
            "kappaTilde",
            "DeltaTilde",
            "nuMinus",
            "rwa",
            "error",
        ] {
            cols.push(c.into());
        }
        let mut table = Table {
            columns: cols,
            rows: Vec::new(),
        };
        for row in &res.rows {
            if long {
                match &row.curve {
                    Some(c) => {
                        for (t, e) in res.t_grid.iter().zip(c) {
                            table
                                .rows
                                .push(row_cells(row, Some(*t), Some(*e), None, true));
                        }
                    }
                    None => table.rows.push(row_cells(row, None, None, None, true)),
                }
            } else {
                let t_peak = if res.mode == Mode::Evolve {
                    Some(row.t_peak)
                } else {
                    None
                };
                table
                    .rows
                    .push(row_cells(row, None, row.e_n, t_peak, false));
            }
        }
        table
    }
}

fn row_cells(
    row: &SweepRow,
    t: Option<f64>,
    e_n: Option<f64>,
    t_peak: Option<Option<f64>>,
    long: bool,
) -> Vec<Cell> {
    let mut cells: Vec<Cell> = row.point.iter().map(|&v| Cell::num(Some(v))).collect();
    if long {
        cells.push(Cell::num(t));
    }
    cells.push(Cell::num(e_n));
    if let Some(tp) = t_peak {
        cells.push(Cell::num(tp));
    }
    cells.push(Cell::Bool(row.stable));
    cells.push(Cell::Text(row.verdict.as_str().into()));
    cells.push(Cell::num(row.kappa_tilde));
    cells.push(Cell::num(row.delta_tilde));
    cells.push(if long {
        Cell::Empty
    } else {
        Cell::num(row.nu_minus)
    });
    cells.push(Cell::text(row.rwa.as_ref().map(|r| r.as_str())));
    cells.push(Cell::text(row.error.as_deref()));
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config {
                key: "format".into(),
                message: format!("expected csv or json, got `{s}`"),
            }),
        }
    }
}

pub fn to_csv(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&table.columns).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::csv_field))
            .map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// `{"meta": meta, "rows": [{column: value}, ...]}`
pub fn to_json(table: &Table, meta: &Value) -> Result<Vec<u8>> {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            let obj: Map<String, Value> = table
                .columns
                .iter()
                .cloned()
                .zip(r.iter().map(Cell::json))
                .collect();
            Value::Object(obj)
        })
        .collect();
    let mut doc = Map::new();
    doc.insert("meta".into(), meta.clone());
    doc.insert("rows".into(), Value::Array(rows));
    let mut out =
        serde_json::to_vec_pretty(&Value::Object(doc)).map_err(|e| Error::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn serialize(table: &Table, meta: &Value, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => to_csv(table),
        Format::Json => to_json(table, meta),
    }
}
