//! Plain-text output: CSV tables with fixed significant digits, JSON
//! documents, and CSV round trips for calibration data and shot sets.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::calibration::{CalibDataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::readout::{Level, ShotSet};

/// Significant digits used for every number written.
pub const SIG_DIGITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Format(format!("unknown output format '{other}'"))),
        }
    }
}

pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0" depending on how a zero was reached
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:.*e}", SIG_DIGITS - 1, x)
}

/// `x` rounded to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    fmt_num(x).parse().unwrap_or(x)
}

/// One table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Text(t) if t.contains([',', '"', '\n']) => format!("\"{}\"", t.replace('"', "\"\"")),
            Cell::Text(t) => t.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Num(v) => json_num(*v),
            Cell::Text(t) => serde_json::Value::String(t.clone()),
        }
    }
}

/// Column-named table of numbers and labels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| Cell::Num(*v)).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = serde_json::Map::new();
                for (c, v) in self.columns.iter().zip(r) {
                    m.insert(c.clone(), v.json());
                }
                serde_json::Value::Object(m)
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => to_json_string(&self.to_json_value()).expect("tables always serialize"),
        }
    }
}

fn json_num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(round_sig(v)).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// Rounds every number in a JSON tree to [`SIG_DIGITS`].
pub fn round_json(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if !(n.is_i64() || n.is_u64()) => json_num(f),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&round_json(v)).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn parse_num(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: bad {what} '{s}'")))
}

pub const DATASET_COLUMNS: [&str; 5] = ["step", "amplitude", "x", "y", "y_err"];

/// Long-format CSV: one row per point; `y_err` left empty when absent.
pub fn datasets_to_csv(sets: &[CalibDataset]) -> String {
    let mut s = DATASET_COLUMNS.join(",");
    s.push('\n');
    for d in sets {
        for i in 0..d.x.len() {
            let err = d.y_err.as_ref().map(|e| fmt_num(e[i])).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                d.meta.step,
                fmt_num(d.meta.amplitude),
                fmt_num(d.x[i]),
                fmt_num(d.y[i]),
                err
            ));
        }
    }
    s
}

/// Inverse of [`datasets_to_csv`]: rows are grouped by (step, amplitude)
/// in order of first appearance.
pub fn datasets_from_csv(text: &str) -> Result<Vec<CalibDataset>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != DATASET_COLUMNS {
        return Err(Error::Format(format!("expected columns {}", DATASET_COLUMNS.join(","))));
    }
    let mut out: Vec<CalibDataset> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let step: u8 = rec[0]
            .parse()
            .ok()
            .filter(|s| (1..=4).contains(s))
            .ok_or_else(|| Error::Format(format!("line {line}: bad step '{}'", &rec[0])))?;
        let meta = DatasetMeta {
            step,
            amplitude: parse_num(&rec[1], "amplitude", line)?,
        };
        let x = parse_num(&rec[2], "x", line)?;
        let y = parse_num(&rec[3], "y", line)?;
        let err = if rec[4].is_empty() { None } else { Some(parse_num(&rec[4], "y_err", line)?) };
        let d = match out.iter_mut().find(|d| d.meta == meta) {
            Some(d) => d,
            None => {
                out.push(CalibDataset {
                    x: vec![],
                    y: vec![],
                    y_err: err.map(|_| vec![]),
                    meta,
                });
                out.last_mut().expect("just pushed")
            }
        };
        match (&mut d.y_err, err) {
            (Some(v), Some(e)) => v.push(e),
            (None, None) => {}
            _ => return Err(Error::Format(format!("line {line}: y_err present on some rows only"))),
        }
        d.x.push(x);
        d.y.push(y);
    }
    for d in &out {
        d.validate()?;
    }
    Ok(out)
}

/// Columns u, v, label (g/e/f or empty), herald (or empty).
pub fn shots_to_csv(shots: &ShotSet) -> String {
    let mut s = String::from("u,v,label,herald\n");
    for (i, p) in shots.points.iter().enumerate() {
        let label = shots.labels.as_ref().map(|l| l[i].symbol().to_string()).unwrap_or_default();
        let herald = shots.herald.as_ref().map(|h| fmt_num(h[i])).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", fmt_num(p[0]), fmt_num(p[1]), label, herald));
    }
    s
}

pub fn shots_from_csv(text: &str) -> Result<ShotSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["u", "v", "label", "herald"] {
        return Err(Error::Format("expected columns u,v,label,herald".into()));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut herald = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        points.push([parse_num(&rec[0], "u", line)?, parse_num(&rec[1], "v", line)?]);
        if !rec[2].is_empty() {
            let l = Level::ALL
                .into_iter()
                .find(|l| l.symbol().to_string() == rec[2])
                .ok_or_else(|| Error::Format(format!("line {line}: bad label '{}'", &rec[2])))?;
            labels.push(l);
        }
        if !rec[3].is_empty() {
            herald.push(parse_num(&rec[3], "herald", line)?);
        }
    }
    let n = points.len();
    let partial = |name: &str| Error::Format(format!("column {name} is only partly filled"));
    if !(labels.is_empty() || labels.len() == n) {
        return Err(partial("label"));
    }
    if !(herald.is_empty() || herald.len() == n) {
        return Err(partial("herald"));
    }
    Ok(ShotSet {
        labels: (!labels.is_empty()).then_some(labels),
        herald: (!herald.is_empty()).then_some(herald),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1.000000000e0");
        assert_eq!(fmt_num(-2.5e-7), "-2.500000000e-7");
        assert_eq!(round_sig(1.0 / 3.0), 0.3333333333);
    }

    #[test]
    fn datasets_round_trip() {
        let sets = vec![
            CalibDataset {
                x: vec![0.0, 0.1, 0.2],
                y: vec![0.5, 0.25, 0.125],
                y_err: Some(vec![0.01, 0.01, 0.02]),
                meta: DatasetMeta { step: 2, amplitude: 0.004 },
            },
            CalibDataset {
                x: vec![1.0, 2.0],
                y: vec![0.0, 1.0],
                y_err: Some(vec![0.001, 0.001]),
                meta: DatasetMeta { step: 2, amplitude: 0.006 },
            },
        ];
        let back = datasets_from_csv(&datasets_to_csv(&sets)).unwrap();
        assert_eq!(back, sets);
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(datasets_from_csv("step,amplitude,x,y,y_err\n5,0.1,0,0.5,\n").is_err());
        assert!(datasets_from_csv("step,amplitude,x,y,y_err\n1,0.1,zero,0.5,\n").is_err());
        assert!(datasets_from_csv("a,b\n1,2\n").is_err());
        assert!(datasets_from_csv("step,amplitude,x,y,y_err\n1,0.1,0,0.5,0.1\n1,0.1,1,0.5,\n").is_err());
    }

    #[test]
    fn shots_round_trip() {
        let s = ShotSet {
            points: vec![[0.5, -1.25], [10.0, 0.0]],
            labels: Some(vec![Level::G, Level::F]),
            herald: None,
        };
        assert_eq!(shots_from_csv(&shots_to_csv(&s)).unwrap(), s);
    }

    #[test]
    fn table_renders_deterministically() {
        let mut t = Table::new(&["a", "b"]);
        t.push_nums(&[1.0, 1.0 / 3.0]);
        t.push(vec!["x,y".into(), 2.0.into()]);
        assert_eq!(t.to_csv(), "a,b\n1.000000000e0,3.333333333e-1\n\"x,y\",2.000000000e0\n");
        let j = t.render(Format::Json);
        assert!(j.contains("0.3333333333"));
        assert_eq!(j, t.render(Format::Json));
    }
}
