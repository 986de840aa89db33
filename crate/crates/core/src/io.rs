//! File ingestion and table export.
//!
//! Two input dialects are supported: French-library monthly panels (header
//! of portfolio names, first column YYYYMM, values in percent, sentinel
//! -99.99 for missing) and FRED-style two-column `DATE,VALUE` series with
//! the frequency inferred from the date spacing. Exports go through
//! [`Table`], a label-plus-float-columns CSV that reloads losslessly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::calendar::{Frequency, Month, Units};
use crate::error::{Error, Result};
use crate::series::{ReturnPanel, TimeSeries};

/// French sentinel for missing observations.
const FRENCH_SENTINEL: f64 = -99.99;

/// Load a French-library monthly panel.
pub fn load_panel(path: &Path) -> Result<ReturnPanel> {
    let text = fs::read_to_string(path)?;
    parse_panel(&text)
}

pub fn parse_panel(text: &str) -> Result<ReturnPanel> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or(Error::ParseError { line: 1, msg: "empty file".into() })?;
    let names: Vec<String> = header
        .split(',')
        .skip(1)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::ParseError { line: 1, msg: "header has no portfolio names".into() });
    }
    let mut dates: Vec<Month> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let mut fields = line.split(',').map(str::trim);
        let date_str = fields
            .next()
            .ok_or(Error::ParseError { line: line_no, msg: "missing date field".into() })?;
        let yyyymm: i64 = date_str.parse().map_err(|_| Error::ParseError {
            line: line_no,
            msg: format!("malformed date {date_str:?}"),
        })?;
        let month = Month::from_yyyymm(yyyymm).ok_or(Error::ParseError {
            line: line_no,
            msg: format!("{yyyymm} is not a valid YYYYMM"),
        })?;
        if let Some(prev) = dates.last() {
            if month.months_since(*prev) != 1 {
                return Err(Error::ParseError {
                    line: line_no,
                    msg: format!("gap in dates: {prev} followed by {month}"),
                });
            }
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::ParseError {
                    line: line_no,
                    msg: format!("malformed value {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != names.len() {
            return Err(Error::ParseError {
                line: line_no,
                msg: format!("row has {} values, header has {}", values.len(), names.len()),
            });
        }
        if let Some(pos) = values.iter().position(|v| (*v - FRENCH_SENTINEL).abs() < 1e-9) {
            return Err(Error::ParseError {
                line: line_no,
                msg: format!(
                    "missing-value sentinel -99.99 for portfolio {:?} at {month}",
                    names[pos]
                ),
            });
        }
        dates.push(month);
        rows.push(values);
    }
    if rows.len() < 2 {
        return Err(Error::ParseError {
            line: 0,
            msg: format!("panel needs at least 2 months, found {}", rows.len()),
        });
    }
    let n = names.len();
    let t = rows.len();
    let returns = DMatrix::from_fn(n, t, |i, s| rows[s][i]);
    ReturnPanel::new(dates[0], names, returns)
}

/// Load a FRED-style `DATE,VALUE` series, inferring the frequency.
pub fn load_series(path: &Path, units: Units) -> Result<TimeSeries> {
    let text = fs::read_to_string(path)?;
    parse_series(&text, units)
}

pub fn parse_series(text: &str, units: Units) -> Result<TimeSeries> {
    let mut months: Vec<Month> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed.to_ascii_lowercase().starts_with("date") {
            continue;
        }
        let (date_str, value_str) = trimmed.split_once(',').ok_or(Error::ParseError {
            line: line_no,
            msg: "expected DATE,VALUE".into(),
        })?;
        let month = Month::from_iso(date_str).ok_or(Error::ParseError {
            line: line_no,
            msg: format!("malformed date {date_str:?}"),
        })?;
        let value: f64 = value_str.trim().parse().map_err(|_| Error::ParseError {
            line: line_no,
            msg: format!("malformed value {value_str:?}"),
        })?;
        months.push(month);
        values.push(value);
    }
    if months.len() < 2 {
        return Err(Error::ParseError {
            line: 0,
            msg: "a series needs at least 2 observations".into(),
        });
    }
    let step = months[1].months_since(months[0]);
    let frequency = match step {
        1 => Frequency::Monthly,
        3 => Frequency::Quarterly,
        other => {
            return Err(Error::FrequencyError(format!(
                "cannot infer frequency from a {other}-month step between {} and {}",
                months[0], months[1]
            )))
        }
    };
    for w in months.windows(2) {
        let d = w[1].months_since(w[0]);
        if d != step {
            return Err(Error::FrequencyError(format!(
                "irregular spacing: {} to {} is {d} months, expected {step}",
                w[0], w[1]
            )));
        }
    }
    TimeSeries::new(months[0], frequency, units, values)
}

/// A labeled numeric table with units, exported as CSV and reloadable to
/// full f64 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub units: String,
    /// Optional leading label column.
    pub row_labels: Option<(String, Vec<String>)>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new(name: impl Into<String>, units: impl Into<String>) -> Self {
        Table { name: name.into(), units: units.into(), row_labels: None, columns: Vec::new() }
    }

    pub fn with_labels(
        mut self,
        header: impl Into<String>,
        labels: Vec<String>,
    ) -> Self {
        self.row_labels = Some((header.into(), labels));
        self
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.columns.push((name.into(), values));
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or_else(
            || self.row_labels.as_ref().map_or(0, |(_, l)| l.len()),
            |(_, v)| v.len(),
        )
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// CSV text: a `# table:` comment carrying name and units, a header,
    /// then rows. Floats print with enough digits to round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# table: {}; units: {}", self.name, self.units);
        let mut header: Vec<String> = Vec::new();
        if let Some((h, _)) = &self.row_labels {
            header.push(h.clone());
        }
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        let _ = writeln!(out, "{}", header.join(","));
        for r in 0..self.n_rows() {
            let mut fields: Vec<String> = Vec::new();
            if let Some((_, labels)) = &self.row_labels {
                fields.push(labels[r].clone());
            }
            for (_, col) in &self.columns {
                let v = col[r];
                if v.is_nan() {
                    fields.push("NaN".into());
                } else {
                    let mut s = format!("{v:?}");
                    if s.parse::<f64>().map(|p| p != v).unwrap_or(true) {
                        s = format!("{v:.17e}");
                    }
                    fields.push(s);
                }
            }
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Table> {
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines
            .next()
            .ok_or(Error::ParseError { line: 1, msg: "empty table".into() })?;
        let meta = meta
            .strip_prefix("# table: ")
            .ok_or(Error::ParseError { line: 1, msg: "missing table comment".into() })?;
        let (name, units) = meta
            .split_once("; units: ")
            .ok_or(Error::ParseError { line: 1, msg: "missing units".into() })?;
        let (_, header) = lines
            .next()
            .ok_or(Error::ParseError { line: 2, msg: "missing header".into() })?;
        let cols: Vec<&str> = header.split(',').collect();
        // A column whose first data field fails to parse as f64 is the
        // label column; only the leading column may be one.
        let mut rows: Vec<Vec<&str>> = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::ParseError {
                    line: idx + 1,
                    msg: format!("row has {} fields, header has {}", fields.len(), cols.len()),
                });
            }
            rows.push(fields);
        }
        let has_labels = rows
            .first()
            .map(|r| r[0].parse::<f64>().is_err() && r[0] != "NaN")
            .unwrap_or(false);
        let mut table = Table::new(name, units);
        if has_labels {
            table.row_labels = Some((
                cols[0].to_string(),
                rows.iter().map(|r| r[0].to_string()).collect(),
            ));
        }
        let start = usize::from(has_labels);
        for (j, col) in cols.iter().enumerate().skip(start) {
            let mut vals = Vec::with_capacity(rows.len());
            for (r, fields) in rows.iter().enumerate() {
                let f = fields[j];
                let v = if f == "NaN" {
                    f64::NAN
                } else {
                    f.parse::<f64>().map_err(|_| Error::ParseError {
                        line: r + 3,
                        msg: format!("malformed value {f:?}"),
                    })?
                };
                vals.push(v);
            }
            table.push_column(col.to_string(), vals);
        }
        Ok(table)
    }

    pub fn read_csv(path: &Path) -> Result<Table> {
        Table::from_csv(&fs::read_to_string(path)?)
    }
}

/// Export a time series as a dated table.
pub fn series_table(name: &str, s: &TimeSeries) -> Table {
    let labels: Vec<String> = (0..s.len()).map(|i| s.date_at(i).to_string()).collect();
    let mut t = Table::new(name, s.units().to_string()).with_labels("date", labels);
    t.push_column("value", s.values().to_vec());
    t
}

/// Rebuild a series from a dated table.
pub fn table_to_series(table: &Table, units: Units) -> Result<TimeSeries> {
    let (_, labels) = table
        .row_labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("table has no date column".into()))?;
    let values = table
        .column("value")
        .ok_or_else(|| Error::InvalidInput("table has no value column".into()))?;
    if labels.len() < 2 {
        return Err(Error::InvalidInput("need at least two dated rows".into()));
    }
    let months: Vec<Month> = labels
        .iter()
        .map(|l| {
            Month::from_iso(l).ok_or(Error::ParseError {
                line: 0,
                msg: format!("malformed date label {l:?}"),
            })
        })
        .collect::<Result<_>>()?;
    let step = months[1].months_since(months[0]);
    let frequency = match step {
        1 => Frequency::Monthly,
        3 => Frequency::Quarterly,
        other => {
            return Err(Error::FrequencyError(format!("{other}-month step in table dates")))
        }
    };
    TimeSeries::new(months[0], frequency, units, values.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn panel_well_formed_fixture() {
        let text = "date,SMALL,BIG\n196401,1.25,-0.5\n196402,0.75,2.0\n";
        let panel = parse_panel(text).unwrap();
        assert_eq!(panel.n_periods(), 2);
        assert_eq!(panel.n_portfolios(), 2);
        assert_eq!(panel.start(), Month::new(1964, 1));
        assert_eq!(panel.returns()[(0, 0)], 1.25);
        assert_eq!(panel.returns()[(1, 1)], 2.0);
    }

    #[test]
    fn panel_sentinel_is_rejected_with_row() {
        let text = "date,A,B\n196401,1.0,2.0\n196402,-99.99,0.5\n";
        match parse_panel(text) {
            Err(Error::ParseError { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("-99.99"));
                assert!(msg.contains('A'));
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn panel_date_math_matches_span() {
        // 1964-01 .. 2018-08 is 656 months.
        let mut text = String::from("date,A,B\n");
        let mut m = Month::new(1964, 1);
        let end = Month::new(2018, 8);
        while m <= end {
            let _ = writeln!(text, "{}{:02},0.1,0.2", m.year(), m.month());
            m = m.plus(1);
        }
        let panel = parse_panel(&text).unwrap();
        assert_eq!(panel.n_periods(), 656);
    }

    #[test]
    fn panel_gap_and_bad_rows_are_rejected() {
        let gap = "date,A,B\n196401,1.0,2.0\n196403,1.0,2.0\n";
        assert!(matches!(parse_panel(gap), Err(Error::ParseError { line: 3, .. })));
        let ragged = "date,A,B\n196401,1.0,2.0\n196402,1.0\n";
        assert!(matches!(parse_panel(ragged), Err(Error::ParseError { line: 3, .. })));
        let bad_date = "date,A,B\n196413,1.0,2.0\n196414,1.0,2.0\n";
        assert!(matches!(parse_panel(bad_date), Err(Error::ParseError { line: 2, .. })));
    }

    #[test]
    fn series_monthly_inferred() {
        let text = "DATE,VALUE\n1972-01-01,0.61\n1972-02-01,0.62\n1972-03-01,0.63\n";
        let s = parse_series(text, Units::Ratio).unwrap();
        assert_eq!(s.frequency(), Frequency::Monthly);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn series_quarterly_inferred() {
        let text = "DATE,VALUE\n1972-01-01,0.61\n1972-04-01,0.62\n1972-07-01,0.63\n";
        let s = parse_series(text, Units::Ratio).unwrap();
        assert_eq!(s.frequency(), Frequency::Quarterly);
    }

    #[test]
    fn series_gap_names_the_dates() {
        let text = "DATE,VALUE\n1972-01-01,0.61\n1972-02-01,0.62\n1972-04-01,0.63\n";
        match parse_series(text, Units::Ratio) {
            Err(Error::FrequencyError(msg)) => {
                assert!(msg.contains("1972-02"));
                assert!(msg.contains("1972-04"));
            }
            other => panic!("expected FrequencyError, got {other:?}"),
        }
    }

    #[test]
    fn table_roundtrip_is_exact() {
        let mut t = Table::new("demo", "percent")
            .with_labels("date", vec!["2000-01".into(), "2000-02".into()]);
        t.push_column("alpha", vec![1.0 / 3.0, -2.5e-17]);
        t.push_column("beta", vec![f64::NAN, 1.2345678901234567]);
        let csv = t.to_csv();
        let back = Table::from_csv(&csv).unwrap();
        assert_eq!(back.name, "demo");
        assert_eq!(back.units, "percent");
        assert_eq!(back.row_labels, t.row_labels);
        for ((n1, c1), (n2, c2)) in t.columns.iter().zip(&back.columns) {
            assert_eq!(n1, n2);
            for (a, b) in c1.iter().zip(c2) {
                if a.is_nan() {
                    assert!(b.is_nan());
                } else {
                    assert_eq!(a, b, "column {n1} differs");
                }
            }
        }
    }

    #[test]
    fn series_table_roundtrip() {
        let s = TimeSeries::new(
            Month::new(1964, 1),
            Frequency::Monthly,
            Units::Percent,
            vec![0.31, 2.416, -1.0 / 7.0],
        )
        .unwrap();
        let t = series_table("fks", &s);
        let back = table_to_series(&Table::from_csv(&t.to_csv()).unwrap(), Units::Percent).unwrap();
        assert_eq!(back.start(), s.start());
        assert_eq!(back.frequency(), s.frequency());
        for (a, b) in s.values().iter().zip(back.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }
}
