use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(&'static str),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&'static str> for Cell {
    fn from(v: &'static str) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Num(if v { 1.0 } else { 0.0 })
    }
}

/// Formats a double with 17 significant digits; parsing the text gives the
/// same bits back.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// A table with a fixed column set and a strictly increasing integer index.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    index: &'static str,
    columns: Vec<&'static str>,
    rows: Vec<(u64, Vec<Cell>)>,
}

impl MetricsRecord {
    pub fn new(index: &'static str, columns: &[&'static str]) -> Self {
        MetricsRecord { index, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[(u64, Vec<Cell>)] {
        &self.rows
    }

    pub fn push(&mut self, index: u64, cells: Vec<Cell>) -> Result<()> {
        if cells.len() != self.columns.len() {
            return Err(CliError::Metrics(format!(
                "metrics row has {} cells for {} columns",
                cells.len(),
                self.columns.len()
            )));
        }
        if let Some((last, _)) = self.rows.last() {
            if index <= *last {
                return Err(CliError::Metrics(format!("metrics index {index} does not follow {last}")));
            }
        }
        self.rows.push((index, cells));
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(self.index);
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (idx, cells) in &self.rows {
            write!(out, "{idx}").unwrap();
            for cell in cells {
                out.push(',');
                match cell {
                    Cell::Num(v) => out.push_str(&format_number(*v)),
                    Cell::Text(t) => out.push_str(t),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| CliError::io(path, e))
    }

    /// Fixed-width rendering for the terminal.
    pub fn to_table(&self) -> String {
        let header: Vec<String> = std::iter::once(self.index).chain(self.columns.iter().copied()).map(str::to_string).collect();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(i, cells)| {
                std::iter::once(i.to_string())
                    .chain(cells.iter().map(|c| match c {
                        Cell::Num(v) => format!("{v:.6e}"),
                        Cell::Text(t) => t.to_string(),
                    }))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| body.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&body) {
            let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_bit_exactly() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, f64::MAX, 0.0, -0.0, std::f64::consts::PI] {
            let s = format_number(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_number(1.0), "1.0000000000000000e0");
        assert_eq!(format_number(f64::NAN), "NaN");
    }

    #[test]
    fn csv_layout_and_row_checks() {
        let mut m = MetricsRecord::new("step", &["mode", "eta", "flag"]);
        assert_eq!(m.to_csv(), "step,mode,eta,flag\n");
        m.push(0, vec!["alt".into(), 0.5.into(), true.into()]).unwrap();
        m.push(3, vec!["sml".into(), 0.25.into(), false.into()]).unwrap();
        assert!(m.push(3, vec!["sml".into(), 0.25.into(), false.into()]).is_err());
        assert!(m.push(4, vec![0.25.into()]).is_err());
        assert_eq!(
            m.to_csv(),
            "step,mode,eta,flag\n0,alt,5.0000000000000000e-1,1.0000000000000000e0\n3,sml,2.5000000000000000e-1,0.0000000000000000e0\n"
        );
        assert_eq!(m.to_table().lines().count(), 3);
    }
}
