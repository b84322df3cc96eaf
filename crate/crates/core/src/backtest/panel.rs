use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::ReturnsPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelFormat {
    /// Header `date,<asset>...`, ISO dates, one row per trading day.
    #[default]
    Csv,
}

/// A parsed panel plus the assets dropped for missing values.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: ReturnsPanel<f64>,
    pub dropped: Vec<String>,
}

pub fn load_panel(path: &Path, format: PanelFormat) -> Result<LoadedPanel> {
    match format {
        PanelFormat::Csv => read_panel_csv(std::fs::File::open(path)?),
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null")
}

/// Parses a date-indexed CSV. Assets with any missing cell are dropped with a
/// warning; malformed numbers and dates are errors.
pub fn read_panel_csv<R: Read>(reader: R) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse { line: 1, message: "need a date column and at least one asset".into() });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let p = names.len();
    let mut dates = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != p + 1 {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", p + 1, record.len()) });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| Error::Parse { line, message: format!("bad date {:?}: {e}", &record[0]) })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Parse { line, message: format!("date {date} does not follow {prev}") });
            }
        }
        dates.push(date);
        for cell in record.iter().skip(1) {
            if is_missing(cell) {
                cells.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("not a number: {cell:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite value {cell:?}") });
            }
            cells.push(Some(v));
        }
    }
    let n = dates.len();
    let keep: Vec<usize> = (0..p).filter(|&j| (0..n).all(|i| cells[i * p + j].is_some())).collect();
    let dropped: Vec<String> = (0..p).filter(|j| !keep.contains(j)).map(|j| names[j].clone()).collect();
    for name in &dropped {
        log::warn!("dropping asset {name}: missing values");
    }
    if keep.is_empty() {
        return Err(Error::InvalidInput("no asset without missing values".into()));
    }
    let data = DMatrix::from_fn(n, keep.len(), |i, k| cells[i * p + keep[k]].expect("kept columns are complete"));
    let assets = keep.iter().map(|&j| names[j].clone()).collect();
    let panel = ReturnsPanel::new(data, Some(dates), Some(assets))?;
    Ok(LoadedPanel { panel, dropped })
}

/// Writes a dated panel with 17-digit values.
pub fn panel_csv(panel: &ReturnsPanel<f64>) -> Result<String> {
    let dates = panel
        .dates()
        .ok_or_else(|| Error::InvalidInput("panel has no dates".into()))?;
    let mut header = vec!["date"];
    header.extend(panel.assets().iter().map(String::as_str));
    let r = panel.returns();
    crate::io::csv_string(
        &header,
        (0..panel.n()).map(|i| {
            let mut row = vec![dates[i].format("%Y-%m-%d").to_string()];
            row.extend((0..panel.p()).map(|j| crate::io::fmt_f64(r[(i, j)])));
            row
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_drops_incomplete_assets() {
        let text = "date,A,B,C\n2020-01-02,0.01,NA,0.5\n2020-01-03,-0.02,0.1,0.25\n2020-01-06,0.0,0.2,\n";
        let loaded = read_panel_csv(text.as_bytes()).unwrap();
        assert_eq!(loaded.dropped, vec!["B".to_string(), "C".to_string()]);
        assert_eq!(loaded.panel.assets(), &["A".to_string()]);
        assert_eq!(loaded.panel.returns()[(1, 0)], -0.02);
    }

    #[test]
    fn rejects_malformed_input() {
        let bad_number = "date,A\n2020-01-02,x\n2020-01-03,0.1\n";
        assert!(matches!(read_panel_csv(bad_number.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let unsorted = "date,A\n2020-01-03,0.1\n2020-01-02,0.1\n";
        assert!(matches!(read_panel_csv(unsorted.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let bad_date = "date,A\n2020-13-01,0.1\n2020-01-02,0.1\n";
        assert!(read_panel_csv(bad_date.as_bytes()).is_err());
        let all_missing = "date,A\n2020-01-02,\n2020-01-03,0.1\n";
        assert!(read_panel_csv(all_missing.as_bytes()).is_err());
    }

    #[test]
    fn round_trips_through_csv() {
        let text = "date,A,B\n2020-01-02,0.1,0.30000000000000004\n2020-01-03,-1e-300,2.5\n";
        let loaded = read_panel_csv(text.as_bytes()).unwrap();
        let again = read_panel_csv(panel_csv(&loaded.panel).unwrap().as_bytes()).unwrap();
        assert_eq!(loaded.panel.returns(), again.panel.returns());
    }
}
