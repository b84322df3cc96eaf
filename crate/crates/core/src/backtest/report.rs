use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BacktestConfig, MuSource, Strategy, YearMonth};
use crate::error::{Error, Result};
use crate::io::{csv_string, fmt_f64, fmt_opt};

const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedStats {
    pub mean: f64,
    /// Population standard deviation.
    pub vol: f64,
    pub sharpe: f64,
    pub days: usize,
}

/// Mean over population standard deviation of per-period excess returns,
/// optionally scaled by `sqrt(252)`.
pub fn realized_stats(returns: &[f64], annualize: bool) -> Result<RealizedStats> {
    if returns.is_empty() {
        return Err(Error::InvalidInput("no returns in window".into()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let vol = var.sqrt();
    if !(vol > 0.0) {
        return Err(Error::Degenerate("returns have zero variance".into()));
    }
    let (mean, vol) = if annualize { (mean * TRADING_DAYS, vol * TRADING_DAYS.sqrt()) } else { (mean, vol) };
    Ok(RealizedStats { mean, vol, sharpe: mean / vol, days: returns.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub month: YearMonth,
    pub lookback_rows: usize,
    pub test_rows: usize,
    pub chosen_label: Option<String>,
    pub chosen_index: Option<usize>,
    pub chosen_score: Option<f64>,
    pub chosen_weight_sum: Option<f64>,
    pub chosen_weight_l1: Option<f64>,
    pub chosen_weight_max_abs: Option<f64>,
    /// Whether `Q = 0` fell back to the pseudo-inverse this month.
    pub q_zero_pseudo_inverse: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub start: YearMonth,
    pub end: YearMonth,
    pub strategy: String,
    pub days: usize,
    pub mean: Option<f64>,
    pub vol: Option<f64>,
    pub sharpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: Strategy,
    pub mu_source: MuSource,
    /// True when portfolio means were taken from the month being traded.
    pub uses_future_mean: bool,
    pub lookback_months: u32,
    pub forward_window_months: u32,
    pub window_stride_months: u32,
    pub test_start: YearMonth,
    pub test_end: YearMonth,
    pub annualized: bool,
    /// `Q=0`, each candidate, then `Q*`.
    pub strategies: Vec<String>,
    pub months: Vec<MonthRecord>,
    pub daily_dates: Vec<NaiveDate>,
    /// One series per strategy, aligned with `daily_dates`.
    pub daily_returns: Vec<Vec<f64>>,
    pub windows: Vec<WindowRecord>,
    pub warnings: Vec<String>,
}

pub(super) fn forward_windows(
    months: &[YearMonth],
    dates: &[NaiveDate],
    daily: &[Vec<f64>],
    labels: &[String],
    config: &BacktestConfig,
) -> Result<Vec<WindowRecord>> {
    let width = config.forward_window_months as usize;
    let stride = config.window_stride_months as usize;
    let mut out = Vec::new();
    let mut k = 0;
    while k + width <= months.len() {
        let (start, end) = (months[k], months[k + width - 1]);
        let lo = dates.partition_point(|d| YearMonth::of(*d) < start);
        let hi = dates.partition_point(|d| YearMonth::of(*d) <= end);
        for (label, series) in labels.iter().zip(daily) {
            let stats = realized_stats(&series[lo..hi], config.annualize).ok();
            out.push(WindowRecord {
                start,
                end,
                strategy: label.clone(),
                days: hi - lo,
                mean: stats.map(|s| s.mean),
                vol: stats.map(|s| s.vol),
                sharpe: stats.map(|s| s.sharpe),
            });
        }
        k += stride;
    }
    Ok(out)
}

/// Mean of the window statistics for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub windows: usize,
    pub mean_sharpe: Option<f64>,
    pub mean_vol: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl BacktestReport {
    pub fn summary(&self) -> Vec<StrategySummary> {
        self.strategies
            .iter()
            .map(|s| {
                let rows = || self.windows.iter().filter(move |w| &w.strategy == s);
                StrategySummary {
                    strategy: s.clone(),
                    windows: rows().count(),
                    mean_sharpe: mean_of(rows().map(|w| w.sharpe)),
                    mean_vol: mean_of(rows().map(|w| w.vol)),
                }
            })
            .collect()
    }

    pub fn months_csv(&self) -> Result<String> {
        csv_string(
            &[
                "month",
                "lookback_rows",
                "test_rows",
                "chosen_label",
                "chosen_index",
                "chosen_score",
                "chosen_weight_sum",
                "chosen_weight_l1",
                "chosen_weight_max_abs",
                "q_zero_pseudo_inverse",
                "failures",
            ],
            self.months.iter().map(|m| {
                vec![
                    m.month.to_string(),
                    m.lookback_rows.to_string(),
                    m.test_rows.to_string(),
                    m.chosen_label.clone().unwrap_or_default(),
                    m.chosen_index.map(|i| i.to_string()).unwrap_or_default(),
                    fmt_opt(m.chosen_score),
                    fmt_opt(m.chosen_weight_sum),
                    fmt_opt(m.chosen_weight_l1),
                    fmt_opt(m.chosen_weight_max_abs),
                    m.q_zero_pseudo_inverse.to_string(),
                    m.failures.join("; "),
                ]
            }),
        )
    }

    pub fn daily_csv(&self) -> Result<String> {
        let mut header = vec!["date"];
        header.extend(self.strategies.iter().map(String::as_str));
        csv_string(
            &header,
            self.daily_dates.iter().enumerate().map(|(i, d)| {
                let mut row = vec![d.format("%Y-%m-%d").to_string()];
                row.extend(self.daily_returns.iter().map(|s| fmt_f64(s[i])));
                row
            }),
        )
    }

    pub fn windows_csv(&self) -> Result<String> {
        csv_string(
            &["window_start", "window_end", "strategy", "days", "mean", "vol", "sharpe"],
            self.windows.iter().map(|w| {
                vec![
                    w.start.to_string(),
                    w.end.to_string(),
                    w.strategy.clone(),
                    w.days.to_string(),
                    fmt_opt(w.mean),
                    fmt_opt(w.vol),
                    fmt_opt(w.sharpe),
                ]
            }),
        )
    }

    pub fn summary_csv(&self) -> Result<String> {
        csv_string(
            &["strategy", "windows", "mean_sharpe", "mean_vol"],
            self.summary().into_iter().map(|s| {
                vec![s.strategy, s.windows.to_string(), fmt_opt(s.mean_sharpe), fmt_opt(s.mean_vol)]
            }),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the CSV tables and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let files = [
            ("months.csv", self.months_csv()?),
            ("daily.csv", self.daily_csv()?),
            ("windows.csv", self.windows_csv()?),
            ("summary.csv", self.summary_csv()?),
            ("report.json", self.to_json()?),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stats_use_population_deviation() {
        let s = realized_stats(&[0.01, 0.03], false).unwrap();
        assert_relative_eq!(s.mean, 0.02);
        assert_relative_eq!(s.vol, 0.01, epsilon = 1e-15);
        assert_relative_eq!(s.sharpe, 2.0, epsilon = 1e-12);
        let a = realized_stats(&[0.01, 0.03], true).unwrap();
        assert_relative_eq!(a.sharpe, 2.0 * 252f64.sqrt(), epsilon = 1e-10);
        assert!(realized_stats(&[0.01, 0.01], false).is_err());
        assert!(realized_stats(&[], false).is_err());
    }
}
