//! Rolling monthly rebalancing on a daily return panel.

mod panel;
mod report;

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{frontier_coefficients, frontier_point};
use crate::moments::{compute_sample_moments, gmv_weights, mv_weights, Regularizer, ReturnsPanel, SampleMoments};
use crate::selection::{select, CandidateSet, SelectionCriterion};

pub use panel::{load_panel, panel_csv, read_panel_csv, LoadedPanel, PanelFormat};
pub use report::{realized_stats, BacktestReport, MonthRecord, RealizedStats, WindowRecord};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self { year: date.year(), month: date.month() }
    }

    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_index(i: i64) -> Self {
        Self { year: i.div_euclid(12) as i32, month: (i.rem_euclid(12) + 1) as u32 }
    }

    pub fn add_months(self, k: i64) -> Self {
        Self::from_index(self.index() + k)
    }

    /// Months from `self` through `end`, inclusive.
    pub fn through(self, end: Self) -> Vec<Self> {
        (self.index()..=end.index()).map(Self::from_index).collect()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("expected YYYY-MM, got {s:?}"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Self::new(year, month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Mean-variance with a supplied mean, tuned by the known-mean estimator.
    MvKnownMu,
    /// Mean-variance on the lookback sample mean, tuned by the unknown-mean estimator.
    MvSampleMu,
    /// Global minimum variance, tuned by estimated inverse volatility.
    Gmv,
    /// Frontier portfolio at a target return, tuned by estimated variance.
    Frontier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuSource {
    /// Realized mean of the month being traded. Uses future data.
    OracleMonthAhead,
    /// Mean of the lookback window.
    HistoricalSample,
}

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    pub lookback_months: u32,
    pub test_start: YearMonth,
    pub test_end: YearMonth,
    pub candidates: CandidateSet<f64>,
    pub strategy: Strategy,
    pub mu_source: MuSource,
    pub forward_window_months: u32,
    pub window_stride_months: u32,
    /// Target return for the frontier strategy.
    pub mu0: Option<f64>,
    /// Per-period risk-free rate subtracted from returns.
    pub risk_free: f64,
    /// Scale realized statistics by `sqrt(252)`.
    pub annualize: bool,
}

impl BacktestConfig {
    pub fn new(
        lookback_months: u32,
        test_start: YearMonth,
        test_end: YearMonth,
        candidates: CandidateSet<f64>,
        strategy: Strategy,
        mu_source: MuSource,
    ) -> Self {
        Self {
            lookback_months,
            test_start,
            test_end,
            candidates,
            strategy,
            mu_source,
            forward_window_months: 36,
            window_stride_months: 1,
            mu0: None,
            risk_free: 0.0,
            annualize: false,
        }
    }

    fn validate(&self, panel: &ReturnsPanel<f64>) -> Result<()> {
        if self.lookback_months == 0 || self.forward_window_months == 0 || self.window_stride_months == 0 {
            return Err(Error::InvalidInput("lookback, forward window and stride must be positive".into()));
        }
        if self.test_start > self.test_end {
            return Err(Error::InvalidInput(format!("test range {}..{} is empty", self.test_start, self.test_end)));
        }
        if self.candidates.dim() != panel.p() {
            return Err(crate::error::dims("candidate regularizers", panel.p(), self.candidates.dim()));
        }
        if self.strategy == Strategy::Frontier && self.mu0.is_none() {
            return Err(Error::InvalidInput("frontier strategy needs a target return mu0".into()));
        }
        if self.strategy == Strategy::MvSampleMu && self.mu_source != MuSource::HistoricalSample {
            return Err(Error::InvalidInput("the sample-mean strategy uses the historical mean".into()));
        }
        if !self.risk_free.is_finite() || self.mu0.is_some_and(|m| !m.is_finite()) {
            return Err(Error::NonFinite("backtest configuration"));
        }
        let dates = panel
            .dates()
            .ok_or_else(|| Error::InvalidInput("backtest panel needs dates".into()))?;
        let first = YearMonth::of(dates[0]);
        let last = YearMonth::of(dates[dates.len() - 1]);
        let earliest = self.test_start.add_months(-(self.lookback_months as i64));
        if earliest < first || self.test_end > last {
            return Err(Error::InvalidInput(format!(
                "panel covers {first}..{last} but the backtest needs {earliest}..{}",
                self.test_end
            )));
        }
        Ok(())
    }

    fn criterion(&self) -> SelectionCriterion {
        match self.strategy {
            Strategy::MvKnownMu => SelectionCriterion::MaxSrKnown,
            Strategy::MvSampleMu => SelectionCriterion::MaxSrUnknown,
            Strategy::Gmv => SelectionCriterion::MaxInvVolGmv,
            Strategy::Frontier => SelectionCriterion::MinFrontierVar,
        }
    }
}

/// Label of the strategy row that uses the selected regularizer.
pub const CHOSEN_LABEL: &str = "Q*";

fn rows_in(dates: &[NaiveDate], from: YearMonth, until: YearMonth) -> std::ops::Range<usize> {
    let start = dates.partition_point(|d| YearMonth::of(*d) < from);
    let end = dates.partition_point(|d| YearMonth::of(*d) < until);
    start..end
}

fn portfolio(
    strategy: Strategy,
    moments: &SampleMoments<f64>,
    mu: &DVector<f64>,
    reg: &Regularizer<f64>,
    mu0: Option<f64>,
) -> Result<DVector<f64>> {
    Ok(match strategy {
        Strategy::MvKnownMu | Strategy::MvSampleMu => mv_weights(moments, mu, reg)?.weights,
        Strategy::Gmv => gmv_weights(moments, reg)?.weights,
        Strategy::Frontier => {
            let coeffs = frontier_coefficients(mu, moments, reg)?;
            frontier_point(&coeffs, mu0.expect("validated"), moments, None)?.weights
        }
    })
}

/// Rebalances monthly over the test range and scores forward windows.
pub fn run_backtest(panel: &ReturnsPanel<f64>, config: &BacktestConfig) -> Result<BacktestReport> {
    config.validate(panel)?;
    let dates = panel.dates().expect("validated");
    let returns = panel.returns();
    let rf = config.risk_free;
    let months = config.test_start.through(config.test_end);

    let mut strategies = vec![Regularizer::zero(panel.p()).with_label("Q=0")];
    strategies.extend(config.candidates.candidates().iter().cloned());
    let mut labels: Vec<String> = strategies.iter().map(|r| r.label().to_string()).collect();
    labels.push(CHOSEN_LABEL.to_string());

    let mut month_records = Vec::with_capacity(months.len());
    let mut daily_dates = Vec::new();
    let mut daily: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    let mut warnings = Vec::new();

    for &month in &months {
        let test_rows = rows_in(dates, month, month.add_months(1));
        if test_rows.is_empty() {
            let msg = format!("{month}: no trading days, skipped");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let look = rows_in(dates, month.add_months(-(config.lookback_months as i64)), month);
        if look.len() < 2 {
            return Err(Error::InvalidInput(format!("{month}: only {} lookback rows", look.len())));
        }
        let window = panel.slice_rows(look.start, look.end)?;
        let moments = compute_sample_moments(&window, None, rf)?;
        let mu = match config.mu_source {
            MuSource::HistoricalSample => moments.mu_hat.clone(),
            MuSource::OracleMonthAhead => {
                let block = returns.rows(test_rows.start, test_rows.len());
                block.row_mean().transpose().add_scalar(-rf)
            }
        };

        let mut failures = Vec::new();
        let selection = select(&moments, Some(&mu), &config.candidates, config.criterion(), config.mu0);
        let chosen = match &selection {
            Ok(sel) => Some(sel.chosen.clone()),
            Err(e) => {
                failures.push(format!("{CHOSEN_LABEL}: {e}"));
                None
            }
        };

        let mut weights: Vec<Option<DVector<f64>>> = Vec::with_capacity(labels.len());
        for reg in strategies.iter().chain(chosen.iter()) {
            match portfolio(config.strategy, &moments, &mu, reg, config.mu0) {
                Ok(w) => weights.push(Some(w)),
                Err(e) => {
                    failures.push(format!("{}: {e}", reg.label()));
                    weights.push(None);
                }
            }
        }
        if chosen.is_none() {
            weights.push(None);
        }

        for row in test_rows.clone() {
            daily_dates.push(dates[row]);
            let excess = returns.row(row).transpose().add_scalar(-rf);
            for (k, w) in weights.iter().enumerate() {
                // A portfolio that could not be formed holds cash for the month.
                daily[k].push(w.as_ref().map_or(0.0, |w| w.dot(&excess)));
            }
        }

        let chosen_weights = weights.last().and_then(|w| w.as_ref());
        let q_zero_pseudo = Regularizer::<f64>::zero(panel.p())
            .resolvent(&moments.sigma_hat)
            .map(|r| r.is_pseudo())
            .unwrap_or(true);
        month_records.push(MonthRecord {
            month,
            lookback_rows: look.len(),
            test_rows: test_rows.len(),
            chosen_label: selection.as_ref().ok().map(|s| s.chosen.label().to_string()),
            chosen_index: selection.as_ref().ok().map(|s| s.chosen_index),
            chosen_score: selection
                .as_ref()
                .ok()
                .and_then(|s| s.scores[s.chosen_index].score),
            chosen_weight_sum: chosen_weights.map(|w| w.sum()),
            chosen_weight_l1: chosen_weights.map(|w| w.iter().map(|x| x.abs()).sum()),
            chosen_weight_max_abs: chosen_weights.map(|w| w.amax()),
            q_zero_pseudo_inverse: q_zero_pseudo,
            failures,
        });
    }

    let windows = report::forward_windows(&months, &daily_dates, &daily, &labels, config)?;
    if windows.is_empty() {
        let msg = format!(
            "test range has {} months, fewer than the {}-month forward window",
            months.len(),
            config.forward_window_months
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(BacktestReport {
        strategy: config.strategy,
        mu_source: config.mu_source,
        uses_future_mean: config.mu_source == MuSource::OracleMonthAhead && config.strategy != Strategy::Gmv,
        lookback_months: config.lookback_months,
        forward_window_months: config.forward_window_months,
        window_stride_months: config.window_stride_months,
        test_start: config.test_start,
        test_end: config.test_end,
        annualized: config.annualize,
        strategies: labels,
        months: month_records,
        daily_dates,
        daily_returns: daily,
        windows,
        warnings,
    })
}

/// Sample covariance of rows dated within `[start, end]` (inclusive months),
/// used as the base of a scaled candidate family.
pub fn pre_period_covariance(panel: &ReturnsPanel<f64>, start: YearMonth, end: YearMonth) -> Result<DMatrix<f64>> {
    let dates = panel
        .dates()
        .ok_or_else(|| Error::InvalidInput("panel needs dates".into()))?;
    let rows = rows_in(dates, start, end.add_months(1));
    if rows.len() < 2 {
        return Err(Error::InvalidInput(format!("pre-period {start}..{end} has {} rows", rows.len())));
    }
    let slice = panel.slice_rows(rows.start, rows.end)?;
    Ok(compute_sample_moments(&slice, None, 0.0)?.sigma_hat)
}
