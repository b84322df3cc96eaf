use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::Design;
use super::sampling::{rng_stream, GaussianSampler};
use super::DesignSpec;
use crate::error::{Error, Result};
use crate::frontier::{frontier_coefficients, frontier_point};
use crate::io::{csv_string, fmt_f64, fmt_opt};
use crate::linalg::quad_form;
use crate::moments::{compute_sample_moments, ReturnsPanel};
use crate::sharpe::{sr_hat_known_mu, sr_hat_unknown_mu, sr_max, sr_oracle, sr_oracle_unknown_mu};
use crate::spectral::{FamilyBase, ScaledFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum McTask {
    /// True and estimated Sharpe ratio over the regularization grid, known mean.
    SharpeKnown,
    /// Same with the sample mean in place of the population mean.
    SharpeUnknown,
    /// True and estimated frontier volatility over target returns at a fixed scale.
    Frontier { q: f64, mu0_grid: Vec<f64> },
}

impl McTask {
    fn x_label(&self) -> &'static str {
        match self {
            Self::Frontier { .. } => "mu0",
            _ => "q",
        }
    }
}

/// Values of one trial along the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub stream: u64,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub x: f64,
    pub mean_true: f64,
    pub mean_hat: f64,
    pub sd_true: f64,
    pub sd_hat: f64,
    /// Sharpe tasks: `(hat - true)^2`. Frontier: `(hat^2 - true^2)^2` on variances.
    pub mse_diff: f64,
    /// Sharpe tasks: `(true / hat - 1)^2`. Frontier: `(hat^2 / true^2 - 1)^2`.
    pub mse_ratio: f64,
    /// Frontier only: `(mu0 / hat - mu0 / true)^2`.
    pub mse_sharpe_diff: Option<f64>,
    pub mean_abs_diff: f64,
    /// `|hat / true - 1|`.
    pub mean_abs_rel_err: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxSummary {
    pub index_true: usize,
    pub index_hat: usize,
    pub x_true: f64,
    pub x_hat: f64,
    /// Mean over trials of `|argmax true - argmax hat|` in grid units.
    pub mean_trial_gap: f64,
    pub max_trial_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub design: DesignSpec,
    pub n: usize,
    pub trials: usize,
    pub task: McTask,
    pub x_label: String,
    pub sr_max: f64,
    pub cells: Vec<CellSummary>,
    /// Grid maximizers of the mean curves; Sharpe tasks only.
    pub argmax: Option<ArgmaxSummary>,
    pub records: Vec<TrialRecord>,
}

pub fn run_monte_carlo(spec: &DesignSpec, n: usize, trials: usize, task: &McTask) -> Result<MonteCarloReport> {
    let streams: Vec<u64> = (0..trials as u64).collect();
    run_monte_carlo_streams(spec, n, &streams, task)
}

/// Runs one trial per stream id. Aggregates do not depend on stream order.
pub fn run_monte_carlo_streams(spec: &DesignSpec, n: usize, streams: &[u64], task: &McTask) -> Result<MonteCarloReport> {
    if streams.is_empty() {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2 observations, got {n}")));
    }
    if let McTask::Frontier { q, mu0_grid } = task {
        if mu0_grid.is_empty() || mu0_grid.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("target-return grid must be non-empty and finite".into()));
        }
        if !q.is_finite() || *q < 0.0 {
            return Err(Error::InvalidInput(format!("invalid frontier scale {q}")));
        }
    }
    let design = Design::generate(spec)?;
    let sampler = GaussianSampler::new(&design.mu, &design.sigma)?;
    let prepared = match (&design.family.base, task) {
        (Some(base), McTask::SharpeKnown | McTask::SharpeUnknown) => {
            Some(FamilyBase::new(base, design.family.offset.as_ref())?)
        }
        _ => None,
    };
    let runner = TrialRunner { design: &design, sampler: &sampler, family: prepared.as_ref(), n, task };
    let records = streams
        .par_iter()
        .map(|&s| runner.run(s))
        .collect::<Result<Vec<_>>>()?;

    let xs: Vec<f64> = match task {
        McTask::Frontier { mu0_grid, .. } => mu0_grid.clone(),
        _ => spec.q_grid.clone(),
    };
    let frontier = matches!(task, McTask::Frontier { .. });
    let cells = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| summarize(&records, k, x, frontier))
        .collect::<Vec<_>>();
    let argmax = (!frontier).then(|| argmax_summary(&cells, &records));
    Ok(MonteCarloReport {
        design: spec.clone(),
        n,
        trials: streams.len(),
        task: task.clone(),
        x_label: task.x_label().into(),
        sr_max: sr_max(&design.mu, &design.sigma).unwrap_or(f64::NAN),
        cells,
        argmax,
        records,
    })
}

struct TrialRunner<'a> {
    design: &'a Design,
    sampler: &'a GaussianSampler,
    family: Option<&'a FamilyBase<f64>>,
    n: usize,
    task: &'a McTask,
}

impl TrialRunner<'_> {
    fn run(&self, stream: u64) -> Result<TrialRecord> {
        let mut rng = rng_stream(self.design.spec.seed, stream);
        let (truth, estimate) = match self.task {
            McTask::SharpeKnown => {
                let x = self.sampler.noise(self.n, &mut rng);
                self.sharpe_curve(x, &self.design.mu, None)?
            }
            McTask::SharpeUnknown => {
                let r = self.sampler.sample(self.n, &mut rng);
                let mu_hat = r.row_mean().transpose();
                let mut x = r;
                for mut row in x.row_iter_mut() {
                    row -= mu_hat.transpose();
                }
                self.sharpe_curve(x, &mu_hat, Some(&self.design.mu))?
            }
            McTask::Frontier { q, mu0_grid } => {
                let panel = ReturnsPanel::from_matrix(self.sampler.sample(self.n, &mut rng))?;
                self.frontier_curve(&panel, *q, mu0_grid)?
            }
        };
        Ok(TrialRecord { stream, truth, estimate })
    }

    /// `direction` is the mean fed to the portfolio; `population_mean` is set
    /// when it differs from the mean the returns are scored against.
    fn sharpe_curve(
        &self,
        x: DMatrix<f64>,
        direction: &DVector<f64>,
        population_mean: Option<&DVector<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let grid = &self.design.spec.q_grid;
        let sigma = &self.design.sigma;
        let Some(family) = self.family else {
            return self.sharpe_curve_dense(x, direction, population_mean);
        };
        let fast = ScaledFamily::with_base(&x, family)?;
        let n = self.n as f64;
        let mut truth = Vec::with_capacity(grid.len());
        let mut estimate = Vec::with_capacity(grid.len());
        for &q in grid {
            let b = fast.solve(q, direction)?;
            let t1 = direction.dot(&b);
            let scored = population_mean.map_or(t1, |m| m.dot(&b));
            truth.push(scored / quad_form(sigma, &b).max(0.0).sqrt());
            let correction = fast.correction(q)?;
            let bias = match population_mean {
                Some(_) => {
                    let t = fast.trace_sigma_hat(q)?;
                    t / (n - t)
                }
                None => 0.0,
            };
            estimate.push((t1 - bias) * correction.abs() / fast.sigma_hat_quad(&b).max(0.0).sqrt());
        }
        Ok((truth, estimate))
    }

    fn sharpe_curve_dense(
        &self,
        x: DMatrix<f64>,
        direction: &DVector<f64>,
        population_mean: Option<&DVector<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let reg = self.design.regularizer(0.0)?;
        let moments = match population_mean {
            None => {
                let mut r = x;
                for mut row in r.row_iter_mut() {
                    row += direction.transpose();
                }
                compute_sample_moments(&ReturnsPanel::from_matrix(r)?, Some(direction), 0.0)?
            }
            Some(_) => {
                // x is already centered at the sample mean; shifting it back
                // leaves the sample mean unchanged.
                let mut r = x;
                for mut row in r.row_iter_mut() {
                    row += direction.transpose();
                }
                compute_sample_moments(&ReturnsPanel::from_matrix(r)?, None, 0.0)?
            }
        };
        let sigma = &self.design.sigma;
        let (t, h) = match population_mean {
            None => (
                sr_oracle(direction, &moments, &reg, sigma)?.value,
                sr_hat_known_mu(direction, &moments, &reg)?.value,
            ),
            Some(mu) => (
                sr_oracle_unknown_mu(&moments, &reg, mu, sigma)?.value,
                sr_hat_unknown_mu(&moments, &reg)?.value,
            ),
        };
        let k = self.design.spec.q_grid.len();
        Ok((vec![t; k], vec![h; k]))
    }

    fn frontier_curve(&self, panel: &ReturnsPanel<f64>, q: f64, mu0_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mu = &self.design.mu;
        let moments = compute_sample_moments(panel, Some(mu), 0.0)?;
        let reg = self.design.regularizer(q)?;
        let coeffs = frontier_coefficients(mu, &moments, &reg)?;
        let mut truth = Vec::with_capacity(mu0_grid.len());
        let mut estimate = Vec::with_capacity(mu0_grid.len());
        for &mu0 in mu0_grid {
            let point = frontier_point(&coeffs, mu0, &moments, Some(&self.design.sigma))?;
            truth.push(point.sigma_true().unwrap_or(f64::NAN));
            estimate.push(point.sigma_hat());
        }
        Ok((truth, estimate))
    }
}

/// Mean of values summed in sorted order, so the result ignores input order.
fn mean_sorted(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(records: &[TrialRecord], k: usize, x: f64, frontier: bool) -> CellSummary {
    let col = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
        mean_sorted(records.iter().map(|r| f(r.truth[k], r.estimate[k])).collect())
    };
    let mean_true = col(&|t, _| t);
    let mean_hat = col(&|_, h| h);
    let var_true = col(&|t, _| (t - mean_true).powi(2));
    let var_hat = col(&|_, h| (h - mean_hat).powi(2));
    let (mse_diff, mse_ratio, mse_sharpe_diff) = if frontier {
        (
            col(&|t, h| (h * h - t * t).powi(2)),
            col(&|t, h| (h * h / (t * t) - 1.0).powi(2)),
            Some(col(&|t, h| (x / h - x / t).powi(2))),
        )
    } else {
        (col(&|t, h| (h - t).powi(2)), col(&|t, h| (t / h - 1.0).powi(2)), None)
    };
    CellSummary {
        x,
        mean_true,
        mean_hat,
        sd_true: var_true.sqrt(),
        sd_hat: var_hat.sqrt(),
        mse_diff,
        mse_ratio,
        mse_sharpe_diff,
        mean_abs_diff: col(&|t, h| (h - t).abs()),
        mean_abs_rel_err: col(&|t, h| (h / t - 1.0).abs()),
        trials: records.len(),
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmax_summary(cells: &[CellSummary], records: &[TrialRecord]) -> ArgmaxSummary {
    let index_true = argmax(cells.iter().map(|c| c.mean_true));
    let index_hat = argmax(cells.iter().map(|c| c.mean_hat));
    let gaps: Vec<f64> = records
        .iter()
        .map(|r| {
            let t = argmax(r.truth.iter().copied());
            let h = argmax(r.estimate.iter().copied());
            t.abs_diff(h) as f64
        })
        .collect();
    let max_trial_gap = gaps.iter().copied().fold(0.0, f64::max);
    ArgmaxSummary {
        index_true,
        index_hat,
        x_true: cells[index_true].x,
        x_hat: cells[index_hat].x,
        mean_trial_gap: mean_sorted(gaps),
        max_trial_gap,
    }
}

const CURVE_HEADER: [&str; 11] = [
    "x",
    "mean_true",
    "mean_hat",
    "sd_true",
    "sd_hat",
    "mse_diff",
    "mse_ratio",
    "mse_sharpe_diff",
    "mean_abs_diff",
    "mean_abs_rel_err",
    "trials",
];

impl MonteCarloReport {
    /// One row per grid point.
    pub fn curve_csv(&self) -> Result<String> {
        csv_string(
            &CURVE_HEADER,
            self.cells.iter().map(|c| {
                vec![
                    fmt_f64(c.x),
                    fmt_f64(c.mean_true),
                    fmt_f64(c.mean_hat),
                    fmt_f64(c.sd_true),
                    fmt_f64(c.sd_hat),
                    fmt_f64(c.mse_diff),
                    fmt_f64(c.mse_ratio),
                    fmt_opt(c.mse_sharpe_diff),
                    fmt_f64(c.mean_abs_diff),
                    fmt_f64(c.mean_abs_rel_err),
                    c.trials.to_string(),
                ]
            }),
        )
    }

    /// One row per (cell, statistic).
    pub fn long_csv(&self) -> Result<String> {
        let mut rows = Vec::new();
        for (k, c) in self.cells.iter().enumerate() {
            let mut push = |name: &str, v: f64| rows.push(vec![k.to_string(), fmt_f64(c.x), name.to_string(), fmt_f64(v)]);
            push("mean_true", c.mean_true);
            push("mean_hat", c.mean_hat);
            push("sd_true", c.sd_true);
            push("sd_hat", c.sd_hat);
            push("mse_diff", c.mse_diff);
            push("mse_ratio", c.mse_ratio);
            if let Some(v) = c.mse_sharpe_diff {
                push("mse_sharpe_diff", v);
            }
            push("mean_abs_diff", c.mean_abs_diff);
            push("mean_abs_rel_err", c.mean_abs_rel_err);
        }
        csv_string(&["cell", self.x_label.as_str(), "statistic", "value"], rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `curve.csv`, `report_long.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let files = [
            ("curve.csv", self.curve_csv()?),
            ("report_long.csv", self.long_csv()?),
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
