use std::path::Path;

use anyhow::{bail, Context, Result};
use sharpe_rmt::backtest::{load_panel, pre_period_covariance, PanelFormat};
use sharpe_rmt::{Matrix, Panel, Ridge, Vector};

use crate::config::{BaseSpec, RegularizerSpec};

pub fn panel(path: &Path) -> Result<Panel> {
    let loaded = load_panel(path, PanelFormat::Csv).with_context(|| format!("loading panel {}", path.display()))?;
    for name in &loaded.dropped {
        eprintln!("warning: dropped asset {name} (missing values)");
    }
    Ok(loaded.panel)
}

fn numbers(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|cell| {
                    cell.trim()
                        .parse::<f64>()
                        .with_context(|| format!("line {}: not a number: {cell:?}", i + 1))
                })
                .collect()
        })
        .collect()
}

/// Square matrix from a headerless CSV.
pub fn matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = numbers(&text)?;
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        bail!("{} is not a square matrix", path.display());
    }
    Ok(Matrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// Vector from a file of comma- or newline-separated values.
pub fn vector(path: &Path, expected: usize) -> Result<Vector> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values: Vec<f64> = numbers(&text)?.into_iter().flatten().collect();
    if values.len() != expected {
        bail!("{} has {} values, expected {expected}", path.display(), values.len());
    }
    Ok(Vector::from_vec(values))
}

pub fn base_matrix(spec: &BaseSpec, panel: &Panel) -> Result<Option<Matrix>> {
    let p = panel.p();
    Ok(match spec {
        BaseSpec::Zero => None,
        BaseSpec::Identity => Some(Matrix::identity(p, p)),
        BaseSpec::Matrix { path } => {
            let m = matrix(path)?;
            if m.nrows() != p {
                bail!("regularizer matrix is {}x{}, panel has {p} assets", m.nrows(), m.ncols());
            }
            Some(m)
        }
        BaseSpec::SampleCovariance { start, end } => Some(pre_period_covariance(panel, *start, *end)?),
    })
}

pub fn regularizer(spec: &RegularizerSpec, panel: &Panel) -> Result<Ridge> {
    match base_matrix(&spec.base, panel)? {
        None => Ok(Ridge::zero(panel.p())),
        Some(base) => Ok(Ridge::scaled(&base, spec.scale, spec.base.label())?),
    }
}
