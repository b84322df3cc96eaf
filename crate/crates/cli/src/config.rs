use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sharpe_rmt::backtest::{MuSource, Strategy, YearMonth};
use sharpe_rmt::selection::SelectionCriterion;
use sharpe_rmt::simgen::{McTask, MuKind, QKind, SigmaKind};

/// One declarative file with a section per subcommand.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub simulate: Option<SimulateConfig>,
    pub estimate: Option<EstimateConfig>,
    pub frontier: Option<FrontierConfig>,
    pub select: Option<SelectConfig>,
    pub backtest: Option<BacktestFileConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Relative paths inside the config are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(s) = &mut self.simulate {
            s.custom_base.as_mut().map(fix);
            s.custom_offset.as_mut().map(fix);
        }
        if let Some(e) = &mut self.estimate {
            fix(&mut e.panel);
            e.mu.as_mut().map(fix);
            e.regularizer.resolve(base);
        }
        if let Some(f) = &mut self.frontier {
            fix(&mut f.panel);
            f.mu.as_mut().map(fix);
            f.regularizer.resolve(base);
        }
        if let Some(s) = &mut self.select {
            fix(&mut s.panel);
            s.mu.as_mut().map(fix);
            s.candidates.base.resolve(base);
        }
        if let Some(b) = &mut self.backtest {
            fix(&mut b.panel);
            b.candidates.base.resolve(base);
        }
    }

    pub fn section<T>(section: Option<T>, name: &str) -> Result<T> {
        match section {
            Some(s) => Ok(s),
            None => bail!("config has no [{name}] section"),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub p: usize,
    pub n: usize,
    pub trials: usize,
    pub sigma: SigmaKind,
    pub mu: MuKind,
    pub q: QKind,
    /// Defaults to the grid for the configured `p / n`.
    pub q_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub task: McTask,
    /// Matrix CSV (no header) for the `custom` regularizer family.
    pub custom_base: Option<PathBuf>,
    pub custom_offset: Option<PathBuf>,
}

/// Base matrix of a regularizer.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    Zero,
    Identity,
    /// Matrix CSV without header.
    Matrix { path: PathBuf },
    /// Sample covariance of the panel rows dated in `start..=end`.
    SampleCovariance { start: YearMonth, end: YearMonth },
}

impl BaseSpec {
    fn resolve(&mut self, base: &Path) {
        if let Self::Matrix { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Zero => "0",
            Self::Identity => "I",
            Self::Matrix { .. } => "B",
            Self::SampleCovariance { .. } => "Sigma_pre",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub base: BaseSpec,
    #[serde(default = "one")]
    pub scale: f64,
}

impl RegularizerSpec {
    fn resolve(&mut self, base: &Path) {
        self.base.resolve(base);
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub panel: PathBuf,
    /// Known mean (one value per asset). Without it the unknown-mean estimator runs.
    pub mu: Option<PathBuf>,
    #[serde(default)]
    pub risk_free: f64,
    pub regularizer: RegularizerSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierConfig {
    pub panel: PathBuf,
    /// Expected returns; defaults to the sample mean.
    pub mu: Option<PathBuf>,
    #[serde(default)]
    pub risk_free: f64,
    pub regularizer: RegularizerSpec,
    pub mu0_grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatesSpec {
    pub base: BaseSpec,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub panel: PathBuf,
    pub mu: Option<PathBuf>,
    #[serde(default)]
    pub risk_free: f64,
    pub candidates: CandidatesSpec,
    pub criterion: SelectionCriterion,
    pub mu0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestFileConfig {
    pub panel: PathBuf,
    pub lookback_months: u32,
    pub test_start: YearMonth,
    pub test_end: YearMonth,
    pub strategy: Strategy,
    pub mu_source: MuSource,
    pub candidates: CandidatesSpec,
    #[serde(default = "default_forward")]
    pub forward_window_months: u32,
    #[serde(default = "one_u32")]
    pub window_stride_months: u32,
    pub mu0: Option<f64>,
    #[serde(default)]
    pub risk_free: f64,
    #[serde(default)]
    pub annualize: bool,
}

fn default_forward() -> u32 {
    36
}

fn one_u32() -> u32 {
    1
}
