//! Seeded property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharpe_rmt::backtest::{realized_stats, run_backtest, BacktestConfig, MuSource, Strategy, YearMonth};
use sharpe_rmt::frontier::frontier_coefficients;
use sharpe_rmt::moments::{compute_sample_moments, gmv_weights, mv_weights, Regularizer, ReturnsPanel};
use sharpe_rmt::rmt::{oracle_fixed_points, plugin_stats};
use sharpe_rmt::selection::CandidateSet;
use sharpe_rmt::simgen::{sample_returns, Design, DesignSpec, MuKind, QKind, SigmaKind};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let normal = rand_distr::StandardNormal;
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(normal))
}

/// `G G' / k + eps I`, positive definite for `eps > 0`.
pub fn random_spd(rng: &mut impl Rng, p: usize, eps: f64) -> DMatrix<f64> {
    let k = p + 3;
    let g = gaussian(rng, p, k);
    &g * g.transpose() / k as f64 + DMatrix::identity(p, p) * eps
}

pub fn random_psd(rng: &mut impl Rng, p: usize, rank: usize) -> DMatrix<f64> {
    let g = gaussian(rng, p, rank);
    &g * g.transpose() / rank.max(1) as f64
}

/// Sample moments of a random `n x p` panel with a sample mean.
pub fn random_moments(rng: &mut impl Rng, n: usize, p: usize) -> sharpe_rmt::Moments {
    let x = gaussian(rng, n, p);
    let panel = ReturnsPanel::from_matrix(x).unwrap();
    compute_sample_moments(&panel, None, 0.0).unwrap()
}

pub fn random_vector(rng: &mut impl Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))
}

pub fn mv_gmv_normalization(seed: u64) -> Check {
    let mut r = rng(seed);
    let (n, p) = (r.random_range(10..40), r.random_range(2..25));
    let m = random_moments(&mut r, n, p);
    let reg = Regularizer::new(random_psd(&mut r, p, p) + DMatrix::identity(p, p) * 0.1, "Q").unwrap();
    let mu = random_vector(&mut r, p);
    let w = mv_weights(&m, &mu, &reg).map_err(|e| e.to_string())?;
    ensure!((w.l1_norm() - 1.0).abs() < 1e-12, "mv L1 norm {}", w.l1_norm());
    let scale = r.random_range(0.01..100.0);
    let ws = mv_weights(&m, &(&mu * scale), &reg).map_err(|e| e.to_string())?;
    ensure!((&ws.weights - &w.weights).amax() < 1e-12, "mv direction changed under scaling");
    let g = gmv_weights(&m, &reg).map_err(|e| e.to_string())?;
    ensure!((g.sum() - 1.0).abs() < 1e-10, "gmv sum {}", g.sum());
    Ok(())
}

pub fn frontier_d_nonnegative(seed: u64) -> Check {
    let mut r = rng(seed);
    let (n, p) = (r.random_range(10..40), r.random_range(2..25));
    let m = random_moments(&mut r, n, p);
    let reg = Regularizer::identity(p, r.random_range(0.05..5.0)).unwrap();
    let rvec = random_vector(&mut r, p);
    match frontier_coefficients(&rvec, &m, &reg) {
        Ok(k) => {
            ensure!(k.d >= 0.0, "D = {} < 0", k.d);
            ensure!(k.b * k.c >= k.a * k.a, "B C < A^2");
        }
        Err(sharpe_rmt::Error::Degenerate(_)) => {}
        Err(e) => return Err(e.to_string()),
    }
    Ok(())
}

pub fn f2_below_f1(seed: u64) -> Check {
    let mut r = rng(seed);
    let (n, p) = (r.random_range(5..40), r.random_range(2..30));
    let m = random_moments(&mut r, n, p);
    let rank = r.random_range(1..=p);
    let q = random_psd(&mut r, p, rank) + DMatrix::identity(p, p) * 1e-3;
    let reg = Regularizer::new(q, "Q").unwrap();
    let s = plugin_stats(&m, &reg).map_err(|e| e.to_string())?;
    ensure!(s.f2 <= s.f1 + 1e-12, "f2 {} > f1 {}", s.f2, s.f1);
    ensure!(s.f1 <= 1.0 + 1e-12 && s.f2 >= -1e-12, "f out of [0, 1]: {s:?}");
    Ok(())
}

pub fn oracle_bounds(seed: u64) -> Check {
    let mut r = rng(seed);
    let p = r.random_range(2..30);
    let sigma = random_spd(&mut r, p, 0.05);
    let reg = Regularizer::new(random_spd(&mut r, p, 0.01), "Q").unwrap();
    let c = r.random_range(0.05..3.0);
    let s = oracle_fixed_points(&sigma, &reg, c).map_err(|e| e.to_string())?;
    ensure!(s.s0 > 0.0, "s0 = {}", s.s0);
    ensure!(s.s1_sigma < 0.0 && s.s1_sigma >= -s.s0 * (1.0 + s.s0).powi(2), "s1_sigma = {} with s0 = {}", s.s1_sigma, s.s0);
    ensure!(s.s1_q < 0.0 && s.s1_q >= -s.s0, "s1_q = {} with s0 = {}", s.s1_q, s.s0);
    let qinv = reg.matrix().clone().try_inverse().unwrap();
    let upper = c / p as f64 * (qinv * &sigma).trace();
    ensure!(s.s0 <= upper * (1.0 + 1e-10), "s0 = {} above (c/p) tr Q^-1 Sigma = {upper}", s.s0);
    Ok(())
}

pub fn generator_determinism(seed: u64) -> Check {
    let kinds = [SigmaKind::Sigma0, SigmaKind::Sigma1, SigmaKind::Sigma2, SigmaKind::Sigma3];
    let mus = [MuKind::Mu0, MuKind::Mu1, MuKind::Mu2, MuKind::Mu3, MuKind::Mu4];
    let qs = [QKind::Q0Scaled, QKind::Q1, QKind::Q2, QKind::Q3, QKind::IdentityScaled, QKind::LambdaScaled];
    let pick = seed as usize;
    let spec = DesignSpec {
        p: 20,
        sigma: kinds[pick % 4],
        mu: mus[(pick / 4) % 5],
        q: qs[(pick / 20) % 6],
        q_grid: vec![0.5, 1.0],
        seed,
        custom: None,
    };
    let a = Design::generate(&spec).map_err(|e| e.to_string())?;
    let b = Design::generate(&spec).map_err(|e| e.to_string())?;
    ensure!(a.sigma == b.sigma && a.mu == b.mu && a.loadings == b.loadings, "design differs for seed {seed}");
    ensure!(
        a.regularizer(1.0).unwrap().matrix() == b.regularizer(1.0).unwrap().matrix(),
        "regularizer differs for seed {seed}"
    );
    let x = sample_returns(&a.mu, &a.sigma, 30, seed).map_err(|e| e.to_string())?;
    let y = sample_returns(&b.mu, &b.sigma, 30, seed).map_err(|e| e.to_string())?;
    ensure!(x.returns() == y.returns(), "samples differ for seed {seed}");
    Ok(())
}

/// Weekday dates starting on `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

/// Synthetic dated panel: `days x assets` Gaussian returns with a one-factor covariance.
pub fn synthetic_panel(days: usize, assets: usize, seed: u64) -> ReturnsPanel<f64> {
    let mut r = rng(seed ^ 0x5eed);
    let beta = DVector::from_fn(assets, |_, _| r.random_range(0.5..1.5));
    let idio = DVector::from_fn(assets, |_, _| r.random_range(1e-5..4e-4));
    let sigma = &beta * beta.transpose() * 1e-4 + DMatrix::from_diagonal(&idio);
    let mu = DVector::from_fn(assets, |_, _| r.random_range(-2e-4..8e-4));
    let x = sample_returns(&mu, &sigma, days, seed).unwrap();
    let dates = business_days(NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(), days);
    let names = (0..assets).map(|j| format!("A{j:02}")).collect();
    ReturnsPanel::new(x.returns().clone(), Some(dates), Some(names)).unwrap()
}

pub fn small_backtest_config(panel: &ReturnsPanel<f64>, strategy: Strategy, source: MuSource) -> BacktestConfig {
    let grid = [0.5, 1.0, 2.0].map(|q| q * 1e-4);
    let set = CandidateSet::scaled_base(&DMatrix::identity(panel.p(), panel.p()), &grid, "I").unwrap();
    let mut cfg = BacktestConfig::new(
        3,
        YearMonth::new(2015, 5).unwrap(),
        YearMonth::new(2015, 12).unwrap(),
        set,
        strategy,
        source,
    );
    cfg.forward_window_months = 3;
    cfg.mu0 = Some(5e-4);
    cfg
}

/// Changing returns on or after the first day of month `m` leaves every
/// earlier month's daily returns unchanged. With the oracle mean the traded
/// month itself is also allowed to change, and the report must say so.
pub fn backtest_no_look_ahead(seed: u64) -> Check {
    let panel = synthetic_panel(260, 8, seed);
    let strategies = [Strategy::MvKnownMu, Strategy::MvSampleMu, Strategy::Gmv, Strategy::Frontier];
    let strategy = strategies[seed as usize % 4];
    let source = if strategy == Strategy::MvSampleMu || seed % 2 == 0 {
        MuSource::HistoricalSample
    } else {
        MuSource::OracleMonthAhead
    };
    let cfg = small_backtest_config(&panel, strategy, source);
    let base = run_backtest(&panel, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        base.uses_future_mean == (source == MuSource::OracleMonthAhead && strategy != Strategy::Gmv),
        "look-ahead flag not surfaced"
    );

    let cut_month = YearMonth::new(2015, 9).unwrap();
    let dates = panel.dates().unwrap();
    let cut = dates.iter().position(|d| YearMonth::of(*d) >= cut_month).unwrap();
    let mut altered = panel.returns().clone();
    let mut r = rng(seed.wrapping_add(99));
    for i in cut..altered.nrows() {
        for j in 0..altered.ncols() {
            altered[(i, j)] += r.random_range(-0.05..0.05);
        }
    }
    let changed = ReturnsPanel::new(altered, Some(dates.to_vec()), Some(panel.assets().to_vec())).unwrap();
    let other = run_backtest(&changed, &cfg).map_err(|e| e.to_string())?;
    let before = base.daily_dates.iter().take_while(|d| YearMonth::of(**d) < cut_month).count();
    for (k, (a, b)) in base.daily_returns.iter().zip(&other.daily_returns).enumerate() {
        ensure!(a[..before] == b[..before], "strategy {} changed before {cut_month}", base.strategies[k]);
    }
    // Weights for the cut month are built from earlier rows only, unless the
    // flagged oracle mean is in use.
    if !base.uses_future_mean {
        let month_rows = base.daily_dates.iter().filter(|d| YearMonth::of(**d) == cut_month).count();
        let before_idx = base.months.iter().position(|m| m.month == cut_month).unwrap();
        ensure!(
            base.months[before_idx].chosen_label == other.months[before_idx].chosen_label,
            "selection for {cut_month} used rows from {cut_month}"
        );
        ensure!(month_rows > 0, "no rows in {cut_month}");
    }
    Ok(())
}

/// Realized statistics recomputed from the stored daily series match the
/// reported summaries and windows exactly.
pub fn backtest_recompute(seed: u64) -> Check {
    let panel = synthetic_panel(260, 8, seed);
    let cfg = small_backtest_config(&panel, Strategy::Gmv, MuSource::HistoricalSample);
    let report = run_backtest(&panel, &cfg).map_err(|e| e.to_string())?;
    let k = report.strategies.len();
    ensure!(k == cfg.candidates.len() + 2, "{k} strategy rows for {} candidates", cfg.candidates.len());
    for summary in report.summary() {
        let sharpes: Vec<f64> =
            report.windows.iter().filter(|w| w.strategy == summary.strategy).filter_map(|w| w.sharpe).collect();
        let mean = (!sharpes.is_empty()).then(|| sharpes.iter().sum::<f64>() / sharpes.len() as f64);
        ensure!(summary.mean_sharpe == mean, "summary mismatch for {}", summary.strategy);
    }
    for w in &report.windows {
        let s = report.strategies.iter().position(|l| *l == w.strategy).unwrap();
        let idx: Vec<usize> = (0..report.daily_dates.len())
            .filter(|&i| {
                let m = YearMonth::of(report.daily_dates[i]);
                m >= w.start && m <= w.end
            })
            .collect();
        let series: Vec<f64> = idx.iter().map(|&i| report.daily_returns[s][i]).collect();
        ensure!(series.len() == w.days, "window {}..{} has {} days, reported {}", w.start, w.end, series.len(), w.days);
        let stats = realized_stats(&series, cfg.annualize).map_err(|e| e.to_string())?;
        ensure!(w.sharpe == Some(stats.sharpe) && w.vol == Some(stats.vol), "window stats mismatch for {}", w.strategy);
    }
    let per_window: std::collections::BTreeMap<(YearMonth, YearMonth), usize> =
        report.windows.iter().fold(Default::default(), |mut acc, w| {
            *acc.entry((w.start, w.end)).or_default() += 1;
            acc
        });
    ensure!(per_window.values().all(|&c| c == k), "window without {k} strategy rows");
    Ok(())
}
