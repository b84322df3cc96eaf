use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use sharpe_rmt::backtest::{run_backtest, BacktestConfig};
use sharpe_rmt::frontier::{frontier_coefficients, frontier_point};
use sharpe_rmt::io::{csv_string, fmt_f64, fmt_opt};
use sharpe_rmt::moments::{compute_sample_moments, MeanSource};
use sharpe_rmt::selection::{select, CandidateSet};
use sharpe_rmt::sharpe::{sr_hat_known_mu, sr_hat_unknown_mu};
use sharpe_rmt::simgen::{default_q_grid, run_monte_carlo, CustomFamily, DesignSpec, QKind};

use crate::config::{BaseSpec, CandidatesSpec, ConfigFile};
use crate::output::Outputs;
use crate::{inputs, Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().context("--config is required")?;
    let cfg = ConfigFile::load(path)?;
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let mut out = Outputs::new(&cli.out)?;
    let (name, echo) = match cli.command {
        Command::Simulate => ("simulate", simulate(cli, ConfigFile::section(cfg.simulate, "simulate")?, &mut out)?),
        Command::Estimate => ("estimate", estimate(ConfigFile::section(cfg.estimate, "estimate")?, &mut out)?),
        Command::Frontier => ("frontier", frontier(ConfigFile::section(cfg.frontier, "frontier")?, &mut out)?),
        Command::Select => ("select", select_cmd(ConfigFile::section(cfg.select, "select")?, &mut out)?),
        Command::Backtest => ("backtest", backtest(ConfigFile::section(cfg.backtest, "backtest")?, &mut out)?),
    };
    let manifest = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": echo.get("seed").and_then(|s| s.as_u64()).or(cli.seed),
        "threads": rayon::current_num_threads(),
        "config_path": path,
        "config": echo,
        "started_at": started.to_rfc3339(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "outputs": out.names(),
    });
    out.write("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    out.commit();
    Ok(())
}

fn echo<T: Serialize>(section: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(section)?)
}

fn simulate(cli: &Cli, cfg: crate::config::SimulateConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let seed = cli.seed.or(cfg.seed).context("simulate needs a seed (config `seed` or --seed)")?;
    let q_grid = cfg.q_grid.clone().unwrap_or_else(|| default_q_grid(cfg.p as f64 / cfg.n as f64));
    let custom = match (&cfg.custom_base, cfg.q) {
        (Some(path), QKind::Custom) => Some(CustomFamily {
            base: inputs::matrix(path)?,
            offset: cfg.custom_offset.as_deref().map(inputs::matrix).transpose()?,
        }),
        (None, QKind::Custom) => bail!("q = \"custom\" needs custom_base"),
        (Some(_), _) => bail!("custom_base is only used with q = \"custom\""),
        (None, _) => None,
    };
    let spec = DesignSpec { p: cfg.p, sigma: cfg.sigma, mu: cfg.mu, q: cfg.q, q_grid, seed, custom };
    let report = run_monte_carlo(&spec, cfg.n, cfg.trials, &cfg.task)?;
    out.write("curve.csv", &report.curve_csv()?)?;
    out.write("report_long.csv", &report.long_csv()?)?;
    out.write("report.json", &report.to_json()?)?;
    let mut echo = echo(&cfg)?;
    echo["seed"] = json!(seed);
    Ok(echo)
}

fn estimate(cfg: crate::config::EstimateConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let panel = inputs::panel(&cfg.panel)?;
    let reg = inputs::regularizer(&cfg.regularizer, &panel)?;
    let mu = cfg.mu.as_deref().map(|p| inputs::vector(p, panel.p())).transpose()?;
    let moments = compute_sample_moments(&panel, mu.as_ref(), cfg.risk_free)?;
    let est = match &mu {
        Some(mu) => sr_hat_known_mu(mu, &moments, &reg)?,
        None => sr_hat_unknown_mu(&moments, &reg)?,
    };
    let pseudo = reg.resolvent(&moments.sigma_hat)?.is_pseudo();
    let t1 = est.numerator + est.bias;
    let t2_hat = est.denominator * est.denominator;
    let rows: Vec<(&str, String)> = vec![
        ("mode", if moments.mean_source == MeanSource::Known { "known_mean" } else { "unknown_mean" }.into()),
        ("regularizer", reg.label().to_string()),
        ("n", moments.n.to_string()),
        ("p", moments.p.to_string()),
        ("c", fmt_f64(moments.c())),
        ("sharpe_hat", fmt_f64(est.value)),
        ("t1", fmt_f64(t1)),
        ("bias", fmt_f64(est.bias)),
        ("numerator", fmt_f64(est.numerator)),
        ("t2_hat", fmt_f64(t2_hat)),
        ("denominator", fmt_f64(est.denominator)),
        ("correction", fmt_f64(est.correction)),
        ("pseudo_inverse", pseudo.to_string()),
    ];
    for (k, v) in &rows {
        println!("{k:>14} {v}");
    }
    out.write(
        "estimate.csv",
        &csv_string(&["quantity", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), v.clone()]))?,
    )?;
    out.write("estimate.json", &serde_json::to_string_pretty(&est)?)?;
    echo(&cfg)
}

fn frontier(cfg: crate::config::FrontierConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    if cfg.mu0_grid.is_empty() {
        bail!("mu0_grid is empty");
    }
    let panel = inputs::panel(&cfg.panel)?;
    let reg = inputs::regularizer(&cfg.regularizer, &panel)?;
    let moments = compute_sample_moments(&panel, None, cfg.risk_free)?;
    let r = match &cfg.mu {
        Some(p) => inputs::vector(p, panel.p())?,
        None => moments.mu_hat.clone(),
    };
    let coeffs = frontier_coefficients(&r, &moments, &reg)?;
    let mut rows = Vec::with_capacity(cfg.mu0_grid.len());
    for &mu0 in &cfg.mu0_grid {
        let pt = frontier_point(&coeffs, mu0, &moments, None)?;
        let in_sample = pt.sigma_hat_sq * coeffs.correction * coeffs.correction;
        rows.push(vec![
            fmt_f64(mu0),
            fmt_f64(pt.sigma_hat()),
            fmt_f64(pt.sigma_hat_sq),
            fmt_f64(in_sample),
            fmt_f64(pt.weights.sum()),
            fmt_f64(pt.weights.iter().map(|w| w.abs()).sum()),
        ]);
    }
    out.write(
        "frontier.csv",
        &csv_string(
            &["mu0", "sigma_hat", "sigma_hat_sq", "in_sample_var", "weight_sum", "weight_l1"],
            rows,
        )?,
    )?;
    let summary = csv_string(
        &["quantity", "value"],
        [("a", coeffs.a), ("b", coeffs.b), ("c", coeffs.c), ("d", coeffs.d), ("correction", coeffs.correction)]
            .into_iter()
            .map(|(k, v)| vec![k.to_string(), fmt_f64(v)]),
    )?;
    out.write("coefficients.csv", &summary)?;
    echo(&cfg)
}

fn candidate_set(spec: &CandidatesSpec, panel: &sharpe_rmt::Panel) -> Result<CandidateSet<f64>> {
    if let BaseSpec::Zero = spec.base {
        bail!("candidate base cannot be zero");
    }
    let base = inputs::base_matrix(&spec.base, panel)?.expect("non-zero base");
    Ok(CandidateSet::scaled_base(&base, &spec.grid, spec.base.label())?)
}

fn select_cmd(cfg: crate::config::SelectConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let panel = inputs::panel(&cfg.panel)?;
    let mu = cfg.mu.as_deref().map(|p| inputs::vector(p, panel.p())).transpose()?;
    let moments = compute_sample_moments(&panel, None, cfg.risk_free)?;
    let set = candidate_set(&cfg.candidates, &panel)?;
    let direction = mu.unwrap_or_else(|| moments.mu_hat.clone());
    let res = select(&moments, Some(&direction), &set, cfg.criterion, cfg.mu0)?;
    println!("chosen {} (index {})", res.chosen.label(), res.chosen_index);
    out.write("scores.csv", &res.score_table_csv()?)?;
    let summary = json!({
        "criterion": res.criterion,
        "chosen_index": res.chosen_index,
        "chosen_label": res.chosen.label(),
        "chosen_scale": res.chosen.scale(),
        "chosen_score": fmt_opt(res.scores[res.chosen_index].score),
    });
    out.write("selection.json", &serde_json::to_string_pretty(&summary)?)?;
    echo(&cfg)
}

fn backtest(cfg: crate::config::BacktestFileConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let panel = inputs::panel(&cfg.panel)?;
    let set = candidate_set(&cfg.candidates, &panel)?;
    let mut bt = BacktestConfig::new(cfg.lookback_months, cfg.test_start, cfg.test_end, set, cfg.strategy, cfg.mu_source);
    bt.forward_window_months = cfg.forward_window_months;
    bt.window_stride_months = cfg.window_stride_months;
    bt.mu0 = cfg.mu0;
    bt.risk_free = cfg.risk_free;
    bt.annualize = cfg.annualize;
    let report = run_backtest(&panel, &bt)?;
    if report.uses_future_mean {
        eprintln!("note: portfolio means use the realized mean of each traded month (look-ahead)");
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    out.write("months.csv", &report.months_csv()?)?;
    out.write("daily.csv", &report.daily_csv()?)?;
    out.write("windows.csv", &report.windows_csv()?)?;
    out.write("summary.csv", &report.summary_csv()?)?;
    out.write("report.json", &report.to_json()?)?;
    echo(&cfg)
}
