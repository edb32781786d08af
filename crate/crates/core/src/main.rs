use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smccm::config::{parse_config, ExperimentConfig};
use smccm::harness::{compare_analytical, predict, run_ensemble, segment_mean, EnsembleResult};
use smccm::output::{emit_csv, emit_plot, PlotKind, Series};
use smccm::{Error, Result};

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "SMCCM_OUT_DIR";

#[derive(Parser)]
#[command(name = "smccm", version, about = "Blind SM-CCM interference suppression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads, 0 for all cores. Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory. Falls back to $SMCCM_OUT_DIR, then the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write CSV tables and plots.
    Simulate { config: PathBuf },
    /// Evaluate the closed-form excess MSE against the simulated one.
    Analyze { config: PathBuf },
    /// Repeat `simulate` over a grid of one parameter.
    Sweep {
        config: PathBuf,
        /// Dotted key, e.g. `bound.tau`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

fn load(cli: &Cli, path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

fn stem(cfg: &ExperimentConfig, ebn0: f64) -> String {
    format!("{}_{}dB", cfg.algorithm.kind.label(), ebn0)
}

fn series(label: &str, res: &EnsembleResult, f: impl Fn(&smccm::harness::MetricsRecord) -> f64) -> Series {
    Series {
        label: label.to_string(),
        points: res.mean.iter().map(|r| (r.symbol_index as f64, f(r))).collect(),
    }
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<EnsembleResult>> {
    let mut results = Vec::new();
    let tail = cfg.scenario.duration.saturating_sub(cfg.scenario.duration / 3);
    for &ebn0 in &cfg.system.ebn0_db {
        let res = run_ensemble(cfg, ebn0)?;
        let name = stem(cfg, ebn0);
        if cfg.output.csv {
            emit_csv(&out.join(format!("{name}.csv")), &res.mean)?;
            emit_csv(&out.join(format!("{name}_ci95.csv")), &res.half_width)?;
        }
        if cfg.output.plots {
            let label = cfg.algorithm.kind.label();
            emit_plot(&out.join(format!("{name}_mse.svg")), PlotKind::MseVsSymbols, &[series(label, &res, |r| r.mse)])?;
            emit_plot(&out.join(format!("{name}_ber.svg")), PlotKind::BerVsSymbols, &[series(label, &res, |r| r.ber)])?;
            emit_plot(
                &out.join(format!("{name}_bound.svg")),
                PlotKind::BoundTrace,
                &[series("gamma", &res, |r| r.gamma), series("v_hat", &res, |r| r.v_hat)],
            )?;
        }
        println!(
            "{} Eb/N0={} dB trials={} failed={} UR={:.4} final-BER={:.4e} final-MSE={:.4e}",
            cfg.algorithm.kind.label(),
            ebn0,
            res.trials.len(),
            res.failed,
            res.update_rate,
            res.segment_ber(tail, cfg.scenario.duration),
            segment_mean(&res.mean, tail, cfg.scenario.duration, |r| r.mse),
        );
        results.push(res);
    }
    if cfg.output.plots && results.len() > 1 {
        let ber = Series {
            label: cfg.algorithm.kind.label().into(),
            points: results.iter().map(|r| (r.ebn0_db, r.segment_ber(tail, cfg.scenario.duration))).collect(),
        };
        emit_plot(&out.join(format!("{}_ber_vs_snr.svg", cfg.algorithm.kind.label())), PlotKind::BerVsSnr, &[ber])?;
    }
    Ok(results)
}

fn analyze(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.analysis.enabled = true;
    let mut rows = String::from("ebn0_db,simulated,predicted,predicted_empirical_moments,diff_db\n");
    let mut sim_pts = Vec::new();
    let mut pred_pts = Vec::new();
    for &ebn0 in &cfg.system.ebn0_db {
        let res = run_ensemble(&cfg, ebn0)?;
        let dim = cfg.system.n + cfg.system.taps - 1;
        let p = predict(&res.window, cfg.system.doppler, dim)?;
        let xi = p.xi.as_ref().ok().copied();
        let xi_emp = p.xi_empirical.as_ref().ok().copied();
        let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |v| v.to_string());
        let cmp = xi.map(|x| compare_analytical(p.simulated, x, cfg.analysis.tolerance_db)).transpose();
        let diff = cmp.ok().flatten().map(|c| c.diff_db);
        rows.push_str(&format!("{ebn0},{},{},{},{}\n", p.simulated, fmt(xi), fmt(xi_emp), fmt(diff)));
        match &p.xi {
            Ok(x) => println!("Eb/N0={ebn0} dB simulated={:.4e} predicted={x:.4e}", p.simulated),
            Err(e) => println!("Eb/N0={ebn0} dB simulated={:.4e} prediction: {e}", p.simulated),
        }
        println!(
            "  gamma={:.4} sigma_e={:.4} P_up={:.4} E[mu]={:.4e} E[mu^2]={:.4e} E|u|^2={:.4} empirical E[mu]={:.4e} E[mu^2]={:.4e} P_up={:.4} -> {}",
            p.gamma_mean,
            p.sigma_e,
            p.moments.p_up,
            p.moments.mean_mu,
            p.moments.mean_mu2,
            p.u2,
            p.empirical_moments.mean_mu,
            p.empirical_moments.mean_mu2,
            p.empirical_moments.p_up,
            fmt(xi_emp),
        );
        sim_pts.push((ebn0, p.simulated));
        if let Some(x) = xi {
            pred_pts.push((ebn0, x));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("analysis.csv");
    std::fs::write(&path, rows).map_err(|e| Error::io(&path, e))?;
    if cfg.output.plots {
        let mut s = vec![Series { label: "simulated".into(), points: sim_pts }];
        if !pred_pts.is_empty() {
            s.push(Series { label: "analytical".into(), points: pred_pts });
        }
        emit_plot(&out.join("analysis_mse_vs_snr.svg"), PlotKind::MseVsSnr, &s)?;
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &Path, param: &str, values: &[String]) -> Result<()> {
    let mut rows = String::from("value,ebn0_db,update_rate,final_ber,final_mse\n");
    let mut pts = Vec::new();
    for v in values {
        let c = cfg.with_override(param, v)?;
        let dir = out.join(format!("{param}={v}"));
        let tail = c.scenario.duration.saturating_sub(c.scenario.duration / 3);
        for res in simulate(&c, &dir)? {
            let ber = res.segment_ber(tail, c.scenario.duration);
            let mse = segment_mean(&res.mean, tail, c.scenario.duration, |r| r.mse);
            rows.push_str(&format!("{v},{},{},{ber},{mse}\n", res.ebn0_db, res.update_rate));
            if let Ok(x) = v.parse::<f64>() {
                pts.push((x, ber));
            }
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("sweep.csv");
    std::fs::write(&path, rows).map_err(|e| Error::io(&path, e))?;
    if cfg.output.plots && param == "system.users" && !pts.is_empty() {
        emit_plot(
            &out.join("ber_vs_users.svg"),
            PlotKind::BerVsUsers,
            &[Series { label: cfg.algorithm.kind.label().into(), points: pts }],
        )?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { config } => {
            let (cfg, out) = load(cli, config)?;
            simulate(&cfg, &out).map(|_| ())
        }
        Command::Analyze { config } => {
            let (cfg, out) = load(cli, config)?;
            analyze(&cfg, &out)
        }
        Command::Sweep { config, param, values } => {
            let (cfg, out) = load(cli, config)?;
            sweep(&cfg, &out, param, values)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Io { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
