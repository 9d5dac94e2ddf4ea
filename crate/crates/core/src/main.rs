use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use beamspace::harness::{
    self, run_fig8, run_fig9_10, run_outage, run_sync_demo, run_tracking_scenario, run_training_demo, run_validate,
    tracking_script, write_csv, write_trace, ExperimentConfig, HarnessError, SyncDemo,
};

#[derive(Parser)]
#[command(name = "beamspace", version, about = "Multi-beam mmWave link experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; reference defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// SINR and rate over the reflection angle grid.
    RateMap,
    /// Rate versus SINR threshold for SISO, PPA and APA.
    RateVsEta {
        /// fig9, fig10a or fig10b; ignored when --config is given.
        #[arg(long, default_value = "fig9")]
        preset: String,
    },
    /// Outage probability, analytic and Monte Carlo.
    Outage,
    /// Scan rounds and pairing test counts.
    Train,
    /// Cooperative beam tracking trace for a named script.
    Track {
        #[arg(long, default_value = "fig6")]
        script: String,
    },
    /// Synchronization cycles with a mid-cycle rate drop.
    Sync {
        #[arg(long, default_value_t = 6)]
        cycles: usize,
        #[arg(long, default_value_t = 300_000)]
        total_bytes: u64,
    },
    /// Oracle against the closed-form allocators on random instances.
    Validate {
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
}

fn config(common: &Common, preset: Option<&str>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&common.config, preset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, None | Some("fig9")) => ExperimentConfig::default(),
        (None, Some("fig10a")) => ExperimentConfig::fig10('a'),
        (None, Some("fig10b")) => ExperimentConfig::fig10('b'),
        (None, Some(other)) => return Err(HarnessError::Config(format!("unknown preset {other:?}"))),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn csv_out(dir: &Path, name: &str, rows: &[harness::ResultRow]) -> Result<(), HarnessError> {
    let p = dir.join(format!("{name}.csv"));
    write_csv(&p, rows)?;
    info!("wrote {} rows to {}", rows.len(), p.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let out = &cli.common.out;
    let preset = match &cli.cmd {
        Cmd::RateVsEta { preset } => Some(preset.as_str()),
        _ => None,
    };
    let cfg = config(&cli.common, preset)?;
    fs::create_dir_all(out)?;
    match cli.cmd {
        Cmd::RateMap => csv_out(out, "fig8", &run_fig8(&cfg)?)?,
        Cmd::RateVsEta { .. } => {
            let rows = run_fig9_10(&cfg)?;
            csv_out(out, &cfg.name, &rows)?;
            if rows.iter().filter(|r| r.units == "Mbps").all(|r| r.value == 0.0) {
                return Err(HarnessError::Infeasible("no link meets any threshold in the sweep".into()));
            }
        }
        Cmd::Outage => csv_out(out, "outage", &run_outage(&cfg))?,
        Cmd::Train => {
            let (rows, trace) = run_training_demo(&cfg);
            csv_out(out, "training", &rows)?;
            write_trace(&out.join("training.trace"), &trace)?;
        }
        Cmd::Track { script } => {
            let scn = tracking_script(&script, cfg.seed)?;
            let (rows, trace) = run_tracking_scenario(&scn)?;
            let name = format!("track_{script}");
            csv_out(out, &name, &rows)?;
            write_trace(&out.join(format!("{name}.trace")), &trace)?;
        }
        Cmd::Sync { cycles, total_bytes } => {
            let demo = SyncDemo { cycles, total_bytes, ..Default::default() };
            let (rows, trace) = run_sync_demo(&cfg, &demo)?;
            csv_out(out, "sync", &rows)?;
            write_trace(&out.join("sync.trace"), &trace)?;
        }
        Cmd::Validate { instances } => {
            let (rows, failures) = run_validate(&cfg, instances)?;
            csv_out(out, "validate", &rows)?;
            if failures > 0 {
                return Err(HarnessError::Infeasible(format!("{failures} of {instances} instances failed")));
            }
            println!("validate: {instances} instances, 0 failures");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BEAMSPACE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("beamspace: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
