use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rssa::sim::batch::{batch_to_csv, render_csv, BatchRow};
use rssa::sim::serve::{serve, ServeOptions};
use rssa::sim::{run_trial, sweep_feasibility, Method, Overrides, Scenario, SweepGrid};

#[derive(Parser)]
#[command(name = "rssa", version, about = "Robust safe control lab for a two-link arm")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct OverrideArgs {
    /// Replace the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace the time step [s].
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Replace the step budget.
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario under one method.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full per-tick record as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run every scenario in a directory under every method.
    Batch {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the workspace and report the alignment certificate.
    CheckFeasibility {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Serve live sessions over a websocket.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "sessions")]
        record_dir: PathBuf,
        #[arg(long, default_value = "M4")]
        method: Method,
    },
}

fn load(path: &Path, o: &Overrides) -> rssa::Result<Scenario> {
    let mut s = Scenario::load(path)?;
    s.apply(o)?;
    Ok(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let o = Overrides { seed: cli.overrides.seed, dt_s: cli.overrides.dt, max_steps: cli.overrides.steps };
    let res = match cli.cmd {
        Cmd::Run { scenario, method, out, log } => (|| {
            let s = load(&scenario, &o)?;
            let outcome = run_trial(&s, method);
            if let (Some(path), Ok(rec)) = (&log, &outcome) {
                std::fs::write(path, serde_json::to_string(rec)?)?;
            }
            let failed = outcome.as_ref().err().map(|e| e.to_string());
            let row = BatchRow { trial: s.name.clone(), method, outcome };
            std::fs::write(&out, render_csv(std::slice::from_ref(&row)))?;
            match failed {
                Some(e) => Err(rssa::Error::Scenario(e)),
                None => Ok(()),
            }
        })(),
        Cmd::Batch { dir, out } => batch_to_csv(&dir, &out, &o).map(|rows| {
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            log::info!("{} rows written to {}, {failed} failed", rows.len(), out.display());
        }),
        Cmd::CheckFeasibility { scenario } => (|| {
            let s = load(&scenario, &o)?;
            let rep = sweep_feasibility(&s, &SweepGrid::default())?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(())
        })(),
        Cmd::Serve { scenario, port, record_dir, method } => (|| {
            let s = load(&scenario, &o)?;
            serve(&s, port, &ServeOptions { record_dir, default_method: method, ..ServeOptions::default() })
        })(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
