//! `zhuyi`: trace analysis, closed-loop simulation and sensitivity sweeps.
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zhuyi::analysis::{analyze_trace, analyze_with_mrf, simulation_records, write_records};
use zhuyi::oracle::SCENARIO_COLLISION_RADIUS;
use zhuyi::scenario::{load_trace_path, run_closed_loop, PredictorConfig, RatePolicy, ScenarioScript};
use zhuyi::sweep::{run_sweep, SweepConfig};
use zhuyi::{Execution, ZhuyiParams, MPH};

#[derive(Parser)]
#[command(version, about = "Minimum safe per-camera frame processing rates")]
struct Cli {
    /// Evaluate on one thread
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-tick, per-camera rate report for a recorded trace
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also find the scenario's minimum required fixed rate
        #[arg(long)]
        mrf: bool,
    },
    /// Closed-loop run with the model online
    Simulate {
        #[arg(long)]
        script: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Total frames per second shared by the cameras; without it every
        /// camera runs at the highest rate
        #[arg(long)]
        budget: Option<f64>,
        /// Overrides the script's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rate grid over ego and actor speed at a fixed separation
    Sweep {
        /// Separation, meters
        #[arg(long)]
        sn: f64,
        /// Speeds in m/s, or with an explicit `mph` suffix
        #[arg(long, value_parser = parse_speed)]
        ve0_min: f64,
        #[arg(long, value_parser = parse_speed)]
        ve0_max: f64,
        #[arg(long, value_parser = parse_speed)]
        van_min: f64,
        #[arg(long, value_parser = parse_speed)]
        van_max: f64,
        /// Points per axis
        #[arg(long, default_value_t = 26)]
        steps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Record a trace by running a script at one fixed rate
    Trace {
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        fpr: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML or JSON params; absent keys take defaults
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn params(&self) -> zhuyi::Result<ZhuyiParams> {
        match &self.params {
            Some(p) => ZhuyiParams::from_path(p),
            None => Ok(ZhuyiParams::default()),
        }
    }

    fn writer(&self) -> zhuyi::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn parse_speed(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (number, scale) = match t.strip_suffix("mph") {
        Some(n) => (n, MPH),
        None => (t.strip_suffix("m/s").unwrap_or(t), 1.0),
    };
    let v: f64 = number.trim().parse().map_err(|_| format!("`{text}` is not a speed"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(format!("`{text}` must be a non-negative speed"));
    }
    Ok(v * scale)
}

fn load_script(path: &Path, seed: Option<u64>) -> zhuyi::Result<ScenarioScript> {
    let mut script = ScenarioScript::from_path(path)?;
    if let Some(seed) = seed {
        script.seed = seed;
    }
    Ok(script)
}

enum Outcome {
    Done,
    Collision,
}

fn run(cli: Cli) -> zhuyi::Result<Outcome> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Analyze { trace, common, mrf } => {
            let params = common.params()?;
            let trace = load_trace_path(&trace)?;
            let analysis = if mrf {
                analyze_with_mrf(&trace, &params, exec)?
            } else {
                analyze_trace(&trace, &params, exec)?
            };
            write_records(&analysis.records(), common.writer()?)?;
            Ok(Outcome::Done)
        }
        Command::Simulate { script, common, budget, seed } => {
            let params = common.params()?;
            let script = load_script(&script, seed)?;
            let predictor = PredictorConfig::default();
            let policy = match budget {
                Some(budget) => RatePolicy::Budgeted { budget, predictor },
                None => RatePolicy::Zhuyi { predictor },
            };
            let result = run_closed_loop(&script, &params, &policy, SCENARIO_COLLISION_RADIUS, exec)?;
            write_records(&simulation_records(&result, &params), common.writer()?)?;
            Ok(if result.collision.is_some() { Outcome::Collision } else { Outcome::Done })
        }
        Command::Sweep { sn, ve0_min, ve0_max, van_min, van_max, steps, common } => {
            let params = common.params()?;
            let cfg = SweepConfig { s_n: sn, ve0_min, ve0_max, van_min, van_max, steps };
            let grid = run_sweep(&cfg, &params, exec)?;
            let mut out = common.writer()?;
            out.write_all(grid.to_csv().as_bytes())?;
            out.flush()?;
            Ok(Outcome::Done)
        }
        Command::Trace { script, fpr, seed, common } => {
            let params = common.params()?;
            let script = load_script(&script, seed)?;
            let policy = RatePolicy::Fixed(fpr);
            let result = run_closed_loop(&script, &params, &policy, SCENARIO_COLLISION_RADIUS, exec)?;
            let mut out = common.writer()?;
            result.trace.save(&mut out)?;
            out.flush()?;
            Ok(if result.collision.is_some() { Outcome::Collision } else { Outcome::Done })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Collision) => {
            eprintln!("collision detected");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
