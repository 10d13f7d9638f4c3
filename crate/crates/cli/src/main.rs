use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use delaycert::bench::{
    build_example, compare, compare_system, preset, reproduce_table, write_figure_data, CompareConfig, ExampleSpec,
};
use delaycert::envelope::EstimateCurve;
use delaycert::integrator::{default_step, fmt17, integrate_sampled, steps_per_delay, OutputSchedule};
use delaycert::krasovskii::{KrasovskiiCertificate, KrasovskiiParams};
use delaycert::model::SystemSpec;
use delaycert::razumikhin::{RazumikhinCertificate, RazumikhinParams};
use delaycert::tuner::{tune, TuningMethod, TuningProblem, TuningTarget};
use delaycert::{DelaySystem, HistorySpec};

#[derive(Parser)]
#[command(name = "delaycert", version, about = "Attraction radii and decay envelopes for homogeneous time-delay systems")]
struct Cli {
    #[command(flatten)]
    input: Input,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Built-in example: ex1 or ex2.
    #[arg(long, global = true)]
    example: Option<String>,
    /// JSON run document (system or example, certificate parameters, history, tuning problem).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Integration step; must divide the delay.
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Final time of the simulation.
    #[arg(long, global = true)]
    horizon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Growth and Lyapunov constants of the system.
    Constants,
    /// Certified attraction radii of both methods.
    Region,
    /// Envelope constants of both methods; `--out` writes the envelopes as CSV.
    Estimate,
    /// Simulates one solution; CSV `t,x_1..x_n,norm,V`.
    Simulate {
        /// Log-spaced output with this many points per decade instead of every node.
        #[arg(long)]
        per_decade: Option<usize>,
    },
    /// Simulates one solution against both envelopes; `--out` writes CSV `t,norm,LR,LK`.
    Compare,
    /// Searches certificate parameters.
    Tune {
        /// razumikhin, krasovskii-general or krasovskii-scalar.
        #[arg(long)]
        method: Option<String>,
        /// maximize-delta, minimize-c1 or maximize-c2.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recomputes the reference tables; exit status 1 if a non-flagged cell fails.
    ReproduceTables {
        /// Only this table (1, 2 or 3).
        #[arg(long)]
        table: Option<u8>,
    },
}

/// Run document given with `--config`.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    example: Option<ExampleSpec>,
    system: Option<SystemSpec>,
    /// Shared working radius for `compare`.
    delta: Option<f64>,
    #[serde(default)]
    razumikhin: RazumikhinParams,
    #[serde(default)]
    krasovskii: KrasovskiiParams,
    history: Option<HistorySpec>,
    horizon: Option<f64>,
    step: Option<f64>,
    per_decade: Option<usize>,
    tuning: Option<TuningProblem>,
}

struct Run {
    input: Input,
    config: Config,
}

impl Run {
    fn new(input: Input) -> Result<Self> {
        let config = match &input.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => Config::default(),
        };
        if input.example.is_some() && (config.example.is_some() || config.system.is_some()) {
            bail!("--example conflicts with the system given in --config");
        }
        if config.example.is_some() && config.system.is_some() {
            bail!("the config may give `example` or `system`, not both");
        }
        Ok(Run { input, config })
    }

    fn example(&self) -> Result<Option<ExampleSpec>> {
        if let Some(id) = &self.input.example {
            return Ok(Some(ExampleSpec::by_id(id)?));
        }
        Ok(self.config.example.clone())
    }

    fn system(&self) -> Result<DelaySystem> {
        if let Some(ex) = self.example()? {
            return Ok(build_example(&ex)?);
        }
        match &self.config.system {
            Some(spec) => Ok(spec.build()?),
            None => bail!("no system: pass --example or a --config with `example` or `system`"),
        }
    }

    fn horizon(&self) -> Option<f64> {
        self.input.horizon.or(self.config.horizon)
    }

    fn step(&self) -> Option<f64> {
        self.input.step.or(self.config.step)
    }

    fn certificates(&self, system: &DelaySystem) -> Result<(RazumikhinCertificate, KrasovskiiCertificate)> {
        let lr = RazumikhinCertificate::build(system, &self.config.razumikhin).context("Razumikhin certificate")?;
        let lk = KrasovskiiCertificate::build(system, &self.config.krasovskii).context("Krasovskii certificate")?;
        Ok((lr, lk))
    }

    /// Configured history, or the reference one for an example.
    fn history(&self) -> Result<HistorySpec> {
        if let Some(h) = &self.config.history {
            return Ok(h.clone());
        }
        match self.example()? {
            Some(ex) => Ok(CompareConfig::reference(&ex)?.history),
            None => bail!("no history: add `history` to the config"),
        }
    }

    fn compare_config(&self) -> Result<CompareConfig> {
        let c = &self.config;
        let mut cfg = match (self.example()?, c.delta) {
            (Some(ex), None) if c.history.is_none() => CompareConfig::reference(&ex)?,
            (_, delta) => {
                let delta = match delta.or(c.krasovskii.delta).or(c.razumikhin.delta) {
                    Some(d) => d,
                    None => bail!("compare needs `delta` in the config"),
                };
                CompareConfig {
                    delta,
                    razumikhin: c.razumikhin,
                    krasovskii: c.krasovskii,
                    history: self.history()?,
                    horizon: None,
                    step: None,
                    per_decade: 20,
                }
            }
        };
        cfg.horizon = self.horizon();
        cfg.step = self.step();
        if let Some(p) = c.per_decade {
            cfg.per_decade = p;
        }
        Ok(cfg)
    }
}

fn open_out(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn parse_kebab<T: DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_string())).with_context(|| format!("unknown {what} `{s}`"))
}

fn write_envelopes(path: &Path, lr: &EstimateCurve, lk: &EstimateCurve, phi_norm: f64, horizon: f64, step: f64) -> Result<()> {
    let steps = (horizon / step).ceil() as usize;
    let mut w = open_out(path)?;
    writeln!(w, "t,LR,LK")?;
    let schedule = OutputSchedule::LogSpaced { per_decade: 20 };
    for i in schedule.indices(steps) {
        let t = (i as f64 * step).min(horizon);
        writeln!(w, "{},{},{}", fmt17(t), fmt17(lr.bound(phi_norm, t)), fmt17(lk.bound(phi_norm, t)))?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let command = cli.command;
    let run = Run::new(cli.input)?;
    match command {
        Command::Constants => {
            let s = run.system()?;
            print_json(&json!({
                "n": s.rhs.dim(),
                "mu": s.mu(),
                "h": s.delay(),
                "growth": s.growth,
                "lyapunov": s.lyapunov.constants,
            }))?;
        }
        Command::Region => {
            let s = run.system()?;
            let (lr, lk) = run.certificates(&s)?;
            print_json(&json!({
                "razumikhin": { "delta": lr.delta, "H": lr.big_h, "Delta": lr.big_delta },
                "krasovskii": {
                    "path": lk.path,
                    "delta": lk.delta,
                    "H1": lk.constants.h1,
                    "H2": lk.constants.h2,
                    "Delta": lk.big_delta,
                },
            }))?;
        }
        Command::Estimate => {
            let s = run.system()?;
            let (lr, lk) = run.certificates(&s)?;
            print_json(&json!({ "razumikhin": lr, "krasovskii": lk }))?;
            if let Some(path) = &run.input.out {
                let phi_norm = match run.history() {
                    Ok(spec) => spec.build(s.delay(), 1000)?.sup_norm(),
                    Err(_) => 0.5 * lr.big_delta.min(lk.big_delta),
                };
                let step = run.step().unwrap_or_else(|| default_step(s.delay()));
                let horizon = run.horizon().unwrap_or(1e4 * s.delay());
                write_envelopes(path, &lr.curve(), &lk.curve(), phi_norm, horizon, step)?;
            }
        }
        Command::Simulate { per_decade } => {
            let s = run.system()?;
            let step = run.step().unwrap_or_else(|| default_step(s.delay()));
            let horizon = run.horizon().unwrap_or(100.0 * s.delay());
            let lag = steps_per_delay(s.delay(), step)?;
            let phi = run.history()?.build(s.delay(), lag)?;
            let steps = (horizon / step).ceil() as usize;
            let schedule = match per_decade.or(run.config.per_decade) {
                Some(p) => OutputSchedule::LogSpaced { per_decade: p },
                None if steps > 100_000 => OutputSchedule::LogSpaced { per_decade: 20 },
                None => OutputSchedule::All,
            };
            let traj = integrate_sampled(&s.rhs, &phi, horizon, step, schedule)?;
            match &run.input.out {
                Some(path) => traj.write_csv(Some(&s.lyapunov), open_out(path)?)?,
                None => traj.write_csv(Some(&s.lyapunov), io::stdout().lock())?,
            }
        }
        Command::Compare => {
            let cfg = run.compare_config()?;
            let (report, system) = match run.example()? {
                Some(ex) => (compare(&ex, &cfg)?, build_example(&ex)?),
                None => {
                    let s = run.system()?;
                    (compare_system(&s, &cfg)?, s)
                }
            };
            if let Some(path) = &run.input.out {
                write_figure_data(&system, &cfg, open_out(path)?)?;
            }
            print_json(&report)?;
        }
        Command::Tune { method, target, budget, seed } => {
            let s = run.system()?;
            let mut problem = match &run.config.tuning {
                Some(p) => p.clone(),
                None => TuningProblem::new(TuningTarget::MaximizeDelta, TuningMethod::Razumikhin),
            };
            if let Some(m) = method {
                problem.method = parse_kebab("method", &m)?;
            }
            if let Some(t) = target {
                problem.target = parse_kebab("target", &t)?;
            }
            if let Some(b) = budget {
                problem.budget = b;
            }
            if let Some(sd) = seed {
                problem.seed = sd;
            }
            let result = tune(&s, &problem)?;
            if let Some(path) = &run.input.out {
                let mut w = open_out(path)?;
                serde_json::to_writer_pretty(&mut w, &result)?;
                w.flush()?;
            }
            print_json(&result)?;
        }
        Command::ReproduceTables { table } => {
            let tables: Vec<u8> = match table {
                Some(t) => vec![t],
                None => vec![1, 2, 3],
            };
            let mut csv: Option<BufWriter<File>> = match &run.input.out {
                Some(p) => Some(open_out(p)?),
                None => None,
            };
            let mut summary = Vec::new();
            let mut all_passed = true;
            for (k, &t) in tables.iter().enumerate() {
                preset(t)?;
                let report = reproduce_table(t)?;
                if let Some(w) = csv.as_mut() {
                    report.write_csv(&mut *w, k == 0)?;
                }
                let failed: Vec<&str> = report
                    .cells
                    .iter()
                    .filter(|c| c.status == delaycert::bench::CellStatus::Fail)
                    .map(|c| c.cell.as_str())
                    .collect();
                all_passed &= report.passed();
                summary.push(json!({
                    "table": t,
                    "passed": report.passed(),
                    "failed": failed,
                    "cells": report.cells,
                }));
            }
            if let Some(mut w) = csv {
                w.flush()?;
            }
            print_json(&json!({ "passed": all_passed, "tables": summary }))?;
            if !all_passed {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Output piped into a reader that stopped early.
fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind()) == Some(io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
