use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use minedes::bench::{run_shift, run_trials, summarize, table_csv, write_reports, TrialMatrix};
use minedes::bridge::{serve_stream, serve_tcp, Session};
use minedes::config::{parse_config, parse_scenario, validate, MineConfig, ScenarioSpec};
use minedes::dispatch::SchedulerKind;
use minedes::env::MineEnv;

#[derive(Parser)]
#[command(name = "minedes", version, about = "Open-pit truck dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured shifts under one scheduler.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bundled label (A-F) or path to a scenario file.
        #[arg(long, default_value = "A")]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "equal_queue")]
        scheduler: SchedulerKind,
        /// Directory for events.log and kpi.json; KPIs go to stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat seeded shifts across schedulers and scenarios.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "A,B,C,D,E,F")]
        scenarios: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "random,fixed,equal_queue")]
        schedulers: Vec<SchedulerKind>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Skip per-run event logs.
        #[arg(long)]
        no_events: bool,
    },
    /// Expose the environment to an external agent.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "A")]
        scenario: String,
        #[arg(long, value_enum, default_value_t = Transport::Stdio)]
        transport: Transport,
        #[arg(long, default_value_t = 5555)]
        port: u16,
        /// Append every exchange to this transcript file (stdio only).
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Check a configuration and scenario without running anything.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "A")]
        scenario: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Stdio,
    Tcp,
}

fn load_config(path: Option<&Path>) -> Result<MineConfig> {
    match path {
        None => Ok(MineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_config(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    if let Some(s) = ScenarioSpec::bundled(arg) {
        return Ok(s);
    }
    let text = fs::read_to_string(arg)
        .with_context(|| format!("`{arg}` is neither a bundled scenario nor a readable file"))?;
    parse_scenario(&text).with_context(|| format!("in {arg}"))
}

fn check(cfg: &MineConfig, scenario: &ScenarioSpec) -> Result<()> {
    if let Err(violations) = validate(cfg, scenario) {
        for v in &violations {
            eprintln!("error: {v}");
        }
        bail!("{} validation error(s)", violations.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            scenario,
            seed,
            scheduler,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let scenario = load_scenario(&scenario)?;
            check(&cfg, &scenario)?;
            let base = seed.unwrap_or(cfg.simulation.seed);
            let mut log = String::new();
            let mut reports = Vec::new();
            for shift in 0..cfg.simulation.shifts {
                let seed = base + shift as u64;
                let run = run_shift(&cfg, &scenario, scheduler, seed, out.is_some())?;
                if let Some(lines) = &run.event_log {
                    log += &format!("# shift {} seed {seed}\n", shift + 1);
                    for l in lines {
                        log += l;
                        log.push('\n');
                    }
                }
                reports.push(run);
            }
            let kpi = serde_json::to_string_pretty(&reports)? + "\n";
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("events.log"), log)?;
                    fs::write(dir.join("kpi.json"), kpi)?;
                }
                None => io::stdout().write_all(kpi.as_bytes())?,
            }
        }
        Command::Bench {
            config,
            scenarios,
            schedulers,
            repeats,
            seed,
            out,
            no_events,
        } => {
            let cfg = load_config(config.as_deref())?;
            let scenarios = scenarios.iter().map(|s| load_scenario(s)).collect::<Result<Vec<_>>>()?;
            for s in &scenarios {
                check(&cfg, s)?;
            }
            let matrix = TrialMatrix {
                schedulers,
                scenarios,
                repeats,
                base_seed: seed,
            };
            let started = Instant::now();
            let (runs, failures) = run_trials(&matrix, &cfg, !no_events);
            for f in &failures {
                eprintln!("run {} {} trial {} (seed {}) failed: {}", f.scenario, f.scheduler, f.trial, f.seed, f.message);
            }
            let summary = summarize(&matrix, &runs, failures);
            write_reports(&summary, &runs, &out)?;
            print!("{}", table_csv(&summary));
            eprintln!("{} runs in {:.2?}, reports in {}", runs.len(), started.elapsed(), out.display());
        }
        Command::Serve {
            config,
            scenario,
            transport,
            port,
            record,
        } => {
            let cfg = load_config(config.as_deref())?;
            let scenario = load_scenario(&scenario)?;
            check(&cfg, &scenario)?;
            let make = || Session::new(MineEnv::new(cfg.clone(), scenario.clone()).expect("validated above"));
            match transport {
                Transport::Stdio => {
                    let mut session = make();
                    let stdin = io::stdin().lock();
                    let stdout = BufWriter::new(io::stdout().lock());
                    match record {
                        Some(path) => {
                            let mut file = BufWriter::new(fs::File::create(&path)?);
                            serve_stream(&mut session, stdin, stdout, Some(&mut file))?;
                            file.flush()?;
                        }
                        None => serve_stream(&mut session, stdin, stdout, None)?,
                    }
                }
                Transport::Tcp => serve_tcp(port, make)?,
            }
        }
        Command::Validate { config, scenario } => {
            let cfg = load_config(config.as_deref())?;
            let scenario = load_scenario(&scenario)?;
            check(&cfg, &scenario)?;
            println!("ok");
        }
    }
    Ok(())
}
