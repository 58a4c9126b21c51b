use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nsnl_core::experiments::compare_with_oracle;
use nsnl_core::io::runner::{bench, verify_state};
use nsnl_core::io::timeseries::write_oracle_table;
use nsnl_core::io::{self, execute, load_config, read_snapshot, Manifest, RunOptions, RunSpec, Scenario};
use nsnl_core::verify::CheckReport;
use nsnl_core::{Error, PhysParams};

#[derive(Parser)]
#[command(name = "nsnl", version, about = "Non-signaling nonlinear Schrödinger simulator")]
struct Cli {
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write every N-th recorded snapshot; 0 writes only the final state.
    #[arg(long, global = true, default_value_t = 0)]
    snapshots: usize,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured scenario.
    Run { config: PathBuf },
    /// Mass sweep table plus per-row manifests.
    Sweep { config: PathBuf },
    /// Check bundle for a config run or a single snapshot; exit 4 on failure.
    Verify { input: PathBuf },
    /// PDE width against the moment oracle.
    OracleCompare { config: PathBuf },
    /// Steps per second and per-kernel timings as JSON.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Re-run a manifest's config and compare the final state bit for bit.
    Reproduce { manifest: PathBuf },
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::UnknownKey { .. } | Error::Validation(_) => Failure::Config(e),
            _ => Failure::Runtime(e),
        }
    }
}

fn read_spec(path: &Path) -> Result<RunSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(Error::Validation(format!("cannot read {}: {e}", path.display()))))?;
    load_config(&text).map_err(Failure::Config)
}

fn out_dir(cli: &Cli, spec: Option<&RunSpec>, fallback: &str) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| spec.and_then(|s| s.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn print_reports(reports: &[CheckReport]) {
    for r in reports {
        println!(
            "{:<5} {:<22} residual {:>11.3e}  threshold {:.0e}  {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.max_residual,
            r.threshold,
            r.context
        );
    }
}

fn run_spec(cli: &Cli, spec: &RunSpec) -> Result<Manifest, Failure> {
    let opts = RunOptions {
        out_dir: out_dir(cli, Some(spec), "nsnl-out"),
        snapshots: cli.snapshots,
        threads: io::threads_from_env(),
    };
    let m = execute(spec, &opts)?;
    if !cli.quiet {
        println!("scenario {} -> {}", m.scenario, opts.out_dir.display());
        println!("{}", serde_json::to_string_pretty(&m.summary).unwrap_or_default());
        print_reports(&m.reports);
    }
    Ok(m)
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => {
            run_spec(cli, &read_spec(config)?)?;
        }
        Command::Sweep { config } => {
            let mut spec = read_spec(config)?;
            spec.scenario = Scenario::MassSweep;
            spec.validate().map_err(Failure::Config)?;
            run_spec(cli, &spec)?;
        }
        Command::Verify { input } => {
            let bytes = std::fs::read(input).map_err(|e| Failure::Runtime(e.into()))?;
            let reports = if bytes.starts_with(io::snapshot::MAGIC) {
                let snap = read_snapshot(&bytes)?;
                let params = PhysParams::with_ratio(snap.mass_ratio);
                verify_state(&snap.state, &params)?
            } else {
                run_spec(cli, &read_spec(input)?)?.reports
            };
            if !cli.quiet {
                print_reports(&reports);
            }
            if !reports.iter().all(|r| r.pass) {
                return Err(Failure::Checks);
            }
        }
        Command::OracleCompare { config } => {
            let spec = read_spec(config)?;
            if spec.grid.len() != 1 || !spec.params.potential.is_none() {
                return Err(Failure::Config(Error::Validation(
                    "oracle-compare needs a free 1D Gaussian".into(),
                )));
            }
            let grid = spec.make_grid()?;
            let (samples, _) = compare_with_oracle(
                &grid,
                spec.state.sigma,
                &spec.params,
                &spec.stepper,
                spec.t_final,
                spec.t_final / 50.0,
            )?;
            let mut text = Vec::new();
            write_oracle_table(&mut text, &samples)?;
            if let Some(dir) = cli.out.as_ref().or(spec.output_dir.as_ref()) {
                std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.into()))?;
                std::fs::write(dir.join("oracle.csv"), &text).map_err(|e| Failure::Runtime(e.into()))?;
            }
            if !cli.quiet {
                print!("{}", String::from_utf8_lossy(&text));
            }
        }
        Command::Bench { config, steps } => {
            let spec = read_spec(config)?;
            let report = bench(&spec, *steps, io::threads_from_env())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.into()))?);
        }
        Command::Reproduce { manifest } => {
            let (config, threads) = Manifest::read_config(manifest)?;
            let original: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(manifest).map_err(|e| Failure::Runtime(e.into()))?,
            )
            .map_err(|e| Failure::Runtime(e.into()))?;
            let spec = load_config(&config).map_err(Failure::Config)?;
            let opts = RunOptions {
                out_dir: out_dir(cli, None, "nsnl-reproduce"),
                snapshots: 0,
                threads,
            };
            let m = execute(&spec, &opts)?;
            let expected = original["final_crc32"].as_u64().map(|v| v as u32);
            let same = expected == m.final_crc32;
            if !cli.quiet {
                println!(
                    "final state crc32 {:?} vs recorded {:?}: {}",
                    m.final_crc32,
                    expected,
                    if same { "identical" } else { "DIFFERENT" }
                );
            }
            if !same {
                return Err(Failure::Checks);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("runtime error: {e}");
            match e {
                Error::StabilityGuardTripped { .. } | Error::NormDriftAbort { .. } | Error::TooManyNodes(_) => {
                    ExitCode::from(3)
                }
                _ => ExitCode::from(1),
            }
        }
        Err(Failure::Checks) => {
            eprintln!("check failure");
            ExitCode::from(4)
        }
    }
}
