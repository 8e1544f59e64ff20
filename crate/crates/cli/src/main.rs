use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use burstsim_core::output::{render_summary, run_scenario, write_atomic};
use burstsim_core::scenario::{bundled, validate_text, BUNDLED};
use burstsim_core::sweep::{sweep, SweepSpec};
use burstsim_core::{ConfigError, RunError, RunOptions, Scenario};
use burstsim_photon::batch::{trace_paths, validate_doms, BatchConfig, DESK_BATCH};
use burstsim_photon::PhotonError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "burstsim", version, about = "Multi-cloud GPU burst simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a bundled scenario (paper-feb-run).
    #[arg(long, default_value = "paper-feb-run")]
    config: String,
    /// Root seed; defaults to the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
    /// Instance-count and job-count multiplier.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and list every problem found.
    Validate {
        #[arg(long, default_value = "paper-feb-run")]
        config: String,
    },
    /// Simulate a scenario and write timeseries.csv, jobs.csv and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the processed event sequence to events.log.
        #[arg(long)]
        event_log: bool,
    },
    /// Run a scenario once per (value, seed) with one numeric field overridden.
    Sweep {
        #[arg(long, default_value = "paper-feb-run")]
        config: String,
        /// Dotted path, e.g. `catalog.regions.*.preemption_rate`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
    /// Run a standalone photon propagation batch.
    Photon {
        /// Batch file; the bundled synthetic batch if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        photons: Option<u64>,
        #[arg(long, default_value = "photon-out")]
        out: PathBuf,
        /// Write path vertices of the first N photons to paths.csv.
        #[arg(long, default_value_t = 0)]
        paths: u64,
    },
}

/// Failure with its exit code: 1 for configuration, 2 for runtime faults.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        RunError::from(e).into()
    }
}

impl From<PhotonError> for Failure {
    fn from(e: PhotonError) -> Self {
        Failure {
            code: if e.is_config() { 1 } else { 2 },
            error: e.into(),
        }
    }
}

fn config_failure(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn runtime_failure(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn load_text(config: &str) -> Result<String, Failure> {
    let path = Path::new(config);
    if path.is_file() {
        return fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config_failure);
    }
    bundled(config).map(str::to_string).ok_or_else(|| {
        config_failure(anyhow::anyhow!(
            "`{config}` is neither a file nor a bundled scenario ({})",
            BUNDLED.join(", ")
        ))
    })
}

fn load_scenario(config: &str) -> Result<Scenario, Failure> {
    let text = load_text(config)?;
    Ok(Scenario::from_json(&text)?.validated()?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let diags = validate_text(&load_text(&config)?)?;
            if diags.is_empty() {
                println!("{config}: ok");
                Ok(())
            } else {
                for d in &diags {
                    println!("{d}");
                }
                Err(ConfigError::Invalid(diags).into())
            }
        }
        Command::Run {
            common,
            out,
            event_log,
        } => {
            let sc = load_scenario(&common.config)?;
            let opts = RunOptions {
                seed: common.seed,
                scale: common.scale,
                event_log,
            };
            let started = std::time::Instant::now();
            let result = run_scenario(&sc, &opts, &out)?;
            log::info!("run finished in {:.2?}", started.elapsed());
            print!("{}", render_summary(&result.summary));
            println!("  outputs in {}", out.display());
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            seeds,
            scale,
            out,
        } => {
            let text = load_text(&config)?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                })?;
            let spec = SweepSpec {
                path: param,
                values,
                seeds,
                scale,
            };
            let rows = sweep(&doc, &spec, &out)?;
            println!("value,seed,waste_fraction,pflops_hours,cost_usd,completed_jobs");
            for r in rows {
                println!(
                    "{},{},{:.4},{},{:.2},{}",
                    r.value, r.seed, r.waste_fraction, r.pflops_hours, r.cost_usd, r.completed_jobs
                );
            }
            Ok(())
        }
        Command::Photon {
            config,
            seed,
            photons,
            out,
            paths,
        } => {
            let text = match &config {
                Some(p) => fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))
                    .map_err(config_failure)?,
                None => DESK_BATCH.to_string(),
            };
            let mut batch = BatchConfig::from_json(&text)?;
            if let Some(s) = seed {
                batch.seed = s;
            }
            if let Some(n) = photons {
                batch.n_photons = n;
            }
            let started = std::time::Instant::now();
            let result = batch.run()?;
            log::info!("batch finished in {:.2?}", started.elapsed());
            fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))
                .map_err(runtime_failure)?;
            let mut json =
                serde_json::to_vec_pretty(&result).map_err(|e| runtime_failure(e.into()))?;
            json.push(b'\n');
            write_atomic(&out.join("photon_result.json"), &json)?;
            if paths > 0 {
                let doms = batch.geometry.doms();
                validate_doms(&doms)?;
                let traced = trace_paths(
                    paths,
                    &batch.source,
                    &batch.ice,
                    &doms,
                    batch.seed,
                    batch.max_steps,
                )?;
                let mut csv = String::from("photon,vertex,x,y,z,status\n");
                for (i, (p, verts)) in traced.iter().enumerate() {
                    let status =
                        serde_json::to_value(p.status).map_err(|e| runtime_failure(e.into()))?;
                    for (k, v) in verts.iter().enumerate() {
                        csv.push_str(&format!(
                            "{i},{k},{},{},{},{}\n",
                            v.x,
                            v.y,
                            v.z,
                            status.as_str().unwrap_or("")
                        ));
                    }
                }
                write_atomic(&out.join("paths.csv"), csv.as_bytes())?;
            }
            println!(
                "emitted {} detected {} absorbed {} escaped {} (steps {})",
                result.n_emitted,
                result.n_detected,
                result.n_absorbed,
                result.n_escaped,
                result.total_steps
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
