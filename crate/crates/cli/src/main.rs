//! `birkhoff`: batch front end for the experiments in `birkhoff-core`.
//!
//! Exit status: 0 success, 2 acceptance-gate failure, 1 operational error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use birkhoff_core::experiment::{run, Experiment, RunConfig, RunManifest, ARTIFACT_VERSION};
use birkhoff_core::flow::Method;
use birkhoff_core::{IntegratorConfig, ModelParams, SetPredicate};
use clap::{Args, Parser, Subcommand};

use config::{load_config, parse_list, CliError, Settings};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "BIRKHOFF_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "birkhoff-out";

#[derive(Parser)]
#[command(name = "birkhoff", version, about = "Truncated Birkhoff normal-form flow and Gibbs-measure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw Gaussian samples, check their covariance and export them.
    Sample(Common),
    /// Evolve in-ball states and report conservation diagnostics.
    Evolve(Common),
    /// Homological identity and single-mode fixed points.
    CheckIdentities(Common),
    /// Change-of-variable check for one or more sets (`--set`).
    TransportVerify(Common),
    /// L^p moments of the energy derivative and their growth exponent.
    Moments(Common),
    /// Truncation decay of the energy derivative.
    Decay(Common),
    /// Exponential moments of the quartic functional across truncations.
    ExpMoment(Common),
    /// Convergence of truncated flows against a reference truncation.
    Convergence(Common),
    /// Finite-difference Jacobian determinant of the flow map.
    Jacobian(Common),
    /// Rerun the configuration stored in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $BIRKHOFF_OUT_DIR, else ./birkhoff-out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<i8>,
    /// Truncation N.
    #[arg(long = "n", alias = "n-trunc")]
    n_trunc: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    /// Number of states for evolve, check-identities and jacobian.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    /// rk45_adaptive or rk4_fixed.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Comma-separated, e.g. 2,4,6.
    #[arg(long)]
    p_list: Option<String>,
    #[arg(long)]
    m_list: Option<String>,
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    n_ref: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    s_prime: Option<f64>,
    /// Set predicate, repeatable: `re(uK)>x`, `im(uK)>x`, `hs(s)<=r`, `l4<=c`.
    #[arg(long = "set")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Settings, CliError> {
        let file = match &self.config {
            Some(path) => load_config(path)?,
            None => Settings::default(),
        };
        let method = self
            .method
            .as_deref()
            .map(|m| {
                m.parse::<Method>().map_err(|e| CliError::BadFlag {
                    flag: "method".into(),
                    message: e.to_string(),
                })
            })
            .transpose()?;
        let set = if self.set.is_empty() {
            None
        } else {
            Some(
                self.set
                    .iter()
                    .map(|s| {
                        s.parse::<SetPredicate>().map_err(|e| CliError::BadFlag {
                            flag: "set".into(),
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            )
        };
        let flags = Settings {
            alpha: self.alpha,
            sigma: self.sigma,
            n_trunc: self.n_trunc,
            radius: self.radius,
            seed: self.seed,
            count: self.count,
            samples: self.samples,
            workers: self.workers,
            t: self.t,
            method,
            rel_tol: self.rel_tol,
            dt: self.dt,
            p_list: self.p_list.as_deref().map(|s| parse_list("p-list", s)).transpose()?,
            m_list: self.m_list.as_deref().map(|s| parse_list("m-list", s)).transpose()?,
            n_list: self.n_list.as_deref().map(|s| parse_list("n-list", s)).transpose()?,
            n_ref: self.n_ref,
            lambda: self.lambda,
            s: self.s,
            s_prime: self.s_prime,
            set,
        };
        Ok(file.overlay(flags))
    }
}

fn required<T>(value: Option<T>, key: &str, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::MissingKey {
        key: key.into(),
        flag: flag.into(),
    })
}

fn build_config(command: &Command, s: Settings) -> Result<RunConfig, CliError> {
    let params = ModelParams::new(
        required(s.alpha, "alpha", "alpha")?,
        s.sigma.unwrap_or(1),
        required(s.n_trunc, "n_trunc", "n")?,
        s.radius.unwrap_or(1.0),
    )?;
    let mut integrator = IntegratorConfig::default();
    if let Some(m) = s.method {
        integrator.method = m;
    }
    if let Some(tol) = s.rel_tol {
        integrator.rel_tol = tol;
    }
    if let Some(dt) = s.dt {
        integrator.dt = dt;
    }
    let count = s.count.unwrap_or(100_000);
    let experiment = match command {
        Command::Sample(_) => Experiment::Sample {
            count: s.count.unwrap_or(1000),
        },
        Command::Evolve(_) => Experiment::Evolve {
            t: s.t.unwrap_or(1.0),
            samples: s.samples.unwrap_or(10),
        },
        Command::CheckIdentities(_) => Experiment::CheckIdentities {
            samples: s.samples.unwrap_or(20),
        },
        Command::TransportVerify(_) => Experiment::TransportVerify {
            t: required(s.t, "t", "t")?,
            count,
            predicates: required(s.set, "set", "set")?,
        },
        Command::Moments(_) => Experiment::Moments {
            count,
            p_list: s.p_list.unwrap_or_else(|| (2..=10).map(f64::from).collect()),
        },
        Command::Decay(_) => Experiment::Decay {
            count,
            m_list: required(s.m_list, "m_list", "m-list")?,
        },
        Command::ExpMoment(_) => Experiment::ExpMoment {
            count,
            lambda: s.lambda.unwrap_or(0.5),
            n_list: required(s.n_list, "n_list", "n-list")?,
        },
        Command::Convergence(_) => Experiment::Convergence {
            t: s.t.unwrap_or(1.0),
            s: s.s.unwrap_or(1.0),
            s_prime: s.s_prime.unwrap_or(0.0),
            n_list: required(s.n_list, "n_list", "n-list")?,
            n_ref: s.n_ref,
        },
        Command::Jacobian(_) => Experiment::Jacobian {
            t: s.t.unwrap_or(0.5),
            samples: s.samples.unwrap_or(5),
        },
        Command::Replay { .. } => unreachable!("replay reads its configuration from a manifest"),
    };
    Ok(RunConfig {
        params,
        integrator,
        seed: s.seed.unwrap_or(0),
        workers: s.workers.unwrap_or(1),
        experiment,
    })
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_lf(dir: &Path, name: &str, bytes: &[u8], outputs: &mut Vec<String>) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes)?;
    outputs.push(path.display().to_string());
    Ok(())
}

/// Runs one configuration and writes its data files; returns whether all gates passed.
fn execute(cfg: RunConfig, out: &Path) -> Result<bool, CliError> {
    std::fs::create_dir_all(out)?;
    let started = unix_now();
    let result = run(&cfg).map_err(|e| {
        eprintln!(
            "error in `{}` (seed {}, params {:?}); rerun with the same flags or `birkhoff replay` to reproduce",
            cfg.experiment.name(),
            cfg.seed,
            cfg.params
        );
        CliError::Core(e)
    })?;
    let mut outputs = Vec::new();
    write_lf(out, "results.jsonl", result.jsonl().as_bytes(), &mut outputs)?;
    write_lf(out, "summary.csv", result.csv().as_bytes(), &mut outputs)?;
    for (name, bytes) in &result.files {
        write_lf(out, name, bytes, &mut outputs)?;
    }
    let manifest_path = out.join("manifest.json");
    outputs.push(manifest_path.display().to_string());
    let manifest = RunManifest {
        config: cfg,
        artifact_version: ARTIFACT_VERSION.to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&manifest_path, text)?;

    print!("{}", result.csv());
    if !result.gate_passed {
        eprintln!("acceptance gate failed; see {}", out.join("summary.csv").display());
    }
    Ok(result.gate_passed)
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Replay { manifest, workers, out } => {
            let text = std::fs::read_to_string(&manifest).map_err(|source| CliError::Read {
                path: manifest.clone(),
                source,
            })?;
            let mut recorded: RunManifest = serde_json::from_str(&text)?;
            if let Some(w) = workers {
                recorded.config.workers = w;
            }
            execute(recorded.config, &out_dir(out))
        }
        command => {
            let common = match &command {
                Command::Sample(c)
                | Command::Evolve(c)
                | Command::CheckIdentities(c)
                | Command::TransportVerify(c)
                | Command::Moments(c)
                | Command::Decay(c)
                | Command::ExpMoment(c)
                | Command::Convergence(c)
                | Command::Jacobian(c) => c.clone(),
                Command::Replay { .. } => unreachable!(),
            };
            let cfg = build_config(&command, common.settings()?)?;
            execute(cfg, &out_dir(common.out))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
