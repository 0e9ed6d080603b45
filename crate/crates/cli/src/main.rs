use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use villani::config::load_spec;
use villani::data::{write_generated, DataRecipe};
use villani::diagnostics::villani_scan;
use villani::dynamics::{run_sde_ensemble, run_sgd};
use villani::fpe::{build_grid, decay_rate, spectral_gap, tail_radius, Scheme};
use villani::harness::{emit_ablation_report, emit_report, run_ablation, run_sweep, AblationConfig, ReportFormat, SweepConfig};
use villani::{Activation, ActivationKind, Error, InitSpec, SdeConfig, SgdConfig};

const DEFAULT_FRACTIONS: [f64; 3] = [0.0, 0.5, 0.9];

#[derive(Parser)]
#[command(name = "villani", version, about = "Regularized depth-2 net training: constants, diagnostics, dynamics, sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Activation constant table, or the loss constants of a spec file.
    Constants {
        #[arg(long, conflicts_with = "spec")]
        activation: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Seeded ray scan of V_s = ‖∇L̃‖²/s − ΔL̃.
    VillaniScan {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 32)]
        rays: usize,
        #[arg(long, default_value_t = 1e3)]
        rmax: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mini-batch SGD from the spec's data.
    Train {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        sgd: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Euler–Maruyama ensemble of the SDE limit.
    Sde {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        tmax: f64,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to about 200 logged points per path.
        #[arg(long)]
        log_every: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fokker–Planck evolution from the uniform density (p·d ≤ 2).
    Fpe {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        s: f64,
        /// Box half-width; defaults to the certified tail radius.
        #[arg(long = "R")]
        r: Option<f64>,
        #[arg(long, default_value_t = 201)]
        m: usize,
        #[arg(long)]
        tmax: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        explicit: bool,
        /// Also print {gap, decay_rate, r_squared}.
        #[arg(long)]
        gap: bool,
        #[arg(long, required_unless_present = "gap")]
        out: Option<PathBuf>,
    },
    /// Synthetic dataset with test split and metadata sidecar.
    Gen {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// (λ, width) sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        svg: bool,
    },
    /// Noisy-label ablation; the config may carry a `fractions` list.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        svg: bool,
    },
}

/// Bad input exits with 2, failures while running with 1.
enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged(_) | Error::Numerical(_) | Error::Io(_) => Failure::Run(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| config_err(path, e))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, v: Value) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| config_err(path, e))
}

fn spec_from(path: &Path) -> Result<villani::LossSpec, Failure> {
    load_spec(path).map_err(|e| config_err(path, e))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize")
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Run(e.to_string()))?;
    }
    fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn formats(svg: bool) -> Vec<ReportFormat> {
    if svg {
        vec![ReportFormat::Svg]
    } else {
        Vec::new()
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Constants { activation, beta, spec } => match (activation, spec) {
            (Some(name), None) => {
                let act = Activation::new(ActivationKind::from_name(&name, beta)?)?;
                println!("{}", pretty(&serde_json::to_value(act).expect("constants serialize")));
            }
            (None, Some(path)) => {
                let spec = spec_from(&path)?;
                let glip = spec.glip_bound().ok();
                println!(
                    "{}",
                    pretty(&json!({
                        "lambda_c": spec.lambda_c(),
                        "glip_bound": glip,
                        "B_x": spec.data().b_x(),
                        "B_y": spec.data().b_y(),
                        "a_norm": spec.net().a_norm(),
                    }))
                );
            }
            _ => return Err(Failure::Config("give exactly one of --activation and --spec".into())),
        },
        Command::VillaniScan { spec, s, rays, rmax, seed, out } => {
            let spec = spec_from(&spec)?;
            let report = villani_scan(&spec, s, rays, rmax, seed)?;
            write_text(&out, &pretty(&serde_json::to_value(&report).expect("report serializes")))?;
            println!("diverging: {}", report.diverging);
        }
        Command::Train { spec, sgd, out } => {
            let loss = spec_from(&spec)?;
            let cfg: SgdConfig = parse(&sgd, read_json(&sgd)?)?;
            let traj = run_sgd(&loss, &cfg)?;
            traj.write_csv(&out)?;
            println!("final loss {}", traj.final_loss());
        }
        Command::Sde { spec, s, dt, tmax, paths, seed, log_every, out } => {
            let loss = spec_from(&spec)?;
            let steps = (tmax / dt).ceil().max(1.0) as usize;
            let cfg = SdeConfig {
                s,
                dt,
                t_max: tmax,
                seed,
                init: InitSpec::Auto,
                log_every: log_every.unwrap_or((steps / 200).max(1)),
            };
            let trajs = run_sde_ensemble(&loss, &cfg, paths)?;
            let mut csv = String::from("path,step,time,loss,grad_norm\n");
            for (k, t) in trajs.iter().enumerate() {
                for i in 0..t.len() {
                    csv.push_str(&format!("{k},{},{},{},{}\n", t.steps[i], t.times[i], t.losses[i], t.grad_norms[i]));
                }
            }
            write_text(&out, &csv)?;
        }
        Command::Fpe { spec, s, r, m, tmax, dt, explicit, gap, out } => {
            let loss = spec_from(&spec)?;
            let r = match r {
                Some(r) => r,
                None => tail_radius(&loss, s)?,
            };
            let mut grid = build_grid(&loss, r, m, s)?;
            let scheme = if explicit { Scheme::Explicit } else { Scheme::Implicit };
            let lambda_s = if gap { Some(spectral_gap(&grid)?) } else { None };
            let fit = decay_rate(&mut grid, tmax, dt, scheme)?;
            if let Some(out) = out {
                let mut csv = String::from("t,chi2,mass\n");
                for ((t, c), mass) in fit.times.iter().zip(&fit.chi_series).zip(&fit.masses) {
                    csv.push_str(&format!("{t},{c},{mass}\n"));
                }
                write_text(&out, &csv)?;
            }
            if let Some(g) = lambda_s {
                println!("{}", pretty(&json!({"gap": g, "decay_rate": fit.rate, "r_squared": fit.r_squared})));
            }
        }
        Command::Gen { recipe, out } => {
            let r: DataRecipe = parse(&recipe, read_json(&recipe)?)?;
            r.validate()?;
            let files = write_generated(&r, &r.generate()?, &out)?;
            println!("{}", files.meta.display());
        }
        Command::Sweep { config, out, jobs, svg } => {
            let mut cfg: SweepConfig = parse(&config, read_json(&config)?)?;
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            cfg.validate()?;
            let result = run_sweep(&cfg)?;
            emit_report(&result, &out, &formats(svg))?;
            println!("best metric {}", result.min());
        }
        Command::Ablate { config, out, jobs, svg } => {
            let mut raw = read_json(&config)?;
            let fractions: Vec<f64> = match raw.as_object_mut().and_then(|o| o.remove("fractions")) {
                Some(v) => parse(&config, v)?,
                None => DEFAULT_FRACTIONS.to_vec(),
            };
            let mut cfg: AblationConfig = parse(&config, raw)?;
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            let result = run_ablation(&cfg, &fractions)?;
            emit_ablation_report(&result, &out, &formats(svg))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
