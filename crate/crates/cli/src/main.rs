//! `phasekit` batch front end.
//!
//! Exit codes: 0 on PASS, 2 for usage or parse errors (nothing written),
//! 3 for numerical-validation failures.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{parse_angle_list, parse_pair, parse_tol, parse_usize_list, resolve_tolerances, usage, Format, RunConfig};

#[derive(Parser)]
#[command(name = "phasekit", version, about = "Phase-operator numerics on truncated Fock spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase CDF and density of a state under the canonical phase measurement.
    PhaseDist(Opts),
    /// Matrix elements of f(φ_s) against the measurement moment over a list of s.
    PbConverge(Opts),
    /// Susskind–Glogower operators against the first trigonometric moments.
    SgCheck(Opts),
    /// Compressed spectral family against the phase-measurement CDF kernel.
    Naimark(Opts),
    /// Bayes-risk minimization over rank-one covariant kernels.
    RiskOpt(Opts),
    /// Classical-limit report for a matrix-element generator.
    MacroLimit(Opts),
    /// Re-runs a command from its config echo.
    Replay {
        config: String,
        /// Write here instead of the path recorded in the echo.
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    nu: Option<usize>,
    /// number:n | coherent:re,im | amps:<path> | uniform:k
    #[arg(long)]
    state: Option<String>,
    /// theta | theta2 | cos | sin | expi | fourier:<path>
    #[arg(long = "f")]
    f: Option<String>,
    /// sin2 | delta | custom:<path>
    #[arg(long = "w")]
    w: Option<String>,
    /// n,n'
    #[arg(long)]
    pair: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated angles; `pi`, `pi/4`, `7pi/4` accepted.
    #[arg(long)]
    theta: Option<String>,
    /// Comma-separated dimensions.
    #[arg(long)]
    dims: Option<String>,
    /// auto | mixed | diagonal
    #[arg(long)]
    probes: Option<String>,
    /// identity | constant:re[,im] | diag:n_over_n_plus_1 | inv_sum | sg_cos
    #[arg(long = "gen")]
    generator: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// NAME=VAL, repeatable.
    #[arg(long, value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
}

struct Spec {
    name: &'static str,
    allowed: &'static [&'static str],
    formats: &'static [Format],
    tolerances: &'static [(&'static str, f64)],
}

const PHASE_DIST: Spec = Spec {
    name: "phase-dist",
    allowed: &["dim", "state", "grid"],
    formats: &[Format::Csv, Format::Json],
    tolerances: &[],
};
const PB_CONVERGE: Spec = Spec {
    name: "pb-converge",
    allowed: &["f", "pair", "dims"],
    formats: &[Format::Csv, Format::Json],
    tolerances: &[("exact", 1e-12), ("slope", 0.1)],
};
const SG_CHECK: Spec = Spec {
    name: "sg-check",
    allowed: &["dim"],
    formats: &[Format::Json],
    tolerances: &[("sg", 1e-12)],
};
const NAIMARK: Spec = Spec {
    name: "naimark",
    allowed: &["nu", "pair", "theta", "dims"],
    formats: &[Format::Csv, Format::Json],
    tolerances: &[("naimark", 1e-3)],
};
const RISK_OPT: Spec = Spec {
    name: "risk-opt",
    allowed: &["dim", "state", "w", "seed"],
    formats: &[Format::Json],
    tolerances: &[("risk", 1e-6), ("quadrature", 1e-6)],
};
const MACRO_LIMIT: Spec = Spec {
    name: "macro-limit",
    allowed: &["nu", "probes", "generator"],
    formats: &[Format::Json],
    tolerances: &[("cauchy", 1e-3)],
};

fn spec_for(name: &str) -> Result<&'static Spec> {
    [&PHASE_DIST, &PB_CONVERGE, &SG_CHECK, &NAIMARK, &RISK_OPT, &MACRO_LIMIT]
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| usage(format!("unknown command `{name}`")))
}

fn lift<T>(r: std::result::Result<T, String>) -> Result<T> {
    r.map_err(usage)
}

fn resolve(spec: &Spec, o: Opts) -> Result<RunConfig> {
    let given = [
        ("dim", o.dim.is_some()),
        ("nu", o.nu.is_some()),
        ("state", o.state.is_some()),
        ("f", o.f.is_some()),
        ("w", o.w.is_some()),
        ("pair", o.pair.is_some()),
        ("grid", o.grid.is_some()),
        ("theta", o.theta.is_some()),
        ("dims", o.dims.is_some()),
        ("probes", o.probes.is_some()),
        ("generator", o.generator.is_some()),
        ("seed", o.seed.is_some()),
    ];
    for (flag, present) in given {
        if present && !spec.allowed.contains(&flag) {
            let shown = if flag == "generator" { "gen" } else { flag };
            return Err(usage(format!("--{shown} does not apply to {}", spec.name)));
        }
    }
    let format = o.format.unwrap_or(spec.formats[0]);
    if !spec.formats.contains(&format) {
        return Err(usage(format!("{} does not support --format {format:?}", spec.name).to_lowercase()));
    }
    let mut cfg = RunConfig {
        command: spec.name.to_string(),
        dim: o.dim,
        nu: o.nu,
        state: o.state,
        f: o.f,
        w: o.w,
        pair: o.pair.as_deref().map(parse_pair).transpose().map_err(usage)?,
        grid: o.grid,
        theta: o.theta.as_deref().map(parse_angle_list).transpose().map_err(usage)?,
        dims: o.dims.as_deref().map(parse_usize_list).transpose().map_err(usage)?,
        probes: o.probes,
        generator: o.generator,
        out: o.out,
        format,
        seed: o.seed.unwrap_or(0),
        tol: resolve_tolerances(&o.tol, spec.tolerances)?,
    };
    let is_amps = cfg.state.as_deref().is_some_and(|s| s.starts_with("amps:"));
    match spec.name {
        "phase-dist" => {
            if cfg.state.is_none() {
                return Err(usage("--state is required"));
            }
            if !is_amps {
                cfg.dim = cfg.dim.or(Some(32));
            }
            cfg.grid = cfg.grid.or(Some(256));
            if cfg.grid == Some(0) {
                return Err(usage("--grid must be positive"));
            }
        }
        "pb-converge" => {
            cfg.f = cfg.f.or(Some("theta".into()));
            cfg.pair = cfg.pair.or(Some([0, 1]));
            cfg.dims = cfg.dims.or(Some(vec![64, 128, 256, 512, 1024, 2048, 4096]));
        }
        "sg-check" => cfg.dim = cfg.dim.or(Some(64)),
        "naimark" => {
            if cfg.dims.is_some() && cfg.nu.is_some() {
                return Err(usage("give either --nu or --dims"));
            }
            if cfg.dims.is_none() {
                cfg.nu = cfg.nu.or(Some(1 << 14));
            }
            cfg.pair = cfg.pair.or(Some([0, 1]));
            cfg.theta = cfg.theta.or(Some(lift(parse_angle_list("pi/4,pi,7pi/4"))?));
        }
        "risk-opt" => {
            if cfg.state.is_none() {
                return Err(usage("--state is required"));
            }
            cfg.w = cfg.w.or(Some("sin2".into()));
        }
        "macro-limit" => {
            if cfg.generator.is_none() {
                return Err(usage("--gen is required"));
            }
            cfg.nu = cfg.nu.or(Some(1 << 16));
            cfg.probes = cfg.probes.or(Some("auto".into()));
        }
        _ => unreachable!(),
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<commands::Report> {
    match cfg.command.as_str() {
        "phase-dist" => commands::phase_dist(cfg),
        "pb-converge" => commands::pb_converge(cfg),
        "sg-check" => commands::sg_check(cfg),
        "naimark" => commands::naimark(cfg),
        "risk-opt" => commands::risk_opt(cfg),
        "macro-limit" => commands::macro_limit(cfg),
        other => Err(usage(format!("unknown command `{other}`"))),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PHASEKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("PHASEKIT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    let cfg = match cli.command {
        Command::Replay { config, out } => {
            let text = fs::read_to_string(&config).map_err(|e| usage(format!("cannot read `{config}`: {e}")))?;
            let mut cfg = RunConfig::from_json(&text)?;
            let spec = spec_for(&cfg.command)?;
            // re-validate the echo the same way as fresh flags
            cfg.tol = resolve_tolerances(&cfg.tol.clone().into_iter().collect::<Vec<_>>(), spec.tolerances)?;
            if out.is_some() {
                cfg.out = out;
            }
            cfg
        }
        Command::PhaseDist(o) => resolve(&PHASE_DIST, o)?,
        Command::PbConverge(o) => resolve(&PB_CONVERGE, o)?,
        Command::SgCheck(o) => resolve(&SG_CHECK, o)?,
        Command::Naimark(o) => resolve(&NAIMARK, o)?,
        Command::RiskOpt(o) => resolve(&RISK_OPT, o)?,
        Command::MacroLimit(o) => resolve(&MACRO_LIMIT, o)?,
    };
    let report = execute(&cfg)?;
    match &cfg.out {
        Some(path) => {
            fs::write(path, &report.body).with_context(|| format!("writing {path}"))?;
            let echo = format!("{path}.config.json");
            fs::write(&echo, cfg.to_canonical_json()).with_context(|| format!("writing {echo}"))?;
        }
        None => {
            std::io::stdout().write_all(report.body.as_bytes())?;
        }
    }
    println!("{}", report.summary);
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.downcast_ref::<std::io::Error>().is_some() {
                1
            } else {
                commands::exit_code(&err)
            };
            ExitCode::from(code)
        }
    }
}
