//! `calderon`: command-line front end for the DtN laboratory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use calderon_core::config::{ConductivitySpec, ExperimentConfig, GoldenRecord};
use calderon_core::geometry::{generate_prefractal, PrefractalSpec};
use calderon_core::harness::{configure_threads, run, validate_suite, SuiteOptions};
use calderon_core::mesh::{parse_mesh, triangulate, write_mesh, Mesh};
use calderon_core::report::write_dtn_csv;
use calderon_core::trace::assemble_dtn;
use calderon_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "calderon", version, about = "Dirichlet-to-Neumann experiments on prefractal domains")]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible reports.
    #[arg(long, global = true, env = "CALDERON_THREADS")]
    threads: Option<usize>,
    /// More diagnostics on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulate a prefractal domain and write the mesh text format.
    Mesh {
        #[arg(long, default_value = "square")]
        domain: PrefractalSpec,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the DtN matrix of a conductivity and write it as CSV.
    Dtn {
        #[arg(long, default_value = "square")]
        domain: PrefractalSpec,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        /// Read the mesh from a file instead of triangulating the domain.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long, default_value = "1")]
        gamma: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ‖Λ^γ1 − Λ^γ2‖ against ‖γ1 − γ2‖∞ and the stability constant.
    DirectStability(ExperimentArgs),
    /// Pointwise recovery of (γ1 − γ2)(x0) from the two DtN maps.
    BoundaryRecover(ExperimentArgs),
    /// Boundary stability curve over conductivity pairs.
    BoundaryStability(ExperimentArgs),
    /// Decay of CGO remainders in |ξ|.
    CgoDecay(ExperimentArgs),
    /// Logarithmic stability modulus over shrinking perturbations.
    DomainStability(ExperimentArgs),
    /// Run the built-in invariant battery.
    Validate {
        /// Corrupt the DtN assembly (flip the Schur correction sign) to
        /// confirm that the battery detects it.
        #[arg(long)]
        mutate_dtn_sign: bool,
    },
}

/// Experiment settings: a config file, optionally overridden by flags.
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long, alias = "gamma")]
    gamma1: Option<String>,
    #[arg(long)]
    gamma2: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    x0: Option<String>,
    /// Angle (radians) of ω1 for CGO frequencies.
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Compare the report against a golden record; mismatches exit with 2.
    #[arg(long)]
    golden: Option<PathBuf>,
    /// Write the report's golden record to this path.
    #[arg(long)]
    write_golden: Option<PathBuf>,
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        configure_threads(n)?;
    }
    match cli.command {
        Command::Mesh { domain, h, out } => {
            let mesh = triangulate(&generate_prefractal(&domain)?, h)?;
            emit(out.as_deref(), &write_mesh(&mesh))?;
            Ok(0)
        }
        Command::Dtn {
            domain,
            h,
            mesh,
            gamma,
            out,
        } => {
            let dom = generate_prefractal(&domain)?;
            let mesh: Mesh = match mesh {
                Some(path) => parse_mesh(&fs::read_to_string(path)?)?,
                None => triangulate(&dom, h)?,
            };
            let gamma = gamma.parse::<ConductivitySpec>()?.build(&dom)?;
            let dtn = assemble_dtn(&mesh, &gamma)?;
            emit(out.as_deref(), &write_dtn_csv(&dtn.matrix))?;
            Ok(0)
        }
        Command::DirectStability(a) => experiment("direct-stability", a),
        Command::BoundaryRecover(a) => experiment("boundary-recover", a),
        Command::BoundaryStability(a) => experiment("boundary-stability", a),
        Command::CgoDecay(a) => experiment("cgo-decay", a),
        Command::DomainStability(a) => experiment("domain-stability", a),
        Command::Validate { mutate_dtn_sign } => {
            let summary = validate_suite(SuiteOptions {
                flip_dtn_sign: mutate_dtn_sign,
            });
            print!("{}", summary.render());
            Ok(if summary.all_passed() { 0 } else { 2 })
        }
    }
}

fn experiment(kind: &str, a: ExperimentArgs) -> Result<u8> {
    let text = match &a.config {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut overrides: Vec<(&str, &str)> = Vec::new();
    let flags = [
        ("domain", &a.domain),
        ("h", &a.h),
        ("gamma1", &a.gamma1),
        ("gamma2", &a.gamma2),
        ("t", &a.t),
        ("tau", &a.tau),
        ("k", &a.k),
        ("x0", &a.x0),
        ("direction", &a.direction),
        ("seed", &a.seed),
        ("out", &a.out),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            overrides.push((key, v.as_str()));
        }
    }
    let cfg = ExperimentConfig::parse_with_overrides(&text, &overrides)
        .or_else(|e| match e {
            // A config without an experiment line takes it from the command.
            Error::Config(m) if m.contains("missing key 'experiment'") => {
                overrides.push(("experiment", kind));
                ExperimentConfig::parse_with_overrides(&text, &overrides)
            }
            other => Err(other),
        })?;
    if cfg.experiment.name() != kind {
        return Err(Error::Config(format!(
            "configuration is for '{}', not '{kind}'",
            cfg.experiment
        )));
    }
    let report = run(&cfg)?;
    emit(cfg.out.as_deref().map(Path::new), &report.to_csv())?;
    if let Some(path) = &a.write_golden {
        fs::write(path, GoldenRecord::from_report(&report, &cfg.hash()).to_text())?;
    }
    if let Some(path) = &a.golden {
        let golden = GoldenRecord::parse(&fs::read_to_string(path)?)?;
        let mismatches = golden.compare(&report, &cfg.hash());
        if !mismatches.is_empty() {
            for m in &mismatches {
                eprintln!("golden mismatch: {m}");
            }
            return Ok(2);
        }
    }
    Ok(0)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
