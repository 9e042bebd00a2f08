mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flatflow::flow::{self, RunStatus, RunSummary};
use flatflow::geometry::{build_shape, io, remesh, DiscreteSurface, ShapeSpec};
use flatflow::mm_step::{check_health, step, Reference};
use flatflow::oracles::{self, RoundShape};
use flatflow::{exec, Error};
use serde::Serialize;

use config::{parse_config, RunConfig};
use manifest::{file_digest, ExitStatus, RunManifest};

/// Surface diffusion of closed curves and surfaces by constrained minimizing movements.
#[derive(Parser, Debug)]
#[command(name = "flatflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the flow and write diagnostics, snapshots and a manifest.
    Run(Common),
    /// Take a single step from the seed shape and print its result.
    Step(Common),
    /// Report curvature, UBC and stationarity of the seed shape.
    Check(Common),
    /// Print the linearized decay rates around a circle or sphere.
    Spectrum(SpectrumArgs),
    /// Run at h, h/2, h/4, ... to the same final time and report the observed order.
    Converge(ConvergeArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace a configuration value, written `section.key=value`. Repeatable.
    #[arg(long = "override", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoundKind {
    Circle,
    Sphere,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long, value_enum)]
    shape: RoundKind,
    /// Radius.
    #[arg(long = "R", default_value_t = 1.0)]
    radius: f64,
    /// Largest mode (Fourier k or harmonic degree l).
    #[arg(long, default_value_t = 5)]
    kmax: u32,
    /// Also check each decaying rate against one step of the full scheme.
    #[arg(long)]
    verify: bool,
    /// Directory for the verification report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    /// Number of time steps, each half the previous one.
    #[arg(long, default_value_t = 3)]
    levels: u32,
}

enum Failure {
    /// Bad arguments, configuration or input files.
    Usage(String),
    /// The solver failed; diagnostics have been written where possible.
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidShape(_) | Error::Parse(_) | Error::Io(_) | Error::Json(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(f) = configure_threads() {
        return report(f);
    }
    let result = match cli.command {
        Command::Run(c) => cmd_run(&c),
        Command::Step(c) => cmd_step(&c),
        Command::Check(c) => cmd_check(&c),
        Command::Spectrum(s) => cmd_spectrum(&s),
        Command::Converge(c) => cmd_converge(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    match &f {
        Failure::Usage(m) => eprintln!("error: {m}\n\nRun 'flatflow --help' for usage."),
        Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
    }
    ExitCode::from(f.code())
}

fn configure_threads() -> Outcome {
    if let Ok(v) = std::env::var("FLATFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Usage(format!("FLATFLOW_THREADS must be a positive integer, got '{v}'")))?;
        exec::init_thread_pool(n);
    }
    Ok(())
}

struct Loaded {
    cfg: RunConfig,
    inputs: BTreeMap<String, String>,
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let text = std::fs::read(&c.config)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", c.config.display())))?;
    let base = c.config.parent().unwrap_or(Path::new("."));
    let text_str =
        std::str::from_utf8(&text).map_err(|_| Failure::Usage(format!("{} is not UTF-8", c.config.display())))?;
    let cfg = parse_config(text_str, &c.overrides, base)
        .map_err(|e| Failure::Usage(format!("{}: {e}", c.config.display())))?;
    let mut inputs = BTreeMap::new();
    inputs.insert("config".to_string(), manifest::sha256_hex(&text));
    if let ShapeSpec::File { path } = &cfg.flow.shape {
        let d = file_digest(path).map_err(|e| Failure::Usage(format!("cannot read shape {}: {e}", path.display())))?;
        inputs.insert("shape".to_string(), d);
    }
    Ok(Loaded { cfg, inputs })
}

fn out_dir(c: &Common, required: bool) -> Result<Option<PathBuf>, Failure> {
    match &c.out {
        Some(d) => {
            std::fs::create_dir_all(d)
                .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", d.display())))?;
            Ok(Some(d.clone()))
        }
        None if required => Err(Failure::Usage("--out is required for this command".into())),
        None => Ok(None),
    }
}

fn snapshot_name(step: usize, surface: &DiscreteSurface) -> String {
    format!("snap_{step:06}.{}", if surface.is_curve() { "json" } else { "off" })
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn cmd_run(c: &Common) -> Outcome {
    let Loaded { cfg, inputs } = load(c)?;
    let dir = out_dir(c, true)?.unwrap();
    let mut m = RunManifest::new("run", cfg.flow.clone(), c.overrides.clone());
    m.inputs = inputs;

    let outcome = match flow::run(&cfg.flow) {
        Ok(o) => o,
        Err(e) => {
            let f = Failure::from(e);
            if let Failure::Numerical(msg) = &f {
                m.exit = ExitStatus {
                    code: 2,
                    status: "error".into(),
                    message: Some(msg.clone()),
                };
                m.write(&dir)?;
            }
            return Err(f);
        }
    };

    let csv = dir.join(&cfg.diagnostics);
    let mut bytes = Vec::new();
    flow::write_csv(&outcome.rows, &mut bytes)?;
    std::fs::write(&csv, &bytes)?;
    m.outputs.insert(cfg.diagnostics.clone(), manifest::sha256_hex(&bytes));
    if cfg.snapshots {
        for (k, s) in &outcome.snapshots {
            let name = snapshot_name(*k, s);
            let path = dir.join(&name);
            io::save_surface(s, &path)?;
            m.outputs.insert(name, file_digest(&path)?);
        }
    }
    let summary = RunSummary::from_rows(&outcome.rows);
    m.summary = Some(summary.clone());
    let halted = match &outcome.status {
        RunStatus::Completed => None,
        RunStatus::Halted { step, reason } => Some(format!("halted at step {step}: {reason}")),
    };
    if let Some(msg) = &halted {
        m.exit = ExitStatus {
            code: 2,
            status: "halted".into(),
            message: Some(msg.clone()),
        };
    }
    m.write(&dir)?;

    if let Some(msg) = halted {
        return Err(Failure::Numerical(msg));
    }
    if !c.quiet {
        println!(
            "completed {} steps to t = {}: perimeter drop {:.6e}, max volume drift {:.3e}, max margin {:.3e}",
            summary.steps, summary.final_time, summary.perimeter_drop, summary.max_volume_drift, summary.max_constraint_margin
        );
        println!("wrote {}", dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct StepReport {
    h: f64,
    delta: f64,
    converged: bool,
    used_fallback: bool,
    picard_iters: usize,
    distance: f64,
    distance_over_h: f64,
    multipliers: Vec<f64>,
    multiplier_spread: Vec<f64>,
    el_residual: f64,
    constraint_margin: f64,
    max_abs_psi: f64,
    residual_history: Vec<f64>,
    perimeter_before: f64,
    perimeter_after: f64,
}

fn cmd_step(c: &Common) -> Outcome {
    let Loaded { cfg, .. } = load(c)?;
    let dir = out_dir(c, false)?;
    let seed = build_shape(&cfg.flow.shape)?;
    let reference = Reference::new(seed)?;
    let step_cfg = &cfg.flow.step;
    check_health(&reference, step_cfg)?;
    let res = step(&reference, step_cfg)?;
    let report = StepReport {
        h: step_cfg.h,
        delta: res.delta,
        converged: res.converged,
        used_fallback: res.used_fallback,
        picard_iters: res.picard_iters,
        distance: res.distance,
        distance_over_h: res.distance / step_cfg.h,
        multipliers: res.multipliers.clone(),
        multiplier_spread: res.multiplier_spread.clone(),
        el_residual: res.el_residual,
        constraint_margin: res.constraint_margin,
        max_abs_psi: res.psi.iter().fold(0.0, |m, v| m.max(v.abs())),
        residual_history: res.residual_history.clone(),
        perimeter_before: reference.surface.measure().perimeter,
        perimeter_after: res.graph.measure().perimeter,
    };
    if let Some(dir) = &dir {
        std::fs::write(dir.join("step.json"), serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n")?;
        io::save_surface(&res.graph, &dir.join(snapshot_name(1, &res.graph)))?;
    }
    if !c.quiet {
        print_json(&report)?;
    }
    if !res.converged {
        return Err(Failure::Numerical(format!(
            "step did not converge in {} iterations",
            res.picard_iters
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckReport {
    dimension: usize,
    vertices: usize,
    components: usize,
    perimeter: f64,
    volumes: Vec<f64>,
    max_abs_curvature: f64,
    ubc_estimate: f64,
    stationarity: f64,
    needs_remesh: bool,
    healthy: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<String>,
}

fn cmd_check(c: &Common) -> Outcome {
    let Loaded { cfg, .. } = load(c)?;
    let dir = out_dir(c, false)?;
    let seed = build_shape(&cfg.flow.shape)?;
    let reference = Reference::new(seed)?;
    let measure = reference.surface.measure();
    let health = check_health(&reference, &cfg.flow.step);
    let report = CheckReport {
        dimension: if reference.surface.is_curve() { 2 } else { 3 },
        vertices: reference.n(),
        components: reference.surface.n_components(),
        perimeter: measure.perimeter,
        volumes: measure.volumes.clone(),
        max_abs_curvature: reference.curvature.max_abs_principal(),
        ubc_estimate: reference.ubc,
        stationarity: oracles::stationarity_check(&reference.surface)?,
        needs_remesh: remesh::needs_remesh(&reference.surface, &cfg.flow.remesh),
        healthy: health.is_ok(),
        problem: health.as_ref().err().map(|e| e.to_string()),
    };
    if let Some(dir) = &dir {
        std::fs::write(dir.join("check.json"), serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n")?;
    }
    if !c.quiet {
        print_json(&report)?;
    }
    match health {
        Ok(()) => Ok(()),
        Err(e) => Err(Failure::Numerical(e.to_string())),
    }
}

fn cmd_spectrum(s: &SpectrumArgs) -> Outcome {
    if !(s.radius > 0.0 && s.radius.is_finite()) {
        return Err(Failure::Usage(format!("--R must be positive, got {}", s.radius)));
    }
    let shape = match s.shape {
        RoundKind::Circle => RoundShape::Circle { radius: s.radius },
        RoundKind::Sphere => RoundShape::Sphere { radius: s.radius },
    };
    if !s.quiet {
        println!("{:>4}  rate", if matches!(s.shape, RoundKind::Circle) { "k" } else { "l" });
        for row in oracles::spectrum(shape, s.kmax) {
            println!("{:>4}  {}", row.mode, row.rate);
        }
    }
    if s.verify {
        let cases: Vec<_> = (2..=s.kmax)
            .map(|k| match s.shape {
                RoundKind::Circle => (shape, k, 1e-2 * s.radius, 512),
                RoundKind::Sphere => (shape, k, 2e-2 * s.radius, 4),
            })
            .collect();
        let table = oracles::verification_table(&cases)?;
        let mut bytes = Vec::new();
        oracles::write_rate_report(&table, &mut bytes)?;
        bytes.push(b'\n');
        match &s.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("rate_verification.json"), &bytes)?;
            }
            None if !s.quiet => print!("{}", String::from_utf8_lossy(&bytes)),
            None => {}
        }
    }
    Ok(())
}

fn cmd_converge(a: &ConvergeArgs) -> Outcome {
    let c = &a.common;
    let Loaded { cfg, inputs } = load(c)?;
    let dir = out_dir(c, false)?;
    if a.levels < 2 {
        return Err(Failure::Usage(format!("--levels must be at least 2, got {}", a.levels)));
    }
    let h0 = cfg.flow.step.h;
    let t_final = cfg.flow.t_final.unwrap_or_else(|| cfg.flow.n_steps.unwrap() as f64 * h0);
    let hs: Vec<f64> = (0..a.levels).map(|i| h0 / 2f64.powi(i as i32)).collect();
    // every h here divides t_final, so a configuration error can only be a halted run
    let table = flow::self_convergence(&cfg.flow, &hs, t_final).map_err(|e| match e {
        Error::Config(m) => Failure::Numerical(m),
        other => Failure::from(other),
    })?;
    if let Some(dir) = &dir {
        let bytes = serde_json::to_string_pretty(&table).map_err(Error::from)? + "\n";
        std::fs::write(dir.join("convergence.json"), &bytes)?;
        let mut m = RunManifest::new("converge", cfg.flow.clone(), c.overrides.clone());
        m.inputs = inputs;
        m.outputs.insert("convergence.json".into(), manifest::sha256_hex(bytes.as_bytes()));
        m.write(dir)?;
    }
    if !c.quiet {
        print_json(&table)?;
    }
    Ok(())
}
