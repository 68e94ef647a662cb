use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stratamix::error::Error;
use stratamix::gcode::MachineConfig;
use stratamix::pipeline::{plan_job, run_pipeline, validate_gcode, Comparison, PipelineConfig};
use stratamix::toolpath::{generate_test_shape, write_toolpaths, TestShape};

#[derive(Parser)]
#[command(
    name = "stratamix",
    version,
    about = "Compile toolpaths and a mixing-ratio field into strata mixing G-code"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set machine.k=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Full compile to G-code.
    Plan {
        #[command(flatten)]
        config: ConfigArgs,
        /// G-code output; overrides `output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Statistics report (JSON); overrides `report`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Strata plans only, printed as JSON.
    Optimize {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Check G-code against the field with the virtual printer.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        /// G-code to check; defaults to `output`.
        #[arg(short, long)]
        gcode: Option<PathBuf>,
    },
    /// Strata counts and print times with and without optimization.
    Stats {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a built-in shape as a toolpath file.
    GenTestShape {
        #[arg(long, value_enum)]
        shape: ShapeKind,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        depth: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        height: f64,
        /// Defaults to the machine default for the filament count.
        #[arg(long)]
        layer_thickness: Option<f64>,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeKind {
    ExtrudedRectangle,
    Cylinder,
    Disc,
}

/// A failed run: message plus process exit code.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Validation(_) => 2,
            Error::Internal(_) => 1,
            _ => 3,
        };
        Failure(code, e.to_string())
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e).into())
}

/// Writes to stdout, ending with a newline. A closed pipe is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
    let _ = out.flush();
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn load(args: &ConfigArgs) -> Result<PipelineConfig, Failure> {
    Ok(PipelineConfig::load(&args.config, &args.overrides)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan {
            config,
            output,
            report,
        } => {
            let mut cfg = load(&config)?;
            cfg.output = output.or(cfg.output);
            cfg.report = report.or(cfg.report);
            let out = run_pipeline(&cfg)?;
            let text = out.program.to_text();
            match &cfg.output {
                Some(p) => write_file(p, &text)?,
                None => emit(&text),
            }
            if let Some(p) = &cfg.report {
                write_file(p, &json(&out.stats))?;
            }
            eprintln!(
                "{} layers, {} strata, estimated {:.0} s",
                out.stats.layers.len(),
                out.stats.total_strata,
                out.stats.estimated_time_s
            );
        }
        Command::Optimize { config } => {
            let cfg = load(&config)?;
            cfg.validate()?;
            let field = cfg.load_field()?;
            let job = cfg.load_job()?;
            let planned = plan_job(&job, &field, &cfg)?;
            let plans: Vec<_> = planned
                .job
                .layers
                .iter()
                .map(|l| serde_json::json!({ "index": l.index, "z_top": l.z_top, "plan": l.plan }))
                .collect();
            emit(&json(&plans));
        }
        Command::Validate { config, gcode } => {
            let cfg = load(&config)?;
            cfg.validate()?;
            let path = gcode
                .or(cfg.output.clone())
                .ok_or_else(|| Failure(3, "no G-code file given".into()))?;
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Failure::from(Error::io(path.display().to_string(), e)))?;
            let field = cfg.load_field()?;
            let job = cfg.load_job()?;
            let report = validate_gcode(&text, &job, &field, &cfg).map_err(|e| match e {
                // malformed G-code is a failed check, not bad input
                Error::Parse { .. } => Failure(2, e.to_string()),
                other => other.into(),
            })?;
            emit(&json(&report));
            if !report.passed {
                return Err(Failure(
                    2,
                    format!(
                        "p95 deviation {:.4} exceeds budget {}",
                        report.fidelity.p95_dev, report.budget
                    ),
                ));
            }
        }
        Command::Stats { config } => {
            let cfg = load(&config)?;
            cfg.validate()?;
            let cmp = Comparison::run(&cfg.load_job()?, &cfg.load_field()?, &cfg)?;
            let name = config
                .config
                .file_stem()
                .map_or("job".into(), |s| s.to_string_lossy().into_owned());
            emit(&cmp.table_row(&name));
            if let Some(p) = &cfg.report {
                write_file(p, &json(&cmp))?;
            }
        }
        Command::GenTestShape {
            shape,
            width,
            depth,
            radius,
            height,
            layer_thickness,
            k,
            output,
        } => {
            let need = |v: Option<f64>, name: &str| {
                v.ok_or_else(|| Failure(3, format!("--{name} is required for this shape")))
            };
            let shape = match shape {
                ShapeKind::ExtrudedRectangle => TestShape::ExtrudedRectangle {
                    width: need(width, "width")?,
                    depth: need(depth, "depth")?,
                    height,
                },
                ShapeKind::Cylinder => TestShape::Cylinder {
                    radius: need(radius, "radius")?,
                    height,
                },
                ShapeKind::Disc => TestShape::Disc {
                    radius: need(radius, "radius")?,
                    height,
                },
            };
            let machine = MachineConfig::for_filaments(k);
            machine.validate()?;
            let t = layer_thickness.unwrap_or(machine.layer_thickness);
            let job = generate_test_shape(shape, t, machine)?;
            let text = write_toolpaths(&job);
            match output {
                Some(p) => write_file(&p, &text)?,
                None => emit(&text),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
