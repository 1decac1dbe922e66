use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use liveia_core::radiance::RadianceParams;
use liveia_core::scene::{self, deserialize, serialize, Scenario};
use liveia_service::engine::{self, BeamRef, DecomposeRequest, SuperposeRequest, TraceRequest};
use liveia_service::{ApiError, ErrorCode, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "liveia", version, about = "Optical simulation of psyches, thoughts and situations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario document.
    Validate { file: PathBuf },
    /// Render a scenario to SVG, or a sphere's radiance heatmap to PPM.
    Render {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::View)]
        mode: Mode,
        #[arg(long)]
        focus: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Svg)]
        format: Format,
        /// Sphere for PPM output; defaults to the focus, then the first sphere.
        #[arg(long)]
        sphere: Option<String>,
        #[command(flatten)]
        radiance: RadianceArgs,
    },
    /// Trace one beam and report its ray paths.
    Trace {
        file: PathBuf,
        #[arg(long)]
        beam: String,
        /// Write the paths here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        max_events: Option<u32>,
        #[arg(long)]
        min_intensity: Option<f64>,
    },
    /// Equilibrium metrics for one sphere.
    Metrics {
        file: PathBuf,
        #[arg(long)]
        sphere: String,
        #[command(flatten)]
        radiance: RadianceArgs,
    },
    /// Write a fork of a scenario.
    Fork {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Waveform tools.
    Wave {
        #[command(subcommand)]
        command: WaveCommand,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, env = "LIVEIA_DATA", default_value = "liveia-data")]
        data_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum WaveCommand {
    /// Superpose two waveform documents.
    Superpose {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, requires = "rate")]
        duration: Option<f64>,
        #[arg(long, requires = "duration")]
        rate: Option<f64>,
    },
    /// Recover components from a sampled signal document.
    Decompose {
        signal: PathBuf,
        #[arg(long)]
        max_components: Option<usize>,
        #[arg(long)]
        floor: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    View,
    Overview,
    Perspective,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Svg,
    Ppm,
}

#[derive(clap::Args)]
struct RadianceArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    rays: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl RadianceArgs {
    fn params(&self) -> RadianceParams {
        let mut p = RadianceParams::with_seed(self.seed);
        if let Some(v) = self.rays {
            p.rays_per_iter = v;
        }
        if let Some(v) = self.resolution {
            p.resolution = v;
        }
        if let Some(v) = self.tol {
            p.tol = v;
        }
        if let Some(v) = self.max_iter {
            p.max_iter = v;
        }
        p
    }
}

/// A failure with its exit status: 1 input/output, 2 validation, 3 engine.
#[derive(Debug)]
struct Failure {
    status: u8,
    message: String,
}

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure { status: 1, message: format!("{}: {e}", path.display()) }
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        let status = if e.is_malformed() {
            1
        } else {
            match e.code {
                ErrorCode::Validation | ErrorCode::NotFound => 2,
                ErrorCode::Version | ErrorCode::Internal => 3,
            }
        };
        let mut message = e.message.clone();
        if let Some(vs) = e.detail.get("violations").and_then(|v| v.as_array()) {
            for v in vs {
                message.push_str(&format!(
                    "\n  {} [{}] {}",
                    v["id"].as_str().unwrap_or(""),
                    v["rule"].as_str().unwrap_or(""),
                    v["message"].as_str().unwrap_or("")
                ));
            }
        }
        Failure { status, message }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn load(path: &Path) -> Result<Scenario> {
    deserialize(&read(path)?).map_err(|e| ApiError::from(e).into())
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(p) => write(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { file } => {
            let s = load(&file)?;
            println!("ok {}", s.id);
        }
        Command::Render { file, output, mode, focus, format, sphere, radiance } => {
            let s = load(&file)?;
            let bytes = match format {
                Format::Svg => {
                    let mode = match mode {
                        Mode::View => liveia_core::render::RenderMode::View,
                        Mode::Overview => liveia_core::render::RenderMode::Overview,
                        Mode::Perspective => liveia_core::render::RenderMode::Perspective,
                    };
                    engine::render_svg(&s, mode, focus.as_deref(), &[], &[])?.into_bytes()
                }
                Format::Ppm => {
                    let sphere = sphere
                        .or(focus)
                        .or_else(|| s.spheres.first().map(|x| x.id.clone()))
                        .ok_or_else(|| ApiError::validation("scenario has no spheres"))?;
                    engine::radiance_ppm(&s, &sphere, &radiance.params())?
                }
            };
            emit(output.as_deref(), &bytes)?;
        }
        Command::Trace { file, beam, json, max_events, min_intensity } => {
            let s = load(&file)?;
            let mut limits = liveia_core::optics::TraceLimits::default();
            if let Some(v) = max_events {
                limits.max_events = v;
            }
            if let Some(v) = min_intensity {
                limits.min_intensity = v;
            }
            let resp = engine::trace(&s, &TraceRequest { beam: BeamRef::Id(beam), limits: Some(limits) })?;
            let doc = to_json(&resp);
            match json {
                Some(p) => {
                    write(&p, doc.as_bytes())?;
                    println!("{} path(s) from beam {} written to {}", resp.paths.len(), resp.beam, p.display());
                }
                None => print!("{doc}"),
            }
        }
        Command::Metrics { file, sphere, radiance } => {
            let s = load(&file)?;
            let (grid, report) = engine::equilibrium(&s, &sphere, &radiance.params())?;
            print!("{}", to_json(&engine::metrics(&s, &sphere, &report, &grid)));
        }
        Command::Fork { file, output } => {
            let mut parent = load(&file)?;
            let child = scene::fork(&mut parent).map_err(ApiError::from)?;
            write(&output, serialize(&child).map_err(ApiError::from)?.as_bytes())?;
            println!("{}", child.id);
        }
        Command::Wave { command } => match command {
            WaveCommand::Superpose { a, b, duration, rate } => {
                let req = SuperposeRequest { a: load_json(&a)?, b: load_json(&b)?, duration, rate };
                print!("{}", to_json(&engine::superpose_request(&req)?));
            }
            WaveCommand::Decompose { signal, max_components, floor } => {
                let req = DecomposeRequest { signal: load_json(&signal)?, max_components, floor };
                print!("{}", to_json(&engine::decompose_request(&req)?));
            }
        },
        Command::Serve { port, data_dir } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure { status: 1, message: e.to_string() })?;
            rt.block_on(liveia_service::run(port, &data_dir))
                .map_err(|e| Failure { status: 1, message: e.to_string() })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("liveia: {}", f.message);
            ExitCode::from(f.status)
        }
    }
}
