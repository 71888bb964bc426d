//! Scenario runner for the `hproj` binary.

pub mod report;
pub mod scenarios;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hproj_core::prolongation::MobilityConfig;
use hproj_core::{ComplexMatrix, ModelDescriptor};
use serde::{Deserialize, Serialize};

pub use report::{Check, Comparison, Report};

/// Exit code when every check passes.
pub const EXIT_PASS: i32 = 0;
/// Exit code when a check fails or a scenario cannot be computed.
pub const EXIT_FAIL: i32 = 1;
/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl From<hproj_core::Error> for CliError {
    fn from(e: hproj_core::Error) -> Self {
        use hproj_core::Error::*;
        match e {
            InvalidInput(_) | UnsupportedModel(_) | UnsupportedDimension(_) | ShapeMismatch(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Failure(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    VerifyKahler,
    Curvature,
    HprCheck,
    Mobility,
    Spectral,
    Tanno,
    Hplanar,
    ReportMerge,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::VerifyKahler,
        Scenario::Curvature,
        Scenario::HprCheck,
        Scenario::Mobility,
        Scenario::Spectral,
        Scenario::Tanno,
        Scenario::Hplanar,
        Scenario::ReportMerge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::VerifyKahler => "verify-kahler",
            Scenario::Curvature => "curvature",
            Scenario::HprCheck => "hpr-check",
            Scenario::Mobility => "mobility",
            Scenario::Spectral => "spectral",
            Scenario::Tanno => "tanno",
            Scenario::Hplanar => "hplanar",
            Scenario::ReportMerge => "report-merge",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Scenario::VerifyKahler => "J^2 = -Id, compatibility, nabla J = 0 and d(Omega) = 0 at sample points of every chart",
            Scenario::Curvature => "R + 4BK = 0 for the model curvature tensor K",
            Scenario::HprCheck => "metric-pair solution: h-projective equation, Killing property, B estimate, commutator identity",
            Scenario::Mobility => "rank of the prolonged system along sampled loops (local mobility estimate)",
            Scenario::Spectral => "extended operator: products, minimal polynomial, projector and eigenstructure",
            Scenario::Tanno => "Tanno equation, Laplace identity and round trip to the extended system",
            Scenario::Hplanar => "seeded h-planar curves: deviation from complex lines, energy, RK4 order",
            Scenario::ReportMerge => "merge JSON reports into one",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    /// Fubini-Study metric on CP(n)
    Fs,
    /// flat C^n
    Flat,
    /// flat torus with unit periods
    Torus,
    /// pullback of Fubini-Study by the matrix in --A-file
    Pullback,
    /// product of three flat factors of complex dimension n (weights 1, 2, 3)
    Product,
}

#[derive(Debug, Parser)]
#[command(name = "hproj", version, about = "h-projective checks on Kähler models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub opts: GlobalOpts,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kähler conditions at sample points
    VerifyKahler,
    /// Constant holomorphic curvature
    Curvature,
    /// h-projective pair checks
    HprCheck,
    /// Degree of mobility
    Mobility,
    /// Extended operator algebra
    Spectral,
    /// Tanno equation
    Tanno,
    /// h-planar curves
    Hplanar,
    /// Merge reports
    ReportMerge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// List scenarios
    List,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Seed for sample points and random runs
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the tolerance of every check
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Number of sample points (or runs)
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Integration step
    #[arg(long, global = true)]
    pub step: Option<f64>,
    /// JSON configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print JSON instead of text
    #[arg(long, global = true)]
    pub json: bool,
    /// Write the JSON report here
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write a CSV curve dump here (hplanar)
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelName>,
    /// Complex dimension
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Complex matrix as JSON rows of [re, im] pairs
    #[arg(long = "A-file", global = true)]
    pub a_file: Option<PathBuf>,
    /// Inline matrices are not accepted
    #[arg(long = "A", global = true, hide = true)]
    pub a_inline: Option<String>,
    /// Curvature constant B (default -0.25 for projective models, 0 otherwise; mobility sweeps candidates)
    #[arg(long = "B", global = true, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Tanno constant (defaults to B)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
}

/// Contents of a `--config` file. Every field can be overridden on the command line.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScenarioConfig {
    pub scenario: Option<Scenario>,
    pub model: Option<ModelDescriptor>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub step: Option<f64>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(rename = "A")]
    pub a: Option<ComplexMatrix>,
    #[serde(rename = "A-file")]
    pub a_file: Option<PathBuf>,
    pub mobility: Option<MobilityConfig>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self, CliError> {
        serde_json::from_str(s).map_err(|e| CliError::Usage(format!("config: {e}")))
    }
}

/// Fully resolved parameters of a run.
#[derive(Debug, Clone)]
pub struct Settings {
    pub scenario: Scenario,
    pub model: ModelDescriptor,
    pub seed: u64,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub step: f64,
    pub b: Option<f64>,
    pub kappa: Option<f64>,
    pub a: Option<ComplexMatrix>,
    pub mobility: MobilityConfig,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_STEP: f64 = 1e-3;
const MAX_N: usize = 4;
const MAX_SAMPLES: usize = 1000;

fn read_file(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn matrix_file(p: &Path) -> Result<ComplexMatrix, CliError> {
    ComplexMatrix::from_json_str(&read_file(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn model_from_name(name: ModelName, n: Option<usize>, a: Option<&ComplexMatrix>) -> Result<ModelDescriptor, CliError> {
    let n = n.unwrap_or(match name {
        ModelName::Product => 1,
        _ => 2,
    });
    if n == 0 || n > MAX_N {
        return Err(CliError::Usage(format!("--n must be in 1..={MAX_N}")));
    }
    Ok(match name {
        ModelName::Fs => ModelDescriptor::FubiniStudy { n },
        ModelName::Flat => ModelDescriptor::Flat { n, signs: None },
        ModelName::Torus => ModelDescriptor::FlatTorus { n, periods: vec![1.0; 2 * n] },
        ModelName::Pullback => ModelDescriptor::Pullback {
            n,
            a: a.cloned()
                .ok_or_else(|| CliError::Usage("pullback model needs --A-file".into()))?,
        },
        ModelName::Product => ModelDescriptor::Product {
            factors: vec![ModelDescriptor::Flat { n, signs: None }; 3],
            weights: vec![1.0, 2.0, 3.0],
        },
    })
}

impl Settings {
    /// Merge command-line options over an optional config file and validate.
    pub fn resolve(scenario: Option<Scenario>, opts: &GlobalOpts, inputs: Vec<PathBuf>) -> Result<Self, CliError> {
        if opts.a_inline.is_some() {
            return Err(CliError::Usage(
                "inline matrices are not accepted; pass a JSON file with --A-file".into(),
            ));
        }
        let cfg = match &opts.config {
            Some(p) => ScenarioConfig::from_json_str(&read_file(p)?)?,
            None => ScenarioConfig::default(),
        };
        let scenario = scenario
            .or(cfg.scenario)
            .ok_or_else(|| CliError::Usage("no scenario given".into()))?;
        let a = match (&opts.a_file, &cfg.a, &cfg.a_file) {
            (Some(p), _, _) => Some(matrix_file(p)?),
            (None, Some(a), _) => Some(a.clone()),
            (None, None, Some(p)) => Some(matrix_file(p)?),
            _ => None,
        };
        let model = match (opts.model, &cfg.model) {
            (Some(name), _) => model_from_name(name, opts.n, a.as_ref())?,
            (None, Some(d)) => d.clone(),
            (None, None) => model_from_name(ModelName::Fs, opts.n, a.as_ref())?,
        };
        let s = Settings {
            scenario,
            model,
            seed: opts.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
            tol: opts.tol.or(cfg.tol),
            samples: opts.samples.or(cfg.samples),
            step: opts.step.or(cfg.step).unwrap_or(DEFAULT_STEP),
            b: opts.b.or(cfg.b),
            kappa: opts.kappa.or(cfg.kappa),
            a,
            mobility: cfg.mobility.unwrap_or_default(),
            out: opts.out.clone().or(cfg.out),
            csv: opts.csv.clone().or(cfg.csv),
            inputs,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return bad("--tol must be in (0, 1)");
            }
        }
        if let Some(n) = self.samples {
            if n == 0 || n > MAX_SAMPLES {
                return bad("--samples must be in 1..=1000");
            }
        }
        if !(self.step > 0.0 && self.step <= 0.1) {
            return bad("--step must be in (0, 0.1]");
        }
        if self.b.is_some_and(|b| !b.is_finite()) {
            return bad("--B must be finite");
        }
        if self.kappa.is_some_and(|k| !k.is_finite() || k == 0.0) {
            return bad("--kappa must be finite and nonzero");
        }
        if self.model.complex_dim() > 3 * MAX_N {
            return bad("model dimension too large");
        }
        Ok(())
    }

    /// The tolerance for a check: `--tol` when given, else `default`.
    pub fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    pub fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }
}

fn list(json: bool, out: &mut dyn Write) -> std::io::Result<()> {
    if json {
        let items: Vec<serde_json::Value> = Scenario::ALL
            .iter()
            .map(|s| serde_json::json!({"name": s.name(), "description": s.description()}))
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&items).expect("json"))
    } else {
        for s in Scenario::ALL {
            writeln!(out, "{:<14} {}", s.name(), s.description())?;
        }
        Ok(())
    }
}

fn print_report(r: &Report, json: bool, out: &mut dyn Write) -> std::io::Result<()> {
    if json {
        return writeln!(out, "{}", r.to_json());
    }
    writeln!(out, "{} ({})", r.scenario, env!("CARGO_PKG_NAME"))?;
    for c in &r.checks {
        let op = match c.comparison {
            Comparison::Below => "<=",
            Comparison::Above => ">=",
        };
        writeln!(
            out,
            "  {} {:<32} {:.3e} {op} {:.1e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.max_residual,
            c.tolerance
        )?;
    }
    writeln!(out, "{}", if r.pass() { "all checks passed" } else { "some checks failed" })
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
                return EXIT_PASS;
            }
            let _ = write!(err, "{text}");
            return EXIT_USAGE;
        }
    };
    let (scenario, inputs) = match cli.command {
        Some(Command::List) => {
            return if list(cli.opts.json, out).is_ok() { EXIT_PASS } else { EXIT_FAIL };
        }
        None if cli.opts.config.is_none() => {
            return if list(cli.opts.json, out).is_ok() { EXIT_PASS } else { EXIT_FAIL };
        }
        None => (None, Vec::new()),
        Some(Command::VerifyKahler) => (Some(Scenario::VerifyKahler), Vec::new()),
        Some(Command::Curvature) => (Some(Scenario::Curvature), Vec::new()),
        Some(Command::HprCheck) => (Some(Scenario::HprCheck), Vec::new()),
        Some(Command::Mobility) => (Some(Scenario::Mobility), Vec::new()),
        Some(Command::Spectral) => (Some(Scenario::Spectral), Vec::new()),
        Some(Command::Tanno) => (Some(Scenario::Tanno), Vec::new()),
        Some(Command::Hplanar) => (Some(Scenario::Hplanar), Vec::new()),
        Some(Command::ReportMerge { inputs }) => (Some(Scenario::ReportMerge), inputs),
    };
    let result = Settings::resolve(scenario, &cli.opts, inputs).and_then(|s| {
        let r = scenarios::run_scenario(&s)?;
        if let Some(p) = &s.out {
            std::fs::write(p, r.to_json() + "\n")
                .map_err(|e| CliError::Failure(format!("{}: {e}", p.display())))?;
        }
        Ok(r)
    });
    match result {
        Ok(r) => {
            let _ = print_report(&r, cli.opts.json, out);
            if r.pass() {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Failure(_) => EXIT_FAIL,
            }
        }
    }
}
