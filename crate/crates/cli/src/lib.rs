//! Command-line front end: `synth`, `eval`, `transform` and `bench`.

pub mod bench;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use btacm::acm::EmbeddingParams;
use btacm::features::{fit_reference, FeatureLayout, FeatureMap, SiegelReferenceMode};
use btacm::learn::cv::{nested_cv, PipelineConfig};
use btacm::learn::pipeline::{bt_decomposition, PipelineKind};
use btacm::signal::{design_bandpass, filtfilt, read_epz, synth_var, write_epz, Dataset, SynthConfig};
use btacm::Error;
use clap::{Args, Parser, Subcommand};

/// Butterworth prototype order used by `eval --band`.
pub const FILTER_ORDER: usize = 4;

#[derive(Debug, Parser)]
#[command(name = "btacm", version, about = "Block-Toeplitz augmented covariance classification")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "BTACM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-class dataset.
    Synth(SynthArgs),
    /// Nested cross-validation of one pipeline.
    Eval(EvalArgs),
    /// Export block-Toeplitz tangent features as CSV.
    Transform(TransformArgs),
    /// Time feature extraction along the full and block-Toeplitz paths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs_per_class: usize,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 250.0)]
    pub fs: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "bt-acm")]
    pub pipeline: String,
    /// Inclusive `lo:hi` or a single value.
    #[arg(long, default_value = "1:10")]
    pub p_range: String,
    #[arg(long, default_value = "1:10")]
    pub tau_range: String,
    #[arg(long, default_value_t = 5)]
    pub outer: usize,
    #[arg(long, default_value_t = 3)]
    pub inner: usize,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Band-pass `lo:hi` in Hz, or `off`.
    #[arg(long, default_value = "8:32")]
    pub band: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Allow grid values above 10.
    #[arg(long)]
    pub allow_wide: bool,
    /// Leave wall-clock fields out of the report and the summary line.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub tau: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 22)]
    pub channels: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub tau: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure with its exit status: 2 for usage and validation, 1 at runtime.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            Self::Usage(_) => return 2,
            Self::Core(e) | Self::Context { source: e, .. } => e,
        };
        match core {
            Error::InvalidConfig(_) | Error::InvalidBand(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Inclusive integer range `lo:hi`, or a single integer.
pub fn parse_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Usage(format!("invalid range '{s}', expected LO:HI or N"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let v = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

/// `lo:hi` in Hz, or `None` for `off`.
pub fn parse_band(s: &str) -> CliResult<Option<[f64; 2]>> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(None);
    }
    let bad = || CliError::Usage(format!("invalid band '{s}', expected LO:HI or off"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok(Some([lo, hi]))
}

fn read_dataset(path: &PathBuf) -> CliResult<Dataset> {
    read_epz(path).map_err(|source| CliError::Context {
        context: format!("reading {}", path.display()),
        source,
    })
}

fn cmd_synth(a: &SynthArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let cfg = SynthConfig::new(a.channels, a.epochs_per_class, a.samples, a.fs);
    let ds = synth_var(&cfg, a.seed)?;
    write_epz(&ds, &a.out).map_err(|source| CliError::Context {
        context: format!("writing {}", a.out.display()),
        source,
    })?;
    writeln!(
        out,
        "wrote {} epochs ({} channels x {} samples, {} Hz, seed {}) to {}",
        ds.len(),
        ds.channels(),
        ds.samples(),
        ds.fs,
        a.seed,
        a.out.display()
    )
    .map_err(Error::from)?;
    Ok(())
}

fn apply_band(ds: &Dataset, band: [f64; 2]) -> CliResult<Dataset> {
    let filter = design_bandpass(FILTER_ORDER, band[0], band[1], ds.fs)?;
    let epochs = ds
        .epochs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            filtfilt(&filter, e).map_err(|source| CliError::Context {
                context: format!("filtering epoch {i}"),
                source,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Dataset {
        epochs,
        fs: ds.fs,
        class_names: ds.class_names.clone(),
    })
}

fn cmd_eval(a: &EvalArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let kind: PipelineKind = a.pipeline.parse()?;
    let cfg = PipelineConfig {
        kind,
        p_grid: parse_range(&a.p_range)?,
        tau_grid: parse_range(&a.tau_range)?,
        c: a.c,
        c_grid: None,
        outer_folds: a.outer,
        inner_folds: a.inner,
        seed: a.seed,
        allow_wide: a.allow_wide,
    };
    cfg.validate()?;
    let band = parse_band(&a.band)?;
    let ds = read_dataset(&a.data)?;
    let ds = match band {
        Some(b) => apply_band(&ds, b)?,
        None => ds,
    };
    let mut report = nested_cv(&ds, &cfg)?;
    report.band = band;
    if a.no_timings {
        report = report.without_timings();
    }
    if let Some(path) = &a.report {
        let mut json = serde_json::to_string_pretty(&report).map_err(|e| Error::NumericalError(e.to_string()))?;
        json.push('\n');
        fs::write(path, json).map_err(|e| CliError::Context {
            context: format!("writing {}", path.display()),
            source: e.into(),
        })?;
    }
    let mut line = format!(
        "{}: AUC {:.4} ± {:.4} over {} folds",
        kind,
        report.mean_auc,
        report.std_auc,
        report.folds.len()
    );
    if let Some(ms) = report.total_ms {
        line.push_str(&format!(" ({ms:.0} ms)"));
    }
    writeln!(out, "{line}").map_err(Error::from)?;
    Ok(())
}

fn cmd_transform(a: &TransformArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let params = EmbeddingParams::new(a.p, a.tau)?;
    let ds = read_dataset(&a.data)?;
    if ds.is_empty() {
        return Err(CliError::Usage(format!("{} holds no epochs", a.data.display())));
    }
    let decs = ds
        .epochs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            bt_decomposition(e, params).map_err(|source| CliError::Context {
                context: format!("epoch {i}"),
                source,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let map = FeatureMap::new(&fit_reference(&decs, SiegelReferenceMode::Origin)?)?;
    let layout = FeatureLayout::new(ds.channels(), a.p);
    let mut csv = String::from("label");
    for name in layout.column_names() {
        csv.push(',');
        csv.push_str(&name);
    }
    csv.push('\n');
    for (e, dec) in ds.epochs.iter().zip(&decs) {
        csv.push_str(&e.label().to_string());
        for v in map.transform(dec)?.values {
            csv.push(',');
            csv.push_str(&v.to_string());
        }
        csv.push('\n');
    }
    fs::write(&a.out, csv).map_err(|e| CliError::Context {
        context: format!("writing {}", a.out.display()),
        source: e.into(),
    })?;
    writeln!(
        out,
        "wrote {} rows x {} features to {}",
        ds.len(),
        layout.len(),
        a.out.display()
    )
    .map_err(Error::from)?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let report = bench::run_bench(&bench::BenchConfig {
        channels: a.channels,
        p: a.p,
        tau: a.tau,
        trials: a.trials,
        seed: a.seed,
    })?;
    let json = serde_json::to_string(&report).map_err(|e| Error::NumericalError(e.to_string()))?;
    writeln!(out, "{json}").map_err(Error::from)?;
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let mut work = || match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Transform(a) => cmd_transform(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout();
    match execute(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
