//! `aerolink`: ingest drive-test logs, train the stacked channel model,
//! evaluate it, predict KPIs and benchmark throughput.

mod commands;
mod error;
mod manifest;
mod plots;
mod station;

use std::path::PathBuf;
use std::process::ExitCode;

use aerolink::dataset::Kpi;
use aerolink::pipeline::Profile;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "aerolink", version, about = "Stacked A2G channel model for cellular-connected UAVs")]
pub struct Cli {
    /// Where to write the run manifest [default: <first output>.manifest.json]
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw log, keep valid rows and write the canonical CSV.
    Ingest(IngestArgs),
    /// Split a canonical CSV into train and test sides by location.
    Split(SplitArgs),
    /// Train the full stack for one KPI.
    Train(TrainArgs),
    /// Score a model and export residual tables.
    Evaluate(EvaluateArgs),
    /// Predict a KPI at points, one position or a grid.
    Predict(PredictArgs),
    /// Measure prediction throughput.
    Bench(BenchArgs),
    /// Fit and score a reference model.
    Baseline(BaselineArgs),
    /// Generate the synthetic corpus.
    Synth(SynthArgs),
}

/// `key=value` pair given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyValue(pub String, pub String);

impl std::str::FromStr for KeyValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("empty key in `{s}`"));
        }
        Ok(Self(k.to_string(), v.trim().to_string()))
    }
}

/// `min,max,count` for one grid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected min,max,count, got `{s}`"));
        };
        let min: f64 = a.parse().map_err(|_| format!("bad min `{a}`"))?;
        let max: f64 = b.parse().map_err(|_| format!("bad max `{b}`"))?;
        let count: usize = n.parse().map_err(|_| format!("bad count `{n}`"))?;
        if count == 0 || !(min <= max) {
            return Err(format!("axis `{s}` needs min <= max and count >= 1"));
        }
        Ok(Self { min, max, count })
    }
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + i as f64 * step).collect()
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw drive-test CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Column map file (`field = Header Name` lines) [default: canonical names]
    #[arg(long)]
    pub column_map: Option<PathBuf>,
    /// Keep only rows served by this cell
    #[arg(long)]
    pub cell_id: Option<String>,
    /// Outlier threshold in standard deviations, or `none`
    #[arg(long, default_value = "4")]
    pub outlier_sigma: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Cleaning report [default: <out>.clean.txt]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Target fraction of samples on the train side
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0x5917)]
    pub seed: u64,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Key sets of the split as JSON
    #[arg(long)]
    pub split_out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub latlon_decimals: u32,
    #[arg(long, default_value_t = 0.5)]
    pub alt_step: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub kpi: Kpi,
    #[arg(long)]
    pub profile: Option<Profile>,
    /// Station description file
    #[arg(long)]
    pub station: PathBuf,
    /// Config file of `key = value` lines
    #[arg(long, env = "AEROLINK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<KeyValue>,
    #[arg(long)]
    pub out: PathBuf,
    /// Cross-validation report [default: <out>.cv.json]
    #[arg(long)]
    pub cv_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for report.csv and the residual tables
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Label for the `set` column
    #[arg(long, default_value = "test")]
    pub label: String,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    /// Split JSON from `split`; rejects samples outside its test side
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Station file overriding the one stored in the model
    #[arg(long)]
    pub station: Option<PathBuf>,
    /// CSV with lat_deg, lon_deg and alt_asl_m columns
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub lat: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lon: Option<f64>,
    /// Altitude above sea level; also the grid altitude
    #[arg(long, allow_negative_numbers = true)]
    pub alt: Option<f64>,
    #[arg(long, value_name = "MIN,MAX,COUNT", allow_hyphen_values = true)]
    pub grid_lat: Option<Axis>,
    #[arg(long, value_name = "MIN,MAX,COUNT", allow_hyphen_values = true)]
    pub grid_lon: Option<Axis>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Rows per pass; the input is repeated cyclically to reach it
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    PlainLinear,
    PlainBaggedTrees,
    Lnspl,
    Fspl,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub kpi: Kpi,
    #[arg(long, value_enum)]
    pub kind: BaselineKind,
    #[arg(long)]
    pub station: PathBuf,
    /// Tree settings for plain-bagged-trees
    #[arg(long, default_value = "accuracy")]
    pub profile: Profile,
    #[arg(long, default_value_t = aerolink::geo::DEFAULT_MIN_DISTANCE_M)]
    pub min_distance: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-sample test predictions
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file of `key = value` lines
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Override one scenario key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<KeyValue>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the station file
    #[arg(long)]
    pub station_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::usage(msg).line());
            return ExitCode::from(2);
        }
    };
    match commands::run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
