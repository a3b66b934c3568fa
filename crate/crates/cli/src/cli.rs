//! Command-line surface. Every option is optional here so that config files
//! can fill it in; defaults are applied after merging.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hmix_core::hmix::CentralTendency;
use hmix_core::policy::PolicyKind;
use hmix_core::train::{Activation, MixupMode, RandomLabelMode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "hmix", version, about = "Human-aligned mixup: stimuli, elicitation, analysis and training")]
pub struct Cli {
    /// TOML config file; flags override its keys
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a stimulus pool and render every pair's mixing sweep
    Mix(MixArgs),
    /// Run the elicitation HTTP service
    Serve(ServeArgs),
    /// Summarize a judgment file into tables (and optional plots)
    Analyze(AnalyzeArgs),
    /// Fit a category boundary per class pair
    Fit(FitArgs),
    /// Train one label policy over several seeds
    Train(TrainArgs),
    /// Train and evaluate several label policies side by side
    Compare(CompareArgs),
    /// Export stored responses from a service state directory
    Export(ExportArgs),
    /// Write the procedural benchmark's simulated judgments to disk
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mix(_) => "mix",
            Command::Serve(_) => "serve",
            Command::Analyze(_) => "analyze",
            Command::Fit(_) => "fit",
            Command::Train(_) => "train",
            Command::Compare(_) => "compare",
            Command::Export(_) => "export",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageSource {
    /// Procedural ten-class shapes.
    Shapes,
    /// A CIFAR-10 binary batch.
    Cifar,
    /// One subdirectory of PNG files per class.
    Images,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct MixArgs {
    /// Where endpoint images come from: shapes, cifar or images [default: shapes]
    #[arg(long, value_parser = kebab::<ImageSource>)]
    pub source: Option<ImageSource>,
    /// CIFAR-10 batch file or image directory
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Images to generate with `--source shapes` [default: 200]
    #[arg(long)]
    pub count: Option<usize>,
    /// Number of endpoint pairs [default: 10]
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Comma-separated mixing coefficients [default: 0,0.1,...,1]
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Comma-separated class names (CIFAR and shapes sources)
    #[arg(long, value_delimiter = ',')]
    pub class_names: Option<Vec<String>>,
    /// Seeds image generation and pair selection [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    /// Pool directory written by `hmix mix`
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Directory holding session plans and the response log
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Address to bind [default: 127.0.0.1]
    #[arg(long)]
    pub host: Option<String>,
    /// Port to bind [default: 8080]
    #[arg(long)]
    pub port: Option<u16>,
    /// Seeds session plans [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Static UI bundle served at `/`
    #[arg(long)]
    pub ui: Option<PathBuf>,
    /// Fixed coefficient-inference session length (59-62)
    #[arg(long)]
    pub infer_trials: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// Judgment file to analyze
    #[arg(value_name = "HMIX")]
    pub input: Option<PathBuf>,
    /// Output directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Deviation from 0.5 that flags a pair [default: 0.15]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// mean or median [default: mean]
    #[arg(long, value_parser = kebab::<CentralTendency>)]
    pub tendency: Option<CentralTendency>,
    /// Treat both construct start conditions as one interface [default: true]
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub pool_construct: Option<bool>,
    /// Per-image annotation counts (`image_id,count_0,...`) for entropy buckets
    #[arg(long)]
    pub label_counts: Option<PathBuf>,
    /// Entropy (nats) at or above which an endpoint is ambiguous [default: 0.5]
    #[arg(long)]
    pub entropy_high: Option<f64>,
    /// Entropy (nats) at or below which an endpoint is clear [default: 0.1]
    #[arg(long)]
    pub entropy_low: Option<f64>,
    /// Also draw SVG plots from the tables
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub plots: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Judgment file with coefficient-inference judgments
    #[arg(value_name = "HMIX")]
    pub input: Option<PathBuf>,
    /// Output directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Fit per-coefficient medians instead of every response
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub use_medians: Option<bool>,
    /// Also draw the fitted curves as SVG
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub plots: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Procedural shapes with simulated judgments.
    Benchmark,
    /// CIFAR-10 batches, a judgment file and its stimulus pool.
    Files,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Regular training images [default: 2000]
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Evaluation images [default: 1000]
    #[arg(long)]
    pub eval_size: Option<usize>,
    /// Pre-mixed images with simulated judgments [default: 600]
    #[arg(long)]
    pub mixed_size: Option<usize>,
    /// Seeds the generated benchmark [default: 7]
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// benchmark or files [default: benchmark]
    #[arg(long, value_parser = kebab::<DataSource>)]
    pub data: Option<DataSource>,
    #[command(flatten)]
    #[serde(flatten)]
    pub bench: BenchArgs,
    /// CIFAR-10 training batches (repeatable or comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub train_batch: Option<Vec<PathBuf>>,
    /// CIFAR-10 evaluation batches
    #[arg(long, value_delimiter = ',')]
    pub eval_batch: Option<Vec<PathBuf>>,
    /// Annotation counts giving soft evaluation targets, keyed `eval-<index>`
    #[arg(long)]
    pub eval_counts: Option<PathBuf>,
    /// Judgment file for the pre-mixed images
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// Pool directory holding the judged pairs' endpoints
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Boundary file from `hmix fit`, required by boundary-fit
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
}

/// Training knobs; unset ones keep the desk-scale defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainKnobs {
    /// Passes over the training set [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// SGD learning rate [default: 0.005]
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD momentum [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// L2 penalty [default: 0]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Comma-separated training seeds [default: 1,2,3,4,5]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated hidden layer widths; empty for a linear model [default: 32]
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub hidden: Option<Vec<usize>>,
    /// relu or tanh [default: relu]
    #[arg(long, value_parser = kebab::<Activation>)]
    pub activation: Option<Activation>,
    /// finite-augmenting-set or per-batch-sampling [default: finite-augmenting-set]
    #[arg(long, value_parser = kebab::<MixupMode>)]
    pub mode: Option<MixupMode>,
    /// Coefficients are drawn from Beta(alpha, alpha) [default: uniform]
    #[arg(long)]
    pub mix_alpha: Option<f64>,
    /// Smoothing scale `a` in alpha = a * b^omega [default: 50]
    #[arg(long)]
    pub smoothing_a: Option<f64>,
    /// Smoothing base `b` in alpha = a * b^omega [default: 1e-4]
    #[arg(long)]
    pub smoothing_b: Option<f64>,
    /// How repeated judgments are pooled: mean or median [default: mean]
    #[arg(long, value_parser = kebab::<CentralTendency>)]
    pub tendency: Option<CentralTendency>,
    /// Mass spread over classes not ruled out, top2clamp only [default: 0.1]
    #[arg(long)]
    pub redistribution: Option<f64>,
    /// Random-label policy redraws labels per-epoch or keeps them fixed [default: per-epoch]
    #[arg(long, value_parser = kebab::<RandomLabelMode>)]
    pub random_labels: Option<RandomLabelMode>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// FGSM step on [0, 1] pixels [default: 8/255]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Calibration bins [default: 15]
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Label policy [default: mixup]
    #[arg(long, value_parser = kebab::<PolicyKind>)]
    pub policy: Option<PolicyKind>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub knobs: TrainKnobs,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalArgs,
    /// Output directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// A comparison row from the config file's `[[compare.rows]]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowConfig {
    pub name: Option<String>,
    pub policy: PolicyKind,
    #[serde(flatten)]
    pub knobs: TrainKnobs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    /// Comma-separated policies, one row each
    /// [default: no-aug,mixup,relabel,relabel-omega-aggregated]
    #[arg(long, value_delimiter = ',', value_parser = kebab::<PolicyKind>)]
    pub policies: Option<Vec<PolicyKind>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub knobs: TrainKnobs,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalArgs,
    /// Output directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Config-only: explicit rows, overriding `policies`
    #[arg(skip)]
    pub rows: Option<Vec<RowConfig>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Hmix,
    Json,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ExportArgs {
    /// Service state directory
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Export only this session
    #[arg(long)]
    pub session: Option<String>,
    /// hmix or json [default: hmix]
    #[arg(long, value_parser = kebab::<ExportFormat>)]
    pub format: Option<ExportFormat>,
    /// Output file; standard output when absent
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub bench: BenchArgs,
    /// Output directory
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
