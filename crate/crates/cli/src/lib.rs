//! Command-line front end and HTTP recognition service.

pub mod server;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use ssdcnn::checkpoint::Checkpoint;
use ssdcnn::features::{featurize_dataset, FeatureCache, Featurizer};
use ssdcnn::ink::{read_canonical, write_canonical, Dataset, InkCharacter, LabelAlphabet};
use ssdcnn::model::{Architecture, Model, VariantKind};
use ssdcnn::pot::import_pot;
use ssdcnn::preprocess::{Interpolation, PreprocessConfig};
use ssdcnn::synth::synth_dataset;
use ssdcnn::train::{train_two_phase, LabeledSet, TrainConfig};
use ssdcnn::{evaluate, Recognizer};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "ssdcnn", version, about = "Online handwritten character recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct PreprocessArgs {
    /// Largest gap between consecutive points after resampling, in grid cells.
    #[arg(long, default_value_t = 1.0)]
    pub max_gap: f64,
    /// none, linear or spline.
    #[arg(long, default_value = "linear")]
    pub interpolation: Interpolation,
}

impl PreprocessArgs {
    fn config(&self) -> PreprocessConfig {
        PreprocessConfig {
            max_gap: self.max_gap,
            method: self.interpolation,
            ..PreprocessConfig::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train and test sets in canonical ink format.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        test: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory; receives train.ink and test.ink.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert one or more POT files into a canonical ink file.
    ImportPot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute model inputs for a dataset.
    Featurize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "ssdcnn")]
        variant: VariantKind,
        #[command(flatten)]
        preprocess: PreprocessArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model with the two-phase schedule and save a checkpoint.
    Train(Box<TrainArgs>),
    /// Print P@k for a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,10")]
        topk: Vec<usize>,
    },
    /// Recognize one ink given as JSON `{"strokes": [[[x, y], ...], ...]}`.
    Recognize {
        #[arg(long)]
        model: PathBuf,
        /// JSON file, or `-` for standard input.
        #[arg(long)]
        ink: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Serve the recognition API over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Feature cache written by `featurize` for the training data.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value = "ssdcnn")]
    pub variant: VariantKind,
    /// Override the conv branch architecture string.
    #[arg(long)]
    pub dcnn: Option<String>,
    #[arg(long)]
    pub dir_proj: Option<String>,
    #[arg(long)]
    pub rep_proj: Option<String>,
    /// Override the classifier head; required with any other override.
    #[arg(long)]
    pub head: Option<String>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long, default_value_t = 20)]
    pub phase1_epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub phase2_epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub drop_prob: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Write the per-batch loss trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Request body shared by `recognize` and the HTTP service.
#[derive(Debug, Clone, Deserialize)]
pub struct InkRequest {
    pub strokes: Vec<Vec<[f64; 2]>>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    10
}

impl InkRequest {
    pub fn ink(&self) -> InkCharacter {
        InkCharacter::from_nested(&self.strokes)
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let bytes = fs::read(path).map_err(data(path.display()))?;
    read_canonical(&bytes).map_err(data(path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(data(path.display()))
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Synth {
            classes,
            train,
            test,
            seed,
            out,
        } => {
            if classes == 0 {
                return Err(CliError::Usage("--classes must be at least 1".into()));
            }
            let (tr, te) = synth_dataset(classes, train, test, seed);
            fs::create_dir_all(&out).map_err(data(out.display()))?;
            for (name, ds) in [("train.ink", &tr), ("test.ink", &te)] {
                let bytes = write_canonical(ds).map_err(data(name))?;
                write_file(&out.join(name), &bytes)?;
            }
            println!("wrote {} train and {} test samples to {}", tr.len(), te.len(), out.display());
        }
        Command::ImportPot { inputs, out } => {
            let mut alphabet = LabelAlphabet::default();
            let mut samples = Vec::new();
            for path in &inputs {
                let bytes = fs::read(path).map_err(data(path.display()))?;
                let ds = import_pot(&bytes).map_err(data(path.display()))?;
                for mut s in ds.samples {
                    s.label = s
                        .label
                        .and_then(|l| ds.alphabet.name(l))
                        .map(|name| alphabet.intern(name));
                    samples.push(s);
                }
            }
            let ds = Dataset::new(samples, alphabet).map_err(data("merged dataset"))?;
            write_file(&out, &write_canonical(&ds).map_err(data(out.display()))?)?;
            println!("imported {} samples, {} classes", ds.len(), ds.alphabet.len());
        }
        Command::Featurize {
            data: path,
            variant,
            preprocess,
            out,
        } => {
            let ds = read_dataset(&path)?;
            let fz = Featurizer::new(variant, preprocess.config());
            let cache = featurize_dataset(&ds, &fz).map_err(data(path.display()))?;
            write_file(&out, &cache.to_bytes())?;
            println!("featurized {} samples for {variant}", cache.features.len());
        }
        Command::Train(args) => train(*args)?,
        Command::Eval { model, data: path, topk } => {
            let ck = Checkpoint::load(&model).map_err(data(model.display()))?;
            let ds = read_dataset(&path)?;
            let (report, _) =
                evaluate(&ck.model, &ck.featurizer, &ds.samples, &topk).map_err(data(path.display()))?;
            print!("{}", report.table());
        }
        Command::Recognize { model, ink, k } => {
            let rec = Recognizer::load(&model).map_err(data(model.display()))?;
            let text = if ink.as_os_str() == "-" {
                std::io::read_to_string(std::io::stdin()).map_err(data("stdin"))?
            } else {
                fs::read_to_string(&ink).map_err(data(ink.display()))?
            };
            let req: InkRequest = serde_json::from_str(&text).map_err(data(ink.display()))?;
            let out = rec.recognize(&req.ink(), k).map_err(data(ink.display()))?;
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        }
        Command::Serve { model, addr, static_dir } => {
            let rec = Recognizer::load(&model).map_err(data(model.display()))?;
            let rt = tokio::runtime::Runtime::new().map_err(data("runtime"))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr).await.map_err(data(&addr))?;
                eprintln!("listening on http://{}", listener.local_addr().map_err(data(&addr))?);
                axum::serve(listener, server::router(rec, static_dir.as_deref()))
                    .await
                    .map_err(data("server"))
            })?;
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.data)?;
    let classes = ds.alphabet.len();
    let arch = if a.dcnn.is_some() || a.dir_proj.is_some() || a.rep_proj.is_some() || a.head.is_some() {
        let head = a
            .head
            .as_deref()
            .ok_or_else(|| CliError::Usage("--head is required when overriding the architecture".into()))?;
        Architecture::from_strings(a.variant, a.dcnn.as_deref(), a.dir_proj.as_deref(), a.rep_proj.as_deref(), head)
            .map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        Architecture::standard(a.variant, classes).map_err(|e| CliError::Usage(e.to_string()))?
    };
    if arch.classes() != classes {
        return Err(CliError::Data(format!(
            "head has {} outputs but {} lists {classes} classes",
            arch.classes(),
            a.data.display()
        )));
    }
    let fz = Featurizer::for_architecture(&arch, a.preprocess.config()).map_err(|e| CliError::Usage(e.to_string()))?;
    let set = match &a.features {
        Some(path) => {
            let bytes = fs::read(path).map_err(data(path.display()))?;
            let cache = FeatureCache::from_bytes(&bytes).map_err(data(path.display()))?;
            cache.check_key(&fz).map_err(data(path.display()))?;
            LabeledSet::with_features(&ds.samples, cache.features).map_err(data(path.display()))?
        }
        None => LabeledSet::build(&ds.samples, &fz).map_err(data(a.data.display()))?,
    };
    let validation = match &a.validation {
        Some(path) => {
            let v = read_dataset(path)?;
            if v.alphabet != ds.alphabet {
                return Err(CliError::Data(format!("{}: alphabet differs from training data", path.display())));
            }
            Some(LabeledSet::build(&v.samples, &fz).map_err(data(path.display()))?)
        }
        None => None,
    };
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        eta: a.eta,
        phase1_epochs: a.phase1_epochs,
        phase2_epochs: a.phase2_epochs,
        patience: a.patience,
        seed: a.seed,
        drop_prob: a.drop_prob,
        ..TrainConfig::default()
    };
    let mut model = Model::new(arch, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let report =
        train_two_phase(&mut model, &fz, &set, validation.as_ref(), &cfg).map_err(data(a.data.display()))?;
    if let Some(path) = &a.trace {
        write_file(path, report.to_csv().as_bytes())?;
    }
    Checkpoint::new(model, ds.alphabet, fz)
        .save(&a.out)
        .map_err(data(a.out.display()))?;
    println!(
        "trained {} epochs (phase 1 {}, phase 2 {}), final loss {:.4}",
        report.epochs[0] + report.epochs[1],
        report.epochs[0],
        report.epochs[1],
        report.final_epoch_loss().unwrap_or(f64::NAN)
    );
    Ok(())
}
