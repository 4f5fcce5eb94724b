//! The `transinit` command line: train, transfer, curve, synth, replay.
//!
//! Every command writes `manifest.json` next to its outputs. The manifest
//! records the fully resolved invocation plus SHA-256 digests of inputs and
//! outputs, so `transinit replay` can rerun it and compare.
//!
//! Exit codes: 0 success, 1 replay digest mismatch, 2 usage or I/O error,
//! 3 training failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{Activation, EmbeddingTable};
use crate::corpus::{holdout_dev, parse_conll, Corpus};
use crate::crf::TrainConfig;
use crate::error::Error;
use crate::eval::{build_plan, fit_method, novel_classes, run_curve_per_seed, span_f1, CurveInputs, FittedModel, Method, SourceModel};
use crate::features::FeatureIndexer;
use crate::model::{self, sha256_hex, write_atomic};
use crate::synth::SynthSpec;
use crate::transfer::{correlation_report, train_source, TransferConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn training(e: Error) -> Self {
        CliError {
            code: 3,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "transinit", version, about = "Linear-chain CRF NER with cross-label-set transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Train a CRF on a labelled corpus.
    Train(TrainArgs),
    /// Fit a target model with one of the transfer methods or cold start.
    Transfer(TransferArgs),
    /// Run a learning curve over nested training subsets.
    Curve(CurveArgs),
    /// Generate the synthetic source/target benchmark.
    Synth(SynthArgs),
    /// Rerun a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ColumnArgs {
    /// Zero-based column holding the token.
    #[arg(long, default_value_t = 0)]
    pub token_col: usize,
    /// Zero-based column holding the BIO tag.
    #[arg(long, default_value_t = 1)]
    pub tag_col: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub l2: f64,
    #[arg(long, default_value_t = 100)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Learning rate of the correlation stage.
    #[arg(long, default_value_t = 0.03)]
    pub correlation_learning_rate: f64,
}

impl OptimArgs {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l2_strength: self.l2,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            ..TrainConfig::default()
        }
    }

    fn transfer_config(&self, update_bottom: bool, seed: u64) -> TransferConfig {
        let base = self.train_config(seed);
        TransferConfig {
            update_bottom,
            rescale_rows: false,
            source: base,
            correlation: TrainConfig {
                learning_rate: self.correlation_learning_rate,
                ..base
            },
            finetune: base,
        }
        .with_seed(seed)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Labelled corpus in column format.
    #[arg(long)]
    pub source: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

const METHOD_NAMES: [&str; 6] = ["cold", "labelembed", "twolayer", "deepcrf", "transinit", "transinit-frozen"];

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TransferArgs {
    /// Source model written by `train` (its indexer.txt must sit beside it
    /// unless --source-indexer is given). Not needed for --method cold.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub source_indexer: Option<PathBuf>,
    /// Target training corpus; a dev set is held out from it.
    #[arg(long)]
    pub target: PathBuf,
    /// Optional test corpus for the evaluation report.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(METHOD_NAMES))]
    pub method: String,
    /// Word-vector table for labelembed: one word and its floats per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Hidden activation for deepcrf.
    #[arg(long, default_value = "hard_tanh", value_parser = clap::builder::PossibleValuesParser::new(["hard_tanh", "none"]))]
    pub activation: String,
    /// Let correlation learning adapt the source layer (transinit only).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub update_bottom: bool,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CurveArgs {
    /// Labelled source corpus.
    #[arg(long)]
    pub source: PathBuf,
    /// Target training corpus; the dev set is held out before splitting.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "cold,transinit,transinit-frozen,twolayer,deepcrf",
          value_parser = clap::builder::PossibleValuesParser::new(METHOD_NAMES))]
    pub methods: Vec<String>,
    /// Comma-separated seeds; each seed draws its own nested split.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Seed for the source and target dev holdouts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub partitions: usize,
    /// `log` for cumulative sizes round(N^(k/n)); `geometric` for a
    /// geometric series from --min-size to N.
    #[arg(long, default_value = "log", value_parser = clap::builder::PossibleValuesParser::new(["log", "geometric"]))]
    pub grid: String,
    #[arg(long, default_value_t = 10)]
    pub min_size: usize,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// JSON benchmark description; the built-in PERSON/ORG benchmark when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the rerun; defaults to `replay/` inside the original output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: Command,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
    /// Absolute input path -> SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name relative to the output directory -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

struct Outputs {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl Outputs {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes).map_err(|e| CliError::usage(e.to_string()))?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn finish(self, manifest: RunManifest) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            outputs: self.written,
            ..manifest
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.dir.join(MANIFEST_FILE);
        write_atomic(&path, format!("{json}\n").as_bytes()).map_err(|e| CliError::usage(e.to_string()))?;
        Ok(manifest)
    }
}

struct Inputs(BTreeMap<String, String>);

impl Inputs {
    /// Reads a file, records its digest, and returns its absolute path and bytes.
    fn read(&mut self, path: &Path) -> CliResult<(PathBuf, Vec<u8>)> {
        let abs = fs::canonicalize(path).map_err(|e| io_err(path, e))?;
        let bytes = fs::read(&abs).map_err(|e| io_err(path, e))?;
        self.0.insert(abs.display().to_string(), sha256_hex(&bytes));
        Ok((abs, bytes))
    }

    fn corpus(&mut self, path: &Path, columns: &ColumnArgs) -> CliResult<Corpus> {
        let (_, bytes) = self.read(path)?;
        parse_conll(BufReader::new(bytes.as_slice()), columns.token_col, columns.tag_col)
            .map_err(|e| io_err(path, e))
    }
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(path).map_err(|e| io_err(path, e))
}

fn manifest(command: Command, seeds: Vec<u64>, config: serde_json::Value, inputs: Inputs) -> RunManifest {
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        seeds,
        config,
        inputs: inputs.0,
        outputs: BTreeMap::new(),
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
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
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Replay(args) => replay(&args),
        other => execute(other).map(|_| ()),
    }
}

/// Runs any command except replay and returns the manifest it wrote.
pub fn execute(command: Command) -> CliResult<RunManifest> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Replay(_) => Err(CliError::usage("a manifest cannot record a replay")),
    }
}

pub fn cmd_train(mut args: TrainArgs) -> CliResult<RunManifest> {
    let mut inputs = Inputs(BTreeMap::new());
    let corpus = inputs.corpus(&args.source, &args.columns)?;
    args.source = absolute(&args.source)?;
    let mut out = Outputs::create(&args.out_dir)?;
    args.out_dir = absolute(&args.out_dir)?;

    let (train, dev) = holdout_dev(&corpus, args.dev_fraction, args.seed).map_err(|e| CliError::usage(e.to_string()))?;
    let cfg = args.optim.train_config(args.seed);
    let (model, indexer, log) = train_source(&train, &dev, &cfg).map_err(CliError::training)?;

    out.write("model.bin", &model::encode_crf(&model, &model::indexer_digest(&indexer)))?;
    out.write("indexer.txt", indexer.to_text().as_bytes())?;
    out.write("train_log.json", serde_json::to_string_pretty(&log).unwrap().as_bytes())?;
    eprintln!(
        "trained on {} sentences; best dev F1 {:.4} at epoch {}",
        train.len(),
        log.best_dev_score,
        log.best_epoch
    );
    let seeds = vec![args.seed];
    out.finish(manifest(Command::Train(args), seeds, json(&cfg), inputs))
}

fn load_source(inputs: &mut Inputs, model_path: &Path, indexer_path: Option<&Path>) -> CliResult<SourceModel> {
    let (_, bytes) = inputs.read(model_path)?;
    let (model, reference) = model::decode_crf(&bytes).map_err(|e| io_err(model_path, e))?;
    let indexer_path = match indexer_path {
        Some(p) => p.to_path_buf(),
        None => model_path.with_file_name("indexer.txt"),
    };
    let (_, bytes) = inputs.read(&indexer_path)?;
    let text = String::from_utf8(bytes).map_err(|e| io_err(&indexer_path, e))?;
    let indexer = FeatureIndexer::from_text(&text).map_err(|e| io_err(&indexer_path, e))?;
    if model::indexer_digest(&indexer) != reference {
        return Err(CliError::usage(format!(
            "{}: indexer does not match the one {} was trained with",
            indexer_path.display(),
            model_path.display()
        )));
    }
    Ok(SourceModel { model, indexer })
}

fn load_embeddings(inputs: &mut Inputs, path: &Path) -> CliResult<EmbeddingTable> {
    let (_, bytes) = inputs.read(path)?;
    EmbeddingTable::from_reader(BufReader::new(bytes.as_slice())).map_err(|e| io_err(path, e))
}

pub fn cmd_transfer(mut args: TransferArgs) -> CliResult<RunManifest> {
    let mut method: Method = args.method.parse().map_err(|e: Error| CliError::usage(e.to_string()))?;
    if method == Method::TransInit && !args.update_bottom {
        method = Method::TransInitFrozen;
    }
    let activation: Activation = args.activation.parse().map_err(|e: Error| CliError::usage(e.to_string()))?;
    let mut inputs = Inputs(BTreeMap::new());

    let source = match (&args.source, method) {
        (Some(_), Method::Cold) => {
            eprintln!("warning: --source is ignored by method cold");
            None
        }
        (None, Method::Cold) => None,
        (None, m) => return Err(CliError::usage(format!("method {m} needs --source"))),
        (Some(p), _) => Some(load_source(&mut inputs, p, args.source_indexer.as_deref())?),
    };
    let target = inputs.corpus(&args.target, &args.columns)?;
    let test = match &args.test {
        Some(p) => Some(inputs.corpus(p, &args.columns)?),
        None => None,
    };
    let embeddings = match (&args.embeddings, method) {
        (Some(p), Method::LabelEmbed) => Some(load_embeddings(&mut inputs, p)?),
        (None, Method::LabelEmbed) => return Err(CliError::usage("method labelembed needs --embeddings")),
        _ => None,
    };
    args.source = args.source.as_deref().map(absolute).transpose()?;
    args.source_indexer = args.source_indexer.as_deref().map(absolute).transpose()?;
    args.target = absolute(&args.target)?;
    args.test = args.test.as_deref().map(absolute).transpose()?;
    args.embeddings = args.embeddings.as_deref().map(absolute).transpose()?;
    let mut out = Outputs::create(&args.out_dir)?;
    args.out_dir = absolute(&args.out_dir)?;

    let (train, dev) = holdout_dev(&target, args.dev_fraction, args.seed).map_err(|e| CliError::usage(e.to_string()))?;
    let cfg = args.optim.transfer_config(method != Method::TransInitFrozen, args.seed);
    let fitted = fit_method(method, source.as_ref(), &train, &dev, embeddings.as_ref(), activation, &cfg)
        .map_err(CliError::training)?;

    let digest = model::indexer_digest(fitted.indexer());
    out.write("indexer.txt", fitted.indexer().to_text().as_bytes())?;
    match &fitted {
        FittedModel::Crf {
            model: m,
            transfer,
            alignment,
            ..
        } => {
            out.write("model.bin", &model::encode_crf(m, &digest))?;
            if let Some(a) = transfer {
                out.write("correlation_before.bin", &model::encode_correlation(&a.correlation, &digest))?;
                out.write("correlation_after.bin", &model::encode_correlation(&a.renormalized, &digest))?;
                let report = format!(
                    "learned W^t\n{}\nrenormalized W^t\n{}",
                    correlation_report(&a.correlation, 3),
                    correlation_report(&a.renormalized, 3)
                );
                out.write("correlation_report.txt", report.as_bytes())?;
            }
            if let Some(al) = alignment {
                let text: String = al
                    .iter()
                    .map(|(t, s)| format!("{t}\t{}\n", s.as_deref().unwrap_or("-")))
                    .collect();
                out.write("alignment.txt", text.as_bytes())?;
            }
        }
        FittedModel::Deep { model: m, .. } => out.write("model.bin", &model::encode_deep(m, &digest))?,
    }
    if let Some(test) = &test {
        let labels = train.label_set().union(dev.label_set()).union(test.label_set());
        let novel = novel_classes(source.as_ref().map(|s| s.model.labels()), &labels);
        let report = span_f1(test, &fitted.predict_tags(test), &novel).map_err(CliError::training)?;
        out.write("report.txt", report.to_table().as_bytes())?;
        out.write("report.kv", report.to_key_values().as_bytes())?;
        eprint!("{}", report.to_table());
    }
    let seeds = vec![args.seed];
    out.finish(manifest(Command::Transfer(args), seeds, json(&cfg), inputs))
}

pub fn cmd_curve(mut args: CurveArgs) -> CliResult<RunManifest> {
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<Method>, Error>>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    if args.seeds.is_empty() {
        return Err(CliError::usage("--seeds must list at least one seed"));
    }
    let mut inputs = Inputs(BTreeMap::new());
    let source = inputs.corpus(&args.source, &args.columns)?;
    let target = inputs.corpus(&args.target, &args.columns)?;
    let test = inputs.corpus(&args.test, &args.columns)?;
    let embeddings = match &args.embeddings {
        Some(p) => Some(load_embeddings(&mut inputs, p)?),
        None if methods.contains(&Method::LabelEmbed) => {
            return Err(CliError::usage("method labelembed needs --embeddings"))
        }
        None => None,
    };
    args.source = absolute(&args.source)?;
    args.target = absolute(&args.target)?;
    args.test = absolute(&args.test)?;
    args.embeddings = args.embeddings.as_deref().map(absolute).transpose()?;
    let mut out = Outputs::create(&args.out_dir)?;
    args.out_dir = absolute(&args.out_dir)?;

    let usage = |e: Error| CliError::usage(e.to_string());
    let (s_train, s_dev) = holdout_dev(&source, args.dev_fraction, args.seed).map_err(usage)?;
    let (t_train, t_dev) = holdout_dev(&target, args.dev_fraction, args.seed).map_err(usage)?;
    let cfg = args.optim.transfer_config(true, 0);
    let curve_inputs = CurveInputs {
        source_train: &s_train,
        source_dev: &s_dev,
        target_train: &t_train,
        target_dev: &t_dev,
        target_test: &test,
        embeddings: embeddings.as_ref(),
    };
    let plans = args
        .seeds
        .iter()
        .map(|&seed| build_plan(&t_train, &args.grid, args.partitions, args.min_size, seed).map(|p| (seed, p)))
        .collect::<Result<Vec<_>, Error>>()
        .map_err(usage)?;
    let table = run_curve_per_seed(&methods, curve_inputs, &plans, &cfg).map_err(CliError::training)?;
    for (seed, plan) in &plans {
        out.write(&format!("plan_seed{seed}.txt"), plan.to_text().as_bytes())?;
    }
    out.write("curve.csv", table.to_csv().as_bytes())?;
    print!("{}", table.to_csv());
    let seeds = args.seeds.clone();
    out.finish(manifest(Command::Curve(args), seeds, json(&cfg), inputs))
}

pub fn cmd_synth(mut args: SynthArgs) -> CliResult<RunManifest> {
    let mut inputs = Inputs(BTreeMap::new());
    let mut spec = match &args.spec {
        Some(p) => {
            let (_, bytes) = inputs.read(p)?;
            serde_json::from_slice::<SynthSpec>(&bytes).map_err(|e| io_err(p, e))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    args.spec = args.spec.as_deref().map(absolute).transpose()?;
    let corpora = spec.generate().map_err(|e| CliError::usage(e.to_string()))?;
    let mut out = Outputs::create(&args.out_dir)?;
    args.out_dir = absolute(&args.out_dir)?;
    out.write("source.conll", corpora.source.to_conll().as_bytes())?;
    out.write("target_train.conll", corpora.target_train.to_conll().as_bytes())?;
    out.write("target_test.conll", corpora.target_test.to_conll().as_bytes())?;
    out.write("spec.json", serde_json::to_string_pretty(&spec).unwrap().as_bytes())?;
    let seeds = vec![spec.seed];
    out.finish(manifest(Command::Synth(args), seeds, json(&spec), inputs))
}

fn with_out_dir(command: &Command, dir: PathBuf) -> CliResult<Command> {
    let mut c = command.clone();
    match &mut c {
        Command::Train(a) => a.out_dir = dir,
        Command::Transfer(a) => a.out_dir = dir,
        Command::Curve(a) => a.out_dir = dir,
        Command::Synth(a) => a.out_dir = dir,
        Command::Replay(_) => return Err(CliError::usage("a manifest cannot record a replay")),
    }
    Ok(c)
}

fn original_out_dir(command: &Command) -> Option<&Path> {
    match command {
        Command::Train(a) => Some(&a.out_dir),
        Command::Transfer(a) => Some(&a.out_dir),
        Command::Curve(a) => Some(&a.out_dir),
        Command::Synth(a) => Some(&a.out_dir),
        Command::Replay(_) => None,
    }
}

/// Reruns a manifest into a fresh directory; fails with code 1 when any
/// output digest differs.
pub fn replay(args: &ReplayArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.manifest).map_err(|e| io_err(&args.manifest, e))?;
    let recorded: RunManifest = serde_json::from_str(&text).map_err(|e| io_err(&args.manifest, e))?;
    for (path, digest) in &recorded.inputs {
        let bytes = fs::read(path).map_err(|e| io_err(Path::new(path), e))?;
        if &sha256_hex(&bytes) != digest {
            return Err(CliError::usage(format!("{path}: input changed since the manifest was written")));
        }
    }
    let dir = match &args.out_dir {
        Some(d) => d.clone(),
        None => original_out_dir(&recorded.command)
            .ok_or_else(|| CliError::usage("manifest records no output directory"))?
            .join("replay"),
    };
    let rerun = execute(with_out_dir(&recorded.command, dir)?)?;
    let mut mismatched = Vec::new();
    for (name, digest) in &recorded.outputs {
        let status = match rerun.outputs.get(name) {
            Some(d) if d == digest => "ok",
            Some(_) => "MISMATCH",
            None => "MISSING",
        };
        println!("{status:8} {name}");
        if status != "ok" {
            mismatched.push(name.clone());
        }
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(CliError {
            code: 1,
            message: format!("outputs differ from the manifest: {}", mismatched.join(", ")),
        })
    }
}
