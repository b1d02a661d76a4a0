use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use s2e_coref::bench::{self, BenchConfig};
use s2e_coref::c2f::{C2fParams, MAGIC as C2F_MAGIC};
use s2e_coref::embedding::{load_docemb, save_docemb, synthetic_embed};
use s2e_coref::inference::PruneConfig;
use s2e_coref::io::{
    insert_speakers, parse_conll, parse_jsonlines, write_conll, write_jsonlines, write_predictions, Format,
};
use s2e_coref::metrics::Evaluator;
use s2e_coref::s2e::MAGIC as S2E_MAGIC;
use s2e_coref::synth::{synthetic_corpus, SynthConfig};
use s2e_coref::training::{
    self, predict_c2f, predict_s2e, train_c2f, train_s2e, Example, GradCheckCase, HeadKind, TrainConfig,
};
use s2e_coref::{Document, S2eParams};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "s2e-coref",
    version,
    about = "Start-to-end coreference heads over frozen embeddings"
)]
struct Cli {
    /// Seed for every random draw; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML training/pruning configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a head and write a checkpoint.
    Train(TrainArgs),
    /// Predict clusters with a trained checkpoint.
    Predict(PredictArgs),
    /// Score predicted clusters against gold (JSON report).
    Evaluate(EvaluateArgs),
    /// Check the s2e backward pass against high-precision finite differences.
    Gradcheck(GradcheckArgs),
    /// Count peak live floats for one or both heads.
    Bench(BenchArgs),
    /// Convert between CoNLL and jsonlines.
    Convert(ConvertArgs),
    /// Write deterministic synthetic embeddings for a corpus.
    SynthEmbed(SynthEmbedArgs),
    /// Generate a small synthetic corpus with gold clusters.
    SynthCorpus(SynthCorpusArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Conll,
    Jsonlines,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Conll => Format::Conll,
            FormatArg::Jsonlines => Format::Jsonlines,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum HeadArg {
    S2e,
    C2f,
    Both,
}

/// Where token embeddings come from.
#[derive(Args)]
struct EmbeddingSource {
    /// Directory of `.docemb` files named after doc keys.
    #[arg(long)]
    embeddings: Option<PathBuf>,

    /// Use synthetic embeddings of this width instead of files.
    #[arg(long, conflicts_with = "embeddings")]
    synthetic_dim: Option<usize>,

    /// Insert speaker names before embedding lookup.
    #[arg(long)]
    insert_speakers: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Per-epoch JSON lines; standard output when absent.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum)]
    head: Option<HeadArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[command(flatten)]
    source: EmbeddingSource,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[command(flatten)]
    source: EmbeddingSource,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 12)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 6)]
    head_dim: usize,
    #[arg(long, default_value_t = 4)]
    max_span_len: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    head: HeadArg,
    /// Comma-separated document lengths.
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 32)]
    head_dim: usize,
    #[arg(long, default_value_t = 4)]
    feature_dim: usize,
    /// c2f antecedents per query; every preceding candidate when absent.
    #[arg(long)]
    max_antecedents: Option<usize>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Input format; guessed from the extension when absent.
    #[arg(long, value_enum)]
    from: Option<FormatArg>,
    /// Output format; the other one when absent.
    #[arg(long, value_enum)]
    to: Option<FormatArg>,
    #[arg(long)]
    insert_speakers: bool,
}

#[derive(Args)]
struct SynthEmbedArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long)]
    insert_speakers: bool,
}

#[derive(Args)]
struct SynthCorpusArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 8)]
    documents: usize,
    /// Longest mention in tokens (1 or 2).
    #[arg(long, default_value_t = 2)]
    max_mention_len: usize,
    #[arg(long, value_enum, default_value = "jsonlines")]
    format: FormatArg,
}

/// Failure that maps to a specific exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Exit(EXIT_USAGE, msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Exit(code, _)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<s2e_coref::Error>() {
            return match e {
                s2e_coref::Error::NonFinite(_) => EXIT_NUMERIC,
                s2e_coref::Error::Config(_) | s2e_coref::Error::Precondition(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => TrainConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Train(args) => train(args, config),
        Command::Predict(args) => predict(args, &config),
        Command::Evaluate(args) => evaluate(args),
        Command::Gradcheck(args) => gradcheck(args, config.seed),
        Command::Bench(args) => bench_cmd(args, &config),
        Command::Convert(args) => convert(args),
        Command::SynthEmbed(args) => synth_embed(args, config.seed),
        Command::SynthCorpus(args) => synth_corpus(args, config.seed),
    }
}

fn guess_format(path: &Path) -> anyhow::Result<Format> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "jsonlines" | "json") => Ok(Format::Jsonlines),
        Some("conll" | "gold_conll" | "v4_gold_conll" | "txt") => Ok(Format::Conll),
        _ => Err(usage(format!(
            "cannot tell the format of {}; pass it explicitly",
            path.display()
        ))),
    }
}

fn read_documents(path: &Path, format: Option<Format>) -> anyhow::Result<Vec<Document>> {
    let format = match format {
        Some(f) => f,
        None => guess_format(path)?,
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let docs = match format {
        Format::Conll => parse_conll(&text),
        Format::Jsonlines => parse_jsonlines(&text),
    }
    .with_context(|| format!("parsing {}", path.display()))?;
    Ok(docs)
}

fn render(docs: &[Document], format: Format) -> String {
    match format {
        Format::Conll => write_conll(docs),
        Format::Jsonlines => write_jsonlines(docs),
    }
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn examples(docs: Vec<Document>, source: &EmbeddingSource, seed: u64) -> anyhow::Result<Vec<Example>> {
    docs.into_iter()
        .map(|doc| {
            let doc = if source.insert_speakers {
                insert_speakers(&doc)
            } else {
                doc
            };
            let emb = match (&source.embeddings, source.synthetic_dim) {
                (Some(dir), _) => load_docemb(dir, &doc.doc_key)
                    .with_context(|| format!("embeddings for `{}` in {}", doc.doc_key, dir.display()))?,
                (None, Some(d)) => synthetic_embed(&doc, d, seed)?,
                (None, None) => return Err(usage("pass --embeddings DIR or --synthetic-dim D")),
            };
            Ok(Example::new(doc, emb)?)
        })
        .collect()
}

fn train(args: TrainArgs, mut config: TrainConfig) -> anyhow::Result<()> {
    if let Some(head) = args.head {
        config.head = match head {
            HeadArg::S2e => HeadKind::S2e,
            HeadArg::C2f => HeadKind::C2f,
            HeadArg::Both => return Err(usage("train takes one head")),
        };
    }
    config.epochs = args.epochs.unwrap_or(config.epochs);
    config.max_steps = args.max_steps.or(config.max_steps);
    let train_path = args
        .train
        .or(config.train_path.clone())
        .ok_or_else(|| usage("no training data (--train)"))?;
    let checkpoint = args
        .checkpoint
        .or(config.checkpoint_path.clone())
        .ok_or_else(|| usage("no checkpoint path (--checkpoint)"))?;
    let dev_path = args.dev.or(config.dev_path.clone());
    let log_path = args.log.or(config.log_path.clone());
    let mut source = args.source;
    if source.embeddings.is_none() && source.synthetic_dim.is_none() {
        source.embeddings = config.embeddings_dir.clone();
    }
    config.validate()?;

    let train_set = examples(read_documents(&train_path, None)?, &source, config.seed)?;
    let dev_set = match &dev_path {
        Some(p) => Some(examples(read_documents(p, None)?, &source, config.seed)?),
        None => None,
    };
    let d = train_set
        .first()
        .ok_or_else(|| usage("training set is empty"))?
        .embeddings
        .cols();
    info!("{} training documents, d = {d}", train_set.len());

    let mut log_sink: Box<dyn Write> = match &log_path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut log_error = None;
    let mut on_epoch = |m: &training::EpochMetrics| {
        if let Err(e) = writeln!(log_sink, "{}", m.to_json()) {
            log_error.get_or_insert(e);
        }
    };
    let mut out = Vec::new();
    match config.head {
        HeadKind::S2e => {
            let init = S2eParams::init(d, config.head_dim, config.seed);
            let outcome = train_s2e(&train_set, dev_set.as_deref(), &config, init, &mut on_epoch)?;
            outcome.params.save(&mut out)?;
        }
        HeadKind::C2f => {
            let init = C2fParams::init(d, &config.c2f(), config.seed);
            let outcome = train_c2f(&train_set, dev_set.as_deref(), &config, init, &mut on_epoch)?;
            outcome.params.save(&mut out)?;
        }
    }
    if let Some(e) = log_error {
        return Err(e).context("writing the training log");
    }
    fs::write(&checkpoint, out).with_context(|| format!("writing {}", checkpoint.display()))?;
    Ok(())
}

enum Model {
    S2e(S2eParams),
    C2f(C2fParams),
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let model = if bytes.starts_with(&C2F_MAGIC) {
        Model::C2f(C2fParams::load(bytes.as_slice())?)
    } else if bytes.starts_with(&S2E_MAGIC) {
        Model::S2e(S2eParams::load(bytes.as_slice())?)
    } else {
        bail!(s2e_coref::Error::Truncated(format!(
            "{} is not a checkpoint",
            path.display()
        )));
    };
    Ok(model)
}

fn predict(args: PredictArgs, config: &TrainConfig) -> anyhow::Result<()> {
    let input_format = guess_format(&args.input).ok();
    let docs = read_documents(&args.input, input_format)?;
    let format = args
        .format
        .map(Format::from)
        .or(input_format)
        .unwrap_or(Format::Jsonlines);
    let model = load_model(&args.checkpoint)?;
    let prune = config.prune();
    let mut text = String::new();
    for ex in examples(docs, &args.source, config.seed)? {
        let predicted = match &model {
            Model::S2e(p) => predict_s2e(&ex, p, &prune)?,
            Model::C2f(p) => predict_c2f(&ex, p, &prune, config.c2f_max_antecedents)?,
        };
        text.push_str(&write_predictions(&ex.document, &predicted, format)?);
    }
    emit(args.output.as_deref(), &text)
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let gold = read_documents(&args.gold, None)?;
    let pred = read_documents(&args.pred, None)?;
    let mut by_key: std::collections::HashMap<&str, &Document> = pred.iter().map(|d| (d.doc_key.as_str(), d)).collect();
    let mut ev = Evaluator::new();
    for g in &gold {
        let p = by_key
            .remove(g.doc_key.as_str())
            .ok_or_else(|| Exit(EXIT_DATA, format!("no prediction for document `{}`", g.doc_key)))?;
        ev.add(&g.gold_clusters, &p.gold_clusters);
    }
    if let Some(extra) = by_key.keys().next() {
        return Err(Exit(EXIT_DATA, format!("prediction for unknown document `{extra}`")).into());
    }
    println!("{}", serde_json::to_string(&ev.report())?);
    Ok(())
}

fn gradcheck(args: GradcheckArgs, seed: u64) -> anyhow::Result<()> {
    let prune = PruneConfig {
        max_span_len: args.max_span_len,
        top_lambda: args.lambda,
    };
    let case = GradCheckCase::random(seed, args.n, args.d, args.head_dim, &prune)?;
    let report = case.check(args.h)?;
    let failing = report.failing(args.tolerance);
    println!(
        "{}",
        json!({
            "seed": seed,
            "h": report.h,
            "tolerance": args.tolerance,
            "max_relative_error": report.max_relative_error(),
            "passes": failing.is_empty(),
            "failing": failing,
            "tensors": report.tensors,
        })
    );
    if !failing.is_empty() {
        return Err(Exit(EXIT_NUMERIC, format!("gradient check failed for {failing:?}")).into());
    }
    Ok(())
}

fn bench_cmd(args: BenchArgs, config: &TrainConfig) -> anyhow::Result<()> {
    if args.n.is_empty() || args.n.contains(&0) {
        return Err(usage("--n needs positive document lengths"));
    }
    let base = BenchConfig {
        n: args.n[0],
        d: args.d,
        head_dim: args.head_dim,
        feature_dim: args.feature_dim,
        top_lambda: config.top_lambda,
        max_span_len: config.max_span_len,
        max_antecedents: args.max_antecedents,
        seed: config.seed,
    };
    let heads = match args.head {
        HeadArg::S2e => vec![HeadKind::S2e],
        HeadArg::C2f => vec![HeadKind::C2f],
        HeadArg::Both => vec![HeadKind::S2e, HeadKind::C2f],
    };
    let mut peaks: Vec<Vec<usize>> = Vec::new();
    for head in heads.iter().copied() {
        let mut row = Vec::new();
        for &n in &args.n {
            let r = bench::measure_head(head, &BenchConfig { n, ..base })?;
            println!("{}", r.to_json());
            row.push(r.peak_live_floats);
        }
        if args.n.len() >= 2 {
            let xs: Vec<f64> = args.n.iter().map(|&n| n as f64).collect();
            let ys: Vec<f64> = row.iter().map(|&p| p as f64).collect();
            let exponent = bench::log_log_slope(&xs, &ys)?;
            let label = if head == HeadKind::S2e { "s2e" } else { "c2f" };
            println!("{}", json!({ "head": label, "growth_exponent": exponent }));
        }
        peaks.push(row);
    }
    if peaks.len() == 2 {
        for (i, &n) in args.n.iter().enumerate() {
            let ratio = peaks[1][i] as f64 / peaks[0][i] as f64;
            println!("{}", json!({ "n": n, "c2f_over_s2e": ratio }));
        }
    }
    Ok(())
}

fn convert(args: ConvertArgs) -> anyhow::Result<()> {
    let from = match args.from {
        Some(f) => f.into(),
        None => guess_format(&args.input)?,
    };
    let to = args.to.map(Format::from).unwrap_or(match from {
        Format::Conll => Format::Jsonlines,
        Format::Jsonlines => Format::Conll,
    });
    let mut docs = read_documents(&args.input, Some(from))?;
    if args.insert_speakers {
        docs = docs.iter().map(insert_speakers).collect();
    }
    emit(args.output.as_deref(), &render(&docs, to))
}

fn synth_embed(args: SynthEmbedArgs, seed: u64) -> anyhow::Result<()> {
    let docs = read_documents(&args.input, None)?;
    fs::create_dir_all(&args.output_dir).with_context(|| format!("creating {}", args.output_dir.display()))?;
    for doc in &docs {
        let doc = if args.insert_speakers {
            insert_speakers(doc)
        } else {
            doc.clone()
        };
        let emb = synthetic_embed(&doc, args.dim, seed)?;
        save_docemb(&args.output_dir, &emb)?;
    }
    println!(
        "{}",
        json!({ "documents": docs.len(), "dim": args.dim, "dir": args.output_dir })
    );
    Ok(())
}

fn synth_corpus(args: SynthCorpusArgs, seed: u64) -> anyhow::Result<()> {
    if !(1..=2).contains(&args.max_mention_len) {
        return Err(usage("--max-mention-len must be 1 or 2"));
    }
    let cfg = SynthConfig {
        documents: args.documents,
        max_mention_len: args.max_mention_len,
        ..SynthConfig::default()
    };
    let docs = synthetic_corpus(&cfg, seed);
    emit(Some(&args.output), &render(&docs, args.format.into()))
}
