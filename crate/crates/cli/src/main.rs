//! `babound` — one binary wiring the pipeline end to end:
//! dictionary mining, boundary encoding, synthetic corpora, pretraining,
//! CRF fine-tuning, labeling, evaluation, and a gradient self-check.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every run writes a
//! JSON report (see `report.rs`).

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use babound::boundary::{boundary_dim, encode_sentence, fit_normalizer};
use babound::corpus::{
    generate_synthetic_corpus, load_corpus_with, CharSequence, SentenceStream, SyntheticSpec,
};
use babound::crf::{
    evaluate_f1, fine_tune, label_sentence, load_labeled_file, segment_text, FineTuneOptions,
    FineTunedModel, SchemeKind, TagScheme,
};
use babound::model::{
    gradient_check, load_checkpoint, pretrain, save_checkpoint, Checkpoint, ModelConfig,
    PretrainOptions, Vocab,
};
use babound::ngram::{build_dictionary, load_dictionary, save_dictionary, DictFormat, ExtractorConfig};

use config::{resolve, FileConfig};
use report::{report_path, ReportBuilder};

#[derive(Parser)]
#[command(name = "babound", version, about = "Unsupervised boundary statistics for unsegmented text")]
struct Cli {
    /// Optional TOML config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the JSON run report.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine the n-gram dictionary (counts, PMI, left/right entropy).
    BuildDict(BuildDictArgs),
    /// Look one gram up in a dictionary.
    Stats(StatsArgs),
    /// Export per-character boundary vectors for a corpus.
    Encode(EncodeArgs),
    /// Generate a synthetic corpus with a gold segmentation sidecar.
    Synth(SynthArgs),
    /// Pretrain the character encoder (masked prediction + boundary regression).
    Pretrain(PretrainArgs),
    /// Fine-tune a pretrained encoder with a CRF head.
    Finetune(FinetuneArgs),
    /// Tag raw text with a fine-tuned model.
    Label(LabelArgs),
    /// Span-level F1 of predictions against gold.
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct BuildDictArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long)]
    min_freq: Option<u64>,
    /// Output format: jsonl or binary.
    #[arg(long)]
    format: Option<String>,
    /// Fold full-width ASCII during normalization.
    #[arg(long)]
    nfkc: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    gram: String,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Output format: jsonl (default) or tsv.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Lexicon file: one `word [weight]` per line.
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Gold segmentation sidecar path (default: <out>.gold).
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Also write a BMES-labeled file (char<TAB>tag) for fine-tuning.
    #[arg(long)]
    conll: Option<PathBuf>,
    #[arg(long)]
    min_words: Option<usize>,
    #[arg(long)]
    max_words: Option<usize>,
    #[arg(long)]
    sentences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    mask_rate: Option<f64>,
    #[arg(long)]
    ba_layer: Option<usize>,
    /// Ablation: disable the boundary objective.
    #[arg(long)]
    no_ba: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ffn_dim: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Tag scheme: bmes or bio.
    #[arg(long)]
    scheme: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Decode with the scheme's transition constraints.
    #[arg(long)]
    constrained: bool,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output format: conll (char<TAB>tag) or segmented (space-joined words).
    #[arg(long, default_value = "conll")]
    format: String,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    constrained: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Tag scheme: bmes or bio.
    #[arg(long)]
    scheme: String,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Minimum number of coordinates to test across all tensors.
    #[arg(long)]
    coords: Option<usize>,
}

/// Usage problems exit 1; anything wrong with data, files, or numerics
/// exits 2.
enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<babound::Error> for CliError {
    fn from(e: babound::Error) -> Self {
        CliError::Data(anyhow::Error::new(e))
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::from(0),
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run<I, T>(argv: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let file_cfg = FileConfig::load(cli.config.as_deref()).map_err(CliError::Data)?;
    match cli.command {
        Command::BuildDict(args) => build_dict(args, &file_cfg, cli.report),
        Command::Stats(args) => stats(args, cli.report),
        Command::Encode(args) => encode(args, &file_cfg, cli.report),
        Command::Synth(args) => synth(args, &file_cfg, cli.report),
        Command::Pretrain(args) => cmd_pretrain(args, &file_cfg, cli.report),
        Command::Finetune(args) => cmd_finetune(args, &file_cfg, cli.report),
        Command::Label(args) => label(args, cli.report),
        Command::Eval(args) => eval(args, cli.report),
        Command::Gradcheck(args) => cmd_gradcheck(args, &file_cfg, cli.report),
    }
}

fn parse_dict_format(s: &str) -> Result<DictFormat, CliError> {
    match s {
        "jsonl" => Ok(DictFormat::Jsonl),
        "binary" => Ok(DictFormat::Binary),
        other => Err(CliError::Usage(format!(
            "unknown dictionary format {other:?} (expected jsonl or binary)"
        ))),
    }
}

fn build_dict(
    args: BuildDictArgs,
    file_cfg: &FileConfig,
    report_flag: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("build-dict");
    let max_n = resolve(args.max_n, file_cfg.build_dict.max_n, 4);
    let min_freq = resolve(args.min_freq, file_cfg.build_dict.min_freq, 50);
    let format_name = resolve(
        args.format,
        file_cfg.build_dict.format.clone(),
        "jsonl".to_string(),
    );
    let format = parse_dict_format(&format_name)?;
    let nfkc = args.nfkc || file_cfg.build_dict.nfkc.unwrap_or(false);

    let extractor = ExtractorConfig { max_n, min_freq };
    let stream = load_corpus_with(&args.corpus, nfkc)?;
    let dict = build_dictionary(stream, &extractor)?;
    save_dictionary(&dict, &args.out, format)?;

    if dict.meta().total_chars == 0 {
        eprintln!("warning: corpus contained no characters");
    }

    rep.inputs(json!({"corpus": args.corpus, "out": args.out}))
        .effective_config(json!({
            "max_n": max_n, "min_freq": min_freq, "format": format_name, "nfkc": nfkc,
        }))
        .metrics(json!({
            "entries": dict.len(),
            "total_chars": dict.meta().total_chars,
        }));
    rep.write(&report_path(report_flag, Some(&args.out)))?;
    Ok(())
}

fn stats(args: StatsArgs, report_flag: Option<PathBuf>) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("stats");
    let dict = load_dictionary(&args.dict)?;
    let lookup = match dict.get(&args.gram) {
        Some(e) => json!({
            "gram": args.gram, "found": true,
            "count": e.count, "pmi": e.pmi, "le": e.le, "re": e.re,
        }),
        None => json!({"gram": args.gram, "found": false}),
    };
    println!("{}", serde_json::to_string(&lookup).expect("serializable"));
    rep.inputs(json!({"dict": args.dict}))
        .effective_config(json!({"gram": args.gram}))
        .metrics(lookup);
    rep.write(&report_path(report_flag, None))?;
    Ok(())
}

fn encode(
    args: EncodeArgs,
    file_cfg: &FileConfig,
    report_flag: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("encode");
    let format = resolve(args.format, file_cfg.encode.format.clone(), "jsonl".to_string());
    if format != "jsonl" && format != "tsv" {
        return Err(CliError::Usage(format!(
            "unknown encode format {format:?} (expected jsonl or tsv)"
        )));
    }
    let dict = load_dictionary(&args.dict)?;
    let dim = boundary_dim(dict.config().max_n);
    let sentences = load_corpus_with(&args.corpus, false)?
        .collect_sentences()?;

    let mut lines = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let e = encode_sentence(&dict, s);
        if format == "jsonl" {
            let vectors: Vec<Vec<f64>> = e.rows().into_iter().map(|r| r.to_vec()).collect();
            lines.push(
                serde_json::to_string(&json!({
                    "text": s.text(), "dim": dim, "vectors": vectors,
                }))
                .expect("serializable"),
            );
        } else {
            for row in e.rows() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                lines.push(cells.join("\t"));
            }
            lines.push(String::new());
        }
    }
    std::fs::write(&args.out, lines.join("\n") + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;

    rep.inputs(json!({"dict": args.dict, "corpus": args.corpus, "out": args.out}))
        .effective_config(json!({"format": format}))
        .metrics(json!({"sentences": sentences.len(), "dim": dim}));
    rep.write(&report_path(report_flag, Some(&args.out)))?;
    Ok(())
}

fn parse_lexicon(path: &Path) -> Result<Vec<(String, f64)>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading lexicon {}", path.display()))?;
    let mut lexicon = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line").to_string();
        let weight = match parts.next() {
            Some(w) => w
                .parse::<f64>()
                .with_context(|| format!("lexicon line {}: bad weight {w:?}", i + 1))?,
            None => 1.0,
        };
        lexicon.push((word, weight));
    }
    Ok(lexicon)
}

fn synth(
    args: SynthArgs,
    file_cfg: &FileConfig,
    report_flag: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("synth");
    let min_words = resolve(args.min_words, file_cfg.synth.min_words, 2);
    let max_words = resolve(args.max_words, file_cfg.synth.max_words, 8);
    let sentences = resolve(args.sentences, file_cfg.synth.sentences, 1000);
    let seed = resolve(args.seed, file_cfg.synth.seed, 0);

    let lexicon = parse_lexicon(&args.lexicon)?;
    let spec = SyntheticSpec {
        lexicon,
        sentence_length_range: (min_words, max_words),
        num_sentences: sentences,
        seed,
    };
    let corpus = generate_synthetic_corpus(&spec)?;
    let gold_path = args.gold.clone().unwrap_or_else(|| {
        let mut name = args
            .out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        name.push_str(".gold");
        args.out.with_file_name(name)
    });
    corpus.write(&args.out, &gold_path)?;

    if let Some(conll_path) = &args.conll {
        let pairs: Vec<(CharSequence, Vec<String>)> = corpus
            .sentences
            .iter()
            .cloned()
            .zip(corpus.gold.iter().map(|w| babound::crf::bmes_tags_for_words(w)))
            .collect();
        let dataset = babound::crf::LabeledDataset::from_pairs(pairs)?;
        babound::crf::save_labeled_file(&dataset, conll_path)?;
    }

    let total_chars: usize = corpus.sentences.iter().map(|s| s.len()).sum();
    rep.inputs(json!({"lexicon": args.lexicon}))
        .effective_config(json!({
            "min_words": min_words, "max_words": max_words,
            "sentences": sentences, "seed": seed,
            "out": args.out, "gold": gold_path,
        }))
        .seed(seed)
        .metrics(json!({"sentences": corpus.sentences.len(), "total_chars": total_chars}));
    rep.write(&report_path(report_flag, Some(&args.out)))?;
    Ok(())
}

fn cmd_pretrain(
    args: PretrainArgs,
    file_cfg: &FileConfig,
    report_flag: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("pretrain");
    let c = &file_cfg.pretrain;
    let steps = resolve(args.steps, c.steps, 500);
    let batch_size = resolve(args.batch_size, c.batch_size, 16);
    let lr = resolve(args.lr, c.lr, 1e-3);
    let mask_rate = resolve(args.mask_rate, c.mask_rate, 0.15);
    let seed = resolve(args.seed, c.seed, 0);
    let ba_layer = resolve(args.ba_layer, c.ba_layer, 1);
    let d_model = resolve(args.d_model, c.d_model, 32);
    let layers = resolve(args.layers, c.layers, 4);
    let heads = resolve(args.heads, c.heads, 1);
    let ffn_dim = resolve(args.ffn_dim, c.ffn_dim, 64);
    let max_len = resolve(args.max_len, c.max_len, 64);

    let dict = load_dictionary(&args.dict)?;
    let sentences = load_corpus_with(&args.corpus, false)?.collect_sentences()?;
    if sentences.is_empty() {
        return Err(CliError::Data(anyhow!(
            "corpus {} has no usable sentences",
            args.corpus.display()
        )));
    }
    let normalizer = fit_normalizer(
        &dict,
        SentenceStream::from_sentences(args.corpus.display().to_string(), sentences.clone()),
    )?;

    let vocab = Vocab::from_corpus(sentences.iter());
    let mut config = ModelConfig::new(vocab, boundary_dim(dict.config().max_n), seed);
    config.d_model = d_model;
    config.num_layers = layers;
    config.num_heads = heads;
    config.ffn_dim = ffn_dim;
    config.max_len = max_len;
    config.ba_layer = ba_layer;
    config.validate()?;

    let opts = PretrainOptions {
        steps,
        batch_size,
        lr,
        mask_rate,
        seed,
        ba_enabled: !args.no_ba,
    };
    let (state, reports) = pretrain(&sentences, &config, &dict, &normalizer, &opts)?;

    let checkpoint = Checkpoint {
        config,
        params: state.params,
        normalizer: Some(normalizer),
        optimizer: Some(state.optimizer),
        crf: None,
    };
    save_checkpoint(&checkpoint, &args.out)?;

    let first = reports.first();
    let last = reports.last();
    rep.inputs(json!({"corpus": args.corpus, "dict": args.dict, "out": args.out}))
        .effective_config(json!({
            "steps": steps, "batch_size": batch_size, "lr": lr,
            "mask_rate": mask_rate, "ba_layer": ba_layer, "ba_enabled": !args.no_ba,
            "d_model": d_model, "layers": layers, "heads": heads,
            "ffn_dim": ffn_dim, "max_len": max_len,
        }))
        .seed(seed)
        .metrics(json!({
            "sentences": sentences.len(),
            "first_loss": first.map(|r| json!({"l_mlm": r.l_mlm, "l_ba": r.l_ba, "l_pre": r.l_pre})),
            "final_loss": last.map(|r| json!({"l_mlm": r.l_mlm, "l_ba": r.l_ba, "l_pre": r.l_pre})),
        }));
    rep.write(&report_path(report_flag, Some(&args.out)))?;
    Ok(())
}

fn cmd_finetune(
    args: FinetuneArgs,
    file_cfg: &FileConfig,
    report_flag: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("finetune");
    let c = &file_cfg.finetune;
    let epochs = resolve(args.epochs, c.epochs, 20);
    let batch_size = resolve(args.batch_size, c.batch_size, 8);
    let lr = resolve(args.lr, c.lr, 1e-3);
    let seed = resolve(args.seed, c.seed, 0);
    let constrained = args.constrained || c.constrained.unwrap_or(false);

    let kind = SchemeKind::parse(&args.scheme)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let train = load_labeled_file(&args.train)?;
    let dev = args.dev.as_ref().map(load_labeled_file).transpose()?;

    let opts = FineTuneOptions {
        epochs,
        batch_size,
        lr,
        seed,
        constrained_decode: constrained,
    };
    let (model, metrics) = fine_tune(&checkpoint, &train, dev.as_ref(), kind, &opts)?;
    save_checkpoint(&model.to_checkpoint(), &args.out)?;

    let history: Vec<serde_json::Value> = metrics
        .iter()
        .map(|m| {
            json!({
                "epoch": m.epoch,
                "train_nll": m.train_nll,
                "dev_f1": m.dev_f1.map(|f| f.f1),
            })
        })
        .collect();
    let best = metrics
        .iter()
        .filter_map(|m| m.dev_f1.map(|f| f.f1))
        .fold(f64::NAN, f64::max);
    rep.inputs(json!({
        "checkpoint": args.checkpoint, "train": args.train, "dev": args.dev, "out": args.out,
    }))
    .effective_config(json!({
        "scheme": kind.name(), "epochs": epochs, "batch_size": batch_size,
        "lr": lr, "constrained": constrained,
    }))
    .seed(seed)
    .metrics(json!({
        "epochs": history,
        "best_dev_f1": if best.is_nan() { None } else { Some(best) },
        "tags": model.scheme.tags(),
    }));
    rep.write(&report_path(report_flag, Some(&args.out)))?;
    Ok(())
}

fn label(args: LabelArgs, report_flag: Option<PathBuf>) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("label");
    if args.format != "conll" && args.format != "segmented" {
        return Err(CliError::Usage(format!(
            "unknown label format {:?} (expected conll or segmented)",
            args.format
        )));
    }
    let model = FineTunedModel::from_checkpoint(load_checkpoint(&args.model)?)?;
    if args.format == "segmented" && model.scheme.kind() != SchemeKind::Bmes {
        return Err(CliError::Data(anyhow!(
            "segmented output needs a BMES model; this model uses {}",
            model.scheme.kind().name()
        )));
    }

    let sentences = load_corpus_with(&args.input, false)?.collect_sentences()?;
    let mut out_lines = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        let tags = label_sentence(&model, s, args.constrained);
        if args.format == "conll" {
            if i > 0 {
                out_lines.push(String::new());
            }
            for (c, t) in s.chars().iter().zip(&tags) {
                out_lines.push(format!("{c}\t{t}"));
            }
        } else {
            out_lines.push(segment_text(s, &tags)?);
        }
    }
    let text = out_lines.join("\n") + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }

    rep.inputs(json!({"model": args.model, "input": args.input, "out": args.out}))
        .effective_config(json!({"format": args.format, "constrained": args.constrained}))
        .metrics(json!({"sentences": sentences.len()}));
    rep.write(&report_path(report_flag, args.out.as_deref()))?;
    Ok(())
}

fn eval(args: EvalArgs, report_flag: Option<PathBuf>) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("eval");
    let kind = SchemeKind::parse(&args.scheme)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let pred = load_labeled_file(&args.pred)?;
    let gold = load_labeled_file(&args.gold)?;

    let scheme = match kind {
        SchemeKind::Bmes => TagScheme::bmes(),
        SchemeKind::Bio => TagScheme::bio_from_observed(
            gold.sentences
                .iter()
                .chain(pred.sentences.iter())
                .flat_map(|s| s.tags.iter().map(|t| t.as_str())),
        )?,
    };
    let pred_tags: Vec<Vec<String>> = pred.sentences.iter().map(|s| s.tags.clone()).collect();
    let gold_tags: Vec<Vec<String>> = gold.sentences.iter().map(|s| s.tags.clone()).collect();
    let score = evaluate_f1(&pred_tags, &gold_tags, &scheme)?;

    let result = json!({
        "precision": score.precision, "recall": score.recall, "f1": score.f1,
        "predicted": score.predicted, "gold": score.gold, "matched": score.matched,
    });
    println!("{}", serde_json::to_string(&result).expect("serializable"));
    rep.inputs(json!({"pred": args.pred, "gold": args.gold}))
        .effective_config(json!({"scheme": kind.name()}))
        .metrics(result);
    rep.write(&report_path(report_flag, None))?;
    Ok(())
}

/// Self-contained fixture: a synthetic corpus, its dictionary, and a small
/// encoder, so the check runs without external inputs.
fn cmd_gradcheck(
    args: GradcheckArgs,
    file_cfg: &FileConfig,
    report_flag: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut rep = ReportBuilder::new("gradcheck");
    let c = &file_cfg.gradcheck;
    let seed = resolve(args.seed, c.seed, 1);
    let epsilon = resolve(args.epsilon, c.epsilon, 1e-5);
    let coords = resolve(args.coords, c.coords, 250);
    const TOLERANCE: f64 = 1e-4;

    let spec = SyntheticSpec {
        lexicon: vec![
            ("ab".into(), 1.0),
            ("cde".into(), 1.0),
            ("fg".into(), 0.8),
            ("hij".into(), 0.6),
            ("k".into(), 0.4),
        ],
        sentence_length_range: (2, 4),
        num_sentences: 40,
        seed,
    };
    let corpus = generate_synthetic_corpus(&spec)?;
    let dict = build_dictionary(
        corpus.stream("gradcheck-fixture"),
        &ExtractorConfig {
            max_n: 2,
            min_freq: 1,
        },
    )?;
    let normalizer = fit_normalizer(&dict, corpus.stream("gradcheck-fixture"))?;
    let vocab = Vocab::from_corpus(corpus.sentences.iter());
    let mut config = ModelConfig::new(vocab, boundary_dim(2), seed);
    config.d_model = 16;
    config.num_layers = 2;
    config.num_heads = 2;
    config.ffn_dim = 24;
    config.max_len = 16;
    config.ba_layer = 1;

    let batch: Vec<CharSequence> = corpus.sentences[..4].to_vec();
    let check = gradient_check(&config, &dict, &normalizer, &batch, seed, epsilon, coords)?;

    let worst: Vec<serde_json::Value> = {
        let mut v: Vec<_> = check.per_tensor.clone();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite errors"));
        v.iter()
            .take(5)
            .map(|(n, e)| json!({"tensor": n, "max_rel_error": e}))
            .collect()
    };
    let passed = check.passed(TOLERANCE);
    println!(
        "{}",
        serde_json::to_string(&json!({
            "max_rel_error": check.max_rel_error,
            "coords_checked": check.coords_checked,
            "tolerance": TOLERANCE,
            "passed": passed,
        }))
        .expect("serializable")
    );

    rep.effective_config(json!({"epsilon": epsilon, "coords": coords, "tolerance": TOLERANCE}))
        .seed(seed)
        .metrics(json!({
            "max_rel_error": check.max_rel_error,
            "coords_checked": check.coords_checked,
            "passed": passed,
            "worst_tensors": worst,
        }));
    rep.write(&report_path(report_flag, None))?;

    if passed {
        Ok(())
    } else {
        Err(CliError::Data(anyhow!(
            "gradient check failed: max relative error {} > {TOLERANCE}",
            check.max_rel_error
        )))
    }
}
