use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use xlsent::corpus::{
    conllu, import_offset_format, load_corpus_with, synthetic_bank, ImportOptions,
    MAX_SEQUENCE_LENGTH,
};
use xlsent::eval::{
    evaluate, predict_corpus, score, transfer_matrix, write_predictions, TransferInput,
};
use xlsent::trainer::train_seed;
use xlsent::{Checkpoint, Corpus, EmbeddingBank, Error, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "xlsent", version, about = "Structured sentiment extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and save the checkpoint with the best dev targeted F1.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a labelled corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Write one JSON line of predicted opinions per sentence.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train on every corpus and score every other one.
    Transfer {
        #[arg(long)]
        config: PathBuf,
        /// `NAME=train,bank,dev`; repeat once per corpus.
        #[arg(long = "corpus", required = true)]
        corpora: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a deterministic stand-in embedding bank for a corpus.
    SynthBank {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        seed: u64,
        /// Must match the training configuration's sequence limit.
        #[arg(long, default_value_t = MAX_SEQUENCE_LENGTH)]
        max_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert character-offset annotations into the canonical corpus format.
    Import {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        language: String,
        /// CoNLL-U trees keyed by `# sent_id`.
        #[arg(long)]
        conllu: Option<PathBuf>,
        #[arg(long, default_value_t = MAX_SEQUENCE_LENGTH)]
        max_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainConfig::from_json(&text)
}

fn load_corpus(path: &Path, max_len: usize) -> Result<Corpus> {
    let (corpus, report) = load_corpus_with(path, max_len)?;
    if report.truncated_sentences > 0 {
        eprintln!(
            "{}: truncated {} sentences to {max_len} tokens, dropped {} opinions",
            path.display(),
            report.truncated_sentences,
            report.dropped_opinions
        );
    }
    Ok(corpus)
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::json("serializing output", e))?;
    println!("{text}");
    Ok(())
}

fn parse_corpus_arg(arg: &str) -> Result<(String, [PathBuf; 3])> {
    let bad = || Error::Config(format!("--corpus expects NAME=train,bank,dev, got `{arg}`"));
    let (name, rest) = arg.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = rest.split(',').collect();
    if name.is_empty() || parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    Ok((
        name.to_string(),
        [parts[0].into(), parts[1].into(), parts[2].into()],
    ))
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    seed: u64,
    best_epoch: usize,
    dev: xlsent::MetricsReport,
    history: &'a [xlsent::trainer::EpochLog],
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            train,
            dev,
            bank,
            out,
            seed,
        } => {
            let config = load_config(&config)?;
            let train = load_corpus(&train, config.max_sequence_length)?;
            let dev = load_corpus(&dev, config.max_sequence_length)?;
            let bank = EmbeddingBank::load(&bank, &train)?;
            bank.verify(&dev)?;
            let seed = match seed.or_else(|| config.seeds.first().copied()) {
                Some(s) => s,
                None => return Err(Error::Config("no seeds configured".into())),
            };
            let run = train_seed(&train, &bank, &dev, &config, seed)?;
            run.checkpoint.save(&out)?;
            let report = evaluate(&run.checkpoint, &dev, &bank, config.threshold)?;
            print_json(&TrainOutput {
                seed,
                best_epoch: run.checkpoint.epoch,
                dev: report,
                history: &run.history,
            })
        }
        Command::Eval {
            checkpoint,
            data,
            bank,
            threshold,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let corpus = load_corpus(&data, ckpt.config.max_sequence_length)?;
            let bank = EmbeddingBank::load(&bank, &corpus)?;
            let threshold = threshold.unwrap_or(ckpt.config.threshold);
            print_json(&evaluate(&ckpt, &corpus, &bank, threshold)?)
        }
        Command::Predict {
            checkpoint,
            data,
            bank,
            out,
            threshold,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let corpus = load_corpus(&data, ckpt.config.max_sequence_length)?;
            let bank = EmbeddingBank::load(&bank, &corpus)?;
            let threshold = threshold.unwrap_or(ckpt.config.threshold);
            let preds = predict_corpus(&ckpt.to_model()?, &corpus, &bank, threshold)?;
            write_predictions(&out, &preds)?;
            print_json(&score(&corpus, &preds)?)
        }
        Command::Transfer {
            config,
            corpora,
            out,
        } => {
            let config = load_config(&config)?;
            let mut inputs = Vec::with_capacity(corpora.len());
            for arg in &corpora {
                let (name, [train, bank, dev]) = parse_corpus_arg(arg)?;
                let train = load_corpus(&train, config.max_sequence_length)?;
                let dev = load_corpus(&dev, config.max_sequence_length)?;
                let bank = EmbeddingBank::load(&bank, &train)?;
                bank.verify(&dev)?;
                inputs.push(TransferInput {
                    name,
                    train,
                    dev,
                    bank,
                });
            }
            let matrix = transfer_matrix(&inputs, &config)?;
            matrix.save(&out)?;
            print_json(&matrix)
        }
        Command::SynthBank {
            data,
            models,
            dims,
            seed,
            max_len,
            out,
        } => {
            let corpus = load_corpus(&data, max_len)?;
            let bank: EmbeddingBank = synthetic_bank(&corpus, models, &dims, seed)?;
            bank.save(&out)
        }
        Command::Import {
            data,
            name,
            language,
            conllu: trees,
            max_len,
            out,
        } => {
            let mut opts = ImportOptions::new(name, language);
            opts.max_len = max_len;
            if let Some(path) = trees {
                opts.trees = conllu::read(&path)?.into_iter().collect();
            }
            let (corpus, report) = import_offset_format(&data, &opts)?;
            corpus.save(&out)?;
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
