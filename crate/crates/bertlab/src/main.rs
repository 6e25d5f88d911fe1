use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bertlab::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use bertlab::experiment::{preflight, run_experiment, ExperimentSpec};
use bertlab::formats::{read_corpus, read_labeled, read_vocab, write_corpus, write_labeled, write_vocab};
use bertlab::logs::{write_metrics, TrainLogWriter};
use bertlab::{Error, Result};
use bertlab_core::finetune::{evaluate, finetune_run, ClassifierHead, FinetuneConfig, LabeledSet};
use bertlab_core::pretrain::{pretrain_run, ExampleGenerator, MaskingConfig, PretrainConfig};
use bertlab_core::synthetic::{separable_set, TopicCorpus};
use bertlab_core::variants::{build, VariantConfig, VariantKind, DEFAULT_SEQ_LEN};
use bertlab_core::vocab::Vocab;
use bertlab_core::SeedRng;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bertlab", version, about = "Build, train and compare BERT encoder variants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count parameters of every table preset and check the parity budget
    Preflight {
        #[arg(long, default_value_t = 1000)]
        vocab_size: usize,
    },
    /// Build a character vocabulary from a corpus file
    Vocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        max_size: usize,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Write a generated toy corpus and labeled train/dev sets
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        sentences: usize,
        #[arg(long, default_value_t = 64)]
        examples: usize,
    },
    /// Pre-train one variant with masked-LM and next-sentence prediction
    Pretrain(PretrainArgs),
    /// Fine-tune a checkpoint on a labeled dataset
    Finetune(FinetuneArgs),
    /// Report accuracy of a fine-tuned checkpoint
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Run every variant of an experiment spec and write the comparison report
    Compare {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    variant: VariantKind,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SEQ_LEN)]
    seq_len: usize,
    /// Override the preset layer count (with --hidden and --heads)
    #[arg(long, requires_all = ["hidden", "heads"])]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long, default_value_t = 0.15)]
    mask_rate: f64,
    #[arg(long)]
    no_nsp: bool,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: u64,
}

fn pretrain(a: PretrainArgs) -> Result<()> {
    let vocab = read_vocab(&a.vocab)?;
    let docs = read_corpus(&a.corpus)?;
    let config = match (a.layers, a.hidden, a.heads) {
        (Some(l), Some(n), Some(h)) => VariantConfig::sized(a.variant, l, n, h, vocab.len(), a.seq_len),
        _ => VariantConfig {
            max_len: a.seq_len,
            ..VariantConfig::preset(a.variant, vocab.len())
        },
    };
    let mut rng = SeedRng::new(a.seed);
    let mut model = build(&config, &mut rng.fork(1))?;
    let masking = MaskingConfig {
        mask_rate: a.mask_rate,
        ..MaskingConfig::default()
    };
    let mut examples = ExampleGenerator::new(docs.iter().map(|d| d.iter()), &vocab, a.seq_len, masking)?;
    let run = PretrainConfig {
        steps: a.steps,
        batch_size: a.batch,
        learning_rate: a.lr,
        with_nsp: !a.no_nsp,
        checkpoint_every: a.checkpoint_every,
    };
    let checkpoints = a.out_dir.join("checkpoints");
    let mut log = TrainLogWriter::create(&a.out_dir.join("pretrain.log"), a.checkpoint_every.map(|_| checkpoints.as_path()))?;
    let history = pretrain_run(&mut model, &mut examples, &run, &mut rng.fork(2), &mut log)?;
    let out = a.out_dir.join("pretrained.ckpt");
    save_checkpoint(&out, &Checkpoint::from_model(&model))?;
    let last = history.records.last().expect("at least one step");
    println!("{} steps, final loss {:.4}, skipped pairs {}", last.step, last.total, history.skipped_pairs);
    println!("wrote {}", out.display());
    Ok(())
}

fn labeled(path: &Path, vocab: &Vocab, seq_len: usize, classes: usize) -> Result<LabeledSet> {
    Ok(LabeledSet::encode(vocab, &read_labeled(path)?, seq_len, classes)?)
}

fn finetune(a: FinetuneArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let mut model = checkpoint.model()?;
    let vocab = read_vocab(&a.vocab)?;
    if vocab.len() != model.config.vocab {
        return Err(Error::Usage(format!("vocab has {} tokens, checkpoint expects {}", vocab.len(), model.config.vocab)));
    }
    let (train_raw, dev_raw) = (read_labeled(&a.train)?, read_labeled(&a.dev)?);
    let classes = train_raw.iter().chain(&dev_raw).map(|(_, l)| l + 1).max().unwrap_or(0).max(2);
    let seq_len = model.config.max_len;
    let train = LabeledSet::encode(&vocab, &train_raw, seq_len, classes)?;
    let dev = LabeledSet::encode(&vocab, &dev_raw, seq_len, classes)?;
    let mut rng = SeedRng::new(a.seed);
    let mut head = ClassifierHead::new(model.config.hidden, classes, &mut rng.fork(1))?;
    let config = FinetuneConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        max_steps: a.max_steps,
    };
    let outcome = finetune_run(&mut model, &mut head, &train, &dev, &config, &mut rng.fork(3))?;
    write_metrics(&a.out_dir.join("finetune.log"), &outcome.log)?;
    for r in &outcome.log {
        println!("epoch {}  loss {:.4}  dev accuracy {:.4}{}", r.epoch, r.train_loss, r.dev_accuracy, if r.best { "  *" } else { "" });
    }
    let out = a.out_dir.join("finetuned.ckpt");
    save_checkpoint(&out, &Checkpoint::from_model(&outcome.best_model).with_head(&outcome.best_head))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn eval(checkpoint: PathBuf, data: PathBuf, vocab: PathBuf) -> Result<()> {
    let checkpoint = load_checkpoint(&checkpoint)?;
    let model = checkpoint.model()?;
    let head = checkpoint
        .classifier()?
        .ok_or_else(|| Error::Usage("checkpoint has no classifier head; fine-tune it first".into()))?;
    let vocab = read_vocab(&vocab)?;
    let set = labeled(&data, &vocab, model.config.max_len, head.classes)?;
    println!("accuracy {:.4} over {} examples", evaluate(&model, &head, &set)?, set.len());
    Ok(())
}

fn synth(out_dir: PathBuf, seed: u64, sentences: usize, examples: usize) -> Result<()> {
    let mut rng = SeedRng::new(seed);
    let docs = TopicCorpus::default().generate(sentences, &mut rng);
    write_corpus(&out_dir.join("corpus.txt"), &docs)?;
    write_labeled(&out_dir.join("train.tsv"), &separable_set(examples, 6, &mut rng))?;
    write_labeled(&out_dir.join("dev.tsv"), &separable_set(examples.div_ceil(4).max(2), 6, &mut rng))?;
    println!("wrote corpus.txt, train.tsv, dev.tsv to {}", out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Preflight { vocab_size } => {
            let report = preflight(vocab_size);
            print!("{}", report.to_text());
            Ok(report.all_ok())
        }
        Command::Vocab {
            corpus,
            out,
            max_size,
            min_count,
        } => {
            let docs = read_corpus(&corpus)?;
            let vocab = Vocab::build(docs.iter().flatten().map(String::as_str), max_size, min_count)?;
            write_vocab(&out, &vocab)?;
            println!("{} tokens written to {}", vocab.len(), out.display());
            Ok(true)
        }
        Command::Synth {
            out_dir,
            seed,
            sentences,
            examples,
        } => synth(out_dir, seed, sentences, examples).map(|_| true),
        Command::Pretrain(args) => pretrain(args).map(|_| true),
        Command::Finetune(args) => finetune(args).map(|_| true),
        Command::Eval { checkpoint, data, vocab } => eval(checkpoint, data, vocab).map(|_| true),
        Command::Compare { spec } => {
            let spec = ExperimentSpec::load(&spec)?;
            let report = run_experiment(&spec)?;
            print!("{}", report.to_text());
            println!("report written to {}", spec.out_dir.display());
            Ok(report.all_ok())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
