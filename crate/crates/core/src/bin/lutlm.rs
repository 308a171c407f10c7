use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lutlm::encoder::{count_parameters, ModelConfig, Variant};
use lutlm::latent::top_examples_per_category;
use lutlm::model::{extract_features, text_example};
use lutlm::planted;
use lutlm::preprocess::{prepare_file, read_examples, MAX_LEN};
use lutlm::tokenizer::{Vocabulary, WeightTable};
use lutlm::trainer::{evaluate, load_checkpoint, train, LoadedCheckpoint, TrainConfig};
use lutlm::{Error, Result};

#[derive(Parser)]
#[command(name = "lutlm", version, about = "Latent-bias masked language model pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, pair, mask and weight a corpus (one tweet per line).
    Prepare {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        emoticons: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a `key = value` configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Accuracies and mean losses of a checkpoint on a prepared example file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        examples: PathBuf,
    },
    /// Category distribution and classification vector for one text.
    Features {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        text: String,
    },
    /// Top-k texts of a corpus for every latent category.
    LatentReport {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Parameter breakdown for a configuration and the full-size presets.
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic two-author corpus with its vocabulary files.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    let mut out = String::new();
    match command {
        Command::Prepare {
            corpus,
            vocab,
            emoticons,
            out: target,
            seed,
        } => {
            let vocab = Vocabulary::load(&vocab, emoticons.as_deref())?;
            let prepared = prepare_file(&corpus, &vocab, &WeightTable::default(), &target, seed)?;
            log::info!(
                "{} examples written, {} single-sentence tweets skipped, {} pairs too long",
                prepared.examples.len(),
                prepared.single_sentence,
                prepared.unfittable
            );
        }
        Command::Train { config } => {
            let cfg = TrainConfig::load(&config)?;
            let outcome = train(&cfg)?;
            if let Some(last) = outcome.rows.last() {
                writeln!(out, "{}", lutlm::trainer::METRICS_HEADER).unwrap();
                writeln!(out, "{}", last.to_csv()).unwrap();
            }
            log::info!(
                "metrics in {}, checkpoint {}",
                outcome.metrics_path.display(),
                outcome.checkpoint_path.display()
            );
        }
        Command::Eval {
            checkpoint,
            examples,
        } => {
            let ck = open_checkpoint(&checkpoint)?;
            let (header, examples) = read_examples(&examples)?;
            let vocab_len = ck.checkpoint.vocab.len();
            if header.vocab_size as usize != vocab_len {
                return Err(Error::Mismatch(format!(
                    "examples were prepared with {} tokens, checkpoint vocabulary has {vocab_len}",
                    header.vocab_size
                )));
            }
            let r = evaluate(&ck.checkpoint.params, &ck.checkpoint.config, &examples)?;
            writeln!(out, "examples\t{}", r.examples).unwrap();
            writeln!(out, "mlm_accuracy\t{:.6}", r.mlm_accuracy).unwrap();
            writeln!(out, "ns_accuracy\t{:.6}", r.ns_accuracy).unwrap();
            writeln!(out, "mlm_loss\t{:.6}", r.losses.mlm).unwrap();
            writeln!(out, "ns_loss\t{:.6}", r.losses.ns).unwrap();
            writeln!(out, "ponder_loss\t{:.6}", r.losses.ponder).unwrap();
            writeln!(out, "total_loss\t{:.6}", r.losses.total).unwrap();
            writeln!(out, "mean_ponder_steps\t{:.6}", r.mean_ponder_steps).unwrap();
        }
        Command::Features { checkpoint, text } => {
            let ck = open_checkpoint(&checkpoint)?.checkpoint;
            let max_len = MAX_LEN.min(ck.config.max_positions);
            let ex = text_example(&text, &ck.vocab, max_len)
                .ok_or_else(|| Error::Mismatch("text has no tokens".into()))?;
            let f = extract_features(&ck.params, &ck.config, &ex)?;
            let mut fields: Vec<String> = match &f.distribution {
                Some(p) => p.iter().map(|x| format!("{x:.6}")).collect(),
                None => vec!["-".into()],
            };
            fields.extend(f.classification.iter().map(|x| format!("{x:.6}")));
            writeln!(out, "{}", fields.join("\t")).unwrap();
        }
        Command::LatentReport {
            checkpoint,
            corpus,
            k,
        } => {
            if k == 0 {
                return Err(Error::Config("k must be at least 1".into()));
            }
            let ck = open_checkpoint(&checkpoint)?.checkpoint;
            if ck.config.latent() == 0 {
                return Err(Error::Config(format!(
                    "variant {} has no latent categories",
                    ck.config.variant
                )));
            }
            let text = std::fs::read_to_string(&corpus).map_err(|e| Error::io(&corpus, e))?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            let b = ck.params.require("latent.bias_matrix").map_err(lutlm::Error::from)?;
            let mut dists = Vec::with_capacity(lines.len());
            for line in &lines {
                let ids: Vec<u32> = lutlm::tokenizer::tokenize(line, &ck.vocab)
                    .into_iter()
                    .filter(|t| !ck.vocab.is_special_id(t.id))
                    .map(|t| t.id)
                    .collect();
                let p = lutlm::latent::latent_distribution(b, &ids)?;
                dists.push(p.iter().map(|&x| x as f64).collect());
            }
            for (cat, ranked) in top_examples_per_category(&dists, k).iter().enumerate() {
                for (rank, (idx, p)) in ranked.iter().enumerate() {
                    writeln!(out, "{cat}\t{}\t{p:.6}\t{}", rank + 1, lines[*idx]).unwrap();
                }
            }
        }
        Command::Params { config } => {
            if let Some(path) = config {
                let cfg = TrainConfig::load(&path)?;
                let mut model = cfg.model.clone();
                if model.vocab == 0 {
                    if let Some(v) = &cfg.vocab_path {
                        model.vocab = Vocabulary::load(v, cfg.emoticons_path.as_deref())?.len();
                    }
                }
                model.validate()?;
                writeln!(out, "# {}", path.display()).unwrap();
                params_report(&mut out, &model);
                out.push('\n');
            }
            writeln!(out, "# full-size presets").unwrap();
            for v in Variant::ALL {
                let c = count_parameters(&ModelConfig::paper(v));
                writeln!(out, "{}\t{}\t{}", v.name(), c.reported, c.total).unwrap();
            }
        }
        Command::Synth {
            out_dir,
            count,
            seed,
        } => {
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let corpus = planted::generate(count, seed);
            let write = |name: &str, lines: &[String]| -> Result<()> {
                let path = out_dir.join(name);
                let mut text = lines.join("\n");
                text.push('\n');
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
            };
            write("corpus.txt", &corpus.tweets)?;
            let cats: Vec<String> = corpus.categories.iter().map(|c| c.to_string()).collect();
            write("categories.txt", &cats)?;
            write("vocab.txt", &planted::vocabulary_tokens())?;
            let emo: Vec<String> = planted::EMOTICONS.iter().map(|s| s.to_string()).collect();
            write("emoticons.txt", &emo)?;
            log::info!("{count} tweets written to {}", out_dir.display());
        }
    }
    std::io::stdout()
        .write_all(out.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn params_report(out: &mut String, model: &ModelConfig) {
    let c = count_parameters(model);
    writeln!(out, "variant\t{}", model.variant).unwrap();
    for (g, n) in &c.by_group {
        if *n > 0 {
            let note = if g.in_reported_total() { "" } else { "\t(head)" };
            writeln!(out, "{}\t{n}{note}", g.name()).unwrap();
        }
    }
    writeln!(out, "reported\t{}", c.reported).unwrap();
    writeln!(out, "total\t{}", c.total).unwrap();
}

fn open_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    Ok(load_checkpoint(path)?)
}
