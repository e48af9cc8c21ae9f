//! `incongruity` — detect headline/body incongruity from the command line.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use incongruity_cli::commands::{self, CHECKPOINT_FILE};
use incongruity_cli::predict::{
    format_prediction, predict, segments_from_body, write_prediction, PredictInput,
};
use incongruity_cli::{resolve, CliError, Overrides, Result, RunConfig};

const DEFAULTS_NOTE: &str = "Configuration defaults reproduce the reference setup: 300-d frozen \
embeddings, a 200-unit word encoder, a 100-unit-per-direction paragraph encoder, three 200-unit \
graph layers, learning rate 0.001 decayed tenfold every 3 epochs, batch size 120, gradient clip \
1.0, edge-loss weight 0.1, 9 epochs. Override any of them in the --config TOML file.";

#[derive(Parser)]
#[command(
    name = "incongruity",
    version,
    about = "Detect incongruity between a news headline and its body content",
    after_help = DEFAULTS_NOTE,
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Flags override the config file.
#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; omitted sections use the defaults below
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Raw corpus: one {id, headline, content} JSON article per line
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,

    /// Pretrained word vectors (token followed by the values, one line each)
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,

    /// Artifact directory [default: out]
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Master seed; also retargets the batch-shuffle seed [default: 42]
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let overrides = Overrides {
            corpus: self.corpus.clone(),
            embeddings: self.embeddings.clone(),
            output_dir: self.output_dir.clone(),
            seed: self.seed,
        };
        let config = resolve(self.config.as_deref(), &overrides)?;
        commands::log_config(&config);
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Clean, segment and filter a raw corpus; print its shape
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Partition the corpus and synthesize labeled train/dev/test splits
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Build the vocabulary from the training split and report coverage
    Vocab {
        #[command(flatten)]
        common: Common,
    },
    /// Train the model on the generated splits and save a checkpoint
    #[command(after_help = DEFAULTS_NOTE)]
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score labeled datasets with a checkpoint; print and save the report
    Evaluate {
        #[command(flatten)]
        common: Common,

        /// Trained model [default: <output-dir>/checkpoint.json]
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,

        /// Labeled dataset to score (repeatable; rows are named by file stem)
        /// [default: the generated dev and test splits]
        #[arg(long = "data", value_name = "FILE")]
        data: Vec<PathBuf>,

        /// Where to write the CSV report [default: <output-dir>/report.csv]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Score a new article or free-text segments with a checkpoint
    Predict {
        #[command(flatten)]
        common: Common,

        /// Trained model [default: <output-dir>/checkpoint.json]
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,

        /// Headline of the input article
        #[arg(long, value_name = "TEXT")]
        headline: String,

        /// Body text file; segmented with the configured corpus settings
        #[arg(long, value_name = "FILE", conflicts_with_all = ["segment", "segments_file"])]
        body: Option<PathBuf>,

        /// One pre-split segment (e.g., a comment); repeatable
        #[arg(long, value_name = "TEXT")]
        segment: Vec<String>,

        /// File with one segment per line, appended after --segment values
        #[arg(long, value_name = "FILE")]
        segments_file: Option<PathBuf>,

        /// Score against this text instead of the headline (the report still
        /// echoes the headline)
        #[arg(long, value_name = "TEXT")]
        anchor: Option<String>,

        /// Also write the report as JSON
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run ingest, generate, vocab, train and evaluate in one go
    #[command(after_help = DEFAULTS_NOTE)]
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn read_text(path: &PathBuf, what: &str) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{what} {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { common } => commands::cmd_ingest(&common.resolve()?),
        Command::Generate { common } => commands::cmd_generate(&common.resolve()?),
        Command::Vocab { common } => commands::cmd_vocab(&common.resolve()?),
        Command::Train { common } => commands::cmd_train(&common.resolve()?),
        Command::Evaluate { common, checkpoint, data, out } => {
            let config = common.resolve()?;
            commands::cmd_evaluate(&config, checkpoint.as_deref(), &data, out.as_deref())
        }
        Command::Predict {
            common,
            checkpoint,
            headline,
            body,
            segment,
            segments_file,
            anchor,
            out,
        } => {
            let config = common.resolve()?;
            let ckpt_path = checkpoint.unwrap_or_else(|| config.artifact(CHECKPOINT_FILE));
            let ckpt = incongruity::checkpoint::load_checkpoint(&ckpt_path)?;

            let mut segments = segment;
            if let Some(path) = &segments_file {
                let text = read_text(path, "segments file")?;
                segments.extend(
                    text.lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .map(String::from),
                );
            }
            if let Some(path) = &body {
                if !segments.is_empty() {
                    return Err(CliError::usage(
                        "--body conflicts with --segment/--segments-file; provide one input shape",
                    ));
                }
                let text = read_text(path, "body file")?;
                segments = segments_from_body(&headline, &text, &config.data.segment)?;
            }
            if segments.is_empty() {
                return Err(CliError::usage(
                    "no input: provide --body FILE, or --segment/--segments-file",
                ));
            }

            let input = PredictInput { headline, anchor, segments };
            let report = predict(&ckpt, &input)?;
            print!("{}", format_prediction(&report));
            if let Some(path) = &out {
                write_prediction(path, &report)?;
                eprintln!("predict: wrote {}", path.display());
            }
            Ok(())
        }
        Command::Pipeline { common } => commands::cmd_pipeline(&common.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            let rendered = err.render().to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            for line in rendered.lines().skip(1) {
                eprintln!("{line}");
            }
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.kind.code() as u8)
        }
    }
}
