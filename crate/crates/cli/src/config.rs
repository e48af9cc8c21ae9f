//! Run configuration: one TOML file drives every command.
//!
//! A run file mirrors the library's option structs exactly — `[model]` and
//! `[training]` accept every field those structs expose, `[data]` covers
//! segmentation, partitioning and synthetic generation, and the top level
//! holds paths and the master seed. Unknown keys anywhere are rejected so
//! typos fail loudly instead of silently falling back to defaults. All
//! defaults reproduce the reference setup (300-d embeddings, 200-unit
//! encoders, learning rate 0.001 decayed tenfold every 3 epochs, batches
//! of 120, clip 1.0, edge-loss weight 0.1).

use std::fs;
use std::path::{Path, PathBuf};

use incongruity::corpus::SegmentConfig;
use incongruity::model::ModelConfig;
use incongruity::synthgen::{default_types, GenType};
use incongruity::textenc::DEFAULT_MIN_COUNT;
use incongruity::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Corpus preparation settings: how articles are segmented, how the corpus
/// is partitioned, and how synthetic incongruent samples are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Fractions for train/dev/test/donor-pool; must be positive and sum to 1.
    pub partition: [f64; 4],
    /// Share of each split rebuilt with a swapped-in foreign paragraph.
    pub incongruent_fraction: f64,
    /// Allowed mix-up processes (`"I"`..`"IV"`) for incongruent samples.
    pub gen_types: Vec<GenType>,
    /// Minimum token count for vocabulary admission.
    pub min_count: usize,
    pub segment: SegmentConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            partition: [0.7, 0.1, 0.1, 0.1],
            incongruent_fraction: 0.5,
            gen_types: default_types(),
            min_count: DEFAULT_MIN_COUNT,
            segment: SegmentConfig::default(),
        }
    }
}

/// Everything a run needs: input paths, output directory, master seed, and
/// the full data/model/training option set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Raw articles, one `{id, headline, content}` JSON object per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Pretrained word vectors, one `token v1 .. vD` line each. Absent
    /// tokens (and the whole table when no path is given) fall back to
    /// seeded Gaussian vectors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Master seed for partitioning, generation and parameter init. Batch
    /// shuffling uses `training.seed`; `--seed` on the command line sets both.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            embeddings: None,
            output_dir: PathBuf::from("out"),
            seed: 42,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a TOML run file, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            // toml's message spans multiple lines; keep the first line so the
            // error stays machine-parsable, then append the span context.
            let detail = e.message().lines().next().unwrap_or("invalid TOML").to_string();
            let span = e
                .span()
                .map(|s| format!(" (config bytes {}..{})", s.start, s.end))
                .unwrap_or_default();
            CliError::usage(format!("config: {detail}{span}"))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The corpus path, or a usage error naming the missing key.
    pub fn corpus_path(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::usage("no corpus path; set `corpus` in the config or pass --corpus"))
    }

    /// Render the fully resolved configuration for the run log.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Load the run file (or defaults when no path is given) and fold in the
/// command-line overrides. `--seed` retargets both the master seed and the
/// batch-shuffle seed so one flag makes the whole run reproducible.
pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(corpus) = &overrides.corpus {
        config.corpus = Some(corpus.clone());
    }
    if let Some(embeddings) = &overrides.embeddings {
        config.embeddings = Some(embeddings.clone());
    }
    if let Some(dir) = &overrides.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
        config.training.seed = seed;
    }
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<()> {
    config.model.validate().map_err(CliError::from)?;
    config.training.validate().map_err(CliError::from)?;
    if !(0.0..=1.0).contains(&config.data.incongruent_fraction) {
        return Err(CliError::usage(format!(
            "incongruent_fraction must lie in [0, 1], got {}",
            config.data.incongruent_fraction
        )));
    }
    if config.data.gen_types.is_empty() && config.data.incongruent_fraction > 0.0 {
        return Err(CliError::usage(
            "gen_types is empty but incongruent_fraction is positive",
        ));
    }
    Ok(())
}
