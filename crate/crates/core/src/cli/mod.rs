//! Command-line surface. Every flag in [`Settings`] can also be set in a
//! TOML file passed with `--config`; flags win over the file, the file wins
//! over built-in defaults.

mod commands;

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use lgvqa::backends::BackendSpec;
use lgvqa::data::Adapter;
use lgvqa::guidance::{parse_kinds, ALL_KINDS};
use lgvqa::scoring::ScoringMode;
use lgvqa::GuidanceKind;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

pub const CACHE_DIR_ENV: &str = "LGVQA_CACHE_DIR";
pub const CACHE_FILE_NAME: &str = "guidance.jsonl";
pub const DEFAULT_DIM: usize = 16;
pub const DEFAULT_OUT_DIR: &str = "lgvqa-out";

#[derive(Debug, Parser)]
#[command(name = "lgvqa", version, about = "Multi-choice VQA with language guidance")]
pub struct Cli {
    /// TOML file mirroring the command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted image/answer tokens.
    Synth {
        #[command(flatten)]
        settings: Settings,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        choices: usize,
        /// Output JSONL; defaults to `<out-dir>/synth.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a dataset without training and write predictions and a report.
    ZeroShot {
        #[command(flatten)]
        settings: Settings,
    },
    /// Fine-tune a toy backend and write checkpoint, metrics and reports.
    Train {
        #[command(flatten)]
        settings: Settings,
    },
    /// Populate the guidance cache from the stub generator or ingestion files.
    Guidance {
        #[command(flatten)]
        settings: Settings,
        #[command(flatten)]
        sources: GuidanceSources,
    },
    /// Build an accuracy report from one or more prediction files (runs).
    Eval {
        #[command(flatten)]
        settings: Settings,
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Compare prediction files of several modes against a baseline.
    Compare {
        #[command(flatten)]
        settings: Settings,
        /// `label=path`, or a bare path labelled by the mode stored in it.
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<String>,
        #[arg(long, default_value = "unguided")]
        baseline: String,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct GuidanceSources {
    /// Templated generator standing in for a trained one (`stub`).
    #[arg(long)]
    pub generator: Option<String>,
    /// JSONL of `{image_ref, triplets: [[s, p, o], ...]}`.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// JSONL of `{image_ref, labels: [...]}`.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Store guidance shipped with the dataset (rationales, lectures).
    #[arg(long)]
    pub from_dataset: bool,
}

/// Flags shared by all commands. Unset values fall back to the config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// canonical | aokvqa | scienceqa | vsr | iconqa
    #[arg(long)]
    pub adapter: Option<String>,
    /// Held-out set for epoch selection (same adapter).
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// toy-dual | toy-fusion | plugin:<name>
    #[arg(long)]
    pub backend: Option<String>,
    /// zero_shot | unguided | guided_concat | guided_merge
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma list of kinds, or all | cso | csol.
    #[arg(long)]
    pub guidance_kinds: Option<String>,
    #[arg(long)]
    pub guidance_cache: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Published reference table to render next to reports: aokvqa | other | question_types.
    #[arg(long)]
    pub paper_ref: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub overwrite: bool,
    /// Toy backend checkpoint to start from.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Toy backend width.
    #[arg(long)]
    pub dim: Option<usize>,
    /// JSON map of image_ref to feature vector; defaults to hashed features.
    #[arg(long)]
    pub image_features: Option<PathBuf>,
    /// Comma list of parameter names or groups kept frozen.
    #[arg(long)]
    pub freeze: Option<String>,
    /// Drop training instances that lack guidance instead of failing.
    #[arg(long)]
    #[serde(default)]
    pub skip_missing_guidance: bool,
}

macro_rules! pick {
    ($cli:expr, $file:expr, $($field:ident),+) => {
        Settings {
            $($field: $cli.$field.or($file.$field),)+
            overwrite: $cli.overwrite || $file.overwrite,
            skip_missing_guidance: $cli.skip_missing_guidance || $file.skip_missing_guidance,
        }
    };
}

impl Settings {
    /// Flag values over `file` values.
    pub fn over(self, file: Settings) -> Settings {
        pick!(
            self,
            file,
            dataset,
            adapter,
            validation,
            backend,
            mode,
            guidance_kinds,
            guidance_cache,
            lr,
            batch_size,
            epochs,
            seed,
            out_dir,
            paper_ref,
            checkpoint,
            dim,
            image_features,
            freeze
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(DEFAULT_DIM)
    }

    pub fn adapter(&self) -> Result<Adapter, Failure> {
        match &self.adapter {
            None => Ok(Adapter::Canonical),
            Some(a) => a.parse().map_err(|e: String| Failure::config(anyhow!(e))),
        }
    }

    pub fn backend(&self) -> Result<BackendSpec, Failure> {
        match &self.backend {
            None => Ok(BackendSpec::ToyDual),
            Some(b) => b.parse().map_err(|e: String| Failure::config(anyhow!(e))),
        }
    }

    pub fn mode(&self, default: ScoringMode) -> Result<ScoringMode, Failure> {
        match &self.mode {
            None => Ok(default),
            Some(m) => m.parse().map_err(|e: String| Failure::config(anyhow!(e))),
        }
    }

    /// Requested kinds; guided modes default to every generated kind.
    pub fn kinds(&self, mode: ScoringMode) -> Result<Vec<GuidanceKind>, Failure> {
        match &self.guidance_kinds {
            Some(spec) => parse_kinds(spec).map_err(|e| Failure::config(e.into())),
            None if mode.is_guided() => Ok(ALL_KINDS.to_vec()),
            None => Ok(Vec::new()),
        }
    }

    /// `--guidance-cache`, else `$LGVQA_CACHE_DIR/guidance.jsonl`.
    pub fn cache_path(&self) -> Option<PathBuf> {
        self.guidance_cache.clone().or_else(|| {
            std::env::var_os(CACHE_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(|dir| Path::new(&dir).join(CACHE_FILE_NAME))
        })
    }

    pub fn freeze(&self) -> Vec<String> {
        self.freeze
            .as_deref()
            .unwrap_or_default()
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }

    pub fn require_dataset(&self) -> Result<&Path, Failure> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Failure::config(anyhow!("--dataset is required")))
    }
}

pub fn load_config_file(path: &Path) -> Result<Settings, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))
        .map_err(Failure::config)?;
    toml::from_str(&text)
        .with_context(|| format!("invalid config file {}", path.display()))
        .map_err(Failure::config)
}

/// An error with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_CONFIG,
            error,
        }
    }

    pub fn data(error: anyhow::Error) -> Self {
        Self { code: EXIT_DATA, error }
    }

    pub fn partial(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_PARTIAL,
            error,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub trait OrExit<T> {
    fn or_config(self) -> Result<T, Failure>;
    fn or_data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::config(e.into()))
    }

    fn or_data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::data(e.into()))
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => load_config_file(path)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Synth {
            settings,
            n,
            choices,
            out,
        } => commands::synth(&settings.over(file), n, choices, out),
        Command::ZeroShot { settings } => commands::zero_shot(&settings.over(file)),
        Command::Train { settings } => commands::train(&settings.over(file)),
        Command::Guidance { settings, sources } => commands::guidance(&settings.over(file), &sources),
        Command::Eval { settings, predictions } => commands::eval(&settings.over(file), &predictions),
        Command::Compare {
            settings,
            inputs,
            baseline,
        } => commands::compare(&settings.over(file), &inputs, &baseline),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let file: Settings = toml::from_str("lr = 0.5\nepochs = 3\nseed = 9\noverwrite = true").unwrap();
        let cli = Settings {
            lr: Some(0.1),
            ..Settings::default()
        };
        let s = cli.over(file);
        assert_eq!(s.lr, Some(0.1));
        assert_eq!(s.epochs, Some(3));
        assert_eq!(s.seed(), 9);
        assert!(s.overwrite);
        assert_eq!(s.dim(), DEFAULT_DIM);
        assert_eq!(s.out_dir(), PathBuf::from(DEFAULT_OUT_DIR));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("learning_rate = 0.1").is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let s = Settings {
            backend: Some("clip".into()),
            mode: Some("guided".into()),
            ..Settings::default()
        };
        assert_eq!(s.backend().unwrap_err().code, EXIT_CONFIG);
        assert_eq!(s.mode(ScoringMode::Unguided).unwrap_err().code, EXIT_CONFIG);
        assert_eq!(
            Settings::default().kinds(ScoringMode::GuidedMerge).unwrap(),
            ALL_KINDS.to_vec()
        );
        assert!(Settings::default().kinds(ScoringMode::Unguided).unwrap().is_empty());
    }

    #[test]
    fn freeze_list() {
        let s = Settings {
            freeze: Some("qformer, proj.bias,".into()),
            ..Settings::default()
        };
        assert_eq!(s.freeze(), ["qformer", "proj.bias"]);
    }

    #[test]
    fn parses_documented_invocation() {
        let cli = Cli::try_parse_from([
            "lgvqa",
            "train",
            "--dataset",
            "d.jsonl",
            "--backend",
            "toy-fusion",
            "--mode",
            "guided_merge",
            "--guidance-kinds",
            "rationale,caption",
            "--lr",
            "0.01",
            "--epochs",
            "5",
        ])
        .unwrap();
        match cli.command {
            Command::Train { settings } => {
                assert_eq!(settings.lr, Some(0.01));
                assert_eq!(settings.mode(ScoringMode::Unguided).unwrap(), ScoringMode::GuidedMerge);
                assert_eq!(
                    settings.kinds(ScoringMode::GuidedMerge).unwrap(),
                    [GuidanceKind::Rationale, GuidanceKind::Caption]
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
