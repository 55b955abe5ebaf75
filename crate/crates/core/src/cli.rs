//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, CorrectionSource, PipelineConfig, CONFIG_ENV};
use crate::stages::{self, StageOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "factforge",
    version,
    about = "Adversarial summary corruption and fact correction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load and segment the corpus, write a load report.
    Ingest,
    /// Train the n-gram infiller and write infiller training queries.
    TrainInfill,
    /// Corrupt reference summaries into the adversarial set.
    GenAdv,
    /// Serialize the adversarial set as corrector training data.
    BuildDataset,
    /// Correct summaries sentence by sentence.
    Correct,
    /// Score corrected summaries.
    Eval,
    /// Run every stage on the synthetic corruption loop.
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::TrainInfill => "train-infill",
            Command::GenAdv => "gen-adv",
            Command::BuildDataset => "build-dataset",
            Command::Correct => "correct",
            Command::Eval => "eval",
            Command::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub references: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Where train-infill writes the model.
    #[arg(long, global = true)]
    pub save_model: Option<PathBuf>,
    /// Where gen-adv reads the model.
    #[arg(long, global = true)]
    pub load_model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// `ngram` or `remote:<url>`.
    #[arg(long, global = true)]
    pub infill: Option<String>,
    #[arg(long, global = true)]
    pub rank_lo: Option<usize>,
    #[arg(long, global = true)]
    pub rank_hi: Option<usize>,
    #[arg(long, global = true)]
    pub beam_size: Option<usize>,
    #[arg(long, global = true)]
    pub positive_ratio: Option<f64>,
    #[arg(long, global = true)]
    pub candidates_per_mask: Option<usize>,
    #[arg(long, global = true)]
    pub length_normalize: bool,
    /// `baseline`, `identity` or `remote:<url>`.
    #[arg(long, global = true)]
    pub corrector: Option<String>,
    /// `none` or `remote:<url>`.
    #[arg(long, global = true)]
    pub filter: Option<String>,
    /// Summaries to correct: `corpus` or `adversarial`.
    #[arg(long, global = true, value_parser = parse_source)]
    pub source: Option<CorrectionSource>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long = "no-summ-ctxt", global = true)]
    pub no_summary_context: bool,
    #[arg(long = "no-relev-pass", global = true)]
    pub no_relevant_passages: bool,
    #[arg(long, global = true)]
    pub max_in: Option<usize>,
    #[arg(long, global = true)]
    pub max_out: Option<usize>,
    /// Write the corpus load report to this file.
    #[arg(long, global = true)]
    pub load_report: Option<PathBuf>,
    /// Write retrieved passages (build-dataset) to this JSONL file.
    #[arg(long, global = true)]
    pub dump_passages: Option<PathBuf>,
}

fn parse_source(s: &str) -> Result<CorrectionSource, String> {
    match s {
        "corpus" => Ok(CorrectionSource::Corpus),
        "adversarial" => Ok(CorrectionSource::Adversarial),
        _ => Err(format!("expected corpus or adversarial, got {s:?}")),
    }
}

impl Overrides {
    /// Flag values on top of `cfg`.
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let p = &mut cfg.paths;
        if let Some(v) = &self.corpus {
            p.corpus = Some(v.clone());
        }
        if let Some(v) = &self.references {
            p.references = Some(v.clone());
        }
        if let Some(v) = &self.lexicon {
            p.lexicon = Some(v.clone());
        }
        if let Some(v) = &self.out_dir {
            p.out_dir = v.clone();
        }
        if let Some(v) = self.save_model.as_ref().or(self.load_model.as_ref()) {
            p.model = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.gen.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = &self.infill {
            cfg.infill.backend = v.clone();
        }
        if let Some(v) = self.rank_lo {
            cfg.gen.rank_lo = v;
        }
        if let Some(v) = self.rank_hi {
            cfg.gen.rank_hi = v;
        }
        if let Some(v) = self.beam_size {
            cfg.gen.beam_size = v;
        }
        if let Some(v) = self.positive_ratio {
            cfg.gen.positive_ratio = v;
        }
        if let Some(v) = self.candidates_per_mask {
            cfg.gen.candidates_per_mask = v;
        }
        if self.length_normalize {
            cfg.infill.length_normalize = true;
        }
        if let Some(v) = &self.corrector {
            cfg.correct.backend = v.clone();
        }
        if let Some(v) = &self.filter {
            cfg.correct.filter = v.clone();
        }
        if let Some(v) = self.source {
            cfg.correct.source = v;
        }
        if let Some(v) = self.delta {
            cfg.correct.delta = v;
        }
        if self.no_summary_context {
            cfg.ablation.use_summary_context = false;
        }
        if self.no_relevant_passages {
            cfg.ablation.use_relevant_passages = false;
        }
        if let Some(v) = self.max_in {
            cfg.limits.max_in = v;
        }
        if let Some(v) = self.max_out {
            cfg.limits.max_out = v;
        }
    }

    /// Defaults, then the config file, then flags; validated.
    pub fn resolve(&self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn stage_options(&self) -> StageOptions {
        StageOptions {
            load_report: self.load_report.clone(),
            dump_passages: self.dump_passages.clone(),
        }
    }
}

fn dispatch(command: Command, cfg: &PipelineConfig, opts: &StageOptions) -> anyhow::Result<()> {
    match command {
        Command::Ingest => stages::ingest(cfg, opts).map(drop),
        Command::TrainInfill => stages::train_infill(cfg, opts).map(drop),
        Command::GenAdv => stages::gen_adv(cfg, opts).map(drop),
        Command::BuildDataset => stages::build_dataset(cfg, opts).map(drop),
        Command::Correct => stages::correct(cfg, opts).map(drop),
        Command::Eval => stages::eval(cfg, opts).map(drop),
        Command::Pipeline => stages::pipeline(cfg, opts).map(drop),
    }
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match cli.overrides.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match serde_json::to_string(&cfg) {
        Ok(echo) => {
            log::info!("resolved config: {echo}");
            let path = cfg.paths.out_dir.join("config.resolved.json");
            if let Err(e) = crate::write_json(&path, &cfg) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_FAILURE;
            }
        }
        Err(e) => log::warn!("cannot echo config: {e}"),
    }

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_FAILURE;
        }
    };
    let opts = cli.overrides.stage_options();
    match pool.install(|| dispatch(cli.command, &cfg, &opts)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {} failed: {e:#}", cli.command.name());
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"gen": {"seed": 5, "rank_hi": 12}, "passages": {"window": 1}}"#,
        )
        .unwrap();
        let cli = Cli::try_parse_from([
            "factforge",
            "gen-adv",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "7",
        ])
        .unwrap();
        let cfg = cli.overrides.resolve().unwrap();
        assert_eq!(cfg.gen.seed, 7); // flag
        assert_eq!(cfg.gen.rank_hi, 12); // file
        assert_eq!(cfg.passages.window, 1); // file
        assert_eq!(cfg.gen.rank_lo, 5); // default
        assert_eq!(cfg.passages.top_k, 3); // default
    }

    #[test]
    fn ablation_and_backend_flags() {
        let cli = Cli::try_parse_from([
            "factforge",
            "correct",
            "--no-summ-ctxt",
            "--no-relev-pass",
            "--corrector",
            "remote:http://localhost:1",
            "--filter",
            "remote:http://localhost:2",
            "--source",
            "adversarial",
        ])
        .unwrap();
        let cfg = cli.overrides.resolve().unwrap();
        assert!(!cfg.ablation.use_summary_context && !cfg.ablation.use_relevant_passages);
        assert_eq!(cfg.correct.backend, "remote:http://localhost:1");
        assert_eq!(cfg.correct.source, CorrectionSource::Adversarial);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let cli = Cli::try_parse_from(["factforge", "gen-adv", "--rank-lo", "20"]).unwrap();
        assert_eq!(run(&cli), EXIT_CONFIG);
    }
}
