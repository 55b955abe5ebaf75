#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use factforge::config::PipelineConfig;
use factforge::toy::TOY_CORPUS;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_factforge"))
}

/// Runs the CLI in `dir` with `RUST_LOG` silenced.
pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .env_remove("FACTFORGE_CONFIG")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("spawn factforge")
}

/// The bundled corpus with every document repeated `times` times under
/// fresh ids.
pub fn replicated_corpus(times: usize) -> String {
    let mut out = String::new();
    for r in 0..times {
        for line in TOY_CORPUS.lines().filter(|l| !l.trim().is_empty()) {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            let id = format!("{}-r{r:03}", v["id"].as_str().unwrap());
            v["id"] = serde_json::Value::String(id);
            out.push_str(&v.to_string());
            out.push('\n');
        }
    }
    out
}

pub fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

/// Defaults pointed at `corpus`, writing under `out_dir`.
pub fn config(corpus: &Path, out_dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.corpus = Some(corpus.to_path_buf());
    cfg.paths.out_dir = out_dir.to_path_buf();
    cfg
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}
