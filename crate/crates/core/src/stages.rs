//! Pipeline stages. Each stage reads its inputs from configured paths, writes
//! its artifacts atomically and leaves a machine-readable summary in the
//! reports directory.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::advgen::{self, AdversarialExample, DatasetLine, Label};
use crate::config::{CorrectionSource, PipelineConfig};
use crate::corpus::{load_corpus, Document, LoadedCorpus, SummaryKind, SummaryUnit};
use crate::correct::{
    correct_summary, BaselineCorrector, CorrectionParams, CorrectionResult, Corrector,
    FactualityClassifier, IdentityCorrector, RemoteClassifier, RemoteCorrector,
};
use crate::evalrep::{evaluate, restoration_stats, span_in_passages, EvalReport};
use crate::extract::VerbLexicon;
use crate::http::{remote_url, JsonClient, DEFAULT_ATTEMPTS, DEFAULT_TIMEOUT};
use crate::infill::{
    build_infill_training, train_ngram, BeamInfiller, InfillTrainingRecord, Infiller,
    NGramInfillModel, RemoteInfiller,
};
use crate::passage::select_passages;
use crate::{read_jsonl, write_json, write_jsonl};

/// Extra per-invocation outputs that are not part of the pipeline config.
#[derive(Debug, Clone, Default)]
pub struct StageOptions {
    /// Also write the corpus load report here.
    pub load_report: Option<PathBuf>,
    /// Write the passages retrieved while building the dataset here.
    pub dump_passages: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub outputs: BTreeMap<String, String>,
    pub stats: Value,
}

fn summary_path(cfg: &PipelineConfig, stage: &str) -> PathBuf {
    cfg.paths.reports().join(format!("{stage}.summary.json"))
}

fn finish(
    cfg: &PipelineConfig,
    stage: &str,
    outputs: &[(&str, &Path)],
    stats: Value,
) -> Result<StageSummary> {
    let summary = StageSummary {
        stage: stage.to_string(),
        outputs: outputs
            .iter()
            .map(|(k, p)| (k.to_string(), cfg.paths.display_rel(p)))
            .collect(),
        stats,
    };
    write_json(&summary_path(cfg, stage), &summary)?;
    log::info!("{stage}: {}", serde_json::to_string(&summary.stats)?);
    Ok(summary)
}

fn corpus_path(cfg: &PipelineConfig) -> Result<&Path> {
    cfg.paths
        .corpus
        .as_deref()
        .context("no corpus configured (set paths.corpus or pass --corpus)")
}

fn load(cfg: &PipelineConfig, opts: &StageOptions, kind: SummaryKind) -> Result<LoadedCorpus> {
    let corpus = load_corpus(corpus_path(cfg)?, kind)?;
    if let Some(path) = &opts.load_report {
        write_json(path, &corpus.report)?;
    }
    if !corpus.report.skipped.is_empty() {
        log::warn!(
            "{}: skipped {} malformed line(s)",
            corpus.report.path,
            corpus.report.skipped.len()
        );
    }
    Ok(corpus)
}

pub fn lexicon(cfg: &PipelineConfig) -> Result<VerbLexicon> {
    match &cfg.paths.lexicon {
        Some(p) => {
            VerbLexicon::load(p).with_context(|| format!("cannot read lexicon {}", p.display()))
        }
        None => Ok(VerbLexicon::bundled()),
    }
}

fn client(cfg: &PipelineConfig) -> JsonClient {
    JsonClient::new(DEFAULT_TIMEOUT, DEFAULT_ATTEMPTS, cfg.correct.max_in_flight)
}

#[derive(Serialize)]
struct IngestedPair<'a> {
    document: &'a Document,
    summary: &'a SummaryUnit,
}

pub fn ingest(cfg: &PipelineConfig, opts: &StageOptions) -> Result<StageSummary> {
    let corpus = load(cfg, opts, SummaryKind::Reference)?;
    let out = cfg.paths.out_dir.join("ingested.jsonl");
    let lines: Vec<IngestedPair> = corpus
        .pairs
        .iter()
        .map(|(document, summary)| IngestedPair { document, summary })
        .collect();
    write_jsonl(&out, &lines)?;
    let report = cfg.paths.reports().join("load_report.json");
    write_json(&report, &corpus.report)?;
    let stats = json!({
        "documents": corpus.pairs.len(),
        "document_sentences": corpus.pairs.iter().map(|(d, _)| d.sentences.len()).sum::<usize>(),
        "summary_sentences": corpus.pairs.iter().map(|(_, s)| s.sentences.len()).sum::<usize>(),
        "skipped_lines": corpus.report.skipped.len(),
    });
    finish(
        cfg,
        "ingest",
        &[("ingested", &out), ("load_report", &report)],
        stats,
    )
}

pub fn train_infill(cfg: &PipelineConfig, opts: &StageOptions) -> Result<StageSummary> {
    let corpus = load(cfg, opts, SummaryKind::Reference)?;
    let lex = lexicon(cfg)?;
    let model = train_ngram(corpus.documents(), cfg.infill.order, cfg.infill.alpha)?;
    let model_path = cfg.paths.model();
    model.save(&model_path)?;

    let queries: Vec<InfillTrainingRecord> = corpus
        .documents()
        .flat_map(|d| build_infill_training(d, &lex, cfg.infill.k_first))
        .map(|q| InfillTrainingRecord::from_query(&q))
        .collect();
    let queries_path = cfg.paths.out_dir.join("infill_train.jsonl");
    write_jsonl(&queries_path, &queries)?;

    let stats = json!({
        "documents": corpus.pairs.len(),
        "order": model.order(),
        "alpha": model.alpha(),
        "vocab_size": model.vocab_size(),
        "infill_queries": queries.len(),
    });
    finish(
        cfg,
        "train-infill",
        &[("model", &model_path), ("infill_train", &queries_path)],
        stats,
    )
}

fn infiller(cfg: &PipelineConfig) -> Result<Box<dyn Infiller>> {
    let i = &cfg.infill;
    if let Some(url) = remote_url(&i.backend) {
        let mut r = RemoteInfiller::new(url, client(cfg));
        r.context_limit = i.context_limit;
        return Ok(Box::new(r));
    }
    let path = cfg.paths.model();
    let model = NGramInfillModel::load(&path).with_context(|| {
        format!(
            "cannot load infill model {} (run train-infill first)",
            path.display()
        )
    })?;
    Ok(Box::new(BeamInfiller {
        model,
        max_span_len: i.max_span_len,
        length_normalize: i.length_normalize,
    }))
}

pub fn gen_adv(cfg: &PipelineConfig, opts: &StageOptions) -> Result<StageSummary> {
    let corpus = load(cfg, opts, SummaryKind::Reference)?;
    let lex = lexicon(cfg)?;
    let infiller = infiller(cfg)?;
    let (examples, stats) = advgen::generate(&corpus.pairs, infiller.as_ref(), &lex, &cfg.gen)?;

    let out = cfg.paths.adversarial();
    write_jsonl(&out, &examples)?;
    let stats_path = cfg.paths.reports().join("gen_stats.json");
    let stats_json = json!({
        "documents": stats.documents,
        "masks": stats.masks,
        "negatives": stats.negatives,
        "positives": stats.positives,
        "skipped_masks": stats.skipped_masks,
        "failed_masks": stats.failed_masks,
        "positive_fraction": stats.positive_fraction(),
        "infiller": infiller.describe(),
    });
    write_json(&stats_path, &stats_json)?;
    finish(
        cfg,
        "gen-adv",
        &[("adversarial", &out), ("gen_stats", &stats_path)],
        stats_json,
    )
}

fn doc_index(corpus: &LoadedCorpus) -> HashMap<String, &Document> {
    corpus.documents().map(|d| (d.id.clone(), d)).collect()
}

fn lookup<'a>(docs: &HashMap<String, &'a Document>, id: &str) -> Result<&'a Document> {
    docs.get(id)
        .copied()
        .with_context(|| format!("document {id:?} is not in the corpus"))
}

pub fn build_dataset(cfg: &PipelineConfig, opts: &StageOptions) -> Result<StageSummary> {
    let corpus = load(cfg, opts, SummaryKind::Reference)?;
    let docs = doc_index(&corpus);
    let examples: Vec<AdversarialExample> = read_jsonl(&cfg.paths.adversarial())?;
    let (k, w) = (cfg.passages.top_k, cfg.passages.window);
    let (max_in, max_out) = (cfg.limits.max_in, cfg.limits.max_out);

    let built: Vec<Result<DatasetLine, String>> = examples
        .par_iter()
        .map(|ex| -> Result<Result<DatasetLine, String>> {
            let doc = lookup(&docs, &ex.doc_id)?;
            Ok(
                advgen::serialize_training(ex, doc, cfg.ablation, k, w, max_in, max_out)
                    .map(|rec| DatasetLine::new(ex, rec))
                    .map_err(|e| format!("{}: {e}", ex.id)),
            )
        })
        .collect::<Result<_>>()?;

    let mut lines = Vec::with_capacity(built.len());
    let mut rejected = Vec::new();
    for b in built {
        match b {
            Ok(line) => lines.push(line),
            Err(e) => {
                log::warn!("rejected {e}");
                rejected.push(e);
            }
        }
    }
    let out = cfg.paths.dataset();
    write_jsonl(&out, &lines)?;

    if let Some(path) = &opts.dump_passages {
        let dumps: Vec<Value> = examples
            .iter()
            .map(|ex| -> Result<Value> {
                let doc = lookup(&docs, &ex.doc_id)?;
                Ok(json!({"id": ex.id, "passages": select_passages(&ex.corrupted_sentence, doc, k, w)}))
            })
            .collect::<Result<_>>()?;
        write_jsonl(path, &dumps)?;
    }

    let stats = json!({
        "records": lines.len(),
        "negatives": lines.iter().filter(|l| l.label == Label::Negative).count(),
        "positives": lines.iter().filter(|l| l.label == Label::Positive).count(),
        "rejected": rejected.len(),
        "max_input_tokens": lines.iter().map(|l| l.input.split_whitespace().count()).max().unwrap_or(0),
        "max_target_tokens": lines.iter().map(|l| l.target.split_whitespace().count()).max().unwrap_or(0),
    });
    finish(cfg, "build-dataset", &[("dataset", &out)], stats)
}

pub fn corrector(cfg: &PipelineConfig) -> Result<Box<dyn Corrector>> {
    let c = &cfg.correct;
    Ok(match c.backend.as_str() {
        "baseline" => Box::new(BaselineCorrector {
            lexicon: lexicon(cfg)?,
            order: cfg.infill.order,
            alpha: cfg.infill.alpha,
            delta: c.delta,
        }),
        "identity" => Box::new(IdentityCorrector),
        other => match remote_url(other) {
            Some(url) => Box::new(RemoteCorrector::new(url, client(cfg))),
            None => bail!("unknown corrector backend {other:?}"),
        },
    })
}

fn classifier(cfg: &PipelineConfig, selector: &str) -> Option<Box<dyn FactualityClassifier>> {
    remote_url(selector).map(|url| {
        Box::new(RemoteClassifier::new(url, client(cfg))) as Box<dyn FactualityClassifier>
    })
}

/// Summaries to correct, as (item id, summary).
fn correction_items(
    cfg: &PipelineConfig,
    corpus: &LoadedCorpus,
) -> Result<Vec<(String, SummaryUnit)>> {
    Ok(match cfg.correct.source {
        CorrectionSource::Corpus => corpus
            .pairs
            .iter()
            .map(|(d, s)| (d.id.clone(), s.clone()))
            .collect(),
        CorrectionSource::Adversarial => {
            let examples: Vec<AdversarialExample> = read_jsonl(&cfg.paths.adversarial())?;
            examples
                .into_iter()
                .map(|ex| {
                    let summary = SummaryUnit::from_token_sentences(
                        ex.doc_id,
                        SummaryKind::Generated,
                        ex.corrupted_summary,
                    );
                    (ex.id, summary)
                })
                .collect()
        }
    })
}

pub fn correct(cfg: &PipelineConfig, opts: &StageOptions) -> Result<StageSummary> {
    let corpus = load(cfg, opts, SummaryKind::Generated)?;
    let docs = doc_index(&corpus);
    let items = correction_items(cfg, &corpus)?;
    let backend = corrector(cfg)?;
    let filter = classifier(cfg, &cfg.correct.filter);
    let params = CorrectionParams {
        flags: cfg.ablation,
        top_k: cfg.passages.top_k,
        window: cfg.passages.window,
        max_in: cfg.limits.max_in,
    };

    let results: Vec<CorrectionResult> = items
        .par_iter()
        .map(|(id, summary)| {
            let doc = lookup(&docs, &summary.doc_id)?;
            Ok(correct_summary(
                id,
                summary,
                doc,
                backend.as_ref(),
                filter.as_deref(),
                params,
            ))
        })
        .collect::<Result<_>>()?;

    let out = cfg.paths.corrected();
    write_jsonl(&out, &results)?;
    let input_sentences: usize = items.iter().map(|(_, s)| s.sentences.len()).sum();
    let output_sentences: usize = results.iter().map(|r| r.corrected.sentences.len()).sum();
    let stats = json!({
        "summaries": results.len(),
        "filtered_out": results.iter().filter(|r| r.filtered_out).count(),
        "changed": results.iter().filter(|r| r.any_changed()).count(),
        "sentence_failures": results.iter().map(CorrectionResult::failures).sum::<usize>(),
        "input_sentences": input_sentences,
        "output_sentences": output_sentences,
        "corrector": backend.name(),
        "filter": filter.as_ref().map_or_else(|| "none".to_string(), |f| f.describe()),
    });
    finish(cfg, "correct", &[("corrected", &out)], stats)
}

pub fn eval(cfg: &PipelineConfig, opts: &StageOptions) -> Result<EvalReport> {
    let corpus = load(cfg, opts, SummaryKind::Reference)?;
    let docs = doc_index(&corpus);
    let results: Vec<CorrectionResult> = read_jsonl(&cfg.paths.corrected())?;
    let classifier = classifier(cfg, &cfg.correct.filter);

    let mut report = match cfg.correct.source {
        CorrectionSource::Adversarial => {
            let examples: Vec<AdversarialExample> = read_jsonl(&cfg.paths.adversarial())?;
            let references: BTreeMap<String, SummaryUnit> = examples
                .iter()
                .map(|ex| {
                    let r = SummaryUnit::from_token_sentences(
                        ex.doc_id.clone(),
                        SummaryKind::Reference,
                        ex.original_summary.clone(),
                    );
                    (ex.id.clone(), r)
                })
                .collect();
            let mut report = evaluate(&results, &references, &docs, classifier.as_deref())?;
            let (k, w) = (cfg.passages.top_k, cfg.passages.window);
            let stats = restoration_stats(&results, &examples, |ex| {
                docs.get(&ex.doc_id)
                    .is_some_and(|d| span_in_passages(ex, d, k, w))
            })?;
            report.restoration = Some(stats);
            report
        }
        CorrectionSource::Corpus => {
            let path =
                cfg.paths.references.as_deref().context(
                    "evaluating corpus summaries needs paths.references (or --references)",
                )?;
            let refs = load_corpus(path, SummaryKind::Reference)?;
            let references: BTreeMap<String, SummaryUnit> =
                refs.pairs.into_iter().map(|(d, s)| (d.id, s)).collect();
            evaluate(&results, &references, &docs, classifier.as_deref())?
        }
    };
    report.classifier = classifier
        .as_ref()
        .map_or_else(|| "none".to_string(), |c| c.describe());

    let json_path = cfg.paths.reports().join("eval_report.json");
    let tsv_path = cfg.paths.reports().join("eval_report.tsv");
    write_json(&json_path, &report)?;
    crate::write_atomic(&tsv_path, report.to_tsv().as_bytes())?;
    let stats = json!({
        "n_summaries": report.n_summaries,
        "rouge1": report.rouge1,
        "rouge2": report.rouge2,
        "rougeL": report.rouge_l,
        "factual_fraction": report.factual_fraction,
        "changed_fraction": report.changed_fraction,
        "restoration_rate": report.restoration.as_ref().map(|r| r.restoration_rate),
        "verbatim_restoration_rate": report.restoration.as_ref().map(|r| r.verbatim_restoration_rate),
        "false_edit_rate": report.restoration.as_ref().map(|r| r.false_edit_rate),
        "classifier": report.classifier,
    });
    finish(
        cfg,
        "eval",
        &[("report", &json_path), ("report_tsv", &tsv_path)],
        stats,
    )?;
    Ok(report)
}

/// Runs every stage in order on the synthetic corruption loop: the corrector
/// is applied to the generated adversarial summaries and scored against the
/// original references.
pub fn pipeline(cfg: &PipelineConfig, opts: &StageOptions) -> Result<Vec<StageSummary>> {
    let mut cfg = cfg.clone();
    cfg.correct.source = CorrectionSource::Adversarial;
    let mut summaries = vec![ingest(&cfg, opts)?];
    if cfg.infill.backend == "ngram" {
        summaries.push(train_infill(&cfg, opts)?);
    }
    summaries.push(gen_adv(&cfg, opts)?);
    summaries.push(build_dataset(&cfg, opts)?);
    summaries.push(correct(&cfg, opts)?);
    eval(&cfg, opts)?;
    let eval_summary: StageSummary =
        serde_json::from_slice(&std::fs::read(summary_path(&cfg, "eval"))?)?;
    summaries.push(eval_summary);
    let path = cfg.paths.reports().join("pipeline.summary.json");
    write_json(&path, &summaries)?;
    Ok(summaries)
}
