//! End-to-end orchestration: graph, encoders, alignment, prediction, losses
//! and corpus evaluation, plus the JSON artifacts the CLI writes.
//!
//! Conversations are processed on a worker pool; results are collected in
//! corpus order, so every artifact is independent of the thread count.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{fgw_align, TransportPlan};
use crate::corpus::{ConversationRecord, Corpus, PairIndex};
use crate::encoder::{encode, EncoderOutput, Space};
use crate::error::{Error, Result};
use crate::eval::{
    multi_cause_subset, render_table, score_pairs, ConversationPrediction, EvalReport,
};
use crate::graph::{build_graph, ConversationGraph, GraphDump};
use crate::hyper::HyperParams;
use crate::matrix::DenseMatrix;
use crate::params::ModelParams;
use crate::predict::{losses, predict, LossReport, PairPredictionSet};

pub const GRAPHS_FILE: &str = "graphs.json";
pub const ENCODER_FILE: &str = "encoder.json";
pub const ALIGNMENTS_FILE: &str = "alignments.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const EVAL_FILE: &str = "eval.json";
pub const EVAL_TABLE_FILE: &str = "eval.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    BuildGraph,
    Align,
    Predict,
    Eval,
    Pipeline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub corpus_path: PathBuf,
    pub params_path: Option<PathBuf>,
    pub hyperparams: HyperParams,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    /// Score an existing predictions file instead of running the model (`eval` only).
    pub predictions_path: Option<PathBuf>,
    /// Also write encoder outputs for fixture diffing.
    pub dump_encoder: bool,
    /// Also write the plain-text metrics table.
    pub table: bool,
}

impl RunConfig {
    pub fn new(
        command: Command,
        corpus_path: impl Into<PathBuf>,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            command,
            corpus_path: corpus_path.into(),
            params_path: None,
            hyperparams: HyperParams::default(),
            output_dir: output_dir.into(),
            seed: crate::params::DEFAULT_SEED,
            threads: 0,
            predictions_path: None,
            dump_encoder: false,
            table: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{what} `{}` does not exist",
                    p.display()
                )))
            }
        };
        must_exist(&self.corpus_path, "corpus")?;
        if let Some(p) = &self.params_path {
            must_exist(p, "params file")?;
        }
        if let Some(p) = &self.predictions_path {
            must_exist(p, "predictions file")?;
        }
        Ok(())
    }
}

/// Everything computed for one conversation.
#[derive(Clone, Debug)]
pub struct ConversationResult {
    pub id: String,
    pub graph: ConversationGraph,
    pub emotion: EncoderOutput,
    pub cause: EncoderOutput,
    pub plan: TransportPlan,
    pub predictions: PairPredictionSet,
    pub losses: LossReport,
}

impl ConversationResult {
    pub fn to_prediction(&self) -> ConversationPrediction {
        ConversationPrediction {
            id: self.id.clone(),
            pairs: self.predictions.decisions.clone(),
            emotion: self.predictions.emotion_flags(),
            cause: self.predictions.cause_flags(),
        }
    }
}

pub fn process_conversation(
    conv: &ConversationRecord,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<ConversationResult> {
    let graph = build_graph(conv, params, hp)?;
    let emotion = encode(&graph, params, Space::Emotion, hp.layers)?;
    let cause = encode(&graph, params, Space::Cause, hp.layers)?;
    let plan = fgw_align(
        &emotion.h,
        &cause.h,
        &emotion.a_induced,
        &cause.a_induced,
        hp,
    )?;
    let predictions = predict(&emotion.h, &cause.h, &plan.t_tilde, params, hp)?;
    let losses = losses(&predictions, &plan.t_tilde, conv, hp)?;
    Ok(ConversationResult {
        id: conv.conversation_id.clone(),
        graph,
        emotion,
        cause,
        plan,
        predictions,
        losses,
    })
}

fn worker_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs the model over the corpus, in corpus order.
pub fn process_corpus(
    corpus: &Corpus,
    params: &ModelParams,
    hp: &HyperParams,
    threads: usize,
) -> Result<Vec<ConversationResult>> {
    worker_pool(threads)?.install(|| {
        corpus
            .conversations
            .par_iter()
            .map(|conv| {
                process_conversation(conv, params, hp).map_err(|e| match e {
                    e @ Error::Corpus { .. } => e,
                    other => Error::Corpus {
                        conversation: conv.conversation_id.clone(),
                        field: "-".into(),
                        message: other.to_string(),
                    },
                })
            })
            .collect()
    })
}

#[derive(Serialize)]
struct GraphEntry<'a> {
    id: &'a str,
    #[serde(flatten)]
    graph: GraphDump<'a>,
}

#[derive(Serialize)]
struct EncoderEntry<'a> {
    id: &'a str,
    #[serde(rename = "H_E")]
    h_e: &'a DenseMatrix,
    #[serde(rename = "A_E")]
    a_e: &'a DenseMatrix,
    #[serde(rename = "H_C")]
    h_c: &'a DenseMatrix,
    #[serde(rename = "A_C")]
    a_c: &'a DenseMatrix,
}

#[derive(Serialize)]
struct AlignmentEntry<'a> {
    id: &'a str,
    #[serde(flatten)]
    plan: &'a TransportPlan,
}

/// One entry of `predictions.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub s: DenseMatrix,
    pub y_hat: DenseMatrix,
    pub decisions: BTreeSet<PairIndex>,
    pub ee_probs: Vec<[f64; 2]>,
    pub ce_probs: Vec<[f64; 2]>,
    pub losses: LossReport,
}

impl From<&ConversationResult> for PredictionRecord {
    fn from(r: &ConversationResult) -> Self {
        PredictionRecord {
            id: r.id.clone(),
            s: r.predictions.s.clone(),
            y_hat: r.predictions.y_hat.clone(),
            decisions: r.predictions.decisions.clone(),
            ee_probs: r.predictions.ee_probs.clone(),
            ce_probs: r.predictions.ce_probs.clone(),
            losses: r.losses,
        }
    }
}

impl PredictionRecord {
    pub fn to_prediction(&self) -> ConversationPrediction {
        ConversationPrediction {
            id: self.id.clone(),
            pairs: self.decisions.clone(),
            emotion: self.ee_probs.iter().map(|p| p[1] > p[0]).collect(),
            cause: self.ce_probs.iter().map(|p| p[1] > p[0]).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Listing<T> {
    conversations: Vec<T>,
}

/// `eval.json`: the whole corpus and its multi-cause subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub all: EvalReport,
    pub multi_cause: EvalReport,
}

pub fn evaluate(predictions: &[ConversationPrediction], corpus: &Corpus) -> Result<EvalOutput> {
    let all = score_pairs(predictions, &corpus.conversations)?;
    let subset = multi_cause_subset(corpus);
    let keep: BTreeSet<&str> = subset
        .conversations
        .iter()
        .map(|c| c.conversation_id.as_str())
        .collect();
    let subset_preds: Vec<ConversationPrediction> = predictions
        .iter()
        .filter(|p| keep.contains(p.id.as_str()))
        .cloned()
        .collect();
    let multi_cause = score_pairs(&subset_preds, &subset.conversations)?;
    Ok(EvalOutput { all, multi_cause })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Files written by a run, relative to the output directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub conversations: usize,
    pub files: Vec<PathBuf>,
    pub eval: Option<EvalOutput>,
}

/// Loads inputs, runs `config.command` and writes its artifacts.
///
/// All artifacts are rendered in memory first; if writing any of them fails,
/// the files already written by this run are removed.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let hp = &config.hyperparams;
    let corpus = Corpus::load(&config.corpus_path)?;

    let mut artifacts: Vec<(&str, String)> = Vec::new();
    let mut eval = None;

    if config.command == Command::Eval {
        if let Some(path) = &config.predictions_path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let listing: Listing<PredictionRecord> = serde_json::from_str(&text)?;
            let preds: Vec<ConversationPrediction> = listing
                .conversations
                .iter()
                .map(PredictionRecord::to_prediction)
                .collect();
            let out = evaluate(&preds, &corpus)?;
            push_eval(&mut artifacts, &out, config.table)?;
            return write_artifacts(config, corpus.conversations.len(), artifacts, Some(out));
        }
    }

    let params = ModelParams::load(
        config.params_path.as_deref(),
        corpus.d_u,
        hp.layers,
        config.seed,
    )?;
    let results = process_corpus(&corpus, &params, hp, config.threads)?;

    let wants = |cmds: &[Command]| cmds.contains(&config.command);
    if wants(&[Command::BuildGraph, Command::Pipeline]) {
        let entries: Vec<GraphEntry> = results
            .iter()
            .map(|r| GraphEntry {
                id: &r.id,
                graph: GraphDump::from(&r.graph),
            })
            .collect();
        artifacts.push((
            GRAPHS_FILE,
            to_json(&Listing {
                conversations: entries,
            })?,
        ));
    }
    if config.dump_encoder {
        let entries: Vec<EncoderEntry> = results
            .iter()
            .map(|r| EncoderEntry {
                id: &r.id,
                h_e: &r.emotion.h,
                a_e: &r.emotion.a_induced,
                h_c: &r.cause.h,
                a_c: &r.cause.a_induced,
            })
            .collect();
        artifacts.push((
            ENCODER_FILE,
            to_json(&Listing {
                conversations: entries,
            })?,
        ));
    }
    if wants(&[Command::Align, Command::Pipeline]) {
        let entries: Vec<AlignmentEntry> = results
            .iter()
            .map(|r| AlignmentEntry {
                id: &r.id,
                plan: &r.plan,
            })
            .collect();
        artifacts.push((
            ALIGNMENTS_FILE,
            to_json(&Listing {
                conversations: entries,
            })?,
        ));
    }
    if wants(&[Command::Predict, Command::Pipeline]) {
        let entries: Vec<PredictionRecord> = results.iter().map(PredictionRecord::from).collect();
        artifacts.push((
            PREDICTIONS_FILE,
            to_json(&Listing {
                conversations: entries,
            })?,
        ));
    }
    if wants(&[Command::Eval, Command::Pipeline]) {
        let preds: Vec<ConversationPrediction> = results
            .iter()
            .map(ConversationResult::to_prediction)
            .collect();
        let out = evaluate(&preds, &corpus)?;
        push_eval(
            &mut artifacts,
            &out,
            config.table || config.command == Command::Pipeline,
        )?;
        eval = Some(out);
    }

    write_artifacts(config, results.len(), artifacts, eval)
}

fn push_eval(artifacts: &mut Vec<(&str, String)>, out: &EvalOutput, table: bool) -> Result<()> {
    artifacts.push((EVAL_FILE, to_json(out)?));
    if table {
        let mut text = render_table("all", &out.all);
        text.push('\n');
        text.push_str(&render_table("multi-cause", &out.multi_cause));
        artifacts.push((EVAL_TABLE_FILE, text));
    }
    Ok(())
}

fn write_artifacts(
    config: &RunConfig,
    conversations: usize,
    artifacts: Vec<(&str, String)>,
    eval: Option<EvalOutput>,
) -> Result<RunSummary> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, contents) in artifacts {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(dir.join(p));
            }
            let _ = fs::remove_file(&path);
            return Err(Error::io(path, e));
        }
        written.push(PathBuf::from(name));
    }
    Ok(RunSummary {
        conversations,
        files: written,
        eval,
    })
}
