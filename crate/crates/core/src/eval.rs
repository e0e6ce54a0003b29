//! Corpus-level metrics: micro-averaged pair P/R/F1, utterance-level EE/CE F1,
//! the multi-cause subset and all-or-nothing recall by cause count.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{ConversationRecord, Corpus, PairIndex};
use crate::error::{Error, Result};

/// What the pipeline predicted for one conversation, in gold-comparable form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationPrediction {
    pub id: String,
    pub pairs: BTreeSet<PairIndex>,
    pub emotion: Vec<bool>,
    pub cause: Vec<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn from_sets<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> Self {
        let tp = predicted.intersection(gold).count() as u64;
        Counts {
            tp,
            fp: predicted.len() as u64 - tp,
            fn_: gold.len() as u64 - tp,
        }
    }

    pub fn from_flags(predicted: &[bool], gold: &[bool]) -> Self {
        let mut c = Counts::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        c
    }

    pub fn prf(&self) -> Prf {
        Prf::from_counts(*self)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

impl Prf {
    /// Empty denominators give 0.
    pub fn from_counts(c: Counts) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let p = ratio(c.tp, c.tp + c.fp);
        let r = ratio(c.tp, c.tp + c.fn_);
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        Prf { p, r, f1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub conversations: usize,
    pub ecpec: Prf,
    pub ee_f1: f64,
    pub ce_f1: f64,
    /// Keyed by the number of gold causes of an emotion utterance.
    pub per_cause_count_recall: BTreeMap<usize, f64>,
    pub counts: Counts,
    pub ee_counts: Counts,
    pub ce_counts: Counts,
}

fn pair_up<'a>(
    predictions: &'a [ConversationPrediction],
    gold: &'a [ConversationRecord],
) -> Result<Vec<(&'a ConversationPrediction, &'a ConversationRecord)>> {
    if predictions.len() != gold.len() {
        return Err(Error::Eval(format!(
            "{} predicted conversations for {} gold conversations",
            predictions.len(),
            gold.len()
        )));
    }
    let by_id: HashMap<&str, &ConversationPrediction> =
        predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    if by_id.len() != predictions.len() {
        return Err(Error::Eval(
            "duplicate conversation id in predictions".into(),
        ));
    }
    gold.iter()
        .map(|g| {
            by_id
                .get(g.conversation_id.as_str())
                .map(|p| (*p, g))
                .ok_or_else(|| {
                    Error::Eval(format!(
                        "no prediction for conversation `{}`",
                        g.conversation_id
                    ))
                })
        })
        .collect()
}

/// Micro-averaged metrics over the corpus, plus per-cause-count recall.
pub fn score_pairs(
    predictions: &[ConversationPrediction],
    gold: &[ConversationRecord],
) -> Result<EvalReport> {
    let pairs = pair_up(predictions, gold)?;
    let mut counts = Counts::default();
    let mut ee_counts = Counts::default();
    let mut ce_counts = Counts::default();
    for (pred, g) in &pairs {
        if pred.emotion.len() != g.len() || pred.cause.len() != g.len() {
            return Err(Error::Eval(format!(
                "conversation `{}`: utterance flag count does not match {} utterances",
                g.conversation_id,
                g.len()
            )));
        }
        counts.add(Counts::from_sets(&pred.pairs, &g.gold_pairs));
        ee_counts.add(Counts::from_flags(&pred.emotion, &g.emotion_labels()));
        ce_counts.add(Counts::from_flags(&pred.cause, &g.cause_labels()));
    }
    Ok(EvalReport {
        conversations: gold.len(),
        ecpec: counts.prf(),
        ee_f1: ee_counts.prf().f1,
        ce_f1: ce_counts.prf().f1,
        per_cause_count_recall: per_cause_count_recall(predictions, gold)?,
        counts,
        ee_counts,
        ce_counts,
    })
}

/// Gold causes grouped by emotion index.
pub fn causes_by_emotion(gold_pairs: &BTreeSet<PairIndex>) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut out: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(e, c) in gold_pairs {
        out.entry(e).or_default().insert(c);
    }
    out
}

pub fn is_multi_cause(conv: &ConversationRecord) -> bool {
    causes_by_emotion(&conv.gold_pairs)
        .values()
        .any(|causes| causes.len() >= 2)
}

/// Conversations where some emotion has at least two distinct gold causes.
pub fn multi_cause_subset(corpus: &Corpus) -> Corpus {
    Corpus {
        d_u: corpus.d_u,
        conversations: corpus
            .conversations
            .iter()
            .filter(|c| is_multi_cause(c))
            .cloned()
            .collect(),
    }
}

/// An emotion with `k` gold causes counts as recalled only when all `k`
/// pairs were predicted.
pub fn per_cause_count_recall(
    predictions: &[ConversationPrediction],
    gold: &[ConversationRecord],
) -> Result<BTreeMap<usize, f64>> {
    let mut tally: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for (pred, g) in pair_up(predictions, gold)? {
        for (e, causes) in causes_by_emotion(&g.gold_pairs) {
            let hit = causes.iter().all(|&c| pred.pairs.contains(&(e, c)));
            let entry = tally.entry(causes.len()).or_default();
            entry.0 += u64::from(hit);
            entry.1 += 1;
        }
    }
    Ok(tally
        .into_iter()
        .map(|(k, (hit, total))| (k, hit as f64 / total as f64))
        .collect())
}

/// Plain-text summary laid out like the usual ECPEC result table.
pub fn render_table(label: &str, report: &EvalReport) -> String {
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "Dataset", "P", "R", "F1", "EE-F1", "CE-F1"
    );
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7}",
        label,
        pct(report.ecpec.p),
        pct(report.ecpec.r),
        pct(report.ecpec.f1),
        pct(report.ee_f1),
        pct(report.ce_f1)
    );
    if !report.per_cause_count_recall.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<16} {:>7}", "#causes", "recall");
        for (k, r) in &report.per_cause_count_recall {
            let _ = writeln!(out, "{:<16} {:>7}", k, pct(*r));
        }
    }
    out
}
