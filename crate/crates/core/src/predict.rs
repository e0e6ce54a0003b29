//! Pair scoring, global/local fusion, utterance-level heads and losses.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{ConversationRecord, PairIndex};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::matrix::{dot, sigmoid, stable_softmax, DenseMatrix};
use crate::params::{Mlp, ModelParams};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Keeps sigmoid outputs strictly inside `(0, 1)` in `f64`.
const OPEN_UNIT_MARGIN: f64 = f64::EPSILON / 2.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairPredictionSet {
    /// Local pair scores `s[i][j]` for emotion `i`, cause `j`.
    pub s: DenseMatrix,
    pub y_hat: DenseMatrix,
    /// 1-based `(emotion, cause)` pairs with `y_hat > decision_threshold`.
    pub decisions: BTreeSet<PairIndex>,
    /// `[p(not emotion), p(emotion)]` per utterance.
    pub ee_probs: Vec<[f64; 2]>,
    /// `[p(not cause), p(cause)]` per utterance.
    pub ce_probs: Vec<[f64; 2]>,
}

impl PairPredictionSet {
    pub fn emotion_flags(&self) -> Vec<bool> {
        self.ee_probs.iter().map(|p| p[1] > p[0]).collect()
    }

    pub fn cause_flags(&self) -> Vec<bool> {
        self.ce_probs.iter().map(|p| p[1] > p[0]).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_pair: f64,
    pub l_ot: f64,
    pub l_ee: f64,
    pub l_ce: f64,
    pub l_ecpec: f64,
    pub l_total: f64,
}

/// `s[i][j] = sigmoid(F([h_E[i] || h_C[j]]))` for every ordered pair.
///
/// The first layer is split into its emotion and cause column blocks so each
/// node is projected once instead of once per pair.
pub fn pair_score(h_e: &DenseMatrix, h_c: &DenseMatrix, mlp: &Mlp) -> Result<DenseMatrix> {
    let d_h = h_e.cols();
    if h_c.shape() != h_e.shape() || mlp.input_dim() != 2 * d_h || mlp.output_dim() != 1 {
        return Err(Error::contract(format!(
            "pair scorer expects [{0} + {0}] -> 1, got {1:?}/{2:?} into {3} -> {4}",
            d_h,
            h_e.shape(),
            h_c.shape(),
            mlp.input_dim(),
            mlp.output_dim()
        )));
    }
    let hidden = mlp.w1.rows();
    let n = h_e.rows();
    let mut emotion_part = DenseMatrix::zeros(n, hidden);
    let mut cause_part = DenseMatrix::zeros(n, hidden);
    for k in 0..hidden {
        let (w_e, w_c) = mlp.w1.row(k).split_at(d_h);
        for i in 0..n {
            emotion_part[(i, k)] = dot(w_e, h_e.row(i));
            cause_part[(i, k)] = dot(w_c, h_c.row(i));
        }
    }
    let mut pre = vec![0.0; hidden];
    let mut scores = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            for (p, (a, b)) in pre
                .iter_mut()
                .zip(emotion_part.row(i).iter().zip(cause_part.row(j)))
            {
                *p = a + b;
            }
            let logit = mlp.output_from_hidden(&mlp.hidden_from_preactivation(&pre))[0];
            scores[(i, j)] = sigmoid(logit).clamp(OPEN_UNIT_MARGIN, 1.0 - OPEN_UNIT_MARGIN);
        }
    }
    Ok(scores)
}

/// `beta * t_tilde + (1 - beta) * s`.
pub fn fuse_scores(t_tilde: &DenseMatrix, s: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::contract(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    t_tilde.lin_comb(beta, s, 1.0 - beta)
}

/// `[p(negative), p(positive)]` per utterance.
pub type ClassProbs = Vec<[f64; 2]>;

/// Per-utterance two-class softmax of each head.
pub fn ee_ce_heads(
    h_e: &DenseMatrix,
    h_c: &DenseMatrix,
    ee_mlp: &Mlp,
    ce_mlp: &Mlp,
) -> Result<(ClassProbs, ClassProbs)> {
    let head = |h: &DenseMatrix, mlp: &Mlp, name: &str| -> Result<ClassProbs> {
        if mlp.input_dim() != h.cols() || mlp.output_dim() != 2 {
            return Err(Error::contract(format!(
                "{name} head expects {} -> 2, got {} -> {}",
                h.cols(),
                mlp.input_dim(),
                mlp.output_dim()
            )));
        }
        h.iter_rows()
            .map(|row| {
                let p = stable_softmax(&mlp.forward(row)?, 1.0)?;
                Ok([p[0], p[1]])
            })
            .collect()
    };
    Ok((head(h_e, ee_mlp, "ee")?, head(h_c, ce_mlp, "ce")?))
}

/// 1-based pairs whose fused score exceeds `threshold`.
pub fn decide(y_hat: &DenseMatrix, threshold: f64) -> BTreeSet<PairIndex> {
    let mut out = BTreeSet::new();
    for i in 0..y_hat.rows() {
        for j in 0..y_hat.cols() {
            if y_hat[(i, j)] > threshold {
                out.insert((i + 1, j + 1));
            }
        }
    }
    out
}

pub fn predict(
    h_e: &DenseMatrix,
    h_c: &DenseMatrix,
    t_tilde: &DenseMatrix,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<PairPredictionSet> {
    let s = pair_score(h_e, h_c, &params.pair_mlp)?;
    let y_hat = fuse_scores(t_tilde, &s, hp.beta)?;
    let decisions = decide(&y_hat, hp.decision_threshold);
    let (ee_probs, ce_probs) = ee_ce_heads(h_e, h_c, &params.ee_mlp, &params.ce_mlp)?;
    Ok(PairPredictionSet {
        s,
        y_hat,
        decisions,
        ee_probs,
        ce_probs,
    })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub fn binary_cross_entropy(p: f64, positive: bool) -> f64 {
    let p = clamp_prob(p);
    if positive {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `KL(Bern(p) || Bern(q))` on clamped probabilities.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let p = clamp_prob(p);
    let q = clamp_prob(q);
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

fn mean(total: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Mean-reduced loss terms and their weighted aggregates.
pub fn losses(
    preds: &PairPredictionSet,
    t_tilde: &DenseMatrix,
    gold: &ConversationRecord,
    hp: &HyperParams,
) -> Result<LossReport> {
    let n = gold.len();
    if preds.y_hat.shape() != (n, n)
        || preds.s.shape() != (n, n)
        || t_tilde.shape() != (n, n)
        || preds.ee_probs.len() != n
        || preds.ce_probs.len() != n
    {
        return Err(Error::contract(format!(
            "loss inputs do not match conversation `{}` of length {n}",
            gold.conversation_id
        )));
    }

    let mut pair_total = 0.0;
    let mut ot_total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let positive = gold.gold_pairs.contains(&(i + 1, j + 1));
            pair_total += binary_cross_entropy(preds.y_hat[(i, j)], positive);
            ot_total += bernoulli_kl(preds.s[(i, j)], t_tilde[(i, j)]);
        }
    }
    let class_ce = |probs: &[[f64; 2]], labels: Vec<bool>| -> f64 {
        let total: f64 = probs
            .iter()
            .zip(labels)
            .map(|(p, y)| -clamp_prob(p[usize::from(y)]).ln())
            .sum();
        mean(total, n)
    };

    let l_pair = mean(pair_total, n * n);
    // KL is nonnegative; clamp the rounding residue of identical arguments
    let l_ot = mean(ot_total, n * n).max(0.0);
    let l_ee = class_ce(&preds.ee_probs, gold.emotion_labels());
    let l_ce = class_ce(&preds.ce_probs, gold.cause_labels());
    let l_ecpec = l_pair + hp.lambda_ot * l_ot;
    let l_total = l_ecpec + hp.lambda_ee * l_ee + hp.lambda_ce * l_ce;
    Ok(LossReport {
        l_pair,
        l_ot,
        l_ee,
        l_ce,
        l_ecpec,
        l_total,
    })
}
