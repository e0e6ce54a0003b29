//! Semantic-specific graph encoders.
//!
//! Each layer scores every edge with single-head additive attention
//! `phi(h_i, h_j) = leaky_relu(a . [W h_i || W h_j])`, scales the score by the
//! edge prior `A_ij`, normalizes over the neighbourhood with a softmax and
//! aggregates the projected neighbours. The final layer's coefficients are the
//! space's induced adjacency.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ConversationGraph;
use crate::matrix::{dot, leaky_relu, DenseMatrix, ATTENTION_LEAKY_SLOPE};
use crate::params::{AttentionLayerParams, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Space {
    Emotion,
    Cause,
}

impl Space {
    /// Short tag used in params keys.
    pub fn tag(self) -> &'static str {
        match self {
            Space::Emotion => "E",
            Space::Cause => "C",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// Node representations, `N x d_h`.
    pub h: DenseMatrix,
    /// Final-layer attention coefficients.
    pub a_induced: DenseMatrix,
    /// Attention coefficients of every layer, first to last.
    pub layer_attention: Vec<DenseMatrix>,
}

pub fn attention_layer(
    h_in: &DenseMatrix,
    graph: &ConversationGraph,
    layer: &AttentionLayerParams,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let n = graph.len();
    let d_h = h_in.cols();
    if h_in.rows() != n {
        return Err(Error::contract(format!(
            "encoder input has {} rows for a graph of {n} nodes",
            h_in.rows()
        )));
    }
    if layer.projection.shape() != (d_h, d_h) || layer.attention.len() != 2 * d_h {
        return Err(Error::contract(format!(
            "attention layer expects W {d_h}x{d_h} and a of length {}, got {:?} and {}",
            2 * d_h,
            layer.projection.shape(),
            layer.attention.len()
        )));
    }

    // projected[i] = W h_i
    let projected = h_in.matmul(&layer.projection.transpose())?;
    let (a_src, a_dst) = layer.attention.split_at(d_h);
    let src: Vec<f64> = projected.iter_rows().map(|r| dot(a_src, r)).collect();
    let dst: Vec<f64> = projected.iter_rows().map(|r| dot(a_dst, r)).collect();

    let mut attn = DenseMatrix::zeros(n, n);
    let mut h_out = DenseMatrix::zeros(n, d_h);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let neighbors: Vec<usize> = graph.neighbors(i).collect();
        if neighbors.is_empty() {
            return Err(Error::contract(format!(
                "node {i} has an empty neighbourhood"
            )));
        }
        scores.clear();
        scores.extend(neighbors.iter().map(|&j| {
            leaky_relu(src[i] + dst[j], ATTENTION_LEAKY_SLOPE) * graph.adjacency[(i, j)]
        }));
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        let out = h_out.row_mut(i);
        for (&j, &s) in neighbors.iter().zip(&scores) {
            let alpha = s / total;
            attn[(i, j)] = alpha;
            for (o, &p) in out.iter_mut().zip(projected.row(j)) {
                *o += alpha * p;
            }
        }
    }
    Ok((h_out, attn))
}

/// Runs `layers` attention layers of the encoder for `space` over the graph's
/// node features.
pub fn encode(
    graph: &ConversationGraph,
    params: &ModelParams,
    space: Space,
    layers: usize,
) -> Result<EncoderOutput> {
    if layers < 1 {
        return Err(Error::Config("encoder needs at least one layer".into()));
    }
    let available = params.layers(space);
    if available.len() < layers {
        return Err(Error::Config(format!(
            "encoder {} has {} layers, {layers} requested",
            space.tag(),
            available.len()
        )));
    }
    let mut h = graph.node_features.clone();
    let mut layer_attention = Vec::with_capacity(layers);
    for layer in &available[..layers] {
        let (next, attn) = attention_layer(&h, graph, layer)?;
        h = next;
        layer_attention.push(attn);
    }
    let a_induced = layer_attention
        .last()
        .cloned()
        .expect("at least one layer ran");
    Ok(EncoderOutput {
        h,
        a_induced,
        layer_attention,
    })
}
