//! Conversation graph construction.
//!
//! Nodes are utterances with speaker-aware features. A pair `(i, j)` is
//! connected by any of three relations, each with its own initial weight:
//!
//! * global contextual, when `cos(x_i, x_j) + 1 > tau_s`: `(cos + 1) / 2`
//! * local contextual, when `|i - j| <= W`: `exp(-|i - j| / tau_e)`
//! * intra-speaker, same speaker and `i != j`: `(exp(-|i - j| / tau_e) + 1) / 2`
//!
//! The adjacency keeps the largest weight among the relations that hold, and
//! the edge keeps every tag. All three conditions are symmetric, so the graph
//! is undirected, and the local relation at distance 0 gives every node a
//! self-loop of weight 1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Serialize, Serializer};

use crate::corpus::ConversationRecord;
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::matrix::{cosine_similarity, DenseMatrix};
use crate::params::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EdgeType {
    GlobalContextual,
    LocalContextual,
    IntraSpeaker,
}

/// Tags per unordered pair, keyed by `(min, max)` 0-based node indices.
pub type EdgeTypes = BTreeMap<(usize, usize), BTreeSet<EdgeType>>;

#[derive(Clone, Debug, PartialEq)]
pub struct ConversationGraph {
    pub node_features: DenseMatrix,
    pub adjacency: DenseMatrix,
    pub edge_types: EdgeTypes,
}

impl ConversationGraph {
    pub fn len(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn types_of(&self, i: usize, j: usize) -> Option<&BTreeSet<EdgeType>> {
        self.edge_types.get(&(i.min(j), i.max(j)))
    }

    /// Nodes `j` with `A_ij > 0`, ascending.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, _)| j)
    }
}

/// Row `i` is the utterance embedding followed by its speaker embedding.
pub fn build_node_features(conv: &ConversationRecord, params: &ModelParams) -> Result<DenseMatrix> {
    let d_h = params.hidden_dim();
    let mut features = DenseMatrix::zeros(conv.len(), d_h);
    for (i, u) in conv.utterances.iter().enumerate() {
        if u.embedding.len() != params.d_u {
            return Err(Error::Corpus {
                conversation: conv.conversation_id.clone(),
                field: format!("utterances[{i}].embedding"),
                message: format!(
                    "length {} does not match d_u = {}",
                    u.embedding.len(),
                    params.d_u
                ),
            });
        }
        let speaker = params.speaker_embedding(u.speaker_id);
        let row = features.row_mut(i);
        row[..params.d_u].copy_from_slice(&u.embedding);
        row[params.d_u..].copy_from_slice(&speaker);
    }
    Ok(features)
}

pub fn local_weight(distance: usize, tau_e: f64) -> f64 {
    (-(distance as f64) / tau_e).exp()
}

pub fn intra_speaker_weight(distance: usize, tau_e: f64) -> f64 {
    (local_weight(distance, tau_e) + 1.0) / 2.0
}

pub fn global_weight(cosine: f64) -> f64 {
    (cosine + 1.0) / 2.0
}

pub fn build_edges(
    features: &DenseMatrix,
    speakers: &[u64],
    hp: &HyperParams,
) -> Result<(EdgeTypes, DenseMatrix)> {
    let n = features.rows();
    if speakers.len() != n {
        return Err(Error::contract(format!(
            "{} speakers for {n} feature rows",
            speakers.len()
        )));
    }
    let mut adjacency = DenseMatrix::zeros(n, n);
    let mut edge_types = EdgeTypes::new();
    for i in 0..n {
        for j in i..n {
            let distance = j - i;
            let mut tags = BTreeSet::new();
            let mut weight = 0.0f64;

            let cos = cosine_similarity(features.row(i), features.row(j))?;
            if cos + 1.0 > hp.tau_s {
                tags.insert(EdgeType::GlobalContextual);
                weight = weight.max(global_weight(cos));
            }
            if distance <= hp.window {
                tags.insert(EdgeType::LocalContextual);
                weight = weight.max(local_weight(distance, hp.tau_e));
            }
            if i != j && speakers[i] == speakers[j] {
                tags.insert(EdgeType::IntraSpeaker);
                weight = weight.max(intra_speaker_weight(distance, hp.tau_e));
            }

            // A tagged pair whose weights all underflowed stays untagged, so
            // that a positive weight and a tag always go together.
            if !tags.is_empty() && weight > 0.0 {
                adjacency[(i, j)] = weight;
                adjacency[(j, i)] = weight;
                edge_types.insert((i, j), tags);
            }
        }
    }
    Ok((edge_types, adjacency))
}

pub fn build_graph(
    conv: &ConversationRecord,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<ConversationGraph> {
    let node_features = build_node_features(conv, params)?;
    let (edge_types, adjacency) = build_edges(&node_features, &conv.speakers(), hp)?;
    Ok(ConversationGraph {
        node_features,
        adjacency,
        edge_types,
    })
}

/// JSON view of a graph: adjacency plus 1-based edge tags.
#[derive(Serialize)]
pub struct GraphDump<'a> {
    pub adjacency: &'a DenseMatrix,
    #[serde(serialize_with = "serialize_edges")]
    pub edge_types: &'a EdgeTypes,
}

impl<'a> From<&'a ConversationGraph> for GraphDump<'a> {
    fn from(g: &'a ConversationGraph) -> Self {
        GraphDump {
            adjacency: &g.adjacency,
            edge_types: &g.edge_types,
        }
    }
}

fn serialize_edges<S: Serializer>(
    edges: &&EdgeTypes,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Entry<'a> {
        i: usize,
        j: usize,
        types: &'a BTreeSet<EdgeType>,
    }
    s.collect_seq(edges.iter().map(|(&(i, j), types)| Entry {
        i: i + 1,
        j: j + 1,
        types,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;

    fn conv(embeddings: &[&[f64]], speakers: &[u64]) -> ConversationRecord {
        ConversationRecord {
            conversation_id: "t".into(),
            utterances: embeddings
                .iter()
                .zip(speakers)
                .enumerate()
                .map(|(i, (e, &s))| Utterance {
                    index: i + 1,
                    speaker_id: s,
                    embedding: e.to_vec(),
                    emotion_label: false,
                    cause_label: false,
                    text: None,
                })
                .collect(),
            gold_pairs: BTreeSet::new(),
        }
    }

    fn params_with_speakers(d_u: usize, table: &[(u64, Vec<f64>)]) -> ModelParams {
        let d_s = table.first().map_or(1, |(_, v)| v.len());
        let mut p = ModelParams::seeded(d_u, d_s, 1, 3).unwrap();
        p.speaker_table = table.iter().cloned().collect();
        p
    }

    #[test]
    fn node_features_concatenate() {
        let p = params_with_speakers(2, &[(0, vec![5.0])]);
        let f = build_node_features(&conv(&[&[3.0, 4.0]], &[0]), &p).unwrap();
        assert_eq!(f.row(0), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn same_speaker_shares_speaker_block() {
        let p = ModelParams::seeded(2, 3, 1, 9).unwrap();
        let f = build_node_features(&conv(&[&[1.0, 0.0], &[0.0, 1.0]], &[4, 4]), &p).unwrap();
        assert_eq!(f.row(0)[2..], f.row(1)[2..]);
    }

    #[test]
    fn unseen_speaker_uses_seeded_block() {
        let p = ModelParams::seeded(2, 3, 1, 9).unwrap();
        let f = build_node_features(&conv(&[&[1.0, 0.0]], &[77]), &p).unwrap();
        let expected =
            crate::rng::seeded_init(1, 3, crate::rng::block_seed(9, "speaker.77")).into_vec();
        assert_eq!(&f.row(0)[2..], expected.as_slice());
    }

    #[test]
    fn embedding_width_checked() {
        let p = ModelParams::seeded(3, 1, 1, 0).unwrap();
        assert!(matches!(
            build_node_features(&conv(&[&[1.0, 0.0]], &[0]), &p),
            Err(Error::Corpus { .. })
        ));
    }

    #[test]
    fn edge_weight_formulas() {
        assert_eq!(local_weight(0, 2.0), 1.0);
        assert!((local_weight(2, 2.0) - 0.36788).abs() < 1e-5);
        assert!((intra_speaker_weight(2, 2.0) - 0.68394).abs() < 1e-5);
        assert!((intra_speaker_weight(1, 2.0) - 0.80327).abs() < 1e-5);
    }

    #[test]
    fn single_utterance_is_self_loop() {
        let p = ModelParams::seeded(2, 2, 1, 0).unwrap();
        let g = build_graph(&conv(&[&[1.0, 2.0]], &[0]), &p, &HyperParams::default()).unwrap();
        assert_eq!(g.adjacency.to_rows(), vec![vec![1.0]]);
        assert!(g
            .types_of(0, 0)
            .unwrap()
            .contains(&EdgeType::LocalContextual));
    }

    #[test]
    fn same_speaker_neighbours() {
        let p = ModelParams::seeded(2, 2, 1, 0).unwrap();
        let g = build_graph(
            &conv(&[&[1.0, 0.0], &[0.0, 1.0]], &[1, 1]),
            &p,
            &HyperParams::default(),
        )
        .unwrap();
        assert!(g.adjacency[(0, 1)] >= intra_speaker_weight(1, 2.0));
        assert!(g.adjacency.is_symmetric());
    }

    #[test]
    fn global_threshold_is_strict() {
        // orthogonal features: cos + 1 = 1; tau_s = 1 must not create an edge
        let features = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let hp = HyperParams {
            tau_s: 1.0,
            window: 0,
            ..HyperParams::default()
        };
        let (types, adj) = build_edges(&features, &[0, 1], &hp).unwrap();
        assert_eq!(adj[(0, 1)], 0.0);
        assert!(!types.contains_key(&(0, 1)));

        let hp = HyperParams {
            tau_s: 2.0,
            ..HyperParams::default()
        };
        let (types, _) = build_edges(&features, &[0, 1], &hp).unwrap();
        assert!(types
            .values()
            .all(|t| !t.contains(&EdgeType::GlobalContextual)));
    }

    #[test]
    fn four_utterance_fixture() {
        // speakers A B A B; orthogonal-ish embeddings so that global edges
        // only form where the cosine clears tau_s
        let features = DenseMatrix::from_rows(&[
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
        ])
        .unwrap();
        let hp = HyperParams {
            window: 1,
            tau_s: 1.5,
            ..HyperParams::default()
        };
        let (types, adj) = build_edges(&features, &[0, 1, 0, 1], &hp).unwrap();
        // (0,2): same speaker at distance 2 and identical features: global wins with 1.0
        assert_eq!(adj[(0, 2)], 1.0);
        assert_eq!(
            types[&(0, 2)],
            BTreeSet::from([EdgeType::GlobalContextual, EdgeType::IntraSpeaker])
        );
        // (1,3): same speaker at distance 2, orthogonal: intra only
        assert!((adj[(1, 3)] - 0.6839397205857212).abs() < 1e-15);
        // (0,3): opposite, distance 3, different speakers: no edge
        assert_eq!(adj[(0, 3)], 0.0);
        // (0,1): local at distance 1
        assert!((adj[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn dump_uses_one_based_indices() {
        let p = ModelParams::seeded(2, 2, 1, 0).unwrap();
        let g = build_graph(&conv(&[&[1.0, 2.0]], &[0]), &p, &HyperParams::default()).unwrap();
        let json = serde_json::to_string(&GraphDump::from(&g)).unwrap();
        assert!(json.contains("\"i\":1,\"j\":1"));
    }
}
