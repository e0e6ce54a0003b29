//! Corpus data model and the corpus JSON format.
//!
//! ```json
//! { "d_u": 768,
//!   "conversations": [
//!     { "id": "dd_0001",
//!       "utterances": [ { "index": 1, "speaker": 0, "embedding": [..],
//!                         "emotion": 1, "cause": 0, "text": "..." } ],
//!       "gold_pairs": [[1, 1]] } ] }
//! ```
//!
//! Utterance indices and gold pairs are 1-based; everything downstream of the
//! corpus works with 0-based matrix indices.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `(emotion, cause)` pair of 1-based utterance indices.
pub type PairIndex = (usize, usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    #[serde(rename = "speaker")]
    pub speaker_id: u64,
    pub embedding: Vec<f64>,
    #[serde(rename = "emotion", with = "flag")]
    pub emotion_label: bool,
    #[serde(rename = "cause", with = "flag")]
    pub cause_label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    #[serde(rename = "id")]
    pub conversation_id: String,
    pub utterances: Vec<Utterance>,
    #[serde(with = "pair_list")]
    pub gold_pairs: BTreeSet<PairIndex>,
}

impl ConversationRecord {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn speakers(&self) -> Vec<u64> {
        self.utterances.iter().map(|u| u.speaker_id).collect()
    }

    pub fn emotion_labels(&self) -> Vec<bool> {
        self.utterances.iter().map(|u| u.emotion_label).collect()
    }

    pub fn cause_labels(&self) -> Vec<bool> {
        self.utterances.iter().map(|u| u.cause_label).collect()
    }

    /// Checks indices, embedding widths and gold-pair references.
    pub fn validate(&self, d_u: usize) -> Result<()> {
        let err = |field: String, message: String| Error::Corpus {
            conversation: self.conversation_id.clone(),
            field,
            message,
        };
        for (pos, u) in self.utterances.iter().enumerate() {
            if u.index != pos + 1 {
                return Err(err(
                    format!("utterances[{pos}].index"),
                    format!("expected {}, found {}", pos + 1, u.index),
                ));
            }
            if u.embedding.len() != d_u {
                return Err(err(
                    format!("utterances[{pos}].embedding"),
                    format!("length {} does not match d_u = {d_u}", u.embedding.len()),
                ));
            }
            if let Some(k) = u.embedding.iter().position(|x| !x.is_finite()) {
                return Err(err(
                    format!("utterances[{pos}].embedding[{k}]"),
                    "non-finite value".into(),
                ));
            }
        }
        let n = self.utterances.len();
        for &(e, c) in &self.gold_pairs {
            if e == 0 || e > n || c == 0 || c > n {
                return Err(err(
                    "gold_pairs".into(),
                    format!("pair ({e}, {c}) is outside 1..={n}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub d_u: usize,
    pub conversations: Vec<ConversationRecord>,
}

impl Corpus {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for conv in &self.conversations {
            if !seen.insert(conv.conversation_id.as_str()) {
                return Err(Error::Corpus {
                    conversation: conv.conversation_id.clone(),
                    field: "id".into(),
                    message: "duplicate conversation id".into(),
                });
            }
            conv.validate(self.d_u)?;
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let corpus: Corpus = serde_json::from_str(s)?;
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

mod flag {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!(
                "flag must be 0 or 1, got {other}"
            ))),
        }
    }
}

mod pair_list {
    use std::collections::BTreeSet;

    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    use super::PairIndex;

    pub fn serialize<S: Serializer>(v: &BTreeSet<PairIndex>, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[usize; 2]> = v.iter().map(|&(e, c)| [e, c]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<PairIndex>, D::Error> {
        let pairs = Vec::<[usize; 2]>::deserialize(d)?;
        let mut set = BTreeSet::new();
        for [e, c] in pairs {
            if !set.insert((e, c)) {
                return Err(de::Error::custom(format!("duplicate gold pair [{e}, {c}]")));
            }
        }
        Ok(set)
    }
}
