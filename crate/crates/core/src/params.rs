//! Model parameters and the params file format.
//!
//! A params file is a JSON object of named tensor blocks:
//!
//! ```json
//! { "seed": 17, "d_s": 50,
//!   "tensors": { "encoder.E.layer0.W": { "shape": [818, 818], "data": [..] } } }
//! ```
//!
//! Recognised keys, with `d_h = d_u + d_s`:
//!
//! | key                         | shape          |
//! |-----------------------------|----------------|
//! | `speaker.<id>`              | `[d_s]`        |
//! | `encoder.<E|C>.layer<l>.W`  | `[d_h, d_h]`   |
//! | `encoder.<E|C>.layer<l>.a`  | `[2 d_h]`      |
//! | `pair.W1` / `pair.b1`       | `[d_h, 2 d_h]` / `[d_h]` |
//! | `pair.W2` / `pair.b2`       | `[1, d_h]` / `[1]` |
//! | `ee.W1` / `ee.b1`           | `[d_h, d_h]` / `[d_h]` |
//! | `ee.W2` / `ee.b2`           | `[2, d_h]` / `[2]` |
//! | `ce.*`                      | as `ee.*`      |
//!
//! Vectors may also be given as `[1, n]`. Missing weight blocks are filled by
//! [`seeded_init`] with the block seed `seed ^ fnv1a64(key)`; missing biases
//! are zero. Keys that match nothing are rejected.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::Space;
use crate::error::{Error, Result};
use crate::matrix::{dot, leaky_relu, DenseMatrix};
use crate::rng::{block_seed, seeded_init};

pub const DEFAULT_SPEAKER_DIM: usize = 50;
pub const DEFAULT_SEED: u64 = 0;
/// Negative-side slope of the MLP hidden activation.
pub const MLP_LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TensorBlock {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub d_s: Option<usize>,
    #[serde(default)]
    pub tensors: BTreeMap<String, TensorBlock>,
}

impl ParamsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayerParams {
    /// Shared projection, `d_h x d_h`.
    pub projection: DenseMatrix,
    /// Additive attention vector of length `2 d_h`: source half then neighbour half.
    pub attention: Vec<f64>,
}

/// Two-layer perceptron with a leaky-rectified hidden layer. Returns logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            w1: DenseMatrix::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: DenseMatrix::zeros(output, hidden),
            b2: vec![0.0; output],
        }
    }

    pub fn hidden_from_preactivation(&self, pre: &[f64]) -> Vec<f64> {
        pre.iter()
            .zip(&self.b1)
            .map(|(&z, &b)| leaky_relu(z + b, MLP_LEAKY_SLOPE))
            .collect()
    }

    pub fn output_from_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        self.w2
            .iter_rows()
            .zip(&self.b2)
            .map(|(r, &b)| dot(r, hidden) + b)
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pre = self.w1.matvec(x)?;
        Ok(self.output_from_hidden(&self.hidden_from_preactivation(&pre)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub d_u: usize,
    pub d_s: usize,
    pub seed: u64,
    pub speaker_table: BTreeMap<u64, Vec<f64>>,
    pub encoder_e: Vec<AttentionLayerParams>,
    pub encoder_c: Vec<AttentionLayerParams>,
    pub pair_mlp: Mlp,
    pub ee_mlp: Mlp,
    pub ce_mlp: Mlp,
}

impl ModelParams {
    /// Every block materialized from `seed`.
    pub fn seeded(d_u: usize, d_s: usize, layers: usize, seed: u64) -> Result<Self> {
        let file = ParamsFile {
            seed: Some(seed),
            d_s: Some(d_s),
            tensors: BTreeMap::new(),
        };
        Self::from_file(&file, d_u, layers)
    }

    pub fn from_file(file: &ParamsFile, d_u: usize, layers: usize) -> Result<Self> {
        let mut loader = Loader {
            tensors: &file.tensors,
            used: Vec::new(),
            seed: file.seed.unwrap_or(DEFAULT_SEED),
        };
        let d_s = file.d_s.unwrap_or(DEFAULT_SPEAKER_DIM);
        let d_h = d_u + d_s;
        if d_h == 0 {
            return Err(Error::Config("d_u + d_s must be positive".into()));
        }

        let mut speaker_table = BTreeMap::new();
        for key in file.tensors.keys() {
            if let Some(id) = key.strip_prefix("speaker.") {
                let id: u64 = id.parse().map_err(|_| Error::Params {
                    key: key.clone(),
                    message: "speaker id must be a non-negative integer".into(),
                })?;
                speaker_table.insert(id, loader.vector(key, d_s, false)?);
            }
        }

        let mut encoder = |space: Space| -> Result<Vec<AttentionLayerParams>> {
            (0..layers)
                .map(|l| {
                    let prefix = format!("encoder.{}.layer{l}", space.tag());
                    Ok(AttentionLayerParams {
                        projection: loader.matrix(&format!("{prefix}.W"), d_h, d_h)?,
                        attention: loader.vector(&format!("{prefix}.a"), 2 * d_h, false)?,
                    })
                })
                .collect()
        };
        let encoder_e = encoder(Space::Emotion)?;
        let encoder_c = encoder(Space::Cause)?;
        let pair_mlp = loader.mlp("pair", 2 * d_h, d_h, 1)?;
        let ee_mlp = loader.mlp("ee", d_h, d_h, 2)?;
        let ce_mlp = loader.mlp("ce", d_h, d_h, 2)?;

        if let Some(unused) = file
            .tensors
            .keys()
            .find(|k| !k.starts_with("speaker.") && !loader.used.contains(k))
        {
            return Err(Error::Params {
                key: unused.clone(),
                message: format!("unrecognised block (encoder depth is {layers})"),
            });
        }

        Ok(ModelParams {
            d_u,
            d_s,
            seed: loader.seed,
            speaker_table,
            encoder_e,
            encoder_c,
            pair_mlp,
            ee_mlp,
            ce_mlp,
        })
    }

    pub fn load(path: Option<&Path>, d_u: usize, layers: usize, seed: u64) -> Result<Self> {
        let mut file = match path {
            Some(p) => ParamsFile::load(p)?,
            None => ParamsFile::default(),
        };
        if file.seed.is_none() {
            file.seed = Some(seed);
        }
        Self::from_file(&file, d_u, layers)
    }

    pub fn hidden_dim(&self) -> usize {
        self.d_u + self.d_s
    }

    pub fn layers(&self, space: Space) -> &[AttentionLayerParams] {
        match space {
            Space::Emotion => &self.encoder_e,
            Space::Cause => &self.encoder_c,
        }
    }

    /// Table entry for `id`, or its seeded embedding when the table has none.
    pub fn speaker_embedding(&self, id: u64) -> Cow<'_, [f64]> {
        match self.speaker_table.get(&id) {
            Some(v) => Cow::Borrowed(v),
            None => {
                let key = format!("speaker.{id}");
                Cow::Owned(seeded_init(1, self.d_s, block_seed(self.seed, &key)).into_vec())
            }
        }
    }

    /// Serializes every block, including seeded ones.
    pub fn to_file(&self) -> ParamsFile {
        let mut tensors = BTreeMap::new();
        let mut put = |key: String, shape: Vec<usize>, data: Vec<f64>| {
            tensors.insert(key, TensorBlock { shape, data });
        };
        for (id, v) in &self.speaker_table {
            put(format!("speaker.{id}"), vec![v.len()], v.clone());
        }
        for space in [Space::Emotion, Space::Cause] {
            for (l, layer) in self.layers(space).iter().enumerate() {
                let prefix = format!("encoder.{}.layer{l}", space.tag());
                let (r, c) = layer.projection.shape();
                put(
                    format!("{prefix}.W"),
                    vec![r, c],
                    layer.projection.as_slice().to_vec(),
                );
                put(
                    format!("{prefix}.a"),
                    vec![layer.attention.len()],
                    layer.attention.clone(),
                );
            }
        }
        for (name, mlp) in [
            ("pair", &self.pair_mlp),
            ("ee", &self.ee_mlp),
            ("ce", &self.ce_mlp),
        ] {
            let (r, c) = mlp.w1.shape();
            put(format!("{name}.W1"), vec![r, c], mlp.w1.as_slice().to_vec());
            put(format!("{name}.b1"), vec![mlp.b1.len()], mlp.b1.clone());
            let (r, c) = mlp.w2.shape();
            put(format!("{name}.W2"), vec![r, c], mlp.w2.as_slice().to_vec());
            put(format!("{name}.b2"), vec![mlp.b2.len()], mlp.b2.clone());
        }
        ParamsFile {
            seed: Some(self.seed),
            d_s: Some(self.d_s),
            tensors,
        }
    }
}

struct Loader<'a> {
    tensors: &'a BTreeMap<String, TensorBlock>,
    used: Vec<&'a String>,
    seed: u64,
}

impl<'a> Loader<'a> {
    fn take(&mut self, key: &str) -> Option<&'a TensorBlock> {
        let (k, block) = self.tensors.get_key_value(key)?;
        self.used.push(k);
        Some(block)
    }

    fn check(key: &str, block: &TensorBlock, expected: usize) -> Result<()> {
        let declared: usize = block.shape.iter().product();
        if declared != block.data.len() || block.data.len() != expected {
            return Err(Error::Params {
                key: key.into(),
                message: format!(
                    "shape {:?} with {} values, expected {expected} values",
                    block.shape,
                    block.data.len()
                ),
            });
        }
        if block.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Params {
                key: key.into(),
                message: "non-finite value".into(),
            });
        }
        Ok(())
    }

    fn matrix(&mut self, key: &str, rows: usize, cols: usize) -> Result<DenseMatrix> {
        match self.take(key) {
            Some(block) => {
                Self::check(key, block, rows * cols)?;
                if block.shape != [rows, cols] {
                    return Err(Error::Params {
                        key: key.into(),
                        message: format!("shape {:?}, expected [{rows}, {cols}]", block.shape),
                    });
                }
                DenseMatrix::from_vec(rows, cols, block.data.clone())
            }
            None => Ok(seeded_init(rows, cols, block_seed(self.seed, key))),
        }
    }

    fn vector(&mut self, key: &str, len: usize, zero_default: bool) -> Result<Vec<f64>> {
        match self.take(key) {
            Some(block) => {
                Self::check(key, block, len)?;
                if block.shape != [len] && block.shape != [1, len] {
                    return Err(Error::Params {
                        key: key.into(),
                        message: format!("shape {:?}, expected [{len}]", block.shape),
                    });
                }
                Ok(block.data.clone())
            }
            None if zero_default => Ok(vec![0.0; len]),
            None => Ok(seeded_init(1, len, block_seed(self.seed, key)).into_vec()),
        }
    }

    fn mlp(&mut self, name: &str, input: usize, hidden: usize, output: usize) -> Result<Mlp> {
        Ok(Mlp {
            w1: self.matrix(&format!("{name}.W1"), hidden, input)?,
            b1: self.vector(&format!("{name}.b1"), hidden, true)?,
            w2: self.matrix(&format!("{name}.W2"), output, hidden)?,
            b2: self.vector(&format!("{name}.b2"), output, true)?,
        })
    }
}
