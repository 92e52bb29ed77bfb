//! Versioned binary model format.
//!
//! All integers are little-endian, reals are IEEE-754 `f64`.
//!
//! ```text
//! magic            8 bytes   "SYNRFMDL"
//! version          u32       1
//! n_features       u32
//! n_estimators     u32
//! max_depth        u32
//! feature_mode     u8        0 = sqrt, 1 = log2, 2 = all
//! min_samples_split u32
//! seed             u64
//! n_names          u32       0 or n_features
//!   name           u32 length + UTF-8 bytes, repeated n_names times
//! has_scaler       u8        0 or 1
//!   means          f64 x n_features   (only when has_scaler = 1)
//!   stds           f64 x n_features
//! n_trees          u32       equals n_estimators
//!   n_nodes        u32       per tree, then the nodes in preorder:
//!   tag            u8        0 = leaf, 1 = internal
//!     leaf:        u64 benign count, u64 attack count
//!     internal:    u32 feature, f64 threshold, u32 left, u32 right
//! checksum         u64       FNV-1a over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{DecisionTree, FeatureMode, ForestError, ForestHyperparams, ForestModel, TreeNode};
use crate::flowdata::ScalerParams;

pub const MODEL_MAGIC: &[u8; 8] = b"SYNRFMDL";
pub const MODEL_VERSION: u32 = 1;

/// A forest plus what is needed to score raw flows with it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub model: ForestModel,
    /// Scaler fitted at training time; applied to raw input before prediction.
    pub scaler: Option<ScalerParams>,
    pub feature_names: Vec<String>,
}

impl ModelBundle {
    pub fn new(model: ForestModel) -> Self {
        Self { model, scaler: None, feature_names: Vec::new() }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn u32_of(value: usize, what: &str) -> Result<u32, ForestError> {
    u32::try_from(value).map_err(|_| ForestError::InvalidHyperparams(format!("{what} exceeds u32 range")))
}

fn mode_tag(mode: FeatureMode) -> u8 {
    match mode {
        FeatureMode::Sqrt => 0,
        FeatureMode::Log2 => 1,
        FeatureMode::All => 2,
    }
}

fn encode(bundle: &ModelBundle) -> Result<Vec<u8>, ForestError> {
    let m = &bundle.model;
    let hp = m.hyperparams();
    let d = m.n_features_trained();
    if !bundle.feature_names.is_empty() && bundle.feature_names.len() != d {
        return Err(ForestError::Corrupt(format!("{} feature names for {d} features", bundle.feature_names.len())));
    }
    if let Some(s) = &bundle.scaler {
        if s.means.len() != d || s.stds.len() != d {
            return Err(ForestError::Corrupt(format!("scaler has {} features, model {d}", s.means.len())));
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(d, "n_features")?.to_le_bytes());
    out.extend_from_slice(&u32_of(hp.n_estimators, "n_estimators")?.to_le_bytes());
    out.extend_from_slice(&u32_of(hp.max_depth, "max_depth")?.to_le_bytes());
    out.push(mode_tag(hp.feature_mode));
    out.extend_from_slice(&u32_of(hp.min_samples_split, "min_samples_split")?.to_le_bytes());
    out.extend_from_slice(&hp.seed.to_le_bytes());

    out.extend_from_slice(&u32_of(bundle.feature_names.len(), "feature names")?.to_le_bytes());
    for name in &bundle.feature_names {
        out.extend_from_slice(&u32_of(name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    match &bundle.scaler {
        None => out.push(0),
        Some(s) => {
            out.push(1);
            for v in s.means.iter().chain(&s.stds) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    out.extend_from_slice(&u32_of(m.trees().len(), "tree count")?.to_le_bytes());
    for tree in m.trees() {
        out.extend_from_slice(&u32_of(tree.n_nodes(), "node count")?.to_le_bytes());
        for node in tree.nodes() {
            match node {
                TreeNode::Leaf { class_counts } => {
                    out.push(0);
                    out.extend_from_slice(&class_counts[0].to_le_bytes());
                    out.extend_from_slice(&class_counts[1].to_le_bytes());
                }
                TreeNode::Internal { feature, threshold, left, right } => {
                    out.push(1);
                    out.extend_from_slice(&u32_of(*feature, "feature")?.to_le_bytes());
                    out.extend_from_slice(&threshold.to_le_bytes());
                    out.extend_from_slice(&u32_of(*left, "node index")?.to_le_bytes());
                    out.extend_from_slice(&u32_of(*right, "node index")?.to_le_bytes());
                }
            }
        }
    }
    let checksum = fnv1a(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ForestError> {
        if self.buf.len() < n {
            return Err(ForestError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ForestError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ForestError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ForestError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ForestError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Caps a declared element count by what the remaining bytes could hold.
    fn capacity(&self, declared: u32, min_size: usize) -> usize {
        (declared as usize).min(self.buf.len() / min_size)
    }
}

fn decode(bytes: &[u8]) -> Result<ModelBundle, ForestError> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(ForestError::NotAModel);
    }
    let mut cur = Cursor { buf: &bytes[MODEL_MAGIC.len()..] };
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(ForestError::UnsupportedVersion { found: version, expected: MODEL_VERSION });
    }
    if bytes.len() < MODEL_MAGIC.len() + 12 {
        return Err(ForestError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a(body) != stored {
        // a short file usually fails here too; both mean the payload is unusable
        return Err(ForestError::Corrupt("checksum mismatch (file truncated or modified)".into()));
    }
    let mut cur = Cursor { buf: &body[MODEL_MAGIC.len() + 4..] };

    let n_features = cur.u32()? as usize;
    let n_estimators = cur.u32()? as usize;
    let max_depth = cur.u32()? as usize;
    let feature_mode = match cur.u8()? {
        0 => FeatureMode::Sqrt,
        1 => FeatureMode::Log2,
        2 => FeatureMode::All,
        other => return Err(ForestError::Corrupt(format!("unknown feature mode tag {other}"))),
    };
    let min_samples_split = cur.u32()? as usize;
    let seed = cur.u64()?;
    let hyperparams = ForestHyperparams { n_estimators, max_depth, feature_mode, seed, min_samples_split };
    hyperparams.validate().map_err(|e| ForestError::Corrupt(e.to_string()))?;

    let n_names = cur.u32()?;
    if n_names != 0 && n_names as usize != n_features {
        return Err(ForestError::Corrupt(format!("{n_names} feature names for {n_features} features")));
    }
    let mut feature_names = Vec::with_capacity(cur.capacity(n_names, 4));
    for _ in 0..n_names {
        let len = cur.u32()? as usize;
        let raw = cur.take(len)?;
        let name = std::str::from_utf8(raw).map_err(|_| ForestError::Corrupt("feature name is not UTF-8".into()))?;
        feature_names.push(name.to_owned());
    }

    let scaler = match cur.u8()? {
        0 => None,
        1 => {
            let mut read = || -> Result<Vec<f64>, ForestError> { (0..n_features).map(|_| cur.f64()).collect() };
            let means = read()?;
            let stds = read()?;
            if means.iter().chain(&stds).any(|v| !v.is_finite()) || stds.iter().any(|&s| s < 0.0) {
                return Err(ForestError::Corrupt("invalid scaler parameters".into()));
            }
            Some(ScalerParams { means, stds })
        }
        other => return Err(ForestError::Corrupt(format!("bad scaler flag {other}"))),
    };

    let n_trees = cur.u32()?;
    if n_trees as usize != n_estimators {
        return Err(ForestError::Corrupt(format!("{n_trees} trees for n_estimators = {n_estimators}")));
    }
    let mut trees = Vec::with_capacity(cur.capacity(n_trees, 4));
    for _ in 0..n_trees {
        let n_nodes = cur.u32()?;
        let mut nodes = Vec::with_capacity(cur.capacity(n_nodes, 17));
        for _ in 0..n_nodes {
            let node = match cur.u8()? {
                0 => TreeNode::Leaf { class_counts: [cur.u64()?, cur.u64()?] },
                1 => TreeNode::Internal {
                    feature: cur.u32()? as usize,
                    threshold: cur.f64()?,
                    left: cur.u32()? as usize,
                    right: cur.u32()? as usize,
                },
                other => return Err(ForestError::Corrupt(format!("unknown node tag {other}"))),
            };
            nodes.push(node);
        }
        trees.push(
            DecisionTree::from_nodes(nodes, n_features, max_depth).map_err(|e| ForestError::Corrupt(e.to_string()))?,
        );
    }
    if !cur.buf.is_empty() {
        return Err(ForestError::Corrupt(format!("{} trailing bytes", cur.buf.len())));
    }
    let model = ForestModel::from_parts(trees, hyperparams, n_features)?;
    Ok(ModelBundle { model, scaler, feature_names })
}

/// Writes `bundle` to `path` atomically (temp file + rename).
pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<(), ForestError> {
    let path = path.as_ref();
    let bytes = encode(bundle)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle, ForestError> {
    decode(&fs::read(path)?)
}

pub fn save_model(model: &ForestModel, path: impl AsRef<Path>) -> Result<(), ForestError> {
    save_bundle(&ModelBundle::new(model.clone()), path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ForestModel, ForestError> {
    Ok(load_bundle(path)?.model)
}

/// Decodes a model from an in-memory buffer.
pub fn decode_bundle(bytes: &[u8]) -> Result<ModelBundle, ForestError> {
    decode(bytes)
}

pub fn encode_bundle(bundle: &ModelBundle) -> Result<Vec<u8>, ForestError> {
    encode(bundle)
}
