//! Named-tensor checkpoints: the MTCK binary format, weight averaging over
//! the last N checkpoints, and vocabulary pruning of embedding matrices.
//!
//! # MTCK layout (all integers little-endian)
//!
//! | field            | type                 |
//! |------------------|----------------------|
//! | magic            | `b"MTCK"`            |
//! | format version   | u32 (currently 1)    |
//! | step             | u64                  |
//! | tensor count     | u32                  |
//!
//! then, per tensor, in file order:
//!
//! | field            | type                          |
//! |------------------|-------------------------------|
//! | name length      | u32 (bytes)                   |
//! | name             | UTF-8                         |
//! | rank             | u32 (≥ 1)                     |
//! | extents          | rank × u64                    |
//! | element count    | u64 (must equal ∏ extents)    |
//! | data             | element count × f32 (IEEE-754) |
//!
//! Nothing may follow the last tensor.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::subword::SubwordVocab;

pub const MAGIC: [u8; 4] = *b"MTCK";
pub const FORMAT_VERSION: u32 = 1;

/// The number of trailing checkpoints averaged by default.
pub const DEFAULT_N_LAST: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic {found:?}, expected \"MTCK\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("file truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("tensor `{name}`: shape {shape:?} needs {expected} values, found {found}")]
    LengthMismatch { name: String, shape: Vec<usize>, expected: usize, found: usize },
    #[error("tensor `{name}` has an empty shape")]
    EmptyShape { name: String },
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("need at least {needed} checkpoints, got {got}")]
    TooFewCheckpoints { needed: usize, got: usize },
    #[error("n_last must be at least 1")]
    ZeroNLast,
    #[error("checkpoints disagree on tensor names")]
    NameMismatch,
    #[error("tensor `{name}`: shape {left:?} vs {right:?}")]
    ShapeMismatch { name: String, left: Vec<usize>, right: Vec<usize> },
    #[error("two checkpoints share step {0}")]
    DuplicateStep(u64),
    #[error("no tensor named `{0}`")]
    MissingTensor(String),
    #[error("embedding `{name}` has shape {shape:?}, expected [{vocab}, d]")]
    VocabMismatch { name: String, shape: Vec<usize>, vocab: usize },
    #[error("token id {id} is outside a vocabulary of {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, CheckpointError> {
        if shape.is_empty() {
            return Err(CheckpointError::EmptyShape { name: String::new() });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CheckpointError::LengthMismatch { name: String::new(), shape, expected, found: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n]).expect("consistent by construction")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Row `i` of the tensor viewed as `[shape[0], rest]`.
    pub fn row(&self, i: usize) -> &[f32] {
        let width = self.row_width();
        &self.data[i * width..(i + 1) * width]
    }

    fn row_width(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Bitwise equality (distinguishes `-0.0` from `0.0` and compares NaN
    /// payloads).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// SHA-256 over the little-endian payload, hex-encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: u64,
    pub format_version: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: IndexMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(step: u64) -> Self {
        Self { meta: CheckpointMeta { step, format_version: FORMAT_VERSION }, tensors: IndexMap::new() }
    }

    pub fn with_tensor(mut self, name: impl Into<String>, tensor: Tensor) -> Self {
        self.tensors.insert(name.into(), tensor);
        self
    }

    pub fn bit_eq(&self, other: &Checkpoint) -> bool {
        self.meta == other.meta
            && self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.meta.step.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &e in &t.shape {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            out.extend_from_slice(&(t.data.len() as u64).to_le_bytes());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic { found: magic });
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion { found: version });
        }
        let step = r.u64("step")?;
        let count = r.u32("tensor count")?;
        let mut ckpt = Checkpoint::new(step);
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| CheckpointError::BadName)?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank == 0 {
                return Err(CheckpointError::EmptyShape { name });
            }
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u64("extent")? as usize);
            }
            let found = r.u64("element count")? as usize;
            let expected = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
            if expected != Some(found) {
                return Err(CheckpointError::LengthMismatch {
                    name,
                    shape,
                    expected: expected.unwrap_or(usize::MAX),
                    found,
                });
            }
            let raw =
                r.take(found.checked_mul(4).ok_or(CheckpointError::Truncated { what: "tensor data" })?, "tensor data")?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if ckpt.tensors.contains_key(&name) {
                return Err(CheckpointError::DuplicateName(name));
            }
            ckpt.tensors.insert(name, Tensor { shape, data });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(ckpt)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(CheckpointError::Truncated { what })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    Checkpoint::from_bytes(&bytes)
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

/// Element-wise mean of the `n_last` highest-step checkpoints.
///
/// Sums are accumulated in f64 in ascending step order and rounded to f32
/// once, so the result does not depend on the order of `ckpts`.
pub fn average_checkpoints(ckpts: &[Checkpoint], n_last: usize) -> Result<Checkpoint, CheckpointError> {
    if n_last == 0 {
        return Err(CheckpointError::ZeroNLast);
    }
    if ckpts.len() < n_last {
        return Err(CheckpointError::TooFewCheckpoints { needed: n_last, got: ckpts.len() });
    }
    let mut order: Vec<&Checkpoint> = ckpts.iter().collect();
    order.sort_by_key(|c| c.meta.step);
    if let Some(w) = order.windows(2).find(|w| w[0].meta.step == w[1].meta.step) {
        return Err(CheckpointError::DuplicateStep(w[0].meta.step));
    }
    let selected = &order[order.len() - n_last..];
    let newest = selected[selected.len() - 1];
    for c in selected {
        if c.tensors.len() != newest.tensors.len() || !c.tensors.keys().all(|k| newest.tensors.contains_key(k)) {
            return Err(CheckpointError::NameMismatch);
        }
        for (name, t) in &c.tensors {
            let reference = &newest.tensors[name];
            if t.shape != reference.shape {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    left: reference.shape.clone(),
                    right: t.shape.clone(),
                });
            }
        }
    }

    let n = n_last as f64;
    let averaged: Vec<(String, Tensor)> = newest
        .tensors
        .par_iter()
        .map(|(name, reference)| {
            // -0.0 is the additive identity; +0.0 would turn a sum of -0.0 into +0.0.
            let mut acc = vec![-0.0f64; reference.data.len()];
            for c in selected {
                for (a, &v) in acc.iter_mut().zip(&c.tensors[name].data) {
                    *a += v as f64;
                }
            }
            let data = acc.into_iter().map(|s| (s / n) as f32).collect();
            (name.clone(), Tensor { shape: reference.shape.clone(), data })
        })
        .collect();
    let mut out = Checkpoint::new(newest.meta.step);
    out.tensors.extend(averaged);
    Ok(out)
}

/// Reads every path and averages the last `n_last` by step.
pub fn average_checkpoint_files<P: AsRef<Path>>(paths: &[P], n_last: usize) -> Result<Checkpoint, CheckpointError> {
    let ckpts = paths.iter().map(read_checkpoint).collect::<Result<Vec<_>, _>>()?;
    average_checkpoints(&ckpts, n_last)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub original_vocab: usize,
    pub kept_vocab: usize,
    /// `original_vocab / kept_vocab`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Pruned {
    pub checkpoint: Checkpoint,
    pub vocab: SubwordVocab,
    pub report: PruneReport,
    /// Old id → new id for every kept token.
    pub remap: BTreeMap<u32, u32>,
    /// Names of the tensors whose rows were selected.
    pub pruned_tensors: Vec<String>,
}

/// Keeps only the rows of `embed_name` (and of any other tensor whose
/// leading extent is the vocabulary size) that belong to `keep` or to the
/// specials. Kept tokens retain their relative order.
pub fn prune_embeddings(
    ckpt: &Checkpoint,
    embed_name: &str,
    full_vocab: &SubwordVocab,
    keep: &BTreeSet<u32>,
) -> Result<Pruned, CheckpointError> {
    let vocab_len = full_vocab.len();
    let embed = ckpt.tensors.get(embed_name).ok_or_else(|| CheckpointError::MissingTensor(embed_name.to_string()))?;
    if embed.shape.len() != 2 || embed.shape[0] != vocab_len {
        return Err(CheckpointError::VocabMismatch {
            name: embed_name.to_string(),
            shape: embed.shape.clone(),
            vocab: vocab_len,
        });
    }
    if let Some(&id) = keep.iter().find(|&&id| id as usize >= vocab_len) {
        return Err(CheckpointError::IdOutOfRange { id, vocab: vocab_len });
    }
    let kept: Vec<u32> =
        SubwordVocab::special_ids().chain(keep.iter().copied()).collect::<BTreeSet<u32>>().into_iter().collect();
    let remap: BTreeMap<u32, u32> = kept.iter().enumerate().map(|(new, &old)| (old, new as u32)).collect();

    let mut out = Checkpoint::new(ckpt.meta.step);
    let mut pruned_tensors = Vec::new();
    for (name, t) in &ckpt.tensors {
        if t.shape[0] == vocab_len {
            let mut data = Vec::with_capacity(kept.len() * t.row_width());
            for &old in &kept {
                data.extend_from_slice(t.row(old as usize));
            }
            let mut shape = t.shape.clone();
            shape[0] = kept.len();
            out.tensors.insert(name.clone(), Tensor { shape, data });
            pruned_tensors.push(name.clone());
        } else {
            out.tensors.insert(name.clone(), t.clone());
        }
    }
    let vocab = SubwordVocab::from_full_list(
        kept.iter().map(|&id| full_vocab.token(id).expect("id checked").to_string()).collect(),
    )
    .expect("subset of a valid vocabulary that keeps the specials");
    let report =
        PruneReport { original_vocab: vocab_len, kept_vocab: kept.len(), ratio: vocab_len as f64 / kept.len() as f64 };
    Ok(Pruned { checkpoint: out, vocab, report, remap, pruned_tensors })
}

/// One line per tensor for `ckpt inspect`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TensorSummary {
    pub name: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

pub fn inspect(ckpt: &Checkpoint) -> Vec<TensorSummary> {
    ckpt.tensors
        .iter()
        .map(|(name, t)| TensorSummary { name: name.clone(), shape: t.shape.clone(), sha256: t.checksum() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint::new(5000)
            .with_tensor("embed", Tensor::new(vec![2, 3], vec![1.0, -0.0, 2.5, f32::MIN_POSITIVE, 3.0, -7.25]).unwrap())
            .with_tensor("bias", Tensor::new(vec![1], vec![0.125]).unwrap())
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert!(back.bit_eq(&c));
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.tensors.keys().collect::<Vec<_>>(), ["embed", "bias"]);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic { .. })));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::UnsupportedVersion { found: 9 })));
    }

    #[test]
    fn truncated() {
        let bytes = sample().to_bytes();
        for cut in [2, 10, 20, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(CheckpointError::Truncated { .. })));
        }
    }

    #[test]
    fn declared_count_disagrees_with_shape() {
        // shape [2,3] but element count 5
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MTCK");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(b'w');
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&5u64.to_le_bytes());
        bytes.extend(std::iter::repeat_n(0u8, 20));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::LengthMismatch { expected: 6, found: 5, .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::TrailingBytes(1))));
    }

    #[test]
    fn tensor_constructor_checks_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    fn scalar(step: u64, v: f32) -> Checkpoint {
        Checkpoint::new(step).with_tensor("w", Tensor::new(vec![1], vec![v]).unwrap())
    }

    #[test]
    fn average_identity_midpoint_and_last_five() {
        let c = sample();
        let copies: Vec<Checkpoint> = (0..5)
            .map(|i| {
                let mut k = c.clone();
                k.meta.step = i;
                k
            })
            .collect();
        let avg = average_checkpoints(&copies, 5).unwrap();
        assert!(avg.tensors["embed"].bit_eq(&c.tensors["embed"]));
        assert_eq!(avg.meta.step, 4);

        let a = Checkpoint::new(1).with_tensor("t", Tensor::filled(vec![3], 0.0));
        let b = Checkpoint::new(2).with_tensor("t", Tensor::filled(vec![3], 2.0));
        let avg = average_checkpoints(&[a, b], 2).unwrap();
        assert_eq!(avg.tensors["t"].data(), [1.0, 1.0, 1.0]);

        let seven: Vec<Checkpoint> = (1..=7).map(|i| scalar(i * 5000, i as f32)).collect();
        let avg = average_checkpoints(&seven, 5).unwrap();
        assert_eq!(avg.tensors["w"].data(), [5.0]);
        assert_eq!(avg.meta.step, 35_000);
    }

    #[test]
    fn average_errors() {
        let ckpts = vec![scalar(1, 1.0), scalar(2, 2.0)];
        assert!(matches!(
            average_checkpoints(&ckpts, 3),
            Err(CheckpointError::TooFewCheckpoints { needed: 3, got: 2 })
        ));
        assert!(matches!(average_checkpoints(&ckpts, 0), Err(CheckpointError::ZeroNLast)));
        assert!(matches!(
            average_checkpoints(&[scalar(1, 1.0), scalar(1, 2.0)], 2),
            Err(CheckpointError::DuplicateStep(1))
        ));
        let other = Checkpoint::new(3).with_tensor("v", Tensor::filled(vec![1], 0.0));
        assert!(matches!(average_checkpoints(&[scalar(1, 1.0), other], 2), Err(CheckpointError::NameMismatch)));
        let wide = Checkpoint::new(3).with_tensor("w", Tensor::filled(vec![2], 0.0));
        assert!(matches!(average_checkpoints(&[scalar(1, 1.0), wide], 2), Err(CheckpointError::ShapeMismatch { .. })));
    }

    #[test]
    fn older_checkpoints_are_ignored_even_if_incompatible() {
        let old = Checkpoint::new(1).with_tensor("other", Tensor::filled(vec![4], 9.0));
        let avg = average_checkpoints(&[scalar(3, 3.0), old, scalar(2, 1.0)], 2).unwrap();
        assert_eq!(avg.tensors["w"].data(), [2.0]);
    }

    fn vocab(n: usize) -> SubwordVocab {
        SubwordVocab::new((crate::subword::SPECIALS.len()..n).map(|i| format!("t{i}"))).unwrap()
    }

    fn embedding(rows: usize, d: usize) -> Tensor {
        Tensor::new(vec![rows, d], (0..rows * d).map(|i| i as f32 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn prune_keep_all_is_identity() {
        let v = vocab(10);
        let c = Checkpoint::new(7).with_tensor("embed", embedding(10, 4));
        let keep: BTreeSet<u32> = (0..10).collect();
        let p = prune_embeddings(&c, "embed", &v, &keep).unwrap();
        assert!(p.checkpoint.bit_eq(&c));
        assert_eq!(p.report.ratio, 1.0);
        assert_eq!(p.vocab, v);
    }

    #[test]
    fn prune_empty_keep_retains_specials() {
        let v = vocab(10);
        let c = Checkpoint::new(7).with_tensor("embed", embedding(10, 4));
        let p = prune_embeddings(&c, "embed", &v, &BTreeSet::new()).unwrap();
        let e = &p.checkpoint.tensors["embed"];
        assert_eq!(e.shape(), [6, 4]);
        for id in 0..6 {
            assert_eq!(e.row(id), c.tensors["embed"].row(id));
        }
        assert_eq!(p.vocab.tokens(), crate::subword::SPECIALS);
    }

    #[test]
    fn prune_rewrites_tied_projection_and_passes_others() {
        let v = vocab(8);
        let c = Checkpoint::new(1)
            .with_tensor("embed", embedding(8, 2))
            .with_tensor("out_proj", embedding(8, 3))
            .with_tensor("layer.w", embedding(3, 3));
        let keep = BTreeSet::from([7u32]);
        let p = prune_embeddings(&c, "embed", &v, &keep).unwrap();
        assert_eq!(p.checkpoint.tensors["out_proj"].shape(), [7, 3]);
        assert_eq!(p.checkpoint.tensors["out_proj"].row(6), c.tensors["out_proj"].row(7));
        assert!(p.checkpoint.tensors["layer.w"].bit_eq(&c.tensors["layer.w"]));
        assert_eq!(p.remap[&7], 6);
        assert_eq!(p.pruned_tensors, ["embed", "out_proj"]);
    }

    #[test]
    fn prune_errors() {
        let v = vocab(8);
        let c = Checkpoint::new(1).with_tensor("embed", embedding(7, 2));
        assert!(matches!(
            prune_embeddings(&c, "missing", &v, &BTreeSet::new()),
            Err(CheckpointError::MissingTensor(_))
        ));
        assert!(matches!(
            prune_embeddings(&c, "embed", &v, &BTreeSet::new()),
            Err(CheckpointError::VocabMismatch { .. })
        ));
        let c = Checkpoint::new(1).with_tensor("embed", embedding(8, 2));
        assert!(matches!(
            prune_embeddings(&c, "embed", &v, &BTreeSet::from([8])),
            Err(CheckpointError::IdOutOfRange { id: 8, .. })
        ));
    }

    #[test]
    fn inspect_lists_tensors_in_order() {
        let s = inspect(&sample());
        assert_eq!(s[0].name, "embed");
        assert_eq!(s[1].shape, [1]);
        assert_eq!(s[0].sha256.len(), 64);
    }
}
