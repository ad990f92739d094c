//! Binary checkpoint layout:
//!
//! ```text
//! "MBCK" | u32 version | u32 header_len | header JSON
//! per tensor: u16 name_len | name | u8 rank | u32 dims[rank] | f32 data (row-major)
//! ```
//!
//! All integers and floats are little-endian.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaptionGenerator, ModelError, TemplateSelector, Variant};
use crate::neural::{ModelConfig, ParamStore, Tensor};
use crate::text::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Selector,
    Generator,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Selector => "selector",
            ModelKind::Generator => "generator",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub step: u64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np_plus_v: Option<bool>,
    pub num_templates: usize,
    pub vocab: Vec<String>,
    pub tensor_count: usize,
    pub meta: TrainingMeta,
}

pub fn write_checkpoint<W: Write>(mut out: W, header: &CheckpointHeader, params: &ParamStore) -> io::Result<()> {
    let json = serde_json::to_vec(header).map_err(io::Error::other)?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for (name, t) in params.iter() {
        let name = name.as_bytes();
        let name_len = u16::try_from(name.len()).map_err(|_| io::Error::other("parameter name too long"))?;
        out.write_all(&name_len.to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&[t.rank() as u8])?;
        for &d in t.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::CorruptFile(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(CheckpointHeader, Vec<(String, Tensor)>), ModelError> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| ModelError::CorruptFile(e.to_string()))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(ModelError::CorruptFile("bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = c.u32("header length")? as usize;
    let header: CheckpointHeader = serde_json::from_slice(c.take(header_len, "header")?)
        .map_err(|e| ModelError::CorruptFile(format!("header: {e}")))?;
    let mut tensors = Vec::with_capacity(header.tensor_count);
    for _ in 0..header.tensor_count {
        let name_len = u16::from_le_bytes(c.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| ModelError::CorruptFile("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dims")? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = c.take(count.saturating_mul(4), &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        tensors.push((name, Tensor::new(shape, data).expect("sized from shape")));
    }
    if c.pos != bytes.len() {
        return Err(ModelError::CorruptFile(format!(
            "{} trailing bytes after {} tensors",
            bytes.len() - c.pos,
            header.tensor_count
        )));
    }
    Ok((header, tensors))
}

/// Copies named tensors into a freshly built store, requiring an exact match.
fn restore(params: &mut ParamStore, tensors: Vec<(String, Tensor)>) -> Result<(), ModelError> {
    if tensors.len() != params.len() {
        return Err(ModelError::CorruptFile(format!(
            "{} tensors for a model with {} parameters",
            tensors.len(),
            params.len()
        )));
    }
    for (name, t) in tensors {
        let id = params
            .find(&name)
            .ok_or_else(|| ModelError::CorruptFile(format!("unexpected tensor {name}")))?;
        params
            .replace(id, t)
            .map_err(|e| ModelError::CorruptFile(e.to_string()))?;
    }
    Ok(())
}

fn save_to(path: &Path, header: &CheckpointHeader, params: &ParamStore) -> Result<(), ModelError> {
    let io_err = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_checkpoint(BufWriter::new(file), header, params).map_err(io_err)
}

type Loaded = (CheckpointHeader, Vec<(String, Tensor)>, Vocabulary);

fn load_from(path: &Path, expected: ModelKind) -> Result<Loaded, ModelError> {
    let file = File::open(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (header, tensors) = read_checkpoint(BufReader::new(file))?;
    if header.kind != expected {
        return Err(ModelError::WrongKind {
            found: header.kind,
            expected,
        });
    }
    let vocab = Vocabulary::from_tokens(header.vocab.clone(), header.num_templates)
        .map_err(|e| ModelError::CorruptFile(format!("vocabulary: {e}")))?;
    Ok((header, tensors, vocab))
}

impl TemplateSelector {
    pub fn header(&self, meta: TrainingMeta) -> CheckpointHeader {
        CheckpointHeader {
            kind: ModelKind::Selector,
            config: *self.config(),
            variant: None,
            np_plus_v: None,
            num_templates: self.num_templates(),
            vocab: self.vocab().tokens().to_vec(),
            tensor_count: self.params().len(),
            meta,
        }
    }

    pub fn save(&self, path: &Path, meta: TrainingMeta) -> Result<(), ModelError> {
        save_to(path, &self.header(meta), self.params())
    }

    pub fn load(path: &Path) -> Result<(Self, TrainingMeta), ModelError> {
        let (header, tensors, vocab) = load_from(path, ModelKind::Selector)?;
        let mut model = Self::new(header.config, vocab, 0)?;
        restore(&mut model.params, tensors)?;
        Ok((model, header.meta))
    }
}

impl CaptionGenerator {
    pub fn header(&self, meta: TrainingMeta) -> CheckpointHeader {
        CheckpointHeader {
            kind: ModelKind::Generator,
            config: *self.config(),
            variant: Some(self.variant()),
            np_plus_v: Some(self.np_plus_v()),
            num_templates: self.vocab().num_templates(),
            vocab: self.vocab().tokens().to_vec(),
            tensor_count: self.params().len(),
            meta,
        }
    }

    pub fn save(&self, path: &Path, meta: TrainingMeta) -> Result<(), ModelError> {
        save_to(path, &self.header(meta), self.params())
    }

    pub fn load(path: &Path) -> Result<(Self, TrainingMeta), ModelError> {
        let (header, tensors, vocab) = load_from(path, ModelKind::Generator)?;
        let variant = header
            .variant
            .ok_or_else(|| ModelError::CorruptFile("generator header without variant".into()))?;
        let mut model = Self::new(variant, header.np_plus_v.unwrap_or(true), header.config, vocab, 0)?;
        restore(&mut model.params, tensors)?;
        Ok((model, header.meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TemplateId;
    use crate::models::test_support::vocab;
    use crate::text::BOS;

    fn generator() -> CaptionGenerator {
        let v = vocab(3, &["one two three four"]);
        let cfg = ModelConfig {
            layers: 1,
            d_model: 8,
            d_ff: 16,
            heads: 2,
            dropout: 0.0,
            vocab_size: v.len(),
            max_len: 8,
        };
        CaptionGenerator::new(Variant::Smt2mc, false, cfg, v, 5).unwrap()
    }

    fn bytes(g: &CaptionGenerator) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, &g.header(TrainingMeta::default()), g.params()).unwrap();
        out
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let g = generator();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.mbck");
        let meta = TrainingMeta {
            seed: 9,
            step: 120,
            loss: Some(0.25),
        };
        g.save(&path, meta.clone()).unwrap();
        let (back, back_meta) = CaptionGenerator::load(&path).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.variant(), Variant::Smt2mc);
        assert!(!back.np_plus_v());
        for (a, b) in g.params().tensors().iter().zip(back.params().tensors()) {
            let a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        let m1 = g.encode_meme(TemplateId(1), &[8, 9]).unwrap();
        let m2 = back.encode_meme(TemplateId(1), &[8, 9]).unwrap();
        assert_eq!(
            g.decoder_logits(&[BOS, 8], &m1).unwrap(),
            back.decoder_logits(&[BOS, 8], &m2).unwrap()
        );
        let mut resaved = Vec::new();
        write_checkpoint(&mut resaved, &back.header(back_meta), back.params()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), resaved);
    }

    #[test]
    fn truncation_is_corrupt() {
        let b = bytes(&generator());
        for cut in [2, 10, b.len() / 2, b.len() - 1] {
            assert!(
                matches!(read_checkpoint(&b[..cut]), Err(ModelError::CorruptFile(_))),
                "cut at {cut}"
            );
        }
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra[..]), Err(ModelError::CorruptFile(_))));
        let mut magic = b;
        magic[0] = b'X';
        assert!(matches!(read_checkpoint(&magic[..]), Err(ModelError::CorruptFile(_))));
    }

    #[test]
    fn other_versions_are_rejected() {
        let mut b = bytes(&generator());
        b[4..8].copy_from_slice(&999u32.to_le_bytes());
        assert!(matches!(
            read_checkpoint(&b[..]),
            Err(ModelError::VersionMismatch {
                found: 999,
                expected: 1
            })
        ));
    }

    #[test]
    fn kind_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.mbck");
        generator().save(&path, TrainingMeta::default()).unwrap();
        assert!(matches!(
            TemplateSelector::load(&path),
            Err(ModelError::WrongKind { .. })
        ));
    }
}
