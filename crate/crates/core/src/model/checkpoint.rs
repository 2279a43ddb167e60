//! Binary checkpoint files (little-endian): magic `TLCK`, version, a
//! length-prefixed `key = value` config block, named f32 tensors, and an
//! optional block of optimizer moments.

use std::collections::HashMap;
use std::path::Path;

use super::config::{parse_kv_lines, ModelConfig};
use super::weights::{init_weights, Weights};
use crate::nn::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TLCK";
pub const VERSION: u32 = 1;

/// First and second moment estimates, shaped like the weights. RMSprop uses
/// only `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Weights<f32>,
    pub v: Weights<f32>,
}

impl OptimizerState {
    pub fn zeros_like(w: &Weights<f32>) -> Self {
        OptimizerState {
            m: w.zeros_like(),
            v: w.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub weights: Weights<f32>,
    pub optimizer: Option<OptimizerState>,
    /// Optimizer updates applied so far.
    pub step: u64,
}

/// Fresh checkpoint with seeded weights and no optimizer state.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<Checkpoint> {
    Ok(Checkpoint {
        config: config.clone(),
        weights: init_weights(config, seed)?,
        optimizer: None,
        step: 0,
    })
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} exceeds u32")))?;
    put_u32(out, v);
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) -> Result<()> {
    put_len(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_len(out, t.shape().len())?;
    for &d in t.shape() {
        put_len(out, d)?;
    }
    out.reserve(4 * t.len());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let mut cfg = self.config.to_text();
        cfg.push_str(&format!("step = {}\n", self.step));
        put_len(&mut out, cfg.len())?;
        out.extend_from_slice(cfg.as_bytes());
        let names = self.weights.names();
        put_len(&mut out, names.len())?;
        for (name, t) in names.iter().zip(self.weights.tensors()) {
            put_tensor(&mut out, name, t)?;
        }
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                put_len(&mut out, 2 * names.len())?;
                for (prefix, w) in [("m", &state.m), ("v", &state.v)] {
                    for (name, t) in names.iter().zip(w.tensors()) {
                        put_tensor(&mut out, &format!("{prefix}/{name}"), t)?;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let cfg_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(cfg_len)?)
            .map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;
        let mut config = ModelConfig::default();
        let mut step = None;
        for (line, key, value) in parse_kv_lines(text, "checkpoint config")? {
            if key == "step" {
                step = Some(value.parse().map_err(|_| Error::parse("checkpoint config", line, "bad step"))?);
            } else {
                config.set(&key, &value)?;
            }
        }
        let step = step.ok_or_else(|| Error::Checkpoint("missing step counter".into()))?;
        config.validate()?;

        let mut weights = Weights::<f32>::zeros(&config);
        let count = r.u32()? as usize;
        let mut records = r.records(count)?;
        fill(&mut weights, &mut records, "")?;
        ensure_consumed(records)?;

        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let count = r.u32()? as usize;
                let mut records = r.records(count)?;
                let mut state = OptimizerState::zeros_like(&weights);
                fill(&mut state.m, &mut records, "m/")?;
                fill(&mut state.v, &mut records, "v/")?;
                ensure_consumed(records)?;
                Some(state)
            }
            f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config,
            weights,
            optimizer,
            step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn fill(w: &mut Weights<f32>, records: &mut HashMap<String, Tensor<f32>>, prefix: &str) -> Result<()> {
    let names = w.names();
    for (name, t) in names.iter().zip(w.tensors_mut()) {
        let key = format!("{prefix}{name}");
        let rec = records
            .remove(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
        if rec.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{key}` has shape {:?}, config implies {:?}",
                rec.shape(),
                t.shape()
            )));
        }
        if !rec.all_finite() {
            return Err(Error::Checkpoint(format!("tensor `{key}` holds non-finite values")));
        }
        *t = rec;
    }
    Ok(())
}

fn ensure_consumed(records: HashMap<String, Tensor<f32>>) -> Result<()> {
    let mut extra: Vec<_> = records.into_keys().collect();
    if extra.is_empty() {
        return Ok(());
    }
    extra.sort();
    Err(Error::Checkpoint(format!("unexpected tensors: {}", extra.join(", "))))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let name_len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let raw = self.take(len.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
        Ok((name, t))
    }

    fn records(&mut self, count: usize) -> Result<HashMap<String, Tensor<f32>>> {
        let mut out = HashMap::with_capacity(count.min(1024));
        for _ in 0..count {
            let (name, t) = self.tensor()?;
            if out.insert(name.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            emb_dim: 4,
            enc_hidden: 3,
            dec_hidden: 3,
            align_dim: 2,
            dec_layers: 2,
            term_vocab_size: 9,
            label_vocab_size: 7,
            ..Default::default()
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut ck = init_model(&cfg(), 3).unwrap();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"TLCK");
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);

        let mut state = OptimizerState::zeros_like(&ck.weights);
        state.m.output.b.data_mut()[1] = 0.25;
        state.v.term_emb.data_mut()[0] = 1e-30;
        ck.optimizer = Some(state);
        ck.step = 41;
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.weights.tensors().iter().zip(ck.weights.tensors()) {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = init_model(&cfg(), 5).unwrap();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = init_model(&cfg(), 3).unwrap().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let ck = init_model(&cfg(), 3).unwrap();
        let mut other = cfg();
        other.term_vocab_size = 10;
        let mut wrong = ck.clone();
        wrong.config = other;
        assert!(Checkpoint::from_bytes(&wrong.to_bytes().unwrap()).is_err());
    }
}
