//! Named-tensor container.
//!
//! Layout: magic `RFDF`, u16 version, u32 tensor count, then per tensor a
//! u16 name length, the UTF-8 name, u8 rank, rank u64 dims and the f32
//! payload, all little-endian. A u32 CRC32 of every byte after the magic
//! closes the file.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::model::{Detector, ModelConfig, StreamMode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RFDF";
pub const VERSION: u16 = 1;

pub fn encode_tensors(tensors: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(16 + tensors.iter().map(|(n, t)| n.len() + 16 + 4 * t.numel()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(tensors.len()).map_err(|_| Error::InvalidParameter("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in tensors {
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate tensor name {name}")));
        }
        let len = u16::try_from(name.len()).map_err(|_| Error::InvalidParameter(format!("name too long: {name}")))?;
        let rank = u8::try_from(t.shape().len()).map_err(|_| Error::InvalidParameter("rank above 255".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[MAGIC.len()..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Corrupt("truncated container".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < MAGIC.len() + 10 || &bytes[..4] != MAGIC {
        return Err(Error::Corrupt("missing container magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(&body[MAGIC.len()..]) != stored {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Corrupt(format!("unsupported container version {version}")));
    }
    let count = r.u32()? as usize;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::Corrupt(format!("duplicate tensor name {name}")));
        }
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(r.u64()?).map_err(|_| Error::Corrupt("dimension overflow".into()))?;
            numel = numel.checked_mul(d).ok_or_else(|| Error::Corrupt("dimension overflow".into()))?;
            shape.push(d);
        }
        let payload = r.take(numel.checked_mul(4).ok_or_else(|| Error::Corrupt("payload overflow".into()))?)?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::Corrupt("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn save_tensors(path: impl AsRef<Path>, tensors: &[(String, Tensor)]) -> Result<()> {
    fs::write(path, encode_tensors(tensors)?)?;
    Ok(())
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    decode_tensors(&fs::read(path)?)
}

/// Stores a u64 exactly as four 16-bit chunks in f32 slots.
pub fn u64_tensor(v: u64) -> Tensor {
    let chunks = (0..4).map(|i| ((v >> (16 * i)) & 0xFFFF) as f32).collect();
    Tensor::new(&[4], chunks).expect("shape")
}

pub fn tensor_u64(t: &Tensor) -> Result<u64> {
    if t.numel() != 4 || t.data().iter().any(|&c| c.fract() != 0.0 || !(0.0..65536.0).contains(&c)) {
        return Err(Error::Corrupt("malformed u64 record".into()));
    }
    Ok(t.data().iter().enumerate().fold(0u64, |acc, (i, &c)| acc | ((c as u64) << (16 * i))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub epoch: u32,
    pub seed: u64,
    pub config_hash: u64,
    pub mode: StreamMode,
    pub model: ModelConfig,
}

/// Model weights, batch-norm statistics, optional optimizer state and
/// run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, Tensor)>,
    pub optimizer: Option<Vec<(String, Tensor)>>,
}

impl ModelCheckpoint {
    pub fn from_model(model: &Detector, epoch: u32, seed: u64, config_hash: u64) -> Self {
        let meta = CheckpointMeta { epoch, seed, config_hash, mode: model.mode(), model: *model.config() };
        Self { meta, tensors: model.state(), optimizer: None }
    }

    pub fn to_model(&self) -> Result<Detector> {
        let mut d = Detector::new(self.meta.mode, self.meta.model, 0)?;
        d.load_state(&self.tensors)?;
        Ok(d)
    }

    pub fn to_container(&self) -> Vec<(String, Tensor)> {
        let m = &self.meta;
        let mut out = vec![
            ("meta.epoch".to_string(), u64_tensor(m.epoch as u64)),
            ("meta.seed".to_string(), u64_tensor(m.seed)),
            ("meta.config_hash".to_string(), u64_tensor(m.config_hash)),
            ("meta.mode".to_string(), u64_tensor(m.mode.code() as u64)),
            ("meta.model".to_string(), Tensor::new(&[8], m.model.to_values()).expect("shape")),
        ];
        out.extend(self.tensors.iter().map(|(n, t)| (format!("param.{n}"), t.clone())));
        if let Some(opt) = &self.optimizer {
            out.extend(opt.iter().map(|(n, t)| (format!("optim.{n}"), t.clone())));
        }
        out
    }

    pub fn from_container(tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let find = |key: &str| {
            tensors.iter().find(|(n, _)| n == key).map(|(_, t)| t).ok_or_else(|| Error::Corrupt(format!("missing {key}")))
        };
        let mode_code = tensor_u64(find("meta.mode")?)?;
        let mode = u16::try_from(mode_code)
            .ok()
            .and_then(StreamMode::from_code)
            .ok_or_else(|| Error::Corrupt(format!("unknown stream mode {mode_code}")))?;
        let meta = CheckpointMeta {
            epoch: u32::try_from(tensor_u64(find("meta.epoch")?)?).map_err(|_| Error::Corrupt("epoch".into()))?,
            seed: tensor_u64(find("meta.seed")?)?,
            config_hash: tensor_u64(find("meta.config_hash")?)?,
            mode,
            model: ModelConfig::from_values(find("meta.model")?.data())?,
        };
        let mut params = Vec::new();
        let mut optim = Vec::new();
        for (name, t) in tensors {
            if let Some(n) = name.strip_prefix("param.") {
                params.push((n.to_string(), t));
            } else if let Some(n) = name.strip_prefix("optim.") {
                optim.push((n.to_string(), t));
            }
        }
        let optimizer = (!optim.is_empty()).then_some(optim);
        Ok(Self { meta, tensors: params, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_tensors(path, &self.to_container())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(load_tensors(path)?)
    }
}
