//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic "PLMR" | u32 version | u64 json_len | json config block
//! then per-tensor records until EOF:
//!   u16 name_len | name utf-8 | u8 rank | rank x u64 dims | f64 values
//! ```
//!
//! Optimizer moments are stored under `adam/m/<name>` and `adam/v/<name>`;
//! the rng state under `rng` (seed words and stream position, bit-cast).
//! Restoring a checkpoint reproduces training bit-exactly from that point.

use super::{Model, ModelConfig, TrainError};
use crate::objective::AdamState;
use crate::params::Params;
use crate::tensor::Tensor;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PLMR";

#[derive(Serialize, Deserialize)]
struct MetaBlock {
    model: ModelConfig,
    epoch: usize,
    adam_step: u64,
}

pub struct Checkpoint {
    pub model: ModelConfig,
    pub epoch: usize,
    pub params: Params,
    pub adam_step: u64,
    pub adam_m: BTreeMap<String, Tensor>,
    pub adam_v: BTreeMap<String, Tensor>,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn capture(model: &Model, adam: &AdamState, rng: &ChaCha8Rng, epoch: usize) -> Checkpoint {
        Checkpoint {
            model: model.config(),
            epoch,
            params: model.params().clone(),
            adam_step: adam.step,
            adam_m: adam.m.clone(),
            adam_v: adam.v.clone(),
            rng: rng.clone(),
        }
    }
}

fn rng_to_tensor(rng: &ChaCha8Rng) -> Tensor {
    let seed = rng.get_seed();
    let pos = rng.get_word_pos();
    let mut words = Vec::with_capacity(6);
    for chunk in seed.chunks(8) {
        let mut b = [0u8; 8];
        b.copy_from_slice(chunk);
        words.push(f64::from_bits(u64::from_le_bytes(b)));
    }
    words.push(f64::from_bits(pos as u64));
    words.push(f64::from_bits((pos >> 64) as u64));
    Tensor::vector(words)
}

fn rng_from_tensor(t: &Tensor) -> Result<ChaCha8Rng, TrainError> {
    if t.numel() != 6 {
        return Err(TrainError::CheckpointFormat(format!(
            "rng record must hold 6 words, found {}",
            t.numel()
        )));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&t.data()[i].to_bits().to_le_bytes());
    }
    let lo = t.data()[4].to_bits() as u128;
    let hi = t.data()[5].to_bits() as u128;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(lo | (hi << 64));
    Ok(rng)
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Tensor) -> std::io::Result<()> {
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    w.write_all(name_bytes)?;
    w.write_all(&[t.shape().len() as u8])?;
    for &dim in t.shape() {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), TrainError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let meta = serde_json::to_vec(&MetaBlock {
        model: ckpt.model.clone(),
        epoch: ckpt.epoch,
        adam_step: ckpt.adam_step,
    })?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;

    for (name, t) in ckpt.params.iter() {
        write_tensor(&mut w, name, t)?;
    }
    for (name, t) in &ckpt.adam_m {
        write_tensor(&mut w, &format!("adam/m/{name}"), t)?;
    }
    for (name, t) in &ckpt.adam_v {
        write_tensor(&mut w, &format!("adam/v/{name}"), t)?;
    }
    write_tensor(&mut w, "rng", &rng_to_tensor(&ckpt.rng))?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.buf.len() {
            return Err(TrainError::CheckpointFormat(
                "unexpected end of checkpoint".into(),
            ));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, TrainError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    if cur.take(4)? != MAGIC {
        return Err(TrainError::CheckpointFormat("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::CheckpointFormat(format!(
            "unsupported version {version}"
        )));
    }
    let json_len = cur.u64()? as usize;
    let meta: MetaBlock = serde_json::from_slice(cur.take(json_len)?)?;

    let mut params = Params::new();
    let mut adam_m = BTreeMap::new();
    let mut adam_v = BTreeMap::new();
    let mut rng = None;
    while !cur.done() {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| TrainError::CheckpointFormat("tensor name is not utf-8".into()))?;
        let rank = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| TrainError::CheckpointFormat(e.to_string()))?;
        if name == "rng" {
            rng = Some(rng_from_tensor(&tensor)?);
        } else if let Some(rest) = name.strip_prefix("adam/m/") {
            adam_m.insert(rest.to_string(), tensor);
        } else if let Some(rest) = name.strip_prefix("adam/v/") {
            adam_v.insert(rest.to_string(), tensor);
        } else {
            params.insert(name, tensor);
        }
    }
    let rng = rng
        .ok_or_else(|| TrainError::CheckpointFormat("missing rng record".into()))?;

    Ok(Checkpoint {
        model: meta.model,
        epoch: meta.epoch,
        params,
        adam_step: meta.adam_step,
        adam_m,
        adam_v,
        rng,
    })
}
