//! Binary checkpoints.
//!
//! Layout (little endian): magic `RGPN`, format version `u32`, run config as
//! `u64` length + JSON, parameter table, optimizer table, RNG state
//! (32-byte seed, `u64` stream, `u128` word position), then `u64` epoch,
//! iteration and total-iteration counters. A table is a `u32` count of
//! entries, each `u32` name length + UTF-8 name, `u32` rank, `u64` dims and
//! `f32` data.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::arch::Model;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RGPN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: Vec<(String, Tensor)>,
    /// Momentum buffers keyed by parameter name.
    pub optimizer: Vec<(String, Tensor)>,
    pub rng: RngState,
    /// Epochs completed.
    pub epoch: u64,
    /// Optimizer steps taken.
    pub iter: u64,
    pub total_iters: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let json = serde_json::to_vec(&self.config)?;
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        write_table(&mut out, &self.params);
        write_table(&mut out, &self.optimizer);
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        for v in [self.epoch, self.iter, self.total_iters] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("not an RGPN checkpoint".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let len = r.u64()? as usize;
        let config: RunConfig = serde_json::from_slice(r.take(len)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let params = read_table(&mut r)?;
        let optimizer = read_table(&mut r)?;
        let mut seed = [0u8; 32];
        seed.copy_from_slice(r.take(32)?);
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let (epoch, iter, total_iters) = (r.u64()?, r.u64()?, r.u64()?);
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config,
            params,
            optimizer,
            rng: RngState { seed, stream, word_pos },
            epoch,
            iter,
            total_iters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Rebuild the model; every parameter must be present with its recorded shape.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(&self.config.network, self.config.seed)?;
        self.copy_params_into(&mut model, |_| false)?;
        Ok(model)
    }

    /// Rebuild the model with a new class count. Head rows listed in
    /// `mapping[new_class] = Some(old_class)` are copied; the rest keep their
    /// fresh initialization.
    pub fn model_with_head(&self, num_classes: usize, mapping: &[Option<usize>]) -> Result<Model> {
        let mut net = self.config.network.clone();
        net.num_classes = num_classes;
        if mapping.len() != num_classes {
            return Err(Error::config("mapping", format!("{} entries for {num_classes} classes", mapping.len())));
        }
        let mut model = Model::new(&net, self.config.seed)?;
        self.copy_params_into(&mut model, |name| name.starts_with("head."))?;
        let old_classes = self.config.network.num_classes;
        for suffix in ["weight", "bias"] {
            let name = format!("head.{suffix}");
            let Some(old) = self.param(&name) else { continue };
            let id = model.store.find(&name).ok_or_else(|| Error::Checkpoint(format!("model has no {name}")))?;
            let row = old.numel() / old_classes;
            let dst = model.store.tensor_mut(id).data_mut();
            for (new, src) in mapping.iter().enumerate() {
                if let Some(src) = *src {
                    if src >= old_classes {
                        return Err(Error::config("mapping", format!("old class {src} out of range")));
                    }
                    dst[new * row..(new + 1) * row].copy_from_slice(&old.data()[src * row..(src + 1) * row]);
                }
            }
        }
        Ok(model)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn copy_params_into(&self, model: &mut Model, skip: impl Fn(&str) -> bool) -> Result<()> {
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let name = model.store.name(id).to_string();
            if skip(&name) {
                continue;
            }
            let t = self.param(&name).ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let dst = model.store.tensor_mut(id);
            if dst.shape() != t.shape() {
                return Err(Error::Checkpoint(format!("{name}: shape {:?}, model expects {:?}", t.shape(), dst.shape())));
            }
            dst.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }
}

fn write_table(out: &mut Vec<u8>, table: &[(String, Tensor)]) {
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (name, t) in table {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_table(r: &mut Reader) -> Result<Vec<(String, Tensor)>> {
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        table.push((name, Tensor::new(shape, data)?));
    }
    Ok(table)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
