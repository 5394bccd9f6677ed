//! Binary checkpoint: model, batch-norm statistics, optimizer state.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "SSRN"                    magic
//! u32                       format version (1)
//! model config              8 x u32 (input_channels, input_size, stem_channels,
//!                           n_shared, m_sup, k_unsup, path_channels, num_classes),
//!                           f64 dropout_rate, u8 consistency_on_probabilities
//! u32 group count           then per group (shared, sup, unsup):
//!   str name, u32 n_params, per param: str name, u32 ndim, ndim x u32 dims, f32 payload
//! u32 norm layers           per layer: str name, u32 len, f32 mean[len], f32 var[len]
//! optimizer                 u64 step_count, f64 beta1, f64 beta2, f64 epsilon,
//!                           u32 n, per param: str name, u32 len, f32 m[len], f32 v[len]
//! u64                       epochs completed
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8. Payloads are stored as `f32`,
//! so `f32` models round-trip bit-exactly.

use std::path::Path;

use crate::error::CheckpointError;
use crate::model::{BnStats, ModelConfig, Param, ParamGroup, SSResNet};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::RngState;
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"SSRN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub model: SSResNet<T>,
    pub optimizer: AdamState<T>,
    pub epochs_completed: usize,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&u32::try_from(v).expect("value fits in u32").to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn floats<T: Scalar>(&mut self, v: &[T]) {
        for &x in v {
            self.0.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self, what: &'static str) -> Result<String, CheckpointError> {
        let n = self.u32(what)?;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| CheckpointError::Malformed(format!("{what} is not UTF-8")))
    }
    fn floats<T: Scalar>(&mut self, n: usize, what: &'static str) -> Result<Vec<T>, CheckpointError> {
        let bytes = self.take(n.checked_mul(4).ok_or(CheckpointError::Truncated(what))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| T::from_f64_lossy(f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))))
            .collect())
    }
}

pub fn encode_checkpoint<T: Scalar>(ck: &Checkpoint<T>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u32(VERSION as usize);
    let c = ck.model.config();
    for v in [c.input_channels, c.input_size, c.stem_channels, c.n_shared_blocks, c.m_sup_blocks, c.k_unsup_blocks, c.path_channels, c.num_classes] {
        w.u32(v);
    }
    w.f64(c.dropout_rate);
    w.u8(u8::from(c.consistency_on_probabilities));

    w.u32(ParamGroup::ALL.len());
    for g in ParamGroup::ALL {
        let params: Vec<&Param<T>> = ck.model.params().iter().filter(|p| p.group == g).collect();
        w.str(g.prefix());
        w.u32(params.len());
        for p in params {
            w.str(&p.name);
            w.u32(p.shape.len());
            p.shape.iter().for_each(|&d| w.u32(d));
            w.floats(&p.data);
        }
    }

    w.u32(ck.model.bn_stats().len());
    for s in ck.model.bn_stats() {
        w.str(&s.name);
        w.u32(s.mean.len());
        w.floats(&s.mean);
        w.floats(&s.var);
    }

    let opt = &ck.optimizer;
    w.u64(opt.step_count);
    w.f64(opt.beta1.to_f64_lossy());
    w.f64(opt.beta2.to_f64_lossy());
    w.f64(opt.epsilon.to_f64_lossy());
    w.u32(opt.first_moment.len());
    for ((p, m), v) in ck.model.params().iter().zip(&opt.first_moment).zip(&opt.second_moment) {
        w.str(&p.name);
        w.u32(m.len());
        w.floats(m);
        w.floats(v);
    }
    w.u64(ck.epochs_completed as u64);
    w.0
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>, CheckpointError> {
    let mut r = Reader { buf: bytes };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32("version")? as u32;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version, expected: VERSION });
    }
    let mut dims = [0usize; 8];
    for d in &mut dims {
        *d = r.u32("model config")?;
    }
    let config = ModelConfig {
        input_channels: dims[0],
        input_size: dims[1],
        stem_channels: dims[2],
        n_shared_blocks: dims[3],
        m_sup_blocks: dims[4],
        k_unsup_blocks: dims[5],
        path_channels: dims[6],
        num_classes: dims[7],
        dropout_rate: r.f64("model config")?,
        consistency_on_probabilities: r.u8("model config")? != 0,
    };
    let mut model = SSResNet::<T>::build(&config, &RngState::new(0)).map_err(|e| CheckpointError::Malformed(e.to_string()))?;

    let groups = r.u32("parameter groups")?;
    if groups != ParamGroup::ALL.len() {
        return Err(CheckpointError::Malformed(format!("expected 3 parameter groups, found {groups}")));
    }
    let mut params = Vec::with_capacity(model.params().len());
    for g in ParamGroup::ALL {
        let name = r.str("group name")?;
        if name != g.prefix() {
            return Err(CheckpointError::Malformed(format!("expected group `{}`, found `{name}`", g.prefix())));
        }
        for _ in 0..r.u32("group size")? {
            let name = r.str("parameter name")?;
            let ndim = r.u32("parameter rank")?;
            let shape = (0..ndim).map(|_| r.u32("parameter shape")).collect::<Result<Vec<_>, _>>()?;
            let data = r.floats(shape.iter().product(), "parameter payload")?;
            params.push(Param { name, group: g, shape, data });
        }
    }

    let n_bn = r.u32("norm layer count")?;
    let mut bn = Vec::with_capacity(n_bn);
    for _ in 0..n_bn {
        let name = r.str("norm layer name")?;
        let len = r.u32("norm layer size")?;
        let mean = r.floats(len, "running mean")?;
        let var = r.floats(len, "running variance")?;
        bn.push(BnStats { name, mean, var });
    }
    model.load_state(params, bn).map_err(CheckpointError::Malformed)?;

    let step_count = r.u64("optimizer step")?;
    let adam = AdamConfig { beta1: r.f64("optimizer beta1")?, beta2: r.f64("optimizer beta2")?, epsilon: r.f64("optimizer epsilon")? };
    let n = r.u32("optimizer size")?;
    if n != model.params().len() {
        return Err(CheckpointError::Malformed(format!("optimizer holds {n} buffers for {} parameters", model.params().len())));
    }
    let mut optimizer = AdamState::<T>::new(model.params().iter().map(|p| p.data.len()), adam);
    optimizer.step_count = step_count;
    for (i, p) in model.params().iter().enumerate() {
        let name = r.str("optimizer parameter name")?;
        let len = r.u32("optimizer buffer size")?;
        if name != p.name || len != p.data.len() {
            return Err(CheckpointError::Malformed(format!("optimizer buffer `{name}` does not match `{}`", p.name)));
        }
        optimizer.first_moment[i] = r.floats(len, "first moment")?;
        optimizer.second_moment[i] = r.floats(len, "second moment")?;
    }
    let epochs_completed = r.u64("epoch counter")? as usize;
    if !r.buf.is_empty() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(Checkpoint { model, optimizer, epochs_completed })
}

pub fn save_checkpoint<T: Scalar>(ck: &Checkpoint<T>, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(ck))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
