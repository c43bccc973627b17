//! Versioned little-endian binary snapshot of config, vocabulary and parameters.
//!
//! Layout: magic, version, six u32 config fields (vocab, d_model, layers, heads, d_ff,
//! context), u64 step counter, vocabulary strings, then named f64 tensors.
//! Optimizer moments are not stored.

use super::model::{ModelConfig, ModelHandle};
use super::vocab::Vocab;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ENTUNLRN";
const VERSION: u32 = 1;

pub fn snapshot(model: &ModelHandle) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.params.len() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let c = &model.config;
    for v in [
        model.vocab_size(),
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.d_ff,
        c.context_length,
    ] {
        put_u32(&mut out, v as u32);
    }
    out.extend_from_slice(&model.step_counter.to_le_bytes());
    put_u32(&mut out, model.vocab.len() as u32);
    for t in model.vocab.tokens() {
        put_str(&mut out, t);
    }
    let layout = model.layout();
    put_u32(&mut out, layout.tensors.len() as u32);
    for spec in &layout.tensors {
        put_str(&mut out, &spec.name);
        put_u32(&mut out, spec.shape.len() as u32);
        for &d in &spec.shape {
            put_u32(&mut out, d as u32);
        }
        for p in &model.params[spec.range()] {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

pub fn restore(bytes: &[u8]) -> Result<ModelHandle> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let [vocab_size, d_model, n_layers, n_heads, d_ff, context_length] = dims;
    let config = ModelConfig {
        d_model,
        n_layers,
        n_heads,
        d_ff,
        context_length,
    };
    config.validate().map_err(|e| Error::Snapshot(e.to_string()))?;
    let step_counter = r.u64()?;
    let n_tokens = r.u32()? as usize;
    if n_tokens != vocab_size {
        return Err(Error::Snapshot(format!(
            "vocabulary has {n_tokens} tokens, header says {vocab_size}"
        )));
    }
    let mut tokens = Vec::with_capacity(n_tokens.min(1 << 20));
    for _ in 0..n_tokens {
        tokens.push(r.string()?);
    }
    let vocab = Vocab::from_tokens(tokens).map_err(|e| Error::Snapshot(e.to_string()))?;
    let layout = super::model::Layout::new(&config, vocab.len());
    let n_tensors = r.u32()? as usize;
    if n_tensors != layout.tensors.len() {
        return Err(Error::Snapshot(format!(
            "expected {} tensors, found {n_tensors}",
            layout.tensors.len()
        )));
    }
    let mut params = vec![0.0; layout.total];
    for spec in &layout.tensors {
        let name = r.string()?;
        if name != spec.name {
            return Err(Error::Snapshot(format!(
                "expected tensor `{}`, found `{name}`",
                spec.name
            )));
        }
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        if shape != spec.shape {
            return Err(Error::Snapshot(format!(
                "tensor `{name}` has shape {shape:?}, expected {:?}",
                spec.shape
            )));
        }
        for p in &mut params[spec.range()] {
            *p = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Snapshot(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    ModelHandle::from_parts(config, vocab, params, step_counter)
}

impl ModelHandle {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path.as_ref(), snapshot(self)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path, e))?;
        restore(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Snapshot(format!("truncated: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Snapshot("invalid utf-8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::model::tests::tiny;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = tiny();
        m.step_counter = 17;
        let bytes = snapshot(&m);
        let back = restore(&bytes).unwrap();
        assert_eq!(back.checksum(), m.checksum());
        assert_eq!(back.step_counter, 17);
        assert_eq!(back.vocab, m.vocab);
        assert_eq!(back.config, m.config);
        assert_eq!(snapshot(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = snapshot(&tiny());
        assert!(restore(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(restore(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(restore(&bad).is_err());
        assert!(restore(&[]).is_err());
    }
}
