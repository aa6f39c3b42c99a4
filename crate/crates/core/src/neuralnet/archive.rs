//! Binary model archive.
//!
//! Little-endian layout: magic `DSL1`; architecture header (input_dim, h1,
//! h2, dense, class count as u32); dropout rates (f32 x 3); training seed
//! (u64); class-name table (count, then length-prefixed UTF-8); tensor
//! index (name, rank, dims, payload byte offset as u64); payload of IEEE
//! 754 32-bit floats, row-major. Values are widened back to f64 on load.

use std::fs;
use std::path::Path;

use crate::error::{DaselError, Result};
use crate::neuralnet::model::{ModelParams, DENSE_UNITS, GRU1_UNITS, GRU2_UNITS, INPUT_DIM};
use crate::neuralnet::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DSL1";

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(DaselError::format(self.path, "archive truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DaselError::format(self.path, "bad UTF-8 in archive"))
    }
}

/// Serializes a model. Tensor values are stored as f32.
pub fn save_model(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(INPUT_DIM as u32);
    w.u32(GRU1_UNITS as u32);
    w.u32(GRU2_UNITS as u32);
    w.u32(DENSE_UNITS as u32);
    w.u32(params.num_classes() as u32);
    for r in params.dropout_rates {
        w.f32(r as f32);
    }
    w.u64(params.seed);
    w.u32(params.classes.len() as u32);
    for c in &params.classes {
        w.str(c);
    }

    let tensors = params.tensors();
    w.u32(tensors.len() as u32);
    let mut offset = 0u64;
    for (name, t) in &tensors {
        w.str(name);
        w.u32(t.shape().len() as u32);
        for &d in t.shape() {
            w.u32(d as u32);
        }
        w.u64(offset);
        offset += (t.len() * 4) as u64;
    }
    for (_, t) in &tensors {
        for &v in t.data() {
            w.f32(v as f32);
        }
    }
    fs::write(path, w.buf).map_err(|e| DaselError::io(path, e))
}

/// Loads a model, validating magic, architecture, tensor names, shapes,
/// and payload bounds.
pub fn load_model(path: &Path) -> Result<ModelParams> {
    let buf = fs::read(path).map_err(|e| DaselError::io(path, e))?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(DaselError::format(
            path,
            "bad magic: not a DSL1 model archive (version mismatch?)",
        ));
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let expected = [INPUT_DIM, GRU1_UNITS, GRU2_UNITS, DENSE_UNITS];
    if dims != expected {
        return Err(DaselError::format(
            path,
            format!("architecture mismatch: header {dims:?}, expected {expected:?}"),
        ));
    }
    let c = r.u32()? as usize;
    let mut dropout_rates = [0.0f64; 3];
    for d in dropout_rates.iter_mut() {
        *d = r.f32()? as f64;
    }
    let seed = r.u64()?;
    let n_classes = r.u32()? as usize;
    if n_classes != c {
        return Err(DaselError::format(path, "class table length disagrees with header"));
    }
    let mut classes = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        classes.push(r.str()?);
    }
    if c < 2 {
        return Err(DaselError::format(path, "archive has fewer than 2 classes"));
    }

    let n_tensors = r.u32()? as usize;
    let mut index = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name = r.str()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let offset = r.u64()? as usize;
        index.push((name, shape, offset));
    }
    let payload = &buf[r.pos..];

    // Start from a zeroed parameter set with the right class count, then
    // overwrite every tensor from the payload.
    let mut params = zeroed_params(classes, dropout_rates, seed);
    let expected_names: Vec<&'static str> = params.tensors().iter().map(|(n, _)| *n).collect();
    if index.len() != expected_names.len() {
        return Err(DaselError::format(
            path,
            format!("expected {} tensors, archive has {}", expected_names.len(), index.len()),
        ));
    }
    for ((name, shape, offset), (expected_name, tensor)) in
        index.iter().zip(params.tensors_mut())
    {
        if name != expected_name {
            return Err(DaselError::format(
                path,
                format!("tensor {name:?} where {expected_name:?} expected"),
            ));
        }
        if shape != tensor.shape() {
            return Err(DaselError::format(
                path,
                format!("tensor {name}: shape {shape:?}, expected {:?}", tensor.shape()),
            ));
        }
        let byte_len = tensor.len() * 4;
        if offset + byte_len > payload.len() {
            return Err(DaselError::format(
                path,
                format!("tensor {name}: payload offset {offset} past end of file"),
            ));
        }
        for (i, v) in tensor.data_mut().iter_mut().enumerate() {
            let at = offset + i * 4;
            *v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap()) as f64;
        }
    }
    Ok(params)
}

fn zeroed_params(classes: Vec<String>, dropout_rates: [f64; 3], seed: u64) -> ModelParams {
    use crate::neuralnet::attention::AttentionParams;
    use crate::neuralnet::gru::BiGruParams;
    let c = classes.len();
    ModelParams {
        gru1: BiGruParams::zeros(INPUT_DIM, GRU1_UNITS),
        gru2: BiGruParams::zeros(2 * GRU1_UNITS, GRU2_UNITS),
        attn: AttentionParams::zeros(2 * GRU2_UNITS),
        dense_w: Tensor::zeros(&[2 * GRU2_UNITS, DENSE_UNITS]),
        dense_b: Tensor::zeros(&[DENSE_UNITS]),
        out_w: Tensor::zeros(&[DENSE_UNITS, c]),
        out_b: Tensor::zeros(&[c]),
        classes,
        dropout_rates,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelParams {
        let classes: Vec<String> = vec!["cafeteria".into(), "kitchen".into(), "nurse_station".into()];
        ModelParams::init(classes, 42).unwrap()
    }

    #[test]
    fn double_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.dsl1");
        let p2 = dir.path().join("m2.dsl1");
        let m = model();
        save_model(&m, &p1).unwrap();
        let loaded = load_model(&p1).unwrap();
        save_model(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        // And the reloaded parameters are exactly the stored ones.
        let reloaded = load_model(&p2).unwrap();
        assert_eq!(loaded, reloaded);
    }

    #[test]
    fn load_recovers_values_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dsl1");
        let m = model();
        save_model(&m, &p).unwrap();
        let loaded = load_model(&p).unwrap();
        assert_eq!(loaded.classes, m.classes);
        assert_eq!(loaded.seed, m.seed);
        for ((_, a), (_, b)) in m.tensors().iter().zip(loaded.tensors().iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert_eq!(*x as f32, *y as f32);
                assert!((x - y).abs() <= (x.abs() * 1e-7 + 1e-37));
            }
        }
    }

    #[test]
    fn wrong_magic_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.dsl1");
        fs::write(&p, b"NOPE----------------").unwrap();
        let err = load_model(&p).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn truncated_payload_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dsl1");
        save_model(&model(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 64]).unwrap();
        let err = load_model(&p).unwrap_err();
        assert!(err.to_string().contains("past end of file"), "{err}");
    }

    #[test]
    fn header_truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dsl1");
        save_model(&model(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..40]).unwrap();
        assert!(load_model(&p).is_err());
    }
}
