//! Little-endian binary checkpoints.
//!
//! ```text
//! "TFA1"  u32 count
//! count × { u32 name_len, name, u32 rank, rank × u64 dim, f64 values }
//! u64 adam_step
//! count × { f64 m, f64 v }
//! ```

use std::path::Path;

use crate::error::{Error, Result};

use super::params::{ModelParams, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TFA1";

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_values() * 24);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for e in &params.entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.tensor.shape.len() as u32).to_le_bytes());
        for &d in &e.tensor.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &e.tensor.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&params.step.to_le_bytes());
    for e in &params.entries {
        for v in e.m.iter().chain(&e.v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
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

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("length overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Decodes a checkpoint into a fresh store. Entries whose name ends in
/// `running_mean` or `running_var` are marked non-trainable.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not a TFA1 checkpoint".into()));
    }
    let count = r.u32()? as usize;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 3 {
            return Err(Error::Checkpoint(format!("`{name}` has rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let mut t = Tensor::zeros(&shape);
        t.value = r.f64s(t.len())?;
        let trainable = !(name.ends_with("running_mean") || name.ends_with("running_var"));
        params
            .insert(&name, t, trainable)
            .map_err(|_| Error::Checkpoint(format!("duplicate parameter `{name}`")))?;
    }
    params.step = r.u64()?;
    for e in &mut params.entries {
        let n = e.tensor.len();
        e.m = r.f64s(n)?;
        e.v = r.f64s(n)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Loads a checkpoint and checks it against `expected`: same parameter
/// names in the same order with the same shapes. Trainable flags are taken
/// from `expected`.
pub fn load_checkpoint(path: &Path, expected: &ModelParams) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let loaded = decode_checkpoint(&bytes)?;
    let mut out = expected.clone();
    for name in expected.names() {
        if loaded.get(name).is_none() {
            return Err(Error::Checkpoint(format!(
                "{}: missing parameter `{name}`",
                path.display()
            )));
        }
    }
    for name in loaded.names() {
        let src = loaded.get(name).expect("listed");
        let dst = out
            .get_mut(name)
            .ok_or_else(|| Error::Checkpoint(format!("{}: unexpected parameter `{name}`", path.display())))?;
        if dst.shape != src.shape {
            return Err(Error::Checkpoint(format!(
                "{}: `{name}` has shape {:?}, expected {:?}",
                path.display(),
                src.shape,
                dst.shape
            )));
        }
        dst.value.clone_from(&src.value);
        dst.grad.fill(0.0);
        let (m, v) = loaded.moments(name).expect("listed");
        out.set_moments(name, m.to_vec(), v.to_vec())?;
    }
    out.step = loaded.step;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{adam_step, init_params, AdamConfig, LayerSpec, Network};

    fn sample() -> ModelParams {
        let net = Network::new(
            "n",
            vec![
                LayerSpec::Affine { inputs: 3, outputs: 4 },
                LayerSpec::BatchNorm {
                    features: 4,
                    momentum: 0.9,
                },
            ],
        )
        .unwrap();
        let mut p = init_params(&[&net], 2).unwrap();
        let names: Vec<String> = p.names().map(String::from).collect();
        for n in &names {
            p.get_mut(n).unwrap().grad.fill(0.25);
        }
        adam_step(&mut p, &AdamConfig::with_lr(0.01), 1).unwrap();
        p.zero_grads();
        p
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..4], b"TFA1");
        assert_eq!(decode_checkpoint(&bytes).unwrap(), p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&path, &p).unwrap();
        assert_eq!(load_checkpoint(&path, &p).unwrap(), p);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = encode_checkpoint(&sample());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&path, &p).unwrap();
        let other = init_params(
            &[&Network::new("n", vec![LayerSpec::Affine { inputs: 5, outputs: 4 }]).unwrap()],
            0,
        )
        .unwrap();
        let err = load_checkpoint(&path, &other).unwrap_err();
        assert!(
            err.to_string().contains("n.0.weight") || err.to_string().contains("unexpected"),
            "{err}"
        );
    }
}
