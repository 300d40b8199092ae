//! Versioned, byte-exact parameter serialization.
//!
//! Layout (little-endian): 4-byte magic, u32 format version, embedded
//! growth state, u32 parameter count, a manifest of (name, shape)
//! entries, then the payload: every parameter's values as 32-bit floats
//! in manifest order. Loading validates lengths up front and reports the
//! byte offset of any truncation or corruption.

use std::path::Path;

use crate::error::{Error, Result};
use crate::progan::{GrowthState, Phase};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"GANC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub struct Checkpoint {
    pub growth_state: GrowthState,
    /// Parameters in manifest order.
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }
}

/// Fills every parameter a network visitor exposes from the checkpoint,
/// shape-checked. Checkpoint entries the visitor never asks for are
/// ignored, so one file can carry several networks.
pub fn assign_params<F>(ckpt: &Checkpoint, visit: F) -> Result<()>
where
    F: FnOnce(&mut dyn FnMut(String, &mut Tensor<f32>)),
{
    let mut missing = Vec::new();
    let mut mismatched = Vec::new();
    visit(&mut |name, param| match ckpt.get(&name) {
        Some(stored) if stored.shape() == param.shape() => {
            *param = stored.detach_requiring_grad();
        }
        Some(stored) => mismatched.push(format!(
            "{name}: checkpoint {:?} vs network {:?}",
            stored.shape(),
            param.shape()
        )),
        None => missing.push(name),
    });
    if !missing.is_empty() || !mismatched.is_empty() {
        return Err(Error::Checkpoint {
            message: format!(
                "parameter set mismatch; missing: [{}], shape conflicts: [{}]",
                missing.join(", "),
                mismatched.join("; ")
            ),
            offset: 0,
        });
    }
    Ok(())
}

pub fn save_checkpoint(
    params: &[(String, Tensor<f32>)],
    state: &GrowthState,
    path: &Path,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(state.stage as u32).to_le_bytes());
    buf.extend_from_slice(&(state.resolution as u32).to_le_bytes());
    buf.extend_from_slice(&state.alpha.to_bits().to_le_bytes());
    buf.extend_from_slice(&(state.epochs_in_stage as u32).to_le_bytes());
    buf.push(match state.phase {
        Phase::Fading => 0,
        Phase::Stable => 1,
    });
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Checkpoint {
                message: format!("parameter name too long: {name}"),
                offset: buf.len() as u64,
            });
        }
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(tensor.rank() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, tensor) in params {
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint {
                message: format!(
                    "unexpected end of file reading {what}: wanted {n} bytes, {} left",
                    self.buf.len() - self.pos
                ),
                offset: self.pos as u64,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };

    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint {
            message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
            offset: 0,
        });
    }
    let version = r.u32("format version")?;
    if version > FORMAT_VERSION {
        return Err(Error::Checkpoint {
            message: format!(
                "format version {version} is newer than supported {FORMAT_VERSION}; \
                 upgrade this tool to read it"
            ),
            offset: 4,
        });
    }
    let stage = r.u32("growth stage")? as usize;
    let resolution = r.u32("resolution")? as usize;
    let alpha = f64::from_bits(r.u64("alpha")?);
    let epochs_in_stage = r.u32("epochs in stage")? as usize;
    let phase = match r.u8("phase")? {
        0 => Phase::Fading,
        1 => Phase::Stable,
        other => {
            return Err(Error::Checkpoint {
                message: format!("unknown phase tag {other}"),
                offset: (r.pos - 1) as u64,
            })
        }
    };
    let growth_state = GrowthState {
        stage,
        resolution,
        alpha,
        epochs_in_stage,
        phase,
    };

    let count = r.u32("parameter count")? as usize;
    let mut manifest = Vec::with_capacity(count);
    for i in 0..count {
        let name_len = r.u16(&format!("name length of parameter {i}"))? as usize;
        let name_bytes = r.take(name_len, &format!("name of parameter {i}"))?;
        let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| Error::Checkpoint {
            message: format!("parameter {i} name is not utf-8"),
            offset: (r.pos - name_len) as u64,
        })?;
        let rank = r.u8(&format!("rank of {name}"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(&format!("shape of {name}"))? as usize);
        }
        manifest.push((name, shape));
    }

    let expected_payload: usize = manifest
        .iter()
        .map(|(_, s)| s.iter().product::<usize>() * 4)
        .sum();
    let remaining = buf.len() - r.pos;
    if remaining != expected_payload {
        return Err(Error::Checkpoint {
            message: format!(
                "payload length mismatch: manifest wants {expected_payload} bytes, file has \
                 {remaining}"
            ),
            offset: r.pos as u64,
        });
    }

    let mut params = Vec::with_capacity(count);
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let bytes = r.take(n * 4, &format!("payload of {name}"))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push((name, Tensor::from_vec(data, &shape)?));
    }
    Ok(Checkpoint {
        growth_state,
        params,
    })
}
