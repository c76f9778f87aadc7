//! Binary checkpoint format. All integers are little-endian `u32`, all
//! reals little-endian `f64`:
//!
//! ```text
//! magic      8 bytes  "IMPFGRU1"
//! version    u32      1
//! n_inputs   u32
//! n_outputs  u32
//! n_layers   u32
//! hidden     u32 x n_layers
//! tensors    f64 ...  per layer W (in x 3H), U (H x 3H), b (3H), row-major,
//!                     then head W (H x out) and head b (out)
//! has_scaler u8       0 or 1
//! scaler     f64 ...  input mean, input std, output mean, output std,
//!                     input min, input max (present iff has_scaler = 1)
//! ```

use std::path::Path;

use super::model::{Architecture, SurrogateModel};
use crate::dataset::{ScalerParams, N_INPUTS, N_OUTPUTS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IMPFGRU1";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(model: &SurrogateModel, scaler: Option<&ScalerParams>) -> Result<Vec<u8>> {
    let arch = model.architecture();
    let mut buf = Vec::with_capacity(32 + 8 * model.n_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, arch.n_inputs)?;
    put_u32(&mut buf, arch.n_outputs)?;
    put_u32(&mut buf, arch.hidden.len())?;
    for &h in &arch.hidden {
        put_u32(&mut buf, h)?;
    }
    for t in model.tensors() {
        put_f64s(&mut buf, t);
    }
    match scaler {
        Some(sc) => {
            if arch.n_inputs != N_INPUTS || arch.n_outputs != N_OUTPUTS {
                return Err(Error::Checkpoint(format!(
                    "scaler covers {N_INPUTS} inputs / {N_OUTPUTS} outputs, model has {} / {}",
                    arch.n_inputs, arch.n_outputs
                )));
            }
            buf.push(1);
            for block in [
                &sc.input_mean[..],
                &sc.input_std,
                &sc.output_mean,
                &sc.output_std,
                &sc.input_min,
                &sc.input_max,
            ] {
                put_f64s(&mut buf, block);
            }
        }
        None => buf.push(0),
    }
    Ok(buf)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("truncated at byte {} (need {n} more)", self.pos))
            })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, out: &mut [f64]) -> Result<()> {
        let raw = self.take(8 * out.len())?;
        for (o, chunk) in out.iter_mut().zip(raw.chunks_exact(8)) {
            *o = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(())
    }
}

pub fn from_bytes(data: &[u8]) -> Result<(SurrogateModel, Option<ScalerParams>)> {
    let mut r = Reader { data, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_inputs = r.u32()?;
    let n_outputs = r.u32()?;
    let n_layers = r.u32()?;
    if n_layers == 0 || n_layers > 64 {
        return Err(Error::Checkpoint(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let hidden = (0..n_layers).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let arch = Architecture {
        n_inputs,
        hidden,
        n_outputs,
    };
    if arch.param_count().saturating_mul(8) > data.len() {
        return Err(Error::Checkpoint(
            "file too short for its architecture".into(),
        ));
    }
    let mut model = SurrogateModel::zeros(&arch).map_err(|e| Error::Checkpoint(e.to_string()))?;
    for t in model.tensors_mut() {
        r.f64s(t)?;
    }
    let scaler = match r.take(1)?[0] {
        0 => None,
        1 => {
            let mut sc = ScalerParams::identity();
            r.f64s(&mut sc.input_mean)?;
            r.f64s(&mut sc.input_std)?;
            r.f64s(&mut sc.output_mean)?;
            r.f64s(&mut sc.output_std)?;
            r.f64s(&mut sc.input_min)?;
            r.f64s(&mut sc.input_max)?;
            Some(sc)
        }
        f => return Err(Error::Checkpoint(format!("bad scaler flag {f}"))),
    };
    if r.pos != data.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            data.len() - r.pos
        )));
    }
    Ok((model, scaler))
}

pub fn save(path: &Path, model: &SurrogateModel, scaler: Option<&ScalerParams>) -> Result<()> {
    crate::io::ensure_parent(path)?;
    std::fs::write(path, to_bytes(model, scaler)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(SurrogateModel, Option<ScalerParams>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            what: "checkpoint",
            path: path.to_path_buf(),
        });
    }
    from_bytes(&std::fs::read(path)?)
}
