//! Model checkpoint files.
//!
//! Little-endian layout:
//!
//! | field                     | type                 |
//! |---------------------------|----------------------|
//! | magic `GCSILSTM`          | 8 bytes              |
//! | version (1)               | u32                  |
//! | hidden size N             | u64                  |
//! | input dimension           | u64                  |
//! | output dimension          | u64                  |
//! | normalization dimension D | u64                  |
//! | normalization means       | D x f64              |
//! | normalization scales      | D x f64              |
//! | parameter count P         | u64                  |
//! | parameters                | P x f64              |
//!
//! Parameters follow the tensor order `W_x, W_h, b, W_fc, b_fc, W_y, b_y`
//! with row-major matrices and gate blocks ordered input, forget, cell
//! candidate, output. Values are stored as raw IEEE-754 bits, so a round
//! trip is bit-exact.

use std::io::{Read, Write};

use super::lstm::{Layout, LstmModel, Normalization};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GCSILSTM";
const VERSION: u32 = 1;

pub fn save_model<W: Write>(w: &mut W, model: &LstmModel) -> Result<()> {
    let l = &model.layout;
    let mut buf = Vec::with_capacity(64 + 8 * model.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [l.hidden, l.input_dim, l.output_dim, model.normalization.dim()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in model.normalization.mean.iter().chain(&model.normalization.scale) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for v in &model.params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))).collect()
    }
}

pub fn load_model<R: Read>(r: &mut R) -> Result<LstmModel> {
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;
    let mut c = Cursor(&all);
    if c.bytes(8)? != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(c.bytes(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let layout = Layout {
        hidden: c.u64()? as usize,
        input_dim: c.u64()? as usize,
        output_dim: c.u64()? as usize,
    };
    let d = c.u64()? as usize;
    if d > 1 << 20 || layout.hidden > 1 << 20 || layout.input_dim > 1 << 20 {
        return Err(Error::Format("implausible checkpoint dimensions".into()));
    }
    let mean = c.f64s(d)?;
    let scale = c.f64s(d)?;
    let p = c.u64()? as usize;
    if p != layout.len() {
        return Err(Error::Format(format!("{p} parameters stored, layout needs {}", layout.len())));
    }
    let params = c.f64s(p)?;
    if !c.0.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(LstmModel { layout, params, normalization: Normalization { mean, scale } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = LstmModel::init(7, 2, Normalization { mean: vec![0.1, 1e-300], scale: vec![3.3, 0.7] }, 5).unwrap();
        m.params[0] = -0.0;
        m.params[1] = f64::MIN_POSITIVE / 3.0;
        let mut buf = Vec::new();
        save_model(&mut buf, &m).unwrap();
        let back = load_model(&mut buf.as_slice()).unwrap();
        assert_eq!(back.layout, m.layout);
        assert_eq!(back.normalization, m.normalization);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&m.params));
    }

    #[test]
    fn rejects_damaged_files() {
        let m = LstmModel::init(3, 2, Normalization::identity(2), 1).unwrap();
        let mut buf = Vec::new();
        save_model(&mut buf, &m).unwrap();
        assert!(load_model(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(load_model(&mut bad.as_slice()), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(load_model(&mut long.as_slice()).is_err());
    }
}
