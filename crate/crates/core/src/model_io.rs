//! Binary container for fitted factor models.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "PRMF0001"
//! users        u64
//! items        u64
//! latent_dim   u64
//! components   u64      0 means no mixture block follows
//! u_factors    users * latent_dim f64, row-major
//! v_factors    items * latent_dim f64, row-major
//! mix_weights  components f64
//! variances    components f64
//! ```
//!
//! Values round-trip bit-exactly. Trailing bytes after the payload are a
//! format error, as are non-finite values in either direction.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::baseline::MFModel;
use crate::error::{Error, Result};
use crate::mog::MoGMFModel;

const MAGIC: &[u8; 8] = b"PRMF0001";

/// Caps factor allocation when reading, so a corrupted header cannot ask
/// for an absurd amount of memory.
const MAX_ELEMENTS: u64 = 1 << 27;

/// Mixture block of a stored model.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mix_weights: Vec<f64>,
    pub variances: Vec<f64>,
}

/// On-disk model: factors plus an optional mixture block.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub u_factors: Array2<f64>,
    pub v_factors: Array2<f64>,
    pub mixture: Option<Mixture>,
}

impl StoredModel {
    #[must_use]
    pub fn from_mog(model: &MoGMFModel) -> Self {
        Self {
            u_factors: model.u_factors.clone(),
            v_factors: model.v_factors.clone(),
            mixture: Some(Mixture {
                mix_weights: model.mix_weights.clone(),
                variances: model.variances.clone(),
            }),
        }
    }

    #[must_use]
    pub fn from_mf(model: &MFModel) -> Self {
        Self {
            u_factors: model.u_factors.clone(),
            v_factors: model.v_factors.clone(),
            mixture: None,
        }
    }

    pub fn into_mog(self) -> Result<MoGMFModel> {
        match self.mixture {
            Some(mix) => Ok(MoGMFModel {
                u_factors: self.u_factors,
                v_factors: self.v_factors,
                mix_weights: mix.mix_weights,
                variances: mix.variances,
            }),
            None => Err(Error::ModelFormat("model has no mixture block".into())),
        }
    }

    #[must_use]
    pub fn into_mf(self) -> MFModel {
        MFModel { u_factors: self.u_factors, v_factors: self.v_factors }
    }

    fn validate(&self) -> Result<()> {
        if self.u_factors.nrows() == 0 || self.v_factors.nrows() == 0 {
            return Err(Error::ModelFormat("factor matrices must have rows".into()));
        }
        let d = self.u_factors.ncols();
        if d == 0 || self.v_factors.ncols() != d {
            return Err(Error::ModelFormat(format!(
                "latent dimensions differ: {} vs {}",
                d,
                self.v_factors.ncols()
            )));
        }
        if self.u_factors.iter().chain(self.v_factors.iter()).any(|x| !x.is_finite()) {
            return Err(Error::ModelFormat("non-finite factor value".into()));
        }
        if let Some(mix) = &self.mixture {
            if mix.mix_weights.is_empty() || mix.mix_weights.len() != mix.variances.len() {
                return Err(Error::ModelFormat(format!(
                    "mixture block sizes differ: {} weights vs {} variances",
                    mix.mix_weights.len(),
                    mix.variances.len()
                )));
            }
            if mix.mix_weights.iter().chain(mix.variances.iter()).any(|x| !x.is_finite()) {
                return Err(Error::ModelFormat("non-finite mixture value".into()));
            }
        }
        Ok(())
    }
}

pub fn write_model(w: &mut impl Write, model: &StoredModel) -> Result<()> {
    model.validate()?;
    w.write_all(MAGIC)?;
    let components = model.mixture.as_ref().map_or(0, |m| m.mix_weights.len());
    for dim in [
        model.u_factors.nrows() as u64,
        model.v_factors.nrows() as u64,
        model.u_factors.ncols() as u64,
        components as u64,
    ] {
        w.write_all(&dim.to_le_bytes())?;
    }
    write_floats(w, model.u_factors.iter())?;
    write_floats(w, model.v_factors.iter())?;
    if let Some(mix) = &model.mixture {
        write_floats(w, mix.mix_weights.iter())?;
        write_floats(w, mix.variances.iter())?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<StoredModel> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat(format!("bad magic {magic:02x?}")));
    }
    let users = read_u64(r)?;
    let items = read_u64(r)?;
    let latent_dim = read_u64(r)?;
    let components = read_u64(r)?;
    if users == 0 || items == 0 || latent_dim == 0 {
        return Err(Error::ModelFormat(format!(
            "degenerate dimensions {users} x {items} x {latent_dim}"
        )));
    }
    for (label, rows) in [("u factors", users), ("v factors", items)] {
        match rows.checked_mul(latent_dim) {
            Some(count) if count <= MAX_ELEMENTS => {}
            _ => {
                return Err(Error::ModelFormat(format!(
                    "{label} block too large: {rows} x {latent_dim} elements"
                )));
            }
        }
    }
    if components > MAX_ELEMENTS {
        return Err(Error::ModelFormat(format!("mixture block too large: {components}")));
    }

    let u_factors = read_matrix(r, users as usize, latent_dim as usize)?;
    let v_factors = read_matrix(r, items as usize, latent_dim as usize)?;
    let mixture = if components == 0 {
        None
    } else {
        let mix_weights = read_floats(r, components as usize)?;
        let variances = read_floats(r, components as usize)?;
        Some(Mixture { mix_weights, variances })
    };

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => {}
        _ => return Err(Error::ModelFormat("trailing bytes after model payload".into())),
    }

    let model = StoredModel { u_factors, v_factors, mixture };
    model.validate()?;
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &StoredModel) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(&mut file, model)?;
    file.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StoredModel> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_model(&mut file)
}

fn write_floats<'a>(w: &mut impl Write, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::ModelFormat("truncated model file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_floats(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let data = read_floats(r, rows * cols)?;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::ModelFormat(format!("factor block shape: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample_model(seed: u64, with_mixture: bool) -> StoredModel {
        let mut rng = crate::seeds::rng(seed, &[1]);
        let u: Vec<f64> = (0..6 * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..5 * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        StoredModel {
            u_factors: Array2::from_shape_vec((6, 3), u).unwrap(),
            v_factors: Array2::from_shape_vec((5, 3), v).unwrap(),
            mixture: with_mixture.then(|| Mixture {
                mix_weights: vec![0.25, 0.35, 0.4],
                variances: vec![0.01, 1.5, 40.0],
            }),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for with_mixture in [false, true] {
            let model = sample_model(11, with_mixture);
            let mut buf = Vec::new();
            write_model(&mut buf, &model).unwrap();
            let back = read_model(&mut buf.as_slice()).unwrap();
            assert_eq!(model, back);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = sample_model(3, true);
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn rejects_bad_magic() {
        let model = sample_model(1, false);
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        buf[0] ^= 0xff;
        match read_model(&mut buf.as_slice()) {
            Err(Error::ModelFormat(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_and_trailing() {
        let model = sample_model(2, true);
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();

        let cut = &buf[..buf.len() - 4];
        assert!(matches!(read_model(&mut &*cut), Err(Error::ModelFormat(_))));

        let mut extended = buf.clone();
        extended.push(0);
        assert!(matches!(read_model(&mut extended.as_slice()), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn rejects_oversized_header() {
        let model = sample_model(4, false);
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        // Corrupt the user count to something absurd.
        buf[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(read_model(&mut buf.as_slice()), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn rejects_non_finite_values() {
        let mut model = sample_model(5, false);
        model.u_factors[(0, 0)] = f64::NAN;
        let mut buf = Vec::new();
        assert!(matches!(write_model(&mut buf, &model), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn mog_conversion_round_trip() {
        let stored = sample_model(6, true);
        let mog = stored.clone().into_mog().unwrap();
        let back = StoredModel::from_mog(&mog);
        assert_eq!(stored, back);

        let plain = sample_model(7, false);
        assert!(plain.into_mog().is_err());
    }
}
