//! `OCCGRID1` occupancy files.
//!
//! Layout (little-endian): magic `OCCGRID1`, origin `3×f64`, voxel size
//! `f64`, dims `3×u32`, `has_features: u8`, `feature_dim: u32`, occupancy
//! `N×f32` (x-fastest), labels `N×u8`, then if features are present
//! `count: u64` followed by `count × (index: u64, D×f32)`.

use std::path::Path;

use super::grid::{GridSpec, OccupancyField, VoxelFeatures};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io::binary::{ByteReader, ByteWriter};

pub const GRID_MAGIC: &[u8; 8] = b"OCCGRID1";

pub fn encode_field(f: &OccupancyField) -> Vec<u8> {
    let n = f.spec.len();
    let mut w = ByteWriter::with_capacity(53 + 5 * n);
    w.bytes(GRID_MAGIC);
    for v in f.spec.origin.iter() {
        w.f64(*v);
    }
    w.f64(f.spec.voxel_size);
    for d in f.spec.dims {
        w.u32(d);
    }
    w.u8(f.features.is_some() as u8);
    w.u32(f.features.as_ref().map_or(0, |x| x.dim as u32));
    for &o in &f.occupancy {
        w.f32(o);
    }
    w.bytes(&f.labels);
    if let Some(fs) = &f.features {
        w.u64(fs.entries.len() as u64);
        for (idx, v) in &fs.entries {
            w.u64(*idx);
            v.iter().for_each(|&x| w.f32(x));
        }
    }
    w.into_inner()
}

pub fn decode_field(bytes: &[u8], path: &Path) -> Result<OccupancyField> {
    let mut r = ByteReader::new(bytes, path);
    if r.take(8)? != GRID_MAGIC {
        return Err(Error::format(path, "missing OCCGRID1 magic"));
    }
    let origin = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
    let voxel_size = r.f64()?;
    let dims = [r.u32()?, r.u32()?, r.u32()?];
    let spec = GridSpec::new(origin, dims, voxel_size).map_err(|e| Error::format(path, e.to_string()))?;
    let has_features = r.u8()?;
    let dim = r.u32()? as usize;
    let n = spec.len();
    if r.remaining() < 5 * n {
        return Err(Error::format(path, "truncated rasters"));
    }
    let occupancy = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    let labels = r.take(n)?.to_vec();
    let features = match has_features {
        0 => None,
        1 => {
            let count = r.u64()? as usize;
            if r.remaining() != count.saturating_mul(8 + 4 * dim) {
                return Err(Error::format(path, "feature block size mismatch"));
            }
            let mut fs = VoxelFeatures { dim, ..Default::default() };
            for _ in 0..count {
                let idx = r.u64()?;
                let v = (0..dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
                fs.entries.insert(idx, v);
            }
            Some(fs)
        }
        b => return Err(Error::format(path, format!("bad has_features flag {b}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::format(path, "trailing bytes"));
    }
    let field = OccupancyField {
        spec,
        occupancy,
        labels,
        features,
    };
    field.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(field)
}

pub fn save_field(f: &OccupancyField, path: &Path) -> Result<()> {
    std::fs::write(path, encode_field(f)).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: &Path) -> Result<OccupancyField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(nx in 1u32..5, ny in 1u32..5, nz in 1u32..5, seed in 0u64..1000, with_f in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spec = GridSpec::new(Vec3::new(rng.random(), -1.5, 0.25), [nx, ny, nz], 0.08).unwrap();
            let n = spec.len();
            let mut f = OccupancyField::empty(spec);
            for i in 0..n {
                f.occupancy[i] = rng.random::<f32>();
                f.labels[i] = rng.random_range(0..=255);
            }
            if with_f {
                let mut fs = VoxelFeatures { dim: 3, ..Default::default() };
                for i in (0..n).step_by(2) {
                    fs.entries.insert(i as u64, vec![rng.random(), rng.random(), rng.random()]);
                }
                f.features = Some(fs);
            }
            let back = decode_field(&encode_field(&f), Path::new("x")).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn rejects_corruption() {
        let f = OccupancyField::empty(GridSpec::new(Vec3::zeros(), [2, 2, 2], 0.1).unwrap());
        let mut b = encode_field(&f);
        assert!(decode_field(&b[..b.len() - 1], Path::new("x")).is_err());
        b[0] = b'X';
        assert!(decode_field(&b, Path::new("x")).is_err());
    }
}
