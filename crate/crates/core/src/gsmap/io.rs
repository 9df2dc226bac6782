//! `LEGSMAP1` binary map files and their JSON provenance sidecar.
//!
//! Layout (little-endian): 16-byte magic (`LEGSMAP1` + 8 zero bytes),
//! `count: u64`, `feature_dim: u32`, then per primitive: mean `3×f64`,
//! scale `3×f64`, rotation `wxyz 4×f64`, opacity `f64`, color `3×f64`,
//! feature `feature_dim×f32`. An absent feature is written as zeros.

use std::path::{Path, PathBuf};

use super::map::{GaussianMap, MapProvenance};
use super::primitive::{feature_norm, GaussianPrimitive};
use crate::error::{Error, Result};
use crate::geometry::{RotationQuaternion, Vec3};
use crate::io::binary::{ByteReader, ByteWriter};

pub const MAP_MAGIC: &[u8; 8] = b"LEGSMAP1";

pub fn encode_map(map: &GaussianMap) -> Vec<u8> {
    let d = map.feature_dim();
    let mut w = ByteWriter::with_capacity(28 + map.len() * (14 * 8 + 4 * d));
    w.bytes(MAP_MAGIC);
    w.bytes(&[0u8; 8]);
    w.u64(map.len() as u64);
    w.u32(d as u32);
    for g in map.primitives() {
        for v in g.mean.iter().chain(g.scale.iter()) {
            w.f64(*v);
        }
        for v in g.rotation.to_array() {
            w.f64(v);
        }
        w.f64(g.opacity);
        for c in g.color {
            w.f64(c);
        }
        match &g.feature {
            Some(f) => f.iter().for_each(|&v| w.f32(v)),
            None => (0..d).for_each(|_| w.f32(0.0)),
        }
    }
    w.into_inner()
}

pub fn decode_map(bytes: &[u8], path: &Path) -> Result<GaussianMap> {
    let mut r = ByteReader::new(bytes, path);
    let magic = r.take(16)?;
    if &magic[..8] != MAP_MAGIC {
        return Err(Error::format(path, "missing LEGSMAP1 magic"));
    }
    let count = r.u64()? as usize;
    let d = r.u32()? as usize;
    let record = 14 * 8 + 4 * d;
    if r.remaining() != count.saturating_mul(record) {
        return Err(Error::format(path, format!("expected {count} records of {record} bytes, found {} bytes", r.remaining())));
    }
    let mut prims = Vec::with_capacity(count);
    for i in 0..count {
        let mean = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let scale = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let (qw, qx, qy, qz) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let opacity = r.f64()?;
        let color = [r.f64()?, r.f64()?, r.f64()?];
        let feature: Vec<f32> = (0..d).map(|_| r.f32()).collect::<Result<_>>()?;
        let rotation = RotationQuaternion::from_unit_wxyz(qw, qx, qy, qz).map_err(|e| Error::format(path, format!("record {i}: {e}")))?;
        let mut g = GaussianPrimitive::new(mean, scale, rotation, opacity, color).map_err(|e| Error::format(path, format!("record {i}: {e}")))?;
        if d > 0 && feature_norm(&feature) > 0.0 {
            g.feature = Some(feature);
        }
        prims.push(g);
    }
    GaussianMap::from_primitives(prims, d).map_err(|e| Error::format(path, e.to_string()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_map(map: &GaussianMap, path: &Path, provenance: &MapProvenance) -> Result<()> {
    std::fs::write(path, encode_map(map)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(provenance).expect("provenance serializes");
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(side, e))
}

pub fn load_map(path: &Path) -> Result<GaussianMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes, path)
}

pub fn load_provenance(path: &Path) -> Result<MapProvenance> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(side, e.to_string()))
}
