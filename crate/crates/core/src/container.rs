//! On-disk cube container: a directory holding `meta.json` and `data.f32`
//! (raw little-endian float32, band-sequential, row-major within a band).

use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::datamodel::{HsiCube, PanImage};
use crate::error::{CoreError, Result};

pub const META_FILE: &str = "meta.json";
pub const DATA_FILE: &str = "data.f32";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeMeta {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub value_range: [f32; 2],
    pub dataset_name: String,
}

impl CubeMeta {
    pub fn for_cube(cube: &HsiCube, dataset_name: &str) -> Self {
        Self {
            bands: cube.bands(),
            height: cube.height(),
            width: cube.width(),
            dtype: "float32".into(),
            byte_order: "little-endian".into(),
            layout: "band-sequential".into(),
            value_range: cube.value_range(),
            dataset_name: dataset_name.into(),
        }
    }

    pub fn payload_len(&self) -> u64 {
        (self.bands * self.height * self.width * 4) as u64
    }
}

/// Serialize the cube values in container byte order.
pub fn encode_payload(cube: &HsiCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_cube(cube: &HsiCube, dir: &Path, dataset_name: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = CubeMeta::for_cube(cube, dataset_name);
    fs::write(dir.join(DATA_FILE), encode_payload(cube))?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<CubeMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path)?;
    let meta: CubeMeta =
        serde_json::from_str(&text).map_err(|e| CoreError::CorruptHeader { path: path.clone(), reason: e.to_string() })?;
    if meta.dtype != "float32" || meta.byte_order != "little-endian" || meta.layout != "band-sequential" {
        return Err(CoreError::UnsupportedDtype(format!("{}/{}/{}", meta.dtype, meta.byte_order, meta.layout)));
    }
    if meta.bands == 0 || meta.height == 0 || meta.width == 0 {
        return Err(CoreError::CorruptHeader { path, reason: "zero dimension".into() });
    }
    Ok(meta)
}

pub fn read_cube(dir: &Path) -> Result<(HsiCube, CubeMeta)> {
    let meta = read_meta(dir)?;
    let path = dir.join(DATA_FILE);
    let bytes = fs::read(&path)?;
    if bytes.len() as u64 != meta.payload_len() {
        return Err(CoreError::PayloadSizeMismatch { path, expected: meta.payload_len(), found: bytes.len() as u64 });
    }
    let values: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let data = Array3::from_shape_vec((meta.bands, meta.height, meta.width), values).expect("size checked");
    let cube = HsiCube::with_range(data, meta.value_range)?;
    Ok((cube, meta))
}

pub fn write_pan(pan: &PanImage, dir: &Path, dataset_name: &str) -> Result<()> {
    write_cube(&pan.as_cube(), dir, dataset_name)
}

pub fn read_pan(dir: &Path) -> Result<PanImage> {
    let (cube, _) = read_cube(dir)?;
    PanImage::from_cube(&cube)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn payload_is_band_sequential_row_major() {
        let cube = HsiCube::with_range(Array3::from_shape_vec((1, 2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap(), [0.0, 3.0])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_cube(&cube, dir.path(), "t").unwrap();
        let bytes = fs::read(dir.path().join(DATA_FILE)).unwrap();
        // independent scalar decode
        let mut decoded = Vec::new();
        for i in 0..bytes.len() / 4 {
            let bits = u32::from(bytes[4 * i])
                | u32::from(bytes[4 * i + 1]) << 8
                | u32::from(bytes[4 * i + 2]) << 16
                | u32::from(bytes[4 * i + 3]) << 24;
            decoded.push(f32::from_bits(bits));
        }
        assert_eq!(decoded, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn large_round_trip_and_truncation() {
        let cube = HsiCube::from_fn((102, 160, 160), |(b, r, c)| ((b * 7 + r * 3 + c) % 101) as f32 / 100.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_cube(&cube, dir.path(), "pavia").unwrap();
        let (back, meta) = read_cube(dir.path()).unwrap();
        assert_eq!(back, cube);
        assert_eq!(meta.dataset_name, "pavia");

        let path = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cube(dir.path()), Err(CoreError::PayloadSizeMismatch { .. })));
    }

    #[test]
    fn rejects_bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HsiCube::filled((1, 1, 1), 0.0).unwrap();
        write_cube(&cube, dir.path(), "t").unwrap();
        fs::write(dir.path().join(META_FILE), "{ not json").unwrap();
        assert!(matches!(read_cube(dir.path()), Err(CoreError::CorruptHeader { .. })));
        let mut meta = CubeMeta::for_cube(&cube, "t");
        meta.dtype = "float64".into();
        fs::write(dir.path().join(META_FILE), serde_json::to_string(&meta).unwrap()).unwrap();
        assert!(matches!(read_cube(dir.path()), Err(CoreError::UnsupportedDtype(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn round_trip_is_bit_exact(l in 1usize..5, h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
            let mut state = seed | 1;
            let cube = HsiCube::with_range(
                Array3::from_shape_fn((l, h, w), |_| {
                    state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                    f32::from_bits((state as u32) & 0x3fff_ffff)
                }),
                [0.0, 2.0],
            ).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_cube(&cube, dir.path(), "p").unwrap();
            let (back, _) = read_cube(dir.path()).unwrap();
            let a: Vec<u32> = cube.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
