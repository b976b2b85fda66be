//! Binary checkpoint format.
//!
//! Little-endian: magic `WSPL`, `u32` version, `u64` primitive count, `u8`
//! NIR flag, then positions, log-scales, rotations, opacity logits, RGB
//! colours and (when flagged) NIR intensities, each as `f32`.

use std::io::{Read, Write};
use std::path::Path;

use super::cloud::GaussianCloud;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WSPL";
pub const VERSION: u32 = 1;

pub fn encode(cloud: &GaussianCloud) -> Vec<u8> {
    let n = cloud.len();
    let mut buf = Vec::with_capacity(17 + n * 4 * 15);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.push(cloud.has_nir() as u8);
    let mut put = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
    cloud.positions.iter().flatten().for_each(|&v| put(v));
    cloud.log_scales.iter().flatten().for_each(|&v| put(v));
    cloud.rotations.iter().flatten().for_each(|&v| put(v));
    cloud.opacity_logits.iter().for_each(|&v| put(v));
    cloud.rgb_colors.iter().flatten().for_each(|&v| put(v));
    if let Some(nir) = &cloud.nir_intensities {
        nir.iter().for_each(|&v| put(v));
    }
    buf
}

pub fn decode(mut bytes: &[u8]) -> Result<GaussianCloud> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut header = [0u8; 17];
    bytes
        .read_exact(&mut header)
        .map_err(|_| bad("truncated header"))?;
    if &header[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let has_nir = match header[16] {
        0 => false,
        1 => true,
        _ => return Err(bad("bad nir flag")),
    };
    let expected = n
        .checked_mul(if has_nir { 15 } else { 14 } * 4)
        .ok_or_else(|| bad("count overflow"))?;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {expected} payload bytes, found {}",
            bytes.len()
        )));
    }
    let mut vals = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut take = |k: usize| -> Vec<f64> { vals.by_ref().take(k).collect() };
    let arr3 = |v: Vec<f64>| {
        v.chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect::<Vec<_>>()
    };
    let positions = arr3(take(3 * n));
    let log_scales = arr3(take(3 * n));
    let rotations = take(4 * n)
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();
    let opacity_logits = take(n);
    let rgb_colors = arr3(take(3 * n));
    let nir_intensities = has_nir.then(|| take(n));
    Ok(GaussianCloud {
        positions,
        log_scales,
        rotations,
        opacity_logits,
        rgb_colors,
        nir_intensities,
    })
}

pub fn save(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(cloud))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode(&std::fs::read(path)?)
}

/// Rounds every parameter through `f32`, i.e. what a save/load cycle yields.
pub fn quantize(cloud: &GaussianCloud) -> GaussianCloud {
    decode(&encode(cloud)).expect("encode produces a valid checkpoint")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let cloud = GaussianCloud {
            positions: vec![[1.0, 2.0, 3.0]],
            log_scales: vec![[0.0; 3]],
            rotations: vec![[1.0, 0.0, 0.0, 0.0]],
            opacity_logits: vec![0.5],
            rgb_colors: vec![[0.25; 3]],
            nir_intensities: Some(vec![0.75]),
        };
        let bytes = encode(&cloud);
        assert_eq!(&bytes[0..4], b"WSPL");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(bytes[16], 1);
        assert_eq!(bytes.len(), 17 + 15 * 4);
        assert_eq!(f32::from_le_bytes(bytes[17..21].try_into().unwrap()), 1.0);
        assert_eq!(
            f32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap()),
            0.75
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"WSPX").is_err());
        let mut bytes = encode(&GaussianCloud::default());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
        let mut bytes = encode(&GaussianCloud::default());
        bytes.push(0);
        assert!(decode(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn f32_round_trip(vals in prop::collection::vec(-10.0f32..10.0, 15 * 3), nir in any::<bool>()) {
            let v: Vec<f64> = vals.iter().map(|&x| x as f64).collect();
            let n = 3;
            let cloud = GaussianCloud {
                positions: (0..n).map(|i| [v[i * 3], v[i * 3 + 1], v[i * 3 + 2]]).collect(),
                log_scales: (0..n).map(|i| [v[9 + i * 3], v[10 + i * 3], v[11 + i * 3]]).collect(),
                rotations: (0..n).map(|i| [v[18 + i * 4], v[19 + i * 4], v[20 + i * 4], v[21 + i * 4]]).collect(),
                opacity_logits: v[30..33].to_vec(),
                rgb_colors: (0..n).map(|i| [v[33 + i * 3], v[34 + i * 3], v[35 + i * 3]]).collect(),
                nir_intensities: nir.then(|| v[42..45].to_vec()),
            };
            prop_assert_eq!(decode(&encode(&cloud)).unwrap(), cloud);
        }
    }
}
