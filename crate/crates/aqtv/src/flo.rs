//! Middlebury `.flo` flow files.

use std::fs;
use std::path::Path;

use aqtv_core::metrics::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;

#[derive(Debug, thiserror::Error)]
pub enum FloError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic number {0}")]
    Magic(f32),
    #[error("invalid size {width}x{height}")]
    Size { width: i32, height: i32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

fn f32_at(b: &[u8], i: usize) -> f32 {
    f32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes a `.flo` byte stream. Values above the unknown threshold are kept
/// as they are.
pub fn decode_flo(bytes: &[u8]) -> Result<FlowField, FloError> {
    if bytes.len() < 12 {
        return Err(FloError::Truncated { expected: 12, found: bytes.len() });
    }
    let magic = f32_at(bytes, 0);
    if magic != FLO_MAGIC {
        return Err(FloError::Magic(magic));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(FloError::Size { width, height });
    }
    let n = width as usize * height as usize;
    let expected = 12 + 8 * n;
    if bytes.len() < expected {
        return Err(FloError::Truncated { expected, found: bytes.len() });
    }
    let data = (0..n).map(|k| [f32_at(bytes, 12 + 8 * k) as f64, f32_at(bytes, 16 + 8 * k) as f64]).collect();
    Ok(FlowField::new(width as usize, height as usize, data))
}

/// Encodes as `f32`; values are rounded to single precision.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.data().len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for p in flow.data() {
        out.extend_from_slice(&(p[0] as f32).to_le_bytes());
        out.extend_from_slice(&(p[1] as f32).to_le_bytes());
    }
    out
}

pub fn read_flo(path: &Path) -> Result<FlowField, FloError> {
    decode_flo(&fs::read(path)?)
}

pub fn write_flo(flow: &FlowField, path: &Path) -> Result<(), FloError> {
    fs::write(path, encode_flo(flow))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use aqtv_core::metrics::is_unknown;

    #[test]
    fn single_vector_round_trip() {
        let f = FlowField::new(1, 1, vec![[1.5, -2.0]]);
        let bytes = encode_flo(&f);
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], &[0x50, 0x49, 0x45, 0x48]);
        assert_eq!(decode_flo(&bytes).unwrap(), f);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let mut bytes = encode_flo(&FlowField::zeros(2, 2));
        bytes[0] ^= 1;
        assert!(matches!(decode_flo(&bytes), Err(FloError::Magic(_))));
        let bytes = encode_flo(&FlowField::zeros(2, 2));
        assert!(matches!(decode_flo(&bytes[..30]), Err(FloError::Truncated { expected: 44, found: 30 })));
        let mut bad = bytes.clone();
        bad[4..8].copy_from_slice(&(-1i32).to_le_bytes());
        assert!(matches!(decode_flo(&bad), Err(FloError::Size { .. })));
    }

    #[test]
    fn unknown_sentinel_survives() {
        let f = FlowField::new(2, 1, vec![[1e10, 1e10], [0.25, 0.0]]);
        let back = decode_flo(&encode_flo(&f)).unwrap();
        assert!(is_unknown(back.get(0, 0)));
        assert!(!is_unknown(back.get(1, 0)));
    }
}
