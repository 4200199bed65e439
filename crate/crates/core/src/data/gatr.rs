//! GATR: a small lossless container for signed attribution grids.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "GATR"
//! 4       1           version (0x01)
//! 5       4           height, u32 little-endian
//! 9       4           width,  u32 little-endian
//! 13      4*h*w       values, f32 little-endian, row-major
//! ```

use std::path::Path;

use super::{DataError, Grid};

pub const MAGIC: &[u8; 4] = b"GATR";
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 13;

pub fn encode(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.values().len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Grid, DataError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(DataError::UnsupportedVersion(bytes[4]));
    }
    let height = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(DataError::Truncated {
            expected: usize::MAX,
            actual: bytes.len(),
        })?;
    if bytes.len() != expected {
        return Err(DataError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Grid::new(height, width, values)
}

pub fn read_attribution_grid(path: &Path) -> Result<Grid, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode(&bytes)
}

/// Writes `grid` as a GATR file. [`Grid`] can only hold finite values, so
/// NaN and infinities are rejected when the grid is built.
pub fn write_attribution_grid(grid: &Grid, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, encode(grid)).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_zeros_is_29_bytes() {
        let bytes = encode(&Grid::zeros(2, 2));
        assert_eq!(bytes.len(), 29);
        assert_eq!(&bytes[..5], b"GATR\x01");
        assert_eq!(&bytes[5..13], &[2, 0, 0, 0, 2, 0, 0, 0]);
    }

    #[test]
    fn single_value() {
        let g = decode(&encode(&Grid::new(1, 1, vec![-0.5]).unwrap())).unwrap();
        assert_eq!((g.height(), g.width()), (1, 1));
        assert_eq!(g.values(), &[-0.5]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&Grid::zeros(1, 1));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(DataError::BadMagic)));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode(&Grid::zeros(3, 3));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(DataError::Truncated { .. })
        ));
        assert!(matches!(decode(&bytes[..7]), Err(DataError::Truncated { .. })));
    }

    #[test]
    fn non_finite_payload_rejected() {
        let mut bytes = encode(&Grid::zeros(1, 2));
        bytes[17..21].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(DataError::NonFinite { index: 1 })));
    }

    #[test]
    fn nan_rejected_before_write() {
        assert!(Grid::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.gatr");
        let g = Grid::new(2, 3, vec![1.0, -2.0, 3.5, 0.0, -0.0, 1e-30]).unwrap();
        write_attribution_grid(&g, &path).unwrap();
        let back = read_attribution_grid(&path).unwrap();
        let bits = |g: &Grid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&g), bits(&back));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            h in 1usize..40,
            w in 1usize..40,
            seed in proptest::collection::vec(any::<u32>(), 1..64),
        ) {
            let values: Vec<f32> = (0..h * w)
                .map(|i| {
                    let bits = seed[i % seed.len()].wrapping_mul(2654435761).wrapping_add(i as u32);
                    let v = f32::from_bits(bits);
                    if v.is_finite() { v } else { i as f32 }
                })
                .collect();
            let g = Grid::new(h, w, values).unwrap();
            let back = decode(&encode(&g)).unwrap();
            prop_assert_eq!(g.height(), back.height());
            prop_assert_eq!(g.width(), back.width());
            for (a, b) in g.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
