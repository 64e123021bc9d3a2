//! `NWG1` binary grid files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4 | magic `NWG1` |
//! | 4  | 1 | channel kind (0 = rain, 1 = radar) |
//! | 5  | 4 | height, u32 |
//! | 9  | 4 | width, u32 |
//! | 13 | 8 | timestamp, i64 minutes since epoch |
//! | 21 | 4·h·w | values, f32 row-major |

use std::fs;
use std::path::Path;

use super::{ChannelKind, Grid, GridError, Timestamp};

pub const MAGIC: &[u8; 4] = b"NWG1";
pub const HEADER_LEN: usize = 21;

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.values().len());
    out.extend_from_slice(MAGIC);
    out.push(grid.kind().code());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&grid.timestamp().0.to_le_bytes());
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a complete file image. `origin` only labels errors.
pub fn decode_grid(bytes: &[u8], origin: &str) -> Result<Grid, GridError> {
    let truncated = |need| GridError::TruncatedFile {
        path: origin.to_string(),
        len: bytes.len(),
        need,
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    if &bytes[..4] != MAGIC {
        return Err(GridError::BadMagic {
            path: origin.to_string(),
            found: bytes[..4].try_into().unwrap(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let kind = ChannelKind::from_code(bytes[4])?;
    let height = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    let width = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
    let ts = i64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let need = HEADER_LEN + 4 * height as usize * width as usize;
    if bytes.len() < need {
        return Err(truncated(need));
    }
    if bytes.len() > need {
        return Err(GridError::DimensionMismatch {
            path: origin.to_string(),
            height,
            width,
            extra: bytes.len() - need,
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Grid::new(kind, Timestamp(ts), height as usize, width as usize, values)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid, GridError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GridError::io(path, e))?;
    decode_grid(&bytes, &path.display().to_string())
}

pub fn write_grid(path: impl AsRef<Path>, grid: &Grid) -> Result<(), GridError> {
    let path = path.as_ref();
    fs::write(path, encode_grid(grid)).map_err(|e| GridError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_assembled_zero_grid() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"NWG1");
        bytes.push(0);
        bytes.extend_from_slice(&[2, 0, 0, 0]);
        bytes.extend_from_slice(&[2, 0, 0, 0]);
        bytes.extend_from_slice(&600i64.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 16]);
        assert_eq!(bytes.len(), 4 + 1 + 4 + 4 + 8 + 16);
        let g = decode_grid(&bytes, "mem").unwrap();
        assert_eq!((g.height(), g.width()), (2, 2));
        assert_eq!(g.kind(), ChannelKind::Rain);
        assert_eq!(g.timestamp(), Timestamp(600));
        assert_eq!(g.values(), &[0.0; 4]);
        assert_eq!(encode_grid(&g), bytes);
    }

    #[test]
    fn bad_magic_truncation_and_trailing_bytes() {
        let g = Grid::rain(Timestamp(0), 1, 2, vec![1.0, 2.0]).unwrap();
        let good = encode_grid(&g);

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_grid(&bad, "x"), Err(GridError::BadMagic { .. })));

        assert!(matches!(
            decode_grid(&good[..good.len() - 1], "x"),
            Err(GridError::TruncatedFile { .. })
        ));
        assert!(matches!(decode_grid(&good[..10], "x"), Err(GridError::TruncatedFile { .. })));

        let mut long = good.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(
            decode_grid(&long, "x"),
            Err(GridError::DimensionMismatch { extra: 4, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.nwg");
        let g = Grid::radar(Timestamp(1_000_000), 2, 3, vec![-999.0, 12.5, 30.0, 0.0, 1e-3, 55.25])
            .unwrap();
        write_grid(&path, &g).unwrap();
        assert_eq!(read_grid(&path).unwrap(), g);
    }

    proptest! {
        #[test]
        fn encode_decode_is_bit_exact(
            h in 1usize..6,
            w in 1usize..6,
            slot in -1000i64..1000,
            seed in proptest::collection::vec(0.0f32..500.0, 36),
        ) {
            let values: Vec<f32> = seed[..h * w].to_vec();
            let g = Grid::rain(Timestamp(slot * 10), h, w, values).unwrap();
            let back = decode_grid(&encode_grid(&g), "p").unwrap();
            prop_assert_eq!(
                back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back, g);
        }
    }
}
