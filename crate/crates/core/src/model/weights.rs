//! Binary weight file.
//!
//! Layout: the magic `FMDW1\n`, then for each of the eight tensors in
//! [`PARAM_SHAPES`](super::PARAM_SHAPES) order: `rows: u32 LE`, `cols: u32 LE`,
//! `rows * cols` little-endian IEEE-754 `f32` values in row-major order.

use super::{ModelParams, Tensor, PARAM_SHAPES};
use crate::error::{FmdError, Result};

pub const WEIGHTS_MAGIC: &[u8; 6] = b"FMDW1\n";

pub fn save_weights(params: &ModelParams) -> Vec<u8> {
    let mut out = WEIGHTS_MAGIC.to_vec();
    for t in params.tensors() {
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(FmdError::WeightsTruncated);
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    let b = take(bytes, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn load_weights(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < WEIGHTS_MAGIC.len() || &bytes[..WEIGHTS_MAGIC.len()] != WEIGHTS_MAGIC {
        return Err(FmdError::WeightsBadMagic);
    }
    let mut rest = &bytes[WEIGHTS_MAGIC.len()..];
    let mut tensors = Vec::with_capacity(PARAM_SHAPES.len());
    for (index, &(rows, cols)) in PARAM_SHAPES.iter().enumerate() {
        let found = (read_u32(&mut rest)?, read_u32(&mut rest)?);
        let expected = (rows as u32, cols as u32);
        if found != expected {
            return Err(FmdError::WeightsShape {
                index,
                expected,
                found,
            });
        }
        let raw = take(&mut rest, rows * cols * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor { rows, cols, values });
    }
    if !rest.is_empty() {
        return Err(FmdError::WeightsTrailing(rest.len()));
    }
    let tensors: [Tensor; 8] = tensors.try_into().expect("eight tensors");
    Ok(ModelParams::from_tensors(tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_identical() {
        let params = ModelParams::init(42);
        let bytes = save_weights(&params);
        assert_eq!(&bytes[..6], b"FMDW1\n");
        assert_eq!(bytes.len(), 6 + 8 * 8 + params.parameter_count() * 4);
        let back = load_weights(&bytes).unwrap();
        assert_eq!(back, params);
        assert_eq!(save_weights(&back), bytes);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = save_weights(&ModelParams::zeros());
        bytes[0] = b'X';
        assert!(matches!(load_weights(&bytes), Err(FmdError::WeightsBadMagic)));
    }

    #[test]
    fn wrong_architecture_is_a_shape_error() {
        // a file whose first conv has 4 filters instead of 8
        let mut bytes = WEIGHTS_MAGIC.to_vec();
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&27u32.to_le_bytes());
        bytes.extend(std::iter::repeat_n(0u8, 4 * 27 * 4));
        assert!(matches!(
            load_weights(&bytes),
            Err(FmdError::WeightsShape { index: 0, .. })
        ));
    }

    #[test]
    fn truncation() {
        let bytes = save_weights(&ModelParams::zeros());
        assert!(matches!(
            load_weights(&bytes[..bytes.len() - 1]),
            Err(FmdError::WeightsTruncated)
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(load_weights(&longer), Err(FmdError::WeightsTrailing(1))));
    }
}
