//! Reader and writer for NumPy `.npy` v1.0 files holding 2-D float arrays.
//!
//! Only little-endian `<f4` / `<f8`, C-order, two-dimensional arrays are
//! accepted. Files are always written as `<f8`, so a save/load round trip is
//! bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{PruneError, Result};
use crate::matrix::{EmbeddingMatrix, MatrixKind};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    shape: (usize, usize),
}

pub fn load_array(path: impl AsRef<Path>, kind: MatrixKind) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path)?;
    decode(&bytes, kind)
}

pub fn save_array(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(matrix))?;
    Ok(())
}

/// Serializes as a `<f8` C-order array.
pub fn encode(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        matrix.rows(),
        matrix.cols()
    );
    // dict + padding + '\n' must end on a 64-byte boundary.
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + padding + 1;

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header_len + matrix.data().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', padding));
    out.push(b'\n');
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], kind: MatrixKind) -> Result<EmbeddingMatrix> {
    if bytes.len() < PREAMBLE_LEN || &bytes[..6] != MAGIC {
        return Err(PruneError::Format("missing NPY magic bytes".into()));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(PruneError::Format(format!(
            "unsupported NPY version {}.{}, expected 1.0",
            bytes[6], bytes[7]
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(PruneError::Format("truncated NPY header".into()));
    }
    let text = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .map_err(|_| PruneError::Format("NPY header is not ASCII".into()))?;
    let header = parse_header(text)?;

    let (rows, cols) = header.shape;
    let width = header.dtype.size();
    let payload = &bytes[data_start..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| PruneError::Format("shape overflows".into()))?;
    if payload.len() != expected {
        return Err(PruneError::Format(format!(
            "payload has {} bytes, shape ({rows}, {cols}) needs {expected}",
            payload.len()
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(PruneError::Format(format!(
            "empty array of shape ({rows}, {cols})"
        )));
    }

    let data: Vec<f64> = match header.dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
    };
    EmbeddingMatrix::new(rows, cols, data, kind)
}

fn parse_header(text: &str) -> Result<Header> {
    let body = text.trim_end_matches(['\n', ' ', '\0']).trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| PruneError::Format(format!("header is not a dict: {body:?}")))?;

    let descr = dict_value(body, "descr")?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    let dtype = match descr {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        other => {
            return Err(PruneError::UnsupportedLayout(format!(
                "dtype {other:?}; only '<f4' and '<f8' are supported"
            )))
        }
    };

    match dict_value(body, "fortran_order")? {
        "False" => {}
        "True" => {
            return Err(PruneError::UnsupportedLayout(
                "fortran_order arrays are not supported".into(),
            ))
        }
        other => {
            return Err(PruneError::Format(format!(
                "bad fortran_order value {other:?}"
            )))
        }
    }

    let shape = dict_value(body, "shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| PruneError::Format(format!("bad shape {shape:?}")))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| PruneError::Format(format!("bad dimension {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != 2 {
        return Err(PruneError::UnsupportedLayout(format!(
            "{}-D array; only 2-D arrays are supported",
            dims.len()
        )));
    }
    Ok(Header {
        dtype,
        shape: (dims[0], dims[1]),
    })
}

/// Extracts the raw text of `key`'s value from a Python dict literal body.
fn dict_value<'a>(body: &'a str, key: &str) -> Result<&'a str> {
    let missing = || PruneError::Format(format!("header lacks key {key:?}"));
    let start = [format!("'{key}'"), format!("\"{key}\"")]
        .iter()
        .find_map(|k| body.find(k.as_str()).map(|p| p + k.len()))
        .ok_or_else(missing)?;
    let rest = body[start..].trim_start();
    let rest = rest.strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|p| p + 1)
    } else {
        rest.find(',').or(Some(rest.len()))
    }
    .ok_or_else(|| PruneError::Format(format!("unterminated value for {key:?}")))?;
    Ok(rest[..end].trim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(dict: &str) -> Vec<u8> {
        let mut h = dict.to_string();
        while !(PREAMBLE_LEN + h.len() + 1).is_multiple_of(ALIGN) {
            h.push(' ');
        }
        h.push('\n');
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(h.len() as u16).to_le_bytes());
        out.extend_from_slice(h.as_bytes());
        out
    }

    #[test]
    fn header_is_64_byte_aligned() {
        let m = EmbeddingMatrix::new(3, 5, vec![0.5; 15], MatrixKind::Visual).unwrap();
        let bytes = encode(&m);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((PREAMBLE_LEN + header_len) % 64, 0);
        assert_eq!(bytes[PREAMBLE_LEN + header_len - 1], b'\n');
    }

    #[test]
    fn identity_round_trip() {
        let m = EmbeddingMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], MatrixKind::Visual).unwrap();
        assert_eq!(decode(&encode(&m), MatrixKind::Visual).unwrap(), m);
    }

    #[test]
    fn zip_magic_is_format_error() {
        let err = decode(b"PK\x03\x04 not an npy file", MatrixKind::Visual).unwrap_err();
        assert!(matches!(err, PruneError::Format(_)));
    }

    #[test]
    fn fortran_order_unsupported() {
        let mut bytes =
            header_bytes("{'descr': '<f8', 'fortran_order': True, 'shape': (1, 1), }");
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        let err = decode(&bytes, MatrixKind::Visual).unwrap_err();
        assert!(matches!(err, PruneError::UnsupportedLayout(_)));
    }

    #[test]
    fn three_dims_unsupported() {
        let mut bytes =
            header_bytes("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }");
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        let err = decode(&bytes, MatrixKind::Visual).unwrap_err();
        assert!(matches!(err, PruneError::UnsupportedLayout(_)));
    }

    #[test]
    fn integer_dtype_unsupported() {
        let mut bytes =
            header_bytes("{'descr': '<i4', 'fortran_order': False, 'shape': (1, 1), }");
        bytes.extend_from_slice(&1i32.to_le_bytes());
        let err = decode(&bytes, MatrixKind::Visual).unwrap_err();
        assert!(matches!(err, PruneError::UnsupportedLayout(_)));
    }

    #[test]
    fn big_endian_unsupported() {
        let mut bytes =
            header_bytes("{'descr': '>f8', 'fortran_order': False, 'shape': (1, 1), }");
        bytes.extend_from_slice(&1.0f64.to_be_bytes());
        assert!(matches!(
            decode(&bytes, MatrixKind::Visual),
            Err(PruneError::UnsupportedLayout(_))
        ));
    }

    #[test]
    fn nan_payload_names_position() {
        let mut bytes =
            header_bytes("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }");
        for v in [0.0f32, 1.0, 2.0, f32::INFINITY] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let err = decode(&bytes, MatrixKind::Visual).unwrap_err();
        assert!(matches!(err, PruneError::NonFinite { row: 1, col: 1, .. }));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let mut bytes =
            header_bytes("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }");
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(
            decode(&bytes, MatrixKind::Visual),
            Err(PruneError::Format(_))
        ));
    }

    #[test]
    fn key_order_and_quotes_are_flexible() {
        let mut bytes =
            header_bytes("{\"shape\": (1, 2), \"fortran_order\": False, \"descr\": \"<f8\"}");
        bytes.extend_from_slice(&2.5f64.to_le_bytes());
        bytes.extend_from_slice(&(-1.0f64).to_le_bytes());
        let m = decode(&bytes, MatrixKind::Textual).unwrap();
        assert_eq!(m.data(), &[2.5, -1.0]);
    }
}
