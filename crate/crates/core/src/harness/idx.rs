use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::{Error, Real, Result, Tensor};

const UNSIGNED_BYTE: u8 = 0x08;

/// Reads an IDX file (optionally gzip-compressed).
///
/// One-dimensional files are label vectors and keep their raw byte values.
/// Anything with more dimensions is flattened to `n × (product of the rest)`
/// and scaled to `[0, 1]`.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    parse_idx(&bytes)
}

/// Parses in-memory IDX bytes; see [`load_idx`].
pub fn parse_idx(bytes: &[u8]) -> Result<Tensor> {
    let header = |offset: usize| {
        bytes.get(offset).copied().ok_or_else(|| Error::Format {
            offset: offset as u64,
            message: "file ends inside the header".into(),
        })
    };
    for offset in 0..2 {
        let byte = header(offset)?;
        if byte != 0 {
            return Err(Error::Format {
                offset: offset as u64,
                message: format!("bad magic byte {byte:#04x}"),
            });
        }
    }
    let ty = header(2)?;
    if ty != UNSIGNED_BYTE {
        return Err(Error::Format {
            offset: 2,
            message: format!("unsupported element type {ty:#04x}; only unsigned bytes are read"),
        });
    }
    let ndim = header(3)? as usize;
    if ndim == 0 {
        return Err(Error::Format {
            offset: 3,
            message: "zero dimensions".into(),
        });
    }
    let mut dims = Vec::with_capacity(ndim);
    for k in 0..ndim {
        let at = 4 + 4 * k;
        let extent = bytes.get(at..at + 4).ok_or_else(|| Error::Format {
            offset: bytes.len() as u64,
            message: format!("file ends inside extent {k}"),
        })?;
        dims.push(u32::from_be_bytes(extent.try_into().expect("four bytes")) as usize);
    }
    let start = 4 + 4 * ndim;
    let count: usize = dims.iter().product();
    let payload = &bytes[start..];
    if payload.len() < count {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("payload holds {} of {count} expected bytes", payload.len()),
        });
    }
    if payload.len() > count {
        return Err(Error::Format {
            offset: (start + count) as u64,
            message: format!("{} trailing bytes after the payload", payload.len() - count),
        });
    }
    if ndim == 1 {
        return Tensor::new(dims, payload.iter().map(|&b| b as Real).collect());
    }
    let n = dims[0];
    let width = count.checked_div(n).unwrap_or(0);
    Tensor::new(
        vec![n, width],
        payload.iter().map(|&b| b as Real / 255.0).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_walkthrough() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 2, 1];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.shape(), &[3]);
        assert_eq!(t.data(), &[7.0, 2.0, 1.0]);
    }

    #[test]
    fn white_image_scales_to_one() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 28, 0, 0, 0, 28];
        bytes.extend(std::iter::repeat_n(0xFF, 784));
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 784]);
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn wrong_magic_reports_offset() {
        match parse_idx(&[0, 1, 8, 1, 0, 0, 0, 0]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("{other:?}"),
        }
        match parse_idx(&[0, 0, 0x0D, 1, 0, 0, 0, 0]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_is_an_error() {
        assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 7, 2]), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&[0, 0, 8, 2, 0, 0]), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&[0, 0]), Err(Error::Format { .. })));
    }

    #[test]
    fn trailing_bytes_are_an_error() {
        assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 7, 9]), Err(Error::Format { .. })));
    }
}
