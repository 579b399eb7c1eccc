//! NPY v1.0 reading and writing.
//!
//! Only little-endian `f4`/`f8` in C order with one to three dimensions is
//! supported. Everything is written as `<f8`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

/// A decoded array; `f4` payloads are widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes, path)
}

/// Parses an in-memory NPY file. `path` is only used in error messages.
pub fn parse_npy(bytes: &[u8], path: &Path) -> Result<NpyArray> {
    let bad_header = |reason: &str| Error::BadHeader { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 10 || bytes[..6] != MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf() });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::UnsupportedVersion { path: path.to_path_buf(), major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header_end = 10 + header_len;
    if bytes.len() < header_end {
        return Err(bad_header("header length exceeds file size"));
    }
    let header = std::str::from_utf8(&bytes[10..header_end]).map_err(|_| bad_header("header is not ASCII"))?;
    let dict = HeaderDict::parse(header).map_err(|reason| bad_header(&reason))?;

    let dtype = match dict.descr.as_str() {
        "<f8" => Dtype::F8,
        "<f4" => Dtype::F4,
        other => return Err(Error::UnsupportedDescr { path: path.to_path_buf(), descr: other.to_string() }),
    };
    if dict.fortran_order {
        return Err(Error::FortranOrderUnsupported { path: path.to_path_buf() });
    }
    if dict.shape.is_empty() || dict.shape.len() > 3 {
        return Err(Error::UnsupportedRank(dict.shape.len()));
    }
    let count = dict
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad_header("shape overflows"))?;
    let payload = &bytes[header_end..];
    let expected = count * dtype.size();
    if payload.len() != expected {
        return Err(Error::TruncatedPayload { path: path.to_path_buf(), expected, got: payload.len() });
    }
    let data = match dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect(),
    };
    Ok(NpyArray { shape: dict.shape, dtype, data })
}

/// Encodes `data` with the given shape as an `<f8` NPY v1.0 file.
pub fn encode_npy(shape: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(Error::UnsupportedRank(shape.len()));
    }
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::Shape(format!("shape {shape:?} holds {count} values, got {}", data.len())));
    }
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {}, }}", shape_literal(shape));
    // magic(6) + version(2) + length(2) + header + '\n' must be a multiple of 64
    let unpadded = 10 + header.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', padding));
    header.push('\n');
    let header_len = u16::try_from(header.len())
        .map_err(|_| Error::Shape("NPY header too long for version 1.0".into()))?;

    let mut out = Vec::with_capacity(10 + header.len() + data.len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_npy(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let bytes = encode_npy(shape, data)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [d] => format!("({d},)"),
        _ => format!("({})", shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    }
}

#[derive(Debug, PartialEq)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    /// Parses the Python dict literal, e.g.
    /// `{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }`.
    fn parse(text: &str) -> std::result::Result<HeaderDict, String> {
        let body = text
            .trim()
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or("header is not a dict literal")?;
        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;
        let mut rest = body.trim_start();
        while !rest.is_empty() {
            let (key, after) = parse_quoted(rest).ok_or("expected a quoted key")?;
            let after = after.trim_start().strip_prefix(':').ok_or("expected ':' after key")?.trim_start();
            rest = match key {
                "descr" => {
                    let (v, r) = parse_quoted(after).ok_or("descr must be a string")?;
                    descr = Some(v.to_string());
                    r
                }
                "fortran_order" => {
                    if let Some(r) = after.strip_prefix("True") {
                        fortran_order = Some(true);
                        r
                    } else if let Some(r) = after.strip_prefix("False") {
                        fortran_order = Some(false);
                        r
                    } else {
                        return Err("fortran_order must be True or False".into());
                    }
                }
                "shape" => {
                    let inner = after.strip_prefix('(').ok_or("shape must be a tuple")?;
                    let close = inner.find(')').ok_or("unterminated shape tuple")?;
                    let dims = inner[..close]
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.trim_end_matches('L').parse::<usize>().map_err(|_| format!("bad dimension '{s}'")))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    shape = Some(dims);
                    &inner[close + 1..]
                }
                other => return Err(format!("unexpected key '{other}'")),
            };
            rest = rest.trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
            } else if !rest.is_empty() {
                return Err("expected ',' between entries".into());
            }
        }
        Ok(HeaderDict {
            descr: descr.ok_or("missing 'descr'")?,
            fortran_order: fortran_order.ok_or("missing 'fortran_order'")?,
            shape: shape.ok_or("missing 'shape'")?,
        })
    }
}

fn parse_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(quote)?;
    Some((&inner[..end], &inner[end + 1..]))
}
