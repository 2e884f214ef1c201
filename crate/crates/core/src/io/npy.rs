//! NPY v1.0 arrays: C order, little-endian, 2-D rasters and 3-D channel stacks.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Raster, RasterKind};
use crate::scalar::Pixel;

use super::{read_bytes, write_atomic};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;
const ALIGN: usize = 64;

/// Pixel types with an NPY element descriptor.
pub trait NpyElement: Pixel {
    const DESCR: &'static str;
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
}

macro_rules! npy_element {
    ($t:ty, $descr:literal) => {
        impl NpyElement for $t {
            const DESCR: &'static str = $descr;
            const SIZE: usize = std::mem::size_of::<$t>();
            fn put(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn take(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element-sized chunk"))
            }
        }
    };
}

npy_element!(u8, "|u1");
npy_element!(u32, "<u4");
npy_element!(f32, "<f4");
npy_element!(f64, "<f8");

fn shape_text(shape: &[usize]) -> String {
    match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

/// Serializes an array of the given shape.
pub fn encode<T: NpyElement>(shape: &[usize], data: &[T]) -> Vec<u8> {
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        T::DESCR,
        shape_text(shape)
    );
    let unpadded = PREAMBLE + header.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.push_str(&" ".repeat(padding));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + header.len() + data.len() * T::SIZE);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for &v in data {
        v.put(&mut out);
    }
    out
}

/// Parsed header fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

fn value_after<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let start = dict
        .find(&format!("'{key}'"))
        .or_else(|| dict.find(&format!("\"{key}\"")))?
        + key.len()
        + 2;
    let rest = dict[start..].trim_start();
    Some(rest.strip_prefix(':')?.trim_start())
}

fn parse_header(dict: &str) -> std::result::Result<Header, String> {
    let dict = dict.trim_end();
    if !(dict.starts_with('{') && dict.ends_with('}')) {
        return Err("header is not a dictionary".into());
    }
    let descr_src = value_after(dict, "descr").ok_or("missing descr")?;
    let quote = descr_src
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or("descr is not a string")?;
    let descr_end = descr_src[1..].find(quote).ok_or("unterminated descr")?;
    let descr = descr_src[1..1 + descr_end].to_string();

    let fo = value_after(dict, "fortran_order").ok_or("missing fortran_order")?;
    let fortran_order = if fo.starts_with("False") {
        false
    } else if fo.starts_with("True") {
        true
    } else {
        return Err("fortran_order is not a boolean".into());
    };

    let sh = value_after(dict, "shape").ok_or("missing shape")?;
    let sh = sh.strip_prefix('(').ok_or("shape is not a tuple")?;
    let close = sh.find(')').ok_or("unterminated shape")?;
    let shape = sh[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format!("bad dimension {s:?}"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Header {
        descr,
        fortran_order,
        shape,
    })
}

/// Parses an NPY file image, checking the element type against `T`.
pub fn decode<T: NpyElement>(path: &Path, bytes: &[u8]) -> Result<(Vec<usize>, Vec<T>)> {
    let bad_header = |reason: String| Error::BadHeader {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: PREAMBLE,
            found: bytes.len(),
        });
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(bad_header(format!(
            "unsupported version {}.{}",
            bytes[6], bytes[7]
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: data_start,
            found: bytes.len(),
        });
    }
    let text = std::str::from_utf8(&bytes[PREAMBLE..data_start])
        .map_err(|_| bad_header("header is not ASCII".into()))?;
    let header = parse_header(text).map_err(bad_header)?;
    if header.descr != T::DESCR {
        return Err(Error::UnsupportedElementType {
            path: path.to_path_buf(),
            descr: header.descr,
        });
    }
    if header.fortran_order {
        return Err(bad_header("fortran_order arrays are not supported".into()));
    }
    let count: usize = header.shape.iter().product();
    let expected = data_start + count * T::SIZE;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after payload", bytes.len() - expected),
        });
    }
    let data = bytes[data_start..]
        .chunks_exact(T::SIZE)
        .map(T::take)
        .collect();
    Ok((header.shape, data))
}

fn shape_error(path: &Path, shape: &[usize], want: &str) -> Error {
    Error::BadHeader {
        path: path.to_path_buf(),
        reason: format!("expected {want}, found shape {shape:?}"),
    }
}

/// Reads a 2-D array as a raster of the given kind.
pub fn read_raster<T: NpyElement>(path: impl AsRef<Path>, kind: RasterKind) -> Result<Raster<T>> {
    let path = path.as_ref();
    let (shape, data) = decode::<T>(path, &read_bytes(path)?)?;
    let [h, w] = shape[..] else {
        return Err(shape_error(path, &shape, "a 2-D array"));
    };
    Raster::new(kind, h, w, data)
}

pub fn write_raster<T: NpyElement>(raster: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(
        path,
        &encode(&[raster.height(), raster.width()], raster.values()),
    )
}

/// Reads a `(3, H, W)` array of image channels.
pub fn read_stack<T: NpyElement>(path: impl AsRef<Path>) -> Result<[Raster<T>; 3]> {
    let path = path.as_ref();
    let (shape, data) = decode::<T>(path, &read_bytes(path)?)?;
    let [3, h, w] = shape[..] else {
        return Err(shape_error(path, &shape, "a (3, H, W) array"));
    };
    let plane = h * w;
    let channel = |k: usize| {
        Raster::new(
            RasterKind::ImageChannel,
            h,
            w,
            data[k * plane..(k + 1) * plane].to_vec(),
        )
    };
    Ok([channel(0)?, channel(1)?, channel(2)?])
}

pub fn write_stack<T: NpyElement>(image: &[Raster<T>; 3], path: impl AsRef<Path>) -> Result<()> {
    image[0].ensure_same_dims(&image[1])?;
    image[0].ensure_same_dims(&image[2])?;
    let (h, w) = image[0].dims();
    let data: Vec<T> = image
        .iter()
        .flat_map(|c| c.values().iter().copied())
        .collect();
    write_atomic(path, &encode(&[3, h, w], &data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let bytes = encode::<f64>(&[2, 3], &[0.0; 6]);
        assert_eq!(&bytes[..8], b"\x93NUMPY\x01\x00");
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((PREAMBLE + hlen) % 64, 0);
        let text = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(text.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }"));
        assert!(text.ends_with('\n'));
        assert_eq!(bytes.len(), 10 + hlen + 48);
    }

    #[test]
    fn parses_numpy_spacing_variants() {
        let h = parse_header("{'descr':'|u1','fortran_order':False,'shape':(4,)}").unwrap();
        assert_eq!(h.shape, vec![4]);
        assert_eq!(h.descr, "|u1");
        let h = parse_header(r#"{"descr": "<f8", "fortran_order": True, "shape": ()}"#).unwrap();
        assert!(h.fortran_order);
        assert!(h.shape.is_empty());
    }

    #[test]
    fn decode_errors() {
        let p = Path::new("x.npy");
        assert!(matches!(decode::<f64>(p, b""), Err(Error::BadMagic { .. })));
        let good = encode::<f64>(&[1, 2], &[1.0, 2.0]);
        assert!(matches!(
            decode::<f64>(p, &good[..good.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode::<u8>(p, &good),
            Err(Error::UnsupportedElementType { .. })
        ));
        let mut big_bytes = good.clone();
        let at = good.windows(3).position(|w| w == b"<f8").unwrap();
        big_bytes[at] = b'>';
        assert!(matches!(
            decode::<f64>(p, &big_bytes),
            Err(Error::UnsupportedElementType { descr, .. }) if descr == ">f8"
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode::<f64>(p, &long), Err(Error::Format { .. })));
    }
}
