//! Reading and writing arrays in the numpy `.npy` format.
//!
//! Versions 1.0 and 2.0 are read; only 1.0 headers are written. Payloads are
//! little-endian. Fortran-ordered inputs are transposed to C order on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    U8,
    U16,
    U32,
    I32,
    I64,
    F32,
    F64,
}

impl DType {
    pub fn item_size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::U32 | DType::I32 | DType::F32 => 4,
            DType::I64 | DType::F64 => 8,
        }
    }

    pub fn descr(self) -> &'static str {
        match self {
            DType::U8 => "|u1",
            DType::U16 => "<u2",
            DType::U32 => "<u4",
            DType::I32 => "<i4",
            DType::I64 => "<i8",
            DType::F32 => "<f4",
            DType::F64 => "<f8",
        }
    }

    fn parse(descr: &str) -> Result<Self> {
        Ok(match descr {
            "|u1" | "<u1" => DType::U8,
            "<u2" => DType::U16,
            "<u4" => DType::U32,
            "<i4" => DType::I32,
            "<i8" => DType::I64,
            "<f4" => DType::F32,
            "<f8" => DType::F64,
            other => return Err(Error::UnsupportedDtype(other.to_string())),
        })
    }
}

/// Element types that can be stored in an [`NpyArray`].
pub trait Element: Copy {
    const DTYPE: DType;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! element {
    ($t:ty, $d:expr) => {
        impl Element for $t {
            const DTYPE: DType = $d;
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    };
}

element!(u8, DType::U8);
element!(u16, DType::U16);
element!(u32, DType::U32);
element!(i32, DType::I32);
element!(i64, DType::I64);
element!(f32, DType::F32);
element!(f64, DType::F64);

/// An n-dimensional array as stored in an `.npy` file.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub fortran_order: bool,
    pub data: Vec<u8>,
}

impl NpyArray {
    pub fn from_slice<T: Element>(shape: &[usize], values: &[T]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::shape(shape, [values.len()]));
        }
        let mut data = Vec::with_capacity(n * T::DTYPE.item_size());
        for &v in values {
            v.write_le(&mut data);
        }
        Ok(Self {
            dtype: T::DTYPE,
            shape: shape.to_vec(),
            fortran_order: false,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decodes the payload as `T`. Fails if the dtype differs.
    pub fn to_vec<T: Element>(&self) -> Result<Vec<T>> {
        if self.dtype != T::DTYPE {
            return Err(Error::UnsupportedDtype(format!(
                "expected {}, found {}",
                T::DTYPE.descr(),
                self.dtype.descr()
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.dtype.item_size())
            .map(T::read_le)
            .collect())
    }

    /// Any supported dtype, widened to `f64`.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.f64_range(0, self.len())
    }

    /// Elements `start..start + len` (flat, C order) widened to `f64`.
    pub fn f64_range(&self, start: usize, len: usize) -> Vec<f64> {
        let w = self.dtype.item_size();
        self.data[start * w..(start + len) * w]
            .chunks_exact(w)
            .map(|b| match self.dtype {
                DType::U8 => b[0] as f64,
                DType::U16 => u16::read_le(b) as f64,
                DType::U32 => u32::read_le(b) as f64,
                DType::I32 => i32::read_le(b) as f64,
                DType::I64 => i64::read_le(b) as f64,
                DType::F32 => f32::read_le(b) as f64,
                DType::F64 => f64::read_le(b),
            })
            .collect()
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        match self.dtype {
            DType::F32 => self.to_vec::<f32>().expect("dtype checked"),
            _ => self.to_f64_vec().into_iter().map(|v| v as f32).collect(),
        }
    }

    /// Decodes as non-negative integer labels, rejecting fractional or
    /// out-of-range values (float-stored label maps are common).
    pub fn to_u32_exact(&self) -> Result<Vec<u32>> {
        if self.dtype == DType::U32 {
            return self.to_vec::<u32>();
        }
        self.to_f64_vec()
            .into_iter()
            .enumerate()
            .map(|(index, value)| {
                if value.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&value) {
                    Ok(value as u32)
                } else {
                    Err(Error::NotAnInteger { index, value })
                }
            })
            .collect()
    }

    /// Serializes to the version 1.0 on-disk representation.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dict = format!(
            "{{'descr': '{}', 'fortran_order': {}, 'shape': {}, }}",
            self.dtype.descr(),
            if self.fortran_order { "True" } else { "False" },
            shape_literal(&self.shape)
        );
        // magic(6) + version(2) + header_len(2) + dict + padding + '\n'
        let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
        let total = unpadded.div_ceil(ALIGN) * ALIGN;
        let header_len = total - (MAGIC.len() + 4);
        let header_len = u16::try_from(header_len)
            .map_err(|_| Error::BadHeader("header exceeds 65535 bytes".into()))?;
        let mut out = Vec::with_capacity(total + self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.resize(total - 1, b' ');
        out.push(b'\n');
        out.extend_from_slice(&self.data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = split_header(bytes)?;
        let dtype = DType::parse(&header.descr)?;
        let n: usize = header.shape.iter().product();
        let expected = n * dtype.item_size();
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        let mut arr = NpyArray {
            dtype,
            shape: header.shape,
            fortran_order: false,
            data: payload[..expected].to_vec(),
        };
        if header.fortran_order {
            arr.data = fortran_to_c(&arr.data, &arr.shape, dtype.item_size());
        }
        Ok(arr)
    }
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn split_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::BadMagic);
    }
    let (len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 => {
            if bytes.len() < 12 {
                return Err(Error::BadHeader("short version 2.0 preamble".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(Error::BadHeader(format!("unsupported version {v}.{}", bytes[7]))),
    };
    let end = start + len;
    if bytes.len() < end {
        return Err(Error::BadHeader("header extends past end of file".into()));
    }
    let text = std::str::from_utf8(&bytes[start..end])
        .map_err(|_| Error::BadHeader("header is not ASCII".into()))?;
    Ok((parse_dict(text)?, &bytes[end..]))
}

fn dict_value<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}'");
    let at = text
        .find(&needle)
        .ok_or_else(|| Error::BadHeader(format!("missing key {key}")))?;
    let rest = text[at + needle.len()..].trim_start();
    rest.strip_prefix(':')
        .map(str::trim_start)
        .ok_or_else(|| Error::BadHeader(format!("malformed entry for {key}")))
}

fn parse_dict(text: &str) -> Result<Header> {
    let descr = dict_value(text, "descr")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|s| s.split('\'').next())
        .ok_or_else(|| Error::BadHeader("descr is not a string".into()))?
        .to_string();

    let fo = dict_value(text, "fortran_order")?;
    let fortran_order = if fo.starts_with("True") {
        true
    } else if fo.starts_with("False") {
        false
    } else {
        return Err(Error::BadHeader("fortran_order is not a bool".into()));
    };

    let sh = dict_value(text, "shape")?;
    let inner = sh
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| Error::BadHeader("shape is not a tuple".into()))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::BadHeader(format!("bad shape extent `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Header {
        descr,
        fortran_order,
        shape,
    })
}

fn fortran_to_c(data: &[u8], shape: &[usize], item: usize) -> Vec<u8> {
    let n: usize = shape.iter().product();
    let nd = shape.len();
    // Fortran strides (in elements): first axis fastest.
    let mut fstride = vec![1usize; nd];
    for d in 1..nd {
        fstride[d] = fstride[d - 1] * shape[d - 1];
    }
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; nd];
    for _ in 0..n {
        let off: usize = idx.iter().zip(&fstride).map(|(i, s)| i * s).sum();
        out.extend_from_slice(&data[off * item..(off + 1) * item]);
        // advance C-order multi-index, last axis fastest
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    NpyArray::from_bytes(&bytes)
}

pub fn write_npy(arr: &NpyArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = arr.to_bytes()?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Reads a 1-D array of strings (`<U{n}` unicode) or stringifies a numeric
/// array. Used for per-tile metadata such as tissue labels.
pub fn read_npy_strings(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, payload) = split_header(&bytes)?;
    if let Some(width) = header.descr.strip_prefix("<U") {
        let width: usize = width
            .parse()
            .map_err(|_| Error::UnsupportedDtype(header.descr.clone()))?;
        let n: usize = header.shape.iter().product();
        let expected = n * width * 4;
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        return Ok(payload[..expected]
            .chunks_exact((width * 4).max(1))
            .map(|s| {
                s.chunks_exact(4)
                    .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .take_while(|&c| c != 0)
                    .filter_map(char::from_u32)
                    .collect()
            })
            .collect());
    }
    let arr = NpyArray::from_bytes(&bytes)?;
    Ok(arr.to_f64_vec().into_iter().map(|v| v.to_string()).collect())
}
