//! NPY v1.0 reading and writing for 2-D float arrays.
//!
//! Layout: the magic string `\x93NUMPY`, version bytes `1 0`, a little-endian
//! u16 header length, then an ASCII Python dict literal with the keys
//! `descr`, `fortran_order` and `shape`, padded with spaces and terminated by
//! `\n` so that the data section starts on a 64-byte boundary.

use nalgebra::DMatrix;

use super::{MatrixIoError, Precision};

const MAGIC: &[u8] = b"\x93NUMPY";
const PREAMBLE: usize = MAGIC.len() + 2 + 2;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F8,
    F4,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F8 => 8,
            Dtype::F4 => 4,
        }
    }
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn malformed(msg: impl Into<String>) -> MatrixIoError {
    MatrixIoError::MalformedHeader(msg.into())
}

/// Minimal parser for the dict literal NumPy writes. Accepts string, bool
/// and integer-tuple values, arbitrary key order and optional trailing comma.
struct DictParser<'a> {
    src: &'a [u8],
    pos: usize,
}

enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl<'a> DictParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), MatrixIoError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(malformed(format!("expected '{}' at offset {}", c as char, self.pos)))
        }
    }

    fn string(&mut self) -> Result<String, MatrixIoError> {
        let quote = self.peek().ok_or_else(|| malformed("unexpected end of header"))?;
        if quote != b'\'' && quote != b'"' {
            return Err(malformed(format!("expected string at offset {}", self.pos)));
        }
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err(malformed("unterminated string"));
        }
        let s = std::str::from_utf8(&self.src[start..self.pos])
            .map_err(|_| malformed("non-ASCII string"))?
            .to_owned();
        self.pos += 1;
        Ok(s)
    }

    fn integer(&mut self) -> Result<usize, MatrixIoError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(format!("expected integer at offset {start}")))
    }

    fn value(&mut self) -> Result<Value, MatrixIoError> {
        match self.peek() {
            Some(b'\'') | Some(b'"') => self.string().map(Value::Str),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                    dims.push(self.integer()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(malformed("bad shape tuple")),
                    }
                }
                Ok(Value::Tuple(dims))
            }
            Some(_) => {
                let rest = &self.src[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Value::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Value::Bool(false))
                } else {
                    Err(malformed(format!("unsupported value at offset {}", self.pos)))
                }
            }
            None => Err(malformed("unexpected end of header")),
        }
    }

    fn parse(mut self) -> Result<Header, MatrixIoError> {
        self.expect(b'{')?;
        let mut descr = None;
        let mut fortran = None;
        let mut shape = None;
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            match (key.as_str(), value) {
                ("descr", Value::Str(s)) => descr = Some(s),
                ("fortran_order", Value::Bool(b)) => fortran = Some(b),
                ("shape", Value::Tuple(t)) => shape = Some(t),
                (k, _) => return Err(malformed(format!("unexpected key or value type for {k:?}"))),
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(malformed("expected ',' or '}'")),
            }
        }
        let descr = descr.ok_or_else(|| malformed("missing 'descr'"))?;
        let dtype = match descr.as_str() {
            "<f8" => Dtype::F8,
            "<f4" => Dtype::F4,
            _ => return Err(MatrixIoError::UnsupportedDtype(descr)),
        };
        Ok(Header {
            dtype,
            fortran_order: fortran.ok_or_else(|| malformed("missing 'fortran_order'"))?,
            shape: shape.ok_or_else(|| malformed("missing 'shape'"))?,
        })
    }
}

/// Decodes an NPY v1.0 byte stream into a matrix.
pub fn decode(bytes: &[u8]) -> Result<(DMatrix<f64>, Precision), MatrixIoError> {
    if bytes.len() < PREAMBLE || &bytes[..MAGIC.len()] != MAGIC {
        return Err(malformed("missing NPY magic"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(malformed(format!("unsupported version {major}.{minor}")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(malformed("header length exceeds file size"));
    }
    let header = DictParser {
        src: &bytes[PREAMBLE..data_start],
        pos: 0,
    }
    .parse()?;
    if header.fortran_order {
        return Err(MatrixIoError::FortranOrder);
    }
    if header.shape.len() != 2 {
        return Err(MatrixIoError::BadRank { shape: header.shape });
    }
    let (rows, cols) = (header.shape[0], header.shape[1]);
    if rows == 0 || cols == 0 {
        return Err(MatrixIoError::Empty { rows, cols });
    }
    let item = header.dtype.size();
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(item))
        .ok_or_else(|| malformed("shape overflows"))?;
    let payload = &bytes[data_start..];
    if payload.len() != expected {
        return Err(MatrixIoError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(rows * cols);
    match header.dtype {
        Dtype::F8 => values.extend(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        ),
        Dtype::F4 => values.extend(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64),
        ),
    }
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(MatrixIoError::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
    }
    let precision = match header.dtype {
        Dtype::F8 => Precision::F64,
        Dtype::F4 => Precision::F32,
    };
    Ok((DMatrix::from_row_slice(rows, cols, &values), precision))
}

/// Encodes a matrix as NPY v1.0, dtype `<f8`, C order. The output is
/// byte-identical to `numpy.save` for the same array.
pub fn encode(data: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = data.shape();
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    let unpadded = PREAMBLE + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + header.len() + rows * cols * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&data[(r, c)].to_le_bytes());
        }
    }
    out
}
