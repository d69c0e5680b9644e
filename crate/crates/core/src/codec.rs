//! Canonical length-prefixed binary encoding.
//!
//! ```text
//! message   = tag:u8 body
//! body      = field*                      (declared order, no padding)
//! field     = len:u32be content[len]
//! u64       = field with 8-byte big-endian content
//! bool, u8  = field with 1-byte content (bool is 0x00 or 0x01)
//! string    = field with UTF-8 content
//! id        = field with exactly 16 bytes
//! digest    = field with exactly 32 bytes
//! nested    = field whose content is the nested value's body (no tag)
//! list      = field whose content is count:u32be followed by one field per element
//! option    = empty field for None, otherwise the field of the inner value
//! ```
//!
//! Decoding is strict: every accepted byte string is exactly what `encode`
//! produces for the decoded value, so `encode(decode(b)) == b`.

use std::fmt;

use thiserror::Error;

use crate::crypto::{Digest, DIGEST_LEN};

pub const ID_LEN: usize = 16;

/// 16-byte identifier used for nonces, quote ids, token ids, hold refs and
/// ticket ids.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Id(pub [u8; ID_LEN]);

impl Id {
    pub fn random<R: rand_core::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut raw = [0u8; ID_LEN];
        rng.fill_bytes(&mut raw);
        Id(raw)
    }

    pub fn as_bytes(&self) -> &[u8; ID_LEN] {
        &self.0
    }
}

impl fmt::Debug for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Id({})", hex::encode(&self.0[..6]))
    }
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("{type_name} violates invariant: {what}")]
    Invariant { type_name: &'static str, what: &'static str },
    #[error("field of {len} bytes exceeds the 32-bit length prefix")]
    TooLarge { len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("empty input")]
    Empty,
    #[error("unknown message tag {tag:#04x}")]
    UnknownType { tag: u8 },
    #[error("expected {expected}, found {found}")]
    TypeMismatch { expected: &'static str, found: &'static str },
    #[error("truncated at offset {offset}: need {need} more bytes")]
    Truncated { offset: usize, need: usize },
    #[error("{count} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("malformed field at offset {offset}: {what}")]
    Malformed { offset: usize, what: &'static str },
    #[error("invariant violated at offset {offset}: {what}")]
    Invariant { offset: usize, what: &'static str },
}

impl DecodeError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            DecodeError::Empty | DecodeError::UnknownType { .. } | DecodeError::TypeMismatch { .. } => Some(0),
            DecodeError::Truncated { offset, .. }
            | DecodeError::TrailingBytes { offset, .. }
            | DecodeError::Malformed { offset, .. }
            | DecodeError::Invariant { offset, .. } => Some(*offset),
        }
    }
}

/// Field-level body codec shared by every wire type, nested or not.
pub trait Body: Sized {
    const NAME: &'static str;

    fn encode_body(&self, w: &mut Writer);

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Type invariants, checked on encode and after decode.
    fn check(&self) -> Result<(), &'static str> {
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
    error: Option<EncodeError>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tag(tag: u8) -> Self {
        Writer { buf: vec![tag], error: None }
    }

    pub fn finish(self) -> Result<Vec<u8>, EncodeError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.buf),
        }
    }

    /// The bytes written so far, ignoring any recorded error.
    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    fn fail(&mut self, e: EncodeError) {
        self.error.get_or_insert(e);
    }

    fn len_prefix(&mut self, len: usize) {
        match u32::try_from(len) {
            Ok(n) => self.buf.extend_from_slice(&n.to_be_bytes()),
            Err(_) => self.fail(EncodeError::TooLarge { len }),
        }
    }

    pub fn bytes(&mut self, content: &[u8]) {
        self.len_prefix(content.len());
        self.buf.extend_from_slice(content);
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_be_bytes());
    }

    pub fn u8(&mut self, v: u8) {
        self.bytes(&[v]);
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn id(&mut self, id: &Id) {
        self.bytes(id.as_bytes());
    }

    pub fn digest(&mut self, d: &Digest) {
        self.bytes(d.as_bytes());
    }

    fn sub(&mut self, fill: impl FnOnce(&mut Writer)) {
        let mut inner = Writer::new();
        fill(&mut inner);
        if let Some(e) = inner.error {
            self.fail(e);
        }
        self.bytes(&inner.buf);
    }

    pub fn nested<T: Body>(&mut self, v: &T) {
        if let Err(what) = v.check() {
            self.fail(EncodeError::Invariant { type_name: T::NAME, what });
        }
        self.sub(|w| v.encode_body(w));
    }

    pub fn list<T: Body>(&mut self, items: &[T]) {
        self.sub(|w| {
            w.count(items.len());
            for item in items {
                w.nested(item);
            }
        });
    }

    pub fn byte_list(&mut self, items: &[Vec<u8>]) {
        self.sub(|w| {
            w.count(items.len());
            for item in items {
                w.bytes(item);
            }
        });
    }

    fn count(&mut self, n: usize) {
        self.len_prefix(n);
    }

    pub fn opt_nested<T: Body>(&mut self, v: Option<&T>) {
        match v {
            Some(v) => self.nested(v),
            None => self.bytes(&[]),
        }
    }

    pub fn opt_bytes(&mut self, v: Option<&[u8]>) {
        match v {
            // A present value may itself be empty, so presence is a leading 0x01.
            Some(b) => self.sub(|w| {
                w.buf.push(1);
                w.buf.extend_from_slice(b);
            }),
            None => self.bytes(&[]),
        }
    }

    pub fn opt_u8(&mut self, v: Option<u8>) {
        match v {
            Some(v) => self.u8(v),
            None => self.bytes(&[]),
        }
    }

    pub fn opt_id(&mut self, v: Option<&Id>) {
        match v {
            Some(v) => self.id(v),
            None => self.bytes(&[]),
        }
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0, base: 0 }
    }

    fn at(buf: &'a [u8], base: usize) -> Self {
        Reader { buf, pos: 0, base }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn malformed(&self, what: &'static str) -> DecodeError {
        DecodeError::Malformed { offset: self.offset(), what }
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        let rest = self.buf.len() - self.pos;
        if rest == 0 {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes { offset: self.offset(), count: rest })
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let rest = self.buf.len() - self.pos;
        if rest < n {
            return Err(DecodeError::Truncated { offset: self.base + self.buf.len(), need: n - rest });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn raw_u32(&mut self) -> Result<usize, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    /// Returns the content of the next field and its absolute start offset.
    fn field(&mut self) -> Result<(&'a [u8], usize), DecodeError> {
        let len = self.raw_u32()?;
        let start = self.offset();
        Ok((self.take(len)?, start))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        Ok(self.field()?.0.to_vec())
    }

    fn fixed<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], DecodeError> {
        let (content, start) = self.field()?;
        content.try_into().map_err(|_| DecodeError::Malformed { offset: start, what })
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.fixed::<8>("u64 must be 8 bytes")?))
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.fixed::<1>("u8 must be 1 byte")?[0])
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        let start = self.offset() + 4;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::Malformed { offset: start, what: "bool must be 0 or 1" }),
        }
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        let (content, start) = self.field()?;
        String::from_utf8(content.to_vec()).map_err(|_| DecodeError::Malformed { offset: start, what: "invalid UTF-8" })
    }

    pub fn id(&mut self) -> Result<Id, DecodeError> {
        Ok(Id(self.fixed::<ID_LEN>("id must be 16 bytes")?))
    }

    pub fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.fixed::<DIGEST_LEN>("digest must be 32 bytes")?))
    }

    fn decode_checked<T: Body>(content: &'a [u8], start: usize) -> Result<T, DecodeError> {
        let mut inner = Reader::at(content, start);
        let v = T::decode_body(&mut inner)?;
        inner.finish()?;
        v.check().map_err(|what| DecodeError::Invariant { offset: start, what })?;
        Ok(v)
    }

    pub fn nested<T: Body>(&mut self) -> Result<T, DecodeError> {
        let (content, start) = self.field()?;
        Self::decode_checked(content, start)
    }

    fn list_reader(&mut self) -> Result<(Reader<'a>, usize), DecodeError> {
        let (content, start) = self.field()?;
        let mut inner = Reader::at(content, start);
        let n = inner.raw_u32()?;
        // Each element is at least a 4-byte prefix; reject absurd counts early.
        if n > content.len() / 4 {
            return Err(DecodeError::Malformed { offset: start, what: "list count exceeds content" });
        }
        Ok((inner, n))
    }

    pub fn list<T: Body>(&mut self) -> Result<Vec<T>, DecodeError> {
        let (mut inner, n) = self.list_reader()?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(inner.nested()?);
        }
        inner.finish()?;
        Ok(out)
    }

    pub fn byte_list(&mut self) -> Result<Vec<Vec<u8>>, DecodeError> {
        let (mut inner, n) = self.list_reader()?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(inner.bytes()?);
        }
        inner.finish()?;
        Ok(out)
    }

    pub fn opt_nested<T: Body>(&mut self) -> Result<Option<T>, DecodeError> {
        let (content, start) = self.field()?;
        if content.is_empty() {
            return Ok(None);
        }
        Self::decode_checked(content, start).map(Some)
    }

    pub fn opt_bytes(&mut self) -> Result<Option<Vec<u8>>, DecodeError> {
        let (content, start) = self.field()?;
        match content.split_first() {
            None => Ok(None),
            Some((1, rest)) => Ok(Some(rest.to_vec())),
            Some(_) => Err(DecodeError::Malformed { offset: start, what: "bad option marker" }),
        }
    }

    pub fn opt_u8(&mut self) -> Result<Option<u8>, DecodeError> {
        let (content, start) = self.field()?;
        match content {
            [] => Ok(None),
            [v] => Ok(Some(*v)),
            _ => Err(DecodeError::Malformed { offset: start, what: "optional u8 must be 0 or 1 bytes" }),
        }
    }

    pub fn opt_id(&mut self) -> Result<Option<Id>, DecodeError> {
        let (content, start) = self.field()?;
        if content.is_empty() {
            return Ok(None);
        }
        content
            .try_into()
            .map(|raw| Some(Id(raw)))
            .map_err(|_| DecodeError::Malformed { offset: start, what: "id must be 16 bytes" })
    }
}

/// Encodes a body without a type tag, for nesting or hashing.
pub fn encode_body<T: Body>(v: &T) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer::new();
    w.nested_inline(v);
    w.finish()
}

impl Writer {
    fn nested_inline<T: Body>(&mut self, v: &T) {
        if let Err(what) = v.check() {
            self.fail(EncodeError::Invariant { type_name: T::NAME, what });
        }
        v.encode_body(self);
    }
}

/// Decodes a tagless body occupying the whole of `bytes`.
pub fn decode_body<T: Body>(bytes: &[u8]) -> Result<T, DecodeError> {
    Reader::decode_checked(bytes, 0)
}
