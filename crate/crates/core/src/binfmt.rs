//! Little-endian primitives shared by the EMB1 and PRB1 containers.
//!
//! Both formats end in a u32 CRC32 over every preceding byte.

use crate::error::FormatError;

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// u16 length prefix followed by UTF-8 bytes.
    pub fn short_str(&mut self, s: &str) -> Result<(), FormatError> {
        let len = u16::try_from(s.len())
            .map_err(|_| FormatError::Malformed(format!("string longer than 65535 bytes: {s:.32}…")))?;
        self.u16(len);
        self.bytes(s.as_bytes());
        Ok(())
    }

    /// Appends the CRC32 trailer and returns the finished buffer.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks the magic and returns a reader positioned just after it. The
    /// CRC trailer is excluded from the readable region; call
    /// [`Reader::verify_crc`] once header fields have been sanity-checked.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self, FormatError> {
        if bytes.len() < 4 {
            return Err(FormatError::Truncated {
                offset: bytes.len(),
                needed: 4 - bytes.len(),
            });
        }
        let found: [u8; 4] = bytes[..4].try_into().unwrap();
        if &found != magic {
            return Err(FormatError::BadMagic {
                expected: *magic,
                found,
            });
        }
        Ok(Reader {
            data: bytes,
            pos: 4,
        })
    }

    /// Bytes left before the 4-byte CRC trailer (saturating).
    pub fn payload_remaining(&self) -> usize {
        self.data.len().saturating_sub(4).saturating_sub(self.pos)
    }

    pub fn verify_crc(&mut self) -> Result<(), FormatError> {
        if self.data.len() < self.pos + 4 {
            return Err(FormatError::Truncated {
                offset: self.data.len(),
                needed: self.pos + 4 - self.data.len(),
            });
        }
        let (body, trailer) = self.data.split_at(self.data.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(FormatError::CrcMismatch { stored, computed });
        }
        self.data = body;
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.data.len() - self.pos < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - (self.data.len() - self.pos),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32_into(&mut self, out: &mut [f32]) -> Result<(), FormatError> {
        let raw = self.take(out.len() * 4)?;
        for (dst, chunk) in out.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(())
    }

    pub fn short_str(&mut self) -> Result<String, FormatError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| FormatError::InvalidUtf8)
    }

    pub fn finish(self) -> Result<(), FormatError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}
