//! Offset-tracked reading for the binary file formats. Every decode failure
//! reports the byte offset where input ran out or went bad.

use std::io::Read;

use crate::error::{Error, Result};

pub(crate) fn malformed(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

pub(crate) struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Fills `buf` completely or reports the offset where input ran out.
    pub fn read_exact_at(&mut self, buf: &mut [u8]) -> std::result::Result<(), u64> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => return Err(self.offset + filled as u64),
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => return Err(self.offset + filled as u64),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    /// Reads a u32, returning `None` at a clean EOF boundary and an error if
    /// the stream ends partway through. `what` names the field for messages.
    pub fn try_read_u32(&mut self, what: &str) -> Result<Option<u32>> {
        let mut buf = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => {
                    return Err(malformed(
                        self.offset + filled as u64,
                        format!("stream ended inside {what}"),
                    ))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += 4;
        Ok(Some(u32::from_le_bytes(buf)))
    }

    /// Reads a required u32.
    pub fn read_u32(&mut self, what: &str) -> Result<u32> {
        let at = self.offset;
        self.try_read_u32(what)?
            .ok_or_else(|| malformed(at, format!("stream ended before {what}")))
    }

    /// Reads a required little-endian f64.
    pub fn read_f64(&mut self, what: &str) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.read_exact_at(&mut buf)
            .map_err(|offset| malformed(offset, format!("stream ended inside {what}")))?;
        Ok(f64::from_le_bytes(buf))
    }

    /// Errors unless the stream is exactly at EOF.
    pub fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => {
                    return Err(malformed(
                        self.offset,
                        "trailing bytes after the last record",
                    ))
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}
