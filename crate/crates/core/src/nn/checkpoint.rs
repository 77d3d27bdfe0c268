//! Binary checkpoint streams for named tensors.
//!
//! Layout: the 4-byte magic `RBL1`, then zero or more records until EOF.
//! Each record is `name_len: u32 LE`, the UTF-8 name bytes, `rows: u32 LE`,
//! `cols: u32 LE`, then `rows * cols` little-endian `f64` values in row-major
//! order. Vectors are stored as `1 x n` tensors. Malformed input reports the
//! byte offset where decoding failed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;
use crate::wire::{malformed, OffsetReader};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RBL1";

/// Names longer than this are treated as corruption rather than data.
const MAX_NAME_LEN: u32 = 1 << 16;

pub fn write_checkpoint<W: Write>(mut w: W, entries: &[(&str, &Tensor2)]) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    for (name, tensor) in entries {
        let bytes = name.as_bytes();
        if bytes.len() as u64 > MAX_NAME_LEN as u64 {
            return Err(Error::Config(format!(
                "tensor name `{}...` exceeds {MAX_NAME_LEN} bytes",
                &name[..16.min(name.len())]
            )));
        }
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.rows() as u32).to_le_bytes())?;
        w.write_all(&(tensor.cols() as u32).to_le_bytes())?;
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Vec<(String, Tensor2)>> {
    let mut reader = OffsetReader::new(r);
    let mut magic = [0u8; 4];
    reader
        .read_exact_at(&mut magic)
        .map_err(|_| malformed(0, "stream shorter than the 4-byte magic"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(malformed(0, format!("bad magic {magic:?}, expected `RBL1`")));
    }

    let mut entries = Vec::new();
    loop {
        let record_start = reader.offset();
        let name_len = match reader.try_read_u32("a name length field")? {
            Some(v) => v,
            None => break,
        };
        if name_len > MAX_NAME_LEN {
            return Err(malformed(
                record_start,
                format!("name length {name_len} exceeds the {MAX_NAME_LEN} limit"),
            ));
        }
        let name_at = reader.offset();
        let mut name_bytes = vec![0u8; name_len as usize];
        reader.read_exact_at(&mut name_bytes).map_err(|offset| {
            malformed(offset, "stream ended inside a tensor name")
        })?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| malformed(name_at, "tensor name is not valid UTF-8"))?;

        let rows = reader.read_u32("the row count")?;
        let cols = reader.read_u32("the column count")?;

        let data_at = reader.offset();
        let len = rows as usize * cols as usize;
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for i in 0..len {
            reader.read_exact_at(&mut buf).map_err(|offset| {
                malformed(
                    offset,
                    format!("stream ended inside the data of `{name}` (value {i} of {len})"),
                )
            })?;
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(malformed(
                    data_at + 8 * i as u64,
                    format!("non-finite value in tensor `{name}`"),
                ));
            }
            data.push(v);
        }
        let tensor = Tensor2::from_vec(rows as usize, cols as usize, data).map_err(|e| {
            malformed(record_start, format!("tensor `{name}` is malformed: {e}"))
        })?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

pub fn save_checkpoint<P: AsRef<Path>>(path: P, entries: &[(&str, &Tensor2)]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Vec<(String, Tensor2)>> {
    let file = File::open(path)?;
    read_checkpoint(BufReader::new(file))
}

/// Looks up one tensor by name in a loaded checkpoint.
pub fn find_tensor<'a>(entries: &'a [(String, Tensor2)], name: &str) -> Result<&'a Tensor2> {
    entries
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::State(format!("checkpoint is missing tensor `{name}`")))
}
