//! Channel dataset files.
//!
//! Layout: the 4-byte magic `RCH1`, a little-endian header of five u32 values
//! (`K`, `N_t`, `N_r`, `M`, `sample_count`), then per sample interleaved
//! little-endian f64 `(re, im)` pairs for `direct[0..K]`, `bs_ris`,
//! `ris_user[0..K]`, each matrix row-major. Decode failures report the byte
//! offset where input ran out or went bad.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::channel::cmatrix::CMatrix;
use crate::channel::types::ChannelSet;
use crate::error::{Error, Result};
use crate::wire::{malformed, OffsetReader};

pub const DATASET_MAGIC: [u8; 4] = *b"RCH1";

pub fn write_dataset<W: Write>(mut w: W, sets: &[ChannelSet]) -> Result<()> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Config("a dataset needs at least one sample".into()))?;
    let (k, n_t, n_r, m) = (
        first.users(),
        first.n_t(),
        first.n_r(),
        first.ris_elements(),
    );
    for (i, s) in sets.iter().enumerate() {
        if s.users() != k || s.n_t() != n_t || s.n_r() != n_r || s.ris_elements() != m {
            return Err(Error::Dimension(format!(
                "sample {i} has different dimensions than sample 0"
            )));
        }
    }
    if sets.len() as u64 > u32::MAX as u64 {
        return Err(Error::Config("sample count exceeds the u32 header field".into()));
    }

    w.write_all(&DATASET_MAGIC)?;
    for v in [k, n_t, n_r, m, sets.len()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for s in sets {
        for v in s.flatten_interleaved() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<Vec<ChannelSet>> {
    let mut reader = OffsetReader::new(r);
    let mut magic = [0u8; 4];
    reader
        .read_exact_at(&mut magic)
        .map_err(|_| malformed(0, "stream shorter than the 4-byte magic"))?;
    if magic != DATASET_MAGIC {
        return Err(malformed(0, format!("bad magic {magic:?}, expected `RCH1`")));
    }

    let k = reader.read_u32("the user count")? as usize;
    let n_t = reader.read_u32("the transmit antenna count")? as usize;
    let n_r = reader.read_u32("the receive antenna count")? as usize;
    let m = reader.read_u32("the surface element count")? as usize;
    let samples = reader.read_u32("the sample count")? as usize;
    if k == 0 || n_t == 0 || n_r == 0 || m == 0 {
        return Err(malformed(4, "header contains a zero dimension"));
    }

    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut matrix = |rows: usize, cols: usize, what: &str| -> Result<CMatrix> {
            let at = reader.offset();
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let re = reader.read_f64(&format!("sample {i} ({what})"))?;
                let im = reader.read_f64(&format!("sample {i} ({what})"))?;
                data.push(Complex64::new(re, im));
            }
            CMatrix::from_vec(rows, cols, data)
                .map_err(|e| malformed(at, format!("sample {i} ({what}): {e}")))
        };
        let direct = (0..k)
            .map(|u| matrix(n_r, n_t, &format!("direct channel {u}")))
            .collect::<Result<Vec<_>>>()?;
        let bs_ris = matrix(m, n_t, "base-surface channel")?;
        let ris_user = (0..k)
            .map(|u| matrix(n_r, m, &format!("surface-user channel {u}")))
            .collect::<Result<Vec<_>>>()?;
        out.push(ChannelSet::new(direct, bs_ris, ris_user).expect("header-consistent shapes"));
    }
    reader.expect_eof()?;
    Ok(out)
}

pub fn save_dataset<P: AsRef<Path>>(path: P, sets: &[ChannelSet]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, sets)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<Vec<ChannelSet>> {
    let file = File::open(path)?;
    read_dataset(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate::ChannelProcess;
    use crate::channel::types::ScenarioConfig;

    fn sample_sets(n: usize) -> Vec<ChannelSet> {
        let cfg = ScenarioConfig {
            n_t: 3,
            n_r: 1,
            ris_elements: 2,
            users: 2,
            ..ScenarioConfig::default()
        };
        let mut process = ChannelProcess::new(&cfg, 77).unwrap();
        (0..n).map(|_| process.draw()).collect()
    }

    fn sample_bytes(set: &ChannelSet) -> usize {
        8 * set.flatten_interleaved().len()
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let sets = sample_sets(3);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sets).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in sets.iter().zip(&back) {
            let (fa, fb) = (a.flatten_interleaved(), b.flatten_interleaved());
            assert!(fa
                .iter()
                .zip(&fb)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("channels.rch");
        let sets = sample_sets(2);
        save_dataset(&path, &sets).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), sets);
    }

    #[test]
    fn empty_sample_list_is_rejected_on_write() {
        let mut buf = Vec::new();
        assert!(matches!(
            write_dataset(&mut buf, &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mixed_dimensions_are_rejected_on_write() {
        let mut sets = sample_sets(1);
        let other_cfg = ScenarioConfig {
            n_t: 4,
            n_r: 1,
            ris_elements: 2,
            users: 2,
            ..ScenarioConfig::default()
        };
        sets.push(ChannelProcess::new(&other_cfg, 1).unwrap().draw());
        let mut buf = Vec::new();
        assert!(matches!(
            write_dataset(&mut buf, &sets),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let sets = sample_sets(1);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sets).unwrap();
        buf[1] = b'X';
        assert!(matches!(
            read_dataset(buf.as_slice()),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn truncation_reports_the_failing_offset() {
        let sets = sample_sets(2);
        let per_sample = sample_bytes(&sets[0]);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sets).unwrap();
        // Cut 5 bytes into the second sample's third f64.
        let cut = 24 + per_sample + 16 + 5;
        buf.truncate(cut);
        match read_dataset(buf.as_slice()).unwrap_err() {
            Error::Format { offset, message } => {
                assert_eq!(offset, cut as u64);
                assert!(message.contains("sample 1"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_samples_relative_to_header_fail() {
        let sets = sample_sets(2);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sets).unwrap();
        // Claim 3 samples in the header while providing 2.
        buf[20..24].copy_from_slice(&3u32.to_le_bytes());
        match read_dataset(buf.as_slice()).unwrap_err() {
            Error::Format { offset, message } => {
                assert_eq!(offset as usize, buf.len());
                assert!(message.contains("sample 2"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let sets = sample_sets(1);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sets).unwrap();
        let end = buf.len();
        buf.push(0);
        match read_dataset(buf.as_slice()).unwrap_err() {
            Error::Format { offset, message } => {
                assert_eq!(offset as usize, end);
                assert!(message.contains("trailing"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let sets = sample_sets(1);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sets).unwrap();
        buf[24..32].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(
            read_dataset(buf.as_slice()),
            Err(Error::Format { .. })
        ));
    }
}
