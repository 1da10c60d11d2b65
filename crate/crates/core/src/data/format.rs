//! Little-endian binary containers for datasets (`EEGUNLRN`) and
//! perturbation sets (`EEGDELTA`). Both end in a CRC32 of every preceding
//! byte. Sample values are stored as `f32`.

use std::fs;
use std::path::Path;

use super::{Dataset, PerturbationMode, PerturbationSet};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"EEGUNLRN";
pub const DELTA_MAGIC: &[u8; 8] = b"EEGDELTA";
pub const VERSION: u32 = 1;

pub fn encode_dataset(d: &Dataset) -> Result<Vec<u8>> {
    let dims = d.dims();
    let mut out = Vec::with_capacity(40 + dims.trials * (12 + 4 * d.trial_size()));
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, VERSION);
    for v in [
        dims.trials,
        dims.channels,
        dims.len,
        dims.classes,
        dims.users,
        dims.sessions,
    ] {
        put_u32(&mut out, to_u32(v)?);
    }
    for labels in [d.task_labels(), d.user_labels(), d.session_labels()] {
        for &l in labels {
            put_u32(&mut out, to_u32(l)?);
        }
    }
    for &v in d.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    seal(&mut out);
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::open(bytes, DATASET_MAGIC, "dataset")?;
    let n = r.u32()? as usize;
    let c = r.u32()? as usize;
    let t = r.u32()? as usize;
    let k = r.u32()? as usize;
    let u = r.u32()? as usize;
    let s = r.u32()? as usize;
    let values = (n as u64) * (c as u64) * (t as u64);
    let expected = 36u64 + 12 * n as u64 + 4 * values + 4;
    r.expect_total(expected)?;
    let ys = r.labels(n)?;
    let us = r.labels(n)?;
    let ss = r.labels(n)?;
    let trials = r.f32s(values as usize)?;
    Dataset::new(c, t, k, u, s, trials, ys, us, ss)
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(d)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

pub fn encode_perturbation(p: &PerturbationSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(36 + 4 * p.data().len());
    out.extend_from_slice(DELTA_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, p.mode().code());
    for v in [p.count(), p.channels(), p.samples()] {
        put_u32(&mut out, to_u32(v)?);
    }
    out.extend_from_slice(&(p.epsilon() as f32).to_le_bytes());
    for &v in p.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    seal(&mut out);
    Ok(out)
}

pub fn decode_perturbation(bytes: &[u8]) -> Result<PerturbationSet> {
    let mut r = Reader::open(bytes, DELTA_MAGIC, "perturbation")?;
    let mode = PerturbationMode::from_code(r.u32()?)?;
    let count = r.u32()? as usize;
    let c = r.u32()? as usize;
    let t = r.u32()? as usize;
    let values = (count as u64) * (c as u64) * (t as u64);
    r.expect_total(32 + 4 * values + 4)?;
    let epsilon = r.f32s(1)?[0];
    let deltas = r.f32s(values as usize)?;
    PerturbationSet::new(mode, c, t, deltas, epsilon)
}

pub fn write_perturbation(p: &PerturbationSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_perturbation(p)?)?;
    Ok(())
}

pub fn read_perturbation(path: impl AsRef<Path>) -> Result<PerturbationSet> {
    decode_perturbation(&fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))
}

fn seal(out: &mut Vec<u8>) {
    let crc = crc32fast::hash(out);
    put_u32(out, crc);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic, version and trailing CRC, leaving the cursor after the version.
    fn open(bytes: &'a [u8], magic: &[u8; 8], what: &str) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != magic {
            if bytes.len() < 8 && magic.starts_with(bytes) {
                return Err(Error::Corruption(format!(
                    "{what} file truncated inside the magic"
                )));
            }
            return Err(Error::Format(format!("not a {what} file (bad magic)")));
        }
        if bytes.len() < 16 {
            return Err(Error::Corruption(format!(
                "{what} file truncated ({} bytes)",
                bytes.len()
            )));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported {what} version {version}"
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Corruption(format!(
                "{what} checksum mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }
        Ok(Self {
            bytes: body,
            pos: 12,
        })
    }

    fn expect_total(&self, total: u64) -> Result<()> {
        let actual = self.bytes.len() as u64 + 4;
        if actual != total {
            return Err(Error::Corruption(format!(
                "expected {total} bytes from header, found {actual}"
            )));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corruption("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn labels(&mut self, n: usize) -> Result<Vec<usize>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::new(
            2,
            3,
            2,
            2,
            2,
            (0..12).map(|i| i as f64 * 0.5 - 2.0).collect(),
            vec![0, 1],
            vec![1, 0],
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_dataset(&sample()).unwrap();
        assert_eq!(&bytes[..8], b"EEGUNLRN");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 36 + 24 + 48 + 4);
    }

    #[test]
    fn round_trip() {
        let d = sample();
        assert_eq!(decode_dataset(&encode_dataset(&d).unwrap()).unwrap(), d);
    }

    #[test]
    fn empty_dataset() {
        let d = Dataset::new(4, 16, 2, 3, 1, vec![], vec![], vec![], vec![]).unwrap();
        let bytes = encode_dataset(&d).unwrap();
        assert_eq!(bytes.len(), 40);
        assert_eq!(decode_dataset(&bytes).unwrap(), d);
    }

    #[test]
    fn flipped_crc_byte() {
        let mut bytes = encode_dataset(&sample()).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        assert!(matches!(decode_dataset(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn flipped_payload_byte() {
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes[70] ^= 0x80;
        assert!(matches!(decode_dataset(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes[8] = 2;
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_dataset(b"EEGU"), Err(Error::Corruption(_))));
    }

    #[test]
    fn truncated() {
        let bytes = encode_dataset(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(decode_dataset(cut), Err(Error::Corruption(_))));
    }

    #[test]
    fn out_of_range_label_with_valid_crc() {
        let mut bytes = encode_dataset(&sample()).unwrap();
        // first task label lives right after the 36-byte header
        bytes[36] = 5;
        bytes.truncate(bytes.len() - 4);
        seal(&mut bytes);
        assert!(matches!(decode_dataset(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn perturbation_round_trip() {
        let p = PerturbationSet::new(
            PerturbationMode::SampleWise,
            2,
            3,
            vec![0.01, -0.01, 0.0, 0.005, -0.0025, 0.01],
            0.01,
        )
        .unwrap();
        let bytes = encode_perturbation(&p).unwrap();
        assert_eq!(&bytes[..8], b"EEGDELTA");
        let back = decode_perturbation(&bytes).unwrap();
        assert_eq!(back.mode(), PerturbationMode::SampleWise);
        assert_eq!(back.epsilon(), 0.01f32 as f64);
        assert!(back.max_abs() <= back.epsilon());
        assert_eq!(encode_perturbation(&back).unwrap(), bytes);

        let u =
            PerturbationSet::new(PerturbationMode::UserWise, 1, 2, vec![1.5, -3.25], 0.0).unwrap();
        assert_eq!(
            decode_perturbation(&encode_perturbation(&u).unwrap()).unwrap(),
            u
        );
    }
}
