//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "UNET" "CKP1"
//! u32 entry count
//! per entry: u32 name length, UTF-8 name, u8 rank, rank x u32 dims,
//!            prod(dims) x f32 values
//! ```

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"UNET";
pub const VERSION_TAG: &[u8; 4] = b"CKP1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version tag {0:?}")]
    VersionMismatch(String),
    #[error("checkpoint truncated at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("entry name is not valid UTF-8 at byte {offset}")]
    BadName { offset: usize },
    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("unknown tensor {0:?} in checkpoint")]
    UnknownName(String),
    #[error("tensor {0:?} missing from checkpoint")]
    MissingName(String),
    #[error("shape mismatch for {name:?}: model has {expected:?}, checkpoint has {found:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("entry {name:?} has {got} values but its dims imply {expected}")]
    ValueCount { name: String, expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl CheckpointEntry {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, values: Vec<f32>) -> Result<Self, CheckpointError> {
        let name = name.into();
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(CheckpointError::ValueCount { name, expected, got: values.len() });
        }
        Ok(CheckpointEntry { name, dims, values })
    }
}

/// Ordered named tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub version: u32,
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn new(entries: Vec<CheckpointEntry>) -> Self {
        Checkpoint { version: VERSION, entries }
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.entries.iter().map(|e| 9 + e.name.len() + 4 * e.dims.len() + 4 * e.values.len()).sum();
        let mut out = Vec::with_capacity(12 + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(VERSION_TAG);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let tag = r.take(4, "version")?;
        if tag != VERSION_TAG {
            return Err(CheckpointError::VersionMismatch(String::from_utf8_lossy(tag).into_owned()));
        }
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| CheckpointError::BadName { offset: at })?
                .to_owned();
            let rank = r.take(1, "rank")?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32("dims")? as usize);
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or(CheckpointError::Truncated { offset: r.pos, what: "values" })?, "values")?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if entries.iter().any(|e: &CheckpointEntry| e.name == name) {
                return Err(CheckpointError::DuplicateName(name));
            }
            entries.push(CheckpointEntry { name, dims, values });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Checkpoint { version: VERSION, entries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(CheckpointError::Truncated { offset: self.pos, what });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        Checkpoint::new(vec![
            CheckpointEntry::new("a.kernel", vec![2, 1, 3, 3], (0..18).map(|v| v as f32 * 0.25).collect()).unwrap(),
            CheckpointEntry::new("a.bias", vec![2], vec![-0.0, f32::MIN_POSITIVE]).unwrap(),
        ])
    }

    #[test]
    fn layout_matches_format() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"UNETCKP1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        // first entry header: name len, name, rank, 4 dims
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 8);
        assert_eq!(&bytes[16..24], b"a.kernel");
        assert_eq!(bytes[24], 4);
        let expected = 12 + (4 + 8 + 1 + 16 + 72) + (4 + 6 + 1 + 4 + 8);
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn every_truncation_is_reported() {
        let bytes = sample().to_bytes();
        for cut in 0..bytes.len() {
            let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, CheckpointError::Truncated { .. } | CheckpointError::BadMagic),
                "cut {cut}: {err:?}"
            );
        }
    }

    #[test]
    fn version_tag_is_checked() {
        let mut bytes = sample().to_bytes();
        bytes[7] = b'2';
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap_err(), CheckpointError::VersionMismatch("CKP2".into()));
        bytes[0] = b'X';
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap_err(), CheckpointError::BadMagic);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap_err(), CheckpointError::TrailingBytes(1));
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(bits in proptest::collection::vec(any::<u32>(), 0..64), name in "[a-z.]{1,12}") {
            let values: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            let ck = Checkpoint::new(vec![CheckpointEntry::new(name, vec![values.len()], values).unwrap()]);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            let a: Vec<u32> = ck.entries[0].values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.entries[0].values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(&ck.entries[0].name, &back.entries[0].name);
        }
    }
}
