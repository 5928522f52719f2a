//! Binary PGM (P5) with maxval 255.

use thiserror::Error;

use super::Plane;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PgmError {
    #[error("unsupported format {0:?}; only binary P5 is supported")]
    UnsupportedFormat(String),
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("maxval {0} unsupported; expected 255")]
    MaxVal(u32),
    #[error("pixel data truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u32, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::MalformedHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::MalformedHeader(what))
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<Plane<u8>, PgmError> {
    if bytes.len() < 2 {
        return Err(PgmError::MalformedHeader("missing magic number"));
    }
    let magic = &bytes[..2];
    if magic != b"P5" {
        return Err(PgmError::UnsupportedFormat(String::from_utf8_lossy(magic).into_owned()));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(PgmError::MaxVal(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(PgmError::MalformedHeader("no whitespace after maxval")),
    }
    let expected = width * height;
    let payload = &bytes[h.pos..];
    if payload.len() < expected {
        return Err(PgmError::Truncated { expected, got: payload.len() });
    }
    Ok(Plane::from_vec(height, width, payload[..expected].to_vec()).expect("sized above"))
}

pub fn write_pgm(raster: &Plane<u8>) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", raster.width(), raster.height());
    let mut out = Vec::with_capacity(header.len() + raster.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(raster.data());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_size_frame_byte_length() {
        let img = Plane::filled(512, 640, 7u8);
        let bytes = write_pgm(&img);
        // "P5\n" + "640 512\n" + "255\n" = 3 + 8 + 4
        assert_eq!(bytes.len(), 640 * 512 + 15);
    }

    #[test]
    fn ascii_variant_rejected() {
        let err = read_pgm(b"P2\n2 1\n255\n0 0\n").unwrap_err();
        assert_eq!(err, PgmError::UnsupportedFormat("P2".into()));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 2 # size\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.get(1, 0), 3);
    }

    #[test]
    fn header_errors() {
        assert_eq!(read_pgm(b"P5\n2 2\n65535\n").unwrap_err(), PgmError::MaxVal(65535));
        assert_eq!(read_pgm(b"P5\nx 2\n255\n").unwrap_err(), PgmError::MalformedHeader("width"));
        assert_eq!(read_pgm(b"P5\n2 2\n255\n\x01\x02").unwrap_err(), PgmError::Truncated { expected: 4, got: 2 });
        assert!(read_pgm(b"P").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
            let data: Vec<u8> = (0..h * w).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let img = Plane::from_vec(h, w, data).unwrap();
            prop_assert_eq!(read_pgm(&write_pgm(&img)).unwrap(), img);
        }
    }
}
