//! Little-endian helpers for the crate's binary file formats
//! (`PVT1`, `PVN1`, `PVM1`, `PVC1`).

use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum BinError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: String, found: String },
    #[error("file is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn eof_to_corrupt(e: io::Error, what: &str) -> BinError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        BinError::Corrupt(format!("unexpected end of file while reading {what}"))
    } else {
        BinError::Io(e)
    }
}

pub fn write_magic<W: Write>(w: &mut W, magic: &[u8; 4]) -> io::Result<()> {
    w.write_all(magic)
}

pub fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<(), BinError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| eof_to_corrupt(e, "magic"))?;
    if &buf != magic {
        return Err(BinError::Magic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&buf).into_owned(),
        });
    }
    Ok(())
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, BinError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| eof_to_corrupt(e, what))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_f32s<W: Write, I: IntoIterator<Item = f32>>(w: &mut W, values: I) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f32s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f32>, BinError> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes).map_err(|e| eof_to_corrupt(e, what))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<()> {
    write_u32(w, bytes.len() as u32)?;
    w.write_all(bytes)
}

/// Length-prefixed byte string, refusing lengths above `max`.
pub fn read_bytes<R: Read>(r: &mut R, max: usize, what: &str) -> Result<Vec<u8>, BinError> {
    let len = read_u32(r, what)? as usize;
    if len > max {
        return Err(BinError::Corrupt(format!("{what}: length {len} exceeds {max}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| eof_to_corrupt(e, what))?;
    Ok(buf)
}

/// Fails if any bytes remain after a complete record.
pub fn expect_eof<R: Read>(r: &mut R) -> Result<(), BinError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(BinError::Corrupt("trailing bytes after record".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_is_reported_as_corruption() {
        let mut buf = Vec::new();
        write_magic(&mut buf, b"TEST").unwrap();
        write_u32(&mut buf, 3).unwrap();
        write_f32s(&mut buf, [1.0, 2.0]).unwrap();
        let mut r = buf.as_slice();
        read_magic(&mut r, b"TEST").unwrap();
        assert_eq!(read_u32(&mut r, "count").unwrap(), 3);
        assert!(matches!(read_f32s(&mut r, 3, "data"), Err(BinError::Corrupt(_))));
    }

    #[test]
    fn wrong_magic() {
        let mut r: &[u8] = b"ABCD";
        assert!(matches!(read_magic(&mut r, b"PVT1"), Err(BinError::Magic { .. })));
    }
}
