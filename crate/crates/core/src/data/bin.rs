//! Little-endian primitives shared by the binary container formats
//! (embeddings "SVE1", LDA transforms "SVL1", PLDA models "SVP1").

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_u16<W: Write>(w: &mut W, v: u16) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64_slice<W: Write>(w: &mut W, vs: &[f64]) -> std::io::Result<()> {
    for &v in vs {
        write_f64(w, v)?;
    }
    Ok(())
}

/// Length-prefixed UTF-8 string (u16 length, at most 65535 bytes).
pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::invalid(
            "id",
            format!("id longer than {} bytes: `{}...`", u16::MAX, &s[..32.min(s.len())]),
        ));
    }
    write_u16(w, bytes.len() as u16).and_then(|_| w.write_all(bytes)).map_err(|e| Error::Io {
        path: "<writer>".into(),
        source: e,
    })
}

pub(crate) fn read_u16<R: Read>(r: &mut R) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_f64_vec<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = read_u16(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Runs a writer closure and flush, mapping i/o errors to `path`.
pub(crate) fn write_io<W, F>(w: &mut W, path: &Path, body: F) -> Result<()>
where
    W: Write,
    F: FnOnce(&mut W) -> std::io::Result<()>,
{
    body(w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub(crate) fn read_u32_ctx<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    read_u32(r).map_err(|e| io_err(path, e))
}

pub(crate) fn read_f64_vec_ctx<R: Read>(r: &mut R, n: usize, path: &Path) -> Result<Vec<f64>> {
    read_f64_vec(r, n).map_err(|e| io_err(path, e))
}

/// Checks a 4-byte magic, reporting a malformed-header error otherwise.
pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4], path: &Path) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(|e| io_err(path, e))?;
    if &got != magic {
        return Err(Error::parse(
            path,
            0,
            format!(
                "bad magic: expected {:?}, got {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&got)
            ),
        ));
    }
    Ok(())
}
