//! The HTA1 tensor archive: magic, record count, named little-endian
//! records, trailing FNV-1a checksum.

/// 64-bit FNV-1a.
pub struct Fnv1a(u64);

impl Fnv1a {
    pub const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    pub const PRIME: u64 = 0x0000_0100_0000_01b3;

    pub fn new() -> Self {
        Fnv1a(Self::OFFSET)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"HTA1";

/// Element type of an archive record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

/// Serializes named tensors. With [`DType::F32`] values are narrowed.
pub fn encode(tensors: &ParamStore, dtype: DType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Format("too many records".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in tensors.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dtype as u8);
        let ndim = u8::try_from(t.shape().len()).map_err(|_| Error::Format(format!("rank too high: {name}")))?;
        out.push(ndim);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension too large: {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        match dtype {
            DType::F64 => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            DType::F32 => t
                .data()
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        }
    }
    let mut h = Fnv1a::new();
    h.write(&out);
    out.extend_from_slice(&h.finish().to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("{what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Parses an archive, verifying magic and checksum before anything else.
pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic("tensor archive".into()));
    }
    if bytes.len() < 16 {
        return Err(Error::Truncated("archive shorter than header and checksum".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let mut h = Fnv1a::new();
    h.write(body);
    if h.finish() != stored {
        return Err(Error::Checksum {
            stored,
            computed: h.finish(),
        });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let count = r.u32("record count")?;
    let mut out = ParamStore::new();
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Format("record name is not UTF-8".into()))?
            .to_string();
        let dtype = r.u8("dtype")?;
        let width = match dtype {
            0 => 4,
            1 => 8,
            other => return Err(Error::Format(format!("unknown dtype {other} for `{name}`"))),
        };
        let ndim = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = r.take(
            n.checked_mul(width)
                .ok_or_else(|| Error::Format("payload size overflow".into()))?,
            "payload",
        )?;
        let data: Vec<f64> = if width == 8 {
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        } else {
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect()
        };
        if out.get(&name).is_ok() {
            return Err(Error::DuplicateName(name));
        }
        out.insert(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last record",
            body.len() - r.pos
        )));
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_archive(path: &Path, tensors: &ParamStore) -> Result<()> {
    write_atomic(path, &encode(tensors, DType::F64)?)
}

pub fn read_archive(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sample() -> ParamStore {
        let mut rng = Rng::new(3);
        let mut s = ParamStore::new();
        s.insert("a", Tensor::randn(&[2, 3], 1.0, &mut rng)).unwrap();
        s.insert(
            "b.c",
            Tensor::from_slice(&[3], &[f64::MIN_POSITIVE, -0.0, 1e300]).unwrap(),
        )
        .unwrap();
        s
    }

    #[test]
    fn fnv_reference_values() {
        let mut h = Fnv1a::new();
        assert_eq!(h.finish(), 0xcbf29ce484222325);
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
        let mut h = Fnv1a::new();
        h.write(b"foobar");
        assert_eq!(h.finish(), 0x85944171f73967e8);
    }

    #[test]
    fn round_trip_bit_exact() {
        let s = sample();
        let bytes = encode(&s, DType::F64).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.names(), s.names());
        assert_eq!(encode(&back, DType::F64).unwrap(), bytes);
    }

    #[test]
    fn empty_archive() {
        let bytes = encode(&ParamStore::new(), DType::F64).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(decode(&bytes).unwrap().len(), 0);
    }

    #[test]
    fn f32_records_narrow() {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::from_slice(&[2], &[0.1, 2.5]).unwrap()).unwrap();
        let back = decode(&encode(&s, DType::F32).unwrap()).unwrap();
        assert_eq!(back.get("x").unwrap().data(), &[0.1f32 as f64, 2.5]);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&sample(), DType::F64).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[30] ^= 0x10;
        assert!(matches!(decode(&bad), Err(Error::Checksum { .. })));
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        // Two records named "a", with a valid checksum.
        let mut body = Vec::new();
        body.extend_from_slice(MAGIC);
        body.extend_from_slice(&2u32.to_le_bytes());
        for _ in 0..2 {
            body.extend_from_slice(&1u16.to_le_bytes());
            body.push(b'a');
            body.extend_from_slice(&[1, 1]);
            body.extend_from_slice(&1u32.to_le_bytes());
            body.extend_from_slice(&1.0f64.to_le_bytes());
        }
        let mut h = Fnv1a::new();
        h.write(&body);
        body.extend_from_slice(&h.finish().to_le_bytes());
        assert!(matches!(decode(&body), Err(Error::DuplicateName(n)) if n == "a"));
    }

    #[test]
    fn truncated_payload() {
        let mut body = Vec::new();
        body.extend_from_slice(MAGIC);
        body.extend_from_slice(&1u32.to_le_bytes());
        body.extend_from_slice(&1u16.to_le_bytes());
        body.push(b'a');
        body.extend_from_slice(&[1, 1]);
        body.extend_from_slice(&4u32.to_le_bytes());
        body.extend_from_slice(&1.0f64.to_le_bytes());
        let mut h = Fnv1a::new();
        h.write(&body);
        body.extend_from_slice(&h.finish().to_le_bytes());
        assert!(matches!(decode(&body), Err(Error::Truncated(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hta");
        write_archive(&path, &sample()).unwrap();
        assert_eq!(read_archive(&path).unwrap(), sample());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
