//! Little-endian binary container shared by every file this crate writes.
//!
//! Layout: magic `CVRK`, format version (u16), file kind (u8), then a
//! kind-specific payload.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVRK";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FileKind {
    Examples = 1,
    Checkpoint = 2,
    Vocabulary = 3,
    Pools = 4,
    UserVector = 5,
}

impl FileKind {
    fn name(self) -> &'static str {
        match self {
            FileKind::Examples => "examples",
            FileKind::Checkpoint => "checkpoint",
            FileKind::Vocabulary => "vocabulary",
            FileKind::Pools => "pools",
            FileKind::UserVector => "user vector",
        }
    }
}

pub struct BinWriter<W> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W, kind: FileKind) -> Result<Self> {
        let mut w = BinWriter { inner };
        w.inner.write_all(MAGIC)?;
        w.u16(FORMAT_VERSION)?;
        w.u8(kind as u8)?;
        Ok(w)
    }

    pub fn u8(&mut self, v: u8) -> io::Result<()> {
        self.inner.write_all(&[v])
    }

    pub fn u16(&mut self, v: u16) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn u32(&mut self, v: u32) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn usize(&mut self, v: usize) -> io::Result<()> {
        self.u64(v as u64)
    }

    pub fn f32s(&mut self, values: &[f64]) -> io::Result<()> {
        for &v in values {
            self.inner.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> io::Result<()> {
        self.u32(s.len() as u32)?;
        self.inner.write_all(s.as_bytes())
    }

    pub fn tokens(&mut self, tokens: &[String]) -> io::Result<()> {
        self.u32(tokens.len() as u32)?;
        tokens.iter().try_for_each(|t| self.str(t))
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct BinReader<R> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(mut inner: R, kind: FileKind) -> Result<Self> {
        let mut magic = [0u8; 4];
        inner
            .read_exact(&mut magic)
            .map_err(|_| Error::format("file too short for header"))?;
        if &magic != MAGIC {
            return Err(Error::format("missing CVRK magic"));
        }
        let mut r = BinReader { inner };
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let found = r.u8()?;
        if found != kind as u8 {
            return Err(Error::format(format!(
                "expected a {} file, found kind tag {found}",
                kind.name()
            )));
        }
        Ok(r)
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::format("truncated file"),
            _ => Error::Io(e),
        })
    }

    pub fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.fill(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::format("length overflows usize"))
    }

    pub fn f32s(&mut self, out: &mut [f64]) -> Result<()> {
        let mut b = [0u8; 4];
        for slot in out.iter_mut() {
            self.fill(&mut b)?;
            *slot = f64::from(f32::from_le_bytes(b));
        }
        Ok(())
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.fill(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::format("invalid UTF-8 string"))
    }

    pub fn tokens(&mut self) -> Result<Vec<String>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.str()).collect()
    }

    /// Fails unless the stream is exhausted.
    pub fn expect_end(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::format("trailing bytes after payload")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scalars_round_trip() {
        let mut w = BinWriter::new(Vec::new(), FileKind::Pools).unwrap();
        w.u32(7).unwrap();
        w.str("héllo").unwrap();
        w.f32s(&[0.5, -2.25]).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(&bytes[..4], b"CVRK");
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());

        let mut r = BinReader::new(&bytes[..], FileKind::Pools).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "héllo");
        let mut xs = [0.0; 2];
        r.f32s(&mut xs).unwrap();
        assert_eq!(xs, [0.5, -2.25]);
        r.expect_end().unwrap();
    }

    #[test]
    fn wrong_kind_and_truncation_are_rejected() {
        let w = BinWriter::new(Vec::new(), FileKind::Examples).unwrap();
        let bytes = w.finish().unwrap();
        assert!(matches!(
            BinReader::new(&bytes[..], FileKind::Checkpoint),
            Err(Error::Format(_))
        ));
        let mut r = BinReader::new(&bytes[..], FileKind::Examples).unwrap();
        assert!(matches!(r.u32(), Err(Error::Format(_))));
    }
}
