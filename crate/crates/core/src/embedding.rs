//! EMB1: a self-describing binary container for row-major `f32` embedding matrices.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                 |
//! |--------|------|---------------------------------------|
//! | 0      | 4    | magic `b"EMB1"`                       |
//! | 4      | 4    | `u32` version, always 1               |
//! | 8      | 4    | `u32` dim (> 0)                       |
//! | 12     | 8    | `u64` count (rows)                    |
//! | 20     | 1    | `u8` dtype tag, 1 = IEEE-754 f32 LE   |
//! | 21     | 7    | reserved, zero                        |
//! | 28     | ...  | `count * dim` f32 values, row-major   |
//!
//! Row `i` holds the embedding of corpus pair `i`. [`EmbeddingFile`] exposes
//! the header without touching the payload and serves row ranges on demand.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::ops::Range;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub dim: usize,
    pub count: u64,
}

impl Header {
    pub fn payload_len(&self) -> Option<u64> {
        self.count.checked_mul(self.dim as u64)?.checked_mul(4)
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&(self.dim as u32).to_le_bytes());
        out[12..20].copy_from_slice(&self.count.to_le_bytes());
        out[20] = DTYPE_F32;
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::EmbeddingFormat { path: None, reason };
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!(
                "truncated header: {} of {HEADER_LEN} bytes",
                bytes.len()
            )));
        }
        if bytes[0..4] != MAGIC {
            return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(bad("dimension must be positive".into()));
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if bytes[20] != DTYPE_F32 {
            return Err(bad(format!("unsupported dtype tag {}", bytes[20])));
        }
        if bytes[21..HEADER_LEN].iter().any(|&b| b != 0) {
            return Err(bad("reserved header bytes are not zero".into()));
        }
        Ok(Header { dim, count })
    }
}

/// Read access to a row-major embedding matrix, in memory or on disk.
pub trait RowSource: Sync {
    fn dim(&self) -> usize;
    fn count(&self) -> u64;

    /// Replaces the contents of `buf` with rows `range`, `range.len() * dim` values.
    fn read_rows(&self, range: Range<u64>, buf: &mut Vec<f32>) -> Result<()>;
}

/// Dense in-memory matrix. Invariants: `data.len() == count * dim`, all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        check_finite(&data, dim, 0)?;
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        (self.data.len() / self.dim) as u64
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn header(&self) -> Header {
        Header {
            dim: self.dim,
            count: self.count(),
        }
    }
}

impl RowSource for EmbeddingMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn count(&self) -> u64 {
        EmbeddingMatrix::count(self)
    }

    fn read_rows(&self, range: Range<u64>, buf: &mut Vec<f32>) -> Result<()> {
        check_range(&range, self.count())?;
        buf.clear();
        buf.extend_from_slice(
            &self.data[range.start as usize * self.dim..range.end as usize * self.dim],
        );
        Ok(())
    }
}

fn check_range(range: &Range<u64>, count: u64) -> Result<()> {
    if range.start > range.end || range.end > count {
        return Err(Error::InvalidArgument(format!(
            "row range {}..{} outside 0..{count}",
            range.start, range.end
        )));
    }
    Ok(())
}

fn check_finite(values: &[f32], dim: usize, first_row: u64) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(pos) => Err(Error::NonFiniteEmbedding {
            row: first_row + (pos / dim) as u64,
            column: pos % dim,
        }),
    }
}

/// An EMB1 file opened for lazy row-range reads.
///
/// Opening reads and checks only the header and the file length. Rows are
/// fetched with positioned reads, so one handle can serve concurrent readers.
#[derive(Debug)]
pub struct EmbeddingFile {
    path: PathBuf,
    header: Header,
    file: File,
}

/// Opens an EMB1 file, validating header and payload size but not the values.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    EmbeddingFile::open(path)
}

impl EmbeddingFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut head = Vec::with_capacity(HEADER_LEN);
        (&mut file)
            .take(HEADER_LEN as u64)
            .read_to_end(&mut head)
            .map_err(|e| Error::io(path, e))?;
        let header = Header::decode(&head).map_err(|e| e.with_path(path))?;
        let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let expected = header
            .payload_len()
            .and_then(|n| n.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| Error::EmbeddingFormat {
                path: Some(path.to_path_buf()),
                reason: "count * dim overflows".into(),
            })?;
        if actual != expected {
            return Err(Error::EmbeddingFormat {
                path: Some(path.to_path_buf()),
                reason: format!(
                    "payload is {} bytes but count {} x dim {} needs {}",
                    actual.saturating_sub(HEADER_LEN as u64),
                    header.count,
                    header.dim,
                    expected - HEADER_LEN as u64
                ),
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            file,
        })
    }

    pub fn header(&self) -> Header {
        self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Reads the entire matrix into memory.
    pub fn load(&self) -> Result<EmbeddingMatrix> {
        let mut data = Vec::new();
        self.read_rows(0..self.header.count, &mut data)?;
        Ok(EmbeddingMatrix {
            dim: self.header.dim,
            data,
        })
    }

    /// Scans the full payload for non-finite values, `chunk_rows` rows at a time.
    pub fn validate(&self, chunk_rows: u64) -> Result<()> {
        let chunk = chunk_rows.max(1);
        let mut buf = Vec::new();
        let mut start = 0;
        while start < self.header.count {
            let end = (start + chunk).min(self.header.count);
            self.read_rows(start..end, &mut buf)?;
            start = end;
        }
        Ok(())
    }
}

impl RowSource for EmbeddingFile {
    fn dim(&self) -> usize {
        self.header.dim
    }

    fn count(&self) -> u64 {
        self.header.count
    }

    fn read_rows(&self, range: Range<u64>, buf: &mut Vec<f32>) -> Result<()> {
        check_range(&range, self.header.count)?;
        let dim = self.header.dim;
        let values = (range.end - range.start) as usize * dim;
        let mut bytes = vec![0u8; values * 4];
        let offset = HEADER_LEN as u64 + range.start * dim as u64 * 4;
        self.file
            .read_exact_at(&mut bytes, offset)
            .map_err(|e| Error::io(&self.path, e))?;
        buf.clear();
        buf.reserve(values);
        buf.extend(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        check_finite(buf, dim, range.start)
    }
}

/// Streaming EMB1 writer for matrices that do not fit in memory.
pub struct EmbeddingWriter {
    out: BufWriter<File>,
    path: PathBuf,
    header: Header,
    written: u64,
}

impl EmbeddingWriter {
    pub fn create(path: impl AsRef<Path>, dim: usize, count: u64) -> Result<Self> {
        let path = path.as_ref();
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "unsupported dimension {dim}"
            )));
        }
        let header = Header { dim, count };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.encode())
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            header,
            written: 0,
        })
    }

    /// Appends whole rows; `values.len()` must be a multiple of `dim`.
    pub fn write_rows(&mut self, values: &[f32]) -> Result<()> {
        let dim = self.header.dim;
        if !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: values.len() % dim,
            });
        }
        let rows = (values.len() / dim) as u64;
        if self.written + rows > self.header.count {
            return Err(Error::CountMismatch {
                what: "rows written to embedding file".into(),
                expected: self.header.count,
                found: self.written + rows,
            });
        }
        check_finite(values, dim, self.written)?;
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.out
            .write_all(&bytes)
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += rows;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.count {
            return Err(Error::CountMismatch {
                what: "rows written to embedding file".into(),
                expected: self.header.count,
                found: self.written,
            });
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = EmbeddingWriter::create(path, matrix.dim, matrix.count())?;
    w.write_rows(&matrix.data)?;
    w.finish()
}

/// Fails unless the matrix has exactly one row per corpus pair.
pub fn validate_alignment(matrix: &dyn RowSource, corpus_count: u64) -> Result<()> {
    if matrix.count() != corpus_count {
        return Err(Error::CountMismatch {
            what: "embedding rows vs corpus pairs".into(),
            expected: corpus_count,
            found: matrix.count(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_file(dir: &Path, header: &[u8], payload_bytes: usize) -> PathBuf {
        let path = dir.join("m.emb");
        let mut bytes = header.to_vec();
        bytes.resize(bytes.len() + payload_bytes, 0);
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn header_layout_is_fixed() {
        let h = Header { dim: 3, count: 2 }.encode();
        assert_eq!(
            h,
            [
                b'E', b'M', b'B', b'1', 1, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0,
                0, 0, 0, 0
            ]
        );
    }

    #[test]
    fn size_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let header = Header { dim: 3, count: 2 }.encode();

        let ok = raw_file(dir.path(), &header, 24);
        let f = load_embeddings(&ok).unwrap();
        assert_eq!(f.header(), Header { dim: 3, count: 2 });

        let short = raw_file(dir.path(), &header, 20);
        let err = load_embeddings(&short).unwrap_err();
        assert!(matches!(err, Error::EmbeddingFormat { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_header_fields() {
        let dir = tempfile::tempdir().unwrap();
        let good = Header { dim: 3, count: 0 }.encode();

        let mut magic = good;
        magic[0..4].copy_from_slice(b"XXXX");
        let err = load_embeddings(raw_file(dir.path(), &magic, 0)).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let mut version = good;
        version[4] = 2;
        let err = load_embeddings(raw_file(dir.path(), &version, 0)).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");

        let mut dtype = good;
        dtype[20] = 2;
        assert!(load_embeddings(raw_file(dir.path(), &dtype, 0)).is_err());

        let mut reserved = good;
        reserved[27] = 9;
        assert!(load_embeddings(raw_file(dir.path(), &reserved, 0)).is_err());

        assert!(load_embeddings(raw_file(dir.path(), &good[..10], 0)).is_err());
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.emb");
        let m = EmbeddingMatrix::new(4, vec![]).unwrap();
        write_embeddings(&m, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_LEN as u64);
        assert_eq!(load_embeddings(&path).unwrap().load().unwrap(), m);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![0.0, f32::NAN]),
            Err(Error::NonFiniteEmbedding { row: 0, column: 1 })
        ));

        let dir = tempfile::tempdir().unwrap();
        let mut header = Header { dim: 2, count: 2 }.encode().to_vec();
        for v in [1.0f32, 2.0, 3.0, f32::INFINITY] {
            header.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.path().join("inf.emb");
        std::fs::write(&path, header).unwrap();
        let f = load_embeddings(&path).unwrap();
        let mut buf = Vec::new();
        f.read_rows(0..1, &mut buf).unwrap();
        assert_eq!(buf, vec![1.0, 2.0]);
        assert!(matches!(
            f.validate(1),
            Err(Error::NonFiniteEmbedding { row: 1, column: 1 })
        ));
    }

    #[test]
    fn row_ranges_compose() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.emb");
        let data: Vec<f32> = (0..30).map(|v| v as f32 * 0.5).collect();
        let m = EmbeddingMatrix::new(3, data).unwrap();
        write_embeddings(&m, &path).unwrap();
        let f = load_embeddings(&path).unwrap();

        let (mut ab, mut bc, mut ac) = (Vec::new(), Vec::new(), Vec::new());
        f.read_rows(2..5, &mut ab).unwrap();
        f.read_rows(5..9, &mut bc).unwrap();
        f.read_rows(2..9, &mut ac).unwrap();
        ab.extend(bc);
        assert_eq!(ab, ac);
        assert!(f.read_rows(9..11, &mut ac).is_err());
    }

    #[test]
    fn writer_enforces_declared_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.emb");
        let mut w = EmbeddingWriter::create(&path, 2, 2).unwrap();
        w.write_rows(&[1.0, 2.0]).unwrap();
        assert!(w.write_rows(&[1.0]).is_err());
        assert!(w.finish().is_err());

        let mut w = EmbeddingWriter::create(&path, 2, 1).unwrap();
        assert!(w.write_rows(&[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn alignment_check() {
        let five = EmbeddingMatrix::new(1, vec![1.0; 5]).unwrap();
        assert!(validate_alignment(&five, 5).is_ok());
        let err = validate_alignment(&five, 4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('4') && msg.contains('5'), "{msg}");
        let empty = EmbeddingMatrix::new(1, vec![]).unwrap();
        assert!(validate_alignment(&empty, 0).is_ok());
    }
}
