use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const READ_BUFFER: usize = 1 << 16;

/// LF-delimited UTF-8 line reader that keeps track of the 1-based line number.
///
/// A final line without a trailing LF is still returned. The terminating LF
/// is stripped; anything else (including CR) is left in place for the caller
/// to judge.
pub(crate) struct Lines {
    inner: Box<dyn BufRead + Send>,
    path: Option<PathBuf>,
    buf: Vec<u8>,
    line: u64,
}

impl Lines {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner: Box::new(BufReader::with_capacity(READ_BUFFER, file)),
            path: Some(path.to_path_buf()),
            buf: Vec::new(),
            line: 0,
        })
    }

    pub fn from_reader<R: BufRead + Send + 'static>(reader: R) -> Self {
        Self {
            inner: Box::new(reader),
            path: None,
            buf: Vec::new(),
            line: 0,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Number of lines returned so far; equals the 1-based number of the last line.
    pub fn line_number(&self) -> u64 {
        self.line
    }

    pub fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.clone(),
            line: self.line,
            reason: reason.into(),
        }
    }

    pub fn next_line(&mut self) -> Result<Option<&str>> {
        self.buf.clear();
        let n = self
            .inner
            .read_until(b'\n', &mut self.buf)
            .map_err(|e| Error::Io {
                path: self.path.clone(),
                source: e,
            })?;
        if n == 0 {
            return Ok(None);
        }
        self.line += 1;
        if self.buf.last() == Some(&b'\n') {
            self.buf.pop();
        }
        match std::str::from_utf8(&self.buf) {
            Ok(s) => Ok(Some(s)),
            Err(_) => Err(Error::InvalidUtf8 {
                path: self.path.clone(),
                line: self.line,
            }),
        }
    }
}
