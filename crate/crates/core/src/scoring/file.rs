use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{ScoredPair, FILE_SCORER};
use crate::error::{Error, Result};
use crate::lines::Lines;

/// Canonical text form of a score: the shortest decimal that parses back to the same `f64`.
pub fn format_score(score: f64) -> String {
    format!("{score}")
}

/// Streams a score file, one decimal real per line, line `i` scoring pair `i`.
///
/// With gaps allowed, an empty line marks a pair that was deliberately left
/// unscored upstream; it yields nothing but still consumes its index.
pub struct ScoreFileReader {
    lines: Lines,
    expected: Option<u64>,
    allow_gaps: bool,
    gaps: u64,
    scorer_id: String,
    done: bool,
}

/// Opens a score file that must hold exactly `corpus_count` lines.
pub fn score_from_file(path: impl AsRef<Path>, corpus_count: u64) -> Result<ScoreFileReader> {
    Ok(ScoreFileReader::open(path)?.expect_count(corpus_count))
}

impl ScoreFileReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(Lines::open(path.as_ref())?))
    }

    pub fn from_reader<R: std::io::BufRead + Send + 'static>(reader: R) -> Self {
        Self::new(Lines::from_reader(reader))
    }

    fn new(lines: Lines) -> Self {
        Self {
            lines,
            expected: None,
            allow_gaps: false,
            gaps: 0,
            scorer_id: FILE_SCORER.to_string(),
            done: false,
        }
    }

    pub fn expect_count(mut self, count: u64) -> Self {
        self.expected = Some(count);
        self
    }

    pub fn allow_gaps(mut self, allow: bool) -> Self {
        self.allow_gaps = allow;
        self
    }

    pub fn with_scorer_id(mut self, id: impl Into<String>) -> Self {
        self.scorer_id = id.into();
        self
    }

    /// Lines consumed so far, gaps included.
    pub fn lines_read(&self) -> u64 {
        self.lines.line_number()
    }

    pub fn gaps(&self) -> u64 {
        self.gaps
    }

    pub fn path(&self) -> Option<&Path> {
        self.lines.path()
    }

    fn count_error(&self, found: u64) -> Error {
        Error::CountMismatch {
            what: format!(
                "score lines in {}",
                self.lines
                    .path()
                    .map_or("<stream>".into(), |p| p.display().to_string())
            ),
            expected: self.expected.unwrap_or(found),
            found,
        }
    }

    fn read_one(&mut self) -> Result<Option<ScoredPair>> {
        loop {
            let Some(line) = self.lines.next_line()? else {
                let found = self.lines.line_number();
                return match self.expected {
                    Some(n) if n != found => Err(self.count_error(found)),
                    _ => Ok(None),
                };
            };
            if self.allow_gaps && line.is_empty() {
                self.gaps += 1;
                continue;
            }
            let value: f64 = match line.trim().parse() {
                Ok(v) => v,
                Err(_) => {
                    let reason = format!("cannot parse score {line:?}");
                    return Err(self.lines.malformed(reason));
                }
            };
            if !value.is_finite() {
                let reason = format!("non-finite score {line:?}");
                return Err(self.lines.malformed(reason));
            }
            let index = self.lines.line_number() - 1;
            if let Some(n) = self.expected {
                if index >= n {
                    // Count the remainder so the message reports the real length.
                    let mut found = self.lines.line_number();
                    while self.lines.next_line()?.is_some() {
                        found += 1;
                    }
                    return Err(self.count_error(found));
                }
            }
            return Ok(Some(ScoredPair {
                index,
                score: value,
                scorer_id: self.scorer_id.clone(),
            }));
        }
    }
}

impl Iterator for ScoreFileReader {
    type Item = Result<ScoredPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = self.read_one().transpose();
        if !matches!(r, Some(Ok(_))) {
            self.done = true;
        }
        r
    }
}

/// Writes aligned score files. Scores must arrive in increasing index order;
/// indices that never receive a score become empty lines.
pub struct ScoreWriter {
    out: BufWriter<File>,
    path: PathBuf,
    next_index: u64,
    gaps: u64,
}

impl ScoreWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::with_capacity(1 << 16, file),
            path: path.to_path_buf(),
            next_index: 0,
            gaps: 0,
        })
    }

    pub fn write(&mut self, index: u64, score: f64) -> Result<()> {
        if index < self.next_index {
            return Err(Error::InvalidArgument(format!(
                "score for index {index} arrived after index {}",
                self.next_index - 1
            )));
        }
        if !score.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite score {score} for index {index}"
            )));
        }
        self.pad_to(index)?;
        writeln!(self.out, "{}", format_score(score)).map_err(|e| Error::io(&self.path, e))?;
        self.next_index = index + 1;
        Ok(())
    }

    fn pad_to(&mut self, index: u64) -> Result<()> {
        while self.next_index < index {
            self.out
                .write_all(b"\n")
                .map_err(|e| Error::io(&self.path, e))?;
            self.next_index += 1;
            self.gaps += 1;
        }
        Ok(())
    }

    /// Pads to `total` lines and flushes; returns the number of empty (gap) lines.
    pub fn finish(mut self, total: u64) -> Result<u64> {
        if total < self.next_index {
            return Err(Error::InvalidArgument(format!(
                "finish({total}) after writing {} lines",
                self.next_index
            )));
        }
        self.pad_to(total)?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.gaps)
    }
}
