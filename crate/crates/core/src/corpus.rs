//! Sentence-pair corpora on disk.
//!
//! Two layouts are understood:
//!
//! * **TSV**: one pair per line, `source<TAB>target<LF>`, exactly one TAB.
//! * **Bitext**: two line-aligned files, line `i` of each holding one side of pair `i`.
//!
//! Readers stream; nothing is buffered beyond the current line. Under
//! [`MalformedPolicy::Skip`] a bad line is dropped but still consumes its
//! index, so pair indices keep matching line numbers in score and embedding
//! files produced for the same corpus.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lines::Lines;

/// One aligned (source, target) pair. `index` is the 0-based line position in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub index: u64,
    pub source: String,
    pub target: String,
}

impl SentencePair {
    /// Builds a pair, rejecting text that would break the line-oriented formats.
    pub fn new(index: u64, source: impl Into<String>, target: impl Into<String>) -> Result<Self> {
        let pair = Self {
            index,
            source: source.into(),
            target: target.into(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        for (side, text) in [("source", &self.source), ("target", &self.target)] {
            if let Some(c) = forbidden_char(text) {
                return Err(Error::InvalidPair {
                    index: self.index,
                    reason: format!("{side} contains {}", describe_char(c)),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn forbidden_char(text: &str) -> Option<char> {
    text.chars().find(|c| matches!(c, '\t' | '\n' | '\r'))
}

pub(crate) fn describe_char(c: char) -> &'static str {
    match c {
        '\t' => "a TAB",
        '\n' => "a line feed",
        '\r' => "a carriage return",
        _ => "a forbidden character",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    Bitext,
}

/// What to do with a line that does not parse as a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedPolicy {
    #[default]
    Error,
    Skip,
}

/// File location(s) of a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusPaths {
    Tsv(PathBuf),
    Bitext { source: PathBuf, target: PathBuf },
}

impl CorpusPaths {
    /// One path means TSV, two mean (source, target) bitext; anything else is rejected.
    pub fn from_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        match paths {
            [tsv] => Ok(CorpusPaths::Tsv(tsv.as_ref().to_path_buf())),
            [source, target] => Ok(CorpusPaths::Bitext {
                source: source.as_ref().to_path_buf(),
                target: target.as_ref().to_path_buf(),
            }),
            _ => Err(Error::InvalidArgument(format!(
                "a corpus takes one path (tsv) or two paths (bitext), got {}",
                paths.len()
            ))),
        }
    }

    pub fn format(&self) -> CorpusFormat {
        match self {
            CorpusPaths::Tsv(_) => CorpusFormat::Tsv,
            CorpusPaths::Bitext { .. } => CorpusFormat::Bitext,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSpec {
    pub paths: CorpusPaths,
    pub malformed: MalformedPolicy,
}

impl CorpusSpec {
    pub fn tsv(path: impl Into<PathBuf>) -> Self {
        Self {
            paths: CorpusPaths::Tsv(path.into()),
            malformed: MalformedPolicy::Error,
        }
    }

    pub fn bitext(source: impl Into<PathBuf>, target: impl Into<PathBuf>) -> Self {
        Self {
            paths: CorpusPaths::Bitext {
                source: source.into(),
                target: target.into(),
            },
            malformed: MalformedPolicy::Error,
        }
    }

    pub fn with_policy(mut self, policy: MalformedPolicy) -> Self {
        self.malformed = policy;
        self
    }

    pub fn format(&self) -> CorpusFormat {
        self.paths.format()
    }
}

enum Source {
    Tsv(Lines),
    Bitext { source: Lines, target: Lines },
}

/// Streaming pair reader; yields `Result<SentencePair>` and stops after the first error.
pub struct CorpusReader {
    source: Source,
    policy: MalformedPolicy,
    next_index: u64,
    skipped: u64,
    done: bool,
}

/// Opens a corpus for streaming.
pub fn read_corpus(spec: &CorpusSpec) -> Result<CorpusReader> {
    let source = match &spec.paths {
        CorpusPaths::Tsv(path) => Source::Tsv(Lines::open(path)?),
        CorpusPaths::Bitext { source, target } => Source::Bitext {
            source: Lines::open(source)?,
            target: Lines::open(target)?,
        },
    };
    Ok(CorpusReader::new(source, spec.malformed))
}

impl CorpusReader {
    fn new(source: Source, policy: MalformedPolicy) -> Self {
        Self {
            source,
            policy,
            next_index: 0,
            skipped: 0,
            done: false,
        }
    }

    pub fn tsv_from_reader<R: std::io::BufRead + Send + 'static>(
        reader: R,
        policy: MalformedPolicy,
    ) -> Self {
        Self::new(Source::Tsv(Lines::from_reader(reader)), policy)
    }

    pub fn bitext_from_readers<R1, R2>(source: R1, target: R2, policy: MalformedPolicy) -> Self
    where
        R1: std::io::BufRead + Send + 'static,
        R2: std::io::BufRead + Send + 'static,
    {
        Self::new(
            Source::Bitext {
                source: Lines::from_reader(source),
                target: Lines::from_reader(target),
            },
            policy,
        )
    }

    /// Malformed lines dropped so far under the skip policy.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Lines consumed so far, malformed ones included.
    pub fn lines_read(&self) -> u64 {
        self.next_index
    }

    fn read_one(&mut self) -> Result<Option<SentencePair>> {
        loop {
            let index = self.next_index;
            let parsed = match &mut self.source {
                Source::Tsv(lines) => {
                    let Some(line) = lines.next_line()? else {
                        return Ok(None);
                    };
                    let mut fields = line.split('\t');
                    match (fields.next(), fields.next(), fields.next()) {
                        (Some(src), Some(tgt), None) => check_sides(src, tgt)
                            .map(|()| (src.to_owned(), tgt.to_owned()))
                            .map_err(|reason| lines.malformed(reason)),
                        _ => {
                            let reason = format!(
                                "expected exactly one TAB, found {}",
                                line.matches('\t').count()
                            );
                            Err(lines.malformed(reason))
                        }
                    }
                }
                Source::Bitext { source, target } => {
                    let src = source.next_line()?.map(str::to_owned);
                    let tgt = target.next_line()?;
                    match (src, tgt) {
                        (None, None) => return Ok(None),
                        (Some(src), Some(tgt)) => check_sides(&src, tgt)
                            .map(|()| (src, tgt.to_owned()))
                            .map_err(|reason| source.malformed(reason)),
                        (src, _) => {
                            let (short, long) = if src.is_none() {
                                (source, target)
                            } else {
                                (target, source)
                            };
                            let long_count = long.line_number() + count_rest(long)?;
                            return Err(Error::CountMismatch {
                                what: format!(
                                    "bitext line counts ({} vs {})",
                                    short
                                        .path()
                                        .map_or("<stream>".into(), |p| p.display().to_string()),
                                    long.path()
                                        .map_or("<stream>".into(), |p| p.display().to_string()),
                                ),
                                expected: long_count,
                                found: short.line_number(),
                            });
                        }
                    }
                }
            };
            self.next_index += 1;
            match parsed {
                Ok((source, target)) => {
                    return Ok(Some(SentencePair {
                        index,
                        source,
                        target,
                    }))
                }
                Err(e) => match self.policy {
                    MalformedPolicy::Error => return Err(e),
                    MalformedPolicy::Skip => self.skipped += 1,
                },
            }
        }
    }
}

fn check_sides(src: &str, tgt: &str) -> std::result::Result<(), String> {
    for (side, text) in [("source", src), ("target", tgt)] {
        if let Some(c) = forbidden_char(text) {
            return Err(format!("{side} contains {}", describe_char(c)));
        }
    }
    Ok(())
}

fn count_rest(lines: &mut Lines) -> Result<u64> {
    let mut n = 0;
    while lines.next_line()?.is_some() {
        n += 1;
    }
    Ok(n)
}

impl Iterator for CorpusReader {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_one() {
            Ok(Some(pair)) => Some(Ok(pair)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

enum Sink {
    Tsv(BufWriter<File>, PathBuf),
    Bitext {
        source: (BufWriter<File>, PathBuf),
        target: (BufWriter<File>, PathBuf),
    },
}

/// Canonical corpus writer: LF endings, no BOM, one TAB per TSV line.
pub struct CorpusWriter {
    sink: Sink,
    written: u64,
}

fn create(path: &Path) -> Result<(BufWriter<File>, PathBuf)> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok((BufWriter::with_capacity(1 << 16, file), path.to_path_buf()))
}

impl CorpusWriter {
    pub fn create(paths: &CorpusPaths) -> Result<Self> {
        let sink = match paths {
            CorpusPaths::Tsv(path) => {
                let (w, p) = create(path)?;
                Sink::Tsv(w, p)
            }
            CorpusPaths::Bitext { source, target } => Sink::Bitext {
                source: create(source)?,
                target: create(target)?,
            },
        };
        Ok(Self { sink, written: 0 })
    }

    pub fn write(&mut self, pair: &SentencePair) -> Result<()> {
        pair.validate()?;
        match &mut self.sink {
            Sink::Tsv(w, path) => write_line(w, path, &[&pair.source, "\t", &pair.target])?,
            Sink::Bitext { source, target } => {
                write_line(&mut source.0, &source.1, &[&pair.source])?;
                write_line(&mut target.0, &target.1, &[&pair.target])?;
            }
        }
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    /// Flushes everything and returns the number of pairs written.
    pub fn finish(self) -> Result<u64> {
        match self.sink {
            Sink::Tsv(mut w, path) => w.flush().map_err(|e| Error::io(path, e))?,
            Sink::Bitext {
                mut source,
                mut target,
            } => {
                source.0.flush().map_err(|e| Error::io(&source.1, e))?;
                target.0.flush().map_err(|e| Error::io(&target.1, e))?;
            }
        }
        Ok(self.written)
    }
}

fn write_line(w: &mut BufWriter<File>, path: &Path, parts: &[&str]) -> Result<()> {
    let res = parts
        .iter()
        .try_for_each(|p| w.write_all(p.as_bytes()))
        .and_then(|()| w.write_all(b"\n"));
    res.map_err(|e| Error::io(path, e))
}

/// Writes every pair from `pairs` and returns how many were written.
pub fn write_corpus<I>(pairs: I, paths: &CorpusPaths) -> Result<u64>
where
    I: IntoIterator<Item = Result<SentencePair>>,
{
    let mut writer = CorpusWriter::create(paths)?;
    for pair in pairs {
        writer.write(&pair?)?;
    }
    writer.finish()
}
