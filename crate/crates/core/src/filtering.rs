//! Threshold filtering, threshold sweeps, and merging filtered pairs into
//! trusted data.
//!
//! A pair is kept when `score >= threshold`. Keeping the boundary means a
//! threshold of 0 on standardized scores keeps exactly the non-negative ones.

use std::collections::HashSet;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusReader, SentencePair};
use crate::error::{Error, Result};
use crate::scoring::{ScoreFileReader, ScoredPair};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub threshold: f64,
    pub input_count: u64,
    pub kept_count: u64,
    pub dropped_count: u64,
    /// `None` when nothing was kept.
    pub kept_score_mean: Option<f64>,
    pub kept_score_min: Option<f64>,
    pub kept_score_max: Option<f64>,
    pub scorer_id: String,
}

/// Streaming keep/drop decision with running statistics.
#[derive(Debug, Clone)]
pub struct ThresholdFilter {
    threshold: f64,
    scorer_id: String,
    input: u64,
    kept: u64,
    sum: f64,
    min: f64,
    max: f64,
}

fn check_threshold(t: f64) -> Result<()> {
    if t.is_nan() {
        return Err(Error::InvalidArgument("threshold is NaN".into()));
    }
    Ok(())
}

fn check_score(score: f64) -> Result<()> {
    if !score.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite score {score}")));
    }
    Ok(())
}

impl ThresholdFilter {
    pub fn new(threshold: f64, scorer_id: impl Into<String>) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(Self {
            threshold,
            scorer_id: scorer_id.into(),
            input: 0,
            kept: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        })
    }

    /// Records one score and returns whether its pair is kept.
    pub fn push(&mut self, score: f64) -> Result<bool> {
        check_score(score)?;
        self.input += 1;
        let keep = score >= self.threshold;
        if keep {
            self.kept += 1;
            self.sum += score;
            self.min = self.min.min(score);
            self.max = self.max.max(score);
        }
        Ok(keep)
    }

    pub fn report(&self) -> FilterReport {
        let any = self.kept > 0;
        FilterReport {
            threshold: self.threshold,
            input_count: self.input,
            kept_count: self.kept,
            dropped_count: self.input - self.kept,
            kept_score_mean: any.then(|| self.sum / self.kept as f64),
            kept_score_min: any.then_some(self.min),
            kept_score_max: any.then_some(self.max),
            scorer_id: self.scorer_id.clone(),
        }
    }
}

/// Splits scored items into kept and dropped, each in input order.
pub fn filter_by_threshold<T, I>(
    scored: I,
    threshold: f64,
    scorer_id: &str,
) -> Result<(Vec<T>, Vec<T>, FilterReport)>
where
    I: IntoIterator<Item = Result<(T, f64)>>,
{
    let mut filter = ThresholdFilter::new(threshold, scorer_id)?;
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for item in scored {
        let (item, score) = item?;
        if filter.push(score)? {
            kept.push(item);
        } else {
            dropped.push(item);
        }
    }
    Ok((kept, dropped, filter.report()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub kept_count: u64,
    /// `kept_count / input_count`, 0 for empty input.
    pub retention: f64,
    pub kept_score_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub input_count: u64,
    pub scorer_id: String,
    pub rows: Vec<SweepRow>,
}

/// Evaluates many thresholds in one pass over the scores.
///
/// Per-threshold sums are accumulated in input order, so every row matches a
/// [`ThresholdFilter`] run at the same threshold bit for bit.
#[derive(Debug, Clone)]
pub struct ThresholdSweep {
    thresholds: Vec<f64>,
    kept: Vec<u64>,
    sums: Vec<f64>,
    input: u64,
}

impl ThresholdSweep {
    /// `thresholds` must be strictly increasing.
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        for t in &thresholds {
            check_threshold(*t)?;
        }
        if let Some(w) = thresholds.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must be strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        let n = thresholds.len();
        Ok(Self {
            thresholds,
            kept: vec![0; n],
            sums: vec![0.0; n],
            input: 0,
        })
    }

    pub fn push(&mut self, score: f64) -> Result<()> {
        check_score(score)?;
        self.input += 1;
        let passed = self.thresholds.partition_point(|&t| t <= score);
        for j in 0..passed {
            self.kept[j] += 1;
            self.sums[j] += score;
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        self.thresholds
            .iter()
            .zip(self.kept.iter().zip(&self.sums))
            .map(|(&threshold, (&kept, &sum))| SweepRow {
                threshold,
                kept_count: kept,
                retention: if self.input == 0 {
                    0.0
                } else {
                    kept as f64 / self.input as f64
                },
                kept_score_mean: (kept > 0).then(|| sum / kept as f64),
            })
            .collect()
    }

    pub fn input_count(&self) -> u64 {
        self.input
    }
}

pub fn sweep_thresholds<I>(scores: I, thresholds: &[f64]) -> Result<Vec<SweepRow>>
where
    I: IntoIterator<Item = Result<f64>>,
{
    let mut sweep = ThresholdSweep::new(thresholds.to_vec())?;
    for s in scores {
        sweep.push(s?)?;
    }
    Ok(sweep.rows())
}

/// Duplicate detection for merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dedup {
    #[default]
    Off,
    /// Byte-exact comparison of (source, target); memory grows with the text kept.
    Exact,
    /// Compares 128-bit SHA-256 prefixes of (source, target): 16 bytes per distinct
    /// pair, with a false-duplicate probability of about n^2 / 2^129 for n pairs.
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Trusted,
    Filtered,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MergeReport {
    pub dedup: Dedup,
    pub trusted_count: u64,
    pub filtered_count: u64,
    pub output_count: u64,
    pub duplicates_removed: u64,
}

enum Seen {
    Off,
    Exact(HashSet<Box<[u8]>>),
    Hash(HashSet<u128>),
}

/// Concatenates corpora, re-indexing from 0 and optionally dropping repeats.
pub struct Merger {
    seen: Seen,
    report: MergeReport,
}

fn pair_key(pair: &SentencePair) -> Vec<u8> {
    // TAB never occurs inside a validated pair, so the join is unambiguous.
    let mut key = Vec::with_capacity(pair.source.len() + pair.target.len() + 1);
    key.extend_from_slice(pair.source.as_bytes());
    key.push(b'\t');
    key.extend_from_slice(pair.target.as_bytes());
    key
}

impl Merger {
    pub fn new(dedup: Dedup) -> Self {
        let seen = match dedup {
            Dedup::Off => Seen::Off,
            Dedup::Exact => Seen::Exact(HashSet::new()),
            Dedup::Hash => Seen::Hash(HashSet::new()),
        };
        Self {
            seen,
            report: MergeReport {
                dedup,
                ..Default::default()
            },
        }
    }

    /// Returns the re-indexed pair, or `None` if it repeats an earlier one.
    pub fn push(&mut self, pair: SentencePair, origin: Origin) -> Option<SentencePair> {
        match origin {
            Origin::Trusted => self.report.trusted_count += 1,
            Origin::Filtered => self.report.filtered_count += 1,
        }
        let fresh = match &mut self.seen {
            Seen::Off => true,
            Seen::Exact(set) => set.insert(pair_key(&pair).into_boxed_slice()),
            Seen::Hash(set) => {
                let digest = Sha256::digest(pair_key(&pair));
                set.insert(u128::from_le_bytes(digest[..16].try_into().unwrap()))
            }
        };
        if !fresh {
            self.report.duplicates_removed += 1;
            return None;
        }
        let index = self.report.output_count;
        self.report.output_count += 1;
        Some(SentencePair { index, ..pair })
    }

    pub fn report(&self) -> MergeReport {
        self.report.clone()
    }
}

/// Emits `trusted` then `filtered` through `sink`.
pub fn merge_corpora<T, F, S>(
    trusted: T,
    filtered: F,
    dedup: Dedup,
    mut sink: S,
) -> Result<MergeReport>
where
    T: IntoIterator<Item = Result<SentencePair>>,
    F: IntoIterator<Item = Result<SentencePair>>,
    S: FnMut(SentencePair) -> Result<()>,
{
    let mut merger = Merger::new(dedup);
    for pair in trusted {
        if let Some(p) = merger.push(pair?, Origin::Trusted) {
            sink(p)?;
        }
    }
    for pair in filtered {
        if let Some(p) = merger.push(pair?, Origin::Filtered) {
            sink(p)?;
        }
    }
    Ok(merger.report())
}

/// Pairs corpus entries with the score carrying the same index.
///
/// Pairs without a score (a gap in the score stream) are counted and passed
/// over. When both sides are exhausted, the score file must have had exactly
/// as many lines as the corpus.
pub struct ScoreJoin {
    pairs: CorpusReader,
    scores: ScoreFileReader,
    pending: Option<ScoredPair>,
    unscored: u64,
    done: bool,
}

impl ScoreJoin {
    pub fn new(pairs: CorpusReader, scores: ScoreFileReader) -> Self {
        Self {
            pairs,
            scores,
            pending: None,
            unscored: 0,
            done: false,
        }
    }

    /// Pairs that had no score.
    pub fn unscored(&self) -> u64 {
        self.unscored
    }

    /// Malformed corpus lines skipped by the reader.
    pub fn skipped_lines(&self) -> u64 {
        self.pairs.skipped()
    }

    fn next_score(&mut self) -> Result<Option<ScoredPair>> {
        match self.pending.take() {
            Some(s) => Ok(Some(s)),
            None => self.scores.next().transpose(),
        }
    }

    fn step(&mut self) -> Result<Option<(SentencePair, f64)>> {
        loop {
            let Some(pair) = self.pairs.next().transpose()? else {
                // Drain so the score reader can check its own length.
                while self.next_score()?.is_some() {}
                let (corpus, scores) = (self.pairs.lines_read(), self.scores.lines_read());
                if corpus != scores {
                    return Err(Error::CountMismatch {
                        what: "score lines vs corpus lines".into(),
                        expected: corpus,
                        found: scores,
                    });
                }
                return Ok(None);
            };
            loop {
                match self.next_score()? {
                    None => {
                        self.unscored += 1;
                        break;
                    }
                    Some(s) if s.index < pair.index => continue,
                    Some(s) if s.index == pair.index => return Ok(Some((pair, s.score))),
                    Some(s) => {
                        self.pending = Some(s);
                        self.unscored += 1;
                        break;
                    }
                }
            }
        }
    }
}

impl Iterator for ScoreJoin {
    type Item = Result<(SentencePair, f64)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = self.step().transpose();
        if !matches!(r, Some(Ok(_))) {
            self.done = true;
        }
        r
    }
}
