//! Pearson correlation between score series and descriptive score statistics.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::ScoredPair;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub r: f64,
    pub n: u64,
    pub series_a_id: String,
    pub series_b_id: String,
    /// Indices present in only one of the two series.
    pub unpaired_count: u64,
}

fn stat_err(msg: impl Into<String>) -> Error {
    Error::Statistics(msg.into())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson's r, computed in two passes (means first, then centred sums).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(stat_err(format!(
            "series lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(stat_err(format!(
            "correlation needs at least 2 samples, got {}",
            xs.len()
        )));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !v.is_finite()) {
        return Err(stat_err(format!("non-finite value {v} in series")));
    }
    for (name, s) in [("first", xs), ("second", ys)] {
        if s.iter().all(|&v| v == s[0]) {
            return Err(stat_err(format!(
                "{name} series has zero variance; correlation is undefined"
            )));
        }
    }

    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(stat_err("zero variance; correlation is undefined"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two score series paired by corpus index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignedScores {
    pub indices: Vec<u64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Indices present in only one stream.
    pub dropped: u64,
}

/// Pairs two scored streams on index, in ascending index order.
pub fn align_scores<A, B>(a: A, b: B) -> Result<AlignedScores>
where
    A: IntoIterator<Item = Result<ScoredPair>>,
    B: IntoIterator<Item = Result<ScoredPair>>,
{
    let mut left: HashMap<u64, f64> = HashMap::new();
    for s in a {
        let s = s?;
        if left.insert(s.index, s.score).is_some() {
            return Err(stat_err(format!(
                "duplicate index {} in first series",
                s.index
            )));
        }
    }
    let mut seen_b = std::collections::HashSet::new();
    let mut paired: Vec<(u64, f64, f64)> = Vec::new();
    let mut dropped = 0u64;
    for s in b {
        let s = s?;
        if !seen_b.insert(s.index) {
            return Err(stat_err(format!(
                "duplicate index {} in second series",
                s.index
            )));
        }
        match left.remove(&s.index) {
            Some(x) => paired.push((s.index, x, s.score)),
            None => dropped += 1,
        }
    }
    dropped += left.len() as u64;
    if paired.is_empty() {
        return Err(stat_err("empty intersection between the two series"));
    }
    paired.sort_by_key(|p| p.0);
    let mut out = AlignedScores {
        dropped,
        ..Default::default()
    };
    for (i, x, y) in paired {
        out.indices.push(i);
        out.a.push(x);
        out.b.push(y);
    }
    Ok(out)
}

/// Correlates two aligned streams and labels the result.
pub fn correlate<A, B>(a: A, a_id: &str, b: B, b_id: &str) -> Result<CorrelationReport>
where
    A: IntoIterator<Item = Result<ScoredPair>>,
    B: IntoIterator<Item = Result<ScoredPair>>,
{
    let aligned = align_scores(a, b)?;
    let r = pearson(&aligned.a, &aligned.b)?;
    Ok(CorrelationReport {
        r,
        n: aligned.a.len() as u64,
        series_a_id: a_id.to_string(),
        series_b_id: b_id.to_string(),
        unpaired_count: aligned.dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreStats {
    pub count: u64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    /// Uniform bins over [min, max]; the maximum lands in the last bin.
    /// A constant series gets a single bin.
    pub histogram: Vec<HistogramBin>,
}

pub fn score_stats(scores: &[f64], bins: usize) -> Result<ScoreStats> {
    if scores.is_empty() {
        return Err(stat_err("no scores"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
        return Err(stat_err(format!("non-finite score {v}")));
    }
    let n = scores.len();
    let m = mean(scores);
    let ss: f64 = scores.iter().map(|v| (v - m) * (v - m)).sum();
    let stddev = if n > 1 {
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let histogram = if min == max {
        vec![HistogramBin {
            lower: min,
            count: n as u64,
        }]
    } else {
        let width = (max - min) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in scores {
            let b = (((v - min) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lower: min + width * i as f64,
                count,
            })
            .collect()
    };

    Ok(ScoreStats {
        count: n as u64,
        mean: m,
        stddev,
        min,
        max,
        histogram,
    })
}
