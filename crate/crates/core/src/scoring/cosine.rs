use rayon::prelude::*;

use super::{PairErrorPolicy, ScoredPair, SkippedPair, COSINE_SCORER};
use crate::embedding::RowSource;
use crate::error::{Error, Result};

const LANES: usize = 8;

/// Dot product and squared norms of two equal-length rows, accumulated in `f64`.
///
/// The accumulation order depends only on the row length, so the result for a
/// given row is identical no matter how rows are distributed over threads.
/// Swapping `a` and `b` swaps the norms and leaves the dot product bit-identical.
#[inline]
fn dot_and_norms(a: &[f32], b: &[f32]) -> (f64, f64, f64) {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = [0f64; LANES];
    let mut na = [0f64; LANES];
    let mut nb = [0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..LANES {
            let x = xa[l] as f64;
            let y = xb[l] as f64;
            dot[l] += x * y;
            na[l] += x * x;
            nb[l] += y * y;
        }
    }
    for (l, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        let (x, y) = (x as f64, y as f64);
        dot[l] += x * y;
        na[l] += x * x;
        nb[l] += y * y;
    }
    (fold(dot), fold(na), fold(nb))
}

#[inline]
fn fold(v: [f64; LANES]) -> f64 {
    ((v[0] + v[4]) + (v[1] + v[5])) + ((v[2] + v[6]) + (v[3] + v[7]))
}

#[inline]
fn cosine_of(dot: f64, na: f64, nb: f64) -> f64 {
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine similarity of two vectors. Norms are always computed, never assumed to be 1.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument(
            "cosine similarity needs vectors of dimension >= 1".into(),
        ));
    }
    let (dot, na, nb) = dot_and_norms(a, b);
    if na == 0.0 {
        return Err(Error::ZeroVector {
            index: 0,
            side: "first",
        });
    }
    if nb == 0.0 {
        return Err(Error::ZeroVector {
            index: 0,
            side: "second",
        });
    }
    Ok(cosine_of(dot, na, nb))
}

#[derive(Debug, Clone)]
pub struct CosineOptions {
    /// Worker threads; 0 picks the number of available cores.
    pub threads: usize,
    /// Rows fetched from each matrix per step.
    pub chunk_rows: usize,
    pub zero_rows: PairErrorPolicy,
}

impl Default for CosineOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            chunk_rows: 16_384,
            zero_rows: PairErrorPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CosineSummary {
    pub scored: u64,
    pub skipped: Vec<SkippedPair>,
}

enum RowOutcome {
    Score(f64),
    Zero(&'static str),
}

fn score_row(a: &[f32], b: &[f32]) -> RowOutcome {
    let (dot, na, nb) = dot_and_norms(a, b);
    if na == 0.0 {
        RowOutcome::Zero("source")
    } else if nb == 0.0 {
        RowOutcome::Zero("target")
    } else {
        RowOutcome::Score(cosine_of(dot, na, nb))
    }
}

/// Scores row `i` of `src` against row `i` of `tgt` for every `i`, handing
/// results to `sink` in index order.
pub fn score_cosine<F>(
    src: &dyn RowSource,
    tgt: &dyn RowSource,
    options: &CosineOptions,
    mut sink: F,
) -> Result<CosineSummary>
where
    F: FnMut(ScoredPair) -> Result<()>,
{
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            left: src.dim(),
            right: tgt.dim(),
        });
    }
    if src.count() != tgt.count() {
        return Err(Error::CountMismatch {
            what: "source vs target embedding rows".into(),
            expected: src.count(),
            found: tgt.count(),
        });
    }
    let dim = src.dim();
    let count = src.count();
    let chunk = options.chunk_rows.max(1) as u64;

    let pool = match options.threads {
        1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
        ),
    };

    let mut summary = CosineSummary::default();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut outcomes = Vec::new();
    let mut start = 0u64;
    while start < count {
        let end = (start + chunk).min(count);
        src.read_rows(start..end, &mut a)?;
        tgt.read_rows(start..end, &mut b)?;

        outcomes.clear();
        match &pool {
            None => outcomes.extend(
                a.chunks_exact(dim)
                    .zip(b.chunks_exact(dim))
                    .map(|(x, y)| score_row(x, y)),
            ),
            Some(pool) => pool.install(|| {
                a.par_chunks_exact(dim)
                    .zip(b.par_chunks_exact(dim))
                    .map(|(x, y)| score_row(x, y))
                    .collect_into_vec(&mut outcomes)
            }),
        }

        for (offset, outcome) in outcomes.drain(..).enumerate() {
            let index = start + offset as u64;
            match outcome {
                RowOutcome::Score(score) => {
                    summary.scored += 1;
                    sink(ScoredPair {
                        index,
                        score,
                        scorer_id: COSINE_SCORER.to_string(),
                    })?;
                }
                RowOutcome::Zero(side) => match options.zero_rows {
                    PairErrorPolicy::Error => return Err(Error::ZeroVector { index, side }),
                    PairErrorPolicy::SkipWithReport => summary.skipped.push(SkippedPair {
                        index,
                        reason: format!("zero {side} embedding"),
                    }),
                },
            }
        }
        start = end;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingMatrix;

    fn naive(a: &[f32], b: &[f32]) -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for i in 0..a.len() {
            dot += a[i] as f64 * b[i] as f64;
            na += a[i] as f64 * a[i] as f64;
            nb += b[i] as f64 * b[i] as f64;
        }
        dot / (na.sqrt() * nb.sqrt())
    }

    fn collect(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, opts: &CosineOptions) -> Vec<f64> {
        let mut out = Vec::new();
        score_cosine(src, tgt, opts, |p| {
            assert_eq!(p.index as usize, out.len());
            assert_eq!(p.scorer_id, "cosine");
            out.push(p.score);
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn small_cases() {
        assert_eq!(cosine_similarity(&[0.6, 0.8], &[0.6, 0.8]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let r = cosine_similarity(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        // 8 / (3 * 3)
        assert!((r - 8.0 / 9.0).abs() < 1e-12);
        assert!((r - naive(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0])).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(cosine_similarity(&[], &[]).is_err());
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn three_row_matrix() {
        let src =
            EmbeddingMatrix::from_rows(3, &[[0.6, 0.8, 0.0], [1.0, 0.0, 0.0], [1.0, 2.0, 2.0]])
                .unwrap();
        let tgt =
            EmbeddingMatrix::from_rows(3, &[[0.6, 0.8, 0.0], [0.0, 1.0, 0.0], [2.0, 1.0, 2.0]])
                .unwrap();
        let scores = collect(&src, &tgt, &CosineOptions::default());
        let expected = [1.0, 0.0, 8.0 / 9.0];
        for (s, e) in scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-9, "{s} vs {e}");
        }
    }

    #[test]
    fn identical_rows_score_one_and_empty_is_empty() {
        let m = EmbeddingMatrix::new(4, (1..=20).map(|v| v as f32).collect()).unwrap();
        for s in collect(&m, &m, &CosineOptions::default()) {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let e = EmbeddingMatrix::new(4, vec![]).unwrap();
        assert!(collect(&e, &e, &CosineOptions::default()).is_empty());
    }

    #[test]
    fn mismatched_shapes() {
        let a = EmbeddingMatrix::new(2, vec![1.0; 4]).unwrap();
        let b = EmbeddingMatrix::new(2, vec![1.0; 6]).unwrap();
        let c = EmbeddingMatrix::new(4, vec![1.0; 8]).unwrap();
        let opts = CosineOptions::default();
        assert!(score_cosine(&a, &b, &opts, |_| Ok(())).is_err());
        assert!(score_cosine(&a, &c, &opts, |_| Ok(())).is_err());
    }

    #[test]
    fn zero_rows_follow_policy() {
        let src = EmbeddingMatrix::from_rows(2, &[[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]]).unwrap();
        let tgt = EmbeddingMatrix::from_rows(2, &[[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]).unwrap();

        let err = score_cosine(&src, &tgt, &CosineOptions::default(), |_| Ok(())).unwrap_err();
        assert!(matches!(
            err,
            Error::ZeroVector {
                index: 1,
                side: "source"
            }
        ));

        let opts = CosineOptions {
            zero_rows: PairErrorPolicy::SkipWithReport,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let summary = score_cosine(&src, &tgt, &opts, |p| {
            seen.push(p.index);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0]);
        assert_eq!(summary.scored, 1);
        let skipped: Vec<_> = summary.skipped.iter().map(|s| s.index).collect();
        assert_eq!(skipped, vec![1, 2]);
    }

    #[test]
    fn chunking_and_threads_do_not_change_results() {
        let dim = 37;
        let rows = 1000;
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 40) as f32 / (1u64 << 24) as f32 - 0.5
        };
        let src = EmbeddingMatrix::new(dim, (0..rows * dim).map(|_| next()).collect()).unwrap();
        let tgt = EmbeddingMatrix::new(dim, (0..rows * dim).map(|_| next()).collect()).unwrap();

        let reference = collect(&src, &tgt, &CosineOptions::default());
        for (threads, chunk_rows) in [(1, 1), (1, 7), (2, 64), (4, 999), (3, 5000)] {
            let opts = CosineOptions {
                threads,
                chunk_rows,
                ..Default::default()
            };
            let got = collect(&src, &tgt, &opts);
            assert_eq!(
                got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                reference.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        for (i, s) in reference.iter().enumerate() {
            assert!((s - naive(src.row(i), tgt.row(i))).abs() < 1e-9);
        }
    }
}
