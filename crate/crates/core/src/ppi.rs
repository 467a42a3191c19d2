//! Phrase-pair injection: pick high-probability entries from a Moses-style
//! phrase table and turn them into sentence pairs for augmentation.
//!
//! Table lines look like `src ||| tgt ||| p1 p2 p3 p4 [||| more fields]`.
//! Fields past the third (alignments, counts) are ignored.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use crate::corpus::{describe_char, forbidden_char, SentencePair};
use crate::error::{Error, Result};
use crate::lines::Lines;

pub const FIELD_DELIMITER: &str = " ||| ";

/// Conventional Moses column order is inverse phrase, inverse lexical,
/// direct phrase, direct lexical; index 2 is the direct phrase translation probability.
pub const DEFAULT_PROB_INDEX: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PhrasePair {
    pub source_phrase: String,
    pub target_phrase: String,
    /// Non-empty, each value finite and within [0, 1].
    pub scores: Vec<f64>,
}

impl PhrasePair {
    /// Canonical table line for fields 1-3, without the trailing LF.
    pub fn to_line(&self) -> String {
        let scores: Vec<String> = self.scores.iter().map(|s| s.to_string()).collect();
        format!(
            "{}{FIELD_DELIMITER}{}{FIELD_DELIMITER}{}",
            self.source_phrase,
            self.target_phrase,
            scores.join(" ")
        )
    }
}

pub fn parse_line(line: &str) -> std::result::Result<PhrasePair, String> {
    let mut fields = line.split(FIELD_DELIMITER);
    let (Some(src), Some(tgt), Some(probs)) = (fields.next(), fields.next(), fields.next()) else {
        return Err(format!(
            "expected at least 3 '|||'-separated fields, found {}",
            line.split(FIELD_DELIMITER).count()
        ));
    };
    let mut scores = Vec::new();
    for token in probs.split_ascii_whitespace() {
        let p: f64 = token
            .parse()
            .map_err(|_| format!("cannot parse probability {token:?}"))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("probability {token} outside [0, 1]"));
        }
        scores.push(p);
    }
    if scores.is_empty() {
        return Err("no probabilities in third field".into());
    }
    Ok(PhrasePair {
        source_phrase: src.to_string(),
        target_phrase: tgt.to_string(),
        scores,
    })
}

/// Streams phrase pairs from a table in file order.
pub struct PhraseTableReader {
    lines: Lines,
    done: bool,
}

pub fn parse_phrase_table(path: impl AsRef<Path>) -> Result<PhraseTableReader> {
    Ok(PhraseTableReader {
        lines: Lines::open(path.as_ref())?,
        done: false,
    })
}

impl PhraseTableReader {
    pub fn from_reader<R: std::io::BufRead + Send + 'static>(reader: R) -> Self {
        Self {
            lines: Lines::from_reader(reader),
            done: false,
        }
    }

    pub fn lines_read(&self) -> u64 {
        self.lines.line_number()
    }

    fn read_one(&mut self) -> Result<Option<PhrasePair>> {
        let Some(line) = self.lines.next_line()? else {
            return Ok(None);
        };
        match parse_line(line) {
            Ok(p) => Ok(Some(p)),
            Err(reason) => Err(self.lines.malformed(reason)),
        }
    }
}

impl Iterator for PhraseTableReader {
    type Item = Result<PhrasePair>;

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

pub fn write_phrase_table<W: Write, I>(out: &mut W, pairs: I) -> Result<u64>
where
    I: IntoIterator<Item = PhrasePair>,
{
    let mut n = 0;
    for p in pairs {
        writeln!(out, "{}", p.to_line())?;
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Keep entries whose probability is at least this value.
    Threshold(f64),
    /// Keep the k most probable entries; ties go to the earlier entry.
    TopK(usize),
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    prob: f64,
    position: u64,
}

// Heap order: "greater" means better (higher probability, then earlier position).
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prob
            .total_cmp(&other.prob)
            .then_with(|| other.position.cmp(&self.position))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

fn prob_at(pair: &PhrasePair, prob_index: usize, position: u64) -> Result<f64> {
    pair.scores.get(prob_index).copied().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "probability index {prob_index} out of range at line {}: entry has {} values",
            position + 1,
            pair.scores.len()
        ))
    })
}

/// Selects phrase pairs by the probability in column `prob_index`; output keeps input order.
///
/// Positions are counted from the start of `pairs`, so for a freshly parsed
/// table position + 1 is the line number.
pub fn select_top_phrases<I>(
    pairs: I,
    prob_index: usize,
    selection: Selection,
) -> Result<Vec<PhrasePair>>
where
    I: IntoIterator<Item = Result<PhrasePair>>,
{
    match selection {
        Selection::Threshold(t) => {
            if t.is_nan() {
                return Err(Error::InvalidArgument("threshold is NaN".into()));
            }
            let mut out = Vec::new();
            for (position, pair) in pairs.into_iter().enumerate() {
                let pair = pair?;
                if prob_at(&pair, prob_index, position as u64)? >= t {
                    out.push(pair);
                }
            }
            Ok(out)
        }
        Selection::TopK(k) => {
            // Min-heap of the best k seen so far; the root is the weakest survivor.
            let mut heap: BinaryHeap<Reverse<(Ranked, usize)>> = BinaryHeap::new();
            let mut slots: Vec<(u64, PhrasePair)> = Vec::new();
            for (position, pair) in pairs.into_iter().enumerate() {
                let pair = pair?;
                let position = position as u64;
                let rank = Ranked {
                    prob: prob_at(&pair, prob_index, position)?,
                    position,
                };
                if k == 0 {
                    continue;
                }
                if heap.len() < k {
                    slots.push((position, pair));
                    heap.push(Reverse((rank, slots.len() - 1)));
                } else if let Some(Reverse((weakest, slot))) = heap.peek().copied() {
                    if rank > weakest {
                        heap.pop();
                        slots[slot] = (position, pair);
                        heap.push(Reverse((rank, slot)));
                    }
                }
            }
            let mut kept = slots;
            kept.sort_by_key(|(position, _)| *position);
            Ok(kept.into_iter().map(|(_, p)| p).collect())
        }
    }
}

/// Turns phrase pairs into sentence pairs indexed 0, 1, ...
pub fn phrases_to_pairs<I>(phrases: I) -> impl Iterator<Item = Result<SentencePair>>
where
    I: IntoIterator<Item = PhrasePair>,
{
    phrases.into_iter().enumerate().map(|(i, p)| {
        for text in [&p.source_phrase, &p.target_phrase] {
            if let Some(c) = forbidden_char(text) {
                return Err(Error::InvalidPair {
                    index: i as u64,
                    reason: format!("phrase {text:?} contains {}", describe_char(c)),
                });
            }
        }
        Ok(SentencePair {
            index: i as u64,
            source: p.source_phrase,
            target: p.target_phrase,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn table(text: &'static str) -> PhraseTableReader {
        PhraseTableReader::from_reader(Cursor::new(text.as_bytes()))
    }

    fn phrase(src: &str, probs: &[f64]) -> PhrasePair {
        PhrasePair {
            source_phrase: src.into(),
            target_phrase: format!("{src}'"),
            scores: probs.to_vec(),
        }
    }

    #[test]
    fn parses_fields() {
        let pairs: Vec<_> = table("der ||| the ||| 0.7 0.6 0.8 0.5\n")
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(
            pairs,
            vec![PhrasePair {
                source_phrase: "der".into(),
                target_phrase: "the".into(),
                scores: vec![0.7, 0.6, 0.8, 0.5],
            }]
        );
    }

    #[test]
    fn extra_fields_are_ignored() {
        let pairs: Vec<_> = table("das haus ||| the house ||| 0.5 0.25 ||| 0-0 1-1 ||| 10 8 3\n")
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(pairs[0].target_phrase, "the house");
        assert_eq!(pairs[0].scores, vec![0.5, 0.25]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = table("a ||| b ||| 0.1\na ||| b\n")
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err:?}");

        for bad in [
            "a ||| b ||| 1.5\n",
            "a ||| b ||| -0.1\n",
            "a ||| b ||| x\n",
            "a ||| b |||\n",
            "a ||| b ||| nan\n",
        ] {
            let err = PhraseTableReader::from_reader(Cursor::new(bad.as_bytes()))
                .collect::<Result<Vec<_>>>()
                .unwrap_err();
            assert!(
                matches!(err, Error::Malformed { line: 1, .. }),
                "{bad}: {err:?}"
            );
        }
    }

    #[test]
    fn top_k_breaks_ties_by_position() {
        let pairs = vec![
            phrase("a", &[0.9]),
            phrase("b", &[0.2]),
            phrase("c", &[0.9]),
        ];
        let got = select_top_phrases(pairs.iter().cloned().map(Ok), 0, Selection::TopK(2)).unwrap();
        assert_eq!(got, vec![pairs[0].clone(), pairs[2].clone()]);

        let got = select_top_phrases(pairs.iter().cloned().map(Ok), 0, Selection::TopK(1)).unwrap();
        assert_eq!(got, vec![pairs[0].clone()]);

        let got =
            select_top_phrases(pairs.iter().cloned().map(Ok), 0, Selection::TopK(10)).unwrap();
        assert_eq!(got, pairs);

        let got = select_top_phrases(pairs.iter().cloned().map(Ok), 0, Selection::TopK(0)).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let pairs = vec![
            phrase("a", &[1.0]),
            phrase("b", &[0.999]),
            phrase("c", &[1.0]),
        ];
        let got =
            select_top_phrases(pairs.into_iter().map(Ok), 0, Selection::Threshold(1.0)).unwrap();
        let srcs: Vec<_> = got.iter().map(|p| p.source_phrase.as_str()).collect();
        assert_eq!(srcs, vec!["a", "c"]);
    }

    #[test]
    fn prob_index_out_of_range_names_line() {
        let pairs = vec![phrase("a", &[0.1, 0.2, 0.3]), phrase("b", &[0.1])];
        for sel in [Selection::Threshold(0.0), Selection::TopK(1)] {
            let err = select_top_phrases(pairs.clone().into_iter().map(Ok), 2, sel).unwrap_err();
            assert!(err.to_string().contains("line 2"), "{err}");
        }
    }

    #[test]
    fn phrases_become_pairs() {
        let got: Vec<_> = phrases_to_pairs(vec![
            PhrasePair {
                source_phrase: "der".into(),
                target_phrase: "the".into(),
                scores: vec![1.0],
            },
            phrase("x", &[0.5]),
        ])
        .collect::<Result<_>>()
        .unwrap();
        assert_eq!(got[0], SentencePair::new(0, "der", "the").unwrap());
        assert_eq!(got[1].index, 1);
        assert_eq!(phrases_to_pairs(Vec::new()).count(), 0);

        let bad = PhrasePair {
            source_phrase: "a\tb".into(),
            target_phrase: "c".into(),
            scores: vec![1.0],
        };
        assert!(phrases_to_pairs(vec![bad]).next().unwrap().is_err());
    }
}
