//! Deterministic in-process scorer speaking `qe-score/1`.
//!
//! The score is the character-length ratio `min(|src|, |tgt|) / max(|src|, |tgt|)`
//! (1.0 when both are empty). It carries no linguistic meaning; it exists so that
//! protocol handling can be checked against an exact oracle without model weights.
//! Responses within a batch can be reordered to exercise the client's reordering.

use std::io::{self, BufRead, BufReader, Read, Write};

use serde::Deserialize;

use super::protocol::{Handshake, ScoreResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockOrder {
    InOrder,
    /// Answer each batch last-request-first.
    Reverse,
    /// Answer each batch in a seeded pseudo-random permutation.
    Shuffle(u64),
}

/// Deliberate misbehaviour, for exercising client error paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockFault {
    /// Answer with an error response when the source contains this text.
    RejectMarker(String),
    /// Stop after answering this many requests, without reading further input.
    ExitAfter(usize),
    /// Send every response twice.
    DuplicateResponses,
    /// Replace the handshake with a line in the wrong protocol.
    BadHandshake,
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub name: String,
    pub batch_max: usize,
    pub order: MockOrder,
    pub fault: Option<MockFault>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            name: "mock".into(),
            batch_max: 32,
            order: MockOrder::InOrder,
            fault: None,
        }
    }
}

/// The mock's scoring function.
pub fn length_ratio(src: &str, tgt: &str) -> f64 {
    let a = src.chars().count();
    let b = tgt.chars().count();
    let hi = a.max(b);
    if hi == 0 {
        1.0
    } else {
        a.min(b) as f64 / hi as f64
    }
}

#[derive(Deserialize)]
struct LooseId {
    id: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct Request {
    id: i64,
    src: String,
    tgt: String,
}

fn answer(line: &str, fault: &Option<MockFault>) -> ScoreResponse {
    match serde_json::from_str::<Request>(line) {
        Ok(req) => match fault {
            Some(MockFault::RejectMarker(marker)) if req.src.contains(marker.as_str()) => {
                ScoreResponse::Error {
                    id: req.id,
                    error: format!("rejected source containing {marker:?}"),
                }
            }
            _ => ScoreResponse::Score {
                id: req.id,
                score: length_ratio(&req.src, &req.tgt),
            },
        },
        Err(e) => {
            let id = serde_json::from_str::<LooseId>(line)
                .ok()
                .and_then(|l| l.id)
                .and_then(|v| v.as_i64())
                .unwrap_or(-1);
            ScoreResponse::Error {
                id,
                error: format!("malformed request: {e}"),
            }
        }
    }
}

fn permute(batch: &mut [ScoreResponse], order: MockOrder, round: u64) {
    match order {
        MockOrder::InOrder => {}
        MockOrder::Reverse => batch.reverse(),
        MockOrder::Shuffle(seed) => {
            let mut state = seed ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
            for i in (1..batch.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                let j = (state % (i as u64 + 1)) as usize;
                batch.swap(i, j);
            }
        }
    }
}

/// Runs the protocol loop until `input` is exhausted.
///
/// Requests are gathered into a batch until `batch_max` are held or no more
/// input is buffered, then the batch is answered as a whole.
pub fn serve<R: Read, W: Write>(config: &MockConfig, input: R, mut output: W) -> io::Result<()> {
    let mut input = BufReader::new(input);
    if config.fault == Some(MockFault::BadHandshake) {
        writeln!(
            output,
            r#"{{"protocol":"qe-score/0","name":"{}","batch_max":1}}"#,
            config.name
        )?;
        return output.flush();
    }
    let handshake = Handshake::new(config.name.clone(), config.batch_max.max(1));
    writeln!(output, "{}", serde_json::to_string(&handshake)?)?;
    output.flush()?;

    let exit_after = match config.fault {
        Some(MockFault::ExitAfter(n)) => Some(n),
        _ => None,
    };
    let mut answered = 0usize;
    let mut batch = Vec::with_capacity(handshake.batch_max);
    let mut line = String::new();
    let mut round = 0u64;
    loop {
        line.clear();
        let eof = input.read_line(&mut line)? == 0;
        if !eof {
            let text = line.trim_end_matches(['\n', '\r']);
            if !text.trim().is_empty() {
                batch.push(answer(text, &config.fault));
            }
        }
        let idle = eof || input.buffer().is_empty();
        if !batch.is_empty() && (batch.len() >= handshake.batch_max || idle) {
            permute(&mut batch, config.order, round);
            round += 1;
            for response in batch.drain(..) {
                if exit_after.is_some_and(|n| answered >= n) {
                    return output.flush();
                }
                let text = response.to_line();
                writeln!(output, "{text}")?;
                if config.fault == Some(MockFault::DuplicateResponses) {
                    writeln!(output, "{text}")?;
                }
                answered += 1;
            }
            output.flush()?;
        }
        if eof {
            return Ok(());
        }
    }
}
