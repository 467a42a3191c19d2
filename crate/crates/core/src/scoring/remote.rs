use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, TryRecvError};
use std::thread;

use super::protocol::{Handshake, ScoreRequest, ScoreResponse};
use super::{PairErrorPolicy, ScoredPair, SkippedPair};
use crate::corpus::SentencePair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RemoteSummary {
    pub scorer_id: String,
    pub sent: u64,
    pub scored: u64,
    pub skipped: Vec<SkippedPair>,
}

/// Client half of a `qe-score/1` session over an arbitrary byte transport.
///
/// At most `window` requests are unanswered at any time. Responses may come
/// back in any order; scores are released to the caller strictly in request
/// order.
pub struct RemoteScorer {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    handshake: Handshake,
    window: usize,
}

impl RemoteScorer {
    /// Reads the handshake line from `reader`.
    pub fn connect<R, W>(reader: R, writer: W) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let mut reader: Box<dyn BufRead + Send> = Box::new(reader);
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::Handshake(format!("reading handshake: {e}")))?;
        if n == 0 {
            return Err(Error::Handshake(
                "scorer closed its output before the handshake".into(),
            ));
        }
        let handshake = Handshake::parse(line.trim_end_matches(['\n', '\r']))?;
        let window = handshake.batch_max;
        Ok(Self {
            reader,
            writer: Box::new(writer),
            handshake,
            window,
        })
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn scorer_id(&self) -> String {
        format!("remote:{}", self.handshake.name)
    }

    /// Shrinks the in-flight window; it never grows past the advertised `batch_max`.
    pub fn limit_window(&mut self, max_in_flight: usize) {
        self.window = max_in_flight.clamp(1, self.handshake.batch_max);
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Scores every pair, calling `sink` in input order. Input indices must be
    /// strictly increasing; each index is used as the request id.
    pub fn score<I, F>(self, pairs: I, policy: PairErrorPolicy, sink: F) -> Result<RemoteSummary>
    where
        I: IntoIterator<Item = Result<SentencePair>>,
        I::IntoIter: Send,
        F: FnMut(ScoredPair) -> Result<()>,
    {
        self.run(pairs.into_iter(), policy, sink, &mut || {})
    }

    fn run<I, F>(
        self,
        pairs: I,
        policy: PairErrorPolicy,
        mut sink: F,
        abort: &mut dyn FnMut(),
    ) -> Result<RemoteSummary>
    where
        I: Iterator<Item = Result<SentencePair>> + Send,
        F: FnMut(ScoredPair) -> Result<()>,
    {
        let scorer_id = self.scorer_id();
        let RemoteScorer {
            mut reader,
            writer,
            window,
            ..
        } = self;

        let (credit_tx, credit_rx) = mpsc::channel::<()>();
        for _ in 0..window {
            credit_tx.send(()).expect("receiver alive");
        }
        let (sent_tx, sent_rx) = mpsc::channel::<u64>();

        thread::scope(|scope| {
            let sender = scope.spawn(move || send_requests(pairs, writer, credit_rx, sent_tx));

            let mut summary = RemoteSummary {
                scorer_id: scorer_id.clone(),
                ..Default::default()
            };
            let received = receive_responses(
                &mut reader,
                &sent_rx,
                &credit_tx,
                policy,
                &scorer_id,
                &mut summary,
                &mut sink,
            );
            drop(credit_tx);
            drop(sent_rx);
            if received.is_err() {
                abort();
            }
            let sent = sender.join().expect("request writer panicked");
            match (received, sent) {
                (Err(e), _) => Err(e),
                (Ok(()), Err(e)) => Err(e),
                (Ok(()), Ok(n)) => {
                    summary.sent = n;
                    Ok(summary)
                }
            }
        })
    }
}

fn send_requests<I>(
    pairs: I,
    writer: Box<dyn Write + Send>,
    credits: mpsc::Receiver<()>,
    sent: mpsc::Sender<u64>,
) -> Result<u64>
where
    I: Iterator<Item = Result<SentencePair>>,
{
    let mut out = BufWriter::new(writer);
    let mut count = 0u64;
    let mut last: Option<u64> = None;
    for pair in pairs {
        let pair = pair?;
        if last.is_some_and(|l| pair.index <= l) {
            return Err(Error::InvalidArgument(format!(
                "pair indices must increase: {} after {}",
                pair.index,
                last.unwrap()
            )));
        }
        last = Some(pair.index);
        match credits.try_recv() {
            Ok(()) => {}
            Err(TryRecvError::Empty) => {
                out.flush()?;
                if credits.recv().is_err() {
                    return Ok(count);
                }
            }
            Err(TryRecvError::Disconnected) => return Ok(count),
        }
        if sent.send(pair.index).is_err() {
            return Ok(count);
        }
        let request = ScoreRequest {
            id: pair.index,
            src: pair.source,
            tgt: pair.target,
        };
        serde_json::to_writer(&mut out, &request).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

enum Outcome {
    Score(f64),
    Rejected(String),
}

fn receive_responses<F>(
    reader: &mut Box<dyn BufRead + Send>,
    sent_rx: &mpsc::Receiver<u64>,
    credit_tx: &mpsc::Sender<()>,
    policy: PairErrorPolicy,
    scorer_id: &str,
    summary: &mut RemoteSummary,
    sink: &mut F,
) -> Result<()>
where
    F: FnMut(ScoredPair) -> Result<()>,
{
    let mut order: VecDeque<u64> = VecDeque::new();
    let mut pending: HashSet<u64> = HashSet::new();
    let mut ready: HashMap<u64, Outcome> = HashMap::new();
    let mut line = String::new();

    let track = |id: u64, order: &mut VecDeque<u64>, pending: &mut HashSet<u64>| {
        order.push_back(id);
        pending.insert(id);
    };

    loop {
        while let Ok(id) = sent_rx.try_recv() {
            track(id, &mut order, &mut pending);
        }
        while let Some(outcome) = order.front().and_then(|id| ready.remove(id)) {
            let index = order.pop_front().unwrap();
            match outcome {
                Outcome::Score(score) => {
                    summary.scored += 1;
                    sink(ScoredPair {
                        index,
                        score,
                        scorer_id: scorer_id.to_string(),
                    })?;
                }
                Outcome::Rejected(message) => match policy {
                    PairErrorPolicy::Error => return Err(Error::PairRejected { index, message }),
                    PairErrorPolicy::SkipWithReport => summary.skipped.push(SkippedPair {
                        index,
                        reason: message,
                    }),
                },
            }
        }
        if order.is_empty() {
            match sent_rx.recv() {
                Ok(id) => {
                    track(id, &mut order, &mut pending);
                    continue;
                }
                Err(_) => break,
            }
        }

        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            while let Ok(id) = sent_rx.try_recv() {
                track(id, &mut order, &mut pending);
            }
            return Err(Error::SidecarExited {
                outstanding: pending.len(),
            });
        }
        let response = ScoreResponse::parse(line.trim_end_matches(['\n', '\r']))?;
        while let Ok(id) = sent_rx.try_recv() {
            track(id, &mut order, &mut pending);
        }
        let id = response.id();
        if id < 0 || !pending.remove(&(id as u64)) {
            return Err(Error::Protocol(format!(
                "response for unknown or already answered id {id}"
            )));
        }
        let outcome = match response {
            ScoreResponse::Score { score, .. } => Outcome::Score(score),
            ScoreResponse::Error { error, .. } => Outcome::Rejected(error),
        };
        ready.insert(id as u64, outcome);
        let _ = credit_tx.send(());
    }

    // Every id is answered; anything further on the stream is a violation.
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        if !line.trim().is_empty() {
            return Err(Error::Protocol(format!(
                "unexpected output after all requests were answered: {:?}",
                line.trim_end()
            )));
        }
    }
}

/// A scorer running as a child process speaking the protocol on its stdin/stdout.
/// Its stderr is passed through.
pub struct Sidecar {
    child: Child,
    scorer: RemoteScorer,
}

impl Sidecar {
    /// Spawns `command_line` (split with POSIX shell quoting rules, no shell involved)
    /// and performs the handshake.
    pub fn spawn(command_line: &str) -> Result<Self> {
        let argv = shlex::split(command_line)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("cannot parse scorer command {command_line:?}"))
            })?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Handshake(format!("cannot launch {:?}: {e}", argv[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match RemoteScorer::connect(BufReader::new(stdout), stdin) {
            Ok(scorer) => Ok(Self { child, scorer }),
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    pub fn scorer(&self) -> &RemoteScorer {
        &self.scorer
    }

    pub fn limit_window(&mut self, max_in_flight: usize) {
        self.scorer.limit_window(max_in_flight);
    }

    /// Runs the session to completion and reaps the process. A non-zero exit
    /// after an otherwise clean session is reported as a protocol error.
    pub fn score<I, F>(self, pairs: I, policy: PairErrorPolicy, sink: F) -> Result<RemoteSummary>
    where
        I: IntoIterator<Item = Result<SentencePair>>,
        I::IntoIter: Send,
        F: FnMut(ScoredPair) -> Result<()>,
    {
        let Sidecar { mut child, scorer } = self;
        let result = {
            let mut abort = || {
                let _ = child.kill();
            };
            scorer.run(pairs.into_iter(), policy, sink, &mut abort)
        };
        if result.is_err() {
            let _ = child.kill();
        }
        let status = child.wait();
        let summary = result?;
        check_exit(status?)?;
        Ok(summary)
    }
}

fn check_exit(status: ExitStatus) -> Result<()> {
    if status.success() {
        Ok(())
    } else {
        Err(Error::Protocol(format!("scorer exited with {status}")))
    }
}
