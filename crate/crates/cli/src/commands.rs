use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;

use corpus_sieve::corpus::{
    read_corpus, CorpusPaths, CorpusReader, CorpusSpec, CorpusWriter, MalformedPolicy, SentencePair,
};
use corpus_sieve::embedding::{load_embeddings, validate_alignment, EmbeddingFile, RowSource};
use corpus_sieve::filtering::{Dedup, Merger, Origin, ScoreJoin, ThresholdFilter, ThresholdSweep};
use corpus_sieve::metrics::{correlate as correlate_series, score_stats, ScoreStats};
use corpus_sieve::ppi::{
    parse_phrase_table, phrases_to_pairs, select_top_phrases, write_phrase_table, Selection,
};
use corpus_sieve::report::{to_json, to_key_value};
use corpus_sieve::scoring::mock::{self, MockConfig, MockFault, MockOrder};
use corpus_sieve::scoring::{
    score_cosine, CosineOptions, PairErrorPolicy, ScoreFileReader, ScoreWriter, ScoredPair,
    Sidecar, SkippedPair, FILE_SCORER,
};
use corpus_sieve::{Error, Result};

use crate::args::*;

const THREADS_VAR: &str = "CORPUS_SIEVE_THREADS";

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn policy(m: Malformed) -> MalformedPolicy {
    match m {
        Malformed::Error => MalformedPolicy::Error,
        Malformed::Skip => MalformedPolicy::Skip,
    }
}

fn pair_policy(o: OnError) -> PairErrorPolicy {
    match o {
        OnError::Error => PairErrorPolicy::Error,
        OnError::Skip => PairErrorPolicy::SkipWithReport,
    }
}

fn corpus_spec(paths: &[PathBuf], malformed: Malformed) -> Result<CorpusSpec> {
    Ok(CorpusSpec {
        paths: CorpusPaths::from_paths(paths)?,
        malformed: policy(malformed),
    })
}

fn threads() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            usage(format!(
                "{THREADS_VAR} must be a non-negative integer, got {v:?}"
            ))
        }),
    }
}

/// Prints the key-value form on stdout and, if asked, writes the JSON form.
fn emit<T: Serialize>(report: &T, json: &ReportArg) -> Result<()> {
    print!("{}", to_key_value(report));
    write_json(report, json)
}

fn write_json<T: Serialize>(report: &T, json: &ReportArg) -> Result<()> {
    if let Some(path) = &json.report {
        let mut text = to_json(report);
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn note_skipped_lines(reader_skipped: u64) {
    if reader_skipped > 0 {
        eprintln!("skipped {reader_skipped} malformed corpus line(s)");
    }
}

fn note_skipped_pairs(skipped: &[SkippedPair]) {
    for s in skipped {
        eprintln!("unscored pair {}: {}", s.index, s.reason);
    }
}

fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

/// Reads every score in a file, in line order.
fn read_scores(path: &Path, allow_unscored: bool) -> Result<Vec<ScoredPair>> {
    ScoreFileReader::open(path)?
        .allow_gaps(allow_unscored)
        .collect()
}

// ---------------------------------------------------------------------------
// score

#[derive(Serialize)]
struct ScoreReport {
    scorer_id: String,
    pair_count: u64,
    scored_count: u64,
    unscored_count: u64,
    malformed_skipped: u64,
    #[serde(flatten)]
    stats: Option<ScoreStats>,
}

/// Counts corpus lines while the reader is consumed elsewhere.
struct CountingReader {
    reader: CorpusReader,
    lines: Arc<AtomicU64>,
    skipped: Arc<AtomicU64>,
}

impl Iterator for CountingReader {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.reader.next();
        self.lines
            .store(self.reader.lines_read(), Ordering::Relaxed);
        self.skipped.store(self.reader.skipped(), Ordering::Relaxed);
        item
    }
}

fn corpus_line_count(spec: &CorpusSpec) -> Result<(u64, u64)> {
    let mut reader = read_corpus(spec)?;
    for pair in reader.by_ref() {
        pair?;
    }
    Ok((reader.lines_read(), reader.skipped()))
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(usage(
                format!("--backend {:?} {what}", a.backend).to_lowercase(),
            ))
        }
    };
    let cosine = a.backend == Backend::Cosine;
    let file = a.backend == Backend::File;
    let remote = a.backend == Backend::Remote;
    need(
        !cosine || (a.src_emb.is_some() && a.tgt_emb.is_some()),
        "needs --src-emb and --tgt-emb",
    )?;
    need(
        cosine || (a.src_emb.is_none() && a.tgt_emb.is_none()),
        "does not take --src-emb/--tgt-emb",
    )?;
    need(!file || a.scores.is_some(), "needs --scores")?;
    need(file || a.scores.is_none(), "does not take --scores")?;
    need(!remote || a.cmd.is_some(), "needs --cmd")?;
    need(
        remote || (a.cmd.is_none() && a.batch_size.is_none()),
        "does not take --cmd/--batch-size",
    )?;
    need(cosine || !a.input.is_empty(), "needs --input")?;
    if a.batch_size == Some(0) {
        return Err(usage("--batch-size must be positive"));
    }
    if a.bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let spec = if a.input.is_empty() {
        None
    } else {
        Some(corpus_spec(&a.input, a.malformed)?)
    };
    let threads = threads()?;

    let mut writer = ScoreWriter::create(&a.output)?;
    let mut values = Vec::new();
    let mut sink = |s: ScoredPair| {
        values.push(s.score);
        writer.write(s.index, s.score)
    };

    let (scorer_id, pair_count, skipped, malformed_skipped) = match a.backend {
        Backend::Cosine => {
            let src = load_embeddings(a.src_emb.as_ref().unwrap())?;
            let tgt = load_embeddings(a.tgt_emb.as_ref().unwrap())?;
            let mut malformed = 0;
            if let Some(spec) = &spec {
                let (lines, skipped) = corpus_line_count(spec)?;
                validate_alignment(&src, lines)?;
                validate_alignment(&tgt, lines)?;
                malformed = skipped;
            }
            let options = CosineOptions {
                threads,
                zero_rows: pair_policy(a.on_error),
                ..Default::default()
            };
            let summary = score_cosine(&src, &tgt, &options, &mut sink)?;
            (
                corpus_sieve::scoring::COSINE_SCORER.to_string(),
                src.count(),
                summary.skipped,
                malformed,
            )
        }
        Backend::File => {
            let spec = spec.as_ref().unwrap();
            let (lines, malformed) = corpus_line_count(spec)?;
            let reader = ScoreFileReader::open(a.scores.as_ref().unwrap())?
                .expect_count(lines)
                .allow_gaps(a.on_error == OnError::Skip);
            for s in reader {
                sink(s?)?;
            }
            (FILE_SCORER.to_string(), lines, Vec::new(), malformed)
        }
        Backend::Remote => {
            let lines = Arc::new(AtomicU64::new(0));
            let skipped_lines = Arc::new(AtomicU64::new(0));
            let pairs = CountingReader {
                reader: read_corpus(spec.as_ref().unwrap())?,
                lines: lines.clone(),
                skipped: skipped_lines.clone(),
            };
            let mut sidecar = Sidecar::spawn(a.cmd.as_deref().unwrap())?;
            if let Some(n) = a.batch_size {
                sidecar.limit_window(n);
            }
            let id = sidecar.scorer().scorer_id();
            let summary = sidecar.score(pairs, pair_policy(a.on_error), &mut sink)?;
            (
                id,
                lines.load(Ordering::Relaxed),
                summary.skipped,
                skipped_lines.load(Ordering::Relaxed),
            )
        }
    };
    writer.finish(pair_count)?;
    note_skipped_lines(malformed_skipped);
    note_skipped_pairs(&skipped);

    let stats = if values.is_empty() {
        None
    } else {
        Some(score_stats(&values, a.bins)?)
    };
    let report = ScoreReport {
        scorer_id,
        pair_count,
        scored_count: values.len() as u64,
        unscored_count: pair_count - values.len() as u64,
        malformed_skipped,
        stats,
    };
    emit(&report, &a.report)
}

// ---------------------------------------------------------------------------
// filter

pub fn filter(a: FilterArgs) -> Result<()> {
    let spec = corpus_spec(&a.input, a.malformed)?;
    let kept_paths = CorpusPaths::from_paths(&a.output)?;
    let dropped_paths = if a.dropped.is_empty() {
        None
    } else {
        Some(CorpusPaths::from_paths(&a.dropped)?)
    };
    let mut filter = ThresholdFilter::new(a.threshold, a.scorer_id.clone())?;

    let scores = ScoreFileReader::open(&a.scores)?.allow_gaps(a.allow_unscored);
    let mut join = ScoreJoin::new(read_corpus(&spec)?, scores);
    let mut kept = CorpusWriter::create(&kept_paths)?;
    let mut dropped = dropped_paths
        .as_ref()
        .map(CorpusWriter::create)
        .transpose()?;
    for item in join.by_ref() {
        let (pair, score) = item?;
        if filter.push(score)? {
            kept.write(&pair)?;
        } else if let Some(w) = dropped.as_mut() {
            w.write(&pair)?;
        }
    }
    kept.finish()?;
    if let Some(w) = dropped {
        w.finish()?;
    }
    note_skipped_lines(join.skipped_lines());
    if join.unscored() > 0 {
        eprintln!(
            "{} unscored pair(s) were neither kept nor dropped",
            join.unscored()
        );
    }
    emit(&filter.report(), &a.report)
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Serialize)]
struct SweepOutput {
    input_count: u64,
    scorer_id: String,
    rows: Vec<corpus_sieve::filtering::SweepRow>,
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let mut sweep = ThresholdSweep::new(a.thresholds.clone())?;
    let reader = ScoreFileReader::open(&a.scores)?.allow_gaps(a.allow_unscored);
    for s in reader {
        sweep.push(s?.score)?;
    }
    let report = SweepOutput {
        input_count: sweep.input_count(),
        scorer_id: a.scorer_id,
        rows: sweep.rows(),
    };
    let mut out = io::stdout().lock();
    let fmt = |v: Option<f64>| v.map_or("null".to_string(), |v| v.to_string());
    let table = (|| -> io::Result<()> {
        writeln!(out, "threshold\tkept_count\tretention\tkept_score_mean")?;
        for r in &report.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.threshold,
                r.kept_count,
                r.retention,
                fmt(r.kept_score_mean)
            )?;
        }
        out.flush()
    })();
    table?;
    write_json(&report, &a.report)
}

// ---------------------------------------------------------------------------
// merge

pub fn merge(a: MergeArgs) -> Result<()> {
    let trusted = corpus_spec(&a.trusted, a.malformed)?;
    let filtered = corpus_spec(&a.filtered, a.malformed)?;
    let output = CorpusPaths::from_paths(&a.output)?;
    let dedup = match a.dedup {
        DedupArg::Off => Dedup::Off,
        DedupArg::Exact => Dedup::Exact,
        DedupArg::Hash => Dedup::Hash,
    };
    let mut merger = Merger::new(dedup);
    let mut writer = CorpusWriter::create(&output)?;
    let mut malformed = 0;
    for (spec, origin) in [(trusted, Origin::Trusted), (filtered, Origin::Filtered)] {
        let mut reader = read_corpus(&spec)?;
        for pair in reader.by_ref() {
            if let Some(p) = merger.push(pair?, origin) {
                writer.write(&p)?;
            }
        }
        malformed += reader.skipped();
    }
    writer.finish()?;
    note_skipped_lines(malformed);
    emit(&merger.report(), &a.report)
}

// ---------------------------------------------------------------------------
// ppi

#[derive(Serialize)]
struct PpiReport {
    table_entries: u64,
    prob_index: usize,
    selection: String,
    selected_count: u64,
    pairs_written: u64,
}

pub fn ppi(a: PpiArgs) -> Result<()> {
    let selection = match (a.top_k, a.min_prob) {
        (Some(k), None) => Selection::TopK(k),
        (None, Some(p)) if (0.0..=1.0).contains(&p) => Selection::Threshold(p),
        (None, Some(p)) => return Err(usage(format!("--min-prob {p} is outside [0, 1]"))),
        _ => return Err(usage("give exactly one of --top-k and --min-prob")),
    };
    let output = CorpusPaths::from_paths(&a.output)?;

    let mut table = parse_phrase_table(&a.table)?;
    let selected = select_top_phrases(table.by_ref(), a.prob_index, selection)?;
    let table_entries = table.lines_read();
    let selected_count = selected.len() as u64;

    if let Some(path) = &a.phrases_out {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        write_phrase_table(&mut out, selected.iter().cloned())
            .and_then(|_| out.flush().map_err(Error::from))
            .map_err(|e| match e {
                Error::Io { path: None, source } => Error::io(path, source),
                other => other,
            })?;
    }
    let mut writer = CorpusWriter::create(&output)?;
    for pair in phrases_to_pairs(selected) {
        writer.write(&pair?)?;
    }
    let pairs_written = writer.finish()?;

    let report = PpiReport {
        table_entries,
        prob_index: a.prob_index,
        selection: match selection {
            Selection::TopK(k) => format!("top_k={k}"),
            Selection::Threshold(p) => format!("min_prob={p}"),
        },
        selected_count,
        pairs_written,
    };
    emit(&report, &a.report)
}

// ---------------------------------------------------------------------------
// correlate / stats

pub fn correlate(a: CorrelateArgs) -> Result<()> {
    let xs = read_scores(&a.a, a.allow_unscored)?;
    let ys = read_scores(&a.b, a.allow_unscored)?;
    let a_id = a.a_id.unwrap_or_else(|| file_label(&a.a));
    let b_id = a.b_id.unwrap_or_else(|| file_label(&a.b));
    let report = correlate_series(xs.into_iter().map(Ok), &a_id, ys.into_iter().map(Ok), &b_id)?;
    emit(&report, &a.report)
}

pub fn stats(a: StatsArgs) -> Result<()> {
    if a.bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let values: Vec<f64> = read_scores(&a.scores, a.allow_unscored)?
        .into_iter()
        .map(|s| s.score)
        .collect();
    emit(&score_stats(&values, a.bins)?, &a.report)
}

// ---------------------------------------------------------------------------
// validate

#[derive(Serialize, Default)]
struct ValidateReport {
    corpus_lines: Option<u64>,
    corpus_malformed: Option<u64>,
    source_rows: Option<u64>,
    target_rows: Option<u64>,
    dim: Option<usize>,
    score_lines: Option<u64>,
    unscored_lines: Option<u64>,
}

fn open_validated(path: &Path) -> Result<EmbeddingFile> {
    let file = load_embeddings(path)?;
    file.validate(16_384)?;
    Ok(file)
}

pub fn validate(a: ValidateArgs) -> Result<()> {
    let spec = if a.input.is_empty() {
        None
    } else {
        Some(corpus_spec(&a.input, a.malformed)?)
    };
    let mut report = ValidateReport::default();
    if let Some(spec) = &spec {
        let (lines, malformed) = corpus_line_count(spec)?;
        report.corpus_lines = Some(lines);
        report.corpus_malformed = Some(malformed);
    }
    let src = a.src_emb.as_deref().map(open_validated).transpose()?;
    let tgt = a.tgt_emb.as_deref().map(open_validated).transpose()?;
    report.source_rows = src.as_ref().map(|m| m.count());
    report.target_rows = tgt.as_ref().map(|m| m.count());
    report.dim = src.as_ref().or(tgt.as_ref()).map(|m| m.dim());
    if let Some(path) = &a.scores {
        let mut reader = ScoreFileReader::open(path)?.allow_gaps(a.allow_unscored);
        for s in reader.by_ref() {
            s?;
        }
        report.score_lines = Some(reader.lines_read());
        report.unscored_lines = Some(reader.gaps());
    }

    // Print what was found before reporting any misalignment.
    emit(&report, &a.report)?;
    if let (Some(s), Some(t)) = (&src, &tgt) {
        if s.dim() != t.dim() {
            return Err(Error::DimensionMismatch {
                left: s.dim(),
                right: t.dim(),
            });
        }
        validate_alignment(t, s.count())?;
    }
    let reference = report
        .corpus_lines
        .or(report.source_rows)
        .or(report.target_rows);
    if let Some(n) = reference {
        for m in src.iter().chain(tgt.iter()) {
            validate_alignment(m, n)?;
        }
        if let Some(lines) = report.score_lines {
            if lines != n {
                return Err(Error::CountMismatch {
                    what: format!("score lines in {}", a.scores.as_ref().unwrap().display()),
                    expected: n,
                    found: lines,
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mock-sidecar

pub fn mock_sidecar(a: MockArgs) -> Result<()> {
    let faults = [
        a.reject_marker.clone().map(MockFault::RejectMarker),
        a.exit_after.map(MockFault::ExitAfter),
        a.duplicate_responses
            .then_some(MockFault::DuplicateResponses),
        a.bad_handshake.then_some(MockFault::BadHandshake),
    ];
    let mut faults = faults.into_iter().flatten();
    let fault = faults.next();
    if faults.next().is_some() {
        return Err(usage("at most one fault option may be given"));
    }
    let config = MockConfig {
        name: a.name,
        batch_max: a.batch_max,
        order: match a.order {
            OrderArg::InOrder => MockOrder::InOrder,
            OrderArg::Reverse => MockOrder::Reverse,
            OrderArg::Shuffle => MockOrder::Shuffle(a.seed),
        },
        fault,
    };
    let stdout = io::stdout().lock();
    mock::serve(&config, io::stdin().lock(), stdout).map_err(Error::from)
}
