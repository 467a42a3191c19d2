use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "corpus-sieve",
    version,
    about = "Score, filter and merge noisy parallel corpora",
    after_help = "Worker threads for cosine scoring come from CORPUS_SIEVE_THREADS (0 or unset = all cores).\n\
                  Exit status: 0 success, 1 usage error, 2 data error, 3 scorer protocol error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every pair of a corpus and write an aligned score file.
    Score(ScoreArgs),
    /// Keep the pairs whose score is at or above a threshold.
    #[command(allow_negative_numbers = true)]
    Filter(FilterArgs),
    /// Report retention at several thresholds in one pass.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Concatenate trusted and filtered corpora, optionally dropping duplicates.
    Merge(MergeArgs),
    /// Select phrase pairs from a phrase table and emit them as a corpus.
    Ppi(PpiArgs),
    /// Pearson correlation between two score files.
    Correlate(CorrelateArgs),
    /// Summary statistics and histogram of a score file.
    Stats(StatsArgs),
    /// Check that corpus, embedding and score files are well formed and aligned.
    Validate(ValidateArgs),
    /// Deterministic length-ratio scorer speaking the scorer protocol on stdin/stdout.
    #[command(hide = true)]
    MockSidecar(MockArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Malformed {
    Error,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Cosine,
    File,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnError {
    Error,
    Skip,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DedupArg {
    Off,
    Exact,
    Hash,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    InOrder,
    Reverse,
    Shuffle,
}

#[derive(Debug, Args)]
pub struct ReportArg {
    /// Also write the report as JSON to this file.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_enum)]
    pub backend: Backend,
    /// Corpus: one TSV file, or source and target files of a bitext.
    #[arg(long, num_args = 1..=2, value_name = "PATH")]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "error")]
    pub malformed: Malformed,
    /// Source-side EMB1 embeddings (cosine backend).
    #[arg(long, value_name = "PATH")]
    pub src_emb: Option<PathBuf>,
    /// Target-side EMB1 embeddings (cosine backend).
    #[arg(long, value_name = "PATH")]
    pub tgt_emb: Option<PathBuf>,
    /// Precomputed score file (file backend).
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    /// Scorer command line (remote backend), e.g. "python -m qe_sidecar serve model.ckpt".
    #[arg(long, value_name = "COMMAND")]
    pub cmd: Option<String>,
    /// Cap on requests in flight (remote backend); never above the scorer's own limit.
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// What to do with a pair that cannot be scored (zero embedding, scorer-rejected pair).
    /// With "skip" its line in the score file is left empty and the pair is listed on stderr.
    #[arg(long, value_enum, default_value = "error")]
    pub on_error: OnError,
    /// Score file to write.
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, num_args = 1..=2, required = true, value_name = "PATH")]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "error")]
    pub malformed: Malformed,
    /// Score file aligned with the corpus.
    #[arg(long, value_name = "PATH")]
    pub scores: PathBuf,
    /// Pairs scoring at or above this value are kept. Thresholds depend on the scorer
    /// and corpus: 0.8 is a common choice for LaBSE cosine scores; z-scored QE
    /// outputs have used -0.5 (En-Mr), -0.4 (Zh-En) and 0 (Hi-Bn).
    #[arg(long)]
    pub threshold: f64,
    /// Where kept pairs go: one TSV path or source and target paths.
    #[arg(long, num_args = 1..=2, required = true, value_name = "PATH")]
    pub output: Vec<PathBuf>,
    /// Also write dropped pairs here.
    #[arg(long, num_args = 1..=2, value_name = "PATH")]
    pub dropped: Vec<PathBuf>,
    /// Accept empty score lines (pairs left unscored upstream); such pairs are neither kept nor dropped.
    #[arg(long)]
    pub allow_unscored: bool,
    /// Scorer name recorded in the report.
    #[arg(long, default_value = "file")]
    pub scorer_id: String,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "PATH")]
    pub scores: PathBuf,
    /// Strictly increasing, comma separated, e.g. -0.5,-0.4,0,0.8
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub allow_unscored: bool,
    #[arg(long, default_value = "file")]
    pub scorer_id: String,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long, num_args = 1..=2, required = true, value_name = "PATH")]
    pub trusted: Vec<PathBuf>,
    #[arg(long, num_args = 1..=2, required = true, value_name = "PATH")]
    pub filtered: Vec<PathBuf>,
    #[arg(long, num_args = 1..=2, required = true, value_name = "PATH")]
    pub output: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "error")]
    pub malformed: Malformed,
    /// "exact" keeps a set of every emitted pair; "hash" keeps 128-bit digests instead.
    #[arg(long, value_enum, default_value = "off")]
    pub dedup: DedupArg,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("selection").required(true).args(["top_k", "min_prob"])))]
pub struct PpiArgs {
    /// Phrase table with " ||| "-separated fields.
    #[arg(long, value_name = "PATH")]
    pub table: PathBuf,
    /// Zero-based column of the probability to rank by.
    #[arg(long, default_value_t = 2)]
    pub prob_index: usize,
    /// Keep the k most probable entries.
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Keep entries whose probability is at least this value.
    #[arg(long, value_name = "P")]
    pub min_prob: Option<f64>,
    #[arg(long, num_args = 1..=2, required = true, value_name = "PATH")]
    pub output: Vec<PathBuf>,
    /// Also write the selected table entries (fields 1-3).
    #[arg(long, value_name = "PATH")]
    pub phrases_out: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long, value_name = "PATH")]
    pub a: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub b: PathBuf,
    /// Label for series a (defaults to its file name).
    #[arg(long)]
    pub a_id: Option<String>,
    #[arg(long)]
    pub b_id: Option<String>,
    #[arg(long)]
    pub allow_unscored: bool,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "PATH")]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long)]
    pub allow_unscored: bool,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("inputs").required(true).multiple(true).args(["input", "src_emb", "tgt_emb", "scores"])))]
pub struct ValidateArgs {
    #[arg(long, num_args = 1..=2, value_name = "PATH")]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "error")]
    pub malformed: Malformed,
    #[arg(long, value_name = "PATH")]
    pub src_emb: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub tgt_emb: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub allow_unscored: bool,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, default_value = "mock")]
    pub name: String,
    #[arg(long, default_value_t = 32)]
    pub batch_max: usize,
    #[arg(long, value_enum, default_value = "in-order")]
    pub order: OrderArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Answer with an error when the source contains this text.
    #[arg(long)]
    pub reject_marker: Option<String>,
    /// Stop after this many responses.
    #[arg(long)]
    pub exit_after: Option<usize>,
    #[arg(long)]
    pub duplicate_responses: bool,
    #[arg(long)]
    pub bad_handshake: bool,
}
