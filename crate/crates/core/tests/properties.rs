use std::io::Cursor;

use proptest::prelude::*;

use corpus_sieve::corpus::{
    read_corpus, write_corpus, CorpusPaths, CorpusReader, CorpusSpec, MalformedPolicy, SentencePair,
};
use corpus_sieve::embedding::{load_embeddings, write_embeddings, EmbeddingMatrix};
use corpus_sieve::filtering::{
    filter_by_threshold, merge_corpora, sweep_thresholds, Dedup, ThresholdFilter,
};
use corpus_sieve::metrics::{pearson, score_stats};
use corpus_sieve::ppi::{parse_line, select_top_phrases, PhrasePair, Selection};
use corpus_sieve::scoring::{cosine_similarity, format_score, ScoreFileReader, ScoreWriter};

fn sentence() -> impl Strategy<Value = String> {
    // Any text without TAB, LF or CR, including non-ASCII and the empty string.
    proptest::string::string_regex("[^\t\n\r]{0,24}").unwrap()
}

fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((sentence(), sentence()), 0..40)
}

fn to_pairs(rows: &[(String, String)]) -> Vec<SentencePair> {
    rows.iter()
        .enumerate()
        .map(|(i, (s, t))| SentencePair::new(i as u64, s.clone(), t.clone()).unwrap())
        .collect()
}

fn tsv_text(rows: &[(String, String)]) -> String {
    rows.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect()
}

fn unit_vec(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1000.0f32..1000.0, dim)
        .prop_filter("nonzero", |v| v.iter().any(|x| *x != 0.0))
}

fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 0..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tsv_round_trip_is_byte_exact(rows in corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.tsv");
        let b = dir.path().join("b.tsv");
        std::fs::write(&a, tsv_text(&rows)).unwrap();
        let n = write_corpus(read_corpus(&CorpusSpec::tsv(&a)).unwrap(), &CorpusPaths::Tsv(b.clone())).unwrap();
        prop_assert_eq!(n, rows.len() as u64);
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn bitext_round_trip_and_format_equivalence(rows in corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("c.src"), dir.path().join("c.tgt"));
        let src: String = rows.iter().map(|r| format!("{}\n", r.0)).collect();
        let tgt: String = rows.iter().map(|r| format!("{}\n", r.1)).collect();
        std::fs::write(&s, &src).unwrap();
        std::fs::write(&t, &tgt).unwrap();

        let read: Vec<_> = read_corpus(&CorpusSpec::bitext(&s, &t)).unwrap().collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(&read, &to_pairs(&rows));
        let via_tsv: Vec<_> = CorpusReader::tsv_from_reader(Cursor::new(tsv_text(&rows)), MalformedPolicy::Error)
            .collect::<Result<_, _>>()
            .unwrap();
        prop_assert_eq!(&read, &via_tsv);

        let out = CorpusPaths::Bitext { source: dir.path().join("o.src"), target: dir.path().join("o.tgt") };
        write_corpus(read.into_iter().map(Ok), &out).unwrap();
        let CorpusPaths::Bitext { source, target } = out else { unreachable!() };
        prop_assert_eq!(std::fs::read_to_string(source).unwrap(), src);
        prop_assert_eq!(std::fs::read_to_string(target).unwrap(), tgt);
    }

    #[test]
    fn emb1_round_trip_is_byte_exact(
        dim in 1usize..40,
        count in 0usize..30,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..dim * count).map(|_| rng.gen_range(-1e6f32..1e6)).collect();
        let m = EmbeddingMatrix::new(dim, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.emb"), dir.path().join("b.emb"));
        write_embeddings(&m, &a).unwrap();
        let loaded = load_embeddings(&a).unwrap().load().unwrap();
        prop_assert_eq!(loaded.as_slice(), m.as_slice());
        write_embeddings(&loaded, &b).unwrap();
        let bytes = std::fs::read(&a).unwrap();
        prop_assert_eq!(bytes.len(), 28 + 4 * dim * count);
        prop_assert_eq!(bytes, std::fs::read(&b).unwrap());
    }

    #[test]
    fn score_file_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..100)) {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
        let text: String = values.iter().map(|v| format!("{}\n", format_score(*v))).collect();
        std::fs::write(&a, &text).unwrap();
        let mut w = ScoreWriter::create(&b).unwrap();
        let reader = ScoreFileReader::open(&a).unwrap().expect_count(values.len() as u64);
        for s in reader {
            let s = s.unwrap();
            prop_assert_eq!(s.score.to_bits(), values[s.index as usize].to_bits());
            w.write(s.index, s.score).unwrap();
        }
        w.finish(values.len() as u64).unwrap();
        prop_assert_eq!(std::fs::read_to_string(&b).unwrap(), text);
    }

    #[test]
    fn cosine_matches_reference_and_is_symmetric(
        (a, b) in (1usize..300).prop_flat_map(|d| (unit_vec(d), unit_vec(d))),
        exp in -20i32..20,
    ) {
        let c = cosine_similarity(&a, &b).unwrap();
        prop_assert!((c - naive_cosine(&a, &b)).abs() <= 1e-9);
        prop_assert!((c - cosine_similarity(&b, &a).unwrap()).abs() <= 1e-9);
        // Power-of-two scaling is exact in f32, so the inputs really are proportional.
        let k = 2f32.powi(exp);
        let scaled: Vec<f32> = a.iter().map(|x| x * k).collect();
        prop_assert!((c - cosine_similarity(&scaled, &b).unwrap()).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn filter_partitions_and_is_monotone(values in scores(), t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let items = || values.iter().enumerate().map(|(i, s)| Ok((i, *s)));
        let (kept_lo, dropped_lo, rep) = filter_by_threshold(items(), lo, "x").unwrap();
        let (kept_hi, _, _) = filter_by_threshold(items(), hi, "x").unwrap();

        let mut all: Vec<usize> = kept_lo.iter().chain(&dropped_lo).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..values.len()).collect::<Vec<_>>());
        prop_assert_eq!(rep.kept_count + rep.dropped_count, values.len() as u64);
        prop_assert!(kept_lo.iter().all(|i| values[*i] >= lo));
        prop_assert!(dropped_lo.iter().all(|i| values[*i] < lo));
        prop_assert!(kept_hi.iter().all(|i| kept_lo.contains(i)));
    }

    #[test]
    fn sweep_rows_equal_single_runs(values in scores(), mut ts in prop::collection::btree_set(-200i32..200, 1..12)) {
        let thresholds: Vec<f64> = std::mem::take(&mut ts).into_iter().map(|t| t as f64 / 100.0).collect();
        let rows = sweep_thresholds(values.iter().map(|v| Ok(*v)), &thresholds).unwrap();
        for row in rows {
            let mut f = ThresholdFilter::new(row.threshold, "x").unwrap();
            for v in &values {
                f.push(*v).unwrap();
            }
            let r = f.report();
            prop_assert_eq!(row.kept_count, r.kept_count);
            prop_assert_eq!(row.kept_score_mean.map(f64::to_bits), r.kept_score_mean.map(f64::to_bits));
        }
    }

    #[test]
    fn dedup_merge_is_idempotent(rows in prop::collection::vec((0u8..4, 0u8..4), 0..40)) {
        let pairs: Vec<SentencePair> = rows
            .iter()
            .enumerate()
            .map(|(i, (s, t))| SentencePair::new(i as u64, s.to_string(), t.to_string()).unwrap())
            .collect();
        for dedup in [Dedup::Exact, Dedup::Hash] {
            let mut once = Vec::new();
            merge_corpora(pairs.iter().cloned().map(Ok), [], dedup, |p| { once.push(p); Ok(()) }).unwrap();
            let mut twice = Vec::new();
            let rep = merge_corpora(once.iter().cloned().map(Ok), once.iter().cloned().map(Ok), dedup, |p| { twice.push(p); Ok(()) }).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(rep.duplicates_removed, once.len() as u64);
        }
    }

    #[test]
    fn top_k_keeps_min_k_n_best(probs in prop::collection::vec(0u8..=10, 0..60), k in 0usize..80) {
        let table: Vec<PhrasePair> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| PhrasePair {
                source_phrase: format!("s{i}"),
                target_phrase: format!("t{i}"),
                scores: vec![*p as f64 / 10.0],
            })
            .collect();
        let kept = select_top_phrases(table.iter().cloned().map(Ok), 0, Selection::TopK(k)).unwrap();
        prop_assert_eq!(kept.len(), k.min(table.len()));
        // Oracle: stable sort by descending probability, take k, restore input order.
        let mut order: Vec<usize> = (0..table.len()).collect();
        order.sort_by(|a, b| probs[*b].cmp(&probs[*a]));
        let mut best: Vec<usize> = order.into_iter().take(k).collect();
        best.sort();
        let expected: Vec<PhrasePair> = best.into_iter().map(|i| table[i].clone()).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn phrase_line_round_trip(
        src in "[a-z ]{1,12}",
        tgt in "[a-z ]{1,12}",
        probs in prop::collection::vec(0.0f64..=1.0, 1..5),
    ) {
        let p = PhrasePair { source_phrase: src, target_phrase: tgt, scores: probs };
        prop_assert_eq!(parse_line(&p.to_line()).unwrap(), p);
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 2..200),
        seed in any::<u64>(),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.3 + rng.gen_range(-50.0..50.0)).collect();
        let Ok(r) = pearson(&xs, &ys) else { return Ok(()); };
        prop_assert!((r - pearson(&ys, &xs).unwrap()).abs() <= 1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((r - pearson(&shifted, &ys).unwrap()).abs() <= 1e-9);
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((r + pearson(&flipped, &ys).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn histogram_counts_sum_to_n(values in prop::collection::vec(-5.0f64..5.0, 1..300), bins in 1usize..30) {
        let stats = score_stats(&values, bins).unwrap();
        prop_assert_eq!(stats.histogram.iter().map(|b| b.count).sum::<u64>(), values.len() as u64);
        prop_assert!(stats.min - 1e-12 <= stats.mean && stats.mean <= stats.max + 1e-12);
    }
}
