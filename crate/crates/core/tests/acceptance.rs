//! Acceptance checks, one PASS/FAIL/SKIP line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero on any FAIL.
//!
//! Data-dependent checks read `CQARANK_LINKSO_DIR` (subdirectories `python`,
//! `java`, `javascript`, each holding `corpus.tsv`, `judgments.tsv`,
//! `train.txt`, `dev.txt`, `test.txt`) and `CQARANK_EMBED_ENDPOINT`.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::{oracle_bm25, oracle_features, synthetic, toy_corpus, toy_judgments, FEATURE_TABLE};
use cqarank::corpus::{parse_corpus, SplitKind};
use cqarank::dataset::{read_libsvm, write_libsvm, QueryGroup, RankingDataset};
use cqarank::embedding::{FallbackEmbedder, RemoteConfig};
use cqarank::features::{bm25, feature_info, Bm25Params, FeatureExtractor, FeatureVector, TokenizedCorpus};
use cqarank::importance::{auxiliary_importance, gain_importance, split_gain, AuxiliaryLoss, SplitStats};
use cqarank::lambdamart::{lambda_gradients, score, train, BoostParams};
use cqarank::metrics::{average_precision_at_k, evaluate, ndcg_at_k, ScoredGroup, ScoredItem};
use cqarank::pipeline::{ablate_datasets, run_pipeline, EmbedderConfig, ExperimentConfig};
use cqarank::stats::{CorpusStats, Stream};
use cqarank::{tokenize, FeatureSubset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Check {
    name: &'static str,
    verdict: Verdict,
    detail: String,
}

fn check(name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        name,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn skip(name: &'static str, detail: &str) -> Check {
    Check {
        name,
        verdict: Verdict::Skip,
        detail: detail.to_string(),
    }
}

fn feature_contract() -> Check {
    let start = Instant::now();
    let corpus = toy_corpus();
    let tokens = TokenizedCorpus::new(&corpus);
    let (qs, as_) = tokens.build_stats::<f64>().unwrap();
    let emb = FallbackEmbedder::default();
    let rows = FeatureExtractor::new(&qs, &as_, Bm25Params::default(), &emb)
        .extract_all(&toy_judgments(), &tokens)
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let mut worst = 0.0f64;
    let mut lengths_ok = true;
    for r in &rows {
        let want = oracle_features(&corpus, &r.qid1, &r.qid2);
        lengths_ok &= r.values.len() == 35 && want.len() == 35;
        for (g, w) in r.values.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    let order_ok = (1..=35).all(|id| feature_info(id).map(|f| f.label()) == Some(FEATURE_TABLE[id - 1].to_string()));
    check(
        "feature contract: 35 features vs brute-force oracle (tol 1e-9, < 1 s)",
        lengths_ok && order_ok && worst <= 1e-9 && elapsed < 1.0 && rows.len() == 20,
        format!("{} pairs, max |diff| {worst:.3e}, order ok {order_ok}, {elapsed:.3} s", rows.len()),
    )
}

fn bm25_oracle() -> Check {
    let texts = ["cat cat dog bird", "dog fish", "cat fish fish bird dog bird"];
    let docs: Vec<_> = texts.iter().map(|t| tokenize(t)).collect();
    let stats = CorpusStats::<f64>::build(&docs, Stream::Question).unwrap();
    let params = Bm25Params::default();
    let ln15 = 1.5f64.ln();
    // avdl = 4; doc 1 has length 4, so the length ratio is 1
    let hand = [
        ("cat", 0, ln15 * 2.0 * 2.2 / (2.0 + 1.2)),
        ("cat fish", 2, ln15 * 2.2 / (1.0 + 1.65) + ln15 * 2.0 * 2.2 / (2.0 + 1.65)),
        ("fish", 1, ln15 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 0.5))),
        ("dog", 0, 0.0),
        ("owl", 2, 0.0),
    ];
    let mut worst = 0.0f64;
    for (q, d, want) in hand {
        let got = bm25(&tokenize(q), &docs[d], &stats, &params);
        let brute = oracle_bm25(tokenize(q).tokens(), docs[d].tokens(), &docs.iter().map(|d| d.tokens().to_vec()).collect::<Vec<_>>(), 1.2, 0.75);
        worst = worst.max((got - want).abs()).max((brute - want).abs());
    }
    let factor = bm25(&tokenize("cat"), &docs[0], &stats, &params) / stats.idf("cat");
    check(
        "bm25 oracle: hand values on a 3-document corpus, k1=1.2 b=0.75 (tol 1e-9)",
        worst <= 1e-9 && (factor - 1.375).abs() <= 1e-9,
        format!("max |diff| {worst:.3e}, len=avdl factor {factor}"),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn hand_dcg(labels: &[u8], k: usize) -> f64 {
    let mut s = 0.0;
    for r in 1..=k.min(labels.len()) {
        s += (2f64.powi(labels[r - 1] as i32) - 1.0) / ((r + 1) as f64).log2();
    }
    s
}

fn hand_ap(labels: &[u8], k: usize) -> f64 {
    let total = labels.iter().filter(|&&l| l > 0).count();
    if total == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for r in 1..=k.min(labels.len()) {
        if labels[r - 1] > 0 {
            let hits = labels[..r].iter().filter(|&&l| l > 0).count();
            s += hits as f64 / r as f64;
        }
    }
    s / total.min(k) as f64
}

fn metric_oracle() -> Check {
    let mut cases = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=6 {
        let perms = permutations(n);
        for mask in 0u32..(1 << n) {
            let base: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let orders: Vec<Vec<u8>> = perms.iter().map(|p| p.iter().map(|&i| base[i]).collect()).collect();
            for k in 1..=n + 1 {
                let ideal = orders.iter().map(|o| hand_dcg(o, k)).fold(0.0, f64::max);
                for o in &orders {
                    let want_ndcg = if ideal == 0.0 { 0.0 } else { hand_dcg(o, k) / ideal };
                    cases += 1;
                    if ndcg_at_k::<f64>(o, k) != want_ndcg || average_precision_at_k::<f64>(o, k) != hand_ap(o, k) {
                        mismatches += 1;
                    }
                }
            }
            // the same orders delivered as scores through evaluate()
            for o in orders.iter().take(24) {
                let g = ScoredGroup {
                    qid1: "q".into(),
                    items: o
                        .iter()
                        .enumerate()
                        .map(|(i, &l)| ScoredItem {
                            qid2: format!("c{i}"),
                            label: l,
                            score: -(i as f64),
                        })
                        .collect(),
                };
                let r = evaluate(&[g]);
                if r.evaluated_queries == 1 && (r.ndcg10 != ndcg_at_k::<f64>(o, 10) || r.map5 != hand_ap(o, 5)) {
                    mismatches += 1;
                }
            }
        }
    }
    let w1: f64 = ndcg_at_k(&[0, 1], 2);
    let w2: f64 = average_precision_at_k(&[1, 0, 1], 3);
    check(
        "metric oracle: exhaustive permutations up to size 6 (exact), worked values (tol 1e-5)",
        mismatches == 0 && (w1 - 0.63093).abs() < 1e-5 && (w2 - 0.83333).abs() < 1e-5,
        format!("{cases} cases, {mismatches} mismatches, ndcg@2[0,1]={w1:.5}, ap@3[1,0,1]={w2:.5}"),
    )
}

fn lambda_correctness() -> Check {
    let two = lambda_gradients(&[(0.0f64, 1), (0.0, 0)], 10, 1.0);
    let pair_ok = (two[0].lambda - 0.18454).abs() < 1e-5 && (two[1].lambda + 0.18454).abs() < 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut nonzero = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=60);
        let group: Vec<(f64, u8)> = (0..n)
            .map(|_| {
                let s = if rng.gen_bool(0.2) { 0.5 } else { rng.gen_range(-4.0..4.0) };
                (s, u8::from(rng.gen_bool(0.3)))
            })
            .collect();
        let total: f64 = lambda_gradients(&group, 10, 1.0).iter().map(|g| g.lambda).sum();
        if total != 0.0 {
            nonzero += 1;
        }
    }
    check(
        "lambda correctness: 2-document equal scores ±0.18454 (tol 1e-5), sum exactly 0 on 1000 groups",
        pair_ok && nonzero == 0,
        format!("λ = ({:.6}, {:.6}), {nonzero} groups with nonzero sum", two[0].lambda, two[1].lambda),
    )
}

fn trainer_sanity() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // column 7 orders relevance perfectly
    let perfect = |x: &[f64], _: &mut ChaCha8Rng| u8::from(x[7] > 0.8);
    let tr = synthetic(&mut rng, SplitKind::Train, 0, 200, 30, perfect);
    let dv = synthetic(&mut rng, SplitKind::Dev, 1000, 50, 30, perfect);
    let te = synthetic(&mut rng, SplitKind::Test, 2000, 50, 30, perfect);
    let params = BoostParams { num_rounds: 50, ..Default::default() };
    let out = train(&tr, &dv, &params).unwrap();
    let ndcg5 = evaluate(&score(&out.model, &te).unwrap()).ndcg5;

    let noise = |_: &[f64], r: &mut ChaCha8Rng| u8::from(r.gen_bool(0.1));
    let tr = synthetic(&mut rng, SplitKind::Train, 0, 200, 30, noise);
    let dv = synthetic(&mut rng, SplitKind::Dev, 1000, 500, 30, noise);
    let random = train(&tr, &dv, &params).unwrap();
    let baseline = random_baseline(&dv, 200, &mut rng);
    let worst = random
        .log
        .iter()
        .map(|r| (r.dev_ndcg10 - baseline).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    check(
        "trainer sanity: perfect feature ndcg@5 >= 0.99 in 50 rounds; random labels within ±0.05 of baseline; < 60 s",
        ndcg5 >= 0.99 && worst <= 0.05 && elapsed < 60.0,
        format!(
            "ndcg@5 {ndcg5:.4}; random baseline {baseline:.4}, max round deviation {worst:.4}; {elapsed:.1} s"
        ),
    )
}

/// Mean NDCG@10 of uniformly random orderings over queries with a relevant item.
fn random_baseline(ds: &RankingDataset<f64>, draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for g in &ds.groups {
        let mut labels: Vec<u8> = g.items.iter().map(|i| i.label).collect();
        if labels.iter().all(|&l| l == 0) {
            continue;
        }
        let mut acc = 0.0;
        for _ in 0..draws {
            labels.shuffle(rng);
            acc += ndcg_at_k::<f64>(&labels, 10);
        }
        sum += acc / draws as f64;
        n += 1;
    }
    sum / n as f64
}

fn gain_importance_check() -> Check {
    let hand = split_gain(&SplitStats {
        g_left: 2.0f64,
        g_right: -2.0,
        h_left: 1.0,
        h_right: 1.0,
        lambda: 0.0,
        gamma: 0.0,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let informative = |x: &[f64], _: &mut ChaCha8Rng| u8::from(x[18] > 0.7);
    let tr = synthetic(&mut rng, SplitKind::Train, 0, 200, 30, informative);
    let dv = synthetic(&mut rng, SplitKind::Dev, 1000, 50, 30, informative);
    let params = BoostParams { num_rounds: 50, ..Default::default() };
    let model = train(&tr, &dv, &params).unwrap().model;
    let ranker = gain_importance(&model).share_of(19);
    let reg = auxiliary_importance(&tr, AuxiliaryLoss::Regression, &params).share_of(19);
    let cls = auxiliary_importance(&tr, AuxiliaryLoss::Classification, &params).share_of(19);
    check(
        "gain importance: hand case exactly 4.0; single informative feature > 90% share",
        hand == 4.0 && ranker > 0.9 && reg > 0.9 && cls > 0.9,
        format!("hand gain {hand}; share of feature 19: ranker {ranker:.4}, regression {reg:.4}, classification {cls:.4}"),
    )
}

fn ablation_shape() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // relevance needs both the question-stream BM25 (19) and the answer-stream BM25 (35)
    let both = |x: &[f64], _: &mut ChaCha8Rng| u8::from(x[18] + x[34] > 1.4);
    let tr = synthetic(&mut rng, SplitKind::Train, 0, 200, 30, both);
    let dv = synthetic(&mut rng, SplitKind::Dev, 1000, 50, 30, both);
    let te = synthetic(&mut rng, SplitKind::Test, 2000, 100, 30, both);
    let params = BoostParams { num_rounds: 100, ..Default::default() };
    let rows = ablate_datasets(&tr, &dv, &te, &params).unwrap();
    let ndcg = |s: FeatureSubset| rows.iter().find(|r| r.subset == s).unwrap().report.ndcg10;
    let (all, qq, qa, nb) = (
        ndcg(FeatureSubset::All),
        ndcg(FeatureSubset::QqOnly),
        ndcg(FeatureSubset::QaOnly),
        ndcg(FeatureSubset::NoBert),
    );
    check(
        "ablation shape: all-features ndcg@10 >= each single-stream ndcg@10",
        rows.len() == 4 && all >= qq && all >= qa,
        format!("ndcg@10 all {all:.4}, no_bert {nb:.4}, qq_only {qq:.4}, qa_only {qa:.4}"),
    )
}

fn awkward_values(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let specials = [
        0.0,
        -0.0,
        f64::MIN_POSITIVE,
        f64::MAX,
        -f64::MAX,
        5e-324,
        std::f64::consts::PI,
        1.0 / 3.0,
        0.1 + 0.2,
        -1e-300,
        123456789.0,
    ];
    (0..35)
        .map(|i| match i % 3 {
            0 => specials[rng.gen_range(0..specials.len())],
            1 => rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-30..30)),
            _ => f64::from_bits(rng.gen::<u64>() & 0x7fef_ffff_ffff_ffff),
        })
        .collect()
}

fn libsvm_round_trip() -> Result<(usize, usize), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let groups = (0..40)
        .map(|q| {
            let qid1 = if q % 2 == 0 { format!("{}", 7 * q + 1) } else { format!("q-{q}") };
            QueryGroup {
                qid1: qid1.clone(),
                items: (0..30)
                    .map(|c| FeatureVector {
                        qid1: qid1.clone(),
                        qid2: format!("{}", 1000 * q + c),
                        label: u8::from(c % 7 == 0),
                        values: awkward_values(&mut rng),
                    })
                    .collect(),
            }
        })
        .collect();
    let full = RankingDataset {
        split: SplitKind::Train,
        feature_ids: (1..=35).collect(),
        groups,
    };
    let mut checked = 0;
    let mut files = 0;
    for subset in FeatureSubset::ALL {
        let ds = full.select(&subset.ids());
        let path = dir.path().join(format!("{}.libsvm", subset.name()));
        write_libsvm(&ds, &path).map_err(|e| e.to_string())?;
        let back: RankingDataset<f64> = read_libsvm(&path, SplitKind::Train).map_err(|e| e.to_string())?;
        if back.feature_ids != ds.feature_ids || back.groups.len() != ds.groups.len() {
            return Err(format!("{}: structure differs", subset.name()));
        }
        for (a, b) in ds.rows().zip(back.rows()) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            if a.qid1 != b.qid1 || a.qid2 != b.qid2 || a.label != b.label || bits(&a.values) != bits(&b.values) {
                return Err(format!("{}: row ({}, {}) differs", subset.name(), a.qid1, a.qid2));
            }
            checked += a.values.len();
        }
        let again = dir.path().join(format!("{}-again.libsvm", subset.name()));
        write_libsvm(&back, &again).map_err(|e| e.to_string())?;
        if std::fs::read(&path).ok() != std::fs::read(&again).ok() {
            return Err(format!("{}: rewrite is not byte-identical", subset.name()));
        }
        files += 1;
    }
    Ok((files, checked))
}

fn format_fidelity() -> Check {
    match libsvm_round_trip() {
        Ok((files, values)) => check(
            "format fidelity: LibSVM write/read round trip is bit-exact",
            true,
            format!("{files} files, {values} values compared bitwise, rewrites byte-identical"),
        ),
        Err(e) => check("format fidelity: LibSVM write/read round trip is bit-exact", false, e),
    }
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os("CQARANK_LINKSO_DIR").map(PathBuf::from).filter(|p| p.is_dir())
}

fn corpus_counts() -> Check {
    const NAME: &str = "format fidelity: corpus record counts 485,827 / 700,552 / 1,319,328";
    let Some(root) = data_dir() else {
        return skip(NAME, "CQARANK_LINKSO_DIR not set");
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for (lang, want) in [("python", 485_827), ("java", 700_552), ("javascript", 1_319_328)] {
        let path = root.join(lang).join("corpus.tsv");
        if !path.exists() {
            parts.push(format!("{lang}: absent"));
            continue;
        }
        match parse_corpus(&path) {
            Ok(c) => {
                ok &= c.len() == want;
                parts.push(format!("{lang}: {} (want {want})", c.len()));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{lang}: {e}"));
            }
        }
    }
    if parts.iter().all(|p| p.ends_with("absent")) {
        return skip(NAME, "no corpus files under CQARANK_LINKSO_DIR");
    }
    check(NAME, ok, parts.join(", "))
}

fn full_data() -> Check {
    const NAME: &str = "full data: python ndcg@10 0.561 ± 0.03, map@10 0.472 ± 0.03";
    let Some(root) = data_dir() else {
        return skip(NAME, "CQARANK_LINKSO_DIR not set");
    };
    let Ok(endpoint) = std::env::var("CQARANK_EMBED_ENDPOINT") else {
        return skip(NAME, "CQARANK_EMBED_ENDPOINT not set");
    };
    let data = root.join("python");
    if !data.join("corpus.tsv").exists() {
        return skip(NAME, "python corpus absent");
    }
    let out = std::env::temp_dir().join("cqarank-acceptance-python");
    let mut cfg = ExperimentConfig::for_data_dir(&data, &out);
    cfg.embedder = EmbedderConfig::Remote(RemoteConfig {
        cache_dir: Some(out.join("embedding-cache")),
        ..RemoteConfig::new(endpoint)
    });
    match run_pipeline(&cfg) {
        Ok(o) => {
            let (n, m) = (o.report.ndcg10, o.report.map10);
            check(
                NAME,
                (n - 0.561).abs() <= 0.03 && (m - 0.472).abs() <= 0.03,
                format!("ndcg@10 {n:.4}, map@10 {m:.4}"),
            )
        }
        Err(e) => check(NAME, false, e.to_string()),
    }
}

fn main() -> ExitCode {
    let checks = [
        feature_contract(),
        bm25_oracle(),
        metric_oracle(),
        lambda_correctness(),
        trainer_sanity(),
        gain_importance_check(),
        ablation_shape(),
        format_fidelity(),
        corpus_counts(),
        full_data(),
    ];
    let mut failed = 0;
    for c in &checks {
        let tag = match c.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!("{tag}  {}  [{}]", c.name, c.detail);
    }
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
