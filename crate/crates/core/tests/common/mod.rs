#![allow(dead_code)]

use cqarank::corpus::{parse_corpus_str, Corpus, LinkJudgment, SplitKind};
use cqarank::dataset::{QueryGroup, RankingDataset};
use cqarank::features::FeatureVector;
use cqarank::tokenize;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Five questions with two answers each; record 5 has no answers at all.
pub const TOY_CORPUS: &str = "\
1\tHow do I sort a list of dicts by a value?\tUse sorted() with key=lambda d: d['value'].\tOr sort the list in place with list.sort(key=...).
2\tSorting a list of dictionaries by key value\tsorted(items, key=itemgetter('value')) sorts dictionaries.\tItemgetter is faster than a lambda for sorting.
3\tRead a large CSV file line by line\tIterate over csv.reader instead of reading the whole file.\tPandas read_csv has a chunksize argument for large files.
4\tParse JSON from a string in Python\tjson.loads(text) parses a JSON string.\tUse json.load for file objects, json.loads for strings.
5\tWhy does my list sort return None?\t\t
";

pub fn toy_corpus() -> Corpus {
    parse_corpus_str(TOY_CORPUS).unwrap()
}

/// Every ordered pair of distinct toy questions; pairs 1-2 and 1-5 are relevant.
pub fn toy_judgments() -> Vec<LinkJudgment> {
    let mut out = Vec::new();
    for a in 1..=5 {
        for b in 1..=5 {
            if a != b {
                let rel = matches!((a.min(b), a.max(b)), (1, 2) | (1, 5));
                out.push(LinkJudgment {
                    qid1: a.to_string(),
                    qid2: b.to_string(),
                    label: u8::from(rel),
                });
            }
        }
    }
    out
}

fn stats5(xs: &[f64]) -> [f64; 5] {
    if xs.is_empty() {
        return [0.0; 5];
    }
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        sum += x;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let mean = sum / xs.len() as f64;
    let mut sq = 0.0;
    for &x in xs {
        sq += (x - mean) * (x - mean);
    }
    [sum, lo, hi, mean, sq / xs.len() as f64]
}

fn distinct(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokens {
        if !out.contains(t) {
            out.push(t.clone());
        }
    }
    out
}

fn count(doc: &[String], t: &str) -> usize {
    doc.iter().filter(|x| x.as_str() == t).count()
}

fn idf(docs: &[Vec<String>], t: &str) -> f64 {
    let n = docs.iter().filter(|d| d.iter().any(|x| x == t)).count();
    if n == 0 {
        0.0
    } else {
        (docs.len() as f64 / n as f64).ln()
    }
}

fn avdl(docs: &[Vec<String>]) -> f64 {
    docs.iter().map(|d| d.len()).sum::<usize>() as f64 / docs.len() as f64
}

fn ntf(c: usize, len: usize) -> f64 {
    if len == 0 {
        0.0
    } else {
        c as f64 / len as f64
    }
}

pub fn oracle_bm25(query: &[String], doc: &[String], docs: &[Vec<String>], k1: f64, b: f64) -> f64 {
    let ratio = doc.len() as f64 / avdl(docs);
    let mut s = 0.0;
    for t in distinct(query) {
        let tf = count(doc, &t) as f64;
        if tf > 0.0 {
            s += idf(docs, &t) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * ratio));
        }
    }
    s
}

fn dense_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}

fn oracle_tfidf_cosine(query: &[String], doc: &[String], docs: &[Vec<String>]) -> f64 {
    let mut vocab: Vec<String> = query.iter().chain(doc).cloned().collect();
    vocab.sort();
    vocab.dedup();
    let weights = |text: &[String]| -> Vec<f64> {
        vocab
            .iter()
            .map(|t| ntf(count(text, t), text.len()) * idf(docs, t))
            .collect()
    };
    dense_cosine(&weights(query), &weights(doc))
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

/// 256-bucket signed hash vector of the stemmed tokens.
fn hashed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 256];
    for t in tokenize(text).tokens() {
        let h = fnv(t.as_bytes());
        v[(h % 256) as usize] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    v
}

/// Straight-line recomputation of the 35 features of `(q, c)`.
pub fn oracle_features(corpus: &Corpus, q: &str, c: &str) -> Vec<f64> {
    let recs = corpus.records();
    let qdocs: Vec<Vec<String>> = recs.iter().map(|r| tokenize(&r.question).tokens().to_vec()).collect();
    let adocs: Vec<Vec<String>> = recs
        .iter()
        .map(|r| tokenize(&format!("{} {}", r.answer1, r.answer2)).tokens().to_vec())
        .collect();
    let qi = recs.iter().position(|r| r.qid == q).unwrap();
    let ci = recs.iter().position(|r| r.qid == c).unwrap();
    let query = &qdocs[qi];
    let terms = distinct(query);

    let mut out = Vec::new();
    for (docs, doc, question_stream) in [(&qdocs, &qdocs[ci], true), (&adocs, &adocs[ci], false)] {
        let raw: Vec<f64> = terms.iter().map(|t| count(doc, t) as f64).collect();
        let norm: Vec<f64> = terms.iter().map(|t| ntf(count(doc, t), doc.len())).collect();
        let idfs: Vec<f64> = distinct(doc).iter().map(|t| idf(docs, t)).collect();
        let tfidf: Vec<f64> = terms
            .iter()
            .map(|t| ntf(count(doc, t), doc.len()) * idf(docs, t))
            .collect();
        if question_stream {
            out.extend(stats5(&raw));
        }
        out.extend(stats5(&norm));
        out.extend(&stats5(&idfs)[1..]);
        out.extend(&stats5(&tfidf)[1..]);
        out.push(oracle_bm25(query, doc, docs, 1.2, 0.75));
        if question_stream {
            out.push(oracle_tfidf_cosine(query, doc, docs));
            out.push(dense_cosine(&hashed(&recs[qi].question), &hashed(&recs[ci].question)));
        }
    }
    out
}

/// Feature names in column order, with stream suffix.
pub const FEATURE_TABLE: [&str; 35] = [
    "tf_sum_Q", "tf_min_Q", "tf_max_Q", "tf_avg_Q", "tf_var_Q",
    "ntf_sum_Q", "ntf_min_Q", "ntf_max_Q", "ntf_avg_Q", "ntf_var_Q",
    "idf_min_Q", "idf_max_Q", "idf_avg_Q", "idf_var_Q",
    "tfidf_min_Q", "tfidf_max_Q", "tfidf_avg_Q", "tfidf_var_Q",
    "bm25_Q", "tfidf_cosine_Q", "semantic_sim_Q",
    "ntf_sum_A", "ntf_min_A", "ntf_max_A", "ntf_avg_A", "ntf_var_A",
    "idf_min_A", "idf_max_A", "idf_avg_A", "idf_var_A",
    "tfidf_min_A", "tfidf_max_A", "tfidf_avg_A", "tfidf_var_A",
    "bm25_A",
];

/// `n_queries` groups of `n_cand` rows with 35 uniform features, labelled by `label`.
pub fn synthetic<F>(
    rng: &mut ChaCha8Rng,
    split: SplitKind,
    first_qid: usize,
    n_queries: usize,
    n_cand: usize,
    mut label: F,
) -> RankingDataset<f64>
where
    F: FnMut(&[f64], &mut ChaCha8Rng) -> u8,
{
    let groups = (0..n_queries)
        .map(|q| {
            let qid1 = (first_qid + q).to_string();
            let items = (0..n_cand)
                .map(|c| {
                    let values: Vec<f64> = (0..35).map(|_| rng.gen::<f64>()).collect();
                    let l = label(&values, rng);
                    FeatureVector {
                        qid1: qid1.clone(),
                        qid2: format!("{qid1}_{c:02}"),
                        label: l,
                        values,
                    }
                })
                .collect();
            QueryGroup { qid1, items }
        })
        .collect();
    RankingDataset {
        split,
        feature_ids: (1..=35).collect(),
        groups,
    }
}
