mod common;

use common::synthetic;
use cqarank::corpus::SplitKind;
use cqarank::lambdamart::BoostParams;
use cqarank::pipeline::{ablate_datasets, ablation_tsv};
use cqarank::FeatureSubset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn answer_only_signal_hurts_question_only_subset() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // relevance planted in the answer-stream BM25 (feature 35)
    let label = |x: &[f64], _: &mut ChaCha8Rng| u8::from(x[34] > 0.75);
    let tr = synthetic(&mut rng, SplitKind::Train, 0, 80, 20, label);
    let dv = synthetic(&mut rng, SplitKind::Dev, 100, 20, 20, label);
    let te = synthetic(&mut rng, SplitKind::Test, 200, 40, 20, label);
    let params = BoostParams { num_rounds: 30, ..Default::default() };
    let rows = ablate_datasets(&tr, &dv, &te, &params).unwrap();
    let get = |s| rows.iter().find(|r| r.subset == s).unwrap();
    let (all, qq, qa) = (get(FeatureSubset::All), get(FeatureSubset::QqOnly), get(FeatureSubset::QaOnly));
    assert_eq!((all.width, qq.width, qa.width), (35, 21, 14));
    assert!(qq.report.ndcg10 < all.report.ndcg10 - 0.1, "{}", ablation_tsv(&rows));
    assert!((qa.report.ndcg10 - all.report.ndcg10).abs() < 0.05);
    assert_eq!(ablation_tsv(&rows).lines().count(), 5);
}
