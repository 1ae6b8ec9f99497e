use cwsl::aucloss::exact_auc;
use cwsl::bilevel::{train, train_baseline_erm, HyperParams};
use cwsl::data::{
    append_bias, flip_labels, make_gaussian_blobs, split, standardize_apply, standardize_fit,
};
use cwsl::model::scores;
use cwsl::{Dataset, ModelParams, SplitSpec};

/// Standardized, bias-augmented train/validation pair from 5-d blobs.
fn prepared(sep: f64, flips: usize, seed: u64) -> (Dataset, Dataset) {
    let blobs = make_gaussian_blobs(519, 5, sep, 0.5, seed).unwrap();
    let parts = split(
        &blobs,
        &SplitSpec::from_counts(&[469, 50], seed + 1).unwrap(),
    )
    .unwrap();
    let (train_set, _) = flip_labels(&parts[0], flips, seed + 2).unwrap();
    let stats = standardize_fit(&train_set).unwrap();
    let prep = |d: &Dataset| append_bias(&standardize_apply(d, &stats).unwrap());
    (prep(&train_set), prep(&parts[1]))
}

fn val_auc(theta: &ModelParams, validation: &Dataset) -> f64 {
    exact_auc(&scores(theta, validation).unwrap(), validation.labels()).unwrap()
}

#[test]
fn clean_separable_reaches_perfect_validation_auc() {
    for seed in 0..3 {
        let (tr, va) = prepared(6.0, 0, seed);
        let report = train(&tr, &va, &HyperParams::default()).unwrap();
        assert_eq!(report.epochs.len(), 100);
        assert_eq!(report.epochs.last().unwrap().val_auc, 1.0);
        assert!(report
            .final_weights
            .as_slice()
            .iter()
            .all(|w| (0.0..=1.0).contains(w)));
    }
}

/// Expected from the method's motivation, but the squared surrogate prefers
/// unit pair margins: on well separated standardized data it shrinks θ by
/// driving nearly every weight toward zero.
#[test]
#[ignore = "weights collapse toward 0 on clean separable data; see README"]
fn clean_separable_weights_stay_high() {
    let (tr, va) = prepared(6.0, 0, 0);
    let report = train(&tr, &va, &HyperParams::default()).unwrap();
    let low = report
        .final_weights
        .as_slice()
        .iter()
        .filter(|&&w| w < 0.4)
        .count();
    assert_eq!(low, 0, "{low} of {} weights below 0.4", tr.len());
}

#[test]
fn baseline_on_clean_separable_data() {
    for seed in 0..3 {
        let (tr, va) = prepared(6.0, 0, seed);
        let theta = train_baseline_erm(&tr, &HyperParams::default()).unwrap();
        assert_eq!(val_auc(&theta, &va), 1.0);
    }
}

#[test]
fn baseline_validation_auc_not_above_cwsl_under_flips() {
    for seed in 0..5 {
        let (tr, va) = prepared(2.0, 94, seed);
        let hp = HyperParams::default();
        let cwsl = train(&tr, &va, &hp).unwrap();
        let erm = train_baseline_erm(&tr, &hp).unwrap();
        let (c, e) = (cwsl.epochs.last().unwrap().val_auc, val_auc(&erm, &va));
        assert!(e <= c, "seed {seed}: erm {e} > cwsl {c}");
    }
}
