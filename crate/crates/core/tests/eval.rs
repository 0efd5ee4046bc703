mod common;

use asdetect::data::gen_blobs;
use asdetect::detector::{detector_fit, label_sequences, log_likelihood, DetectorParams, LabelSequence};
use asdetect::attacks::AttackConfig;
use asdetect::eval::{pearson, fp_misclassification_report, roc_auc, switch_curve_report};
use asdetect::mlp::{train, MlpModel, TrainConfig};
use common::{mann_whitney_auc, pearson_direct, rng};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn auc_equals_mann_whitney_on_50_instances() {
    let mut r = rng(51);
    for trial in 0..50 {
        let nn = r.gen_range(1..40);
        let na = r.gen_range(1..40);
        let coarse = trial % 3 == 0;
        let mut draw = |mu: f64| {
            let v: f64 = mu + r.gen_range(-3.0..3.0);
            if coarse {
                v.round()
            } else {
                v
            }
        };
        let normal: Vec<f64> = (0..nn).map(|_| draw(0.0)).collect();
        let adv: Vec<f64> = (0..na).map(|_| draw(-1.0)).collect();
        let roc = roc_auc(&normal, &adv).unwrap();
        assert!((roc.auc - mann_whitney_auc(&normal, &adv)).abs() < 1e-12, "trial {trial}");
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.tpr, first.fpr), (0.0, 0.0));
        assert_eq!((last.tpr, last.fpr), (1.0, 1.0));
        assert!(roc.points.windows(2).all(|w| w[0].tpr <= w[1].tpr && w[0].fpr <= w[1].fpr));
    }
}

#[test]
fn auc_extremes() {
    assert_eq!(roc_auc(&[-1.0, -0.5], &[-3.0, -2.0]).unwrap().auc, 1.0);
    let same = [-1.0, -2.0, -2.0, -4.5];
    assert_eq!(roc_auc(&same, &same).unwrap().auc, 0.5);
}

#[test]
fn pearson_matches_direct_formula() {
    let mut r = rng(52);
    for _ in 0..50 {
        let n = r.gen_range(2..60);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.3 * v + r.gen_range(-5.0..5.0)).collect();
        assert!((pearson(&a, &b).unwrap() - pearson_direct(&a, &b)).abs() < 1e-12);
    }
    let a = [1.0, 2.0, 4.0];
    assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&a, &[-1.0, -2.0, -4.0]).unwrap() + 1.0).abs() < 1e-15);
    assert!(pearson(&a, &[1.0, 1.0, 1.0]).is_err());
}

#[test]
fn switch_curve_matches_a_tally() {
    let mut r = rng(53);
    let seqs = |r: &mut rand_chacha::ChaCha8Rng, n| -> Vec<LabelSequence> {
        (0..n).map(|_| LabelSequence::new((0..6).map(|_| r.gen_range(0..2)).collect())).collect()
    };
    let normal = seqs(&mut r, 30);
    let adv = seqs(&mut r, 17);
    let curve = switch_curve_report(&normal, &adv).unwrap();
    for (i, pn, pa) in curve.rows {
        let tally = |g: &[LabelSequence]| g.iter().filter(|s| s.labels()[i] != s.labels()[i - 1]).count() as f64 / g.len() as f64;
        assert_eq!(pn, tally(&normal));
        assert_eq!(pa, tally(&adv));
    }
    let constant = [LabelSequence::new(vec![1; 6])];
    let flat = switch_curve_report(&constant, &constant).unwrap();
    assert!(flat.rows.iter().all(|&(_, pn, pa)| pn == 0.0 && pa == 0.0));
}

#[test]
fn fp_report_matches_a_per_sample_loop() {
    let data = gen_blobs(3, 6, 80, 0.2, 8).unwrap();
    let parts = data.shuffled_split(2, &[90, 75, 75]).unwrap();
    let (net, _) = train(&MlpModel::init(&[6, 10, 8, 3], 1).unwrap(), &parts[0], &TrainConfig { epochs: 10, ..TrainConfig::default() }, None).unwrap();
    let params = DetectorParams { seed: 1, ..DetectorParams::default() };
    let (det, report) = detector_fit(&net, &parts[1], &parts[2], &AttackConfig::fgsm(0.3), &params).unwrap();
    // Raise the cutoff so the detector produces false positives.
    let det = det.with_cutoff(report.normal_lls.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.5).unwrap();
    let clean = &parts[2];
    let fp = fp_misclassification_report(&net, &det, clean, &report.adversarial_lls).unwrap();

    let seqs = label_sequences(&net, &det, clean.features()).unwrap();
    let (mut errors, mut fps, mut fp_wrong) = (0, 0, 0);
    let mut correct_lls = Vec::new();
    for i in 0..clean.len() {
        let ll = log_likelihood(&seqs[i], det.switch_model()).unwrap();
        let logits = net.logits(clean.features().row(i)).unwrap();
        let correct = asdetect::mlp::argmax(&logits) == clean.labels()[i];
        let flagged = ll < det.cutoff();
        errors += usize::from(!correct);
        fps += usize::from(flagged);
        fp_wrong += usize::from(flagged && !correct);
        if correct {
            correct_lls.push(ll);
        }
    }
    let n = clean.len() as f64;
    assert_eq!(fp.clean_error_rate, errors as f64 / n);
    assert_eq!(fp.fp_rate, fps as f64 / n);
    assert_eq!(fps, clean.len());
    assert_eq!(fp.fp_misclassified_rate, Some(fp_wrong as f64 / fps as f64));
    let filtered = fp.filtered_roc.unwrap();
    assert_eq!(filtered.auc, mann_whitney_auc(&correct_lls, &report.adversarial_lls));

    // A detector that flags nothing has no FP-misclassification rate.
    let quiet = det.with_cutoff(-1e9).unwrap();
    let none = fp_misclassification_report(&net, &quiet, clean, &report.adversarial_lls).unwrap();
    assert_eq!(none.fp_rate, 0.0);
    assert_eq!(none.fp_misclassified_rate, None);
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_maps(
        normal in prop::collection::vec(-20.0f64..0.0, 1..30),
        adv in prop::collection::vec(-20.0f64..0.0, 1..30),
        scale in 0.1f64..10.0,
        offset in -5.0f64..5.0,
    ) {
        let base = roc_auc(&normal, &adv).unwrap().auc;
        let affine = |v: &Vec<f64>| v.iter().map(|x| scale * x + offset).collect::<Vec<_>>();
        let cubic = |v: &Vec<f64>| v.iter().map(|x| x * x * x).collect::<Vec<_>>();
        prop_assert!((roc_auc(&affine(&normal), &affine(&adv)).unwrap().auc - base).abs() < 1e-12);
        prop_assert!((roc_auc(&cubic(&normal), &cubic(&adv)).unwrap().auc - base).abs() < 1e-12);
        prop_assert!((base - mann_whitney_auc(&normal, &adv)).abs() < 1e-12);
    }
}
