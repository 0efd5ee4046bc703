mod common;

use asdetect::data::gen_blobs;
use asdetect::mlp::{train, MlpModel, TrainConfig};
use common::{fd_gradient, smooth_point, rng};
use rand::Rng;

#[test]
fn input_gradient_matches_finite_differences() {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let d = r.gen_range(2..10);
        let classes = r.gen_range(2..6);
        let hidden = r.gen_range(3..12);
        let model = MlpModel::init(&[d, hidden, hidden, classes], 100 + trial).unwrap();
        let x = smooth_point(&model, &mut r, 1e-3);
        let y = r.gen_range(0..classes);
        let (_, g) = model.loss_and_input_grad(&x, y).unwrap();
        let fd = fd_gradient(&model, &x, y, 1e-5);
        let scale = g.iter().chain(&fd).fold(1e-8_f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn training_is_bit_reproducible() {
    let data = gen_blobs(3, 6, 40, 0.1, 5).unwrap();
    let init = MlpModel::init(&[6, 8, 3], 9).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let (a, ra) = train(&init, &data, &cfg, None).unwrap();
    let (b, rb) = train(&init, &data, &cfg, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(MlpModel::init(&[6, 8, 3], 9).unwrap(), init);
}

#[test]
fn training_fits_separable_blobs() {
    let data = gen_blobs(3, 10, 60, 0.05, 21).unwrap();
    let init = MlpModel::init(&[10, 16, 3], 1).unwrap();
    let (model, report) = train(&init, &data, &TrainConfig::default(), Some(&data)).unwrap();
    assert!(report.train_accuracy >= 0.95, "{report:?}");
    assert!(model.accuracy(&data).unwrap() >= 0.95);
}

#[test]
fn default_blobs_are_linearly_separable_but_not_trivial() {
    // One-layer softmax baseline on the default desk geometry.
    let data = gen_blobs(3, 20, 800, 0.08, 20190101).unwrap();
    let parts = data.shuffled_split(1, &[1200, 1200]).unwrap();
    let probe = MlpModel::init(&[20, 3], 2).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let (probe, _) = train(&probe, &parts[0], &cfg, None).unwrap();
    let acc = probe.accuracy(&parts[1]).unwrap();
    assert!(acc >= 0.90, "linear probe accuracy {acc}");
}

#[test]
fn predict_ties_pick_the_lowest_class() {
    let model = MlpModel::zeros(&[3, 4]).unwrap();
    let x = asdetect::numerics::Matrix::from_rows(&[vec![0.2, 0.3, 0.4]]).unwrap();
    assert_eq!(model.predict(&x).unwrap(), vec![0]);
}

