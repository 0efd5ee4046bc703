//! Fits the detector (activation spaces, k-NN labellers, switch model,
//! cutoff) and classifies clean and adversarial samples.
//!
//! cargo run --release --example switching_likelihood

use asdetect::attacks::{craft, random_targets, AttackConfig};
use asdetect::data::gen_blobs;
use asdetect::detector::{detector_classify, detector_fit, DetectorParams};
use asdetect::mlp::{train, MlpModel, TrainConfig};

fn main() -> asdetect::Result<()> {
    let data = gen_blobs(3, 20, 400, 0.2, 9)?;
    let parts = data.shuffled_split(9, &[600, 300, 150, 150])?;
    let init = MlpModel::init(&[20, 64, 48, 32, 24, 16, 3], 9)?;
    let train_cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let (net, _) = train(&init, &parts[0], &train_cfg, None)?;

    let attack = AttackConfig::cw_cifar();
    let params = DetectorParams {
        seed: 9,
        ..DetectorParams::default()
    };
    let (det, cal) = detector_fit(&net, &parts[1], &parts[2], &attack, &params)?;
    println!("switch probabilities per transition:");
    for (i, p) in cal.switch_probs.iter().enumerate() {
        println!("  {} -> {}: {p:.4}", i, i + 1);
    }
    println!("cutoff {:.4}  calibration TPR {:.3}  FPR {:.3}  AUC {:.3}", det.cutoff(), cal.tpr_at_cutoff, cal.fpr_at_cutoff, cal.roc.auc);

    let holdout = &parts[3];
    let targets = random_targets(holdout.labels(), 3, 99)?;
    let adv = craft(&net, holdout.features(), holdout.labels(), Some(&targets), &attack)?;
    println!("\n  kind          sequence               LL       verdict");
    for i in 0..4 {
        let c = detector_classify(&net, &det, holdout.features().row(i))?;
        println!("  clean         {:<22} {:>8.3}  {}", format!("{:?}", c.sequence.labels()), c.log_likelihood, c.verdict);
        if adv.success[i] {
            let a = detector_classify(&net, &det, adv.adversarial.row(i))?;
            println!("  adversarial   {:<22} {:>8.3}  {}", format!("{:?}", a.sequence.labels()), a.log_likelihood, a.verdict);
        }
    }
    Ok(())
}
