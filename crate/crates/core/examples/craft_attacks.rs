//! Crafts FGSM, BIM and targeted C&W-L2 examples against a trained network
//! and compares their success rates and perturbation norms.
//!
//! cargo run --release --example craft_attacks

use asdetect::attacks::{craft, random_targets, AttackConfig, AttackResult};
use asdetect::data::gen_blobs;
use asdetect::mlp::{train, MlpModel, TrainConfig};

fn summarise(name: &str, r: &AttackResult) {
    let n = r.success.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    println!(
        "{name:<6} success {:.3}  mean L2 {:.3}  mean Linf {:.3}  mean L0 {:.1}",
        r.success_rate(),
        mean(&r.l2),
        mean(&r.linf),
        r.l0.iter().sum::<usize>() as f64 / n
    );
}

fn main() -> asdetect::Result<()> {
    let data = gen_blobs(3, 20, 300, 0.2, 5)?;
    let parts = data.shuffled_split(5, &[600, 60])?;
    let init = MlpModel::init(&[20, 64, 32, 16, 3], 5)?;
    let cfg = TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    };
    let (net, _) = train(&init, &parts[0], &cfg, None)?;

    let pred = net.predict(parts[1].features())?;
    let keep: Vec<usize> = (0..parts[1].len()).filter(|&i| pred[i] == parts[1].labels()[i]).collect();
    let clean = parts[1].subset(&keep);
    println!("attacking {} correctly classified samples\n", clean.len());

    let eps = 0.15;
    summarise("fgsm", &craft(&net, clean.features(), clean.labels(), None, &AttackConfig::fgsm(eps))?);
    summarise("bim", &craft(&net, clean.features(), clean.labels(), None, &AttackConfig::bim(eps, 10))?);

    let targets = random_targets(clean.labels(), 3, 5)?;
    let cw = craft(&net, clean.features(), clean.labels(), Some(&targets), &AttackConfig::cw_cifar())?;
    summarise("cw_l2", &cw);
    let reached = net.predict(&cw.adversarial)?;
    for i in 0..3 {
        println!(
            "  sample {i}: {} -> target {} (predicted {}), c = {:?}",
            clean.labels()[i],
            targets[i],
            reached[i],
            cw.final_c[i]
        );
    }
    Ok(())
}
