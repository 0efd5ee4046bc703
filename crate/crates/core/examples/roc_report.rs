//! ROC/AUC, cutoff selection, correlation and CSV output on synthetic
//! log-likelihood scores.
//!
//! cargo run --release --example roc_report

use asdetect::detector::choose_cutoff;
use asdetect::eval::{ll_histogram_csv, pearson, roc_auc, roc_csv};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> asdetect::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let normal_dist = Normal::<f64>::new(-0.5, 0.6).unwrap();
    let adv_dist = Normal::<f64>::new(-4.0, 2.0).unwrap();
    let normal: Vec<f64> = (0..300).map(|_| normal_dist.sample(&mut rng).min(0.0)).collect();
    let adv: Vec<f64> = (0..200).map(|_| adv_dist.sample(&mut rng).min(0.0)).collect();

    let roc = roc_auc(&normal, &adv)?;
    println!("AUC {:.4} over {} operating points", roc.auc, roc.points.len());
    for alpha in [0.01, 0.05, 0.1, 0.2] {
        let (co, _) = choose_cutoff(&normal, &adv, alpha)?;
        let tpr = adv.iter().filter(|&&v| v < co).count() as f64 / adv.len() as f64;
        let fpr = normal.iter().filter(|&&v| v < co).count() as f64 / normal.len() as f64;
        println!("alpha {alpha:<4}  cutoff {co:>8.4}  TPR {tpr:.3}  FPR {fpr:.3}");
    }

    let l2: Vec<f64> = adv.iter().map(|_| Normal::new(0.5, 0.1).unwrap().sample(&mut rng)).collect();
    println!("Pearson(LL, L2) on independent draws: {:.4}", pearson(&adv, &l2)?);

    let csv = roc_csv(&roc);
    println!("\nroc.csv (first lines):");
    for line in csv.lines().take(4) {
        println!("  {line}");
    }
    println!("ll_histogram.csv (first lines):");
    for line in ll_histogram_csv(&normal, &adv, 10).lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
