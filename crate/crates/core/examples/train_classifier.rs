//! Trains the ReLU classifier on synthetic blobs and inspects one
//! activation trace and an input gradient.
//!
//! cargo run --release --example train_classifier

use asdetect::data::gen_blobs;
use asdetect::mlp::{train, MlpModel, TrainConfig};

fn main() -> asdetect::Result<()> {
    let data = gen_blobs(3, 20, 400, 0.2, 7)?;
    let parts = data.shuffled_split(7, &[800, 400])?;
    let (train_set, test_set) = (&parts[0], &parts[1]);

    let init = MlpModel::init(&[20, 64, 48, 32, 24, 16, 3], 1)?;
    let cfg = TrainConfig {
        epochs: 100,
        seed: 1,
        ..TrainConfig::default()
    };
    let (net, report) = train(&init, train_set, &cfg, Some(test_set))?;
    println!("layer widths      {:?}", net.layer_dims());
    println!("final loss        {:.6}", report.final_loss);
    println!("train accuracy    {:.4}", report.train_accuracy);
    println!("test accuracy     {:.4}", report.test_accuracy.unwrap_or(f64::NAN));

    let x = test_set.features().row(0);
    let trace = net.forward_trace(x)?;
    println!("\nsample 0 (label {}):", test_set.labels()[0]);
    for (i, layer) in trace.layers.iter().enumerate() {
        let active = layer.iter().filter(|&&v| v > 0.0).count();
        println!("  trace {i}: {} values, {active} positive", layer.len());
    }
    println!("  probabilities {:?}", trace.probabilities());

    let (loss, grad) = net.loss_and_input_grad(x, test_set.labels()[0])?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("  loss {loss:.3e}, |grad_x| {norm:.3e}");
    Ok(())
}
