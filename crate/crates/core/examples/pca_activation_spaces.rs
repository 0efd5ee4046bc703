//! Builds one PCA activation space per trace entry of a trained network
//! and shows how much variance the retained components carry.
//!
//! cargo run --release --example pca_activation_spaces

use asdetect::data::gen_blobs;
use asdetect::detector::layer_activations;
use asdetect::mlp::{train, MlpModel, TrainConfig};
use asdetect::numerics::{pca_fit, pca_transform, DEFAULT_MAX_COMPONENTS};

fn main() -> asdetect::Result<()> {
    let data = gen_blobs(3, 20, 200, 0.2, 3)?;
    let init = MlpModel::init(&[20, 32, 16, 3], 3)?;
    let (net, _) = train(&init, &data, &TrainConfig::default(), None)?;

    for (i, act) in layer_activations(&net, data.features())?.iter().enumerate() {
        let space = pca_fit(act, DEFAULT_MAX_COMPONENTS)?;
        let ev = space.eigenvalues();
        let total: f64 = ev.iter().sum();
        let top: f64 = ev.iter().take(2).sum();
        let projected = pca_transform(&space, act)?;
        println!(
            "trace {i}: {:>2} dims -> {:>2} components, top-2 variance share {:.3}, first sample {:?}",
            space.input_dim(),
            space.n_components(),
            if total > 0.0 { top / total } else { 0.0 },
            &projected.row(0)[..2.min(projected.cols())]
        );
    }

    // The small worked case: three points on the x axis.
    let x = asdetect::numerics::Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]])?;
    let space = pca_fit(&x, 2)?;
    println!("\nthree-point set: first component {:?}, eigenvalue {}", space.components().row(0), space.eigenvalues()[0]);
    Ok(())
}
