//! Labels queries with the exact k-NN classifier and checks that the
//! KD-tree and the exhaustive scan agree.
//!
//! cargo run --release --example knn_labelling

use asdetect::data::gen_blobs;
use asdetect::knn::{knn_fit, knn_predict_batch, SearchPath};
use std::time::Instant;

fn main() -> asdetect::Result<()> {
    let data = gen_blobs(4, 8, 500, 0.15, 11)?;
    let parts = data.shuffled_split(11, &[1500, 500])?;
    let clf = knn_fit(parts[0].features().clone(), parts[0].labels().to_vec(), 5)?;
    println!("{} points in {} dims, k = {}, KD-tree: {}", clf.points().rows(), clf.dim(), clf.k(), clf.has_index());

    let t = Instant::now();
    let labels = knn_predict_batch(&clf, parts[1].features())?;
    let elapsed = t.elapsed();
    let acc = labels.iter().zip(parts[1].labels()).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    println!("accuracy on {} queries: {acc:.4} ({elapsed:.2?})", labels.len());

    let mut agree = 0;
    for q in parts[1].features().row_iter() {
        agree += usize::from(clf.predict_with(q, SearchPath::Auto)? == clf.predict_with(q, SearchPath::Exhaustive)?);
    }
    println!("tree and exhaustive scan agree on {agree}/{} queries", parts[1].len());

    let q = parts[1].features().row(0);
    println!("neighbours of query 0 (squared distance, index):");
    for (d, i) in clf.neighbors(q, SearchPath::Auto)? {
        println!("  {d:.4} #{i} label {}", clf.labels()[i]);
    }
    Ok(())
}
