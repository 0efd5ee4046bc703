//! Reads an IDX image/label pair (the MNIST file format). Without
//! arguments it decodes a small in-memory fixture instead.
//!
//! cargo run --release --example mnist_idx [images.idx labels.idx]

use asdetect::data::{parse_idx, read_idx};
use std::path::Path;

fn fixture() -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::new();
    for v in [0x803u32, 2, 2, 2] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&[0, 255, 128, 64, 255, 255, 0, 0]);
    let mut labels = Vec::new();
    for v in [0x801u32, 2] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend_from_slice(&[7, 1]);
    (images, labels)
}

fn main() -> asdetect::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ds = if let [images, labels] = args.as_slice() {
        read_idx(Path::new(images), Path::new(labels))?
    } else {
        let (images, labels) = fixture();
        parse_idx(&images, &labels)?
    };
    println!("{} images of {} pixels, {} classes", ds.len(), ds.dim(), ds.n_classes());
    for i in 0..ds.len().min(2) {
        let row = ds.features().row(i);
        println!("  #{i} label {} first pixels {:?}", ds.labels()[i], &row[..row.len().min(4)]);
    }
    Ok(())
}
