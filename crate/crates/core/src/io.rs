//! Versioned little-endian binary formats for datasets (`ASDAT1`),
//! classifier networks (`ASMLP1`) and detectors (`ASDET1`).

use std::path::Path;

use crate::data::Dataset;
use crate::detector::{DetectorModel, SwitchModel};
use crate::error::{Error, Result};
use crate::knn::{knn_fit, KnnClassifier};
use crate::mlp::{Layer, MlpModel};
use crate::numerics::{ActivationSpace, Matrix};

pub const DATASET_MAGIC: &[u8; 6] = b"ASDAT1";
pub const MLP_MAGIC: &[u8; 6] = b"ASMLP1";
pub const DETECTOR_MAGIC: &[u8; 6] = b"ASDET1";

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }

    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::InvalidParams(format!("{v} does not fit in u32")))?;
        self.bytes(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }

    fn label(&mut self, v: usize) -> Result<()> {
        let v = u16::try_from(v).map_err(|_| Error::InvalidParams(format!("label {v} does not fit in u16")))?;
        self.u16(v);
        Ok(())
    }

    fn matrix(&mut self, m: &Matrix) {
        self.f64s(m.as_slice());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 6], what: &'static str) -> Result<Self> {
        if buf.len() < magic.len() {
            return Err(Error::TruncatedFile(what));
        }
        if &buf[..magic.len()] != magic {
            return Err(Error::BadMagic {
                what,
                found: buf[..magic.len()].to_vec(),
            });
        }
        Ok(Reader {
            buf,
            pos: magic.len(),
            what,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedFile(self.what))?;
        let s = self.buf.get(self.pos..end).ok_or(Error::TruncatedFile(self.what))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // Bounds-check up front so a corrupt count cannot trigger a huge allocation.
        let bytes = self.take(n.checked_mul(8).ok_or(Error::TruncatedFile(self.what))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn labels(&mut self, n: usize) -> Result<Vec<usize>> {
        let bytes = self.take(n.checked_mul(2).ok_or(Error::TruncatedFile(self.what))?)?;
        Ok(bytes
            .chunks_exact(2)
            .map(|c| usize::from(u16::from_le_bytes([c[0], c[1]])))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows.checked_mul(cols).ok_or(Error::TruncatedFile(self.what))?;
        Matrix::from_vec(rows, cols, self.f64s(n)?)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::InvalidParams(format!(
                "{}: {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(DATASET_MAGIC);
    w.u32(ds.len())?;
    w.u32(ds.dim())?;
    w.u32(ds.n_classes())?;
    w.matrix(ds.features());
    for &y in ds.labels() {
        w.label(y)?;
    }
    Ok(w.0)
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf, DATASET_MAGIC, "dataset")?;
    let n = r.u32()?;
    let d = r.u32()?;
    let n_classes = r.u32()?;
    let features = r.matrix(n, d)?;
    let labels = r.labels(n)?;
    r.finish()?;
    Dataset::new(features, labels, n_classes)
}

pub fn encode_mlp(model: &MlpModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MLP_MAGIC);
    w.u32(model.depth())?;
    for d in model.layer_dims() {
        w.u32(d)?;
    }
    for layer in model.layers() {
        w.matrix(&layer.weights);
        w.f64s(&layer.bias);
    }
    Ok(w.0)
}

pub fn decode_mlp(buf: &[u8]) -> Result<MlpModel> {
    let mut r = Reader::new(buf, MLP_MAGIC, "mlp model")?;
    let depth = r.u32()?;
    if depth == 0 || depth > 4096 {
        return Err(Error::InvalidParams(format!("implausible layer count {depth}")));
    }
    let dims = (0..=depth).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let layers = dims
        .windows(2)
        .map(|w| {
            Ok(Layer {
                weights: r.matrix(w[1], w[0])?,
                bias: r.f64s(w[1])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    MlpModel::from_layers(layers)
}

pub fn encode_detector(det: &DetectorModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(DETECTOR_MAGIC);
    w.u32(det.spaces().len())?;
    for s in det.spaces() {
        w.u32(s.input_dim())?;
        w.u32(s.n_components())?;
        w.f64s(s.mean());
        w.matrix(s.components());
        w.f64s(s.eigenvalues());
    }
    for c in det.classifiers() {
        w.u32(c.points().rows())?;
        w.u32(c.dim())?;
        w.u32(c.k())?;
        w.matrix(c.points());
        for &y in c.labels() {
            w.label(y)?;
        }
    }
    let sm = det.switch_model();
    w.u32(sm.len())?;
    w.u64(sm.n_fit() as u64);
    w.f64(sm.smoothing());
    w.f64s(sm.probs());
    w.f64(det.cutoff());
    w.f64(det.alpha());
    w.f64(det.smoothing());
    w.u32(det.k())?;
    Ok(w.0)
}

pub fn decode_detector(buf: &[u8]) -> Result<DetectorModel> {
    let mut r = Reader::new(buf, DETECTOR_MAGIC, "detector model")?;
    let layers = r.u32()?;
    if layers > 4096 {
        return Err(Error::InvalidParams(format!("implausible layer count {layers}")));
    }
    let mut spaces = Vec::with_capacity(layers);
    for _ in 0..layers {
        let d = r.u32()?;
        let m = r.u32()?;
        let mean = r.f64s(d)?;
        let comps = r.matrix(m, d)?;
        let eig = r.f64s(m)?;
        spaces.push(ActivationSpace::from_parts(mean, comps, eig)?);
    }
    let mut classifiers: Vec<KnnClassifier> = Vec::with_capacity(layers);
    for _ in 0..layers {
        let n = r.u32()?;
        let m = r.u32()?;
        let k = r.u32()?;
        let points = r.matrix(n, m)?;
        let labels = r.labels(n)?;
        classifiers.push(knn_fit(points, labels, k)?);
    }
    let len = r.u32()?;
    let n_fit = r.u64()? as usize;
    let smoothing = r.f64()?;
    let probs = r.f64s(len)?;
    let switch_model = SwitchModel::from_parts(probs, n_fit, smoothing)?;
    let cutoff = r.f64()?;
    let alpha = r.f64()?;
    let lambda = r.f64()?;
    let k = r.u32()?;
    r.finish()?;
    if lambda.to_bits() != smoothing.to_bits() {
        return Err(Error::InvalidParams("detector smoothing fields disagree".into()));
    }
    DetectorModel::from_parts(spaces, classifiers, switch_model, cutoff, alpha, k)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_bytes(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read(path)?)
}

pub fn save_mlp(path: &Path, model: &MlpModel) -> Result<()> {
    write_bytes(path, &encode_mlp(model)?)
}

pub fn load_mlp(path: &Path) -> Result<MlpModel> {
    decode_mlp(&read(path)?)
}

pub fn save_detector(path: &Path, det: &DetectorModel) -> Result<()> {
    write_bytes(path, &encode_detector(det)?)
}

pub fn load_detector(path: &Path) -> Result<DetectorModel> {
    decode_detector(&read(path)?)
}

/// Loads samples for scoring: an `ASDAT1` file, or a text file with one
/// sample per line (comma- or whitespace-separated values; `#` comments).
pub fn load_samples(path: &Path) -> Result<Matrix> {
    let bytes = read(path)?;
    if bytes.starts_with(DATASET_MAGIC) {
        return Ok(decode_dataset(&bytes)?.features().clone());
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{}: not a dataset or text file", path.display())))?;
    let rows = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| Error::Config(format!("bad value {t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}
