//! The seeded end-to-end experiment, organised as resumable stages over a
//! run directory. A stage is skipped when its outputs exist and its
//! `.hash` stamp matches the hash of the config keys it depends on.
//!
//! | stage          | outputs |
//! |----------------|---------|
//! | `gen-data`     | `dataset.asdat`, `split_{train,normal,calibration,holdout}.asdat` |
//! | `train-net`    | `net.asmlp`, `train_metrics.txt` |
//! | `fit-detector` | `detector.asdet`, `calibration_metrics.txt`, `calibration_roc.csv`, `switch_probs.csv` |
//! | `attack`       | `adv.asdat`, `adv_origin.asdat`, `adv_norms.csv`, `attack_metrics.txt` |
//! | `report`       | `roc.csv`, `switch_curve.csv`, `scores.csv`, `ll_histogram.csv`, `summary.txt` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attacks::{perturbation_norms, AttackResult};
use crate::config::{DataSource, RunConfig};
use crate::data::{gen_blobs, read_idx, Dataset};
use crate::detector::{detector_fit, craft_calibration_attack, label_sequences, log_likelihood, verdict_for, DetectorModel, LabelSequence, Verdict};
use crate::error::{Error, Result};
use crate::eval::{self, fp_misclassification_report, pearson, roc_auc, FpReport, RocCurve, ScoreRow, SwitchCurve};
use crate::io;
use crate::mlp::{train, MlpModel};
use crate::numerics::Matrix;
use crate::rng::derive_seed;

const DATA_KEYS: &[&str] = &["seed", "data.", "split."];
const TRAIN_KEYS: &[&str] = &["seed", "data.", "split.", "net.", "train."];
const DETECTOR_KEYS: &[&str] = &["seed", "data.", "split.", "net.", "train.", "attack.", "detector."];
const ATTACK_KEYS: &[&str] = &["seed", "data.", "split.", "net.", "train.", "attack."];
const ALL_KEYS: &[&str] = &[""];

pub const SPLIT_NAMES: [&str; 4] = ["train", "normal", "calibration", "holdout"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

/// Ordered `key = value` metrics, as written to the `*_metrics.txt` and
/// `summary.txt` files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics(pub Vec<(String, String)>);

impl Metrics {
    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn push_opt(&mut self, key: &str, value: Option<f64>) {
        match value {
            Some(v) => self.push(key, v),
            None => self.push(key, "absent"),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn extend(&mut self, other: &Metrics) {
        self.0.extend(other.0.iter().cloned());
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once(" = ")
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Config(format!("bad metrics line {l:?}")))
            })
            .collect::<Result<_>>()
            .map(Metrics)
    }
}

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn split(&self, name: &str) -> PathBuf {
        self.path(&format!("split_{name}.asdat"))
    }

    fn read_metrics(&self, name: &str) -> Result<Metrics> {
        let p = self.path(name);
        Metrics::parse(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        io::write_bytes(&self.path(name), text.as_bytes())
    }
}

fn run_stage(
    cfg: &RunConfig,
    dir: &RunDir,
    name: &str,
    keys: &[&str],
    outputs: &[&str],
    force: bool,
    body: impl FnOnce() -> Result<()>,
) -> Result<StageStatus> {
    let hash = cfg.stage_hash(name, keys);
    let stamp = dir.path(&format!(".{name}.hash"));
    let fresh = !force
        && std::fs::read_to_string(&stamp).is_ok_and(|h| h.trim() == hash)
        && outputs.iter().all(|o| dir.path(o).exists());
    if fresh {
        return Ok(StageStatus::Skipped);
    }
    let _ = std::fs::remove_file(&stamp);
    body()?;
    io::write_bytes(&stamp, format!("{hash}\n").as_bytes())?;
    Ok(StageStatus::Ran)
}

/// Builds the full dataset named by the config.
pub fn make_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Blobs {
            classes,
            dim,
            per_class,
            spread,
        } => gen_blobs(*classes, *dim, *per_class, *spread, cfg.seed),
        DataSource::Idx { images, labels, limit } => {
            let ds = read_idx(images, labels)?;
            if *limit > 0 && *limit < ds.len() {
                let idx: Vec<usize> = (0..*limit).collect();
                Ok(ds.subset(&idx))
            } else {
                Ok(ds)
            }
        }
    }
}

/// Disjoint network-training, detector-normal, calibration and held-out parts.
pub fn split_dataset(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<Dataset>> {
    let n = ds.len() as f64;
    let s = &cfg.split;
    let sizes: Vec<usize> = [s.train, s.normal, s.calibration, s.holdout]
        .iter()
        .map(|f| (f * n).floor() as usize)
        .collect();
    if sizes.iter().any(|&c| c < 2) {
        return Err(Error::InvalidParams(format!("dataset of {} samples too small for split {sizes:?}", ds.len())));
    }
    ds.shuffled_split(cfg.seed, &sizes)
}

pub fn stage_gen_data(cfg: &RunConfig, dir: &RunDir, force: bool) -> Result<StageStatus> {
    let outputs = ["dataset.asdat", "split_train.asdat", "split_normal.asdat", "split_calibration.asdat", "split_holdout.asdat"];
    run_stage(cfg, dir, "gen-data", DATA_KEYS, &outputs, force, || {
        let ds = make_dataset(cfg)?;
        io::save_dataset(&dir.path("dataset.asdat"), &ds)?;
        for (name, part) in SPLIT_NAMES.iter().zip(split_dataset(cfg, &ds)?) {
            io::save_dataset(&dir.split(name), &part)?;
        }
        Ok(())
    })
}

pub fn stage_train_net(cfg: &RunConfig, dir: &RunDir, force: bool) -> Result<StageStatus> {
    run_stage(cfg, dir, "train-net", TRAIN_KEYS, &["net.asmlp", "train_metrics.txt"], force, || {
        let train_set = io::load_dataset(&dir.split("train"))?;
        // Accuracy on every sample the network never trained on.
        let mut unseen_rows = Vec::new();
        let mut unseen_labels = Vec::new();
        for name in &SPLIT_NAMES[1..] {
            let part = io::load_dataset(&dir.split(name))?;
            unseen_rows.extend(part.features().row_iter().map(<[f64]>::to_vec));
            unseen_labels.extend_from_slice(part.labels());
        }
        let unseen = Dataset::new(Matrix::from_rows(&unseen_rows)?, unseen_labels, train_set.n_classes())?;

        let mut dims = vec![train_set.dim()];
        dims.extend(&cfg.hidden);
        dims.push(train_set.n_classes());
        let init = MlpModel::init(&dims, derive_seed(cfg.seed, "net"))?;
        let (net, report) = train(&init, &train_set, &cfg.train_config(), Some(&unseen))?;
        io::save_mlp(&dir.path("net.asmlp"), &net)?;

        let mut m = Metrics::default();
        let dims: Vec<String> = dims.iter().map(ToString::to_string).collect();
        m.push("net_dims", dims.join("-"));
        m.push("train_final_loss", report.final_loss);
        m.push("train_accuracy", report.train_accuracy);
        m.push_opt("test_accuracy", report.test_accuracy);
        dir.write_text("train_metrics.txt", &m.to_text())
    })
}

pub fn stage_fit_detector(cfg: &RunConfig, dir: &RunDir, force: bool) -> Result<StageStatus> {
    let outputs = ["detector.asdet", "calibration_metrics.txt", "calibration_roc.csv", "switch_probs.csv"];
    run_stage(cfg, dir, "fit-detector", DETECTOR_KEYS, &outputs, force, || {
        let net = io::load_mlp(&dir.path("net.asmlp"))?;
        let normal = io::load_dataset(&dir.split("normal"))?;
        let calibration = io::load_dataset(&dir.split("calibration"))?;
        let (detector, report) = detector_fit(&net, &normal, &calibration, &cfg.attack, &cfg.detector_params())?;
        io::save_detector(&dir.path("detector.asdet"), &detector)?;

        let mut m = Metrics::default();
        m.push("calibration_attacked", report.attacked);
        m.push("calibration_attack_success", report.attack_success_rate);
        m.push("cutoff", detector.cutoff());
        m.push("alpha", detector.alpha());
        m.push("calibration_fpr", report.fpr_at_cutoff);
        m.push("calibration_tpr", report.tpr_at_cutoff);
        m.push("calibration_auc", report.roc.auc);
        m.push("calibration_mean_ll_normal", mean(&report.normal_lls));
        m.push("calibration_mean_ll_adv", mean(&report.adversarial_lls));
        dir.write_text("calibration_metrics.txt", &m.to_text())?;
        dir.write_text("calibration_roc.csv", &eval::roc_csv(&report.roc))?;
        let mut sp = String::from("transition_index,p_switch\n");
        for (i, p) in report.switch_probs.iter().enumerate() {
            let _ = writeln!(sp, "{},{p}", i + 1);
        }
        dir.write_text("switch_probs.csv", &sp)
    })
}

pub fn stage_attack(cfg: &RunConfig, dir: &RunDir, force: bool) -> Result<StageStatus> {
    let outputs = ["adv.asdat", "adv_origin.asdat", "adv_norms.csv", "attack_metrics.txt"];
    run_stage(cfg, dir, "attack", ATTACK_KEYS, &outputs, force, || {
        let net = io::load_mlp(&dir.path("net.asmlp"))?;
        let holdout = io::load_dataset(&dir.split("holdout"))?;
        let (rows, targets, result) = craft_calibration_attack(&net, &holdout, &cfg.attack, derive_seed(cfg.seed, "holdout-attack"))?;
        let origin = holdout.subset(&rows);
        let adv_labels = if cfg.attack.kind == crate::attacks::AttackKind::CwL2 || cfg.attack.target.is_some() {
            targets.clone()
        } else {
            origin.labels().to_vec()
        };
        let adv = Dataset::new(result.adversarial.clone(), adv_labels, holdout.n_classes())?;
        io::save_dataset(&dir.path("adv.asdat"), &adv)?;
        io::save_dataset(&dir.path("adv_origin.asdat"), &origin)?;
        dir.write_text("adv_norms.csv", &attack_norms_csv(&rows, origin.labels(), &targets, &result))?;
        let mut m = Metrics::default();
        m.push("attack_kind", cfg.attack.kind);
        m.push("holdout_attacked", result.success.len());
        m.push("holdout_attack_success", result.success_rate());
        dir.write_text("attack_metrics.txt", &m.to_text())
    })
}

/// `sample_id,source,target,success,l0,l2,linf,final_c`; `sample_id`
/// indexes the held-out split.
pub fn attack_norms_csv(rows: &[usize], sources: &[usize], targets: &[usize], r: &AttackResult) -> String {
    let mut s = String::from("sample_id,source,target,success,l0,l2,linf,final_c\n");
    for i in 0..rows.len() {
        let c = r.final_c[i].map_or_else(String::new, |c| c.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{c}",
            rows[i],
            sources[i],
            targets[i],
            u8::from(r.success[i]),
            r.l0[i],
            r.l2[i],
            r.linf[i]
        );
    }
    s
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Held-out evaluation of a trained detector.
#[derive(Debug, Clone)]
pub struct HoldoutReport {
    pub clean_sequences: Vec<LabelSequence>,
    pub clean_lls: Vec<f64>,
    /// Only adversarials that reached their target.
    pub adv_sequences: Vec<LabelSequence>,
    pub adv_lls: Vec<f64>,
    pub adv_l2: Vec<f64>,
    pub adv_sources: Vec<usize>,
    pub adv_targets: Vec<usize>,
    pub clean_pred: Vec<usize>,
    pub roc: RocCurve,
    pub fp: FpReport,
    pub switch_curve: SwitchCurve,
    pub pearson_ll_l2: Option<f64>,
    pub scores: Vec<ScoreRow>,
}

/// Scores the clean held-out set and the successful adversarial rows. A row
/// whose stored label differs from its origin was targeted and succeeds on
/// reaching that label; otherwise it succeeds on any misclassification.
pub fn evaluate_holdout(net: &MlpModel, detector: &DetectorModel, clean: &Dataset, adv: &Dataset, origin: &Dataset) -> Result<HoldoutReport> {
    if adv.len() != origin.len() {
        return Err(Error::CountMismatch {
            images: adv.len(),
            labels: origin.len(),
        });
    }
    let adv_pred = net.predict(adv.features())?;
    let hit: Vec<usize> = (0..adv.len())
        .filter(|&i| {
            let (stored, source) = (adv.labels()[i], origin.labels()[i]);
            if stored == source {
                adv_pred[i] != source
            } else {
                adv_pred[i] == stored
            }
        })
        .collect();
    let adv_ok = adv.subset(&hit);
    let origin_ok = origin.subset(&hit);

    let ll_of = |seqs: &[LabelSequence]| -> Result<Vec<f64>> {
        seqs.iter().map(|s| log_likelihood(s, detector.switch_model())).collect()
    };
    let clean_sequences = label_sequences(net, detector, clean.features())?;
    let clean_lls = ll_of(&clean_sequences)?;
    let adv_sequences = label_sequences(net, detector, adv_ok.features())?;
    let adv_lls = ll_of(&adv_sequences)?;
    let adv_l2 = (0..adv_ok.len())
        .map(|i| perturbation_norms(origin_ok.features().row(i), adv_ok.features().row(i)).map(|n| n.1))
        .collect::<Result<Vec<_>>>()?;

    let roc = roc_auc(&clean_lls, &adv_lls)?;
    let fp = fp_misclassification_report(net, detector, clean, &adv_lls)?;
    let switch_curve = eval::switch_curve_report(&clean_sequences, &adv_sequences)?;
    let pearson_ll_l2 = pearson(&adv_lls, &adv_l2).ok();
    let clean_pred = net.predict(clean.features())?;

    let mut scores = Vec::with_capacity(clean.len() + adv_ok.len());
    for (i, &ll) in clean_lls.iter().enumerate() {
        scores.push(ScoreRow {
            sample_id: format!("n{i}"),
            ll,
            l2_norm: 0.0,
            adversarial_verdict: verdict_for(ll, detector.cutoff()) == Verdict::Adversarial,
            net_correct: clean_pred[i] == clean.labels()[i],
        });
    }
    for (j, (&ll, &l2)) in adv_lls.iter().zip(&adv_l2).enumerate() {
        scores.push(ScoreRow {
            sample_id: format!("a{}", hit[j]),
            ll,
            l2_norm: l2,
            adversarial_verdict: verdict_for(ll, detector.cutoff()) == Verdict::Adversarial,
            net_correct: false,
        });
    }
    Ok(HoldoutReport {
        clean_sequences,
        clean_lls,
        adv_sequences,
        adv_lls,
        adv_l2,
        adv_sources: origin_ok.labels().to_vec(),
        adv_targets: hit.iter().map(|&i| adv_pred[i]).collect(),
        clean_pred,
        roc,
        fp,
        switch_curve,
        pearson_ll_l2,
        scores,
    })
}

/// Mean switch probability over the first and the last `ceil(l / 3)` transitions.
pub fn switch_trend(probs: &[f64]) -> (f64, f64) {
    let third = probs.len().div_ceil(3).max(1).min(probs.len());
    (mean(&probs[..third]), mean(&probs[probs.len() - third..]))
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        hits as f64 / n as f64
    }
}

pub fn stage_report(cfg: &RunConfig, dir: &RunDir, force: bool) -> Result<StageStatus> {
    let outputs = ["roc.csv", "switch_curve.csv", "scores.csv", "ll_histogram.csv", "summary.txt"];
    run_stage(cfg, dir, "report", ALL_KEYS, &outputs, force, || {
        let net = io::load_mlp(&dir.path("net.asmlp"))?;
        let detector = io::load_detector(&dir.path("detector.asdet"))?;
        let clean = io::load_dataset(&dir.split("holdout"))?;
        let adv = io::load_dataset(&dir.path("adv.asdat"))?;
        let origin = io::load_dataset(&dir.path("adv_origin.asdat"))?;
        let r = evaluate_holdout(&net, &detector, &clean, &adv, &origin)?;

        dir.write_text("roc.csv", &eval::roc_csv(&r.roc))?;
        dir.write_text("switch_curve.csv", &eval::switch_curve_csv(&r.switch_curve))?;
        dir.write_text("scores.csv", &eval::scores_csv(&r.scores))?;
        dir.write_text("ll_histogram.csv", &eval::ll_histogram_csv(&r.clean_lls, &r.adv_lls, 20))?;

        let mut s = Metrics::default();
        s.push("config_hash", cfg.stage_hash("config", ALL_KEYS));
        s.extend(&dir.read_metrics("train_metrics.txt")?);
        s.extend(&dir.read_metrics("attack_metrics.txt")?);
        s.extend(&dir.read_metrics("calibration_metrics.txt")?);

        let probs = detector.switch_model().probs();
        let ps: Vec<String> = probs.iter().map(ToString::to_string).collect();
        s.push("switch_probs", ps.join(","));
        let (first, last) = switch_trend(probs);
        s.push("switch_mean_first_third", first);
        s.push("switch_mean_last_third", last);

        s.push("holdout_clean", clean.len());
        s.push("holdout_adversarial", r.adv_lls.len());
        s.push("mean_ll_normal", mean(&r.clean_lls));
        s.push("mean_ll_adv", mean(&r.adv_lls));
        s.push("auc", r.roc.auc);
        s.push_opt("filtered_auc", r.fp.filtered_roc.as_ref().map(|f| f.auc));
        s.push_opt("pearson_ll_l2", r.pearson_ll_l2);
        s.push("mean_adv_l2", mean(&r.adv_l2));
        let flagged_adv = r.adv_lls.iter().filter(|&&ll| ll < detector.cutoff()).count();
        s.push("holdout_tpr", fraction(flagged_adv, r.adv_lls.len()));
        s.push("holdout_fpr", r.fp.fp_rate);
        s.push("clean_error_rate", r.fp.clean_error_rate);
        s.push_opt("fp_misclassified_rate", r.fp.fp_misclassified_rate);

        let ends_pred = r.clean_sequences.iter().zip(&r.clean_pred).filter(|(q, &p)| q.last() == Some(p)).count();
        s.push("normal_last_label_agreement", fraction(ends_pred, r.clean_sequences.len()));
        let starts_src = r.adv_sequences.iter().zip(&r.adv_sources).filter(|(q, &y)| q.first() == Some(y)).count();
        let ends_tgt = r.adv_sequences.iter().zip(&r.adv_targets).filter(|(q, &t)| q.last() == Some(t)).count();
        s.push("adv_first_label_source", fraction(starts_src, r.adv_sequences.len()));
        s.push("adv_last_label_target", fraction(ends_tgt, r.adv_sequences.len()));
        dir.write_text("summary.txt", &s.to_text())
    })
}

/// Which stages ran and which were reused.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLog(pub Vec<(&'static str, StageStatus)>);

/// Runs every stage in order and returns the summary.
pub fn run_all(cfg: &RunConfig, dir: &RunDir, force: bool) -> Result<(Metrics, StageLog)> {
    std::fs::create_dir_all(dir.root()).map_err(|e| Error::io(dir.root(), e))?;
    dir.write_text("config.txt", &cfg.canonical())?;
    let mut log = Vec::new();
    log.push(("gen-data", stage_gen_data(cfg, dir, force)?));
    log.push(("train-net", stage_train_net(cfg, dir, force)?));
    log.push(("fit-detector", stage_fit_detector(cfg, dir, force)?));
    log.push(("attack", stage_attack(cfg, dir, force)?));
    log.push(("report", stage_report(cfg, dir, force)?));
    Ok((load_summary(dir)?, StageLog(log)))
}

pub fn load_summary(dir: &RunDir) -> Result<Metrics> {
    dir.read_metrics("summary.txt")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_thirds() {
        assert_eq!(switch_trend(&[0.6, 0.5, 0.3, 0.2, 0.1, 0.1]), (0.55, 0.1));
        let (f, l) = switch_trend(&[0.4, 0.2]);
        assert_eq!((f, l), (0.4, 0.2));
    }

    #[test]
    fn metrics_round_trip() {
        let mut m = Metrics::default();
        m.push("a", 0.5);
        m.push_opt("b", None);
        let back = Metrics::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get_f64("a"), Some(0.5));
        assert_eq!(back.get("b"), Some("absent"));
    }
}
