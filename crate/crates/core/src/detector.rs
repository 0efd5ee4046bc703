//! The activation-space detector.
//!
//! Training projects every layer's activations on normal data into a PCA
//! space, fits one k-NN labeller per space, and estimates for each pair of
//! adjacent spaces how often the assigned label changes. A new input is
//! labelled in every space; the naive-Bayes log likelihood of its
//! switch/no-switch pattern is compared against a cutoff chosen on a ROC
//! curve of normal vs attacked calibration data.

use rayon::prelude::*;

use crate::attacks::{craft, random_targets, AttackConfig, AttackKind, AttackResult};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{roc_auc, RocCurve};
use crate::knn::{knn_fit, knn_predict, knn_predict_batch, KnnClassifier};
use crate::mlp::MlpModel;
use crate::numerics::{pca_fit, pca_transform, ActivationSpace, Matrix, DEFAULT_MAX_COMPONENTS};

/// Per-space class labels `Ŷ⁰ … Ŷˡ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(labels: Vec<usize>) -> Self {
        LabelSequence(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Whether the label changes at each transition `1..=l`.
    pub fn switches(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.windows(2).map(|w| w[0] != w[1])
    }
}

/// Smoothed a-priori switch probability per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchModel {
    probs: Vec<f64>,
    n_fit: usize,
    smoothing: f64,
}

impl SwitchModel {
    pub fn from_parts(probs: Vec<f64>, n_fit: usize, smoothing: f64) -> Result<Self> {
        if probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::InvalidParams("switch probabilities must lie in (0, 1)".into()));
        }
        Ok(SwitchModel { probs, n_fit, smoothing })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `P_s^i = (s_i + λ) / (n + 2λ)` where `s_i` counts sequences whose label
/// changes at transition `i`.
pub fn fit_switch_model(sequences: &[LabelSequence], smoothing: f64) -> Result<SwitchModel> {
    if sequences.len() < 2 {
        return Err(Error::EmptyInput("switch model needs at least two sequences"));
    }
    if !(smoothing > 0.0) || !smoothing.is_finite() {
        return Err(Error::InvalidParams(format!("smoothing must be > 0, got {smoothing}")));
    }
    let len = sequences[0].len();
    if len < 2 {
        return Err(Error::InvalidParams("sequences need at least two labels".into()));
    }
    let mut counts = vec![0usize; len - 1];
    for s in sequences {
        if s.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: s.len(),
            });
        }
        for (c, sw) in counts.iter_mut().zip(s.switches()) {
            *c += usize::from(sw);
        }
    }
    let n = sequences.len() as f64;
    let probs = counts
        .iter()
        .map(|&s| (s as f64 + smoothing) / (n + 2.0 * smoothing))
        .collect();
    SwitchModel::from_parts(probs, sequences.len(), smoothing)
}

/// `Σ_i ln P_s^i` over switching transitions plus `ln(1 − P_s^i)` elsewhere.
pub fn log_likelihood(seq: &LabelSequence, model: &SwitchModel) -> Result<f64> {
    if seq.len() != model.len() + 1 {
        return Err(Error::LengthMismatch {
            expected: model.len() + 1,
            got: seq.len(),
        });
    }
    Ok(seq
        .switches()
        .zip(&model.probs)
        .map(|(sw, &p)| if sw { p.ln() } else { (1.0 - p).ln() })
        .sum())
}

/// Picks the ROC threshold with the highest TPR among those with FPR < α,
/// preferring lower FPR and then lower threshold on ties. Returns the
/// cutoff and the full ROC. When only the −∞ sentinel qualifies, the
/// cutoff becomes `min(score) − 1`, which flags the same (empty) set while
/// staying finite.
pub fn choose_cutoff(normal_lls: &[f64], adversarial_lls: &[f64], alpha: f64) -> Result<(f64, RocCurve)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParams(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let roc = roc_auc(normal_lls, adversarial_lls)?;
    let best = roc
        .points
        .iter()
        .filter(|p| p.fpr < alpha)
        .fold(None::<&crate::eval::RocPoint>, |acc, p| match acc {
            None => Some(p),
            Some(b) => {
                let better = p.tpr > b.tpr
                    || (p.tpr == b.tpr && p.fpr < b.fpr)
                    || (p.tpr == b.tpr && p.fpr == b.fpr && p.threshold < b.threshold);
                Some(if better { p } else { b })
            }
        })
        .ok_or(Error::NoFeasibleThreshold(alpha))?;
    let cutoff = if best.threshold.is_finite() {
        best.threshold
    } else {
        let min = normal_lls
            .iter()
            .chain(adversarial_lls)
            .copied()
            .fold(f64::INFINITY, f64::min);
        min - 1.0
    };
    Ok((cutoff, roc))
}

/// Trained detector: one PCA space and k-NN labeller per trace entry, the
/// switch model, and the log-likelihood cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    spaces: Vec<ActivationSpace>,
    classifiers: Vec<KnnClassifier>,
    switch_model: SwitchModel,
    cutoff: f64,
    alpha: f64,
    k: usize,
}

impl DetectorModel {
    pub fn from_parts(
        spaces: Vec<ActivationSpace>,
        classifiers: Vec<KnnClassifier>,
        switch_model: SwitchModel,
        cutoff: f64,
        alpha: f64,
        k: usize,
    ) -> Result<Self> {
        if spaces.len() != classifiers.len() || spaces.len() != switch_model.len() + 1 {
            return Err(Error::LengthMismatch {
                expected: spaces.len(),
                got: classifiers.len().min(switch_model.len() + 1),
            });
        }
        for (s, c) in spaces.iter().zip(&classifiers) {
            if s.n_components() != c.dim() {
                return Err(Error::DimensionMismatch {
                    expected: s.n_components(),
                    got: c.dim(),
                });
            }
        }
        if !cutoff.is_finite() {
            return Err(Error::InvalidParams("cutoff must be finite".into()));
        }
        Ok(DetectorModel {
            spaces,
            classifiers,
            switch_model,
            cutoff,
            alpha,
            k,
        })
    }

    pub fn spaces(&self) -> &[ActivationSpace] {
        &self.spaces
    }

    pub fn classifiers(&self) -> &[KnnClassifier] {
        &self.classifiers
    }

    pub fn switch_model(&self) -> &SwitchModel {
        &self.switch_model
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn smoothing(&self) -> f64 {
        self.switch_model.smoothing
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Returns a copy with a different cutoff.
    pub fn with_cutoff(&self, cutoff: f64) -> Result<Self> {
        if !cutoff.is_finite() {
            return Err(Error::InvalidParams("cutoff must be finite".into()));
        }
        Ok(DetectorModel { cutoff, ..self.clone() })
    }

    fn check_net(&self, net: &MlpModel) -> Result<()> {
        let dims = net.layer_dims();
        if dims.len() != self.spaces.len() {
            return Err(Error::LengthMismatch {
                expected: self.spaces.len(),
                got: dims.len(),
            });
        }
        for (d, s) in dims.iter().zip(&self.spaces) {
            if *d != s.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: s.input_dim(),
                    got: *d,
                });
            }
        }
        Ok(())
    }
}

/// `Ŷ^i = C^i(V^i(f^i(x)))` for every trace entry `i = 0..=l`.
pub fn label_sequence(net: &MlpModel, detector: &DetectorModel, x: &[f64]) -> Result<LabelSequence> {
    detector.check_net(net)?;
    let trace = net.forward_trace(x)?;
    trace
        .layers
        .iter()
        .zip(detector.spaces.iter().zip(&detector.classifiers))
        .map(|(v, (space, clf))| knn_predict(clf, &space.project(v)?))
        .collect::<Result<Vec<_>>>()
        .map(LabelSequence)
}

pub fn label_sequences(net: &MlpModel, detector: &DetectorModel, x: &Matrix) -> Result<Vec<LabelSequence>> {
    (0..x.rows())
        .into_par_iter()
        .map(|i| label_sequence(net, detector, x.row(i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Normal,
    Adversarial,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Normal => "normal",
            Verdict::Adversarial => "adversarial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub log_likelihood: f64,
    pub sequence: LabelSequence,
}

/// Adversarial iff the sequence log likelihood is strictly below the cutoff.
pub fn verdict_for(ll: f64, cutoff: f64) -> Verdict {
    if ll < cutoff {
        Verdict::Adversarial
    } else {
        Verdict::Normal
    }
}

pub fn detector_classify(net: &MlpModel, detector: &DetectorModel, x: &[f64]) -> Result<Classification> {
    let sequence = label_sequence(net, detector, x)?;
    let ll = log_likelihood(&sequence, &detector.switch_model)?;
    Ok(Classification {
        verdict: verdict_for(ll, detector.cutoff),
        log_likelihood: ll,
        sequence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Maximum calibration false-positive rate.
    pub alpha: f64,
    /// Laplace pseudo-count λ for switch probabilities.
    pub smoothing: f64,
    pub k: usize,
    pub max_components: usize,
    /// Seed for calibration attack targets.
    pub seed: u64,
    /// Minimum calibration attack success rate.
    pub min_attack_success: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            alpha: 0.1,
            smoothing: 1.0,
            k: 5,
            max_components: DEFAULT_MAX_COMPONENTS,
            seed: 0,
            min_attack_success: 0.5,
        }
    }
}

/// Everything measured while calibrating the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub switch_probs: Vec<f64>,
    pub normal_sequences: Vec<LabelSequence>,
    pub normal_lls: Vec<f64>,
    /// Sequences and LLs of successful calibration adversarials only.
    pub adversarial_sequences: Vec<LabelSequence>,
    pub adversarial_lls: Vec<f64>,
    pub attack_success_rate: f64,
    pub attacked: usize,
    pub roc: RocCurve,
    pub fpr_at_cutoff: f64,
    pub tpr_at_cutoff: f64,
}

/// Collects `f^i(X)` for every trace entry as one matrix per layer.
pub fn layer_activations(net: &MlpModel, x: &Matrix) -> Result<Vec<Matrix>> {
    let traces = (0..x.rows())
        .into_par_iter()
        .map(|i| net.forward_trace(x.row(i)))
        .collect::<Result<Vec<_>>>()?;
    net.layer_dims()
        .iter()
        .enumerate()
        .map(|(layer, &d)| {
            let mut data = Vec::with_capacity(x.rows() * d);
            for t in &traces {
                data.extend_from_slice(&t.layers[layer]);
            }
            Matrix::from_vec(x.rows(), d, data)
        })
        .collect()
}

/// Crafts calibration adversarials from the samples the network gets right.
/// C&W uses seeded random targets; FGSM/BIM follow `cfg`.
pub fn craft_calibration_attack(net: &MlpModel, data: &Dataset, cfg: &AttackConfig, seed: u64) -> Result<(Vec<usize>, Vec<usize>, AttackResult)> {
    let pred = net.predict(data.features())?;
    let correct: Vec<usize> = (0..data.len()).filter(|&i| pred[i] == data.labels()[i]).collect();
    let subset = data.subset(&correct);
    let targets = if cfg.kind == AttackKind::CwL2 && cfg.target.is_none() {
        random_targets(subset.labels(), net.n_classes(), seed)?
    } else {
        vec![cfg.target.unwrap_or(0); subset.len()]
    };
    let result = craft(net, subset.features(), subset.labels(), Some(&targets), cfg)?;
    Ok((correct, targets, result))
}

/// Trains the detector on `normal` and calibrates its cutoff on `calibration`
/// together with attacked copies of it.
pub fn detector_fit(
    net: &MlpModel,
    normal: &Dataset,
    calibration: &Dataset,
    attack: &AttackConfig,
    params: &DetectorParams,
) -> Result<(DetectorModel, CalibrationReport)> {
    if normal.is_empty() || calibration.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::InvalidParams(format!("alpha must lie in (0, 1), got {}", params.alpha)));
    }

    let activations = layer_activations(net, normal.features())?;
    let mut spaces = Vec::with_capacity(activations.len());
    let mut classifiers = Vec::with_capacity(activations.len());
    let mut per_layer_labels = Vec::with_capacity(activations.len());
    for act in &activations {
        let space = pca_fit(act, params.max_components)?;
        let projected = pca_transform(&space, act)?;
        let clf = knn_fit(projected.clone(), normal.labels().to_vec(), params.k)?;
        per_layer_labels.push(knn_predict_batch(&clf, &projected)?);
        spaces.push(space);
        classifiers.push(clf);
    }
    let normal_fit_sequences: Vec<LabelSequence> = (0..normal.len())
        .map(|i| LabelSequence(per_layer_labels.iter().map(|l| l[i]).collect()))
        .collect();
    let switch_model = fit_switch_model(&normal_fit_sequences, params.smoothing)?;

    // Provisional model (cutoff fixed below) used to label calibration data.
    let mut detector = DetectorModel::from_parts(spaces, classifiers, switch_model, 0.0, params.alpha, params.k)?;

    let (_, _, attack_result) = craft_calibration_attack(net, calibration, attack, params.seed)?;
    let attacked = attack_result.success.len();
    let success_rate = attack_result.success_rate();
    if attacked == 0 || success_rate < params.min_attack_success {
        return Err(Error::AttackFailed {
            rate: success_rate,
            required: params.min_attack_success,
        });
    }
    let successful: Vec<usize> = (0..attacked).filter(|&i| attack_result.success[i]).collect();
    let adv = attack_result.adversarial.select_rows(&successful);

    let normal_sequences = label_sequences(net, &detector, calibration.features())?;
    let adversarial_sequences = label_sequences(net, &detector, &adv)?;
    let lls = |seqs: &[LabelSequence]| -> Result<Vec<f64>> {
        seqs.iter().map(|s| log_likelihood(s, &detector.switch_model)).collect()
    };
    let normal_lls = lls(&normal_sequences)?;
    let adversarial_lls = lls(&adversarial_sequences)?;
    let (cutoff, roc) = choose_cutoff(&normal_lls, &adversarial_lls, params.alpha)?;
    detector = detector.with_cutoff(cutoff)?;

    let below = |v: &[f64]| v.iter().filter(|&&ll| ll < cutoff).count() as f64 / v.len() as f64;
    let report = CalibrationReport {
        switch_probs: detector.switch_model.probs.clone(),
        fpr_at_cutoff: below(&normal_lls),
        tpr_at_cutoff: below(&adversarial_lls),
        normal_sequences,
        normal_lls,
        adversarial_sequences,
        adversarial_lls,
        attack_success_rate: success_rate,
        attacked,
        roc,
    };
    Ok((detector, report))
}
