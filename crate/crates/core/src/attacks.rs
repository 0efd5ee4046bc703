//! Gradient-based adversarial example crafting: FGSM, BIM and the targeted
//! C&W-L2 attack with a binary search over the trade-off constant.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mlp::{argmax, MlpModel};
use crate::numerics::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Fgsm,
    Bim,
    CwL2,
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(AttackKind::Fgsm),
            "bim" => Ok(AttackKind::Bim),
            "cw_l2" | "cw" => Ok(AttackKind::CwL2),
            other => Err(Error::Config(format!("unknown attack kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::CwL2 => "cw_l2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L∞ budget (fgsm, bim).
    pub epsilon: f64,
    /// Per-iteration step (bim).
    pub step_size: f64,
    /// BIM step count, or C&W descent iterations per binary-search round.
    pub steps: usize,
    /// C&W descent rate.
    pub learning_rate: f64,
    /// Starting C&W trade-off constant `c`.
    pub initial_constant: f64,
    /// Required logit margin κ for C&W success.
    pub confidence: f64,
    pub binary_search_steps: usize,
    /// Target label for targeted fgsm/bim, or the shared C&W target.
    pub target: Option<usize>,
    /// Valid input range, `[0, 1]` by default.
    pub clip: (f64, f64),
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            kind: AttackKind::Fgsm,
            epsilon,
            step_size: epsilon,
            steps: 1,
            ..Self::cw_cifar()
        }
    }

    /// `steps` iterations of size `epsilon / steps`.
    pub fn bim(epsilon: f64, steps: usize) -> Self {
        AttackConfig {
            kind: AttackKind::Bim,
            epsilon,
            step_size: epsilon / steps.max(1) as f64,
            steps,
            ..Self::cw_cifar()
        }
    }

    /// MNIST-style C&W preset: 200 iterations,
    /// rate 0.1, c₀ = 10, κ = 0, one binary-search step.
    pub fn cw_mnist() -> Self {
        AttackConfig {
            kind: AttackKind::CwL2,
            epsilon: 0.0,
            step_size: 0.0,
            steps: 200,
            learning_rate: 0.1,
            initial_constant: 10.0,
            confidence: 0.0,
            binary_search_steps: 1,
            target: None,
            clip: (0.0, 1.0),
        }
    }

    /// CIFAR-style C&W preset: 1000 iterations,
    /// rate 0.01, c₀ = 0.001, κ = 5, nine binary-search steps.
    pub fn cw_cifar() -> Self {
        AttackConfig {
            steps: 1000,
            learning_rate: 0.01,
            initial_constant: 0.001,
            confidence: 5.0,
            binary_search_steps: 9,
            ..Self::cw_mnist()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(lo < hi) {
            return Err(Error::InvalidParams(format!("empty clip range [{lo}, {hi}]")));
        }
        match self.kind {
            AttackKind::Fgsm => {
                if !(self.epsilon > 0.0) {
                    return Err(Error::InvalidParams("epsilon must be > 0".into()));
                }
            }
            AttackKind::Bim => {
                if !(self.epsilon > 0.0) || !(self.step_size > 0.0) || self.steps == 0 {
                    return Err(Error::InvalidParams("bim needs epsilon, step_size, steps > 0".into()));
                }
                if (self.steps as f64 * self.step_size - self.epsilon).abs() > 1e-9 {
                    return Err(Error::InvalidParams(format!(
                        "bim requires steps * step_size = epsilon ({} * {} != {})",
                        self.steps, self.step_size, self.epsilon
                    )));
                }
            }
            AttackKind::CwL2 => {
                if !(self.learning_rate > 0.0) || !(self.initial_constant > 0.0) {
                    return Err(Error::InvalidParams("cw needs learning_rate and initial_constant > 0".into()));
                }
                if self.binary_search_steps == 0 || self.steps == 0 {
                    return Err(Error::InvalidParams("cw needs steps and binary_search_steps >= 1".into()));
                }
                if !(self.confidence >= 0.0) {
                    return Err(Error::InvalidParams("cw confidence must be >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// Per-sample outcome of a batch attack. Failed C&W samples keep the
/// original input (zero perturbation).
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub adversarial: Matrix,
    pub success: Vec<bool>,
    pub l0: Vec<usize>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    /// Trade-off constant of the returned C&W example.
    pub final_c: Vec<Option<f64>>,
}

impl AttackResult {
    pub fn success_rate(&self) -> f64 {
        if self.success.is_empty() {
            return 0.0;
        }
        self.success.iter().filter(|&&s| s).count() as f64 / self.success.len() as f64
    }
}

/// `(l0, l2, linf)` of `adv - x`; `l0` counts coordinates moved by more than 1e-12.
pub fn perturbation_norms(x: &[f64], adv: &[f64]) -> Result<(usize, f64, f64)> {
    if x.len() != adv.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: adv.len(),
        });
    }
    let mut l0 = 0;
    let mut sq = 0.0;
    let mut linf = 0.0f64;
    for (a, b) in x.iter().zip(adv) {
        let d = (b - a).abs();
        if d > 1e-12 {
            l0 += 1;
        }
        sq += d * d;
        linf = linf.max(d);
    }
    Ok((l0, sq.sqrt(), linf))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Random target per sample, uniform over the classes other than its label.
pub fn random_targets(labels: &[usize], n_classes: usize, seed: u64) -> Result<Vec<usize>> {
    if n_classes < 2 {
        return Err(Error::InvalidParams("random targets need at least 2 classes".into()));
    }
    let mut rng = rng::stream(seed, "attack-targets");
    labels
        .iter()
        .map(|&y| {
            if y >= n_classes {
                return Err(Error::InvalidLabel { label: y, n_classes });
            }
            let t = rng.gen_range(0..n_classes - 1);
            Ok(if t >= y { t + 1 } else { t })
        })
        .collect()
}

fn check_batch(model: &MlpModel, x: &Matrix, labels: &[usize]) -> Result<()> {
    if x.cols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: x.cols(),
        });
    }
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: labels.len(),
        });
    }
    Ok(())
}

/// One signed-gradient step of size `step` from `current`, projected onto the
/// `epsilon` ball around `origin` and the clip box.
fn sign_step(model: &MlpModel, origin: &[f64], current: &[f64], y: usize, cfg: &AttackConfig, step: f64) -> Result<Vec<f64>> {
    let (label, dir) = match cfg.target {
        Some(t) => (t, -1.0),
        None => (y, 1.0),
    };
    let (_, grad) = model.loss_and_input_grad(current, label)?;
    Ok(current
        .iter()
        .zip(&grad)
        .zip(origin)
        .map(|((&c, &g), &o)| {
            let moved = c + dir * step * sign(g);
            moved.clamp(o - cfg.epsilon, o + cfg.epsilon).clamp(cfg.clip.0, cfg.clip.1)
        })
        .collect())
}

fn finish(model: &MlpModel, x: &Matrix, labels: &[usize], rows: Vec<Vec<f64>>, cfg: &AttackConfig) -> Result<AttackResult> {
    let adversarial = Matrix::from_rows(&rows)?;
    let adversarial = if rows.is_empty() {
        Matrix::zeros(0, x.cols())
    } else {
        adversarial
    };
    let pred = model.predict(&adversarial)?;
    let mut result = AttackResult {
        adversarial,
        success: Vec::with_capacity(rows.len()),
        l0: Vec::with_capacity(rows.len()),
        l2: Vec::with_capacity(rows.len()),
        linf: Vec::with_capacity(rows.len()),
        final_c: vec![None; rows.len()],
    };
    for (i, (row, &p)) in rows.iter().zip(&pred).enumerate() {
        let (l0, l2, linf) = perturbation_norms(x.row(i), row)?;
        result.l0.push(l0);
        result.l2.push(l2);
        result.linf.push(linf);
        result.success.push(match cfg.target {
            Some(t) => p == t,
            None => p != labels[i],
        });
    }
    Ok(result)
}

/// Fast gradient sign method. Untargeted: `x + ε·sign(∇J(x, y))`;
/// targeted (`cfg.target`): `x − ε·sign(∇J(x, t))`. Clipped to the box.
pub fn fgsm(model: &MlpModel, x: &Matrix, labels: &[usize], cfg: &AttackConfig) -> Result<AttackResult> {
    if cfg.kind != AttackKind::Fgsm {
        return Err(Error::InvalidParams(format!("fgsm called with {} config", cfg.kind)));
    }
    cfg.validate()?;
    check_batch(model, x, labels)?;
    let rows = (0..x.rows())
        .into_par_iter()
        .map(|i| sign_step(model, x.row(i), x.row(i), labels[i], cfg, cfg.epsilon))
        .collect::<Result<Vec<_>>>()?;
    finish(model, x, labels, rows, cfg)
}

/// Basic iterative method: `cfg.steps` FGSM steps of size `cfg.step_size`,
/// each re-projected onto the ε-ball and the box.
pub fn bim(model: &MlpModel, x: &Matrix, labels: &[usize], cfg: &AttackConfig) -> Result<AttackResult> {
    if cfg.kind != AttackKind::Bim {
        return Err(Error::InvalidParams(format!("bim called with {} config", cfg.kind)));
    }
    cfg.validate()?;
    check_batch(model, x, labels)?;
    let rows = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let origin = x.row(i);
            let mut cur = origin.to_vec();
            for _ in 0..cfg.steps {
                cur = sign_step(model, origin, &cur, labels[i], cfg, cfg.step_size)?;
            }
            Ok(cur)
        })
        .collect::<Result<Vec<_>>>()?;
    finish(model, x, labels, rows, cfg)
}

/// Result of attacking a single input with C&W-L2.
#[derive(Debug, Clone, PartialEq)]
pub struct CwOutcome {
    pub adversarial: Vec<f64>,
    pub success: bool,
    pub l2: f64,
    pub final_c: f64,
    /// Smallest successful ‖δ‖₂ found in each binary-search round.
    pub round_best: Vec<Option<f64>>,
}

/// `Z_t - max_{j≠t} Z_j` and the index of the best competitor.
fn target_margin(logits: &[f64], t: usize) -> (f64, usize) {
    let mut other = usize::MAX;
    for (j, &z) in logits.iter().enumerate() {
        if j != t && (other == usize::MAX || z > logits[other]) {
            other = j;
        }
    }
    (logits[t] - logits[other], other)
}

fn is_cw_success(logits: &[f64], t: usize, confidence: f64) -> bool {
    argmax(logits) == t && target_margin(logits, t).0 >= confidence
}

/// Targeted C&W-L2 on one input.
///
/// Minimises `‖δ‖²₂ + c·max(max_{j≠t} Z_j − Z_t, −κ)` over `w`, with
/// `x + δ = lo + (hi − lo)(tanh(w) + 1)/2`, by plain gradient descent.
/// Each round restarts from `x`; the constant doubles after a failed round
/// (or bisects once an upper bound is known) and bisects after a success.
pub fn cw_l2_single(model: &MlpModel, x: &[f64], target: usize, cfg: &AttackConfig) -> Result<CwOutcome> {
    if target >= model.n_classes() {
        return Err(Error::InvalidLabel {
            label: target,
            n_classes: model.n_classes(),
        });
    }
    let logits = model.logits(x)?;
    if is_cw_success(&logits, target, cfg.confidence) {
        return Ok(CwOutcome {
            adversarial: x.to_vec(),
            success: true,
            l2: 0.0,
            final_c: cfg.initial_constant,
            round_best: vec![Some(0.0)],
        });
    }

    let (lo, hi) = cfg.clip;
    let half_span = 0.5 * (hi - lo);
    let w0: Vec<f64> = x
        .iter()
        .map(|&v| (((v - lo) / half_span - 1.0).clamp(-1.0 + 1e-6, 1.0 - 1e-6)).atanh())
        .collect();
    let to_input = |w: &[f64]| -> Vec<f64> {
        w.iter()
            .map(|&wi| (lo + half_span * (wi.tanh() + 1.0)).clamp(lo, hi))
            .collect()
    };

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut round_best = Vec::with_capacity(cfg.binary_search_steps);
    let mut c = cfg.initial_constant;
    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);

    for _ in 0..cfg.binary_search_steps {
        let mut w = w0.clone();
        let mut round: Option<f64> = None;
        for it in 0..=cfg.steps {
            let adv = to_input(&w);
            let (logits, grad_q) = model.logit_vjp(&adv, |z| {
                let (margin, other) = target_margin(z, target);
                let mut up = vec![0.0; z.len()];
                if -margin > -cfg.confidence {
                    up[other] = c;
                    up[target] = -c;
                }
                up
            })?;
            if is_cw_success(&logits, target, cfg.confidence) {
                let l2 = perturbation_norms(x, &adv)?.1;
                if round.map_or(true, |r| l2 < r) {
                    round = Some(l2);
                }
                if best.as_ref().map_or(true, |b| l2 < b.0) {
                    best = Some((l2, adv.clone(), c));
                }
            }
            if it == cfg.steps {
                break;
            }
            for (i, wi) in w.iter_mut().enumerate() {
                let th = wi.tanh();
                let d_input = 2.0 * (adv[i] - x[i]) + grad_q[i];
                *wi -= cfg.learning_rate * d_input * half_span * (1.0 - th * th);
            }
        }
        round_best.push(round);
        if round.is_some() {
            upper = upper.min(c);
            c = 0.5 * (lower + upper);
        } else {
            lower = lower.max(c);
            c = if upper.is_finite() { 0.5 * (lower + upper) } else { 2.0 * c };
        }
    }

    Ok(match best {
        Some((l2, adversarial, final_c)) => CwOutcome {
            adversarial,
            success: true,
            l2,
            final_c,
            round_best,
        },
        None => CwOutcome {
            adversarial: x.to_vec(),
            success: false,
            l2: 0.0,
            final_c: c,
            round_best,
        },
    })
}

/// Batch C&W-L2. Targets come from `targets`, or from `cfg.target` for every row.
pub fn cw_l2(model: &MlpModel, x: &Matrix, targets: Option<&[usize]>, cfg: &AttackConfig) -> Result<AttackResult> {
    if cfg.kind != AttackKind::CwL2 {
        return Err(Error::InvalidParams(format!("cw_l2 called with {} config", cfg.kind)));
    }
    cfg.validate()?;
    let targets: Vec<usize> = match (targets, cfg.target) {
        (Some(t), _) => t.to_vec(),
        (None, Some(t)) => vec![t; x.rows()],
        (None, None) => return Err(Error::NoTargetGiven),
    };
    check_batch(model, x, &targets)?;
    let outcomes = (0..x.rows())
        .into_par_iter()
        .map(|i| cw_l2_single(model, x.row(i), targets[i], cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut result = AttackResult {
        adversarial: Matrix::zeros(x.rows(), x.cols()),
        success: Vec::with_capacity(x.rows()),
        l0: Vec::with_capacity(x.rows()),
        l2: Vec::with_capacity(x.rows()),
        linf: Vec::with_capacity(x.rows()),
        final_c: Vec::with_capacity(x.rows()),
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        let (l0, l2, linf) = perturbation_norms(x.row(i), &o.adversarial)?;
        result.adversarial.row_mut(i).copy_from_slice(&o.adversarial);
        result.success.push(o.success);
        result.l0.push(l0);
        result.l2.push(l2);
        result.linf.push(linf);
        result.final_c.push(Some(o.final_c));
    }
    Ok(result)
}

/// Dispatches on `cfg.kind`. `targets` is only used by C&W.
pub fn craft(model: &MlpModel, x: &Matrix, labels: &[usize], targets: Option<&[usize]>, cfg: &AttackConfig) -> Result<AttackResult> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, labels, cfg),
        AttackKind::Bim => bim(model, x, labels, cfg),
        AttackKind::CwL2 => cw_l2(model, x, targets, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_layer(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> MlpModel {
        use crate::mlp::Layer;
        MlpModel::from_layers(vec![Layer {
            weights: Matrix::from_rows(&weights).unwrap(),
            bias,
        }])
        .unwrap()
    }

    #[test]
    fn norms() {
        assert_eq!(perturbation_norms(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), (0, 0.0, 0.0));
        let (l0, l2, linf) = perturbation_norms(&[0.1, 0.2, 0.5], &[0.1, 0.5, 0.5]).unwrap();
        assert_eq!(l0, 1);
        assert!((l2 - 0.3).abs() < 1e-15 && (linf - 0.3).abs() < 1e-15);
        assert!(perturbation_norms(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn fgsm_zero_gradient_is_identity() {
        let model = MlpModel::zeros(&[3, 4, 2]).unwrap();
        let x = Matrix::from_rows(&[vec![0.2, 0.4, 0.6]]).unwrap();
        let r = fgsm(&model, &x, &[0], &AttackConfig::fgsm(0.1)).unwrap();
        assert_eq!(r.adversarial, x);
        assert_eq!(r.linf, vec![0.0]);
        let r = bim(&model, &x, &[0], &AttackConfig::bim(0.1, 5)).unwrap();
        assert_eq!(r.adversarial, x);
    }

    #[test]
    fn fgsm_moves_by_epsilon_and_clips() {
        let model = one_layer(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0.0, 0.0]);
        let x = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.95, 0.02]]).unwrap();
        let r = fgsm(&model, &x, &[0, 0], &AttackConfig::fgsm(0.1)).unwrap();
        // Loss for class 0 increases with x1 and decreases with x0.
        assert!((r.adversarial[(0, 0)] - 0.4).abs() < 1e-15);
        assert!((r.adversarial[(0, 1)] - 0.6).abs() < 1e-15);
        assert!((r.linf[0] - 0.1).abs() < 1e-15);
        assert!((r.adversarial[(1, 1)] - 0.12).abs() < 1e-15);
        let t = AttackConfig {
            target: Some(1),
            ..AttackConfig::fgsm(0.1)
        };
        let r2 = fgsm(&model, &x, &[0, 0], &t).unwrap();
        assert_eq!(r2.adversarial.row(0), r.adversarial.row(0));
    }

    #[test]
    fn bim_requires_consistent_budget() {
        let mut cfg = AttackConfig::bim(0.1, 4);
        assert!(cfg.validate().is_ok());
        cfg.step_size = 0.03;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn targets_avoid_true_label() {
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let t = random_targets(&labels, 3, 9).unwrap();
        assert!(t.iter().zip(&labels).all(|(a, b)| a != b && *a < 3));
        assert_eq!(t, random_targets(&labels, 3, 9).unwrap());
        assert!(t.iter().zip(&labels).any(|(&a, &b)| a == (b + 1) % 3));
        assert!(t.iter().zip(&labels).any(|(&a, &b)| a == (b + 2) % 3));
    }

    #[test]
    fn cw_requires_target() {
        let model = MlpModel::zeros(&[2, 2]).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(matches!(cw_l2(&model, &x, None, &AttackConfig::cw_mnist()), Err(Error::NoTargetGiven)));
    }

    #[test]
    fn cw_already_at_target_returns_zero_perturbation() {
        let model = one_layer(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![0.0, 10.0]);
        let x = Matrix::from_rows(&[vec![0.3, 0.7]]).unwrap();
        let r = cw_l2(&model, &x, Some(&[1]), &AttackConfig::cw_cifar()).unwrap();
        assert!(r.success[0]);
        assert_eq!(r.l2, vec![0.0]);
        assert_eq!(r.adversarial, x);
    }

    #[test]
    fn cw_linear_model_reaches_target_with_margin() {
        let model = one_layer(vec![vec![4.0, -4.0], vec![-4.0, 4.0]], vec![0.0, 0.0]);
        let x = [0.7, 0.3];
        let cfg = AttackConfig {
            steps: 300,
            learning_rate: 0.05,
            initial_constant: 0.1,
            confidence: 1.0,
            binary_search_steps: 6,
            ..AttackConfig::cw_mnist()
        };
        let o = cw_l2_single(&model, &x, 1, &cfg).unwrap();
        assert!(o.success);
        let z = model.logits(&o.adversarial).unwrap();
        assert!(z[1] - z[0] >= 1.0 - 1e-9);
        let min_round = o.round_best.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(o.l2, min_round);
        // Minimal L2 to reach margin 1 is |8(0.4) + 1| / (8√2) ≈ 0.371.
        assert!(o.l2 > 0.37 && o.l2 < 0.45, "l2 = {}", o.l2);
    }
}
