//! Detector metrics: ROC sweeps with trapezoidal AUC, Pearson correlation,
//! the false-positive breakdown and per-transition switching curves, plus
//! their CSV renderings.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::detector::{label_sequences, log_likelihood, DetectorModel, LabelSequence};
use crate::error::{Error, Result};
use crate::mlp::MlpModel;

/// One operating point for the rule "adversarial iff LL < threshold".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Operating points in increasing threshold order, from `(0, 0)` at −∞ to
/// `(1, 1)` at +∞.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Candidate thresholds: −∞, midpoints between adjacent distinct scores, +∞.
pub(crate) fn candidate_thresholds(scores: &mut Vec<f64>) -> Vec<f64> {
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut out = Vec::with_capacity(scores.len() + 1);
    out.push(f64::NEG_INFINITY);
    for w in scores.windows(2) {
        let mid = w[0] + 0.5 * (w[1] - w[0]);
        // Adjacent floats can round the midpoint down onto the lower value.
        out.push(if mid > w[0] { mid } else { w[1] });
    }
    out.push(f64::INFINITY);
    out
}

fn count_below(sorted: &[f64], threshold: f64) -> usize {
    sorted.partition_point(|&v| v < threshold)
}

/// ROC of adversarial (positive) vs normal scores, tie-aware: equal scores
/// always fall on the same side of every threshold.
pub fn roc_auc(normal_lls: &[f64], adversarial_lls: &[f64]) -> Result<RocCurve> {
    if normal_lls.is_empty() || adversarial_lls.is_empty() {
        return Err(Error::EmptyInput("roc needs both normal and adversarial scores"));
    }
    if normal_lls.iter().chain(adversarial_lls).any(|v| v.is_nan()) {
        return Err(Error::InvalidParams("NaN score".into()));
    }
    let mut normal = normal_lls.to_vec();
    normal.sort_by(f64::total_cmp);
    let mut adv = adversarial_lls.to_vec();
    adv.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = normal.iter().chain(&adv).copied().collect();
    let thresholds = candidate_thresholds(&mut all);

    let (nn, na) = (normal.len() as f64, adv.len() as f64);
    let points: Vec<RocPoint> = thresholds
        .into_iter()
        .map(|threshold| RocPoint {
            threshold,
            tpr: count_below(&adv, threshold) as f64 / na,
            fpr: count_below(&normal, threshold) as f64 / nn,
        })
        .collect();
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[1].tpr + w[0].tpr))
        .sum();
    Ok(RocCurve { points, auc })
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::EmptyInput("pearson needs at least two pairs"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance("first series"));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance("second series"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// How detector false positives on clean data relate to network errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FpReport {
    pub n_clean: usize,
    pub clean_error_rate: f64,
    pub fp_rate: f64,
    /// Share of false positives the network also misclassifies; `None`
    /// when there are no false positives.
    pub fp_misclassified_rate: Option<f64>,
    /// ROC restricted to clean samples the network classifies correctly.
    pub filtered_roc: Option<RocCurve>,
    pub clean_lls: Vec<f64>,
    pub net_correct: Vec<bool>,
    pub flagged: Vec<bool>,
}

pub fn fp_misclassification_report(net: &MlpModel, detector: &DetectorModel, clean: &Dataset, adversarial_lls: &[f64]) -> Result<FpReport> {
    if clean.is_empty() {
        return Err(Error::EmptyInput("clean set"));
    }
    let pred = net.predict(clean.features())?;
    let net_correct: Vec<bool> = pred.iter().zip(clean.labels()).map(|(p, y)| p == y).collect();
    let seqs = label_sequences(net, detector, clean.features())?;
    let clean_lls = seqs
        .iter()
        .map(|s| log_likelihood(s, detector.switch_model()))
        .collect::<Result<Vec<_>>>()?;
    let flagged: Vec<bool> = clean_lls.iter().map(|&ll| ll < detector.cutoff()).collect();

    let n = clean.len() as f64;
    let errors = net_correct.iter().filter(|&&c| !c).count();
    let fps = flagged.iter().filter(|&&f| f).count();
    let fp_wrong = flagged.iter().zip(&net_correct).filter(|(&f, &c)| f && !c).count();
    let correct_lls: Vec<f64> = clean_lls
        .iter()
        .zip(&net_correct)
        .filter(|(_, &c)| c)
        .map(|(&ll, _)| ll)
        .collect();
    let filtered_roc = if correct_lls.is_empty() || adversarial_lls.is_empty() {
        None
    } else {
        Some(roc_auc(&correct_lls, adversarial_lls)?)
    };
    Ok(FpReport {
        n_clean: clean.len(),
        clean_error_rate: errors as f64 / n,
        fp_rate: fps as f64 / n,
        fp_misclassified_rate: (fps > 0).then(|| fp_wrong as f64 / fps as f64),
        filtered_roc,
        clean_lls,
        net_correct,
        flagged,
    })
}

/// Unsmoothed empirical switch frequency per transition for two groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCurve {
    /// `(transition index i ≥ 1, p_switch_normal, p_switch_adv)`.
    pub rows: Vec<(usize, f64, f64)>,
}

fn switch_frequencies(seqs: &[LabelSequence]) -> Result<Vec<f64>> {
    let len = seqs[0].len();
    let mut counts = vec![0usize; len.saturating_sub(1)];
    for s in seqs {
        if s.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: s.len(),
            });
        }
        for (c, switched) in counts.iter_mut().zip(s.switches()) {
            *c += usize::from(switched);
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / seqs.len() as f64).collect())
}

pub fn switch_curve_report(normal: &[LabelSequence], adversarial: &[LabelSequence]) -> Result<SwitchCurve> {
    if normal.is_empty() || adversarial.is_empty() {
        return Err(Error::EmptyInput("switch curve needs sequences in both groups"));
    }
    if normal[0].len() != adversarial[0].len() {
        return Err(Error::LengthMismatch {
            expected: normal[0].len(),
            got: adversarial[0].len(),
        });
    }
    let pn = switch_frequencies(normal)?;
    let pa = switch_frequencies(adversarial)?;
    Ok(SwitchCurve {
        rows: pn
            .into_iter()
            .zip(pa)
            .enumerate()
            .map(|(i, (n, a))| (i + 1, n, a))
            .collect(),
    })
}

/// One held-out sample in the scores table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: String,
    pub ll: f64,
    pub l2_norm: f64,
    pub adversarial_verdict: bool,
    pub net_correct: bool,
}

pub fn roc_csv(roc: &RocCurve) -> String {
    let mut s = String::from("threshold,tpr,fpr\n");
    for p in &roc.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.tpr, p.fpr);
    }
    s
}

pub fn switch_curve_csv(curve: &SwitchCurve) -> String {
    let mut s = String::from("transition_index,p_switch_normal,p_switch_adv\n");
    for (i, n, a) in &curve.rows {
        let _ = writeln!(s, "{i},{n},{a}");
    }
    s
}

pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from("sample_id,ll,l2_norm,verdict,net_correct\n");
    for r in rows {
        let verdict = if r.adversarial_verdict { "adversarial" } else { "normal" };
        let _ = writeln!(s, "{},{},{},{},{}", r.sample_id, r.ll, r.l2_norm, verdict, u8::from(r.net_correct));
    }
    s
}

/// Histogram of scores over `bins` equal-width buckets spanning their range,
/// as `(lower edge, upper edge, count)`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    let bins = bins.max(1);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

/// `bin_lo,bin_hi,count_normal,count_adv` over a shared range.
pub fn ll_histogram_csv(normal: &[f64], adversarial: &[f64], bins: usize) -> String {
    let all = normal.iter().chain(adversarial);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let hn = histogram(normal, lo, hi, bins);
    let ha = histogram(adversarial, lo, hi, bins);
    let mut s = String::from("bin_lo,bin_hi,count_normal,count_adv\n");
    for ((a, b, cn), (_, _, ca)) in hn.iter().zip(&ha) {
        let _ = writeln!(s, "{a},{b},{cn},{ca}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores() {
        let roc = roc_auc(&[-1.0, -2.0], &[-3.0, -4.0]).unwrap();
        assert_eq!(roc.auc, 1.0);
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn identical_distributions() {
        let s = [-1.0, -2.0, -2.0, -5.0];
        assert_eq!(roc_auc(&s, &s).unwrap().auc, 0.5);
    }

    #[test]
    fn roc_is_monotone() {
        let roc = roc_auc(&[0.3, 0.1, 0.9, 0.5], &[0.2, 0.2, 0.6, 0.0]).unwrap();
        for w in roc.points.windows(2) {
            assert!(w[1].threshold > w[0].threshold);
            assert!(w[1].tpr >= w[0].tpr && w[1].fpr >= w[0].fpr);
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(roc_auc(&[], &[1.0]), Err(Error::EmptyInput(_))));
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn pearson_extremes() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn switch_curve_tallies() {
        let constant = LabelSequence::new(vec![2, 2, 2]);
        let c = switch_curve_report(&[constant.clone()], &[constant.clone()]).unwrap();
        assert_eq!(c.rows, vec![(1, 0.0, 0.0), (2, 0.0, 0.0)]);
        let a = LabelSequence::new(vec![0, 1, 1]);
        let b = LabelSequence::new(vec![0, 0, 2]);
        let c = switch_curve_report(&[a.clone(), constant], &[a, b]).unwrap();
        assert_eq!(c.rows, vec![(1, 0.5, 0.5), (2, 0.0, 0.5)]);
        assert!(switch_curve_report(&[], &[LabelSequence::new(vec![0])]).is_err());
    }

    #[test]
    fn csv_headers() {
        let roc = roc_auc(&[0.0], &[-1.0]).unwrap();
        assert!(roc_csv(&roc).starts_with("threshold,tpr,fpr\n-inf,0,0\n"));
        let rows = [ScoreRow {
            sample_id: "n0".into(),
            ll: -0.5,
            l2_norm: 0.0,
            adversarial_verdict: false,
            net_correct: true,
        }];
        assert_eq!(scores_csv(&rows), "sample_id,ll,l2_norm,verdict,net_correct\nn0,-0.5,0,normal,1\n");
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.5, 1.0, 1.0], 0.0, 1.0, 2);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 4);
        assert_eq!(h[1].2, 3);
    }
}
