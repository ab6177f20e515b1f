//! Logistic surrogate loss and the classification metrics shared by the
//! estimators, the inference procedure and the simulation harness.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Margins are clipped to this magnitude before exponentiation.
pub const MARGIN_CLIP: f64 = 700.0;

/// Logistic loss `log(1 + exp(-u))`.
pub fn phi(u: f64) -> f64 {
    let u = u.clamp(-MARGIN_CLIP, MARGIN_CLIP);
    if u > 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

/// First derivative `-1 / (1 + exp(u))`.
pub fn phi_prime(u: f64) -> f64 {
    let u = u.clamp(-MARGIN_CLIP, MARGIN_CLIP);
    if u > 0.0 {
        let e = (-u).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + u.exp())
    }
}

/// Second derivative `exp(u) / (1 + exp(u))^2`.
pub fn phi_double_prime(u: f64) -> f64 {
    // symmetric in u
    let e = (-u.abs().min(MARGIN_CLIP)).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Sign with `sgn(0) = +1`, used for every decision rule in the crate.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Fraction of entries where `sgn(score)` equals the ±1 label.
pub fn accuracy_from_scores(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Contract("accuracy of an empty sample".into()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, y)| sgn(**s) == **y)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Which rank correlation statistic to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankMetric {
    #[default]
    KendallTauB,
    Spearman,
}

/// Rank correlation between two score vectors (Kendall tau-b by default).
pub fn rank_correlation(a: &[f64], b: &[f64], metric: RankMetric) -> Result<f64> {
    match metric {
        RankMetric::KendallTauB => kendall_tau_b(a, b),
        RankMetric::Spearman => spearman(a, b),
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "rank correlation of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Contract("rank correlation needs at least 2 points".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in rank correlation input".into()));
    }
    Ok(())
}

/// Number of pairs tied within runs of equal values of a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Kendall tau-b in `O(n log n)` (Knight's merge-sort algorithm).
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as u64;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(Ordering::Equal)
            .then(x.1.partial_cmp(&y.1).unwrap_or(Ordering::Equal))
    });

    let ties_a = tied_pairs(pairs.iter().map(|p| p.0));
    let ties_ab = tied_pairs(pairs.iter().copied());

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys);
    let ties_b = tied_pairs(ys.iter().copied());

    let total = n * (n - 1) / 2;
    let denom_a = (total - ties_a) as f64;
    let denom_b = (total - ties_b) as f64;
    if denom_a == 0.0 || denom_b == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input vector"));
    }
    // concordant - discordant
    let s = total as f64 - (ties_a + ties_b) as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    Ok((s / (denom_a.sqrt() * denom_b.sqrt())).clamp(-1.0, 1.0))
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mut buf = v.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}

/// Average ranks (1-based), ties sharing the mean rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input vector"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// F1 score of ±1 predictions with +1 as the positive class.
///
/// Returns 0 when precision + recall is 0, which includes the case of no
/// positive labels and no positive predictions.
pub fn f1_score(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p > 0.0, y > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}
