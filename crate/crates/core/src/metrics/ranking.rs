use std::collections::BTreeMap;

use crate::error::{shape_err, Error, Result};

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `k` largest entries, ordered by value then by index.
pub fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Fraction of samples whose classifier argmax is among the interpreter's
/// `k` most probable classes, for each requested `k`.
pub fn topk_fidelity(f_probs: &[Vec<f64>], interp_probs: &[Vec<f64>], ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if f_probs.len() != interp_probs.len() {
        return Err(shape_err!("{} classifier outputs vs {} interpreter outputs", f_probs.len(), interp_probs.len()));
    }
    if f_probs.is_empty() {
        return Err(Error::EmptyInput("no samples to score".into()));
    }
    for (f, g) in f_probs.iter().zip(interp_probs) {
        if f.len() != g.len() {
            return Err(shape_err!("class count mismatch {} vs {}", f.len(), g.len()));
        }
    }
    let n = f_probs.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = f_probs
                .iter()
                .zip(interp_probs)
                .filter(|(f, g)| top_k_indices(g, k).contains(&argmax(f)))
                .count();
            (k, hits as f64 / n)
        })
        .collect())
}

/// Area under the precision-recall curve.
///
/// Scores are swept in descending order with equal scores admitted together;
/// each recall step is weighted by the best precision achieved at that recall
/// or higher.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(shape_err!("{} scores vs {} labels", scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive label".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut envelope = vec![0.0f64; points.len()];
    let mut best = 0.0f64;
    for (e, &(_, p)) in envelope.iter_mut().zip(&points).rev() {
        best = best.max(p);
        *e = best;
    }
    let mut area = 0.0;
    let mut prev = 0.0;
    for (&(r, _), e) in points.iter().zip(&envelope) {
        area += (r - prev) * e;
        prev = r;
    }
    Ok(area)
}

/// Micro F1 of `score ≥ threshold` against `labels`; 0 when nothing is
/// predicted and nothing is positive.
pub fn micro_f1(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// The threshold grid `0.01, 0.02, …, 0.99`.
pub fn f1_thresholds() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

/// Maximum of [`micro_f1`] over [`f1_thresholds`].
pub fn max_micro_f1(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(shape_err!("{} scores vs {} labels", scores.len(), labels.len()));
    }
    Ok(f1_thresholds().into_iter().map(|t| micro_f1(scores, labels, t)).fold(0.0, f64::max))
}
