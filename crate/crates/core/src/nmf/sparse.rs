use serde::{Deserialize, Serialize};

use super::dictionary::normalize_columns;
use super::{Activations, Dictionary, DictTrainingMatrix};
use crate::dsp::LogMagSpectrogram;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparseNmfConfig {
    pub k: usize,
    /// ℓ1 weight on the activations.
    pub mu: f64,
    pub max_iters: usize,
    /// Stop once an iteration lowers the objective by less than this fraction.
    pub rel_tol: f64,
    pub seed: u64,
    /// Floor for every denominator.
    pub epsilon: f64,
}

impl Default for SparseNmfConfig {
    fn default() -> Self {
        Self {
            k: 32,
            mu: 0.1,
            max_iters: 400,
            rel_tol: 1e-6,
            seed: 42,
            epsilon: 1e-12,
        }
    }
}

impl SparseNmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Config(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// `½‖X − WH‖²_F + μ·ΣH`.
pub fn objective(x: &Matrix, w: &Dictionary, h: &Activations, mu: f64) -> Result<f64> {
    raw_objective(x, w.w(), h.h(), mu)
}

fn raw_objective(x: &Matrix, w: &Matrix, h: &Matrix, mu: f64) -> Result<f64> {
    if w.cols() != h.rows() || x.rows() != w.rows() || x.cols() != h.cols() {
        return Err(shape_err!(
            "X {:?}, W {:?}, H {:?} are incompatible",
            x.shape(),
            w.shape(),
            h.shape()
        ));
    }
    let wh = w.matmul(h)?;
    let resid: f64 = x
        .data()
        .iter()
        .zip(wh.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * resid + mu * h.sum())
}

/// Result of a factorisation.
#[derive(Debug, Clone)]
pub struct NmfRun {
    pub dictionary: Dictionary,
    pub activations: Activations,
    /// Objective at initialisation and after every H and every W update.
    pub objective_trace: Vec<f64>,
    /// W steps where the multiplicative update would have raised the objective
    /// and the exact column-wise update was used instead.
    pub w_fallbacks: usize,
}

impl NmfRun {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_open0())
}

/// `H ← H ⊙ WᵀX / max(WᵀWH + μ, ε)`.
fn update_h(x: &Matrix, w: &Matrix, h: &mut Matrix, mu: f64, eps: f64) -> Result<()> {
    let num = w.t_matmul(x)?;
    let den = w.t_matmul(&w.matmul(h)?)?;
    for ((hv, n), d) in h.data_mut().iter_mut().zip(num.data()).zip(den.data()) {
        *hv *= n / (d + mu).max(eps);
    }
    Ok(())
}

/// Multiplicative update for unit-norm columns: the gradient of the
/// normalised model is split into positive and negative parts,
/// `W ← W ⊙ (XHᵀ + W·diag(1ᵀ(W⊙ΛHᵀ))) / (ΛHᵀ + W·diag(1ᵀ(W⊙XHᵀ)))` with
/// `Λ = WH`, followed by column normalisation.
fn multiplicative_w(x: &Matrix, w: &mut Matrix, h: &Matrix, fixed: &[bool], eps: f64) -> Result<()> {
    let xh = x.matmul_t(h)?;
    let lh = w.matmul(h)?.matmul_t(h)?;
    let k = w.cols();
    let mut s_lh = vec![0.0; k];
    let mut s_xh = vec![0.0; k];
    for r in 0..w.rows() {
        for c in 0..k {
            s_lh[c] += w.get(r, c) * lh.get(r, c);
            s_xh[c] += w.get(r, c) * xh.get(r, c);
        }
    }
    for r in 0..w.rows() {
        for c in 0..k {
            if fixed[c] {
                continue;
            }
            let wv = w.get(r, c);
            let num = xh.get(r, c) + wv * s_lh[c];
            let den = (lh.get(r, c) + wv * s_xh[c]).max(eps);
            w.set(r, c, wv * num / den);
        }
    }
    normalize_free_columns(w, fixed);
    Ok(())
}

fn normalize_free_columns(w: &mut Matrix, fixed: &[bool]) {
    let norms = w.column_norms();
    let rows = w.rows();
    for r in 0..rows {
        for (c, v) in w.row_mut(r).iter_mut().enumerate() {
            if fixed[c] {
                continue;
            }
            *v = if norms[c] > 0.0 { *v / norms[c] } else { 1.0 / (rows as f64).sqrt() };
        }
    }
}

/// Exact minimisation over each free column in turn, on the non-negative
/// part of the unit sphere: with `v = (X − Σ_{j≠k} w_j h_jᵀ) h_k` the optimum
/// is `[v]₊/‖[v]₊‖`, or the basis vector at `argmax v` when `v ≤ 0`.
fn column_exact_w(x: &Matrix, w: &mut Matrix, h: &Matrix, fixed: &[bool]) -> Result<()> {
    let xh = x.matmul_t(h)?;
    let hh = h.matmul_t(h)?;
    let (f, k) = w.shape();
    for c in 0..k {
        if fixed[c] || hh.get(c, c) == 0.0 {
            continue;
        }
        let mut v = vec![0.0; f];
        for (r, vr) in v.iter_mut().enumerate() {
            let mut acc = xh.get(r, c);
            for j in 0..k {
                if j != c {
                    acc -= w.get(r, j) * hh.get(j, c);
                }
            }
            *vr = acc;
        }
        let norm = v.iter().map(|a| a.max(0.0).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (r, a) in v.iter().enumerate() {
                w.set(r, c, a.max(0.0) / norm);
            }
        } else {
            let best = (0..f).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0);
            for r in 0..f {
                w.set(r, c, if r == best { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(())
}

/// Sparse NMF with unit-norm dictionary columns, solved by multiplicative
/// updates.
///
/// `fixed_cols` lists columns of `w_init` that are held constant; when
/// `w_init` is absent the dictionary starts from seeded uniform draws.
pub fn sparse_nmf(
    xt: &DictTrainingMatrix,
    cfg: &SparseNmfConfig,
    fixed_cols: &[usize],
    w_init: Option<&Dictionary>,
) -> Result<NmfRun> {
    cfg.validate()?;
    let x = &xt.x_train;
    let (f, t) = x.shape();
    if x.min() < 0.0 || !x.is_finite() {
        return Err(Error::Contract("training matrix must be finite and >= 0".into()));
    }
    if cfg.k > f * t {
        return Err(Error::Config(format!("k = {} exceeds F·T = {}", cfg.k, f * t)));
    }
    if x.max() <= 0.0 {
        return Err(Error::DegenerateInput("training matrix is all zeros".into()));
    }
    let mut fixed = vec![false; cfg.k];
    for &c in fixed_cols {
        if c >= cfg.k {
            return Err(Error::Index(format!("fixed column {c} >= k = {}", cfg.k)));
        }
        fixed[c] = true;
    }

    let mut rng = SeededRng::new(cfg.seed);
    let mut w = uniform_matrix(f, cfg.k, &mut rng);
    normalize_columns(&mut w);
    let mut h = uniform_matrix(cfg.k, t, &mut rng);
    match w_init {
        Some(init) => {
            if init.w().shape() != (f, cfg.k) {
                return Err(shape_err!(
                    "initial dictionary {:?} does not match ({f}, {})",
                    init.w().shape(),
                    cfg.k
                ));
            }
            w = init.w().clone();
        }
        None if !fixed_cols.is_empty() => {
            return Err(Error::Config("fixed columns need an initial dictionary".into()));
        }
        None => {}
    }

    let mut trace = vec![raw_objective(x, &w, &h, cfg.mu)?];
    let mut fallbacks = 0;
    for _ in 0..cfg.max_iters {
        let start = *trace.last().expect("non-empty");
        update_h(x, &w, &mut h, cfg.mu, cfg.epsilon)?;
        let after_h = raw_objective(x, &w, &h, cfg.mu)?;
        trace.push(after_h);

        if fixed.iter().any(|f| !f) {
            let mut candidate = w.clone();
            multiplicative_w(x, &mut candidate, &h, &fixed, cfg.epsilon)?;
            let mut after_w = raw_objective(x, &candidate, &h, cfg.mu)?;
            if after_w > after_h {
                candidate = w.clone();
                column_exact_w(x, &mut candidate, &h, &fixed)?;
                after_w = raw_objective(x, &candidate, &h, cfg.mu)?;
                fallbacks += 1;
            }
            w = candidate;
            trace.push(after_w);
        }

        let end = *trace.last().expect("non-empty");
        if end <= 0.0 || (start - end) / start < cfg.rel_tol {
            break;
        }
    }

    Ok(NmfRun {
        dictionary: Dictionary::new(w, None)?,
        activations: Activations::new(h)?,
        objective_trace: trace,
        w_fallbacks: fallbacks,
    })
}

/// Activations for `x` under a fixed dictionary.
pub fn infer_activations(x: &LogMagSpectrogram, w: &Dictionary, cfg: &SparseNmfConfig) -> Result<Activations> {
    infer_activations_traced(x.values(), w, cfg).map(|(h, _)| h)
}

/// As [`infer_activations`], also returning the objective after each update.
pub fn infer_activations_traced(
    x: &Matrix,
    w: &Dictionary,
    cfg: &SparseNmfConfig,
) -> Result<(Activations, Vec<f64>)> {
    if x.rows() != w.n_bins() {
        return Err(shape_err!(
            "spectrogram has {} bins, dictionary has {}",
            x.rows(),
            w.n_bins()
        ));
    }
    if !(cfg.mu >= 0.0) {
        return Err(Error::Config("mu must be >= 0".into()));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut h = uniform_matrix(w.k(), x.cols(), &mut rng);
    let mut trace = vec![raw_objective(x, w.w(), &h, cfg.mu)?];
    for _ in 0..cfg.max_iters {
        let prev = *trace.last().expect("non-empty");
        update_h(x, w.w(), &mut h, cfg.mu, cfg.epsilon)?;
        let cur = raw_objective(x, w.w(), &h, cfg.mu)?;
        trace.push(cur);
        if cur <= 0.0 || (prev - cur) / prev < cfg.rel_tol {
            break;
        }
    }
    Ok((Activations::new(h)?, trace))
}

/// Final objective for each dictionary size in `ks`.
pub fn sweep_k(xt: &DictTrainingMatrix, cfg: &SparseNmfConfig, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    ks.iter()
        .map(|&k| {
            let run = sparse_nmf(xt, &SparseNmfConfig { k, ..cfg.clone() }, &[], None)?;
            Ok((k, run.final_objective()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn training(x: Matrix) -> DictTrainingMatrix {
        DictTrainingMatrix { x_train: x, chunk: 1 }
    }

    fn random_instance(seed: u64) -> (DictTrainingMatrix, SparseNmfConfig) {
        let mut rng = SeededRng::new(seed);
        let f = 4 + rng.below(61);
        let t = 5 + rng.below(196);
        let k = 1 + rng.below(16);
        let x = Matrix::from_fn(f, t, |_, _| {
            if rng.uniform() < 0.3 {
                0.0
            } else {
                rng.uniform() * 3.0
            }
        });
        let cfg = SparseNmfConfig {
            k,
            mu: rng.uniform(),
            max_iters: 150,
            seed,
            ..Default::default()
        };
        (training(x), cfg)
    }

    fn assert_monotone(trace: &[f64]) {
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10, "{} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn objective_examples() {
        let x = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let w = Dictionary::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), None).unwrap();
        let h = Activations::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(objective(&x, &w, &h, 1.0).unwrap(), 1.5);

        let x = Matrix::from_fn(3, 4, |r, c| (r + c) as f64);
        let w3 = Dictionary::normalized(Matrix::filled(3, 2, 1.0), None).unwrap();
        let zero = Activations::new(Matrix::zeros(2, 4)).unwrap();
        assert_eq!(objective(&x, &w3, &zero, 5.0).unwrap(), 0.5 * x.frobenius_sq());

        let h = Activations::new(Matrix::filled(2, 4, 0.5)).unwrap();
        let exact = w3.w().matmul(h.h()).unwrap();
        assert!(objective(&exact, &w3, &h, 0.0).unwrap().abs() < 1e-24);
        assert!(objective(&x, &w3, &Activations::new(Matrix::zeros(3, 4)).unwrap(), 0.0).is_err());
    }

    #[test]
    fn rank_one_recovery() {
        let mut rng = SeededRng::new(11);
        let mut w_star = Matrix::from_fn(20, 1, |_, _| rng.uniform_open0());
        normalize_columns(&mut w_star);
        let h_star = Matrix::from_fn(1, 30, |_, _| 0.5 + rng.uniform() * 2.0);
        let x = w_star.matmul(&h_star).unwrap();
        let cfg = SparseNmfConfig {
            k: 1,
            mu: 0.0,
            seed: 3,
            ..Default::default()
        };
        let run = sparse_nmf(&training(x.clone()), &cfg, &[], None).unwrap();
        let rec = run.dictionary.w().matmul(run.activations.h()).unwrap();
        let rel = x.sub(&rec).unwrap().frobenius() / x.frobenius();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn monotone_unit_norm_non_negative() {
        for seed in 0..10 {
            let (xt, cfg) = random_instance(seed);
            let run = sparse_nmf(&xt, &cfg, &[], None).unwrap();
            assert_monotone(&run.objective_trace);
            assert!(run.activations.h().min() >= 0.0);
            assert!(run.dictionary.w().min() >= 0.0);
        }
    }

    #[test]
    fn all_fixed_columns_only_optimise_h() {
        let (xt, cfg) = random_instance(77);
        let mut rng = SeededRng::new(5);
        let init = Dictionary::normalized(
            Matrix::from_fn(xt.x_train.rows(), cfg.k, |_, _| rng.uniform_open0()),
            None,
        )
        .unwrap();
        let all: Vec<usize> = (0..cfg.k).collect();
        let run = sparse_nmf(&xt, &cfg, &all, Some(&init)).unwrap();
        assert_eq!(run.dictionary.w(), init.w());
        assert_monotone(&run.objective_trace);
    }

    #[test]
    fn exact_column_update_is_monotone() {
        let (xt, cfg) = random_instance(5);
        let mut rng = SeededRng::new(cfg.seed);
        let (f, t) = xt.x_train.shape();
        let mut w = Matrix::from_fn(f, cfg.k, |_, _| rng.uniform_open0());
        normalize_columns(&mut w);
        let h = Matrix::from_fn(cfg.k, t, |_, _| rng.uniform_open0());
        let fixed = vec![false; cfg.k];
        let mut prev = raw_objective(&xt.x_train, &w, &h, cfg.mu).unwrap();
        for _ in 0..20 {
            column_exact_w(&xt.x_train, &mut w, &h, &fixed).unwrap();
            let cur = raw_objective(&xt.x_train, &w, &h, cfg.mu).unwrap();
            assert!(cur <= prev + 1e-10);
            prev = cur;
        }
        for n in w.column_norms() {
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (xt, cfg) = random_instance(9);
        let a = sparse_nmf(&xt, &cfg, &[], None).unwrap();
        let b = sparse_nmf(&xt, &cfg, &[], None).unwrap();
        assert_eq!(a.dictionary, b.dictionary);
        assert_eq!(a.activations, b.activations);
    }

    #[test]
    fn config_errors() {
        let xt = training(Matrix::filled(2, 2, 1.0));
        let big = SparseNmfConfig { k: 5, ..Default::default() };
        assert!(matches!(sparse_nmf(&xt, &big, &[], None), Err(Error::Config(_))));
        let zero = training(Matrix::zeros(3, 3));
        let cfg = SparseNmfConfig { k: 2, ..Default::default() };
        assert!(matches!(sparse_nmf(&zero, &cfg, &[], None), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn inference_recovers_single_component() {
        let mut rng = SeededRng::new(21);
        let w = Dictionary::normalized(Matrix::from_fn(30, 4, |_, _| rng.uniform_open0().powi(4)), None)
            .unwrap();
        let h_true: Vec<f64> = (0..25).map(|_| 0.5 + rng.uniform()).collect();
        let x = Matrix::from_fn(30, 25, |r, c| w.w().get(r, 0) * h_true[c]);
        let cfg = SparseNmfConfig {
            k: 4,
            mu: 0.0,
            max_iters: 3000,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let (h, trace) = infer_activations_traced(&x, &w, &cfg).unwrap();
        assert_monotone(&trace);
        let row0 = h.h().row(0);
        let dot: f64 = row0.iter().zip(&h_true).map(|(a, b)| a * b).sum();
        let cos = dot / (row0.iter().map(|a| a * a).sum::<f64>().sqrt()
            * h_true.iter().map(|a| a * a).sum::<f64>().sqrt());
        assert!(cos >= 0.999, "cosine {cos}");
        let total = h.h().frobenius_sq();
        let others: f64 = (1..4).map(|k| h.h().row(k).iter().map(|a| a * a).sum::<f64>()).sum();
        assert!(others / total < 0.01, "leak {}", others / total);
    }

    #[test]
    fn inference_on_silence_goes_to_zero() {
        let w = Dictionary::normalized(Matrix::filled(6, 3, 1.0), None).unwrap();
        let x = LogMagSpectrogram::new(Matrix::zeros(6, 10)).unwrap();
        let cfg = SparseNmfConfig { k: 3, mu: 0.5, ..Default::default() };
        let h = infer_activations(&x, &w, &cfg).unwrap();
        assert!(h.h().sum() < 1e-6);
        let bad = LogMagSpectrogram::new(Matrix::zeros(5, 10)).unwrap();
        assert!(matches!(infer_activations(&bad, &w, &cfg), Err(Error::Shape(_))));
    }
}
