use std::collections::BTreeMap;

use super::*;
use crate::classifier::{train_classifier, ClassifierArch, ClassifierModel, ClassifierTrainConfig};
use crate::dsp::{AudioSignal, MelConfig, StftConfig};
use crate::error::Error;
use crate::net::{check_gradient, Tensor};
use crate::nmf::{Activations, Dictionary};
use crate::numerics::{Matrix, SeededRng};
use crate::synthgen::{generate_dataset, DatasetSpec, TaskMode};

fn random_dictionary(f: usize, k: usize, seed: u64) -> Dictionary {
    let mut rng = SeededRng::new(seed);
    Dictionary::normalized(Matrix::from_fn(f, k, |_, _| rng.uniform_open0()), None).unwrap()
}

fn tiny_model(pooling: Pooling, k: usize, f: usize, mode: TaskMode) -> InterpreterModel {
    let arch = InterpreterArch { pooling, attention_dim: 5, hidden_channels: 4, resize_freq: 3, output_bias_init: 0.0 };
    InterpreterModel::new(arch, vec![(2, 2), (3, 3)], random_dictionary(f, k, 1), mode, 3, 9).unwrap()
}

fn random_taps(t2: usize, rng: &mut SeededRng) -> BTreeMap<usize, Tensor> {
    let mut taps = BTreeMap::new();
    taps.insert(2, Tensor::new(vec![2, 4, t2], (0..8 * t2).map(|_| rng.normal()).collect()).unwrap());
    taps.insert(3, Tensor::new(vec![3, 2, t2.div_ceil(2)], (0..6 * t2.div_ceil(2)).map(|_| rng.normal()).collect()).unwrap());
    taps
}

fn flat_params(m: &InterpreterModel) -> Vec<f64> {
    m.networks().iter().flat_map(|n| n.params()).flat_map(|t| t.data().to_vec()).collect()
}

fn set_flat_params(m: &mut InterpreterModel, v: &[f64]) {
    let mut i = 0;
    for t in m.all_params_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&v[i..i + n]);
        i += n;
    }
}

fn example(m: &InterpreterModel, frames: usize, f: usize, rng: &mut SeededRng, f_probs: Vec<f64>) -> InterpreterExample {
    let taps = random_taps(frames.div_ceil(4), rng);
    InterpreterExample {
        id: "ex".into(),
        psi_input: m.psi_input(&taps, frames).unwrap(),
        x: Matrix::from_fn(f, frames, |_, _| rng.uniform() * 0.5),
        f_probs,
    }
}

fn gradient_error(pooling: Pooling, mode: TaskMode, alpha: f64, beta: f64) -> f64 {
    let (k, f, t) = (4, 6, 8);
    let mut model = tiny_model(pooling, k, f, mode);
    let mut rng = SeededRng::new(77);
    // lift the final conv bias so the ReLU stays mostly active
    {
        let mut ps = model.psi.params_mut();
        for v in ps[3].data_mut() {
            *v = 0.3 + 0.1 * rng.uniform();
        }
    }
    for p in model.head.params_mut() {
        for v in p.data_mut() {
            *v = 0.5 * rng.normal();
        }
    }
    let target = match mode {
        TaskMode::MultiClass => vec![0.2, 0.5, 0.3],
        TaskMode::MultiLabel => vec![1.0, 0.0, 0.4],
    };
    let batch = vec![example(&model, t, f, &mut rng, target.clone()), example(&model, t, f, &mut rng, target)];
    let weights = LossWeights { alpha, beta, l1_per_frame: false, nmf_mean: false };
    let (_, grads) = loss_and_gradients(&batch, &model, &weights).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let mut x0 = flat_params(&model);
    check_gradient(&mut x0, &analytic, 1e-4, |p| {
        set_flat_params(&mut model, p);
        total_loss(&batch, &model, &weights).unwrap().total
    })
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    for pooling in [Pooling::Att, Pooling::Max] {
        for mode in [TaskMode::MultiClass, TaskMode::MultiLabel] {
            for (alpha, beta) in [(10.0, 0.8), (0.0, 0.0)] {
                let err = gradient_error(pooling, mode, alpha, beta);
                assert!(err < 1e-4, "{pooling:?} {mode:?} alpha {alpha}: {err}");
            }
        }
    }
}

#[test]
fn constant_columns_pool_to_that_column() {
    for pooling in [Pooling::Att, Pooling::Max] {
        let m = tiny_model(pooling, 3, 5, TaskMode::MultiClass);
        let col = [0.5, 2.0, 0.0];
        let h = Tensor::new(vec![3, 6], (0..18).map(|i| col[i / 6]).collect()).unwrap();
        let z = m.pool.predict(&h).unwrap();
        for (a, b) in z.data().iter().zip(col) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn h_is_non_negative_and_attention_normalised() {
    let m = tiny_model(Pooling::Att, 4, 5, TaskMode::MultiClass);
    let mut rng = SeededRng::new(3);
    for _ in 0..100 {
        let frames = 1 + rng.below(20);
        let input = m.psi_input(&random_taps(frames.div_ceil(4), &mut rng), frames).unwrap();
        let fwd = m.forward_input(&input).unwrap();
        assert!(fwd.h_i.h().min() >= 0.0);
        assert_eq!(fwd.h_i.h().cols(), frames);
        let a = fwd.attention.unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // z lies in the hull of the columns
        for (k, z) in fwd.z.iter().enumerate() {
            let row = fwd.h_i.h().row(k);
            assert!(*z <= row.iter().copied().fold(f64::MIN, f64::max) + 1e-12);
            assert!(*z >= row.iter().copied().fold(f64::MAX, f64::min) - 1e-12);
        }
    }
    let mm = tiny_model(Pooling::Max, 4, 5, TaskMode::MultiClass);
    let input = mm.psi_input(&random_taps(3, &mut rng), 10).unwrap();
    let fwd = mm.forward_input(&input).unwrap();
    for (k, z) in fwd.z.iter().enumerate() {
        assert!(fwd.h_i.h().row(k).iter().all(|v| v <= z));
    }
}

#[test]
fn zero_taps_give_zero_activations() {
    let m = tiny_model(Pooling::Att, 4, 5, TaskMode::MultiClass);
    let mut taps = BTreeMap::new();
    taps.insert(2, Tensor::zeros(&[2, 4, 3]));
    taps.insert(3, Tensor::zeros(&[3, 2, 2]));
    let fwd = m.forward_input(&m.psi_input(&taps, 9).unwrap()).unwrap();
    assert_eq!(fwd.h_i.h().max(), 0.0);
    assert!(fwd.z.iter().all(|v| *v == 0.0));

    let arch = InterpreterArch { output_bias_init: 0.25, ..m.arch().clone() };
    let biased = InterpreterModel::new(arch, vec![(2, 2), (3, 3)], m.dictionary().clone(), TaskMode::MultiClass, 3, 7).unwrap();
    let fwd = biased.forward_input(&biased.psi_input(&taps, 9).unwrap()).unwrap();
    assert!(fwd.h_i.h().data().iter().all(|v| (v - 0.25).abs() < 1e-15));
    assert!(fwd.z.iter().all(|v| (v - 0.25).abs() < 1e-12));
}

#[test]
fn missing_tap_is_contract_error() {
    let m = tiny_model(Pooling::Att, 4, 5, TaskMode::MultiClass);
    let mut taps = BTreeMap::new();
    taps.insert(2, Tensor::zeros(&[2, 4, 3]));
    assert!(matches!(m.psi_input(&taps, 9), Err(Error::Contract(_))));
}

#[test]
fn fidelity_loss_examples() {
    assert!(loss_fidelity(&[1.0, 0.0], &[1.0, 0.0], TaskMode::MultiClass).unwrap() < 1e-10);
    assert!((loss_fidelity(&[0.25; 4], &[0.25; 4], TaskMode::MultiClass).unwrap() - 4f64.ln()).abs() < 1e-12);
    let ml = loss_fidelity(&[0.5, 0.5], &[1.0, 0.0], TaskMode::MultiLabel).unwrap();
    assert!((ml - 4f64.ln()).abs() < 1e-12);
    assert!(matches!(loss_fidelity(&[0.5], &[0.5, 0.5], TaskMode::MultiClass), Err(Error::Shape(_))));
}

#[test]
fn nmf_loss_examples() {
    let w = Dictionary::new(Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap(), None).unwrap();
    let x = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
    let h = Activations::new(Matrix::from_rows(&[vec![0.5]]).unwrap()).unwrap();
    assert!((loss_nmf(&h, &x, &w).unwrap() - 0.25).abs() < 1e-15);
    let exact = Activations::new(Matrix::from_rows(&[vec![1.0]]).unwrap()).unwrap();
    assert_eq!(loss_nmf(&exact, &x, &w).unwrap(), 0.0);
    let zero = Activations::new(Matrix::zeros(1, 1)).unwrap();
    assert_eq!(loss_nmf(&zero, &x, &w).unwrap(), x.frobenius_sq());
    let bad = Activations::new(Matrix::zeros(1, 2)).unwrap();
    assert!(matches!(loss_nmf(&bad, &x, &w), Err(Error::Shape(_))));
}

#[test]
fn total_loss_linearity() {
    let m = tiny_model(Pooling::Att, 4, 6, TaskMode::MultiClass);
    let mut rng = SeededRng::new(8);
    let batch: Vec<_> = (0..3).map(|_| example(&m, 8, 6, &mut rng, vec![0.1, 0.8, 0.1])).collect();
    let zero = total_loss(&batch, &m, &LossWeights { alpha: 0.0, beta: 0.0, l1_per_frame: false, nmf_mean: false }).unwrap();
    let fids: f64 = batch
        .iter()
        .map(|e| loss_fidelity(&m.forward_input(&e.psi_input).unwrap().probs, &e.f_probs, TaskMode::MultiClass).unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((zero.total - fids).abs() < 1e-12);
    let a = total_loss(&batch, &m, &LossWeights { alpha: 2.0, beta: 0.5, l1_per_frame: false, nmf_mean: false }).unwrap();
    let b = total_loss(&batch, &m, &LossWeights { alpha: 4.0, beta: 0.5, l1_per_frame: false, nmf_mean: false }).unwrap();
    assert!((b.weighted_nmf - 2.0 * a.weighted_nmf).abs() < 1e-9 * a.weighted_nmf.max(1.0));
    assert!(total_loss(&[], &m, &LossWeights::default()).is_err());
}

#[test]
fn relevance_examples() {
    let fwd = |z: Vec<f64>| InterpreterForward {
        h_i: Activations::new(Matrix::zeros(z.len(), 1)).unwrap(),
        attention: None,
        z,
        logits: vec![],
        probs: vec![],
    };
    let r = relevance(&fwd(vec![2.0, 1.0]), &[0.5, -1.0], 0);
    assert_eq!(r.r, vec![1.0, -1.0]);
    assert!(!r.degenerate);
    let r = relevance(&fwd(vec![0.0, 3.0, 0.0]), &[1.0, -0.2, 4.0], 1);
    assert_eq!(r.r, vec![0.0, -1.0, 0.0]);
    let r = relevance(&fwd(vec![0.0, 0.0]), &[1.0, 1.0], 0);
    assert!(r.degenerate);
    assert_eq!(r.r, vec![0.0, 0.0]);
}

struct Fixture {
    classifier: ClassifierModel,
    model: InterpreterModel,
    signal: AudioSignal,
}

fn fixture() -> Fixture {
    let mel = MelConfig { n_mels: 32, ..MelConfig::default() };
    let classifier = ClassifierModel::new(
        ClassifierArch { channels: vec![2, 3, 3, 4], taps: vec![2, 3, 4] },
        ["a", "b", "c"].map(String::from).to_vec(),
        TaskMode::MultiClass,
        StftConfig::default(),
        mel,
        16000,
        1,
    )
    .unwrap();
    let arch = InterpreterArch { pooling: Pooling::Att, attention_dim: 4, hidden_channels: 4, resize_freq: 4, ..Default::default() };
    let mut model = InterpreterModel::new(arch, vec![(2, 3), (3, 3), (4, 4)], random_dictionary(513, 6, 2), TaskMode::MultiClass, 3, 5).unwrap();
    let mut rng = SeededRng::new(12);
    for t in model.all_params_mut() {
        for v in t.data_mut() {
            *v = 0.5 * rng.normal();
        }
    }
    let signal = AudioSignal::new((0..6000).map(|i| (i as f64 * 0.2).sin() * 0.5 + 0.05 * rng.normal()).collect(), 16000).unwrap();
    Fixture { classifier, model, signal }
}

#[test]
fn mask_partition_and_full_selection() {
    let fx = fixture();
    let a = analyze_sample(&fx.signal, "s", &fx.model, &fx.classifier, None).unwrap();
    let all: Vec<usize> = (0..fx.model.k()).collect();
    let sum = a.masked_sum(&fx.model, &all).unwrap();
    let wh = fx.model.dictionary().w().matmul(a.forward.h_i.h()).unwrap();
    for i in 0..sum.rows() {
        for j in 0..sum.cols() {
            if wh.get(i, j) > MASK_EPSILON {
                assert!((sum.get(i, j) - a.x.values().get(i, j)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn tau_above_max_relevance_gives_silence() {
    let fx = fixture();
    let cfg = InterpretConfig { tau: 1.0, ..Default::default() };
    let res = generate_interpretation(&fx.signal, &fx.model, &fx.classifier, &cfg).unwrap();
    assert!(res.empty_selection);
    assert!(res.x_int.samples.iter().all(|v| *v == 0.0));
    let (ff, x2) = faithfulness_removal(&fx.signal, &fx.model, &fx.classifier, &cfg).unwrap();
    assert!(ff.abs() < 1e-3);
    let err: f64 = x2.samples.iter().zip(&fx.signal.samples).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err < 1e-6 * fx.signal.samples.iter().map(|v| v * v).sum::<f64>().sqrt());
}

#[test]
fn invalid_tau_is_rejected() {
    let fx = fixture();
    let cfg = InterpretConfig { tau: 0.0, ..Default::default() };
    assert!(matches!(generate_interpretation(&fx.signal, &fx.model, &fx.classifier, &cfg), Err(Error::Config(_))));
}

#[test]
fn scaling_theta_row_leaves_interpretation_unchanged() {
    let fx = fixture();
    let cfg = InterpretConfig { tau: 0.1, emit_per_component: true, class: None };
    let base = generate_interpretation(&fx.signal, &fx.model, &fx.classifier, &cfg).unwrap();
    let c = base.relevance.class;
    for lambda in [0.1, 3.0, 100.0] {
        let mut m = fx.model.clone();
        let k = m.k();
        for v in &mut m.theta_weights_mut().data_mut()[c * k..(c + 1) * k] {
            *v *= lambda;
        }
        let cfg_c = InterpretConfig { class: Some(c), ..cfg };
        let res = generate_interpretation(&fx.signal, &m, &fx.classifier, &cfg_c).unwrap();
        assert_eq!(res.selected, base.selected);
        assert_eq!(res.x_int, base.x_int);
        for (a, b) in res.relevance.r.iter().zip(&base.relevance.r) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }
}

#[test]
fn save_load_round_trip_and_dictionary_check() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("interp.l2im");
    fx.model.save(&path).unwrap();
    let back = InterpreterModel::load(&path).unwrap();
    let a = analyze_sample(&fx.signal, "s", &fx.model, &fx.classifier, None).unwrap();
    let b = analyze_sample(&fx.signal, "s", &back, &fx.classifier, None).unwrap();
    assert_eq!(a.forward, b.forward);
    assert!(back.check_dictionary(fx.model.dictionary()).is_ok());
    assert!(matches!(back.check_dictionary(&random_dictionary(513, 6, 99)), Err(Error::Config(_))));
}

#[test]
fn training_keeps_classifier_frozen_and_lowers_fidelity_loss() {
    let mut spec = DatasetSpec::toy4();
    spec.n_train = 24;
    spec.n_test = 4;
    let ds = generate_dataset(&spec).unwrap();
    let ccfg = ClassifierTrainConfig {
        arch: ClassifierArch { channels: vec![2, 3, 3, 4], taps: vec![2, 3, 4] },
        epochs: 2,
        batch_size: 8,
        mel: MelConfig { n_mels: 32, ..MelConfig::default() },
        ..Default::default()
    };
    let (clf, _) = train_classifier(&ds, &ccfg).unwrap();
    let before = clf.hash();
    let cfg = InterpreterTrainConfig {
        arch: InterpreterArch { pooling: Pooling::Max, attention_dim: 4, hidden_channels: 4, resize_freq: 4, ..Default::default() },
        epochs: 4,
        batch_size: 8,
        lr: 1e-2,
        ..Default::default()
    };
    let w = random_dictionary(513, 5, 4);
    let (_, trace) = train_interpreter(&clf, &ds, &w, &LossWeights::default(), &cfg).unwrap();
    assert_eq!(clf.hash(), before);
    assert_eq!(trace.classifier_hash, before);
    assert!(trace.epochs.last().unwrap().loss.fidelity < trace.epochs[0].loss.fidelity);
    let bad = random_dictionary(257, 5, 4);
    assert!(matches!(train_interpreter(&clf, &ds, &bad, &LossWeights::default(), &cfg), Err(Error::Config(_))));
}
