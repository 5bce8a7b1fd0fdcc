use proptest::prelude::*;

use super::*;
use crate::dsp::{AudioSignal, MelConfig, StftConfig};
use crate::error::Error;
use crate::numerics::SeededRng;
use crate::synthgen::{generate_dataset, DatasetSpec, TaskMode};

fn tiny_arch() -> ClassifierArch {
    ClassifierArch { channels: vec![2, 3, 3, 4], taps: vec![2, 3, 4] }
}

fn small_mel() -> MelConfig {
    MelConfig { n_mels: 32, ..MelConfig::default() }
}

fn model(mode: TaskMode) -> ClassifierModel {
    let names = ["a", "b", "c", "d"].map(String::from).to_vec();
    ClassifierModel::new(tiny_arch(), names, mode, StftConfig::default(), small_mel(), 16000, 7).unwrap()
}

fn noise(len: usize, seed: u64) -> AudioSignal {
    let mut rng = SeededRng::new(seed);
    AudioSignal::new((0..len).map(|_| 0.1 * rng.normal()).collect(), 16000).unwrap()
}

#[test]
fn zero_head_gives_uniform_softmax() {
    let out = model(TaskMode::MultiClass).classify(&noise(8000, 1)).unwrap();
    assert!(out.probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
    assert_eq!(out.taps.keys().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
}

#[test]
fn classify_is_bit_identical() {
    let m = model(TaskMode::MultiLabel);
    let s = noise(5000, 2);
    assert_eq!(m.classify(&s).unwrap(), m.classify(&s).unwrap());
}

#[test]
fn sample_rate_mismatch_is_config_error() {
    let s = AudioSignal::new(vec![0.0; 4000], 22050).unwrap();
    assert!(matches!(model(TaskMode::MultiClass).classify(&s), Err(Error::Config(_))));
}

#[test]
fn invalid_taps_are_rejected() {
    let arch = ClassifierArch { channels: vec![2, 2], taps: vec![3] };
    let r = ClassifierModel::new(arch, vec!["a".into()], TaskMode::MultiClass, StftConfig::default(), small_mel(), 16000, 0);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.l2im");
    let mut m = model(TaskMode::MultiClass);
    m.head_mut().params_mut()[0].data_mut()[3] = 0.75;
    m.set_normalization(-3.0, 2.5);
    m.save(&path).unwrap();
    let back = ClassifierModel::load(&path).unwrap();
    assert_eq!(back.hash(), m.hash());
    let s = noise(6000, 3);
    assert_eq!(back.classify(&s).unwrap(), m.classify(&s).unwrap());
}

#[test]
fn perfect_predictions_score_one() {
    let labels = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let e = score_predictions(TaskMode::MultiClass, &labels, &labels).unwrap();
    assert_eq!(e.accuracy, Some(1.0));
    let ml = vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]];
    let e = score_predictions(TaskMode::MultiLabel, &ml, &ml).unwrap();
    assert_eq!(e.macro_auprc, Some(1.0));
}

#[test]
fn uniform_predictions_sit_at_chance() {
    let labels: Vec<Vec<f64>> = (0..400).map(|i| (0..4).map(|c| f64::from(u8::from(c == i % 4))).collect()).collect();
    let probs = vec![vec![0.25; 4]; 400];
    let acc = score_predictions(TaskMode::MultiClass, &probs, &labels).unwrap().accuracy.unwrap();
    assert!((acc - 0.25).abs() < 1e-12);
}

fn tiny_dataset() -> crate::synthgen::Dataset {
    let mut spec = DatasetSpec::toy4();
    spec.n_train = 8;
    spec.n_test = 4;
    generate_dataset(&spec).unwrap()
}

fn tiny_cfg() -> ClassifierTrainConfig {
    ClassifierTrainConfig { arch: tiny_arch(), epochs: 2, batch_size: 4, mel: small_mel(), ..Default::default() }
}

#[test]
fn training_is_deterministic_and_starts_at_ln_c() {
    let ds = tiny_dataset();
    let (a, ra) = train_classifier(&ds, &tiny_cfg()).unwrap();
    let (b, rb) = train_classifier(&ds, &tiny_cfg()).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(ra, rb);
    assert!((ra.initial_loss - 4f64.ln()).abs() < 0.05);
    assert_eq!(ra.epochs.len(), 2);
}

#[test]
fn single_class_multiclass_is_config_error() {
    let mut ds = tiny_dataset();
    ds.class_names.truncate(1);
    assert!(matches!(train_classifier(&ds, &tiny_cfg()), Err(Error::Config(_))));
}

#[test]
fn empty_train_split_is_rejected() {
    let mut ds = tiny_dataset();
    ds.train.clear();
    assert!(matches!(train_classifier(&ds, &tiny_cfg()), Err(Error::EmptyInput(_))));
}

#[test]
fn full_backward_matches_finite_differences_on_head_and_first_conv() {
    let mut m = model(TaskMode::MultiClass);
    let mut rng = SeededRng::new(11);
    for p in m.all_params_mut() {
        for v in p.data_mut() {
            *v += 0.3 * rng.normal();
        }
    }
    let x = m.features(&noise(3000, 4)).unwrap();
    let target = [0.0, 1.0, 0.0, 0.0];
    let loss = |m: &ClassifierModel| classification_loss(TaskMode::MultiClass, &m.forward_features(&x).unwrap().probs, &target).unwrap().0;
    let (out, tape) = m.forward_taped(&x).unwrap();
    let (_, dl) = classification_loss(TaskMode::MultiClass, &out.probs, &target).unwrap();
    let mut grads: Vec<Vec<_>> = m.networks().map(|n| n.zero_grads()).collect();
    m.backward(&tape, &dl, &mut grads).unwrap();
    let analytic: Vec<f64> = grads.iter().flatten().flat_map(|t| t.data().to_vec()).collect();
    let mut worst = 0.0f64;
    let mut offset = 0;
    let n_params = m.all_params_mut().len();
    for p in 0..n_params {
        let len = m.all_params_mut()[p].len();
        for i in (0..len).step_by(7) {
            let orig = m.all_params_mut()[p].data()[i];
            m.all_params_mut()[p].data_mut()[i] = orig + 1e-5;
            let up = loss(&m);
            m.all_params_mut()[p].data_mut()[i] = orig - 1e-5;
            let down = loss(&m);
            m.all_params_mut()[p].data_mut()[i] = orig;
            worst = worst.max(crate::net::relative_error(analytic[offset + i], (up - down) / 2e-5));
        }
        offset += len;
    }
    assert!(worst < 1e-4, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn tap_time_axes_follow_pooling_arithmetic(len in 600usize..20000) {
        let m = model(TaskMode::MultiClass);
        let out = m.classify(&noise(len, len as u64)).unwrap();
        let frames = StftConfig::default().frame_count(len);
        for (&b, t) in &out.taps {
            let expect = (0..b).fold(frames, |acc, _| acc.div_ceil(POOL));
            prop_assert_eq!(t.shape()[2], expect);
            prop_assert_eq!(t.shape(), &m.arch().tap_shape(b, 32, frames)[..]);
        }
    }
}
