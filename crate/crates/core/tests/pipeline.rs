//! Small end-to-end run through the public API, including model persistence.

use l2i::classifier::{train_classifier, ClassifierArch, ClassifierModel, ClassifierTrainConfig};
use l2i::dsp::{analyze, StftConfig};
use l2i::interpreter::{
    generate_interpretation_for, train_interpreter, InterpretConfig, InterpreterModel, InterpreterTrainConfig,
    LossWeights,
};
use l2i::metrics::{export_relevances, faithfulness_suite};
use l2i::nmf::{build_training_matrix, sparse_nmf, Dictionary, SparseNmfConfig};
use l2i::synthgen::{generate_dataset, ingest_with_classes, write_dataset, Dataset, DatasetSpec, LABELS_FILE};

fn tiny_dataset() -> Dataset {
    let spec = DatasetSpec { n_train: 12, n_test: 4, seed: 3, ..DatasetSpec::toy4() };
    generate_dataset(&spec).unwrap()
}

fn trained(ds: &Dataset) -> (ClassifierModel, InterpreterModel) {
    let specs: Vec<_> = ds.train.iter().map(|s| analyze(&s.signal, &StftConfig::default()).unwrap().0).collect();
    let xt = build_training_matrix(&specs.iter().collect::<Vec<_>>(), 5).unwrap();
    let nmf = SparseNmfConfig { k: 6, max_iters: 20, ..Default::default() };
    let dict = sparse_nmf(&xt, &nmf, &[], None).unwrap().dictionary;
    let ccfg = ClassifierTrainConfig {
        arch: ClassifierArch { channels: vec![2, 2, 2, 2], ..Default::default() },
        epochs: 1,
        batch_size: 6,
        ..Default::default()
    };
    let (clf, _) = train_classifier(ds, &ccfg).unwrap();
    let icfg = InterpreterTrainConfig { epochs: 1, batch_size: 6, ..Default::default() };
    let (interp, trace) = train_interpreter(&clf, ds, &dict, &LossWeights::default(), &icfg).unwrap();
    assert_eq!(trace.dictionary_hash, dict.hash());
    assert_eq!(trace.classifier_hash, clf.hash());
    (clf, interp)
}

#[test]
fn saved_models_reproduce_interpretations() {
    let ds = tiny_dataset();
    let (clf, interp) = trained(&ds);
    let dir = tempfile::tempdir().unwrap();
    clf.save(dir.path().join("c.l2im")).unwrap();
    interp.save(dir.path().join("i.l2im")).unwrap();
    interp.dictionary().save(dir.path().join("d.l2im")).unwrap();
    let clf2 = ClassifierModel::load(dir.path().join("c.l2im")).unwrap();
    let interp2 = InterpreterModel::load(dir.path().join("i.l2im")).unwrap();
    let dict2 = Dictionary::load(dir.path().join("d.l2im")).unwrap();
    assert_eq!(clf2.hash(), clf.hash());
    assert_eq!(dict2.hash(), interp.dictionary().hash());

    let cfg = InterpretConfig { emit_per_component: true, ..Default::default() };
    for s in &ds.test {
        let a = generate_interpretation_for(&s.signal, &s.id, &interp, &clf, &cfg).unwrap();
        let b = generate_interpretation_for(&s.signal, &s.id, &interp2, &clf2, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x_int.len(), s.signal.len());
        assert_eq!(a.per_component.keys().copied().collect::<Vec<_>>(), a.selected);
    }

    let report = faithfulness_suite(&ds.test, &clf2, &interp2, 0.1).unwrap();
    assert_eq!(report.per_sample.len(), ds.test.len());
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    export_relevances(&ds.test, &clf, &interp, &csv_a).unwrap();
    export_relevances(&ds.test, &clf2, &interp2, &csv_b).unwrap();
    assert_eq!(std::fs::read(csv_a).unwrap(), std::fs::read(csv_b).unwrap());
}

#[test]
fn written_dataset_ingests_back_unchanged() {
    let ds = tiny_dataset();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = ingest_with_classes(
        dir.path().join("audio"),
        dir.path().join(LABELS_FILE),
        ds.mode,
        Some(&ds.class_names),
    )
    .unwrap();
    assert_eq!(back.class_names, ds.class_names);
    assert_eq!(back.train.len(), ds.train.len());
    for (a, b) in ds.train.iter().chain(&ds.test).zip(back.train.iter().chain(&back.test)) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.signal.sample_rate, b.signal.sample_rate);
        let err = a.signal.samples.iter().zip(&b.signal.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{}: {err}", a.id);
    }
}
