use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use l2i::classifier::{train_classifier, ClassifierModel};
use l2i::dsp::{analyze, save_wav, LogMagSpectrogram};
use l2i::interpreter::{
    generate_interpretation_for, prepare_examples, train_interpreter, InterpreterModel, Pooling, RelevanceVector,
};
use l2i::metrics::{
    export_relevances, faithfulness_suite, multilabel_fidelity, random_baseline_faithfulness, FidelityReport,
};
use l2i::nmf::{build_training_matrix, sparse_nmf, staged_dictionary_with_report, sweep_k, Dictionary};
use l2i::numerics::{derive_seed, SeededRng};
use l2i::synthgen::{
    corrupt_with_mix, corrupt_with_noise, generate_dataset, ingest_wav_folder, ingest_with_classes, write_dataset,
    Dataset, Sample, TaskMode, LABELS_FILE,
};

use crate::config::{CorruptMode, RunConfig};
use crate::error::CliError;
use crate::manifest::Manifest;

const META_FILE: &str = "dataset.json";
const AUDIO_DIR: &str = "audio";
/// Pseudo-label threshold for multi-label fidelity.
const PSEUDO_LABEL_THRESHOLD: f64 = 0.5;

/// Fixed file names below the work directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { root: cfg.paths.work_dir.clone() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn dictionary(&self) -> PathBuf {
        self.root.join("dictionary.l2im")
    }

    pub fn classifier(&self) -> PathBuf {
        self.root.join("classifier.l2im")
    }

    pub fn interpreter(&self, p: Pooling) -> PathBuf {
        self.root.join(format!("interpreter-{}.l2im", pooling_name(p)))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    fn ensure_root(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.root).map_err(|e| CliError::io(&self.root, e))
    }
}

pub fn pooling_name(p: Pooling) -> &'static str {
    match p {
        Pooling::Att => "att",
        Pooling::Max => "max",
    }
}

/// Sidecar describing a dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub class_names: Vec<String>,
    pub mode: TaskMode,
    /// Nominal frequency band per class, when known.
    pub bands: Option<Vec<(f64, f64)>>,
    pub source: String,
}

fn write_data_dir(ds: &Dataset, meta: &DatasetMeta, dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.join(META_FILE).exists() {
            return Err(CliError::Runtime(format!(
                "{} exists and is not a dataset directory; refusing to overwrite",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_dataset(ds, dir)?;
    write_json(&dir.join(META_FILE), meta)
}

pub fn load_data_dir(dir: &Path) -> Result<(Dataset, DatasetMeta), CliError> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.exists() {
        return Err(CliError::Runtime(format!(
            "{} is not a dataset directory (run gen-data or ingest first)",
            dir.display()
        )));
    }
    let meta: DatasetMeta = read_json(&meta_path)?;
    let ds = ingest_with_classes(dir.join(AUDIO_DIR), dir.join(LABELS_FILE), meta.mode, Some(&meta.class_names))?;
    Ok((ds, meta))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("invalid {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn require(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} not found ({hint})", path.display())))
    }
}

fn dir_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

fn finish(layout: &Layout, manifest: Manifest) -> Result<(), CliError> {
    let path = manifest.write(&layout.root)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

pub fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let mut manifest = Manifest::new("gen-data", cfg);
    let ds = generate_dataset(&cfg.dataset.spec)?;
    let meta = DatasetMeta {
        class_names: ds.class_names.clone(),
        mode: ds.mode,
        bands: Some(cfg.dataset.spec.classes.iter().map(|c| c.band).collect()),
        source: format!("generated:{}", cfg.dataset.preset),
    };
    let dir = layout.data();
    write_data_dir(&ds, &meta, &dir)?;
    println!(
        "generated {} train / {} test clips ({} classes, {}) in {}",
        ds.train.len(),
        ds.test.len(),
        ds.n_classes(),
        mode_name(ds.mode),
        dir.display()
    );
    manifest.output(&layout.root, &dir)?;
    finish(&layout, manifest)
}

pub fn ingest(cfg: &RunConfig, audio_dir: &Path, labels: &Path, mode: TaskMode) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let mut manifest = Manifest::new("ingest", cfg);
    manifest.input(&layout.root, audio_dir)?;
    manifest.input(&layout.root, labels)?;
    let ds = ingest_wav_folder(audio_dir, labels, mode)?;
    let meta = DatasetMeta {
        class_names: ds.class_names.clone(),
        mode,
        bands: None,
        source: format!("ingested:{}", audio_dir.display()),
    };
    let dir = layout.data();
    write_data_dir(&ds, &meta, &dir)?;
    println!(
        "ingested {} train / {} test clips ({} classes) into {}",
        ds.train.len(),
        ds.test.len(),
        ds.n_classes(),
        dir.display()
    );
    manifest.output(&layout.root, &dir)?;
    finish(&layout, manifest)
}

fn mode_name(mode: TaskMode) -> &'static str {
    match mode {
        TaskMode::MultiClass => "multi-class",
        TaskMode::MultiLabel => "multi-label",
    }
}

#[derive(Serialize)]
struct DictionaryReport {
    k: usize,
    staged: bool,
    training_columns: usize,
    final_objective: Option<f64>,
    iterations: Option<usize>,
    w_fallbacks: Option<usize>,
    staged_report: Option<l2i::nmf::StagedReport>,
    component_labels: Option<Vec<String>>,
}

#[derive(Serialize)]
struct SweepReport {
    training_columns: usize,
    objectives: Vec<(usize, f64)>,
}

pub fn learn_dict(cfg: &RunConfig, staged: bool, sweep: &[usize]) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let data = layout.data();
    let (ds, _) = load_data_dir(&data)?;
    let mut manifest = Manifest::new("learn-dict", cfg);
    manifest.input(&layout.root, &data)?;
    if ds.train.is_empty() {
        return Err(CliError::Runtime("training split is empty".into()));
    }
    let specs = ds
        .train
        .iter()
        .map(|s| Ok(analyze(&s.signal, &cfg.stft)?.0))
        .collect::<Result<Vec<LogMagSpectrogram>, CliError>>()?;
    let all: Vec<&LogMagSpectrogram> = specs.iter().collect();
    let xt = build_training_matrix(&all, cfg.nmf.chunk)?;
    let nmf = cfg.sparse_nmf();

    if !sweep.is_empty() {
        let objectives = sweep_k(&xt, &nmf, sweep)?;
        let mut text = format!("{:>6}{:>18}\n", "K", "final objective");
        for (k, obj) in &objectives {
            text += &format!("{k:>6}{obj:>18.6}\n");
        }
        print!("{text}");
        let json = layout.reports().join("sweep-k.json");
        let txt = layout.reports().join("sweep-k.txt");
        write_json(&json, &SweepReport { training_columns: xt.x_train.cols(), objectives })?;
        write_text(&txt, &text)?;
        manifest.output(&layout.root, &json)?;
        manifest.output(&layout.root, &txt)?;
        return finish(&layout, manifest);
    }

    let (dictionary, report) = if staged {
        let negatives: Vec<&LogMagSpectrogram> =
            ds.train.iter().zip(&specs).filter(|(s, _)| s.positives().is_empty()).map(|(_, x)| x).collect();
        if negatives.is_empty() {
            return Err(CliError::Runtime(
                "staged dictionary needs background-only training clips (all-zero labels)".into(),
            ));
        }
        let neg = build_training_matrix(&negatives, cfg.nmf.chunk)?;
        let mut per_class = Vec::new();
        for (c, name) in ds.class_names.iter().enumerate() {
            let members: Vec<&LogMagSpectrogram> =
                ds.train.iter().zip(&specs).filter(|(s, _)| s.positives().contains(&c)).map(|(_, x)| x).collect();
            if members.is_empty() {
                return Err(CliError::Runtime(format!("class '{name}' has no training clips")));
            }
            per_class.push((name.clone(), build_training_matrix(&members, cfg.nmf.chunk)?));
        }
        let (d, sr) = staged_dictionary_with_report(&neg, &per_class, &cfg.staged(), &nmf)?;
        let report = DictionaryReport {
            k: d.k(),
            staged: true,
            training_columns: xt.x_train.cols(),
            final_objective: None,
            iterations: None,
            w_fallbacks: None,
            staged_report: Some(sr),
            component_labels: d.component_labels().map(|l| l.to_vec()),
        };
        (d, report)
    } else {
        let run = sparse_nmf(&xt, &nmf, &[], None)?;
        let report = DictionaryReport {
            k: run.dictionary.k(),
            staged: false,
            training_columns: xt.x_train.cols(),
            final_objective: Some(run.final_objective()),
            iterations: Some((run.objective_trace.len() - 1) / 2),
            w_fallbacks: Some(run.w_fallbacks),
            staged_report: None,
            component_labels: None,
        };
        (run.dictionary, report)
    };

    let path = layout.dictionary();
    dictionary.save(&path)?;
    let report_path = layout.reports().join("dictionary.json");
    write_json(&report_path, &report)?;
    println!(
        "dictionary: K={} over {} bins from {} training columns -> {}",
        dictionary.k(),
        dictionary.n_bins(),
        xt.x_train.cols(),
        path.display()
    );
    manifest.output(&layout.root, &path)?;
    manifest.output(&layout.root, &report_path)?;
    finish(&layout, manifest)
}

pub fn train_classifier_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let data = layout.data();
    let (ds, _) = load_data_dir(&data)?;
    let mut manifest = Manifest::new("train-classifier", cfg);
    manifest.input(&layout.root, &data)?;
    let (model, report) = train_classifier(&ds, &cfg.classifier_train())?;
    for e in &report.epochs {
        eprintln!(
            "epoch {:>3}  loss {:.5}  train {}  test {}",
            e.epoch + 1,
            e.train_loss,
            metric(e.train_metric),
            metric(e.test_metric)
        );
    }
    let path = layout.classifier();
    model.save(&path)?;
    let report_path = layout.reports().join("classifier.json");
    write_json(&report_path, &report)?;
    println!("classifier ({}) -> {}", report.metric, path.display());
    manifest.output(&layout.root, &path)?;
    manifest.output(&layout.root, &report_path)?;
    finish(&layout, manifest)
}

pub fn train_interpreter_cmd(cfg: &RunConfig, pooling: Pooling) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let data = layout.data();
    require(&layout.classifier(), "run train-classifier first")?;
    require(&layout.dictionary(), "run learn-dict first")?;
    let (ds, _) = load_data_dir(&data)?;
    let classifier = ClassifierModel::load(layout.classifier())?;
    let dictionary = Dictionary::load(layout.dictionary())?;
    let mut manifest = Manifest::new("train-interpreter", cfg);
    manifest.input(&layout.root, &data)?;
    manifest.input(&layout.root, &layout.classifier())?;
    manifest.input(&layout.root, &layout.dictionary())?;
    let (model, trace) =
        train_interpreter(&classifier, &ds, &dictionary, &cfg.loss_weights(), &cfg.interpreter_train(pooling))?;
    for e in &trace.epochs {
        let l = &e.loss;
        eprintln!(
            "epoch {:>3}  total {:.4}  fid {:.5}  nmf {:.4}  l1 {:.4}  val-fid {}",
            e.epoch + 1,
            l.total,
            l.fidelity,
            l.weighted_nmf,
            l.weighted_l1,
            metric(e.validation_fidelity)
        );
    }
    let path = layout.interpreter(pooling);
    model.save(&path)?;
    let trace_path = layout.reports().join(format!("interpreter-{}-trace.json", pooling_name(pooling)));
    write_json(&trace_path, &trace)?;
    println!("interpreter ({}, K={}) -> {}", pooling_name(pooling), model.k(), path.display());
    manifest.output(&layout.root, &path)?;
    manifest.output(&layout.root, &trace_path)?;
    finish(&layout, manifest)
}

struct Trained {
    classifier: ClassifierModel,
    interpreter: InterpreterModel,
}

fn load_trained(layout: &Layout, pooling: Pooling, manifest: &mut Manifest) -> Result<Trained, CliError> {
    let ipath = layout.interpreter(pooling);
    require(&layout.classifier(), "run train-classifier first")?;
    require(&ipath, "run train-interpreter first")?;
    manifest.input(&layout.root, &layout.classifier())?;
    manifest.input(&layout.root, &ipath)?;
    Ok(Trained { classifier: ClassifierModel::load(layout.classifier())?, interpreter: InterpreterModel::load(&ipath)? })
}

/// Test split of `data` (default: the work directory's dataset).
fn evaluation_samples(
    layout: &Layout,
    data: Option<&Path>,
    manifest: &mut Manifest,
) -> Result<(PathBuf, Vec<Sample>), CliError> {
    let dir = data.map(Path::to_path_buf).unwrap_or_else(|| layout.data());
    let (ds, _) = load_data_dir(&dir)?;
    manifest.input(&layout.root, &dir)?;
    if ds.test.is_empty() {
        return Err(CliError::Runtime(format!("{} has no test clips", dir.display())));
    }
    Ok((dir, ds.test))
}

#[derive(Serialize)]
struct InterpretationRecord {
    id: String,
    predicted_class: String,
    probs: Vec<f64>,
    interpreter_probs: Vec<f64>,
    selected: Vec<usize>,
    empty_selection: bool,
    relevance: RelevanceVector,
}

pub fn interpret(cfg: &RunConfig, data: Option<&Path>, limit: Option<usize>) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let pooling = cfg.interpreter.pooling;
    let mut manifest = Manifest::new("interpret", cfg);
    let trained = load_trained(&layout, pooling, &mut manifest)?;
    let (dir, mut samples) = evaluation_samples(&layout, data, &mut manifest)?;
    if let Some(n) = limit {
        samples.truncate(n);
    }
    let out = layout.root.join("interpretations").join(format!("{}-{}", dir_name(&dir), pooling_name(pooling)));
    if out.exists() {
        std::fs::remove_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    }
    let icfg = cfg.interpret_config();
    let names = trained.classifier.class_names().to_vec();
    let mut records = Vec::with_capacity(samples.len());
    for s in &samples {
        let res = generate_interpretation_for(&s.signal, &s.id, &trained.interpreter, &trained.classifier, &icfg)?;
        let sdir = out.join(&s.id);
        std::fs::create_dir_all(&sdir).map_err(|e| CliError::io(&sdir, e))?;
        save_wav(&res.x_int, sdir.join("x_int.wav"))?;
        for (k, sig) in &res.per_component {
            save_wav(sig, sdir.join(format!("component_{k:03}.wav")))?;
        }
        let class = res.relevance.class;
        println!(
            "{:<24} {:<14} |L|={:<3} {:?}",
            s.id,
            names.get(class).map(String::as_str).unwrap_or("?"),
            res.selected.len(),
            res.selected
        );
        records.push(InterpretationRecord {
            id: s.id.clone(),
            predicted_class: names.get(class).cloned().unwrap_or_default(),
            probs: res.probs,
            interpreter_probs: res.interpreter_probs,
            selected: res.selected,
            empty_selection: res.empty_selection,
            relevance: res.relevance,
        });
    }
    write_json(&out.join("relevances.json"), &records)?;
    println!("{} interpretations -> {}", records.len(), out.display());
    manifest.output(&layout.root, &out)?;
    finish(&layout, manifest)
}

fn metric(v: Option<f64>) -> String {
    v.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into())
}

fn snr_label(snr: f64) -> String {
    format!("{snr}").replace('.', "p").replace('-', "m")
}

pub fn corrupt(cfg: &RunConfig, data: Option<&Path>) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let mode = cfg.corrupt.mode;
    let snr = cfg.corrupt.snr_db;
    let src = data.map(Path::to_path_buf).unwrap_or_else(|| layout.data());
    let (ds, meta) = load_data_dir(&src)?;
    let mut manifest = Manifest::new("corrupt", cfg);
    manifest.input(&layout.root, &src)?;
    if ds.test.is_empty() {
        return Err(CliError::Runtime(format!("{} has no test clips", src.display())));
    }
    let test = match mode {
        CorruptMode::Noise => ds
            .test
            .iter()
            .map(|s| corrupt_with_noise(s, snr, derive_seed(cfg.seed, "corrupt-noise")))
            .collect::<Result<Vec<_>, _>>()?,
        CorruptMode::Mix => mix_all(&ds.test, snr, cfg.seed)?,
    };
    let mode_tag = match mode {
        CorruptMode::Noise => "noise",
        CorruptMode::Mix => "mix",
    };
    let corrupted = Dataset { train: vec![], test, class_names: ds.class_names.clone(), mode: ds.mode };
    let dir = layout.root.join(format!("corrupted-{mode_tag}-{}dB", snr_label(snr)));
    let meta = DatasetMeta { source: format!("corrupted:{mode_tag}:{snr}dB:{}", meta.source), ..meta };
    write_data_dir(&corrupted, &meta, &dir)?;
    println!("{} corrupted test clips ({mode_tag}, {snr} dB) -> {}", corrupted.test.len(), dir.display());
    manifest.output(&layout.root, &dir)?;
    finish(&layout, manifest)
}

/// Mixes every clip with a seeded partner sharing none of its positive labels,
/// scaled so that the clip-to-partner power ratio is `snr` dB.
fn mix_all(samples: &[Sample], snr: f64, seed: u64) -> Result<Vec<Sample>, CliError> {
    samples
        .iter()
        .map(|a| {
            let pa = a.positives();
            let partners: Vec<&Sample> = samples
                .iter()
                .filter(|b| b.id != a.id && !b.positives().is_empty() && b.positives().iter().all(|c| !pa.contains(c)))
                .collect();
            if partners.is_empty() {
                return Err(CliError::Runtime(format!("no mixing partner from another class for '{}'", a.id)));
            }
            let mut rng = SeededRng::derive(seed, &format!("corrupt-mix:{}", a.id));
            let b = partners[rng.below(partners.len())];
            let (p_a, p_b) = (a.signal.power(), b.signal.power());
            if !(p_a > 0.0 && p_b > 0.0) {
                return Err(CliError::Runtime(format!("cannot mix silent clips '{}' and '{}'", a.id, b.id)));
            }
            let gain = (p_a / (p_b * 10f64.powf(snr / 10.0))).sqrt();
            Ok(corrupt_with_mix(a, b, gain)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Fidelity,
    Faithfulness,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    Random,
}

pub fn evaluate(cfg: &RunConfig, suite: Suite, baseline: Option<Baseline>, data: Option<&Path>) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let pooling = cfg.interpreter.pooling;
    let mut manifest = Manifest::new("evaluate", cfg);
    let trained = load_trained(&layout, pooling, &mut manifest)?;
    let (dir, samples) = evaluation_samples(&layout, data, &mut manifest)?;
    let out = layout.reports().join(format!("{}-{}", dir_name(&dir), pooling_name(pooling)));

    if matches!(suite, Suite::Fidelity | Suite::All) {
        let examples = prepare_examples(&trained.classifier, &trained.interpreter, &samples)?;
        let f: Vec<Vec<f64>> = examples.iter().map(|e| e.f_probs.clone()).collect();
        let g = examples
            .iter()
            .map(|e| Ok(trained.interpreter.forward_input(&e.psi_input)?.probs))
            .collect::<Result<Vec<_>, CliError>>()?;
        let report = match trained.interpreter.mode() {
            TaskMode::MultiClass => {
                let ks: Vec<usize> = [1, 3, 5].into_iter().filter(|&k| k <= trained.interpreter.n_classes()).collect();
                FidelityReport::multiclass(&f, &g, &ks)?
            }
            TaskMode::MultiLabel => multilabel_fidelity(&f, &g, PSEUDO_LABEL_THRESHOLD)?,
        };
        let text = report.to_text();
        println!("fidelity ({}):\n{text}", pooling_name(pooling));
        let json = out.join("fidelity.json");
        let txt = out.join("fidelity.txt");
        write_json(&json, &report)?;
        write_text(&txt, &text)?;
        manifest.output(&layout.root, &json)?;
        manifest.output(&layout.root, &txt)?;
    }

    if matches!(suite, Suite::Faithfulness | Suite::All) {
        let tau = cfg.interpret.tau;
        let mut report = faithfulness_suite(&samples, &trained.classifier, &trained.interpreter, tau)?;
        if baseline == Some(Baseline::Random) {
            let base = random_baseline_faithfulness(
                &samples,
                &trained.classifier,
                &trained.interpreter,
                tau,
                derive_seed(cfg.seed, "faithfulness-baseline"),
            )?;
            report.baseline = Some(Box::new(base));
        }
        let text = report.to_text();
        println!("faithfulness ({}):\n{text}", pooling_name(pooling));
        let json = out.join("faithfulness.json");
        let txt = out.join("faithfulness.txt");
        write_json(&json, &report)?;
        write_text(&txt, &text)?;
        manifest.output(&layout.root, &json)?;
        manifest.output(&layout.root, &txt)?;
    }
    finish(&layout, manifest)
}

pub fn export_relevances_cmd(cfg: &RunConfig, data: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let layout = Layout::new(cfg);
    layout.ensure_root()?;
    let pooling = cfg.interpreter.pooling;
    let mut manifest = Manifest::new("export-relevances", cfg);
    let trained = load_trained(&layout, pooling, &mut manifest)?;
    let (dir, samples) = evaluation_samples(&layout, data, &mut manifest)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| {
        layout.root.join(format!("relevances-{}-{}.csv", dir_name(&dir), pooling_name(pooling)))
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    export_relevances(&samples, &trained.classifier, &trained.interpreter, &path)?;
    println!("{} relevance rows -> {}", samples.len(), path.display());
    manifest.output(&layout.root, &path)?;
    finish(&layout, manifest)
}
