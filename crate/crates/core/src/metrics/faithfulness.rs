use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fidelity::{median, round_half_even};
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::interpreter::{analyze_sample, InterpretConfig, InterpreterModel, SampleAnalysis};
use crate::numerics::SeededRng;
use crate::synthgen::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessEntry {
    pub id: String,
    pub ff: f64,
    pub n_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub per_sample: Vec<FaithfulnessEntry>,
    pub ff_median: f64,
    pub tau: f64,
    /// Components removed per sample by the random baseline.
    pub removed_per_sample: Option<usize>,
    pub baseline: Option<Box<FaithfulnessReport>>,
}

impl FaithfulnessReport {
    fn from_entries(per_sample: Vec<FaithfulnessEntry>, tau: f64, removed: Option<usize>) -> Result<Self> {
        let ff: Vec<f64> = per_sample.iter().map(|e| e.ff).collect();
        Ok(Self { ff_median: median(&ff)?, per_sample, tau, removed_per_sample: removed, baseline: None })
    }

    pub fn mean_removed(&self) -> f64 {
        self.per_sample.iter().map(|e| e.n_removed as f64).sum::<f64>() / self.per_sample.len().max(1) as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<16}{:>10}\n{:<16}{:>10.4}\n", "samples", self.per_sample.len(), "tau", self.tau);
        out += &format!("{:<16}{:>10.4}\n{:<16}{:>10.3}\n", "ff-median", self.ff_median, "mean |L|", self.mean_removed());
        if let Some(b) = &self.baseline {
            out += &format!("{:<16}{:>10.4}\n", "random ff-med", b.ff_median);
            out += &format!("{:<16}{:>10}\n", "random m", b.removed_per_sample.unwrap_or(0));
        }
        out
    }
}

fn analyses(
    samples: &[Sample],
    classifier: &ClassifierModel,
    interpreter: &InterpreterModel,
) -> Result<Vec<SampleAnalysis>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples to evaluate".into()));
    }
    samples.iter().map(|s| analyze_sample(&s.signal, &s.id, interpreter, classifier, None)).collect()
}

/// `FF_x` per sample after removing each sample's selected components.
pub fn faithfulness_suite(
    samples: &[Sample],
    classifier: &ClassifierModel,
    interpreter: &InterpreterModel,
    tau: f64,
) -> Result<FaithfulnessReport> {
    InterpretConfig { tau, ..Default::default() }.validate()?;
    let mut entries = Vec::with_capacity(samples.len());
    for (s, a) in samples.iter().zip(analyses(samples, classifier, interpreter)?) {
        let sel = a.relevance.select(tau);
        let (ff, _) = a.removal(interpreter, classifier, &sel)?;
        entries.push(FaithfulnessEntry { id: s.id.clone(), ff, n_removed: sel.len() });
    }
    FaithfulnessReport::from_entries(entries, tau, None)
}

/// Removes `m = round_half_even(mean |L|)` uniformly drawn components per
/// sample instead of the selected ones.
pub fn random_baseline_faithfulness(
    samples: &[Sample],
    classifier: &ClassifierModel,
    interpreter: &InterpreterModel,
    tau: f64,
    seed: u64,
) -> Result<FaithfulnessReport> {
    InterpretConfig { tau, ..Default::default() }.validate()?;
    let all = analyses(samples, classifier, interpreter)?;
    let mean = all.iter().map(|a| a.relevance.select(tau).len() as f64).sum::<f64>() / all.len() as f64;
    let k = interpreter.k();
    let m = (round_half_even(mean) as usize).min(k);
    let mut entries = Vec::with_capacity(samples.len());
    for (s, a) in samples.iter().zip(&all) {
        let mut rng = SeededRng::derive(seed, &s.id);
        let mut comps = rng.sample_indices(k, m);
        comps.sort_unstable();
        let (ff, _) = a.removal(interpreter, classifier, &comps)?;
        entries.push(FaithfulnessEntry { id: s.id.clone(), ff, n_removed: m });
    }
    FaithfulnessReport::from_entries(entries, tau, Some(m))
}

/// CSV of `id, predicted_class, degenerate, r_1..r_K`, one row per sample.
pub fn export_relevances(
    samples: &[Sample],
    classifier: &ClassifierModel,
    interpreter: &InterpreterModel,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "predicted_class".into(), "degenerate".into()];
    header.extend((1..=interpreter.k()).map(|k| format!("r_{k}")));
    w.write_record(&header).map_err(|e| Error::Serialization(e.to_string()))?;
    for a in analyses(samples, classifier, interpreter)? {
        let rel = &a.relevance;
        let mut row = vec![rel.sample_id.clone(), rel.class.to_string(), rel.degenerate.to_string()];
        row.extend(rel.r.iter().map(|v| format!("{v:e}")));
        w.write_record(&row).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}
