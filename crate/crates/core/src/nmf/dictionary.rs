use std::path::Path;

use crate::dsp::LogMagSpectrogram;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{find_blob, load_container, save_container, Matrix, TensorBlob};

/// Spectral dictionary `W` (F×K) with non-negative, unit-ℓ2 columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    w: Matrix,
    component_labels: Option<Vec<String>>,
}

impl Dictionary {
    pub fn new(w: Matrix, component_labels: Option<Vec<String>>) -> Result<Self> {
        if w.cols() == 0 {
            return Err(Error::Config("dictionary needs at least one component".into()));
        }
        if w.min() < 0.0 || !w.is_finite() {
            return Err(Error::Contract("dictionary entries must be finite and >= 0".into()));
        }
        if let Some((k, n)) = w
            .column_norms()
            .into_iter()
            .enumerate()
            .find(|(_, n)| (n - 1.0).abs() > 1e-9)
        {
            return Err(Error::Contract(format!("column {k} has norm {n}, expected 1")));
        }
        if let Some(labels) = &component_labels {
            if labels.len() != w.cols() {
                return Err(shape_err!(
                    "{} labels for {} components",
                    labels.len(),
                    w.cols()
                ));
            }
        }
        Ok(Self {
            w,
            component_labels,
        })
    }

    /// Normalises every column of a non-negative matrix; an all-zero column
    /// becomes the uniform unit vector.
    pub fn normalized(mut w: Matrix, component_labels: Option<Vec<String>>) -> Result<Self> {
        normalize_columns(&mut w);
        Self::new(w, component_labels)
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn n_bins(&self) -> usize {
        self.w.rows()
    }

    pub fn k(&self) -> usize {
        self.w.cols()
    }

    pub fn component_labels(&self) -> Option<&[String]> {
        self.component_labels.as_deref()
    }

    pub fn hash(&self) -> String {
        crate::numerics::hash_values([self.w.data()])
    }

    pub fn to_blobs(&self) -> (Vec<TensorBlob>, serde_json::Value) {
        (
            vec![TensorBlob::from_matrix("w", &self.w)],
            serde_json::json!({
                "kind": "dictionary",
                "component_labels": self.component_labels,
            }),
        )
    }

    pub fn from_blobs(blobs: &[TensorBlob], meta: &serde_json::Value) -> Result<Self> {
        let w = find_blob(blobs, "w")?.to_matrix()?;
        let labels = meta
            .get("component_labels")
            .filter(|v| !v.is_null())
            .map(|v| serde_json::from_value::<Vec<String>>(v.clone()))
            .transpose()
            .map_err(|e| Error::Format(format!("bad component labels: {e}")))?;
        Self::new(w, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (blobs, meta) = self.to_blobs();
        save_container(&blobs, &meta, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (blobs, meta) = load_container(path)?;
        Self::from_blobs(&blobs, &meta)
    }
}

pub(crate) fn normalize_columns(w: &mut Matrix) {
    let norms = w.column_norms();
    let rows = w.rows();
    for r in 0..rows {
        for (v, n) in w.row_mut(r).iter_mut().zip(&norms) {
            *v = if *n > 0.0 { *v / n } else { 1.0 / (rows as f64).sqrt() };
        }
    }
}

/// Time activations `H` (K×T), non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    h: Matrix,
}

impl Activations {
    pub fn new(h: Matrix) -> Result<Self> {
        if h.min() < 0.0 || !h.is_finite() {
            return Err(Error::Contract("activations must be finite and >= 0".into()));
        }
        Ok(Self { h })
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn into_matrix(self) -> Matrix {
        self.h
    }
}

/// Dictionary training data: chunk-averaged, concatenated log-magnitude frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DictTrainingMatrix {
    pub x_train: Matrix,
    pub chunk: usize,
}

/// Averages each spectrogram's frames over non-overlapping windows of `chunk`
/// (a shorter trailing window is averaged on its own) and concatenates the
/// results column-wise.
pub fn build_training_matrix(samples: &[&LogMagSpectrogram], chunk: usize) -> Result<DictTrainingMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no spectrograms for the training matrix".into()));
    }
    if chunk == 0 {
        return Err(Error::Config("chunk must be >= 1".into()));
    }
    let f = samples[0].n_bins();
    if let Some(bad) = samples.iter().find(|s| s.n_bins() != f) {
        return Err(shape_err!("spectrogram has {} bins, expected {f}", bad.n_bins()));
    }
    let total: usize = samples.iter().map(|s| s.n_frames().div_ceil(chunk)).sum();
    let mut x = Matrix::zeros(f, total);
    let mut col = 0;
    for s in samples {
        let v = s.values();
        for start in (0..s.n_frames()).step_by(chunk) {
            let end = (start + chunk).min(s.n_frames());
            let n = (end - start) as f64;
            for r in 0..f {
                let mean = v.row(r)[start..end].iter().sum::<f64>() / n;
                x.set(r, col, mean);
            }
            col += 1;
        }
    }
    Ok(DictTrainingMatrix { x_train: x, chunk })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(f: usize, t: usize, fill: impl Fn(usize, usize) -> f64) -> LogMagSpectrogram {
        LogMagSpectrogram::new(Matrix::from_fn(f, t, fill)).unwrap()
    }

    #[test]
    fn chunk_one_is_concatenation() {
        let a = spec(3, 4, |r, c| (r + c) as f64);
        let b = spec(3, 2, |r, c| (r * c) as f64);
        let m = build_training_matrix(&[&a, &b], 1).unwrap();
        assert_eq!(m.x_train, Matrix::hcat(&[a.values(), b.values()]).unwrap());
    }

    #[test]
    fn constant_columns_average_to_two() {
        let a = spec(4, 10, |r, _| r as f64 + 0.5);
        let m = build_training_matrix(&[&a], 5).unwrap();
        assert_eq!(m.x_train.cols(), 2);
        assert_eq!(m.x_train.column(0), m.x_train.column(1));
        assert_eq!(m.x_train.column(0), vec![0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn remainder_chunks_are_kept() {
        let a = spec(2, 7, |_, c| c as f64);
        let b = spec(2, 5, |_, _| 1.0);
        let m = build_training_matrix(&[&a, &b], 5).unwrap();
        assert_eq!(m.x_train.cols(), 3);
        assert_eq!(m.x_train.get(0, 1), 5.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_training_matrix(&[], 5), Err(Error::EmptyInput(_))));
        let a = spec(2, 3, |_, _| 0.0);
        let b = spec(3, 3, |_, _| 0.0);
        assert!(matches!(build_training_matrix(&[&a, &b], 5), Err(Error::Shape(_))));
    }

    #[test]
    fn dictionary_round_trip_keeps_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.l2im");
        let d = Dictionary::normalized(
            Matrix::from_fn(5, 2, |r, c| (r + c + 1) as f64),
            Some(vec!["noise".into(), "tone".into()]),
        )
        .unwrap();
        d.save(&p).unwrap();
        assert_eq!(Dictionary::load(&p).unwrap(), d);
    }

    #[test]
    fn dictionary_rejects_non_unit_columns() {
        assert!(Dictionary::new(Matrix::filled(2, 1, 1.0), None).is_err());
    }
}
