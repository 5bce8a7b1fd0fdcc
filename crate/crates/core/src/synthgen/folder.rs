use std::fs;
use std::path::Path;

use super::{Dataset, Sample, TaskMode};
use crate::dsp::{load_wav, save_wav};
use crate::error::{Error, Result};

/// Name of the label manifest inside a dataset directory.
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, serde::Deserialize)]
struct Row {
    filename: String,
    split: String,
    label: String,
}

/// Loads a folder of WAV files described by a CSV with columns
/// `filename,split,label`.
///
/// Multi-label rows join class names with `;` (an empty label marks a
/// background-only clip). Class indices follow first appearance in the CSV.
pub fn ingest_wav_folder(audio_dir: impl AsRef<Path>, labels_csv: impl AsRef<Path>, mode: TaskMode) -> Result<Dataset> {
    ingest_with_classes(audio_dir, labels_csv, mode, None)
}

/// As [`ingest_wav_folder`] with a fixed class order; labels naming other
/// classes are rejected.
pub fn ingest_with_classes(
    audio_dir: impl AsRef<Path>,
    labels_csv: impl AsRef<Path>,
    mode: TaskMode,
    classes: Option<&[String]>,
) -> Result<Dataset> {
    let audio_dir = audio_dir.as_ref();
    let labels_csv = labels_csv.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(labels_csv)
        .map_err(|e| csv_err(labels_csv, e))?;

    let mut class_names: Vec<String> = classes.map(<[String]>::to_vec).unwrap_or_default();
    let mut rows: Vec<(Row, Vec<usize>)> = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(labels_csv, e))?;
        let names: Vec<&str> = row
            .label
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if mode == TaskMode::MultiClass && names.len() != 1 {
            return Err(Error::Format(format!(
                "'{}': multi-class rows need exactly one label, got '{}'",
                row.filename, row.label
            )));
        }
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            let i = match class_names.iter().position(|c| c == name) {
                Some(i) => i,
                None if classes.is_some() => {
                    return Err(Error::Format(format!("'{}': unknown class '{name}'", row.filename)))
                }
                None => {
                    class_names.push(name.to_string());
                    class_names.len() - 1
                }
            };
            idx.push(i);
        }
        rows.push((row, idx));
    }

    let c = class_names.len();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut rate: Option<u32> = None;
    for (row, idx) in rows {
        let path = audio_dir.join(&row.filename);
        if !path.is_file() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("missing audio file '{}'", row.filename)),
            ));
        }
        let signal = load_wav(&path)?;
        match rate {
            None => rate = Some(signal.sample_rate),
            Some(r) if r != signal.sample_rate => {
                return Err(Error::Config(format!(
                    "'{}' is {} Hz but earlier files are {r} Hz",
                    row.filename, signal.sample_rate
                )))
            }
            _ => {}
        }
        let mut label = vec![0.0; c];
        for i in idx {
            label[i] = 1.0;
        }
        let id = Path::new(&row.filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| row.filename.clone());
        let sample = Sample { signal, label, id };
        match row.split.as_str() {
            "train" => train.push(sample),
            "test" => test.push(sample),
            other => {
                return Err(Error::Format(format!(
                    "'{}': unknown split '{other}' (expected train or test)",
                    row.filename
                )))
            }
        }
    }
    if mode == TaskMode::MultiClass && c < 2 {
        return Err(Error::Config("multi-class data needs >= 2 classes".into()));
    }
    Ok(Dataset {
        train,
        test,
        class_names,
        mode,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

/// Writes every clip as float WAV under `dir/audio/` plus `dir/labels.csv`.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let audio = dir.join("audio");
    fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let csv_path = dir.join(LABELS_FILE);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
    w.write_record(["filename", "split", "label"])
        .map_err(|e| csv_err(&csv_path, e))?;
    for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
        for s in samples {
            let filename = format!("{}.wav", s.id);
            save_wav(&s.signal, audio.join(&filename))?;
            let label = s
                .positives()
                .iter()
                .map(|&i| ds.class_names[i].as_str())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([filename.as_str(), split, label.as_str()])
                .map_err(|e| csv_err(&csv_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::AudioSignal;

    fn setup(rows: &str, files: &[(&str, u32)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, sr) in files {
            save_wav(&AudioSignal::new(vec![0.25; 100], *sr).unwrap(), dir.path().join(name)).unwrap();
        }
        fs::write(dir.path().join("labels.csv"), format!("filename,split,label\n{rows}")).unwrap();
        dir
    }

    #[test]
    fn two_class_folder() {
        let dir = setup(
            "a.wav,train,dog\nb.wav,train,cat\nc.wav,test,cat\nd.wav,test,dog\n",
            &[("a.wav", 8000), ("b.wav", 8000), ("c.wav", 8000), ("d.wav", 8000)],
        );
        let ds = ingest_wav_folder(dir.path(), dir.path().join("labels.csv"), TaskMode::MultiClass).unwrap();
        assert_eq!(ds.class_names, vec!["dog", "cat"]);
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ds.test[0].label, vec![0.0, 1.0]);
        assert_eq!(ds.test[1].id, "d");
    }

    #[test]
    fn missing_file_named_in_error() {
        let dir = setup("a.wav,train,dog\nghost.wav,train,cat\n", &[("a.wav", 8000)]);
        let err = ingest_wav_folder(dir.path(), dir.path().join("labels.csv"), TaskMode::MultiClass).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("ghost.wav"));
    }

    #[test]
    fn multilabel_row() {
        let dir = setup("a.wav,train,dog;music\nb.wav,test,music\n", &[("a.wav", 8000), ("b.wav", 8000)]);
        let ds = ingest_wav_folder(dir.path(), dir.path().join("labels.csv"), TaskMode::MultiLabel).unwrap();
        assert_eq!(ds.train[0].label, vec![1.0, 1.0]);
        assert_eq!(ds.test[0].label, vec![0.0, 1.0]);
    }

    #[test]
    fn bad_split_and_mixed_rates() {
        let dir = setup("a.wav,valid,dog\n", &[("a.wav", 8000)]);
        let r = ingest_wav_folder(dir.path(), dir.path().join("labels.csv"), TaskMode::MultiLabel);
        assert!(matches!(r, Err(Error::Format(_))));
        let dir = setup("a.wav,train,dog\nb.wav,test,cat\n", &[("a.wav", 8000), ("b.wav", 16000)]);
        let r = ingest_wav_folder(dir.path(), dir.path().join("labels.csv"), TaskMode::MultiClass);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn write_then_ingest_round_trip() {
        let spec = super::super::DatasetSpec { n_train: 4, n_test: 2, ..super::super::DatasetSpec::toy_urban() };
        let ds = super::super::generate_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = ingest_with_classes(
            dir.path().join("audio"),
            dir.path().join(LABELS_FILE),
            TaskMode::MultiLabel,
            Some(&ds.class_names),
        )
        .unwrap();
        assert_eq!(back.class_names, ds.class_names);
        for (a, b) in back.train.iter().zip(&ds.train) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.id, b.id);
            let err = a.signal.samples.iter().zip(&b.signal.samples).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(err < 1e-6);
        }
    }
}
