//! Synthetic sound-event corpora, corruption protocols and WAV-folder ingestion.

mod folder;
mod generate;
mod spec;

pub use folder::{ingest_wav_folder, ingest_with_classes, write_dataset, LABELS_FILE};
pub use generate::{
    corrupt_with_mix, corrupt_with_noise, generate_dataset, synthesize_event, Dataset, Sample,
};
pub use spec::{ClassSpec, DatasetSpec, EventKind, TaskMode};
