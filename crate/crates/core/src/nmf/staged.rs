use serde::{Deserialize, Serialize};

use super::{sparse_nmf, Dictionary, DictTrainingMatrix, SparseNmfConfig};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{derive_seed, Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StagedConfig {
    pub k_noise: usize,
    pub k_per_class: usize,
    /// Prepend the shared noise components to the stacked class components.
    pub include_noise: bool,
}

impl Default for StagedConfig {
    fn default() -> Self {
        Self {
            k_noise: 10,
            k_per_class: 10,
            include_noise: false,
        }
    }
}

/// Final objectives of the factorisations run by [`staged_dictionary_with_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedReport {
    pub noise_objective: f64,
    pub class_objectives: Vec<(String, f64)>,
}

/// Two-stage dictionary: noise components learnt on label-free clips, then per
/// class `k_per_class` new components learnt next to the frozen noise block.
///
/// Classes are processed in slice order and their blocks stacked in that
/// order. Labels are `"noise"` or the class name.
pub fn staged_dictionary(
    negatives: &DictTrainingMatrix,
    per_class: &[(String, DictTrainingMatrix)],
    staged: &StagedConfig,
    cfg: &SparseNmfConfig,
) -> Result<Dictionary> {
    staged_dictionary_with_report(negatives, per_class, staged, cfg).map(|(d, _)| d)
}

pub fn staged_dictionary_with_report(
    negatives: &DictTrainingMatrix,
    per_class: &[(String, DictTrainingMatrix)],
    staged: &StagedConfig,
    cfg: &SparseNmfConfig,
) -> Result<(Dictionary, StagedReport)> {
    if negatives.x_train.cols() == 0 {
        return Err(Error::EmptyInput("no negative frames for the noise dictionary".into()));
    }
    if staged.k_noise == 0 {
        return Err(Error::Config("k_noise must be >= 1".into()));
    }
    let f = negatives.x_train.rows();
    if let Some((name, _)) = per_class.iter().find(|(_, m)| m.x_train.rows() != f) {
        return Err(shape_err!("class '{name}' has a different bin count"));
    }

    let noise_cfg = SparseNmfConfig {
        k: staged.k_noise,
        seed: derive_seed(cfg.seed, "noise"),
        ..cfg.clone()
    };
    let noise_run = sparse_nmf(negatives, &noise_cfg, &[], None)?;
    let mut report = StagedReport {
        noise_objective: noise_run.final_objective(),
        class_objectives: Vec::new(),
    };
    let w_noise = noise_run.dictionary;

    let mut blocks: Vec<Matrix> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    if staged.include_noise {
        blocks.push(w_noise.w().clone());
        labels.extend(std::iter::repeat_n("noise".to_string(), staged.k_noise));
    }

    if staged.k_per_class > 0 {
        let k = staged.k_noise + staged.k_per_class;
        let fixed: Vec<usize> = (0..staged.k_noise).collect();
        for (name, xt) in per_class {
            let seed = derive_seed(cfg.seed, name);
            let mut rng = SeededRng::new(seed);
            let fresh = Matrix::from_fn(f, staged.k_per_class, |_, _| rng.uniform_open0());
            let init = Dictionary::normalized(Matrix::hcat(&[w_noise.w(), &fresh])?, None)?;
            let class_cfg = SparseNmfConfig {
                k,
                seed,
                ..cfg.clone()
            };
            let run = sparse_nmf(xt, &class_cfg, &fixed, Some(&init))?;
            report.class_objectives.push((name.clone(), run.final_objective()));
            blocks.push(run.dictionary.w().column_range(staged.k_noise, k));
            labels.extend(std::iter::repeat_n(name.clone(), staged.k_per_class));
        }
    }

    if blocks.is_empty() {
        return Err(Error::Config(
            "staged dictionary would be empty: no class components and noise excluded".into(),
        ));
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Ok((Dictionary::new(Matrix::hcat(&refs)?, Some(labels))?, report))
}
