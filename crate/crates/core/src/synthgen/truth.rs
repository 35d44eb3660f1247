use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schema::WAKE_UP_COLUMN;
use super::GeneratorSpec;
use crate::dataset::{Modality, RecordKey};
use crate::error::{ForgeError, Result};
use crate::ingest::Manifest;

pub const SIDECAR_FILE: &str = "truth.json";
const SIDECAR_FORMAT: &str = "stressforge-truth";
const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformativeTruth {
    pub column: String,
    pub modality: Modality,
    pub effect: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub participant_id: String,
    pub date: NaiveDate,
    pub class: u32,
}

/// What the generator planted, written next to the generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSidecar {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub spec: GeneratorSpec,
    pub informative: Vec<InformativeTruth>,
    /// Columns whose spread, not mean, depends on the class.
    pub structural: Vec<String>,
    /// Generating class of every surveyed row, blank answers included.
    pub rows: Vec<TruthRow>,
    pub missing_targets: Vec<RecordKey>,
}

impl GroundTruthSidecar {
    pub(crate) fn new(
        spec: &GeneratorSpec,
        seed: u64,
        manifest: &Manifest,
        rows: Vec<TruthRow>,
        missing_targets: Vec<RecordKey>,
    ) -> Self {
        let tags = manifest.tags();
        let informative = spec
            .informative
            .iter()
            .map(|f| InformativeTruth {
                column: f.column.clone(),
                modality: tags[&f.column],
                effect: f.effect,
                sd: f.sd,
            })
            .collect();
        let structural = if spec.wake_up_narrowing
            && tags.contains_key(WAKE_UP_COLUMN)
            && !spec.informative.iter().any(|f| f.column == WAKE_UP_COLUMN)
        {
            vec![WAKE_UP_COLUMN.to_string()]
        } else {
            Vec::new()
        };
        GroundTruthSidecar {
            format: SIDECAR_FORMAT.into(),
            version: SIDECAR_VERSION,
            seed,
            spec: spec.clone(),
            informative,
            structural,
            rows,
            missing_targets,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| ForgeError::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| ForgeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
        let sidecar: GroundTruthSidecar =
            serde_json::from_str(&text).map_err(|e| ForgeError::json(path, e))?;
        if sidecar.format != SIDECAR_FORMAT || sidecar.version != SIDECAR_VERSION {
            return Err(ForgeError::ModelFormat {
                format: sidecar.format,
                version: sidecar.version,
            });
        }
        Ok(sidecar)
    }

    pub fn informative_columns(&self) -> Vec<String> {
        self.informative.iter().map(|f| f.column.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesEstimate {
    pub accuracy: f64,
    /// 95% normal-approximation interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub informative: Vec<String>,
    /// Distinct modalities of the informative columns, in canonical order.
    pub modalities: Vec<Modality>,
    pub bayes: BayesEstimate,
}

/// Class-conditional density of one generated column.
#[derive(Debug, Clone, Copy)]
struct Component {
    effect: f64,
    sd: f64,
    narrowing: bool,
}

impl Component {
    fn mean(&self, level: f64) -> f64 {
        if self.narrowing {
            0.0
        } else {
            self.effect * level
        }
    }

    fn sd(&self, level: f64) -> f64 {
        if self.narrowing {
            1.0 - 0.15 * level
        } else {
            self.sd
        }
    }
}

fn log_density(x: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return if x == mean { 0.0 } else { f64::NEG_INFINITY };
    }
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln()
}

/// Monte Carlo accuracy of the Bayes-optimal classifier for the generating
/// model: draw a class from the prior and the informative (and structural)
/// columns from their class-conditional Gaussians, classify by maximum
/// posterior, count hits. Rounding and missing cells are ignored.
pub fn bayes_accuracy(sidecar: &GroundTruthSidecar, samples: usize, seed: u64) -> BayesEstimate {
    let prior = &sidecar.spec.class_prior;
    let total: f64 = prior.iter().sum();
    let log_prior: Vec<f64> = prior.iter().map(|p| (p / total).ln()).collect();
    let mut cumulative = prior.clone();
    for i in 1..cumulative.len() {
        cumulative[i] += cumulative[i - 1];
    }
    let mut parts: Vec<Component> = sidecar
        .informative
        .iter()
        .map(|f| Component {
            effect: f.effect,
            sd: f.sd,
            narrowing: false,
        })
        .collect();
    parts.extend(sidecar.structural.iter().map(|_| Component {
        effect: 0.0,
        sd: 1.0,
        narrowing: true,
    }));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut x = vec![0.0; parts.len()];
    for _ in 0..samples {
        let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
        let class = cumulative.iter().position(|&c| u < c).unwrap_or(4);
        for (v, part) in x.iter_mut().zip(&parts) {
            let z: f64 = rng.sample(StandardNormal);
            *v = part.mean(class as f64) + part.sd(class as f64) * z;
        }
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (c, lp) in log_prior.iter().enumerate() {
            let score = lp
                + x.iter()
                    .zip(&parts)
                    .map(|(&v, part)| log_density(v, part.mean(c as f64), part.sd(c as f64)))
                    .sum::<f64>();
            if score > best.0 {
                best = (score, c);
            }
        }
        hits += usize::from(best.1 == class);
    }
    let n = samples.max(1) as f64;
    let p = hits as f64 / n;
    let half = 1.96 * (p * (1.0 - p) / n).sqrt();
    BayesEstimate {
        accuracy: p,
        ci_low: (p - half).max(0.0),
        ci_high: (p + half).min(1.0),
        samples,
    }
}

/// Oracle answers for a generated dataset, with a 100 000-sample Bayes
/// accuracy estimate.
pub fn planted_truth(sidecar: &GroundTruthSidecar) -> PlantedTruth {
    let mut modalities: Vec<Modality> = sidecar.informative.iter().map(|f| f.modality).collect();
    modalities.sort();
    modalities.dedup();
    PlantedTruth {
        informative: sidecar.informative_columns(),
        modalities,
        bayes: bayes_accuracy(sidecar, 100_000, sidecar.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, InformativeFeature};

    fn sidecar(spec: &GeneratorSpec) -> GroundTruthSidecar {
        GroundTruthSidecar::new(spec, 1, &spec.manifest(), Vec::new(), Vec::new())
    }

    #[test]
    fn lists_exactly_the_planted_columns() {
        let spec = GeneratorSpec::planted_benchmark();
        let truth = planted_truth(&sidecar(&spec));
        assert_eq!(truth.informative.len(), 5);
        assert_eq!(truth.modalities, vec![Modality::Sleep, Modality::PhoneActivity]);
    }

    #[test]
    fn noiseless_rule_is_perfectly_predictable() {
        let spec = GeneratorSpec {
            informative: vec![InformativeFeature {
                column: "sleep_duration".into(),
                effect: 1.0,
                sd: 0.0,
            }],
            wake_up_narrowing: false,
            ..GeneratorSpec::study()
        };
        let est = bayes_accuracy(&sidecar(&spec), 2000, 3);
        assert_eq!(est.accuracy, 1.0);
    }

    #[test]
    fn no_signal_gives_majority_rate() {
        let spec = GeneratorSpec {
            informative: Vec::new(),
            wake_up_narrowing: false,
            ..GeneratorSpec::study()
        };
        let est = bayes_accuracy(&sidecar(&spec), 20_000, 3);
        let majority = spec.class_prior.iter().cloned().fold(0.0, f64::max)
            / spec.class_prior.iter().sum::<f64>();
        assert!(est.ci_low <= majority + 0.01 && majority - 0.01 <= est.ci_high);
    }

    #[test]
    fn gaussian_estimate_matches_closed_form() {
        // Two equiprobable classes one sd apart: the Bayes rule thresholds
        // at the midpoint, accuracy Phi(0.5) = 0.691462.
        let spec = GeneratorSpec {
            class_prior: vec![1.0, 1.0, 0.0, 0.0, 0.0],
            informative: vec![InformativeFeature::new("hr_resting", 1.0)],
            wake_up_narrowing: false,
            ..GeneratorSpec::study()
        };
        let est = bayes_accuracy(&sidecar(&spec), 100_000, 9);
        assert!(est.ci_low < 0.691462 && 0.691462 < est.ci_high, "{est:?}");
        assert!(est.ci_high - est.ci_low < 0.01);
    }

    #[test]
    fn sidecar_records_rows_and_structural_columns() {
        let spec = GeneratorSpec {
            participants: 3,
            survey_days: 5,
            missing_target_count: 2,
            ..GeneratorSpec::study()
        };
        let data = generate(&spec, 4).unwrap();
        assert_eq!(data.truth.structural, vec![WAKE_UP_COLUMN.to_string()]);
        assert_eq!(data.truth.missing_targets.len(), 2);
        assert!(data.truth.rows.iter().all(|r| (1..=5).contains(&r.class)));
    }
}
