//! Experiment configuration, stored as TOML.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::forest::ForestParams;
use crate::preprocess::{SparsePolicy, Variant};
use crate::resample::{Placement, SmoteParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Resampling {
    None,
    Smote {
        #[serde(default = "default_k")]
        k: usize,
        /// Z-score features for the neighbour search only.
        #[serde(default)]
        standardize: bool,
    },
}

fn default_k() -> usize {
    5
}

impl Default for Resampling {
    fn default() -> Self {
        Resampling::None
    }
}

impl Resampling {
    pub fn smote(k: usize) -> Self {
        Resampling::Smote {
            k,
            standardize: false,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Resampling::None => "imbalanced",
            Resampling::Smote { .. } => "smote",
        }
    }
}

fn default_variant() -> Variant {
    Variant::WithoutPersonality
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_top_k() -> usize {
    20
}

/// One experiment run. Every random choice (split, SMOTE, forest) derives
/// from `seed`; the `seed` inside `[forest]` is ignored by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Stratified split; when unset, on for after-split SMOTE and off
    /// otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratify: Option<bool>,
    #[serde(default)]
    pub smote_placement: Placement,
    /// Length of the importance ranking used for modality scores.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Retrain on this many top-ranked features before evaluating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_select_k: Option<usize>,
    /// Also write SVG charts into the bundle.
    #[serde(default)]
    pub plots: bool,
    #[serde(default)]
    pub resampling: Resampling,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub sparse: SparsePolicy,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        PipelineConfig {
            seed,
            variant: default_variant(),
            test_fraction: default_test_fraction(),
            stratify: None,
            smote_placement: Placement::default(),
            top_k: default_top_k(),
            feature_select_k: None,
            plots: false,
            resampling: Resampling::None,
            forest: ForestParams::default(),
            sparse: SparsePolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ForgeError::Config(m));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail(format!(
                "test_fraction must lie strictly between 0 and 1, got {}",
                self.test_fraction
            ));
        }
        if self.top_k == 0 {
            return fail("top_k must be at least 1".into());
        }
        if self.feature_select_k == Some(0) {
            return fail("feature_select_k must be at least 1".into());
        }
        if let Resampling::Smote { k: 0, .. } = self.resampling {
            return fail("SMOTE k must be at least 1".into());
        }
        if let SparsePolicy::Coverage {
            min_participant_fraction: f,
        } = self.sparse
        {
            if !(0.0..=1.0).contains(&f) {
                return fail(format!("min_participant_fraction must lie in [0, 1], got {f}"));
            }
        }
        self.forest.validate()
    }

    pub fn stratified(&self) -> bool {
        self.stratify.unwrap_or(
            matches!(self.resampling, Resampling::Smote { .. })
                && self.smote_placement == Placement::AfterSplit,
        )
    }

    pub fn smote_params(&self) -> Option<SmoteParams> {
        match self.resampling {
            Resampling::None => None,
            Resampling::Smote { k, standardize } => Some(SmoteParams {
                k,
                target_count: None,
                seed: self.seed,
                standardize,
            }),
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            seed: self.seed,
            ..self.forest.clone()
        }
    }

    /// Short scenario label such as `without_personality-smote`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.variant, self.resampling.label())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| ForgeError::Toml(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ForgeError::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| ForgeError::io(path, e))
    }
}

/// The four runs {without, with personality} x {imbalanced, SMOTE}, in the
/// order without/imbalanced, with/imbalanced, without/SMOTE, with/SMOTE.
/// SMOTE settings come from the base config when it already uses SMOTE.
pub fn scenario_matrix(base: &PipelineConfig) -> Vec<PipelineConfig> {
    let smote = match &base.resampling {
        s @ Resampling::Smote { .. } => s.clone(),
        Resampling::None => Resampling::smote(default_k()),
    };
    let mut out = Vec::with_capacity(4);
    for resampling in [Resampling::None, smote] {
        for variant in [Variant::WithoutPersonality, Variant::WithPersonality] {
            out.push(PipelineConfig {
                variant,
                resampling: resampling.clone(),
                ..base.clone()
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::MaxFeatures;

    #[test]
    fn minimal_file_takes_defaults() {
        let c = PipelineConfig::from_toml("seed = 7").unwrap();
        assert_eq!(c, PipelineConfig::new(7));
        assert_eq!(c.forest.n_estimators, 1000);
        assert!(!c.stratified());
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(PipelineConfig::from_toml("variant = \"with_personality\"").is_err());
    }

    #[test]
    fn full_file_parses() {
        let text = r#"
            seed = 3
            variant = "with_personality"
            test_fraction = 0.25
            smote_placement = "after_split"
            feature_select_k = 107

            [resampling]
            method = "smote"
            k = 3

            [forest]
            n_estimators = 50
            max_features = "all"

            [sparse]
            policy = "coverage"
            min_participant_fraction = 0.5
        "#;
        let c = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(c.resampling, Resampling::smote(3));
        assert_eq!(c.forest.max_features, MaxFeatures::All);
        assert!(c.stratified());
        assert_eq!(c.name(), "with_personality-smote");
    }

    #[test]
    fn zero_test_fraction_is_rejected() {
        let err = PipelineConfig::from_toml("seed = 1\ntest_fraction = 0.0").unwrap_err();
        assert!(matches!(err, ForgeError::Config(_)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("seed = 1\nn_trees = 3").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig::new(11);
        c.resampling = Resampling::smote(4);
        c.feature_select_k = Some(12);
        c.stratify = Some(true);
        c.forest.max_depth = Some(9);
        c.forest.max_features = MaxFeatures::Fixed(6);
        let back = PipelineConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn matrix_has_four_runs_and_propagates_k() {
        let mut base = PipelineConfig::new(1);
        assert_eq!(scenario_matrix(&base).len(), 4);
        base.resampling = Resampling::smote(3);
        let runs = scenario_matrix(&base);
        let names: Vec<String> = runs.iter().map(|r| r.name()).collect();
        assert_eq!(
            names,
            [
                "without_personality-imbalanced",
                "with_personality-imbalanced",
                "without_personality-smote",
                "with_personality-smote"
            ]
        );
        assert!(runs[2..].iter().all(|r| r.resampling == Resampling::smote(3)));
    }
}
