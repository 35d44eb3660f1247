//! Synthetic data in the study's source-file layout with a planted signal.
//!
//! Every surveyed day draws a stress class from the configured prior.
//! Informative columns are Gaussian with mean `effect * (class - 1)` and the
//! configured standard deviation; all other columns are standard normal
//! noise (personality traits are drawn once per participant). Values are
//! rounded to four decimals. Missing data comes from three mechanisms:
//! random blank cells, columns a participant never collected, and a fixed
//! number of blank stress answers.

mod schema;
mod truth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use schema::{generic_manifest, generic_name, study_manifest, SURVEY, TRAIT_COLUMNS, WAKE_UP_COLUMN};
pub use truth::{
    bayes_accuracy, planted_truth, BayesEstimate, GroundTruthSidecar, InformativeTruth,
    PlantedTruth, TruthRow, SIDECAR_FILE,
};

use crate::dataset::{ColumnKind, FeatureTable, Modality, RecordKey, Row};
use crate::error::{ForgeError, Result};
use crate::ingest::{write_source, Manifest, SourceSpec};
use crate::preprocess::SPARSE_COLUMNS;

/// Class counts of the study's cleaned table, used as the default prior.
pub const STUDY_CLASS_COUNTS: [usize; 5] = [10991, 11430, 7935, 1197, 219];

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemaSpec {
    /// The nine-file study layout.
    Study,
    /// One source per modality with anonymous features.
    Generic {
        features_per_modality: BTreeMap<Modality, usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InformativeFeature {
    pub column: String,
    /// Class-mean shift per stress level, in noise standard deviations.
    pub effect: f64,
    #[serde(default = "one")]
    pub sd: f64,
}

fn one() -> f64 {
    1.0
}

impl InformativeFeature {
    pub fn new(column: impl Into<String>, effect: f64) -> Self {
        InformativeFeature {
            column: column.into(),
            effect,
            sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub schema: SchemaSpec,
    pub participants: usize,
    pub survey_days: usize,
    /// Device-only days after the survey period; they never reach the
    /// merged table.
    pub extra_device_days: usize,
    pub start_date: NaiveDate,
    /// Relative class frequencies for stress levels 1..=5.
    pub class_prior: Vec<f64>,
    pub informative: Vec<InformativeFeature>,
    /// Probability that a participant skips a day's survey.
    pub survey_dropout: f64,
    /// Probability that any single feature cell is blank.
    pub missing_cell_rate: f64,
    /// Columns (or column families, matched by `<name>_` prefix) that some
    /// participants never collected.
    pub never_collected: Vec<String>,
    /// Share of participants affected by `never_collected`.
    pub never_collected_fraction: f64,
    /// Number of surveyed rows whose stress answer is left blank.
    pub missing_target_count: usize,
    /// Narrow the wake-up time spread as stress rises, when the column
    /// exists.
    pub wake_up_narrowing: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::study()
    }
}

fn study_prior() -> Vec<f64> {
    let total: usize = STUDY_CLASS_COUNTS.iter().sum();
    STUDY_CLASS_COUNTS
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect()
}

impl GeneratorSpec {
    /// Study layout at desk scale with signal in sleep, phone, heart rate,
    /// stress sensor and the survey's anxiety and affect answers.
    pub fn study() -> Self {
        GeneratorSpec {
            schema: SchemaSpec::Study,
            participants: 100,
            survey_days: 61,
            extra_device_days: 3,
            start_date: NaiveDate::from_ymd_opt(2018, 3, 5).expect("valid date"),
            class_prior: study_prior(),
            informative: vec![
                InformativeFeature::new("sleep_duration", -0.5),
                InformativeFeature::new("sleep_deep_duration", -0.3),
                InformativeFeature::new("unlock_num_ep1", 0.4),
                InformativeFeature::new("app_usage_duration_ep2", 0.3),
                InformativeFeature::new("hr_resting", 0.3),
                InformativeFeature::new("garmin_stress_mean", 0.35),
                InformativeFeature::new("anxiety", 0.8),
                InformativeFeature::new("negative_affect", 0.7),
                InformativeFeature::new("positive_affect", -0.4),
            ],
            survey_dropout: 0.1816,
            missing_cell_rate: 0.02,
            never_collected: SPARSE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            never_collected_fraction: 0.5,
            missing_target_count: 9,
            wake_up_narrowing: true,
        }
    }

    /// 50 anonymous features over five modalities, five of them informative
    /// (three sleep, two phone), with a moderate effect size.
    pub fn planted_benchmark() -> Self {
        let modalities = [
            Modality::Activity,
            Modality::Hr,
            Modality::StressSensor,
            Modality::Sleep,
            Modality::PhoneActivity,
        ];
        GeneratorSpec {
            schema: SchemaSpec::Generic {
                features_per_modality: modalities.iter().map(|&m| (m, 10)).collect(),
            },
            participants: 60,
            survey_days: 30,
            extra_device_days: 0,
            informative: vec![
                InformativeFeature::new(generic_name(Modality::Sleep, 0), 0.6),
                InformativeFeature::new(generic_name(Modality::Sleep, 4), 0.6),
                InformativeFeature::new(generic_name(Modality::Sleep, 7), -0.6),
                InformativeFeature::new(generic_name(Modality::PhoneActivity, 2), 0.6),
                InformativeFeature::new(generic_name(Modality::PhoneActivity, 5), -0.6),
            ],
            survey_dropout: 0.1,
            missing_cell_rate: 0.0,
            never_collected: Vec::new(),
            never_collected_fraction: 0.0,
            missing_target_count: 0,
            wake_up_narrowing: false,
            ..GeneratorSpec::study()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: GeneratorSpec = toml::from_str(text).map_err(|e| ForgeError::Toml(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ForgeError::Toml(e.to_string()))
    }

    pub fn manifest(&self) -> Manifest {
        match &self.schema {
            SchemaSpec::Study => study_manifest(),
            SchemaSpec::Generic {
                features_per_modality,
            } => generic_manifest(features_per_modality),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ForgeError::Generator(m));
        if self.participants == 0 || self.survey_days == 0 {
            return fail("participants and survey_days must be positive".into());
        }
        if self.class_prior.len() != 5 {
            return fail(format!("class_prior needs 5 entries, got {}", self.class_prior.len()));
        }
        if self.class_prior.iter().any(|p| !p.is_finite() || *p < 0.0)
            || self.class_prior.iter().sum::<f64>() <= 0.0
        {
            return fail("class_prior entries must be non-negative with a positive sum".into());
        }
        for (name, v) in [
            ("survey_dropout", self.survey_dropout),
            ("missing_cell_rate", self.missing_cell_rate),
        ] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.never_collected_fraction) {
            return fail("never_collected_fraction must lie in [0, 1]".into());
        }
        let manifest = self.manifest();
        let kinds: BTreeMap<String, ColumnKind> = manifest
            .sources
            .iter()
            .flat_map(|s| s.columns.iter().map(|c| (c.name.clone(), c.kind)))
            .collect();
        let mut seen = BTreeSet::new();
        for f in &self.informative {
            match kinds.get(&f.column) {
                None => return fail(format!("informative feature `{}` is not in the schema", f.column)),
                Some(ColumnKind::Key) | Some(ColumnKind::Target) => {
                    return fail(format!("informative feature `{}` is a key or the target", f.column))
                }
                _ => {}
            }
            if !seen.insert(&f.column) {
                return fail(format!("informative feature `{}` listed twice", f.column));
            }
            if !f.effect.is_finite() || !f.sd.is_finite() || f.sd < 0.0 {
                return fail(format!("informative feature `{}` needs a finite effect and sd >= 0", f.column));
            }
        }
        for name in &self.never_collected {
            if !kinds.keys().any(|c| matches_family(c, name)) {
                return fail(format!("never_collected entry `{name}` matches no column"));
            }
        }
        let surveyed_max = self.participants * self.survey_days;
        if self.missing_target_count > surveyed_max.saturating_sub(self.participants) {
            return fail(format!(
                "missing_target_count {} is too large for {} participants x {} days",
                self.missing_target_count, self.participants, self.survey_days
            ));
        }
        Ok(())
    }
}

fn matches_family(column: &str, family: &str) -> bool {
    column == family
        || column
            .strip_prefix(family)
            .is_some_and(|rest| rest.starts_with('_'))
}

#[derive(Debug, Clone, Copy)]
enum Gen {
    Noise,
    Informative { effect: f64, sd: f64 },
    WakeUp,
    Trait(usize),
    Constant(f64),
    Target,
}

struct SourcePlan {
    gens: Vec<Gen>,
    /// Data columns a participant may never collect.
    family: Vec<bool>,
    survey_only: bool,
}

fn plan(spec: &GeneratorSpec, manifest: &Manifest) -> Vec<SourcePlan> {
    let informative: BTreeMap<&str, &InformativeFeature> = spec
        .informative
        .iter()
        .map(|f| (f.column.as_str(), f))
        .collect();
    manifest
        .sources
        .iter()
        .map(|source| {
            let data: Vec<_> = source.columns.iter().filter(|c| c.kind != ColumnKind::Key).collect();
            let gens = data
                .iter()
                .map(|c| {
                    if c.kind == ColumnKind::Target {
                        Gen::Target
                    } else if let Some(f) = informative.get(c.name.as_str()) {
                        Gen::Informative {
                            effect: f.effect,
                            sd: f.sd,
                        }
                    } else if c.name == WAKE_UP_COLUMN && spec.wake_up_narrowing {
                        Gen::WakeUp
                    } else if let Some(t) = TRAIT_COLUMNS.iter().position(|t| *t == c.name) {
                        Gen::Trait(t)
                    } else if c.name == "survey_name" {
                        Gen::Constant(1.0)
                    } else {
                        Gen::Noise
                    }
                })
                .collect();
            let family = data
                .iter()
                .map(|c| spec.never_collected.iter().any(|f| matches_family(&c.name, f)))
                .collect();
            SourcePlan {
                gens,
                family,
                survey_only: source.columns.iter().any(|c| c.kind == ColumnKind::Target),
            }
        })
        .collect()
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn draw_class(rng: &mut ChaCha8Rng, cumulative: &[f64]) -> u32 {
    let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1) as u32 + 1
}

struct ParticipantData {
    /// Rows per source.
    rows: Vec<Vec<Row>>,
    truth: Vec<TruthRow>,
    /// Index of the survey row that must keep its stress answer, if any.
    protected: Option<usize>,
}

fn participant_id(p: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(3);
    format!("p{p:0width$}")
}

fn generate_participant(
    spec: &GeneratorSpec,
    plans: &[SourcePlan],
    seed: u64,
    p: usize,
) -> ParticipantData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    let id = participant_id(p, spec.participants);
    let mut cumulative = spec.class_prior.clone();
    for i in 1..cumulative.len() {
        cumulative[i] += cumulative[i - 1];
    }

    let traits: Vec<f64> = (0..TRAIT_COLUMNS.len())
        .map(|_| round4(rng.sample(StandardNormal)))
        .collect();
    let lacks_family = rng.random::<f64>() < spec.never_collected_fraction;
    let device_days = spec.survey_days + spec.extra_device_days;
    let surveyed: Vec<bool> = (0..device_days)
        .map(|d| d < spec.survey_days && rng.random::<f64>() >= spec.survey_dropout)
        .collect();
    let classes: Vec<u32> = (0..device_days).map(|_| draw_class(&mut rng, &cumulative)).collect();
    let protected_day = surveyed.iter().position(|&s| s);

    let mut rows: Vec<Vec<Row>> = plans.iter().map(|_| Vec::new()).collect();
    let mut truth = Vec::new();
    for day in 0..device_days {
        let date = spec.start_date + Days::new(day as u64);
        let key = RecordKey::new(id.clone(), date);
        let class = classes[day];
        let level = (class - 1) as f64;
        for (s, plan) in plans.iter().enumerate() {
            if plan.survey_only && !surveyed[day] {
                continue;
            }
            let cells: Vec<Option<f64>> = plan
                .gens
                .iter()
                .zip(&plan.family)
                .map(|(gen, &family)| {
                    let value = match *gen {
                        Gen::Target => return Some(class as f64),
                        Gen::Noise => rng.sample::<f64, _>(StandardNormal),
                        Gen::Informative { effect, sd } => {
                            effect * level + sd * rng.sample::<f64, _>(StandardNormal)
                        }
                        Gen::WakeUp => {
                            (1.0 - 0.15 * level) * rng.sample::<f64, _>(StandardNormal)
                        }
                        Gen::Trait(t) => traits[t],
                        Gen::Constant(c) => c,
                    };
                    let blank = rng.random::<f64>() < spec.missing_cell_rate;
                    if family && lacks_family {
                        None
                    } else if blank && Some(day) != protected_day {
                        None
                    } else {
                        Some(round4(value))
                    }
                })
                .collect();
            rows[s].push(Row::from_cells(key.clone(), cells));
        }
        if surveyed[day] {
            truth.push(TruthRow {
                participant_id: id.clone(),
                date,
                class,
            });
        }
    }
    ParticipantData {
        rows,
        truth,
        protected: protected_day.map(|_| 0),
    }
}

/// Generated source tables, their manifest and the planted ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub manifest: Manifest,
    /// One table per manifest source, in manifest order.
    pub tables: Vec<FeatureTable>,
    pub truth: GroundTruthSidecar,
}

/// Generates every source table. Participants are generated in parallel,
/// each from its own ChaCha8 stream, so the output depends only on the spec
/// and the seed.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<GeneratedData> {
    spec.validate()?;
    let manifest = spec.manifest();
    let plans = plan(spec, &manifest);
    let mut people: Vec<ParticipantData> = (0..spec.participants)
        .into_par_iter()
        .map(|p| generate_participant(spec, &plans, seed, p))
        .collect();

    let survey_source = plans.iter().position(|p| p.survey_only);
    let mut blanked = Vec::new();
    if let Some(s) = survey_source {
        let target_col = plans[s]
            .gens
            .iter()
            .position(|g| matches!(g, Gen::Target))
            .expect("survey source has a target");
        let candidates: Vec<(usize, usize)> = people
            .iter()
            .enumerate()
            .flat_map(|(p, d)| {
                (0..d.rows[s].len())
                    .filter(move |&r| Some(r) != d.protected)
                    .map(move |r| (p, r))
            })
            .collect();
        if spec.missing_target_count > candidates.len() {
            return Err(ForgeError::Generator(format!(
                "only {} survey rows can lose their stress answer, {} requested",
                candidates.len(),
                spec.missing_target_count
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let mut picks = index::sample(&mut rng, candidates.len(), spec.missing_target_count).into_vec();
        picks.sort_unstable();
        for i in picks {
            let (p, r) = candidates[i];
            let row = &mut people[p].rows[s][r];
            row.set(target_col, None);
            blanked.push(row.key.clone());
        }
    }

    let tables = manifest
        .sources
        .iter()
        .enumerate()
        .map(|(s, source)| {
            let rows = people.iter_mut().flat_map(|d| std::mem::take(&mut d.rows[s])).collect();
            FeatureTable::new_unchecked(source.column_specs(), rows)
        })
        .collect();
    let truth = GroundTruthSidecar::new(
        spec,
        seed,
        &manifest,
        people.into_iter().flat_map(|d| d.truth).collect(),
        blanked,
    );
    Ok(GeneratedData {
        manifest,
        tables,
        truth,
    })
}

impl GeneratedData {
    /// Writes the source CSVs, `manifest.json` and the truth sidecar into
    /// `dir` (created if needed). Returns the manifest path.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| ForgeError::io(dir, e))?;
        self.manifest
            .sources
            .par_iter()
            .zip(self.tables.par_iter())
            .try_for_each(|(source, table): (&SourceSpec, &FeatureTable)| {
                write_source(&dir.join(&source.file), source, table)
            })?;
        let manifest_path = dir.join(MANIFEST_FILE);
        self.manifest.save(&manifest_path)?;
        self.truth.save(&dir.join(SIDECAR_FILE))?;
        Ok(manifest_path)
    }
}

/// [`generate`] followed by [`GeneratedData::write_to_dir`].
pub fn generate_to_dir(spec: &GeneratorSpec, seed: u64, dir: &Path) -> Result<PathBuf> {
    generate(spec, seed)?.write_to_dir(dir)
}
