//! Column layouts for generated data.

use std::collections::BTreeMap;

use crate::dataset::{ColumnKind, Modality, DATE_COLUMN, PARTICIPANT_COLUMN};
use crate::ingest::{Manifest, ManifestColumn, SourceSpec, TIMESTAMP_COLUMN};

const WEATHER_BASES: [&str; 15] = [
    "temperature",
    "apparent_temperature",
    "dew_point",
    "humidity",
    "pressure",
    "wind_speed",
    "wind_gust",
    "wind_bearing",
    "cloud_cover",
    "uv_index",
    "visibility",
    "precip_intensity",
    "precip_probability",
    "ozone",
    "day_length",
];

const WEATHER_STATS: [&str; 5] = ["min", "max", "mean", "median", "std"];

const ACTIVITY: [&str; 5] = [
    "activity_steps",
    "activity_distance",
    "activity_floors_climbed",
    "activity_active_calories",
    "activity_intensity_minutes",
];

const DAILY: [&str; 22] = [
    "steps",
    "distance",
    "active_seconds",
    "highly_active_seconds",
    "active_kilocalories",
    "bmr_kilocalories",
    "consumed_kilocalories",
    "floors_ascended",
    "floors_descended",
    "intensity_minutes_moderate",
    "intensity_minutes_vigorous",
    "min_heart_rate",
    "max_heart_rate",
    "resting_heart_rate",
    "average_stress",
    "max_stress",
    "stress_duration",
    "rest_stress_duration",
    "activity_stress_duration",
    "low_stress_duration",
    "medium_stress_duration",
    "high_stress_duration",
];

const HR: [&str; 8] = [
    "garmin_hr_min",
    "garmin_hr_max",
    "garmin_hr_median",
    "garmin_hr_mean",
    "garmin_hr_std",
    "hr_resting",
    "hr_sample_num",
    "hr_range",
];

const STRESS_SENSOR: [&str; 8] = [
    "garmin_stress_mean",
    "garmin_stress_max",
    "garmin_stress_rest_duration",
    "garmin_stress_low_duration",
    "garmin_stress_medium_duration",
    "garmin_stress_high_duration",
    "garmin_stress_activity_duration",
    "garmin_stress_qualifier",
];

pub const WAKE_UP_COLUMN: &str = "sleep_wake_up_time";

const SLEEP: [&str; 4] = [
    WAKE_UP_COLUMN,
    "sleep_bed_time",
    "sleep_duration",
    "sleep_deep_duration",
];

const PHONE_BASES: [&str; 25] = [
    "act_still",
    "act_still_ratio",
    "act_walking",
    "act_running",
    "act_in_vehicle",
    "act_on_bike",
    "act_tilting",
    "act_unknown",
    "light_mean",
    "light_mean_std",
    "unlock_num",
    "unlock_duration",
    "screen_on_duration",
    "app_usage_duration",
    "location_entropy",
    "distance_traveled",
    "audio_voice_ratio",
    "call_in_num",
    "call_in_duration",
    "call_in_duration_avg",
    "call_out_num",
    "call_out_duration",
    "call_out_duration_avg",
    "call_miss_num",
    "call_miss_num_ratio",
];

/// Day segments each phone feature is summarised over.
const PHONE_EPISODES: usize = 5;

const HR_WORKDESK_HOME: [&str; 5] = [
    "ave_hr_at_work",
    "ave_hr_at_desk",
    "ave_hr_not_at_work",
    "ave_hr_at_home",
    "time_at_desk",
];

/// Daily survey columns in file order, with their kind.
pub const SURVEY: [(&str, ColumnKind); 15] = [
    ("survey_name", ColumnKind::Feature),
    ("stress", ColumnKind::Target),
    ("anxiety", ColumnKind::ExcludedGroundTruth),
    ("sleep", ColumnKind::ExcludedGroundTruth),
    ("positive_affect", ColumnKind::ExcludedGroundTruth),
    ("negative_affect", ColumnKind::ExcludedGroundTruth),
    ("extraversion", ColumnKind::ExcludedGroundTruth),
    ("agreeableness", ColumnKind::ExcludedGroundTruth),
    ("conscientiousness", ColumnKind::ExcludedGroundTruth),
    ("neuroticism", ColumnKind::ExcludedGroundTruth),
    ("openness", ColumnKind::ExcludedGroundTruth),
    ("total_phone_activity_duration", ColumnKind::ExcludedGroundTruth),
    ("survey_sent_time", ColumnKind::Feature),
    ("survey_start_time", ColumnKind::Feature),
    ("survey_finish_time", ColumnKind::Feature),
];

/// Survey columns that are stable traits of a participant rather than
/// daily answers.
pub const TRAIT_COLUMNS: [&str; 5] = [
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "neuroticism",
    "openness",
];

fn device_keys() -> Vec<ManifestColumn> {
    vec![
        ManifestColumn::key(PARTICIPANT_COLUMN),
        ManifestColumn::key(TIMESTAMP_COLUMN),
        ManifestColumn::key(DATE_COLUMN),
    ]
}

fn source(name: &str, modality: Modality, keys: Vec<ManifestColumn>, features: Vec<String>) -> SourceSpec {
    let mut columns = keys;
    columns.extend(
        features
            .into_iter()
            .map(|f| ManifestColumn::new(f, ColumnKind::Feature)),
    );
    SourceSpec {
        name: name.to_string(),
        file: format!("{name}.csv"),
        modality,
        columns,
    }
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// The nine daily source files of the study layout: weather, activity,
/// daily summary, heart rate, stress sensor, sleep, phone activity,
/// heart rate by place, and the daily survey. 294 declared columns, 267 of
/// them data columns.
pub fn study_manifest() -> Manifest {
    let weather = WEATHER_BASES
        .iter()
        .flat_map(|b| WEATHER_STATS.iter().map(move |s| format!("weather_{b}_{s}")))
        .collect();
    let daily = DAILY.iter().map(|d| format!("daily_{d}")).collect();
    let phone = PHONE_BASES
        .iter()
        .flat_map(|b| (0..PHONE_EPISODES).map(move |e| format!("{b}_ep{e}")))
        .collect();

    let mut survey_columns = device_keys();
    survey_columns.push(ManifestColumn::key("study_day"));
    survey_columns.extend(SURVEY.iter().map(|(n, k)| ManifestColumn::new(*n, *k)));

    let mut manifest = Manifest::new(vec![
        source("weather", Modality::Weather, device_keys(), weather),
        source("activity", Modality::Activity, device_keys(), owned(&ACTIVITY)),
        source("daily", Modality::Daily, device_keys(), daily),
        source("hr", Modality::Hr, device_keys(), owned(&HR)),
        source("stress", Modality::StressSensor, device_keys(), owned(&STRESS_SENSOR)),
        source("sleep", Modality::Sleep, device_keys(), owned(&SLEEP)),
        source("phone_activity", Modality::PhoneActivity, device_keys(), phone),
        source(
            "hr_workdesk_home",
            Modality::HrWorkdeskHome,
            vec![ManifestColumn::key(PARTICIPANT_COLUMN), ManifestColumn::key(DATE_COLUMN)],
            owned(&HR_WORKDESK_HOME),
        ),
        SourceSpec {
            name: "ground_truth".into(),
            file: "ground_truth.csv".into(),
            modality: Modality::GroundTruth,
            columns: survey_columns,
        },
    ]);
    manifest.note = Some("daily study layout, one row per participant and day".into());
    manifest
}

/// Name of the `i`-th generic feature of a modality.
pub fn generic_name(modality: Modality, i: usize) -> String {
    format!("{}_f{i:02}", modality.as_str())
}

/// One source per modality with `n` anonymous features each, plus a survey
/// source holding only the stress label.
pub fn generic_manifest(features_per_modality: &BTreeMap<Modality, usize>) -> Manifest {
    let keys = || vec![ManifestColumn::key(PARTICIPANT_COLUMN), ManifestColumn::key(DATE_COLUMN)];
    let mut sources: Vec<SourceSpec> = features_per_modality
        .iter()
        .filter(|(m, &n)| **m != Modality::GroundTruth && n > 0)
        .map(|(&m, &n)| source(m.as_str(), m, keys(), (0..n).map(|i| generic_name(m, i)).collect()))
        .collect();
    let mut survey = keys();
    survey.push(ManifestColumn::new("stress", ColumnKind::Target));
    let extra = features_per_modality
        .get(&Modality::GroundTruth)
        .copied()
        .unwrap_or(0);
    survey.extend(
        (0..extra).map(|i| ManifestColumn::new(generic_name(Modality::GroundTruth, i), ColumnKind::ExcludedGroundTruth)),
    );
    sources.push(SourceSpec {
        name: "ground_truth".into(),
        file: "ground_truth.csv".into(),
        modality: Modality::GroundTruth,
        columns: survey,
    });
    Manifest::new(sources)
}
