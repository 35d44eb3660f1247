//! Multimodal wearable-data pipeline for daily stress classification.
//!
//! Daily per-modality CSV sources are merged into one [`FeatureTable`],
//! cleaned by [`preprocess`], optionally balanced with SMOTE
//! ([`resample`]), classified with a native random forest ([`forest`]),
//! and scored with per-class reports ([`evaluate`]) and importance-based
//! modality rankings ([`ranking`]). [`synthgen`] produces synthetic data in
//! the same schema with a known planted signal, and [`pipeline`] chains the
//! stages into reproducible experiment runs.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod forest;
pub mod ingest;
pub mod pipeline;
pub mod plot;
pub mod preprocess;
pub mod ranking;
pub mod resample;
pub mod synthgen;

pub use dataset::{
    ColumnKind, ColumnSpec, Dataset, FeatureTable, Modality, RecordKey, Row, Stage, StageRecord,
    StressLabel,
};
pub use error::{ForgeError, Result};
