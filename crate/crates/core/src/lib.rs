//! Leakage-safe binary classification pipeline.
//!
//! The crate covers the whole analysis path for case/control data: loading
//! and cleaning ([`data`]), exploratory statistics ([`explore`]), k-fold
//! partitioning ([`partition`]), training-fold scaling and imputation
//! ([`transform`]), collective feature selection ([`featsel`]), five learners
//! ([`learners`]) tuned by nested cross-validation ([`hpo`]), evaluation and
//! algorithm comparison ([`evalstats`]), model-level and composite feature
//! importance ([`importance`]), and a heterogeneous-epistasis SNP simulator
//! ([`simulate`]). [`pipeline`] ties the stages together and owns the model
//! archive.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Results are identical either way.

pub mod data;
pub mod error;
pub mod evalstats;
pub mod explore;
pub mod featsel;
pub mod hpo;
pub mod importance;
pub mod learners;
pub mod matrix;
pub mod par;
pub mod partition;
pub mod pipeline;
pub mod plot;
pub mod simulate;
pub mod stats;
pub mod transform;

pub use data::{Dataset, FeatureKind, FeatureMeta};
pub use error::{Error, Result};
pub use matrix::Matrix;
