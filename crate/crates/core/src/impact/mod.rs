//! Single-night and multi-night sleep impact analyses.

pub mod effects;
pub mod mwu;
pub mod recovery;

use thiserror::Error;

pub use effects::{duration_effect, timing_effect, BinEffect, EffectRow, EffectTable};
pub use mwu::{mann_whitney_u, MannWhitney, PMethod};
pub use recovery::{
    recovery_analysis, Pattern, RecoveryAccumulator, RecoveryOptions, RecoveryReport, RecoveryRow, Weighting,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ImpactError {
    #[error("empty sample")]
    EmptySample,
    #[error("reference bin `{0}` has no observations")]
    EmptyReference(String),
}
