//! Synthetic cohorts with known ground truth.
//!
//! A cohort is a set of users with sleep schedules and search sessions.
//! Keystroke and click latencies are drawn from the additive model the
//! estimator fits, so fitted curves can be compared level by level with the
//! exported truth.

pub mod config;
pub mod generate;
pub mod schedule;
pub mod truth;
pub mod vocab;

pub use config::{ConfigError, SynthConfig};
pub use generate::{generate_cohort, generate_smooth_variant, Cohort, CohortPlan, CohortSummary, SynthError, UserData};
pub use schedule::UserProfile;
pub use truth::{
    BinnedCurves, ClickOffsets, Couplings, CurveModel, GaugedTruth, GroundTruth, KeyOffsets, NoiseModel, SmoothCurves,
    TruthRow,
};
