//! Estimation of circadian, homeostatic, sleep-inertia and sleep-duration
//! effects on human performance from search-interaction latencies.
//!
//! The crate is organised as a pipeline:
//!
//! - [`events`] parses raw interaction logs and extracts keystroke and click
//!   latency observations.
//! - [`sleep`] validates time-in-bed records, computes chronotypes and links
//!   each observation to the preceding night.
//! - [`features`] builds confound controls (click entropy, key/position
//!   coding) and within-user z-scores.
//! - [`model`] fits the additive piecewise-constant fixed-effects model.
//! - [`impact`] runs the single-night and multi-night sleep analyses.
//! - [`synth`] generates synthetic cohorts with known ground truth.
//! - [`report`] holds cohort descriptives and SVG rendering.
//! - [`pipeline`] wires the stages together for whole datasets.

pub mod events;
pub mod features;
pub mod impact;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod sleep;
pub mod stats;
pub mod synth;
pub mod time;

pub use events::{ClickObservation, KeyLabel, KeystrokeObservation, RawEvent};
pub use model::{FitResult, ModelSpec};
pub use sleep::{SleepContext, SleepRecord};
