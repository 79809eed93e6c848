//! Additive piecewise-constant fixed-effects model
//!
//! `y = alpha + sum_f c_f(level_f) + noise`, one coefficient per factor level,
//! with each curve held at count-weighted sum zero. The normal equations are
//! accumulated as sufficient statistics and solved by conjugate gradients.

pub mod binning;
pub mod design;
pub mod export;
pub mod fit;
pub mod solver;
pub mod spec;

pub use binning::BinEdges;
pub use design::{build_design, build_design_par, DesignSystem, DropTally};
pub use fit::{
    fit, fit_with, marginal_means, standard_errors, Coef, Curve, CurvePoint, FitOptions, FitResult, ModelError,
};
pub use spec::{BinOverrides, Factor, FactorKind, FactorValue, ModelSpec};
