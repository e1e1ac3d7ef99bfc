//! Simulation and verification of scale-decorated and shift-decorated Poisson
//! point processes.
//!
//! The scale families sample exactly on an observation window `{|x| > eps}`
//! for decorations with an almost-sure bound on their largest modulus. Shift
//! families are reached through the atomwise `Log` map.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterization;
pub mod error;
pub mod extraction;
pub mod functionals;
pub mod point_measure;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
pub use point_measure::{Atom, IndicatorShape, PiecewiseLinear, PointMeasure, TestFunction};
pub use rng::SeedSpec;
