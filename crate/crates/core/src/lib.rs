//! Rigorous finite-scale covering computations for quantized shift spaces.
//!
//! The crate provides exact-arithmetic building blocks (dyadic coordinates,
//! certified interval values, big-integer covering counts with certified
//! base-2 log brackets), covering-number solvers with sound lower/upper
//! certificates, finite-scale dimension profiles and conditional profiles,
//! cube waist-inequality checks for multilinear grid maps, block-system
//! covering bounds, and a level-based minimal-subshift construction with
//! structural verification helpers.
//!
//! Every reported bound is certified: lower bounds come from explicit
//! separated families or exact witnesses, upper bounds from explicit covers
//! or closed-form product covers, and all comparisons are exact rational
//! comparisons. Floating point is never used in a decision.

pub mod blocks;
pub mod construction;
pub mod cover;
pub mod error;
pub mod factor;
pub mod geometry;
pub mod numeric;
pub mod profile;
pub mod waist;
pub mod word;

pub use error::{CovdimError, Result};
pub use numeric::{BoundedValue, Rat};
