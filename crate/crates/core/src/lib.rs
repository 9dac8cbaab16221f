//! Reference-based trust scores (RETRO) for regression predictions, with
//! parallel-coordinate explanations and an experiment harness.
//!
//! The usual flow: fit or wrap a [`models::Regressor`], build a
//! [`retro::ReferenceSet`] from its training predictions, then score new
//! predictions with [`retro::ReferenceSet::score`]. Low scores flag
//! predictions that sit far from the training data or disagree with the
//! targets of their nearest training rows; [`viz`] draws why.

pub mod data;
pub mod embed;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod retro;
pub mod viz;

pub use data::{Dataset, Matrix, RngSeed};
pub use models::{ModelSpec, Regressor};
pub use retro::{ReferenceSet, RetroConfig, RetroScore};
