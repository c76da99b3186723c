//! Robust feedback linearization with minimax LQR synthesis.
//!
//! Given an uncertain control-affine plant, the crate
//! 1. feedback-linearizes the nominal model exactly (Lie-derivative chains,
//!    decoupling matrix, tracking diffeomorphism with integral action),
//! 2. bounds the residual uncertainty in transformed coordinates through
//!    mean-value-theorem gradient maximization over an operating box,
//! 3. synthesizes a minimax LQR gain for the resulting Brunovsky model with
//!    structured norm-bounded uncertainty via a game Riccati equation, and
//! 4. simulates the nonlinear closed loop against perturbed plants.
//!
//! Start with [`systems`] for programmatic models or [`modelfile`] for the
//! TOML format; [`pipeline`] drives the full chain end to end.

pub mod error;
pub mod expr;
pub mod linearize;
pub mod model;
pub mod modelfile;
pub mod nm;
pub mod pipeline;
pub mod plot;
pub mod sim;
pub mod synthesis;
pub mod systems;
pub mod uncertainty;

pub use error::{Error, Result};
