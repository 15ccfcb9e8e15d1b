//! Shape-restricted estimation of product-choice probability tables from
//! clickstream recency/frequency features.
//!
//! The pipeline: ingest view/purchase events ([`features`]), aggregate them
//! into per-category count tensors, fit probability tables under
//! monotonicity or monotonicity-convexity-concavity constraints ([`solver`]),
//! optionally with latent product classes via EM ([`em`]) or the logistic
//! baseline ([`lclr`]), then evaluate top-N purchase predictions ([`eval`]).
//! [`synth`] provides planted-structure generators and the brute-force
//! lattice oracle the test suites verify the solver against.

pub mod em;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod lclr;
pub mod solver;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    check_shape_constraints, ConstraintFamily, CountTensor, GridSpec, LatentClassModel,
    ProbabilityTable, ShapeMode, ShapeTag, ShapeViolation,
};
