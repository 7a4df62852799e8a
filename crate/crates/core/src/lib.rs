//! Random subsets of finite vector spaces `F_q^n` and the patterns they contain.
//!
//! The crate is organised bottom-up:
//!
//! - [`field`]: arithmetic in `GF(q)`, vectors of `F_q^n`, rank and affine dimension.
//! - [`patterns`]: the four pattern families (3-APs, parallelograms, right
//!   triangles, affine `m`-planes), their membership tests, enumerators and the
//!   counting random variables `X` and `Y`.
//! - [`census`]: exact family sizes, Gaussian binomials, intersection classes,
//!   expectations, threshold functions and second-moment diagnostics.
//! - [`sampler`]: reproducible random sets under the Bernoulli and
//!   uniform-cardinality models, plus coupled draws for monotone sweeps.
//! - [`stats`]: Monte Carlo estimates, histograms, Poisson fits and sweeps.
//! - [`extremal`]: deletion-method construction of pattern-free sets.
//! - [`output`]: CSV and JSON documents carrying their run configuration.

pub mod census;
pub mod error;
pub mod extremal;
pub mod field;
pub mod output;
pub mod patterns;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use field::{make_field, FieldCtx, Space, Vector};
pub use patterns::{Caps, Pattern, PatternFamily, PatternKind};
pub use sampler::SampleSet;
