//! Local-first developer memory control: normalize a failing context,
//! retrieve and rank stored fixes, decide whether to surface one, and learn
//! from delayed feedback in a shadow policy that never changes the live
//! decision.

// Negated float comparisons reject NaN along with out-of-range values, and
// the macro-built enums cannot carry `#[default]`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::derivable_impls)]

pub mod bandit;
pub mod canonical;
pub mod config;
pub mod engine;
pub mod error;
pub mod features;
pub mod feedback;
pub mod governance;
pub mod linker;
pub mod model;
pub mod normalize;
pub mod ope;
pub mod ranker;
pub mod store;

pub use config::Config;
pub use engine::Engine;
pub use error::{Error, Result};
