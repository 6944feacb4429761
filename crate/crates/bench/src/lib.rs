//! Deterministic benchmark suite: case generation, replay in offline,
//! online-shadow and live modes, and run reports.

pub mod case;
pub mod driver;
pub mod error;
pub mod generate;
pub mod replay;
pub mod report;

pub use case::{BenchmarkCase, CaseFile};
pub use error::{BenchError, Result};
pub use generate::generate_benchmark;
pub use replay::{replay, ReplayOptions};
pub use report::{compute_metrics, Mode, RunReport};
