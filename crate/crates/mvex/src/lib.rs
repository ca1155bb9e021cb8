//! Std companion of `mvex-core`: file formats, the replicated-experiment
//! harness, the self-check suite and the `mvex` command line.

pub mod checks;
pub mod harness;
pub mod io;

pub use mvex_core as core;
