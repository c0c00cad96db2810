//! Convergence-study harness for multi-index stochastic collocation: study
//! configuration, the parallel PDE evaluator, rate fitting, index-set files,
//! convergence studies and plot scripts. The numerics live in `misc-core`.

pub mod config;
pub mod evaluator;
pub mod fit;
pub mod plot;
pub mod setfile;
pub mod study;
