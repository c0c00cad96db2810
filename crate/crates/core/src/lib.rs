//! Multi-Index Stochastic Collocation (MISC) for expectations of
//! functionals of elliptic PDEs with random coefficients.
//!
//! The crate is `no_std` and only needs `alloc`. It contains
//!
//! - [`collocation`]: nested Clenshaw-Curtis nodes, weights and tensor grids,
//! - [`field`]: the log-uniform diffusion coefficient and the Gaussian QoI kernel,
//! - [`fd`]: a tensorized finite-difference solver for `-div(a grad u) = f`,
//! - [`multi_index`]: multi-indices `[alpha, beta]` and downward-closed sets,
//! - [`estimator`]: mixed differences, combination coefficients and the estimator,
//! - [`index_sets`]: a-priori, a-posteriori, SCC, MLSC and SGSC set builders,
//! - [`rates`]: rate fitting and complexity predictions.
//!
//! File formats, configuration, parallel evaluation and the CLI live in the
//! companion `misc` crate.

#![no_std]
// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod collocation;
pub mod error;
pub mod estimator;
pub mod fd;
pub mod field;
pub mod index_sets;
pub mod multi_index;
pub mod rates;

pub use error::{Error, Result};
pub use estimator::{Evaluator, Mode, SurplusCache};
pub use index_sets::RateModel;
pub use multi_index::{IndexSet, MultiIndex};
