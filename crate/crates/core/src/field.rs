//! Log-uniform random diffusion coefficient and Gaussian QoI kernel on
//! `[0, 1]^d`.
//!
//! `a(x, y) = exp(sum_n lambda_n psi_n(x) y_n)` with `lambda_n = sqrt(3) e^-n`
//! and `y_n` uniform on `[-1, 1]`. In one dimension `psi_n = phi_n`; in three
//! dimensions `psi_n` is a product of `phi` modes picked from [`MODE_TABLE`].

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Modes `(i(n), j(n), k(n))` used for `d = 3`, `n = 1..=10`.
pub const MODE_TABLE: [[u32; 3]; 10] = [
    [1, 1, 1],
    [2, 1, 1],
    [1, 2, 1],
    [1, 1, 2],
    [3, 1, 1],
    [2, 2, 1],
    [2, 1, 2],
    [1, 3, 1],
    [1, 2, 2],
    [1, 1, 3],
];

/// Trigonometric mode: `sin(n pi x / 2)` for even `n`, `cos((n-1) pi x / 2)` for odd `n`.
pub fn phi(n: u32, x: f64) -> f64 {
    if n.is_multiple_of(2) {
        libm::sin(n as f64 / 2.0 * PI * x)
    } else {
        libm::cos((n - 1) as f64 / 2.0 * PI * x)
    }
}

/// `lambda_n = sqrt(3) e^-n`, `n >= 1`.
pub fn lambda(n: usize) -> f64 {
    libm::sqrt(3.0) * libm::exp(-(n as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    dim: usize,
    lambdas: Vec<f64>,
    /// Per-variable mode triple; only used when `dim == 3`.
    modes: Vec<[u32; 3]>,
}

impl FieldSpec {
    /// Field with `n_vars` random variables in dimension `dim` (1 or 3).
    pub fn new(dim: usize, n_vars: usize) -> Result<Self> {
        Self::with_modes(dim, n_vars, &MODE_TABLE)
    }

    /// Like [`FieldSpec::new`] but with a custom `d = 3` mode table.
    pub fn with_modes(dim: usize, n_vars: usize, table: &[[u32; 3]]) -> Result<Self> {
        let modes = match dim {
            1 => Vec::new(),
            3 => {
                if n_vars > table.len() {
                    return Err(Error::ModeOutOfTable {
                        n: n_vars,
                        table: table.len(),
                    });
                }
                table[..n_vars].to_vec()
            }
            d => return Err(Error::UnsupportedDimension(d)),
        };
        Ok(Self {
            dim,
            lambdas: (1..=n_vars).map(lambda).collect(),
            modes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vars(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Spatial mode `psi_n(x)` for `n` in `1..=n_vars`.
    pub fn psi(&self, n: usize, x: &[f64]) -> Result<f64> {
        if n == 0 || n > self.n_vars() {
            return Err(Error::ModeOutOfTable {
                n,
                table: self.n_vars(),
            });
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.psi_unchecked(n, x))
    }

    pub(crate) fn psi_unchecked(&self, n: usize, x: &[f64]) -> f64 {
        if self.dim == 1 {
            phi(n as u32, x[0])
        } else {
            let [i, j, k] = self.modes[n - 1];
            phi(i, x[0]) * phi(j, x[1]) * phi(k, x[2])
        }
    }

    /// `gamma_N(x, y) = sum_n lambda_n psi_n(x) y_n`.
    pub fn log_diffusion(&self, x: &[f64], y: &[f64]) -> f64 {
        self.lambdas
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (l, yn))| l * self.psi_unchecked(i + 1, x) * yn)
            .sum()
    }

    pub fn diffusion(&self, x: &[f64], y: &[f64]) -> f64 {
        libm::exp(self.log_diffusion(x, y))
    }

    /// `(a_min, a_max) = (exp(-sum lambda), exp(sum lambda))`.
    pub fn bounds(&self) -> (f64, f64) {
        let s: f64 = self.lambdas.iter().sum();
        (libm::exp(-s), libm::exp(s))
    }
}

/// Gaussian kernel of the quantity of interest `F(y) = int u(x, y) Q(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QoiSpec {
    pub sigma: f64,
    pub x0: Vec<f64>,
}

impl QoiSpec {
    pub fn new(sigma: f64, x0: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if x0.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return Err(Error::InvalidArgument(alloc::format!(
                "x0 {x0:?} must lie strictly inside the unit cube"
            )));
        }
        Ok(Self { sigma, x0 })
    }

    /// `sigma = 0.16` with `x0 = 0.3` (d = 1) or `x0 = (0.3, 0.2, 0.6)` (d = 3).
    pub fn standard(dim: usize) -> Result<Self> {
        match dim {
            1 => Self::new(0.16, alloc::vec![0.3]),
            3 => Self::new(0.16, alloc::vec![0.3, 0.2, 0.6]),
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        let d = self.x0.len() as f64;
        let r2: f64 = x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm = libm::pow(self.sigma * libm::sqrt(2.0 * PI), d);
        libm::exp(-r2 / (2.0 * self.sigma * self.sigma)) / norm
    }
}
