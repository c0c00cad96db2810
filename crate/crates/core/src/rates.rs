//! Fitting the work/error rate models and evaluating the complexity
//! predictions that follow from them.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::estimator::{mixed_difference, stochastic_difference, Evaluator, SurplusCache};
use crate::index_sets::RateModel;
use crate::multi_index::MultiIndex;

/// Samples below this magnitude are treated as cancellation noise.
pub const NOISE_FLOOR: f64 = 1e-13;

/// `|dE|` sampled along `idx = j * direction + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples {
    /// Increment over all `D + N` components.
    pub direction: Vec<u32>,
    pub spatial: usize,
    pub offsets: Vec<u32>,
    pub values: Vec<f64>,
}

impl RaySamples {
    pub fn index(&self, j: u32) -> MultiIndex {
        let levels = self.direction.iter().map(|&d| j * d + 1).collect();
        MultiIndex::from_levels(levels, self.spatial)
    }
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `(level along component, ln |dE|)` for samples above the noise floor.
/// Exact zeros count as noise when `zero_is_noise`, as errors otherwise.
fn usable(samples: &RaySamples, component: usize, zero_is_noise: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut levels = Vec::new();
    let mut logs = Vec::new();
    for (i, (&j, &v)) in samples.offsets.iter().zip(&samples.values).enumerate() {
        let bad = if zero_is_noise { !(v >= 0.0) } else { !(v > 0.0) };
        if bad {
            return Err(Error::NonPositiveSample { index: i, value: v });
        }
        if v >= NOISE_FLOOR {
            levels.push((j * samples.direction[component] + 1) as f64);
            logs.push(libm::log(v));
        }
    }
    if levels.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: levels.len(),
        });
    }
    Ok((levels, logs))
}

fn main_component(samples: &RaySamples) -> Result<usize> {
    samples
        .direction
        .iter()
        .position(|&d| d > 0)
        .ok_or_else(|| Error::InvalidArgument("ray direction is zero".into()))
}

/// `r~` from `ln |dE| ~ -r~ alpha log 2` along a unit spatial direction.
pub fn fit_spatial_rate(samples: &RaySamples) -> Result<f64> {
    let k = main_component(samples)?;
    let (levels, logs) = usable(samples, k, false)?;
    let xs: Vec<f64> = levels.iter().map(|a| a * LN_2).collect();
    Ok(-least_squares(&xs, &logs).0)
}

pub fn fit_spatial_rates(rays: &[RaySamples]) -> Result<Vec<f64>> {
    rays.iter().map(fit_spatial_rate).collect()
}

/// `g` from `ln |dE| ~ -g 2^beta` along a unit stochastic direction.
pub fn fit_stochastic_rate(samples: &RaySamples) -> Result<f64> {
    let k = main_component(samples)?;
    let (levels, logs) = usable(samples, k, true)?;
    let xs: Vec<f64> = levels.iter().map(|b| -libm::exp(LN_2 * b)).collect();
    Ok(least_squares(&xs, &logs).0)
}

pub fn fit_stochastic_rates(rays: &[RaySamples]) -> Result<Vec<f64>> {
    rays.iter().map(fit_stochastic_rate).collect()
}

/// `|Delta F|` at `beta = 1`, `alpha = j e_dir + 1`, `j = 1..=count`.
pub fn spatial_ray<E: Evaluator + ?Sized>(
    eval: &E,
    cache: &mut SurplusCache,
    spatial: usize,
    stochastic: usize,
    dir: usize,
    count: u32,
) -> Result<RaySamples> {
    let mut direction = alloc::vec![0; spatial + stochastic];
    direction[dir] = 1;
    mixed_ray(eval, cache, direction, spatial, count)
}

/// `|Delta^stoc F|` at fixed `alpha`, `beta = j e_n + 1`, `j = 1..=count`.
pub fn stochastic_ray<E: Evaluator + ?Sized>(
    eval: &E,
    cache: &mut SurplusCache,
    alpha: &[u32],
    stochastic: usize,
    n: usize,
    count: u32,
) -> Result<RaySamples> {
    let spatial = alpha.len();
    let mut direction = alloc::vec![0; spatial + stochastic];
    direction[spatial + n] = 1;
    let mut out = RaySamples {
        direction,
        spatial,
        offsets: Vec::new(),
        values: Vec::new(),
    };
    for j in 1..=count {
        let mut beta = alloc::vec![1; stochastic];
        beta[n] = j + 1;
        let idx = MultiIndex::new(alpha, &beta);
        out.offsets.push(j);
        out.values.push(stochastic_difference(&idx, eval, cache)?.abs());
    }
    Ok(out)
}

/// `|Delta F|` along `idx = j * direction + 1`, `j = 1..=count`.
pub fn mixed_ray<E: Evaluator + ?Sized>(
    eval: &E,
    cache: &mut SurplusCache,
    direction: Vec<u32>,
    spatial: usize,
    count: u32,
) -> Result<RaySamples> {
    let mut out = RaySamples {
        direction,
        spatial,
        offsets: Vec::new(),
        values: Vec::new(),
    };
    for j in 1..=count {
        let idx = out.index(j);
        out.offsets.push(j);
        out.values.push(mixed_difference(&idx, eval, cache)?.abs());
    }
    Ok(out)
}

/// Model `|dE|` anchored at the root value:
/// `anchor e^{-sum r_i (alpha_i - 1)} e^{-sum g_j (e^{delta beta_j} - e^delta)}`.
pub fn product_model(idx: &MultiIndex, rates: &RateModel, anchor: f64) -> f64 {
    let spatial: f64 = idx
        .alpha()
        .iter()
        .zip(&rates.rs)
        .map(|(&a, r)| r * (a as f64 - 1.0))
        .sum();
    let base = libm::exp(rates.delta);
    let stoch: f64 = idx
        .beta()
        .iter()
        .zip(&rates.gs)
        .map(|(&b, g)| g * (libm::exp(rates.delta * b as f64) - base))
        .sum();
    anchor * libm::exp(-spatial - stoch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductCheck {
    /// `log10(measured / model)` per sample.
    pub log10_ratios: Vec<f64>,
    pub max_abs_log10: f64,
}

/// Compare a mixed ray against the product model; `anchor` is `|dE|` at the root.
pub fn verify_product_structure(samples: &RaySamples, rates: &RateModel, anchor: f64) -> ProductCheck {
    let log10_ratios: Vec<f64> = samples
        .offsets
        .iter()
        .zip(&samples.values)
        .map(|(&j, &v)| libm::log10(v / product_model(&samples.index(j), rates, anchor)))
        .collect();
    let max_abs_log10 = log10_ratios.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    ProductCheck {
        log10_ratios,
        max_abs_log10,
    }
}

/// Analyticity-based stochastic rate of one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyellipseRate {
    pub tau: f64,
    pub rho: f64,
    pub g_star: f64,
    /// `g* (1 - eps_E) / 2`.
    pub g_tilde: f64,
}

/// `tau_n = pi / (2 N lambda_n)`, `rho_n = tau_n + sqrt(tau_n^2 + 1)`,
/// `g*_n = log rho_n`.
pub fn apriori_g(lambdas: &[f64], eps_e: f64) -> Vec<PolyellipseRate> {
    let n = lambdas.len() as f64;
    lambdas
        .iter()
        .map(|&lam| {
            let tau = PI / (2.0 * n * lam);
            let rho = tau + libm::sqrt(tau * tau + 1.0);
            let g_star = libm::log(rho);
            PolyellipseRate {
                tau,
                rho,
                g_star,
                g_tilde: 0.5 * g_star * (1.0 - eps_e),
            }
        })
        .collect()
}

/// Exponents of the complexity bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityParams {
    /// `Xi_i = gamma_i / (gamma_i + r_i)`.
    pub xi: Vec<f64>,
    pub chi: f64,
    /// `min r_i / gamma_i`.
    pub zeta: f64,
    /// Number of directions attaining `zeta`.
    pub zfrak: usize,
    pub c_w: f64,
}

pub fn complexity_params(rates: &RateModel, c_w: f64) -> Result<ComplexityParams> {
    if rates.spatial_dim() == 0 {
        return Err(Error::InvalidArgument("need at least one spatial rate".into()));
    }
    if !(c_w > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("C_W must be positive, got {c_w}")));
    }
    let xi: Vec<f64> = rates
        .gammas
        .iter()
        .zip(&rates.rs)
        .map(|(g, r)| g / (g + r))
        .collect();
    let chi = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ratios: Vec<f64> = rates.rs.iter().zip(&rates.gammas).map(|(r, g)| r / g).collect();
    let zeta = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let zfrak = ratios
        .iter()
        .filter(|&&q| (q - zeta).abs() <= 1e-12 * zeta.abs().max(1.0))
        .count();
    Ok(ComplexityParams {
        xi,
        chi,
        zeta,
        zfrak,
        c_w,
    })
}

/// `L(W) = (1/chi) (log(W/C_W) - (z - 1) log((1/chi) log(W/C_W)))`, valid for
/// `W >= C_W e^chi` and positive results only.
pub fn level_for_budget(w_max: f64, params: &ComplexityParams) -> Result<f64> {
    let bound = params.c_w * libm::exp(params.chi);
    if !(w_max >= bound) {
        return Err(Error::BudgetTooSmall { budget: w_max, bound });
    }
    let lw = libm::log(w_max / params.c_w);
    let correction = if params.zfrak > 1 {
        (params.zfrak - 1) as f64 * libm::log(lw / params.chi)
    } else {
        0.0
    };
    let level = (lw - correction) / params.chi;
    if !(level > 0.0) {
        return Err(Error::BudgetTooSmall { budget: w_max, bound });
    }
    Ok(level)
}

/// Shape of the error bound: `W^-zeta (log W)^{(zeta + 1)(z - 1)}`.
pub fn predicted_error(w: f64, params: &ComplexityParams) -> f64 {
    libm::pow(w, -params.zeta)
        * libm::pow(libm::log(w), (params.zeta + 1.0) * (params.zfrak as f64 - 1.0))
}

/// `theta` from `log t ~ theta log prod(1/h_i)` over timed solves.
pub fn fit_work_exponent(inverse_mesh_products: &[f64], seconds: &[f64]) -> Result<f64> {
    if inverse_mesh_products.len() != seconds.len() {
        return Err(Error::DimensionMismatch {
            expected: inverse_mesh_products.len(),
            found: seconds.len(),
        });
    }
    if let Some((i, &t)) = seconds.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(Error::NonPositiveSample { index: i, value: t });
    }
    if seconds.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: seconds.len(),
        });
    }
    let xs: Vec<f64> = inverse_mesh_products.iter().map(|x| libm::log(*x)).collect();
    let ys: Vec<f64> = seconds.iter().map(|t| libm::log(*t)).collect();
    Ok(least_squares(&xs, &ys).0)
}
