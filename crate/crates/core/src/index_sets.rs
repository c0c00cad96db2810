//! Index-set constructors: a-priori and a-posteriori quasi-optimal sets, the
//! total-degree SCC set, the diagonal MLSC restriction and single-level SGSC
//! sets.
//!
//! The a-priori set takes the work and error models as equalities,
//!
//! ```text
//! dW = C_work e^{sum gamma_i alpha_i} e^{delta |beta|}
//! dE = C_error e^{-sum r_i alpha_i} e^{-sum g_j e^{delta beta_j}}
//! ```
//!
//! so that `dE / dW >= e^-L` becomes
//! `sum (r_i + gamma_i) alpha_i + sum (delta beta_j + g_j e^{delta beta_j}) <= L`
//! (constants absorbed in `L`).

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::estimator::{mixed_difference, model_work, Contribution, Evaluator, SurplusCache};
use crate::multi_index::{downward_closure, IndexSet, MultiIndex};

/// Stochastic rates `g_1..g_10` fitted for the log-uniform test problem.
pub const TABLE_G: [f64; 10] = [
    2.4855, 2.8174, 4.5044, 4.1938, 4.7459, 6.8444, 7.1513, 7.8622, 8.6584, 9.4545,
];

/// Work and error rates of the product model.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    /// Work rates `gamma_i = gamma~_i log 2`.
    pub gammas: Vec<f64>,
    /// Error rates `r_i = r~_i log 2`.
    pub rs: Vec<f64>,
    /// Stochastic rates `g_j`.
    pub gs: Vec<f64>,
    /// Always `log 2` for Clenshaw-Curtis doubling.
    pub delta: f64,
    pub c_work: f64,
    pub c_error: f64,
}

impl RateModel {
    pub fn new(gammas: Vec<f64>, rs: Vec<f64>, gs: Vec<f64>) -> Result<Self> {
        if gammas.len() != rs.len() {
            return Err(Error::DimensionMismatch {
                expected: gammas.len(),
                found: rs.len(),
            });
        }
        if let Some(bad) = gammas.iter().chain(&rs).chain(&gs).find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "rates must be positive and finite, got {bad}"
            )));
        }
        Ok(Self {
            gammas,
            rs,
            gs,
            delta: LN_2,
            c_work: 1.0,
            c_error: 1.0,
        })
    }

    /// From the base-2 exponents `gamma~`, `r~` and the stochastic rates `g`.
    pub fn from_tilde(gamma_tilde: &[f64], r_tilde: &[f64], g: &[f64]) -> Result<Self> {
        Self::new(
            gamma_tilde.iter().map(|x| x * LN_2).collect(),
            r_tilde.iter().map(|x| x * LN_2).collect(),
            g.to_vec(),
        )
    }

    /// `gamma~ = 1`, `r~ = 2` in every spatial direction and the tabulated `g`.
    pub fn standard(spatial: usize, stochastic: usize) -> Result<Self> {
        if stochastic > TABLE_G.len() {
            return Err(Error::ModeOutOfTable {
                n: stochastic,
                table: TABLE_G.len(),
            });
        }
        Self::from_tilde(&vec![1.0; spatial], &vec![2.0; spatial], &TABLE_G[..stochastic])
    }

    pub fn spatial_dim(&self) -> usize {
        self.gammas.len()
    }

    pub fn stochastic_dim(&self) -> usize {
        self.gs.len()
    }

    pub fn gamma_tilde(&self) -> Vec<f64> {
        self.gammas.iter().map(|g| g / LN_2).collect()
    }

    pub fn r_tilde(&self) -> Vec<f64> {
        self.rs.iter().map(|r| r / LN_2).collect()
    }

    /// Largest `r_i + gamma_i`.
    pub fn max_spatial_step(&self) -> f64 {
        self.gammas
            .iter()
            .zip(&self.rs)
            .map(|(g, r)| g + r)
            .fold(0.0, f64::max)
    }

    fn check(&self, idx: &MultiIndex) -> Result<()> {
        if idx.spatial_dim() != self.spatial_dim() || idx.stochastic_dim() != self.stochastic_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spatial_dim() + self.stochastic_dim(),
                found: idx.len(),
            });
        }
        Ok(())
    }
}

/// `sum (delta beta_j + g_j e^{delta beta_j})`.
pub fn stochastic_exponent(beta: &[u32], rates: &RateModel) -> f64 {
    beta.iter()
        .zip(&rates.gs)
        .map(|(&b, g)| rates.delta * b as f64 + g * libm::exp(rates.delta * b as f64))
        .sum()
}

/// Left-hand side of the a-priori membership test.
pub fn apriori_profit_exponent(idx: &MultiIndex, rates: &RateModel) -> f64 {
    let spatial: f64 = idx
        .alpha()
        .iter()
        .zip(rates.gammas.iter().zip(&rates.rs))
        .map(|(&a, (g, r))| (g + r) * a as f64)
        .sum();
    spatial + stochastic_exponent(idx.beta(), rates)
}

/// Grow the sublevel set `{idx : keep(idx)}` of a monotone predicate by
/// recursive forward expansion from `start`, skipping indices already added.
fn build_set(set: &mut IndexSet, start: &MultiIndex, keep: &dyn Fn(&MultiIndex) -> bool) {
    for k in 0..start.len() {
        let next = start.forward(k);
        if !set.contains(&next) && keep(&next) {
            set.insert(next.clone()).expect("dimensions fixed by start");
            build_set(set, &next, keep);
        }
    }
}

fn sublevel_set(
    spatial: usize,
    stochastic: usize,
    threshold: f64,
    exponent: &dyn Fn(&MultiIndex) -> f64,
) -> Result<IndexSet> {
    let root = MultiIndex::ones(spatial, stochastic);
    let root_value = exponent(&root);
    if root_value > threshold {
        return Err(Error::EmptySet {
            threshold,
            root: root_value,
        });
    }
    let mut set = IndexSet::root(spatial, stochastic);
    build_set(&mut set, &root, &|i| exponent(i) <= threshold);
    Ok(set)
}

/// `I*(L)`: every index whose profit exponent is at most `L` (ties included).
pub fn apriori_set(level: f64, rates: &RateModel) -> Result<IndexSet> {
    sublevel_set(rates.spatial_dim(), rates.stochastic_dim(), level, &|i| {
        apriori_profit_exponent(i, rates)
    })
}

/// Default extra room for a-posteriori search buffers: `2 max(r_i + gamma_i)`.
pub fn default_buffer_margin(rates: &RateModel) -> f64 {
    2.0 * rates.max_spatial_step()
}

/// Computed contributions `|Delta F| / dW_model` for every buffer member.
pub fn contributions<E: Evaluator + ?Sized>(
    buffer: &IndexSet,
    eval: &E,
    cache: &mut SurplusCache,
    rates: &RateModel,
) -> Result<Vec<(MultiIndex, Contribution)>> {
    let mut out = Vec::with_capacity(buffer.len());
    for idx in buffer {
        rates.check(idx)?;
        let err = mixed_difference(idx, eval, cache)?.abs();
        out.push((idx.clone(), Contribution::new(err, model_work(idx, rates))));
    }
    Ok(out)
}

/// Sort by decreasing profit; equal profits in lexicographic index order.
pub fn dantzig_order(items: &mut [(MultiIndex, Contribution)]) {
    items.sort_by(|a, b| {
        b.1.profit
            .partial_cmp(&a.1.profit)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// Buffer members with computed profit `>= epsilon`, closed downward (the
/// root is always kept).
pub fn aposteriori_set<E: Evaluator + ?Sized>(
    epsilon: f64,
    buffer: &IndexSet,
    eval: &E,
    cache: &mut SurplusCache,
    rates: &RateModel,
) -> Result<IndexSet> {
    buffer.check_downward_closed()?;
    let picked = contributions(buffer, eval, cache, rates)?
        .into_iter()
        .filter(|(_, c)| c.profit >= epsilon)
        .map(|(i, _)| i);
    let root = MultiIndex::ones(buffer.spatial_dim(), buffer.stochastic_dim());
    downward_closure(
        buffer.spatial_dim(),
        buffer.stochastic_dim(),
        picked.chain(core::iter::once(root)),
    )
}

/// Sparse composite collocation: `{[alpha, beta] : alpha + |beta| <= w}`, `D = 1`.
pub fn scc_set(w: u32, stochastic: usize) -> Result<IndexSet> {
    sublevel_set(1, stochastic, w as f64, &|i| {
        i.levels().iter().map(|&l| l as f64).sum()
    })
}

/// One-dimensional rates for the diagonal spatial family `alpha = l * 1`.
pub fn collapse_rates(rates: &RateModel) -> RateModel {
    RateModel {
        gammas: vec![rates.gammas.iter().sum()],
        rs: vec![rates.rs.iter().sum()],
        gs: rates.gs.clone(),
        delta: rates.delta,
        c_work: rates.c_work,
        c_error: rates.c_error,
    }
}

/// A-priori MLSC set on the collapsed `(1 + N)`-dimensional level space.
pub fn mlsc_apriori_set(level: f64, rates: &RateModel) -> Result<IndexSet> {
    apriori_set(level, &collapse_rates(rates))
}

/// `(l; beta) -> (l, ..., l; beta)`.
pub fn expand_diagonal(collapsed: &IndexSet, spatial: usize) -> Result<IndexSet> {
    if collapsed.spatial_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: collapsed.spatial_dim(),
        });
    }
    let mut out = IndexSet::new(spatial, collapsed.stochastic_dim());
    for idx in collapsed {
        out.insert(MultiIndex::new(&vec![idx.alpha()[0]; spatial], idx.beta()))?;
    }
    Ok(out)
}

/// Inverse of [`expand_diagonal`]; fails on an index with unequal spatial levels.
pub fn collapse_diagonal(expanded: &IndexSet) -> Result<IndexSet> {
    let mut out = IndexSet::new(1, expanded.stochastic_dim());
    for idx in expanded {
        let a = idx.alpha();
        if a.is_empty() || a.iter().any(|&l| l != a[0]) {
            return Err(Error::InvalidArgument(alloc::format!(
                "{idx} is not on the spatial diagonal"
            )));
        }
        out.insert(MultiIndex::new(&a[..1], idx.beta()))?;
    }
    Ok(out)
}

/// Evaluates a `D`-dimensional problem on the diagonal: `F^l := F^{(l,...,l)}`.
#[derive(Debug, Clone)]
pub struct DiagonalEvaluator<E> {
    pub inner: E,
    pub spatial: usize,
}

impl<E: Evaluator> DiagonalEvaluator<E> {
    fn expand(&self, alpha: &[u32]) -> Vec<u32> {
        vec![alpha[0]; self.spatial]
    }
}

impl<E: Evaluator> Evaluator for DiagonalEvaluator<E> {
    fn evaluate(&self, alpha: &[u32], y: &[f64]) -> Result<f64> {
        self.inner.evaluate(&self.expand(alpha), y)
    }

    fn evaluate_batch(&self, alpha: &[u32], ys: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.inner.evaluate_batch(&self.expand(alpha), ys)
    }

    fn dof(&self, alpha: &[u32]) -> u64 {
        self.inner.dof(&self.expand(alpha))
    }
}

/// Single-level sparse grid: fixed spatial level plus a stochastic set.
#[derive(Debug, Clone, PartialEq)]
pub struct SgscSet {
    pub alpha: Vec<u32>,
    /// Downward-closed set with `D = 0`.
    pub betas: IndexSet,
}

impl SgscSet {
    /// `sum_beta dW_model(alpha; beta)`.
    pub fn model_work(&self, rates: &RateModel) -> f64 {
        self.betas
            .iter()
            .map(|b| model_work(&MultiIndex::new(&self.alpha, b.beta()), rates))
            .sum()
    }
}

/// `{beta : stochastic exponent <= threshold}`; the root is always included.
pub fn sgsc_set(alpha_fixed: &[u32], threshold: f64, rates: &RateModel) -> Result<SgscSet> {
    if alpha_fixed.len() != rates.spatial_dim() || alpha_fixed.contains(&0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "invalid fixed spatial level {alpha_fixed:?}"
        )));
    }
    let n = rates.stochastic_dim();
    let root = MultiIndex::ones(0, n);
    let mut betas = IndexSet::root(0, n);
    build_set(&mut betas, &root, &|i| stochastic_exponent(i.beta(), rates) <= threshold);
    Ok(SgscSet {
        alpha: alpha_fixed.to_vec(),
        betas,
    })
}

pub fn sgsc_sets(alpha_fixed: &[u32], thresholds: &[f64], rates: &RateModel) -> Result<Vec<SgscSet>> {
    thresholds
        .iter()
        .map(|&t| sgsc_set(alpha_fixed, t, rates))
        .collect()
}
