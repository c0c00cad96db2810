//! Mixed differences, combination coefficients and the MISC estimator
//!
//! `M_I[F] = sum_{[a,b] in I} Delta[F_{a,b}] = sum_{[a,b] in I} c_{a,b} F_{a,b}`
//!
//! where `F_{a,b} = Q^{m(b)}[F^a]` is the tensor Clenshaw-Curtis quadrature of
//! the level-`a` approximation, and `Delta` is the product of first-order
//! differences in every direction with `F = 0` whenever a level hits zero.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::collocation::{new_points, NodeKey, RuleTable};
use crate::error::{Error, Result};
use crate::index_sets::RateModel;
use crate::multi_index::{IndexSet, MultiIndex};

/// Source of point values `F^alpha(y)`, `y in [-1, 1]^N`.
pub trait Evaluator {
    fn evaluate(&self, alpha: &[u32], y: &[f64]) -> Result<f64>;

    /// Evaluate several parameter points at the same spatial level. Parallel
    /// implementations override this; results must be in input order.
    fn evaluate_batch(&self, alpha: &[u32], ys: &[Vec<f64>]) -> Result<Vec<f64>> {
        ys.iter()
            .map(|y| self.evaluate(alpha, y).map_err(|e| locate(e, alpha, y)))
            .collect()
    }

    /// Unknowns of one deterministic solve at `alpha`, for work accounting.
    fn dof(&self, _alpha: &[u32]) -> u64 {
        1
    }
}

/// Attach the offending `(alpha, y)` to an error that does not carry it yet.
pub fn locate(err: Error, alpha: &[u32], y: &[f64]) -> Error {
    match err {
        e @ Error::Evaluation { .. } => e,
        e => Error::Evaluation {
            alpha: alpha.to_vec(),
            y: y.to_vec(),
            reason: e.to_string(),
        },
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, alpha: &[u32], y: &[f64]) -> Result<f64> {
        (**self).evaluate(alpha, y)
    }

    fn evaluate_batch(&self, alpha: &[u32], ys: &[Vec<f64>]) -> Result<Vec<f64>> {
        (**self).evaluate_batch(alpha, ys)
    }

    fn dof(&self, alpha: &[u32]) -> u64 {
        (**self).dof(alpha)
    }
}

/// Wraps a closure `(alpha, y) -> value` as an [`Evaluator`] with unit cost.
#[derive(Debug, Clone, Copy)]
pub struct FnEvaluator<F>(pub F);

impl<F: Fn(&[u32], &[f64]) -> f64> Evaluator for FnEvaluator<F> {
    fn evaluate(&self, alpha: &[u32], y: &[f64]) -> Result<f64> {
        Ok((self.0)(alpha, y))
    }
}

/// Evaluation counters: distinct `(alpha, y)` solves and their summed dofs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub evaluations: u64,
    pub dof_points: u64,
}

type PointKey = (Vec<u32>, Vec<NodeKey>);

/// Memo of point values, tensor quadratures and surpluses.
///
/// Points are keyed by spatial level and exact node identity, so values are
/// shared between nested grids without floating-point comparisons.
#[derive(Debug, Clone, Default)]
pub struct SurplusCache {
    rules: RuleTable,
    points: BTreeMap<PointKey, f64>,
    quadratures: BTreeMap<MultiIndex, f64>,
    surpluses: BTreeMap<MultiIndex, f64>,
    tally: Tally,
}

impl SurplusCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tally(&self) -> Tally {
        self.tally
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    /// Cached point value, if any.
    pub fn point_value(&self, alpha: &[u32], nodes: &[NodeKey]) -> Option<f64> {
        self.points.get(&(alpha.to_vec(), nodes.to_vec())).copied()
    }

    /// Stored surplus `Delta[F_{a,b}]`, if it has been computed.
    pub fn surplus(&self, idx: &MultiIndex) -> Option<f64> {
        self.surpluses.get(idx).copied()
    }

    pub fn surpluses(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.surpluses.iter().map(|(k, v)| (k, *v))
    }

    /// Points, keys and weights of the tensor grid at stochastic level `beta`,
    /// last direction varying fastest.
    fn grid(&mut self, beta: &[u32]) -> (Vec<Vec<NodeKey>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut keys = alloc::vec![Vec::new()];
        let mut points = alloc::vec![Vec::new()];
        let mut weights = alloc::vec![1.0];
        for &b in beta {
            let rule = self.rules.rule(b);
            let m = rule.nodes.len();
            let mut nk = Vec::with_capacity(keys.len() * m);
            let mut np = Vec::with_capacity(keys.len() * m);
            let mut nw = Vec::with_capacity(keys.len() * m);
            for ((k, p), w) in keys.iter().zip(&points).zip(&weights) {
                for j in 0..m {
                    let mut k2 = k.clone();
                    k2.push(rule.keys[j]);
                    let mut p2 = p.clone();
                    p2.push(rule.nodes[j]);
                    nk.push(k2);
                    np.push(p2);
                    nw.push(w * rule.weights[j]);
                }
            }
            keys = nk;
            points = np;
            weights = nw;
        }
        (keys, points, weights)
    }

    /// `F_{a,b} = Q^{m(b)}[F^a]`, evaluating only points not seen before.
    pub fn tensor_quadrature<E: Evaluator + ?Sized>(
        &mut self,
        idx: &MultiIndex,
        eval: &E,
    ) -> Result<f64> {
        if let Some(&q) = self.quadratures.get(idx) {
            return Ok(q);
        }
        let alpha = idx.alpha().to_vec();
        let (keys, points, weights) = self.grid(idx.beta());
        let mut missing_keys = Vec::new();
        let mut missing_points = Vec::new();
        for (k, p) in keys.iter().zip(&points) {
            let pk = (alpha.clone(), k.clone());
            if !self.points.contains_key(&pk) {
                missing_keys.push(pk);
                missing_points.push(p.clone());
            }
        }
        if !missing_points.is_empty() {
            let values = eval.evaluate_batch(&alpha, &missing_points)?;
            if values.len() != missing_points.len() {
                return Err(Error::DimensionMismatch {
                    expected: missing_points.len(),
                    found: values.len(),
                });
            }
            let dof = eval.dof(&alpha);
            self.tally.evaluations += values.len() as u64;
            self.tally.dof_points += dof * values.len() as u64;
            for (pk, v) in missing_keys.into_iter().zip(values) {
                self.points.insert(pk, v);
            }
        }
        let mut q = 0.0;
        for (k, w) in keys.into_iter().zip(weights) {
            q += w * self.points[&(alpha.clone(), k)];
        }
        self.quadratures.insert(idx.clone(), q);
        Ok(q)
    }
}

fn check_index(idx: &MultiIndex) -> Result<()> {
    if !idx.is_valid() {
        return Err(Error::InvalidArgument(alloc::format!(
            "multi-index {idx} has a zero component"
        )));
    }
    if idx.len() > 63 {
        return Err(Error::InvalidArgument("more than 63 directions".into()));
    }
    Ok(())
}

/// Signed sum over the backward corners selected by the bits in `dirs`.
fn difference<E: Evaluator + ?Sized>(
    idx: &MultiIndex,
    dirs: u64,
    eval: &E,
    cache: &mut SurplusCache,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut mask = dirs;
    // Enumerate all submasks of `dirs`, including zero.
    loop {
        if let Some(corner) = idx.minus_mask(mask) {
            let f = cache.tensor_quadrature(&corner, eval)?;
            if mask.count_ones().is_multiple_of(2) {
                sum += f;
            } else {
                sum -= f;
            }
        }
        if mask == 0 {
            break;
        }
        mask = (mask - 1) & dirs;
    }
    Ok(sum)
}

/// Hierarchical surplus `Delta[F_{a,b}]` (all `D + N` directions).
pub fn mixed_difference<E: Evaluator + ?Sized>(
    idx: &MultiIndex,
    eval: &E,
    cache: &mut SurplusCache,
) -> Result<f64> {
    check_index(idx)?;
    if let Some(v) = cache.surplus(idx) {
        return Ok(v);
    }
    let all = (1u64 << idx.len()) - 1;
    let v = difference(idx, all, eval, cache)?;
    cache.surpluses.insert(idx.clone(), v);
    Ok(v)
}

/// Stochastic-only difference `Delta^stoc[F_{a,b}]` at fixed `a`.
pub fn stochastic_difference<E: Evaluator + ?Sized>(
    idx: &MultiIndex,
    eval: &E,
    cache: &mut SurplusCache,
) -> Result<f64> {
    check_index(idx)?;
    let d = idx.spatial_dim();
    let dirs = ((1u64 << idx.stochastic_dim()) - 1) << d;
    difference(idx, dirs, eval, cache)
}

/// Deterministic-only difference `Delta^det[F_{a,b}]` at fixed `b`.
pub fn spatial_difference<E: Evaluator + ?Sized>(
    idx: &MultiIndex,
    eval: &E,
    cache: &mut SurplusCache,
) -> Result<f64> {
    check_index(idx)?;
    let dirs = (1u64 << idx.spatial_dim()) - 1;
    difference(idx, dirs, eval, cache)
}

/// `c_{a,b} = sum_{j in {0,1}^{D+N}, [a,b]+j in I} (-1)^{|j|}` for every member.
pub fn combination_coefficients(set: &IndexSet) -> Result<BTreeMap<MultiIndex, i64>> {
    set.check_downward_closed()?;
    let masks = 1u64 << set.dim();
    Ok(set
        .iter()
        .map(|idx| {
            let c = (0..masks)
                .filter(|&j| set.contains(&idx.plus_mask(j)))
                .map(|j| if j.count_ones() % 2 == 0 { 1 } else { -1 })
                .sum();
            (idx.clone(), c)
        })
        .collect())
}

/// How the estimator is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Sum of surpluses; stores every `Delta` in the cache.
    Surplus,
    /// `sum c F` over nonzero coefficients only.
    Combination,
}

/// `M_I[F]` for a downward-closed set.
pub fn estimate<E: Evaluator + ?Sized>(
    set: &IndexSet,
    eval: &E,
    mode: Mode,
    cache: &mut SurplusCache,
) -> Result<f64> {
    match mode {
        Mode::Surplus => {
            set.check_downward_closed()?;
            let mut sum = 0.0;
            for idx in set {
                sum += mixed_difference(idx, eval, cache)?;
            }
            Ok(sum)
        }
        Mode::Combination => {
            let mut sum = 0.0;
            for (idx, c) in combination_coefficients(set)? {
                if c != 0 {
                    sum += c as f64 * cache.tensor_quadrature(&idx, eval)?;
                }
            }
            Ok(sum)
        }
    }
}

/// Sparse-grid quadrature of `F^alpha` over a downward-closed stochastic set
/// (`D = 0` in `betas`), i.e. single-level collocation.
pub fn estimate_single_level<E: Evaluator + ?Sized>(
    alpha: &[u32],
    betas: &IndexSet,
    eval: &E,
    cache: &mut SurplusCache,
) -> Result<f64> {
    if betas.spatial_dim() != 0 {
        return Err(Error::DimensionMismatch {
            expected: 0,
            found: betas.spatial_dim(),
        });
    }
    let mut sum = 0.0;
    for (b, c) in combination_coefficients(betas)? {
        if c != 0 {
            let idx = MultiIndex::new(alpha, b.beta());
            sum += c as f64 * cache.tensor_quadrature(&idx, eval)?;
        }
    }
    Ok(sum)
}

/// Model work contribution `C_work e^{sum gamma_i alpha_i} e^{delta |beta|}`.
pub fn model_work(idx: &MultiIndex, rates: &RateModel) -> f64 {
    let spatial: f64 = rates
        .gammas
        .iter()
        .zip(idx.alpha())
        .map(|(g, &a)| g * a as f64)
        .sum();
    rates.c_work * libm::exp(spatial + rates.delta * idx.beta_sum() as f64)
}

/// Measured work contribution: dofs of the (up to `2^D`) backward spatial
/// grids times the number of new collocation points.
pub fn measured_work(idx: &MultiIndex, dof: impl Fn(&[u32]) -> u64) -> u64 {
    let d = idx.spatial_dim();
    let alpha_only = MultiIndex::new(idx.alpha(), &[]);
    let mut solves = 0;
    for mask in 0..(1u64 << d) {
        if let Some(a) = alpha_only.minus_mask(mask) {
            solves += dof(a.alpha());
        }
    }
    let fresh: u64 = idx.beta().iter().map(|&b| new_points(b) as u64).product();
    solves * fresh
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkMode {
    Model,
    Measured,
}

pub fn work_contribution<E: Evaluator + ?Sized>(
    idx: &MultiIndex,
    rates: &RateModel,
    mode: WorkMode,
    eval: &E,
) -> f64 {
    match mode {
        WorkMode::Model => model_work(idx, rates),
        WorkMode::Measured => measured_work(idx, |a| eval.dof(a)) as f64,
    }
}

/// `|Delta[F_{a,b}]|`.
pub fn error_contribution<E: Evaluator + ?Sized>(
    idx: &MultiIndex,
    eval: &E,
    cache: &mut SurplusCache,
) -> Result<f64> {
    mixed_difference(idx, eval, cache).map(f64::abs)
}

/// Error and work contributions of one index and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub error: f64,
    pub work: f64,
    pub profit: f64,
}

impl Contribution {
    pub fn new(error: f64, work: f64) -> Self {
        Self {
            error,
            work,
            profit: error / work,
        }
    }
}

/// Model work of a whole set, `sum_{I} Delta W`.
pub fn set_model_work(set: &IndexSet, rates: &RateModel) -> f64 {
    set.iter().map(|idx| model_work(idx, rates)).sum()
}

/// Distinct `(alpha, y)` evaluations an estimate over `set` needs, as
/// `alpha -> number of points`.
pub fn required_evaluations(set: &IndexSet, mode: Mode) -> Result<BTreeMap<Vec<u32>, usize>> {
    let terms: Vec<MultiIndex> = match mode {
        Mode::Surplus => {
            set.check_downward_closed()?;
            set.iter().cloned().collect()
        }
        Mode::Combination => combination_coefficients(set)?
            .into_iter()
            .filter(|(_, c)| *c != 0)
            .map(|(i, _)| i)
            .collect(),
    };
    let mut rules = RuleTable::new();
    let mut points: BTreeMap<Vec<u32>, BTreeSet<Vec<NodeKey>>> = BTreeMap::new();
    for idx in terms {
        let mut keys = alloc::vec![Vec::new()];
        for &b in idx.beta() {
            let rule = rules.rule(b);
            keys = keys
                .iter()
                .flat_map(|k| {
                    rule.keys.iter().map(move |nk| {
                        let mut k2 = k.clone();
                        k2.push(*nk);
                        k2
                    })
                })
                .collect();
        }
        points.entry(idx.alpha().to_vec()).or_default().extend(keys);
    }
    Ok(points.into_iter().map(|(a, s)| (a, s.len())).collect())
}

/// Dof-weighted evaluation count a fresh cache would report for `set`.
pub fn measured_set_work<E: Evaluator + ?Sized>(set: &IndexSet, mode: Mode, eval: &E) -> Result<u64> {
    Ok(required_evaluations(set, mode)?
        .iter()
        .map(|(a, n)| eval.dof(a) * *n as u64)
        .sum())
}
