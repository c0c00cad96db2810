//! Convergence studies: reference value, per-method error/work records, the
//! SGSC lower envelope and matched-work comparisons.

use std::io::Write;

use anyhow::{bail, Context};
use misc_core::estimator::{
    estimate, estimate_single_level, measured_set_work, required_evaluations, set_model_work,
};
use misc_core::index_sets::{
    aposteriori_set, apriori_profit_exponent, apriori_set, collapse_rates, contributions,
    dantzig_order, default_buffer_margin, mlsc_apriori_set, scc_set, sgsc_set,
    stochastic_exponent, DiagonalEvaluator,
};
use misc_core::{Error, Evaluator, IndexSet, Mode, MultiIndex, RateModel, SurplusCache};
use serde::{Deserialize, Serialize};

use crate::config::{Method, RateSource, StudyConfig};
use crate::evaluator::PdeEvaluator;
use crate::fit::fit_rates;

/// Cap on extra thresholds when extending a baseline curve to the largest
/// a-priori MISC work.
const EXTENSION_STEPS: usize = 40;

/// CSV header, in column order.
pub const COLUMNS: [&str; 7] = [
    "method",
    "threshold",
    "set_size",
    "work_model",
    "work_measured",
    "estimate",
    "abs_error",
];

/// One CSV row. Envelope rows only carry work and error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub method: String,
    pub threshold: Option<f64>,
    pub set_size: Option<usize>,
    pub work_model: f64,
    pub work_measured: Option<u64>,
    pub estimate: Option<f64>,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub method: String,
    pub threshold: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub level: f64,
    pub value: f64,
    pub set: IndexSet,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub rates: RateModel,
    pub schedule: Vec<f64>,
    pub reference: Reference,
    pub records: Vec<ConvergenceRecord>,
    pub failures: Vec<Failure>,
}

impl StudyReport {
    pub fn method_records<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ConvergenceRecord> + 'a {
        self.records.iter().filter(move |r| r.method == method)
    }

    /// `(work_model, abs_error)` of one method, in schedule order.
    pub fn curve(&self, method: &str) -> Vec<(f64, f64)> {
        self.method_records(method)
            .map(|r| (r.work_model, r.abs_error))
            .collect()
    }
}

/// Evaluator, rates and caches of one configured problem.
pub struct Study<E> {
    pub eval: E,
    pub rates: RateModel,
    dof_cap: usize,
    margin: f64,
    cache: SurplusCache,
    diagonal_cache: SurplusCache,
}

/// Build the PDE problem of `config`, fitting rates first if requested.
pub fn pde_study(config: &StudyConfig) -> anyhow::Result<Study<PdeEvaluator>> {
    config.validate()?;
    let p = &config.problem;
    let eval = PdeEvaluator::new(p.field()?, p.qoi()?, p.h0, p.dof_cap)?;
    let mut cache = SurplusCache::new();
    let rates = if config.rates.source == RateSource::Fitted && config.rates.g.is_none() {
        let gamma = config.rates.gamma_tilde.clone().unwrap_or_else(|| vec![1.0; p.dim]);
        let report = fit_rates(&eval, p.dim, p.n_vars, &gamma, &config.rates.fit, &mut cache)
            .context("fitting rates")?;
        let mut rates = report.rates;
        if let Some(r) = &config.rates.r_tilde {
            rates = RateModel::from_tilde(&gamma, r, &rates.gs)?;
        }
        rates
    } else {
        config.rate_model()?
    };
    let mut study = Study::new(eval, rates, p.dof_cap, config.study.margin);
    study.cache = cache;
    Ok(study)
}

impl<E: Evaluator> Study<E> {
    pub fn new(eval: E, rates: RateModel, dof_cap: usize, margin: Option<f64>) -> Self {
        let margin = margin.unwrap_or_else(|| default_buffer_margin(&rates));
        Self {
            eval,
            rates,
            dof_cap,
            margin,
            cache: SurplusCache::new(),
            diagonal_cache: SurplusCache::new(),
        }
    }

    pub fn cache(&self) -> &SurplusCache {
        &self.cache
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    fn spatial(&self) -> usize {
        self.rates.spatial_dim()
    }

    fn root_exponent(&self) -> f64 {
        apriori_profit_exponent(
            &MultiIndex::ones(self.spatial(), self.rates.stochastic_dim()),
            &self.rates,
        )
    }

    fn check_cap(&self, set: &IndexSet) -> Result<(), Error> {
        for a in set.iter().map(|i| i.alpha()) {
            let dof = self.eval.dof(a);
            if dof > self.dof_cap as u64 {
                return Err(Error::DofCapExceeded {
                    dof: dof as usize,
                    cap: self.dof_cap,
                });
            }
        }
        Ok(())
    }

    /// Largest `L` whose a-priori set stays within the dof cap.
    pub fn max_level_within_cap(&self) -> f64 {
        let d = self.spatial();
        let step: Vec<f64> = self.rates.gammas.iter().zip(&self.rates.rs).map(|(g, r)| g + r).collect();
        // Per direction, the first level over the cap with all others at one.
        let over: Vec<u32> = (0..d)
            .map(|i| {
                let mut a = vec![1; d];
                while self.eval.dof(&a) <= self.dof_cap as u64 {
                    a[i] += 1;
                }
                a[i]
            })
            .collect();
        // Minimal exponent among over-cap spatial levels; these are all
        // dominated by some box member, so the box suffices.
        let corner = MultiIndex::new(&over, &[]);
        let lowest_over = IndexSet::full_box(&corner)
            .iter()
            .filter(|i| self.eval.dof(i.alpha()) > self.dof_cap as u64)
            .map(|i| i.alpha().iter().zip(&step).map(|(&a, s)| s * a as f64).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let stoch_root = stochastic_exponent(&vec![1; self.rates.stochastic_dim()], &self.rates);
        stoch_root + lowest_over - 1e-6 * lowest_over.max(1.0)
    }

    /// `points` levels spaced by `step` ending at the finest level whose
    /// reference (`L + margin`) fits the dof cap.
    pub fn auto_schedule(&self, points: usize, step: Option<f64>) -> anyhow::Result<Vec<f64>> {
        let step = step.unwrap_or_else(|| self.rates.max_spatial_step());
        let last = self.max_level_within_cap() - self.margin;
        let root = self.root_exponent();
        if last < root {
            bail!(
                "dof cap {} is too small: the reference level {:.4} is below the root exponent {:.4}",
                self.dof_cap,
                last + self.margin,
                root
            );
        }
        let schedule: Vec<f64> = (0..points)
            .rev()
            .map(|k| last - k as f64 * step)
            .filter(|&l| l >= root)
            .collect();
        Ok(schedule)
    }

    /// A-priori MISC at `level`, combination form.
    pub fn reference(&mut self, level: f64) -> anyhow::Result<Reference> {
        let set = apriori_set(level, &self.rates)?;
        self.check_cap(&set).with_context(|| {
            format!("reference level {level:.4} exceeds the dof cap; use a smaller schedule, margin or problem")
        })?;
        let value = estimate(&set, &self.eval, Mode::Combination, &mut self.cache)?;
        Ok(Reference { level, value, set })
    }

    /// Estimate over a pinned set (cap-checked).
    pub fn estimate_set(&mut self, set: &IndexSet, mode: Mode) -> anyhow::Result<f64> {
        self.check_cap(set)?;
        Ok(estimate(set, &self.eval, mode, &mut self.cache)?)
    }

    fn apriori_record(&mut self, level: f64, reference: f64) -> anyhow::Result<ConvergenceRecord> {
        let set = apriori_set(level, &self.rates)?;
        self.check_cap(&set)?;
        let est = estimate(&set, &self.eval, Mode::Combination, &mut self.cache)?;
        let measured = measured_set_work(&set, Mode::Combination, &self.eval)?;
        Ok(record(Method::MiscApriori.name().into(), level, set.len(), set_model_work(&set, &self.rates), measured, est, reference))
    }

    /// A-posteriori set for schedule level `level`: search buffer
    /// `I*(level + margin)`, `epsilon` chosen so the Dantzig-ordered prefix
    /// matches `target` model work.
    fn aposteriori_record(&mut self, level: f64, target: f64, reference: f64) -> anyhow::Result<ConvergenceRecord> {
        let buffer = apriori_set(level + self.margin, &self.rates)?;
        self.check_cap(&buffer)?;
        let mut items = contributions(&buffer, &self.eval, &mut self.cache, &self.rates)?;
        dantzig_order(&mut items);
        let mut work = 0.0;
        let mut epsilon = f64::INFINITY;
        for (_, c) in &items {
            if work + c.work > target {
                break;
            }
            work += c.work;
            epsilon = c.profit;
        }
        let set = aposteriori_set(epsilon, &buffer, &self.eval, &mut self.cache, &self.rates)?;
        let est = estimate(&set, &self.eval, Mode::Surplus, &mut self.cache)?;
        let measured = measured_set_work(&set, Mode::Surplus, &self.eval)?;
        Ok(record(Method::MiscAposteriori.name().into(), epsilon, set.len(), set_model_work(&set, &self.rates), measured, est, reference))
    }

    /// Evaluate `build(threshold)` along `thresholds`, then keep extending
    /// by `step` until the model work reaches `target`. Repeated sets are
    /// skipped; the first failure during extension stops the curve.
    fn curve(
        &mut self,
        method: &str,
        thresholds: &[f64],
        step: f64,
        target: f64,
        failures: &mut Vec<Failure>,
        mut point: impl FnMut(&mut Self, f64) -> anyhow::Result<Option<ConvergenceRecord>>,
    ) -> Vec<ConvergenceRecord> {
        let mut out: Vec<ConvergenceRecord> = Vec::new();
        let mut t = thresholds.first().copied().unwrap_or(0.0);
        let mut k = 0;
        let mut extra = 0;
        loop {
            let extending = k >= thresholds.len();
            if extending {
                if out.last().is_some_and(|r| r.work_model >= target) || extra >= EXTENSION_STEPS {
                    break;
                }
                t += step;
                extra += 1;
            } else {
                t = thresholds[k];
            }
            k += 1;
            match point(self, t) {
                Ok(Some(r)) => {
                    if out.last().is_none_or(|p| p.set_size != r.set_size || p.work_model != r.work_model) {
                        out.push(r);
                    }
                }
                Ok(None) => {}
                Err(e) => {
                    failures.push(Failure {
                        method: method.into(),
                        threshold: t,
                        message: format!("{e:#}"),
                    });
                    if extending {
                        break;
                    }
                }
            }
        }
        out
    }

    fn mlsc_point(&mut self, level: f64, reference: f64) -> anyhow::Result<Option<ConvergenceRecord>> {
        let collapsed = collapse_rates(&self.rates);
        let set = match mlsc_apriori_set(level, &self.rates) {
            Ok(s) => s,
            Err(Error::EmptySet { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let diag = DiagonalEvaluator {
            inner: &self.eval,
            spatial: self.spatial(),
        };
        let top = set.max_levels()[0];
        let dof = diag.dof(&[top]);
        if dof > self.dof_cap as u64 {
            return Err(Error::DofCapExceeded { dof: dof as usize, cap: self.dof_cap }.into());
        }
        let est = estimate(&set, &diag, Mode::Combination, &mut self.diagonal_cache)?;
        let measured = measured_set_work(&set, Mode::Combination, &diag)?;
        Ok(Some(record(Method::Mlsc.name().into(), level, set.len(), set_model_work(&set, &collapsed), measured, est, reference)))
    }

    fn scc_point(&mut self, w: u32, reference: f64) -> anyhow::Result<Option<ConvergenceRecord>> {
        let collapsed = collapse_rates(&self.rates);
        let set = scc_set(w, self.rates.stochastic_dim())?;
        let diag = DiagonalEvaluator {
            inner: &self.eval,
            spatial: self.spatial(),
        };
        let dof = diag.dof(&[set.max_levels()[0]]);
        if dof > self.dof_cap as u64 {
            return Err(Error::DofCapExceeded { dof: dof as usize, cap: self.dof_cap }.into());
        }
        let est = estimate(&set, &diag, Mode::Combination, &mut self.diagonal_cache)?;
        let measured = measured_set_work(&set, Mode::Combination, &diag)?;
        Ok(Some(record(Method::Scc.name().into(), w as f64, set.len(), set_model_work(&set, &collapsed), measured, est, reference)))
    }

    fn sgsc_point(&mut self, level: u32, threshold: f64, reference: f64) -> anyhow::Result<Option<ConvergenceRecord>> {
        let alpha = vec![level; self.spatial()];
        let dof = self.eval.dof(&alpha);
        if dof > self.dof_cap as u64 {
            return Err(Error::DofCapExceeded { dof: dof as usize, cap: self.dof_cap }.into());
        }
        let s = sgsc_set(&alpha, threshold, &self.rates)?;
        let est = estimate_single_level(&alpha, &s.betas, &self.eval, &mut self.cache)?;
        let points: usize = required_evaluations(&s.betas, Mode::Combination)?.values().sum();
        Ok(Some(record(sgsc_label(level), threshold, s.betas.len(), s.model_work(&self.rates), dof * points as u64, est, reference)))
    }

    /// Diagonal levels `l` with `dof(l 1)` within the cap.
    pub fn default_sgsc_levels(&self) -> Vec<u32> {
        (1..)
            .take_while(|&l| self.eval.dof(&vec![l; self.spatial()]) <= self.dof_cap as u64)
            .collect()
    }

    /// Run every configured method over `schedule` against the reference at
    /// `max(schedule) + margin`.
    pub fn run(&mut self, methods: &[Method], schedule: &[f64], sgsc_levels: &[u32]) -> anyhow::Result<StudyReport> {
        if schedule.is_empty() {
            bail!("empty schedule");
        }
        if schedule.windows(2).any(|w| w[0] >= w[1]) {
            bail!("schedule must be strictly increasing");
        }
        let l_max = *schedule.last().unwrap();
        let reference = self.reference(l_max + self.margin)?;
        let r = reference.value;
        let mut records = Vec::new();
        let mut failures = Vec::new();

        // A-priori MISC runs first: its work range sets the baselines' range.
        let mut apriori = Vec::new();
        for &l in schedule {
            match self.apriori_record(l, r) {
                Ok(rec) => apriori.push(rec),
                Err(e) => failures.push(Failure {
                    method: Method::MiscApriori.name().into(),
                    threshold: l,
                    message: format!("{e:#}"),
                }),
            }
        }
        let target = apriori.iter().map(|r| r.work_model).fold(0.0, f64::max);
        let step = self.rates.max_spatial_step();
        for &m in methods {
            match m {
                Method::MiscApriori => records.extend(apriori.iter().cloned()),
                Method::MiscAposteriori => {
                    for a in &apriori {
                        let level = a.threshold.unwrap();
                        match self.aposteriori_record(level, a.work_model, r) {
                            Ok(rec) => records.push(rec),
                            Err(e) => failures.push(Failure {
                                method: m.name().into(),
                                threshold: level,
                                message: format!("{e:#}"),
                            }),
                        }
                    }
                }
                Method::Mlsc => {
                    let recs = self.curve(m.name(), schedule, step, target, &mut failures, |s, l| s.mlsc_point(l, r));
                    records.extend(recs);
                }
                Method::Scc => {
                    let w0 = 1 + self.rates.stochastic_dim() as u32;
                    let recs = self.curve(m.name(), &[w0 as f64], 1.0, target, &mut failures, |s, w| s.scc_point(w as u32, r));
                    records.extend(recs);
                }
                Method::Sgsc => {
                    let levels = if sgsc_levels.is_empty() { self.default_sgsc_levels() } else { sgsc_levels.to_vec() };
                    let t0 = stochastic_exponent(&vec![1; self.rates.stochastic_dim()], &self.rates);
                    let mut curves = Vec::new();
                    for l in levels {
                        let label = sgsc_label(l);
                        let recs = self.curve(&label, &[t0], step, target, &mut failures, |s, t| s.sgsc_point(l, t, r));
                        curves.push(recs.iter().map(|r| (r.work_model, r.abs_error)).collect::<Vec<_>>());
                        records.extend(recs);
                    }
                    records.extend(sgsc_envelope(&curves).into_iter().map(|(w, e)| ConvergenceRecord {
                        method: Method::Sgsc.name().into(),
                        threshold: None,
                        set_size: None,
                        work_model: w,
                        work_measured: None,
                        estimate: None,
                        abs_error: e,
                    }));
                }
            }
        }
        Ok(StudyReport {
            rates: self.rates.clone(),
            schedule: schedule.to_vec(),
            reference,
            records,
            failures,
        })
    }
}

fn record(method: String, threshold: f64, set_size: usize, work_model: f64, work_measured: u64, est: f64, reference: f64) -> ConvergenceRecord {
    ConvergenceRecord {
        method,
        threshold: Some(threshold),
        set_size: Some(set_size),
        work_model,
        work_measured: Some(work_measured),
        estimate: Some(est),
        abs_error: (est - reference).abs(),
    }
}

pub fn sgsc_label(level: u32) -> String {
    format!("sgsc@{level}")
}

/// Schedule from the config, or the automatic one.
pub fn resolve_schedule<E: Evaluator>(study: &Study<E>, config: &StudyConfig) -> anyhow::Result<Vec<f64>> {
    if config.study.schedule.is_empty() {
        study.auto_schedule(config.study.points, config.study.step)
    } else {
        Ok(config.study.schedule.clone())
    }
}

/// Full pipeline for a config: problem, rates, schedule, study.
pub fn convergence_study(config: &StudyConfig) -> anyhow::Result<StudyReport> {
    let mut study = pde_study(config)?;
    let schedule = resolve_schedule(&study, config)?;
    study.run(&config.study.methods, &schedule, &config.study.sgsc_levels)
}

/// Reference value for a config (the a-priori set at `L_max + margin`).
pub fn reference_value(config: &StudyConfig) -> anyhow::Result<Reference> {
    let mut study = pde_study(config)?;
    let schedule = resolve_schedule(&study, config)?;
    let level = schedule.last().unwrap() + study.margin();
    study.reference(level)
}

/// Log-log interpolation of a work-sorted curve at `w`; linear where an
/// endpoint error is zero. `None` outside the curve's work range.
pub fn error_at_work(curve: &[(f64, f64)], w: f64) -> Option<f64> {
    let first = curve.first()?;
    let last = curve.last()?;
    if w < first.0 || w > last.0 {
        return None;
    }
    if let Some(e) = curve.iter().filter(|p| p.0 == w).map(|p| p.1).min_by(f64::total_cmp) {
        return Some(e);
    }
    for pair in curve.windows(2) {
        let ((w0, e0), (w1, e1)) = (pair[0], pair[1]);
        if w >= w0 && w <= w1 {
            if w1 == w0 {
                return Some(e0.min(e1));
            }
            if e0 > 0.0 && e1 > 0.0 {
                let t = (w / w0).ln() / (w1 / w0).ln();
                return Some((e0.ln() + t * (e1 / e0).ln()).exp());
            }
            let t = (w - w0) / (w1 - w0);
            return Some(e0 + t * (e1 - e0));
        }
    }
    Some(first.1)
}

/// Pointwise-in-work minimum over curves, on the union of their work points.
pub fn sgsc_envelope(curves: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut grid: Vec<f64> = curves.iter().flatten().map(|p| p.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.into_iter()
        .filter_map(|w| {
            curves
                .iter()
                .filter_map(|c| error_at_work(c, w))
                .min_by(f64::total_cmp)
                .map(|e| (w, e))
        })
        .collect()
}

/// Largest work every curve reaches, and each curve's error there.
pub fn matched_work(curves: &[(&str, Vec<(f64, f64)>)]) -> Option<(f64, Vec<(String, f64)>)> {
    let w = curves
        .iter()
        .map(|(_, c)| c.last().map_or(f64::NEG_INFINITY, |p| p.0))
        .fold(f64::INFINITY, f64::min);
    let errors = curves
        .iter()
        .map(|(name, c)| error_at_work(c, w).map(|e| (name.to_string(), e)))
        .collect::<Option<Vec<_>>>()?;
    Some((w, errors))
}

pub fn write_csv<W: Write>(records: &[ConvergenceRecord], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Log-log least-squares slope of `abs_error` against `work_model`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    misc_core::rates::least_squares(&xs, &ys).0
}
