//! Rate fitting against the PDE evaluator.

use misc_core::estimator::mixed_difference;
use misc_core::rates::{
    fit_spatial_rates, fit_stochastic_rates, mixed_ray, spatial_ray, stochastic_ray,
    verify_product_structure, ProductCheck, RaySamples,
};
use misc_core::{Evaluator, MultiIndex, RateModel, Result, SurplusCache};

use crate::config::FitConfig;

#[derive(Debug, Clone)]
pub struct FitReport {
    pub rates: RateModel,
    pub spatial_rays: Vec<RaySamples>,
    pub stochastic_rays: Vec<RaySamples>,
    /// Ray `alpha = j 1 + 1`, `beta = j e_1 + 1` against the fitted model.
    pub product: ProductCheck,
}

/// Fit `r~` per spatial direction (at `beta = 1`) and `g` per variable (at
/// `alpha_fine`), keeping the given work rates.
pub fn fit_rates<E: Evaluator + ?Sized>(
    eval: &E,
    spatial: usize,
    stochastic: usize,
    gamma_tilde: &[f64],
    cfg: &FitConfig,
    cache: &mut SurplusCache,
) -> Result<FitReport> {
    let spatial_rays = (0..spatial)
        .map(|i| spatial_ray(eval, cache, spatial, stochastic, i, cfg.spatial_samples))
        .collect::<Result<Vec<_>>>()?;
    let alpha_fine = cfg.alpha_fine(spatial);
    let stochastic_rays = (0..stochastic)
        .map(|n| stochastic_ray(eval, cache, &alpha_fine, stochastic, n, cfg.stochastic_samples))
        .collect::<Result<Vec<_>>>()?;
    let r_tilde = fit_spatial_rates(&spatial_rays)?;
    let g = fit_stochastic_rates(&stochastic_rays)?;
    let rates = RateModel::from_tilde(gamma_tilde, &r_tilde, &g)?;

    let mut direction = vec![1; spatial];
    direction.extend((0..stochastic).map(|n| u32::from(n == 0)));
    let ray = mixed_ray(eval, cache, direction, spatial, 3)?;
    let anchor = mixed_difference(&MultiIndex::ones(spatial, stochastic), eval, cache)?.abs();
    let product = verify_product_structure(&ray, &rates, anchor);
    Ok(FitReport {
        rates,
        spatial_rays,
        stochastic_rays,
        product,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use misc_core::estimator::FnEvaluator;

    #[test]
    fn recovers_planted_product_rates() {
        // dF_{a,b} = 4^-a e^{-1.2 2^b} exactly when F sums the surpluses.
        let eval = FnEvaluator(|alpha: &[u32], y: &[f64]| {
            let spatial = 1.0 - 4f64.powi(-(alpha[0] as i32)) / 3.0;
            spatial * (0.3 * y[0]).exp()
        });
        let cfg = FitConfig::default();
        let mut cache = SurplusCache::new();
        let report = fit_rates(&eval, 1, 1, &[1.0], &cfg, &mut cache).unwrap();
        assert!((report.rates.r_tilde()[0] - 2.0).abs() < 1e-6, "{:?}", report.rates);
        assert!(report.rates.gs[0] > 0.0);
        assert_eq!(report.spatial_rays[0].values.len(), 6);
    }
}
