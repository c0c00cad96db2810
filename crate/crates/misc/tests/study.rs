use misc::config::{Method, StudyConfig};
use misc::study::{convergence_study, pde_study, resolve_schedule, write_csv};
use misc_core::estimator::measured_set_work;
use misc_core::index_sets::apriori_set;
use misc_core::Mode;

fn toy() -> StudyConfig {
    let mut c = StudyConfig::default();
    c.problem.dof_cap = 1 << 14;
    c
}

#[test]
fn csv_bytes_are_deterministic() {
    let mut c = toy();
    c.study.methods = Method::ALL.to_vec();
    let bytes = || {
        let mut out = Vec::new();
        write_csv(&convergence_study(&c).unwrap().records, &mut out).unwrap();
        out
    };
    let first = bytes();
    assert!(first.len() > 100);
    assert_eq!(first, bytes());
}

#[test]
fn measured_work_matches_the_cache_tally() {
    let c = toy();
    let rates = c.rate_model().unwrap();
    for mode in [Mode::Combination, Mode::Surplus] {
        let mut study = pde_study(&c).unwrap();
        let set = apriori_set(24.0, &rates).unwrap();
        study.estimate_set(&set, mode).unwrap();
        let tally = study.cache().tally();
        assert_eq!(tally.dof_points, measured_set_work(&set, mode, &study.eval).unwrap());

        // Warm cache: nothing new is solved.
        study.estimate_set(&set, mode).unwrap();
        assert_eq!(study.cache().tally(), tally);
    }
}

#[test]
fn warm_study_rerun_costs_nothing() {
    let c = toy();
    let mut study = pde_study(&c).unwrap();
    let schedule = resolve_schedule(&study, &c).unwrap();
    let methods = [Method::MiscApriori, Method::MiscAposteriori];
    let first = study.run(&methods, &schedule, &[]).unwrap();
    let tally = study.cache().tally();
    assert!(tally.evaluations > 0);
    let second = study.run(&methods, &schedule, &[]).unwrap();
    assert_eq!(study.cache().tally(), tally);
    assert_eq!(first.records, second.records);
}

#[test]
fn apriori_work_increases_along_the_schedule() {
    let report = convergence_study(&toy()).unwrap();
    let work: Vec<f64> = report.method_records("misc-apriori").map(|r| r.work_model).collect();
    assert_eq!(work.len(), 6);
    assert!(work.windows(2).all(|w| w[0] < w[1]), "{work:?}");
    assert!(report.records.iter().all(|r| r.abs_error >= 0.0));
    assert!(report.failures.is_empty(), "{:?}", report.failures);
}

#[test]
fn reference_is_stable_under_a_larger_margin() {
    let c = toy();
    let mut study = pde_study(&c).unwrap();
    let schedule = resolve_schedule(&study, &c).unwrap();
    // One schedule step lower keeps the larger reference within the cap.
    let level = schedule[schedule.len() - 2] + study.margin();
    let step = study.rates.max_spatial_step();
    let a = study.reference(level).unwrap().value;
    let b = study.reference(level + step).unwrap().value;
    assert!((a - b).abs() <= 5e-7 * b.abs(), "{a} vs {b}");
}
