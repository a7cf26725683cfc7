use cdukf::linalg::cholesky_lower;
use cdukf::model::{euler_maruyama_truth, synthesize_measurements};
use cdukf::{CoordinatedTurn, Filter, FilterVariant, OdeOptions, SamplingSchedule, SystemModel, UtParams, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn scenario(delta: f64, schedule: &SamplingSchedule, seed: u64) -> (CoordinatedTurn, Vec<Vector>, Vec<Vector>) {
    let model = CoordinatedTurn::new_degree_valued(delta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = euler_maruyama_truth(&model, &model.initial_mean(), 5e-4, schedule, &mut rng).unwrap();
    let noise: Vec<Vector> = (0..schedule.len())
        .map(|_| Vector::from_fn(2, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let z = synthesize_measurements(&model, &truth, &noise).unwrap();
    (model, truth, z)
}

fn filter(variant: FilterVariant) -> Filter {
    Filter::new(variant, UtParams::classic(7), OdeOptions::with_tolerance(1e-4)).unwrap()
}

/// Every variant except the conventional MDE filter, which shuts off on this
/// problem (see the acceptance suite).
fn robust_variants() -> Vec<FilterVariant> {
    FilterVariant::all().into_iter().filter(|v| v.label() != "1").collect()
}

#[test]
fn full_run_keeps_covariances_positive_definite() {
    let schedule = SamplingSchedule::regular(150, 1.0).unwrap();
    let (model, truth, z) = scenario(0.1, &schedule, 5);
    for variant in robust_variants() {
        let run = filter(variant).run(&model, &schedule, &z);
        assert!(run.succeeded(), "{variant}: {:?}", run.failure);
        assert_eq!(run.estimates.len(), 151);
        for est in &run.estimates {
            assert!(cholesky_lower(&est.cov.matrix()).is_ok(), "{variant} at t = {}", est.t);
        }
        let last = run.estimates.last().unwrap();
        let err = ((last.mean[0] - truth[149][0]).powi(2) + (last.mean[2] - truth[149][2]).powi(2)).sqrt();
        assert!(err < 100.0, "{variant}: final position error {err}");
    }
}

#[test]
fn one_step_from_prior_agrees_across_families() {
    let schedule = SamplingSchedule::regular(1, 1.0).unwrap();
    let (model, _, z) = scenario(0.1, &schedule, 9);
    let tight = |label: &str| Filter::new(FilterVariant::from_label(label).unwrap(), UtParams::classic(7), OdeOptions::with_tolerance(1e-10)).unwrap();
    let p1 = tight("1c").run(&model, &schedule, &z);
    let p2 = tight("2c").run(&model, &schedule, &z);
    let (a, b) = (&p1.estimates[1], &p2.estimates[1]);
    let pa = a.cov.matrix();
    let ec = (&pa - b.cov.matrix()).norm() / pa.norm();
    let em = (&a.mean - &b.mean).norm() / a.mean.norm();
    assert!(ec < 1e-4 && em < 1e-4, "cov {ec:e}, mean {em:e}");
}

#[test]
fn gaps_of_two_seconds_are_integrated() {
    let full = SamplingSchedule::regular(150, 1.0).unwrap();
    let (model, _, z) = scenario(0.1, &full, 21);
    let schedule = full.thinned(|k| k % 2 == 0);
    let z: Vec<Vector> = z.into_iter().skip(1).step_by(2).collect();
    assert_eq!(schedule.len(), 75);
    for variant in FilterVariant::all().into_iter().filter(|v| v.measurement_update().is_square_root()) {
        let run = filter(variant).run(&model, &schedule, &z);
        assert!(run.succeeded(), "{variant}: {:?}", run.failure);
        assert_eq!(run.estimates.len(), 76);
    }
}

#[test]
fn empty_schedule_returns_prior() {
    let model = CoordinatedTurn::new(0.1).unwrap();
    let schedule = SamplingSchedule::new(vec![]).unwrap();
    for variant in FilterVariant::all() {
        let run = filter(variant).run(&model, &schedule, &[]);
        assert!(run.succeeded());
        assert_eq!(run.estimates.len(), 1);
        assert_eq!(run.estimates[0].mean, model.initial_mean());
    }
}

#[test]
fn conventional_mde_failure_is_reported_not_panicked() {
    let schedule = SamplingSchedule::regular(5, 1.0).unwrap();
    let (model, _, z) = scenario(0.1, &schedule, 1);
    let run = filter(FilterVariant::from_label("1").unwrap()).run(&model, &schedule, &z);
    if let Some(f) = &run.failure {
        assert_eq!(run.estimates.len(), f.step);
        assert!(!f.error.cause().is_empty());
    }
}
