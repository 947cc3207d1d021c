//! Random meter configurations and the solver properties checked on them.

use holdmeter::planner::{equal_width_bands, log_survival, plan, EpsilonSchedule, MeterSpec, Mode};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Regular), Just(Mode::Incremental)]
}

/// Nondecreasing schedule of length m.
pub fn schedule(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.005f64..0.2, m).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

pub fn spec_strategy() -> impl Strategy<Value = MeterSpec> {
    (1usize..=6, 1u32..=40, 0.001f64..0.5, mode())
        .prop_flat_map(|(m, t, delta, mode)| schedule(m).prop_map(move |eps| build(mode, eps, t, delta)))
}

/// Spec plus the knobs `monotone` perturbs it with.
pub fn monotone_case() -> impl Strategy<Value = (MeterSpec, f64, usize)> {
    (spec_strategy(), 0.5f64..0.99, 0usize..6)
}

pub fn build(mode: Mode, eps: Vec<f64>, steps: u32, delta: f64) -> MeterSpec {
    let m = eps.len();
    let spec = MeterSpec {
        mode,
        bands: equal_width_bands(m),
        epsilons: EpsilonSchedule::new(eps).unwrap(),
        delta,
        steps,
        tenancy: vec![steps],
        revert_steps: vec![],
        conservative_multitenant: false,
    };
    spec.validate().unwrap();
    spec
}

fn size(spec: &MeterSpec) -> u64 {
    plan(spec).unwrap().required_size
}

/// The answer passes the strict test and one label fewer does not.
pub fn minimal(spec: &MeterSpec) -> Result<(), TestCaseError> {
    let report = plan(spec).unwrap();
    let n = report.required_size;
    let ln_delta = spec.delta.ln();
    prop_assert!(log_survival(n, &report.counts, &spec.epsilons).unwrap() < ln_delta);
    prop_assert!(log_survival(n - 1, &report.counts, &spec.epsilons).unwrap() >= ln_delta);
    Ok(())
}

/// Longer cycles, more signals, smaller delta and tighter tolerances never
/// shrink the answer.
pub fn monotone(spec: &MeterSpec, shrink: f64, k: usize) -> Result<(), TestCaseError> {
    let base = size(spec);
    let eps = spec.epsilons.as_slice().to_vec();

    let longer = build(spec.mode, eps.clone(), spec.steps + 1, spec.delta);
    prop_assert!(size(&longer) >= base, "T");

    let mut wider = eps.clone();
    wider.push(*eps.last().unwrap());
    prop_assert!(size(&build(spec.mode, wider, spec.steps, spec.delta)) >= base, "m");

    let stricter = build(spec.mode, eps.clone(), spec.steps, spec.delta * shrink);
    prop_assert!(size(&stricter) >= base, "delta");

    // tighten eps_k, pulling down earlier entries to keep the schedule sorted
    let k = k % eps.len();
    let mut tight = eps.clone();
    tight[k] *= shrink;
    for j in 0..k {
        tight[j] = tight[j].min(tight[k]);
    }
    prop_assert!(size(&build(spec.mode, tight, spec.steps, spec.delta)) >= base, "eps");
    Ok(())
}
