//! Randomized session traces through a durable registry, checked against an
//! independent recomputation of every signal and replayed after restart.

use holdmeter::engine::SignalReport;
use holdmeter::planner::{bands_from_cuts, Band, EpsilonSchedule, MeterSpec, Mode};
use holdmeter::registry::{LabelMap, Mutation, Outcome, Principal, Registry, RegistryError, Role};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn admin() -> Principal {
    Principal::new("root", Role::Admin, "x")
}

fn random_spec(rng: &mut ChaCha8Rng) -> MeterSpec {
    let m = rng.random_range(1..=4usize);
    let mut cuts: Vec<f64> = (0..m - 1).map(|_| rng.random_range(1..20) as f64 / 40.0).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let bands = bands_from_cuts(&cuts).unwrap();
    let mut eps: Vec<f64> = (0..bands.len()).map(|_| rng.random_range(0.15..0.3)).collect();
    eps.sort_by(f64::total_cmp);
    let steps = rng.random_range(1..=7u32);
    let mode = if rng.random_bool(0.5) { Mode::Regular } else { Mode::Incremental };
    let (tenancy, revert_steps) = match rng.random_range(0..3) {
        0 if steps >= 2 => {
            let first = rng.random_range(1..steps);
            (vec![first, steps - first], vec![])
        }
        1 if steps >= 2 => {
            let b = rng.random_range(1..=(steps - 1).min(2));
            let mut r: Vec<u32> = (0..b).map(|_| rng.random_range(1..=steps)).collect();
            r.sort();
            // keep shifted steps valid: t_i - (i - 1) >= 1
            for (i, t) in r.iter_mut().enumerate() {
                *t = (*t).max(i as u32 + 1);
            }
            (vec![steps], r)
        }
        _ => (vec![steps], vec![]),
    };
    let spec = MeterSpec {
        mode,
        bands,
        epsilons: EpsilonSchedule::new(eps).unwrap(),
        delta: rng.random_range(0.05..0.3),
        steps,
        tenancy,
        revert_steps,
        conservative_multitenant: rng.random_bool(0.3),
    };
    spec.validate().unwrap();
    spec
}

fn labels(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> LabelMap {
    (0..n).map(|i| (format!("{prefix}{i}"), rng.random_range(0..3))).collect()
}

/// Predictions that are wrong on a random fraction of each set.
fn predictions(rng: &mut ChaCha8Rng, sets: &[&LabelMap]) -> LabelMap {
    let mut out = LabelMap::new();
    for set in sets {
        let wrong = rng.random_range(0.0..1.0);
        for (id, &label) in *set {
            let pred = if rng.random_bool(wrong) { label + 1 } else { label };
            out.insert(id.clone(), pred);
        }
    }
    out
}

fn band_by_scan(bands: &[Band], delta: f64) -> usize {
    let last = bands.len();
    for (i, b) in bands.iter().enumerate() {
        let inside = if i + 1 == last {
            b.lower <= delta && delta <= b.upper
        } else {
            b.lower <= delta && delta < b.upper
        };
        if inside {
            return i + 1;
        }
    }
    panic!("{delta} is outside every band")
}

fn overfitting(labels_val: &LabelMap, labels_test: &LabelMap, preds: &LabelMap) -> f64 {
    let wrong = |set: &LabelMap| set.iter().filter(|(id, l)| preds[*id] != **l).count() as u64;
    let (ev, nv) = (wrong(labels_val), labels_val.len() as u64);
    let (et, nt) = (wrong(labels_test), labels_test.len() as u64);
    let num = (ev * nt).abs_diff(et * nv);
    num as f64 / (nv * nt) as f64
}

/// Runs one trace; returns how many reverts, handoffs and rotations succeeded.
pub fn run_trace(seed: u64) -> [u32; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng);
    let required = holdmeter::planner::plan(&spec).unwrap().required_size as usize;
    let dir = tempfile::tempdir().unwrap();
    let mut reg = Registry::open(dir.path()).unwrap().with_snapshot_every(rng.random_range(2..10));
    let p = admin();
    let m0 = Mutation::default();

    let n = rng.random_range(5..60);
    let val_labels = labels(&mut rng, "v", n);
    let val = reg.register_dataset(&p, None, val_labels.clone(), false, 0, &m0).unwrap();
    let n = required + rng.random_range(0..30);
    let mut test_labels = labels(&mut rng, "t0-", n);
    let mut test = reg.register_dataset(&p, None, test_labels.clone(), true, 0, &m0).unwrap();
    let session = reg.create_session(&p, spec.clone(), val, test.clone(), 0, &m0).unwrap().id;

    let mut reports: Vec<SignalReport> = Vec::new();
    // retained raw signals for the current tenant and test set
    let mut retained: Vec<usize> = Vec::new();
    let mut accepted = 0u32;
    let mut reverts = 0u32;
    let mut rotations = 0;
    let mut last_shown = 0usize;
    let mut applied = [0u32; 3];
    for now in 1..40u64 {
        let status = reg.status(&p, &session).unwrap();
        let action = *["submit", "submit", "submit", "revert", "handoff", "rotate"].choose(&mut rng).unwrap();
        let result = match action {
            "submit" => {
                let preds = predictions(&mut rng, &[&val_labels, &test_labels]);
                let expected = band_by_scan(&spec.bands, overfitting(&val_labels, &test_labels, &preds));
                let r = reg.submit(&p, &session, preds, now, &m0);
                if let Ok(report) = &r {
                    accepted += 1;
                    retained.push(expected);
                    let hist = reg.history(&p, &session).unwrap();
                    assert_eq!(hist.retained.last().unwrap().signal, Some(expected));
                    match spec.mode {
                        Mode::Regular => assert_eq!(report.signal, Some(expected)),
                        Mode::Incremental => {
                            assert_eq!(report.signal, None);
                            assert!(report.incremental_signal >= last_shown, "monotone between reverts");
                        }
                    }
                }
                r
            }
            "revert" => {
                let r = reg.revert(&p, &session, now, &m0);
                if r.is_ok() {
                    reverts += 1;
                    applied[0] += 1;
                    retained.pop();
                }
                r
            }
            "handoff" => {
                let r = reg.handoff(&p, &session, now, &m0);
                if r.is_ok() {
                    retained.clear();
                    applied[1] += 1;
                }
                r
            }
            _ => {
                rotations += 1;
                let n = required + rng.random_range(0..30);
                let fresh = labels(&mut rng, &format!("t{rotations}-"), n);
                let id = reg.register_dataset(&p, None, fresh.clone(), true, now, &m0).unwrap();
                let r = reg.rotate(&p, &session, id.clone(), now, &m0).map(|(_, r)| r);
                if r.is_ok() {
                    assert_eq!(status.remaining_submissions, 0);
                    let dev = Principal::new("d", Role::Developer, "y");
                    assert!(reg.read_labels(&dev, &test).unwrap().reveals_labels());
                    test = id;
                    test_labels = fresh;
                    retained.clear();
                    accepted = 0;
                    reverts = 0;
                    applied[2] += 1;
                }
                r
            }
        };
        match result {
            Ok(report) => {
                if spec.mode == Mode::Incremental {
                    assert_eq!(report.incremental_signal, retained.iter().copied().max().unwrap_or(0));
                }
                assert!(accepted <= spec.steps);
                assert!(reverts <= spec.revert_budget());
                assert_eq!(report.remaining_submissions, spec.steps - accepted);
                assert_eq!(report.remaining_reverts, spec.revert_budget() - reverts);
                if let (Some(band), Some(eps)) = (report.band, report.epsilon_bound) {
                    let (lo, hi) = report.derived_ovft_interval.unwrap();
                    assert_eq!(lo, (band.lower - eps).max(0.0));
                    assert_eq!(hi, band.upper + eps);
                }
                last_shown = report.incremental_signal;
                reports.push(report);
            }
            Err(RegistryError::Engine(_)) => {}
            Err(e) => panic!("seed {seed}: unexpected {e}"),
        }
    }

    // retired test sets are readable by developers, the live one is not
    let dev = Principal::new("d", Role::Developer, "y");
    assert!(!reg.read_labels(&dev, &test).unwrap().reveals_labels());

    let digest = reg.state_digest();
    let final_status = serde_json::to_string(&reg.status(&p, &session).unwrap()).unwrap();
    let final_history = serde_json::to_string(&reg.history(&p, &session).unwrap()).unwrap();
    drop(reg);
    let restored = Registry::open(dir.path()).unwrap();
    assert_eq!(restored.state_digest(), digest, "seed {seed}");
    assert_eq!(serde_json::to_string(&restored.status(&p, &session).unwrap()).unwrap(), final_status);
    assert_eq!(serde_json::to_string(&restored.history(&p, &session).unwrap()).unwrap(), final_history);

    // a full replay of the log reproduces every report byte for byte
    let replayed: Vec<String> = Registry::replay_log(dir.path())
        .unwrap()
        .into_iter()
        .filter_map(|o| match o {
            Outcome::Report { report } | Outcome::Rotated { report, .. } => Some(serde_json::to_string(&report).unwrap()),
            _ => None,
        })
        .collect();
    let live: Vec<String> = reports.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    assert_eq!(replayed, live, "seed {seed}");
    applied
}

