//! Brute-force tree enumeration against the planner's closed forms.

use holdmeter::oracle::{enumerate, EnumerationOptions};
use holdmeter::planner::{
    binomial, count_incremental, count_multitenant, count_regular, count_time_travel, shifted_revert_steps, Mode,
    SubmissionCounts,
};
use num_bigint::BigUint;

fn as_u64(c: &SubmissionCounts) -> Vec<u64> {
    c.per_signal().iter().map(|x| u64::try_from(x).unwrap()).collect()
}

pub fn plain_trees() {
    for m in 1..=4usize {
        for t in 1..=6u32 {
            let reg = enumerate(m, t, Mode::Regular, EnumerationOptions::default()).unwrap();
            assert_eq!(reg.per_signal(), as_u64(&count_regular(m, t).unwrap()), "regular m={m} T={t}");
            for k in 1..=m {
                for d in 1..=t as usize {
                    assert_eq!(reg.h(k, d), (m as u64).pow(d as u32 - 1));
                }
            }

            let inc = enumerate(m, t, Mode::Incremental, EnumerationOptions::default()).unwrap();
            assert_eq!(inc.per_signal(), as_u64(&count_incremental(m, t).unwrap()), "incremental m={m} T={t}");
            assert_eq!(BigUint::from(inc.total), binomial((m as u64) + u64::from(t), m as u64) - 1u32);
            for k in 1..=m {
                for d in 1..=t as usize {
                    let expected = binomial((k + d - 2) as u64, (d - 1) as u64);
                    assert_eq!(BigUint::from(inc.h(k, d)), expected, "h({k},{d}) m={m} T={t}");
                }
            }
        }
    }
}

/// Every nondecreasing revert schedule of length <= 2 that the planner accepts.
fn revert_schedules(t: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for a in 1..=t {
        out.push(vec![a]);
        for b in a..=t {
            out.push(vec![a, b]);
        }
    }
    out.into_iter().filter(|s| shifted_revert_steps(t, s).is_ok()).collect()
}

pub fn revert_trees() {
    let mut checked = 0;
    for m in 1..=3usize {
        for t in 2..=5u32 {
            for schedule in revert_schedules(t) {
                for mode in [Mode::Regular, Mode::Incremental] {
                    let e = enumerate(
                        m,
                        t,
                        mode,
                        EnumerationOptions {
                            reverts: Some(&schedule),
                            tenancy: None,
                        },
                    )
                    .unwrap();
                    let formula = count_time_travel(m, t, &schedule, mode).unwrap();
                    assert_eq!(e.per_signal(), as_u64(&formula), "{mode} m={m} T={t} reverts={schedule:?}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100);
}

pub fn tenant_trees() {
    for m in 1..=3usize {
        for tenancy in [vec![1, 1], vec![2, 3], vec![3, 3], vec![1, 2, 2], vec![4]] {
            let t: u32 = tenancy.iter().sum();
            for mode in [Mode::Regular, Mode::Incremental] {
                let e = enumerate(
                    m,
                    t,
                    mode,
                    EnumerationOptions {
                        reverts: None,
                        tenancy: Some(&tenancy),
                    },
                )
                .unwrap();
                let formula = count_multitenant(m, &tenancy, mode, false).unwrap();
                assert_eq!(e.per_signal(), as_u64(&formula), "{mode} m={m} tenancy={tenancy:?}");
            }
        }
    }
}
