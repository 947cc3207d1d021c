use serde::{Deserialize, Serialize};

use crate::planner::MeterSpec;

use super::SimError;

/// Validation and test accuracy of one recorded submission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Signals a developer would have seen for a recorded trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedTrace {
    pub overfitting: Vec<f64>,
    pub regular: Vec<usize>,
    pub incremental: Vec<usize>,
}

/// Accuracy differences are snapped to this grid before band lookup so that
/// e.g. 0.80 - 0.75 lands on the 0.05 boundary rather than just below it.
const GRID: f64 = 1e12;

/// Band each step of `trace` under `spec`'s bands, in both modes.
pub fn replay_trace(trace: &[TracePoint], spec: &MeterSpec) -> Result<RenderedTrace, SimError> {
    let mut out = RenderedTrace {
        overfitting: Vec::with_capacity(trace.len()),
        regular: Vec::with_capacity(trace.len()),
        incremental: Vec::with_capacity(trace.len()),
    };
    let mut high = 0;
    for (i, p) in trace.iter().enumerate() {
        for (name, v) in [("val_accuracy", p.val_accuracy), ("test_accuracy", p.test_accuracy)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Trace(format!("step {}: {name} = {v} is outside [0, 1]", i + 1)));
            }
        }
        let delta = ((p.val_accuracy - p.test_accuracy).abs() * GRID).round() / GRID;
        let signal = spec.band_index(delta);
        high = high.max(signal);
        out.overfitting.push(delta);
        out.regular.push(signal);
        out.incremental.push(high);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{bands_from_cuts, EpsilonSchedule, Mode};

    fn fig2() -> MeterSpec {
        MeterSpec {
            mode: Mode::Regular,
            bands: bands_from_cuts(&[0.05, 0.1, 0.2]).unwrap(),
            epsilons: EpsilonSchedule::uniform(0.01, 4).unwrap(),
            delta: 0.1,
            steps: 8,
            tenancy: vec![8],
            revert_steps: vec![],
            conservative_multitenant: false,
        }
    }

    fn trace_from(deltas: &[f64]) -> Vec<TracePoint> {
        deltas
            .iter()
            .map(|d| TracePoint {
                val_accuracy: 0.9,
                test_accuracy: 0.9 - d,
            })
            .collect()
    }

    #[test]
    fn eight_step_example() {
        let t = trace_from(&[0.01, 0.03, 0.02, 0.06, 0.04, 0.02, 0.07, 0.05]);
        let r = replay_trace(&t, &fig2()).unwrap();
        assert_eq!(r.regular, vec![1, 1, 1, 2, 1, 1, 2, 2]);
        assert_eq!(r.incremental, vec![1, 1, 1, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn zeros_and_full_gap() {
        let r = replay_trace(&trace_from(&[0.0; 4]), &fig2()).unwrap();
        assert_eq!(r.regular, vec![1; 4]);
        let t = [TracePoint {
            val_accuracy: 1.0,
            test_accuracy: 0.0,
        }];
        assert_eq!(replay_trace(&t, &fig2()).unwrap().regular, vec![4]);
    }

    #[test]
    fn rejects_out_of_range() {
        let t = [TracePoint {
            val_accuracy: 1.2,
            test_accuracy: 0.5,
        }];
        assert!(matches!(replay_trace(&t, &fig2()), Err(SimError::Trace(_))));
    }
}
