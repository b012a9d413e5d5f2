//! Frame-scale control: the scheduled-UE rule and Lyapunov bookkeeping.

use crate::error::{Error, Result};
use crate::queueing::TrafficSpec;

/// Scheduled-UE indicators for one frame, one flag per flat UE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSchedule {
    pub active: Vec<bool>,
}

impl FrameSchedule {
    pub fn none(num_ues: usize) -> Self {
        FrameSchedule {
            active: vec![false; num_ues],
        }
    }

    pub fn all(num_ues: usize) -> Self {
        FrameSchedule {
            active: vec![true; num_ues],
        }
    }

    /// Schedule from the bits of `mask`, bit `k` for flat UE `k`.
    pub fn from_mask(num_ues: usize, mask: u64) -> Self {
        FrameSchedule {
            active: (0..num_ues).map(|k| mask >> k & 1 == 1).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.active.iter().any(|&a| a)
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Flat indices of scheduled UEs.
    pub fn scheduled(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(k, _)| k)
    }
}

/// Frame-start scheduling rule: a UE is served iff its access backlog is
/// positive and strictly exceeds its processing backlog.
pub fn schedule_frame(access: &[f64], processing: &[f64]) -> FrameSchedule {
    FrameSchedule {
        active: access
            .iter()
            .zip(processing)
            .map(|(&qa, &qu)| !(qu - qa >= 0.0 || qa == 0.0))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConfig {
    pub v: f64,
    pub frame_len: usize,
    pub psi: f64,
}

impl LyapunovConfig {
    pub fn new(v: f64, frame_len: usize, traffic: &TrafficSpec) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::config("control.v", "must be positive"));
        }
        if frame_len == 0 {
            return Err(Error::config("control.frame_len", "must be at least 1"));
        }
        Ok(LyapunovConfig {
            v,
            frame_len,
            psi: drift_constant(traffic),
        })
    }
}

/// `((s_max)^2 + 2 (r_max)^2 + (nu_max)^2) / 2 * number of UEs`.
pub fn drift_constant(traffic: &TrafficSpec) -> f64 {
    let n = traffic.mean_arrival.len() as f64;
    (traffic.max_service.powi(2) + 2.0 * traffic.max_rate.powi(2) + traffic.max_arrival.powi(2)) / 2.0 * n
}

/// `0.5 ||q_A||^2 + 0.5 ||q_U||^2`.
pub fn lyapunov_value(access: &[f64], processing: &[f64]) -> f64 {
    0.5 * access.iter().chain(processing).map(|q| q * q).sum::<f64>()
}

/// Per-slot flows recorded during one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameTrace {
    pub arrivals: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
    pub processed: Vec<Vec<f64>>,
}

impl FrameTrace {
    pub fn push(&mut self, arrivals: &[f64], rates: &[f64], processed: &[f64]) {
        self.arrivals.push(arrivals.to_vec());
        self.rates.push(rates.to_vec());
        self.processed.push(processed.to_vec());
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftTerms {
    /// Realized `L[k+1] - L[k]`.
    pub drift: f64,
    /// `sum_t (nu - r)^T q_A[k]`.
    pub access_term: f64,
    /// `sum_t (r - s)^T q_U[k]`.
    pub processing_term: f64,
    /// `sum over queues of 0.5 * delta^2` with `delta` the frame's net flow.
    pub quadratic_term: f64,
}

impl DriftTerms {
    /// Residual of `drift = quadratic + access + processing`; zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        self.drift - (self.quadratic_term + self.access_term + self.processing_term)
    }
}

/// Realized one-frame drift and its decomposition, from frame-start backlogs
/// and the frame's recorded flows.
pub fn drift_terms(access: &[f64], processing: &[f64], frame: &FrameTrace, frame_len: usize) -> Result<DriftTerms> {
    if frame.len() != frame_len || frame.arrivals.len() != frame_len || frame.processed.len() != frame_len {
        return Err(Error::IncompleteFrame {
            expected: frame_len,
            got: frame.len(),
        });
    }
    let n = access.len();
    let mut next_a = access.to_vec();
    let mut next_u = processing.to_vec();
    let (mut access_term, mut processing_term, mut quadratic_term) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let arrived: f64 = frame.arrivals.iter().map(|v| v[k]).sum();
        let sent: f64 = frame.rates.iter().map(|v| v[k]).sum();
        let done: f64 = frame.processed.iter().map(|v| v[k]).sum();
        // Slot-by-slot to mirror the queue recursion exactly.
        for t in 0..frame_len {
            next_a[k] = next_a[k] - frame.rates[t][k] + frame.arrivals[t][k];
            next_u[k] = next_u[k] - frame.processed[t][k] + frame.rates[t][k];
        }
        let da = arrived - sent;
        let du = sent - done;
        access_term += da * access[k];
        processing_term += du * processing[k];
        quadratic_term += 0.5 * (da * da + du * du);
    }
    let drift = lyapunov_value(&next_a, &next_u) - lyapunov_value(access, processing);
    Ok(DriftTerms {
        drift,
        access_term,
        processing_term,
        quadratic_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scheduling_rule_examples() {
        assert_eq!(schedule_frame(&[5.0], &[2.0]).active, vec![true]);
        assert_eq!(schedule_frame(&[2.0], &[5.0]).active, vec![false]);
        assert_eq!(schedule_frame(&[0.0], &[0.0]).active, vec![false]);
        assert_eq!(schedule_frame(&[3.0], &[3.0]).active, vec![false]);
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_value(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(lyapunov_value(&[3.0, 4.0], &[0.0, 0.0]), 12.5);
        let a = [1.0, 2.5, 0.3];
        let u = [4.0, 0.0, 1.1];
        let a2: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        assert_relative_eq!(lyapunov_value(&a2, &u2), 4.0 * lyapunov_value(&a, &u), max_relative = 1e-15);
    }

    #[test]
    fn zero_traffic_has_zero_drift() {
        let mut frame = FrameTrace::default();
        for _ in 0..5 {
            frame.push(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]);
        }
        let d = drift_terms(&[1.0, 2.0], &[0.0, 0.5], &frame, 5).unwrap();
        assert_eq!(d.drift, 0.0);
    }

    #[test]
    fn single_queue_hand_example() {
        let mut frame = FrameTrace::default();
        frame.push(&[1.0], &[0.0], &[0.0]);
        let d = drift_terms(&[2.0], &[0.0], &frame, 1).unwrap();
        assert_relative_eq!(d.drift, 2.5);
        assert_relative_eq!(d.access_term, 2.0);
        assert_relative_eq!(d.identity_residual(), 0.0);
    }

    #[test]
    fn incomplete_frame_is_an_error() {
        let mut frame = FrameTrace::default();
        frame.push(&[1.0], &[0.0], &[0.0]);
        assert!(matches!(
            drift_terms(&[2.0], &[0.0], &frame, 5),
            Err(Error::IncompleteFrame { expected: 5, got: 1 })
        ));
    }

    #[test]
    fn drift_identity_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = 4;
            let t = 5;
            let qa0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 20.0).collect();
            let qu0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 20.0).collect();
            let (mut qa, mut qu) = (qa0.clone(), qu0.clone());
            let mut frame = FrameTrace::default();
            for _ in 0..t {
                let arrivals: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.2).collect();
                let rates: Vec<f64> = qa.iter().map(|q| q * rng.random::<f64>()).collect();
                let processed: Vec<f64> = qu.iter().map(|&q| crate::queueing::processed(q, 8.0)).collect();
                for k in 0..n {
                    qa[k] = qa[k] - rates[k] + arrivals[k];
                    qu[k] = qu[k] - processed[k] + rates[k];
                }
                frame.push(&arrivals, &rates, &processed);
            }
            let d = drift_terms(&qa0, &qu0, &frame, t).unwrap();
            // Independent evaluation from the final backlogs.
            let direct = lyapunov_value(&qa, &qu) - lyapunov_value(&qa0, &qu0);
            assert_relative_eq!(d.drift, direct, epsilon = 1e-9);
            assert!(d.identity_residual().abs() <= 1e-9 * (1.0 + d.drift.abs()));
        }
    }

    #[test]
    fn psi_formula() {
        let traffic = TrafficSpec::uniform(6, 2.1, 8.0, 10.0);
        let cfg = LyapunovConfig::new(0.1, 5, &traffic).unwrap();
        let expected = (64.0 + 200.0 + 4.2f64 * 4.2) / 2.0 * 6.0;
        assert_relative_eq!(cfg.psi, expected);
        assert!(LyapunovConfig::new(0.0, 5, &traffic).is_err());
        assert!(LyapunovConfig::new(1.0, 0, &traffic).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn rule_never_schedules_empty_or_dominated(
                qa in proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..50.0], 1..8),
                seed in any::<u64>(),
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let qu: Vec<f64> = qa.iter().map(|_| rng.random::<f64>() * 50.0).collect();
                let s = schedule_frame(&qa, &qu);
                for k in 0..qa.len() {
                    if qa[k] == 0.0 {
                        prop_assert!(!s.active[k]);
                    }
                    if s.active[k] {
                        prop_assert!(qa[k] > qu[k]);
                    }
                }
            }
        }
    }
}
