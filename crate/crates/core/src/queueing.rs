//! Access and processing queue dynamics plus traffic generation.
//!
//! All backlogs and rates are in nats/Hz (per slot for rates).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    /// Mean arrival per UE.
    pub mean_arrival: Vec<f64>,
    pub max_arrival: f64,
    /// Constant processing rate per UE.
    pub processing_rate: Vec<f64>,
    pub max_rate: f64,
    pub max_service: f64,
}

impl TrafficSpec {
    pub fn uniform(num_ues: usize, mean_arrival: f64, processing_rate: f64, max_rate: f64) -> Self {
        TrafficSpec {
            mean_arrival: vec![mean_arrival; num_ues],
            max_arrival: 2.0 * mean_arrival,
            processing_rate: vec![processing_rate; num_ues],
            max_rate,
            max_service: processing_rate,
        }
    }

    pub fn validate(&self, num_ues: usize) -> Result<()> {
        if self.mean_arrival.len() != num_ues {
            return Err(Error::config(
                "traffic.mean_arrival",
                format!("expected {num_ues} entries"),
            ));
        }
        if self.processing_rate.len() != num_ues {
            return Err(Error::config(
                "traffic.processing_rate",
                format!("expected {num_ues} entries"),
            ));
        }
        for (k, &nu) in self.mean_arrival.iter().enumerate() {
            if !(nu >= 0.0 && nu.is_finite()) {
                return Err(Error::config(
                    format!("traffic.mean_arrival[{k}]"),
                    "must be nonnegative",
                ));
            }
            if 2.0 * nu > self.max_arrival {
                return Err(Error::config(
                    format!("traffic.mean_arrival[{k}]"),
                    format!(
                        "arrivals are uniform on [0, {}] which exceeds max_arrival {}",
                        2.0 * nu,
                        self.max_arrival
                    ),
                ));
            }
        }
        for (k, &s) in self.processing_rate.iter().enumerate() {
            if !(s > 0.0 && s <= self.max_service) {
                return Err(Error::config(
                    format!("traffic.processing_rate[{k}]"),
                    format!("must lie in (0, max_service = {}]", self.max_service),
                ));
            }
        }
        if !(self.max_rate > 0.0 && self.max_rate.is_finite()) {
            return Err(Error::config("traffic.max_rate", "must be positive"));
        }
        Ok(())
    }
}

/// One arrival per UE, uniform on `[0, 2 * mean]` and clipped at `max_arrival`.
pub fn draw_arrivals<R: Rng + ?Sized>(spec: &TrafficSpec, rng: &mut R) -> Vec<f64> {
    spec.mean_arrival
        .iter()
        .map(|&mean| {
            let u: f64 = rng.random();
            (2.0 * mean * u).min(spec.max_arrival)
        })
        .collect()
}

/// Access-queue update `q - r + nu`. The rate may not exceed the backlog.
pub fn step_access(backlog: f64, rate: f64, arrival: f64) -> Result<f64> {
    if rate > backlog || rate < 0.0 {
        return Err(Error::RateExceedsBacklog { rate, backlog });
    }
    Ok(backlog - rate + arrival)
}

/// Amount actually processed in a slot: `min(s, q)`.
pub fn processed(backlog: f64, processing_rate: f64) -> f64 {
    processing_rate.min(backlog)
}

/// Processing-queue update `q - min(s, q) + r`.
pub fn step_processing(backlog: f64, processing_rate: f64, rate: f64) -> f64 {
    backlog - processed(backlog, processing_rate) + rate
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    pub access: Vec<f64>,
    pub processing: Vec<f64>,
    pub slot: u64,
}

/// Per-slot flows produced by [`QueueState::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlotFlows {
    pub arrivals: Vec<f64>,
    pub rates: Vec<f64>,
    pub processed: Vec<f64>,
}

impl QueueState {
    pub fn empty(num_ues: usize) -> Self {
        QueueState {
            access: vec![0.0; num_ues],
            processing: vec![0.0; num_ues],
            slot: 0,
        }
    }

    /// Advances both queues of every UE by one slot.
    pub fn step(&mut self, rates: &[f64], arrivals: &[f64], processing_rate: &[f64]) -> Result<SlotFlows> {
        let n = self.access.len();
        let mut served = Vec::with_capacity(n);
        for k in 0..n {
            let s = processed(self.processing[k], processing_rate[k]);
            self.access[k] = step_access(self.access[k], rates[k], arrivals[k])?;
            self.processing[k] = step_processing(self.processing[k], processing_rate[k], rates[k]);
            served.push(s);
        }
        self.slot += 1;
        Ok(SlotFlows {
            arrivals: arrivals.to_vec(),
            rates: rates.to_vec(),
            processed: served,
        })
    }

    pub fn total_backlog(&self) -> f64 {
        self.access.iter().sum::<f64>() + self.processing.iter().sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn access_step_examples() {
        assert_eq!(step_access(5.0, 2.0, 1.0).unwrap(), 4.0);
        assert_eq!(step_access(0.0, 0.0, 3.0).unwrap(), 3.0);
        assert_eq!(step_access(2.5, 2.5, 0.0).unwrap(), 0.0);
        assert!(matches!(
            step_access(1.0, 1.5, 0.0),
            Err(Error::RateExceedsBacklog { .. })
        ));
    }

    #[test]
    fn processing_step_examples() {
        assert_eq!(step_processing(3.0, 8.0, 2.0), 2.0);
        assert_eq!(step_processing(10.0, 8.0, 0.0), 2.0);
        assert_eq!(step_processing(0.0, 8.0, 0.0), 0.0);
    }

    #[test]
    fn zero_mean_arrivals_are_zero() {
        let spec = TrafficSpec::uniform(3, 0.0, 8.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(draw_arrivals(&spec, &mut rng).iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn arrival_sample_mean() {
        let spec = TrafficSpec::uniform(1, 2.1, 8.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mean = (0..n).map(|_| draw_arrivals(&spec, &mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean / 2.1 - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn arrivals_are_seeded() {
        let spec = TrafficSpec::uniform(6, 2.1, 8.0, 10.0);
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| draw_arrivals(&spec, &mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| draw_arrivals(&spec, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn validation_rejects_wide_arrivals() {
        let mut spec = TrafficSpec::uniform(2, 2.1, 8.0, 10.0);
        spec.max_arrival = 4.0;
        assert!(spec.validate(2).is_err());
        let spec = TrafficSpec::uniform(2, 2.1, 8.0, 10.0);
        spec.validate(2).unwrap();
        assert!(spec.validate(3).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn backlogs_stay_nonnegative_and_conserve(
                steps in proptest::collection::vec((0.0f64..1.0, 0.0f64..5.0), 1..60),
                s in 0.5f64..10.0,
            ) {
                let mut q = QueueState::empty(1);
                let (mut admitted, mut sent, mut done) = (0.0, 0.0, 0.0);
                for (phi, nu) in steps {
                    let r = q.access[0] * phi;
                    let flows = q.step(&[r], &[nu], &[s]).unwrap();
                    prop_assert!(q.access[0] >= 0.0 && q.processing[0] >= 0.0);
                    admitted += nu;
                    sent += flows.rates[0];
                    done += flows.processed[0];
                }
                prop_assert!((admitted - sent - q.access[0]).abs() <= 1e-9 * admitted.max(1.0));
                prop_assert!((sent - done - q.processing[0]).abs() <= 1e-9 * sent.max(1.0));
            }

            #[test]
            fn frame_telescoping_matches_stepping(
                start in 0.0f64..20.0,
                flows in proptest::collection::vec((0.0f64..1.0, 0.0f64..5.0), 1..10),
            ) {
                let mut q = start;
                let (mut sum_nu, mut sum_r) = (0.0, 0.0);
                for (phi, nu) in flows {
                    let r = q * phi;
                    q = step_access(q, r, nu).unwrap();
                    sum_nu += nu;
                    sum_r += r;
                }
                assert_relative_eq!(q, start + sum_nu - sum_r, epsilon = 1e-9, max_relative = 1e-12);
            }
        }
    }
}
