//! Grid merchandizing, local power-line exchange and renewable harvesting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Topology;

/// Grid tariff in cents per slot per mW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPrices {
    pub buy: f64,
    pub sell: f64,
}

impl Default for EnergyPrices {
    fn default() -> Self {
        EnergyPrices {
            buy: 1.6e-9,
            sell: 0.6e-9,
        }
    }
}

impl EnergyPrices {
    pub fn new(buy: f64, sell: f64) -> Result<Self> {
        let p = EnergyPrices { buy, sell };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sell >= 0.0 && self.buy > self.sell && self.buy.is_finite()) {
            return Err(Error::config(
                "energy.prices",
                format!(
                    "buy price must exceed sell price and sell must be nonnegative (buy={}, sell={})",
                    self.buy, self.sell
                ),
            ));
        }
        Ok(())
    }
}

/// Signed flow per power line (mW), positive meaning `from -> to`.
///
/// One value per undirected line, so the antisymmetry `d(m,l) = -d(l,m)` holds
/// by construction and two-way flow on a line cannot be represented.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExchangePlan {
    pub flows: Vec<f64>,
}

impl ExchangePlan {
    pub fn idle(topology: &Topology) -> Self {
        ExchangePlan {
            flows: vec![0.0; topology.lines.len()],
        }
    }

    /// Energy delivered from `m` towards the other end of line `e`, read with
    /// the sign seen from `m`.
    pub fn outgoing(&self, topology: &Topology, e: usize, m: usize) -> f64 {
        let line = &topology.lines[e];
        if line.from == m {
            self.flows[e]
        } else {
            debug_assert_eq!(line.to, m);
            -self.flows[e]
        }
    }

    /// Total energy leaving senders, summed over lines.
    pub fn total_sent(&self) -> f64 {
        self.flows.iter().map(|d| d.abs()).sum()
    }
}

/// Net energy leaving BST `m` over its local power lines:
/// `sum_l max(d, beta * d)`. A sender is debited the full amount, a receiver
/// credited the line-efficiency share.
pub fn net_exchange(plan: &ExchangePlan, m: usize, topology: &Topology) -> f64 {
    topology
        .incident_lines(m)
        .map(|(e, orientation)| {
            let d = orientation * plan.flows[e];
            d.max(topology.lines[e].efficiency * d)
        })
        .sum()
}

/// Grid expenditure of one BST for one slot, in cents:
/// `(buy - sell) * max(x, 0) + sell * x` with `x = P + E - H`.
pub fn grid_expenditure(bst_power: f64, net_exchange: f64, harvest_per_slot: f64, prices: EnergyPrices) -> f64 {
    let x = bst_power + net_exchange - harvest_per_slot;
    (prices.buy - prices.sell) * x.max(0.0) + prices.sell * x
}

/// Renewable energy harvested by each BST over one frame (mW * slot).
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestState {
    pub per_frame: Vec<f64>,
    pub frame_len: usize,
}

impl HarvestState {
    /// The share available in every slot of the frame.
    pub fn per_slot(&self) -> Vec<f64> {
        self.per_frame.iter().map(|e| e / self.frame_len as f64).collect()
    }
}

/// Frame harvest `T * u` with `u` uniform on `[0, 2 * mean]` per BST.
pub fn draw_harvest<R: Rng + ?Sized>(mean_per_slot: &[f64], frame_len: usize, rng: &mut R) -> HarvestState {
    let per_frame = mean_per_slot
        .iter()
        .map(|&mean| {
            let u: f64 = rng.random();
            frame_len as f64 * 2.0 * mean * u
        })
        .collect();
    HarvestState { per_frame, frame_len }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::model::PowerLine;

    #[test]
    fn single_line_endpoints() {
        let t = Topology::uniform(vec![1, 1], 1, 100.0);
        let plan = ExchangePlan { flows: vec![10.0] };
        assert_relative_eq!(net_exchange(&plan, 0, &t), 10.0);
        assert_relative_eq!(net_exchange(&plan, 1, &t), -8.0);
        let idle = ExchangePlan::idle(&t);
        assert_eq!(net_exchange(&idle, 0, &t), 0.0);
        assert_eq!(net_exchange(&idle, 1, &t), 0.0);
    }

    #[test]
    fn star_hub_sums_lines() {
        // Hub 0 sends 5 to BST 1 and receives 5 from BST 2.
        let mut t = Topology::uniform(vec![1, 1, 1], 1, 100.0);
        t.lines = vec![
            PowerLine { from: 0, to: 1, efficiency: 0.8 },
            PowerLine { from: 0, to: 2, efficiency: 0.8 },
        ];
        let plan = ExchangePlan { flows: vec![5.0, -5.0] };
        assert_relative_eq!(net_exchange(&plan, 0, &t), 1.0);
    }

    #[test]
    fn expenditure_branches() {
        let prices = EnergyPrices::default();
        assert_relative_eq!(grid_expenditure(100.0, 0.0, 0.0, prices), 1.6e-7, max_relative = 1e-12);
        assert_relative_eq!(grid_expenditure(0.0, 0.0, 100.0, prices), -0.6e-7, max_relative = 1e-12);
        assert_eq!(grid_expenditure(50.0, 0.0, 50.0, prices), 0.0);
    }

    #[test]
    fn price_validation() {
        assert!(EnergyPrices::new(1.0, 1.0).is_err());
        assert!(EnergyPrices::new(1.0, 2.0).is_err());
        assert!(EnergyPrices::new(1.0, -0.1).is_err());
        assert!(EnergyPrices::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn harvest_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = draw_harvest(&[0.0], 5, &mut rng);
        assert_eq!(h.per_frame, vec![0.0]);

        let frames = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mean = (0..frames)
            .map(|_| draw_harvest(&[300.0], 5, &mut rng).per_slot()[0])
            .sum::<f64>()
            / frames as f64;
        assert!((mean / 300.0 - 1.0).abs() < 0.02, "{mean}");

        let a = draw_harvest(&[300.0, 200.0], 5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = draw_harvest(&[300.0, 200.0], 5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn endpoints_never_share_sign_and_loss_is_exact(d in -500.0f64..500.0, beta in 0.01f64..0.99) {
                let mut t = Topology::uniform(vec![1, 1], 1, 100.0);
                t.lines[0].efficiency = beta;
                let plan = ExchangePlan { flows: vec![d] };
                let a = net_exchange(&plan, 0, &t);
                let b = net_exchange(&plan, 1, &t);
                prop_assert!(a * b <= 0.0);
                let (sender, receiver) = if d >= 0.0 { (a, b) } else { (b, a) };
                prop_assert!((-receiver - beta * sender).abs() <= 1e-12 * sender.abs().max(1.0));
            }

            #[test]
            fn expenditure_is_convex_piecewise_linear(x in -1e3f64..1e3, y in -1e3f64..1e3, lam in 0.0f64..1.0) {
                let prices = EnergyPrices::default();
                let g = |v: f64| grid_expenditure(v, 0.0, 0.0, prices);
                let mix = g(lam * x + (1.0 - lam) * y);
                prop_assert!(mix <= lam * g(x) + (1.0 - lam) * g(y) + 1e-18);
                if x <= y {
                    prop_assert!(g(x) <= g(y));
                }
                let expected = if x >= 0.0 { prices.buy * x } else { prices.sell * x };
                prop_assert!((g(x) - expected).abs() <= 1e-22 + 1e-12 * expected.abs());
            }
        }
    }
}
