//! Owned per-slot instances for unit tests.

use rand::Rng;

use crate::controller::FrameSchedule;
use crate::energy::EnergyPrices;
use crate::model::{draw_channels, ChannelRealization, Topology, C64};
use crate::solver::PerSlotProblem;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub topology: Topology,
    pub channel: ChannelRealization,
    pub schedule: FrameSchedule,
    pub access_now: Vec<f64>,
    pub access_frame: Vec<f64>,
    pub processing_frame: Vec<f64>,
    pub harvest: Vec<f64>,
    pub prices: EnergyPrices,
    pub v: f64,
}

impl Fixture {
    pub fn problem(&self) -> PerSlotProblem<'_> {
        PerSlotProblem {
            topology: &self.topology,
            channel: &self.channel,
            schedule: &self.schedule,
            access_now: &self.access_now,
            access_frame: &self.access_frame,
            processing_frame: &self.processing_frame,
            harvest_per_slot: &self.harvest,
            prices: self.prices,
            v: self.v,
        }
    }

    /// One BST, one single-antenna UE with `h = 1` and unit noise.
    pub fn single_link(access: f64) -> Self {
        let mut topology = Topology::uniform(vec![1], 1, 200.0);
        topology.noise_mw = vec![1.0];
        let mut channel = ChannelRealization::zeros(0, 1, 1, 1);
        channel.link_mut(0, 0)[0] = C64::new(1.0, 0.0);
        Fixture {
            topology,
            channel,
            schedule: FrameSchedule::all(1),
            access_now: vec![access],
            access_frame: vec![access],
            processing_frame: vec![0.0],
            harvest: vec![0.0],
            prices: EnergyPrices::default(),
            v: 1.0,
        }
    }

    /// Random instance on `topology` with every UE scheduled and nonzero
    /// access backlogs in `[0.5, 3]`.
    pub fn random<R: Rng>(topology: Topology, rng: &mut R) -> Self {
        let n = topology.num_ues();
        let m = topology.num_bsts();
        let channel = draw_channels(&topology, rng, 0);
        let access_now: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        let access_frame = access_now.clone();
        let processing_frame = (0..n).map(|_| rng.random_range(0.0..6.0)).collect();
        Fixture {
            schedule: FrameSchedule::all(n),
            access_now,
            access_frame,
            processing_frame,
            harvest: (0..m).map(|_| rng.random_range(0.0..600.0)).collect(),
            prices: EnergyPrices::default(),
            v: rng.random_range(0.01..1.0),
            topology,
            channel,
        }
    }
}

/// Topology with random distances in `[80, 250]` m.
pub fn random_topology<R: Rng>(ues_per_bst: Vec<usize>, antennas: usize, rng: &mut R) -> Topology {
    let mut topo = Topology::uniform(ues_per_bst, antennas, 200.0);
    for row in &mut topo.distance {
        for d in row.iter_mut() {
            *d = rng.random_range(80.0..250.0);
        }
    }
    topo
}
