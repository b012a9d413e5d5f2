//! Network topology, block-fading channels and the physical-layer formulas
//! (pathloss, SINR, achievable rate, base-station power draw).
//!
//! UEs are addressed by a flat index `k` that enumerates UEs of BST 0 first,
//! then BST 1, and so on. [`UeId`] converts between the flat index and the
//! `(bst, index)` pair.

use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UeId {
    pub bst: usize,
    pub index: usize,
}

/// An undirected local power line between two BSTs. Stored with `from < to`;
/// a positive exchange value on the line means energy flows `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLine {
    pub from: usize,
    pub to: usize,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub antennas: usize,
    pub ues_per_bst: Vec<usize>,
    /// Link distance in meters, `distance[j][k]` from BST `j` to flat UE `k`.
    pub distance: Vec<Vec<f64>>,
    pub carrier_ghz: f64,
    /// Noise power per flat UE, mW.
    pub noise_mw: Vec<f64>,
    pub pa_efficiency: f64,
    pub max_tx_mw: Vec<f64>,
    pub baseband_mw: Vec<f64>,
    pub lines: Vec<PowerLine>,
}

impl Default for Topology {
    /// Two BSTs 400 m apart, three single-antenna UEs each placed at the
    /// midpoint, six antennas per BST and one power line.
    fn default() -> Self {
        Topology::uniform(vec![3, 3], 6, 200.0)
    }
}

impl Topology {
    /// Every UE at the same distance from every BST, reference radio and
    /// power parameters, and a chain of power lines `0-1, 1-2, ...`.
    pub fn uniform(ues_per_bst: Vec<usize>, antennas: usize, distance_m: f64) -> Self {
        let m = ues_per_bst.len();
        let n: usize = ues_per_bst.iter().sum();
        Topology {
            antennas,
            distance: vec![vec![distance_m; n]; m],
            carrier_ghz: 2.1,
            noise_mw: vec![10f64.powf(-10.7); n],
            pa_efficiency: 0.8,
            max_tx_mw: vec![400.0; m],
            baseband_mw: vec![100.0; m],
            lines: (1..m)
                .map(|l| PowerLine {
                    from: l - 1,
                    to: l,
                    efficiency: 0.8,
                })
                .collect(),
            ues_per_bst,
        }
    }

    pub fn num_bsts(&self) -> usize {
        self.ues_per_bst.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ues_per_bst.iter().sum()
    }

    /// Flat indices of the UEs served by BST `m`.
    pub fn ues_of(&self, m: usize) -> Range<usize> {
        let start: usize = self.ues_per_bst[..m].iter().sum();
        start..start + self.ues_per_bst[m]
    }

    pub fn serving_bst(&self, k: usize) -> usize {
        let mut acc = 0;
        for (m, &n) in self.ues_per_bst.iter().enumerate() {
            acc += n;
            if k < acc {
                return m;
            }
        }
        panic!("UE index {k} out of range for {} UEs", self.num_ues());
    }

    pub fn ue_id(&self, k: usize) -> UeId {
        let bst = self.serving_bst(k);
        UeId {
            bst,
            index: k - self.ues_of(bst).start,
        }
    }

    pub fn flat(&self, ue: UeId) -> usize {
        self.ues_of(ue.bst).start + ue.index
    }

    /// Neighbor set of BST `m` over the power-line graph.
    pub fn neighbors(&self, m: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .lines
            .iter()
            .filter_map(|line| {
                if line.from == m {
                    Some(line.to)
                } else if line.to == m {
                    Some(line.from)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Lines incident to BST `m` as `(line index, orientation)`, where the
    /// orientation is `+1.0` if `m` is the stored `from` end.
    pub fn incident_lines(&self, m: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.lines.iter().enumerate().filter_map(move |(e, line)| {
            if line.from == m {
                Some((e, 1.0))
            } else if line.to == m {
                Some((e, -1.0))
            } else {
                None
            }
        })
    }

    /// Circuit power `P_sp * (0.87 + 0.1 L + 0.03 L^2)` in mW.
    pub fn circuit_power(&self, m: usize) -> f64 {
        let l = self.antennas as f64;
        self.baseband_mw[m] * (0.87 + 0.1 * l + 0.03 * l * l)
    }

    /// Linear-scale pathloss `omega` from BST `j` to flat UE `k`.
    pub fn pathloss_linear(&self, j: usize, k: usize) -> f64 {
        let db = pathloss_db(self.distance[j][k], self.carrier_ghz)
            .expect("topology distances validated positive");
        10f64.powf(db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_bsts();
        let n = self.num_ues();
        if m == 0 {
            return Err(Error::config("topology.ues_per_bst", "at least one BST required"));
        }
        if self.antennas == 0 {
            return Err(Error::config("topology.antennas", "must be at least 1"));
        }
        if self.distance.len() != m || self.distance.iter().any(|row| row.len() != n) {
            return Err(Error::config(
                "topology.distance",
                format!("expected {m} rows of {n} distances"),
            ));
        }
        if self.distance.iter().flatten().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::config("topology.distance", "distances must be positive"));
        }
        if !(self.carrier_ghz > 0.0 && self.carrier_ghz.is_finite()) {
            return Err(Error::config("topology.carrier_ghz", "must be positive"));
        }
        if self.noise_mw.len() != n || self.noise_mw.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::config(
                "topology.noise_mw",
                format!("expected {n} positive noise powers"),
            ));
        }
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return Err(Error::config("topology.pa_efficiency", "must lie in (0, 1]"));
        }
        for (key, values) in [
            ("topology.max_tx_mw", &self.max_tx_mw),
            ("topology.baseband_mw", &self.baseband_mw),
        ] {
            if values.len() != m || values.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                return Err(Error::config(key, format!("expected {m} positive powers")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (e, line) in self.lines.iter().enumerate() {
            let key = format!("topology.lines[{e}]");
            if line.from >= line.to || line.to >= m {
                return Err(Error::config(
                    key,
                    format!("endpoints must satisfy from < to < {m}"),
                ));
            }
            if !seen.insert((line.from, line.to)) {
                return Err(Error::config(key, "duplicate power line"));
            }
            if !(line.efficiency > 0.0 && line.efficiency < 1.0) {
                return Err(Error::config(key, "efficiency must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Pathloss in dB: `17.3 + 38.3 log10(d) + 24.9 log10(f_c)`, with `d` in
/// meters and `f_c` in GHz.
pub fn pathloss_db(distance_m: f64, carrier_ghz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(carrier_ghz > 0.0) {
        return Err(Error::Domain(format!(
            "pathloss needs positive distance and frequency, got d={distance_m}, f_c={carrier_ghz}"
        )));
    }
    Ok(17.3 + 38.3 * distance_m.log10() + 24.9 * carrier_ghz.log10())
}

/// Channel vectors for one slot, indexed by transmitting BST and receiving UE.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    slot: u64,
    num_bsts: usize,
    num_ues: usize,
    antennas: usize,
    coeffs: Vec<C64>,
}

impl ChannelRealization {
    pub fn zeros(slot: u64, num_bsts: usize, num_ues: usize, antennas: usize) -> Self {
        ChannelRealization {
            slot,
            num_bsts,
            num_ues,
            antennas,
            coeffs: vec![C64::new(0.0, 0.0); num_bsts * num_ues * antennas],
        }
    }

    pub fn from_fn(
        slot: u64,
        num_bsts: usize,
        num_ues: usize,
        antennas: usize,
        mut f: impl FnMut(usize, usize) -> Vec<C64>,
    ) -> Self {
        let mut ch = Self::zeros(slot, num_bsts, num_ues, antennas);
        for j in 0..num_bsts {
            for k in 0..num_ues {
                let v = f(j, k);
                assert_eq!(v.len(), antennas, "channel vector length");
                ch.link_mut(j, k).copy_from_slice(&v);
            }
        }
        ch
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn num_bsts(&self) -> usize {
        self.num_bsts
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    /// Channel from BST `j`'s array to flat UE `k`.
    pub fn link(&self, j: usize, k: usize) -> &[C64] {
        let start = (j * self.num_ues + k) * self.antennas;
        &self.coeffs[start..start + self.antennas]
    }

    pub fn link_mut(&mut self, j: usize, k: usize) -> &mut [C64] {
        let start = (j * self.num_ues + k) * self.antennas;
        &mut self.coeffs[start..start + self.antennas]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Draws i.i.d. Rayleigh block-fading channels: every antenna coefficient is
/// `CN(0, 1/omega)` with `omega` the linear pathloss of the link.
pub fn draw_channels<R: Rng + ?Sized>(topology: &Topology, rng: &mut R, slot: u64) -> ChannelRealization {
    let m = topology.num_bsts();
    let n = topology.num_ues();
    let mut ch = ChannelRealization::zeros(slot, m, n, topology.antennas);
    for j in 0..m {
        for k in 0..n {
            let std = (0.5 / topology.pathloss_linear(j, k)).sqrt();
            for c in ch.link_mut(j, k) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *c = C64::new(std * re, std * im);
            }
        }
    }
    ch
}

/// `h^H w`.
pub fn inner(h: &[C64], w: &[C64]) -> C64 {
    h.iter().zip(w).map(|(h, w)| h.conj() * w).sum()
}

pub fn norm_sqr(w: &[C64]) -> f64 {
    w.iter().map(|c| c.norm_sqr()).sum()
}

/// One beamforming vector per flat UE; unscheduled UEs hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformers {
    antennas: usize,
    coeffs: Vec<C64>,
}

impl Beamformers {
    pub fn zeros(num_ues: usize, antennas: usize) -> Self {
        Beamformers {
            antennas,
            coeffs: vec![C64::new(0.0, 0.0); num_ues * antennas],
        }
    }

    pub fn from_vecs(beams: &[Vec<C64>]) -> Self {
        let antennas = beams.first().map_or(0, Vec::len);
        let mut out = Self::zeros(beams.len(), antennas);
        for (k, w) in beams.iter().enumerate() {
            out.beam_mut(k).copy_from_slice(w);
        }
        out
    }

    pub fn num_ues(&self) -> usize {
        self.coeffs.len().checked_div(self.antennas).unwrap_or(0)
    }

    pub fn beam(&self, k: usize) -> &[C64] {
        &self.coeffs[k * self.antennas..(k + 1) * self.antennas]
    }

    pub fn beam_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.coeffs[k * self.antennas..(k + 1) * self.antennas]
    }

    /// Total radiated power `sum ||w||^2` of BST `m`'s beams, mW.
    pub fn tx_power(&self, topology: &Topology, m: usize) -> f64 {
        topology.ues_of(m).map(|k| norm_sqr(self.beam(k))).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interference {
    pub intra: f64,
    pub inter: f64,
}

/// Intra- and inter-cell interference power received by UE `k`.
pub fn interference(
    channel: &ChannelRealization,
    topology: &Topology,
    active: &[bool],
    beams: &Beamformers,
    k: usize,
) -> Interference {
    let own = topology.serving_bst(k);
    let mut intra = 0.0;
    let mut inter = 0.0;
    for i in (0..topology.num_ues()).filter(|&i| i != k && active[i]) {
        let j = topology.serving_bst(i);
        let p = inner(channel.link(j, k), beams.beam(i)).norm_sqr();
        if j == own {
            intra += p;
        } else {
            inter += p;
        }
    }
    Interference { intra, inter }
}

/// Received SINR of UE `k`; zero for an unscheduled UE.
pub fn sinr(
    channel: &ChannelRealization,
    topology: &Topology,
    active: &[bool],
    beams: &Beamformers,
    k: usize,
) -> f64 {
    if !active[k] {
        return 0.0;
    }
    let own = topology.serving_bst(k);
    let signal = inner(channel.link(own, k), beams.beam(k)).norm_sqr();
    let i = interference(channel, topology, active, beams, k);
    signal / (i.intra + i.inter + topology.noise_mw[k])
}

/// Achievable rate in nats per slot per Hz.
pub fn rate(sinr: f64) -> f64 {
    sinr.ln_1p()
}

/// Power drawn by BST `m`: amplifier-scaled radiated power plus circuit power.
pub fn bst_power(beams: &Beamformers, m: usize, topology: &Topology) -> f64 {
    beams.tx_power(topology, m) / topology.pa_efficiency + topology.circuit_power(m)
}
