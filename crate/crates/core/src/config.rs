//! Simulation configuration loaded from TOML.
//!
//! Every key is optional; missing keys take the reference scenario values
//! (two BSTs 400 m apart with three UEs each at the midpoint, six antennas).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::energy::EnergyPrices;
use crate::error::{Error, Result};
use crate::model::{PowerLine, Topology};
use crate::queueing::TrafficSpec;

/// Per-slot decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tsube,
    Wolpe,
    Zfbf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Tsube, Algorithm::Wolpe, Algorithm::Zfbf];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tsube => "tsube",
            Algorithm::Wolpe => "wolpe",
            Algorithm::Zfbf => "zfbf",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("control.algorithm", format!("unknown algorithm `{s}`, expected tsube, wolpe or zfbf")))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub ues_per_bst: Vec<usize>,
    pub antennas: usize,
    /// Spacing of BSTs placed on a line; each BST's UEs sit halfway to the
    /// next BST (the last BST's halfway back to the previous one).
    pub inter_bst_distance_m: f64,
    /// Explicit `[bst][flat ue]` distances; overrides the line placement.
    pub distance_m: Option<Vec<Vec<f64>>>,
    pub carrier_ghz: f64,
    pub noise_mw: f64,
    pub pa_efficiency: f64,
    pub max_tx_mw: f64,
    pub baseband_mw: f64,
    /// BST pairs joined by a power line; defaults to the chain `0-1, 1-2, ...`.
    pub lines: Option<Vec<[usize; 2]>>,
    pub line_efficiency: f64,
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection {
            ues_per_bst: vec![3, 3],
            antennas: 6,
            inter_bst_distance_m: 400.0,
            distance_m: None,
            carrier_ghz: 2.1,
            noise_mw: 10f64.powf(-10.7),
            pa_efficiency: 0.8,
            max_tx_mw: 400.0,
            baseband_mw: 100.0,
            lines: None,
            line_efficiency: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    /// Mean arrival per UE and slot, nats/Hz.
    pub mean_arrival: f64,
    pub processing_rate: f64,
    /// Bound on a single slot's rate; derived from the link budget if absent.
    pub max_rate: Option<f64>,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            mean_arrival: 2.1,
            processing_rate: 8.0,
            max_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    /// Cents per slot per mW.
    pub buy_price: f64,
    pub sell_price: f64,
    /// Mean renewable energy per BST, mW per slot.
    pub harvest_mean: Vec<f64>,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            buy_price: 1.6e-9,
            sell_price: 0.6e-9,
            harvest_mean: vec![300.0, 200.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub v: f64,
    pub frame_len: usize,
    pub algorithm: Algorithm,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            v: 0.1,
            frame_len: 5,
            algorithm: Algorithm::Tsube,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub num_slots: u64,
    pub seed: u64,
    pub window: usize,
    pub output: PathBuf,
    /// Where programs are written when a solve fails; defaults to
    /// `<output>.failed` next to the trace.
    pub dump_dir: Option<PathBuf>,
    pub slot_ms: f64,
    pub bst_scale: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            num_slots: 3000,
            seed: 1,
            window: 10,
            output: PathBuf::from("trace.csv"),
            dump_dir: None,
            slot_ms: 1.0,
            bst_scale: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub topology: TopologySection,
    pub traffic: TrafficSection,
    pub energy: EnergySection,
    pub control: ControlSection,
    pub run: RunSection,
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    let config: SimConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

fn positive(key: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {value}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if t.ues_per_bst.is_empty() {
            return Err(Error::config("topology.ues_per_bst", "needs at least one BST"));
        }
        positive("topology.inter_bst_distance_m", t.inter_bst_distance_m)?;
        positive("topology.line_efficiency", t.line_efficiency)?;
        if t.line_efficiency > 1.0 {
            return Err(Error::config("topology.line_efficiency", "must not exceed 1"));
        }
        if let Some(lines) = &t.lines {
            for (i, [a, b]) in lines.iter().enumerate() {
                if a == b || *a >= t.ues_per_bst.len() || *b >= t.ues_per_bst.len() {
                    return Err(Error::config(format!("topology.lines[{i}]"), format!("invalid BST pair [{a}, {b}]")));
                }
            }
        }
        let topology = self.topology()?;
        topology.validate()?;
        EnergyPrices::new(self.energy.buy_price, self.energy.sell_price)?;
        if self.energy.harvest_mean.len() != topology.num_bsts() {
            return Err(Error::config(
                "energy.harvest_mean",
                format!("expected {} entries, one per BST", topology.num_bsts()),
            ));
        }
        for (m, &h) in self.energy.harvest_mean.iter().enumerate() {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::config(format!("energy.harvest_mean[{m}]"), "must be nonnegative"));
            }
        }
        if let Some(r) = self.traffic.max_rate {
            positive("traffic.max_rate", r)?;
        }
        positive("traffic.processing_rate", self.traffic.processing_rate)?;
        self.traffic().validate(topology.num_ues())?;
        positive("control.v", self.control.v)?;
        if self.control.frame_len == 0 {
            return Err(Error::config("control.frame_len", "must be at least 1"));
        }
        if self.run.window == 0 {
            return Err(Error::config("run.window", "must be at least 1"));
        }
        positive("run.slot_ms", self.run.slot_ms)?;
        positive("run.bst_scale", self.run.bst_scale)?;
        Ok(())
    }

    pub fn topology(&self) -> Result<Topology> {
        let t = &self.topology;
        let m = t.ues_per_bst.len();
        let n: usize = t.ues_per_bst.iter().sum();
        let mut topo = Topology::uniform(t.ues_per_bst.clone(), t.antennas, 0.0);
        topo.distance = match &t.distance_m {
            Some(d) => d.clone(),
            None => {
                let d = t.inter_bst_distance_m;
                let mut positions = Vec::with_capacity(n);
                for (b, &count) in t.ues_per_bst.iter().enumerate() {
                    let x = b as f64 * d;
                    let ue = if b + 1 < m || m == 1 { x + 0.5 * d } else { x - 0.5 * d };
                    positions.extend(std::iter::repeat_n(ue, count));
                }
                (0..m).map(|j| positions.iter().map(|p| (p - j as f64 * d).abs()).collect()).collect()
            }
        };
        topo.carrier_ghz = t.carrier_ghz;
        topo.noise_mw = vec![t.noise_mw; n];
        topo.pa_efficiency = t.pa_efficiency;
        topo.max_tx_mw = vec![t.max_tx_mw; m];
        topo.baseband_mw = vec![t.baseband_mw; m];
        if let Some(lines) = &t.lines {
            topo.lines = lines
                .iter()
                .map(|&[a, b]| PowerLine {
                    from: a.min(b),
                    to: a.max(b),
                    efficiency: t.line_efficiency,
                })
                .collect();
        } else {
            for l in &mut topo.lines {
                l.efficiency = t.line_efficiency;
            }
        }
        Ok(topo)
    }

    /// Largest single-slot rate the link budget allows:
    /// `ln(1 + P_max * L / (omega_min * sigma^2))` over all links, with
    /// `omega_min` the smallest linear pathloss.
    pub fn derived_max_rate(&self) -> Result<f64> {
        let topo = self.topology()?;
        let mut best: f64 = 0.0;
        for j in 0..topo.num_bsts() {
            for k in 0..topo.num_ues() {
                let gain = 1.0 / topo.pathloss_linear(j, k);
                let snr = topo.max_tx_mw[j] * topo.antennas as f64 * gain / topo.noise_mw[k];
                best = best.max(snr.ln_1p());
            }
        }
        Ok(best)
    }

    pub fn traffic(&self) -> TrafficSpec {
        let n: usize = self.topology.ues_per_bst.iter().sum();
        let max_rate = self
            .traffic
            .max_rate
            .or_else(|| self.derived_max_rate().ok())
            .unwrap_or(f64::NAN);
        TrafficSpec::uniform(n, self.traffic.mean_arrival, self.traffic.processing_rate, max_rate)
    }

    pub fn prices(&self) -> EnergyPrices {
        EnergyPrices {
            buy: self.energy.buy_price,
            sell: self.energy.sell_price,
        }
    }

    /// Directory for programs of failed solves.
    pub fn dump_dir(&self) -> PathBuf {
        self.run.dump_dir.clone().unwrap_or_else(|| {
            let mut name = self.run.output.as_os_str().to_owned();
            name.push(".failed");
            PathBuf::from(name)
        })
    }
}
