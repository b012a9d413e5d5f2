//! Run orchestration: the frame/slot loop, trace persistence and run summaries.
//!
//! Each stochastic source (channels, arrivals, harvest) draws from its own
//! ChaCha8 stream seeded with `seed ^ tag`, so runs of different algorithms
//! with the same seed see identical randomness.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::zf_directions;
use crate::config::{Algorithm, SimConfig};
use crate::controller::{drift_terms, schedule_frame, DriftTerms, FrameSchedule, FrameTrace};
use crate::energy::draw_harvest;
use crate::error::{Error, Result};
use crate::metrics::{annualize, little_delay, mean, moving_average, read_trace, sample_std, write_trace, TraceRecord, TraceSchema};
use crate::model::draw_channels;
#[cfg(test)]
use crate::model::Topology;
use crate::queueing::{draw_arrivals, QueueState};
use crate::solver::{search_phi, BeamMode, PerSlotProblem, SlotDecision, SolveOptions};

const CHANNEL_TAG: u64 = 0x6368_616e_6e65_6c73;
const ARRIVAL_TAG: u64 = 0x6172_7269_7661_6c73;
const HARVEST_TAG: u64 = 0x6861_7276_6573_7473;

/// Independent random streams of one run.
pub struct Streams {
    pub channels: ChaCha8Rng,
    pub arrivals: ChaCha8Rng,
    pub harvest: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams {
            channels: ChaCha8Rng::seed_from_u64(seed ^ CHANNEL_TAG),
            arrivals: ChaCha8Rng::seed_from_u64(seed ^ ARRIVAL_TAG),
            harvest: ChaCha8Rng::seed_from_u64(seed ^ HARVEST_TAG),
        }
    }
}

/// Solve options of an algorithm for one slot.
pub fn slot_options(algorithm: Algorithm, problem: &PerSlotProblem, base: &SolveOptions) -> Result<SolveOptions> {
    let mut opts = base.clone();
    match algorithm {
        Algorithm::Tsube => {}
        Algorithm::Wolpe => opts.exchange = false,
        Algorithm::Zfbf => {
            opts.beams = BeamMode::ZeroForcing(zf_directions(problem.channel, problem.schedule, problem.topology)?)
        }
    }
    Ok(opts)
}

pub fn decide(algorithm: Algorithm, problem: &PerSlotProblem, base: &SolveOptions) -> Result<SlotDecision> {
    search_phi(problem, &slot_options(algorithm, problem, base)?)
}

/// A decided slot as seen by an [`Observer`].
pub struct SlotView<'a> {
    pub problem: &'a PerSlotProblem<'a>,
    pub decision: &'a SlotDecision,
    pub record: &'a TraceRecord,
}

/// A completed frame with its realized drift decomposition.
pub struct FrameView<'a> {
    pub frame: u64,
    pub access_start: &'a [f64],
    pub processing_start: &'a [f64],
    pub schedule: &'a FrameSchedule,
    pub trace: &'a FrameTrace,
    pub drift: DriftTerms,
}

/// Hooks into the simulation loop; both default to doing nothing.
pub trait Observer {
    fn slot(&mut self, _view: &SlotView) {}
    fn frame(&mut self, _view: &FrameView) {}
}

impl Observer for () {}

/// Runs the configured algorithm and returns one record per slot.
pub fn simulate(config: &SimConfig, observer: &mut dyn Observer) -> Result<Vec<TraceRecord>> {
    config.validate()?;
    let topo = config.topology()?;
    let traffic = config.traffic();
    let prices = config.prices();
    let algorithm = config.control.algorithm;
    let frame_len = config.control.frame_len;
    let n = topo.num_ues();
    let base = SolveOptions {
        dump_dir: Some(config.dump_dir()),
        ..SolveOptions::default()
    };
    let mut streams = Streams::new(config.run.seed);
    let mut queues = QueueState::empty(n);
    let mut records = Vec::with_capacity(config.run.num_slots as usize);
    let mut slot = 0u64;
    let mut frame = 0u64;
    while slot < config.run.num_slots {
        let harvest = draw_harvest(&config.energy.harvest_mean, frame_len, &mut streams.harvest).per_slot();
        let access_start = queues.access.clone();
        let processing_start = queues.processing.clone();
        let schedule = schedule_frame(&access_start, &processing_start);
        let mut trace = FrameTrace::default();
        for _ in 0..frame_len {
            if slot >= config.run.num_slots {
                break;
            }
            let channel = draw_channels(&topo, &mut streams.channels, slot);
            let arrivals = draw_arrivals(&traffic, &mut streams.arrivals);
            let access_now = queues.access.clone();
            let problem = PerSlotProblem {
                topology: &topo,
                channel: &channel,
                schedule: &schedule,
                access_now: &access_now,
                access_frame: &access_start,
                processing_frame: &processing_start,
                harvest_per_slot: &harvest,
                prices,
                v: config.control.v,
            };
            let wrap = |e: Error| Error::Slot {
                slot,
                source: Box::new(e),
            };
            let decision = decide(algorithm, &problem, &base).map_err(wrap)?;
            let record = TraceRecord {
                slot,
                frame,
                algorithm: algorithm.name().to_string(),
                seed: config.run.seed,
                v: config.control.v,
                phi: decision.phi,
                total_cost: decision.total_grid_cost(),
                cost: decision.grid_cost.clone(),
                access: access_now.clone(),
                processing: queues.processing.clone(),
                rate: decision.rates.clone(),
                arrival: arrivals.clone(),
                delta: decision.exchange.flows.clone(),
            };
            let flows = queues
                .step(&decision.rates, &arrivals, &traffic.processing_rate)
                .map_err(wrap)?;
            trace.push(&flows.arrivals, &flows.rates, &flows.processed);
            observer.slot(&SlotView {
                problem: &problem,
                decision: &decision,
                record: &record,
            });
            records.push(record);
            slot += 1;
        }
        if trace.len() == frame_len {
            let drift = drift_terms(&access_start, &processing_start, &trace, frame_len)?;
            observer.frame(&FrameView {
                frame,
                access_start: &access_start,
                processing_start: &processing_start,
                schedule: &schedule,
                trace: &trace,
                drift,
            });
        }
        frame += 1;
    }
    Ok(records)
}

/// Simulates and writes the trace to `config.run.output`.
pub fn run(config: &SimConfig) -> Result<PathBuf> {
    let records = simulate(config, &mut ())?;
    let path = config.run.output.clone();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let schema = TraceSchema::for_topology(&config.topology()?);
    write_trace(BufWriter::new(File::create(&path)?), &schema, &records)?;
    Ok(path)
}

/// Statistics of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub path: PathBuf,
    pub algorithm: String,
    pub v: f64,
    pub seed: u64,
    pub slots: usize,
    /// Mean total grid cost, cents per slot.
    pub mean_cost: f64,
    pub annualized: f64,
    /// Little's-law delay in slots; `None` without arrivals.
    pub delay: Option<f64>,
    pub moving_average: Vec<f64>,
}

/// Mean and sample standard deviation across the runs of one algorithm and `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub algorithm: String,
    pub v: f64,
    pub runs: usize,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub annualized_mean: f64,
    pub annualized_std: f64,
    /// Over runs with a defined delay.
    pub delay_mean: Option<f64>,
    pub delay_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryOptions {
    pub window: usize,
    pub slot_ms: f64,
    pub bst_scale: f64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            window: 10,
            slot_ms: 1.0,
            bst_scale: 1e3,
        }
    }
}

pub fn summarize_records(path: &Path, records: &[TraceRecord], opts: SummaryOptions) -> Result<RunSummary> {
    let first = records.first();
    let mixed = records.iter().any(|r| {
        let f = first.unwrap();
        r.algorithm != f.algorithm || r.v.to_bits() != f.v.to_bits() || r.seed != f.seed
    });
    if mixed {
        return Err(Error::Schema {
            path: path.display().to_string(),
            reason: "a trace must hold a single algorithm, V and seed".into(),
        });
    }
    let costs: Vec<f64> = records.iter().map(|r| r.total_cost).collect();
    let mean_cost = if costs.is_empty() { 0.0 } else { mean(&costs) };
    Ok(RunSummary {
        path: path.to_path_buf(),
        algorithm: first.map(|r| r.algorithm.clone()).unwrap_or_default(),
        v: first.map_or(f64::NAN, |r| r.v),
        seed: first.map_or(0, |r| r.seed),
        slots: records.len(),
        mean_cost,
        annualized: annualize(mean_cost, opts.slot_ms, opts.bst_scale),
        delay: little_delay(records),
        moving_average: moving_average(&costs, opts.window),
    })
}

/// Summarizes trace files. All traces must share one column layout.
pub fn summarize(paths: &[PathBuf], opts: SummaryOptions) -> Result<Summary> {
    if paths.is_empty() {
        return Err(Error::Domain("summarize needs at least one trace".into()));
    }
    let mut schema: Option<TraceSchema> = None;
    let mut runs = Vec::with_capacity(paths.len());
    for path in paths {
        let (s, records) = read_trace(path)?;
        match &schema {
            Some(first) if *first != s => {
                return Err(Error::Schema {
                    path: path.display().to_string(),
                    reason: format!("columns differ from {}", paths[0].display()),
                })
            }
            Some(_) => {}
            None => schema = Some(s),
        }
        runs.push(summarize_records(path, &records, opts)?);
    }
    Ok(Summary {
        groups: group_runs(&runs),
        runs,
    })
}

pub fn group_runs(runs: &[RunSummary]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(String, u64), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.algorithm.clone(), r.v.to_bits())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((algorithm, v), members)| {
            let costs: Vec<f64> = members.iter().map(|r| r.mean_cost).collect();
            let annual: Vec<f64> = members.iter().map(|r| r.annualized).collect();
            let delays: Vec<f64> = members.iter().filter_map(|r| r.delay).collect();
            GroupSummary {
                algorithm,
                v: f64::from_bits(v),
                runs: members.len(),
                cost_mean: mean(&costs),
                cost_std: sample_std(&costs),
                annualized_mean: mean(&annual),
                annualized_std: sample_std(&annual),
                delay_mean: (!delays.is_empty()).then(|| mean(&delays)),
                delay_std: (!delays.is_empty()).then(|| sample_std(&delays)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config(dir: &Path, slots: u64, algorithm: Algorithm) -> SimConfig {
        let mut c = SimConfig::default();
        c.run.num_slots = slots;
        c.run.output = dir.join(format!("{algorithm}.csv"));
        c.control.algorithm = algorithm;
        c
    }

    #[test]
    fn zero_slots_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = run(&short_config(dir.path(), 0, Algorithm::Tsube)).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("slot,frame,algorithm,seed,v,phi,total_cost,cost_0,cost_1,qa_0_0,"));
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = short_config(dir.path(), 12, Algorithm::Tsube);
        let a = std::fs::read(run(&c).unwrap()).unwrap();
        c.run.output = dir.path().join("again.csv");
        let b = std::fs::read(run(&c).unwrap()).unwrap();
        assert_eq!(a, b);
        c.run.seed = 2;
        c.run.output = dir.path().join("other.csv");
        let other = std::fs::read(run(&c).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn streams_are_shared_across_algorithms() {
        let dir = tempfile::tempdir().unwrap();
        let a = simulate(&short_config(dir.path(), 10, Algorithm::Tsube), &mut ()).unwrap();
        let b = simulate(&short_config(dir.path(), 10, Algorithm::Zfbf), &mut ()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.arrival, y.arrival);
        }
    }

    #[test]
    fn frames_hold_frame_len_slots() {
        #[derive(Default)]
        struct Count {
            frames: Vec<u64>,
            slots: usize,
        }
        impl Observer for Count {
            fn slot(&mut self, _: &SlotView) {
                self.slots += 1;
            }
            fn frame(&mut self, v: &FrameView) {
                assert_eq!(v.trace.len(), 5);
                self.frames.push(v.frame);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let mut obs = Count::default();
        let recs = simulate(&short_config(dir.path(), 13, Algorithm::Zfbf), &mut obs).unwrap();
        assert_eq!(obs.slots, 13);
        assert_eq!(obs.frames, vec![0, 1]);
        assert_eq!(recs.iter().map(|r| r.slot).collect::<Vec<_>>(), (0..13).collect::<Vec<_>>());
        assert!(recs.iter().all(|r| r.frame == r.slot / 5));
    }

    fn zero_record(slot: u64, seed: u64) -> TraceRecord {
        TraceRecord {
            slot,
            frame: slot / 5,
            algorithm: "tsube".into(),
            seed,
            v: 0.1,
            phi: 0.0,
            total_cost: 0.0,
            cost: vec![0.0; 2],
            access: vec![0.0; 6],
            processing: vec![0.0; 6],
            rate: vec![0.0; 6],
            arrival: vec![1.0; 6],
            delta: vec![0.0],
        }
    }

    fn write(path: &Path, records: &[TraceRecord]) {
        let schema = TraceSchema::for_topology(&Topology::default());
        write_trace(File::create(path).unwrap(), &schema, records).unwrap();
    }

    #[test]
    fn zero_cost_trace_summarizes_to_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.csv");
        write(&p, &(0..20).map(|t| zero_record(t, 1)).collect::<Vec<_>>());
        let s = summarize(std::slice::from_ref(&p), SummaryOptions::default()).unwrap();
        let r = &s.runs[0];
        assert_eq!((r.mean_cost, r.annualized, r.delay), (0.0, 0.0, Some(0.0)));
        assert!(r.moving_average.iter().all(|&x| x == 0.0));
        assert_eq!(s.groups[0].cost_std, 0.0);
    }

    #[test]
    fn identical_traces_have_zero_std() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs: Vec<_> = (0..20).map(|t| zero_record(t, 1)).collect();
        for (i, r) in recs.iter_mut().enumerate() {
            r.total_cost = 1e-7 * (i % 3) as f64;
        }
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write(&a, &recs);
        write(&b, &recs);
        let s = summarize(&[a, b], SummaryOptions::default()).unwrap();
        assert_eq!(s.groups.len(), 1);
        assert_eq!(s.groups[0].runs, 2);
        assert_eq!(s.groups[0].cost_std, 0.0);
    }

    #[test]
    fn differing_layouts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        write(&a, &[zero_record(0, 1)]);
        let b = dir.path().join("b.csv");
        let topo = Topology::uniform(vec![1, 1], 2, 200.0);
        let rec = TraceRecord {
            access: vec![0.0; 2],
            processing: vec![0.0; 2],
            rate: vec![0.0; 2],
            arrival: vec![0.0; 2],
            ..zero_record(0, 1)
        };
        write_trace(File::create(&b).unwrap(), &TraceSchema::for_topology(&topo), &[rec]).unwrap();
        assert!(matches!(summarize(&[a, b], SummaryOptions::default()), Err(Error::Schema { .. })));
    }
}
