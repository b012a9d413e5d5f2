//! Per-slot trace records and the statistics derived from them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Topology;

/// One simulated slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub slot: u64,
    pub frame: u64,
    pub algorithm: String,
    pub seed: u64,
    pub v: f64,
    pub phi: f64,
    /// Grid expenditure summed over BSTs, cents per slot.
    pub total_cost: f64,
    /// Grid expenditure per BST.
    pub cost: Vec<f64>,
    /// Backlogs at the start of the slot, per flat UE.
    pub access: Vec<f64>,
    pub processing: Vec<f64>,
    pub rate: Vec<f64>,
    pub arrival: Vec<f64>,
    /// Signed flow per power line, mW.
    pub delta: Vec<f64>,
}

/// Column layout of a trace file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSchema {
    pub columns: Vec<String>,
    pub num_bsts: usize,
    pub num_ues: usize,
    pub num_lines: usize,
}

const FIXED: [&str; 7] = ["slot", "frame", "algorithm", "seed", "v", "phi", "total_cost"];

impl TraceSchema {
    /// Columns: the fixed fields, `cost_<m>` per BST, then `qa_<m>_<n>`,
    /// `qu_<m>_<n>`, `rate_<m>_<n>`, `arrival_<m>_<n>` per UE, then
    /// `delta_<from>_<to>` per power line.
    pub fn for_topology(topology: &Topology) -> Self {
        let mut columns: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
        columns.extend((0..topology.num_bsts()).map(|m| format!("cost_{m}")));
        for prefix in ["qa", "qu", "rate", "arrival"] {
            columns.extend((0..topology.num_ues()).map(|k| {
                let id = topology.ue_id(k);
                format!("{prefix}_{}_{}", id.bst, id.index)
            }));
        }
        columns.extend(topology.lines.iter().map(|l| format!("delta_{}_{}", l.from, l.to)));
        TraceSchema {
            columns,
            num_bsts: topology.num_bsts(),
            num_ues: topology.num_ues(),
            num_lines: topology.lines.len(),
        }
    }

    /// Recovers the layout from a header row, checking the column order.
    pub fn from_header(path: &str, header: &[String]) -> Result<Self> {
        let bad = |reason: String| Error::Schema {
            path: path.to_string(),
            reason,
        };
        if header.len() < FIXED.len() || header[..FIXED.len()].iter().zip(FIXED).any(|(h, f)| h != f) {
            return Err(bad(format!("header must start with {}", FIXED.join(","))));
        }
        let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
        let (num_bsts, num_ues, num_lines) = (count("cost_"), count("qa_"), count("delta_"));
        let schema = TraceSchema {
            columns: header.to_vec(),
            num_bsts,
            num_ues,
            num_lines,
        };
        let expected = FIXED.len() + num_bsts + 4 * num_ues + num_lines;
        if header.len() != expected {
            return Err(bad(format!("expected {expected} columns, found {}", header.len())));
        }
        let groups = [
            ("cost_", num_bsts),
            ("qa_", num_ues),
            ("qu_", num_ues),
            ("rate_", num_ues),
            ("arrival_", num_ues),
            ("delta_", num_lines),
        ];
        let mut at = FIXED.len();
        for (prefix, n) in groups {
            if header[at..at + n].iter().any(|h| !h.starts_with(prefix)) {
                return Err(bad(format!("columns {at}..{} must all start with `{prefix}`", at + n)));
            }
            at += n;
        }
        Ok(schema)
    }
}

impl TraceRecord {
    pub fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.slot.to_string(),
            self.frame.to_string(),
            self.algorithm.clone(),
            self.seed.to_string(),
            self.v.to_string(),
            self.phi.to_string(),
            self.total_cost.to_string(),
        ];
        for group in [&self.cost, &self.access, &self.processing, &self.rate, &self.arrival, &self.delta] {
            row.extend(group.iter().map(f64::to_string));
        }
        row
    }

    pub fn from_row(schema: &TraceSchema, row: &csv::StringRecord, path: &str) -> Result<Self> {
        let bad = |reason: String| Error::Schema {
            path: path.to_string(),
            reason,
        };
        if row.len() != schema.columns.len() {
            return Err(bad(format!("row has {} fields, header has {}", row.len(), schema.columns.len())));
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("column `{}` holds `{}`, not a number", schema.columns[i], &row[i])))
        };
        let int = |i: usize| -> Result<u64> {
            row[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("column `{}` holds `{}`, not an integer", schema.columns[i], &row[i])))
        };
        let mut at = FIXED.len();
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let out = (at..at + n).map(num).collect();
            at += n;
            out
        };
        Ok(TraceRecord {
            slot: int(0)?,
            frame: int(1)?,
            algorithm: row[2].to_string(),
            seed: int(3)?,
            v: num(4)?,
            phi: num(5)?,
            total_cost: num(6)?,
            cost: take(schema.num_bsts)?,
            access: take(schema.num_ues)?,
            processing: take(schema.num_ues)?,
            rate: take(schema.num_ues)?,
            arrival: take(schema.num_ues)?,
            delta: take(schema.num_lines)?,
        })
    }

    /// `sum (q_A + q_U)` at the start of the slot.
    pub fn total_backlog(&self) -> f64 {
        self.access.iter().sum::<f64>() + self.processing.iter().sum::<f64>()
    }

    pub fn total_arrival(&self) -> f64 {
        self.arrival.iter().sum()
    }
}

pub fn write_trace<W: std::io::Write>(out: W, schema: &TraceSchema, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&schema.columns)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<(TraceSchema, Vec<TraceRecord>)> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let schema = TraceSchema::from_header(&name, &header)?;
    let mut records = Vec::new();
    for row in reader.records() {
        records.push(TraceRecord::from_row(&schema, &row?, &name)?);
    }
    for (i, r) in records.iter().enumerate() {
        if r.slot != i as u64 {
            return Err(Error::Schema {
                path: name,
                reason: format!("row {i} holds slot {}, slots must run 0, 1, 2, ...", r.slot),
            });
        }
    }
    Ok((schema, records))
}

/// Trailing mean over the last `min(window, t + 1)` samples.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "moving-average window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (t, &x) in series.iter().enumerate() {
        sum += x;
        if t >= window {
            sum -= series[t - window];
        }
        let n = (t + 1).min(window);
        // Recompute periodically so rounding does not accumulate.
        if t % 4096 == 4095 {
            sum = series[t + 1 - n..=t].iter().sum();
        }
        out.push(sum / n as f64);
    }
    out
}

/// Little's-law delay in slots: mean total backlog over mean total arrival.
/// `None` when nothing arrives.
pub fn little_delay(records: &[TraceRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let backlog = records.iter().map(TraceRecord::total_backlog).sum::<f64>() / n;
    let arrival = records.iter().map(TraceRecord::total_arrival).sum::<f64>() / n;
    (arrival > 0.0).then(|| backlog / arrival)
}

pub const SECONDS_PER_YEAR: f64 = 3.1536e7;

/// Dollars per year per network: cents per slot times slots per year times
/// the number of BST deployments, divided by 100.
pub fn annualize(mean_cost_cents_per_slot: f64, slot_ms: f64, bst_scale: f64) -> f64 {
    assert!(slot_ms > 0.0, "slot duration must be positive");
    mean_cost_cents_per_slot * SECONDS_PER_YEAR * (1000.0 / slot_ms) * bst_scale / 100.0
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}
