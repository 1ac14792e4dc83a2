//! Sampling, aggregation, smoothing and allocation-quality measurements.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::netgraph::{NetworkGraph, NodeId};
use crate::routing::ObjectId;

/// Snapshot taken every sample interval after the setup gate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSample {
    pub index: u64,
    pub round: u64,
    pub transitions: u64,
    /// Active objects per node.
    pub loads: Vec<u32>,
    /// Inter-node Call and Future sends per node since the previous sample.
    pub sent: Vec<u64>,
    /// Hop counts of application messages delivered since the previous sample.
    pub latency: BTreeMap<u32, u64>,
    pub migrations: u64,
}

/// Per-sample summary row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub sample: u64,
    pub max_load: u32,
    pub load_std: f64,
    pub msg_avg: f64,
    pub msg_std: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

impl MetricsSample {
    pub fn aggregate(&self) -> Aggregate {
        let loads: Vec<f64> = self.loads.iter().map(|&l| l as f64).collect();
        let sent: Vec<f64> = self.sent.iter().map(|&s| s as f64).collect();
        Aggregate {
            sample: self.index,
            max_load: self.loads.iter().copied().max().unwrap_or(0),
            load_std: population_std(&loads),
            msg_avg: mean(&sent),
            msg_std: population_std(&sent),
        }
    }
}

pub fn aggregate(samples: &[MetricsSample]) -> Vec<Aggregate> {
    samples.iter().map(MetricsSample::aggregate).collect()
}

/// Trailing mean over `window` points; the first points average whatever
/// prefix is available.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "smoothing window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Mean of each aggregate column over the last `window` samples.
pub fn final_window(rows: &[Aggregate], window: usize) -> FinalWindow {
    let tail = &rows[rows.len().saturating_sub(window)..];
    let col = |f: fn(&Aggregate) -> f64| mean(&tail.iter().map(f).collect::<Vec<_>>());
    FinalWindow {
        samples: tail.len(),
        max_load: col(|a| a.max_load as f64),
        load_std: col(|a| a.load_std),
        msg_avg: col(|a| a.msg_avg),
        msg_std: col(|a| a.msg_std),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalWindow {
    pub samples: usize,
    pub max_load: f64,
    pub load_std: f64,
    pub msg_avg: f64,
    pub msg_std: f64,
}

/// Merged hop-count histogram of every delivered application message.
pub fn latency_histogram(samples: &[MetricsSample]) -> BTreeMap<u32, u64> {
    let mut out = BTreeMap::new();
    for s in samples {
        for (&h, &c) in &s.latency {
            *out.entry(h).or_insert(0) += c;
        }
    }
    out
}

/// Declared communication partners, symmetric, and the objects whose total
/// distance is reported.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommGraph {
    pub partners: BTreeMap<ObjectId, Vec<ObjectId>>,
    pub subjects: Vec<ObjectId>,
}

/// Total hop distance from each subject's host to its partners' hosts.
pub fn total_distances(
    graph: &NetworkGraph,
    placement: &BTreeMap<ObjectId, NodeId>,
    comm: &CommGraph,
) -> BTreeMap<ObjectId, u32> {
    let dist = graph.distance_matrix();
    comm.subjects
        .iter()
        .map(|o| {
            let here = placement[o];
            let total = comm
                .partners
                .get(o)
                .into_iter()
                .flatten()
                .map(|p| dist[here.index()][placement[p].index()])
                .sum();
            (*o, total)
        })
        .collect()
}

/// Number of subjects per total distance.
pub fn distance_histogram(totals: &BTreeMap<ObjectId, u32>) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for &t in totals.values() {
        *out.entry(t).or_insert(0) += 1;
    }
    out
}

pub fn mean_total_distance(totals: &BTreeMap<ObjectId, u32>) -> f64 {
    mean(&totals.values().map(|&t| t as f64).collect::<Vec<_>>())
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::new(io::ErrorKind::Other, e)
}

pub fn write_load_csv(path: &Path, samples: &[MetricsSample]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let nodes = samples.first().map_or(0, |s| s.loads.len());
    let mut header = vec!["sample".to_string(), "max".into(), "std".into()];
    header.extend((0..nodes).map(|i| format!("node{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let a = s.aggregate();
        let mut row = vec![s.index.to_string(), a.max_load.to_string(), fmt_f(a.load_std)];
        row.extend(s.loads.iter().map(u32::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_messages_csv(path: &Path, samples: &[MetricsSample]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["sample", "avg", "std"]).map_err(csv_err)?;
    for s in samples {
        let a = s.aggregate();
        w.write_record([s.index.to_string(), fmt_f(a.msg_avg), fmt_f(a.msg_std)])
            .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_latency_csv(path: &Path, hist: &BTreeMap<u32, u64>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["hops", "count"]).map_err(csv_err)?;
    for (h, c) in hist {
        w.write_record([h.to_string(), c.to_string()]).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_distances_csv(path: &Path, hist: &BTreeMap<u32, usize>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["total_distance", "object_count"]).map_err(csv_err)?;
    for (d, c) in hist {
        w.write_record([d.to_string(), c.to_string()]).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_migrations_csv(path: &Path, samples: &[MetricsSample]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["sample", "count"]).map_err(csv_err)?;
    for s in samples {
        w.write_record([s.index.to_string(), s.migrations.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()
}

/// Smoothed aggregate series, one row per sample.
pub fn write_smoothed_csv(path: &Path, rows: &[Aggregate], window: usize) -> io::Result<()> {
    let col = |f: fn(&Aggregate) -> f64| smooth(&rows.iter().map(f).collect::<Vec<_>>(), window);
    let max = col(|a| a.max_load as f64);
    let std = col(|a| a.load_std);
    let avg = col(|a| a.msg_avg);
    let mstd = col(|a| a.msg_std);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["sample", "max", "std", "msg_avg", "msg_std"])
        .map_err(csv_err)?;
    for (i, a) in rows.iter().enumerate() {
        w.write_record([
            a.sample.to_string(),
            fmt_f(max[i]),
            fmt_f(std[i]),
            fmt_f(avg[i]),
            fmt_f(mstd[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

/// Fixed-precision float formatting keeps CSV output byte-stable.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}
