use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{FNodeDataset, TelemetryPoint, TelemetrySeries, SECONDS_PER_HOUR};

use super::EpochGrid;

/// Collapse duplicated collections: a point closer than L/4 to the last kept
/// point is dropped, so the earliest of a burst survives.
pub fn dedupe(points: &[TelemetryPoint], interval_hours: f64) -> Vec<TelemetryPoint> {
    let window = interval_hours * SECONDS_PER_HOUR / 4.0;
    let mut out: Vec<TelemetryPoint> = Vec::with_capacity(points.len());
    for p in points {
        match out.last() {
            Some(last) if p.ts - last.ts < window => {}
            _ => out.push(*p),
        }
    }
    out
}

pub fn dedupe_series(series: &TelemetrySeries, interval_hours: f64) -> TelemetrySeries {
    TelemetrySeries {
        device_id: series.device_id.clone(),
        fnode_id: series.fnode_id.clone(),
        channels: series.channels.iter().map(|c| dedupe(c, interval_hours)).collect(),
    }
}

/// Insert placeholders into a strictly increasing channel: whenever the gap
/// from the last emitted point to the next one is at least `L_missing`, a
/// placeholder is emitted L after the last point, repeatedly.
pub fn infer_missing(
    points: &[TelemetryPoint],
    missing_threshold_hours: f64,
    interval_hours: f64,
) -> Vec<TelemetryPoint> {
    let threshold = missing_threshold_hours * SECONDS_PER_HOUR;
    let step = interval_hours * SECONDS_PER_HOUR;
    let mut out: Vec<TelemetryPoint> = Vec::with_capacity(points.len());
    for p in points {
        while let Some(last) = out.last() {
            if p.ts - last.ts < threshold {
                break;
            }
            let ts = last.ts + step;
            out.push(TelemetryPoint::placeholder(ts));
        }
        out.push(*p);
    }
    out
}

pub fn infer_missing_series(
    series: &TelemetrySeries,
    missing_threshold_hours: f64,
    interval_hours: f64,
) -> TelemetrySeries {
    TelemetrySeries {
        device_id: series.device_id.clone(),
        fnode_id: series.fnode_id.clone(),
        channels: series
            .channels
            .iter()
            .map(|c| infer_missing(c, missing_threshold_hours, interval_hours))
            .collect(),
    }
}

fn missing_epochs(observed: &[f64], grid: &EpochGrid) -> BTreeSet<usize> {
    let pad = grid.interval_hours * SECONDS_PER_HOUR / 4.0;
    grid.epochs
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            let lo = e.start - pad;
            let hi = e.end() + pad;
            let first = observed.partition_point(|&t| t < lo);
            !(first < observed.len() && observed[first] <= hi)
        })
        .map(|(i, _)| i)
        .collect()
}

fn observed_ts(points: &[TelemetryPoint]) -> Vec<f64> {
    points.iter().filter(|p| !p.is_placeholder()).map(|p| p.ts).collect()
}

/// Per channel, the epochs with no observed point within L/4 of the epoch's
/// collection span.
pub fn ground_truth_missing(series: &TelemetrySeries, grid: &EpochGrid) -> Vec<BTreeSet<usize>> {
    series
        .channels
        .iter()
        .map(|c| missing_epochs(&observed_ts(c), grid))
        .collect()
}

/// Confusion counts of inferred against reference missing points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MissingScore {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl MissingScore {
    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.tn + self.fp + self.fn_;
        if total == 0 {
            return 1.0;
        }
        (self.tp + self.tn) as f64 / total as f64
    }

    /// Book one adjacent pair of observed points with `truth` missing points
    /// between them of which `inferred` were reported.
    pub fn add_gap(&mut self, truth: u64, inferred: u64) {
        match (truth, inferred) {
            (0, 0) => self.tn += 1,
            (n, m) if n == m => self.tp += n,
            (n, m) if n > m => {
                self.tp += m;
                self.fn_ += n - m;
            }
            (n, m) => {
                self.tp += n;
                self.fp += m - n;
            }
        }
    }

    pub fn merge(&mut self, other: &MissingScore) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Score `L_missing` on one channel. `observed` are its strictly increasing
/// observed timestamps and `truth_between[i]` the number of truly missing
/// collections between `observed[i]` and `observed[i + 1]`.
pub fn score_missing_threshold(
    observed: &[f64],
    truth_between: &[u64],
    missing_threshold_hours: f64,
    interval_hours: f64,
) -> MissingScore {
    debug_assert_eq!(truth_between.len() + 1, observed.len().max(1));
    let points: Vec<TelemetryPoint> = observed.iter().map(|&t| TelemetryPoint::placeholder(t)).collect();
    // Every input point is a placeholder here; count the inserted ones by
    // walking the output against the input.
    let inferred = infer_missing(&points, missing_threshold_hours, interval_hours);
    let mut score = MissingScore::default();
    let mut idx = 0usize;
    let mut inserted = 0u64;
    for p in inferred.iter().skip(1) {
        if idx + 1 < observed.len() && p.ts == observed[idx + 1] {
            score.add_gap(truth_between[idx], inserted);
            idx += 1;
            inserted = 0;
        } else {
            inserted += 1;
        }
    }
    score
}

/// Candidate thresholds L + k·L/40 for k = 1..=39.
pub fn missing_threshold_candidates(interval_hours: f64) -> Vec<f64> {
    (1..40).map(|k| interval_hours * (1.0 + k as f64 / 40.0)).collect()
}

/// Choose `L_missing` maximizing inference accuracy against the epoch-grid
/// reference over all devices, smallest candidate on ties.
pub fn calibrate_missing_threshold(dataset: &FNodeDataset, grid: &EpochGrid) -> Result<f64> {
    calibrate_missing_threshold_many(std::slice::from_ref(dataset), std::slice::from_ref(grid))
}

/// As [`calibrate_missing_threshold`], pooling the confusion counts of
/// several nodes.
pub fn calibrate_missing_threshold_many(datasets: &[FNodeDataset], grids: &[EpochGrid]) -> Result<f64> {
    let interval_hours = datasets
        .first()
        .map(|d| d.interval_hours)
        .ok_or_else(|| Error::InsufficientData("no datasets".into()))?;
    let mut channels: Vec<(Vec<f64>, Vec<u64>)> = Vec::new();
    for (dataset, grid) in datasets.iter().zip(grids) {
        let centers: Vec<f64> = grid.epochs.iter().map(|e| e.center()).collect();
        for series in dataset.devices.values() {
            for ch in &series.channels {
                let observed = observed_ts(&dedupe(ch, dataset.interval_hours));
                if observed.len() < 2 {
                    continue;
                }
                let missing = missing_epochs(&observed, grid);
                let between = observed
                    .windows(2)
                    .map(|w| {
                        let lo = centers.partition_point(|&c| c <= w[0]);
                        let hi = centers.partition_point(|&c| c < w[1]);
                        missing.range(lo..hi.max(lo)).count() as u64
                    })
                    .collect();
                channels.push((observed, between));
            }
        }
    }
    if channels.is_empty() {
        return Err(Error::InsufficientData(
            "no device channel has two or more points".into(),
        ));
    }
    let mut best: Option<(f64, f64)> = None;
    for candidate in missing_threshold_candidates(interval_hours) {
        let mut score = MissingScore::default();
        for (observed, between) in &channels {
            score.merge(&score_missing_threshold(observed, between, candidate, interval_hours));
        }
        let acc = score.accuracy();
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((candidate, acc));
        }
    }
    Ok(best.expect("candidates non-empty").0)
}
