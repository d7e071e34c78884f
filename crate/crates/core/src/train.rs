//! End-to-end calibration of every hyper-parameter from training telemetry
//! and tickets.

use rayon::prelude::*;
use crate::cluster::Clusterer;
use crate::detect::calibrate_detection;
use crate::diagnose::{analyze_schedule, daily_schedule, PreparedFNode, Preprocessing, WindowAnalysis};
use crate::error::{Error, Result};
use crate::model::{FNodeDataset, Feature, FeatureMap, HyperParams, Ticket};
use crate::preprocess::{
    calibrate_epoch_params, calibrate_missing_threshold_many, dedupe_series, detect_epochs, epoch_error,
    EpochGrid, EpochParams,
};
use crate::tune::{grid_search_sf, sf_mesh, SfSearch};

/// Pick one set of epoch parameters for all nodes: each node proposes its own
/// optimum and the proposal with the smallest summed epoch error wins.
pub fn calibrate_epochs(datasets: &[FNodeDataset]) -> Result<EpochParams> {
    let l = datasets
        .first()
        .map(|d| d.interval_hours)
        .ok_or_else(|| Error::InsufficientData("no datasets".into()))?;
    let timestamps: Vec<Vec<f64>> = datasets
        .par_iter()
        .map(|d| {
            let mut ts: Vec<f64> = d
                .devices
                .values()
                .flat_map(|s| dedupe_series(s, l).channels.into_iter().flatten())
                .map(|p| p.ts)
                .collect();
            ts.sort_by(f64::total_cmp);
            ts
        })
        .collect();
    let mut proposals: Vec<EpochParams> = timestamps
        .par_iter()
        .filter(|ts| ts.len() >= 2)
        .map(|ts| calibrate_epoch_params(ts, l))
        .collect::<Result<_>>()?;
    proposals.sort_by(|a, b| a.eps_hours.total_cmp(&b.eps_hours).then(a.min_samples.cmp(&b.min_samples)));
    proposals.dedup();
    let scored: Vec<(f64, EpochParams)> = proposals
        .par_iter()
        .map(|&p| {
            let err = timestamps
                .iter()
                .map(|ts| epoch_error(&detect_epochs(ts, p.eps_hours, p.min_samples, l)))
                .sum();
            (err, p)
        })
        .collect();
    scored
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .map(|b| b.1)
        .ok_or_else(|| Error::InsufficientData("no node has two or more collections".into()))
}

/// Epoch grids of each node under `epoch`.
pub fn epoch_grids(datasets: &[FNodeDataset], epoch: EpochParams) -> Vec<EpochGrid> {
    datasets
        .par_iter()
        .map(|d| {
            let l = d.interval_hours;
            let ts: Vec<f64> = d
                .devices
                .values()
                .flat_map(|s| dedupe_series(s, l).channels.into_iter().flatten())
                .map(|p| p.ts)
                .collect();
            detect_epochs(&ts, epoch.eps_hours, epoch.min_samples, l)
        })
        .collect()
}

/// Options for [`train`] beyond the base hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Mesh step for the Pearson features.
    pub pearson_step: f64,
    /// Mesh step for the missing feature.
    pub missing_step: f64,
    pub clusterer: Clusterer,
    pub preprocessing: Preprocessing,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            pearson_step: 0.01,
            missing_step: 0.01,
            clusterer: Clusterer::default(),
            preprocessing: Preprocessing::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub hyper: HyperParams,
    pub searches: FeatureMap<SfSearch>,
    pub prepared: Vec<PreparedFNode>,
    pub windows: Vec<WindowAnalysis>,
}

/// Calibrate epochs, the missing threshold, detection thresholds and each
/// feature's `s_f`, in that order, starting from `base`.
pub fn train(datasets: &[FNodeDataset], tickets: &[Ticket], base: &HyperParams, opts: TrainOptions) -> Result<TrainOutcome> {
    if tickets.is_empty() {
        return Err(Error::NoTickets);
    }
    let mut hyper = base.clone();
    hyper.epoch = calibrate_epochs(datasets)?;
    let grids = epoch_grids(datasets, hyper.epoch);
    hyper.missing_threshold_hours = calibrate_missing_threshold_many(datasets, &grids)?;

    let prepared: Vec<PreparedFNode> = datasets
        .par_iter()
        .map(|d| PreparedFNode::new(d, hyper.epoch, hyper.missing_threshold_hours, opts.preprocessing))
        .collect::<Result<_>>()?;
    let (lo, hi) = prepared
        .iter()
        .filter_map(PreparedFNode::bounds)
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
        .ok_or_else(|| Error::InsufficientData("training data has no collections".into()))?;
    let schedule = daily_schedule(lo, hi, hyper.lookback_days);
    let samples: Vec<_> = prepared
        .par_iter()
        .flat_map_iter(|p| p.window_samples(&hyper, &schedule))
        .collect();
    hyper.detection = calibrate_detection(&samples, tickets, hyper.detection.anomaly_fraction)?;

    let windows = analyze_schedule(&prepared, &hyper, &schedule, opts.clusterer)?;
    let search = |f: Feature| {
        let step = if f == Feature::Missing { opts.missing_step } else { opts.pearson_step };
        grid_search_sf(&windows, tickets, f, &sf_mesh(f, step), hyper.c_thr)
    };
    let searches = FeatureMap {
        snr: search(Feature::Snr)?,
        tx_power: search(Feature::TxPower)?,
        missing: search(Feature::Missing)?,
    };
    hyper.similarity = FeatureMap::from_fn(|f| searches.get(f).best);
    Ok(TrainOutcome {
        hyper,
        searches,
        prepared,
        windows,
    })
}
