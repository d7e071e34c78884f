//! The per-node pipeline: preprocess once, then per window compute
//! similarities, cluster each feature, detect anomalous devices, and classify
//! flagged clusters by size.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Clusterer, Clustering, Partition};
use crate::detect::{device_anomalous, flag_clusters, window_values, DeviceAnomaly, WindowSample};
use crate::error::{Error, Result};
use crate::features::{presence_bitmap, similarity_matrices};
use crate::model::{
    Feature, FeatureMap, FNodeDataset, HyperParams, Metric, Ticket, TelemetrySeries, SECONDS_PER_DAY,
    SECONDS_PER_HOUR,
};
use crate::preprocess::{
    dedupe_series, detect_epochs, infer_missing_series, resample_uniform, resample_channel, EpochGrid,
    EpochParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Healthy,
    Maintenance,
    Service,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Healthy, Label::Maintenance, Label::Service];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::Maintenance => "maintenance",
            Label::Service => "service",
        }
    }

    pub(crate) fn index(&self) -> usize {
        match self {
            Label::Healthy => 0,
            Label::Maintenance => 1,
            Label::Service => 2,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown label {s:?}")))
    }
}

/// Result for one device over one labeled interval `(start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub fnode_id: String,
    pub device_id: String,
    pub start: f64,
    pub end: f64,
    pub label: Label,
    /// Features whose own label agrees with `label`; empty when healthy.
    pub features: Vec<Feature>,
    pub cluster_ids: FeatureMap<usize>,
    pub per_feature: FeatureMap<Label>,
}

/// How per-window telemetry is conditioned before similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preprocessing {
    /// Duplicate collapsing, placeholder inference, pairwise alignment.
    #[default]
    Align,
    /// Linear interpolation onto the exact L-hour grid.
    Resample,
}

/// A node's telemetry after the window-independent preprocessing steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFNode {
    pub fnode_id: String,
    /// Sorted.
    pub device_ids: Vec<String>,
    pub series: Vec<TelemetrySeries>,
    pub grid: EpochGrid,
    /// Per device, per grid epoch: observed on at least one channel.
    pub presence: Vec<Vec<bool>>,
    pub interval_hours: f64,
}

impl PreparedFNode {
    /// Dedupe, detect the node's epochs with `epoch`, record per-epoch
    /// presence, then insert placeholders (or resample).
    pub fn new(
        dataset: &FNodeDataset,
        epoch: EpochParams,
        missing_threshold_hours: f64,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        let l = dataset.interval_hours;
        let deduped: Vec<TelemetrySeries> = dataset.devices.values().map(|s| dedupe_series(s, l)).collect();
        let ts: Vec<f64> = deduped
            .iter()
            .flat_map(|s| s.channels.iter().flatten())
            .map(|p| p.ts)
            .collect();
        let grid = detect_epochs(&ts, epoch.eps_hours, epoch.min_samples, l);
        let (series, presence) = match preprocessing {
            Preprocessing::Align => {
                let presence = deduped.iter().map(|s| presence_bitmap(s, &grid)).collect();
                let series = deduped
                    .iter()
                    .map(|s| infer_missing_series(s, missing_threshold_hours, l))
                    .collect();
                (series, presence)
            }
            Preprocessing::Resample => {
                let series: Vec<TelemetrySeries> = deduped
                    .iter()
                    .map(|s| {
                        resample_uniform(s, l).unwrap_or_else(|_| TelemetrySeries {
                            device_id: s.device_id.clone(),
                            fnode_id: s.fnode_id.clone(),
                            channels: s.channels.iter().map(|c| resample_channel(c, l)).collect(),
                        })
                    })
                    .collect();
                let presence = series.iter().map(|s| presence_bitmap(s, &grid)).collect();
                (series, presence)
            }
        };
        Ok(Self {
            fnode_id: dataset.fnode_id.clone(),
            device_ids: dataset.devices.keys().cloned().collect(),
            series,
            grid,
            presence,
            interval_hours: l,
        })
    }

    pub fn from_hyper(dataset: &FNodeDataset, hyper: &HyperParams) -> Result<Self> {
        Self::new(dataset, hyper.epoch, hyper.missing_threshold_hours, Preprocessing::Align)
    }

    pub fn device_index(&self, device_id: &str) -> Option<usize> {
        self.device_ids.binary_search_by(|d| d.as_str().cmp(device_id)).ok()
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.series
            .iter()
            .filter_map(TelemetrySeries::bounds)
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    /// Everything about window `(end - d, end]` that does not depend on the
    /// similarity thresholds. Diagnoses are credited to `(credit_start, end]`.
    pub fn analyze(&self, hyper: &HyperParams, end: f64, credit_start: f64, clusterer: Clusterer) -> Result<WindowAnalysis> {
        let start = end - hyper.lookback_seconds();
        let has_data = self.series.iter().any(|s| {
            s.channels
                .iter()
                .flatten()
                .any(|p| !p.is_placeholder() && p.ts > start && p.ts <= end)
        });
        if !has_data {
            return Err(Error::EmptyWindow { start, end });
        }
        let epochs = self.grid.epochs_in(start, end);
        let refs: Vec<&TelemetrySeries> = self.series.iter().collect();
        let sims = similarity_matrices(&refs, &self.presence, epochs.clone(), start, end, hyper.min_overlap);
        let anomalies = self
            .series
            .iter()
            .zip(&self.presence)
            .map(|(s, p)| device_anomalous(s, start, end, &p[epochs.clone()], &hyper.detection))
            .collect();
        let FeatureMap { snr, tx_power, missing } = sims;
        Ok(WindowAnalysis {
            fnode_id: self.fnode_id.clone(),
            device_ids: self.device_ids.clone(),
            start: credit_start.max(start),
            end,
            anomalies,
            clusterings: FeatureMap {
                snr: clusterer.prepare(snr),
                tx_power: clusterer.prepare(tx_power),
                missing: clusterer.prepare(missing),
            },
        })
    }

    /// Detection samples for threshold calibration, one per device and
    /// scheduled window.
    pub fn window_samples(&self, hyper: &HyperParams, schedule: &[f64]) -> Vec<WindowSample> {
        let mut out = Vec::new();
        for (k, &end) in schedule.iter().enumerate() {
            let start = end - hyper.lookback_seconds();
            let credit = credit_start(schedule, k, hyper);
            for (id, s) in self.device_ids.iter().zip(&self.series) {
                out.push(WindowSample {
                    fnode_id: self.fnode_id.clone(),
                    device_id: id.clone(),
                    start: credit,
                    end,
                    values: Metric::ALL.map(|m| window_values(s, m, start, end)),
                });
            }
        }
        out
    }
}

/// Threshold-independent state of one node window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAnalysis {
    pub fnode_id: String,
    pub device_ids: Vec<String>,
    /// Credited interval `(start, end]`.
    pub start: f64,
    pub end: f64,
    pub anomalies: Vec<DeviceAnomaly>,
    pub clusterings: FeatureMap<Clustering>,
}

/// Whether a device's anomaly counts toward flagging `feature`'s clusters.
pub fn feature_anomalous(a: &DeviceAnomaly, feature: Feature) -> bool {
    match feature {
        Feature::Snr => a.snr,
        Feature::TxPower => a.tx_power || a.rx_power,
        Feature::Missing => a.missing,
    }
}

/// Per-feature labels and flags for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureOutcome {
    pub partition: Partition,
    /// Indexed by cluster.
    pub flagged: Vec<bool>,
    pub labels: Vec<Label>,
}

/// Label devices from one feature's partition: members of a flagged cluster
/// with at least `c_thr` devices are Maintenance, other flagged or anomalous
/// devices are Service.
pub fn classify_feature(partition: Partition, anomalous: &[bool], c_thr: usize) -> FeatureOutcome {
    let mut flagged = vec![false; partition.clusters().len()];
    for k in flag_clusters(&partition, anomalous) {
        flagged[k] = true;
    }
    let labels = (0..partition.n_devices())
        .map(|i| {
            let k = partition.labels()[i];
            if flagged[k] && partition.clusters()[k].len() >= c_thr {
                Label::Maintenance
            } else if flagged[k] || anomalous[i] {
                Label::Service
            } else {
                Label::Healthy
            }
        })
        .collect();
    FeatureOutcome {
        partition,
        flagged,
        labels,
    }
}

impl WindowAnalysis {
    pub fn feature_outcome(&self, feature: Feature, s_f: f64, c_thr: usize) -> FeatureOutcome {
        let anomalous: Vec<bool> = self.anomalies.iter().map(|a| feature_anomalous(a, feature)).collect();
        classify_feature(self.clusterings.get(feature).partition(s_f), &anomalous, c_thr)
    }

    pub fn outcomes(&self, similarity: &FeatureMap<f64>, c_thr: usize) -> FeatureMap<FeatureOutcome> {
        FeatureMap::from_fn(|f| self.feature_outcome(f, *similarity.get(f), c_thr))
    }

    /// Combined per-device diagnoses.
    pub fn diagnoses(&self, similarity: &FeatureMap<f64>, c_thr: usize) -> Vec<Diagnosis> {
        let out = self.outcomes(similarity, c_thr);
        (0..self.device_ids.len())
            .map(|i| {
                let per_feature = FeatureMap::from_fn(|f| out.get(f).labels[i]);
                let label = if per_feature.iter().any(|(_, l)| *l == Label::Maintenance) {
                    Label::Maintenance
                } else if per_feature.iter().any(|(_, l)| *l == Label::Service) || self.anomalies[i].any() {
                    Label::Service
                } else {
                    Label::Healthy
                };
                let features = if label == Label::Healthy {
                    Vec::new()
                } else {
                    per_feature.iter().filter(|(_, l)| **l == label).map(|(f, _)| f).collect()
                };
                Diagnosis {
                    fnode_id: self.fnode_id.clone(),
                    device_id: self.device_ids[i].clone(),
                    start: self.start,
                    end: self.end,
                    label,
                    features,
                    cluster_ids: FeatureMap::from_fn(|f| out.get(f).partition.labels()[i]),
                    per_feature,
                }
            })
            .collect()
    }

    /// Devices grouped by shared membership in any flagged cluster; devices in
    /// no flagged cluster stay alone.
    pub fn pipeline_partition(&self, similarity: &FeatureMap<f64>, c_thr: usize) -> Partition {
        let out = self.outcomes(similarity, c_thr);
        flagged_union(self.device_ids.len(), Feature::ALL.iter().map(|&f| out.get(f)))
    }
}

/// Union of the flagged clusters of several outcomes over `n` devices.
pub fn flagged_union<'a>(n: usize, outcomes: impl IntoIterator<Item = &'a FeatureOutcome>) -> Partition {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for o in outcomes {
        for (k, c) in o.partition.clusters().iter().enumerate() {
            if !o.flagged[k] {
                continue;
            }
            for &d in &c[1..] {
                let (a, b) = (find(&mut parent, c[0]), find(&mut parent, d));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Partition::from_labels(&roots)
}

/// Diagnose every device of a node for window `(t - d, t]`.
pub fn diagnose_fnode(dataset: &FNodeDataset, hyper: &HyperParams, t: f64) -> Result<Vec<Diagnosis>> {
    let prepared = PreparedFNode::from_hyper(dataset, hyper)?;
    let w = prepared.analyze(hyper, t, t - hyper.lookback_seconds(), Clusterer::default())?;
    Ok(w.diagnoses(&hyper.similarity, hyper.c_thr))
}

/// Daily diagnosis times from the first day boundary `d` days after the
/// data start through the day boundary at or after the last collection.
pub fn daily_schedule(min_ts: f64, max_ts: f64, lookback_days: f64) -> Vec<f64> {
    let first = (min_ts / SECONDS_PER_DAY).floor() * SECONDS_PER_DAY + lookback_days * SECONDS_PER_DAY;
    let last = (max_ts / SECONDS_PER_DAY).ceil() * SECONDS_PER_DAY;
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let t = first + k as f64 * SECONDS_PER_DAY;
        if t > last {
            break;
        }
        out.push(t);
        k += 1;
    }
    out
}

/// Start of the interval credited to the `k`-th scheduled diagnosis:
/// the later of the previous diagnosis time and the look-back start.
pub fn credit_start(schedule: &[f64], k: usize, hyper: &HyperParams) -> f64 {
    let lookback = schedule[k] - hyper.lookback_seconds();
    if k == 0 {
        lookback
    } else {
        lookback.max(schedule[k - 1])
    }
}

/// Analyze every scheduled window of every node, in parallel across nodes.
/// Windows without data are skipped.
pub fn analyze_schedule(
    prepared: &[PreparedFNode],
    hyper: &HyperParams,
    schedule: &[f64],
    clusterer: Clusterer,
) -> Result<Vec<WindowAnalysis>> {
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("schedule must be strictly increasing".into()));
    }
    let per_node: Vec<Vec<WindowAnalysis>> = prepared
        .par_iter()
        .map(|p| {
            schedule
                .iter()
                .enumerate()
                .filter_map(|(k, &t)| p.analyze(hyper, t, credit_start(schedule, k, hyper), clusterer).ok())
                .collect()
        })
        .collect();
    Ok(per_node.into_iter().flatten().collect())
}

/// Diagnose every node at every scheduled time, ordered by node, device and
/// time.
pub fn run_batch(prepared: &[PreparedFNode], hyper: &HyperParams, schedule: &[f64]) -> Result<Vec<Diagnosis>> {
    let windows = analyze_schedule(prepared, hyper, schedule, Clusterer::default())?;
    Ok(timeline(&windows, &hyper.similarity, hyper.c_thr))
}

/// Canonically ordered diagnoses of precomputed windows.
pub fn timeline(windows: &[WindowAnalysis], similarity: &FeatureMap<f64>, c_thr: usize) -> Vec<Diagnosis> {
    let mut all: Vec<Diagnosis> = windows.iter().flat_map(|w| w.diagnoses(similarity, c_thr)).collect();
    sort_diagnoses(&mut all);
    all
}

pub fn sort_diagnoses(all: &mut [Diagnosis]) {
    all.sort_by(|a, b| {
        (&a.fnode_id, &a.device_id)
            .cmp(&(&b.fnode_id, &b.device_id))
            .then(a.start.total_cmp(&b.start))
    });
}

/// A maximal run of consecutive identical non-healthy labels on one device.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub fnode_id: String,
    pub device_id: String,
    pub label: Label,
    pub start: f64,
    pub end: f64,
}

impl Event {
    pub fn duration_hours(&self) -> f64 {
        (self.end - self.start) / SECONDS_PER_HOUR
    }
}

/// Run-length events of a canonically ordered timeline.
pub fn extract_events(timeline: &[Diagnosis]) -> Vec<Event> {
    let mut out: Vec<Event> = Vec::new();
    let mut prev: Option<&Diagnosis> = None;
    for d in timeline {
        let continues = prev.is_some_and(|p| {
            p.fnode_id == d.fnode_id && p.device_id == d.device_id && p.end == d.start && p.label == d.label
        });
        if d.label != Label::Healthy {
            if continues {
                out.last_mut().expect("open event").end = d.end;
            } else {
                out.push(Event {
                    fnode_id: d.fnode_id.clone(),
                    device_id: d.device_id.clone(),
                    label: d.label,
                    start: d.start,
                    end: d.end,
                });
            }
        }
        prev = Some(d);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactiveVerdict {
    Maintenance,
    Service,
    NoIssue,
}

impl ReactiveVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReactiveVerdict::Maintenance => "maintenance",
            ReactiveVerdict::Service => "service",
            ReactiveVerdict::NoIssue => "no_issue",
        }
    }
}

impl From<Label> for ReactiveVerdict {
    fn from(l: Label) -> Self {
        match l {
            Label::Healthy => ReactiveVerdict::NoIssue,
            Label::Maintenance => ReactiveVerdict::Maintenance,
            Label::Service => ReactiveVerdict::Service,
        }
    }
}

/// Diagnose the ticket's node at the ticket's open time and report the
/// ticket device's label.
pub fn run_reactive(prepared: &PreparedFNode, hyper: &HyperParams, ticket: &Ticket) -> Result<ReactiveVerdict> {
    let i = prepared
        .device_index(&ticket.device_id)
        .filter(|_| prepared.fnode_id == ticket.fnode_id)
        .ok_or_else(|| Error::UnknownDevice(ticket.device_id.clone()))?;
    let t = ticket.open_ts;
    let w = prepared.analyze(hyper, t, t - hyper.lookback_seconds(), Clusterer::default())?;
    Ok(w.diagnoses(&hyper.similarity, hyper.c_thr)[i].label.into())
}

pub const DIAGNOSIS_HEADER: [&str; 7] =
    ["fnode_id", "device_id", "start_ts", "end_ts", "label", "features", "cluster_id"];

fn encode_clusters(ids: &FeatureMap<usize>) -> String {
    ids.iter().map(|(f, id)| format!("{f}={id}")).collect::<Vec<_>>().join(";")
}

pub fn write_diagnoses<W: Write>(out: W, path: &Path, timeline: &[Diagnosis]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e| Error::csv(path, e);
    w.write_record(DIAGNOSIS_HEADER).map_err(err)?;
    for d in timeline {
        let features = d.features.iter().map(Feature::as_str).collect::<Vec<_>>().join(";");
        w.write_record([
            d.fnode_id.as_str(),
            d.device_id.as_str(),
            &d.start.to_string(),
            &d.end.to_string(),
            d.label.as_str(),
            &features,
            &encode_clusters(&d.cluster_ids),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_diagnoses_csv(path: impl AsRef<Path>, timeline: &[Diagnosis]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_diagnoses(std::io::BufWriter::new(f), path, timeline)
}

/// Parse a diagnosis table. Per-feature labels are not stored, so they are
/// reconstructed from the contributing features.
pub fn read_diagnoses<R: Read>(input: R, path: impl Into<PathBuf>) -> Result<Vec<Diagnosis>> {
    let path = path.into();
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::csv(&path, e))?.clone();
    if header.iter().ne(DIAGNOSIS_HEADER) {
        return Err(Error::MalformedRow {
            path,
            line: 1,
            reason: format!("expected header {}", DIAGNOSIS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| Error::csv(&path, e))?;
        let bad = |reason: String| Error::MalformedRow {
            path: path.clone(),
            line,
            reason,
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let label: Label = rec[4].parse().map_err(|_| bad(format!("label {:?}", &rec[4])))?;
        let features: Vec<Feature> = rec[5]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| bad(format!("feature {s:?}"))))
            .collect::<Result<_>>()?;
        let mut ids: BTreeMap<Feature, usize> = BTreeMap::new();
        for part in rec[6].split(';') {
            let (f, v) = part.split_once('=').ok_or_else(|| bad(format!("cluster id {part:?}")))?;
            let f: Feature = f.parse().map_err(|_| bad(format!("feature {f:?}")))?;
            ids.insert(f, v.parse().map_err(|_| bad(format!("cluster id {v:?}")))?);
        }
        let cid = |f: Feature| ids.get(&f).copied().ok_or_else(|| bad(format!("missing cluster id for {f}")));
        let set: BTreeSet<Feature> = features.iter().copied().collect();
        out.push(Diagnosis {
            fnode_id: rec[0].to_string(),
            device_id: rec[1].to_string(),
            start: num(&rec[2])?,
            end: num(&rec[3])?,
            label,
            per_feature: FeatureMap::from_fn(|f| if set.contains(&f) { label } else { Label::Healthy }),
            features,
            cluster_ids: FeatureMap {
                snr: cid(Feature::Snr)?,
                tx_power: cid(Feature::TxPower)?,
                missing: cid(Feature::Missing)?,
            },
        });
    }
    Ok(out)
}
