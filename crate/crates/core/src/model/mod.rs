//! Domain types shared by every stage of the pipeline.
//!
//! Timestamps are Unix epoch seconds stored as `f64`; interval arithmetic is
//! done in hours and converted with [`SECONDS_PER_HOUR`].

mod csv_io;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detect::DetectionThresholds;
use crate::error::{Error, Result};
use crate::preprocess::EpochParams;

pub use csv_io::{
    ingest_pnm_csv, ingest_tickets_csv, read_pnm, read_tickets, write_pnm, write_pnm_csv,
    write_tickets, write_tickets_csv, PNM_HEADER, TICKETS_HEADER,
};

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Instantaneous RF metrics reported by one collection.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    /// Upstream SNR at the headend, dB.
    pub snr: f64,
    /// Device transmit power, dBmV.
    pub tx_power: f64,
    /// Headend receive power, dBmV.
    pub rx_power: f64,
}

impl Metrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Snr => self.snr,
            Metric::TxPower => self.tx_power,
            Metric::RxPower => self.rx_power,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.snr.is_finite() && self.tx_power.is_finite() && self.rx_power.is_finite()
    }
}

/// One collection on one channel. `metrics` is `None` for an inferred
/// placeholder, so placeholder values can never leak into a similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryPoint {
    pub ts: f64,
    pub metrics: Option<Metrics>,
}

impl TelemetryPoint {
    pub fn observed(ts: f64, metrics: Metrics) -> Self {
        Self {
            ts,
            metrics: Some(metrics),
        }
    }

    pub fn placeholder(ts: f64) -> Self {
        Self { ts, metrics: None }
    }

    pub fn is_placeholder(&self) -> bool {
        self.metrics.is_none()
    }
}

/// Per-channel, time-ordered telemetry of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySeries {
    pub device_id: String,
    pub fnode_id: String,
    /// Indexed by channel.
    pub channels: Vec<Vec<TelemetryPoint>>,
}

impl TelemetrySeries {
    pub fn new(device_id: impl Into<String>, fnode_id: impl Into<String>, n_channels: usize) -> Self {
        Self {
            device_id: device_id.into(),
            fnode_id: fnode_id.into(),
            channels: vec![Vec::new(); n_channels],
        }
    }

    pub fn n_points(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in self.channels.iter().flatten() {
            lo = lo.min(p.ts);
            hi = hi.max(p.ts);
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// All devices behind one fiber node.
#[derive(Debug, Clone, PartialEq)]
pub struct FNodeDataset {
    pub fnode_id: String,
    pub devices: BTreeMap<String, TelemetrySeries>,
    /// Default collection interval L, hours.
    pub interval_hours: f64,
    pub n_channels: usize,
}

impl FNodeDataset {
    pub fn new(fnode_id: impl Into<String>, interval_hours: f64, n_channels: usize) -> Result<Self> {
        if !(interval_hours > 0.0) || n_channels == 0 {
            return Err(Error::InvalidConfig(format!(
                "interval {interval_hours} h and {n_channels} channels"
            )));
        }
        Ok(Self {
            fnode_id: fnode_id.into(),
            devices: BTreeMap::new(),
            interval_hours,
            n_channels,
        })
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.devices
            .values()
            .filter_map(TelemetrySeries::bounds)
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    /// Every collection timestamp in the node, one entry per point.
    pub fn timestamps(&self) -> Vec<f64> {
        self.devices
            .values()
            .flat_map(|s| s.channels.iter().flatten())
            .filter(|p| !p.is_placeholder())
            .map(|p| p.ts)
            .collect()
    }

    /// Copy of the dataset restricted to points with `start < ts <= end`.
    pub fn slice(&self, start: f64, end: f64) -> FNodeDataset {
        let devices = self
            .devices
            .iter()
            .map(|(id, s)| {
                let channels = s
                    .channels
                    .iter()
                    .map(|ch| ch.iter().filter(|p| p.ts > start && p.ts <= end).copied().collect())
                    .collect();
                (
                    id.clone(),
                    TelemetrySeries {
                        device_id: s.device_id.clone(),
                        fnode_id: s.fnode_id.clone(),
                        channels,
                    },
                )
            })
            .collect();
        FNodeDataset {
            fnode_id: self.fnode_id.clone(),
            devices,
            interval_hours: self.interval_hours,
            n_channels: self.n_channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TicketKind {
    Maintenance,
    Service,
}

impl TicketKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TicketKind::Maintenance => "maintenance",
            TicketKind::Service => "service",
        }
    }
}

impl fmt::Display for TicketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ticket {
    pub ticket_id: String,
    pub device_id: String,
    pub fnode_id: String,
    pub open_ts: f64,
    pub close_ts: Option<f64>,
    pub kind: TicketKind,
    pub dispatched: bool,
}

/// Clustering features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Snr,
    TxPower,
    Missing,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Snr, Feature::TxPower, Feature::Missing];

    pub fn as_str(&self) -> &'static str {
        match self {
            Feature::Snr => "snr",
            Feature::TxPower => "tx_power",
            Feature::Missing => "missing",
        }
    }

    /// The metric whose values feed a numeric feature.
    pub fn metric(&self) -> Option<Metric> {
        match self {
            Feature::Snr => Some(Metric::Snr),
            Feature::TxPower => Some(Metric::TxPower),
            Feature::Missing => None,
        }
    }

    /// Range of the feature's similarity function.
    pub fn similarity_range(&self) -> (f64, f64) {
        match self {
            Feature::Snr | Feature::TxPower => (-1.0, 1.0),
            Feature::Missing => (0.0, 1.0),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature {s:?}")))
    }
}

/// Detection metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Snr,
    TxPower,
    RxPower,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Snr, Metric::TxPower, Metric::RxPower];
}

/// One value per clustering feature.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMap<T> {
    pub snr: T,
    pub tx_power: T,
    pub missing: T,
}

impl<T> FeatureMap<T> {
    pub fn from_fn(mut f: impl FnMut(Feature) -> T) -> Self {
        Self {
            snr: f(Feature::Snr),
            tx_power: f(Feature::TxPower),
            missing: f(Feature::Missing),
        }
    }

    pub fn get(&self, feature: Feature) -> &T {
        match feature {
            Feature::Snr => &self.snr,
            Feature::TxPower => &self.tx_power,
            Feature::Missing => &self.missing,
        }
    }

    pub fn get_mut(&mut self, feature: Feature) -> &mut T {
        match feature {
            Feature::Snr => &mut self.snr,
            Feature::TxPower => &mut self.tx_power,
            Feature::Missing => &mut self.missing,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, &T)> {
        Feature::ALL.into_iter().map(move |f| (f, self.get(f)))
    }
}

/// Everything `diagnose_fnode` needs to run one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Default collection interval L, hours.
    pub interval_hours: f64,
    pub n_channels: usize,
    /// Gap at or above which a collection is inferred missing, hours.
    pub missing_threshold_hours: f64,
    pub epoch: EpochParams,
    /// Per-feature similarity threshold s_f.
    pub similarity: FeatureMap<f64>,
    /// Minimum flagged-cluster size for a maintenance diagnosis.
    pub c_thr: usize,
    pub lookback_days: f64,
    /// Minimum aligned points for a numeric similarity to be defined.
    pub min_overlap: usize,
    pub detection: DetectionThresholds,
}

impl HyperParams {
    /// Defaults for L-hour collection on `n_channels` channels: one-day
    /// look-back, C_thr = 5, overlap from [`default_min_overlap`].
    pub fn new(interval_hours: f64, n_channels: usize) -> Self {
        let lookback_days = 1.0;
        Self {
            interval_hours,
            n_channels,
            missing_threshold_hours: interval_hours * 1.5,
            epoch: EpochParams {
                eps_hours: (interval_hours / 8.0).max(0.1),
                min_samples: 2,
            },
            similarity: FeatureMap {
                snr: 0.5,
                tx_power: 0.5,
                missing: 0.9,
            },
            c_thr: 5,
            lookback_days,
            min_overlap: default_min_overlap(lookback_days, interval_hours, n_channels),
            detection: DetectionThresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.interval_hours;
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(l > 0.0) {
            return fail(format!("collection interval must be positive, got {l}"));
        }
        if self.n_channels == 0 {
            return fail("at least one channel is required".into());
        }
        if !(self.missing_threshold_hours > l && self.missing_threshold_hours < 2.0 * l) {
            return fail(format!(
                "missing threshold {} h must lie in ({l}, {})",
                self.missing_threshold_hours,
                2.0 * l
            ));
        }
        if self.c_thr < 1 {
            return fail("C_thr must be at least 1".into());
        }
        if !(self.lookback_days > 0.0) {
            return fail(format!("look-back must be positive, got {}", self.lookback_days));
        }
        if self.min_overlap < 2 {
            return fail(format!("minimum overlap must be at least 2, got {}", self.min_overlap));
        }
        for (f, s) in self.similarity.iter() {
            if !(-1.0..=1.0).contains(s) {
                return fail(format!("similarity threshold for {f} out of [-1, 1]: {s}"));
            }
        }
        self.detection.validate()
    }

    pub fn lookback_seconds(&self) -> f64 {
        self.lookback_days * SECONDS_PER_DAY
    }
}

/// One third of the points expected in the look-back window, plus one.
pub fn default_min_overlap(lookback_days: f64, interval_hours: f64, n_channels: usize) -> usize {
    let expected = lookback_days * 24.0 / interval_hours * n_channels as f64;
    ((expected / 3.0).ceil() as usize + 1).max(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_default_for_one_day() {
        assert_eq!(default_min_overlap(1.0, 4.0, 3), 7);
        assert_eq!(default_min_overlap(7.0, 4.0, 3), 43);
    }

    #[test]
    fn hyper_params_validation() {
        let mut h = HyperParams::new(4.0, 3);
        h.validate().unwrap();
        h.missing_threshold_hours = 8.0;
        assert!(h.validate().is_err());
        h.missing_threshold_hours = 6.0;
        h.min_overlap = 1;
        assert!(h.validate().is_err());
        h.min_overlap = 7;
        h.c_thr = 0;
        assert!(h.validate().is_err());
    }

    #[test]
    fn feature_parse_round_trip() {
        for f in Feature::ALL {
            assert_eq!(f.as_str().parse::<Feature>().unwrap(), f);
        }
        assert!("rx".parse::<Feature>().is_err());
    }
}
