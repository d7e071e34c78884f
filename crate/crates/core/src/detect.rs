//! Per-device anomaly rules and ticket-driven threshold calibration.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::model::{Metric, Ticket, TelemetryPoint, TelemetrySeries, SECONDS_PER_HOUR};

pub const DEFAULT_ANOMALY_FRACTION: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Values strictly below the threshold are anomalous.
    Below,
    /// Values strictly above the threshold are anomalous.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricThreshold {
    pub value: f64,
    pub direction: Direction,
}

impl MetricThreshold {
    pub fn breached(&self, v: f64) -> bool {
        match self.direction {
            Direction::Below => v < self.value,
            Direction::Above => v > self.value,
        }
    }
}

/// Per-metric rules; a metric without a rule never fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionThresholds {
    pub snr: Option<MetricThreshold>,
    pub tx_power: Option<MetricThreshold>,
    pub rx_power: Option<MetricThreshold>,
    /// Fraction φ of a window's points that must breach.
    pub anomaly_fraction: f64,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self {
            snr: None,
            tx_power: None,
            rx_power: None,
            anomaly_fraction: DEFAULT_ANOMALY_FRACTION,
        }
    }
}

impl DetectionThresholds {
    pub fn get(&self, metric: Metric) -> Option<MetricThreshold> {
        match metric {
            Metric::Snr => self.snr,
            Metric::TxPower => self.tx_power,
            Metric::RxPower => self.rx_power,
        }
    }

    pub fn set(&mut self, metric: Metric, t: Option<MetricThreshold>) {
        match metric {
            Metric::Snr => self.snr = t,
            Metric::TxPower => self.tx_power = t,
            Metric::RxPower => self.rx_power = t,
        }
    }

    pub fn is_calibrated(&self) -> bool {
        Metric::ALL.iter().any(|&m| self.get(m).is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let phi = self.anomaly_fraction;
        if !(phi > 0.0 && phi <= 1.0) {
            return Err(Error::InvalidConfig(format!("anomaly fraction {phi} outside (0, 1]")));
        }
        for m in Metric::ALL {
            if let Some(t) = self.get(m) {
                if !t.value.is_finite() {
                    return Err(Error::InvalidConfig(format!("non-finite threshold for {m:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Smallest count that reaches fraction `phi` of `n`, at least 1.
pub fn required_count(n: usize, phi: f64) -> usize {
    ((phi * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Which dimensions of one device fire in one window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct DeviceAnomaly {
    pub snr: bool,
    pub tx_power: bool,
    pub rx_power: bool,
    /// Availability loss: most epochs missing on every channel, or no data.
    pub missing: bool,
}

impl DeviceAnomaly {
    pub fn any(&self) -> bool {
        self.snr || self.tx_power || self.rx_power || self.missing
    }

    pub fn metric(&self, m: Metric) -> bool {
        match m {
            Metric::Snr => self.snr,
            Metric::TxPower => self.tx_power,
            Metric::RxPower => self.rx_power,
        }
    }
}

fn window_points(points: &[TelemetryPoint], start: f64, end: f64) -> &[TelemetryPoint] {
    let lo = points.partition_point(|p| p.ts <= start);
    let hi = points.partition_point(|p| p.ts <= end);
    &points[lo..hi.max(lo)]
}

/// Observed values of `metric` in `(start, end]`, all channels.
pub fn window_values(series: &TelemetrySeries, metric: Metric, start: f64, end: f64) -> Vec<f64> {
    series
        .channels
        .iter()
        .flat_map(|c| window_points(c, start, end))
        .filter_map(|p| p.metrics.map(|m| m.get(metric)))
        .collect()
}

/// Apply the threshold rules to one device window. `presence` is the
/// device's per-epoch presence bitmap restricted to the window.
pub fn device_anomalous(
    series: &TelemetrySeries,
    start: f64,
    end: f64,
    presence: &[bool],
    thresholds: &DetectionThresholds,
) -> DeviceAnomaly {
    let phi = thresholds.anomaly_fraction;
    let mut out = DeviceAnomaly::default();
    let mut observed = 0usize;
    for m in Metric::ALL {
        let values = window_values(series, m, start, end);
        observed = values.len();
        let fired = thresholds.get(m).is_some_and(|t| {
            !values.is_empty() && values.iter().filter(|&&v| t.breached(v)).count() >= required_count(values.len(), phi)
        });
        match m {
            Metric::Snr => out.snr = fired,
            Metric::TxPower => out.tx_power = fired,
            Metric::RxPower => out.rx_power = fired,
        }
    }
    let absent = presence.iter().filter(|p| !**p).count();
    out.missing = observed == 0 || (!presence.is_empty() && absent >= required_count(presence.len(), phi));
    out
}

/// Indices of clusters with at least one anomalous member.
pub fn flag_clusters(partition: &Partition, anomalous: &[bool]) -> Vec<usize> {
    partition
        .clusters()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().any(|&i| anomalous[i]))
        .map(|(k, _)| k)
        .collect()
}

/// Observed metric values of one device window together with the span of
/// the interval credited to it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub fnode_id: String,
    pub device_id: String,
    /// Credited interval `(start, end]`, epoch seconds.
    pub start: f64,
    pub end: f64,
    /// Indexed like [`Metric::ALL`].
    pub values: [Vec<f64>; 3],
}

/// Number of threshold candidates scanned per metric and direction.
pub const DETECTION_CANDIDATES: usize = 100;
/// Minimum share of total time a candidate must flag.
pub const MIN_FLAGGED_SHARE: f64 = 0.01;
/// Poisson z-score a candidate's flagged ticket count must reach over the
/// count expected at the baseline rate.
pub const MIN_EXCESS_Z: f64 = 3.0;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `k`-th smallest value (1-based), or `k`-th largest.
fn order_stat(values: &[f64], k: usize, largest: bool) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if largest {
        v[v.len() - k]
    } else {
        v[k - 1]
    }
}

/// Choose, per metric, the threshold and direction that maximize tickets
/// per flagged device-hour. A candidate must flag at least
/// [`MIN_FLAGGED_SHARE`] of the total time and exceed the baseline rate by
/// [`MIN_EXCESS_Z`] Poisson deviations; when none does, the metric falls back
/// to the least aggressive candidate, which flags almost nothing. Ties go
/// to the less aggressive threshold.
pub fn calibrate_detection(samples: &[WindowSample], tickets: &[Ticket], anomaly_fraction: f64) -> Result<DetectionThresholds> {
    let mut by_device: HashMap<(&str, &str), Vec<f64>> = HashMap::new();
    for t in tickets {
        by_device.entry((&t.fnode_id, &t.device_id)).or_default().push(t.open_ts);
    }
    for v in by_device.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    let counts: Vec<f64> = samples
        .iter()
        .map(|s| {
            by_device.get(&(s.fnode_id.as_str(), s.device_id.as_str())).map_or(0.0, |ts| {
                (ts.partition_point(|&t| t <= s.end) - ts.partition_point(|&t| t <= s.start)) as f64
            })
        })
        .collect();
    let total_tickets: f64 = counts.iter().sum();
    if total_tickets == 0.0 {
        return Err(Error::NoTickets);
    }
    let hours: Vec<f64> = samples.iter().map(|s| (s.end - s.start) / SECONDS_PER_HOUR).collect();
    let total_hours: f64 = hours.iter().sum();
    if !(total_hours > 0.0) {
        return Err(Error::EmptySpan);
    }
    let baseline = total_tickets / total_hours;

    let mut out = DetectionThresholds {
        anomaly_fraction,
        ..Default::default()
    };
    for (mi, metric) in Metric::ALL.into_iter().enumerate() {
        let mut pooled: Vec<f64> = samples.iter().flat_map(|s| s.values[mi].iter().copied()).collect();
        if pooled.is_empty() {
            continue;
        }
        pooled.sort_by(f64::total_cmp);
        let (p1, p99) = (percentile(&pooled, 0.01), percentile(&pooled, 0.99));
        let steps = DETECTION_CANDIDATES - 1;
        let candidates: Vec<f64> = (0..DETECTION_CANDIDATES)
            .map(|k| p1 + (p99 - p1) * k as f64 / steps as f64)
            .collect();
        // Least aggressive first, so strict improvement keeps ties there.
        let mut best: Option<(f64, MetricThreshold)> = None;
        for direction in [Direction::Below, Direction::Above] {
            let critical: Vec<Option<f64>> = samples
                .iter()
                .map(|s| {
                    let v = &s.values[mi];
                    (!v.is_empty()).then(|| order_stat(v, required_count(v.len(), anomaly_fraction), direction == Direction::Above))
                })
                .collect();
            let ordered: Box<dyn Iterator<Item = &f64>> = match direction {
                Direction::Below => Box::new(candidates.iter()),
                Direction::Above => Box::new(candidates.iter().rev()),
            };
            for &value in ordered {
                let t = MetricThreshold { value, direction };
                let (mut k, mut h) = (0.0, 0.0);
                for ((c, n), hr) in critical.iter().zip(&counts).zip(&hours) {
                    if c.is_some_and(|c| t.breached(c)) {
                        k += n;
                        h += hr;
                    }
                }
                if h < MIN_FLAGGED_SHARE * total_hours || h <= 0.0 {
                    continue;
                }
                let expected = baseline * h;
                if k < expected + MIN_EXCESS_Z * expected.sqrt() {
                    continue;
                }
                let rate = k / h;
                if best.is_none_or(|(r, _)| rate > r) {
                    best = Some((rate, t));
                }
            }
        }
        let chosen = best.map(|b| b.1).unwrap_or(MetricThreshold {
            value: p1,
            direction: Direction::Below,
        });
        out.set(metric, Some(chosen));
    }
    if !out.is_calibrated() {
        return Err(Error::InsufficientData("no observed metric values".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Metrics, TicketKind};

    const H: f64 = SECONDS_PER_HOUR;

    fn series_with_snr(values: &[f64]) -> TelemetrySeries {
        let mut s = TelemetrySeries::new("d", "f", 1);
        s.channels[0] = values
            .iter()
            .enumerate()
            .map(|(k, &v)| TelemetryPoint::observed(k as f64 * 4.0 * H + 1.0, Metrics { snr: v, tx_power: 40.0, rx_power: 0.0 }))
            .collect();
        s
    }

    fn snr_rule(value: f64) -> DetectionThresholds {
        DetectionThresholds {
            snr: Some(MetricThreshold { value, direction: Direction::Below }),
            ..Default::default()
        }
    }

    #[test]
    fn fraction_rule() {
        let th = snr_rule(30.0);
        let present = [true; 6];
        let normal = series_with_snr(&[35.0; 6]);
        assert!(!device_anomalous(&normal, 0.0, 24.0 * H, &present, &th).any());
        let four = series_with_snr(&[20.0, 20.0, 20.0, 20.0, 35.0, 35.0]);
        assert!(device_anomalous(&four, 0.0, 24.0 * H, &present, &th).snr);
        let three = series_with_snr(&[20.0, 20.0, 20.0, 35.0, 35.0, 35.0]);
        assert!(!device_anomalous(&three, 0.0, 24.0 * H, &present, &th).snr);
    }

    #[test]
    fn empty_window_is_missing_anomaly() {
        let s = series_with_snr(&[35.0; 6]);
        let a = device_anomalous(&s, 100.0 * H, 124.0 * H, &[false; 6], &snr_rule(30.0));
        assert!(a.missing && !a.snr);
    }

    #[test]
    fn required_counts() {
        assert_eq!(required_count(6, 2.0 / 3.0), 4);
        assert_eq!(required_count(18, 2.0 / 3.0), 12);
        assert_eq!(required_count(1, 2.0 / 3.0), 1);
        assert_eq!(required_count(3, 1.0), 3);
    }

    #[test]
    fn flagging() {
        let p = Partition::from_clusters(vec![vec![0, 1, 2], vec![3], vec![4, 5]]);
        assert!(flag_clusters(&p, &[false; 6]).is_empty());
        assert_eq!(flag_clusters(&p, &[false, true, false, false, false, false]), vec![0]);
        assert_eq!(flag_clusters(&p, &[false, true, false, false, false, true]), vec![0, 2]);
    }

    fn ticket(device: &str, ts: f64) -> Ticket {
        Ticket {
            ticket_id: format!("t{ts}"),
            device_id: device.into(),
            fnode_id: "f".into(),
            open_ts: ts,
            close_ts: None,
            kind: TicketKind::Service,
            dispatched: false,
        }
    }

    fn sample(device: usize, day: usize, snr: f64) -> WindowSample {
        let start = day as f64 * 24.0 * H;
        WindowSample {
            fnode_id: "f".into(),
            device_id: format!("d{device}"),
            start,
            end: start + 24.0 * H,
            values: [vec![snr; 6], vec![40.0; 6], vec![0.0; 6]],
        }
    }

    #[test]
    fn calibration_finds_depressed_snr() {
        // 50 devices × 20 days; devices 0..5 are faulty on days 0..10 with
        // SNR 25 dB and 3 tickets per day, healthy windows see 35 dB plus
        // per-device spread and one ticket per 10 device-days.
        let mut samples = Vec::new();
        let mut tickets = Vec::new();
        for d in 0..50 {
            for day in 0..20 {
                let faulty = d < 5 && day < 10;
                let snr = if faulty { 25.0 } else { 35.0 + (d % 7) as f64 * 0.3 };
                samples.push(sample(d, day, snr));
                let n = if faulty { 3 } else if (d + day) % 10 == 0 { 1 } else { 0 };
                for k in 0..n {
                    tickets.push(ticket(&format!("d{d}"), (day as f64 * 24.0 + 1.0 + k as f64) * H));
                }
            }
        }
        let th = calibrate_detection(&samples, &tickets, 2.0 / 3.0).unwrap();
        let snr = th.snr.unwrap();
        assert_eq!(snr.direction, Direction::Below);
        assert!(snr.value > 25.0 && snr.value <= 35.0, "{snr:?}");
    }

    #[test]
    fn uniform_tickets_fall_back_to_least_aggressive() {
        let mut samples = Vec::new();
        let mut tickets = Vec::new();
        for d in 0..50 {
            for day in 0..20 {
                samples.push(sample(d, day, 35.0 + (d % 5) as f64));
                if (d * 7 + day) % 5 == 0 {
                    tickets.push(ticket(&format!("d{d}"), (day as f64 * 24.0 + 3.0) * H));
                }
            }
        }
        let th = calibrate_detection(&samples, &tickets, 2.0 / 3.0).unwrap();
        assert_eq!(th.snr.unwrap(), MetricThreshold { value: 35.0, direction: Direction::Below });
    }

    #[test]
    fn zero_tickets_is_an_error() {
        assert!(matches!(calibrate_detection(&[sample(0, 0, 30.0)], &[], 2.0 / 3.0), Err(Error::NoTickets)));
    }
}
