use crate::error::{Error, Result};
use crate::model::{Metrics, TelemetryPoint, TelemetrySeries, SECONDS_PER_HOUR};

/// Linear interpolation of a channel's observed points onto the absolute
/// grid `{k·L}` inside the observed span. Fewer than two observed points
/// give an empty channel.
pub fn resample_channel(points: &[TelemetryPoint], interval_hours: f64) -> Vec<TelemetryPoint> {
    let obs: Vec<(f64, Metrics)> = points.iter().filter_map(|p| p.metrics.map(|m| (p.ts, m))).collect();
    if obs.len() < 2 {
        return Vec::new();
    }
    let step = interval_hours * SECONDS_PER_HOUR;
    let first = obs[0].0;
    let last = obs[obs.len() - 1].0;
    let mut k = (first / step).ceil() as i64;
    let mut seg = 0usize;
    let mut out = Vec::new();
    loop {
        let t = k as f64 * step;
        if t > last {
            break;
        }
        while seg + 2 < obs.len() && obs[seg + 1].0 < t {
            seg += 1;
        }
        let (t0, a) = obs[seg];
        let (t1, b) = obs[seg + 1];
        let m = if t == t0 {
            a
        } else if t == t1 {
            b
        } else {
            let w = (t - t0) / (t1 - t0);
            Metrics {
                snr: a.snr + w * (b.snr - a.snr),
                tx_power: a.tx_power + w * (b.tx_power - a.tx_power),
                rx_power: a.rx_power + w * (b.rx_power - a.rx_power),
            }
        };
        out.push(TelemetryPoint::observed(t, m));
        k += 1;
    }
    out
}

/// Resample every channel onto the exact L-hour grid.
pub fn resample_uniform(series: &TelemetrySeries, interval_hours: f64) -> Result<TelemetrySeries> {
    for (c, ch) in series.channels.iter().enumerate() {
        let n = ch.iter().filter(|p| !p.is_placeholder()).count();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "device {} channel {c} has {n} observed points, resampling needs 2",
                series.device_id
            )));
        }
    }
    Ok(TelemetrySeries {
        device_id: series.device_id.clone(),
        fnode_id: series.fnode_id.clone(),
        channels: series.channels.iter().map(|c| resample_channel(c, interval_hours)).collect(),
    })
}
