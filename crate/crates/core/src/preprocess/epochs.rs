use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SECONDS_PER_HOUR;

/// One node-wide collection round: every device is polled once somewhere in
/// `[start, start + span]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epoch {
    /// Epoch seconds.
    pub start: f64,
    /// Seconds.
    pub span: f64,
}

impl Epoch {
    pub fn center(&self) -> f64 {
        self.start + self.span / 2.0
    }

    pub fn end(&self) -> f64 {
        self.start + self.span
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochGrid {
    /// Ordered by start.
    pub epochs: Vec<Epoch>,
    pub interval_hours: f64,
}

impl EpochGrid {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn centers_hours(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.center() / SECONDS_PER_HOUR).collect()
    }

    /// Indices of epochs whose center lies in `(start, end]`.
    pub fn epochs_in(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let lo = self.epochs.partition_point(|e| e.center() <= start);
        let hi = self.epochs.partition_point(|e| e.center() <= end);
        lo..hi.max(lo)
    }
}

/// DBSCAN hyper-parameters for epoch detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochParams {
    pub eps_hours: f64,
    pub min_samples: usize,
}

/// 1-D DBSCAN over collection timestamps; each cluster becomes one epoch.
///
/// Neighborhoods are closed (`|a - b| <= eps`) and include the point itself.
/// A border point reachable from two clusters joins the earlier one, which
/// is what the classic scan yields on time-sorted input. Noise is dropped.
pub fn detect_epochs(
    timestamps: &[f64],
    eps_hours: f64,
    min_samples: usize,
    interval_hours: f64,
) -> EpochGrid {
    let mut ts = timestamps.to_vec();
    ts.sort_by(f64::total_cmp);
    let eps = eps_hours * SECONDS_PER_HOUR;
    let n = ts.len();

    // Neighbor counts with a sliding window over the sorted values.
    let mut core = vec![false; n];
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..n {
        while ts[i] - ts[lo] > eps {
            lo += 1;
        }
        if hi < i {
            hi = i;
        }
        while hi + 1 < n && ts[hi + 1] - ts[i] <= eps {
            hi += 1;
        }
        core[i] = hi - lo + 1 >= min_samples.max(1);
    }

    // Chains of core points with gaps <= eps form clusters.
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut n_clusters = 0;
    let mut last_core: Option<usize> = None;
    for i in (0..n).filter(|&i| core[i]) {
        match last_core {
            Some(j) if ts[i] - ts[j] <= eps => label[i] = label[j],
            _ => {
                label[i] = Some(n_clusters);
                n_clusters += 1;
            }
        }
        last_core = Some(i);
    }

    // Border points: previous core first, then next core.
    let mut prev_core: Option<usize> = None;
    let mut next_core = vec![None; n];
    let mut upcoming = None;
    for i in (0..n).rev() {
        next_core[i] = upcoming;
        if core[i] {
            upcoming = Some(i);
        }
    }
    for i in 0..n {
        if core[i] {
            prev_core = Some(i);
            continue;
        }
        if let Some(j) = prev_core.filter(|&j| ts[i] - ts[j] <= eps) {
            label[i] = label[j];
        } else if let Some(j) = next_core[i].filter(|&j| ts[j] - ts[i] <= eps) {
            label[i] = label[j];
        }
    }

    let mut bounds: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); n_clusters];
    for (t, l) in ts.iter().zip(&label) {
        if let Some(c) = l {
            bounds[*c].0 = bounds[*c].0.min(*t);
            bounds[*c].1 = bounds[*c].1.max(*t);
        }
    }
    let mut epochs: Vec<Epoch> = bounds
        .into_iter()
        .map(|(a, b)| Epoch { start: a, span: b - a })
        .collect();
    epochs.sort_by(|a, b| a.start.total_cmp(&b.start));
    EpochGrid {
        epochs,
        interval_hours,
    }
}

/// Summed deviation, in hours, of adjacent epoch-center gaps from the nearest
/// positive multiple of L. Whole-node misses (gaps near 2L, 3L, ...) are not
/// penalized beyond their residual.
pub fn epoch_error(grid: &EpochGrid) -> f64 {
    let l = grid.interval_hours;
    grid.centers_hours()
        .windows(2)
        .map(|w| {
            let gap = w[1] - w[0];
            let k = (gap / l).round().max(1.0);
            (gap - k * l).abs()
        })
        .sum()
}

pub const MIN_SAMPLES_CANDIDATES: std::ops::RangeInclusive<usize> = 2..=10;

/// 0.1 h, 0.2 h, ... up to L/2.
pub fn eps_candidates(interval_hours: f64) -> Vec<f64> {
    let n = ((interval_hours / 2.0) / 0.1 + 1e-9).floor() as usize;
    (1..=n).map(|k| k as f64 / 10.0).collect()
}

/// Grid search over (eps, min_samples) minimizing [`epoch_error`]. Ties go to
/// the smaller eps, then the smaller min_samples. Candidates that produce
/// fewer than two epochs are only used when no candidate produces two.
pub fn calibrate_epoch_params(timestamps: &[f64], interval_hours: f64) -> Result<EpochParams> {
    if timestamps.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "epoch calibration needs at least 2 timestamps, got {}",
            timestamps.len()
        )));
    }
    let mut ts = timestamps.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut best: Option<(bool, f64, EpochParams)> = None;
    for eps in eps_candidates(interval_hours) {
        for min_samples in MIN_SAMPLES_CANDIDATES {
            let grid = detect_epochs(&ts, eps, min_samples, interval_hours);
            let usable = grid.len() >= 2;
            let err = epoch_error(&grid);
            let better = match &best {
                None => true,
                Some((b_usable, b_err, _)) => (usable && !b_usable) || (usable == *b_usable && err < *b_err),
            };
            if better {
                best = Some((usable, err, EpochParams { eps_hours: eps, min_samples }));
            }
        }
    }
    Ok(best.map(|b| b.2).expect("candidate mesh is non-empty"))
}
