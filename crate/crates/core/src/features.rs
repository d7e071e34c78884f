//! Per-window feature extraction and pairwise similarity.
//!
//! SNR and Tx power use Pearson correlation over the aligned, channel-
//! concatenated values of two devices. The missing feature compares per-epoch
//! presence bitmaps with one minus the normalized Hamming distance.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{Feature, FeatureMap, Metric, TelemetryPoint, TelemetrySeries};
use crate::preprocess::{ground_truth_missing, mutual_nearest_into, EpochGrid};

/// Pearson correlation coefficient, `None` when either side has zero
/// variance or fewer than two values.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(pearson_unchecked(a, b))
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// One minus the fraction of differing positions.
pub fn hamming_similarity(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InsufficientData("empty bitmaps".into()));
    }
    Ok(hamming_unchecked(a, b))
}

fn hamming_unchecked(a: &[bool], b: &[bool]) -> f64 {
    // Divide the agreement count directly so the quotient is correctly rounded.
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len() as f64
}

/// Dense symmetric matrix of pairwise similarities; `None` marks a pair with
/// too little evidence to compare.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub feature: Feature,
    n: usize,
    entries: Vec<Option<f64>>,
}

impl SimilarityMatrix {
    pub fn new(feature: Feature, n: usize) -> Self {
        Self {
            feature,
            n,
            entries: vec![None; n * n],
        }
    }

    /// Build from a full square table; asymmetric input is rejected.
    pub fn from_rows(feature: Feature, rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::new(feature, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch { left: row.len(), right: n });
            }
            for (j, v) in row.iter().enumerate() {
                if *v != rows[j][i] {
                    return Err(Error::InvalidConfig(format!("similarity ({i}, {j}) is asymmetric")));
                }
                m.entries[i * n + j] = *v;
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Option<f64>) {
        self.entries[i * self.n + j] = value;
        self.entries[j * self.n + i] = value;
    }
}

fn window_range(points: &[TelemetryPoint], start: f64, end: f64) -> Range<usize> {
    let lo = points.partition_point(|p| p.ts <= start);
    let hi = points.partition_point(|p| p.ts <= end);
    lo..hi.max(lo)
}

/// Aligned metric values of two devices in `(start, end]`, channels
/// concatenated in ascending order. `None` when fewer than `min_overlap`
/// pairs survive alignment.
pub fn extract_numeric_pair(
    x: &TelemetrySeries,
    y: &TelemetrySeries,
    feature: Feature,
    start: f64,
    end: f64,
    min_overlap: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let metric = feature.metric()?;
    let mut pair = PairScratch::default();
    let n_ch = x.channels.len().min(y.channels.len());
    for c in 0..n_ch {
        let xs = &x.channels[c][window_range(&x.channels[c], start, end)];
        let ys = &y.channels[c][window_range(&y.channels[c], start, end)];
        pair.push_channel(xs, ys, &[metric]);
    }
    (pair.a[0].len() >= min_overlap).then(|| (pair.a[0].clone(), pair.b[0].clone()))
}

#[derive(Default)]
struct PairScratch {
    tx: Vec<f64>,
    ty: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    a: [Vec<f64>; 2],
    b: [Vec<f64>; 2],
}

impl PairScratch {
    fn clear(&mut self) {
        for v in self.a.iter_mut().chain(self.b.iter_mut()) {
            v.clear();
        }
    }

    fn push_channel(&mut self, xs: &[TelemetryPoint], ys: &[TelemetryPoint], metrics: &[Metric]) {
        self.tx.clear();
        self.tx.extend(xs.iter().map(|p| p.ts));
        self.ty.clear();
        self.ty.extend(ys.iter().map(|p| p.ts));
        self.pairs.clear();
        mutual_nearest_into(&self.tx, &self.ty, &mut self.pairs);
        for &(i, j) in &self.pairs {
            if let (Some(mx), Some(my)) = (xs[i].metrics, ys[j].metrics) {
                for (k, &m) in metrics.iter().enumerate() {
                    self.a[k].push(mx.get(m));
                    self.b[k].push(my.get(m));
                }
            }
        }
    }
}

/// Per-epoch presence over the whole grid: `false` iff every channel misses
/// the epoch.
pub fn presence_bitmap(series: &TelemetrySeries, grid: &EpochGrid) -> Vec<bool> {
    let missing = ground_truth_missing(series, grid);
    (0..grid.len())
        .map(|e| !missing.iter().all(|m| m.contains(&e)))
        .collect()
}

/// Presence bitmap of the epochs whose center lies in `(start, end]`.
pub fn missing_vector(series: &TelemetrySeries, grid: &EpochGrid, start: f64, end: f64) -> Vec<bool> {
    let r = grid.epochs_in(start, end);
    let sub = EpochGrid {
        epochs: grid.epochs[r].to_vec(),
        interval_hours: grid.interval_hours,
    };
    presence_bitmap(series, &sub)
}

/// All three similarity matrices of one window. `presence` holds each
/// device's full-grid bitmap and `epochs` the window's epoch range; one
/// alignment per device pair and channel feeds both numeric features.
pub fn similarity_matrices(
    series: &[&TelemetrySeries],
    presence: &[Vec<bool>],
    epochs: Range<usize>,
    start: f64,
    end: f64,
    min_overlap: usize,
) -> FeatureMap<SimilarityMatrix> {
    let n = series.len();
    let mut out = FeatureMap::from_fn(|f| SimilarityMatrix::new(f, n));
    let ranges: Vec<Vec<Range<usize>>> = series
        .iter()
        .map(|s| s.channels.iter().map(|c| window_range(c, start, end)).collect())
        .collect();
    let metrics = [Metric::Snr, Metric::TxPower];
    let mut scratch = PairScratch::default();
    for i in 0..n {
        for j in i..n {
            scratch.clear();
            let n_ch = series[i].channels.len().min(series[j].channels.len());
            for c in 0..n_ch {
                let xs = &series[i].channels[c][ranges[i][c].clone()];
                let ys = &series[j].channels[c][ranges[j][c].clone()];
                scratch.push_channel(xs, ys, &metrics);
            }
            let defined = scratch.a[0].len() >= min_overlap;
            for (k, f) in [Feature::Snr, Feature::TxPower].into_iter().enumerate() {
                let v = if defined {
                    // Self-similarity is exactly 1 whenever it is defined.
                    pearson_unchecked(&scratch.a[k], &scratch.b[k]).map(|r| if i == j { 1.0 } else { r })
                } else {
                    None
                };
                out.get_mut(f).set(i, j, v);
            }
            let (pi, pj) = (&presence[i][epochs.clone()], &presence[j][epochs.clone()]);
            let v = if pi.is_empty() { 1.0 } else { hamming_unchecked(pi, pj) };
            out.missing.set(i, j, Some(v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Metrics, SECONDS_PER_HOUR};
    use crate::preprocess::Epoch;

    const H: f64 = SECONDS_PER_HOUR;

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &a).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| 7.0 - x).collect();
        assert!((pearson(&a, &neg).unwrap().unwrap() + 1.0).abs() < 1e-12);
        let b = [2.0, 4.0, 5.0, 9.0];
        let want = 11.0 / (5.0f64 * 26.0).sqrt();
        assert!((pearson(&a, &b).unwrap().unwrap() - want).abs() < 1e-12);
        assert_eq!(pearson(&a, &[1.0; 4]).unwrap(), None);
        assert!(matches!(pearson(&a, &b[..3]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn hamming_examples() {
        let a = [true, true, false, true];
        assert_eq!(hamming_similarity(&a, &a).unwrap(), 1.0);
        let c: Vec<bool> = a.iter().map(|x| !x).collect();
        assert_eq!(hamming_similarity(&a, &c).unwrap(), 0.0);
        assert_eq!(hamming_similarity(&a, &[true, false, false, true]).unwrap(), 0.75);
        assert!(hamming_similarity(&a, &[true]).is_err());
    }

    fn grid_series(id: &str, n_ch: usize, epochs: usize, f: impl Fn(usize, usize) -> Option<f64>) -> TelemetrySeries {
        let mut s = TelemetrySeries::new(id, "f", n_ch);
        for c in 0..n_ch {
            for k in 0..epochs {
                if let Some(v) = f(c, k) {
                    let m = Metrics { snr: -v, tx_power: v, rx_power: 0.0 };
                    s.channels[c].push(TelemetryPoint::observed(k as f64 * 4.0 * H + 1.0, m));
                }
            }
        }
        s
    }

    #[test]
    fn full_day_window_gives_eighteen_values() {
        let x = grid_series("x", 3, 6, |c, k| Some((c * 10 + k) as f64));
        let y = grid_series("y", 3, 6, |c, k| Some((c * 10 + k * k) as f64));
        let (a, b) = extract_numeric_pair(&x, &y, Feature::TxPower, 0.0, 24.0 * H, 7).unwrap();
        assert_eq!(a.len(), 18);
        assert_eq!(b.len(), 18);
        let (a2, b2) = extract_numeric_pair(&x, &x, Feature::Snr, 0.0, 24.0 * H, 7).unwrap();
        assert_eq!(a2, b2);
    }

    #[test]
    fn disjoint_spans_are_undefined() {
        let x = grid_series("x", 1, 6, |_, k| (k < 3).then_some(k as f64));
        let y = grid_series("y", 1, 12, |_, k| (k >= 9).then_some(k as f64));
        assert_eq!(extract_numeric_pair(&x, &y, Feature::TxPower, 0.0, 48.0 * H, 2), None);
    }

    fn day_grid() -> EpochGrid {
        EpochGrid {
            epochs: (0..6).map(|k| Epoch { start: k as f64 * 4.0 * H, span: 2.0 }).collect(),
            interval_hours: 4.0,
        }
    }

    #[test]
    fn missing_vector_uses_all_channel_rule() {
        let g = day_grid();
        let full = grid_series("a", 3, 6, |_, _| Some(0.0));
        assert_eq!(missing_vector(&full, &g, -1.0, 24.0 * H), vec![true; 6]);
        let gap = grid_series("b", 3, 6, |_, k| (k != 2).then_some(0.0));
        assert_eq!(
            missing_vector(&gap, &g, -1.0, 24.0 * H),
            vec![true, true, false, true, true, true]
        );
        let one = grid_series("c", 3, 6, |c, k| (c != 0 || k != 2).then_some(0.0));
        assert_eq!(missing_vector(&one, &g, -1.0, 24.0 * H), vec![true; 6]);
    }

    #[test]
    fn matrix_is_symmetric_and_respects_overlap() {
        let g = day_grid();
        let a = grid_series("a", 3, 6, |c, k| Some((c + k) as f64));
        let b = grid_series("b", 3, 6, |c, k| Some((c + 2 * k) as f64));
        let short = grid_series("s", 1, 6, |_, k| (k < 3).then_some(k as f64));
        let series = [&a, &b, &short];
        let presence: Vec<Vec<bool>> = series.iter().map(|s| presence_bitmap(s, &g)).collect();
        let m = similarity_matrices(&series, &presence, 0..6, -1.0, 24.0 * H, 7);
        for f in Feature::ALL {
            let mat = m.get(f);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(mat.get(i, j), mat.get(j, i));
                }
            }
        }
        assert!(m.tx_power.get(0, 1).unwrap() > 0.9);
        assert_eq!(m.tx_power.get(0, 0), Some(1.0));
        assert_eq!(m.tx_power.get(0, 2), None);
        assert_eq!(m.missing.get(0, 2), Some(0.5));
    }

    #[test]
    fn single_device_matrix() {
        let a = grid_series("a", 3, 6, |c, k| Some((c + k) as f64));
        let g = day_grid();
        let presence = vec![presence_bitmap(&a, &g)];
        let m = similarity_matrices(&[&a], &presence, 0..6, -1.0, 24.0 * H, 7);
        assert_eq!(m.snr.len(), 1);
        assert_eq!(m.snr.get(0, 0), Some(1.0));
        assert_eq!(m.missing.get(0, 0), Some(1.0));
    }
}
