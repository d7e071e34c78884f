use proptest::prelude::*;
use telapart_core::preprocess::{dedupe, detect_epochs, epoch_error, infer_missing, mutual_nearest};
use telapart_core::{Metrics, TelemetryPoint, SECONDS_PER_HOUR};

const L: f64 = 4.0;
const H: f64 = SECONDS_PER_HOUR;

/// Strictly increasing collection times: one per kept epoch, jittered
/// inside the first `jitter` hours of the epoch.
fn collection_times() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((any::<bool>(), 0.0f64..0.5), 1..30).prop_map(|epochs| {
        epochs
            .into_iter()
            .enumerate()
            .filter(|(_, (keep, _))| *keep)
            .map(|(k, (_, j))| (k as f64 * L + j * L) * H)
            .collect()
    })
}

fn observed(ts: &[f64]) -> Vec<TelemetryPoint> {
    ts.iter()
        .map(|&t| {
            TelemetryPoint::observed(
                t,
                Metrics {
                    snr: 35.0,
                    tx_power: 45.0,
                    rx_power: 0.0,
                },
            )
        })
        .collect()
}

proptest! {
    #[test]
    fn alignment_is_symmetric(x in collection_times(), y in collection_times()) {
        let forward = mutual_nearest(&x, &y);
        let mut backward: Vec<(usize, usize)> = mutual_nearest(&y, &x).into_iter().map(|(j, i)| (i, j)).collect();
        backward.sort_unstable();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn alignment_pairs_are_mutual_nearest_and_monotone(x in collection_times(), y in collection_times()) {
        let pairs = mutual_nearest(&x, &y);
        for w in pairs.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        for &(i, j) in &pairs {
            let d = (x[i] - y[j]).abs();
            prop_assert!(y.iter().all(|&v| (x[i] - v).abs() >= d));
            prop_assert!(x.iter().all(|&v| (v - y[j]).abs() >= d));
        }
    }

    #[test]
    fn inference_is_idempotent(ts in collection_times(), lm in 1.0f64..2.0) {
        let once = infer_missing(&observed(&ts), lm * L, L);
        let twice = infer_missing(&once, lm * L, L);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.iter().filter(|p| !p.is_placeholder()).count(), ts.len());
        for w in once.windows(2) {
            prop_assert!(w[0].ts < w[1].ts);
        }
    }

    #[test]
    fn dedupe_keeps_only_separated_points(ts in collection_times(), dups in proptest::collection::vec(0.0f64..0.5, 0..30)) {
        let mut all: Vec<f64> = ts.clone();
        all.extend(ts.iter().zip(&dups).map(|(t, d)| t + d * H));
        all.sort_by(f64::total_cmp);
        let kept = dedupe(&observed(&all), L);
        for w in kept.windows(2) {
            prop_assert!(w[1].ts - w[0].ts >= L * H / 4.0);
        }
        prop_assert_eq!(dedupe(&kept, L), kept);
    }

    #[test]
    fn epoch_error_is_non_negative(ts in collection_times(), eps in 0.1f64..2.0, min_samples in 1usize..5) {
        let grid = detect_epochs(&ts, eps, min_samples, L);
        prop_assert!(epoch_error(&grid) >= 0.0);
    }
}

#[test]
fn alignment_example() {
    let x = [0.0, 4.0, 8.0];
    let y = [0.3, 4.2, 8.1];
    assert_eq!(mutual_nearest(&x, &y), vec![(0, 0), (1, 1), (2, 2)]);
}
