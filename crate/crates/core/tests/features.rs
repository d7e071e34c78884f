use proptest::prelude::*;
use telapart_core::features::similarity_matrices;
use telapart_core::{hamming_similarity, pearson, Feature, Metrics, TelemetryPoint, TelemetrySeries, SECONDS_PER_HOUR};

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0f64..50.0, n)
}

fn equal_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| (values(n), values(n)))
}

fn bit_pair() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (1usize..64).prop_flat_map(|n| (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n)))
}

proptest! {
    #[test]
    fn pearson_is_symmetric_and_bounded((a, b) in equal_pair()) {
        let ab = pearson(&a, &b).unwrap();
        let ba = pearson(&b, &a).unwrap();
        prop_assert_eq!(ab.is_some(), ba.is_some());
        if let (Some(x), Some(y)) = (ab, ba) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn pearson_is_affine_invariant((a, b) in equal_pair(), scale in 0.1f64..10.0, shift in -100.0f64..100.0, negate in any::<bool>()) {
        let k = if negate { -scale } else { scale };
        let moved: Vec<f64> = a.iter().map(|v| k * v + shift).collect();
        if let (Some(r), Some(s)) = (pearson(&a, &b).unwrap(), pearson(&moved, &b).unwrap()) {
            let want = if negate { -r } else { r };
            prop_assert!((s - want).abs() < 1e-9, "{} vs {}", s, want);
        }
    }

    #[test]
    fn hamming_is_symmetric_and_flip_invariant((a, b) in bit_pair()) {
        let s = hamming_similarity(&a, &b).unwrap();
        prop_assert_eq!(s, hamming_similarity(&b, &a).unwrap());
        let fa: Vec<bool> = a.iter().map(|v| !v).collect();
        let fb: Vec<bool> = b.iter().map(|v| !v).collect();
        prop_assert_eq!(s, hamming_similarity(&fa, &fb).unwrap());
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(hamming_similarity(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn similarity_matrices_are_symmetric(seed in any::<u64>(), n in 2usize..8) {
        let (series, presence) = random_node(seed, n);
        let refs: Vec<&TelemetrySeries> = series.iter().collect();
        let m = similarity_matrices(&refs, &presence, 0..12, 0.0, 48.0 * SECONDS_PER_HOUR, 7);
        for f in Feature::ALL {
            let s = m.get(f);
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(s.get(i, j), s.get(j, i));
                }
            }
        }
    }
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    assert!(hamming_similarity(&[true], &[true, false]).is_err());
}

/// Small pseudo-random node: 12 epochs of 4 h on 2 channels with drops.
fn random_node(seed: u64, n: usize) -> (Vec<TelemetrySeries>, Vec<Vec<bool>>) {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut series = Vec::new();
    let mut presence = Vec::new();
    for d in 0..n {
        let mut s = TelemetrySeries::new(format!("d{d}"), "f", 2);
        let mut p = Vec::new();
        for k in 0..12 {
            let present = next() > 0.2;
            p.push(present);
            if !present {
                continue;
            }
            let ts = (k as f64 * 4.0 + next()) * SECONDS_PER_HOUR;
            for c in 0..2 {
                s.channels[c].push(TelemetryPoint::observed(
                    ts,
                    Metrics {
                        snr: 30.0 + 5.0 * next(),
                        tx_power: 40.0 + 5.0 * next(),
                        rx_power: next(),
                    },
                ));
            }
        }
        series.push(s);
        presence.push(p);
    }
    (series, presence)
}
