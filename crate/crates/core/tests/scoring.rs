use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use telapart_core::detect::device_anomalous;
use telapart_core::diagnose::classify_feature;
use telapart_core::tune::ticket_stats;
use telapart_core::{
    rand_index, DetectionThresholds, Diagnosis, Direction, FeatureMap, Label, MetricThreshold, Metrics, Partition,
    TelemetryPoint, TelemetrySeries, Ticket, TicketKind, Trr, SECONDS_PER_HOUR,
};

const H: f64 = SECONDS_PER_HOUR;

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..k, n)
}

fn series_of(snr: &[f64]) -> TelemetrySeries {
    let mut s = TelemetrySeries::new("d", "f", 1);
    s.channels[0] = snr
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            TelemetryPoint::observed(
                (k as f64 * 4.0 + 1.0) * H,
                Metrics {
                    snr: v,
                    tx_power: 45.0,
                    rx_power: 0.0,
                },
            )
        })
        .collect();
    s
}

fn snr_rule(value: f64, phi: f64) -> DetectionThresholds {
    DetectionThresholds {
        snr: Some(MetricThreshold {
            value,
            direction: Direction::Below,
        }),
        anomaly_fraction: phi,
        ..DetectionThresholds::default()
    }
}

fn diagnosis(device: usize, start: f64, hours: f64, label: Label) -> Diagnosis {
    Diagnosis {
        fnode_id: "f".into(),
        device_id: format!("d{device}"),
        start,
        end: start + hours * H,
        label,
        features: Vec::new(),
        cluster_ids: FeatureMap::from_fn(|_| 0),
        per_feature: FeatureMap::from_fn(|_| label),
    }
}

/// Timeline of `labels.len()` devices over one interval, with tickets
/// placed inside it.
fn timeline_case() -> impl Strategy<Value = (Vec<Label>, Vec<(usize, bool)>)> {
    let label = prop_oneof![Just(Label::Healthy), Just(Label::Maintenance), Just(Label::Service)];
    (
        proptest::collection::vec(label, 2..12),
        proptest::collection::vec((0usize..12, any::<bool>()), 0..40),
    )
}

fn build(labels: &[Label], tickets: &[(usize, bool)], scale: f64) -> (Vec<Diagnosis>, Vec<Ticket>) {
    let timeline = labels
        .iter()
        .enumerate()
        .map(|(d, &l)| diagnosis(d, 0.0, 24.0 * scale, l))
        .collect();
    let tickets = tickets
        .iter()
        .filter(|(d, _)| *d < labels.len())
        .enumerate()
        .map(|(n, &(d, maintenance))| Ticket {
            ticket_id: format!("t{n}"),
            device_id: format!("d{d}"),
            fnode_id: "f".into(),
            open_ts: (1.0 + (n % 20) as f64) * H * scale,
            close_ts: None,
            kind: if maintenance { TicketKind::Maintenance } else { TicketKind::Service },
            dispatched: false,
        })
        .collect();
    (timeline, tickets)
}

proptest! {
    #[test]
    fn loosening_a_threshold_never_clears_an_anomaly(
        snr in proptest::collection::vec(20.0f64..40.0, 1..12),
        v in 20.0f64..40.0,
        raise in 0.0f64..10.0,
        phi in 0.1f64..1.0,
        lower_phi in 0.0f64..0.5,
    ) {
        let s = series_of(&snr);
        let end = 60.0 * H;
        let presence = vec![true; snr.len()];
        let strict = device_anomalous(&s, 0.0, end, &presence, &snr_rule(v, phi)).snr;
        let looser = device_anomalous(&s, 0.0, end, &presence, &snr_rule(v + raise, phi)).snr;
        let easier = device_anomalous(&s, 0.0, end, &presence, &snr_rule(v, (phi - lower_phi).max(0.01))).snr;
        prop_assert!(!strict || looser);
        prop_assert!(!strict || easier);
    }

    #[test]
    fn raising_c_thr_never_adds_maintenance(part in labels(20, 6), anomalous in proptest::collection::vec(any::<bool>(), 20), c in 1usize..8) {
        let p = Partition::from_labels(&part);
        let lo = classify_feature(p.clone(), &anomalous, c);
        let hi = classify_feature(p, &anomalous, c + 1);
        for (a, b) in lo.labels.iter().zip(&hi.labels) {
            prop_assert!(*b != Label::Maintenance || *a == Label::Maintenance);
            // Whether a device is non-healthy does not depend on the size rule.
            prop_assert_eq!(*a == Label::Healthy, *b == Label::Healthy);
        }
    }

    #[test]
    fn trr_ignores_time_units_and_ticket_multiplicity((labels, tickets) in timeline_case(), scale in 0.5f64..4.0) {
        let (timeline, t) = build(&labels, &tickets, 1.0);
        let Ok(base) = ticket_stats(&timeline, &t) else { return Ok(()) };
        let (scaled_timeline, scaled_tickets) = build(&labels, &tickets, scale);
        let scaled = ticket_stats(&scaled_timeline, &scaled_tickets).unwrap();
        let mut doubled = t.clone();
        doubled.extend(t.iter().map(|x| Ticket { ticket_id: format!("{}b", x.ticket_id), ..x.clone() }));
        let twice = ticket_stats(&timeline, &doubled).unwrap();
        for other in [scaled.trr_m, twice.trr_m] {
            match (base.trr_m, other) {
                (Trr::Finite(a), Trr::Finite(b)) => prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0)),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
        prop_assert_eq!(base.k_mm + base.k_ms + base.k_mh, t.iter().filter(|x| x.kind == TicketKind::Maintenance).count() as u64);
    }

    #[test]
    fn rand_index_is_symmetric_and_bounded(a in labels(12, 4), b in labels(12, 4)) {
        let (pa, pb) = (Partition::from_labels(&a), Partition::from_labels(&b));
        let ab = rand_index(&pa, &pb).unwrap();
        let ba = rand_index(&pb, &pa).unwrap();
        prop_assert!((ab.ri - ba.ri).abs() < 1e-12 && (ab.ari - ba.ari).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.ri));
        prop_assert!(ab.ari <= 1.0 + 1e-12);
        prop_assert_eq!(ab.pairs.total(), 66);
        let same = rand_index(&pa, &pa).unwrap();
        prop_assert_eq!((same.ri, same.ari), (1.0, 1.0));
    }
}

#[test]
fn random_partitions_have_ari_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 400;
    let mut sum = 0.0;
    for _ in 0..trials {
        let a: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
        sum += rand_index(&Partition::from_labels(&a), &Partition::from_labels(&b)).unwrap().ari;
    }
    let mean = sum / trials as f64;
    assert!(mean.abs() < 0.01, "mean ARI {mean}");
}

#[test]
fn trr_example() {
    // 2 maintenance tickets over 10 device-hours labeled M, 1 over 20 labeled S.
    let timeline = vec![diagnosis(0, 0.0, 10.0, Label::Maintenance), diagnosis(1, 0.0, 20.0, Label::Service)];
    let t = |id: &str, d: &str, h: f64| Ticket {
        ticket_id: id.into(),
        device_id: d.into(),
        fnode_id: "f".into(),
        open_ts: h * H,
        close_ts: None,
        kind: TicketKind::Maintenance,
        dispatched: true,
    };
    let s = ticket_stats(&timeline, &[t("a", "d0", 1.0), t("b", "d0", 2.0), t("c", "d1", 3.0)]).unwrap();
    assert_eq!(s.r_mm, Some(0.2));
    assert_eq!(s.r_ms, Some(0.05));
    assert_eq!(s.trr_m, Trr::Finite(4.0));
}
