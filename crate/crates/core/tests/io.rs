use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use telapart_core::model::{read_pnm, read_tickets, write_pnm, write_tickets};
use telapart_core::synth::{generate, FaultPlan};
use telapart_core::{FNodeDataset, SynthConfig, TicketKind};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_fnodes: 2,
        devices_per_fnode: 30,
        duration_days: 3.0,
        ..SynthConfig::default()
    }
}

fn pnm_text(datasets: &[FNodeDataset]) -> String {
    let mut buf = Vec::new();
    write_pnm(&mut buf, Path::new("mem.csv"), datasets).unwrap();
    String::from_utf8(buf).unwrap()
}

fn parse(text: &str, cfg: &SynthConfig) -> BTreeMap<String, FNodeDataset> {
    read_pnm(text.as_bytes(), "mem.csv", cfg.interval_hours, cfg.n_channels).unwrap()
}

fn by_id(datasets: Vec<FNodeDataset>) -> BTreeMap<String, FNodeDataset> {
    datasets.into_iter().map(|d| (d.fnode_id.clone(), d)).collect()
}

#[test]
fn telemetry_round_trips_through_csv() {
    let cfg = small(3);
    let out = generate(&cfg).unwrap();
    let back = parse(&pnm_text(&out.datasets), &cfg);
    assert_eq!(back, by_id(out.datasets));
}

#[test]
fn row_order_does_not_matter() {
    let cfg = small(4);
    let out = generate(&cfg).unwrap();
    let text = pnm_text(&out.datasets);
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let shuffled = format!("{header}\n{}\n", lines.join("\n"));
    assert_eq!(parse(&shuffled, &cfg), parse(&text, &cfg));
}

#[test]
fn tickets_round_trip_through_csv() {
    let out = generate(&small(5)).unwrap();
    let mut buf = Vec::new();
    write_tickets(&mut buf, Path::new("t.csv"), &out.tickets).unwrap();
    let back = read_tickets(buf.as_slice(), "t.csv").unwrap();
    assert_eq!(back, out.tickets);
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate(&small(9)).unwrap();
    assert_eq!(a, generate(&small(9)).unwrap());
    assert_ne!(a.datasets, generate(&small(10)).unwrap().datasets);
}

fn quiet(seed: u64, faults: FaultPlan) -> SynthConfig {
    SynthConfig {
        seed,
        n_fnodes: 10,
        devices_per_fnode: 100,
        duration_days: 10.0,
        faults,
        ..SynthConfig::default()
    }
}

#[test]
fn background_ticket_rate_matches_configuration() {
    let faults = FaultPlan {
        maintenance_per_fnode: 0,
        service_per_fnode: 0,
        ..FaultPlan::default()
    };
    let cfg = quiet(21, faults);
    let out = generate(&cfg).unwrap();
    let device_days = (cfg.n_fnodes * cfg.devices_per_fnode) as f64 * cfg.duration_days;
    let expected = cfg.tickets.baseline_per_device_day * device_days;
    let got = out.tickets.len() as f64;
    assert!((got - expected).abs() <= 3.0 * expected.sqrt(), "{got} tickets, expected {expected}");

    let m = out.tickets.iter().filter(|t| t.kind == TicketKind::Maintenance).count() as f64;
    let a = cfg.tickets.mislabel_maintenance_to_service;
    let b = cfg.tickets.mislabel_service_to_maintenance;
    let s = cfg.tickets.baseline_maintenance_share;
    let p = s * (1.0 - a) + (1.0 - s) * b;
    let sd = (got * p * (1.0 - p)).sqrt();
    assert!((m - got * p).abs() <= 3.0 * sd, "{m} maintenance of {got}");
}

#[test]
fn fault_tickets_follow_the_multiplier() {
    let cfg = quiet(22, FaultPlan::default());
    let out = generate(&cfg).unwrap();
    let tm = &cfg.tickets;
    let mut expected = 0.0;
    for e in &out.truth.events {
        let mult = match e.kind {
            TicketKind::Maintenance => tm.maintenance_multiplier,
            TicketKind::Service => tm.service_multiplier,
        };
        let hours = (e.end_ts - e.start_ts) / 3600.0 - tm.onset_lag_hours;
        expected += e.devices.len() as f64 * hours.max(0.0) * tm.baseline_per_device_day / 24.0 * (mult - 1.0);
    }
    let got = out.truth.ticket_causes.len() as f64;
    assert!(expected > 50.0);
    assert!((got - expected).abs() <= 3.0 * expected.sqrt(), "{got} fault tickets, expected {expected}");
}
