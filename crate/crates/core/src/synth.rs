//! Deterministic synthetic fiber nodes with planted faults, collection noise
//! and noisy trouble tickets, plus the ground truth needed to score every
//! stage of the pipeline.
//!
//! Each node draws from its own ChaCha stream keyed by `(seed, node index)`,
//! so nodes can be generated in parallel and any subset reproduces exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    FNodeDataset, Metrics, Ticket, TicketKind, TelemetryPoint, TelemetrySeries, SECONDS_PER_DAY,
    SECONDS_PER_HOUR,
};

/// Temporal pattern of a fault's deviation, in units of `amplitude_sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Step,
    /// Rises linearly from 0 to 1 over the event.
    Ramp,
    /// ±1 alternation with a random half-period of 1 to 3 epochs and phase.
    SquareWave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultPlan {
    pub maintenance_per_fnode: usize,
    /// Inclusive member-count range.
    pub maintenance_size: (usize, usize),
    /// Inclusive duration range in alignment slots.
    pub maintenance_slots: (usize, usize),
    pub maintenance_shapes: Vec<Shape>,
    /// Probability that a maintenance event silences its members entirely.
    pub outage_probability: f64,
    pub service_per_fnode: usize,
    /// Probability that a service event hits two devices instead of one.
    pub service_pair_probability: f64,
    pub service_slots: (usize, usize),
    pub service_shapes: Vec<Shape>,
    /// Loss probability of every channel but the first on service-fault
    /// members while the fault lasts: a premise fault often leaves the
    /// device reporting on its primary channel only.
    pub service_channel_loss: f64,
    /// Constant part of the deviation while a fault is active, in noise σ.
    pub offset_sigma: f64,
    /// Patterned part of a maintenance fault's deviation, in noise σ.
    pub amplitude_sigma: f64,
    /// Patterned part of a service fault's deviation, in noise σ.
    pub service_amplitude_sigma: f64,
    /// Rx power moves by this fraction of the Tx deviation, downward.
    pub rx_factor: f64,
    /// Event boundaries fall on multiples of this many hours.
    pub alignment_hours: f64,
}

impl Default for FaultPlan {
    fn default() -> Self {
        Self {
            maintenance_per_fnode: 1,
            maintenance_size: (5, 20),
            maintenance_slots: (1, 2),
            maintenance_shapes: vec![Shape::SquareWave],
            outage_probability: 0.25,
            service_per_fnode: 5,
            service_pair_probability: 0.3,
            service_slots: (1, 2),
            service_shapes: vec![Shape::Step],
            service_channel_loss: 1.0,
            offset_sigma: 6.0,
            amplitude_sigma: 3.0,
            service_amplitude_sigma: 0.0,
            rx_factor: 0.5,
            alignment_hours: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TicketModel {
    /// Background tickets per device-day.
    pub baseline_per_device_day: f64,
    /// Share of background tickets whose true kind is maintenance.
    pub baseline_maintenance_share: f64,
    /// Ticket rate multiplier on devices during a maintenance fault.
    pub maintenance_multiplier: f64,
    pub service_multiplier: f64,
    /// Fault-driven tickets start this long after the fault.
    pub onset_lag_hours: f64,
    /// Probability a true-maintenance ticket is recorded as service.
    pub mislabel_maintenance_to_service: f64,
    pub mislabel_service_to_maintenance: f64,
    pub mean_duration_hours: f64,
    pub dispatch_probability: f64,
}

impl Default for TicketModel {
    fn default() -> Self {
        Self {
            baseline_per_device_day: 0.05,
            baseline_maintenance_share: 0.3,
            maintenance_multiplier: 10.0,
            service_multiplier: 10.0,
            onset_lag_hours: 0.0,
            mislabel_maintenance_to_service: 0.12,
            mislabel_service_to_maintenance: 0.04,
            mean_duration_hours: 24.0,
            dispatch_probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_fnodes: usize,
    pub devices_per_fnode: usize,
    pub duration_days: f64,
    pub interval_hours: f64,
    pub n_channels: usize,
    /// Collections of epoch k land uniformly in `[kL, kL + δ]`.
    pub jitter_hours: f64,
    /// Independent per-channel drop probability.
    pub p_loss: f64,
    /// Per device-epoch probability of a duplicated collection.
    pub p_dup: f64,
    /// Per-epoch probability that the whole node is skipped.
    pub p_fnode_skip: f64,
    /// Epoch seconds of epoch 0; a UTC midnight keeps day windows aligned.
    pub start_ts: f64,
    pub noise_sigma: f64,
    pub snr_mean: f64,
    pub snr_spread: f64,
    pub tx_mean: f64,
    pub tx_spread: f64,
    pub rx_mean: f64,
    pub rx_spread: f64,
    pub faults: FaultPlan,
    pub tickets: TicketModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_fnodes: 50,
            devices_per_fnode: 100,
            duration_days: 7.0,
            interval_hours: 4.0,
            n_channels: 3,
            jitter_hours: 0.5,
            p_loss: 0.01,
            p_dup: 0.02,
            p_fnode_skip: 0.0,
            start_ts: 1_546_300_800.0,
            noise_sigma: 1.0,
            snr_mean: 36.0,
            snr_spread: 0.5,
            tx_mean: 45.0,
            tx_spread: 1.0,
            rx_mean: 0.0,
            rx_spread: 0.5,
            faults: FaultPlan::default(),
            tickets: TicketModel::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        let probs = [
            ("p_loss", self.p_loss),
            ("p_dup", self.p_dup),
            ("p_fnode_skip", self.p_fnode_skip),
            ("outage_probability", self.faults.outage_probability),
            ("service_pair_probability", self.faults.service_pair_probability),
            ("service_channel_loss", self.faults.service_channel_loss),
            ("baseline_maintenance_share", self.tickets.baseline_maintenance_share),
            ("mislabel_maintenance_to_service", self.tickets.mislabel_maintenance_to_service),
            ("mislabel_service_to_maintenance", self.tickets.mislabel_service_to_maintenance),
            ("dispatch_probability", self.tickets.dispatch_probability),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.interval_hours > 0.0) || self.n_channels == 0 {
            return fail("interval must be positive and at least one channel is required".into());
        }
        if !(self.jitter_hours >= 0.0 && self.jitter_hours < self.interval_hours / 2.0) {
            return fail(format!("jitter {} h must lie in [0, L/2)", self.jitter_hours));
        }
        if !(self.duration_days > 0.0) || self.n_fnodes == 0 || self.devices_per_fnode == 0 {
            return fail("duration, node count and devices per node must be positive".into());
        }
        let f = &self.faults;
        let (lo, hi) = f.maintenance_size;
        if f.maintenance_per_fnode > 0 && (lo == 0 || lo > hi || hi > self.devices_per_fnode) {
            return fail(format!("maintenance size range {lo}..={hi} is invalid"));
        }
        for (name, (a, b)) in [("maintenance_slots", f.maintenance_slots), ("service_slots", f.service_slots)] {
            if a == 0 || a > b {
                return fail(format!("{name} range {a}..={b} is invalid"));
            }
        }
        if (f.maintenance_per_fnode > 0 && f.maintenance_shapes.is_empty())
            || (f.service_per_fnode > 0 && f.service_shapes.is_empty())
        {
            return fail("every planted fault kind needs at least one shape".into());
        }
        if !(f.alignment_hours > 0.0) {
            return fail("alignment must be positive".into());
        }
        let t = &self.tickets;
        if t.baseline_per_device_day < 0.0
            || t.maintenance_multiplier < 1.0
            || t.service_multiplier < 1.0
            || t.onset_lag_hours < 0.0
            || !(t.mean_duration_hours > 0.0)
        {
            return fail("ticket rates must be non-negative and multipliers at least 1".into());
        }
        if !(self.noise_sigma > 0.0) {
            return fail("noise sigma must be positive".into());
        }
        Ok(())
    }

    pub fn n_epochs(&self) -> usize {
        (self.duration_days * 24.0 / self.interval_hours).round() as usize
    }

    pub fn fnode_id(index: usize) -> String {
        format!("f{index:03}")
    }

    pub fn device_id(fnode: usize, device: usize) -> String {
        format!("f{fnode:03}-d{device:03}")
    }
}

/// A planted fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub event_id: String,
    pub fnode_id: String,
    pub kind: TicketKind,
    pub start_ts: f64,
    pub end_ts: f64,
    /// Sorted.
    pub devices: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub events: Vec<TruthEvent>,
    /// Dropped `(device_id, channel, epoch_index)` collections, sorted.
    pub missing: BTreeSet<(String, usize, usize)>,
    /// Ticket id to the id of the fault that produced it; background
    /// tickets are absent.
    pub ticket_causes: BTreeMap<String, String>,
    /// Tickets whose recorded kind differs from their true kind.
    pub mislabeled: BTreeSet<String>,
}

impl GroundTruth {
    pub fn event(&self, id: &str) -> Option<&TruthEvent> {
        self.events.iter().find(|e| e.event_id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub datasets: Vec<FNodeDataset>,
    pub tickets: Vec<Ticket>,
    pub truth: GroundTruth,
}

struct PlannedEvent {
    id: String,
    kind: TicketKind,
    /// Epoch range `[k0, k1)`.
    k0: usize,
    k1: usize,
    members: Vec<usize>,
    pattern: Vec<f64>,
    outage: bool,
}

fn pattern(shape: Shape, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match shape {
        Shape::Step => vec![1.0; len],
        Shape::Ramp => (0..len).map(|k| (k + 1) as f64 / len as f64).collect(),
        Shape::SquareWave => {
            let half = rng.random_range(1..=3usize);
            let phase = rng.random_range(0..2 * half);
            (0..len).map(|k| if ((k + phase) / half) % 2 == 0 { 1.0 } else { -1.0 }).collect()
        }
    }
}

struct NodeOutput {
    dataset: FNodeDataset,
    tickets: Vec<Ticket>,
    events: Vec<TruthEvent>,
    missing: Vec<(String, usize, usize)>,
    causes: Vec<(String, String)>,
    mislabeled: Vec<String>,
}

fn plan_events(cfg: &SynthConfig, f: usize, rng: &mut ChaCha8Rng) -> Vec<PlannedEvent> {
    let plan = &cfg.faults;
    let n_epochs = cfg.n_epochs();
    let slot_epochs = (plan.alignment_hours / cfg.interval_hours).round().max(1.0) as usize;
    let n_slots = n_epochs / slot_epochs;
    let fid = SynthConfig::fnode_id(f);
    let mut events = Vec::new();
    let mut busy: Vec<(usize, usize)> = Vec::new();
    let mut in_maintenance = BTreeSet::new();
    let mut next_id = 0usize;
    for _ in 0..plan.maintenance_per_fnode {
        let mut placed = None;
        for _ in 0..200 {
            let dur = rng.random_range(plan.maintenance_slots.0..=plan.maintenance_slots.1);
            if dur > n_slots {
                break;
            }
            let s0 = rng.random_range(0..=n_slots - dur);
            if busy.iter().all(|&(a, b)| s0 + dur <= a || s0 >= b) {
                placed = Some((s0, s0 + dur));
                break;
            }
        }
        let Some((s0, s1)) = placed else { continue };
        busy.push((s0, s1));
        let size = rng.random_range(plan.maintenance_size.0..=plan.maintenance_size.1);
        let mut members: Vec<usize> = sample(rng, cfg.devices_per_fnode, size).into_vec();
        members.sort_unstable();
        in_maintenance.extend(members.iter().copied());
        let shape = plan.maintenance_shapes[rng.random_range(0..plan.maintenance_shapes.len())];
        let (k0, k1) = (s0 * slot_epochs, s1 * slot_epochs);
        let outage = rng.random_bool(plan.outage_probability);
        events.push(PlannedEvent {
            id: format!("m-{fid}-{next_id}"),
            kind: TicketKind::Maintenance,
            k0,
            k1,
            members,
            pattern: pattern(shape, k1 - k0, rng),
            outage,
        });
        next_id += 1;
    }
    let mut pool: Vec<usize> = (0..cfg.devices_per_fnode).filter(|d| !in_maintenance.contains(d)).collect();
    for _ in 0..plan.service_per_fnode {
        let size = if rng.random_bool(plan.service_pair_probability) { 2 } else { 1 };
        if pool.len() < size {
            break;
        }
        let dur = rng.random_range(plan.service_slots.0..=plan.service_slots.1);
        if dur > n_slots {
            continue;
        }
        let s0 = rng.random_range(0..=n_slots - dur);
        let mut members = Vec::with_capacity(size);
        for _ in 0..size {
            let i = rng.random_range(0..pool.len());
            members.push(pool.swap_remove(i));
        }
        members.sort_unstable();
        let shape = plan.service_shapes[rng.random_range(0..plan.service_shapes.len())];
        let (k0, k1) = (s0 * slot_epochs, (s0 + dur) * slot_epochs);
        events.push(PlannedEvent {
            id: format!("s-{fid}-{next_id}"),
            kind: TicketKind::Service,
            k0,
            k1,
            members,
            pattern: pattern(shape, k1 - k0, rng),
            outage: false,
        });
        next_id += 1;
    }
    events
}

fn poisson_times(rng: &mut ChaCha8Rng, rate_per_hour: f64, from_h: f64, to_h: f64, out: &mut Vec<f64>) {
    if !(rate_per_hour > 0.0) || to_h <= from_h {
        return;
    }
    let exp = Exp::new(rate_per_hour).expect("positive rate");
    let mut t = from_h;
    loop {
        t += exp.sample(rng);
        if t >= to_h {
            break;
        }
        out.push(t);
    }
}

fn generate_fnode(cfg: &SynthConfig, f: usize) -> Result<NodeOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(f as u64);
    let fid = SynthConfig::fnode_id(f);
    let n_dev = cfg.devices_per_fnode;
    let n_epochs = cfg.n_epochs();
    let l = cfg.interval_hours;
    let sigma = cfg.noise_sigma;
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let spread = |s: f64| Normal::new(0.0, s.max(0.0)).expect("valid spread");

    let baselines: Vec<Metrics> = (0..n_dev)
        .map(|_| Metrics {
            snr: cfg.snr_mean + spread(cfg.snr_spread).sample(&mut rng),
            tx_power: cfg.tx_mean + spread(cfg.tx_spread).sample(&mut rng),
            rx_power: cfg.rx_mean + spread(cfg.rx_spread).sample(&mut rng),
        })
        .collect();
    let events = plan_events(cfg, f, &mut rng);
    // Deviation (in σ) and outage flag per device and epoch.
    let mut deviation = vec![vec![0.0f64; n_epochs]; n_dev];
    let mut silenced = vec![vec![false; n_epochs]; n_dev];
    let mut secondary_loss = vec![vec![cfg.p_loss; n_epochs]; n_dev];
    for e in &events {
        for &d in &e.members {
            for k in e.k0..e.k1 {
                let amplitude = match e.kind {
                    TicketKind::Maintenance => cfg.faults.amplitude_sigma,
                    TicketKind::Service => cfg.faults.service_amplitude_sigma,
                };
                deviation[d][k] += cfg.faults.offset_sigma + amplitude * e.pattern[k - e.k0];
                silenced[d][k] |= e.outage;
                if e.kind == TicketKind::Service {
                    secondary_loss[d][k] = secondary_loss[d][k].max(cfg.faults.service_channel_loss);
                }
            }
        }
    }
    let skipped: Vec<bool> = (0..n_epochs).map(|_| rng.random_bool(cfg.p_fnode_skip)).collect();

    let mut dataset = FNodeDataset::new(&fid, l, cfg.n_channels)?;
    let mut missing = Vec::new();
    let dup_offset = 0.01 * SECONDS_PER_HOUR;
    for d in 0..n_dev {
        let did = SynthConfig::device_id(f, d);
        let mut series = TelemetrySeries::new(&did, &fid, cfg.n_channels);
        for k in 0..n_epochs {
            let ts = cfg.start_ts + (k as f64 * l + rng.random::<f64>() * cfg.jitter_hours) * SECONDS_PER_HOUR;
            let dup = rng.random_bool(cfg.p_dup);
            let dev = deviation[d][k] * sigma;
            for c in 0..cfg.n_channels {
                let p = if c == 0 { cfg.p_loss } else { secondary_loss[d][k] };
                let lost = rng.random_bool(p);
                let m = Metrics {
                    snr: baselines[d].snr - dev + noise.sample(&mut rng),
                    tx_power: baselines[d].tx_power + dev + noise.sample(&mut rng),
                    rx_power: baselines[d].rx_power - cfg.faults.rx_factor * dev + noise.sample(&mut rng),
                };
                if lost || skipped[k] || silenced[d][k] {
                    missing.push((did.clone(), c, k));
                    continue;
                }
                series.channels[c].push(TelemetryPoint::observed(ts, m));
                if dup {
                    series.channels[c].push(TelemetryPoint::observed(ts + dup_offset, m));
                }
            }
        }
        dataset.devices.insert(did, series);
    }

    // Tickets: background process per device plus fault-driven excess.
    let tm = &cfg.tickets;
    let duration_h = n_epochs as f64 * l;
    let base_rate = tm.baseline_per_device_day / 24.0;
    let mut raw: Vec<(f64, usize, TicketKind, Option<usize>)> = Vec::new();
    let mut times = Vec::new();
    for d in 0..n_dev {
        times.clear();
        poisson_times(&mut rng, base_rate, 0.0, duration_h, &mut times);
        for &t in &times {
            let kind = if rng.random_bool(tm.baseline_maintenance_share) {
                TicketKind::Maintenance
            } else {
                TicketKind::Service
            };
            raw.push((t, d, kind, None));
        }
    }
    for (ei, e) in events.iter().enumerate() {
        let mult = match e.kind {
            TicketKind::Maintenance => tm.maintenance_multiplier,
            TicketKind::Service => tm.service_multiplier,
        };
        let (from, to) = (e.k0 as f64 * l + tm.onset_lag_hours, e.k1 as f64 * l);
        for &d in &e.members {
            times.clear();
            poisson_times(&mut rng, base_rate * (mult - 1.0), from, to, &mut times);
            raw.extend(times.iter().map(|&t| (t, d, e.kind, Some(ei))));
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let close = Exp::new(1.0 / tm.mean_duration_hours).expect("positive duration");
    let mut tickets = Vec::with_capacity(raw.len());
    let mut causes = Vec::new();
    let mut mislabeled = Vec::new();
    for (n, (t, d, true_kind, cause)) in raw.into_iter().enumerate() {
        let flip = match true_kind {
            TicketKind::Maintenance => tm.mislabel_maintenance_to_service,
            TicketKind::Service => tm.mislabel_service_to_maintenance,
        };
        let kind = match (true_kind, rng.random_bool(flip)) {
            (k, false) => k,
            (TicketKind::Maintenance, true) => TicketKind::Service,
            (TicketKind::Service, true) => TicketKind::Maintenance,
        };
        let open_ts = cfg.start_ts + t * SECONDS_PER_HOUR;
        let ticket_id = format!("t-{fid}-{n:06}");
        if let Some(ei) = cause {
            causes.push((ticket_id.clone(), events[ei].id.clone()));
        }
        if kind != true_kind {
            mislabeled.push(ticket_id.clone());
        }
        tickets.push(Ticket {
            ticket_id,
            device_id: SynthConfig::device_id(f, d),
            fnode_id: fid.clone(),
            open_ts,
            close_ts: Some(open_ts + close.sample(&mut rng) * SECONDS_PER_HOUR),
            kind,
            dispatched: rng.random_bool(tm.dispatch_probability),
        });
    }
    let truth_events = events
        .iter()
        .map(|e| TruthEvent {
            event_id: e.id.clone(),
            fnode_id: fid.clone(),
            kind: e.kind,
            start_ts: cfg.start_ts + e.k0 as f64 * l * SECONDS_PER_HOUR,
            end_ts: cfg.start_ts + e.k1 as f64 * l * SECONDS_PER_HOUR,
            devices: e.members.iter().map(|&d| SynthConfig::device_id(f, d)).collect(),
        })
        .collect();
    Ok(NodeOutput {
        dataset,
        tickets,
        events: truth_events,
        missing,
        causes,
        mislabeled,
    })
}

/// Generate every node. Identical configurations give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let nodes: Vec<NodeOutput> = (0..cfg.n_fnodes)
        .into_par_iter()
        .map(|f| generate_fnode(cfg, f))
        .collect::<Result<_>>()?;
    let mut out = SynthOutput {
        datasets: Vec::with_capacity(nodes.len()),
        tickets: Vec::new(),
        truth: GroundTruth::default(),
    };
    for n in nodes {
        out.datasets.push(n.dataset);
        out.tickets.extend(n.tickets);
        out.truth.events.extend(n.events);
        out.truth.missing.extend(n.missing);
        out.truth.ticket_causes.extend(n.causes);
        out.truth.mislabeled.extend(n.mislabeled);
    }
    Ok(out)
}

/// Generator days are whole days from `start_ts`; this is the span end.
pub fn span_end(cfg: &SynthConfig) -> f64 {
    cfg.start_ts + cfg.duration_days * SECONDS_PER_DAY
}

pub const GROUND_TRUTH_HEADER: [&str; 6] = ["event_id", "fnode_id", "kind", "start_ts", "end_ts", "devices"];
pub const MISSING_TRUTH_HEADER: [&str; 3] = ["device_id", "channel", "epoch_index"];

pub fn write_ground_truth<W: Write>(out: W, path: &Path, events: &[TruthEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e| Error::csv(path, e);
    w.write_record(GROUND_TRUTH_HEADER).map_err(err)?;
    for e in events {
        w.write_record([
            e.event_id.as_str(),
            e.fnode_id.as_str(),
            e.kind.as_str(),
            &e.start_ts.to_string(),
            &e.end_ts.to_string(),
            &e.devices.join(";"),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_missing_truth<W: Write>(out: W, path: &Path, missing: &BTreeSet<(String, usize, usize)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e| Error::csv(path, e);
    w.write_record(MISSING_TRUTH_HEADER).map_err(err)?;
    for (d, c, k) in missing {
        w.write_record([d.as_str(), &c.to_string(), &k.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected header {}", want.join(",")),
        });
    }
    Ok(())
}

pub fn read_ground_truth<R: Read>(input: R, path: impl Into<PathBuf>) -> Result<Vec<TruthEvent>> {
    let path = path.into();
    let mut r = csv::Reader::from_reader(input);
    check_header(&path, r.headers().map_err(|e| Error::csv(&path, e))?, &GROUND_TRUTH_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(&path, e))?;
        let line = k as u64 + 2;
        let bad = |reason: String| Error::MalformedRow {
            path: path.clone(),
            line,
            reason,
        };
        let kind = match rec[2].to_ascii_lowercase().as_str() {
            "maintenance" => TicketKind::Maintenance,
            "service" => TicketKind::Service,
            other => {
                return Err(Error::UnknownKind {
                    path: path.clone(),
                    line,
                    kind: other.to_string(),
                })
            }
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        out.push(TruthEvent {
            event_id: rec[0].to_string(),
            fnode_id: rec[1].to_string(),
            kind,
            start_ts: num(&rec[3])?,
            end_ts: num(&rec[4])?,
            devices: rec[5].split(';').filter(|s| !s.is_empty()).map(str::to_string).collect(),
        });
    }
    Ok(out)
}

pub fn read_missing_truth<R: Read>(input: R, path: impl Into<PathBuf>) -> Result<BTreeSet<(String, usize, usize)>> {
    let path = path.into();
    let mut r = csv::Reader::from_reader(input);
    check_header(&path, r.headers().map_err(|e| Error::csv(&path, e))?, &MISSING_TRUTH_HEADER)?;
    let mut out = BTreeSet::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(&path, e))?;
        let bad = |s: &str| Error::MalformedRow {
            path: path.clone(),
            line: k as u64 + 2,
            reason: format!("{s:?} is not an index"),
        };
        let c = rec[1].parse().map_err(|_| bad(&rec[1]))?;
        let e = rec[2].parse().map_err(|_| bad(&rec[2]))?;
        out.insert((rec[0].to_string(), c, e));
    }
    Ok(out)
}
