use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use serde_json::json;
use telapart_core::diagnose::{analyze_schedule, daily_schedule, timeline, write_diagnoses};
use telapart_core::eval::{link_incidents, score_windows, ticket_characteristics, ReactiveConfusion};
use telapart_core::model::{ingest_pnm_csv, ingest_tickets_csv, write_pnm, write_tickets};
use telapart_core::synth::{generate, read_ground_truth, write_ground_truth, write_missing_truth};
use telapart_core::train::{calibrate_epochs, epoch_grids, train as train_all, TrainOptions};
use telapart_core::preprocess::calibrate_missing_threshold_many;
use telapart_core::tune::ticket_stats;
use telapart_core::{
    Clusterer, Feature, FNodeDataset, GroundTruth, HyperParams, Label, PreparedFNode, ReactiveVerdict, Ticket,
    TicketKind, Trr,
};

use crate::config::{Calibrated, Loaded};
use crate::CliError;

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn synth(l: &Loaded) -> anyhow::Result<()> {
    let c = &l.config;
    let mut cfg = c.synth.clone().ok_or_else(|| CliError::Config("configuration has no synth section".into()))?;
    cfg.seed = c.seed;
    if cfg.interval_hours != c.interval_hours || cfg.n_channels != c.n_channels {
        return Err(CliError::Config(format!(
            "synth interval/channels ({} h, {}) disagree with the top-level settings ({} h, {})",
            cfg.interval_hours, cfg.n_channels, c.interval_hours, c.n_channels
        ))
        .into());
    }
    let out = generate(&cfg)?;
    let p = &c.paths;
    let pnm = l.resolve(&p.pnm);
    write_pnm(create(&pnm)?, &pnm, &out.datasets)?;
    let tickets = l.resolve(&p.tickets);
    write_tickets(create(&tickets)?, &tickets, &out.tickets)?;
    let gt = l.resolve(&p.ground_truth);
    write_ground_truth(create(&gt)?, &gt, &out.truth.events)?;
    let mt = l.resolve(&p.missing_truth);
    write_missing_truth(create(&mt)?, &mt, &out.truth.missing)?;
    let devices: usize = out.datasets.iter().map(|d| d.devices.len()).sum();
    println!("fnodes {}", out.datasets.len());
    println!("devices {devices}");
    println!("tickets {}", out.tickets.len());
    println!("events {}", out.truth.events.len());
    Ok(())
}

fn load_datasets(l: &Loaded) -> anyhow::Result<Vec<FNodeDataset>> {
    let c = &l.config;
    let map = ingest_pnm_csv(l.resolve(&c.paths.pnm), c.interval_hours, c.n_channels)?;
    if map.is_empty() {
        return Err(CliError::Config(format!("{} holds no telemetry", c.paths.pnm.display())).into());
    }
    Ok(map.into_values().collect())
}

fn load_tickets(l: &Loaded) -> anyhow::Result<Vec<Ticket>> {
    Ok(ingest_tickets_csv(l.resolve(&l.config.paths.tickets))?)
}

/// The training portion: everything at or before the split.
fn training_split(l: &Loaded, datasets: Vec<FNodeDataset>, tickets: Vec<Ticket>) -> (Vec<FNodeDataset>, Vec<Ticket>) {
    match l.config.split_ts {
        None => (datasets, tickets),
        Some(t) => (
            datasets.iter().map(|d| d.slice(f64::NEG_INFINITY, t)).collect(),
            tickets.into_iter().filter(|k| k.open_ts <= t).collect(),
        ),
    }
}

/// Store `calibrated` in the configuration file, leaving everything else in
/// the file as written.
fn save_calibrated(l: &Loaded, calibrated: Calibrated) -> anyhow::Result<()> {
    let mut fresh = Loaded::read(&l.path)?;
    fresh.config.calibrated = calibrated;
    fresh.save()
}

pub fn calibrate(l: &Loaded) -> anyhow::Result<()> {
    let (datasets, _) = training_split(l, load_datasets(l)?, Vec::new());
    let epoch = calibrate_epochs(&datasets)?;
    let grids = epoch_grids(&datasets, epoch);
    let missing = calibrate_missing_threshold_many(&datasets, &grids)?;
    let mut cal = l.config.calibrated.clone();
    cal.epoch = Some(epoch);
    cal.missing_threshold_hours = Some(missing);
    save_calibrated(l, cal)?;
    println!("epoch_eps_hours {}", epoch.eps_hours);
    println!("epoch_min_samples {}", epoch.min_samples);
    println!("missing_threshold_hours {missing}");
    Ok(())
}

fn trr_text(t: Trr) -> String {
    match t {
        Trr::Finite(v) => v.to_string(),
        Trr::Infinite => "inf".into(),
        Trr::Undefined => "undefined".into(),
    }
}

pub fn train(l: &Loaded) -> anyhow::Result<()> {
    let (datasets, tickets) = training_split(l, load_datasets(l)?, load_tickets(l)?);
    let opts = TrainOptions {
        pearson_step: l.config.mesh_step.pearson,
        missing_step: l.config.mesh_step.missing,
        ..TrainOptions::default()
    };
    let out = train_all(&datasets, &tickets, &l.config.fixed_hyper(), opts)?;
    let h = &out.hyper;
    save_calibrated(
        l,
        Calibrated {
            epoch: Some(h.epoch),
            missing_threshold_hours: Some(h.missing_threshold_hours),
            detection: Some(h.detection),
            similarity: Some(h.similarity),
        },
    )?;
    for f in Feature::ALL {
        let s = out.searches.get(f);
        println!("{f} s_f {} trr_m {}", s.best, trr_text(s.best_trr));
    }
    Ok(())
}

/// Prepared nodes and the diagnosis times whose whole look-back lies after
/// the split.
struct Evaluation {
    prepared: Vec<PreparedFNode>,
    schedule: Vec<f64>,
}

fn evaluation(l: &Loaded, hyper: &HyperParams) -> anyhow::Result<Evaluation> {
    let datasets = load_datasets(l)?;
    let prepared: Vec<PreparedFNode> = datasets
        .par_iter()
        .map(|d| PreparedFNode::from_hyper(d, hyper))
        .collect::<Result<_, _>>()?;
    let (lo, hi) = prepared
        .iter()
        .filter_map(PreparedFNode::bounds)
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
        .context("telemetry has no collections")?;
    let first = l.config.split_ts.map_or(f64::NEG_INFINITY, |t| t + hyper.lookback_seconds());
    let schedule: Vec<f64> = daily_schedule(lo, hi, hyper.lookback_days)
        .into_iter()
        .filter(|&t| t >= first)
        .collect();
    if schedule.is_empty() {
        return Err(CliError::Config("no diagnosis window after the split".into()).into());
    }
    Ok(Evaluation { prepared, schedule })
}

fn label_counts<'a>(labels: impl Iterator<Item = &'a Label>) -> BTreeMap<&'static str, usize> {
    let mut counts: BTreeMap<&'static str, usize> = Label::ALL.iter().map(|l| (l.as_str(), 0)).collect();
    for l in labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    counts
}

pub fn batch(l: &Loaded) -> anyhow::Result<()> {
    let hyper = l.config.hyper()?;
    let ev = evaluation(l, &hyper)?;
    let windows = analyze_schedule(&ev.prepared, &hyper, &ev.schedule, Clusterer::default())?;
    let tl = timeline(&windows, &hyper.similarity, hyper.c_thr);
    let path = l.output_dir()?.join("diagnosis.csv");
    write_diagnoses(create(&path)?, &path, &tl)?;
    for (label, n) in label_counts(tl.iter().map(|d| &d.label)) {
        println!("{label} {n}");
    }
    Ok(())
}

fn reactive_verdict(prepared: &[PreparedFNode], hyper: &HyperParams, ticket: &Ticket) -> anyhow::Result<ReactiveVerdict> {
    let node = prepared
        .binary_search_by(|p| p.fnode_id.as_str().cmp(&ticket.fnode_id))
        .map(|i| &prepared[i])
        .map_err(|_| CliError::UnknownEntity(format!("fnode {:?}", ticket.fnode_id)))?;
    Ok(telapart_core::run_reactive(node, hyper, ticket)?)
}

pub fn reactive(l: &Loaded, ticket_id: &str) -> anyhow::Result<()> {
    let hyper = l.config.hyper()?;
    let tickets = load_tickets(l)?;
    let ticket = tickets
        .iter()
        .find(|t| t.ticket_id == ticket_id)
        .ok_or_else(|| CliError::UnknownEntity(format!("ticket {ticket_id:?}")))?;
    let datasets = load_datasets(l)?;
    let dataset = datasets
        .iter()
        .find(|d| d.fnode_id == ticket.fnode_id)
        .ok_or_else(|| CliError::UnknownEntity(format!("fnode {:?}", ticket.fnode_id)))?;
    let prepared = PreparedFNode::from_hyper(dataset, &hyper)?;
    let verdict = reactive_verdict(std::slice::from_ref(&prepared), &hyper, ticket)?;
    println!("{}", verdict.as_str());
    Ok(())
}

/// Whether the ticket's device belongs to a maintenance event active at the
/// ticket's open time.
fn in_maintenance(gt: &GroundTruth, t: &Ticket) -> bool {
    gt.events.iter().any(|e| {
        e.kind == TicketKind::Maintenance
            && e.fnode_id == t.fnode_id
            && e.start_ts < t.open_ts
            && t.open_ts <= e.end_ts
            && e.devices.contains(&t.device_id)
    })
}

pub fn eval(l: &Loaded) -> anyhow::Result<()> {
    let hyper = l.config.hyper()?;
    let ev = evaluation(l, &hyper)?;
    let tickets = load_tickets(l)?;
    let windows = analyze_schedule(&ev.prepared, &hyper, &ev.schedule, Clusterer::default())?;
    let tl = timeline(&windows, &hyper.similarity, hyper.c_thr);
    let stats = ticket_stats(&tl, &tickets)?;
    let rates = telapart_core::eval::normalized_rate_report(stats);
    let incidents = link_incidents(&tl);
    let characteristics = ticket_characteristics(&incidents, &tickets);

    let first = ev.schedule[0] - hyper.lookback_seconds();
    let last = *ev.schedule.last().expect("non-empty schedule");
    let scored: Vec<&Ticket> = tickets.iter().filter(|t| t.open_ts > first && t.open_ts <= last).collect();
    let verdicts: Vec<Option<ReactiveVerdict>> = scored
        .par_iter()
        .map(|t| reactive_verdict(&ev.prepared, &hyper, t).ok())
        .collect();
    let mut confusion = ReactiveConfusion::default();
    for (t, v) in scored.iter().zip(&verdicts) {
        if let Some(v) = v {
            confusion.add(t.kind, *v);
        }
    }
    let unscored = verdicts.iter().filter(|v| v.is_none()).count();

    let mut report = json!({
        "windows": windows.len(),
        "labels": label_counts(tl.iter().map(|d| &d.label)),
        "rates": rates,
        "incidents": incidents.len(),
        "characteristics": characteristics,
        "reactive": {
            "confusion": confusion,
            "maintenance_recall": confusion.recall(TicketKind::Maintenance),
            "service_recall": confusion.recall(TicketKind::Service),
            "unscored": unscored,
        },
    });

    let gt_path = l.resolve(&l.config.paths.ground_truth);
    if gt_path.exists() {
        let file = File::open(&gt_path).with_context(|| format!("opening {}", gt_path.display()))?;
        let gt = GroundTruth {
            events: read_ground_truth(file, &gt_path)?,
            ..GroundTruth::default()
        };
        let score = score_windows(&windows, &hyper.similarity, hyper.c_thr, &gt)?;
        let (mut hits, mut total) = (0u64, 0u64);
        for (t, v) in scored.iter().zip(&verdicts) {
            if in_maintenance(&gt, t) {
                total += 1;
                hits += u64::from(*v == Some(ReactiveVerdict::Maintenance));
            }
        }
        report["ri"] = json!(score.ri);
        report["ari"] = json!(score.ari);
        report["scored_windows"] = json!(score.windows);
        report["true_maintenance_recall"] = json!((total > 0).then(|| hits as f64 / total as f64));
        println!("ri {}", score.ri);
        println!("ari {}", score.ari);
    }

    let path = l.output_dir()?.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("invariants_hold {}", rates.all_hold());
    Ok(())
}
