//! Scoring: pair-counting partition agreement, normalized ticketing-rate
//! invariants, fault and ticket characteristics, and reactive-mode
//! confusion.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::cluster::Partition;
use crate::diagnose::{Diagnosis, Label, ReactiveVerdict, WindowAnalysis};
use crate::error::{Error, Result};
use crate::model::{FeatureMap, Ticket, TicketKind, SECONDS_PER_HOUR};
use crate::synth::GroundTruth;
use crate::tune::TicketStats;

/// Counts over unordered device pairs: TP = together in both, TN = apart in
/// both, FP = together only in the prediction, FN = together only in truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairConfusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PairConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandScore {
    pub ri: f64,
    pub ari: f64,
    pub pairs: PairConfusion,
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Rand index and adjusted Rand index from the contingency table.
pub fn rand_index(pred: &Partition, truth: &Partition) -> Result<RandScore> {
    let n = pred.n_devices();
    if n != truth.n_devices() {
        return Err(Error::DeviceSetMismatch);
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    for i in 0..n {
        *table.entry((pred.labels()[i], truth.labels()[i])).or_default() += 1;
    }
    let together: u64 = table.values().map(|&c| choose2(c)).sum();
    let pred_pairs: u64 = pred.clusters().iter().map(|c| choose2(c.len() as u64)).sum();
    let truth_pairs: u64 = truth.clusters().iter().map(|c| choose2(c.len() as u64)).sum();
    let total = choose2(n as u64);
    let pairs = PairConfusion {
        tp: together,
        fp: pred_pairs - together,
        fn_: truth_pairs - together,
        tn: total + together - pred_pairs - truth_pairs,
    };
    if total == 0 {
        return Ok(RandScore { ri: 1.0, ari: 1.0, pairs });
    }
    let ri = (pairs.tp + pairs.tn) as f64 / total as f64;
    let expected = pred_pairs as f64 * truth_pairs as f64 / total as f64;
    let max = (pred_pairs + truth_pairs) as f64 / 2.0;
    // The denominator vanishes only when both partitions are all singletons
    // or both a single cluster, i.e. when they agree.
    let ari = if max == expected {
        1.0
    } else {
        (together as f64 - expected) / (max - expected)
    };
    Ok(RandScore { ri, ari, pairs })
}

/// The true grouping of a node's devices over `(start, end]`: members of each
/// active event form one cluster, everyone else is alone. The flag reports
/// whether a maintenance event is active.
pub fn truth_partition(gt: &GroundTruth, fnode_id: &str, device_ids: &[String], start: f64, end: f64) -> (Partition, bool) {
    let index: HashMap<&str, usize> = device_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let mut labels: Vec<usize> = (0..device_ids.len()).collect();
    let mut maintenance = false;
    for e in gt.events.iter().filter(|e| e.fnode_id == fnode_id && e.start_ts < end && e.end_ts > start) {
        maintenance |= e.kind == TicketKind::Maintenance;
        let members: Vec<usize> = e.devices.iter().filter_map(|d| index.get(d.as_str()).copied()).collect();
        if let Some(&first) = members.first() {
            let root = labels[first];
            for &m in &members {
                labels[m] = root;
            }
        }
    }
    (Partition::from_labels(&labels), maintenance)
}

/// Mean RI and ARI of the pipeline partition against ground truth over the
/// windows in which a maintenance event is active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionScore {
    pub ri: f64,
    pub ari: f64,
    pub windows: usize,
}

/// Score the union of flagged clusters, window by window.
pub fn score_windows(
    windows: &[WindowAnalysis],
    similarity: &FeatureMap<f64>,
    c_thr: usize,
    gt: &GroundTruth,
) -> Result<PartitionScore> {
    score_with(windows, gt, |w| w.pipeline_partition(similarity, c_thr))
}

/// Score an arbitrary per-window prediction.
pub fn score_with(
    windows: &[WindowAnalysis],
    gt: &GroundTruth,
    mut predict: impl FnMut(&WindowAnalysis) -> Partition,
) -> Result<PartitionScore> {
    let (mut ri, mut ari, mut k) = (0.0, 0.0, 0usize);
    for w in windows {
        let (truth, active) = truth_partition(gt, &w.fnode_id, &w.device_ids, w.start, w.end);
        if !active {
            continue;
        }
        let s = rand_index(&predict(w), &truth)?;
        ri += s.ri;
        ari += s.ari;
        k += 1;
    }
    if k == 0 {
        return Err(Error::InsufficientData("no window contains a maintenance event".into()));
    }
    Ok(PartitionScore {
        ri: ri / k as f64,
        ari: ari / k as f64,
        windows: k,
    })
}

/// One expected ordering of normalized rates and whether it holds; `None`
/// when a rate involved is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub stats: TicketStats,
    pub invariants: Vec<InvariantCheck>,
    /// Both healthy-period normalized rates below 1.
    pub healthy_below_one: Option<bool>,
}

impl RateReport {
    pub fn all_hold(&self) -> bool {
        self.invariants.iter().all(|c| c.holds == Some(true))
    }
}

/// Check the four orderings `a > b > 1` expected of an accurate diagnosis.
pub fn normalized_rate_report(stats: TicketStats) -> RateReport {
    let chain = |name: &str, a: Option<f64>, b: Option<f64>| InvariantCheck {
        name: name.to_string(),
        holds: a.zip(b).map(|(a, b)| a > b && b > 1.0),
    };
    let invariants = vec![
        chain("norm_mm > norm_sm > 1", stats.norm_mm, stats.norm_sm),
        chain("norm_mm > norm_ms > 1", stats.norm_mm, stats.norm_ms),
        chain("norm_ss > norm_ms > 1", stats.norm_ss, stats.norm_ms),
        chain("norm_ss > norm_sm > 1", stats.norm_ss, stats.norm_sm),
    ];
    let healthy_below_one = stats.norm_mh.zip(stats.norm_sh).map(|(m, s)| m < 1.0 && s < 1.0);
    RateReport {
        stats,
        invariants,
        healthy_below_one,
    }
}

/// A diagnosed fault: for maintenance, the devices of linked flagged
/// clusters; for service, one device's run of service windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub fnode_id: String,
    pub label: Label,
    pub devices: Vec<String>,
    pub start: f64,
    pub end: f64,
}

/// Link a canonically ordered timeline into incidents. Maintenance
/// diagnoses sharing a contributing cluster in one window are linked, and
/// so are consecutive maintenance windows of one device.
pub fn link_incidents(timeline: &[Diagnosis]) -> Vec<Incident> {
    let n = timeline.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let union = |p: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(p, a), find(p, b));
        if ra != rb {
            p[ra.max(rb)] = ra.min(rb);
        }
    };
    let mut cluster_key: HashMap<(&str, u64, u64, &str, usize), usize> = HashMap::new();
    for (i, d) in timeline.iter().enumerate() {
        if i > 0 {
            let p = &timeline[i - 1];
            if p.label == d.label
                && d.label != Label::Healthy
                && p.fnode_id == d.fnode_id
                && p.device_id == d.device_id
                && p.end == d.start
            {
                union(&mut parent, i - 1, i);
            }
        }
        if d.label != Label::Maintenance {
            continue;
        }
        for f in &d.features {
            let key = (d.fnode_id.as_str(), d.start.to_bits(), d.end.to_bits(), f.as_str(), *d.cluster_ids.get(*f));
            match cluster_key.get(&key) {
                Some(&j) => union(&mut parent, j, i),
                None => {
                    cluster_key.insert(key, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, (BTreeSet<&str>, f64, f64)> = BTreeMap::new();
    for (i, d) in timeline.iter().enumerate() {
        if d.label == Label::Healthy {
            continue;
        }
        let g = groups
            .entry(find(&mut parent, i))
            .or_insert((BTreeSet::new(), f64::INFINITY, f64::NEG_INFINITY));
        g.0.insert(&d.device_id);
        g.1 = g.1.min(d.start);
        g.2 = g.2.max(d.end);
    }
    let mut out: Vec<Incident> = groups
        .into_iter()
        .map(|(root, (devices, start, end))| Incident {
            fnode_id: timeline[root].fnode_id.clone(),
            label: timeline[root].label,
            devices: devices.into_iter().map(str::to_string).collect(),
            start,
            end,
        })
        .collect();
    out.sort_by(|a, b| {
        a.fnode_id
            .cmp(&b.fnode_id)
            .then(a.start.total_cmp(&b.start))
            .then_with(|| a.devices.cmp(&b.devices))
    });
    out
}

/// Fault duration, first-ticket delay and reporting fraction per incident.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TicketCharacteristics {
    /// Hours, per label.
    pub durations: BTreeMap<String, Vec<f64>>,
    /// Hours from incident start to its first ticket, incidents with tickets
    /// only.
    pub delays: BTreeMap<String, Vec<f64>>,
    /// Incidents without any ticket, per label.
    pub no_ticket: BTreeMap<String, usize>,
    /// Distinct ticketing members over incident size, maintenance incidents
    /// with at least one ticket.
    pub reporting_fractions: Vec<f64>,
}

pub fn ticket_characteristics(incidents: &[Incident], tickets: &[Ticket]) -> TicketCharacteristics {
    let mut by_device: HashMap<(&str, &str), Vec<f64>> = HashMap::new();
    for t in tickets {
        by_device.entry((&t.fnode_id, &t.device_id)).or_default().push(t.open_ts);
    }
    let mut out = TicketCharacteristics::default();
    for inc in incidents {
        let key = inc.label.as_str().to_string();
        out.durations.entry(key.clone()).or_default().push((inc.end - inc.start) / SECONDS_PER_HOUR);
        let mut first: Option<f64> = None;
        let mut reporters = 0usize;
        for d in &inc.devices {
            let hits: Vec<f64> = by_device
                .get(&(inc.fnode_id.as_str(), d.as_str()))
                .map(|v| v.iter().copied().filter(|&t| t > inc.start && t <= inc.end).collect())
                .unwrap_or_default();
            if let Some(m) = hits.iter().copied().reduce(f64::min) {
                reporters += 1;
                first = Some(first.map_or(m, |f| f.min(m)));
            }
        }
        match first {
            Some(f) => {
                out.delays.entry(key).or_default().push((f - inc.start) / SECONDS_PER_HOUR);
                if inc.label == Label::Maintenance {
                    out.reporting_fractions.push(reporters as f64 / inc.devices.len() as f64);
                }
            }
            None => *out.no_ticket.entry(key).or_default() += 1,
        }
    }
    for v in out.durations.values_mut().chain(out.delays.values_mut()) {
        v.sort_by(f64::total_cmp);
    }
    out.reporting_fractions.sort_by(f64::total_cmp);
    out
}

/// Empirical CDF points `(value, fraction ≤ value)` of sorted values.
pub fn cdf(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = p,
            _ => out.push((v, p)),
        }
    }
    out
}

/// Reactive predictions against ticket kinds: rows are ticket kinds
/// (maintenance, service), columns verdicts (maintenance, service, no issue).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactiveConfusion {
    pub counts: [[u64; 3]; 2],
}

impl ReactiveConfusion {
    pub fn add(&mut self, kind: TicketKind, verdict: ReactiveVerdict) {
        let r = match kind {
            TicketKind::Maintenance => 0,
            TicketKind::Service => 1,
        };
        let c = match verdict {
            ReactiveVerdict::Maintenance => 0,
            ReactiveVerdict::Service => 1,
            ReactiveVerdict::NoIssue => 2,
        };
        self.counts[r][c] += 1;
    }

    /// Share of tickets of `kind` whose verdict matches it.
    pub fn recall(&self, kind: TicketKind) -> Option<f64> {
        let (r, c) = match kind {
            TicketKind::Maintenance => (0, 0),
            TicketKind::Service => (1, 1),
        };
        let total: u64 = self.counts[r].iter().sum();
        (total > 0).then(|| self.counts[r][c] as f64 / total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Feature;

    #[test]
    fn identical_partitions() {
        let p = Partition::from_clusters(vec![vec![0, 1], vec![2], vec![3, 4]]);
        let s = rand_index(&p, &p).unwrap();
        assert_eq!((s.ri, s.ari), (1.0, 1.0));
    }

    #[test]
    fn worked_pair_counts() {
        let p1 = Partition::from_clusters(vec![vec![0, 1], vec![2, 3]]);
        let p2 = Partition::from_clusters(vec![vec![0, 1, 2], vec![3]]);
        let s = rand_index(&p1, &p2).unwrap();
        assert_eq!(s.pairs, PairConfusion { tp: 1, tn: 2, fp: 1, fn_: 2 });
        assert_eq!(s.ri, 0.5);
        let s = rand_index(&p2, &p1).unwrap();
        assert_eq!(s.pairs, PairConfusion { tp: 1, tn: 2, fp: 2, fn_: 1 });
        assert_eq!(s.ri, 0.5);
    }

    #[test]
    fn mismatch() {
        assert!(matches!(
            rand_index(&Partition::singletons(2), &Partition::singletons(3)),
            Err(Error::DeviceSetMismatch)
        ));
    }

    #[test]
    fn known_ari() {
        // Standard worked example: labels [0,0,1,1] vs [0,0,1,2] -> ARI 4/7.
        let a = Partition::from_labels(&[0, 0, 1, 1]);
        let b = Partition::from_labels(&[0, 0, 1, 2]);
        assert!((rand_index(&a, &b).unwrap().ari - 4.0 / 7.0).abs() < 1e-12);
    }

    fn diag(device: &str, start: f64, end: f64, label: Label, cluster: usize) -> Diagnosis {
        Diagnosis {
            fnode_id: "f".into(),
            device_id: device.into(),
            start,
            end,
            label,
            features: if label == Label::Healthy { vec![] } else { vec![Feature::TxPower] },
            cluster_ids: FeatureMap { snr: 0, tx_power: cluster, missing: 0 },
            per_feature: FeatureMap::from_fn(|_| Label::Healthy),
        }
    }

    fn ticket(device: &str, h: f64) -> Ticket {
        Ticket {
            ticket_id: format!("{device}-{h}"),
            device_id: device.into(),
            fnode_id: "f".into(),
            open_ts: h * SECONDS_PER_HOUR,
            close_ts: None,
            kind: TicketKind::Maintenance,
            dispatched: true,
        }
    }

    #[test]
    fn duration_delay_fraction() {
        let h = SECONDS_PER_HOUR;
        let mut timeline = Vec::new();
        for k in 0..10 {
            timeline.push(diag(&format!("d{k}"), 0.0, 10.0 * h, Label::Maintenance, 3));
        }
        timeline.push(diag("s", 0.0, 10.0 * h, Label::Service, 7));
        let incidents = link_incidents(&timeline);
        assert_eq!(incidents.len(), 2);
        let c = ticket_characteristics(&incidents, &[ticket("d0", 2.0), ticket("d0", 5.0)]);
        assert_eq!(c.durations["maintenance"], vec![10.0]);
        assert_eq!(c.delays["maintenance"], vec![2.0]);
        assert_eq!(c.reporting_fractions, vec![0.1]);
        assert_eq!(c.no_ticket["service"], 1);
    }

    #[test]
    fn consecutive_windows_link() {
        let h = SECONDS_PER_HOUR;
        let t = vec![
            diag("a", 0.0, 24.0 * h, Label::Maintenance, 1),
            diag("a", 24.0 * h, 48.0 * h, Label::Maintenance, 4),
            diag("b", 24.0 * h, 48.0 * h, Label::Maintenance, 4),
        ];
        let inc = link_incidents(&t);
        assert_eq!(inc.len(), 1);
        assert_eq!(inc[0].devices, vec!["a", "b"]);
        assert_eq!(inc[0].end - inc[0].start, 48.0 * h);
    }

    #[test]
    fn cdf_points() {
        assert_eq!(cdf(&[1.0, 1.0, 2.0, 4.0]), vec![(1.0, 0.5), (2.0, 0.75), (4.0, 1.0)]);
    }
}
