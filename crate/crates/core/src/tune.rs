//! Ticketing rates over diagnosed intervals and the per-feature similarity
//! threshold search that maximizes the maintenance ticketing-rate ratio.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnose::{Diagnosis, Label, WindowAnalysis};
use crate::error::{Error, Result};
use crate::model::{Feature, Ticket, TicketKind, SECONDS_PER_HOUR};

/// Maintenance ticketing-rate ratio with a total order: `Undefined` sorts
/// below every finite value and `Infinite` above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Trr {
    Undefined,
    Finite(f64),
    Infinite,
}

impl Trr {
    fn rank(&self) -> u8 {
        match self {
            Trr::Undefined => 0,
            Trr::Finite(_) => 1,
            Trr::Infinite => 2,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Trr::Finite(v) => Some(*v),
            Trr::Infinite => Some(f64::INFINITY),
            Trr::Undefined => None,
        }
    }
}

impl Eq for Trr {}

impl PartialOrd for Trr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trr {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Trr::Finite(a), Trr::Finite(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

/// Ticket counts by `[kind][label]` (kind 0 = maintenance, 1 = service)
/// and labeled device-hours.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Accumulator {
    counts: [[u64; 3]; 2],
    hours: [f64; 3],
}

impl Accumulator {
    fn add(&mut self, label: Label, hours: f64, maintenance: u64, service: u64) {
        let l = label.index();
        self.hours[l] += hours;
        self.counts[0][l] += maintenance;
        self.counts[1][l] += service;
    }

    fn finish(&self) -> Result<TicketStats> {
        let total_hours: f64 = self.hours.iter().sum();
        if !(total_hours > 0.0) {
            return Err(Error::EmptySpan);
        }
        let rate = |k: u64, t: f64| (t > 0.0).then(|| k as f64 / t);
        let [m, s] = self.counts;
        let (h, mm, ss) = (Label::Healthy.index(), Label::Maintenance.index(), Label::Service.index());
        let base_m = m.iter().sum::<u64>() as f64 / total_hours;
        let base_s = s.iter().sum::<u64>() as f64 / total_hours;
        let norm = |r: Option<f64>, b: f64| r.and_then(|r| (b > 0.0).then(|| r / b));
        let r_mm = rate(m[mm], self.hours[mm]);
        let r_ms = rate(m[ss], self.hours[ss]);
        let r_sm = rate(s[mm], self.hours[mm]);
        let r_ss = rate(s[ss], self.hours[ss]);
        let r_mh = rate(m[h], self.hours[h]);
        let r_sh = rate(s[h], self.hours[h]);
        let trr = match (r_mm, r_ms) {
            (Some(a), Some(b)) if b > 0.0 => Trr::Finite(a / b),
            (Some(a), Some(_)) if a > 0.0 => Trr::Infinite,
            _ => Trr::Undefined,
        };
        Ok(TicketStats {
            k_mm: m[mm],
            k_ms: m[ss],
            k_sm: s[mm],
            k_ss: s[ss],
            k_mh: m[h],
            k_sh: s[h],
            t_m: self.hours[mm],
            t_s: self.hours[ss],
            t_h: self.hours[h],
            r_mm,
            r_ms,
            r_sm,
            r_ss,
            r_mh,
            r_sh,
            baseline_m: base_m,
            baseline_s: base_s,
            norm_mm: norm(r_mm, base_m),
            norm_ms: norm(r_ms, base_m),
            norm_sm: norm(r_sm, base_s),
            norm_ss: norm(r_ss, base_s),
            norm_mh: norm(r_mh, base_m),
            norm_sh: norm(r_sh, base_s),
            trr_m: trr,
        })
    }
}

/// Ticketing rates per device-hour. `k_xy` counts tickets of kind `x`
/// (m = maintenance, s = service) opened during intervals labeled `y`
/// (M, S, or H = healthy). Rates and normalized rates are `None` when their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TicketStats {
    pub k_mm: u64,
    pub k_ms: u64,
    pub k_sm: u64,
    pub k_ss: u64,
    pub k_mh: u64,
    pub k_sh: u64,
    pub t_m: f64,
    pub t_s: f64,
    pub t_h: f64,
    pub r_mm: Option<f64>,
    pub r_ms: Option<f64>,
    pub r_sm: Option<f64>,
    pub r_ss: Option<f64>,
    pub r_mh: Option<f64>,
    pub r_sh: Option<f64>,
    pub baseline_m: f64,
    pub baseline_s: f64,
    pub norm_mm: Option<f64>,
    pub norm_ms: Option<f64>,
    pub norm_sm: Option<f64>,
    pub norm_ss: Option<f64>,
    pub norm_mh: Option<f64>,
    pub norm_sh: Option<f64>,
    pub trr_m: Trr,
}

/// Sorted ticket open times per (node, device) and kind.
struct TicketIndex<'a> {
    by_device: HashMap<(&'a str, &'a str), [Vec<f64>; 2]>,
}

impl<'a> TicketIndex<'a> {
    fn new(tickets: &'a [Ticket]) -> Self {
        let mut by_device: HashMap<(&str, &str), [Vec<f64>; 2]> = HashMap::new();
        for t in tickets {
            let k = match t.kind {
                TicketKind::Maintenance => 0,
                TicketKind::Service => 1,
            };
            by_device.entry((&t.fnode_id, &t.device_id)).or_default()[k].push(t.open_ts);
        }
        for v in by_device.values_mut() {
            for ts in v.iter_mut() {
                ts.sort_by(f64::total_cmp);
            }
        }
        Self { by_device }
    }

    /// Maintenance and service tickets opened in `(start, end]`.
    fn count(&self, fnode: &str, device: &str, start: f64, end: f64) -> (u64, u64) {
        self.by_device.get(&(fnode, device)).map_or((0, 0), |[m, s]| {
            let c = |v: &Vec<f64>| (v.partition_point(|&t| t <= end) - v.partition_point(|&t| t <= start)) as u64;
            (c(m), c(s))
        })
    }
}

/// Rates over labeled intervals; a ticket is captured by the interval of
/// its device containing its open time.
pub fn ticket_stats(timeline: &[Diagnosis], tickets: &[Ticket]) -> Result<TicketStats> {
    let index = TicketIndex::new(tickets);
    let mut acc = Accumulator::default();
    for d in timeline {
        let (m, s) = index.count(&d.fnode_id, &d.device_id, d.start, d.end);
        acc.add(d.label, (d.end - d.start) / SECONDS_PER_HOUR, m, s);
    }
    acc.finish()
}

/// Similarity candidates from `lo` to `hi` inclusive in steps of `step`.
pub fn sf_mesh(feature: Feature, step: f64) -> Vec<f64> {
    let (lo, hi) = feature.similarity_range();
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect()
}

/// Outcome of scoring each candidate threshold for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SfSearch {
    pub feature: Feature,
    pub best: f64,
    pub best_trr: Trr,
    /// `(s_f, TRR_m)` per candidate, in mesh order.
    pub scores: Vec<(f64, Trr)>,
}

/// Ticket counts of each window's devices, computed once per search.
pub struct WindowTickets {
    counts: Vec<Vec<(u64, u64)>>,
    hours: Vec<f64>,
}

impl WindowTickets {
    pub fn new(windows: &[WindowAnalysis], tickets: &[Ticket]) -> Self {
        let index = TicketIndex::new(tickets);
        let counts = windows
            .iter()
            .map(|w| w.device_ids.iter().map(|d| index.count(&w.fnode_id, d, w.start, w.end)).collect())
            .collect();
        let hours = windows.iter().map(|w| (w.end - w.start) / SECONDS_PER_HOUR).collect();
        Self { counts, hours }
    }

    pub fn maintenance_total(&self) -> u64 {
        self.counts.iter().flatten().map(|c| c.0).sum()
    }
}

/// Ticket statistics of one feature's labels at threshold `s_f`.
pub fn feature_stats(windows: &[WindowAnalysis], wt: &WindowTickets, feature: Feature, s_f: f64, c_thr: usize) -> Result<TicketStats> {
    let mut acc = Accumulator::default();
    for (k, w) in windows.iter().enumerate() {
        let out = w.feature_outcome(feature, s_f, c_thr);
        for (i, l) in out.labels.iter().enumerate() {
            let (m, s) = wt.counts[k][i];
            acc.add(*l, wt.hours[k], m, s);
        }
    }
    acc.finish()
}

/// Grid search of `s_f` for one feature maximizing TRR_m of that feature's
/// labels over the training windows. Ties go to the larger threshold.
pub fn grid_search_sf(
    windows: &[WindowAnalysis],
    tickets: &[Ticket],
    feature: Feature,
    candidates: &[f64],
    c_thr: usize,
) -> Result<SfSearch> {
    let wt = WindowTickets::new(windows, tickets);
    if wt.maintenance_total() == 0 {
        return Err(Error::NoMaintenanceTickets);
    }
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("empty similarity mesh".into()));
    }
    let scores: Vec<(f64, Trr)> = candidates
        .par_iter()
        .map(|&s| feature_stats(windows, &wt, feature, s, c_thr).map(|st| (s, st.trr_m)))
        .collect::<Result<_>>()?;
    let (best, best_trr) = scores
        .iter()
        .copied()
        .reduce(|a, b| match b.1.cmp(&a.1) {
            Ordering::Greater => b,
            Ordering::Equal if b.0 > a.0 => b,
            _ => a,
        })
        .expect("non-empty mesh");
    Ok(SfSearch {
        feature,
        best,
        best_trr,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureMap;

    fn diag(device: &str, start_h: f64, end_h: f64, label: Label) -> Diagnosis {
        Diagnosis {
            fnode_id: "f".into(),
            device_id: device.into(),
            start: start_h * SECONDS_PER_HOUR,
            end: end_h * SECONDS_PER_HOUR,
            label,
            features: vec![],
            cluster_ids: FeatureMap::default(),
            per_feature: FeatureMap::from_fn(|_| label),
        }
    }

    fn ticket(device: &str, h: f64, kind: TicketKind) -> Ticket {
        Ticket {
            ticket_id: format!("{device}{h}"),
            device_id: device.into(),
            fnode_id: "f".into(),
            open_ts: h * SECONDS_PER_HOUR,
            close_ts: None,
            kind,
            dispatched: true,
        }
    }

    #[test]
    fn hand_arithmetic() {
        let t = [diag("a", 0.0, 10.0, Label::Maintenance), diag("b", 0.0, 20.0, Label::Service)];
        let tickets = [
            ticket("a", 1.0, TicketKind::Maintenance),
            ticket("a", 9.0, TicketKind::Maintenance),
            ticket("b", 3.0, TicketKind::Maintenance),
        ];
        let s = ticket_stats(&t, &tickets).unwrap();
        assert!((s.r_mm.unwrap() - 0.2).abs() < 1e-12);
        assert!((s.r_ms.unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(s.trr_m, Trr::Finite(4.0));
    }

    #[test]
    fn zero_tickets() {
        let s = ticket_stats(&[diag("a", 0.0, 10.0, Label::Maintenance), diag("a", 10.0, 20.0, Label::Service)], &[]).unwrap();
        assert_eq!((s.r_mm, s.r_ms), (Some(0.0), Some(0.0)));
        assert_eq!(s.norm_mm, None);
        assert_eq!(s.trr_m, Trr::Undefined);
    }

    #[test]
    fn infinite_ratio() {
        let t = [diag("a", 0.0, 10.0, Label::Maintenance), diag("b", 0.0, 10.0, Label::Service)];
        let s = ticket_stats(&t, &[ticket("a", 2.0, TicketKind::Maintenance)]).unwrap();
        assert_eq!(s.r_ms, Some(0.0));
        assert_eq!(s.trr_m, Trr::Infinite);
    }

    #[test]
    fn boundary_ticket_belongs_to_earlier_interval() {
        let t = [diag("a", 0.0, 10.0, Label::Maintenance), diag("a", 10.0, 20.0, Label::Service)];
        let s = ticket_stats(&t, &[ticket("a", 10.0, TicketKind::Service)]).unwrap();
        assert_eq!((s.k_sm, s.k_ss), (1, 0));
    }

    #[test]
    fn empty_span() {
        assert!(matches!(ticket_stats(&[], &[]), Err(Error::EmptySpan)));
    }

    #[test]
    fn trr_order() {
        let mut v = vec![Trr::Finite(3.0), Trr::Infinite, Trr::Undefined, Trr::Finite(-1.0)];
        v.sort();
        assert_eq!(v, vec![Trr::Undefined, Trr::Finite(-1.0), Trr::Finite(3.0), Trr::Infinite]);
    }

    #[test]
    fn mesh_covers_range() {
        let m = sf_mesh(Feature::Snr, 0.01);
        assert_eq!(m.len(), 201);
        assert_eq!((m[0], m[100], m[200]), (-1.0, 0.0, 1.0));
        assert_eq!(sf_mesh(Feature::Missing, 0.01).len(), 101);
    }
}
