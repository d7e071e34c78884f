//! Agglomerative clustering over a [`SimilarityMatrix`], plus a DBSCAN
//! baseline.
//!
//! Device indices follow the order of the matrix, which callers keep sorted
//! by device id, so comparing index sets compares id sets.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::features::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    /// Mean over the defined pairwise entries.
    Average,
    /// Maximum over the defined pairwise entries.
    Single,
    /// Minimum over all pairwise entries; any undefined entry makes the
    /// linkage undefined.
    Complete,
}

/// Disjoint clusters covering devices `0..n`. Members are sorted and clusters
/// are ordered by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    clusters: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    /// Group devices by an arbitrary label per device.
    pub fn from_labels<L: Ord + Clone>(labels: &[L]) -> Self {
        let mut first: std::collections::BTreeMap<L, usize> = Default::default();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            let c = *first.entry(l.clone()).or_insert_with(|| {
                clusters.push(Vec::new());
                clusters.len() - 1
            });
            clusters[c].push(i);
        }
        Self::from_clusters(clusters)
    }

    /// Normalize a list of clusters. Panics if they do not partition `0..n`.
    pub fn from_clusters(mut clusters: Vec<Vec<usize>>) -> Self {
        clusters.retain(|c| !c.is_empty());
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_unstable_by_key(|c| c[0]);
        let n = clusters.iter().map(Vec::len).sum();
        let mut labels = vec![usize::MAX; n];
        for (k, c) in clusters.iter().enumerate() {
            for &i in c {
                assert!(i < n && labels[i] == usize::MAX, "clusters must partition 0..{n}");
                labels[i] = k;
            }
        }
        Self { clusters, labels }
    }

    pub fn n_devices(&self) -> usize {
        self.labels.len()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Cluster index of each device.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cluster_of(&self, device: usize) -> &[usize] {
        &self.clusters[self.labels[device]]
    }

    /// Whether every cluster of `self` lies inside a cluster of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.n_devices() == coarser.n_devices()
            && self
                .clusters
                .iter()
                .all(|c| c.iter().all(|&i| coarser.labels[i] == coarser.labels[c[0]]))
    }
}

/// Lexicographic comparison of `a ∪ b` against `c ∪ d`, all sorted.
fn cmp_unions(a: &[usize], b: &[usize], c: &[usize], d: &[usize]) -> Ordering {
    let mut left = MergeIter::new(a, b);
    let mut right = MergeIter::new(c, d);
    loop {
        match (left.next(), right.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x != y => return x.cmp(&y),
            _ => {}
        }
    }
}

struct MergeIter<'a> {
    a: &'a [usize],
    b: &'a [usize],
}

impl<'a> MergeIter<'a> {
    fn new(a: &'a [usize], b: &'a [usize]) -> Self {
        Self { a, b }
    }
}

impl Iterator for MergeIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match (self.a.first(), self.b.first()) {
            (Some(&x), Some(&y)) if x <= y => {
                self.a = &self.a[1..];
                Some(x)
            }
            (_, Some(&y)) => {
                self.b = &self.b[1..];
                Some(y)
            }
            (Some(&x), None) => {
                self.a = &self.a[1..];
                Some(x)
            }
            (None, None) => None,
        }
    }
}

/// One merge step: clusters represented by `a` and `b` joined at
/// `similarity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub similarity: f64,
}

/// The full merge sequence of agglomerative clustering. Cutting it at `s_f`
/// replays merges until the first one below `s_f`, which is exactly the
/// partition obtained by stopping the agglomeration at that threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Greedy agglomeration: repeatedly merge the pair with the highest
    /// linkage, ties going to the lexicographically smallest merged member
    /// set. Stops once only undefined linkages remain.
    pub fn build(sim: &SimilarityMatrix, linkage: Linkage) -> Self {
        let n = sim.len();
        // Linkage state per cluster pair: (sum, defined count) for Average,
        // the linkage value itself otherwise.
        let mut sum = vec![0.0f64; n * n];
        let mut cnt = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = sim.get(i, j);
                let k = i * n + j;
                match linkage {
                    Linkage::Average => {
                        if let Some(v) = v {
                            sum[k] = v;
                            cnt[k] = 1;
                        }
                    }
                    Linkage::Single | Linkage::Complete => sum[k] = v.unwrap_or(f64::NEG_INFINITY),
                }
            }
        }
        let value = |sum: &[f64], cnt: &[u32], i: usize, j: usize| -> f64 {
            let k = i * n + j;
            match linkage {
                Linkage::Average if cnt[k] == 0 => f64::NEG_INFINITY,
                Linkage::Average => sum[k] / cnt[k] as f64,
                _ => sum[k],
            }
        };
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut active = vec![true; n];
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        // Exact duplicates go first at similarity 1.0, which is also where
        // the greedy puts them; this keeps large tied blocks from making
        // every row rescan after every merge.
        for group in duplicate_groups(sim) {
            for &b in &group[1..] {
                merges.push(Merge {
                    a: group[0],
                    b,
                    similarity: 1.0,
                });
                fold(linkage, n, &mut sum, &mut cnt, &mut active, &mut members, group[0], b);
            }
        }
        // Best partner per row under (value desc, merged set asc).
        let better = |members: &[Vec<usize>], v1: f64, i1: usize, j1: usize, v2: f64, i2: usize, j2: usize| -> bool {
            match v1.partial_cmp(&v2).unwrap_or(Ordering::Equal) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    cmp_unions(&members[i1], &members[j1], &members[i2], &members[j2]) == Ordering::Less
                }
            }
        };
        let row_best = |members: &[Vec<usize>], active: &[bool], sum: &[f64], cnt: &[u32], i: usize| {
            let mut best: Option<(f64, usize)> = None;
            for j in (0..n).filter(|&j| j != i && active[j]) {
                let v = value(sum, cnt, i, j);
                if best.is_none_or(|(bv, bj)| better(members, v, i, j, bv, i, bj)) {
                    best = Some((v, j));
                }
            }
            best
        };
        let mut best: Vec<Option<(f64, usize)>> = (0..n)
            .map(|i| if active[i] { row_best(&members, &active, &sum, &cnt, i) } else { None })
            .collect();
        loop {
            let mut pick: Option<(f64, usize, usize)> = None;
            for i in (0..n).filter(|&i| active[i]) {
                if let Some((v, j)) = best[i] {
                    if pick.is_none_or(|(pv, pi, pj)| better(&members, v, i, j, pv, pi, pj)) {
                        pick = Some((v, i, j));
                    }
                }
            }
            let Some((v, i, j)) = pick else { break };
            if v == f64::NEG_INFINITY {
                break;
            }
            let (a, b) = (i.min(j), i.max(j));
            merges.push(Merge { a, b, similarity: v });
            fold(linkage, n, &mut sum, &mut cnt, &mut active, &mut members, a, b);
            best[b] = None;
            best[a] = row_best(&members, &active, &sum, &cnt, a);
            for k in (0..n).filter(|&k| active[k] && k != a) {
                match best[k] {
                    Some((_, p)) if p == a || p == b => best[k] = row_best(&members, &active, &sum, &cnt, k),
                    Some((bv, p)) => {
                        let v = value(&sum, &cnt, k, a);
                        if better(&members, v, k, a, bv, k, p) {
                            best[k] = Some((v, a));
                        }
                    }
                    None => best[k] = row_best(&members, &active, &sum, &cnt, k),
                }
            }
        }
        Self { n, merges }
    }

    pub fn n_devices(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Partition left after merging while the best linkage is at least `s_f`.
    pub fn cut(&self, s_f: f64) -> Partition {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in self.merges.iter().take_while(|m| m.similarity >= s_f) {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            parent[rb] = ra;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        Partition::from_labels(&roots)
    }
}

/// Agglomerate until the best linkage falls below `s_f`.
/// Fold cluster `b` into `a`, updating the linkage state of every other
/// active cluster.
#[allow(clippy::too_many_arguments)]
fn fold(
    linkage: Linkage,
    n: usize,
    sum: &mut [f64],
    cnt: &mut [u32],
    active: &mut [bool],
    members: &mut [Vec<usize>],
    a: usize,
    b: usize,
) {
    for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
        let (ak, bk) = (a * n + k, b * n + k);
        let merged = match linkage {
            Linkage::Average => {
                cnt[ak] += cnt[bk];
                sum[ak] + sum[bk]
            }
            Linkage::Single => sum[ak].max(sum[bk]),
            Linkage::Complete => sum[ak].min(sum[bk]),
        };
        sum[ak] = merged;
        sum[k * n + a] = merged;
        cnt[k * n + a] = cnt[ak];
    }
    active[b] = false;
    let moved = std::mem::take(&mut members[b]);
    let mut union = Vec::with_capacity(members[a].len() + moved.len());
    union.extend(MergeIter::new(&members[a], &moved));
    members[a] = union;
}

/// Groups (size two or more, ascending) of devices with identical rows and
/// mutual similarity 1.0. Empty unless 1.0 is the matrix maximum and every
/// off-diagonal 1.0 lies inside a group; only then does the greedy merge
/// exactly these groups before anything else.
fn duplicate_groups(sim: &SimilarityMatrix) -> Vec<Vec<usize>> {
    let n = sim.len();
    let bits = |v: Option<f64>| v.map_or(u64::MAX, f64::to_bits);
    let mut by_row: std::collections::HashMap<Vec<u64>, usize> = Default::default();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![0usize; n];
    for i in 0..n {
        let key: Vec<u64> = (0..n).map(|j| bits(if i == j { Some(1.0) } else { sim.get(i, j) })).collect();
        let g = *by_row.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
        group_of[i] = g;
    }
    for i in 0..n {
        for j in i + 1..n {
            match sim.get(i, j) {
                Some(v) if v > 1.0 => return Vec::new(),
                Some(v) if v == 1.0 && group_of[i] != group_of[j] => return Vec::new(),
                _ => {}
            }
        }
    }
    groups.retain(|g| g.len() > 1);
    groups
}

pub fn agglomerate(sim: &SimilarityMatrix, s_f: f64, linkage: Linkage) -> Partition {
    Dendrogram::build(sim, linkage).cut(s_f)
}

/// DBSCAN over an arbitrary symmetric distance with closed neighborhoods
/// that include the point itself. Noise points become singletons; a border
/// point joins the first cluster that reaches it in index order.
pub fn dbscan(n: usize, eps: f64, min_samples: usize, dist: impl Fn(usize, usize) -> f64) -> Partition {
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| i == j || dist(i, j) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_samples.max(1)).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0usize;
    for i in 0..n {
        if label[i].is_some() || !core[i] {
            continue;
        }
        let c = next;
        next += 1;
        label[i] = Some(c);
        let mut stack = vec![i];
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if label[q].is_none() {
                    label[q] = Some(c);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
    }
    let labels: Vec<usize> = label
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.unwrap_or(next + i))
        .collect();
    Partition::from_labels(&labels)
}

/// DBSCAN on distance `1 - max(0, sim)`, undefined pairs at distance 1.
pub fn dbscan_partition(sim: &SimilarityMatrix, eps: f64, min_samples: usize) -> Partition {
    dbscan(sim.len(), eps, min_samples, |i, j| {
        sim.get(i, j).map_or(1.0, |s| 1.0 - s.max(0.0))
    })
}

/// A clustering method whose single threshold is a similarity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clusterer {
    Agglomerative(Linkage),
    /// DBSCAN with `eps = 1 - s_f`.
    Dbscan { min_samples: usize },
}

impl Clusterer {
    pub fn prepare(&self, sim: SimilarityMatrix) -> Clustering {
        match *self {
            Clusterer::Agglomerative(l) => Clustering::Dendrogram(Dendrogram::build(&sim, l)),
            Clusterer::Dbscan { min_samples } => Clustering::Dbscan { sim, min_samples },
        }
    }
}

impl Default for Clusterer {
    fn default() -> Self {
        Clusterer::Agglomerative(Linkage::Average)
    }
}

/// Threshold-independent clustering state for one similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Clustering {
    Dendrogram(Dendrogram),
    Dbscan { sim: SimilarityMatrix, min_samples: usize },
}

impl Clustering {
    pub fn partition(&self, s_f: f64) -> Partition {
        match self {
            Clustering::Dendrogram(d) => d.cut(s_f),
            Clustering::Dbscan { sim, min_samples } => dbscan_partition(sim, 1.0 - s_f, *min_samples),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Feature;

    fn matrix(n: usize, entries: &[(usize, usize, f64)]) -> SimilarityMatrix {
        let mut m = SimilarityMatrix::new(Feature::TxPower, n);
        for i in 0..n {
            m.set(i, i, Some(1.0));
        }
        for &(i, j, v) in entries {
            m.set(i, j, Some(v));
        }
        m
    }

    fn clusters(p: &Partition) -> Vec<Vec<usize>> {
        p.clusters().to_vec()
    }

    #[test]
    fn low_similarity_keeps_singletons() {
        let m = matrix(3, &[(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.3)]);
        assert_eq!(agglomerate(&m, 0.5, Linkage::Average), Partition::singletons(3));
    }

    #[test]
    fn two_pairs() {
        let mut e = vec![(0, 1, 0.9), (2, 3, 0.85)];
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            e.push((i, j, 0.1));
        }
        let m = matrix(4, &e);
        assert_eq!(clusters(&agglomerate(&m, 0.5, Linkage::Average)), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn average_differs_from_single() {
        let m = matrix(3, &[(0, 1, 0.9), (0, 2, 0.6), (1, 2, 0.2)]);
        assert_eq!(clusters(&agglomerate(&m, 0.5, Linkage::Average)), vec![vec![0, 1], vec![2]]);
        assert_eq!(clusters(&agglomerate(&m, 0.5, Linkage::Single)), vec![vec![0, 1, 2]]);
        assert_eq!(clusters(&agglomerate(&m, 0.5, Linkage::Complete)), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn undefined_pairs_never_merge() {
        let m = SimilarityMatrix::new(Feature::Snr, 3);
        assert_eq!(agglomerate(&m, -1.0, Linkage::Average), Partition::singletons(3));
        assert_eq!(Dendrogram::build(&m, Linkage::Single).merges().len(), 0);
    }

    #[test]
    fn average_ignores_undefined_entries() {
        let mut m = matrix(3, &[(0, 1, 0.9), (0, 2, 0.8)]);
        m.set(1, 2, None);
        assert_eq!(clusters(&agglomerate(&m, 0.5, Linkage::Average)), vec![vec![0, 1, 2]]);
        assert_eq!(clusters(&agglomerate(&m, 0.5, Linkage::Complete)), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn ties_merge_smallest_set_first() {
        // All pairs equal: {0,1} first, then average with 2 equal again.
        let m = matrix(3, &[(0, 1, 0.7), (0, 2, 0.7), (1, 2, 0.7)]);
        let d = Dendrogram::build(&m, Linkage::Average);
        assert_eq!((d.merges()[0].a, d.merges()[0].b), (0, 1));
    }

    #[test]
    fn dbscan_examples() {
        let all = matrix(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]);
        assert_eq!(clusters(&dbscan_partition(&all, 0.1, 2)), vec![vec![0, 1, 2]]);
        let blocks = matrix(4, &[(0, 1, 0.95), (2, 3, 0.95)]);
        assert_eq!(clusters(&dbscan_partition(&blocks, 0.1, 2)), vec![vec![0, 1], vec![2, 3]]);
        let iso = matrix(3, &[(0, 1, 0.95)]);
        assert_eq!(clusters(&dbscan_partition(&iso, 0.1, 2)), vec![vec![0, 1], vec![2]]);
    }
}
