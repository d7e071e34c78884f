use crate::model::TelemetryPoint;

/// Index pairs `(i, j)` into two channels, strictly increasing on both sides.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn swapped(&self) -> Alignment {
        Alignment {
            pairs: self.pairs.iter().map(|&(i, j)| (j, i)).collect(),
        }
    }
}

/// For each element of sorted `from`, the index of its nearest element in
/// sorted `to`, ties going to the earlier one.
fn nearest_indices(from: &[f64], to: &[f64], out: &mut Vec<usize>) {
    out.clear();
    if to.is_empty() {
        return;
    }
    let mut j = 0usize;
    for &t in from {
        while j + 1 < to.len() && to[j + 1] <= t {
            j += 1;
        }
        let pick = if to[j] <= t && j + 1 < to.len() && to[j + 1] - t < t - to[j] {
            j + 1
        } else {
            j
        };
        out.push(pick);
    }
}

/// Pairs of mutually nearest timestamps between two strictly increasing
/// sequences, appended to `out`. Runs in O(|x| + |y|).
pub fn mutual_nearest_into(x: &[f64], y: &[f64], out: &mut Vec<(usize, usize)>) {
    thread_local! {
        static SCRATCH: std::cell::RefCell<(Vec<usize>, Vec<usize>)> = const {
            std::cell::RefCell::new((Vec::new(), Vec::new()))
        };
    }
    SCRATCH.with(|s| {
        let (nx, ny) = &mut *s.borrow_mut();
        nearest_indices(x, y, nx);
        nearest_indices(y, x, ny);
        for (i, &j) in nx.iter().enumerate() {
            if ny[j] == i {
                out.push((i, j));
            }
        }
    });
}

pub fn mutual_nearest(x: &[f64], y: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    mutual_nearest_into(x, y, &mut out);
    out
}

/// Bidirectional nearest-neighbor alignment of two channels, including
/// placeholders while matching, then dropping pairs that touch one.
pub fn align(x: &[TelemetryPoint], y: &[TelemetryPoint]) -> Alignment {
    let tx: Vec<f64> = x.iter().map(|p| p.ts).collect();
    let ty: Vec<f64> = y.iter().map(|p| p.ts).collect();
    let mut pairs = mutual_nearest(&tx, &ty);
    pairs.retain(|&(i, j)| !x[i].is_placeholder() && !y[j].is_placeholder());
    Alignment { pairs }
}
