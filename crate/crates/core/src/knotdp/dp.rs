use super::cost::SegmentCostTable;

/// Forward-recursion state over the table's split positions.
///
/// `loss[c]` is the minimal penalized loss of the first `positions[c]` rows
/// (`loss[0] = 0`, infinite when no admissible segmentation exists) and
/// `prev[c]` the position index where its last segment starts.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTables {
    pub positions: Vec<usize>,
    pub loss: Vec<f64>,
    pub prev: Vec<usize>,
}

impl DpTables {
    /// Optimal penalized loss of the whole sample.
    pub fn total_loss(&self) -> f64 {
        *self.loss.last().unwrap()
    }

    /// Optimal segments as half-open row ranges, in increasing order.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut c = self.positions.len() - 1;
        if !self.loss[c].is_finite() {
            return out;
        }
        while c > 0 {
            let a = self.prev[c];
            out.push((self.positions[a], self.positions[c]));
            c = a;
        }
        out.reverse();
        out
    }
}

/// `Loss_c = min_a (Loss_a + l(a, c) + lambda)`; ties keep the earliest start.
pub fn dp_forward(table: &SegmentCostTable, lambda: f64) -> DpTables {
    let positions = table.positions().to_vec();
    let b = positions.len();
    let mut loss = vec![f64::INFINITY; b];
    let mut prev = vec![usize::MAX; b];
    loss[0] = 0.0;
    for c in 1..b {
        let mut best = f64::INFINITY;
        let mut arg = usize::MAX;
        for a in 0..c {
            if !loss[a].is_finite() {
                continue;
            }
            let l = table.cost(a, c);
            if !l.is_finite() {
                continue;
            }
            let cand = loss[a] + l + lambda;
            if cand < best {
                best = cand;
                arg = a;
            }
        }
        loss[c] = best;
        prev[c] = arg;
    }
    DpTables {
        positions,
        loss,
        prev,
    }
}

/// Knots `0.5 * (u[s-1] + u[s])` for every split `s` on the optimal path.
pub fn dp_backtrace(sorted_u: &[f64], tables: &DpTables) -> Vec<f64> {
    tables
        .segments()
        .iter()
        .skip(1)
        .map(|&(s, _)| 0.5 * (sorted_u[s - 1] + sorted_u[s]))
        .collect()
}
