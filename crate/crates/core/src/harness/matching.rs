//! One-to-one matching of recovered spikes to ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{distance, SpikeTrain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Truth index → recovered index.
    pub truth_to_recovered: Vec<Option<usize>>,
    /// Recovered index → truth index.
    pub recovered_to_truth: Vec<Option<usize>>,
    /// Sum of squared position distances over matched pairs.
    pub cost: f64,
}

impl Matching {
    pub fn matched(&self) -> usize {
        self.truth_to_recovered.iter().flatten().count()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.truth_to_recovered
            .iter()
            .enumerate()
            .filter_map(|(t, r)| r.map(|r| (t, r)))
    }
}

/// Minimum-cost assignment on a square row-major cost matrix. Returns the
/// column assigned to every row.
///
/// Shortest augmenting paths with row/column potentials, `O(n³)`.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // row matched to column j, 1-based, 0 = free
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Pairs recovered and true spikes one-to-one, only within `radius` of each
/// other. The number of pairs is maximized first, then the total squared
/// distance is minimized.
pub fn match_spikes(recovered: &SpikeTrain, truth: &SpikeTrain, radius: f64) -> Result<Matching> {
    if recovered.dimension() != truth.dimension() {
        return Err(Error::DimensionMismatch {
            expected: truth.dimension(),
            actual: recovered.dimension(),
        });
    }
    let nr = recovered.len();
    let nt = truth.len();
    let mut matching = Matching {
        truth_to_recovered: vec![None; nt],
        recovered_to_truth: vec![None; nr],
        cost: 0.0,
    };
    if nr == 0 || nt == 0 {
        return Ok(matching);
    }

    // Rows: recovered then dummies; columns: truth then dummies. Leaving a
    // spike unmatched costs `penalty`, so any feasible pair (cost ≤ r²) beats
    // two unmatched spikes, and a pair beyond the radius never does.
    let n = nr + nt;
    let penalty = n as f64 * radius * radius + 1.0;
    let forbidden = 2.0 * penalty + 1.0;
    let mut cost = vec![0.0; n * n];
    let mut sq = vec![None; nr * nt];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = match (i < nr, j < nt) {
                (true, true) => {
                    let dist =
                        distance(&recovered.spikes()[i].position, &truth.spikes()[j].position);
                    if dist <= radius {
                        sq[i * nt + j] = Some(dist * dist);
                        dist * dist
                    } else {
                        forbidden
                    }
                }
                (false, false) => 0.0,
                _ => penalty,
            };
        }
    }

    for (i, j) in hungarian(&cost, n).into_iter().enumerate().take(nr) {
        if j < nt {
            if let Some(c) = sq[i * nt + j] {
                matching.recovered_to_truth[i] = Some(j);
                matching.truth_to_recovered[j] = Some(i);
                matching.cost += c;
            }
        }
    }
    Ok(matching)
}
