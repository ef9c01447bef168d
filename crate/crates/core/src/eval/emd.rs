//! Exact earth mover's distance between normalized histograms, solved as a
//! transportation problem with successive shortest augmenting paths.

use super::{Histogram2D, HIST_BINS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundMetric {
    /// Euclidean distance between (row, col) bin centers.
    Euclidean,
    /// Manhattan distance between bin indices.
    L1,
}

pub fn emd(h1: &Histogram2D, h2: &Histogram2D) -> Result<f64> {
    emd_with_metric(h1, h2, GroundMetric::Euclidean)
}

pub fn emd_with_metric(h1: &Histogram2D, h2: &Histogram2D, metric: GroundMetric) -> Result<f64> {
    for (name, h) in [("first", h1), ("second", h2)] {
        if !h.is_normalized() {
            return Err(Error::invalid(format!(
                "{name} histogram is not normalized (sum = {})",
                h.sum()
            )));
        }
    }

    let mut supplies = Vec::new();
    let mut demands = Vec::new();
    for r in 0..HIST_BINS {
        for c in 0..HIST_BINS {
            if h1.bins[[r, c]] > 0.0 {
                supplies.push((r as f64, c as f64, h1.bins[[r, c]]));
            }
            if h2.bins[[r, c]] > 0.0 {
                demands.push((r as f64, c as f64, h2.bins[[r, c]]));
            }
        }
    }
    let cost = |s: &(f64, f64, f64), d: &(f64, f64, f64)| -> f64 {
        let (dr, dc) = (s.0 - d.0, s.1 - d.1);
        match metric {
            GroundMetric::Euclidean => (dr * dr + dc * dc).sqrt(),
            GroundMetric::L1 => dr.abs() + dc.abs(),
        }
    };
    let costs: Vec<Vec<f64>> = supplies
        .iter()
        .map(|s| demands.iter().map(|d| cost(s, d)).collect())
        .collect();
    // rescale exactly so supply and demand totals agree to the last ulp
    let sa: f64 = supplies.iter().map(|s| s.2).sum();
    let sb: f64 = demands.iter().map(|d| d.2).sum();
    let a: Vec<f64> = supplies.iter().map(|s| s.2 / sa).collect();
    let b: Vec<f64> = demands.iter().map(|d| d.2 / sb).collect();
    Ok(transport(&a, &b, &costs))
}

/// Minimum-cost transportation of supplies `a` onto demands `b` under the
/// dense cost matrix, via successive shortest paths with node potentials.
/// Exact up to floating-point rounding.
pub fn transport(a: &[f64], b: &[f64], costs: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let m = b.len();
    if n == 0 || m == 0 {
        return 0.0;
    }
    const EPS: f64 = 1e-14;

    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    // flow on forward edges (i, j)
    let mut flow = vec![vec![0.0f64; m]; n];
    // potentials: sources then sinks
    let mut pot = vec![0.0f64; n + m];
    let mut total_cost = 0.0;

    let mut remaining: f64 = supply.iter().sum();
    let mut guard = 0usize;
    while remaining > EPS {
        guard += 1;
        assert!(guard <= (n + m) * (n + m) + 64, "transport failed to converge");

        // Dijkstra over the residual graph from all sources with supply left.
        let inf = f64::INFINITY;
        let mut dist = vec![inf; n + m];
        let mut done = vec![false; n + m];
        let mut prev = vec![usize::MAX; n + m];
        for (i, s) in supply.iter().enumerate() {
            if *s > EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = inf;
            for v in 0..n + m {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                // source -> sinks via forward edges
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (costs[u][j] + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                // sink -> sources via residual (backward) edges with flow
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i][j] <= EPS {
                        continue;
                    }
                    let rc = (-costs[i][j] + pot[u] - pot[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        prev[i] = u;
                    }
                }
            }
        }

        // closest reachable sink with demand
        let mut target = usize::MAX;
        let mut best = inf;
        for j in 0..m {
            if demand[j] > EPS && dist[n + j] < best {
                best = dist[n + j];
                target = n + j;
            }
        }
        assert!(target != usize::MAX, "no augmenting path but supply remains");

        // trace path back to a source, find bottleneck
        let mut path = vec![target];
        let mut v = target;
        while prev[v] != usize::MAX {
            v = prev[v];
            path.push(v);
        }
        path.reverse();
        let source = path[0];
        let mut bottleneck = supply[source].min(demand[target - n]);
        for w in path.windows(2) {
            if w[0] >= n {
                // backward edge (sink -> source) limited by existing flow
                bottleneck = bottleneck.min(flow[w[1]][w[0] - n]);
            }
        }

        for w in path.windows(2) {
            if w[0] < n {
                flow[w[0]][w[1] - n] += bottleneck;
                total_cost += bottleneck * costs[w[0]][w[1] - n];
            } else {
                flow[w[1]][w[0] - n] -= bottleneck;
                total_cost -= bottleneck * costs[w[1]][w[0] - n];
            }
        }
        supply[source] -= bottleneck;
        demand[target - n] -= bottleneck;
        remaining -= bottleneck;

        // potential update keeps reduced costs non-negative
        let dmax = dist[target];
        for v in 0..n + m {
            pot[v] += if dist[v].is_finite() { dist[v].min(dmax) } else { dmax };
        }
    }
    total_cost
}
