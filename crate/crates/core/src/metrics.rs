//! Error metrics: OSPA between point sets, agent position errors and Monte
//! Carlo averaging.

use crate::belief::PtLabel;
use crate::models::Vec2;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("run {run} has {len} time steps, expected {expected}")]
    HorizonMismatch { run: usize, len: usize, expected: usize },
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("invalid OSPA parameters: order {order}, cutoff {cutoff}")]
    InvalidOspa { order: f64, cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OspaConfig {
    pub order: f64,
    pub cutoff: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self {
            order: 1.0,
            cutoff: 5000.0,
        }
    }
}

/// Set sizes up to this use exhaustive assignment search.
pub const EXHAUSTIVE_LIMIT: usize = 6;

fn exhaustive_min(cost: &[Vec<f64>]) -> f64 {
    // rows <= cols; try every injective row -> column map
    fn go(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                go(cost, row + 1, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let cols = cost.first().map_or(0, Vec::len);
    go(cost, 0, &mut vec![false; cols], 0.0, &mut best);
    best
}

/// Minimum-cost assignment of every row to a distinct column (rows <=
/// columns), by shortest augmenting paths with potentials. Returns the
/// column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
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
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Cutoff distance matrix raised to the order, smaller set along the rows.
fn cost_matrix(x: &[Vec2], y: &[Vec2], cfg: &OspaConfig) -> Vec<Vec<f64>> {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    small
        .iter()
        .map(|a| large.iter().map(|b| (a - b).norm().min(cfg.cutoff).powf(cfg.order)).collect())
        .collect()
}

fn ospa_from_assignment(total: f64, m: usize, n: usize, cfg: &OspaConfig) -> f64 {
    let penalty = cfg.cutoff.powf(cfg.order) * (n - m) as f64;
    ((total + penalty) / n as f64).powf(1.0 / cfg.order)
}

fn check(cfg: &OspaConfig) -> Result<(), MetricsError> {
    if !(cfg.order >= 1.0 && cfg.cutoff > 0.0) {
        return Err(MetricsError::InvalidOspa {
            order: cfg.order,
            cutoff: cfg.cutoff,
        });
    }
    Ok(())
}

/// OSPA distance between two point sets.
pub fn ospa(estimates: &[Vec2], truths: &[Vec2], cfg: &OspaConfig) -> Result<f64, MetricsError> {
    check(cfg)?;
    let n = estimates.len().max(truths.len());
    let m = estimates.len().min(truths.len());
    if n == 0 {
        return Ok(0.0);
    }
    let cost = cost_matrix(estimates, truths, cfg);
    let total = if n <= EXHAUSTIVE_LIMIT {
        exhaustive_min(&cost)
    } else {
        hungarian(&cost).iter().enumerate().map(|(r, c)| cost[r][*c]).sum()
    };
    Ok(ospa_from_assignment(total, m, n, cfg))
}

/// OSPA computed with the assignment solver regardless of set size.
pub fn ospa_hungarian(estimates: &[Vec2], truths: &[Vec2], cfg: &OspaConfig) -> Result<f64, MetricsError> {
    check(cfg)?;
    let n = estimates.len().max(truths.len());
    let m = estimates.len().min(truths.len());
    if n == 0 {
        return Ok(0.0);
    }
    let cost = cost_matrix(estimates, truths, cfg);
    let total = hungarian(&cost).iter().enumerate().map(|(r, c)| cost[r][*c]).sum();
    Ok(ospa_from_assignment(total, m, n, cfg))
}

/// OSPA computed by exhaustive search regardless of set size.
pub fn ospa_exhaustive(estimates: &[Vec2], truths: &[Vec2], cfg: &OspaConfig) -> Result<f64, MetricsError> {
    check(cfg)?;
    let n = estimates.len().max(truths.len());
    let m = estimates.len().min(truths.len());
    if n == 0 {
        return Ok(0.0);
    }
    let total = exhaustive_min(&cost_matrix(estimates, truths, cfg));
    Ok(ospa_from_assignment(total, m, n, cfg))
}

pub fn position_error(estimate: &Vec2, truth: &Vec2) -> f64 {
    (estimate - truth).norm()
}

pub fn detected_count(existences: &[f64], threshold: f64) -> usize {
    existences.iter().filter(|e| **e > threshold).count()
}

/// Label of the track that stays closest to a true trajectory, summed over
/// the time steps the truth is active. Steps where a track is not reported
/// cost the cutoff.
pub fn closest_track(
    truth: &[(usize, Vec2)],
    tracks: &BTreeMap<usize, Vec<(PtLabel, Vec2)>>,
    cutoff: f64,
) -> Option<PtLabel> {
    let mut labels: Vec<PtLabel> = tracks.values().flatten().map(|(l, _)| *l).collect();
    labels.sort();
    labels.dedup();
    labels
        .into_iter()
        .map(|label| {
            let cost: f64 = truth
                .iter()
                .map(|(t, x)| {
                    tracks
                        .get(t)
                        .and_then(|v| v.iter().find(|(l, _)| *l == label))
                        .map_or(cutoff, |(_, p)| (p - x).norm().min(cutoff))
                })
                .sum();
            (label, cost)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(l, _)| l)
}

/// Per-time mean across runs.
pub fn aggregate(runs: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
    let first = runs.first().ok_or(MetricsError::NoRuns)?;
    let len = first.len();
    for (run, r) in runs.iter().enumerate() {
        if r.len() != len {
            return Err(MetricsError::HorizonMismatch {
                run,
                len: r.len(),
                expected: len,
            });
        }
    }
    Ok((0..len)
        .map(|t| runs.iter().map(|r| r[t]).sum::<f64>() / runs.len() as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn ospa_reference_values() {
        let cfg = OspaConfig {
            order: 1.0,
            cutoff: 100.0,
        };
        assert_eq!(ospa(&[], &[], &cfg).unwrap(), 0.0);
        assert_relative_eq!(ospa(&[p(0.0, 0.0)], &[p(3.0, 4.0)], &cfg).unwrap(), 5.0);
        assert_relative_eq!(ospa(&[], &[p(3.0, 4.0)], &cfg).unwrap(), 100.0);
        assert_relative_eq!(ospa(&[p(0.0, 0.0), p(500.0, 0.0)], &[p(0.0, 10.0)], &cfg).unwrap(), 55.0);
        let cfg2 = OspaConfig {
            order: 2.0,
            cutoff: 100.0,
        };
        assert_relative_eq!(
            ospa(&[p(0.0, 0.0), p(0.0, 0.0)], &[p(3.0, 0.0), p(0.0, 4.0)], &cfg2).unwrap(),
            (12.5f64).sqrt()
        );
    }

    #[test]
    fn hungarian_small() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&c);
        let total: f64 = a.iter().enumerate().map(|(r, k)| c[r][*k]).sum();
        assert_eq!(total, 5.0);
        let rect = vec![vec![10.0, 1.0, 7.0, 3.0], vec![1.0, 9.0, 9.0, 0.5]];
        let a = hungarian(&rect);
        assert_eq!(a, vec![1, 3]);
    }

    #[test]
    fn aggregate_checks_horizon() {
        assert_eq!(aggregate(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), vec![2.0, 3.0]);
        assert!(matches!(
            aggregate(&[vec![1.0, 2.0], vec![3.0]]),
            Err(MetricsError::HorizonMismatch { run: 1, .. })
        ));
        assert_eq!(aggregate(&[]), Err(MetricsError::NoRuns));
    }

    #[test]
    fn closest_track_prefers_consistent_label() {
        let l = |m| PtLabel {
            time: 1,
            pair: 1,
            measurement: m,
        };
        let mut tracks = BTreeMap::new();
        tracks.insert(1, vec![(l(1), p(0.0, 0.0)), (l(2), p(50.0, 0.0))]);
        tracks.insert(2, vec![(l(2), p(60.0, 0.0))]);
        let truth = vec![(1, p(40.0, 0.0)), (2, p(55.0, 0.0))];
        assert_eq!(closest_track(&truth, &tracks, 1000.0), Some(l(2)));
        assert_eq!(closest_track(&truth, &BTreeMap::new(), 1000.0), None);
    }

    #[test]
    fn counting() {
        assert_eq!(detected_count(&[0.9, 0.75, 0.2, 0.76], 0.75), 2);
        assert_relative_eq!(position_error(&p(1.0, 1.0), &p(4.0, 5.0)), 5.0);
    }
}
