use std::collections::HashMap;

use nalgebra::DVector;

use crate::{BenchError, Result};

/// Mean silhouette `(b − a) / max(a, b)` over all points, where `a` is the
/// mean distance to the rest of the point's cluster and `b` the smallest
/// mean distance to another cluster. Points alone in their cluster score 0.
pub fn silhouette(points: &[DVector<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(BenchError::Metric(format!("{} points but {} labels", points.len(), labels.len())));
    }
    let (dense, k) = relabel(labels);
    if k < 2 {
        return Err(BenchError::Metric("silhouette needs at least two clusters".into()));
    }
    let mut sizes = vec![0usize; k];
    dense.iter().for_each(|&l| sizes[l] += 1);

    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[dense[j]] += (&points[i] - &points[j]).norm();
            }
        }
        let own = dense[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k).filter(|&c| c != own).map(|c| sums[c] / sizes[c] as f64).fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Maps arbitrary labels onto `0..k` in order of first appearance.
fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(A, B) / ((H(A) + H(B)) / 2)` with
/// natural logarithms. Two single-cluster labelings score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(BenchError::Metric(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(BenchError::Metric("empty labeling".into()));
    }
    let n = a.len() as f64;
    let (da, ka) = relabel(a);
    let (db, kb) = relabel(b);
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&x, &y) in da.iter().zip(&db) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let (ha, hb) = (entropy(&ca, n), entropy(&cb, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy * n * n / (ca[x] as f64 * cb[y] as f64)).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

/// Minimum-cost one-to-one assignment for a rectangular cost matrix given
/// row-major with `rows ≤ cols`; returns the column picked for each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= cols");
    // potentials and matching over 1-based indices, column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Mean distance between optimally matched learned and true centers; every
/// center left unmatched on either side adds `penalty`, and the total is
/// divided by the larger of the two counts.
pub fn mean_match_error(learned: &[DVector<f64>], truth: &[DVector<f64>], penalty: f64) -> f64 {
    let size = learned.len().max(truth.len());
    if size == 0 {
        return 0.0;
    }
    let (rows, cols) = if learned.len() <= truth.len() { (learned, truth) } else { (truth, learned) };
    let cost: Vec<Vec<f64>> = rows.iter().map(|r| cols.iter().map(|c| (r - c).norm()).collect()).collect();
    let matched: f64 = hungarian(&cost).iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    let surplus = (cols.len() - rows.len()) as f64;
    (matched + penalty * surplus) / size as f64
}
