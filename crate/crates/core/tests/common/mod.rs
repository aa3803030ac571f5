//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `1 - cos`; any zero vector is at distance 2 from everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 2.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Brute-force DBSCAN: full distance matrix, core points joined by
/// union-find, components numbered by their smallest core index, border
/// points given to the lowest-numbered component among their core
/// neighbours. Returns (groups, noise), both sorted.
pub fn reference_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize, cos: bool) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = points.len();
    let d = |i: usize, j: usize| {
        if cos {
            cosine(&points[i], &points[j])
        } else {
            euclid(&points[i], &points[j])
        }
    };
    let m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d(i, j)).collect()).collect();
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| m[i][j] <= eps).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && m[i][j] <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| find(&mut parent, i)).collect();
    roots.sort_unstable();
    roots.dedup();
    let number: BTreeMap<usize, usize> = roots.iter().enumerate().map(|(k, &r)| (r, k)).collect();
    let mut groups = vec![Vec::new(); roots.len()];
    let mut noise = Vec::new();
    for i in 0..n {
        let g = if core[i] {
            Some(number[&find(&mut parent, i)])
        } else {
            (0..n)
                .filter(|&j| core[j] && m[i][j] <= eps)
                .map(|j| number[&find(&mut parent, j)])
                .min()
        };
        match g {
            Some(k) => groups[k].push(i),
            None => noise.push(i),
        }
    }
    (groups, noise)
}

/// `sum_i (w_i / sum_k w_k) * v_i`, summed coordinate by coordinate.
pub fn direct_weighted_sum(entries: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let total: f64 = entries.iter().map(|(_, w)| w).sum();
    let dim = entries[0].0.len();
    (0..dim)
        .map(|k| entries.iter().map(|(v, w)| w / total * v[k]).sum())
        .collect()
}

/// Mean attempts until a uniform 256-bit hash falls below
/// `floor((2^256 - 1) / difficulty)`, i.e. `2^256 / target`, computed from
/// the top 128 bits.
pub fn expected_attempts(difficulty: u64) -> f64 {
    let target_hi = (u128::MAX / difficulty as u128) as f64;
    2f64.powi(128) / target_hi
}
