//! Exhaustive optimal-transport oracle for small one- or multi-dimensional
//! clouds with uniform weights.
//!
//! Masses are integers (each point of `a` carries `|b|` units, each point of
//! `b` carries `|a|`). Every vertex of the transport polytope is produced by
//! some sequence of steps "pick an open cell, ship min(row, column), close the
//! saturated line", so minimising over all such sequences visits every vertex.

use std::collections::HashMap;

type State = (Vec<u64>, Vec<u64>);

fn search(rows: &[u64], cols: &[u64], cost: &[Vec<f64>], memo: &mut HashMap<State, f64>) -> f64 {
    if rows.iter().all(|r| *r == 0) {
        return 0.0;
    }
    let key = (rows.to_vec(), cols.to_vec());
    if let Some(v) = memo.get(&key) {
        return *v;
    }
    let mut best = f64::INFINITY;
    for i in 0..rows.len() {
        if rows[i] == 0 {
            continue;
        }
        for j in 0..cols.len() {
            if cols[j] == 0 {
                continue;
            }
            let m = rows[i].min(cols[j]);
            let mut r = rows.to_vec();
            let mut c = cols.to_vec();
            r[i] -= m;
            c[j] -= m;
            let v = m as f64 * cost[i][j] + search(&r, &c, cost, memo);
            if v < best {
                best = v;
            }
        }
    }
    memo.insert(key, best);
    best
}

/// Minimum transport cost between uniform measures on the rows of `a` and `b`
/// under squared Euclidean distance.
pub fn exhaustive_ot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (k, l) = (a.len() as u64, b.len() as u64);
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum())
                .collect()
        })
        .collect();
    let rows = vec![l; a.len()];
    let cols = vec![k; b.len()];
    search(&rows, &cols, &cost, &mut HashMap::new()) / (k * l) as f64
}
