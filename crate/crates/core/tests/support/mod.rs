//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

/// Exact (unregularized) OT value by vertex enumeration of the transportation
/// polytope. Every vertex is a basic solution supported on `n + m - 1` cells,
/// so trying every such cell subset and keeping the cheapest feasible one
/// gives the LP optimum. Only meant for tiny instances.
pub fn exact_ot(cost: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let m = b.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        if let Some(x) = basic_solution(&cells, &subset, a, b) {
            let c: f64 = subset.iter().zip(&x).map(|(&s, v)| cost[cells[s].0][cells[s].1] * v).sum();
            best = best.min(c);
        }
        if !next_combination(&mut subset, cells.len()) {
            break;
        }
    }
    best
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves row sums = a and the first m-1 column sums = b on the chosen cells;
/// returns None when singular, infeasible (negative) or inconsistent.
fn basic_solution(cells: &[(usize, usize)], subset: &[usize], a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let m = b.len();
    let k = subset.len();
    let mut mat = vec![vec![0.0; k + 1]; k];
    for (col, &s) in subset.iter().enumerate() {
        let (i, j) = cells[s];
        mat[i][col] = 1.0;
        if j < m - 1 {
            mat[n + j][col] = 1.0;
        }
    }
    for i in 0..n {
        mat[i][k] = a[i];
    }
    for j in 0..m - 1 {
        mat[n + j][k] = b[j];
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs()))?;
        if mat[piv][col].abs() < 1e-12 {
            return None;
        }
        mat.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = mat[r][col] / mat[col][col];
                if f != 0.0 {
                    for c in col..=k {
                        mat[r][c] -= f * mat[col][c];
                    }
                }
            }
        }
    }
    let x: Vec<f64> = (0..k).map(|i| mat[i][k] / mat[i][i]).collect();
    if x.iter().any(|v| *v < -1e-12) {
        return None;
    }
    let last: f64 = subset
        .iter()
        .zip(&x)
        .filter(|(&s, _)| cells[s].1 == m - 1)
        .map(|(_, v)| v)
        .sum();
    ((last - b[m - 1]).abs() < 1e-9).then_some(x)
}

/// Central difference of `f` along each coordinate of `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// log(softmax(z)[k]) evaluated directly.
pub fn log_softmax(z: &[f64], k: usize) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z[k] - lse
}

#[test]
fn exact_ot_small_cases() {
    // Identity-like 2x2: all mass on the zero diagonal.
    let c = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    assert!(exact_ot(&c, &[0.5, 0.5], &[0.5, 0.5]).abs() < 1e-12);
    // Forced split: one source, two sinks.
    let c = vec![vec![2.0, 3.0]];
    assert!((exact_ot(&c, &[1.0], &[0.25, 0.75]) - 2.75).abs() < 1e-12);
    // Anti-diagonal cheaper.
    let c = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    assert!(exact_ot(&c, &[0.5, 0.5], &[0.5, 0.5]).abs() < 1e-12);
    // 2x2 with unequal marginals: a=(0.7,0.3), b=(0.4,0.6), cost favours (0,1) and (1,0).
    // Best: x01 = 0.6, x10 = 0.3, x00 = 0.1 → 0.1·1 = 0.1.
    let c = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    assert!((exact_ot(&c, &[0.7, 0.3], &[0.4, 0.6]) - 0.1).abs() < 1e-12);
}
