//! Reference computations written independently of the library code paths.

#![allow(clippy::needless_range_loop)]

use imcid::Dataset;
use ndarray::{Array1, Array2};

pub fn phi(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gradient of the weighted smoothed risk for the order-2 Gaussian kernel,
/// summed term by term.
pub fn gaussian_gradient(
    data: &Dataset,
    w_plus: f64,
    w_minus: f64,
    beta: &Array1<f64>,
    delta: f64,
) -> Vec<f64> {
    let (n, d) = (data.n(), data.d());
    let mut g = vec![0.0; d];
    for i in 0..n {
        let yi = data.y()[i];
        let w = if yi > 0.0 { w_plus } else { w_minus };
        let mut m = data.x()[i];
        for j in 0..d {
            m -= beta[j] * data.z()[[i, j]];
        }
        let c = w * yi * phi(yi * m / delta) / delta;
        for j in 0..d {
            g[j] += c * data.z()[[i, j]];
        }
    }
    g.iter().map(|v| v / n as f64).collect()
}

/// Composite Simpson rule on `[a, b]` with `intervals` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

pub fn residual(h: &Array2<f64>, rhs: &Array1<f64>, w: &Array1<f64>) -> f64 {
    (rhs - &h.dot(w)).iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Minimum of `|w|_1` subject to `|rhs - H w|_inf <= lambda`, by enumerating
/// the vertices of the arrangement `{(H w)_i = rhs_i +- lambda} U {w_j = 0}`.
pub fn dantzig_vertex_optimum(h: &Array2<f64>, rhs: &Array1<f64>, lambda: f64) -> f64 {
    let m = rhs.len();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::with_capacity(3 * m);
    for i in 0..m {
        planes.push((h.row(i).to_vec(), rhs[i] - lambda));
        planes.push((h.row(i).to_vec(), rhs[i] + lambda));
    }
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let mut combos = Vec::new();
    combinations(planes.len(), m, 0, &mut Vec::new(), &mut combos);
    let mut best = f64::INFINITY;
    for combo in combos {
        let a = combo.iter().map(|&k| planes[k].0.clone()).collect();
        let b = combo.iter().map(|&k| planes[k].1).collect();
        if let Some(w) = gauss_solve(a, b) {
            let w = Array1::from(w);
            if residual(h, rhs, &w) <= lambda + 1e-9 {
                best = best.min(w.iter().map(|v| v.abs()).sum());
            }
        }
    }
    best
}
