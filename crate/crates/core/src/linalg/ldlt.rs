//! Envelope (skyline) `LDLᵀ` factorization of sparse symmetric matrices.
//!
//! Rows are reordered with reverse Cuthill–McKee before factoring. No pivoting
//! is performed, so the factorization also applies to indefinite matrices as
//! long as no pivot vanishes; by Sylvester's law the signs of `D` give the
//! inertia of the input.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

#[derive(Debug, Clone)]
pub struct EnvelopeLdlt {
    n: usize,
    /// `perm[k]` = original index placed at position `k`.
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    /// Strict lower rows of `L` over the envelope, concatenated.
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl EnvelopeLdlt {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "factor needs a square matrix");
        let n = a.nrows();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }

        let mut first = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            let (cols, _) = a.row(p);
            first[k] = cols.iter().map(|&j| inv[j]).filter(|&c| c <= k).min().unwrap_or(k);
        }
        let mut row_start = vec![0usize; n + 1];
        for k in 0..n {
            row_start[k + 1] = row_start[k] + (k - first[k]);
        }
        let mut lower = vec![0.0; row_start[n]];
        let mut diag = vec![0.0; n];
        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(a.max_abs());
        let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);

        for k in 0..n {
            let p = perm[k];
            let f = first[k];
            let base = row_start[k];
            let (cols, vals) = a.row(p);
            let mut akk = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                let c = inv[j];
                if c < k {
                    lower[base + (c - f)] += v;
                } else if c == k {
                    akk += v;
                }
            }
            // Row k currently holds A[k, f..k]; turn it into (L D)[k, f..k].
            for j in f..k {
                let fj = first[j].max(f);
                let lj = row_start[j];
                let mut s = lower[base + (j - f)];
                if fj < j {
                    let row_k = &lower[base + (fj - f)..base + (j - f)];
                    let row_j = &lower[lj + (fj - first[j])..lj + (j - first[j])];
                    s -= row_k.iter().zip(row_j).map(|(x, y)| x * y).sum::<f64>();
                }
                lower[base + (j - f)] = s;
            }
            let mut d = akk;
            for j in f..k {
                let u = lower[base + (j - f)];
                let l = u / diag[j];
                d -= u * l;
                lower[base + (j - f)] = l;
            }
            if !d.is_finite() || d.abs() <= tiny {
                return Err(Error::Singular { row: p, pivot: d });
            }
            diag[k] = d;
        }
        Ok(Self {
            n,
            perm,
            first,
            row_start,
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        for &d in &self.diag {
            if d < 0.0 {
                out.negative += 1;
            } else if d > 0.0 {
                out.positive += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()))
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let f = self.first[k];
            let row = &self.lower[self.row_start[k]..self.row_start[k + 1]];
            let s: f64 = row.iter().zip(&y[f..k]).map(|(l, v)| l * v).sum();
            y[k] -= s;
        }
        for k in 0..n {
            y[k] /= self.diag[k];
        }
        for k in (0..n).rev() {
            let f = self.first[k];
            let yk = y[k];
            let row = &self.lower[self.row_start[k]..self.row_start[k + 1]];
            for (l, v) in row.iter().zip(&mut y[f..k]) {
                *v -= l * yk;
            }
        }
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }
}

/// Reverse Cuthill–McKee ordering of the adjacency graph of `a`, started from
/// a pseudo-peripheral vertex of every connected component.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize) -> usize {
    let mut v = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, e) = bfs_farthest(a, v);
        if e <= ecc {
            break;
        }
        ecc = e;
        v = far;
    }
    v
}

fn bfs_farthest(a: &CsrMatrix, start: usize) -> (usize, usize) {
    let n = a.nrows();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    dist[start] = 0;
    queue.push_back(start);
    let mut best = (start, 0usize);
    while let Some(v) = queue.pop_front() {
        let d = dist[v];
        if d > best.1 || (d == best.1 && a.row(v).0.len() < a.row(best.0).0.len()) {
            best = (v, d);
        }
        for &w in a.row(v).0 {
            if dist[w] == usize::MAX {
                dist[w] = d + 1;
                queue.push_back(w);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 - shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn solves_spd_system() {
        let a = laplacian_1d(30, 0.0);
        let x_true: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x_true);
        let f = EnvelopeLdlt::factor(&a).unwrap();
        let x = f.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
        assert_eq!(f.inertia().negative, 0);
    }

    #[test]
    fn inertia_counts_eigenvalues_below_shift() {
        // Eigenvalues of the Dirichlet 1D Laplacian: 2 − 2cos(kπ/(n+1)).
        let n = 20;
        let shift = 0.95;
        let expected = (1..=n)
            .filter(|&k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos() < shift)
            .count();
        let f = EnvelopeLdlt::factor(&laplacian_1d(n, shift)).unwrap();
        assert_eq!(f.inertia().negative, expected);
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = f.solve(&b);
        let r = laplacian_1d(n, shift).mul_vec(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(EnvelopeLdlt::factor(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(17, 0.0);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }
}
