//! Minimum-norm point of the convex hull of a finite point set (Wolfe's
//! algorithm), expressed through the Gram matrix of the points.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct MinNormPoint {
    /// Convex weights, one per input point.
    pub weights: Vec<f64>,
    /// Squared norm of the minimizer.
    pub norm_sq: f64,
}

pub fn min_norm_point(gram: &DMatrix<f64>) -> MinNormPoint {
    let n = gram.nrows();
    assert!(n > 0, "min_norm_point needs at least one point");
    let scale = (0..n).fold(0.0f64, |m, i| m.max(gram[(i, i)])).max(f64::MIN_POSITIVE);
    let eps = 1e-13 * scale;

    // Start from the shortest point.
    let start = (0..n)
        .min_by(|&a, &b| gram[(a, a)].total_cmp(&gram[(b, b)]))
        .unwrap();
    let mut set = vec![start];
    let mut lambda = vec![1.0];

    for _ in 0..(50 * n + 100) {
        // Inner products of the current point x with every input point.
        let xp: Vec<f64> = (0..n)
            .map(|j| set.iter().zip(&lambda).map(|(&s, &l)| l * gram[(s, j)]).sum())
            .collect();
        let xx: f64 = set.iter().zip(&lambda).map(|(&s, &l)| l * xp[s]).sum();
        let (j, xpj) = xp
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, &v)| (j, v))
            .unwrap();
        if xx - xpj <= eps.max(1e-12 * xx) || set.contains(&j) {
            break;
        }
        set.push(j);
        lambda.push(0.0);

        loop {
            let alpha = affine_minimizer(gram, &set);
            if alpha.iter().all(|&a| a > 1e-14) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-14 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let mut k = 0;
            while k < set.len() {
                if lambda[k] <= 1e-14 {
                    set.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            if set.len() <= 1 {
                break;
            }
        }
    }

    let mut weights = vec![0.0; n];
    for (&s, &l) in set.iter().zip(&lambda) {
        weights[s] = l;
    }
    let norm_sq = quad(gram, &weights).max(0.0);
    MinNormPoint { weights, norm_sq }
}

fn quad(gram: &DMatrix<f64>, w: &[f64]) -> f64 {
    let v = DVector::from_column_slice(w);
    (v.transpose() * gram * &v)[(0, 0)]
}

/// Minimizer of `‖Σ αᵢ pᵢ‖` subject to `Σ αᵢ = 1` over the points in `set`.
fn affine_minimizer(gram: &DMatrix<f64>, set: &[usize]) -> Vec<f64> {
    let k = set.len();
    let mut sys = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    let ridge = 1e-14 * set.iter().map(|&s| gram[(s, s)]).fold(0.0, f64::max);
    for (a, &i) in set.iter().enumerate() {
        for (b, &j) in set.iter().enumerate() {
            sys[(a, b)] = gram[(i, j)];
        }
        sys[(a, a)] += ridge;
        sys[(a, k)] = 1.0;
        sys[(k, a)] = 1.0;
    }
    rhs[k] = 1.0;
    match sys.lu().solve(&rhs) {
        Some(sol) => sol.iter().take(k).copied().collect(),
        None => vec![1.0 / k as f64; k],
    }
}

/// Gram matrix of a list of vectors.
pub fn gram_matrix(points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = super::sparse::dot(&points[i], &points[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `Σ wᵢ pᵢ`.
pub fn combine(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; points.first().map_or(0, |p| p.len())];
    for (p, &w) in points.iter().zip(weights) {
        if w != 0.0 {
            super::sparse::axpy(w, p, &mut out);
        }
    }
    out
}
