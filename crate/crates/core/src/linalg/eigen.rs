//! Lowest eigenpairs of a symmetric-definite pencil `A x = λ B x` by
//! restarted block Krylov iteration on the shift-inverted operator
//! `(A − μB)⁻¹B`, with Rayleigh–Ritz extraction on the original pencil.
//!
//! The shift `μ` must lie below the wanted part of the spectrum; callers check
//! this with the inertia of `A − μB`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sparse::{axpy, dot, norm};
use crate::error::{Error, Result};

pub trait ShiftInvertPencil {
    fn dim(&self) -> usize;
    fn apply_a(&self, x: &[f64], y: &mut [f64]);
    fn apply_b(&self, x: &[f64], y: &mut [f64]);
    /// `y = (A − μB)⁻¹ x`.
    fn solve_shifted(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct KrylovOptions {
    pub count: usize,
    pub tolerance: f64,
    /// Residual accepted once restarts stagnate (round-off floor).
    pub stall_tolerance: f64,
    pub max_restarts: usize,
    pub guard: usize,
    pub max_basis: usize,
    pub seed: u64,
}

impl KrylovOptions {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            tolerance: 1e-11,
            stall_tolerance: 1e-7,
            max_restarts: 60,
            guard: 4,
            max_basis: 0,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `B`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub restarts: usize,
}

pub fn lowest_eigenpairs(pencil: &dyn ShiftInvertPencil, opts: &KrylovOptions) -> Result<EigenPairs> {
    match lowest_eigenpairs_from(pencil, opts, None)? {
        (pairs, true) => Ok(pairs),
        (pairs, false) => Err(Error::NoConvergence {
            iterations: opts.max_restarts,
            residual: pairs.residuals[..opts.count].iter().fold(0.0, |m: f64, &r| m.max(r)),
        }),
    }
}

/// Like [`lowest_eigenpairs`], optionally warm-started from `start`; on
/// running out of restarts returns the current Ritz block (including the
/// guard vectors) with `false` instead of failing.
pub fn lowest_eigenpairs_from(
    pencil: &dyn ShiftInvertPencil,
    opts: &KrylovOptions,
    start: Option<&[Vec<f64>]>,
) -> Result<(EigenPairs, bool)> {
    let n = pencil.dim();
    if opts.count == 0 {
        return Ok((
            EigenPairs {
                values: vec![],
                vectors: vec![],
                residuals: vec![],
                restarts: 0,
            },
            true,
        ));
    }
    if opts.count > n {
        return Err(Error::CountTooLarge {
            requested: opts.count,
            available: n,
        });
    }
    let block = (opts.count + opts.guard).min(n);
    let max_basis = if opts.max_basis > 0 {
        opts.max_basis
    } else {
        (4 * block).max(block + 40)
    }
    .min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<Vec<f64>> = (0..block)
        .map(|j| match start.and_then(|s| s.get(j)) {
            Some(v) if v.len() == n => v.clone(),
            _ => (0..n).map(|_| rng.gen::<f64>() - 0.5).collect(),
        })
        .collect();

    let mut worst = f64::INFINITY;
    let mut stalled = 0;
    for restart in 0..opts.max_restarts.max(1) {
        let (basis, b_basis) = krylov_basis(pencil, &start, max_basis);
        let k = basis.len();
        let mut a_basis = Vec::with_capacity(k);
        for v in &basis {
            let mut av = vec![0.0; n];
            pencil.apply_a(v, &mut av);
            a_basis.push(av);
        }
        let mut h = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let hij = 0.5 * (dot(&basis[i], &a_basis[j]) + dot(&basis[j], &a_basis[i]));
                h[(i, j)] = hij;
                h[(j, i)] = hij;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let spread = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep = block.min(k);
        let mut values = Vec::with_capacity(keep);
        let mut vectors = Vec::with_capacity(keep);
        let mut residuals = Vec::with_capacity(keep);
        for &idx in order.iter().take(keep) {
            let theta = eig.eigenvalues[idx];
            let z = eig.eigenvectors.column(idx);
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            let mut by = vec![0.0; n];
            for c in 0..k {
                axpy(z[c], &basis[c], &mut y);
                axpy(z[c], &a_basis[c], &mut ay);
                axpy(z[c], &b_basis[c], &mut by);
            }
            let scale = norm(&ay) + (theta.abs() + 1e-3 * spread) * norm(&by);
            let mut r = ay;
            axpy(-theta, &by, &mut r);
            let res = if scale > 0.0 { norm(&r) / scale } else { norm(&r) };
            values.push(theta);
            vectors.push(y);
            residuals.push(res);
        }
        let current = residuals[..opts.count].iter().fold(0.0, |m: f64, &r| m.max(r));
        // Round-off sets a floor on attainable residuals for badly graded
        // meshes; accept a small residual once restarts stop improving it.
        stalled = if current > 0.5 * worst { stalled + 1 } else { 0 };
        worst = worst.min(current);
        let floor_reached = stalled >= 4 && current <= opts.stall_tolerance;
        if current <= opts.tolerance || k == n || floor_reached {
            values.truncate(opts.count);
            vectors.truncate(opts.count);
            residuals.truncate(opts.count);
            return Ok((
                EigenPairs {
                    values,
                    vectors,
                    residuals,
                    restarts: restart,
                },
                true,
            ));
        }
        if restart + 1 == opts.max_restarts.max(1) {
            return Ok((
                EigenPairs {
                    values,
                    vectors,
                    residuals,
                    restarts: restart,
                },
                false,
            ));
        }
        start = vectors;
    }
    unreachable!("the final restart returns")
}

/// `B`-orthonormal basis of the block Krylov space generated by `start`,
/// together with `B` applied to each basis vector.
fn krylov_basis(
    pencil: &dyn ShiftInvertPencil,
    start: &[Vec<f64>],
    max_basis: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = pencil.dim();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut b_basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut block: Vec<Vec<f64>> = start.to_vec();
    while !block.is_empty() && basis.len() < max_basis {
        let mut added = Vec::new();
        for mut v in block.drain(..) {
            if basis.len() >= max_basis {
                break;
            }
            let mut bv = vec![0.0; n];
            pencil.apply_b(&v, &mut bv);
            let before = dot(&v, &bv).max(0.0).sqrt();
            if before == 0.0 {
                continue;
            }
            // Repeat Gram–Schmidt until a pass no longer cancels much of the
            // vector; what survives is orthogonal to working precision.
            let mut prev = before;
            let mut after = before;
            for _ in 0..5 {
                for (q, bq) in basis.iter().zip(&b_basis) {
                    let c = dot(bq, &v);
                    axpy(-c, q, &mut v);
                }
                pencil.apply_b(&v, &mut bv);
                after = dot(&v, &bv).max(0.0).sqrt();
                if after > 0.5 * prev {
                    break;
                }
                prev = after;
            }
            if after <= 1e-14 * before {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= after);
            bv.iter_mut().for_each(|x| *x /= after);
            basis.push(v);
            b_basis.push(bv);
            added.push(basis.len() - 1);
        }
        for idx in added {
            let mut w = vec![0.0; n];
            pencil.solve_shifted(&b_basis[idx], &mut w);
            block.push(w);
        }
    }
    (basis, b_basis)
}

/// Dense symmetric-definite generalized eigenproblem via Cholesky of `b`.
/// Returns ascending eigenvalues and `b`-orthonormal eigenvectors (columns).
pub fn dense_generalized(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let chol = b
        .clone()
        .cholesky()
        .ok_or(Error::Singular { row: 0, pivot: 0.0 })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { row: 0, pivot: 0.0 })?;
    let mut c = &l_inv * a * l_inv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    let back = l_inv.transpose();
    for (col, &i) in order.iter().enumerate() {
        let y = &back * eig.eigenvectors.column(i);
        vecs.set_column(col, &y);
    }
    Ok((values, vecs))
}
