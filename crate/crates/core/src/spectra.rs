//! Robin, frequency-c Steklov and Dirichlet spectra of assembled operators.
//!
//! * Robin: `(S − σB)u = λMu`, `uᵀMu = 1`.
//! * Frequency-c Steklov: `(S − cM)u = θBu`, `uᵀBu = 1`, solved on the
//!   boundary through the Schur complement of `P = S − cM`.
//! * Dirichlet: `S_II u = λ M_II u` on interior vertices.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::OperatorSet;
use crate::error::{Error, Result};
use crate::linalg::{
    dense_generalized, dot, lowest_eigenpairs, lowest_eigenpairs_from, norm, CsrMatrix, EigenPairs, EnvelopeLdlt, KrylovOptions,
    ShiftInvertPencil,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Robin { sigma: f64 },
    FreqSteklov { c: f64 },
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `uᵀMu = 1`.
    Mass,
    /// `uᵀBu = 1`.
    BoundaryMass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub problem: ProblemKind,
    pub normalization: Normalization,
    pub eigenvalues: Vec<f64>,
    /// Full per-vertex vectors (zero on the boundary for Dirichlet spectra).
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub clusters: Vec<Vec<usize>>,
    pub residuals: Vec<f64>,
}

impl Spectrum {
    pub fn cluster_of(&self, index: usize) -> &[usize] {
        self.clusters
            .iter()
            .find(|c| c.contains(&index))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Error unless `index` is a singleton cluster.
    pub fn require_simple(&self, index: usize) -> Result<()> {
        let cluster = self.cluster_of(index);
        if cluster.len() > 1 {
            return Err(Error::ClusteredEigenvalue {
                index,
                cluster: cluster.to_vec(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative residual target for iterative solves.
    pub tolerance: f64,
    /// Relative gap below which neighbouring eigenvalues share a cluster.
    pub cluster_rel_gap: f64,
    /// Largest boundary DOF count for which the Schur complement is formed densely.
    pub dense_boundary_limit: usize,
    pub admissibility: AdmissibilityOptions,
    /// Run the admissibility check before frequency-c Steklov solves with `c > 0`.
    pub check_admissibility: bool,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            cluster_rel_gap: 1e-4,
            dense_boundary_limit: 2000,
            admissibility: AdmissibilityOptions::default(),
            check_admissibility: true,
            seed: 0x5eed,
        }
    }
}

struct SparsePencil {
    a: CsrMatrix,
    b: CsrMatrix,
    factor: EnvelopeLdlt,
}

impl ShiftInvertPencil for SparsePencil {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        self.a.mul_vec_into(x, y)
    }
    fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        self.b.mul_vec_into(x, y)
    }
    fn solve_shifted(&self, x: &[f64], y: &mut [f64]) {
        self.factor.solve_into(x, y)
    }
}

fn krylov(count: usize, opts: &SolverOptions) -> KrylovOptions {
    let mut k = KrylovOptions::new(count);
    k.tolerance = opts.tolerance;
    k.seed = opts.seed;
    k
}

/// Factor `a − μb` for the first `μ` in the decreasing sequence starting at
/// `start` for which the factorization has no negative pivots beyond
/// `allowed_negative`, i.e. `μ` lies strictly below the wanted spectrum.
fn safe_shift(
    a: &CsrMatrix,
    b: &CsrMatrix,
    start: f64,
    allowed_negative: usize,
) -> Result<(f64, EnvelopeLdlt)> {
    let mut mu = start;
    for _ in 0..80 {
        match EnvelopeLdlt::factor(&a.linear_combination(1.0, b, -mu)) {
            Ok(f) if f.inertia().negative <= allowed_negative => return Ok((mu, f)),
            _ => mu = 2.0 * mu - 1.0,
        }
    }
    Err(Error::NoConvergence {
        iterations: 80,
        residual: f64::NAN,
    })
}

/// Lowest eigenpairs of `(a, b)` by shift-invert from a shift below the
/// spectrum. When convergence is slow the shift is moved up towards the
/// lowest Ritz value (staying below the spectrum, as certified by inertia)
/// and the iteration is warm-started from the current Ritz block.
fn lowest_below(a: CsrMatrix, b: CsrMatrix, start: f64, count: usize, opts: &SolverOptions) -> Result<EigenPairs> {
    let (mut mu, factor) = safe_shift(&a, &b, start, 0)?;
    let mut pencil = SparsePencil { a, b, factor };
    let full = krylov(count, opts);
    let mut phase = full.clone();
    phase.max_restarts = 12;
    let mut warm: Option<Vec<Vec<f64>>> = None;
    for _ in 0..4 {
        let (pairs, converged) = lowest_eigenpairs_from(&pencil, &phase, warm.as_deref())?;
        if converged {
            return Ok(pairs);
        }
        let lowest = pairs.values[0];
        let spread = (pairs.values[pairs.values.len() - 1] - lowest).max(1e-3 * (1.0 + lowest.abs()));
        let mut candidate = lowest - 0.25 * spread;
        let mut moved = false;
        for _ in 0..6 {
            if candidate <= mu {
                break;
            }
            match EnvelopeLdlt::factor(&pencil.a.linear_combination(1.0, &pencil.b, -candidate)) {
                Ok(f) if f.inertia().negative == 0 => {
                    pencil.factor = f;
                    mu = candidate;
                    moved = true;
                    break;
                }
                _ => candidate = 0.5 * (candidate + mu),
            }
        }
        warm = Some(pairs.vectors);
        if !moved {
            break;
        }
    }
    match lowest_eigenpairs_from(&pencil, &full, warm.as_deref())? {
        (pairs, true) => Ok(pairs),
        (pairs, false) => Err(Error::NoConvergence {
            iterations: full.max_restarts,
            residual: pairs.residuals[..count].iter().fold(0.0, |m: f64, &r| m.max(r)),
        }),
    }
}

pub fn robin_spectrum(ops: &OperatorSet, sigma: f64, count: usize) -> Result<Spectrum> {
    robin_spectrum_with(ops, sigma, count, &SolverOptions::default())
}

pub fn robin_spectrum_with(ops: &OperatorSet, sigma: f64, count: usize, opts: &SolverOptions) -> Result<Spectrum> {
    let n = ops.vertex_count();
    check_count(count, n)?;
    let a = ops.stiffness.linear_combination(1.0, &ops.boundary_mass, -sigma);
    let estimate = -(sigma.abs() * ops.boundary_length / ops.area + 1.0);
    let pairs = lowest_below(a, ops.mass.clone(), estimate * 1.1, count, opts)?;
    Ok(finish(
        ProblemKind::Robin { sigma },
        Normalization::Mass,
        pairs,
        opts,
    ))
}

pub fn dirichlet_spectrum(ops: &OperatorSet, count: usize) -> Result<Spectrum> {
    dirichlet_spectrum_with(ops, count, &SolverOptions::default())
}

pub fn dirichlet_spectrum_with(ops: &OperatorSet, count: usize, opts: &SolverOptions) -> Result<Spectrum> {
    let interior = &ops.interior_vertices;
    if interior.is_empty() {
        return Err(Error::InvalidMesh("mesh has no interior vertices".into()));
    }
    check_count(count, interior.len())?;
    let (pairs, _) = interior_pairs(ops, &ops.mass, count, opts)?;
    let n = ops.vertex_count();
    let vectors = pairs
        .vectors
        .iter()
        .map(|v| {
            let mut full = vec![0.0; n];
            for (&i, &x) in interior.iter().zip(v) {
                full[i] = x;
            }
            full
        })
        .collect();
    let pairs = EigenPairs { vectors, ..pairs };
    Ok(finish(ProblemKind::Dirichlet, Normalization::Mass, pairs, opts))
}

/// Lowest eigenpairs of `(S_II, W_II)` for the given interior mass `w`.
fn interior_pairs(
    ops: &OperatorSet,
    w: &CsrMatrix,
    count: usize,
    opts: &SolverOptions,
) -> Result<(EigenPairs, CsrMatrix)> {
    let interior = &ops.interior_vertices;
    let a = ops.stiffness.submatrix(interior, interior);
    let b = w.submatrix(interior, interior);
    let pairs = lowest_below(a, b.clone(), 0.0, count, opts)?;
    Ok((pairs, b))
}

pub fn freq_steklov_spectrum(ops: &OperatorSet, c: f64, count: usize) -> Result<Spectrum> {
    freq_steklov_spectrum_with(ops, c, count, &SolverOptions::default())
}

pub fn freq_steklov_spectrum_with(ops: &OperatorSet, c: f64, count: usize, opts: &SolverOptions) -> Result<Spectrum> {
    let nb = ops.boundary_index_map.len();
    check_count(count, nb)?;
    if opts.check_admissibility && c > 0.0 && !ops.interior_vertices.is_empty() {
        if let Admissibility::Inadmissible { nearest, .. } = admissibility_check_with(ops, c, &opts.admissibility)? {
            return Err(Error::Inadmissible { c, nearest });
        }
    }
    let reduced = if nb <= opts.dense_boundary_limit {
        dense_boundary_pairs(ops, c, count)?
    } else {
        implicit_boundary_pairs(ops, c, count, opts)?
    };
    let pairs = extend_from_boundary(ops, c, reduced)?;
    Ok(finish(
        ProblemKind::FreqSteklov { c },
        Normalization::BoundaryMass,
        pairs,
        opts,
    ))
}

/// Boundary eigenpairs `(values, boundary vectors)`.
struct BoundaryPairs {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    restarts: usize,
}

struct Blocks {
    p_ii: CsrMatrix,
    p_ib: CsrMatrix,
    p_bb: CsrMatrix,
    b_bb: CsrMatrix,
}

fn blocks(ops: &OperatorSet, c: f64) -> Blocks {
    let p = crate::assembly::shifted_pencil(ops, c);
    let (bd, int) = (&ops.boundary_index_map, &ops.interior_vertices);
    Blocks {
        p_ii: p.submatrix(int, int),
        p_ib: p.submatrix(int, bd),
        p_bb: p.submatrix(bd, bd),
        b_bb: ops.boundary_mass.submatrix(bd, bd),
    }
}

fn factor_interior(p_ii: &CsrMatrix, c: f64) -> Result<EnvelopeLdlt> {
    EnvelopeLdlt::factor(p_ii).map_err(|_| Error::Inadmissible { c, nearest: c })
}

/// Dense Schur complement `P_bb − P_bi P_ii⁻¹ P_ib` and its full generalized
/// eigendecomposition against `B_bb`.
fn dense_boundary_pairs(ops: &OperatorSet, c: f64, count: usize) -> Result<BoundaryPairs> {
    let nb = ops.boundary_index_map.len();
    let bl = blocks(ops, c);
    let mut schur = bl.p_bb.to_dense();
    if !ops.interior_vertices.is_empty() {
        let f = factor_interior(&bl.p_ii, c)?;
        let p_bi = transpose(&bl.p_ib);
        let ni = ops.interior_vertices.len();
        let columns: Vec<Vec<f64>> = (0..nb)
            .into_par_iter()
            .map(|j| {
                let mut rhs = vec![0.0; ni];
                for (i, v) in column(&p_bi, j) {
                    rhs[i] = v;
                }
                let x = f.solve(&rhs);
                (0..nb).map(|a| row_dot(&p_bi, a, &x)).collect()
            })
            .collect();
        for (j, col) in columns.iter().enumerate() {
            for a in 0..nb {
                schur[(a, j)] -= col[a];
            }
        }
        schur = (&schur + schur.transpose()) * 0.5;
    }
    let (values, vecs) = dense_generalized(&schur, &bl.b_bb.to_dense())?;
    Ok(BoundaryPairs {
        values: values[..count].to_vec(),
        vectors: (0..count).map(|k| vecs.column(k).iter().copied().collect()).collect(),
        restarts: 0,
    })
}

fn transpose(m: &CsrMatrix) -> CsrMatrix {
    CsrMatrix::from_triplets(m.ncols(), m.nrows(), m.iter().map(|(i, j, v)| (j, i, v)).collect())
}

/// Entries of row `j` of `m` (used as a column of the transpose).
fn column(m: &CsrMatrix, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let (idx, vals) = m.row(j);
    idx.iter().copied().zip(vals.iter().copied())
}

fn row_dot(m: &CsrMatrix, a: usize, x: &[f64]) -> f64 {
    let (idx, vals) = m.row(a);
    idx.iter().zip(vals).map(|(&i, &v)| v * x[i]).sum()
}

/// Schur complement applied implicitly; shift-invert uses the boundary block
/// of `(P − μB)⁻¹`, whose inverse is `D − μB_bb` by block elimination.
struct ImplicitSchur {
    p: CsrMatrix,
    p_ii: EnvelopeLdlt,
    p_ib: CsrMatrix,
    p_bi: CsrMatrix,
    p_bb: CsrMatrix,
    b_bb: CsrMatrix,
    shifted: EnvelopeLdlt,
    boundary: Vec<usize>,
}

impl ShiftInvertPencil for ImplicitSchur {
    fn dim(&self) -> usize {
        self.boundary.len()
    }
    fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        let w = self.p_ib.mul_vec(x);
        let z = self.p_ii.solve(&w);
        self.p_bb.mul_vec_into(x, y);
        let corr = self.p_bi.mul_vec(&z);
        for (yi, ci) in y.iter_mut().zip(corr) {
            *yi -= ci;
        }
    }
    fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        self.b_bb.mul_vec_into(x, y)
    }
    fn solve_shifted(&self, x: &[f64], y: &mut [f64]) {
        let mut full = vec![0.0; self.p.nrows()];
        for (&v, &xi) in self.boundary.iter().zip(x) {
            full[v] = xi;
        }
        let sol = self.shifted.solve(&full);
        for (yi, &v) in y.iter_mut().zip(&self.boundary) {
            *yi = sol[v];
        }
    }
}

fn implicit_boundary_pairs(ops: &OperatorSet, c: f64, count: usize, opts: &SolverOptions) -> Result<BoundaryPairs> {
    let bl = blocks(ops, c);
    let p = crate::assembly::shifted_pencil(ops, c);
    let p_ii = factor_interior(&bl.p_ii, c)?;
    let interior_negative = p_ii.inertia().negative;
    let (_, shifted) = safe_shift(&p, &ops.boundary_mass, -1.0, interior_negative)?;
    let pencil = ImplicitSchur {
        p,
        p_ii,
        p_bi: transpose(&bl.p_ib),
        p_ib: bl.p_ib,
        p_bb: bl.p_bb,
        b_bb: bl.b_bb,
        shifted,
        boundary: ops.boundary_index_map.clone(),
    };
    let pairs = lowest_eigenpairs(&pencil, &krylov(count, opts))?;
    Ok(BoundaryPairs {
        values: pairs.values,
        vectors: pairs.vectors,
        restarts: pairs.restarts,
    })
}

/// Full vectors `u_b = û`, `u_i = −P_ii⁻¹P_ib û` with residuals on the full pencil.
fn extend_from_boundary(ops: &OperatorSet, c: f64, reduced: BoundaryPairs) -> Result<EigenPairs> {
    let n = ops.vertex_count();
    let bl = blocks(ops, c);
    let f = if ops.interior_vertices.is_empty() {
        None
    } else {
        Some(factor_interior(&bl.p_ii, c)?)
    };
    let p = crate::assembly::shifted_pencil(ops, c);
    let mut vectors = Vec::with_capacity(reduced.values.len());
    let mut residuals = Vec::with_capacity(reduced.values.len());
    for (theta, ub) in reduced.values.iter().zip(&reduced.vectors) {
        let mut u = vec![0.0; n];
        for (&v, &x) in ops.boundary_index_map.iter().zip(ub) {
            u[v] = x;
        }
        if let Some(f) = &f {
            let ui = f.solve(&bl.p_ib.mul_vec(ub));
            for (&v, &x) in ops.interior_vertices.iter().zip(&ui) {
                u[v] = -x;
            }
        }
        let pu = p.mul_vec(&u);
        let bu = ops.boundary_mass.mul_vec(&u);
        let r: Vec<f64> = pu.iter().zip(&bu).map(|(a, b)| a - theta * b).collect();
        let scale = norm(&pu) + theta.abs() * norm(&bu);
        residuals.push(if scale > 0.0 { norm(&r) / scale } else { norm(&r) });
        vectors.push(u);
    }
    Ok(EigenPairs {
        values: reduced.values,
        vectors,
        residuals,
        restarts: reduced.restarts,
    })
}

fn check_count(count: usize, available: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::OutOfRange("eigenvalue count must be at least 1".into()));
    }
    if count > available {
        return Err(Error::CountTooLarge {
            requested: count,
            available,
        });
    }
    Ok(())
}

fn finish(
    problem: ProblemKind,
    normalization: Normalization,
    pairs: EigenPairs,
    opts: &SolverOptions,
) -> Spectrum {
    let clusters = cluster_multiplicities(&pairs.values, opts.cluster_rel_gap);
    let mut vectors = pairs.vectors;
    for cluster in &clusters {
        canonicalize_cluster(&mut vectors, cluster);
    }
    Spectrum {
        problem,
        normalization,
        eigenvalues: pairs.values,
        eigenvectors: vectors,
        clusters,
        residuals: pairs.residuals,
    }
}

/// Consecutive eigenvalues share a cluster iff their gap is below
/// `rel_gap·(1 + |value|)`.
pub fn cluster_multiplicities(values: &[f64], rel_gap: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(last) if (v - values[i - 1]).abs() < rel_gap * (1.0 + v.abs()) => last.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters
}

/// Replaces the vectors of a cluster by a basis determined by their span
/// alone: repeatedly take the unit vector of the remaining subspace with the
/// largest value at the row where the subspace is largest, sign fixed so that
/// entry is positive. `W`-orthonormality is preserved.
fn canonicalize_cluster(vectors: &mut [Vec<f64>], cluster: &[usize]) {
    let k = cluster.len();
    let n = vectors[cluster[0]].len();
    // Coefficient-space basis of the remaining subspace (columns).
    let mut q = DMatrix::<f64>::identity(k, k);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let r = q.ncols();
        // Rows of V·Q.
        let row = |i: usize| -> Vec<f64> {
            (0..r)
                .map(|col| (0..k).map(|a| vectors[cluster[a]][i] * q[(a, col)]).sum())
                .collect()
        };
        let mut best = (0usize, -1.0f64);
        for i in 0..n {
            let nr = norm(&row(i));
            if nr > best.1 * (1.0 + 1e-9) {
                best = (i, nr);
            }
        }
        let ri = row(best.0);
        let nr = norm(&ri).max(f64::MIN_POSITIVE);
        let dir: Vec<f64> = ri.iter().map(|x| x / nr).collect();
        let coeff: Vec<f64> = (0..k).map(|a| (0..r).map(|col| q[(a, col)] * dir[col]).sum()).collect();
        let mut v = vec![0.0; n];
        for (a, &ca) in coeff.iter().enumerate() {
            crate::linalg::axpy(ca, &vectors[cluster[a]], &mut v);
        }
        out.push(v);
        // Orthonormal complement of `dir` within R^r, mapped through Q.
        if r > 1 {
            let mut comp: Vec<Vec<f64>> = Vec::with_capacity(r - 1);
            let mut cands: Vec<Vec<f64>> = (0..r)
                .map(|e| {
                    let mut x = vec![0.0; r];
                    x[e] = 1.0;
                    let d = dir[e];
                    for (xi, di) in x.iter_mut().zip(&dir) {
                        *xi -= d * di;
                    }
                    x
                })
                .collect();
            while comp.len() < r - 1 {
                for x in cands.iter_mut() {
                    for b in &comp {
                        let d = dot(x, b);
                        for (xi, bi) in x.iter_mut().zip(b) {
                            *xi -= d * bi;
                        }
                    }
                }
                let (idx, _) = cands
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (i, norm(x)))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .unwrap();
                let x = cands.remove(idx);
                let nx = norm(&x);
                comp.push(x.iter().map(|v| v / nx).collect());
            }
            let mut nq = DMatrix::zeros(k, r - 1);
            for (col, b) in comp.iter().enumerate() {
                for a in 0..k {
                    nq[(a, col)] = (0..r).map(|c2| q[(a, c2)] * b[c2]).sum();
                }
            }
            q = nq;
        }
    }
    for (a, v) in out.into_iter().enumerate() {
        vectors[cluster[a]] = v;
    }
}

#[derive(Debug, Clone)]
pub struct AdmissibilityOptions {
    /// Relative tolerance on `|λᴰ − c| / max(1, |c|)`.
    pub tolerance: f64,
    /// Also flag `c` when it lies within the consistent/lumped discretization
    /// spread of the nearest discrete Dirichlet eigenvalue.
    pub discretization_band: bool,
}

impl Default for AdmissibilityOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            discretization_band: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Admissibility {
    Admissible {
        /// Distance to the nearest Dirichlet eigenvalue (infinite if none).
        margin: f64,
        nearest: Option<f64>,
        band: f64,
    },
    Inadmissible {
        nearest: f64,
        margin: f64,
        band: f64,
    },
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Admissibility::Admissible { .. })
    }

    pub fn margin(&self) -> f64 {
        match self {
            Admissibility::Admissible { margin, .. } | Admissibility::Inadmissible { margin, .. } => *margin,
        }
    }
}

pub fn admissibility_check(ops: &OperatorSet, c: f64) -> Result<Admissibility> {
    admissibility_check_with(ops, c, &AdmissibilityOptions::default())
}

/// Is `c` a Dirichlet eigenvalue (up to tolerance)? Eigenvalues below `c`
/// are counted from the inertia of `S_II − cM_II`, and enough of the lowest
/// Dirichlet eigenvalues are computed to bracket `c`.
pub fn admissibility_check_with(ops: &OperatorSet, c: f64, opts: &AdmissibilityOptions) -> Result<Admissibility> {
    let interior = &ops.interior_vertices;
    if interior.is_empty() {
        return Ok(Admissibility::Admissible {
            margin: f64::INFINITY,
            nearest: None,
            band: 0.0,
        });
    }
    let scale = c.abs().max(1.0);
    let s_ii = ops.stiffness.submatrix(interior, interior);
    let m_ii = ops.mass.submatrix(interior, interior);
    let below = if c <= 0.0 {
        0
    } else {
        match EnvelopeLdlt::factor(&s_ii.linear_combination(1.0, &m_ii, -c)) {
            Ok(f) => f.inertia().negative,
            Err(_) => {
                return Ok(Admissibility::Inadmissible {
                    nearest: c,
                    margin: 0.0,
                    band: 0.0,
                })
            }
        }
    };
    let count = (below + 1).min(interior.len());
    let sopts = SolverOptions::default();
    let (pairs, _) = interior_pairs(ops, &ops.mass, count, &sopts)?;
    let (idx, nearest) = pairs
        .values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| (a.1 - c).abs().total_cmp(&(b.1 - c).abs()))
        .unwrap();
    let dist = (nearest - c).abs();
    let band = if opts.discretization_band {
        let lumped = CsrMatrix::from_diagonal(&ops.mass.row_sums());
        let alt = if lumped_equal(&lumped, &ops.mass) {
            None
        } else {
            Some(lumped)
        };
        match alt {
            Some(m) => {
                let (alt_pairs, _) = interior_pairs(ops, &m, idx + 1, &sopts)?;
                (alt_pairs.values[idx] - nearest).abs()
            }
            None => 0.0,
        }
    } else {
        0.0
    };
    let margin = dist / scale;
    if margin < opts.tolerance || dist < band {
        Ok(Admissibility::Inadmissible { nearest, margin, band })
    } else {
        Ok(Admissibility::Admissible {
            margin,
            nearest: Some(nearest),
            band,
        })
    }
}

fn lumped_equal(a: &CsrMatrix, b: &CsrMatrix) -> bool {
    a.nnz() == b.nnz() && a.iter().zip(b.iter()).all(|(x, y)| x == y)
}
