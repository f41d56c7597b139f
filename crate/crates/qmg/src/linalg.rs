//! Dense spectral primitives shared by every module.
//!
//! All operator norms, singular data, ranks, and kernels are computed from
//! Hermitian eigendecompositions: either of the matrix itself (when it is
//! Hermitian) or of the Gram matrix `MᴴM` / `MMᴴ` (general case).  This keeps
//! the numerics on one well-conditioned code path and makes every derived
//! vector deterministic after an explicit phase normalization.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Relative tolerance used when classifying a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative tolerance on singular values used for rank / kernel decisions.
pub const RANK_TOL: f64 = 1e-9;

/// `tr(m)`.
pub fn trace(m: &DMatrix<C64>) -> C64 {
    m.diagonal().iter().sum()
}

/// Frobenius (Hilbert-Schmidt) inner product `tr(aᴴ b)`.
pub fn frobenius_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `(m + mᴴ)/2`.
pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Whether `m` is Hermitian within `tol·max(1, ‖m‖_F)`.
pub fn is_hermitian(m: &DMatrix<C64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = 1.0_f64.max(m.norm());
    (m - m.adjoint()).norm() <= tol * scale
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted in
/// descending order, each eigenvector phase-fixed so its largest-modulus
/// component (lowest index on ties) is real and positive.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    assert!(m.is_square(), "hermitian_eigen needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let decomp = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        decomp.eigenvalues[j]
            .partial_cmp(&decomp.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (slot, &idx) in order.iter().enumerate() {
        values.push(decomp.eigenvalues[idx]);
        let mut col: DVector<C64> = decomp.eigenvectors.column(idx).into_owned();
        fix_phase(&mut col);
        vectors.set_column(slot, &col);
    }
    (values, vectors)
}

/// Rotate `v` by a unit phase so its largest-modulus entry (lowest index on
/// ties) becomes real and positive.  Leaves the zero vector untouched.
pub fn fix_phase(v: &mut DVector<C64>) {
    let mut best = 0usize;
    let mut best_mod = 0.0f64;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mod + 1e-15 {
            best_mod = m;
            best = i;
        }
    }
    if best_mod > 0.0 {
        let phase = v[best].conj() / best_mod;
        *v *= phase;
    }
}

/// Operator (spectral) norm of a Hermitian matrix: `max |λ|`.
pub fn op_norm_hermitian(m: &DMatrix<C64>) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    vals.iter().fold(0.0, |acc, &l| acc.max(l.abs()))
}

/// Operator norm of an arbitrary (possibly rectangular) matrix.
///
/// Hermitian inputs go through their own eigenvalues; everything else through
/// the largest eigenvalue of the smaller Gram matrix.
pub fn op_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if is_hermitian(m, HERMITIAN_TOL) {
        return op_norm_hermitian(m);
    }
    let gram = if m.ncols() <= m.nrows() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    let (vals, _) = hermitian_eigen(&gram);
    vals.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Largest singular value with its left/right singular vectors `(σ, u, v)`,
/// `σ u = M v`.  Deterministic: the eigenvector of the smaller Gram matrix is
/// phase-fixed and the partner vector is derived from it.
pub fn top_singular_triplet(m: &DMatrix<C64>) -> (f64, DVector<C64>, DVector<C64>) {
    let (rows, cols) = m.shape();
    assert!(rows > 0 && cols > 0, "top_singular_triplet on empty matrix");
    if cols <= rows {
        let (vals, vecs) = hermitian_eigen(&(m.adjoint() * m));
        let sigma = vals[0].max(0.0).sqrt();
        let v: DVector<C64> = vecs.column(0).into_owned();
        let u = if sigma > 1e-14 {
            (m * &v) / C64::new(sigma, 0.0)
        } else {
            let mut u = DVector::zeros(rows);
            u[0] = C64::new(1.0, 0.0);
            u
        };
        (sigma, u, v)
    } else {
        let (vals, vecs) = hermitian_eigen(&(m * m.adjoint()));
        let sigma = vals[0].max(0.0).sqrt();
        let u: DVector<C64> = vecs.column(0).into_owned();
        let v = if sigma > 1e-14 {
            (m.adjoint() * &u) / C64::new(sigma, 0.0)
        } else {
            let mut v = DVector::zeros(cols);
            v[0] = C64::new(1.0, 0.0);
            v
        };
        (sigma, u, v)
    }
}

/// All singular values of `m`, descending, computed through the Hermitian
/// embedding `[[0, M], [Mᴴ, 0]]` whose spectrum is `{±σ_i} ∪ {0}`.
///
/// Unlike the Gram-matrix route this resolves small singular values with
/// absolute accuracy on the order of `ε·σ_max` (no square root of noise), so
/// rank and kernel cutoffs behave as expected.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Vec::new();
    }
    let n = r + c;
    let mut h = DMatrix::zeros(n, n);
    h.view_mut((0, r), (r, c)).copy_from(m);
    h.view_mut((r, 0), (c, r)).copy_from(&m.adjoint());
    let (vals, _) = hermitian_eigen(&h);
    // Eigenvalues come sorted descending; the top min(r, c) are the σ_i.
    vals.into_iter().take(r.min(c)).map(|l| l.max(0.0)).collect()
}

/// Numerical rank of `m`: singular values above `RANK_TOL · max(1, σ_max)`.
pub fn rank(m: &DMatrix<C64>) -> usize {
    let s = singular_values(m);
    let cutoff = RANK_TOL * 1.0f64.max(s.first().copied().unwrap_or(0.0));
    s.iter().filter(|&&x| x > cutoff).count()
}

/// Orthonormal basis of the (numerical) kernel of `m`.
///
/// The kernel dimension is decided from the accurate singular values of
/// [`singular_values`]; the vectors themselves are the corresponding
/// bottom eigenvectors of `mᴴm`.
pub fn kernel_basis(m: &DMatrix<C64>) -> Vec<DVector<C64>> {
    let cols = m.ncols();
    if cols == 0 {
        return Vec::new();
    }
    if m.nrows() == 0 {
        return (0..cols)
            .map(|i| {
                let mut v = DVector::zeros(cols);
                v[i] = C64::new(1.0, 0.0);
                v
            })
            .collect();
    }
    let s = singular_values(m);
    let cutoff = RANK_TOL * 1.0f64.max(s.first().copied().unwrap_or(0.0));
    let nullity = cols - s.iter().filter(|&&x| x > cutoff).count();
    if nullity == 0 {
        return Vec::new();
    }
    let (_, vecs) = hermitian_eigen(&(m.adjoint() * m));
    (0..nullity)
        .map(|k| vecs.column(cols - 1 - k).into_owned())
        .collect()
}

/// Realification of a complex matrix: the real `2r × 2c` block matrix
/// `[[Re, −Im], [Im, Re]]`, an isometry for the operator and Frobenius norms.
pub fn realify(m: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Positive-semidefinite square root: eigenvalues clamped at zero, then
/// square-rooted in the same eigenbasis.
pub fn sqrt_psd(m: &DMatrix<C64>) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(m);
    let n = m.nrows();
    let mut d = DMatrix::zeros(n, n);
    for (i, &l) in vals.iter().enumerate() {
        d[(i, i)] = C64::new(l.max(0.0).sqrt(), 0.0);
    }
    &vecs * d * vecs.adjoint()
}

/// `exp(i t h)` for Hermitian `h`, via the eigendecomposition of `h`.
/// The result is unitary to rounding error.
pub fn unitary_exp_i_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(h);
    let n = h.nrows();
    let mut d = DMatrix::zeros(n, n);
    for (i, &l) in vals.iter().enumerate() {
        d[(i, i)] = C64::new(0.0, t * l).exp();
    }
    &vecs * d * vecs.adjoint()
}

/// Identity matrix of size `n`.
pub fn eye(n: usize) -> DMatrix<C64> {
    DMatrix::identity(n, n)
}
