//! Dense complex matrix primitives used by every other module: Hermitian
//! eigendecomposition, PSD square root, norms, and span projectors.
//!
//! Matrices are plain `ndarray` arrays of `Complex64`. Everything here is a
//! pure function over immutable inputs, so concurrent use needs no locking.
//! The eigensolver is a cyclic complex Jacobi iteration: deterministic for a
//! fixed input, accurate to near machine precision for the dimensions this
//! crate targets (a few hundred at most).

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix carrier.
pub type CMatrix = Array2<Complex64>;
/// Dense complex column vector.
pub type CVector = Array1<Complex64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative Hermiticity tolerance accepted by [`eig_hermitian`].
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Default relative rank tolerance (against the largest eigen/singular value).
pub const RANK_TOL: f64 = 1e-10;

/// Identity matrix of the given dimension.
pub fn identity(dim: usize) -> CMatrix {
    Array2::eye(dim).mapv(|v: f64| Complex64::new(v, 0.0))
}

/// Conjugate transpose.
pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diag().sum()
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Matrix 2-norm, computed as the square root of the largest eigenvalue of
/// `M†M`.
pub fn spectral_norm(m: &CMatrix) -> Result<f64> {
    let gram = dagger(m).dot(m);
    let spec = eig_hermitian(&gram)?;
    Ok(spec.eigenvalues.first().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Inner product ⟨a|b⟩, conjugate-linear in the first argument.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn vector_norm(a: &CVector) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Rank-one operator |a⟩⟨b|.
pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    let mut m = Array2::from_elem((a.len(), b.len()), C_ZERO);
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            m[(i, j)] = x * y.conj();
        }
    }
    m
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

/// Kronecker product A ⊗ B.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::from_elem((ar * br, ac * bc), C_ZERO);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Hermitian part (M + M†)/2.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    let half = Complex64::new(0.5, 0.0);
    (m + &dagger(m)).mapv(|z| z * half)
}

/// Relative deviation from Hermiticity, ‖M − M†‖_F / max(1, ‖M‖_F).
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    frobenius_norm(&(m - &dagger(m))) / frobenius_norm(m).max(1.0)
}

fn square_dim(m: &CMatrix) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::NotSquare { rows: r, cols: c });
    }
    Ok(r)
}

fn same_dim(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim().0,
            right: b.dim().0,
        });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are real, sorted descending. Eigenvectors are the columns of
/// a unitary matrix; each column is phase-fixed so that its component of
/// largest magnitude is real and non-negative, which makes the output
/// reproducible run to run.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    /// Rebuild V Λ V†.
    pub fn reconstruct(&self) -> CMatrix {
        let dim = self.eigenvalues.len();
        let mut m = Array2::from_elem((dim, dim), C_ZERO);
        for (n, &q) in self.eigenvalues.iter().enumerate() {
            let col = self.eigenvectors.column(n).to_owned();
            m = m + outer(&col, &col).mapv(|z| z * q);
        }
        m
    }

    pub fn column(&self, n: usize) -> CVector {
        self.eigenvectors.column(n).to_owned()
    }
}

const MAX_JACOBI_SWEEPS: usize = 64;

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Rejects inputs with relative asymmetry above `1e-10` and fails if the
/// off-diagonal norm has not collapsed after an internal sweep cap.
pub fn eig_hermitian(h: &CMatrix) -> Result<Spectrum> {
    let n = square_dim(h)?;
    let scale = frobenius_norm(h);
    let asym = frobenius_norm(&(h - &dagger(h)));
    if asym >= HERMITICITY_TOL * scale.max(1.0) {
        return Err(Error::NonHermitianInput {
            residual: asym / scale.max(1.0),
        });
    }

    let mut a = hermitize(h);
    let mut v = identity(n);
    if n == 1 {
        return Ok(sorted_spectrum(vec![a[(0, 0)].re], v));
    }

    let off_target = 1e-14 * scale.max(1e-300);
    let mut converged = false;
    let mut off = off_norm(&a);
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        if off <= off_target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        off = off_norm(&a);
    }
    if !converged && off > off_target {
        return Err(Error::ConvergenceFailure {
            sweeps: MAX_JACOBI_SWEEPS,
            off_norm: off,
        });
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    Ok(sorted_spectrum(eigenvalues, v))
}

fn off_norm(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += a[(p, q)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// One complex Jacobi rotation zeroing A[p,q]; updates A ← U†AU, V ← VU.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let abs_pq = apq.norm();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Skip rotations that can no longer change the diagonal.
    if abs_pq <= f64::EPSILON * 0.5 * (app.abs() + aqq.abs()) || abs_pq == 0.0 {
        a[(p, q)] = C_ZERO;
        a[(q, p)] = C_ZERO;
        return;
    }
    // Phase that makes the pivot real, then a real Jacobi rotation.
    let phase = apq / abs_pq; // e^{iφ}
    let tau = (aqq - app) / (2.0 * abs_pq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // U restricted to the (p,q) plane:
    //   U[p,p] = c           U[p,q] = s
    //   U[q,p] = -s e^{-iφ}  U[q,q] = c e^{-iφ}
    let cc = Complex64::new(c, 0.0);
    let ss = Complex64::new(s, 0.0);
    let uqp = -ss * phase.conj();
    let uqq = cc * phase.conj();

    let n = a.nrows();
    // Columns: A ← A U
    for r in 0..n {
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        a[(r, p)] = arp * cc + arq * uqp;
        a[(r, q)] = arp * ss + arq * uqq;
    }
    // Rows: A ← U† A
    for r in 0..n {
        let apr = a[(p, r)];
        let aqr = a[(q, r)];
        a[(p, r)] = cc * apr + uqp.conj() * aqr;
        a[(q, r)] = ss * apr + uqq.conj() * aqr;
    }
    a[(p, q)] = C_ZERO;
    a[(q, p)] = C_ZERO;
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
    // Accumulate eigenvectors: V ← V U
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp * cc + vrq * uqp;
        v[(r, q)] = vrp * ss + vrq * uqq;
    }
}

fn sorted_spectrum(eigenvalues: Vec<f64>, vectors: CMatrix) -> Spectrum {
    let n = eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending; ties broken by original index for determinism.
    order.sort_by(|&i, &j| {
        eigenvalues[j]
            .partial_cmp(&eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut sorted_vals = Vec::with_capacity(n);
    let mut sorted_vecs = Array2::from_elem((n, n), C_ZERO);
    for (dst, &src) in order.iter().enumerate() {
        sorted_vals.push(eigenvalues[src]);
        let col = fix_phase(vectors.column(src).to_owned());
        for r in 0..n {
            sorted_vecs[(r, dst)] = col[r];
        }
    }
    Spectrum {
        eigenvalues: sorted_vals,
        eigenvectors: sorted_vecs,
    }
}

/// Rotate the global phase so the largest-magnitude component is real ≥ 0.
pub fn fix_phase(mut col: CVector) -> CVector {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, z) in col.iter().enumerate() {
        let m = z.norm();
        if m > best_mag + 1e-300 {
            best_mag = m;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let z = col[best];
        let phase = z.conj() / z.norm();
        col.mapv_inplace(|w| w * phase);
        // Kill the residual imaginary part exactly.
        col[best] = Complex64::new(col[best].norm(), 0.0);
    }
    col
}

/// Hermitian PSD square root via the eigendecomposition.
///
/// Eigenvalues inside the negative noise band are clamped to zero; anything
/// below `-1e-8 · max(1, λ_max)` is rejected as genuinely non-PSD.
pub fn sqrt_psd(e: &CMatrix) -> Result<CMatrix> {
    let spec = eig_hermitian(e)?;
    let lam_max = spec.eigenvalues.first().copied().unwrap_or(0.0).abs();
    let floor = -1e-8 * lam_max.max(1.0);
    let mut root = Vec::with_capacity(spec.eigenvalues.len());
    for &lam in &spec.eigenvalues {
        if lam < floor {
            return Err(Error::NotPsd {
                min_eigenvalue: lam,
            });
        }
        root.push(lam.max(0.0).sqrt());
    }
    let rebuilt = Spectrum {
        eigenvalues: root,
        eigenvectors: spec.eigenvectors,
    }
    .reconstruct();
    Ok(hermitize(&rebuilt))
}

/// Orthogonal projector onto the span of the given vectors.
///
/// The rank is the number of singular values above `tol` times the largest
/// singular value, so near-parallel inputs collapse to a single direction.
pub fn span_projector(vectors: &[CVector], tol: f64) -> Result<CMatrix> {
    let first = vectors
        .first()
        .ok_or(Error::DimensionMismatch { left: 0, right: 0 })?;
    let dim = first.len();
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: v.len(),
            });
        }
    }
    let m = vectors.len();
    // Small Gram matrix B†B; its eigenpairs give the left singular vectors.
    let mut gram = Array2::from_elem((m, m), C_ZERO);
    for i in 0..m {
        for j in 0..m {
            gram[(i, j)] = inner(&vectors[i], &vectors[j]);
        }
    }
    let spec = eig_hermitian(&gram)?;
    let mu_max = spec.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let mut proj = Array2::from_elem((dim, dim), C_ZERO);
    if mu_max <= 0.0 {
        return Ok(proj);
    }
    let cutoff = tol * tol * mu_max;
    for (k, &mu) in spec.eigenvalues.iter().enumerate() {
        if mu <= cutoff {
            continue;
        }
        let w = spec.column(k);
        let mut u = Array1::from_elem(dim, C_ZERO);
        for (i, v) in vectors.iter().enumerate() {
            let coef = w[i];
            for r in 0..dim {
                u[r] += coef * v[r];
            }
        }
        let norm = vector_norm(&u);
        if norm > 0.0 {
            u.mapv_inplace(|z| z / norm);
            proj = proj + outer(&u, &u);
        }
    }
    Ok(hermitize(&proj))
}

/// Unitary polar factor of a (well-conditioned) square matrix, M (M†M)^{-1/2}.
///
/// Used to align eigenbases across nearby parameter points before finite
/// differencing.
pub fn polar_unitary(m: &CMatrix) -> Result<CMatrix> {
    let gram = dagger(m).dot(m);
    let spec = eig_hermitian(&gram)?;
    let dim = spec.eigenvalues.len();
    let mut inv_root = Array2::from_elem((dim, dim), C_ZERO);
    for (n, &mu) in spec.eigenvalues.iter().enumerate() {
        let col = spec.column(n);
        let s = mu.max(1e-30).sqrt();
        inv_root = inv_root + outer(&col, &col).mapv(|z| z / s);
    }
    Ok(m.dot(&inv_root))
}

/// Unitary e^{-iGt} generated by a Hermitian matrix.
pub fn unitary_from_generator(g: &CMatrix, t: f64) -> Result<CMatrix> {
    let spec = eig_hermitian(g)?;
    let dim = spec.eigenvalues.len();
    let mut u = Array2::from_elem((dim, dim), C_ZERO);
    for (n, &lam) in spec.eigenvalues.iter().enumerate() {
        let col = spec.column(n);
        let phase = Complex64::from_polar(1.0, -lam * t);
        u = u + outer(&col, &col).mapv(|z| z * phase);
    }
    Ok(u)
}

/// Tr[A·B] without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Result<Complex64> {
    same_dim(a, b)?;
    let n = a.nrows();
    let mut s = C_ZERO;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    Ok(s)
}

/// Basis column e_i of the given dimension.
pub fn basis_vector(dim: usize, index: usize) -> CVector {
    let mut v = Array1::from_elem(dim, C_ZERO);
    v[index] = C_ONE;
    v
}
