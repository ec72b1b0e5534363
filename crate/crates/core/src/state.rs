//! Parametric density-operator families ρ(x): evaluation, derivatives, and
//! the spectral/global structure (support, kernel, tangent space) that the
//! postselection constructions are built from.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    self, eig_hermitian, hermitize, identity, inner, outer,
    polar_unitary, span_projector, trace, CMatrix, CVector, C_ZERO, RANK_TOL,
};

/// Default relative step scale for central differences,
/// h = `FD_STEP_SCALE` · max(1, |xᵢ|).
pub const FD_STEP_SCALE: f64 = 1e-5;
/// Default tolerance for grouping eigenvalues into degenerate clusters,
/// relative to the largest eigenvalue.
pub const DEG_TOL: f64 = 1e-8;
/// Eigenvalue gaps below this absolute size are treated as degenerate when
/// finite-differencing eigenvectors, to keep the difference quotient stable.
pub const FD_DEGENERACY_GAP: f64 = 1e-6;

type Evaluator = Arc<dyn Fn(&[f64]) -> CMatrix + Send + Sync>;
type DerivativeProvider = Arc<dyn Fn(&[f64], usize) -> CMatrix + Send + Sync>;

/// How parameter derivatives of ρ(x) are obtained.
#[derive(Clone)]
pub enum DerivativeMode {
    /// Closed-form ∂ᵢρ(x) supplied by the family.
    Analytic(DerivativeProvider),
    /// Central difference (ρ(x+h eᵢ) − ρ(x−h eᵢ))/(2h) with
    /// h = step_scale · max(1, |xᵢ|). `richardson` adds one extrapolation
    /// level for studies that need the extra order.
    CentralDifference { step_scale: f64, richardson: bool },
}

/// A family x ↦ ρ(x) with a derivative provider.
///
/// Evaluators must be pure functions; every operation here is re-entrant and
/// parameter sweeps may fan out in parallel over shared references.
#[derive(Clone)]
pub struct ParametricState {
    dim: usize,
    num_params: usize,
    evaluator: Evaluator,
    derivative: DerivativeMode,
    /// Per-parameter closed intervals; `None` means unbounded.
    domain: Option<Vec<(f64, f64)>>,
}

impl ParametricState {
    pub fn new<F>(dim: usize, num_params: usize, evaluator: F) -> Self
    where
        F: Fn(&[f64]) -> CMatrix + Send + Sync + 'static,
    {
        ParametricState {
            dim,
            num_params,
            evaluator: Arc::new(evaluator),
            derivative: DerivativeMode::CentralDifference {
                step_scale: FD_STEP_SCALE,
                richardson: false,
            },
            domain: None,
        }
    }

    pub fn with_analytic_derivative<F>(mut self, provider: F) -> Self
    where
        F: Fn(&[f64], usize) -> CMatrix + Send + Sync + 'static,
    {
        self.derivative = DerivativeMode::Analytic(Arc::new(provider));
        self
    }

    pub fn with_fd_step(mut self, step_scale: f64, richardson: bool) -> Self {
        self.derivative = DerivativeMode::CentralDifference {
            step_scale,
            richardson,
        };
        self
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn has_analytic_derivative(&self) -> bool {
        matches!(self.derivative, DerivativeMode::Analytic(_))
    }

    /// Default absolute step for parameter `i` at the point `x`.
    pub fn fd_step(&self, x: &[f64], i: usize) -> f64 {
        let scale = match self.derivative {
            DerivativeMode::CentralDifference { step_scale, .. } => step_scale,
            DerivativeMode::Analytic(_) => FD_STEP_SCALE,
        };
        scale * x.get(i).map_or(1.0, |v| v.abs()).max(1.0)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_params {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: self.num_params,
            });
        }
        if let Some(domain) = &self.domain {
            for (i, (&xi, &(lo, hi))) in x.iter().zip(domain.iter()).enumerate() {
                if xi < lo || xi > hi {
                    return Err(Error::DomainEdge { param: i });
                }
            }
        }
        Ok(())
    }

    /// Raw evaluation without density-matrix validation (internal stencils).
    pub(crate) fn evaluate_raw(&self, x: &[f64]) -> CMatrix {
        (self.evaluator)(x)
    }
}

/// Evaluate ρ(x) and validate it is a density matrix: unit trace and
/// Hermiticity within 1e-10, smallest eigenvalue above −1e-9.
pub fn density_at(state: &ParametricState, x: &[f64]) -> Result<CMatrix> {
    state.check_point(x)?;
    let rho = state.evaluate_raw(x);
    if rho.dim() != (state.dim, state.dim) {
        return Err(Error::DimensionMismatch {
            left: rho.dim().0,
            right: state.dim,
        });
    }
    let tr = trace(&rho);
    let tr_err = (tr - Complex64::new(1.0, 0.0)).norm();
    if tr_err >= 1e-10 {
        return Err(Error::InvalidState {
            check: "unit trace",
            value: tr_err,
        });
    }
    let herm = linalg::hermiticity_residual(&rho);
    if herm >= 1e-10 {
        return Err(Error::InvalidState {
            check: "Hermiticity",
            value: herm,
        });
    }
    let spec = eig_hermitian(&hermitize(&rho))?;
    let min_eig = spec.eigenvalues.last().copied().unwrap_or(0.0);
    if min_eig < -1e-9 {
        return Err(Error::InvalidState {
            check: "positivity",
            value: min_eig,
        });
    }
    Ok(rho)
}

/// ∂ᵢρ(x) through the configured provider.
///
/// The result is Hermitized and must be traceless to 1e-8; a larger trace
/// signals a family that does not conserve probability.
pub fn derivative_at(state: &ParametricState, x: &[f64], i: usize) -> Result<CMatrix> {
    state.check_point(x)?;
    if i >= state.num_params {
        return Err(Error::IndexOutOfRange {
            index: i,
            limit: state.num_params,
        });
    }
    let raw = match &state.derivative {
        DerivativeMode::Analytic(provider) => provider(x, i),
        DerivativeMode::CentralDifference {
            step_scale,
            richardson,
        } => {
            let h = step_scale * x[i].abs().max(1.0);
            return derivative_fd(state, x, i, h, *richardson);
        }
    };
    finish_derivative(raw)
}

/// Central difference with an explicit absolute step.
pub fn derivative_fd(
    state: &ParametricState,
    x: &[f64],
    i: usize,
    h: f64,
    richardson: bool,
) -> Result<CMatrix> {
    state.check_point(x)?;
    if i >= state.num_params {
        return Err(Error::IndexOutOfRange {
            index: i,
            limit: state.num_params,
        });
    }
    let diff = |step: f64| -> Result<CMatrix> {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += step;
        xm[i] -= step;
        state.check_point(&xp).map_err(|_| Error::DomainEdge { param: i })?;
        state.check_point(&xm).map_err(|_| Error::DomainEdge { param: i })?;
        let num = state.evaluate_raw(&xp) - state.evaluate_raw(&xm);
        Ok(num.mapv(|z| z / (2.0 * step)))
    };
    let raw = if richardson {
        let d_h = diff(h)?;
        let d_h2 = diff(h / 2.0)?;
        (d_h2.mapv(|z| z * 4.0) - d_h).mapv(|z| z / 3.0)
    } else {
        diff(h)?
    };
    finish_derivative(raw)
}

fn finish_derivative(raw: CMatrix) -> Result<CMatrix> {
    let sym = hermitize(&raw);
    let tr = trace(&sym).norm();
    if tr >= 1e-8 {
        return Err(Error::InvalidState {
            check: "traceless derivative",
            value: tr,
        });
    }
    Ok(sym)
}

/// Spectral data of ρ(x) at one parameter point.
///
/// `global_rank` counts eigenvalues above the relative rank tolerance. At a
/// generic point of a constant-rank family this equals the global rank; use
/// [`global_rank_scan`] to detect isolated points where the local rank drops.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// All eigenvectors as columns of a unitary, phase-fixed.
    pub eigenvectors: CMatrix,
    /// Number of eigenvalues above `rank_tol · q₁`.
    pub global_rank: usize,
    pub support_projector: CMatrix,
    pub kernel_projector: CMatrix,
    /// Partition of `0..global_rank` into clusters of (near-)equal
    /// eigenvalues, chained at `deg_tol · q₁`.
    pub degeneracy_groups: Vec<Vec<usize>>,
    pub rank_tol: f64,
    pub deg_tol: f64,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, n: usize) -> CVector {
        self.eigenvectors.column(n).to_owned()
    }

    /// Projector onto the degeneracy group containing support index `n`.
    pub fn group_projector(&self, n: usize) -> CMatrix {
        let group = self
            .degeneracy_groups
            .iter()
            .find(|g| g.contains(&n))
            .cloned()
            .unwrap_or_else(|| vec![n]);
        projector_from_columns(&self.eigenvectors, &group)
    }

    /// Σ_{n ≤ d_r} qₙ |φₙ⟩⟨φₙ|, for reconstruction checks.
    pub fn support_reconstruction(&self) -> CMatrix {
        let dim = self.dim();
        let mut m = Array2::from_elem((dim, dim), C_ZERO);
        for n in 0..self.global_rank {
            let col = self.eigenvector(n);
            m = m + outer(&col, &col).mapv(|z| z * self.eigenvalues[n]);
        }
        m
    }
}

fn projector_from_columns(vectors: &CMatrix, indices: &[usize]) -> CMatrix {
    let dim = vectors.nrows();
    let mut p = Array2::from_elem((dim, dim), C_ZERO);
    for &n in indices {
        let col = vectors.column(n).to_owned();
        p = p + outer(&col, &col);
    }
    p
}

fn group_indices(eigenvalues: &[f64], count: usize, gap: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for n in 0..count {
        match groups.last_mut() {
            Some(group) => {
                let prev = *group.last().expect("non-empty group");
                if (eigenvalues[prev] - eigenvalues[n]).abs() < gap {
                    group.push(n);
                } else {
                    groups.push(vec![n]);
                }
            }
            None => groups.push(vec![n]),
        }
    }
    groups
}

/// Spectral decomposition with support/kernel projectors and degeneracy
/// grouping. `rank_tol` and `deg_tol` are relative to the largest eigenvalue.
pub fn spectral_at(
    state: &ParametricState,
    x: &[f64],
    rank_tol: f64,
    deg_tol: f64,
) -> Result<SpectralData> {
    let rho = density_at(state, x)?;
    spectral_of_density(&rho, rank_tol, deg_tol)
}

/// Same with the default tolerances.
pub fn spectral_at_default(state: &ParametricState, x: &[f64]) -> Result<SpectralData> {
    spectral_at(state, x, RANK_TOL, DEG_TOL)
}

/// Spectral data of an already-validated density matrix.
pub fn spectral_of_density(rho: &CMatrix, rank_tol: f64, deg_tol: f64) -> Result<SpectralData> {
    let spec = eig_hermitian(&hermitize(rho))?;
    let dim = spec.eigenvalues.len();
    let q1 = spec.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let rank_cut = rank_tol * q1;
    let global_rank = spec
        .eigenvalues
        .iter()
        .take_while(|&&q| q > rank_cut)
        .count();
    // Global normalization: the support eigenvalues carry all the weight.
    // The dropped tail is bounded by what the rank cutoff itself allows.
    let support_sum: f64 = spec.eigenvalues[..global_rank].iter().sum();
    let allowed = 1e-9f64.max((dim - global_rank) as f64 * rank_cut);
    if (support_sum - 1.0).abs() >= allowed {
        return Err(Error::InvalidState {
            check: "support normalization",
            value: (support_sum - 1.0).abs(),
        });
    }
    let support_projector =
        projector_from_columns(&spec.eigenvectors, &(0..global_rank).collect::<Vec<_>>());
    let kernel_projector = identity(dim) - &support_projector;
    let degeneracy_groups = group_indices(&spec.eigenvalues, global_rank, deg_tol * q1.max(1e-300));
    Ok(SpectralData {
        eigenvalues: spec.eigenvalues,
        eigenvectors: spec.eigenvectors,
        global_rank,
        support_projector,
        kernel_projector,
        degeneracy_groups,
        rank_tol,
        deg_tol,
    })
}

/// One grid point where the local rank fell below the global rank.
#[derive(Debug, Clone)]
pub struct RankWarning {
    pub grid_index: usize,
    pub x: Vec<f64>,
    pub local_rank: usize,
}

#[derive(Debug, Clone)]
pub struct GlobalRankScan {
    pub global_rank: usize,
    pub warnings: Vec<RankWarning>,
}

/// Maximum local rank over a parameter grid, flagging the points where the
/// rank drops below it (isolated rank-deficient points such as coincident
/// sources in imaging).
pub fn global_rank_scan(
    state: &ParametricState,
    grid: &[Vec<f64>],
    rank_tol: f64,
) -> Result<GlobalRankScan> {
    if grid.is_empty() {
        return Err(Error::DimensionMismatch { left: 0, right: 1 });
    }
    let mut local_ranks = Vec::with_capacity(grid.len());
    for x in grid {
        let spec = spectral_at(state, x, rank_tol, DEG_TOL)?;
        local_ranks.push(spec.global_rank);
    }
    let global_rank = local_ranks.iter().copied().max().unwrap_or(0);
    let warnings = local_ranks
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r < global_rank)
        .map(|(i, &r)| RankWarning {
            grid_index: i,
            x: grid[i].clone(),
            local_rank: r,
        })
        .collect();
    Ok(GlobalRankScan {
        global_rank,
        warnings,
    })
}

/// Finite-difference derivatives of the spectral data along one parameter.
///
/// Eigenbases at x ± h are aligned to the basis at x group by group through
/// the unitary Procrustes factor before differencing, so the difference
/// quotient stays finite across (near-)degenerate clusters and the residual
/// in-group rotation is exactly what the generalized covariant derivative
/// projects out. Gaps below [`FD_DEGENERACY_GAP`] are clustered for this
/// purpose even when the degeneracy grouping itself is tighter.
#[derive(Debug, Clone)]
pub struct SpectralDerivatives {
    /// ∂ₓ qₙ for n < d_r.
    pub eigenvalue_derivs: Vec<f64>,
    /// ∂ₓ |φₙ⟩ for n < d_r, in the aligned gauge.
    pub eigenvector_derivs: Vec<CVector>,
    /// Clusters used for alignment and for the covariant-derivative
    /// projection; at least as coarse as the spectral degeneracy groups.
    pub fd_groups: Vec<Vec<usize>>,
    pub step: f64,
}

pub fn spectral_derivatives(
    state: &ParametricState,
    x: &[f64],
    spectral: &SpectralData,
    param: usize,
    step: Option<f64>,
) -> Result<SpectralDerivatives> {
    state.check_point(x)?;
    if param >= state.num_params {
        return Err(Error::IndexOutOfRange {
            index: param,
            limit: state.num_params,
        });
    }
    let h = step.unwrap_or_else(|| state.fd_step(x, param));
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[param] += h;
    xm[param] -= h;
    state.check_point(&xp).map_err(|_| Error::DomainEdge { param })?;
    state.check_point(&xm).map_err(|_| Error::DomainEdge { param })?;

    let spec_p = eig_hermitian(&hermitize(&state.evaluate_raw(&xp)))?;
    let spec_m = eig_hermitian(&hermitize(&state.evaluate_raw(&xm)))?;

    let d_r = spectral.global_rank;
    let q1 = spectral.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let fd_gap = (spectral.deg_tol * q1).max(FD_DEGENERACY_GAP);
    let fd_groups = group_indices(&spectral.eigenvalues, d_r, fd_gap);

    let aligned_p = align_columns(spectral, &spec_p.eigenvectors, &fd_groups)?;
    let aligned_m = align_columns(spectral, &spec_m.eigenvectors, &fd_groups)?;

    let mut eigenvalue_derivs = Vec::with_capacity(d_r);
    let mut eigenvector_derivs = Vec::with_capacity(d_r);
    for n in 0..d_r {
        eigenvalue_derivs.push((spec_p.eigenvalues[n] - spec_m.eigenvalues[n]) / (2.0 * h));
        let dcol = (&aligned_p[n] - &aligned_m[n]).mapv(|z| z / (2.0 * h));
        eigenvector_derivs.push(dcol);
    }
    Ok(SpectralDerivatives {
        eigenvalue_derivs,
        eigenvector_derivs,
        fd_groups,
        step: h,
    })
}

/// Align the support columns of `other` to the reference basis, one
/// degeneracy cluster at a time.
fn align_columns(
    reference: &SpectralData,
    other: &CMatrix,
    groups: &[Vec<usize>],
) -> Result<Vec<CVector>> {
    let dim = reference.dim();
    let d_r = reference.global_rank;
    let mut out: Vec<CVector> = vec![CVector::from_elem(dim, C_ZERO); d_r];
    for group in groups {
        let k = group.len();
        // S = Φ±† Φ0 restricted to the group; its unitary polar factor is the
        // basis rotation that best matches the reference columns.
        let mut overlap = Array2::from_elem((k, k), C_ZERO);
        for (a, &i) in group.iter().enumerate() {
            for (b, &j) in group.iter().enumerate() {
                let ci = other.column(i).to_owned();
                let cj = reference.eigenvector(j);
                overlap[(a, b)] = inner(&ci, &cj);
            }
        }
        let w = polar_unitary(&overlap)?;
        for (b, &j) in group.iter().enumerate() {
            let mut col = CVector::from_elem(dim, C_ZERO);
            for (a, &i) in group.iter().enumerate() {
                let src = other.column(i);
                for r in 0..dim {
                    col[r] += src[r] * w[(a, b)];
                }
            }
            out[j] = col;
        }
    }
    Ok(out)
}

/// Projector onto the tangent space: the span of the generalized covariant
/// derivatives of the support eigenvectors, orthogonalized against the
/// support.
///
/// Derivative vectors with norm at or below `1e-7` are treated as zero so a
/// constant family yields the zero matrix rather than a projector onto
/// finite-difference noise.
pub fn tangent_projector(
    state: &ParametricState,
    x: &[f64],
    spectral: &SpectralData,
) -> Result<CMatrix> {
    let derivs = spectral_derivatives(state, x, spectral, 0, None)?;
    tangent_projector_from_derivatives(spectral, &derivs)
}

pub fn tangent_projector_from_derivatives(
    spectral: &SpectralData,
    derivs: &SpectralDerivatives,
) -> Result<CMatrix> {
    let dim = spectral.dim();
    let mut tangent_vectors = Vec::new();
    for n in 0..spectral.global_rank {
        let projected = kernel_component(spectral, &derivs.eigenvector_derivs[n]);
        if linalg::vector_norm(&projected) > 1e-7 {
            tangent_vectors.push(projected);
        }
    }
    if tangent_vectors.is_empty() {
        return Ok(Array2::from_elem((dim, dim), C_ZERO));
    }
    span_projector(&tangent_vectors, 1e-8)
}

fn kernel_component(spectral: &SpectralData, v: &CVector) -> CVector {
    let projected = spectral.support_projector.dot(v);
    v - &projected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{basis_vector, commutator, dagger, frobenius_norm, unitary_from_generator, C_I, C_ONE};
    use approx::assert_abs_diff_eq;

    fn pauli_z() -> CMatrix {
        let mut m = Array2::from_elem((2, 2), C_ZERO);
        m[(0, 0)] = C_ONE;
        m[(1, 1)] = -C_ONE;
        m
    }

    fn diag_family() -> ParametricState {
        // ρ(x) = diag(x, 1-x)
        ParametricState::new(2, 1, |x: &[f64]| {
            let mut m = Array2::from_elem((2, 2), C_ZERO);
            m[(0, 0)] = Complex64::new(x[0], 0.0);
            m[(1, 1)] = Complex64::new(1.0 - x[0], 0.0);
            m
        })
        .with_domain(vec![(0.01, 0.99)])
    }

    fn rotating_pure_family(g: CMatrix) -> ParametricState {
        let dim = g.nrows();
        let psi0 = {
            let mut v = CVector::from_elem(dim, C_ZERO);
            let norm = (dim as f64).sqrt();
            for i in 0..dim {
                v[i] = Complex64::new(1.0 / norm, 0.0);
            }
            v
        };
        let g2 = g.clone();
        ParametricState::new(dim, 1, move |x: &[f64]| {
            let u = unitary_from_generator(&g2, x[0]).unwrap();
            let psi = u.dot(&psi0);
            outer(&psi, &psi)
        })
    }

    #[test]
    fn density_validates_trace() {
        let bad = ParametricState::new(2, 1, |_x: &[f64]| {
            let mut m = Array2::from_elem((2, 2), C_ZERO);
            m[(0, 0)] = Complex64::new(0.9, 0.0);
            m
        });
        match density_at(&bad, &[0.0]) {
            Err(Error::InvalidState { check, .. }) => assert_eq!(check, "unit trace"),
            other => panic!("expected InvalidState, got {other:?}"),
        }
    }

    #[test]
    fn density_trace_one() {
        let s = diag_family();
        let rho = density_at(&s, &[0.3]).unwrap();
        assert!((trace(&rho).re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn derivative_of_constant_family_is_zero() {
        let s = ParametricState::new(2, 1, |_x: &[f64]| {
            let mut m = Array2::from_elem((2, 2), C_ZERO);
            m[(0, 0)] = Complex64::new(0.5, 0.0);
            m[(1, 1)] = Complex64::new(0.5, 0.0);
            m
        });
        let d = derivative_at(&s, &[0.4], 0).unwrap();
        assert!(frobenius_norm(&d) < 1e-10);
    }

    #[test]
    fn derivative_of_linear_family() {
        let s = diag_family();
        let d = derivative_at(&s, &[0.25], 0).unwrap();
        assert_abs_diff_eq!(d[(0, 0)].re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d[(1, 1)].re, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn derivative_matches_commutator_for_unitary_family() {
        let g = pauli_z();
        let s = rotating_pure_family(g.clone());
        let x = [0.3];
        let d_fd = derivative_at(&s, &x, 0).unwrap();
        let rho = density_at(&s, &x).unwrap();
        let expected = commutator(&g, &rho).mapv(|z| z * (-C_I));
        assert!(frobenius_norm(&(&d_fd - &expected)) < 5e-9);
    }

    #[test]
    fn derivative_respects_domain_edges() {
        let s = diag_family();
        match derivative_at(&s, &[0.010001], 0) {
            Err(Error::DomainEdge { .. }) => {}
            other => panic!("expected DomainEdge, got {other:?}"),
        }
    }

    #[test]
    fn spectral_of_pure_state() {
        let s = ParametricState::new(2, 1, |_x: &[f64]| {
            let e0 = basis_vector(2, 0);
            outer(&e0, &e0)
        });
        let spec = spectral_at_default(&s, &[0.0]).unwrap();
        assert_eq!(spec.global_rank, 1);
        assert_abs_diff_eq!(spec.eigenvalues[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_of_maximally_mixed() {
        let s = ParametricState::new(2, 1, |_x: &[f64]| identity(2).mapv(|z| z * 0.5));
        let spec = spectral_at_default(&s, &[0.0]).unwrap();
        assert_eq!(spec.global_rank, 2);
        assert_eq!(spec.degeneracy_groups, vec![vec![0, 1]]);
    }

    #[test]
    fn spectral_reconstructs_state() {
        let s = diag_family();
        let x = [0.3];
        let rho = density_at(&s, &x).unwrap();
        let spec = spectral_at_default(&s, &x).unwrap();
        let rebuilt = spec.support_reconstruction();
        assert!(frobenius_norm(&(&rebuilt - &rho)) < 1e-9);
        let sum = &spec.support_projector + &spec.kernel_projector;
        assert!(frobenius_norm(&(&sum - &identity(2))) < 1e-12);
    }

    #[test]
    fn rank_scan_over_pure_family() {
        let s = rotating_pure_family(pauli_z());
        let grid: Vec<Vec<f64>> = (0..5).map(|i| vec![0.1 * i as f64]).collect();
        let scan = global_rank_scan(&s, &grid, RANK_TOL).unwrap();
        assert_eq!(scan.global_rank, 1);
        assert!(scan.warnings.is_empty());
    }

    #[test]
    fn tangent_projector_of_constant_family_is_zero() {
        let s = ParametricState::new(3, 1, |_x: &[f64]| {
            let mut m = Array2::from_elem((3, 3), C_ZERO);
            m[(0, 0)] = Complex64::new(0.7, 0.0);
            m[(1, 1)] = Complex64::new(0.3, 0.0);
            m
        });
        let spec = spectral_at_default(&s, &[0.2]).unwrap();
        let pt = tangent_projector(&s, &[0.2], &spec).unwrap();
        assert!(frobenius_norm(&pt) < 1e-10);
    }

    #[test]
    fn tangent_projector_is_orthogonal_to_support() {
        let g = {
            // Generator that pushes the support towards the kernel.
            let mut m = Array2::from_elem((3, 3), C_ZERO);
            m[(0, 2)] = C_ONE;
            m[(2, 0)] = C_ONE;
            m[(1, 2)] = Complex64::new(0.0, 0.5);
            m[(2, 1)] = Complex64::new(0.0, -0.5);
            m
        };
        let g2 = g.clone();
        let s = ParametricState::new(3, 1, move |x: &[f64]| {
            let u = unitary_from_generator(&g2, x[0]).unwrap();
            let mut d = Array2::from_elem((3, 3), C_ZERO);
            d[(0, 0)] = Complex64::new(0.6, 0.0);
            d[(1, 1)] = Complex64::new(0.4, 0.0);
            u.dot(&d).dot(&dagger(&u))
        });
        let x = [0.1];
        let spec = spectral_at_default(&s, &x).unwrap();
        let pt = tangent_projector(&s, &x, &spec).unwrap();
        let cross = pt.dot(&spec.support_projector);
        assert!(frobenius_norm(&cross) < 1e-10);
        // Idempotent.
        assert!(frobenius_norm(&(&pt.dot(&pt) - &pt)) < 1e-10);
    }

    #[test]
    fn eigenvector_derivatives_track_rotation() {
        // Non-degenerate qubit family: eigenvectors rotate at rate 1.
        let g = {
            let mut m = Array2::from_elem((2, 2), C_ZERO);
            m[(0, 1)] = C_ONE;
            m[(1, 0)] = C_ONE;
            m
        };
        let g2 = g.clone();
        let s = ParametricState::new(2, 1, move |x: &[f64]| {
            let u = unitary_from_generator(&g2, x[0]).unwrap();
            let mut d = Array2::from_elem((2, 2), C_ZERO);
            d[(0, 0)] = Complex64::new(0.8, 0.0);
            d[(1, 1)] = Complex64::new(0.2, 0.0);
            u.dot(&d).dot(&dagger(&u))
        });
        let x = [0.2];
        let spec = spectral_at_default(&s, &x).unwrap();
        let derivs = spectral_derivatives(&s, &x, &spec, 0, None).unwrap();
        // Eigenvalues are constant along the family.
        for &dq in &derivs.eigenvalue_derivs {
            assert!(dq.abs() < 1e-9);
        }
        // The covariant part of each eigenvector derivative has unit norm
        // for this generator.
        for n in 0..2 {
            let phi = spec.eigenvector(n);
            let dphi = &derivs.eigenvector_derivs[n];
            let gauge = inner(&phi, dphi);
            let cov: CVector = dphi - &phi.mapv(|z| z * gauge);
            assert_abs_diff_eq!(linalg::vector_norm(&cov), 1.0, epsilon = 1e-6);
        }
    }
}
