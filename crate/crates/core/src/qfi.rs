//! Fisher-information engine: symmetric logarithmic derivatives, quantum
//! Fisher information, per-outcome classical/post-measurement decompositions,
//! and the closed forms available for quasi-pure states.
//!
//! Conventions. The SLD L solves ∂ₓρ = ½(Lρ + ρL); it is unique only on the
//! support of ρ, and [`sld_general`] fixes the gauge by zeroing every
//! kernel–kernel block. With that gauge the general solver and the quasi-pure
//! closed form agree matrix-by-matrix, not just in Tr[ρL²].

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    dagger, eig_hermitian, frobenius_norm, hermitize, inner, outer, trace_of_product,
    CMatrix, CVector, C_ZERO,
};
use crate::postselect::{measurement_from_povm, Povm};
use crate::state::{
    derivative_at, density_at, spectral_derivatives, ParametricState, SpectralData,
    SpectralDerivatives,
};

/// Default absolute cutoff below which q_k + q_l is treated as zero when
/// inverting the SLD equation.
pub const SLD_RANK_TOL: f64 = 1e-10;
/// Residual tolerance for the quasi-pure preconditions of the closed forms.
pub const QUASI_PURE_TOL: f64 = 1e-8;
/// Outcome probabilities below this contribute nothing and are flagged.
pub const NEGLIGIBLE_PROBABILITY: f64 = 1e-12;

/// Symmetric logarithmic derivative of (ρ, ∂ρ).
///
/// In the eigenbasis of ρ, L_{kl} = 2 (∂ρ)_{kl}/(q_k + q_l) wherever
/// q_k + q_l exceeds `rank_tol`, and zero elsewhere.
pub fn sld_general(rho: &CMatrix, drho: &CMatrix, rank_tol: f64) -> Result<CMatrix> {
    if rho.dim() != drho.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim().0,
            right: drho.dim().0,
        });
    }
    let spec = eig_hermitian(rho)?;
    let v = &spec.eigenvectors;
    let d_tilde = dagger(v).dot(drho).dot(v);
    let dim = spec.eigenvalues.len();
    let mut l_tilde = Array2::from_elem((dim, dim), C_ZERO);
    for k in 0..dim {
        for l in 0..dim {
            let denom = spec.eigenvalues[k].max(0.0) + spec.eigenvalues[l].max(0.0);
            if denom > rank_tol {
                l_tilde[(k, l)] = d_tilde[(k, l)] * Complex64::new(2.0 / denom, 0.0);
            }
        }
    }
    Ok(hermitize(&v.dot(&l_tilde).dot(&dagger(v))))
}

/// I^Q = Tr[ρ L²]; tiny negative round-off is clamped to zero.
pub fn qfi_from_sld(rho: &CMatrix, l: &CMatrix) -> Result<f64> {
    if rho.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim().0,
            right: l.dim().0,
        });
    }
    let l2 = l.dot(l);
    let val = trace_of_product(rho, &l2)?.re;
    Ok(val.max(0.0))
}

/// QFI of a (state, derivative) pair through the general SLD.
pub fn qfi_of_pair(rho: &CMatrix, drho: &CMatrix, rank_tol: f64) -> Result<f64> {
    let l = sld_general(rho, drho, rank_tol)?;
    qfi_from_sld(rho, &l)
}

/// QFI of a parametric family at x for one parameter.
pub fn qfi_of_state(state: &ParametricState, x: &[f64], param: usize) -> Result<f64> {
    let rho = density_at(state, x)?;
    let drho = derivative_at(state, x, param)?;
    qfi_of_pair(&rho, &drho, SLD_RANK_TOL)
}

/// Classical Fisher information (∂ₓp)²/p of a single outcome.
pub fn cfi_outcome(p: f64, dp: f64) -> Result<f64> {
    if p <= 1e-300 {
        return Err(Error::ZeroProbability { value: p });
    }
    if p > 1.0 + 1e-12 {
        return Err(Error::ZeroProbability { value: p });
    }
    Ok(dp * dp / p)
}

/// Generalized covariant derivative: the part of |∂φₙ⟩ orthogonal to the
/// degeneracy group of eigenvalue qₙ. For a non-degenerate level this is the
/// conventional covariant derivative |∂φ⟩ − |φ⟩⟨φ|∂φ⟩.
pub fn gen_cov_derivative(
    spectral: &SpectralData,
    dphi: &CVector,
    n: usize,
) -> Result<CVector> {
    if n >= spectral.global_rank {
        return Err(Error::IndexOutOfRange {
            index: n,
            limit: spectral.global_rank,
        });
    }
    if dphi.len() != spectral.dim() {
        return Err(Error::DimensionMismatch {
            left: dphi.len(),
            right: spectral.dim(),
        });
    }
    let group_proj = spectral.group_projector(n);
    Ok(dphi - &group_proj.dot(dphi))
}

/// Covariant derivatives for all support eigenvectors, using the (possibly
/// coarser) clusters recorded with the finite-difference data.
fn covariant_derivatives(
    spectral: &SpectralData,
    derivs: &SpectralDerivatives,
) -> Vec<CVector> {
    let dim = spectral.dim();
    let mut out = Vec::with_capacity(spectral.global_rank);
    for group in &derivs.fd_groups {
        let mut proj = Array2::from_elem((dim, dim), C_ZERO);
        for &m in group {
            let col = spectral.eigenvector(m);
            proj = proj + outer(&col, &col);
        }
        for &n in group {
            let dphi = &derivs.eigenvector_derivs[n];
            out.push(dphi - &proj.dot(dphi));
        }
    }
    // fd_groups enumerate 0..d_r in order, so `out` is already indexed by n.
    out
}

fn check_quasi_pure(
    spectral: &SpectralData,
    derivs: &SpectralDerivatives,
    cov: &[CVector],
    tol: f64,
) -> Result<()> {
    let drift = derivs
        .eigenvalue_derivs
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    if drift >= tol {
        return Err(Error::NotQuasiPure {
            criterion: "eigenvalue drift".into(),
            residual: drift,
            tolerance: tol,
        });
    }
    let mut worst = 0.0f64;
    for dcov in cov {
        for l in 0..spectral.global_rank {
            let phi_l = spectral.eigenvector(l);
            worst = worst.max(inner(dcov, &phi_l).norm());
        }
    }
    if worst >= tol {
        return Err(Error::NotQuasiPure {
            criterion: "covariant-derivative orthogonality".into(),
            residual: worst,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Closed-form SLD of a quasi-pure state,
/// L = 2 Σₙ (|𝒟ₓφₙ⟩⟨φₙ| + |φₙ⟩⟨𝒟ₓφₙ|).
///
/// Fails with `NotQuasiPure` when the eigenvalues drift or a covariant
/// derivative overlaps the support beyond [`QUASI_PURE_TOL`].
pub fn sld_quasipure(
    spectral: &SpectralData,
    derivs: &SpectralDerivatives,
) -> Result<CMatrix> {
    let cov = covariant_derivatives(spectral, derivs);
    check_quasi_pure(spectral, derivs, &cov, QUASI_PURE_TOL)?;
    let dim = spectral.dim();
    let mut l = Array2::from_elem((dim, dim), C_ZERO);
    for n in 0..spectral.global_rank {
        let phi = spectral.eigenvector(n);
        let block = outer(&cov[n], &phi);
        l = l + &block + &dagger(&block);
    }
    Ok(l.mapv(|z| z * 2.0))
}

/// Closed-form QFI of a quasi-pure state, 4 Σₙ qₙ ⟨𝒟ₓφₙ|𝒟ₓφₙ⟩.
pub fn qfi_quasipure(spectral: &SpectralData, derivs: &SpectralDerivatives) -> Result<f64> {
    let cov = covariant_derivatives(spectral, derivs);
    check_quasi_pure(spectral, derivs, &cov, QUASI_PURE_TOL)?;
    let mut total = 0.0;
    for n in 0..spectral.global_rank {
        total += spectral.eigenvalues[n] * inner(&cov[n], &cov[n]).re;
    }
    Ok(4.0 * total)
}

/// Per-outcome entry of the ensemble Fisher decomposition.
#[derive(Debug, Clone)]
pub struct OutcomeInfo {
    pub id: String,
    pub kept: bool,
    pub probability: f64,
    pub cfi: f64,
    pub post_qfi: f64,
    /// True when the probability fell below [`NEGLIGIBLE_PROBABILITY`] and
    /// the outcome was assigned zero information.
    pub negligible: bool,
}

/// QFI bookkeeping for a state under a POVM: the input-state SLD and QFI,
/// the per-outcome classical and post-measurement terms, and their total
/// Σ_ω (I^cl_ω + p_ω I^Q[σ(x|ω)]).
#[derive(Debug, Clone)]
pub struct QfiReport {
    pub sld: CMatrix,
    pub qfi: f64,
    pub per_outcome: Vec<OutcomeInfo>,
    pub total_ensemble_qfi: f64,
}

impl QfiReport {
    /// Σ over kept outcomes of p(ω|x) · I^Q[σ(x|ω)].
    pub fn kept_post_qfi(&self) -> f64 {
        self.per_outcome
            .iter()
            .filter(|o| o.kept)
            .map(|o| o.probability * o.post_qfi)
            .sum()
    }
}

/// Decompose the QFI over the outcomes of a POVM.
///
/// Each outcome uses M_ω = √E_ω held fixed while x varies, so the
/// post-measurement family is σ(x|ω) = M_ω ρ(x) M_ω†/p(ω|x) and its
/// derivative follows analytically from ∂ₓρ.
pub fn ensemble_decomposition(
    state: &ParametricState,
    x: &[f64],
    povm: &Povm,
    param: usize,
) -> Result<QfiReport> {
    povm.validate()
        .map_err(|e| Error::InvalidPovm {
            reason: e.to_string(),
        })?;
    let rho = density_at(state, x)?;
    let drho = derivative_at(state, x, param)?;
    if rho.nrows() != povm.dim() {
        return Err(Error::InvalidPovm {
            reason: format!("POVM dim {} vs state dim {}", povm.dim(), rho.nrows()),
        });
    }
    let sld = sld_general(&rho, &drho, SLD_RANK_TOL)?;
    let qfi = qfi_from_sld(&rho, &sld)?;

    let mut per_outcome = Vec::with_capacity(povm.elements.len());
    let mut total = 0.0;
    let mut prob_sum = 0.0;
    for element in &povm.elements {
        let p = trace_of_product(&rho, &element.operator)?.re;
        let dp = trace_of_product(&drho, &element.operator)?.re;
        prob_sum += p;
        if p < NEGLIGIBLE_PROBABILITY {
            per_outcome.push(OutcomeInfo {
                id: element.id.clone(),
                kept: element.kept,
                probability: p.max(0.0),
                cfi: 0.0,
                post_qfi: 0.0,
                negligible: true,
            });
            continue;
        }
        let m = measurement_from_povm(&element.operator, None)?;
        let sigma = hermitize(&m.matrix.dot(&rho).dot(&dagger(&m.matrix))).mapv(|z| z / p);
        // ∂ₓσ at fixed M: quotient rule against p(x).
        let dsigma_raw = hermitize(&m.matrix.dot(&drho).dot(&dagger(&m.matrix))).mapv(|z| z / p);
        let dsigma = dsigma_raw - &sigma.mapv(|z| z * (dp / p));
        let post_qfi = qfi_of_pair(&sigma, &dsigma, SLD_RANK_TOL)?;
        let cfi = dp * dp / p;
        total += cfi + p * post_qfi;
        per_outcome.push(OutcomeInfo {
            id: element.id.clone(),
            kept: element.kept,
            probability: p,
            cfi,
            post_qfi,
            negligible: false,
        });
    }
    if (prob_sum - 1.0).abs() >= 1e-10 {
        return Err(Error::InvalidPovm {
            reason: format!("outcome probabilities sum to {prob_sum}"),
        });
    }
    Ok(QfiReport {
        sld,
        qfi,
        per_outcome,
        total_ensemble_qfi: total,
    })
}

/// A convex decomposition ρ = Σₙ pₙ |ψₙ⟩⟨ψₙ| at a single parameter point.
#[derive(Debug, Clone)]
pub struct ConvexDecomposition {
    pub weights: Vec<f64>,
    pub vectors: Vec<CVector>,
}

impl ConvexDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let dim = self.vectors.first().map_or(0, |v| v.len());
        let mut m = Array2::from_elem((dim, dim), C_ZERO);
        for (w, v) in self.weights.iter().zip(self.vectors.iter()) {
            m = m + outer(v, v).mapv(|z| z * *w);
        }
        m
    }

    pub fn validate_against(&self, rho: &CMatrix, tol: f64) -> Result<()> {
        if self.weights.len() != self.vectors.len() {
            return Err(Error::DimensionMismatch {
                left: self.weights.len(),
                right: self.vectors.len(),
            });
        }
        let residual = frobenius_norm(&(&self.reconstruct() - rho));
        if residual >= tol * frobenius_norm(rho).max(1.0) {
            return Err(Error::BadDecomposition { residual });
        }
        Ok(())
    }
}

type DecompositionEvaluator = Arc<dyn Fn(&[f64]) -> Result<ConvexDecomposition> + Send + Sync>;

/// A convex decomposition given as a function of the parameter, so both its
/// weights and vectors can be differentiated. Components must be returned in
/// a consistent order across nearby parameter values.
#[derive(Clone)]
pub struct ConvexDecompositionFamily {
    evaluator: DecompositionEvaluator,
}

impl ConvexDecompositionFamily {
    pub fn new<F>(evaluator: F) -> Self
    where
        F: Fn(&[f64]) -> Result<ConvexDecomposition> + Send + Sync + 'static,
    {
        ConvexDecompositionFamily {
            evaluator: Arc::new(evaluator),
        }
    }

    /// The spectral decomposition of a family, restricted to the support.
    pub fn spectral(state: &ParametricState, rank_tol: f64, deg_tol: f64) -> Self {
        let state = state.clone();
        ConvexDecompositionFamily::new(move |x: &[f64]| {
            let spec = crate::state::spectral_at(&state, x, rank_tol, deg_tol)?;
            Ok(ConvexDecomposition {
                weights: spec.eigenvalues[..spec.global_rank].to_vec(),
                vectors: (0..spec.global_rank).map(|n| spec.eigenvector(n)).collect(),
            })
        })
    }

    pub fn at(&self, x: &[f64]) -> Result<ConvexDecomposition> {
        (self.evaluator)(x)
    }
}

/// Pure-state QFI 4(⟨∂ψ|∂ψ⟩ − |⟨ψ|∂ψ⟩|²).
pub fn pure_qfi(psi: &CVector, dpsi: &CVector) -> f64 {
    let dd = inner(dpsi, dpsi).re;
    let pd = inner(psi, dpsi).norm_sqr();
    4.0 * (dd - pd)
}

/// Gap of the generalized convexity inequality,
/// Σₙ (I^cl[pₙ] + pₙ I^Q[ψₙ]) − I^Q[ρ] ≥ 0,
/// evaluated by central differences of the decomposition family.
///
/// Zero (within round-off) exactly when the decomposition is the spectral
/// one of a non-degenerate quasi-pure state.
pub fn convexity_gap(
    decomp: &ConvexDecompositionFamily,
    state: &ParametricState,
    x: &[f64],
    param: usize,
    step: Option<f64>,
) -> Result<f64> {
    let rho = density_at(state, x)?;
    let center = decomp.at(x)?;
    center.validate_against(&rho, 1e-9)?;
    let h = step.unwrap_or_else(|| state.fd_step(x, param));
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[param] += h;
    xm[param] -= h;
    let plus = decomp.at(&xp)?;
    let minus = decomp.at(&xm)?;
    if plus.weights.len() != center.weights.len() || minus.weights.len() != center.weights.len() {
        return Err(Error::BadDecomposition { residual: f64::NAN });
    }

    let mut bound = 0.0;
    for n in 0..center.weights.len() {
        let p = center.weights[n];
        let dp = (plus.weights[n] - minus.weights[n]) / (2.0 * h);
        if p <= 1e-300 {
            return Err(Error::BadDecomposition { residual: p });
        }
        // Phase-align the neighbours to the central vector before differencing.
        let psi = &center.vectors[n];
        let psi_p = align_phase(psi, &plus.vectors[n]);
        let psi_m = align_phase(psi, &minus.vectors[n]);
        let dpsi = (&psi_p - &psi_m).mapv(|z| z / (2.0 * h));
        bound += dp * dp / p + p * pure_qfi(psi, &dpsi);
    }
    let qfi = qfi_of_state(state, x, param)?;
    Ok(bound - qfi)
}

fn align_phase(reference: &CVector, v: &CVector) -> CVector {
    let ov = inner(v, reference);
    if ov.norm() <= 1e-300 {
        return v.clone();
    }
    let phase = ov / ov.norm();
    v.mapv(|z| z * phase)
}

/// Worst antisymmetry of the covariant-derivative overlaps across a pair of
/// estimation parameters:
/// max_{k,l} |⟨𝒟ᵢφ_k|𝒟ⱼφ_l⟩ − ⟨𝒟ⱼφ_k|𝒟ᵢφ_l⟩|.
///
/// Returns zero for i = j by symmetry. For a pure state this equals the weak
/// commutativity residual 2|Im⟨𝒟ᵢψ|𝒟ⱼψ⟩|.
pub fn partial_comm_residual_pair(
    state: &ParametricState,
    x: &[f64],
    spectral: &SpectralData,
    i: usize,
    j: usize,
) -> Result<f64> {
    if state.num_params() < 2 {
        return Err(Error::NeedTwoParams {
            found: state.num_params(),
        });
    }
    if i == j {
        return Ok(0.0);
    }
    let derivs_i = spectral_derivatives(state, x, spectral, i, None)?;
    let derivs_j = spectral_derivatives(state, x, spectral, j, None)?;
    let cov_i = covariant_derivatives(spectral, &derivs_i);
    let cov_j = covariant_derivatives(spectral, &derivs_j);
    check_quasi_pure(spectral, &derivs_i, &cov_i, QUASI_PURE_TOL)?;
    check_quasi_pure(spectral, &derivs_j, &cov_j, QUASI_PURE_TOL)?;
    let mut worst = 0.0f64;
    for k in 0..spectral.global_rank {
        for l in 0..spectral.global_rank {
            let forward = inner(&cov_i[k], &cov_j[l]);
            let reverse = inner(&cov_j[k], &cov_i[l]);
            worst = worst.max((forward - reverse).norm());
        }
    }
    Ok(worst)
}

/// Maximum of [`partial_comm_residual_pair`] over all parameter pairs.
pub fn partial_comm_residual(
    state: &ParametricState,
    x: &[f64],
    spectral: &SpectralData,
) -> Result<f64> {
    if state.num_params() < 2 {
        return Err(Error::NeedTwoParams {
            found: state.num_params(),
        });
    }
    let mut worst = 0.0f64;
    for i in 0..state.num_params() {
        for j in i + 1..state.num_params() {
            worst = worst.max(partial_comm_residual_pair(state, x, spectral, i, j)?);
        }
    }
    Ok(worst)
}
