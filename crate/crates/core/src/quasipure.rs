//! Quasi-pure detection: a family ρ(x) is quasi-pure at x when its
//! derivative has no support–support block, Π_r ∂ₓρ Π_r = 0. The module
//! quantifies the violation through the equivalent criteria — spectral
//! residual, eigenvalue drift with pairwise orthogonality, covariant
//! derivative overlaps, and the convex-decomposition matrix elements — and
//! reports them side by side so disagreements surface instead of being
//! silently absorbed.

use crate::error::Result;
use crate::linalg::{frobenius_norm, inner, CMatrix};
use crate::qfi::ConvexDecomposition;
use crate::state::{
    density_at, derivative_at, spectral_at, spectral_derivatives, ParametricState, SpectralData,
    DEG_TOL,
};

/// Tolerances of the quasi-pure criteria. All residuals are absolute; states
/// are trace-normalized so the natural scale is 1.
#[derive(Debug, Clone, Copy)]
pub struct QuasiPureTolerances {
    /// Verdict threshold on the spectral residual ‖Π_r ∂ρ Π_r‖_F.
    pub quasi_pure_tol: f64,
    /// Rank cutoff (relative to the largest eigenvalue).
    pub rank_tol: f64,
    /// Eigenvalue-gap threshold of the degeneracy branch of the pairwise
    /// criterion (relative to the largest eigenvalue).
    pub deg_tol: f64,
    /// Orthogonality threshold |⟨∂φ_k|φ_l⟩| of the pairwise criterion.
    pub ortho_tol: f64,
    /// Override of the finite-difference step for the derivative data.
    pub fd_step: Option<f64>,
}

impl Default for QuasiPureTolerances {
    fn default() -> Self {
        QuasiPureTolerances {
            quasi_pure_tol: 1e-8,
            rank_tol: crate::linalg::RANK_TOL,
            deg_tol: DEG_TOL,
            ortho_tol: 1e-8,
            fd_step: None,
        }
    }
}

impl QuasiPureTolerances {
    /// Looser thresholds for reporting approximate quasi-purity near an
    /// isolated rank-deficient point. The rank cutoff is loosened together
    /// with the verdict threshold so that eigenvalues treated as noise are
    /// also treated as kernel; only then does the residual of an
    /// almost-pure state vanish with the separation.
    pub fn approximate(tol: f64) -> Self {
        QuasiPureTolerances {
            quasi_pure_tol: tol,
            rank_tol: tol,
            ..QuasiPureTolerances::default()
        }
    }
}

/// Pairwise record of the eigenvalue/orthogonality criterion for k ≠ l:
/// the pair passes when the eigenvalues coincide within the degeneracy
/// tolerance or the derivative of one eigenvector is orthogonal to the
/// other.
#[derive(Debug, Clone)]
pub struct PairwiseEntry {
    pub k: usize,
    pub l: usize,
    pub eigenvalue_gap: f64,
    pub derivative_overlap: f64,
    pub passes: bool,
}

/// All quasi-pure residuals at a single parameter point.
#[derive(Debug, Clone)]
pub struct QuasiPureReport {
    /// ‖Π_r ∂ₓρ Π_r‖_F — the defining residual.
    pub residual_spectral: f64,
    /// max_n |∂ₓqₙ| over the support.
    pub eigenvalue_drift: f64,
    pub pairwise: Vec<PairwiseEntry>,
    /// max_{k,l} |⟨𝒟ₓφ_k|φ_l⟩| over the support.
    pub gencoder_residual: f64,
    /// max_{k,l} |⟨ψ_k|∂ₓρ|ψ_l⟩| over a supplied convex decomposition.
    pub convex_residual: Option<f64>,
    /// Verdict from the spectral residual at `quasi_pure_tol`.
    pub verdict: bool,
    /// Verdict from eigenvalue drift plus the pairwise criterion.
    pub verdict_eigen_criteria: bool,
    /// Verdict from eigenvalue drift plus the covariant-derivative overlaps.
    pub verdict_gencoder: bool,
    /// Verdict from the convex criterion, when a decomposition was supplied.
    pub verdict_convex: Option<bool>,
    pub tolerances: QuasiPureTolerances,
}

/// ‖Π_r ∂ₓρ Π_r‖_F at x for the first parameter.
pub fn residual_spectral(state: &ParametricState, x: &[f64], rank_tol: f64) -> Result<f64> {
    let spectral = spectral_at(state, x, rank_tol, DEG_TOL)?;
    let drho = derivative_at(state, x, 0)?;
    Ok(spectral_residual_of(&spectral, &drho))
}

/// The residual for one parameter of an already-computed pair.
pub fn spectral_residual_of(spectral: &SpectralData, drho: &CMatrix) -> f64 {
    let p = &spectral.support_projector;
    frobenius_norm(&p.dot(drho).dot(p))
}

/// Evaluate every criterion at x (first parameter). The optional convex
/// decomposition must reconstruct ρ(x); its vectors are probed against ∂ₓρ.
pub fn criteria_report(
    state: &ParametricState,
    x: &[f64],
    decomp: Option<&ConvexDecomposition>,
    tols: QuasiPureTolerances,
) -> Result<QuasiPureReport> {
    let spectral = spectral_at(state, x, tols.rank_tol, tols.deg_tol)?;
    let drho = derivative_at(state, x, 0)?;
    let residual = spectral_residual_of(&spectral, &drho);

    let derivs = spectral_derivatives(state, x, &spectral, 0, tols.fd_step)?;
    let eigenvalue_drift = derivs
        .eigenvalue_derivs
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));

    let d_r = spectral.global_rank;
    let q1 = spectral.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let deg_gap = tols.deg_tol * q1.max(1e-300);
    let mut pairwise = Vec::new();
    let mut pairwise_ok = true;
    for k in 0..d_r {
        for l in 0..d_r {
            if k == l {
                continue;
            }
            let gap = (spectral.eigenvalues[k] - spectral.eigenvalues[l]).abs();
            let phi_l = spectral.eigenvector(l);
            let overlap = inner(&derivs.eigenvector_derivs[k], &phi_l).norm();
            let passes = gap < deg_gap || overlap < tols.ortho_tol;
            pairwise_ok &= passes;
            pairwise.push(PairwiseEntry {
                k,
                l,
                eigenvalue_gap: gap,
                derivative_overlap: overlap,
                passes,
            });
        }
    }

    // Covariant derivatives over the finite-difference clusters.
    let mut gencoder_residual = 0.0f64;
    for group in &derivs.fd_groups {
        for &n in group {
            let dphi = &derivs.eigenvector_derivs[n];
            let mut cov = dphi.clone();
            for &m in group {
                let phi_m = spectral.eigenvector(m);
                let coef = inner(&phi_m, dphi);
                cov = cov - phi_m.mapv(|z| z * coef);
            }
            for l in 0..d_r {
                let phi_l = spectral.eigenvector(l);
                gencoder_residual = gencoder_residual.max(inner(&cov, &phi_l).norm());
            }
        }
    }

    let drift_ok = eigenvalue_drift < tols.quasi_pure_tol;
    let mut convex_residual = None;
    let mut verdict_convex = None;
    if let Some(decomposition) = decomp {
        let rho = density_at(state, x)?;
        decomposition.validate_against(&rho, 1e-9)?;
        let mut worst = 0.0f64;
        for psi_k in &decomposition.vectors {
            let dr_psi = drho.dot(psi_k);
            for psi_l in &decomposition.vectors {
                worst = worst.max(inner(psi_l, &dr_psi).norm());
            }
        }
        convex_residual = Some(worst);
        verdict_convex = Some(worst < tols.quasi_pure_tol);
    }

    Ok(QuasiPureReport {
        residual_spectral: residual,
        eigenvalue_drift,
        pairwise,
        gencoder_residual,
        convex_residual,
        verdict: residual < tols.quasi_pure_tol,
        verdict_eigen_criteria: drift_ok && pairwise_ok,
        verdict_gencoder: drift_ok && gencoder_residual < tols.quasi_pure_tol,
        verdict_convex,
        tolerances: tols,
    })
}
