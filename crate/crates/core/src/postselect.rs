//! Postselection machinery: POVM construction for the lossless schemes,
//! measurement application, postselected states, success probabilities, the
//! ε₀/ε₁ error metrics, and amplification ratios.
//!
//! The binary constructions keep one desired outcome
//! E_✓(x★) = Π_aux(x★) + λ_✓ Π_r(x★) with Π_aux the kernel or tangent
//! projector, the multi-outcome variant splits Π_aux across outcomes with
//! weights μ_ω, and the multi-parameter form is E_✓ = 𝟙 + (λ_✓ − 1)Π_r.
//! The discard element E_× = 𝟙 − Σ_✓ E_ω is always materialized and checked
//! for positivity rather than left implicit.

use ndarray::Array2;


use crate::error::{Error, Result};
use crate::linalg::{
    self, dagger, eig_hermitian, frobenius_norm, hermitize, identity, spectral_norm, sqrt_psd,
    CMatrix, C_ZERO,
};
use crate::qfi::{qfi_of_pair, sld_general, SLD_RANK_TOL};
use crate::state::{
    density_at, derivative_at, spectral_at, tangent_projector, ParametricState, DEG_TOL,
};

/// Completeness tolerance: Σ_ω E_ω must equal the identity to this accuracy.
pub const COMPLETENESS_TOL: f64 = 1e-12;
/// Projector inputs must satisfy ‖P² − P‖_F below this.
pub const PROJECTOR_TOL: f64 = 1e-10;

/// One POVM element and whether it belongs to the desired subset ✓.
#[derive(Debug, Clone)]
pub struct PovmElement {
    pub id: String,
    pub operator: CMatrix,
    pub kept: bool,
}

/// A positive operator-valued measure with postselection metadata.
#[derive(Debug, Clone)]
pub struct Povm {
    pub elements: Vec<PovmElement>,
    /// Prior-knowledge reference point the projectors were built at.
    pub reference_point: Option<Vec<f64>>,
    /// λ_ω of the kept elements, in element order.
    pub lambdas: Vec<f64>,
    /// μ_ω of the kept elements where applicable (multi-outcome modes).
    pub weights: Vec<f64>,
}

impl Povm {
    /// The trivial single-outcome measure {𝟙}.
    pub fn trivial(dim: usize) -> Povm {
        Povm {
            elements: vec![PovmElement {
                id: "identity".into(),
                operator: identity(dim),
                kept: true,
            }],
            reference_point: None,
            lambdas: vec![],
            weights: vec![],
        }
    }

    pub fn from_elements(elements: Vec<PovmElement>) -> Povm {
        Povm {
            elements,
            reference_point: None,
            lambdas: vec![],
            weights: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.elements.first().map_or(0, |e| e.operator.nrows())
    }

    /// Completeness and positivity of every element.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::InvalidPovm {
                reason: "empty POVM".into(),
            });
        }
        let mut sum = Array2::from_elem((dim, dim), C_ZERO);
        for element in &self.elements {
            if element.operator.dim() != (dim, dim) {
                return Err(Error::InvalidPovm {
                    reason: format!("element {} has inconsistent dimension", element.id),
                });
            }
            let spec = eig_hermitian(&element.operator).map_err(|e| Error::InvalidPovm {
                reason: format!("element {}: {e}", element.id),
            })?;
            let min_eig = spec.eigenvalues.last().copied().unwrap_or(0.0);
            let scale = spec.eigenvalues.first().copied().unwrap_or(0.0).abs();
            if min_eig < -1e-12 * scale.max(1.0) {
                return Err(Error::InvalidPovm {
                    reason: format!("element {} not PSD (min eig {min_eig:.3e})", element.id),
                });
            }
            sum = sum + &element.operator;
        }
        let defect = frobenius_norm(&(&sum - &identity(dim)));
        if defect >= COMPLETENESS_TOL {
            return Err(Error::InvalidPovm {
                reason: format!("completeness defect {defect:.3e}"),
            });
        }
        Ok(())
    }

    pub fn kept_elements(&self) -> impl Iterator<Item = &PovmElement> {
        self.elements.iter().filter(|e| e.kept)
    }
}

/// Which lossless construction to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PovmMode {
    /// E_✓ = Π_k + λ Π_r (kernel-based binary).
    KernelBinary,
    /// E_✓ = Π_t + λ Π_r (tangent-space binary).
    TangentBinary,
    /// E_ω = μ_ω Π_aux + λ_ω Π_r over several desired outcomes.
    Multi,
    /// E_✓ = 𝟙 + (λ − 1) Π_r, or μ_ω 𝟙 + (λ_ω − μ_ω) Π_r with weights.
    MultiParam,
    /// Pure-state special case: Π_r = |ψ⟩⟨ψ|, Π_aux = |ψ^⊥⟩⟨ψ^⊥|.
    Pure,
}

fn check_projector(p: &CMatrix) -> Result<()> {
    let herm = frobenius_norm(&(p - &dagger(p)));
    let idem = frobenius_norm(&(&p.dot(p) - p));
    if herm >= PROJECTOR_TOL || idem >= PROJECTOR_TOL {
        return Err(Error::NotAProjector {
            residual: herm.max(idem),
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    // λ = 1 would be the trivial identity postselection; it is excluded along
    // with everything outside (0, 1).
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::LambdaOutOfRange { value: lambda });
    }
    Ok(())
}

/// Build a lossless postselection POVM from the support projector and the
/// auxiliary projector required by the mode (kernel, tangent, or normalized
/// covariant-derivative projector; ignored for `MultiParam`).
///
/// `extra` may supply an additional positive operator supported outside both
/// projectors; it is folded into the first kept element and must not change
/// the postselected information.
pub fn build_povm(
    mode: PovmMode,
    support_proj: &CMatrix,
    aux_proj: Option<&CMatrix>,
    lambdas: &[f64],
    weights: Option<&[f64]>,
    reference_point: Option<Vec<f64>>,
) -> Result<Povm> {
    build_povm_with_extra(mode, support_proj, aux_proj, lambdas, weights, reference_point, None)
}

pub fn build_povm_with_extra(
    mode: PovmMode,
    support_proj: &CMatrix,
    aux_proj: Option<&CMatrix>,
    lambdas: &[f64],
    weights: Option<&[f64]>,
    reference_point: Option<Vec<f64>>,
    extra: Option<&CMatrix>,
) -> Result<Povm> {
    let dim = support_proj.nrows();
    check_projector(support_proj)?;
    for &l in lambdas {
        check_lambda(l)?;
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidPovm {
            reason: "at least one lambda required".into(),
        });
    }

    let aux = |required: &str| -> Result<&CMatrix> {
        aux_proj.ok_or_else(|| Error::InvalidPovm {
            reason: format!("{required} requires an auxiliary projector"),
        })
    };

    let mut kept: Vec<CMatrix> = Vec::new();
    let mut mus: Vec<f64> = Vec::new();
    match mode {
        PovmMode::KernelBinary | PovmMode::TangentBinary | PovmMode::Pure => {
            if lambdas.len() != 1 {
                return Err(Error::InvalidPovm {
                    reason: "binary modes take exactly one lambda".into(),
                });
            }
            let p_aux = aux(match mode {
                PovmMode::KernelBinary => "kernel mode",
                PovmMode::Pure => "pure mode",
                _ => "tangent mode",
            })?;
            check_projector(p_aux)?;
            if mode == PovmMode::Pure {
                let rank_r = linalg::trace(support_proj).re;
                let rank_t = linalg::trace(p_aux).re;
                if (rank_r - 1.0).abs() > 1e-8 || (rank_t - 1.0).abs() > 1e-8 {
                    return Err(Error::NotAProjector {
                        residual: (rank_r - 1.0).abs().max((rank_t - 1.0).abs()),
                    });
                }
            }
            kept.push(p_aux + &support_proj.mapv(|z| z * lambdas[0]));
        }
        PovmMode::Multi => {
            let p_aux = aux("multi mode")?;
            check_projector(p_aux)?;
            let mu = weights.ok_or_else(|| Error::InvalidPovm {
                reason: "multi mode requires outcome weights".into(),
            })?;
            if mu.len() != lambdas.len() {
                return Err(Error::InvalidPovm {
                    reason: "weights and lambdas must pair up".into(),
                });
            }
            let total: f64 = mu.iter().sum();
            if (total - 1.0).abs() >= COMPLETENESS_TOL {
                return Err(Error::InvalidPovm {
                    reason: format!("outcome weights sum to {total}"),
                });
            }
            for (&m, &l) in mu.iter().zip(lambdas.iter()) {
                if m < 0.0 {
                    return Err(Error::InvalidPovm {
                        reason: format!("negative outcome weight {m}"),
                    });
                }
                kept.push(p_aux.mapv(|z| z * m) + &support_proj.mapv(|z| z * l));
            }
            mus = mu.to_vec();
        }
        PovmMode::MultiParam => {
            match weights {
                None => {
                    if lambdas.len() != 1 {
                        return Err(Error::InvalidPovm {
                            reason: "binary multi-parameter mode takes one lambda".into(),
                        });
                    }
                    kept.push(
                        identity(dim) + &support_proj.mapv(|z| z * (lambdas[0] - 1.0)),
                    );
                }
                Some(mu) => {
                    if mu.len() != lambdas.len() {
                        return Err(Error::InvalidPovm {
                            reason: "weights and lambdas must pair up".into(),
                        });
                    }
                    let total: f64 = mu.iter().sum();
                    if (total - 1.0).abs() >= COMPLETENESS_TOL {
                        return Err(Error::InvalidPovm {
                            reason: format!("outcome weights sum to {total}"),
                        });
                    }
                    for (&m, &l) in mu.iter().zip(lambdas.iter()) {
                        kept.push(
                            identity(dim).mapv(|z| z * m)
                                + &support_proj.mapv(|z| z * (l - m)),
                        );
                    }
                    mus = mu.to_vec();
                }
            }
        }
    }

    if let Some(op) = extra {
        // Positive operator supported outside the postselection subspaces.
        let spec = eig_hermitian(op)?;
        let min_eig = spec.eigenvalues.last().copied().unwrap_or(0.0);
        if min_eig < -1e-12 {
            return Err(Error::NotPsd {
                min_eigenvalue: min_eig,
            });
        }
        let mut occupied = support_proj.clone();
        if let Some(p_aux) = aux_proj {
            occupied = occupied + p_aux;
        }
        let overlap = frobenius_norm(&occupied.dot(op));
        if overlap >= 1e-10 * frobenius_norm(op).max(1.0) {
            return Err(Error::InvalidPovm {
                reason: format!("extra operator overlaps the postselection span ({overlap:.3e})"),
            });
        }
        kept[0] = &kept[0] + op;
    }

    let mut sum_kept = Array2::from_elem((dim, dim), C_ZERO);
    for e in &kept {
        sum_kept = sum_kept + e;
    }
    let discard = identity(dim) - &sum_kept;
    let spec = eig_hermitian(&hermitize(&discard))?;
    let min_eig = spec.eigenvalues.last().copied().unwrap_or(0.0);
    if min_eig < -1e-12 {
        return Err(Error::IncompletePovm {
            min_eigenvalue: min_eig,
        });
    }

    let mut elements: Vec<PovmElement> = kept
        .into_iter()
        .enumerate()
        .map(|(i, operator)| PovmElement {
            id: format!("keep{i}"),
            operator,
            kept: true,
        })
        .collect();
    elements.push(PovmElement {
        id: "discard".into(),
        operator: discard,
        kept: false,
    });

    let povm = Povm {
        elements,
        reference_point,
        lambdas: lambdas.to_vec(),
        weights: mus,
    };
    povm.validate()?;
    Ok(povm)
}

/// Measurement operator M = U √E for one POVM element.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    pub matrix: CMatrix,
    pub unitary_part: Option<CMatrix>,
}

/// M = U √E; U defaults to the identity and must be unitary when given.
pub fn measurement_from_povm(e: &CMatrix, u: Option<&CMatrix>) -> Result<MeasurementOperator> {
    let root = sqrt_psd(e)?;
    let matrix = match u {
        None => root,
        Some(u) => {
            let defect = frobenius_norm(&(&dagger(u).dot(u) - &identity(u.nrows())));
            if defect > 1e-10 {
                return Err(Error::NotUnitary { residual: defect });
            }
            u.dot(&root)
        }
    };
    Ok(MeasurementOperator {
        matrix,
        unitary_part: u.cloned(),
    })
}

/// Postselected state σ = MρM†/p with its success probability p = Tr[MρM†].
pub fn apply_measurement(m: &MeasurementOperator, rho: &CMatrix) -> Result<(CMatrix, f64)> {
    let transformed = hermitize(&m.matrix.dot(rho).dot(&dagger(&m.matrix)));
    let p = linalg::trace(&transformed).re;
    if p <= 1e-14 {
        return Err(Error::ZeroSuccessProbability { value: p });
    }
    Ok((transformed.mapv(|z| z / p), p))
}

/// Norm used for the ε error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Frobenius,
    Spectral,
}

fn matrix_norm(m: &CMatrix, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Frobenius => Ok(frobenius_norm(m)),
        NormKind::Spectral => spectral_norm(m),
    }
}

/// Quality report of one binary postselection at (x, x★, λ).
///
/// ε₀ = ‖σ(x|✓) − ρ(x)‖ and ε₁ = ‖∂ₓσ(x|✓) − ∂ₓρ(x)/√λ‖ vanish exactly when
/// the family is quasi-pure and the prior matches the truth; the
/// amplification ratio λ · I^Q[σ]/I^Q[ρ] is 1 in the lossless regime.
#[derive(Debug, Clone)]
pub struct PostselectionReport {
    pub p_success: f64,
    pub sigma: CMatrix,
    pub dsigma: CMatrix,
    pub eps0: f64,
    pub eps1: f64,
    pub qfi_rho: f64,
    pub qfi_post: f64,
    pub amplification_ratio: f64,
    pub norm_kind: NormKind,
    pub lambda: f64,
}

/// Evaluate the error metrics for an explicit measurement operator held
/// fixed while x varies. ∂ₓσ is a central difference with step `h`.
pub fn postselection_report_with_measurement(
    state: &ParametricState,
    x: &[f64],
    m: &MeasurementOperator,
    lambda: f64,
    norm_kind: NormKind,
    h: Option<f64>,
) -> Result<PostselectionReport> {
    check_lambda(lambda)?;
    let rho = density_at(state, x)?;
    let drho = derivative_at(state, x, 0)?;
    let (sigma, p_success) = apply_measurement(m, &rho)?;

    // The postselected family varies on the scale √λ around the prior, so
    // the difference quotient of σ needs a step that shrinks with λ to keep
    // its truncation error flat across postselection strengths.
    let step = h.unwrap_or_else(|| state.fd_step(x, 0) * (10.0 * lambda.sqrt()).min(1.0));
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[0] += step;
    xm[0] -= step;
    let (sigma_p, _) = apply_measurement(m, &density_at(state, &xp)?)?;
    let (sigma_m, _) = apply_measurement(m, &density_at(state, &xm)?)?;
    let dsigma = (&sigma_p - &sigma_m).mapv(|z| z / (2.0 * step));

    let eps0 = matrix_norm(&(&sigma - &rho), norm_kind)?;
    let amplified = drho.mapv(|z| z / lambda.sqrt());
    let eps1 = matrix_norm(&(&dsigma - &amplified), norm_kind)?;

    let l_rho = sld_general(&rho, &drho, SLD_RANK_TOL)?;
    let qfi_rho = crate::qfi::qfi_from_sld(&rho, &l_rho)?;
    let qfi_post = qfi_of_pair(&sigma, &dsigma, SLD_RANK_TOL)?;
    let amplification_ratio = if qfi_rho > 0.0 {
        lambda * qfi_post / qfi_rho
    } else {
        f64::NAN
    };
    Ok(PostselectionReport {
        p_success,
        sigma,
        dsigma,
        eps0,
        eps1,
        qfi_rho,
        qfi_post,
        amplification_ratio,
        norm_kind,
        lambda,
    })
}

/// Build the tangent-space binary POVM at the prior x★ from the state's own
/// spectral data, then evaluate the error metrics at x.
///
/// `rank_tol` controls the effective rank at x★: a loose value treats an
/// almost-pure state as pure, which is the right reading near an isolated
/// rank-deficient point such as coincident sources.
pub fn postselection_report(
    state: &ParametricState,
    x: &[f64],
    x_star: &[f64],
    lambda: f64,
    norm_kind: NormKind,
    h: Option<f64>,
    rank_tol: f64,
) -> Result<PostselectionReport> {
    check_lambda(lambda)?;
    let spectral = spectral_at(state, x_star, rank_tol, DEG_TOL)?;
    let tangent = tangent_projector(state, x_star, &spectral)?;
    let povm = build_povm(
        PovmMode::TangentBinary,
        &spectral.support_projector,
        Some(&tangent),
        &[lambda],
        None,
        Some(x_star.to_vec()),
    )?;
    let kept = povm
        .kept_elements()
        .next()
        .expect("binary POVM has a kept element");
    let m = measurement_from_povm(&kept.operator, None)?;
    postselection_report_with_measurement(state, x, &m, lambda, norm_kind, h)
}

/// Detector-saturation threshold for postselected imaging.
#[derive(Debug, Clone, Copy)]
pub struct SaturationThreshold {
    /// Critical photon number N_cr = T·γ.
    pub n_cr: f64,
    /// Largest useful postselection probability, min(1, T·γ/N).
    pub lambda_max: f64,
    /// Whether postselection offers an advantage (N > N_cr).
    pub advantage: bool,
}

/// N photons over duration T with detection rate γ: postselection pays off
/// once N exceeds N_cr = Tγ, with λ_✓ tuned below Tγ/N.
pub fn saturation_threshold(n_photons: f64, duration: f64, rate: f64) -> Result<SaturationThreshold> {
    for value in [n_photons, duration, rate] {
        if !(value > 0.0) {
            return Err(Error::NonPositiveInput { value });
        }
    }
    let n_cr = duration * rate;
    Ok(SaturationThreshold {
        n_cr,
        lambda_max: (n_cr / n_photons).min(1.0),
        advantage: n_photons > n_cr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{basis_vector, outer, span_projector, unitary_from_generator};
    use num_complex::Complex64;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orthogonal_projectors(dim: usize, r1: usize, r2: usize) -> (CMatrix, CMatrix) {
        let p1 = span_projector(
            &(0..r1).map(|i| basis_vector(dim, i)).collect::<Vec<_>>(),
            1e-10,
        )
        .unwrap();
        let p2 = span_projector(
            &(r1..r1 + r2).map(|i| basis_vector(dim, i)).collect::<Vec<_>>(),
            1e-10,
        )
        .unwrap();
        (p1, p2)
    }

    #[test]
    fn lambda_one_rejected() {
        let (pk, pr) = orthogonal_projectors(4, 2, 1);
        match build_povm(PovmMode::KernelBinary, &pr, Some(&pk), &[1.0], None, None) {
            Err(Error::LambdaOutOfRange { .. }) => {}
            other => panic!("expected LambdaOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn kernel_binary_completeness() {
        let (pk, pr) = orthogonal_projectors(4, 3, 1);
        let povm =
            build_povm(PovmMode::KernelBinary, &pr, Some(&pk), &[0.25], None, None).unwrap();
        povm.validate().unwrap();
        assert_eq!(povm.elements.len(), 2);
    }

    #[test]
    fn multi_mode_completeness() {
        let (pt, pr) = orthogonal_projectors(5, 2, 2);
        let povm = build_povm(
            PovmMode::Multi,
            &pr,
            Some(&pt),
            &[0.01, 0.02],
            Some(&[0.5, 0.5]),
            None,
        )
        .unwrap();
        povm.validate().unwrap();
        assert_eq!(povm.kept_elements().count(), 2);
    }

    #[test]
    fn multiparam_mode_completeness() {
        let (_, pr) = orthogonal_projectors(4, 1, 2);
        let povm = build_povm(PovmMode::MultiParam, &pr, None, &[0.1], None, None).unwrap();
        povm.validate().unwrap();
        // Discard element is (1-λ)Π_r.
        let discard = &povm.elements.last().unwrap().operator;
        let expect = pr.mapv(|z| z * 0.9);
        assert!(frobenius_norm(&(discard - &expect)) < 1e-12);
    }

    #[test]
    fn non_projector_rejected() {
        let mut bad = identity(3);
        bad[(0, 0)] = Complex64::new(0.5, 0.0);
        let (_, pr) = orthogonal_projectors(3, 1, 1);
        match build_povm(PovmMode::KernelBinary, &pr, Some(&bad), &[0.1], None, None) {
            Err(Error::NotAProjector { .. }) => {}
            other => panic!("expected NotAProjector, got {other:?}"),
        }
    }

    #[test]
    fn measurement_of_projector_is_projector() {
        let (_, pr) = orthogonal_projectors(3, 1, 2);
        let m = measurement_from_povm(&pr, None).unwrap();
        assert!(frobenius_norm(&(&m.matrix - &pr)) < 1e-10);
    }

    #[test]
    fn measurement_of_projector_combination() {
        let (pk, pr) = orthogonal_projectors(4, 2, 2);
        let lambda = 0.04;
        let e = &pk + &pr.mapv(|z| z * lambda);
        let m = measurement_from_povm(&e, None).unwrap();
        let expect = &pk + &pr.mapv(|z| z * lambda.sqrt());
        assert!(frobenius_norm(&(&m.matrix - &expect)) < 1e-10);
    }

    #[test]
    fn measurement_reconstructs_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dim = 4;
        let mut a = Array2::from_elem((dim, dim), C_ZERO);
        for i in 0..dim {
            for j in 0..dim {
                a[(i, j)] = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let e = hermitize(&a.dot(&dagger(&a))).mapv(|z| z * 0.1);
        let g = hermitize(&a);
        let u = unitary_from_generator(&g, 0.9).unwrap();
        let m = measurement_from_povm(&e, Some(&u)).unwrap();
        let rebuilt = dagger(&m.matrix).dot(&m.matrix);
        assert!(frobenius_norm(&(&rebuilt - &e)) < 1e-10 * frobenius_norm(&e).max(1.0));
    }

    #[test]
    fn non_unitary_part_rejected() {
        let (_, pr) = orthogonal_projectors(3, 1, 1);
        let shrunk = identity(3).mapv(|z| z * 0.9);
        match measurement_from_povm(&pr, Some(&shrunk)) {
            Err(Error::NotUnitary { .. }) => {}
            other => panic!("expected NotUnitary, got {other:?}"),
        }
    }

    #[test]
    fn identity_measurement_is_transparent() {
        let rho = {
            let e0 = basis_vector(2, 0);
            outer(&e0, &e0)
        };
        let m = measurement_from_povm(&identity(2), None).unwrap();
        let (sigma, p) = apply_measurement(&m, &rho).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-14);
        assert!(frobenius_norm(&(&sigma - &rho)) < 1e-13);
    }

    #[test]
    fn quasi_pure_success_probability_is_lambda() {
        // ρ supported on Π_r: M = Π_t + √λ Π_r gives p = λ exactly.
        let (pt, pr) = orthogonal_projectors(4, 2, 2);
        let rho = pr.mapv(|z| z * 0.5);
        let lambda: f64 = 1e-4;
        let m = MeasurementOperator {
            matrix: &pt + &pr.mapv(|z| z * lambda.sqrt()),
            unitary_part: None,
        };
        let (sigma, p) = apply_measurement(&m, &rho).unwrap();
        assert_abs_diff_eq!(p, lambda, epsilon = 1e-12);
        assert!(frobenius_norm(&(&sigma - &rho)) < 1e-12);
    }

    #[test]
    fn saturation_threshold_examples() {
        let t = saturation_threshold(1e8, 1.0, 1e6).unwrap();
        assert_abs_diff_eq!(t.n_cr, 1e6, epsilon = 1e-6);
        assert_abs_diff_eq!(t.lambda_max, 0.01, epsilon = 1e-12);
        assert!(t.advantage);

        let balanced = saturation_threshold(1e6, 1.0, 1e6).unwrap();
        assert_abs_diff_eq!(balanced.lambda_max, 1.0, epsilon = 1e-12);
        assert!(!balanced.advantage);

        let weak = saturation_threshold(1e5, 1.0, 1e6).unwrap();
        assert_abs_diff_eq!(weak.lambda_max, 1.0, epsilon = 1e-12);
        assert!(!weak.advantage);

        assert!(matches!(
            saturation_threshold(0.0, 1.0, 1.0),
            Err(Error::NonPositiveInput { .. })
        ));
    }

    #[test]
    fn extra_operator_must_avoid_the_span() {
        let (pt, pr) = orthogonal_projectors(5, 1, 2);
        // Legitimate extra: supported on the remaining direction.
        let extra_ok = {
            let e4 = basis_vector(5, 4);
            outer(&e4, &e4).mapv(|z| z * 0.5)
        };
        build_povm_with_extra(
            PovmMode::TangentBinary,
            &pr,
            Some(&pt),
            &[0.1],
            None,
            None,
            Some(&extra_ok),
        )
        .unwrap()
        .validate()
        .unwrap();
        // Overlapping extra is rejected.
        let overlapping = pr.mapv(|z| z * 0.3);
        assert!(build_povm_with_extra(
            PovmMode::TangentBinary,
            &pr,
            Some(&pt),
            &[0.1],
            None,
            None,
            Some(&overlapping),
        )
        .is_err());
    }
}
