//! Seeded cross-module property suites: the postselection inequality, the
//! equivalence of the quasi-pure criteria, the quasi-pure closed forms, POVM
//! validity, and the universal kernel identity. The CLI `verify` command and
//! the acceptance tests both run these.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apps::{ancilla_state, UnitaryFamily};
use crate::error::Result;
use crate::linalg::{
    dagger, eig_hermitian, frobenius_norm, hermitize, outer, sqrt_psd,
    unitary_from_generator, CMatrix, CVector, C_ZERO,
};
use crate::postselect::{
    build_povm, measurement_from_povm, Povm, PovmElement, PovmMode,
};
use crate::qfi::{
    ensemble_decomposition, qfi_quasipure, sld_general, sld_quasipure, SLD_RANK_TOL,
};
use crate::quasipure::{criteria_report, QuasiPureTolerances};
use crate::state::{
    density_at, derivative_at, spectral_at_default, spectral_derivatives, tangent_projector,
    ParametricState,
};

/// Outcome of one suite over its trials.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Largest violation margin observed (0 when clean).
    pub worst: f64,
    /// Serialized first counterexample, when any trial failed.
    pub counterexample: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub seed: u64,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed())
    }
}

/// Standard normal deviate (Box–Muller), deterministic under the seeded RNG.
fn randn(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-16);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let mut m = Array2::from_elem((dim, dim), C_ZERO);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = Complex64::new(randn(rng), randn(rng));
        }
    }
    hermitize(&m)
}

pub fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let g = random_hermitian(rng, dim);
    unitary_from_generator(&g, 1.0).expect("Hermitian generator")
}

/// Random density matrix of the given rank (strictly positive weights).
pub fn random_density(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> CMatrix {
    let weights = random_weights(rng, rank);
    let u = random_unitary(rng, dim);
    let mut rho = Array2::from_elem((dim, dim), C_ZERO);
    for (n, &w) in weights.iter().enumerate() {
        let col = u.column(n).to_owned();
        rho = rho + outer(&col, &col).mapv(|z| z * w);
    }
    hermitize(&rho)
}

fn random_weights(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    // Softmax of normal deviates: strictly positive, sums to one, and no
    // accidental near-degeneracies beyond what the deviates produce.
    let logits: Vec<f64> = (0..count).map(|_| randn(rng)).collect();
    softmax(&logits)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// A generic mixed family with rotating eigenbasis and, optionally,
/// x-dependent weights: ρ(x) = Σₙ wₙ(x) |bₙ(x)⟩⟨bₙ(x)| with
/// bₙ(x) = e^{-iGx} V₀ eₙ. Analytic derivatives throughout.
pub fn random_state_family(
    rng: &mut ChaCha8Rng,
    dim: usize,
    rank: usize,
    varying_weights: bool,
) -> ParametricState {
    let logits: Vec<f64> = (0..rank).map(|_| randn(rng)).collect();
    let rates: Vec<f64> = if varying_weights {
        (0..rank).map(|_| randn(rng)).collect()
    } else {
        vec![0.0; rank]
    };
    let g = random_hermitian(rng, dim);
    let v0 = random_unitary(rng, dim);

    let weights_at = {
        let logits = logits.clone();
        let rates = rates.clone();
        move |x: f64| -> Vec<f64> {
            let shifted: Vec<f64> = logits
                .iter()
                .zip(rates.iter())
                .map(|(&l, &r)| l + r * x)
                .collect();
            softmax(&shifted)
        }
    };
    let basis_at = {
        let g = g.clone();
        let v0 = v0.clone();
        move |x: f64| -> CMatrix {
            unitary_from_generator(&g, x).expect("Hermitian generator").dot(&v0)
        }
    };

    let w_eval = weights_at.clone();
    let b_eval = basis_at.clone();
    let evaluator = move |x: &[f64]| -> CMatrix {
        let w = w_eval(x[0]);
        let b = b_eval(x[0]);
        let mut rho = Array2::from_elem((dim, dim), C_ZERO);
        for (n, &wn) in w.iter().enumerate() {
            let col = b.column(n).to_owned();
            rho = rho + outer(&col, &col).mapv(|z| z * wn);
        }
        hermitize(&rho)
    };

    let derivative = move |x: &[f64], _i: usize| -> CMatrix {
        let w = weights_at(x[0]);
        let b = basis_at(x[0]);
        // ∂wₙ of the softmax and ∂bₙ = -iG bₙ.
        let mean_rate: f64 = w.iter().zip(rates.iter()).map(|(&wn, &r)| wn * r).sum();
        let mut drho = Array2::from_elem((dim, dim), C_ZERO);
        for n in 0..rank {
            let col = b.column(n).to_owned();
            let dw = w[n] * (rates[n] - mean_rate);
            drho = drho + outer(&col, &col).mapv(|z| z * dw);
            let dcol = g.dot(&col).mapv(|z| z * Complex64::new(0.0, -1.0));
            let cross = outer(&dcol, &col);
            drho = drho + (&cross + &dagger(&cross)).mapv(|z| z * w[n]);
        }
        hermitize(&drho)
    };

    ParametricState::new(dim, 1, evaluator).with_analytic_derivative(derivative)
}

/// Quasi-pure family built by the ancilla protocol from random ingredients.
pub fn random_quasipure_family(
    rng: &mut ChaCha8Rng,
    dim: usize,
    rank: usize,
    d_a: usize,
) -> Result<ParametricState> {
    let rho_init = random_density(rng, dim, rank);
    let family = UnitaryFamily::from_generator(random_hermitian(rng, dim));
    ancilla_state(&rho_init, &family, d_a)
}

/// Random POVM with the given number of outcomes: normalized quadratic forms
/// E_i = S^{-1/2} Xᵢ†Xᵢ S^{-1/2}.
pub fn random_povm(rng: &mut ChaCha8Rng, dim: usize, outcomes: usize) -> Result<Povm> {
    let mut parts: Vec<CMatrix> = Vec::with_capacity(outcomes);
    for _ in 0..outcomes {
        let mut x = Array2::from_elem((dim, dim), C_ZERO);
        for i in 0..dim {
            for j in 0..dim {
                x[(i, j)] = Complex64::new(randn(rng), randn(rng));
            }
        }
        parts.push(hermitize(&dagger(&x).dot(&x)));
    }
    let mut total = Array2::from_elem((dim, dim), C_ZERO);
    for p in &parts {
        total = total + p;
    }
    // S^{-1/2} through the eigendecomposition of S.
    let spec = eig_hermitian(&total)?;
    let mut inv_root = Array2::from_elem((dim, dim), C_ZERO);
    for (n, &mu) in spec.eigenvalues.iter().enumerate() {
        let col = spec.column(n);
        inv_root = inv_root + outer(&col, &col).mapv(|z| z / mu.max(1e-30).sqrt());
    }
    let elements = parts
        .into_iter()
        .enumerate()
        .map(|(i, p)| PovmElement {
            id: format!("random{i}"),
            operator: hermitize(&inv_root.dot(&p).dot(&inv_root)),
            kept: i == 0,
        })
        .collect();
    let povm = Povm::from_elements(elements);
    povm.validate().map(|_| povm)
}

fn counterexample(seed: u64, trial: usize, detail: &str) -> String {
    format!("{{\"seed\":{seed},\"trial\":{trial},\"detail\":\"{detail}\"}}")
}

fn run_suite<F>(
    name: &'static str,
    trials: usize,
    seed: u64,
    mut body: F,
) -> SuiteResult
where
    F: FnMut(&mut ChaCha8Rng, usize) -> std::result::Result<f64, String>,
{
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut first: Option<String> = None;
    for trial in 0..trials {
        // One child RNG per trial so a counterexample replays in isolation.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E3779B97F4A7C15));
        match body(&mut rng, trial) {
            Ok(margin) => worst = worst.max(margin),
            Err(detail) => {
                failures += 1;
                if first.is_none() {
                    first = Some(counterexample(seed, trial, &detail));
                }
            }
        }
    }
    SuiteResult {
        name,
        trials,
        failures,
        worst,
        counterexample: first,
    }
}

/// POVM validity across every construction mode plus M†M = E reconstruction.
pub fn suite_povm_validity(trials: usize, seed: u64) -> SuiteResult {
    run_suite("povm-validity", trials, seed, |rng, _trial| {
        let dim = 3 + (rng.gen::<u64>() % 3) as usize; // 3..=5
        let outcomes = 2 + (rng.gen::<u64>() % 2) as usize;
        let povm = random_povm(rng, dim, outcomes).map_err(|e| e.to_string())?;
        povm.validate().map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for element in &povm.elements {
            let u = random_unitary(rng, dim);
            let m = measurement_from_povm(&element.operator, Some(&u))
                .map_err(|e| e.to_string())?;
            let rebuilt = dagger(&m.matrix).dot(&m.matrix);
            let defect = frobenius_norm(&(&rebuilt - &element.operator));
            if defect >= 1e-10 * frobenius_norm(&element.operator).max(1.0) {
                return Err(format!("M†M defect {defect:.3e}"));
            }
            worst = worst.max(defect);
        }
        // Structured modes on random orthogonal projectors.
        let u = random_unitary(rng, dim);
        let pr = {
            let col = u.column(0).to_owned();
            outer(&col, &col)
        };
        let pk = {
            let col = u.column(1).to_owned();
            outer(&col, &col)
        };
        for mode in [PovmMode::KernelBinary, PovmMode::TangentBinary, PovmMode::MultiParam] {
            let aux = if mode == PovmMode::MultiParam { None } else { Some(&pk) };
            let povm = build_povm(mode, &pr, aux, &[0.5 * rng.gen::<f64>() + 1e-3], None, None)
                .map_err(|e| e.to_string())?;
            povm.validate().map_err(|e| e.to_string())?;
        }
        Ok(worst)
    })
}

/// Postselection inequality: Σ_ω (I^cl_ω + p_ω I^Q[σ_ω]) ≤ I^Q[ρ].
pub fn suite_postselection_inequality(trials: usize, seed: u64) -> SuiteResult {
    run_suite("postselection-inequality", trials, seed, |rng, _trial| {
        let dim = 2 + (rng.gen::<u64>() % 3) as usize; // 2..=4
        let rank = 1 + (rng.gen::<u64>() % dim as u64) as usize;
        let family = random_state_family(rng, dim, rank, true);
        let outcomes = 2 + (rng.gen::<u64>() % 2) as usize;
        let povm = random_povm(rng, dim, outcomes).map_err(|e| e.to_string())?;
        let x = [randn(rng) * 0.3];
        let report = ensemble_decomposition(&family, &x, &povm, 0).map_err(|e| e.to_string())?;
        let slack = report.total_ensemble_qfi - report.qfi;
        let allowed = 1e-8 * report.qfi.max(1.0);
        if slack > allowed {
            return Err(format!(
                "total {:.6e} exceeds qfi {:.6e} by {slack:.3e}",
                report.total_ensemble_qfi, report.qfi
            ));
        }
        Ok(slack.max(0.0))
    })
}

/// Lossless saturation on quasi-pure families at x★ = x (kernel and tangent
/// POVMs) and on pure states with the rank-1 construction.
pub fn suite_lossless_saturation(trials: usize, seed: u64) -> SuiteResult {
    run_suite("lossless-saturation", trials, seed, |rng, _trial| {
        let dim = 2 + (rng.gen::<u64>() % 2) as usize; // 2..=3
        let rank = 1 + (rng.gen::<u64>() % 2.min(dim as u64 - 1).max(1)) as usize;
        let rank = rank.min(dim);
        let family = random_quasipure_family(rng, dim, rank, rank).map_err(|e| e.to_string())?;
        let x = [0.2 + 0.3 * rng.gen::<f64>()];
        let lambda = 10f64.powf(-1.0 - 2.0 * rng.gen::<f64>());
        let spec = spectral_at_default(&family, &x).map_err(|e| e.to_string())?;
        let tangent = tangent_projector(&family, &x, &spec).map_err(|e| e.to_string())?;
        let mode = if rng.gen::<bool>() {
            PovmMode::TangentBinary
        } else {
            PovmMode::KernelBinary
        };
        let aux = if mode == PovmMode::KernelBinary {
            spec.kernel_projector.clone()
        } else {
            tangent
        };
        let povm = build_povm(
            mode,
            &spec.support_projector,
            Some(&aux),
            &[lambda],
            None,
            Some(x.to_vec()),
        )
        .map_err(|e| e.to_string())?;
        let report = ensemble_decomposition(&family, &x, &povm, 0).map_err(|e| e.to_string())?;
        let kept = report.kept_post_qfi();
        let rel = (kept - report.qfi).abs() / report.qfi.max(1e-12);
        if rel > 1e-5 {
            return Err(format!(
                "kept {kept:.6e} vs qfi {:.6e} (rel {rel:.3e}, mode {mode:?})",
                report.qfi
            ));
        }
        Ok(rel)
    })
}

/// The four quasi-pure criteria agree in verdict, on constructed quasi-pure
/// families and on perturbed (non-quasi-pure) ones alike.
pub fn suite_criteria_equivalence(trials: usize, seed: u64) -> SuiteResult {
    run_suite("criteria-equivalence", trials, seed, |rng, trial| {
        let quasi = trial % 2 == 0;
        let dim = 3 + (rng.gen::<u64>() % 2) as usize; // 3..=4
        let rank = 2 + (rng.gen::<u64>() % 2.min(dim as u64 - 1)) as usize;
        let rank = rank.min(dim - 1);
        let family = if quasi {
            random_quasipure_family(rng, dim, rank, rank).map_err(|e| e.to_string())?
        } else if rng.gen::<bool>() {
            // Weight drift breaks the eigenvalue-insensitivity condition.
            random_state_family(rng, dim, rank, true)
        } else {
            // Rotating support with distinct constant weights breaks the
            // orthogonality condition.
            random_state_family(rng, dim, rank, false)
        };
        let x = [0.15 + 0.2 * rng.gen::<f64>()];
        // A mixed convex decomposition: spectral columns recombined by a
        // random unitary.
        let spec = spectral_at_default(&family, &x).map_err(|e| e.to_string())?;
        let w = random_unitary(rng, spec.global_rank);
        let mut weights = Vec::new();
        let mut vectors: Vec<CVector> = Vec::new();
        for n in 0..spec.global_rank {
            let mut col = CVector::from_elem(family.dim(), C_ZERO);
            for m in 0..spec.global_rank {
                let phi = spec.eigenvector(m);
                let coef = w[(m, n)] * Complex64::new(spec.eigenvalues[m].sqrt(), 0.0);
                for r in 0..family.dim() {
                    col[r] += coef * phi[r];
                }
            }
            let norm = crate::linalg::vector_norm(&col);
            weights.push(norm * norm);
            vectors.push(col.mapv(|z| z / norm));
        }
        let decomp = crate::qfi::ConvexDecomposition { weights, vectors };
        let report = criteria_report(
            &family,
            &x,
            Some(&decomp),
            QuasiPureTolerances::default(),
        )
        .map_err(|e| e.to_string())?;
        let verdicts = [
            report.verdict,
            report.verdict_eigen_criteria,
            report.verdict_gencoder,
            report.verdict_convex.unwrap(),
        ];
        if verdicts.iter().any(|&v| v != quasi) {
            return Err(format!(
                "expected {quasi}, verdicts {verdicts:?}, residuals: spectral {:.3e} drift {:.3e} gencoder {:.3e} convex {:.3e}",
                report.residual_spectral,
                report.eigenvalue_drift,
                report.gencoder_residual,
                report.convex_residual.unwrap()
            ));
        }
        Ok(report.residual_spectral)
    })
}

/// Quasi-pure closed forms match the general SLD machinery.
pub fn suite_closed_forms(trials: usize, seed: u64) -> SuiteResult {
    run_suite("closed-forms", trials, seed, |rng, _trial| {
        let dim = 2 + (rng.gen::<u64>() % 3) as usize; // 2..=4
        let rank = 1 + (rng.gen::<u64>() % 2.min(dim as u64)) as usize;
        let rank = rank.min(dim);
        let family = random_quasipure_family(rng, dim, rank, rank).map_err(|e| e.to_string())?;
        let x = [0.1 + 0.4 * rng.gen::<f64>()];
        let rho = density_at(&family, &x).map_err(|e| e.to_string())?;
        let drho = derivative_at(&family, &x, 0).map_err(|e| e.to_string())?;
        let l_general = sld_general(&rho, &drho, SLD_RANK_TOL).map_err(|e| e.to_string())?;
        let qfi_general = crate::qfi::qfi_from_sld(&rho, &l_general).map_err(|e| e.to_string())?;

        let spec = spectral_at_default(&family, &x).map_err(|e| e.to_string())?;
        let derivs =
            spectral_derivatives(&family, &x, &spec, 0, None).map_err(|e| e.to_string())?;
        let l_qp = sld_quasipure(&spec, &derivs).map_err(|e| e.to_string())?;
        let qfi_qp = qfi_quasipure(&spec, &derivs).map_err(|e| e.to_string())?;

        let sld_rel = frobenius_norm(&(&l_qp - &l_general)) / frobenius_norm(&l_general).max(1.0);
        let qfi_rel = (qfi_qp - qfi_general).abs() / qfi_general.max(1.0);
        if sld_rel > 1e-7 || qfi_rel > 1e-7 {
            return Err(format!("sld rel {sld_rel:.3e}, qfi rel {qfi_rel:.3e}"));
        }
        Ok(sld_rel.max(qfi_rel))
    })
}

/// Universal kernel identity ‖Π_k ∂ₓρ Π_k‖_F = 0 over random constant-rank
/// families.
pub fn suite_kernel_identity(trials: usize, seed: u64) -> SuiteResult {
    run_suite("kernel-identity", trials, seed, |rng, _trial| {
        let dim = 4 + (rng.gen::<u64>() % 3) as usize; // 4..=6
        let rank = 1 + (rng.gen::<u64>() % 3) as usize; // 1..=3
        let family = random_state_family(rng, dim, rank, true);
        let x = [randn(rng) * 0.5];
        let spec = spectral_at_default(&family, &x).map_err(|e| e.to_string())?;
        let drho = derivative_at(&family, &x, 0).map_err(|e| e.to_string())?;
        let pk = &spec.kernel_projector;
        let residual = frobenius_norm(&pk.dot(&drho).dot(pk));
        if residual >= 1e-8 {
            return Err(format!("kernel residual {residual:.3e}"));
        }
        Ok(residual)
    })
}

/// Run every suite with the given trial budget.
pub fn run_all(trials: usize, seed: u64) -> VerifyReport {
    let suites = vec![
        suite_povm_validity(trials.min(200), seed),
        suite_postselection_inequality(trials, seed.wrapping_add(1)),
        suite_lossless_saturation(trials.min(200), seed.wrapping_add(2)),
        suite_criteria_equivalence(trials.min(200), seed.wrapping_add(3)),
        suite_closed_forms(trials.min(200), seed.wrapping_add(4)),
        suite_kernel_identity(trials.min(500), seed.wrapping_add(5)),
    ];
    VerifyReport { suites, seed }
}

/// Negative-control hook: checks one POVM the way the validity suite does.
pub fn check_povm(povm: &Povm) -> std::result::Result<(), String> {
    povm.validate().map_err(|e| e.to_string())?;
    for element in &povm.elements {
        let root = sqrt_psd(&element.operator).map_err(|e| e.to_string())?;
        let rebuilt = root.dot(&root);
        let defect = frobenius_norm(&(&rebuilt - &element.operator));
        if defect >= 1e-10 * frobenius_norm(&element.operator).max(1.0) {
            return Err(format!("element {}: M†M defect {defect:.3e}", element.id));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    #[test]
    fn random_density_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rho = random_density(&mut rng, 4, 2);
        let spec = eig_hermitian(&rho).unwrap();
        assert!((spec.eigenvalues.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(spec.eigenvalues.iter().all(|&q| q > -1e-12));
    }

    #[test]
    fn random_family_has_consistent_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let family = random_state_family(&mut rng, 3, 2, true);
        let x = [0.3];
        let analytic = derivative_at(&family, &x, 0).unwrap();
        let fd = crate::state::derivative_fd(&family, &x, 0, 1e-6, false).unwrap();
        let rel = frobenius_norm(&(&analytic - &fd)) / frobenius_norm(&analytic).max(1.0);
        assert!(rel < 1e-7, "relative derivative mismatch {rel}");
    }

    #[test]
    fn small_suite_run_passes() {
        let report = run_all(25, 7);
        for suite in &report.suites {
            assert!(
                suite.passed(),
                "suite {} failed: {:?}",
                suite.name,
                suite.counterexample
            );
        }
    }

    #[test]
    fn broken_povm_detected() {
        let mut broken = Povm::trivial(3);
        broken.elements[0].operator = identity(3).mapv(|z| z * 0.9);
        let err = check_povm(&broken).unwrap_err();
        assert!(err.contains("completeness"), "unexpected detail: {err}");
    }

    #[test]
    fn quasipure_family_verdict() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let family = random_quasipure_family(&mut rng, 3, 2, 2).unwrap();
        let report = criteria_report(
            &family,
            &[0.25],
            None,
            QuasiPureTolerances::default(),
        )
        .unwrap();
        assert!(report.verdict, "residual {}", report.residual_spectral);
    }
}
