//! The three worked applications as ready-made [`ParametricState`]
//! factories, together with their closed-form reference quantities:
//!
//! 1. superresolution imaging of two incoherent point sources with a
//!    Gaussian point-spread function, expanded over Hermite–Gaussian modes;
//! 2. two-qubit unitary estimation with a mixed initial state;
//! 3. ancilla-assisted unitary estimation, where a control-sum gate creates
//!    the classical correlations that make the state quasi-pure for every
//!    parameter value.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    basis_vector, commutator, dagger, hermitize, identity, kron, outer, unitary_from_generator,
    vector_norm, CMatrix, CVector, C_I, C_ONE, C_ZERO, RANK_TOL,
};
use crate::postselect::{build_povm, measurement_from_povm, MeasurementOperator, Povm, PovmMode};
use crate::state::{spectral_of_density, ParametricState, DEG_TOL};

/// Tail mass allowed beyond the mode truncation.
pub const TRUNCATION_TAIL_LIMIT: f64 = 1e-12;

/// Configuration of the two-point-source state.
#[derive(Debug, Clone, Copy)]
pub struct SuperresConfig {
    /// Intensity weight q of the first source, in (0, 1).
    pub intensity: f64,
    /// Point-spread-function width σ.
    pub sigma: f64,
    /// Highest Hermite–Gaussian mode kept (dimension is n_max + 1).
    pub n_max: usize,
    /// Largest separation the family will be probed at; the truncation tail
    /// is validated against it.
    pub x_max: f64,
}

impl SuperresConfig {
    pub fn new(intensity: f64, sigma: f64, n_max: usize, x_max: f64) -> Result<Self> {
        if !(intensity > 0.0 && intensity < 1.0) {
            return Err(Error::LambdaOutOfRange { value: intensity });
        }
        for value in [sigma, x_max] {
            if !(value > 0.0) {
                return Err(Error::NonPositiveInput { value });
            }
        }
        if n_max < 2 {
            return Err(Error::DimensionTooSmall {
                ancilla: n_max,
                required: 2,
            });
        }
        Ok(SuperresConfig {
            intensity,
            sigma,
            n_max,
            x_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// Expansion coefficients of a displaced Gaussian e^{-iP̂ d}|ψ₀⟩ over the
/// Hermite–Gaussian modes: cₙ = e^{-α²/2} αⁿ/√(n!) with α = d/(2σ).
pub fn displaced_gaussian_coefficients(displacement: f64, sigma: f64, n_max: usize) -> CVector {
    let alpha = displacement / (2.0 * sigma);
    let mut v = CVector::from_elem(n_max + 1, C_ZERO);
    let log_prefactor = -alpha * alpha / 2.0;
    let mut log_fact = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            log_fact += (n as f64).ln();
        }
        // Signed magnitude αⁿ e^{-α²/2}/√(n!), kept in log form for large n.
        let mag = if alpha == 0.0 {
            if n == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let sign = if alpha < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
            sign * (log_prefactor + n as f64 * alpha.abs().ln() - 0.5 * log_fact).exp()
        };
        v[n] = Complex64::new(mag, 0.0);
    }
    v
}

fn truncation_tail(displacement: f64, sigma: f64, n_max: usize) -> f64 {
    let c = displaced_gaussian_coefficients(displacement, sigma, n_max);
    (1.0 - c.iter().map(|z| z.norm_sqr()).sum::<f64>()).max(0.0)
}

/// Momentum operator over the Hermite–Gaussian basis:
/// ⟨φ_m|P̂|φ_n⟩ = (i/2σ)(√(n+1) δ_{m,n+1} − √n δ_{m,n−1}).
pub fn momentum_matrix(sigma: f64, n_max: usize) -> CMatrix {
    let dim = n_max + 1;
    let mut p = Array2::from_elem((dim, dim), C_ZERO);
    let scale = C_I / Complex64::new(2.0 * sigma, 0.0);
    for n in 0..dim {
        if n + 1 < dim {
            p[(n + 1, n)] = scale * ((n + 1) as f64).sqrt();
        }
        if n >= 1 {
            p[(n - 1, n)] = -scale * (n as f64).sqrt();
        }
    }
    p
}

fn superres_arm(x: f64, sign: f64, cfg: &SuperresConfig) -> CVector {
    let mut c = displaced_gaussian_coefficients(sign * x / 2.0, cfg.sigma, cfg.n_max);
    let norm = vector_norm(&c);
    if norm > 0.0 {
        c.mapv_inplace(|z| z / norm);
    }
    c
}

/// Two incoherent point sources separated by x:
/// ρ(x) = q|ψ₊⟩⟨ψ₊| + (1−q)|ψ₋⟩⟨ψ₋| with |ψ±⟩ = e^{∓iP̂x/2}|ψ₀⟩,
/// expanded over a truncated Hermite–Gaussian basis. Globally rank two; the
/// local rank drops to one at coincidence x = 0.
///
/// Derivatives are analytic: ∂ₓρ = −(iq/2)[P̂, ρ₊] + (i(1−q)/2)[P̂, ρ₋].
pub fn superres_state(cfg: &SuperresConfig) -> Result<ParametricState> {
    let domain_edge = cfg.x_max * 1.5 + 1.0;
    let tail = truncation_tail(domain_edge / 2.0, cfg.sigma, cfg.n_max);
    if tail > TRUNCATION_TAIL_LIMIT {
        return Err(Error::TruncationInsufficient {
            tail,
            limit: TRUNCATION_TAIL_LIMIT,
        });
    }
    let cfg_eval = *cfg;
    let evaluator = move |x: &[f64]| -> CMatrix {
        let plus = superres_arm(x[0], 1.0, &cfg_eval);
        let minus = superres_arm(x[0], -1.0, &cfg_eval);
        let q = cfg_eval.intensity;
        outer(&plus, &plus).mapv(|z| z * q) + outer(&minus, &minus).mapv(|z| z * (1.0 - q))
    };
    let cfg_deriv = *cfg;
    let momentum = momentum_matrix(cfg.sigma, cfg.n_max);
    let derivative = move |x: &[f64], _i: usize| -> CMatrix {
        let plus = superres_arm(x[0], 1.0, &cfg_deriv);
        let minus = superres_arm(x[0], -1.0, &cfg_deriv);
        let q = cfg_deriv.intensity;
        let rho_plus = outer(&plus, &plus);
        let rho_minus = outer(&minus, &minus);
        let half_i = C_I * 0.5;
        commutator(&momentum, &rho_plus).mapv(|z| z * (-half_i) * q)
            + commutator(&momentum, &rho_minus).mapv(|z| z * half_i * (1.0 - q))
    };
    Ok(ParametricState::new(cfg.dim(), 1, evaluator)
        .with_analytic_derivative(derivative)
        .with_domain(vec![(-domain_edge, domain_edge)]))
}

/// Leading-order error metrics of the Rayleigh-limit postselection:
/// ε₀ = |2q−1|(1−√λ)x/(2√2·√λ·σ) and ε₁ = √(2−4√λ+3λ)·x/(8λσ²).
pub fn superres_theory(x: f64, q: f64, lambda: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::LambdaOutOfRange { value: lambda });
    }
    if x < 0.0 {
        return Err(Error::NonPositiveInput { value: x });
    }
    let sqrt_l = lambda.sqrt();
    let eps0 = (2.0 * q - 1.0).abs() * (1.0 - sqrt_l) * x / (2.0 * 2f64.sqrt() * sqrt_l * sigma);
    let eps1 = (2.0 - 4.0 * sqrt_l + 3.0 * lambda).sqrt() * x / (8.0 * lambda * sigma * sigma);
    Ok((eps0, eps1))
}

/// Rayleigh-limit postselection POVM for the imaging application:
/// E_✓ = |ψ₁⟩⟨ψ₁| + λ|ψ₀⟩⟨ψ₀| over the first two Hermite–Gaussian modes.
pub fn superres_rayleigh_povm(lambda: f64, n_max: usize) -> Result<Povm> {
    let dim = n_max + 1;
    let e0 = basis_vector(dim, 0);
    let e1 = basis_vector(dim, 1);
    build_povm(
        PovmMode::TangentBinary,
        &outer(&e0, &e0),
        Some(&outer(&e1, &e1)),
        &[lambda],
        None,
        Some(vec![0.0]),
    )
}

/// Measurement operator of the kept outcome of [`superres_rayleigh_povm`].
pub fn superres_rayleigh_measurement(lambda: f64, n_max: usize) -> Result<MeasurementOperator> {
    let povm = superres_rayleigh_povm(lambda, n_max)?;
    let kept = povm
        .kept_elements()
        .next()
        .expect("binary POVM has a kept element");
    measurement_from_povm(&kept.operator, None)
}

type UnitaryEvaluator = Arc<dyn Fn(&[f64]) -> CMatrix + Send + Sync>;

/// A parametric unitary family U(x), by default an ordered product of
/// exponentials Π_i e^{-i G_i x_i} of Hermitian generators.
#[derive(Clone)]
pub struct UnitaryFamily {
    dim: usize,
    num_params: usize,
    evaluator: UnitaryEvaluator,
    generators: Option<Vec<CMatrix>>,
}

impl UnitaryFamily {
    pub fn from_generator(g: CMatrix) -> Self {
        UnitaryFamily::from_generators(vec![g])
    }

    pub fn from_generators(generators: Vec<CMatrix>) -> Self {
        let dim = generators.first().map_or(0, |g| g.nrows());
        let gens = generators.clone();
        let evaluator = move |x: &[f64]| -> CMatrix {
            let mut u = identity(dim);
            for (g, &xi) in gens.iter().zip(x.iter()) {
                u = u.dot(&unitary_from_generator(g, xi).expect("Hermitian generator"));
            }
            u
        };
        UnitaryFamily {
            dim,
            num_params: generators.len(),
            evaluator: Arc::new(evaluator),
            generators: Some(generators),
        }
    }

    /// A family given by an arbitrary map; derivatives fall back to finite
    /// differences.
    pub fn from_map<F>(dim: usize, num_params: usize, evaluator: F) -> Self
    where
        F: Fn(&[f64]) -> CMatrix + Send + Sync + 'static,
    {
        UnitaryFamily {
            dim,
            num_params,
            evaluator: Arc::new(evaluator),
            generators: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn unitary_at(&self, x: &[f64]) -> CMatrix {
        (self.evaluator)(x)
    }

    /// Analytic ∂ᵢU for product-of-exponential families.
    fn unitary_derivative(&self, x: &[f64], i: usize) -> Option<CMatrix> {
        let gens = self.generators.as_ref()?;
        let mut left = identity(self.dim);
        for (k, g) in gens.iter().enumerate() {
            let u_k = unitary_from_generator(g, x[k]).ok()?;
            if k == i {
                let mut d = left.dot(&g.mapv(|z| z * (-C_I))).dot(&u_k);
                for (m, g_right) in gens.iter().enumerate().skip(i + 1) {
                    d = d.dot(&unitary_from_generator(g_right, x[m]).ok()?);
                }
                return Some(d);
            }
            left = left.dot(&u_k);
        }
        None
    }
}

/// Local generator H(x) = i ∂ₓU†(x) U(x) of one parameter, by central
/// difference of the family. For U = e^{-iGx} this returns −G.
pub fn generator_at(
    family: &UnitaryFamily,
    x: &[f64],
    param: usize,
    h: Option<f64>,
) -> Result<CMatrix> {
    if param >= family.num_params {
        return Err(Error::IndexOutOfRange {
            index: param,
            limit: family.num_params,
        });
    }
    let step = h.unwrap_or_else(|| 1e-5 * x.get(param).map_or(1.0, |v| v.abs()).max(1.0));
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[param] += step;
    xm[param] -= step;
    let du_dag = (dagger(&family.unitary_at(&xp)) - dagger(&family.unitary_at(&xm)))
        .mapv(|z| z / (2.0 * step));
    let h_raw = du_dag.dot(&family.unitary_at(x)).mapv(|z| z * C_I);
    Ok(hermitize(&h_raw))
}

/// Unitary estimation with a general initial state: ρ(x) = U(x) ρᵢ U†(x).
pub fn unitary_estimation_state(
    family: &UnitaryFamily,
    rho_init: &CMatrix,
) -> Result<ParametricState> {
    if rho_init.nrows() != family.dim {
        return Err(Error::DimensionMismatch {
            left: rho_init.nrows(),
            right: family.dim,
        });
    }
    let fam = family.clone();
    let rho0 = rho_init.clone();
    let evaluator = move |x: &[f64]| -> CMatrix {
        let u = fam.unitary_at(x);
        u.dot(&rho0).dot(&dagger(&u))
    };
    let state = ParametricState::new(family.dim, family.num_params, evaluator);
    if family.generators.is_some() {
        let fam = family.clone();
        let rho0 = rho_init.clone();
        let derivative = move |x: &[f64], i: usize| -> CMatrix {
            let u = fam.unitary_at(x);
            let du = fam.unitary_derivative(x, i).expect("generators present");
            let term = du.dot(&rho0).dot(&dagger(&u));
            &term + &dagger(&term)
        };
        Ok(state.with_analytic_derivative(derivative))
    } else {
        Ok(state)
    }
}

/// The two-qubit example: U(x) = e^{-i σ_x⊗σ_x x} on
/// ρᵢ = q₁|00⟩⟨00| + (1−q₁)|01⟩⟨01|, quasi-pure for every x with QFI 4.
pub fn two_qubit_app(q1: f64) -> Result<(UnitaryFamily, CMatrix, ParametricState)> {
    if !(q1 > 0.0 && q1 < 1.0) {
        return Err(Error::LambdaOutOfRange { value: q1 });
    }
    let sigma_x = {
        let mut m = Array2::from_elem((2, 2), C_ZERO);
        m[(0, 1)] = C_ONE;
        m[(1, 0)] = C_ONE;
        m
    };
    let g = kron(&sigma_x, &sigma_x);
    let mut rho_init = Array2::from_elem((4, 4), C_ZERO);
    rho_init[(0, 0)] = Complex64::new(q1, 0.0);
    rho_init[(1, 1)] = Complex64::new(1.0 - q1, 0.0);
    let family = UnitaryFamily::from_generator(g);
    let state = unitary_estimation_state(&family, &rho_init)?;
    Ok((family, rho_init, state))
}

/// QFI of a unitary family on a mixed quasi-pure initial state:
/// I^Q = 4[Σ_k q_k Var(H)_k − Σ_{k≠l, q_k=q_l} q_k |⟨φ_k|H|φ_l⟩|²].
///
/// Every distinct pair of initial eigenvectors must either share its
/// eigenvalue (within `deg_tol`) or be unconnected by H (within `ortho_tol`);
/// otherwise the state is not quasi-pure and the formula does not apply.
pub fn qfi_unitary_mixed(
    weights: &[f64],
    vectors: &[CVector],
    h_matrix: &CMatrix,
    deg_tol: f64,
    ortho_tol: f64,
) -> Result<f64> {
    if weights.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            left: weights.len(),
            right: vectors.len(),
        });
    }
    let h2 = h_matrix.dot(h_matrix);
    let overlap = |a: &CVector, m: &CMatrix, b: &CVector| -> Complex64 {
        let mb = m.dot(b);
        a.iter().zip(mb.iter()).map(|(x, y)| x.conj() * y).sum()
    };
    // Quasi-pure precondition, pair by pair.
    for k in 0..weights.len() {
        for l in 0..weights.len() {
            if k == l {
                continue;
            }
            let gap = (weights[k] - weights[l]).abs();
            let coupling = overlap(&vectors[k], h_matrix, &vectors[l]).norm();
            if gap >= deg_tol && coupling >= ortho_tol {
                return Err(Error::NotQuasiPure {
                    criterion: format!(
                        "pair (k={k}, l={l}): eigenvalue gap {gap:.3e} and coupling {coupling:.3e}"
                    ),
                    residual: coupling,
                    tolerance: ortho_tol,
                });
            }
        }
    }
    let mut total = 0.0;
    for k in 0..weights.len() {
        let mean = overlap(&vectors[k], h_matrix, &vectors[k]).re;
        let second = overlap(&vectors[k], &h2, &vectors[k]).re;
        total += weights[k] * (second - mean * mean);
        for l in 0..weights.len() {
            if l != k && (weights[k] - weights[l]).abs() < deg_tol {
                total -= weights[k] * overlap(&vectors[k], h_matrix, &vectors[l]).norm_sqr();
            }
        }
    }
    Ok(4.0 * total)
}

fn cs_gate_unchecked(num_labels: usize, d_a: usize) -> CMatrix {
    let dim = num_labels * d_a;
    let mut cs = Array2::from_elem((dim, dim), C_ZERO);
    for n in 0..num_labels {
        for k in 0..d_a {
            let target = (n + k) % d_a;
            cs[(n * d_a + target, n * d_a + k)] = C_ONE;
        }
    }
    cs
}

/// Control-sum gate CS|φₙ⟩|k⟩ = |φₙ⟩|n + k − 1⟩ over 1-based labels, with
/// the ancilla index wrapping modulo d_a. A permutation unitary on the
/// label space of dimension `num_labels · d_a`.
pub fn cs_gate(num_labels: usize, d_a: usize) -> Result<CMatrix> {
    if d_a < num_labels {
        return Err(Error::DimensionTooSmall {
            ancilla: d_a,
            required: num_labels,
        });
    }
    Ok(cs_gate_unchecked(num_labels, d_a))
}

/// Ancilla protocol: correlate each initial eigenvector |φₙ⟩ with an
/// orthogonal ancilla state |n⟩ through the control-sum gate, then encode.
/// The resulting σ(x) = Σₙ qₙ |φₙ(x)⟩⟨φₙ(x)| ⊗ |n⟩⟨n| is quasi-pure for
/// every x.
pub fn ancilla_state(
    rho_init: &CMatrix,
    family: &UnitaryFamily,
    d_a: usize,
) -> Result<ParametricState> {
    if rho_init.nrows() != family.dim {
        return Err(Error::DimensionMismatch {
            left: rho_init.nrows(),
            right: family.dim,
        });
    }
    let spec = spectral_of_density(rho_init, RANK_TOL, DEG_TOL)?;
    if d_a < spec.global_rank {
        return Err(Error::DimensionTooSmall {
            ancilla: d_a,
            required: spec.global_rank,
        });
    }
    let d_s = family.dim;
    // CS in the eigenbasis of ρᵢ: labels beyond the rank wrap around the
    // ancilla but carry zero weight.
    let basis_change = kron(&spec.eigenvectors, &identity(d_a));
    let cs = basis_change
        .dot(&cs_gate_unchecked(d_s, d_a))
        .dot(&dagger(&basis_change));
    let ancilla0 = {
        let e0 = basis_vector(d_a, 0);
        outer(&e0, &e0)
    };
    let sigma_init = {
        let joint = kron(rho_init, &ancilla0);
        hermitize(&cs.dot(&joint).dot(&dagger(&cs)))
    };

    let fam = family.clone();
    let sig0 = sigma_init.clone();
    let d_total = d_s * d_a;
    let evaluator = move |x: &[f64]| -> CMatrix {
        let u = kron(&fam.unitary_at(x), &identity(d_a));
        u.dot(&sig0).dot(&dagger(&u))
    };
    let state = ParametricState::new(d_total, family.num_params, evaluator);
    if family.generators.is_some() {
        let fam = family.clone();
        let sig0 = sigma_init;
        let derivative = move |x: &[f64], i: usize| -> CMatrix {
            let u = kron(&fam.unitary_at(x), &identity(d_a));
            let du = kron(
                &fam.unitary_derivative(x, i).expect("generators present"),
                &identity(d_a),
            );
            let term = du.dot(&sig0).dot(&dagger(&u));
            &term + &dagger(&term)
        };
        Ok(state.with_analytic_derivative(derivative))
    } else {
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, inner, trace};
    use crate::qfi::{self, qfi_of_state};
    use crate::state::{density_at, derivative_at, spectral_at_default};
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    // Real-space Hermite-Gaussian oracle used to validate the mode algebra:
    // φₙ(u) = (2πσ²)^{-1/4} Hₙ(u/(σ√2)) e^{-u²/4σ²} / √(2ⁿ n!).
    fn hermite_gaussian(n: usize, sigma: f64, u: f64) -> f64 {
        let z = u / (sigma * 2f64.sqrt());
        // Physicists' Hermite polynomials by recurrence.
        let mut h_prev = 1.0;
        let mut h = if n == 0 { 1.0 } else { 2.0 * z };
        for k in 1..n {
            let next = 2.0 * z * h - 2.0 * (k as f64) * h_prev;
            h_prev = h;
            h = next;
        }
        let mut log_norm = 0.0;
        for k in 1..=n {
            log_norm += (2.0 * k as f64).ln();
        }
        let base = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
        base * h * (-u * u / (4.0 * sigma * sigma)).exp() / (0.5 * log_norm).exp()
    }

    fn quadrature_momentum_element(m: usize, n: usize, sigma: f64) -> Complex64 {
        // ⟨φ_m|P̂|φ_n⟩ = ∫ φ_m(u) (-i ∂_u) φ_n(u) du by central differences
        // on a wide uniform grid.
        let l = 12.0 * sigma;
        let steps = 4000;
        let du = 2.0 * l / steps as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..=steps {
            let u = -l + k as f64 * du;
            let dphi = (hermite_gaussian(n, sigma, u + 1e-6) - hermite_gaussian(n, sigma, u - 1e-6))
                / 2e-6;
            let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
            acc += Complex64::new(0.0, -1.0) * hermite_gaussian(m, sigma, u) * dphi * weight * du;
        }
        acc
    }

    #[test]
    fn momentum_matrix_against_quadrature() {
        let sigma = 1.0;
        let p = momentum_matrix(sigma, 6);
        // Parity: ⟨φ₀|P̂|φ₀⟩ = 0.
        assert!(p[(0, 0)].norm() < 1e-14);
        let oracle_01 = quadrature_momentum_element(0, 1, sigma);
        assert!((p[(0, 1)] - oracle_01).norm() < 1e-6);
        assert_abs_diff_eq!(p[(0, 1)].im, -1.0 / (2.0 * sigma), epsilon = 1e-9);
        // ⟨P̂²⟩ over ψ₀ = 1/(4σ²), so the pure single-source QFI is 1/σ².
        let p2 = p.dot(&p);
        assert_abs_diff_eq!(p2[(0, 0)].re, 1.0 / (4.0 * sigma * sigma), epsilon = 1e-12);
        assert!(frobenius_norm(&(&p - &dagger(&p))) < 1e-14);
    }

    #[test]
    fn displaced_overlap_matches_gaussian_formula() {
        // ⟨ψ₊|ψ₋⟩ = e^{-x²/8σ²}, validated against numerical quadrature of
        // the shifted Gaussians.
        let (x, sigma) = (0.5, 1.0);
        let cfg = SuperresConfig::new(0.3, sigma, 30, 1.0).unwrap();
        let plus = superres_arm(x, 1.0, &cfg);
        let minus = superres_arm(x, -1.0, &cfg);
        let overlap = inner(&plus, &minus).re;
        let expect = (-x * x / (8.0 * sigma * sigma)).exp();
        assert_abs_diff_eq!(overlap, expect, epsilon = 1e-9);
        // Independent quadrature oracle over the real line.
        let l = 12.0 * sigma;
        let steps = 20000;
        let du = 2.0 * l / steps as f64;
        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
        let mut acc = 0.0;
        for k in 0..=steps {
            let u = -l + k as f64 * du;
            let f_plus = norm * (-(u - x / 2.0) * (u - x / 2.0) / (4.0 * sigma * sigma)).exp();
            let f_minus = norm * (-(u + x / 2.0) * (u + x / 2.0) / (4.0 * sigma * sigma)).exp();
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            acc += f_plus * f_minus * w * du;
        }
        assert_abs_diff_eq!(overlap, acc, epsilon = 1e-9);
    }

    #[test]
    fn superres_rank_and_eigenvalues() {
        let cfg = SuperresConfig::new(0.3, 1.0, 30, 1.0).unwrap();
        let state = superres_state(&cfg).unwrap();
        let spec = spectral_at_default(&state, &[0.5]).unwrap();
        assert_eq!(spec.global_rank, 2);
        // 2×2 Gram-matrix oracle with overlap c = e^{-x²/8σ²}, x = 0.5.
        let c2 = (-0.25f64 / 4.0).exp();
        let disc = (1.0 - 4.0 * 0.3 * 0.7 * (1.0 - c2)).sqrt();
        assert_abs_diff_eq!(spec.eigenvalues[0], (1.0 + disc) / 2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(spec.eigenvalues[1], (1.0 - disc) / 2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(spec.eigenvalues[0], 0.98711, epsilon = 1e-5);
        assert_abs_diff_eq!(spec.eigenvalues[1], 0.01289, epsilon = 1e-5);
    }

    #[test]
    fn superres_coincident_sources_are_pure() {
        let cfg = SuperresConfig::new(0.4, 1.0, 20, 1.0).unwrap();
        let state = superres_state(&cfg).unwrap();
        let rho = density_at(&state, &[0.0]).unwrap();
        let e0 = basis_vector(cfg.dim(), 0);
        let pure = outer(&e0, &e0);
        assert!(frobenius_norm(&(&rho - &pure)) < 1e-12);
    }

    #[test]
    fn superres_qfi_constant() {
        let cfg = SuperresConfig::new(0.3, 1.0, 30, 1.0).unwrap();
        let state = superres_state(&cfg).unwrap();
        for &x in &[0.05, 0.5, 1.0] {
            let qfi = qfi_of_state(&state, &[x], 0).unwrap();
            assert_abs_diff_eq!(qfi, 0.25, epsilon = 1e-6);
        }
    }

    #[test]
    fn superres_derivative_fd_consistency() {
        let cfg = SuperresConfig::new(0.3, 1.0, 30, 1.0).unwrap();
        let state = superres_state(&cfg).unwrap();
        let x = [0.4];
        let analytic = derivative_at(&state, &x, 0).unwrap();
        let fd = crate::state::derivative_fd(&state, &x, 0, 1e-5, false).unwrap();
        assert!(frobenius_norm(&(&analytic - &fd)) < 1e-8);
    }

    #[test]
    fn superres_truncation_guard() {
        // A 5-mode basis cannot carry a separation of 40σ.
        assert!(matches!(
            SuperresConfig::new(0.3, 1.0, 5, 40.0).and_then(|cfg| superres_state(&cfg)),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn theory_values() {
        assert_eq!(superres_theory(0.0, 0.3, 0.01, 1.0).unwrap(), (0.0, 0.0));
        let (e0, _) = superres_theory(0.7, 0.5, 0.01, 1.0).unwrap();
        assert_eq!(e0, 0.0);
        let (e0, e1) = superres_theory(1e-3, 0.3, 0.01, 1.0).unwrap();
        assert_abs_diff_eq!(e0, 1.27279e-3, epsilon = 1e-7);
        assert_abs_diff_eq!(e1, 1.59589e-2, epsilon = 1e-6);
        assert!(matches!(
            superres_theory(0.1, 0.3, 1.5, 1.0),
            Err(Error::LambdaOutOfRange { .. })
        ));
    }

    #[test]
    fn generator_recovers_minus_g() {
        let sigma_z = {
            let mut m = Array2::from_elem((2, 2), C_ZERO);
            m[(0, 0)] = C_ONE;
            m[(1, 1)] = -C_ONE;
            m
        };
        let family = UnitaryFamily::from_generator(sigma_z.clone());
        let h = generator_at(&family, &[0.37], 0, None).unwrap();
        assert!(frobenius_norm(&(&h + &sigma_z)) < 5e-9);
        // x-independent family → zero generator.
        let constant = UnitaryFamily::from_map(2, 1, |_x: &[f64]| identity(2));
        let h0 = generator_at(&constant, &[0.2], 0, None).unwrap();
        assert!(frobenius_norm(&h0) < 1e-12);
    }

    #[test]
    fn two_qubit_generator_uncouples_initial_states() {
        let (family, _, _) = two_qubit_app(0.3).unwrap();
        let h = generator_at(&family, &[0.0], 0, None).unwrap();
        // ⟨00|H|01⟩ = 0: the two initial eigenvectors stay uncoupled.
        assert!(h[(0, 1)].norm() < 1e-10);
    }

    #[test]
    fn two_qubit_qfi_is_four() {
        for &q1 in &[0.2, 0.5, 0.77] {
            let (family, rho_init, state) = two_qubit_app(q1).unwrap();
            let x = [0.3];
            let qfi = qfi_of_state(&state, &x, 0).unwrap();
            assert_abs_diff_eq!(qfi, 4.0, epsilon = 1e-8);
            // Closed-form route through the initial spectral data.
            let h = generator_at(&family, &x, 0, None).unwrap();
            let weights = vec![q1.max(1.0 - q1), q1.min(1.0 - q1)];
            let vectors = if q1 >= 0.5 {
                vec![basis_vector(4, 0), basis_vector(4, 1)]
            } else {
                vec![basis_vector(4, 1), basis_vector(4, 0)]
            };
            let _ = rho_init;
            let closed = qfi_unitary_mixed(&weights, &vectors, &h, 1e-8, 1e-8).unwrap();
            assert_abs_diff_eq!(closed, 4.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn mixed_unitary_formula_rejects_coupled_distinct_pair() {
        // Distinct eigenvalues with a coupling generator: not quasi-pure.
        let g = {
            let mut m = Array2::from_elem((2, 2), C_ZERO);
            m[(0, 1)] = C_ONE;
            m[(1, 0)] = C_ONE;
            m
        };
        let weights = vec![0.7, 0.3];
        let vectors = vec![basis_vector(2, 0), basis_vector(2, 1)];
        assert!(matches!(
            qfi_unitary_mixed(&weights, &vectors, &g, 1e-8, 1e-8),
            Err(Error::NotQuasiPure { .. })
        ));
    }

    #[test]
    fn mixed_unitary_formula_handles_degenerate_pair() {
        // Equal weights with a coupling generator stay quasi-pure; the
        // closed form must then match the general SLD computation.
        let mut rng_like = 0u64;
        let mut next = || {
            // Tiny deterministic LCG; avoids pulling rand into this test.
            rng_like = rng_like.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_like >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let dim = 4;
        let mut g = Array2::from_elem((dim, dim), C_ZERO);
        for i in 0..dim {
            for j in 0..dim {
                g[(i, j)] = Complex64::new(next(), next());
            }
        }
        let g = hermitize(&g);
        let family = UnitaryFamily::from_generator(g.clone());
        let mut rho_init = Array2::from_elem((dim, dim), C_ZERO);
        rho_init[(0, 0)] = Complex64::new(0.5, 0.0);
        rho_init[(1, 1)] = Complex64::new(0.5, 0.0);
        let state = unitary_estimation_state(&family, &rho_init).unwrap();
        let x = [0.25];
        let qfi_general = qfi_of_state(&state, &x, 0).unwrap();
        let h = generator_at(&family, &x, 0, None).unwrap();
        let weights = vec![0.5, 0.5];
        let vectors = vec![basis_vector(dim, 0), basis_vector(dim, 1)];
        let closed = qfi_unitary_mixed(&weights, &vectors, &h, 1e-8, 1e-8).unwrap();
        assert!(
            (closed - qfi_general).abs() < 1e-7 * qfi_general.max(1.0),
            "closed {closed} vs general {qfi_general}"
        );
    }

    #[test]
    fn cs_gate_mappings() {
        let cs = cs_gate(3, 3).unwrap();
        let ket = |n: usize, k: usize| -> Array1<Complex64> {
            let mut v = Array1::from_elem(9, C_ZERO);
            v[n * 3 + k] = C_ONE;
            v
        };
        // |φ₁⟩|1⟩ → |φ₁⟩|1⟩ and |φ₂⟩|1⟩ → |φ₂⟩|2⟩ (1-based labels).
        let out = cs.dot(&ket(0, 0));
        assert!((inner(&out, &ket(0, 0)).re - 1.0).abs() < 1e-14);
        let out = cs.dot(&ket(1, 0));
        assert!((inner(&out, &ket(1, 1)).re - 1.0).abs() < 1e-14);
        // Permutation unitarity.
        let rebuilt = dagger(&cs).dot(&cs);
        assert!(frobenius_norm(&(&rebuilt - &identity(9))) < 1e-12);
        assert!(matches!(
            cs_gate(4, 3),
            Err(Error::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn ancilla_state_structure() {
        // Rank-3 initial state on dim 4 with ancilla dim 3.
        let mut rho_init = Array2::from_elem((4, 4), C_ZERO);
        rho_init[(0, 0)] = Complex64::new(0.5, 0.0);
        rho_init[(1, 1)] = Complex64::new(0.3, 0.0);
        rho_init[(2, 2)] = Complex64::new(0.2, 0.0);
        let g = {
            let mut m = Array2::from_elem((4, 4), C_ZERO);
            m[(0, 1)] = C_ONE;
            m[(1, 0)] = C_ONE;
            m[(2, 3)] = C_I;
            m[(3, 2)] = -C_I;
            m[(0, 0)] = Complex64::new(0.4, 0.0);
            m
        };
        let family = UnitaryFamily::from_generator(hermitize(&g));
        let state = ancilla_state(&rho_init, &family, 3).unwrap();
        assert_eq!(state.dim(), 12);
        let x = [0.4];
        let rho = density_at(&state, &x).unwrap();
        assert!((trace(&rho).re - 1.0).abs() < 1e-10);
        // Quasi-pure: weighted sum of per-branch pure QFIs equals the total.
        let spec = spectral_at_default(&state, &x).unwrap();
        assert_eq!(spec.global_rank, 3);
        let qfi = qfi_of_state(&state, &x, 0).unwrap();
        let derivs = crate::state::spectral_derivatives(&state, &x, &spec, 0, None).unwrap();
        let closed = qfi::qfi_quasipure(&spec, &derivs).unwrap();
        assert!((qfi - closed).abs() < 1e-7 * qfi.max(1.0));
    }

    #[test]
    fn ancilla_with_pure_input_reduces_to_pure_qfi() {
        let mut rho_init = Array2::from_elem((3, 3), C_ZERO);
        rho_init[(0, 0)] = C_ONE;
        let g = {
            let mut m = Array2::from_elem((3, 3), C_ZERO);
            m[(0, 1)] = C_ONE;
            m[(1, 0)] = C_ONE;
            m[(2, 2)] = Complex64::new(0.3, 0.0);
            m
        };
        let family = UnitaryFamily::from_generator(g.clone());
        let state = ancilla_state(&rho_init, &family, 1).unwrap();
        let x = [0.2];
        let qfi = qfi_of_state(&state, &x, 0).unwrap();
        // 4 Var(H) on the initial vector with H = -G for this family.
        let e0 = basis_vector(3, 0);
        let g2 = g.dot(&g);
        let mean = inner(&e0, &g.dot(&e0)).re;
        let second = inner(&e0, &g2.dot(&e0)).re;
        assert_abs_diff_eq!(qfi, 4.0 * (second - mean * mean), epsilon = 1e-7);
    }

    #[test]
    fn ancilla_requires_enough_levels() {
        let mut rho_init = Array2::from_elem((3, 3), C_ZERO);
        rho_init[(0, 0)] = Complex64::new(0.6, 0.0);
        rho_init[(1, 1)] = Complex64::new(0.4, 0.0);
        let family = UnitaryFamily::from_generator(identity(3));
        assert!(matches!(
            ancilla_state(&rho_init, &family, 1),
            Err(Error::DimensionTooSmall { .. })
        ));
    }
}
