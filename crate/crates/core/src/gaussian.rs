//! Localized Gaussian approximation: linearized fluctuation dynamics around
//! one classical equilibrium branch and its steady state from the continuous
//! Lyapunov equation.
//!
//! The complex Heisenberg-Langevin equations for the fluctuations
//!
//! ```text
//! δȧ = (iΔ_eff(x̄) − κ) δa + i(c/√2)(b + b†) + input noise
//! ḃ  = (i/2ω)(−(ω²+ω_v²) b + (ω²−ω_v²) b†) + i(c/√2)(e^{−iφ}δa + e^{iφ}δa†)
//! ```
//!
//! are converted once to the real quadrature basis `(δq1, δp1, δq2, δp2)`
//! shared with [`crate::sde`]. With `δa = (δq1 + iδp1)/√2`,
//! `b = (δq2 + iδp2)/√2` and the mean-field phase `ā = |ā| e^{iφ}` carried
//! explicitly (the φ-rotation stays on the cavity quadratures), the drift
//! matrix is
//!
//! ```text
//!     ⎡ −κ        −Δ_eff    −√2·c·sinφ   0 ⎤
//! M = ⎢ Δ_eff     −κ         √2·c·cosφ   0 ⎥
//!     ⎢ 0          0         −Γ          ω ⎥
//!     ⎣ √2·c·cosφ  √2·c·sinφ −ω_v²/ω    −Γ ⎦
//! ```
//!
//! with `c = |ā| x_ω dΔ_eff/dx̄` and `ω_v² = ω(ω − |ā|² x_ω² d²Δ_eff/dx̄²)`,
//! everything in units of ω. Vacuum input plus optional direct ion damping
//! give the constant diffusion `D = diag(κ, κ, Γ, Γ)`.

use crate::model::ModelParams;
use crate::sde::{Estimate, ObservableRecord};
use crate::semiclassical::EquilibriumBranch;
use nalgebra::{Matrix4, SMatrix, SVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GaussianError {
    /// The linear dynamics is not strictly stable; the asymptotic state is
    /// not well defined (e.g. the decoupled ion at the trap center with
    /// Γ = 0).
    #[error("no steady state: spectral abscissa {max_re:.3e} is not negative")]
    NoSteadyState { max_re: f64 },
    #[error("Lyapunov system is singular")]
    SingularLyapunov,
}

/// Mean vector and symmetric covariance of a Gaussian state in the
/// `(q1, p1, q2, p2)` basis, symmetric-ordering convention.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub mean: [f64; 4],
    pub cov: Matrix4<f64>,
}

/// Linearized fluctuation dynamics around one equilibrium branch.
#[derive(Debug, Clone)]
pub struct FluctuationModel {
    /// Real 4×4 drift matrix acting on `(δq1, δp1, δq2, δp2)`.
    pub drift4: Matrix4<f64>,
    /// Constant diffusion matrix `diag(κ, κ, Γ, Γ)`.
    pub diffusion4: Matrix4<f64>,
    /// Squared vibrational frequency corrected by the optical potential,
    /// units of ω².
    pub omega_v_sq: f64,
    /// Ion–cavity fluctuation coupling `c = |ā| dΔ_eff/dq2`, units of ω.
    pub coupling_c: f64,
    /// Phase of the mean cavity field.
    pub phi: f64,
    /// Effective detuning used in the cavity block (the branch value, unless
    /// self-consistently refined).
    pub delta_eff_used: f64,
    /// Phase-space mean of the branch.
    pub mean: [f64; 4],
}

fn assemble(
    params: &ModelParams,
    branch: &EquilibriumBranch,
    delta_eff: f64,
) -> FluctuationModel {
    let a_mod = branch.a_bar.norm();
    let phi = if a_mod > 0.0 { branch.a_bar.arg() } else { 0.0 };
    let c = a_mod * params.d_delta_eff(branch.x_bar);
    let omega_v_sq = 1.0 - branch.photons * params.d2_delta_eff(branch.x_bar);
    let (k, g) = (params.kappa_ratio, params.gamma_ratio);
    let sc = std::f64::consts::SQRT_2 * c;
    #[rustfmt::skip]
    let drift4 = Matrix4::new(
        -k,             -delta_eff,    -sc * phi.sin(), 0.0,
        delta_eff,      -k,             sc * phi.cos(), 0.0,
        0.0,             0.0,           -g,             1.0,
        sc * phi.cos(),  sc * phi.sin(), -omega_v_sq,  -g,
    );
    let diffusion4 = Matrix4::from_diagonal(&nalgebra::Vector4::new(k, k, g, g));
    FluctuationModel {
        drift4,
        diffusion4,
        omega_v_sq,
        coupling_c: c,
        phi,
        delta_eff_used: delta_eff,
        mean: branch.phase_space_mean(),
    }
}

/// Fluctuation model with the effective detuning frozen at the branch
/// position, as in the plain localized treatment.
pub fn build_fluctuation_model(
    branch: &EquilibriumBranch,
    params: &ModelParams,
) -> FluctuationModel {
    assemble(params, branch, params.delta_eff(branch.x_bar))
}

/// Gaussian expectation of the quartic `Δ_eff` under `q2 ~ N(x̄, σ²)`.
fn delta_eff_gaussian_mean(params: &ModelParams, x_bar: f64, var: f64) -> f64 {
    let s2 = params.xeq_scale * params.xeq_scale;
    let m2 = x_bar * x_bar + var;
    let m4 = x_bar.powi(4) + 6.0 * x_bar * x_bar * var + 3.0 * var * var;
    params.delta_c_ratio - params.u0_ratio * (m4 - 2.0 * s2 * m2 + s2 * s2) / (s2 * s2)
}

/// Optional refinement: replace `Δ_eff(x̄)` in the cavity block by the
/// expectation `⟨Δ_eff⟩` under the current steady covariance and iterate.
/// Off by default; the plain comparison curves use
/// [`build_fluctuation_model`].
pub fn build_fluctuation_model_self_consistent(
    branch: &EquilibriumBranch,
    params: &ModelParams,
    max_iter: usize,
) -> Result<(FluctuationModel, usize), GaussianError> {
    let mut delta = params.delta_eff(branch.x_bar);
    let mut model = assemble(params, branch, delta);
    for iter in 0..max_iter {
        let state = steady_covariance(&model)?;
        let target = delta_eff_gaussian_mean(params, branch.x_bar, state.cov[(2, 2)]);
        // half-step relaxation; the bare fixed-point map oscillates when the
        // covariance reacts strongly to the detuning
        let refined = 0.5 * (delta + target);
        model = assemble(params, branch, refined);
        if (refined - delta).abs() < 1e-10 * (1.0 + refined.abs()) {
            return Ok((model, iter + 1));
        }
        delta = refined;
    }
    Ok((model, max_iter))
}

/// Eigenvalues of the drift matrix. The branch is Gaussian-stable iff all
/// real parts are strictly negative.
pub fn stability_spectrum(model: &FluctuationModel) -> [Complex64; 4] {
    let eig = model.drift4.complex_eigenvalues();
    [
        Complex64::new(eig[0].re, eig[0].im),
        Complex64::new(eig[1].re, eig[1].im),
        Complex64::new(eig[2].re, eig[2].im),
        Complex64::new(eig[3].re, eig[3].im),
    ]
}

/// Largest real part of the drift spectrum.
pub fn spectral_abscissa(model: &FluctuationModel) -> f64 {
    stability_spectrum(model)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

// unknown ordering of the symmetric covariance entries
const PAIRS: [(usize, usize); 10] = [
    (0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3),
];

fn pair_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    PAIRS.iter().position(|&p| p == (a, b)).unwrap()
}

/// Steady covariance from `M·Σ + Σ·Mᵀ + D = 0`, solved directly in the 10
/// independent entries of the symmetric Σ.
pub fn steady_covariance(model: &FluctuationModel) -> Result<GaussianState, GaussianError> {
    let max_re = spectral_abscissa(model);
    if max_re >= 0.0 {
        return Err(GaussianError::NoSteadyState { max_re });
    }
    let m = &model.drift4;
    let mut a = SMatrix::<f64, 10, 10>::zeros();
    let mut rhs = SVector::<f64, 10>::zeros();
    for (row, &(i, j)) in PAIRS.iter().enumerate() {
        for k in 0..4 {
            a[(row, pair_index(k, j))] += m[(i, k)];
            a[(row, pair_index(i, k))] += m[(j, k)];
        }
        rhs[row] = -model.diffusion4[(i, j)];
    }
    let sol = a.lu().solve(&rhs).ok_or(GaussianError::SingularLyapunov)?;
    let mut cov = Matrix4::zeros();
    for (idx, &(i, j)) in PAIRS.iter().enumerate() {
        cov[(i, j)] = sol[idx];
        cov[(j, i)] = sol[idx];
    }
    Ok(GaussianState {
        mean: model.mean,
        cov,
    })
}

/// Frobenius residual of the Lyapunov equation for a candidate covariance.
pub fn lyapunov_residual(model: &FluctuationModel, cov: &Matrix4<f64>) -> f64 {
    (model.drift4 * cov + cov * model.drift4.transpose() + model.diffusion4).norm()
}

/// Steady-state observables of a Gaussian state. Deterministic, so the
/// standard errors are zero; the effective detuning is evaluated at the mean
/// position, by construction of the linearization.
pub fn gaussian_observables(state: &GaussianState, params: &ModelParams) -> ObservableRecord {
    let m = &state.mean;
    let exact = |value: f64| Estimate { value, std_err: 0.0 };
    ObservableRecord {
        n_cav: exact(
            0.5 * (m[0] * m[0] + m[1] * m[1] + state.cov[(0, 0)] + state.cov[(1, 1)] - 1.0),
        ),
        x_sq: exact(m[2] * m[2] + state.cov[(2, 2)]),
        p_sq: exact(m[3] * m[3] + state.cov[(3, 3)]),
        delta_eff_mean: exact(params.delta_eff(m[2])),
    }
}
