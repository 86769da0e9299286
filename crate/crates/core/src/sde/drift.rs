//! Drift and diffusion of the stochastic process underlying the truncated
//! phase-space evolution.
//!
//! In the quadrature variables `(q1, p1, q2, p2)` (cavity pair; ion position
//! and momentum in oscillator units, time in 1/ω) the drift reads
//!
//! ```text
//! A_q1 = √2 η − Δ_eff(q2) p1 − κ q1
//! A_p1 = Δ_eff(q2) q1 − κ p1
//! A_q2 = p2 − Γ q2
//! A_p2 = −q2 + ½ Δ_eff'(q2) (q1² + p1² − 1) − Γ p2
//! ```
//!
//! and the noise is additive, `B = diag(√κ, √κ, √Γ, √Γ)` with diffusion
//! `D = B·Bᵀ`. The `−1` in the `p2` component is the symmetric-ordering
//! offset of the photon number; it is the only term that breaks the exact
//! classical rescaling covariance (see the tests in [`super`]).

use crate::model::ModelParams;

/// Drift field with the analytic derivatives needed by the strong order-1.5
/// Taylor scheme.
pub trait Drift {
    /// Drift vector at `x`.
    fn drift(&self, x: &[f64; 4]) -> [f64; 4];
    /// Jacobian `∂A_i/∂x_j` at `x`.
    fn jacobian(&self, x: &[f64; 4]) -> [[f64; 4]; 4];
    /// Noise-Hessian contraction `½ Σ_j D_jj ∂²A/∂x_j²` at `x`, the
    /// second deterministic correction of the Taylor scheme.
    fn noise_hessian(&self, x: &[f64; 4], d_diag: &[f64; 4]) -> [f64; 4];
    /// Fastest local linear rate at `x`. Ensemble drivers subdivide a step
    /// until `rate·h` is small; rare far excursions of the ion make
    /// `|Δ_eff(q2)|` grow quartically and would otherwise leave the cavity
    /// rotation unresolved.
    fn stiffness(&self, _x: &[f64; 4]) -> f64 {
        1.0
    }
}

/// The full nonlinear drift of the truncated Wigner evolution.
#[derive(Debug, Clone, Copy)]
pub struct TwaDrift {
    params: ModelParams,
}

impl TwaDrift {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl Drift for TwaDrift {
    #[inline]
    fn drift(&self, x: &[f64; 4]) -> [f64; 4] {
        let p = &self.params;
        let d = p.delta_eff(x[2]);
        let d1 = p.d_delta_eff(x[2]);
        let (k, g) = (p.kappa_ratio, p.gamma_ratio);
        [
            std::f64::consts::SQRT_2 * p.eta_ratio - d * x[1] - k * x[0],
            d * x[0] - k * x[1],
            x[3] - g * x[2],
            -x[2] + 0.5 * d1 * (x[0] * x[0] + x[1] * x[1] - 1.0) - g * x[3],
        ]
    }

    #[inline]
    fn jacobian(&self, x: &[f64; 4]) -> [[f64; 4]; 4] {
        let p = &self.params;
        let d = p.delta_eff(x[2]);
        let d1 = p.d_delta_eff(x[2]);
        let d2 = p.d2_delta_eff(x[2]);
        let (k, g) = (p.kappa_ratio, p.gamma_ratio);
        [
            [-k, -d, -d1 * x[1], 0.0],
            [d, -k, d1 * x[0], 0.0],
            [0.0, 0.0, -g, 1.0],
            [
                d1 * x[0],
                d1 * x[1],
                -1.0 + 0.5 * d2 * (x[0] * x[0] + x[1] * x[1] - 1.0),
                -g,
            ],
        ]
    }

    #[inline]
    fn noise_hessian(&self, x: &[f64; 4], d_diag: &[f64; 4]) -> [f64; 4] {
        let p = &self.params;
        let d1 = p.d_delta_eff(x[2]);
        let d2 = p.d2_delta_eff(x[2]);
        let d3 = p.d3_delta_eff(x[2]);
        // D_q2 = D_p2 = Γ enter through the q2-curvature of the Δ_eff terms
        let dq2 = d_diag[2];
        [
            -0.5 * dq2 * d2 * x[1],
            0.5 * dq2 * d2 * x[0],
            0.0,
            0.5 * (d_diag[0] + d_diag[1]) * d1
                + 0.25 * dq2 * d3 * (x[0] * x[0] + x[1] * x[1] - 1.0),
        ]
    }

    #[inline]
    fn stiffness(&self, x: &[f64; 4]) -> f64 {
        // local rates: cavity rotation |Δ_eff|, damping κ/Γ, trap ω, the
        // optical curvature seen by the ion and the ion–cavity coupling.
        // All grow steeply with |q2|, which is what makes far excursions
        // stiff while the core region integrates at the nominal step.
        let p = &self.params;
        let nw = x[0] * x[0] + x[1] * x[1];
        let curv = 0.5 * p.d2_delta_eff(x[2]).abs() * (nw - 1.0).abs();
        let coupling = p.d_delta_eff(x[2]).abs() * nw.sqrt();
        p.delta_eff(x[2])
            .abs()
            .max(p.kappa_ratio)
            .max(p.gamma_ratio)
            .max(1.0)
            .max(1.0 + curv)
            .max(coupling)
    }
}

/// Linear drift `A(x) = M·(x − center)`, used to cross-check the Lyapunov
/// steady state of the localized Gaussian model against direct simulation.
#[derive(Debug, Clone, Copy)]
pub struct LinearDrift {
    pub matrix: [[f64; 4]; 4],
    pub center: [f64; 4],
}

impl Drift for LinearDrift {
    #[inline]
    fn drift(&self, x: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, row) in self.matrix.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += row[j] * (x[j] - self.center[j]);
            }
            out[i] = acc;
        }
        out
    }

    #[inline]
    fn jacobian(&self, _x: &[f64; 4]) -> [[f64; 4]; 4] {
        self.matrix
    }

    #[inline]
    fn noise_hessian(&self, _x: &[f64; 4], _d_diag: &[f64; 4]) -> [f64; 4] {
        [0.0; 4]
    }

    #[inline]
    fn stiffness(&self, _x: &[f64; 4]) -> f64 {
        // row-sum norm bounds the spectral radius
        self.matrix
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum())
            .fold(1.0f64, f64::max)
    }
}

/// Constant diffusion matrix `D = B·Bᵀ = diag(κ, κ, Γ, Γ)`.
pub fn diffusion(params: &ModelParams) -> [[f64; 4]; 4] {
    let mut d = [[0.0; 4]; 4];
    d[0][0] = params.kappa_ratio;
    d[1][1] = params.kappa_ratio;
    d[2][2] = params.gamma_ratio;
    d[3][3] = params.gamma_ratio;
    d
}

/// Additive noise amplitudes, the diagonal of `B`.
pub fn noise_amplitudes(params: &ModelParams) -> [f64; 4] {
    [
        params.kappa_ratio.sqrt(),
        params.kappa_ratio.sqrt(),
        params.gamma_ratio.sqrt(),
        params.gamma_ratio.sqrt(),
    ]
}
