//! Time steppers: strong order-1.5 Taylor scheme for additive noise, plus
//! Euler–Maruyama as an independent cross-check integrator.
//!
//! For additive noise `dX = A(X)dt + B dW` the order-1.5 strong Taylor step
//! is
//!
//! ```text
//! X' = X + A h + B ΔW + ½ h² (J·A + ½ Σ_j D_jj ∂²A/∂x_j²) + J·B ΔZ
//! ```
//!
//! with `J` the drift Jacobian and `(ΔW_j, ΔZ_j)` the correlated pair of
//! Brownian increment and its time integral per channel:
//! `E[ΔW²] = h`, `E[ΔZ²] = h³/3`, `E[ΔW·ΔZ] = h²/2`.

use super::drift::Drift;
use rand::Rng;
use rand_distr::StandardNormal;

/// Marker error: a step produced a non-finite component. Ensemble drivers
/// attach the trajectory index and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite;

/// Correlated per-channel draws for one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianDraws {
    pub dw: [f64; 4],
    pub dz: [f64; 4],
}

impl GaussianDraws {
    /// Samples the pair for the channels with non-zero noise amplitude.
    /// `ΔW = √h·U₁`, `ΔZ = ½h^{3/2}(U₁ + U₂/√3)` reproduces the required
    /// second moments exactly.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dt: f64, active: &[bool; 4]) -> Self {
        let sqrt_dt = dt.sqrt();
        let z_scale = 0.5 * dt * sqrt_dt;
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        let mut draws = Self::default();
        for j in 0..4 {
            if active[j] {
                let u1: f64 = rng.sample(StandardNormal);
                let u2: f64 = rng.sample(StandardNormal);
                draws.dw[j] = sqrt_dt * u1;
                draws.dz[j] = z_scale * (u1 + u2 * inv_sqrt3);
            }
        }
        draws
    }
}

#[inline]
fn check_finite(x: [f64; 4]) -> Result<[f64; 4], NonFinite> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(NonFinite)
    }
}

/// One strong order-1.5 Taylor step for additive noise.
#[inline]
pub fn step_taylor15<D: Drift>(
    drift: &D,
    noise: &[f64; 4],
    x: [f64; 4],
    dt: f64,
    draws: &GaussianDraws,
) -> Result<[f64; 4], NonFinite> {
    let a = drift.drift(&x);
    let j = drift.jacobian(&x);
    let d_diag = [
        noise[0] * noise[0],
        noise[1] * noise[1],
        noise[2] * noise[2],
        noise[3] * noise[3],
    ];
    let c2 = drift.noise_hessian(&x, &d_diag);
    let half_dt2 = 0.5 * dt * dt;
    let mut out = [0.0; 4];
    for k in 0..4 {
        let mut ja = 0.0;
        let mut jbz = 0.0;
        for l in 0..4 {
            ja += j[k][l] * a[l];
            jbz += j[k][l] * noise[l] * draws.dz[l];
        }
        out[k] = x[k]
            + a[k] * dt
            + noise[k] * draws.dw[k]
            + half_dt2 * (ja + c2[k])
            + jbz;
    }
    check_finite(out)
}

/// One Euler–Maruyama step. Strong order 1.0 for additive noise.
#[inline]
pub fn step_euler<D: Drift>(
    drift: &D,
    noise: &[f64; 4],
    x: [f64; 4],
    dt: f64,
    draws: &GaussianDraws,
) -> Result<[f64; 4], NonFinite> {
    let a = drift.drift(&x);
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = x[k] + a[k] * dt + noise[k] * draws.dw[k];
    }
    check_finite(out)
}

/// Integrator selection. Euler–Maruyama is kept for convergence cross-checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Taylor15,
    EulerMaruyama,
}

impl Scheme {
    #[inline]
    pub(crate) fn step<D: Drift>(
        self,
        drift: &D,
        noise: &[f64; 4],
        x: [f64; 4],
        dt: f64,
        draws: &GaussianDraws,
    ) -> Result<[f64; 4], NonFinite> {
        match self {
            Scheme::Taylor15 => step_taylor15(drift, noise, x, dt, draws),
            Scheme::EulerMaruyama => step_euler(drift, noise, x, dt, draws),
        }
    }
}
