//! Ensemble integration of the stochastic process equivalent to the
//! truncated-Wigner Fokker-Planck evolution.
//!
//! Trajectories carry independent, deterministic random streams derived from
//! `(master seed, trajectory index)`, so results are bit-identical for any
//! worker count. Observables are Monte Carlo estimators over the ensemble
//! with sampling errors; the photon number carries the symmetric-ordering
//! offset `⟨N⟩ = ⟨(q1²+p1²)/2⟩ − ½`.

pub mod convergence;
mod drift;
mod stepper;

pub use drift::{diffusion, noise_amplitudes, Drift, LinearDrift, TwaDrift};
pub use stepper::{step_euler, step_taylor15, GaussianDraws, NonFinite, Scheme};

use crate::model::ModelParams;
use crate::semiclassical;
use nalgebra::Matrix4;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SdeError {
    #[error("trajectory {trajectory} diverged: non-finite state at t = {t}")]
    NonFinite { trajectory: usize, t: f64 },
    #[error("observables did not settle within the time cap {t_cap}")]
    NoConvergence { t_cap: f64 },
    #[error("initial covariance is not positive definite")]
    BadCovariance,
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
}

/// One Wigner phase-space sample `(q1, p1, q2, p2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseSpacePoint {
    pub q1: f64,
    pub p1: f64,
    pub q2: f64,
    pub p2: f64,
}

impl PhaseSpacePoint {
    #[inline]
    pub fn from_array(x: [f64; 4]) -> Self {
        Self { q1: x[0], p1: x[1], q2: x[2], p2: x[3] }
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.q1, self.p1, self.q2, self.p2]
    }
}

/// A set of trajectories at a common time.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub points: Vec<PhaseSpacePoint>,
    /// Elapsed time in units of 1/ω.
    pub t: f64,
    /// Master seed the per-trajectory streams were derived from.
    pub seed: u64,
    pub n_traj: usize,
}

/// A Monte Carlo estimate with its sampling error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

/// The four steady-state observables tracked throughout.
#[derive(Debug, Clone, Copy, Default)]
pub struct ObservableRecord {
    pub n_cav: Estimate,
    pub x_sq: Estimate,
    pub p_sq: Estimate,
    pub delta_eff_mean: Estimate,
}

impl ObservableRecord {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Estimate)> {
        [
            ("n_cav", self.n_cav),
            ("x_sq", self.x_sq),
            ("p_sq", self.p_sq),
            ("delta_eff", self.delta_eff_mean),
        ]
        .into_iter()
    }
}

/// The deterministic per-trajectory random stream: ChaCha8 seeded by the
/// master seed with the trajectory index as the stream number.
pub fn trajectory_rng(seed: u64, trajectory: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory);
    rng
}

/// Gaussian initial distribution with an arbitrary 4×4 covariance.
#[derive(Debug, Clone)]
pub struct GaussianInit {
    pub mean: [f64; 4],
    chol: Matrix4<f64>,
}

impl GaussianInit {
    pub fn new(mean: [f64; 4], cov: Matrix4<f64>) -> Result<Self, SdeError> {
        let chol = nalgebra::Cholesky::new(cov)
            .ok_or(SdeError::BadCovariance)?
            .l();
        Ok(Self { mean, chol })
    }

    /// Isotropic Gaussian, covariance `var·I`. `var = 1/2` is the vacuum.
    pub fn isotropic(mean: [f64; 4], var: f64) -> Self {
        Self {
            mean,
            chol: Matrix4::identity() * var.sqrt(),
        }
    }

    /// Block-diagonal covariance from separate cavity and ion 2×2 blocks.
    pub fn from_blocks(
        mean: [f64; 4],
        cav: nalgebra::Matrix2<f64>,
        ion: nalgebra::Matrix2<f64>,
    ) -> Result<Self, SdeError> {
        let mut cov = Matrix4::zeros();
        cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&cav);
        cov.fixed_view_mut::<2, 2>(2, 2).copy_from(&ion);
        Self::new(mean, cov)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        let z = nalgebra::Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let dx = self.chol * z;
        [
            self.mean[0] + dx[0],
            self.mean[1] + dx[1],
            self.mean[2] + dx[2],
            self.mean[3] + dx[3],
        ]
    }
}

/// Drift of the truncated Wigner evolution at one point (see
/// [`drift::TwaDrift`] for the integrator-facing form).
pub fn drift(point: PhaseSpacePoint, params: &ModelParams) -> [f64; 4] {
    TwaDrift::new(*params).drift(&point.to_array())
}

/// Stepper for the full nonlinear process.
pub fn twa_stepper(params: &ModelParams, dt: f64, scheme: Scheme) -> Stepper<TwaDrift> {
    Stepper::new(TwaDrift::new(*params), noise_amplitudes(params), dt, scheme)
}

/// Default step: 0.01/ω capped by the stiffest linear rate,
/// `0.05·min(1/ω, 1/κ, 1/|Δ_eff|max)` with the detuning scanned over the
/// dynamically relevant region |q2| ≤ 1.5·x_eq.
pub fn default_dt(params: &ModelParams) -> f64 {
    let d_max = params.max_abs_delta_eff(1.5 * params.xeq_scale);
    let fastest = (1.0f64)
        .min(1.0 / params.kappa_ratio)
        .min(if d_max > 0.0 { 1.0 / d_max } else { f64::INFINITY });
    (0.05 * fastest).min(0.01)
}

struct Walker {
    x: [f64; 4],
    rng: ChaCha8Rng,
}

fn active_channels(noise: &[f64; 4]) -> [bool; 4] {
    [noise[0] != 0.0, noise[1] != 0.0, noise[2] != 0.0, noise[3] != 0.0]
}

/// Largest admissible `stiffness·h` per sub-step.
const STIFFNESS_THETA: f64 = 0.1;

/// A step engine binding drift, noise, step size and scheme.
///
/// Each nominal step is subdivided until the local stiffness is resolved
/// (`rate·h ≤ 0.1`), with fresh Gaussian sub-draws; the subdivision is a
/// non-anticipating Brownian refinement, so the strong solution is unchanged
/// and runs stay deterministic per trajectory stream.
pub struct Stepper<D: Drift> {
    drift: D,
    noise: [f64; 4],
    active: [bool; 4],
    dt: f64,
    scheme: Scheme,
}

impl<D: Drift> Stepper<D> {
    pub fn new(drift: D, noise: [f64; 4], dt: f64, scheme: Scheme) -> Self {
        Self {
            drift,
            noise,
            active: active_channels(&noise),
            dt,
            scheme,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances one trajectory by one nominal step `dt`, re-evaluating the
    /// local stiffness before every sub-step so excursions that move deeper
    /// into the steep region keep being resolved.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: [f64; 4], rng: &mut R) -> Result<[f64; 4], NonFinite> {
        let cap = STIFFNESS_THETA / self.drift.stiffness(&x);
        if self.dt <= cap {
            let draws = GaussianDraws::sample(rng, self.dt, &self.active);
            return self.scheme.step(&self.drift, &self.noise, x, self.dt, &draws);
        }
        let mut y = x;
        let mut remaining = self.dt;
        // floor the sub-step so a diverging trajectory reaches the overflow
        // check in bounded work instead of stalling
        let h_min = self.dt / 1024.0;
        while remaining > 0.0 {
            let h = remaining
                .min(STIFFNESS_THETA / self.drift.stiffness(&y))
                .max(h_min.min(remaining));
            let draws = GaussianDraws::sample(rng, h, &self.active);
            y = self.scheme.step(&self.drift, &self.noise, y, h, &draws)?;
            remaining -= h;
        }
        Ok(y)
    }
}

fn spawn_walkers(init: &GaussianInit, n_traj: usize, seed: u64) -> Vec<Walker> {
    (0..n_traj)
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            let x = init.sample(&mut rng);
            Walker { x, rng }
        })
        .collect()
}

fn advance<D: Drift + Sync>(
    walkers: &mut [Walker],
    stepper: &Stepper<D>,
    n_steps: usize,
    t_start: f64,
) -> Result<(), SdeError> {
    walkers
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(idx, w)| {
            let mut x = w.x;
            for step in 0..n_steps {
                x = stepper
                    .step(x, &mut w.rng)
                    .map_err(|NonFinite| SdeError::NonFinite {
                        trajectory: idx,
                        t: t_start + (step + 1) as f64 * stepper.dt,
                    })?;
            }
            w.x = x;
            Ok(())
        })
}

fn collect(walkers: &[Walker], t: f64, seed: u64) -> Ensemble {
    Ensemble {
        points: walkers
            .iter()
            .map(|w| PhaseSpacePoint::from_array(w.x))
            .collect(),
        t,
        seed,
        n_traj: walkers.len(),
    }
}

/// Evolves `n_traj` trajectories of the full nonlinear process from a
/// Gaussian initial distribution for a fixed time.
pub fn evolve_ensemble(
    init: &GaussianInit,
    params: &ModelParams,
    dt: f64,
    t_final: f64,
    n_traj: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<Ensemble, SdeError> {
    evolve_ensemble_with(&TwaDrift::new(*params), &noise_amplitudes(params), init, dt, t_final, n_traj, seed, scheme)
}

/// Same as [`evolve_ensemble`] but for an arbitrary drift field (used to run
/// the linearized process against the Lyapunov covariance).
#[allow(clippy::too_many_arguments)]
pub fn evolve_ensemble_with<D: Drift + Copy + Sync>(
    drift: &D,
    noise: &[f64; 4],
    init: &GaussianInit,
    dt: f64,
    t_final: f64,
    n_traj: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<Ensemble, SdeError> {
    if !(dt > 0.0) {
        return Err(SdeError::BadTimeStep(dt));
    }
    let n_steps = (t_final / dt).round().max(0.0) as usize;
    let stepper = Stepper::new(*drift, *noise, dt, scheme);
    let mut walkers = spawn_walkers(init, n_traj, seed);
    advance(&mut walkers, &stepper, n_steps, 0.0)?;
    Ok(collect(&walkers, n_steps as f64 * dt, seed))
}

fn estimate(values: impl Iterator<Item = f64>, n: usize) -> Estimate {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut count = 0.0;
    for v in values {
        count += 1.0;
        let d = v - mean;
        mean += d / count;
        m2 += d * (v - mean);
    }
    debug_assert_eq!(count as usize, n);
    let var = if n > 1 { m2 / (count - 1.0) } else { 0.0 };
    Estimate {
        value: mean,
        std_err: (var / count).sqrt(),
    }
}

/// Monte Carlo observables with sampling errors. The photon number applies
/// the symmetric-ordering correction to the ensemble average.
pub fn estimate_observables(ensemble: &Ensemble, params: &ModelParams) -> ObservableRecord {
    let n = ensemble.points.len();
    let mut n_cav = estimate(
        ensemble
            .points
            .iter()
            .map(|p| 0.5 * (p.q1 * p.q1 + p.p1 * p.p1)),
        n,
    );
    n_cav.value -= 0.5;
    ObservableRecord {
        n_cav,
        x_sq: estimate(ensemble.points.iter().map(|p| p.q2 * p.q2), n),
        p_sq: estimate(ensemble.points.iter().map(|p| p.p2 * p.p2), n),
        delta_eff_mean: estimate(ensemble.points.iter().map(|p| params.delta_eff(p.q2)), n),
    }
}

/// Burn-in policy for [`steady_state_ensemble`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyPolicy {
    /// Sliding-window length; defaults to 10/κ.
    pub window: Option<f64>,
    /// Give up after this much time (units of 1/ω).
    pub t_cap: f64,
}

impl Default for SteadyPolicy {
    fn default() -> Self {
        Self {
            window: None,
            t_cap: 2000.0,
        }
    }
}

/// Evolves a normally distributed initial condition centered at the unstable
/// equilibrium (falling back to the central branch when none exists) until
/// the drift of every observable over a sliding window of length 10/κ falls
/// below its standard error. Returns the ensemble and the convergence time.
pub fn steady_state_ensemble(
    params: &ModelParams,
    n_traj: usize,
    seed: u64,
    policy: &SteadyPolicy,
    dt: f64,
    scheme: Scheme,
) -> Result<(Ensemble, f64), SdeError> {
    if !(dt > 0.0) {
        return Err(SdeError::BadTimeStep(dt));
    }
    let anchor = semiclassical::unstable_branch(params).unwrap_or_else(|| {
        // below the window the center is the only equilibrium
        semiclassical::find_equilibria(params)
            .into_iter()
            .min_by(|a, b| a.x_bar.abs().partial_cmp(&b.x_bar.abs()).unwrap())
            .expect("x̄ = 0 is always an equilibrium")
    });
    let init = GaussianInit::isotropic(anchor.phase_space_mean(), 0.5);

    let window = policy.window.unwrap_or(10.0 / params.kappa_ratio);
    let steps_per_window = (window / dt).ceil().max(1.0) as usize;
    let stepper = Stepper::new(TwaDrift::new(*params), noise_amplitudes(params), dt, scheme);

    let mut walkers = spawn_walkers(&init, n_traj, seed);
    let mut t = 0.0;
    let mut prev: Option<ObservableRecord> = None;
    while t < policy.t_cap {
        advance(&mut walkers, &stepper, steps_per_window, t)?;
        t += steps_per_window as f64 * dt;
        let ens = collect(&walkers, t, seed);
        let rec = estimate_observables(&ens, params);
        if let Some(prev) = prev {
            let settled = rec
                .iter()
                .zip(prev.iter())
                .all(|((_, now), (_, before))| (now.value - before.value).abs() < now.std_err);
            if settled {
                return Ok((ens, t));
            }
        }
        prev = Some(rec);
    }
    Err(SdeError::NoConvergence { t_cap: policy.t_cap })
}

impl semiclassical::EquilibriumBranch {
    /// Phase-space mean of the branch: cavity quadratures of ā, ion at x̄
    /// with zero momentum.
    pub fn phase_space_mean(&self) -> [f64; 4] {
        [
            std::f64::consts::SQRT_2 * self.a_bar.re,
            std::f64::consts::SQRT_2 * self.a_bar.im,
            self.x_bar,
            0.0,
        ]
    }
}

#[cfg(test)]
mod tests;
