//! Shared-noise strong-convergence measurement.
//!
//! A Brownian path is generated once on the finest grid as per-step pairs
//! `(ΔW, ΔZ)` and aggregated to coarser levels, so every integrator at every
//! step size sees the same underlying noise. Aggregating two sub-steps of
//! length `h` uses
//!
//! ```text
//! ΔW = ΔW₁ + ΔW₂,    ΔZ = ΔZ₁ + ΔZ₂ + h·ΔW₁
//! ```
//!
//! (the time integral over the second half picks up the accumulated
//! increment of the first).

use super::drift::Drift;
use super::stepper::{GaussianDraws, NonFinite, Scheme};
use super::trajectory_rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// A per-step sequence of correlated `(ΔW, ΔZ)` pairs at fixed step `dt`.
#[derive(Debug, Clone)]
pub struct NoiseSeq {
    pub dt: f64,
    pub steps: Vec<GaussianDraws>,
}

impl NoiseSeq {
    /// Samples `n_steps` independent pairs for the active channels.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        n_steps: usize,
        dt: f64,
        active: &[bool; 4],
    ) -> Self {
        let sqrt_dt = dt.sqrt();
        let z_scale = 0.5 * dt * sqrt_dt;
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        let steps = (0..n_steps)
            .map(|_| {
                let mut d = GaussianDraws::default();
                for j in 0..4 {
                    if active[j] {
                        let u1: f64 = rng.sample(StandardNormal);
                        let u2: f64 = rng.sample(StandardNormal);
                        d.dw[j] = sqrt_dt * u1;
                        d.dz[j] = z_scale * (u1 + u2 * inv_sqrt3);
                    }
                }
                d
            })
            .collect();
        Self { dt, steps }
    }

    /// Merges step pairs into a sequence at twice the step size.
    pub fn coarsen(&self) -> Self {
        assert!(self.steps.len() % 2 == 0, "cannot coarsen an odd step count");
        let h = self.dt;
        let steps = self
            .steps
            .chunks_exact(2)
            .map(|pair| {
                let (a, b) = (&pair[0], &pair[1]);
                let mut d = GaussianDraws::default();
                for j in 0..4 {
                    d.dw[j] = a.dw[j] + b.dw[j];
                    d.dz[j] = a.dz[j] + b.dz[j] + h * a.dw[j];
                }
                d
            })
            .collect();
        Self { dt: 2.0 * h, steps }
    }
}

/// Integrates one path through a fixed noise sequence.
pub fn integrate_with_noise<D: Drift>(
    drift: &D,
    noise: &[f64; 4],
    x0: [f64; 4],
    seq: &NoiseSeq,
    scheme: Scheme,
) -> Result<[f64; 4], NonFinite> {
    let mut x = x0;
    for draws in &seq.steps {
        x = scheme.step(drift, noise, x, seq.dt, draws)?;
    }
    Ok(x)
}

/// Strong endpoint errors of `scheme` at `n_levels` halved step sizes
/// `dt_base/2^k`, against an order-1.5 reference path on a `2^ref_refine`
/// times finer grid with the same noise. Returns `(dt, mean ‖ΔX(T)‖)` pairs.
#[allow(clippy::too_many_arguments)]
pub fn strong_errors<D: Drift + Sync>(
    drift: &D,
    noise: &[f64; 4],
    x0: [f64; 4],
    dt_base: f64,
    n_levels: usize,
    ref_refine: u32,
    t_final: f64,
    n_paths: usize,
    seed: u64,
    scheme: Scheme,
) -> Vec<(f64, f64)> {
    let active = [noise[0] != 0.0, noise[1] != 0.0, noise[2] != 0.0, noise[3] != 0.0];
    let n_base = (t_final / dt_base).round() as usize;
    let fine_halvings = (n_levels - 1) as u32 + ref_refine;
    let dt_fine = dt_base / 2f64.powi(fine_halvings as i32);
    let n_fine = n_base << fine_halvings;

    let mut sums = vec![0.0f64; n_levels];
    for p in 0..n_paths {
        let mut rng = trajectory_rng(seed, p as u64);
        let mut seq = NoiseSeq::sample(&mut rng, n_fine, dt_fine, &active);
        let x_ref = integrate_with_noise(drift, noise, x0, &seq, Scheme::Taylor15)
            .expect("reference path diverged");
        // coarsen up to the finest tested level, then walk toward dt_base
        for _ in 0..ref_refine {
            seq = seq.coarsen();
        }
        let mut level_err = vec![0.0f64; n_levels];
        for k in (0..n_levels).rev() {
            let x = integrate_with_noise(drift, noise, x0, &seq, scheme)
                .expect("test path diverged");
            let err: f64 = x
                .iter()
                .zip(&x_ref)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            level_err[k] = err;
            if k > 0 {
                seq = seq.coarsen();
            }
        }
        for (s, e) in sums.iter_mut().zip(&level_err) {
            *s += e;
        }
    }
    (0..n_levels)
        .map(|k| (dt_base / 2f64.powi(k as i32), sums[k] / n_paths as f64))
        .collect()
}

/// Least-squares slope of `log2(err)` against `log2(dt)` — the measured
/// strong order.
pub fn fit_order(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(dt, err) in points {
        let x = dt.log2();
        let y = err.log2();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
