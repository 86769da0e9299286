//! Quantum-jump (Monte Carlo wave function) unraveling of the master
//! equation: deterministic evolution under the non-Hermitian
//! `H_eff = H − iκ a†a − iΓ b†b`, interrupted by jumps `√(2κ)·a` (and
//! `√(2Γ)·b` when ion damping is on) whenever the squared norm decays below
//! a uniform draw. Trajectory averages agree with the density-operator
//! integration within sampling error.

use super::{DensityOperator, IonOperators, LindbladError, TruncationSpec};
use crate::model::ModelParams;
use crate::sde::{trajectory_rng, Estimate, ObservableRecord};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

/// Ensemble-averaged observables on a uniform time grid.
#[derive(Debug, Clone)]
pub struct JumpSeries {
    pub times: Vec<f64>,
    pub records: Vec<ObservableRecord>,
    pub n_traj: usize,
}

struct PsiEngine {
    nc: usize,
    m: usize,
    delta_c: f64,
    eta: f64,
    kappa: f64,
    gamma: f64,
    ops: IonOperators,
    sqrt_n: Vec<f64>,
}

impl PsiEngine {
    fn new(spec: &TruncationSpec, params: &ModelParams) -> Self {
        let ops = super::ion_operators(spec, params);
        Self {
            nc: spec.n_cav_max,
            m: ops.m,
            delta_c: params.delta_c_ratio,
            eta: params.eta_ratio,
            kappa: params.kappa_ratio,
            gamma: params.gamma_ratio,
            sqrt_n: (0..=spec.n_cav_max).map(|n| (n as f64).sqrt()).collect(),
            ops,
        }
    }

    fn stable_dt(&self) -> f64 {
        let nc = (self.nc - 1) as f64;
        let n_top = *self.ops.states.last().unwrap_or(&1) as f64;
        let m = self.m;
        let f_max = (0..m)
            .map(|i| (0..m).map(|j| self.ops.f_op[i * m + j].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let bound = self.delta_c.abs() * nc
            + n_top
            + 2.0 * self.eta * self.sqrt_n[self.nc - 1].max(1.0)
            + f_max * nc
            + self.kappa * nc
            + self.gamma * n_top;
        2.5 / bound.max(1.0)
    }

    /// `out = −i H_eff ψ`.
    fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let (nc, m) = (self.nc, self.m);
        let f = &self.ops.f_op;
        for a in 0..nc {
            let blk = &psi[a * m..(a + 1) * m];
            let o = &mut out[a * m..(a + 1) * m];
            for (i, oi) in o.iter_mut().enumerate() {
                let si = self.ops.states[i] as f64;
                // diagonal: −i(−Δc·a + ω n_i) − κa − Γ n_i
                let c = Complex64::new(
                    -self.kappa * a as f64 - self.gamma * si,
                    self.delta_c * a as f64 - si,
                );
                let mut acc = c * blk[i];
                // interaction: −i·a·(F ψ)
                if a > 0 {
                    let mut fv = Complex64::default();
                    for k in 0..m {
                        fv += f[i * m + k] * blk[k];
                    }
                    let v = a as f64 * fv;
                    acc += Complex64::new(v.im, -v.re);
                }
                *oi = acc;
            }
            // pump: +η(√a ψ[a−1] − √(a+1) ψ[a+1])
            if self.eta != 0.0 {
                if a > 0 {
                    let w = self.eta * self.sqrt_n[a];
                    let src = &psi[(a - 1) * m..a * m];
                    for (oi, s) in o.iter_mut().zip(src) {
                        *oi += w * s;
                    }
                }
                if a + 1 < nc {
                    let w = -self.eta * self.sqrt_n[a + 1];
                    let src = &psi[(a + 1) * m..(a + 2) * m];
                    for (oi, s) in o.iter_mut().zip(src) {
                        *oi += w * s;
                    }
                }
            }
        }
    }

    fn rk4_step(&self, psi: &mut Vec<Complex64>, dt: f64, k: &mut [Vec<Complex64>; 4], tmp: &mut Vec<Complex64>) {
        self.apply(psi, &mut k[0]);
        for (t, (p, kk)) in tmp.iter_mut().zip(psi.iter().zip(&k[0])) {
            *t = p + 0.5 * dt * kk;
        }
        let stage1 = tmp.clone();
        self.apply(&stage1, &mut k[1]);
        for (t, (p, kk)) in tmp.iter_mut().zip(psi.iter().zip(&k[1])) {
            *t = p + 0.5 * dt * kk;
        }
        let stage2 = tmp.clone();
        self.apply(&stage2, &mut k[2]);
        for (t, (p, kk)) in tmp.iter_mut().zip(psi.iter().zip(&k[2])) {
            *t = p + dt * kk;
        }
        let stage3 = tmp.clone();
        self.apply(&stage3, &mut k[3]);
        let w = dt / 6.0;
        for (i, p) in psi.iter_mut().enumerate() {
            *p += w * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
        }
    }

    fn cavity_jump(&self, psi: &mut [Complex64]) {
        let (nc, m) = (self.nc, self.m);
        for a in 0..nc {
            for i in 0..m {
                psi[a * m + i] = if a + 1 < nc {
                    self.sqrt_n[a + 1] * psi[(a + 1) * m + i]
                } else {
                    Complex64::default()
                };
            }
        }
    }

    fn ion_jump(&self, psi: &mut [Complex64]) {
        let m = self.m;
        let b = self.ops.b_op.as_ref().expect("ion jumps need the full basis");
        let mut blk = vec![Complex64::default(); m];
        for a in 0..self.nc {
            let base = a * m;
            blk.copy_from_slice(&psi[base..base + m]);
            for i in 0..m {
                let mut acc = Complex64::default();
                for k in 0..m {
                    if b[i * m + k] != 0.0 {
                        acc += b[i * m + k] * blk[k];
                    }
                }
                psi[base + i] = acc;
            }
        }
    }

    fn observables(&self, psi: &[Complex64]) -> [f64; 4] {
        let (nc, m) = (self.nc, self.m);
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let mut n_cav = 0.0;
        let mut x2 = 0.0;
        let mut p2 = 0.0;
        let mut shift = 0.0;
        for a in 0..nc {
            let blk = &psi[a * m..(a + 1) * m];
            let pop: f64 = blk.iter().map(|z| z.norm_sqr()).sum();
            n_cav += a as f64 * pop;
            for i in 0..m {
                for j in 0..m {
                    let w = (blk[i].conj() * blk[j]).re;
                    x2 += self.ops.x2_op[i * m + j] * w;
                    p2 += self.ops.p2_op[i * m + j] * w;
                    shift += self.ops.f_op[i * m + j] * w;
                }
            }
        }
        [
            n_cav / norm2,
            x2 / norm2,
            p2 / norm2,
            self.delta_c - shift / norm2,
        ]
    }

    fn ion_number_expectation(&self, psi: &[Complex64]) -> f64 {
        let m = self.m;
        let mut acc = 0.0;
        for a in 0..self.nc {
            for (i, &s) in self.ops.states.iter().enumerate() {
                acc += s as f64 * psi[a * m + i].norm_sqr();
            }
        }
        acc
    }
}

/// Runs `n_traj` quantum-jump trajectories from a pure initial state and
/// averages the observables on a uniform grid of `n_samples + 1` times.
#[allow(clippy::too_many_arguments)]
pub fn quantum_jump_trajectories(
    spec: &TruncationSpec,
    params: &ModelParams,
    initial: &[Complex64],
    n_traj: usize,
    seed: u64,
    t_final: f64,
    n_samples: usize,
) -> Result<JumpSeries, LindbladError> {
    spec.validate()?;
    if spec.even_parity && params.gamma_ratio > 0.0 {
        return Err(LindbladError::ParityNeedsNoIonDamping);
    }
    let engine = PsiEngine::new(spec, params);
    let dim = spec.dimension();
    assert_eq!(initial.len(), dim, "initial state dimension mismatch");
    let dt = engine.stable_dt();
    let sample_every = (t_final / n_samples as f64 / dt).ceil().max(1.0) as usize;
    let dt = t_final / (n_samples * sample_every) as f64;

    let per_traj: Vec<Vec<[f64; 4]>> = (0..n_traj)
        .into_par_iter()
        .map(|traj| {
            let mut rng = trajectory_rng(seed, traj as u64);
            let mut psi = initial.to_vec();
            let mut k = [
                vec![Complex64::default(); dim],
                vec![Complex64::default(); dim],
                vec![Complex64::default(); dim],
                vec![Complex64::default(); dim],
            ];
            let mut tmp = vec![Complex64::default(); dim];
            let mut r: f64 = rng.gen();
            let mut samples = Vec::with_capacity(n_samples + 1);
            samples.push(engine.observables(&psi));
            for _ in 0..n_samples {
                for _ in 0..sample_every {
                    engine.rk4_step(&mut psi, dt, &mut k, &mut tmp);
                    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                    if norm2 <= r {
                        // select the decay channel by its instantaneous rate
                        let p_cav = 2.0 * params.kappa_ratio * {
                            let mut n = 0.0;
                            for a in 0..spec.n_cav_max {
                                let blk = &psi[a * engine.m..(a + 1) * engine.m];
                                n += a as f64 * blk.iter().map(|z| z.norm_sqr()).sum::<f64>();
                            }
                            n
                        };
                        let p_ion = 2.0 * params.gamma_ratio * engine.ion_number_expectation(&psi);
                        let total = p_cav + p_ion;
                        if total > 0.0 && rng.gen::<f64>() * total < p_cav {
                            engine.cavity_jump(&mut psi);
                        } else if p_ion > 0.0 {
                            engine.ion_jump(&mut psi);
                        } else {
                            engine.cavity_jump(&mut psi);
                        }
                        let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                        let scale = 1.0 / n2.sqrt();
                        for z in &mut psi {
                            *z *= scale;
                        }
                        r = rng.gen();
                    }
                }
                samples.push(engine.observables(&psi));
            }
            samples
        })
        .collect();

    let times: Vec<f64> = (0..=n_samples)
        .map(|k| k as f64 * sample_every as f64 * dt)
        .collect();
    let records = (0..=n_samples)
        .map(|ti| {
            let mut rec = [Estimate::default(); 4];
            for (obs, r) in rec.iter_mut().enumerate() {
                let vals: Vec<f64> = per_traj.iter().map(|s| s[ti][obs]).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = if vals.len() > 1 {
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                *r = Estimate {
                    value: mean,
                    std_err: (var / n).sqrt(),
                };
            }
            ObservableRecord {
                n_cav: rec[0],
                x_sq: rec[1],
                p_sq: rec[2],
                delta_eff_mean: rec[3],
            }
        })
        .collect();

    Ok(JumpSeries {
        times,
        records,
        n_traj,
    })
}

/// Ensemble-averaged density operator at the final time of a set of jump
/// trajectories; used to cross-check the master-equation integration.
#[allow(clippy::too_many_arguments)]
pub fn jump_final_density(
    spec: &TruncationSpec,
    params: &ModelParams,
    initial: &[Complex64],
    n_traj: usize,
    seed: u64,
    t_final: f64,
) -> Result<DensityOperator, LindbladError> {
    spec.validate()?;
    let engine = PsiEngine::new(spec, params);
    let dim = spec.dimension();
    let dt0 = engine.stable_dt();
    let n_steps = (t_final / dt0).ceil() as usize;
    let dt = t_final / n_steps as f64;
    let m = spec.ion_states().len();

    let finals: Vec<Vec<Complex64>> = (0..n_traj)
        .into_par_iter()
        .map(|traj| {
            let mut rng = trajectory_rng(seed, traj as u64);
            let mut psi = initial.to_vec();
            let mut k = [
                vec![Complex64::default(); dim],
                vec![Complex64::default(); dim],
                vec![Complex64::default(); dim],
                vec![Complex64::default(); dim],
            ];
            let mut tmp = vec![Complex64::default(); dim];
            let mut r: f64 = rng.gen();
            for _ in 0..n_steps {
                engine.rk4_step(&mut psi, dt, &mut k, &mut tmp);
                let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                if norm2 <= r {
                    engine.cavity_jump(&mut psi);
                    let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                    if n2 > 0.0 {
                        let scale = 1.0 / n2.sqrt();
                        for z in &mut psi {
                            *z *= scale;
                        }
                    }
                    r = rng.gen();
                }
            }
            // normalize for the average over trajectories
            let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            let scale = 1.0 / n2.sqrt();
            psi.iter_mut().for_each(|z| *z *= scale);
            psi
        })
        .collect();

    let mut rho = DensityOperator::zeros(spec.n_cav_max, m);
    let w = 1.0 / n_traj as f64;
    for psi in &finals {
        rho.accumulate_pure(psi, w);
    }
    Ok(rho)
}
