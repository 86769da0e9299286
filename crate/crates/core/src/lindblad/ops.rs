//! Matrix-free application of the Liouvillian on tile-structured density
//! operators, and the fixed-step RK4 used for time integration.
//!
//! The density operator is a grid of cavity-indexed ion tiles; every term of
//! the generator acts either elementwise (diagonal phases, damping), as a
//! small dense product with an ion operator inside one tile, or as a copy
//! between neighboring tiles (pump, cavity quantum jumps). Nothing larger
//! than one `m×m` tile is ever formed.

use super::{DensityOperator, IonOperators, TruncationSpec};
use crate::model::ModelParams;
use num_complex::Complex64;

pub struct Liouvillian {
    nc: usize,
    m: usize,
    delta_c: f64,
    eta: f64,
    kappa: f64,
    gamma: f64,
    ops: IonOperators,
    /// √nc ladder factors.
    sqrt_n: Vec<f64>,
    /// Largest eigenvalue of the (possibly clipped) profile operator.
    f_max: f64,
}

pub struct Scratch {
    k1: DensityOperator,
    k2: DensityOperator,
    k3: DensityOperator,
    stage: DensityOperator,
}

impl Liouvillian {
    pub fn new(spec: &TruncationSpec, params: &ModelParams) -> Self {
        let ops = super::ion_operators(spec, params);
        let m = ops.m;
        // symmetric matrix ∞-norm bounds its spectral radius
        let f_max = (0..m)
            .map(|i| (0..m).map(|j| ops.f_op[i * m + j].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        Self {
            nc: spec.n_cav_max,
            m,
            delta_c: params.delta_c_ratio,
            eta: params.eta_ratio,
            kappa: params.kappa_ratio,
            gamma: params.gamma_ratio,
            sqrt_n: (0..=spec.n_cav_max).map(|n| (n as f64).sqrt()).collect(),
            ops,
            f_max,
        }
    }

    pub fn ion_ops(&self) -> &IonOperators {
        &self.ops
    }

    /// Spectral-radius bound of the generator.
    pub fn rate_bound(&self) -> f64 {
        let nc = (self.nc - 1) as f64;
        let n_ion_top = *self.ops.states.last().unwrap_or(&1) as f64;
        let h_norm = self.delta_c.abs() * nc
            + n_ion_top
            + 2.0 * self.eta * self.sqrt_n[self.nc - 1].max(1.0)
            + self.f_max * nc;
        2.0 * h_norm + 2.0 * self.kappa * nc + 2.0 * self.gamma * n_ion_top
    }

    /// Step satisfying the RK4 stability bound with a safety margin.
    pub fn stable_dt(&self) -> f64 {
        2.5 / self.rate_bound().max(1.0)
    }

    pub fn make_scratch(&self) -> Scratch {
        let z = DensityOperator::zeros(self.nc, self.m);
        Scratch {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            stage: z,
        }
    }

    /// `out = L(rho)`.
    pub fn apply(&self, rho: &DensityOperator, out: &mut DensityOperator) {
        debug_assert_eq!(rho.n_cav, self.nc);
        debug_assert_eq!(rho.m_ion, self.m);
        let (nc, m) = (self.nc, self.m);
        let t2 = m * m;
        let f = &self.ops.f_op;
        let n_i: Vec<f64> = self.ops.states.iter().map(|&s| s as f64).collect();

        for a in 0..nc {
            for b in 0..nc {
                let base = (a * nc + b) * t2;
                let tile = &rho.data[base..base + t2];
                let o = &mut out.data[base..base + t2];

                // diagonal phases and damping:
                //   −i(−Δc(a−b) + ω(n_i − n_j))·ρ − κ(a+b)ρ − Γ(n_b i + n_b j)ρ
                let kap = -self.kappa * (a + b) as f64;
                let dph = self.delta_c * (a as f64 - b as f64);
                for i in 0..m {
                    for j in 0..m {
                        let im = dph - (n_i[i] - n_i[j]);
                        let g = if self.gamma > 0.0 {
                            -self.gamma * (n_i[i] + n_i[j])
                        } else {
                            0.0
                        };
                        let c = Complex64::new(kap + g, im);
                        o[i * m + j] = c * tile[i * m + j];
                    }
                }

                // interaction: −i·a·F·ρ + i·b·ρ·F (dense tile products)
                if a > 0 || b > 0 {
                    let (fa, fb) = (a as f64, b as f64);
                    for i in 0..m {
                        for j in 0..m {
                            let mut left = Complex64::default();
                            let mut right = Complex64::default();
                            for k in 0..m {
                                left += f[i * m + k] * tile[k * m + j];
                                right += tile[i * m + k] * f[k * m + j];
                            }
                            let v = fb * right - fa * left; // −i(aFρ − bρF) = i(bρF − aFρ)
                            o[i * m + j] += Complex64::new(-v.im, v.re);
                        }
                    }
                }

                // pump: η(√a·ρ[a−1,b] − √(a+1)·ρ[a+1,b])
                //     − η(√(b+1)·ρ[a,b+1] − √b·ρ[a,b−1])
                if self.eta != 0.0 {
                    if a > 0 {
                        let src = &rho.data[((a - 1) * nc + b) * t2..][..t2];
                        let w = self.eta * self.sqrt_n[a];
                        for (oo, ss) in o.iter_mut().zip(src) {
                            *oo += w * ss;
                        }
                    }
                    if a + 1 < nc {
                        let src = &rho.data[((a + 1) * nc + b) * t2..][..t2];
                        let w = -self.eta * self.sqrt_n[a + 1];
                        for (oo, ss) in o.iter_mut().zip(src) {
                            *oo += w * ss;
                        }
                    }
                    if b + 1 < nc {
                        let src = &rho.data[(a * nc + b + 1) * t2..][..t2];
                        let w = -self.eta * self.sqrt_n[b + 1];
                        for (oo, ss) in o.iter_mut().zip(src) {
                            *oo += w * ss;
                        }
                    }
                    if b > 0 {
                        let src = &rho.data[(a * nc + b - 1) * t2..][..t2];
                        let w = self.eta * self.sqrt_n[b];
                        for (oo, ss) in o.iter_mut().zip(src) {
                            *oo += w * ss;
                        }
                    }
                }

                // cavity jump gain: 2κ√((a+1)(b+1))·ρ[a+1,b+1]
                if a + 1 < nc && b + 1 < nc {
                    let src = &rho.data[((a + 1) * nc + b + 1) * t2..][..t2];
                    let w = 2.0 * self.kappa * self.sqrt_n[a + 1] * self.sqrt_n[b + 1];
                    for (oo, ss) in o.iter_mut().zip(src) {
                        *oo += w * ss;
                    }
                }

                // ion jump gain: 2Γ·B ρ Bᵀ within the tile
                if self.gamma > 0.0 {
                    let bop = self
                        .ops
                        .b_op
                        .as_ref()
                        .expect("ion damping requires the full Fock basis");
                    // B is the superdiagonal lowering operator restricted to
                    // the full basis; B ρ Bᵀ shifts both indices up by one
                    for i in 0..m {
                        for j in 0..m {
                            let mut acc = Complex64::default();
                            for k in 0..m {
                                if bop[i * m + k] == 0.0 {
                                    continue;
                                }
                                for l in 0..m {
                                    if bop[j * m + l] != 0.0 {
                                        acc += bop[i * m + k] * bop[j * m + l]
                                            * tile[k * m + l];
                                    }
                                }
                            }
                            o[i * m + j] += 2.0 * self.gamma * acc;
                        }
                    }
                }
            }
        }
    }

    /// Classic fourth-order Runge–Kutta step in place.
    pub fn rk4_step(&self, rho: &mut DensityOperator, dt: f64, s: &mut Scratch) {
        self.apply(rho, &mut s.k1);
        stage(&mut s.stage, rho, &s.k1, 0.5 * dt);
        self.apply(&s.stage, &mut s.k2);
        stage(&mut s.stage, rho, &s.k2, 0.5 * dt);
        self.apply(&s.stage, &mut s.k3);
        stage(&mut s.stage, rho, &s.k3, dt);
        // reuse k2 accumulation: k2+k3 before the final apply overwrites k3
        for (k2, k3) in s.k2.data.iter_mut().zip(&s.k3.data) {
            *k2 += *k3;
        }
        self.apply(&s.stage, &mut s.k3); // k4
        let w = dt / 6.0;
        for (((r, k1), k23), k4) in rho
            .data
            .iter_mut()
            .zip(&s.k1.data)
            .zip(&s.k2.data)
            .zip(&s.k3.data)
        {
            *r += w * (k1 + 2.0 * k23 + k4);
        }
    }
}

#[inline]
fn stage(out: &mut DensityOperator, rho: &DensityOperator, k: &DensityOperator, h: f64) {
    for ((o, r), kk) in out.data.iter_mut().zip(&rho.data).zip(&k.data) {
        *o = r + h * kk;
    }
}
