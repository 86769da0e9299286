//! Small-cutoff fully quantum reference: master-equation integration and
//! quantum-jump trajectories in a truncated Fock space.
//!
//! The Hamiltonian (units of ħω, frame rotating with the pump)
//!
//! ```text
//! H = −Δc a†a + iη(a† − a) + ω b†b + a†a · F(x̂),
//! F(x̂) = U₀ [ (x̂/x_eq)² − 1 ]²
//! ```
//!
//! is assembled exactly as a polynomial in the tridiagonal position operator
//! (built in an enlarged basis so the quartic matrix elements are exact, then
//! truncated), and the cavity decay enters through the Lindblad dissipator
//! `κ(2aρa† − {a†a, ρ})`, plus an optional ion channel `Γ(2bρb† − {b†b, ρ})`.
//!
//! Two controlled reductions keep the stiff, unpopulated corner of the
//! truncated space from dominating the integrator step:
//!
//! * `even_parity` restricts the ion space to even Fock states. The
//!   evolution never couples ion-parity sectors when Γ = 0, so an even
//!   initial state stays exactly representable.
//! * `profile_clip` caps the spectrum of `F(x̂)` at its value at a chosen
//!   position: eigenvectors below the cap are untouched, and the population
//!   of the clipped subspace is reported as a diagnostic.
//!
//! The steady state is found by time integration (classic fixed-step
//! fourth-order Runge–Kutta with a stability-bounded step) until the
//! Liouvillian residual drops below tolerance.

mod jumps;
mod ops;

pub use jumps::{quantum_jump_trajectories, JumpSeries};
pub use ops::Liouvillian;

use crate::model::ModelParams;
use crate::sde::{Estimate, ObservableRecord};
use crate::semiclassical;
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LindbladError {
    #[error("invalid truncation: {0}")]
    InvalidSpec(String),
    #[error("truncation inadequate: {mode} top-level population {population:.2e} exceeds 1e-4")]
    TruncationInadequate { mode: &'static str, population: f64 },
    #[error("no convergence within t = {t_cap}")]
    NoConvergence { t_cap: f64 },
    #[error("even-parity restriction requires Γ = 0 (the ion channel couples parity sectors)")]
    ParityNeedsNoIonDamping,
}

/// Fock-space truncation and basis reductions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    /// Cavity Fock dimension (levels 0..n_cav_max−1).
    pub n_cav_max: usize,
    /// Ion Fock dimension before any parity restriction.
    pub n_ion_max: usize,
    /// Restrict the ion space to even Fock states (Γ = 0 only).
    pub even_parity: bool,
    /// Cap the optical-shift spectrum at its value at this position
    /// (units of x_ω). `None` keeps the exact truncated operator.
    pub profile_clip: Option<f64>,
}

impl TruncationSpec {
    pub fn new(n_cav_max: usize, n_ion_max: usize) -> Self {
        Self {
            n_cav_max,
            n_ion_max,
            even_parity: false,
            profile_clip: None,
        }
    }

    pub fn with_even_parity(mut self) -> Self {
        self.even_parity = true;
        self
    }

    pub fn with_profile_clip(mut self, x_clip: f64) -> Self {
        self.profile_clip = Some(x_clip);
        self
    }

    pub fn validate(&self) -> Result<(), LindbladError> {
        if self.n_cav_max < 2 || self.n_ion_max < 2 {
            return Err(LindbladError::InvalidSpec(format!(
                "need at least 2 levels per mode, got {}×{}",
                self.n_cav_max, self.n_ion_max
            )));
        }
        Ok(())
    }

    /// Ion Fock indices retained in the basis.
    pub fn ion_states(&self) -> Vec<usize> {
        (0..self.n_ion_max)
            .filter(|n| !self.even_parity || n % 2 == 0)
            .collect()
    }

    /// Total Hilbert-space dimension of this run.
    pub fn dimension(&self) -> usize {
        self.n_cav_max * self.ion_states().len()
    }
}

/// Dense ion-space operators in the retained basis.
#[derive(Debug, Clone)]
pub struct IonOperators {
    /// Basis size.
    pub m: usize,
    /// Fock index per basis slot.
    pub states: Vec<usize>,
    /// Optical-shift operator `F(x̂)` (clipped if requested), row-major m×m.
    pub f_op: Vec<f64>,
    /// `x̂²` in the retained basis.
    pub x2_op: Vec<f64>,
    /// `p̂²` in the retained basis.
    pub p2_op: Vec<f64>,
    /// Lowering operator `b` (full basis only).
    pub b_op: Option<Vec<f64>>,
    /// Projector onto the clipped part of the `F` spectrum, for diagnostics.
    pub clip_projector: Option<Vec<f64>>,
}

/// Builds the ion operators: `F(x̂)` assembled exactly in a basis enlarged by
/// four levels and truncated afterwards, then optionally clipped and
/// restricted to even states.
pub fn ion_operators(spec: &TruncationSpec, params: &ModelParams) -> IonOperators {
    let n = spec.n_ion_max;
    let ext = n + 4;
    let mut x = DMatrix::<f64>::zeros(ext, ext);
    for i in 0..ext - 1 {
        let v = ((i + 1) as f64 / 2.0).sqrt();
        x[(i, i + 1)] = v;
        x[(i + 1, i)] = v;
    }
    let s2 = params.xeq_scale * params.xeq_scale;
    let a = &x * &x / s2 - DMatrix::<f64>::identity(ext, ext);
    let f_ext = (&a * &a) * params.u0_ratio;
    let mut f = f_ext.view((0, 0), (n, n)).into_owned();

    let mut clip_projector = None;
    if let Some(x_clip) = spec.profile_clip {
        let cap = params.optical_shift(x_clip);
        let eig = nalgebra::SymmetricEigen::new(f.clone());
        let mut clipped = DMatrix::<f64>::zeros(n, n);
        let mut proj = DMatrix::<f64>::zeros(n, n);
        let mut any = false;
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            let l = if lambda > cap {
                any = true;
                proj += v * v.transpose();
                cap
            } else {
                lambda
            };
            clipped += v * v.transpose() * l;
        }
        if any {
            clip_projector = Some(proj);
        }
        f = clipped;
    }

    // x̂² and p̂² have exact band-2 matrix elements in the Fock basis
    let mut x2 = DMatrix::<f64>::zeros(n, n);
    let mut p2 = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        x2[(i, i)] = i as f64 + 0.5;
        p2[(i, i)] = i as f64 + 0.5;
        if i + 2 < n {
            let v = (((i + 1) * (i + 2)) as f64).sqrt() / 2.0;
            x2[(i, i + 2)] = v;
            x2[(i + 2, i)] = v;
            p2[(i, i + 2)] = -v;
            p2[(i + 2, i)] = -v;
        }
    }

    let states = spec.ion_states();
    let m = states.len();
    let restrict = |mat: &DMatrix<f64>| -> Vec<f64> {
        let mut out = vec![0.0; m * m];
        for (i, &si) in states.iter().enumerate() {
            for (j, &sj) in states.iter().enumerate() {
                out[i * m + j] = mat[(si, sj)];
            }
        }
        out
    };

    let b_op = if spec.even_parity {
        None
    } else {
        let mut b = DMatrix::<f64>::zeros(n, n);
        for i in 0..n - 1 {
            b[(i, i + 1)] = ((i + 1) as f64).sqrt();
        }
        Some(restrict(&b))
    };

    IonOperators {
        m,
        states: states.clone(),
        f_op: restrict(&f),
        x2_op: restrict(&x2),
        p2_op: restrict(&p2),
        b_op,
        clip_projector: clip_projector.as_ref().map(|p| restrict(p)),
    }
}

/// Dense Hamiltonian in the retained product basis (cavity-major), mainly
/// for cross-checks against the matrix-free application.
pub fn build_hamiltonian(spec: &TruncationSpec, params: &ModelParams) -> DMatrix<Complex64> {
    let ops = ion_operators(spec, params);
    let nc = spec.n_cav_max;
    let m = ops.m;
    let dim = nc * m;
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for c in 0..nc {
        for (i, &si) in ops.states.iter().enumerate() {
            let row = c * m + i;
            for (j, &sj) in ops.states.iter().enumerate() {
                let col = c * m + j;
                let mut v = (c as f64) * ops.f_op[i * m + j];
                if i == j {
                    v += -params.delta_c_ratio * c as f64 + si as f64;
                    debug_assert_eq!(si, sj);
                }
                h[(row, col)] += Complex64::new(v, 0.0);
            }
            // pump iη(a† − a)
            if c + 1 < nc {
                let amp = params.eta_ratio * ((c + 1) as f64).sqrt();
                h[((c + 1) * m + i, row)] += Complex64::new(0.0, amp);
                h[(row, (c + 1) * m + i)] += Complex64::new(0.0, -amp);
            }
        }
    }
    h
}

/// A density operator stored as cavity-indexed tiles of the ion space:
/// layout `[nc][mc][i][j]`, row-major within tiles.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    pub n_cav: usize,
    pub m_ion: usize,
    pub data: Vec<Complex64>,
}

impl DensityOperator {
    pub fn zeros(n_cav: usize, m_ion: usize) -> Self {
        Self {
            n_cav,
            m_ion,
            data: vec![Complex64::default(); n_cav * n_cav * m_ion * m_ion],
        }
    }

    #[inline]
    pub fn tile_index(&self, nc: usize, mc: usize) -> usize {
        (nc * self.n_cav + mc) * self.m_ion * self.m_ion
    }

    /// Adds `w·|ψ⟩⟨ψ|` for a state vector in the same layout `[nc][i]`.
    pub fn accumulate_pure(&mut self, psi: &[Complex64], w: f64) {
        let (nc, m) = (self.n_cav, self.m_ion);
        assert_eq!(psi.len(), nc * m);
        for a in 0..nc {
            for b in 0..nc {
                let base = self.tile_index(a, b);
                for i in 0..m {
                    for j in 0..m {
                        self.data[base + i * m + j] +=
                            w * psi[a * m + i] * psi[b * m + j].conj();
                    }
                }
            }
        }
    }

    pub fn trace(&self) -> Complex64 {
        let m = self.m_ion;
        let mut t = Complex64::default();
        for nc in 0..self.n_cav {
            let base = self.tile_index(nc, nc);
            for i in 0..m {
                t += self.data[base + i * m + i];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Populations of the cavity levels.
    pub fn cavity_populations(&self) -> Vec<f64> {
        let m = self.m_ion;
        (0..self.n_cav)
            .map(|nc| {
                let base = self.tile_index(nc, nc);
                (0..m).map(|i| self.data[base + i * m + i].re).sum()
            })
            .collect()
    }

    /// Populations of the ion basis slots (ordered as the retained states).
    pub fn ion_populations(&self) -> Vec<f64> {
        let m = self.m_ion;
        let mut pops = vec![0.0; m];
        for nc in 0..self.n_cav {
            let base = self.tile_index(nc, nc);
            for (i, p) in pops.iter_mut().enumerate() {
                *p += self.data[base + i * m + i].re;
            }
        }
        pops
    }

    /// `⟨a†a⟩`.
    pub fn mean_cavity_number(&self) -> f64 {
        self.cavity_populations()
            .iter()
            .enumerate()
            .map(|(nc, p)| nc as f64 * p)
            .sum()
    }

    /// `Tr[ρ (I ⊗ A)]` for a real symmetric ion operator.
    pub fn ion_expectation(&self, a: &[f64]) -> f64 {
        let m = self.m_ion;
        let mut acc = 0.0;
        for nc in 0..self.n_cav {
            let base = self.tile_index(nc, nc);
            for i in 0..m {
                for j in 0..m {
                    acc += a[i * m + j] * self.data[base + i * m + j].re;
                }
            }
        }
        acc
    }

    /// Standard-basis dense matrix (cavity-major), for spectral checks.
    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        let (nc, m) = (self.n_cav, self.m_ion);
        let dim = nc * m;
        let mut out = DMatrix::<Complex64>::zeros(dim, dim);
        for a in 0..nc {
            for b in 0..nc {
                let base = self.tile_index(a, b);
                for i in 0..m {
                    for j in 0..m {
                        out[(a * m + i, b * m + j)] = self.data[base + i * m + j];
                    }
                }
            }
        }
        out
    }
}

/// Initial state for the steady-state search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    /// Product vacuum.
    Vacuum,
    /// Equal mixture of coherent products placed on the stable semiclassical
    /// branches; converges much faster than vacuum when the pump is strong.
    SemiclassicalMixture,
}

/// Coherent-state amplitudes on a Fock ladder.
fn coherent_amplitudes(alpha: Complex64, n: usize) -> Vec<Complex64> {
    let mut c = Vec::with_capacity(n);
    let mut cur = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for k in 0..n {
        c.push(cur);
        cur = cur * alpha / ((k + 1) as f64).sqrt();
    }
    c
}

/// Pure product state |coh(α)⟩⊗|coh(α_ion)⟩ in the retained basis,
/// renormalized after any parity restriction.
pub fn coherent_product_state(
    spec: &TruncationSpec,
    alpha_cav: Complex64,
    alpha_ion: Complex64,
) -> Vec<Complex64> {
    let states = spec.ion_states();
    let cav = coherent_amplitudes(alpha_cav, spec.n_cav_max);
    let ion_full = coherent_amplitudes(alpha_ion, spec.n_ion_max);
    let ion: Vec<Complex64> = states.iter().map(|&s| ion_full[s]).collect();
    let mut psi = Vec::with_capacity(spec.dimension());
    for c in &cav {
        for i in &ion {
            psi.push(c * i);
        }
    }
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut psi {
        *z /= norm;
    }
    psi
}

pub fn initial_density(
    spec: &TruncationSpec,
    params: &ModelParams,
    which: InitialState,
) -> DensityOperator {
    let m = spec.ion_states().len();
    let mut rho = DensityOperator::zeros(spec.n_cav_max, m);
    match which {
        InitialState::Vacuum => {
            let psi = coherent_product_state(spec, Complex64::default(), Complex64::default());
            rho.accumulate_pure(&psi, 1.0);
        }
        InitialState::SemiclassicalMixture => {
            let stable: Vec<_> = semiclassical::find_equilibria(params)
                .into_iter()
                .filter(|b| b.stable)
                .collect();
            let w = 1.0 / stable.len() as f64;
            for b in &stable {
                let psi = coherent_product_state(
                    spec,
                    b.a_bar,
                    Complex64::new(b.x_bar / std::f64::consts::SQRT_2, 0.0),
                );
                rho.accumulate_pure(&psi, w);
            }
        }
    }
    rho
}

/// Truncation diagnostics of a converged state.
#[derive(Debug, Clone, Copy)]
pub struct TruncationDiagnostics {
    /// Population of the top two cavity levels.
    pub cavity_top: f64,
    /// Population of the top two ion basis slots.
    pub ion_top: f64,
    /// Population of the clipped part of the profile spectrum, if clipping
    /// was requested.
    pub clipped_population: Option<f64>,
    /// |Tr ρ − 1| at the end of the run.
    pub trace_error: f64,
}

/// Steady-state result.
#[derive(Debug)]
pub struct SteadyReport {
    pub rho: DensityOperator,
    pub observables: ObservableRecord,
    /// Final `‖L(ρ)‖/‖ρ‖`.
    pub residual: f64,
    /// Integration time used.
    pub t_elapsed: f64,
    pub diagnostics: TruncationDiagnostics,
}

/// Options for [`evolve_to_steady`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions {
    pub t_cap: f64,
    /// Step override; defaults to the stability bound of the generator.
    pub dt: Option<f64>,
    /// Residual check spacing in time units.
    pub check_interval: f64,
    pub initial: InitialState,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            t_cap: 4000.0,
            dt: None,
            check_interval: 5.0,
            initial: InitialState::SemiclassicalMixture,
        }
    }
}

/// Observables of a density operator under the model's measurement set.
pub fn density_observables(
    rho: &DensityOperator,
    ops: &IonOperators,
    params: &ModelParams,
) -> ObservableRecord {
    let exact = |value: f64| Estimate { value, std_err: 0.0 };
    ObservableRecord {
        n_cav: exact(rho.mean_cavity_number()),
        x_sq: exact(rho.ion_expectation(&ops.x2_op)),
        p_sq: exact(rho.ion_expectation(&ops.p2_op)),
        delta_eff_mean: exact(params.delta_c_ratio - rho.ion_expectation(&ops.f_op)),
    }
}

fn diagnostics(rho: &DensityOperator, ops: &IonOperators) -> TruncationDiagnostics {
    let cav = rho.cavity_populations();
    let ion = rho.ion_populations();
    let top2 = |v: &[f64]| v.iter().rev().take(2).sum::<f64>();
    TruncationDiagnostics {
        cavity_top: top2(&cav),
        ion_top: top2(&ion),
        clipped_population: ops
            .clip_projector
            .as_ref()
            .map(|p| rho.ion_expectation(p)),
        trace_error: (rho.trace() - Complex64::new(1.0, 0.0)).norm(),
    }
}

fn check_truncation(diag: &TruncationDiagnostics) -> Result<(), LindbladError> {
    if diag.cavity_top > 1e-4 {
        return Err(LindbladError::TruncationInadequate {
            mode: "cavity",
            population: diag.cavity_top,
        });
    }
    if diag.ion_top > 1e-4 {
        return Err(LindbladError::TruncationInadequate {
            mode: "ion",
            population: diag.ion_top,
        });
    }
    if let Some(p) = diag.clipped_population {
        if p > 1e-4 {
            return Err(LindbladError::TruncationInadequate {
                mode: "profile clip",
                population: p,
            });
        }
    }
    Ok(())
}

/// Integrates the master equation until `‖L(ρ)‖ < tolerance·‖ρ‖`, then
/// checks the truncation diagnostics and reports operator expectations.
pub fn evolve_to_steady(
    spec: &TruncationSpec,
    params: &ModelParams,
    tolerance: f64,
    opts: &SteadyOptions,
) -> Result<SteadyReport, LindbladError> {
    spec.validate()?;
    if spec.even_parity && params.gamma_ratio > 0.0 {
        return Err(LindbladError::ParityNeedsNoIonDamping);
    }
    let liouv = Liouvillian::new(spec, params);
    let dt = opts.dt.unwrap_or_else(|| liouv.stable_dt());
    let mut rho = initial_density(spec, params, opts.initial);

    let steps_per_check = (opts.check_interval / dt).ceil().max(1.0) as usize;
    let mut t = 0.0;
    let mut residual = f64::INFINITY;
    let mut scratch = liouv.make_scratch();
    while t < opts.t_cap {
        for _ in 0..steps_per_check {
            liouv.rk4_step(&mut rho, dt, &mut scratch);
        }
        t += steps_per_check as f64 * dt;
        let mut rhs = DensityOperator::zeros(rho.n_cav, rho.m_ion);
        liouv.apply(&rho, &mut rhs);
        residual = rhs.frobenius_norm() / rho.frobenius_norm();
        if residual < tolerance {
            let diag = diagnostics(&rho, liouv.ion_ops());
            check_truncation(&diag)?;
            let observables = density_observables(&rho, liouv.ion_ops(), params);
            return Ok(SteadyReport {
                rho,
                observables,
                residual,
                t_elapsed: t,
                diagnostics: diag,
            });
        }
    }
    let _ = residual;
    Err(LindbladError::NoConvergence { t_cap: opts.t_cap })
}

#[cfg(test)]
mod tests;
