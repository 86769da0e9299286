//! Lowest-order semiclassical treatment: mean intracavity field, effective
//! potential, classical equilibria with stability classification, and the
//! three transition markers of the pump-strength sweep.
//!
//! The stationary mean field at ion position `x̄` is
//!
//! ```text
//! ā = η / (κ − i Δ_eff(x̄))
//! ```
//!
//! and the equilibrium positions are the stationary points of the total
//! effective potential `V(x̄) = −(η²/κ)·arctan(Δ_eff(x̄)/κ) + x̄²/2`
//! (units of ħω, positions in units of x_ω). Minima are stable in the
//! potential sense; the finer stability analysis of the coupled fluctuation
//! dynamics lives in [`crate::gaussian`].

use crate::model::ModelParams;
use num_complex::Complex64;

/// Number of grid points used to bracket roots of the potential slope.
const ROOT_GRID: usize = 10_000;
/// Absolute tolerance (in q2) of the root bisection.
const ROOT_TOL: f64 = 1e-12;
/// Relative tolerance of the marker bisection in η_eff.
const MARKER_TOL: f64 = 1e-6;
/// |V''| below this is treated as marginal when classifying window edges.
const MARGINAL_CURVATURE: f64 = 1e-8;

/// One classical equilibrium: position, field, photon number, potential value
/// and the local-minimum stability label.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumBranch {
    /// Equilibrium position x̄/x_ω.
    pub x_bar: f64,
    /// Mean cavity field ā at x̄.
    pub a_bar: Complex64,
    /// Mean photon number |ā|².
    pub photons: f64,
    /// Total effective potential at x̄, units of ħω.
    pub v_total: f64,
    /// True iff x̄ is a local minimum of the total effective potential.
    pub stable: bool,
}

/// Pump-strength markers of the classical bistability window, all in η_eff.
///
/// `eta_eff_low`/`eta_eff_high` bound the window where central and side
/// minima coexist; `eta_eff_gm` is where the global minimum moves from the
/// center to the sides. All three are absent when the transition is
/// continuous (no coexistence anywhere on the scanned grid).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BistabilityMarkers {
    pub eta_eff_low: Option<f64>,
    pub eta_eff_gm: Option<f64>,
    pub eta_eff_high: Option<f64>,
}

/// Stationary mean field `ā = η/(κ − iΔ_eff(x̄))`.
pub fn mean_field(x_bar: f64, params: &ModelParams) -> Complex64 {
    let denom = Complex64::new(params.kappa_ratio, -params.delta_eff(x_bar));
    Complex64::new(params.eta_ratio, 0.0) / denom
}

/// Mean photon number on a branch, `|ā|² = η²/(κ² + Δ_eff²)`.
pub fn photon_number(x_bar: f64, params: &ModelParams) -> f64 {
    let d = params.delta_eff(x_bar);
    params.eta_ratio * params.eta_ratio / (params.kappa_ratio * params.kappa_ratio + d * d)
}

/// Optical effective potential `V_eff = −(η²/κ)·arctan(Δ_eff(x̄)/κ)`.
pub fn v_eff(x_bar: f64, params: &ModelParams) -> f64 {
    let eta2 = params.eta_ratio * params.eta_ratio;
    -(eta2 / params.kappa_ratio) * (params.delta_eff(x_bar) / params.kappa_ratio).atan()
}

/// Total effective potential: optical part plus the harmonic trap `x̄²/2`.
pub fn total_potential(x_bar: f64, params: &ModelParams) -> f64 {
    v_eff(x_bar, params) + 0.5 * x_bar * x_bar
}

/// Slope of the total effective potential. Using d(arctan)/dx the optical
/// term collapses to `−|ā(x̄)|²·Δ_eff'(x̄)`, so the stationarity condition is
/// `x̄ = |ā(x̄)|² Δ_eff'(x̄)`.
pub fn potential_slope(x_bar: f64, params: &ModelParams) -> f64 {
    x_bar - photon_number(x_bar, params) * params.d_delta_eff(x_bar)
}

/// Curvature of the total effective potential (analytic).
pub fn potential_curvature(x_bar: f64, params: &ModelParams) -> f64 {
    let d = params.delta_eff(x_bar);
    let d1 = params.d_delta_eff(x_bar);
    let d2 = params.d2_delta_eff(x_bar);
    let k2 = params.kappa_ratio * params.kappa_ratio;
    let eta2 = params.eta_ratio * params.eta_ratio;
    let n = eta2 / (k2 + d * d);
    // d/dx [ |ā|² Δ' ] = (d|ā|²/dx) Δ' + |ā|² Δ''  with  d|ā|²/dx = −2|ā|² Δ Δ'/(κ²+Δ²)
    1.0 + 2.0 * n * d * d1 * d1 / (k2 + d * d) - n * d2
}

fn branch_at(x_bar: f64, params: &ModelParams) -> EquilibriumBranch {
    EquilibriumBranch {
        x_bar,
        a_bar: mean_field(x_bar, params),
        photons: photon_number(x_bar, params),
        v_total: total_potential(x_bar, params),
        stable: potential_curvature(x_bar, params) > 0.0,
    }
}

/// All classical equilibria in `[−2·x_eq, 2·x_eq]`, sorted by position.
///
/// Roots of the potential slope are bracketed on a uniform grid and refined
/// by bisection; side roots are returned in exact ± pairs (the slope is odd),
/// and `x̄ = 0` is always a root by parity.
pub fn find_equilibria(params: &ModelParams) -> Vec<EquilibriumBranch> {
    let span = 2.0 * params.xeq_scale;
    let g = |x: f64| potential_slope(x, params);

    // Scan the positive half only; parity gives the mirror roots for free and
    // guarantees exact ± pairing.
    let mut positive_roots: Vec<f64> = Vec::new();
    let n = ROOT_GRID / 2;
    let h = span / n as f64;
    let mut x_prev = 0.0f64;
    // step off zero to avoid re-finding the parity root in the first cell
    let mut g_prev = g(h * 1e-6);
    for i in 1..=n {
        let x = i as f64 * h;
        let gx = g(x);
        if gx == 0.0 {
            positive_roots.push(x);
        } else if g_prev != 0.0 && g_prev.signum() != gx.signum() {
            positive_roots.push(bisect(&g, x_prev.max(h * 1e-6), x, ROOT_TOL));
        }
        x_prev = x;
        g_prev = gx;
    }
    positive_roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut branches = Vec::with_capacity(2 * positive_roots.len() + 1);
    for &r in positive_roots.iter().rev() {
        let b = branch_at(r, params);
        branches.push(EquilibriumBranch { x_bar: -r, ..b });
    }
    branches.push(branch_at(0.0, params));
    for &r in &positive_roots {
        branches.push(branch_at(r, params));
    }
    branches.reverse();
    branches.sort_by(|a, b| a.x_bar.partial_cmp(&b.x_bar).unwrap());
    branches
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut g_lo = g(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if g_lo.signum() != g_mid.signum() {
            hi = mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
    }
    0.5 * (lo + hi)
}

/// Stable side branch (largest stable |x̄|), if any.
pub fn stable_side_branch(params: &ModelParams) -> Option<EquilibriumBranch> {
    find_equilibria(params)
        .into_iter()
        .filter(|b| b.stable && b.x_bar > 1e-9)
        .max_by(|a, b| a.x_bar.partial_cmp(&b.x_bar).unwrap())
}

/// Unstable equilibrium with the smallest |x̄|, preferring the non-negative
/// member of a ± pair (the saddle between the wells, or the destabilized
/// center), if any.
pub fn unstable_branch(params: &ModelParams) -> Option<EquilibriumBranch> {
    find_equilibria(params)
        .into_iter()
        .filter(|b| !b.stable && b.x_bar >= 0.0)
        .min_by(|a, b| a.x_bar.partial_cmp(&b.x_bar).unwrap())
}

#[derive(Clone, Copy)]
struct WindowFlags {
    side_min: bool,
    center_min: bool,
}

fn window_flags(params: &ModelParams, eta_eff: f64) -> WindowFlags {
    let p = params.with_eta_eff(eta_eff);
    let center_curv = potential_curvature(0.0, &p);
    let side = stable_side_branch(&p);
    WindowFlags {
        side_min: side.is_some(),
        center_min: center_curv > MARGINAL_CURVATURE
            || (center_curv.abs() <= MARGINAL_CURVATURE && side.is_some()),
    }
}

/// Difference `V(x_side) − V(0)`; negative once the side wells win.
fn side_center_gap(params: &ModelParams, eta_eff: f64) -> Option<f64> {
    let p = params.with_eta_eff(eta_eff);
    let side = stable_side_branch(&p)?;
    Some(side.v_total - total_potential(0.0, &p))
}

/// Scans `eta_eff_grid` (ascending) for the boundaries of classical
/// bistability and the global-minimum crossing, each refined by bisection.
///
/// Markers are absent when no grid point shows coexisting central and side
/// minima — the continuous-transition case.
pub fn bistability_markers(params: &ModelParams, eta_eff_grid: &[f64]) -> BistabilityMarkers {
    let flags: Vec<WindowFlags> = eta_eff_grid
        .iter()
        .map(|&e| window_flags(params, e))
        .collect();

    let bistable_anywhere = flags.iter().any(|f| f.side_min && f.center_min);
    if !bistable_anywhere {
        return BistabilityMarkers::default();
    }

    // smallest η_eff where side minima exist
    let low = flags.iter().position(|f| f.side_min).map(|i| {
        if i == 0 {
            eta_eff_grid[0]
        } else {
            bisect_marker(
                eta_eff_grid[i - 1],
                eta_eff_grid[i],
                |e| window_flags(params, e).side_min,
            )
        }
    });

    // largest η_eff where the central minimum exists
    let high = flags.iter().rposition(|f| f.center_min).map(|i| {
        if i + 1 == eta_eff_grid.len() {
            eta_eff_grid[i]
        } else {
            bisect_marker(
                eta_eff_grid[i + 1],
                eta_eff_grid[i],
                |e| window_flags(params, e).center_min,
            )
        }
    });

    // global-minimum crossing: V(x_side) − V(0) changes sign inside [low, high]
    let gm = match (low, high) {
        (Some(lo), Some(hi)) if hi > lo => {
            let f_lo = side_center_gap(params, lo * (1.0 + 1e-9));
            let f_hi = side_center_gap(params, hi * (1.0 - 1e-9));
            match (f_lo, f_hi) {
                (Some(a), Some(b)) if a.signum() != b.signum() => {
                    let mut lo_e = lo * (1.0 + 1e-9);
                    let mut hi_e = hi * (1.0 - 1e-9);
                    let mut f_lo = a;
                    while (hi_e - lo_e) > MARKER_TOL * hi_e {
                        let mid = 0.5 * (lo_e + hi_e);
                        let f_mid = side_center_gap(params, mid).unwrap_or(f64::NAN);
                        if !f_mid.is_finite() || f_lo.signum() != f_mid.signum() {
                            hi_e = mid;
                        } else {
                            lo_e = mid;
                            f_lo = f_mid;
                        }
                    }
                    Some(0.5 * (lo_e + hi_e))
                }
                _ => None,
            }
        }
        _ => None,
    };

    BistabilityMarkers {
        eta_eff_low: low,
        eta_eff_gm: gm,
        eta_eff_high: high,
    }
}

/// Bisection on a boolean indicator: `absent` is a point where it is false,
/// `present` one where it is true; returns the flip point to relative 1e−6.
fn bisect_marker(mut absent: f64, mut present: f64, holds: impl Fn(f64) -> bool) -> f64 {
    let scale = present.abs().max(absent.abs()).max(1e-30);
    while (absent - present).abs() > MARKER_TOL * scale {
        let mid = 0.5 * (absent + present);
        if holds(mid) {
            present = mid;
        } else {
            absent = mid;
        }
    }
    present
}
