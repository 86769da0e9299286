//! Physical parameters of the ion–cavity system and the scalar functions of
//! the ion position derived from the intensity profile.
//!
//! Everything is kept dimensionless: the trap frequency `ω` sets the time
//! unit, positions are measured in units of the oscillator length `x_ω`,
//! momenta in units of `p_ω`, and all rates are stored as ratios to `ω`.
//!
//! The cavity mode intensity seen by the ion follows a quartic profile
//!
//! ```text
//! Ω²(x)/Δ₀ = U₀ [ (x/x_eq)² − 1 ]²
//! ```
//!
//! which vanishes at the optical equilibrium positions `±x_eq` and has a
//! single-photon barrier of depth `U₀` at the trap center. The pump–cavity
//! detuning is shifted by this amount, giving the effective detuning
//! `Δ_eff(x) = Δc − Ω²(x)/Δ₀`.

use thiserror::Error;

/// Validation failures for [`ModelParams`].
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter `{0}` must be strictly positive, got {1}")]
    NotPositive(&'static str, f64),
    #[error("parameter `{0}` must be non-negative, got {1}")]
    Negative(&'static str, f64),
    #[error("parameter `{0}` must be finite, got {1}")]
    NonFinite(&'static str, f64),
}

/// Dimensionless parameters of the ion–cavity model.
///
/// `Ω₀` and `Δ₀` never appear individually: only the optical depth scale
/// `U₀ = Ω₀²/Δ₀` enters the dynamics, so only `U₀/ω` is stored. The
/// dispersive cooperativity `C = U₀/κ` is derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Trap frequency; sets the time unit. Internally everything is a ratio
    /// to `ω`, so this is 1.0 unless a caller wants dimensional output.
    pub omega: f64,
    /// κ/ω — cavity half-linewidth over trap frequency.
    pub kappa_ratio: f64,
    /// Δc/ω — pump–cavity detuning over trap frequency.
    pub delta_c_ratio: f64,
    /// U₀/ω — single-photon optical depth scale over trap frequency.
    pub u0_ratio: f64,
    /// η/ω — pump amplitude over trap frequency.
    pub eta_ratio: f64,
    /// Γ/ω — optional direct ion-motion dissipation rate (0 allowed).
    pub gamma_ratio: f64,
    /// x_eq/x_ω — dimensionless optical equilibrium position.
    pub xeq_scale: f64,
}

impl ModelParams {
    /// Checks the domain invariants. Call after building by struct literal.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("omega", self.omega),
            ("kappa_ratio", self.kappa_ratio),
            ("delta_c_ratio", self.delta_c_ratio),
            ("u0_ratio", self.u0_ratio),
            ("eta_ratio", self.eta_ratio),
            ("gamma_ratio", self.gamma_ratio),
            ("xeq_scale", self.xeq_scale),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name, v));
            }
        }
        for (name, v) in [
            ("omega", self.omega),
            ("kappa_ratio", self.kappa_ratio),
            ("xeq_scale", self.xeq_scale),
        ] {
            if v <= 0.0 {
                return Err(ModelError::NotPositive(name, v));
            }
        }
        for (name, v) in [
            ("u0_ratio", self.u0_ratio),
            ("eta_ratio", self.eta_ratio),
            ("gamma_ratio", self.gamma_ratio),
        ] {
            if v < 0.0 {
                return Err(ModelError::Negative(name, v));
            }
        }
        Ok(())
    }

    /// Dispersive cooperativity `C = U₀/κ`.
    pub fn cooperativity(&self) -> f64 {
        self.u0_ratio / self.kappa_ratio
    }

    /// Dispersive frequency shift `Ω²(x)/Δ₀` in units of ω, evaluated at the
    /// dimensionless position `q2 = x/x_ω`. Always non-negative.
    pub fn optical_shift(&self, q2: f64) -> f64 {
        let y2 = (q2 / self.xeq_scale).powi(2);
        self.u0_ratio * (y2 - 1.0) * (y2 - 1.0)
    }

    /// Effective detuning `Δ_eff(q2)/ω = Δc/ω − Ω²(x)/(Δ₀ω)`.
    pub fn delta_eff(&self, q2: f64) -> f64 {
        self.delta_c_ratio - self.optical_shift(q2)
    }

    /// First derivative `dΔ_eff/dq2`, odd in `q2`.
    pub fn d_delta_eff(&self, q2: f64) -> f64 {
        let s2 = self.xeq_scale * self.xeq_scale;
        -4.0 * self.u0_ratio * (q2 / s2) * ((q2 * q2) / s2 - 1.0)
    }

    /// Second derivative `d²Δ_eff/dq2²`.
    pub fn d2_delta_eff(&self, q2: f64) -> f64 {
        let s2 = self.xeq_scale * self.xeq_scale;
        -4.0 * self.u0_ratio / s2 * (3.0 * q2 * q2 / s2 - 1.0)
    }

    /// Third derivative `d³Δ_eff/dq2³`.
    pub fn d3_delta_eff(&self, q2: f64) -> f64 {
        let s2 = self.xeq_scale * self.xeq_scale;
        -24.0 * self.u0_ratio * q2 / (s2 * s2)
    }

    /// Dimensionless pump strength `η_eff = η/√(κω) · x_ω/x_eq`.
    pub fn eta_eff(&self) -> f64 {
        self.eta_ratio / self.kappa_ratio.sqrt() / self.xeq_scale
    }

    /// Pump amplitude ratio `η/ω` that realizes a given `η_eff`. Inverse of
    /// [`ModelParams::eta_eff`]; round-trips to machine precision.
    pub fn eta_from_eta_eff(&self, eta_eff_value: f64) -> f64 {
        eta_eff_value * self.kappa_ratio.sqrt() * self.xeq_scale
    }

    /// Copy of the parameters with the pump set via `η_eff`.
    pub fn with_eta_eff(&self, eta_eff_value: f64) -> Self {
        Self {
            eta_ratio: self.eta_from_eta_eff(eta_eff_value),
            ..*self
        }
    }

    /// Largest `|Δ_eff|` over `q2 ∈ [−range, range]`. The extrema of the
    /// quartic profile are at `q2 = 0`, `±x_eq` and the interval edges, so
    /// scanning those candidates is exact.
    pub fn max_abs_delta_eff(&self, range: f64) -> f64 {
        let mut m = 0.0f64;
        for q2 in [0.0, self.xeq_scale.min(range), range] {
            m = m.max(self.delta_eff(q2).abs());
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    pub(crate) fn base_params() -> ModelParams {
        ModelParams {
            omega: 1.0,
            kappa_ratio: 1.0,
            delta_c_ratio: 0.0,
            u0_ratio: 2.0,
            eta_ratio: 1.0,
            gamma_ratio: 0.0,
            xeq_scale: 3.0,
        }
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let mut p = base_params();
        p.kappa_ratio = 0.0;
        assert_eq!(
            p.validate(),
            Err(ModelError::NotPositive("kappa_ratio", 0.0))
        );
        let mut p = base_params();
        p.eta_ratio = -1.0;
        assert!(p.validate().is_err());
        let mut p = base_params();
        p.xeq_scale = f64::NAN;
        assert!(p.validate().is_err());
        assert!(base_params().validate().is_ok());
    }

    #[test]
    fn cooperativity_is_u0_over_kappa() {
        let mut p = base_params();
        p.u0_ratio = 1.3;
        p.kappa_ratio = 0.65;
        assert_abs_diff_eq!(p.cooperativity(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn optical_shift_reference_points() {
        let p = base_params();
        // profile is U0 at the center, zero at ±x_eq, and back to U0 at √2·x_eq
        assert_abs_diff_eq!(p.optical_shift(0.0), p.u0_ratio, epsilon = 1e-15);
        assert_abs_diff_eq!(p.optical_shift(p.xeq_scale), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.optical_shift(-p.xeq_scale), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            p.optical_shift(p.xeq_scale * std::f64::consts::SQRT_2),
            p.u0_ratio,
            epsilon = 1e-12
        );
    }

    #[test]
    fn delta_eff_reference_points() {
        let mut p = base_params();
        assert_abs_diff_eq!(p.delta_eff(p.xeq_scale), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.delta_eff(0.0), -p.u0_ratio, epsilon = 1e-15);
        p.delta_c_ratio = 1.0;
        p.u0_ratio = 3.0;
        assert_abs_diff_eq!(p.delta_eff(0.0), -2.0, epsilon = 1e-15);
    }

    #[test]
    fn d_delta_eff_vanishes_at_profile_extrema() {
        let p = base_params();
        assert_abs_diff_eq!(p.d_delta_eff(0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.d_delta_eff(p.xeq_scale), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.d_delta_eff(-p.xeq_scale), 0.0, epsilon = 1e-15);
    }

    /// Central finite difference, the independent oracle for the analytic
    /// derivatives of the profile.
    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn d_delta_eff_matches_finite_difference() {
        let p = base_params();
        let q2 = 0.7 * p.xeq_scale;
        let fd = central_diff(|x| p.delta_eff(x), q2, 1e-5);
        assert_relative_eq!(p.d_delta_eff(q2), fd, max_relative = 1e-6);
    }

    #[test]
    fn derivative_chain_matches_finite_difference_on_grid() {
        let p = base_params();
        let n = 41;
        for i in 0..n {
            let q2 = -2.0 * p.xeq_scale
                + 4.0 * p.xeq_scale * (i as f64) / ((n - 1) as f64);
            let fd1 = central_diff(|x| p.delta_eff(x), q2, 1e-5);
            // the derivative vanishes at 0 and ±x_eq; use absolute tolerance there
            if fd1.abs() > 1e-8 {
                assert_relative_eq!(p.d_delta_eff(q2), fd1, max_relative = 1e-6);
            } else {
                assert_abs_diff_eq!(p.d_delta_eff(q2), fd1, epsilon = 1e-6);
            }
            let fd2 = central_diff(|x| p.d_delta_eff(x), q2, 1e-5);
            assert_relative_eq!(
                p.d2_delta_eff(q2),
                fd2,
                max_relative = 1e-6,
                epsilon = 1e-7
            );
            let fd3 = central_diff(|x| p.d2_delta_eff(x), q2, 1e-5);
            assert_relative_eq!(
                p.d3_delta_eff(q2),
                fd3,
                max_relative = 1e-6,
                epsilon = 1e-7
            );
        }
    }

    #[test]
    fn eta_eff_examples() {
        let mut p = base_params();
        p.kappa_ratio = 0.5;
        p.xeq_scale = 5.0;
        p.eta_ratio = 10.0;
        // 10 / (√0.5 · 5)
        assert_relative_eq!(p.eta_eff(), 2.828427124746190, max_relative = 1e-12);
        p.eta_ratio = p.kappa_ratio.sqrt() * p.xeq_scale;
        assert_abs_diff_eq!(p.eta_eff(), 1.0, epsilon = 1e-15);
        p.eta_ratio = 0.0;
        assert_abs_diff_eq!(p.eta_eff(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eta_from_eta_eff_reference_points() {
        let mut p = base_params();
        p.kappa_ratio = 1.0;
        p.xeq_scale = 3.0;
        assert_abs_diff_eq!(p.eta_from_eta_eff(0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eta_from_eta_eff(1.0), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn max_abs_delta_eff_scans_profile_extrema() {
        let p = base_params(); // Δc = 0, U0 = 2
        // on [−1.5 s, 1.5 s] the largest |Δ_eff| is at the edge: (1.5²−1)² U0
        let expect = p.u0_ratio * (1.5f64 * 1.5 - 1.0).powi(2);
        assert_relative_eq!(
            p.max_abs_delta_eff(1.5 * p.xeq_scale),
            expect,
            max_relative = 1e-12
        );
        // on a narrow window the center value dominates
        assert_relative_eq!(
            p.max_abs_delta_eff(0.1),
            p.u0_ratio,
            max_relative = 1e-2
        );
    }

    proptest! {
        #[test]
        fn eta_eff_round_trips(
            kappa in 1e-3f64..10.0,
            s in 0.5f64..20.0,
            eta in 0.0f64..50.0,
        ) {
            let p = ModelParams { kappa_ratio: kappa, xeq_scale: s, eta_ratio: eta, ..base_params() };
            let e = p.eta_eff();
            let back = p.eta_from_eta_eff(e);
            prop_assert!((back - eta).abs() <= 1e-12 * eta.max(1.0));
        }

        #[test]
        fn shift_even_and_derivative_odd(
            q2 in -30.0f64..30.0,
            u0 in 0.0f64..10.0,
            s in 0.5f64..15.0,
        ) {
            let p = ModelParams { u0_ratio: u0, xeq_scale: s, ..base_params() };
            prop_assert_eq!(p.optical_shift(q2), p.optical_shift(-q2));
            prop_assert_eq!(p.d_delta_eff(q2), -p.d_delta_eff(-q2));
        }

        #[test]
        fn delta_eff_bounded_by_bare_detuning(
            q2 in -40.0f64..40.0,
            dc in -5.0f64..5.0,
            u0 in 1e-6f64..10.0,
            s in 0.5f64..15.0,
        ) {
            let p = ModelParams { delta_c_ratio: dc, u0_ratio: u0, xeq_scale: s, ..base_params() };
            // blue-detuned convention: the dispersive shift only lowers Δ_eff,
            // with equality exactly at the profile zeros ±x_eq
            prop_assert!(p.delta_eff(q2) <= dc + 1e-12);
            let at_xeq = p.delta_eff(s);
            prop_assert!((at_xeq - dc).abs() < 1e-12);
        }
    }
}
