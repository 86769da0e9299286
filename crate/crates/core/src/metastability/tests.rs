use super::*;
use crate::sde::{trajectory_rng, SteadyPolicy};
use crate::ModelParams;
use approx::assert_abs_diff_eq;
use rand::Rng;
use rand_distr::StandardNormal;

fn params_c2(kappa: f64, s: f64, eta_eff: f64) -> ModelParams {
    ModelParams {
        omega: 1.0,
        kappa_ratio: kappa,
        delta_c_ratio: 0.0,
        u0_ratio: 2.0 * kappa,
        eta_ratio: 0.0,
        gamma_ratio: 0.0,
        xeq_scale: s,
    }
    .with_eta_eff(eta_eff)
}

fn gauss2<R: Rng>(rng: &mut R, mean: [f64; 2], sd: [f64; 2], rho: f64) -> [f64; 2] {
    let u: f64 = rng.sample(StandardNormal);
    let v: f64 = rng.sample(StandardNormal);
    [
        mean[0] + sd[0] * u,
        mean[1] + sd[1] * (rho * u + (1.0 - rho * rho).sqrt() * v),
    ]
}

#[test]
fn single_gaussian_recovered() {
    let mut rng = trajectory_rng(1, 0);
    let n = 4000;
    let samples: Vec<[f64; 2]> = (0..n)
        .map(|_| gauss2(&mut rng, [1.5, -0.4], [0.8, 1.3], 0.4))
        .collect();
    let m = fit_mixture(&samples, 1).unwrap();
    let c = &m.components[0];
    assert_abs_diff_eq!(c.weight, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(c.mean[0], 1.5, epsilon = 4.0 * 0.8 / (n as f64).sqrt());
    assert_abs_diff_eq!(c.mean[1], -0.4, epsilon = 4.0 * 1.3 / (n as f64).sqrt());
    assert_abs_diff_eq!(c.cov[(0, 0)], 0.64, epsilon = 0.06);
    assert_abs_diff_eq!(c.cov[(1, 1)], 1.69, epsilon = 0.15);
    assert_abs_diff_eq!(c.cov[(0, 1)], 0.4 * 0.8 * 1.3, epsilon = 0.06);
}

#[test]
fn two_component_mixture_separated_means_recovered() {
    let mut rng = trajectory_rng(2, 0);
    let n = 3000;
    let samples: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                gauss2(&mut rng, [-5.0, 0.0], [1.0, 1.0], 0.0)
            } else {
                gauss2(&mut rng, [5.0, 0.0], [1.0, 1.0], 0.0)
            }
        })
        .collect();
    let m = fit_mixture(&samples, 2).unwrap();
    let mut means: Vec<f64> = m.components.iter().map(|c| c.mean[0]).collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_abs_diff_eq!(means[0], -5.0, epsilon = 0.1);
    assert_abs_diff_eq!(means[1], 5.0, epsilon = 0.1);
    for c in &m.components {
        assert_abs_diff_eq!(c.weight, 0.5, epsilon = 0.05);
    }
}

#[test]
fn degenerate_component_is_reported() {
    let samples: Vec<[f64; 2]> = (0..200).map(|_| [1.0, 2.0]).collect();
    match fit_mixture(&samples, 1) {
        Err(MetastabilityError::DegenerateComponent { eigenvalue, .. }) => {
            assert!(eigenvalue < 1e-10);
        }
        other => panic!("expected DegenerateComponent, got {other:?}"),
    }
}

#[test]
fn too_few_samples_rejected() {
    let samples: Vec<[f64; 2]> = (0..99).map(|i| [i as f64, 0.0]).collect();
    assert!(matches!(
        fit_mixture(&samples, 2),
        Err(MetastabilityError::TooFewSamples { required: 100, .. })
    ));
}

#[test]
fn isotropic_regions_are_circles_and_scale_quadratically() {
    let comp = MixtureComponent {
        weight: 1.0,
        mean: Vector2::new(1.0, -2.0),
        cov: Matrix2::identity() * 0.25,
    };
    let e3 = EllipseRegion::new(&comp, 3.0);
    assert_abs_diff_eq!(e3.semi_axes[0], 1.5, epsilon = 1e-12);
    assert_abs_diff_eq!(e3.semi_axes[1], 1.5, epsilon = 1e-12);
    let e6 = EllipseRegion::new(&comp, 6.0);
    let area = |e: &EllipseRegion| std::f64::consts::PI * e.semi_axes[0] * e.semi_axes[1];
    assert_abs_diff_eq!(area(&e6) / area(&e3), 4.0, epsilon = 1e-12);
}

#[test]
fn membership_reference_points() {
    let comp = MixtureComponent {
        weight: 1.0,
        mean: Vector2::new(0.5, 0.5),
        cov: Matrix2::new(2.0, 0.3, 0.3, 0.7),
    };
    let e = EllipseRegion::new(&comp, 3.0);
    assert!(membership([0.5, 0.5], &e));
    // a point just beyond the semiaxis along the first principal direction
    let (c, s) = (e.angle.cos(), e.angle.sin());
    let outside = [
        0.5 + 1.001 * e.semi_axes[0] * c,
        0.5 + 1.001 * e.semi_axes[0] * s,
    ];
    assert!(!membership(outside, &e));
    let inside = [
        0.5 + 0.999 * e.semi_axes[0] * c,
        0.5 + 0.999 * e.semi_axes[0] * s,
    ];
    assert!(membership(inside, &e));
}

#[test]
fn three_sigma_mass_matches_chi_square() {
    // P(χ²₂ ≤ 9) = 1 − e^{−9/2} ≈ 0.988891
    let mut rng = trajectory_rng(3, 0);
    let n = 100_000;
    let comp = MixtureComponent {
        weight: 1.0,
        mean: Vector2::new(-1.0, 2.0),
        cov: Matrix2::new(1.5, -0.6, -0.6, 0.9),
    };
    let e = EllipseRegion::new(&comp, 3.0);
    // sample from the component itself via its Cholesky factor
    let l = nalgebra::Cholesky::new(comp.cov).unwrap().l();
    let mut hits = 0usize;
    for _ in 0..n {
        let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal));
        let x = comp.mean + l * z;
        if e.contains([x[0], x[1]]) {
            hits += 1;
        }
    }
    let frac = hits as f64 / n as f64;
    let expect = 1.0 - (-4.5f64).exp();
    let se = (expect * (1.0 - expect) / n as f64).sqrt();
    assert!(
        (frac - expect).abs() < 4.0 * se,
        "3σ mass {frac} vs {expect} ± {se}"
    );
}

#[test]
fn passage_time_zero_when_target_contains_source() {
    let p = params_c2(1.0, 3.0, 0.3);
    let comp = MixtureComponent {
        weight: 1.0,
        mean: Vector2::new(0.0, 0.0),
        cov: Matrix2::identity() * 0.01,
    };
    let region = EllipseRegion::new(&comp, 3.0);
    let src = GaussianInit::isotropic([0.0; 4], 1e-6);
    let est = mean_first_passage(&p, &[src], &region, Plane::Ion, 100, 5, 0.01, 100.0).unwrap();
    assert_eq!(est.crossed, 100);
    assert_abs_diff_eq!(est.tau, 0.0, epsilon = 1e-12);
}

/// Half-plane region for threshold-crossing oracles.
struct Threshold {
    axis: usize,
    value: f64,
}

impl Region for Threshold {
    fn contains(&self, p: [f64; 2]) -> bool {
        p[self.axis] >= self.value
    }
}

/// Numerical mean-first-passage oracle for the 1-d Ornstein–Uhlenbeck
/// process dX = −θX dt + σ dW from x0 to a threshold b:
/// τ = (2/σ²) ∫_{x0}^{b} e^{V(y)} ∫_{−∞}^{y} e^{−V(z)} dz dy, V(x) = θx²/σ².
fn ou_mfpt_oracle(theta: f64, sigma: f64, x0: f64, b: f64) -> f64 {
    let v = |x: f64| theta * x * x / (sigma * sigma);
    let inner = |y: f64| {
        // ∫_{−∞}^{y} e^{−V} dz, integrand negligible below −10σ_st
        let lo = -10.0 * sigma / (2.0 * theta).sqrt() + y.min(0.0);
        simpson(|z| (-v(z)).exp(), lo, y, 4000)
    };
    (2.0 / (sigma * sigma)) * simpson(|y| v(y).exp() * inner(y), x0, b, 800)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn ou_threshold_passage_matches_quadrature_oracle() {
    // U0 = 0, Δc = 0, η = 0: q1 is an OU process with θ = κ, σ = √κ
    let p = ModelParams {
        omega: 1.0,
        kappa_ratio: 0.5,
        delta_c_ratio: 0.0,
        u0_ratio: 0.0,
        eta_ratio: 0.0,
        gamma_ratio: 0.0,
        xeq_scale: 1.0,
    };
    let b = 1.6;
    let oracle = ou_mfpt_oracle(p.kappa_ratio, p.kappa_ratio.sqrt(), 0.0, b);
    let src = GaussianInit::isotropic([0.0; 4], 0.0);
    let est = mean_first_passage(
        &p,
        &[src],
        &Threshold { axis: 0, value: b },
        Plane::Cavity,
        1500,
        17,
        0.002,
        5e4,
    )
    .unwrap();
    let rel = (est.tau - oracle).abs() / oracle;
    assert!(
        rel < 0.2,
        "OU MFPT {}±{} vs oracle {oracle} (rel {rel})",
        est.tau,
        est.std_err
    );
}

#[test]
fn two_state_rate_reference_points() {
    let mk = |tau: f64, se: f64| PassageEstimate {
        tau,
        std_err: se,
        crossed: 1000,
        n_traj: 1000,
        timeout_fraction: 0.0,
    };
    let r = two_state_rates(&mk(5.0, 0.1), &mk(5.0, 0.2));
    assert_abs_diff_eq!(r.gamma_t.value, 2.0 / 5.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.gamma_1.std_err, 0.1 / 25.0, epsilon = 1e-12);
    // absorbing limit: the slow direction stops contributing
    let r = two_state_rates(&mk(2.0, 0.01), &mk(1e12, 1.0));
    assert_abs_diff_eq!(r.gamma_t.value, 0.5, epsilon = 1e-6);
}

#[test]
fn timeout_reported_when_target_unreachable() {
    let p = params_c2(1.0, 3.0, 0.1);
    // target far outside the dynamically reachable region
    let comp = MixtureComponent {
        weight: 1.0,
        mean: Vector2::new(40.0, 0.0),
        cov: Matrix2::identity() * 0.01,
    };
    let region = EllipseRegion::new(&comp, 3.0);
    let src = GaussianInit::isotropic([0.0; 4], 0.5);
    match mean_first_passage(&p, &[src], &region, Plane::Ion, 50, 7, 0.01, 20.0) {
        Err(MetastabilityError::Timeout { fraction_crossed }) => {
            assert!(fraction_crossed < 10.0);
        }
        other => panic!("expected Timeout, got {other:?}"),
    }
}

#[test]
fn bistable_pipeline_fits_three_lobes_and_measures_rates() {
    // the weakly dissipative crossover regime where the lobes are resolved
    // and switching is measurable
    let p = params_c2(0.1, 5.0, 0.66);
    let (steady, _) = sde::steady_state_ensemble(
        &p,
        2500,
        12,
        &SteadyPolicy {
            window: None,
            t_cap: 4000.0,
        },
        sde::default_dt(&p),
        Scheme::Taylor15,
    )
    .unwrap();

    let cfg = RateConfig {
        n_traj: 300,
        seed: 99,
        dt: 0.01,
        t_cap: 2e4,
        membership_plane: Plane::Ion,
    };
    let (mixtures, analysis) = estimate_rates(&p, &steady, &cfg).unwrap();

    // three ion lobes with mirror-symmetric side means
    let left = &mixtures.ion.components[mixtures.split.ion_left];
    let center = &mixtures.ion.components[mixtures.split.ion_center];
    let right = &mixtures.ion.components[mixtures.split.ion_right];
    assert!(center.mean[0].abs() < 0.5, "center lobe at {}", center.mean[0]);
    let mirror_err = (left.mean[0] + right.mean[0]).abs();
    assert!(
        mirror_err < 0.2 * right.mean[0].abs(),
        "side lobes not mirror symmetric: {} vs {}",
        left.mean[0],
        right.mean[0]
    );

    // rates positive, ordered band, bounded timeout
    let r = &analysis.rate;
    assert!(r.gamma_1.value > 0.0 && r.gamma_2.value > 0.0);
    assert_abs_diff_eq!(
        r.gamma_t.value,
        r.gamma_1.value + r.gamma_2.value,
        epsilon = 1e-15
    );
    let (lo, hi) = r.band.unwrap();
    assert!(lo <= r.gamma_t.value && r.gamma_t.value <= hi);
    assert!(r.timeout_fraction <= 0.1);

    // left/right source relabeling: rerunning sides→center with the sources
    // swapped must agree within sampling error
    let regions = define_regions(&mixtures.ion, 3.0);
    let center_region = UnionRegion(std::slice::from_ref(&regions[mixtures.split.ion_center]));
    let cav = &mixtures.cavity.components;
    let hi_idx = mixtures.split.cavity_high;
    let mk_src = |ion: &MixtureComponent| {
        GaussianInit::from_blocks(
            [
                cav[hi_idx].mean[0],
                cav[hi_idx].mean[1],
                ion.mean[0],
                ion.mean[1],
            ],
            cav[hi_idx].cov,
            ion.cov,
        )
        .unwrap()
    };
    let fwd = mean_first_passage(
        &p,
        &[mk_src(left), mk_src(right)],
        &center_region,
        Plane::Ion,
        300,
        555,
        0.01,
        2e4,
    )
    .unwrap();
    let swapped = mean_first_passage(
        &p,
        &[mk_src(right), mk_src(left)],
        &center_region,
        Plane::Ion,
        300,
        556,
        0.01,
        2e4,
    )
    .unwrap();
    let comb = (fwd.std_err * fwd.std_err + swapped.std_err * swapped.std_err).sqrt();
    assert!(
        (fwd.tau - swapped.tau).abs() < 4.0 * comb,
        "relabeling changed τ: {} vs {} (σ {comb})",
        fwd.tau,
        swapped.tau
    );
}
