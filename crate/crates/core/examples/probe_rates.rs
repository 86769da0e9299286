// scratch probe for the metastable-rate regime (κ = 0.1, C = 2)
use cavion_core::metastability::{define_regions, fit_state_mixtures, measure_rates, Plane, RateConfig, UnionRegion};
use cavion_core::sde::{self, Scheme, SteadyPolicy};
use cavion_core::ModelParams;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let s: f64 = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(5.0);
    let eta_eff: f64 = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(0.74);
    let n_traj: usize = args.get(3).and_then(|v| v.parse().ok()).unwrap_or(300);
    let p = ModelParams {
        omega: 1.0,
        kappa_ratio: 0.1,
        delta_c_ratio: 0.0,
        u0_ratio: 0.2,
        eta_ratio: 0.0,
        gamma_ratio: 0.0,
        xeq_scale: s,
    }
    .with_eta_eff(eta_eff);

    let t0 = Instant::now();
    let (steady, t_conv) = sde::steady_state_ensemble(
        &p,
        3000,
        42,
        &SteadyPolicy { window: None, t_cap: 6000.0 },
        sde::default_dt(&p),
        Scheme::Taylor15,
    )
    .unwrap();
    println!(
        "s={s} eta_eff={eta_eff}: steady converged at t={t_conv} in {:.1?}",
        t0.elapsed()
    );
    let bins = [-1.5, -0.5, 0.5, 1.5];
    let mut hist = [0usize; 5];
    for pt in &steady.points {
        let y = pt.q2 / s;
        let mut b = 0;
        while b < 4 && y > bins[b] {
            b += 1;
        }
        hist[b] += 1;
    }
    println!("  ion q2/s histogram (far-left, left, center, right, far-right): {hist:?}");

    let t0 = Instant::now();
    let cfg = RateConfig {
        n_traj,
        seed: 7,
        dt: 0.01,
        t_cap: 1e5,
        membership_plane: Plane::Ion,
    };
    let mixtures = fit_state_mixtures(&p, &steady).unwrap();
    for (tag, m) in [("ion", &mixtures.ion), ("cav", &mixtures.cavity)] {
        for c in &m.components {
            println!(
                "  {tag} lobe: w={:.3} mean=({:.2},{:.2}) sd=({:.2},{:.2})",
                c.weight, c.mean[0], c.mean[1],
                c.cov[(0, 0)].sqrt(), c.cov[(1, 1)].sqrt()
            );
        }
    }
    // measure started-inside per direction at 3σ
    {
        use cavion_core::sde::{trajectory_rng, GaussianInit};
        let regions = define_regions(&mixtures.ion, 3.0);
        let sp = mixtures.split;
        let ion = &mixtures.ion.components;
        let cav = &mixtures.cavity.components;
        let mk = |ic: usize, cc: usize| {
            GaussianInit::from_blocks(
                [cav[cc].mean[0], cav[cc].mean[1], ion[ic].mean[0], ion[ic].mean[1]],
                cav[cc].cov, ion[ic].cov,
            ).unwrap()
        };
        let frac_inside = |srcs: &[GaussianInit], region: &UnionRegion| {
            let mut rng = trajectory_rng(1234, 0);
            let mut hits = 0;
            for i in 0..2000 {
                let x = srcs[i % srcs.len()].sample(&mut rng);
                if cavion_core::metastability::Region::contains(region, [x[2], x[3]]) { hits += 1; }
            }
            hits as f64 / 2000.0
        };
        let sides = [regions[sp.ion_left].clone(), regions[sp.ion_right].clone()];
        let center = [regions[sp.ion_center].clone()];
        println!("  started-inside c→s: {:.3}  s→c: {:.3}",
            frac_inside(&[mk(sp.ion_center, sp.cavity_low)], &UnionRegion(&sides)),
            frac_inside(&[mk(sp.ion_left, sp.cavity_high), mk(sp.ion_right, sp.cavity_high)], &UnionRegion(&center)));
    }
    // direct per-direction, per-sigma passage probes
    {
        use cavion_core::metastability::mean_first_passage;
        use cavion_core::sde::GaussianInit;
        let sp = mixtures.split;
        let ion = &mixtures.ion.components;
        let cav = &mixtures.cavity.components;
        let mk = |ic: usize, cc: usize| {
            GaussianInit::from_blocks(
                [cav[cc].mean[0], cav[cc].mean[1], ion[ic].mean[0], ion[ic].mean[1]],
                cav[cc].cov, ion[ic].cov,
            ).unwrap()
        };
        for ns in [2.5, 3.0] {
            let regions = define_regions(&mixtures.ion, ns);
            let sides = [regions[sp.ion_left].clone(), regions[sp.ion_right].clone()];
            let center = [regions[sp.ion_center].clone()];
            for (tag, srcs, tgt) in [
                ("c→s", vec![mk(sp.ion_center, sp.cavity_low)], UnionRegion(&sides)),
                ("s→c", vec![mk(sp.ion_left, sp.cavity_high), mk(sp.ion_right, sp.cavity_high)], UnionRegion(&center)),
            ] {
                match mean_first_passage(&p, &srcs, &tgt, Plane::Ion, 200, 7, 0.01, 2e4) {
                    Ok(e) => println!("  ns={ns} {tag}: τ={:.1}±{:.1} inside0={} timeout={:.2}", e.tau, e.std_err, e.started_inside, e.timeout_fraction),
                    Err(e) => println!("  ns={ns} {tag}: {e}"),
                }
            }
        }
    }
    match measure_rates(&p, &mixtures, &cfg) {
        Ok(a) => {
            for (ns, r) in &a.per_sigma {
                match r {
                    Some(r) => println!(
                        "  n_sigma={ns}: γ1={:.4e}±{:.1e} γ2={:.4e}±{:.1e} γt={:.4e} timeout={:.3}",
                        r.gamma_1.value, r.gamma_1.std_err, r.gamma_2.value, r.gamma_2.std_err,
                        r.gamma_t.value, r.timeout_fraction
                    ),
                    None => println!("  n_sigma={ns}: degenerate variant (skipped)"),
                }
            }
            let (lo, hi) = a.rate.band.unwrap();
            println!(
                "  γt(3σ) = {:.4e} band [{:.4e}, {:.4e}]  ({:.1?})",
                a.rate.gamma_t.value, lo, hi,
                t0.elapsed()
            );
        }
        Err(e) => println!("  rate pipeline failed: {e}"),
    }
}
