//! Runtime property suite behind the `selftest` subcommand: fast checks of
//! the model's structural invariants, no paper tables involved.

use crate::fields::{bspline5, deposit_density, l1_error, Density1D};
use crate::flow::{self, IntegratorParams};
use crate::hopping::{self, HopOptions, RngStream};
use crate::phase::{
    band_energy, dirac_matrix, eigenprojectors, Mat2, Mode, Particle, PhasePoint, Potential, Vec2,
};
use crate::quantum::{self, Grid1D, QuantumVariant};
use crate::sampling::{inverse_normal_cdf, normal_cdf, sample_pure_state, SampleMethod, WavepacketSpec};
use num_complex::Complex64;

type Check = (&'static str, fn() -> Result<(), String>);

fn projector_algebra() -> Result<(), String> {
    for k in 0..200 {
        let angle = k as f64 * 0.7;
        let r = 0.01 + 0.15 * k as f64;
        let xi = Vec2::new(r * angle.cos(), r * angle.sin());
        let (pp, pm) = eigenprojectors(xi).map_err(|e| e.to_string())?;
        let checks = [
            (pp.matmul(pp) - pp).norm(),
            (pm.matmul(pm) - pm).norm(),
            pp.matmul(pm).norm(),
            (pp + pm - Mat2::identity()).norm(),
            (dirac_matrix(xi) - (pp - pm).scale(Complex64::new(xi.norm(), 0.0))).norm(),
        ];
        for (i, c) in checks.iter().enumerate() {
            if *c > 1e-12 {
                return Err(format!("projector identity {i} off by {c} at xi = {xi}"));
            }
        }
    }
    Ok(())
}

fn potential_derivatives() -> Result<(), String> {
    let h = 1e-5;
    for pot in [
        Potential::Barrier,
        Potential::Harmonic,
        Potential::atan_calibrated(),
    ] {
        for i in 0..80 {
            let x1 = -9.0 + 0.22 * i as f64;
            let fd = (pot.value(Vec2::new(x1 + h, 0.0)) - pot.value(Vec2::new(x1 - h, 0.0)))
                / (2.0 * h);
            let g = pot.gradient(Vec2::new(x1, 0.0)).x;
            if (fd - g).abs() / g.abs().max(1e-3) > 1e-6 {
                return Err(format!("{pot:?}: gradient mismatch at {x1}"));
            }
        }
    }
    Ok(())
}

fn integrator_order_and_reversibility() -> Result<(), String> {
    let pot = Potential::Harmonic;
    let p = PhasePoint::new(Vec2::new(-2.0, 0.0), Vec2::new(1.3, 0.1));
    let e0 = band_energy(Mode::Plus, &p, &pot);
    let defect = |dt: f64| -> f64 {
        let mut q = p;
        let mut worst: f64 = 0.0;
        for _ in 0..(1.5 / dt).round() as usize {
            q = flow::step(Mode::Plus, &q, dt, &pot).unwrap();
            worst = worst.max((band_energy(Mode::Plus, &q, &pot) - e0).abs());
        }
        worst
    };
    let slope = (defect(1e-2) / defect(2.5e-3)).log2() / 2.0;
    if (slope - 4.0).abs() > 0.2 {
        return Err(format!("integrator order slope {slope}, expected 4 +- 0.2"));
    }
    let q = flow::step(Mode::Plus, &p, 7e-3, &pot).unwrap();
    let back = flow::step(Mode::Plus, &q, -7e-3, &pot).unwrap();
    let r = (back.x - p.x).norm().max((back.xi - p.xi).norm());
    if r > 1e-12 {
        return Err(format!("reversibility defect {r}"));
    }
    Ok(())
}

fn quantum_unitarity() -> Result<(), String> {
    let eps = 0.064;
    let grid = Grid1D::default_for_eps(eps);
    let spec = WavepacketSpec::reference(eps);
    for variant in [QuantumVariant::Graphene, QuantumVariant::PseudoGraphene] {
        let (psi, _) = quantum::init_wavepacket(grid, &spec, variant).map_err(|e| e.to_string())?;
        let out = quantum::evolve(&psi, 0.0, 1.0, eps / 20.0, &Potential::Harmonic, variant)
            .map_err(|e| e.to_string())?;
        if (out.norm() - 1.0).abs() > 1e-10 {
            return Err(format!("norm drift {} for {variant:?}", out.norm() - 1.0));
        }
        if variant == QuantumVariant::PseudoGraphene {
            let h = grid.h();
            let m2: f64 = out.c2.iter().map(|z| z.norm_sqr()).sum::<f64>() * h;
            if m2 > 1e-10 {
                return Err(format!("pseudo minus component grew to {m2}"));
            }
        }
    }
    Ok(())
}

fn hop_energy_audit() -> Result<(), String> {
    let pot = Potential::Harmonic;
    let params = IntegratorParams::new(2e-3);
    let particles: Vec<Particle> = (0..500)
        .map(|_| {
            Particle::new(
                PhasePoint::new(Vec2::new(-2.0, 0.0), Vec2::new(1.3, 0.1)),
                Mode::Plus,
                1.0 / 500.0,
            )
        })
        .collect();
    let out = hopping::evolve_ensemble(
        particles,
        0.0,
        4.5,
        0.128,
        &pot,
        &params,
        &HopOptions::default(),
        17,
    )
    .map_err(|e| e.to_string())?;
    if (out.total_weight() - 1.0).abs() > 1e-14 {
        return Err(format!("weight drift {}", out.total_weight() - 1.0));
    }
    let mut hops = 0;
    for p in &out.particles {
        for hop in &p.hop_log {
            hops += 1;
            let from_mode = hop.to_mode.flipped();
            let e0 = band_energy(from_mode, &hop.from, &pot);
            let jumped = hopping::jump(from_mode, &hop.from, &pot).map_err(|e| e.to_string())?;
            let e1 = band_energy(hop.to_mode, &jumped, &pot);
            let bound = 2.0 * pot.sup_hessian_norm() * hop.from.xi.norm_sq()
                / pot.gradient(hop.from.x).norm_sq();
            if (e1 - e0).abs() > bound * (1.0 + 1e-9) {
                return Err(format!("hop energy mismatch {} beyond bound {bound}", e1 - e0));
            }
        }
    }
    if hops == 0 {
        return Err("no hops fired at eps = 0.128".into());
    }
    Ok(())
}

fn deposition_conservation() -> Result<(), String> {
    let grid = Grid1D::new(-10.0, 10.0, 256).map_err(|e| e.to_string())?;
    let spec = WavepacketSpec::reference(0.05);
    let parts = sample_pure_state(&spec, 40_000, SampleMethod::Qmc, 0);
    let d = deposit_density(&parts, &grid, None).map_err(|e| e.to_string())?;
    if (d.mass() - 1.0).abs() > 1e-13 {
        return Err(format!("deposited mass {}", d.mass()));
    }
    for k in 0..50 {
        let t = k as f64 / 50.0;
        let s: f64 = (-3..=3).map(|j| bspline5(t - j as f64)).sum();
        if (s - 1.0).abs() > 1e-14 {
            return Err(format!("kernel partition of unity off by {}", s - 1.0));
        }
    }
    let zero = Density1D::new(grid, vec![0.0; grid.n]).map_err(|e| e.to_string())?;
    if (l1_error(&d, &zero).map_err(|e| e.to_string())? - 1.0).abs() > 1e-13 {
        return Err("L1 against zero should equal the mass".into());
    }
    Ok(())
}

fn probit_round_trip() -> Result<(), String> {
    for i in 1..2000 {
        let u = i as f64 / 2000.0;
        let x = inverse_normal_cdf(u).map_err(|e| e.to_string())?;
        if (normal_cdf(x) - u).abs() > 1e-9 {
            return Err(format!("round trip off at u = {u}"));
        }
    }
    Ok(())
}

fn transfer_monotonicity() -> Result<(), String> {
    let pot = Potential::Harmonic;
    let x = Vec2::new(-0.615, 0.0);
    for eps in [0.01, 0.04, 0.16] {
        let mut last = 2.0;
        for k in 0..30 {
            let xi = Vec2::new(0.0, 0.01 + 0.02 * k as f64);
            let t = hopping::transfer_coefficient(&PhasePoint::new(x, xi), &pot, eps)
                .map_err(|e| e.to_string())?;
            if t >= last {
                return Err(format!("T not decreasing in |xi| at eps = {eps}"));
            }
            last = t;
        }
    }
    Ok(())
}

fn rng_reproducibility() -> Result<(), String> {
    let mut a = RngStream::new(2024, 11);
    let mut b = RngStream::new(2024, 11);
    for _ in 0..64 {
        if a.next_uniform() != b.next_uniform() {
            return Err("identical streams diverged".into());
        }
    }
    Ok(())
}

/// The check list run by `graphene-transport selftest`.
pub fn checks() -> Vec<Check> {
    vec![
        ("projector-algebra", projector_algebra),
        ("potential-derivatives", potential_derivatives),
        ("integrator-order-reversibility", integrator_order_and_reversibility),
        ("quantum-unitarity", quantum_unitarity),
        ("hop-energy-audit", hop_energy_audit),
        ("deposition-conservation", deposition_conservation),
        ("probit-round-trip", probit_round_trip),
        ("transfer-monotonicity", transfer_monotonicity),
        ("rng-reproducibility", rng_reproducibility),
    ]
}

/// Run every check, printing one line per check; `Err` carries the failures.
pub fn run_all() -> Result<(), Vec<String>> {
    let mut failures = Vec::new();
    for (name, check) in checks() {
        match check() {
            Ok(()) => println!("selftest {name}: PASS"),
            Err(msg) => {
                println!("selftest {name}: FAIL ({msg})");
                failures.push(format!("{name}: {msg}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures)
    }
}
