//! The experiment drivers: Klein tunneling through the barrier, transfer-rate
//! tables, transport error of the pseudo-graphene pair, the jump ablation,
//! sampling convergence studies and the coherent-state mixture.

use crate::error::{Error, Result};
use crate::fields::{bspline5, deposit_density, l1_error, Density1D};
use crate::flow::IntegratorParams;
use crate::hopping::{
    evolve_ensemble, evolve_particle, EnsembleOutcome, HopOptions, RngStream, Statistic,
};
use crate::lab::config::RunConfig;
use crate::phase::{Mode, Particle, Potential};
use crate::quantum::{
    self, density_mass, init_wavepacket, mode_densities, Grid1D, QuantumVariant, SpinorField,
};
use crate::sampling::{sample_mixture, sample_pure_state, MixtureSpec, SampleMethod, WavepacketSpec};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Final time of the transfer, transport and ablation experiments.
pub const T_FINAL: f64 = 4.5;
/// Snapshot times of the Klein run.
pub const KLEIN_TIMES: [f64; 4] = [0.0, 3.0, 4.5, 7.5];
/// Snapshot times of the mixture run.
pub const MIXTURE_TIMES: [f64; 4] = [0.0, 1.8, 2.7, 4.5];

pub fn wavepacket_spec(cfg: &RunConfig, eps: f64) -> WavepacketSpec {
    WavepacketSpec::new(
        cfg.wavepacket.x1_0,
        cfg.wavepacket.xi1_0,
        cfg.wavepacket.xi2_0,
        eps,
    )
}

pub fn grid_for(cfg: &RunConfig, eps: f64) -> Result<Grid1D> {
    match cfg.grid_n {
        Some(n) => Grid1D::new(-10.0, 10.0, n),
        None => Ok(Grid1D::default_for_eps(eps)),
    }
}

pub fn quantum_dt(cfg: &RunConfig, eps: f64) -> f64 {
    cfg.dt_quantum.unwrap_or(eps / 20.0)
}

pub fn integrator_params(cfg: &RunConfig) -> IntegratorParams {
    IntegratorParams::new(cfg.dt_kinetic)
}

/// The evolution never rescales weights, so the ensemble total must match the
/// input total to roundoff.
fn ensure_weight_conserved(after: f64, before: f64) -> Result<()> {
    if (after - before).abs() > 1e-14 * before.max(1.0) {
        return Err(Error::Conservation(format!(
            "kinetic weight {after} drifted from {before}"
        )));
    }
    Ok(())
}

fn total_weight(particles: &[Particle]) -> f64 {
    particles.iter().map(|p| p.weight).sum()
}

fn ensure_norm_conserved(psi: &SpinorField) -> Result<()> {
    let n = psi.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::Conservation(format!("quantum norm {n} drifted from 1")));
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Derived slope column `-pi xi2^2 / (eps ln T)`, the model's estimate of
/// `V'(x1*)` from a measured transfer rate.
pub fn derived_vprime(rate: f64, xi2: f64, eps: f64) -> f64 {
    -PI * xi2 * xi2 / (eps * rate.ln())
}

/// A pair of band densities at one time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub plus: Density1D,
    pub minus: Density1D,
}

/// Ensemble evolution that deposits band densities at the requested times
/// while keeping each particle's random stream continuous across segments.
pub struct SnapshotRun {
    pub outcome: EnsembleOutcome,
    pub snapshots: Vec<Snapshot>,
    /// Weight that sat outside the deposition-safe region at snapshot times
    /// (reported, not deposited).
    pub stray_weight: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn evolve_with_snapshots(
    particles: Vec<Particle>,
    t0: f64,
    times: &[f64],
    eps: f64,
    pot: &Potential,
    params: &IntegratorParams,
    opts: &HopOptions,
    seed: u64,
    grid: &Grid1D,
) -> Result<SnapshotRun> {
    debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
    const CHUNK: usize = 1 << 14;
    let n = grid.n;
    let h = grid.h();

    struct Partial {
        plus: Vec<Vec<f64>>,
        minus: Vec<Vec<f64>>,
        finals: Vec<Particle>,
        expected_transfer: f64,
        stray: f64,
    }

    let partials: Vec<Partial> = particles
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| -> Result<Partial> {
            let mut part = Partial {
                plus: vec![vec![0.0; n]; times.len()],
                minus: vec![vec![0.0; n]; times.len()],
                finals: Vec::with_capacity(chunk.len()),
                expected_transfer: 0.0,
                stray: 0.0,
            };
            for (k, p0) in chunk.iter().enumerate() {
                let index = ci * CHUNK + k;
                let mut rng = RngStream::new(seed, index as u64);
                let mut p = p0.clone();
                let mut t = t0;
                for (si, &tk) in times.iter().enumerate() {
                    let out = evolve_particle(p, t, tk, eps, pot, params, opts, &mut rng)
                        .map_err(|e| Error::Particle {
                            index,
                            source: Box::new(e),
                        })?;
                    p = out.particle;
                    part.expected_transfer += out.expected_transfer;
                    t = tk;
                    let u = (p.point.x.x - grid.x_min) / h;
                    if !(3.0..=(n as f64 - 3.0)).contains(&u) {
                        part.stray += p.weight;
                        continue;
                    }
                    let field = match p.mode {
                        Mode::Plus => &mut part.plus[si],
                        Mode::Minus => &mut part.minus[si],
                    };
                    let base = u.floor() as i64;
                    for j in (base - 2)..=(base + 3) {
                        field[j as usize] += p.weight * bspline5(u - j as f64);
                    }
                }
                part.finals.push(p);
            }
            Ok(part)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut plus = vec![vec![0.0; n]; times.len()];
    let mut minus = vec![vec![0.0; n]; times.len()];
    let mut finals = Vec::new();
    let mut expected_transfer = 0.0;
    let mut stray = 0.0;
    for part in partials {
        for si in 0..times.len() {
            for j in 0..n {
                plus[si][j] += part.plus[si][j];
                minus[si][j] += part.minus[si][j];
            }
        }
        finals.extend(part.finals);
        expected_transfer += part.expected_transfer;
        stray += part.stray;
    }

    let inv_h = 1.0 / h;
    let snapshots = times
        .iter()
        .enumerate()
        .map(|(si, &t)| {
            let scale = |v: &Vec<f64>| v.iter().map(|x| x * inv_h).collect::<Vec<_>>();
            Ok(Snapshot {
                t,
                plus: Density1D::new(*grid, scale(&plus[si]))?,
                minus: Density1D::new(*grid, scale(&minus[si]))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SnapshotRun {
        outcome: EnsembleOutcome {
            particles: finals,
            expected_transfer,
        },
        snapshots,
        stray_weight: stray,
    })
}

/// Evolve a pure coherent state and record band densities at `times`.
pub fn quantum_pure_snapshots(
    spec: &WavepacketSpec,
    grid: Grid1D,
    dt: f64,
    pot: &Potential,
    variant: QuantumVariant,
    times: &[f64],
) -> Result<Vec<Snapshot>> {
    let (mut psi, _) = init_wavepacket(grid, spec, variant)?;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &tk in times {
        psi = quantum::evolve(&psi, t, tk, dt, pot, variant)?;
        t = tk;
        ensure_norm_conserved(&psi)?;
        let (rp, rm) = mode_densities(&psi, variant);
        out.push(Snapshot {
            t: tk,
            plus: Density1D::new(grid, rp)?,
            minus: Density1D::new(grid, rm)?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Transfer table (harmonic potential, pure state)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct TransferRow {
    pub eps: f64,
    /// Deterministic estimator: `sum w T_eps` over first crossings.
    pub kin_expected: f64,
    /// Random realization: minus-band weight fraction at `T_FINAL`.
    pub kin_random: f64,
    pub quantum: Option<f64>,
    pub vprime_kinetic: f64,
    pub vprime_quantum: Option<f64>,
}

pub fn kinetic_transfer_rates(cfg: &RunConfig, eps: f64) -> Result<(f64, f64)> {
    let pot = cfg.potential.resolve();
    let spec = wavepacket_spec(cfg, eps);
    let particles = sample_pure_state(&spec, cfg.particles, SampleMethod::Qmc, cfg.seed);
    let weight_in = total_weight(&particles);
    let params = integrator_params(cfg);

    let opts_ev = HopOptions {
        statistic: Statistic::ExpectedValue,
        ..cfg.hops
    };
    let ev = evolve_ensemble(particles.clone(), 0.0, T_FINAL, eps, &pot, &params, &opts_ev, cfg.seed)?;
    ensure_weight_conserved(ev.total_weight(), weight_in)?;
    let expected = ev.expected_transfer / ev.total_weight();

    let opts_rr = HopOptions {
        statistic: Statistic::RandomRealization,
        ..cfg.hops
    };
    let rr = evolve_ensemble(particles, 0.0, T_FINAL, eps, &pot, &params, &opts_rr, cfg.seed)?;
    ensure_weight_conserved(rr.total_weight(), weight_in)?;
    let random = rr.mode_weight(Mode::Minus) / rr.total_weight();
    Ok((expected, random))
}

/// Minus-band mass of the quantum state after the crossing.
pub fn quantum_transfer_rate(cfg: &RunConfig, eps: f64) -> Result<f64> {
    let pot = cfg.potential.resolve();
    let spec = wavepacket_spec(cfg, eps);
    let grid = grid_for(cfg, eps)?;
    let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene)?;
    let out = quantum::evolve(&psi, 0.0, T_FINAL, quantum_dt(cfg, eps), &pot, QuantumVariant::Graphene)?;
    ensure_norm_conserved(&out)?;
    let (_, rho_m) = mode_densities(&out, QuantumVariant::Graphene);
    Ok(density_mass(&grid, &rho_m))
}

pub fn transfer_table_row(cfg: &RunConfig, eps: f64) -> Result<TransferRow> {
    let (kin_expected, kin_random) = kinetic_transfer_rates(cfg, eps)?;
    let quantum = if cfg.quantum_enabled {
        Some(quantum_transfer_rate(cfg, eps)?)
    } else {
        None
    };
    let xi2 = cfg.wavepacket.xi2_0;
    Ok(TransferRow {
        eps,
        kin_expected,
        kin_random,
        quantum,
        vprime_kinetic: derived_vprime(kin_expected, xi2, eps),
        vprime_quantum: quantum.map(|q| derived_vprime(q, xi2, eps)),
    })
}

// ---------------------------------------------------------------------------
// Klein tunneling through the barrier
// ---------------------------------------------------------------------------

/// Wavepacket genealogy of the barrier run, classified from the crossing and
/// hop counts: the reflected packet never hops; the transmitted packet hops
/// at both of its two crossings; the third packet hops at its first and third
/// crossings (the middle one reflects it inside the barrier). Everything else
/// (still trapped, or late multi-traversal escapes) is left unassigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KleinClass {
    Wavepacket1,
    Wavepacket2,
    Wavepacket3,
    Unassigned,
}

pub fn klein_classify(p: &Particle) -> KleinClass {
    match (p.crossings, p.hop_log.len()) {
        (_, 0) => KleinClass::Wavepacket1,
        (2, 2) => KleinClass::Wavepacket2,
        (3, 2) => KleinClass::Wavepacket3,
        _ => KleinClass::Unassigned,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KleinRates {
    pub wp1: f64,
    pub wp2: f64,
    pub wp3: f64,
    pub residual: f64,
}

pub struct KleinKineticResult {
    pub rates: KleinRates,
    pub snapshots: Vec<Snapshot>,
    pub stray_weight: f64,
}

pub fn klein_kinetic(cfg: &RunConfig, eps: f64) -> Result<KleinKineticResult> {
    let pot = cfg.potential.resolve();
    let spec = wavepacket_spec(cfg, eps);
    let particles = sample_pure_state(&spec, cfg.particles, SampleMethod::Qmc, cfg.seed);
    let weight_in = total_weight(&particles);
    let params = integrator_params(cfg);
    let grid = grid_for(cfg, eps)?;
    let run = evolve_with_snapshots(
        particles,
        0.0,
        &KLEIN_TIMES,
        eps,
        &pot,
        &params,
        &cfg.hops,
        cfg.seed,
        &grid,
    )?;
    let total = run.outcome.total_weight();
    ensure_weight_conserved(total, weight_in)?;

    let mut rates = KleinRates::default();
    for p in &run.outcome.particles {
        let share = p.weight / total;
        match klein_classify(p) {
            KleinClass::Wavepacket1 => rates.wp1 += share,
            KleinClass::Wavepacket2 => rates.wp2 += share,
            KleinClass::Wavepacket3 => rates.wp3 += share,
            KleinClass::Unassigned => rates.residual += share,
        }
    }
    Ok(KleinKineticResult {
        rates,
        snapshots: run.snapshots,
        stray_weight: run.stray_weight,
    })
}

/// Klein classification windows for the quantum side: plus-mode mass left of
/// the barrier (`x < -1`) at `t = 4.5` is the reflected packet; right of the
/// barrier (`x > 3`) at the final time the transmitted one; mass arriving on
/// the left between `t = 4.5` and the final time is the third packet.
pub const KLEIN_WINDOW_LEFT: f64 = -1.0;
pub const KLEIN_WINDOW_RIGHT: f64 = 3.0;
pub const KLEIN_SPLIT_TIME: f64 = 4.5;

pub struct KleinQuantumResult {
    pub rates: KleinRates,
    pub snapshots: Vec<Snapshot>,
}

fn window_mass(d: &Density1D, pred: impl Fn(f64) -> bool) -> f64 {
    let h = d.grid.h();
    (0..d.grid.n)
        .filter(|&j| pred(d.grid.point(j)))
        .map(|j| d.values[j] * h)
        .sum()
}

pub fn klein_quantum(cfg: &RunConfig, eps: f64) -> Result<KleinQuantumResult> {
    let pot = cfg.potential.resolve();
    let spec = wavepacket_spec(cfg, eps);
    let grid = grid_for(cfg, eps)?;
    let snapshots = quantum_pure_snapshots(
        &spec,
        grid,
        quantum_dt(cfg, eps),
        &pot,
        QuantumVariant::Graphene,
        &KLEIN_TIMES,
    )?;
    let at = |t: f64| -> &Snapshot {
        snapshots
            .iter()
            .find(|s| (s.t - t).abs() < 1e-9)
            .expect("snapshot time present")
    };
    let wp1 = window_mass(&at(KLEIN_SPLIT_TIME).plus, |x| x < KLEIN_WINDOW_LEFT);
    let last = at(*KLEIN_TIMES.last().unwrap());
    let wp2 = window_mass(&last.plus, |x| x > KLEIN_WINDOW_RIGHT);
    let wp3 = (window_mass(&last.plus, |x| x < KLEIN_WINDOW_LEFT) - wp1).max(0.0);
    let rates = KleinRates {
        wp1,
        wp2,
        wp3,
        residual: (1.0 - wp1 - wp2 - wp3).max(0.0),
    };
    Ok(KleinQuantumResult { rates, snapshots })
}

// ---------------------------------------------------------------------------
// Transport error of the pseudo-graphene pair (Fig.-4-style)
// ---------------------------------------------------------------------------

/// L1 distance between the kinetic and quantum pseudo-graphene densities at
/// `T_FINAL` (plus and minus parts summed; the pseudo models never populate
/// the minus band).
pub fn transport_error(cfg: &RunConfig, eps: f64, pot: &Potential) -> Result<f64> {
    let spec = wavepacket_spec(cfg, eps);
    let grid = grid_for(cfg, eps)?;
    let particles = sample_pure_state(&spec, cfg.particles, SampleMethod::Qmc, cfg.seed);
    let weight_in = total_weight(&particles);
    let params = integrator_params(cfg);
    let opts = HopOptions {
        transitions_enabled: false,
        ..cfg.hops
    };
    let out = evolve_ensemble(particles, 0.0, T_FINAL, eps, pot, &params, &opts, cfg.seed)?;
    ensure_weight_conserved(out.total_weight(), weight_in)?;
    let kin_plus = deposit_density(&out.particles, &grid, Some(Mode::Plus))?;
    let kin_minus = deposit_density(&out.particles, &grid, Some(Mode::Minus))?;

    let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::PseudoGraphene)?;
    let q = quantum::evolve(
        &psi,
        0.0,
        T_FINAL,
        quantum_dt(cfg, eps),
        pot,
        QuantumVariant::PseudoGraphene,
    )?;
    ensure_norm_conserved(&q)?;
    let (rp, rm) = mode_densities(&q, QuantumVariant::PseudoGraphene);
    let q_plus = Density1D::new(grid, rp)?;
    let q_minus = Density1D::new(grid, rm)?;
    Ok(l1_error(&kin_plus, &q_plus)? + l1_error(&kin_minus, &q_minus)?)
}

/// Mismatch between a single classical particle launched at the wavepacket
/// center and the quantum position expectation, both in the pseudo-graphene
/// model with the harmonic potential. Exposes the Ehrenfest-type transport
/// error, which is O(eps) for a quadratic potential.
pub fn pseudo_center_mismatch(cfg: &RunConfig, eps: f64) -> Result<f64> {
    let pot = Potential::Harmonic;
    let spec = wavepacket_spec(cfg, eps);
    let start = crate::phase::PhasePoint::new(
        crate::phase::Vec2::new(spec.x1_0, 0.0),
        crate::phase::Vec2::new(spec.xi1_0, spec.xi2_0),
    );
    let params = integrator_params(cfg);
    let (end, _) = crate::flow::propagate(Mode::Plus, &start, 0.0, T_FINAL, &params, &pot)?;

    let grid = grid_for(cfg, eps)?;
    let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::PseudoGraphene)?;
    let q = quantum::evolve(
        &psi,
        0.0,
        T_FINAL,
        quantum_dt(cfg, eps),
        &pot,
        QuantumVariant::PseudoGraphene,
    )?;
    let h = grid.h();
    let mean_x: f64 = (0..grid.n)
        .map(|j| grid.point(j) * (q.c1[j].norm_sqr() + q.c2[j].norm_sqr()) * h)
        .sum();
    Ok((mean_x - end.x.x).abs())
}

// ---------------------------------------------------------------------------
// Jump ablation (Fig.-5-style)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct AblationRow {
    pub eps: f64,
    pub err_plus_jumps: f64,
    pub err_minus_jumps: f64,
    pub err_plus_nojumps: f64,
    pub err_minus_nojumps: f64,
}

pub fn ablation_row(cfg: &RunConfig, eps: f64) -> Result<AblationRow> {
    let pot = cfg.potential.resolve();
    let spec = wavepacket_spec(cfg, eps);
    let grid = grid_for(cfg, eps)?;
    let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene)?;
    let q = quantum::evolve(
        &psi,
        0.0,
        T_FINAL,
        quantum_dt(cfg, eps),
        &pot,
        QuantumVariant::Graphene,
    )?;
    ensure_norm_conserved(&q)?;
    let (rp, rm) = mode_densities(&q, QuantumVariant::Graphene);
    let q_plus = Density1D::new(grid, rp)?;
    let q_minus = Density1D::new(grid, rm)?;

    let particles = sample_pure_state(&spec, cfg.particles, SampleMethod::Qmc, cfg.seed);
    let weight_in = total_weight(&particles);
    let params = integrator_params(cfg);
    let mut errors = [0.0; 4];
    for (slot, jumps) in [(0usize, true), (2usize, false)] {
        let opts = HopOptions {
            jumps_enabled: jumps,
            statistic: Statistic::RandomRealization,
            ..cfg.hops
        };
        let out = evolve_ensemble(
            particles.clone(),
            0.0,
            T_FINAL,
            eps,
            &pot,
            &params,
            &opts,
            cfg.seed,
        )?;
        ensure_weight_conserved(out.total_weight(), weight_in)?;
        let kin_plus = deposit_density(&out.particles, &grid, Some(Mode::Plus))?;
        let kin_minus = deposit_density(&out.particles, &grid, Some(Mode::Minus))?;
        errors[slot] = l1_error(&kin_plus, &q_plus)?;
        errors[slot + 1] = l1_error(&kin_minus, &q_minus)?;
    }
    Ok(AblationRow {
        eps,
        err_plus_jumps: errors[0],
        err_minus_jumps: errors[1],
        err_plus_nojumps: errors[2],
        err_minus_nojumps: errors[3],
    })
}

// ---------------------------------------------------------------------------
// Sampling studies (Fig.-2/Fig.-3-style)
// ---------------------------------------------------------------------------

/// Initial-data densities on a refined grid: `err0` compares the quantum
/// density `|psi_0|^2` with the marginal of the bare Gaussian Wigner
/// function, `err1` with the marginal of the shifted `f_{+,0}`.
pub fn init_error_row(spec_center: &WavepacketSpec) -> Result<(f64, f64)> {
    let eps = spec_center.eps;
    // h <= eps/32: quadrature error well below the O(eps) signal
    let exp = ((640.0 / eps).log2().ceil() as u32).clamp(8, 24);
    let grid = Grid1D::new(-10.0, 10.0, 1usize << exp)?;
    let (psi, _) = init_wavepacket(grid, spec_center, QuantumVariant::Graphene)?;
    let h = grid.h();

    let sigma_x = (eps / 2.0).sqrt();
    let window = 45.0 * sigma_x;
    let norm0 = 1.0 / (PI * eps).sqrt();

    // xi1 quadrature for the f_{+,0} marginal
    let nq = 400;
    let xi_lo = spec_center.xi1_0 - 8.0 * sigma_x;
    let dxi = 16.0 * sigma_x / nq as f64;
    let xi2 = spec_center.xi2_0;

    let mut err0 = 0.0;
    let mut err1 = 0.0;
    for j in 0..grid.n {
        let x = grid.point(j);
        let rho = psi.c1[j].norm_sqr() + psi.c2[j].norm_sqr();
        let dx = x - spec_center.x1_0;
        if dx.abs() > window {
            err0 += rho.abs();
            err1 += rho.abs();
            continue;
        }
        let m0 = norm0 * (-dx * dx / eps).exp();
        let mut m1 = 0.0;
        for k in 0..nq {
            let xi1 = xi_lo + (k as f64 + 0.5) * dxi;
            let shift = 0.5 * eps * xi2 / (xi1 * xi1 + xi2 * xi2);
            let dxs = dx - shift;
            let dxi1 = xi1 - spec_center.xi1_0;
            m1 += (-(dxs * dxs + dxi1 * dxi1) / eps).exp();
        }
        m1 *= dxi / (PI * eps);
        err0 += (rho - m0).abs();
        err1 += (rho - m1).abs();
    }
    Ok((err0 * h, err1 * h))
}

/// L1 distance between the deposited density of `n` samples of `f_{+,0}` and
/// the quantum density `|psi_0|^2` on the default grid.
pub fn reconstruction_error(
    spec: &WavepacketSpec,
    n: usize,
    method: SampleMethod,
    seed: u64,
) -> Result<f64> {
    let grid = Grid1D::default_for_eps(spec.eps);
    let particles = sample_pure_state(spec, n, method, seed);
    let deposited = deposit_density(&particles, &grid, None)?;
    let (psi, _) = init_wavepacket(grid, spec, QuantumVariant::Graphene)?;
    let rho: Vec<f64> = (0..grid.n)
        .map(|j| psi.c1[j].norm_sqr() + psi.c2[j].norm_sqr())
        .collect();
    let reference = Density1D::new(grid, rho)?;
    l1_error(&deposited, &reference)
}

// ---------------------------------------------------------------------------
// Mixture of coherent states (Fig.-6/Table-3-style)
// ---------------------------------------------------------------------------

pub struct MixtureKineticResult {
    pub kin_expected: f64,
    pub kin_random: f64,
    pub snapshots: Vec<Snapshot>,
    pub stray_weight: f64,
}

pub fn mixture_kinetic(cfg: &RunConfig, eps: f64) -> Result<MixtureKineticResult> {
    let pot = cfg.potential.resolve();
    let mix = MixtureSpec::new(cfg.mixture_xi2_0, eps);
    let particles = sample_mixture(&mix, cfg.particles, SampleMethod::Qmc, cfg.seed);
    let weight_in = total_weight(&particles);
    let params = integrator_params(cfg);
    let grid = grid_for(cfg, eps)?;

    let run = evolve_with_snapshots(
        particles.clone(),
        0.0,
        &MIXTURE_TIMES,
        eps,
        &pot,
        &params,
        &cfg.hops,
        cfg.seed,
        &grid,
    )?;
    ensure_weight_conserved(run.outcome.total_weight(), weight_in)?;
    let kin_random = run.outcome.mode_weight(Mode::Minus) / run.outcome.total_weight();

    let opts_ev = HopOptions {
        statistic: Statistic::ExpectedValue,
        ..cfg.hops
    };
    let ev = evolve_ensemble(particles, 0.0, T_FINAL, eps, &pot, &params, &opts_ev, cfg.seed)?;
    ensure_weight_conserved(ev.total_weight(), weight_in)?;

    Ok(MixtureKineticResult {
        kin_expected: ev.expected_transfer / ev.total_weight(),
        kin_random,
        snapshots: run.snapshots,
        stray_weight: run.stray_weight,
    })
}

pub struct MixtureQuantumResult {
    pub rate: f64,
    pub snapshots: Vec<Snapshot>,
}

pub fn mixture_quantum(cfg: &RunConfig, eps: f64) -> Result<MixtureQuantumResult> {
    let pot = cfg.potential.resolve();
    let mix = MixtureSpec::new(cfg.mixture_xi2_0, eps);
    let grid = grid_for(cfg, eps)?;
    let series = quantum::ensemble_evolve(
        &mix,
        cfg.wavefunctions,
        grid,
        quantum_dt(cfg, eps),
        &pot,
        QuantumVariant::Graphene,
        cfg.seed,
        &MIXTURE_TIMES,
    )?;
    let snapshots: Vec<Snapshot> = series
        .into_iter()
        .map(|(t, plus, minus)| Snapshot { t, plus, minus })
        .collect();
    let last = snapshots.last().expect("snapshot times nonempty");
    let total = last.plus.mass() + last.minus.mass();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Conservation(format!(
            "averaged quantum mass {total} drifted from 1"
        )));
    }
    Ok(MixtureQuantumResult {
        rate: last.minus.mass() / total,
        snapshots,
    })
}
