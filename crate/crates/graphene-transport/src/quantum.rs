//! Reference quantum solvers: the graphene Dirac equation and its decoupled
//! pseudo-graphene variant, reduced to 1D by the exact plane-wave
//! factorization in `x2` and propagated by Strang splitting on a periodic
//! spectral grid.
//!
//! Spectral convention: unnormalized forward DFT, `1/n` on the inverse.

use crate::error::{Error, Result};
use crate::fields::Density1D;
use crate::phase::Potential;
use crate::sampling::{MixtureSpec, WavepacketSpec};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Periodic 1D grid with a power-of-two point count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_max > x_min) {
            return Err(Error::Grid(format!("empty extent [{x_min}, {x_max}]")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Grid(format!("n = {n} is not a power of two >= 2")));
        }
        Ok(Grid1D { x_min, x_max, n })
    }

    /// Default experiment box `[-10, 10]` with `h <= eps/8`, resolving the
    /// `eps`-scale phases of the wavepacket.
    pub fn default_for_eps(eps: f64) -> Self {
        let n = ((160.0 / eps).log2().ceil() as u32).clamp(7, 24);
        Grid1D {
            x_min: -10.0,
            x_max: 10.0,
            n: 1usize << n,
        }
    }

    pub fn len(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn h(&self) -> f64 {
        self.len() / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.h()
    }

    /// Dual frequency of Fourier index `j` on the periodic lattice.
    pub fn freq(&self, j: usize) -> f64 {
        let k = if j <= self.n / 2 - 1 {
            j as i64
        } else {
            j as i64 - self.n as i64
        };
        2.0 * PI * k as f64 / self.len()
    }
}

/// Which kinetic symbol drives the evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantumVariant {
    /// Full Dirac symbol `A(xi)`; the conical point couples the bands.
    Graphene,
    /// Diagonalized symbol `diag(|xi|, -|xi|)`: identical transport, no
    /// interband transitions. The spinor components are the band amplitudes.
    PseudoGraphene,
}

/// Two complex fields on a periodic grid, plus the carried parameters `eps`
/// and the conserved transverse momentum `xi2_0` of the plane-wave factor.
#[derive(Clone, Debug)]
pub struct SpinorField {
    pub grid: Grid1D,
    pub c1: Vec<Complex64>,
    pub c2: Vec<Complex64>,
    pub eps: f64,
    pub xi2_0: f64,
}

impl SpinorField {
    /// L2 norm `sqrt(h sum(|c1|^2 + |c2|^2))`.
    pub fn norm(&self) -> f64 {
        let s: f64 = self
            .c1
            .iter()
            .zip(self.c2.iter())
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .sum();
        (s * self.grid.h()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.c1
            .iter()
            .chain(self.c2.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn scale(&mut self, s: f64) {
        for z in self.c1.iter_mut().chain(self.c2.iter_mut()) {
            *z *= s;
        }
    }
}

fn fft_pair(
    fft: &Arc<dyn Fft<f64>>,
    c1: &mut [Complex64],
    c2: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    fft.process_with_scratch(c1, scratch);
    fft.process_with_scratch(c2, scratch);
}

/// Gaussian coherent state on the plus band.
///
/// Builds `u0(x) = (pi eps)^{-1/4} exp(-(x - x1_0)^2/(2 eps) + i (x - x1_0) xi1_0/eps)`;
/// for the graphene variant the spinor `(sqrt(2) u0, 0)` is projected onto
/// the plus band in Fourier space, for pseudo-graphene the band amplitudes
/// are `(u0, 0)` directly (the same state in the eigenbasis representation).
/// Returns the field (normalized to unit L2 norm) and the pre-normalization
/// norm.
pub fn init_wavepacket(
    grid: Grid1D,
    spec: &WavepacketSpec,
    variant: QuantumVariant,
) -> Result<(SpinorField, f64)> {
    let suggested = Grid1D::default_for_eps(spec.eps).n;
    if grid.h() > spec.eps / 8.0 * (1.0 + 1e-12) {
        return Err(Error::GridResolution {
            n: grid.n,
            suggested,
        });
    }

    let amp = (PI * spec.eps).powf(-0.25);
    let u0: Vec<Complex64> = (0..grid.n)
        .map(|j| {
            let dx = grid.point(j) - spec.x1_0;
            let phase = dx * spec.xi1_0 / spec.eps;
            Complex64::from_polar(amp * (-dx * dx / (2.0 * spec.eps)).exp(), phase)
        })
        .collect();

    let mut field = match variant {
        QuantumVariant::PseudoGraphene => SpinorField {
            grid,
            c1: u0,
            c2: vec![Complex64::ZERO; grid.n],
            eps: spec.eps,
            xi2_0: spec.xi2_0,
        },
        QuantumVariant::Graphene => {
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(grid.n);
            let inv = planner.plan_fft_inverse(grid.n);
            let mut scratch =
                vec![Complex64::ZERO; fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
            let sqrt2 = std::f64::consts::SQRT_2;
            let mut c1: Vec<Complex64> = u0.iter().map(|z| z * sqrt2).collect();
            let mut c2 = vec![Complex64::ZERO; grid.n];
            fft_pair(&fwd, &mut c1, &mut c2, &mut scratch);
            for j in 0..grid.n {
                let xi1 = spec.eps * grid.freq(j);
                let xi_norm = (xi1 * xi1 + spec.xi2_0 * spec.xi2_0).sqrt();
                if xi_norm == 0.0 {
                    // conical Fourier mode: projector limit replaced by the
                    // band-symmetric average
                    c1[j] *= 0.5;
                    c2[j] *= 0.5;
                    continue;
                }
                // Pi+ = 1/2 [[1, w*], [w, 1]] with w = (xi1 + i xi2)/|xi|
                let w = Complex64::new(xi1, spec.xi2_0) / xi_norm;
                let a = c1[j];
                let b = c2[j];
                c1[j] = 0.5 * (a + w.conj() * b);
                c2[j] = 0.5 * (w * a + b);
            }
            fft_pair(&inv, &mut c1, &mut c2, &mut scratch);
            let inv_n = 1.0 / grid.n as f64;
            for z in c1.iter_mut().chain(c2.iter_mut()) {
                *z *= inv_n;
            }
            SpinorField {
                grid,
                c1,
                c2,
                eps: spec.eps,
                xi2_0: spec.xi2_0,
            }
        }
    };

    let prenorm = field.norm();
    if !(prenorm > 0.0) {
        return Err(Error::Blowup { step: 0 });
    }
    field.scale(1.0 / prenorm);
    Ok((field, prenorm))
}

/// Cached split-step propagator for a fixed `(grid, dt, pot, variant)`.
pub struct Propagator {
    half_pot_phase: Vec<Complex64>,
    /// Per-mode kinetic factor: diagonal entry (equal on both), and the two
    /// off-diagonal entries (zero for pseudo-graphene).
    kin_diag: Vec<(Complex64, Complex64)>,
    kin_off: Vec<(Complex64, Complex64)>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Propagator {
    pub fn new(
        grid: Grid1D,
        dt: f64,
        eps: f64,
        xi2_0: f64,
        pot: &Potential,
        variant: QuantumVariant,
    ) -> Self {
        let half_pot_phase: Vec<Complex64> = (0..grid.n)
            .map(|j| {
                let v = pot.value(crate::phase::Vec2::new(grid.point(j), 0.0));
                Complex64::from_polar(1.0, -v * dt / (2.0 * eps))
            })
            .collect();
        let mut kin_diag = Vec::with_capacity(grid.n);
        let mut kin_off = Vec::with_capacity(grid.n);
        for j in 0..grid.n {
            let xi1 = eps * grid.freq(j);
            let xi_norm = (xi1 * xi1 + xi2_0 * xi2_0).sqrt();
            let theta = xi_norm * dt / eps;
            match variant {
                QuantumVariant::Graphene => {
                    // exp(-i dt A(xi)/eps) = cos(theta) Id - i sin(theta) A(xi)/|xi|
                    if xi_norm == 0.0 {
                        kin_diag.push((Complex64::ONE, Complex64::ONE));
                        kin_off.push((Complex64::ZERO, Complex64::ZERO));
                    } else {
                        let c = Complex64::new(theta.cos(), 0.0);
                        let w = Complex64::new(xi1, xi2_0) / xi_norm;
                        let mis = Complex64::new(0.0, -theta.sin());
                        kin_diag.push((c, c));
                        kin_off.push((mis * w.conj(), mis * w));
                    }
                }
                QuantumVariant::PseudoGraphene => {
                    kin_diag.push((
                        Complex64::from_polar(1.0, -theta),
                        Complex64::from_polar(1.0, theta),
                    ));
                    kin_off.push((Complex64::ZERO, Complex64::ZERO));
                }
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n);
        let inv = planner.plan_fft_inverse(grid.n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Propagator {
            half_pot_phase,
            kin_diag,
            kin_off,
            fwd,
            inv,
            scratch: vec![Complex64::ZERO; scratch_len],
        }
    }

    /// One Strang step: half potential phase, full kinetic step in Fourier,
    /// half potential phase.
    pub fn step(&mut self, psi: &mut SpinorField) {
        let n = psi.grid.n;
        for j in 0..n {
            psi.c1[j] *= self.half_pot_phase[j];
            psi.c2[j] *= self.half_pot_phase[j];
        }
        fft_pair(&self.fwd, &mut psi.c1, &mut psi.c2, &mut self.scratch);
        for j in 0..n {
            let (d1, d2) = self.kin_diag[j];
            let (o12, o21) = self.kin_off[j];
            let a = psi.c1[j];
            let b = psi.c2[j];
            psi.c1[j] = d1 * a + o12 * b;
            psi.c2[j] = o21 * a + d2 * b;
        }
        fft_pair(&self.inv, &mut psi.c1, &mut psi.c2, &mut self.scratch);
        let inv_n = 1.0 / n as f64;
        for j in 0..n {
            psi.c1[j] *= inv_n * self.half_pot_phase[j];
            psi.c2[j] *= inv_n * self.half_pot_phase[j];
        }
    }
}

/// One Strang step with a throwaway propagator (tests and short runs).
pub fn strang_step(
    psi: &SpinorField,
    dt: f64,
    pot: &Potential,
    variant: QuantumVariant,
) -> SpinorField {
    let mut prop = Propagator::new(psi.grid, dt, psi.eps, psi.xi2_0, pot, variant);
    let mut out = psi.clone();
    prop.step(&mut out);
    out
}

/// Evolve from `t0` to `t1` with steps of `dt` (last step shortened).
pub fn evolve(
    psi: &SpinorField,
    t0: f64,
    t1: f64,
    dt: f64,
    pot: &Potential,
    variant: QuantumVariant,
) -> Result<SpinorField> {
    debug_assert!(dt > 0.0 && t1 >= t0);
    let mut out = psi.clone();
    let span = t1 - t0;
    let full_steps = (span / dt).floor() as usize;
    let remainder = span - full_steps as f64 * dt;
    let mut prop = Propagator::new(psi.grid, dt, psi.eps, psi.xi2_0, pot, variant);
    for step_idx in 0..full_steps {
        prop.step(&mut out);
        if step_idx % 64 == 63 && !out.is_finite() {
            return Err(Error::Blowup { step: step_idx });
        }
    }
    if remainder > 1e-14 * span.max(1.0) {
        let mut last = Propagator::new(psi.grid, remainder, psi.eps, psi.xi2_0, pot, variant);
        last.step(&mut out);
    }
    if !out.is_finite() {
        return Err(Error::Blowup { step: full_steps });
    }
    Ok(out)
}

/// Pointwise band densities `(rho_plus, rho_minus)`.
///
/// Graphene: apply the band projectors `Pi_pm(eps k, xi2_0)` in Fourier and
/// return the squared moduli of the projected spinors. Pseudo-graphene: the
/// components are already the band amplitudes.
pub fn mode_densities(psi: &SpinorField, variant: QuantumVariant) -> (Vec<f64>, Vec<f64>) {
    let n = psi.grid.n;
    match variant {
        QuantumVariant::PseudoGraphene => (
            psi.c1.iter().map(|z| z.norm_sqr()).collect(),
            psi.c2.iter().map(|z| z.norm_sqr()).collect(),
        ),
        QuantumVariant::Graphene => {
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(n);
            let inv = planner.plan_fft_inverse(n);
            let mut scratch = vec![
                Complex64::ZERO;
                fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())
            ];
            let mut a = psi.c1.clone();
            let mut b = psi.c2.clone();
            fft_pair(&fwd, &mut a, &mut b, &mut scratch);
            let mut p1 = vec![Complex64::ZERO; n];
            let mut p2 = vec![Complex64::ZERO; n];
            let mut m1 = vec![Complex64::ZERO; n];
            let mut m2 = vec![Complex64::ZERO; n];
            for j in 0..n {
                let xi1 = psi.eps * psi.grid.freq(j);
                let xi_norm = (xi1 * xi1 + psi.xi2_0 * psi.xi2_0).sqrt();
                if xi_norm == 0.0 {
                    p1[j] = 0.5 * a[j];
                    p2[j] = 0.5 * b[j];
                    m1[j] = 0.5 * a[j];
                    m2[j] = 0.5 * b[j];
                    continue;
                }
                let w = Complex64::new(xi1, psi.xi2_0) / xi_norm;
                p1[j] = 0.5 * (a[j] + w.conj() * b[j]);
                p2[j] = 0.5 * (w * a[j] + b[j]);
                m1[j] = a[j] - p1[j];
                m2[j] = b[j] - p2[j];
            }
            fft_pair(&inv, &mut p1, &mut p2, &mut scratch);
            fft_pair(&inv, &mut m1, &mut m2, &mut scratch);
            let inv_n2 = 1.0 / (n as f64 * n as f64);
            let rho_plus = (0..n)
                .map(|j| (p1[j].norm_sqr() + p2[j].norm_sqr()) * inv_n2)
                .collect();
            let rho_minus = (0..n)
                .map(|j| (m1[j].norm_sqr() + m2[j].norm_sqr()) * inv_n2)
                .collect();
            (rho_plus, rho_minus)
        }
    }
}

/// Integral `h * sum(rho)` of a pointwise density.
pub fn density_mass(grid: &Grid1D, rho: &[f64]) -> f64 {
    rho.iter().sum::<f64>() * grid.h()
}

/// Averaged band densities of a mixture: sample `n_wavefunctions` coherent
/// states from the mixture's center density, evolve each, and average the
/// band densities at the requested times with equal weights (fixed-order
/// reduction, so the result is independent of thread count).
pub fn ensemble_evolve(
    mix: &MixtureSpec,
    n_wavefunctions: usize,
    grid: Grid1D,
    dt: f64,
    pot: &Potential,
    variant: QuantumVariant,
    seed: u64,
    times: &[f64],
) -> Result<Vec<(f64, Density1D, Density1D)>> {
    debug_assert!(n_wavefunctions >= 1);
    let centers = crate::sampling::mixture_centers(mix, n_wavefunctions, seed);

    let per_state: Vec<Vec<(Vec<f64>, Vec<f64>)>> = centers
        .par_iter()
        .map(|&(x1_0, xi1_0)| {
            let spec = WavepacketSpec::new(x1_0, xi1_0, mix.xi2_0, mix.eps);
            let (mut psi, _) = init_wavepacket(grid, &spec, variant)?;
            let mut t = 0.0;
            let mut snaps = Vec::with_capacity(times.len());
            for &tf in times {
                psi = evolve(&psi, t, tf, dt, pot, variant)?;
                t = tf;
                snaps.push(mode_densities(&psi, variant));
            }
            Ok(snaps)
        })
        .collect::<Result<Vec<_>>>()?;

    let w = 1.0 / n_wavefunctions as f64;
    let mut out = Vec::with_capacity(times.len());
    for (k, &tf) in times.iter().enumerate() {
        let mut plus = vec![0.0; grid.n];
        let mut minus = vec![0.0; grid.n];
        for snaps in &per_state {
            for j in 0..grid.n {
                plus[j] += w * snaps[k].0[j];
                minus[j] += w * snaps[k].1[j];
            }
        }
        out.push((
            tf,
            Density1D::new(grid, plus)?,
            Density1D::new(grid, minus)?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Vec2;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn grid_construction() {
        assert!(Grid1D::new(-10.0, 10.0, 48).is_err());
        assert!(Grid1D::new(-10.0, 10.0, 1).is_err());
        assert!(Grid1D::new(3.0, 3.0, 64).is_err());
        let g = Grid1D::new(-10.0, 10.0, 64).unwrap();
        assert_close(g.h(), 20.0 / 64.0, 1e-15);
        // frequency layout: 0, 1, ..., n/2-1, -n/2, ..., -1 (times 2 pi / L)
        assert_eq!(g.freq(0), 0.0);
        assert_close(g.freq(1), PI / 10.0, 1e-15);
        assert_close(g.freq(63), -PI / 10.0, 1e-15);
        assert_close(g.freq(32), -32.0 * PI / 10.0, 1e-13);
    }

    #[test]
    fn default_grid_resolves_eps() {
        for eps in [0.004, 0.016, 0.064, 0.128, 1.28] {
            let g = Grid1D::default_for_eps(eps);
            assert!(g.h() <= eps / 8.0 * (1.0 + 1e-12), "eps {eps}: h {}", g.h());
        }
        assert_eq!(Grid1D::default_for_eps(0.064).n, 4096);
    }

    #[test]
    fn init_normalization_and_polarization() {
        let eps = 0.064;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        for variant in [QuantumVariant::Graphene, QuantumVariant::PseudoGraphene] {
            let (psi, prenorm) = init_wavepacket(grid, &spec, variant).unwrap();
            assert_close(psi.norm(), 1.0, 1e-12);
            // the continuum projected state has unit norm; discretization
            // perturbs it only slightly
            assert_close(prenorm, 1.0, 1e-2);
            let (rho_p, rho_m) = mode_densities(&psi, variant);
            let mass_m = density_mass(&grid, &rho_m);
            assert!(mass_m <= 1e-12, "minus mass {mass_m}");
            let mass_p = density_mass(&grid, &rho_p);
            assert_close(mass_p + mass_m, 1.0, 1e-10);
        }
    }

    #[test]
    fn init_rejects_coarse_grid() {
        let spec = WavepacketSpec::reference(0.016);
        let grid = Grid1D::new(-10.0, 10.0, 1024).unwrap();
        match init_wavepacket(grid, &spec, QuantumVariant::Graphene) {
            Err(Error::GridResolution { suggested, .. }) => {
                assert_eq!(suggested, Grid1D::default_for_eps(0.016).n)
            }
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn position_expectation_shows_projection_shift() {
        // <x1> of the projected state carries the eps/2 xi2/|xi|^2 shift
        let spec = WavepacketSpec::reference(0.01);
        let grid = Grid1D::default_for_eps(0.01);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene).unwrap();
        let h = grid.h();
        let mean_x: f64 = (0..grid.n)
            .map(|j| grid.point(j) * (psi.c1[j].norm_sqr() + psi.c2[j].norm_sqr()) * h)
            .sum();
        let shift = 0.5 * 0.01 * 0.1 / Vec2::new(1.3, 0.1).norm_sq();
        assert_close(mean_x, -2.0 + shift, 0.3 * 0.01);
    }

    #[test]
    fn kinetic_step_preserves_mode_masses_without_potential() {
        // V = 0: the kinetic factor commutes with the band projectors
        let eps = 0.05;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene).unwrap();
        let flat = Potential::Barrier; // zero on the left half-line
        let stepped = strang_step(&psi, 0.01, &flat, QuantumVariant::Graphene);
        // wavepacket at x = -2 sits where V = 0 up to Gaussian tails
        let (rp0, rm0) = mode_densities(&psi, QuantumVariant::Graphene);
        let (rp1, rm1) = mode_densities(&stepped, QuantumVariant::Graphene);
        assert_close(
            density_mass(&grid, &rp1),
            density_mass(&grid, &rp0),
            1e-9,
        );
        assert_close(
            density_mass(&grid, &rm1),
            density_mass(&grid, &rm0),
            1e-9,
        );
    }

    #[test]
    fn strang_local_error_is_third_order() {
        let eps = 0.05;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene).unwrap();
        let pot = Potential::Harmonic;

        let diff_norm = |a: &SpinorField, b: &SpinorField| -> f64 {
            let s: f64 = a
                .c1
                .iter()
                .zip(&b.c1)
                .chain(a.c2.iter().zip(&b.c2))
                .map(|(x, y)| (x - y).norm_sqr())
                .sum();
            (s * a.grid.h()).sqrt()
        };
        let richardson = |dt: f64| -> f64 {
            let one = strang_step(&psi, dt, &pot, QuantumVariant::Graphene);
            let half = strang_step(
                &strang_step(&psi, dt / 2.0, &pot, QuantumVariant::Graphene),
                dt / 2.0,
                &pot,
                QuantumVariant::Graphene,
            );
            diff_norm(&one, &half)
        };
        let d1 = richardson(2e-3);
        let d2 = richardson(1e-3);
        let slope = (d1 / d2).log2();
        assert!((slope - 3.0).abs() <= 0.4, "local order slope {slope}");
    }

    #[test]
    fn unitarity_over_many_steps() {
        let eps = 0.064;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene).unwrap();
        let out = evolve(&psi, 0.0, 1.0, 1e-4, &Potential::Harmonic, QuantumVariant::Graphene)
            .unwrap();
        assert!((out.norm() - 1.0).abs() <= 1e-10, "norm {}", out.norm());
    }

    #[test]
    fn pseudo_component_masses_decouple() {
        let eps = 0.05;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::PseudoGraphene).unwrap();
        let out = evolve(
            &psi,
            0.0,
            2.0,
            eps / 20.0,
            &Potential::Harmonic,
            QuantumVariant::PseudoGraphene,
        )
        .unwrap();
        let h = grid.h();
        let m1: f64 = out.c1.iter().map(|z| z.norm_sqr()).sum::<f64>() * h;
        let m2: f64 = out.c2.iter().map(|z| z.norm_sqr()).sum::<f64>() * h;
        assert_close(m1, 1.0, 1e-10);
        assert!(m2 <= 1e-10);
    }

    #[test]
    fn adiabatic_decoupling_far_from_the_cone() {
        // before the crossing the minus-mode mass stays O(eps)
        let eps = 0.05;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene).unwrap();
        let out = evolve(&psi, 0.0, 1.0, eps / 20.0, &Potential::Harmonic, QuantumVariant::Graphene)
            .unwrap();
        let (_, rho_m) = mode_densities(&out, QuantumVariant::Graphene);
        let mass_m = density_mass(&grid, &rho_m);
        assert!(mass_m <= 5.0 * eps, "minus mass {mass_m} vs 5 eps");
    }

    #[test]
    fn global_strang_order_two() {
        let eps = 0.064;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene).unwrap();
        let pot = Potential::Harmonic;
        let reference = evolve(&psi, 0.0, 0.5, 2.5e-4 / 8.0, &pot, QuantumVariant::Graphene)
            .unwrap();
        let diff = |dt: f64| -> f64 {
            let out = evolve(&psi, 0.0, 0.5, dt, &pot, QuantumVariant::Graphene).unwrap();
            let s: f64 = out
                .c1
                .iter()
                .zip(&reference.c1)
                .chain(out.c2.iter().zip(&reference.c2))
                .map(|(x, y)| (x - y).norm_sqr())
                .sum();
            (s * grid.h()).sqrt()
        };
        let d1 = diff(1e-3);
        let d2 = diff(5e-4);
        let d3 = diff(2.5e-4);
        let s12 = (d1 / d2).log2();
        let s23 = (d2 / d3).log2();
        assert!((s12 - 2.0).abs() <= 0.2, "slope {s12}");
        assert!((s23 - 2.0).abs() <= 0.2, "slope {s23}");
    }

    #[test]
    fn table_row_quantum_transfer_eps_0064() {
        // the reference run behind the transfer table: minus mass after the
        // crossing at t = 4.5 for eps = 0.064
        let eps = 0.064;
        let grid = Grid1D::default_for_eps(eps);
        let spec = WavepacketSpec::reference(eps);
        let (psi, _) = init_wavepacket(grid, &spec, QuantumVariant::Graphene).unwrap();
        let out = evolve(&psi, 0.0, 4.5, eps / 20.0, &Potential::Harmonic, QuantumVariant::Graphene)
            .unwrap();
        let (_, rho_m) = mode_densities(&out, QuantumVariant::Graphene);
        let rate = density_mass(&grid, &rho_m);
        assert_close(rate, 0.596, 0.01);
    }
}
