//! Density reconstruction from particles (quintic B-spline deposition),
//! observables and error metrics.

use crate::error::{Error, Result};
use crate::phase::{Mode, Particle, PhasePoint};
use crate::quantum::Grid1D;
use rayon::prelude::*;

/// Mass-per-unit-length density on a grid.
#[derive(Clone, Debug)]
pub struct Density1D {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl Density1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::Grid(format!(
                "density length {} does not match grid n = {}",
                values.len(),
                grid.n
            )));
        }
        Ok(Density1D { grid, values })
    }

    /// Total mass `h * sum`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h()
    }
}

/// Centered quintic B-spline, support `[-3, 3]`, partition of unity on the
/// integer lattice. At integer offsets it takes the values
/// `{1, 26, 66, 26, 1}/120`.
pub fn bspline5(t: f64) -> f64 {
    let a = t.abs();
    if a >= 3.0 {
        return 0.0;
    }
    let p = |v: f64| v * v * v * v * v;
    let mut s = p(3.0 - a);
    if a < 2.0 {
        s -= 6.0 * p(2.0 - a);
    }
    if a < 1.0 {
        s += 15.0 * p(1.0 - a);
    }
    s / 120.0
}

/// Deposit particle weights on the grid with the quintic B-spline kernel in
/// `x1/h`; each particle touches 6 neighboring nodes and the kernel weights
/// sum to 1, so total mass is conserved exactly.
///
/// Particles must sit at least 3 cells inside the grid; offenders are
/// reported by index.
pub fn deposit_density(
    particles: &[Particle],
    grid: &Grid1D,
    mode_filter: Option<Mode>,
) -> Result<Density1D> {
    let h = grid.h();
    let n = grid.n;

    let keep = |p: &&Particle| mode_filter.map_or(true, |m| p.mode == m);
    let bad: Vec<usize> = particles
        .iter()
        .enumerate()
        .filter(|(_, p)| keep(&p))
        .filter_map(|(i, p)| {
            let u = (p.point.x.x - grid.x_min) / h;
            if u < 3.0 || u > (n as f64 - 3.0) {
                Some(i)
            } else {
                None
            }
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::OutOfDomain { indices: bad });
    }

    // fixed-size chunks merged in chunk order: the floating-point result does
    // not depend on the thread count
    const CHUNK: usize = 1 << 15;
    let partials: Vec<Vec<f64>> = particles
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut local = vec![0.0; n];
            for p in chunk.iter().filter(|p| mode_filter.map_or(true, |m| p.mode == m)) {
                let u = (p.point.x.x - grid.x_min) / h;
                let base = u.floor() as i64;
                for j in (base - 2)..=(base + 3) {
                    local[j as usize] += p.weight * bspline5(u - j as f64);
                }
            }
            local
        })
        .collect();

    let mut values = vec![0.0; n];
    for part in partials {
        for (v, p) in values.iter_mut().zip(part.iter()) {
            *v += p;
        }
    }
    let inv_h = 1.0 / h;
    for v in values.iter_mut() {
        *v *= inv_h;
    }
    Density1D::new(*grid, values)
}

/// `L1` distance `h * sum |d1 - d2|`; the grids must be identical.
pub fn l1_error(d1: &Density1D, d2: &Density1D) -> Result<f64> {
    if d1.grid != d2.grid {
        return Err(Error::GridMismatch);
    }
    Ok(d1
        .values
        .iter()
        .zip(d2.values.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * d1.grid.h())
}

/// Weighted phase-space observable `sum_j w_j a(x_j, xi_j)`, optionally
/// restricted to one band.
pub fn observable<F: Fn(&PhasePoint) -> f64>(
    particles: &[Particle],
    mode_filter: Option<Mode>,
    a: F,
) -> f64 {
    particles
        .iter()
        .filter(|p| mode_filter.map_or(true, |m| p.mode == m))
        .map(|p| p.weight * a(&p.point))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{band_energy, Potential, Vec2};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn particle_at(x1: f64, w: f64) -> Particle {
        Particle::new(
            PhasePoint::new(Vec2::new(x1, 0.0), Vec2::new(1.0, 0.0)),
            Mode::Plus,
            w,
        )
    }

    #[test]
    fn bspline_node_values() {
        assert_close(bspline5(0.0), 66.0 / 120.0, 1e-15);
        for t in [1.0, -1.0] {
            assert_close(bspline5(t), 26.0 / 120.0, 1e-15);
        }
        for t in [2.0, -2.0] {
            assert_close(bspline5(t), 1.0 / 120.0, 1e-15);
        }
        assert_eq!(bspline5(3.0), 0.0);
        assert_eq!(bspline5(-3.2), 0.0);
    }

    #[test]
    fn bspline_partition_of_unity() {
        for k in 0..50 {
            let frac = k as f64 / 50.0;
            let total: f64 = (-3..=3).map(|j| bspline5(frac - j as f64)).sum();
            assert_close(total, 1.0, 1e-14);
        }
    }

    #[test]
    fn single_particle_mass_is_exact() {
        let grid = Grid1D::new(-10.0, 10.0, 256).unwrap();
        // on a node and at an irrational offset
        for x1 in [0.0, 0.3137515] {
            let d = deposit_density(&[particle_at(x1, 1.0)], &grid, None).unwrap();
            assert_close(d.mass(), 1.0, 1e-14);
        }
    }

    #[test]
    fn particle_on_node_reproduces_kernel_row() {
        let grid = Grid1D::new(0.0, 16.0, 32).unwrap();
        let h = grid.h(); // 0.5, dyadic
        let node = 10;
        let d = deposit_density(&[particle_at(node as f64 * h, 1.0)], &grid, None).unwrap();
        let expect = [1.0, 26.0, 66.0, 26.0, 1.0].map(|v| v / 120.0 / h);
        for (k, e) in expect.iter().enumerate() {
            assert_close(d.values[node - 2 + k], *e, 1e-14);
        }
        assert_eq!(d.values[node + 3], 0.0);
    }

    #[test]
    fn deposition_is_translation_equivariant() {
        let grid = Grid1D::new(0.0, 16.0, 32).unwrap();
        let h = grid.h();
        // dyadic positions so x + 3h is exact and the fractional offsets match
        let xs = [3.125, 4.78125, 5.0625, 6.5];
        let parts: Vec<Particle> = xs.iter().map(|&x| particle_at(x, 0.25)).collect();
        let shifted: Vec<Particle> = xs.iter().map(|&x| particle_at(x + 3.0 * h, 0.25)).collect();
        let d0 = deposit_density(&parts, &grid, None).unwrap();
        let d3 = deposit_density(&shifted, &grid, None).unwrap();
        for j in 0..grid.n - 3 {
            assert_eq!(d0.values[j].to_bits(), d3.values[j + 3].to_bits());
        }
    }

    #[test]
    fn out_of_domain_reports_indices() {
        let grid = Grid1D::new(-10.0, 10.0, 64).unwrap();
        let parts = vec![
            particle_at(0.0, 0.5),
            particle_at(-9.95, 0.25),
            particle_at(9.99, 0.25),
        ];
        match deposit_density(&parts, &grid, None) {
            Err(Error::OutOfDomain { indices }) => assert_eq!(indices, vec![1, 2]),
            other => panic!("expected out-of-domain, got {other:?}"),
        }
    }

    #[test]
    fn mode_filter_splits_mass() {
        let grid = Grid1D::new(-10.0, 10.0, 128).unwrap();
        let mut parts = vec![particle_at(0.0, 0.7)];
        let mut minus = particle_at(1.0, 0.3);
        minus.mode = Mode::Minus;
        parts.push(minus);
        let dp = deposit_density(&parts, &grid, Some(Mode::Plus)).unwrap();
        let dm = deposit_density(&parts, &grid, Some(Mode::Minus)).unwrap();
        assert_close(dp.mass(), 0.7, 1e-14);
        assert_close(dm.mass(), 0.3, 1e-14);
    }

    #[test]
    fn deposited_gaussian_matches_analytic_marginal() {
        // 1e6 QMC samples of the coherent Wigner density: L1 distance to the
        // analytic x-marginal below 1e-3
        let eps = 0.05;
        let spec = crate::sampling::WavepacketSpec::new(-2.0, 1.3, 0.0, eps);
        let parts = crate::sampling::sample_pure_state(
            &spec,
            1_000_000,
            crate::sampling::SampleMethod::Qmc,
            0,
        );
        let grid = Grid1D::default_for_eps(eps);
        let d = deposit_density(&parts, &grid, None).unwrap();
        let analytic: Vec<f64> = (0..grid.n)
            .map(|j| {
                let dx = grid.point(j) + 2.0;
                (-dx * dx / eps).exp() / (std::f64::consts::PI * eps).sqrt()
            })
            .collect();
        let reference = Density1D::new(grid, analytic).unwrap();
        let err = l1_error(&d, &reference).unwrap();
        assert!(err <= 1e-3, "err {err}");
    }

    #[test]
    fn l1_error_is_a_metric() {
        let grid = Grid1D::new(-10.0, 10.0, 64).unwrap();
        let mk = |parts: &[(f64, f64)]| {
            let ps: Vec<Particle> = parts.iter().map(|&(x, w)| particle_at(x, w)).collect();
            deposit_density(&ps, &grid, None).unwrap()
        };
        let a = mk(&[(0.0, 1.0)]);
        let b = mk(&[(5.0, 1.0)]);
        let c = mk(&[(-3.0, 0.5), (2.0, 0.5)]);
        assert_eq!(l1_error(&a, &a).unwrap(), 0.0);
        // disjoint unit masses: distance 2
        assert_close(l1_error(&a, &b).unwrap(), 2.0, 1e-13);
        // symmetry and triangle inequality
        assert_eq!(l1_error(&a, &b).unwrap(), l1_error(&b, &a).unwrap());
        assert!(
            l1_error(&a, &b).unwrap()
                <= l1_error(&a, &c).unwrap() + l1_error(&c, &b).unwrap() + 1e-15
        );
        let other = Grid1D::new(-10.0, 10.0, 128).unwrap();
        let d = Density1D::new(other, vec![0.0; 128]).unwrap();
        assert!(matches!(l1_error(&a, &d), Err(Error::GridMismatch)));
    }

    #[test]
    fn observable_total_weight_and_energy() {
        let parts = vec![particle_at(0.0, 0.25), particle_at(1.0, 0.5)];
        assert_close(observable(&parts, None, |_| 1.0), 0.75, 1e-15);
        let pot = Potential::Harmonic;
        let e = observable(&parts, None, |p| {
            band_energy(Mode::Plus, p, &pot)
        });
        let expect = 0.25 * (1.0 + 5.0) + 0.5 * (1.0 + 121.0 / 20.0);
        assert_close(e, expect, 1e-12);
    }
}
