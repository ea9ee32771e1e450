//! Wigner-function initial data and the samplers that turn it into particle
//! ensembles: 2D Hammersley quasi-Monte Carlo or seeded Monte Carlo uniforms,
//! mapped through the inverse normal CDF.

use crate::error::{Error, Result};
use crate::hopping::RngStream;
use crate::phase::{Mode, Particle, PhasePoint, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Gaussian coherent-state initial data: center `(x1_0, xi1_0)`, transverse
/// momentum `xi2_0`, semiclassical parameter `eps`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WavepacketSpec {
    pub x1_0: f64,
    pub xi1_0: f64,
    pub xi2_0: f64,
    pub eps: f64,
}

impl WavepacketSpec {
    pub fn new(x1_0: f64, xi1_0: f64, xi2_0: f64, eps: f64) -> Self {
        debug_assert!(eps > 0.0);
        WavepacketSpec {
            x1_0,
            xi1_0,
            xi2_0,
            eps,
        }
    }

    /// The reference wavepacket `(-2, 1.3, 0.1)` used throughout the experiments.
    pub fn reference(eps: f64) -> Self {
        WavepacketSpec::new(
            crate::phase::REF_X1_0,
            crate::phase::REF_XI1_0,
            crate::phase::REF_XI2_0,
            eps,
        )
    }

    /// Wigner function of the coherent state over `(x1, xi1)` (the `xi2`
    /// factor is an exact delta at `xi2_0`):
    /// `(pi eps)^{-1} exp(-(x1 - x1_0)^2/eps - (xi1 - xi1_0)^2/eps)`.
    pub fn wigner_density(&self, x1: f64, xi1: f64) -> f64 {
        let dx = x1 - self.x1_0;
        let dxi = xi1 - self.xi1_0;
        (-(dx * dx + dxi * dxi) / self.eps).exp() / (PI * self.eps)
    }

    /// The shifted density `f_{+,0}(x, xi) = f0(x1 - eps/2 xi2/|xi|^2, xi)`,
    /// an `O(eps)` approximation of the plus-mode Wigner function.
    pub fn shifted_density(&self, x1: f64, xi: Vec2) -> Result<f64> {
        let n2 = xi.norm_sq();
        if n2 == 0.0 {
            return Err(Error::SingularMomentum { xi_norm: 0.0 });
        }
        Ok(self.wigner_density(x1 - 0.5 * self.eps * xi.y / n2, xi.x))
    }
}

/// Double-bump mixture of coherent states: centers `(x1_0, xi1_0)` follow the
/// density `f0` below, each carrying the coherent-state spread of `eps`.
/// The spatial profile is `|cos(2 pi x)|` on
/// `[-11/4, -9/4] u [-7/4, -5/4]`, the momentum profile a Gaussian centered
/// at 1.3 with variance 1/10.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub xi2_0: f64,
    pub eps: f64,
}

/// Bump supports of the mixture's spatial profile.
pub const BUMP_LEFT: (f64, f64) = (-2.75, -2.25);
pub const BUMP_RIGHT: (f64, f64) = (-1.75, -1.25);
/// Momentum profile `exp(-5 (xi1 - 1.3)^2)`: mean and precision.
pub const MIXTURE_XI_MEAN: f64 = 1.3;
pub const MIXTURE_XI_PRECISION: f64 = 5.0;

impl MixtureSpec {
    pub fn new(xi2_0: f64, eps: f64) -> Self {
        MixtureSpec { xi2_0, eps }
    }

    /// Unnormalized center density `f0(x, xi1)`.
    pub fn f0_unnormalized(&self, x: f64, xi1: f64) -> f64 {
        let in_bump = (BUMP_LEFT.0..=BUMP_LEFT.1).contains(&x)
            || (BUMP_RIGHT.0..=BUMP_RIGHT.1).contains(&x);
        if !in_bump {
            return 0.0;
        }
        let spatial = (2.0 * PI * x).cos().abs();
        let d = xi1 - MIXTURE_XI_MEAN;
        spatial * (-MIXTURE_XI_PRECISION * d * d).exp()
    }

    /// Normalization constant of `f0`, computed by quadrature (the printed
    /// prefactor does not normalize the Gaussian); `f0 = c * f0_unnormalized`.
    pub fn f0_norm_constant(&self) -> f64 {
        // closed-form cross-check: each |cos| bump has mass 1/pi and the
        // Gaussian integrates to sqrt(pi/5); quadrature keeps this honest.
        let nx = 4000;
        let mut mass_x = 0.0;
        for (a, b) in [BUMP_LEFT, BUMP_RIGHT] {
            let h = (b - a) / nx as f64;
            for i in 0..nx {
                let x = a + (i as f64 + 0.5) * h;
                mass_x += (2.0 * PI * x).cos().abs() * h;
            }
        }
        let mass_xi = (PI / MIXTURE_XI_PRECISION).sqrt();
        1.0 / (mass_x * mass_xi)
    }

    /// Exact inverse CDF of the spatial double-bump profile.
    fn bump_quantile(u: f64) -> f64 {
        // each bump carries mass 1/pi; total 2/pi
        let target = u * (2.0 / PI);
        let (cum, turns) = if target <= 1.0 / PI {
            (target, 6.0) // left bump: 2 pi x + 6 pi in [pi/2, 3 pi/2]
        } else {
            (target - 1.0 / PI, 4.0) // right bump
        };
        // F(x) = (1 - sin(2 pi x)) / (2 pi) on the bump
        let psi = PI - (1.0 - 2.0 * PI * cum).asin();
        (psi - turns * PI) / (2.0 * PI)
    }
}

/// Base-2 radical inverse (van der Corput): the bits of `i` mirrored about
/// the binary point. Exact in f64 for `i < 2^53`.
pub fn radical_inverse_base2(i: u64) -> f64 {
    (i.reverse_bits() as f64) * (0.5f64).powi(64)
}

/// Radical inverse in an arbitrary base (used for the 4D mixture sampling).
pub fn radical_inverse(base: u64, mut i: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// 2D Hammersley set: point `i` of `n` is `((i + 0.5)/n, phi_2(i))`. The
/// half-offset keeps the first coordinate away from 0 before inverse-CDF
/// mapping.
pub fn hammersley(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| [(i as f64 + 0.5) / n as f64, radical_inverse_base2(i as u64)])
        .collect()
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function, rational approximations after W. J. Cody.
/// Relative accuracy ~1e-15 over the three classical ranges.
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.46875 {
        return 1.0 - erf_small(x);
    }
    let val = if ax <= 4.0 {
        const P: [f64; 9] = [
            5.64188496988670089e-1,
            8.88314979438837594,
            6.61191906371416295e1,
            2.98635138197400131e2,
            8.81952221241769090e2,
            1.71204761263407058e3,
            2.05107837782607147e3,
            1.23033935479799725e3,
            2.15311535474403846e-8,
        ];
        const Q: [f64; 8] = [
            1.57449261107098347e1,
            1.17693950891312499e2,
            5.37181101862009858e2,
            1.62138957456669019e3,
            3.29079923573345963e3,
            4.36261909014324716e3,
            3.43936767414372164e3,
            1.23033935480374942e3,
        ];
        let mut num = P[8] * ax;
        let mut den = ax;
        for i in 0..7 {
            num = (num + P[i]) * ax;
            den = (den + Q[i]) * ax;
        }
        ((num + P[7]) / (den + Q[7])) * (-ax * ax).exp()
    } else {
        const P: [f64; 6] = [
            3.05326634961232344e-1,
            3.60344899949804439e-1,
            1.25781726111229246e-1,
            1.60837851487422766e-2,
            6.58749161529837803e-4,
            1.63153871373020978e-2,
        ];
        const Q: [f64; 5] = [
            2.56852019228982242,
            1.87295284992346047,
            5.27905102951428412e-1,
            6.05183413124413191e-2,
            2.33520497626869185e-3,
        ];
        const SQRT_PI_INV: f64 = 5.641895835477562869e-1;
        let z = 1.0 / (ax * ax);
        let mut num = P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + P[i]) * z;
            den = (den + Q[i]) * z;
        }
        let frac = z * (num + P[4]) / (den + Q[4]);
        (SQRT_PI_INV - frac) / ax * (-ax * ax).exp()
    };
    if x < 0.0 {
        2.0 - val
    } else {
        val
    }
}

/// `erf` for |x| < 0.46875 (Cody).
fn erf_small(x: f64) -> f64 {
    const P: [f64; 5] = [
        3.16112374387056560,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const Q: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    let z = x * x;
    let mut num = P[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    x * (num + P[3]) / (den + Q[3])
}

/// Standard normal quantile: Acklam's rational approximation polished by one
/// Newton step of the CDF. Absolute accuracy well below 1e-9 on (0, 1).
pub fn inverse_normal_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::QuantileDomain { u });
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const U_LOW: f64 = 0.02425;

    let mut x = if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Newton step on Phi(x) = u, evaluated through the near tail so the
    // residual never suffers cancellation: for x >= 0,
    // Phi(x) - u = (1 - u) - Q(x) with Q(x) = erfc(x/sqrt(2))/2, and 1 - u is
    // exact in f64 for u >= 1/2.
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    if pdf > 1e-280 {
        let residual = if x < 0.0 {
            0.5 * erfc(-x / std::f64::consts::SQRT_2) - u
        } else {
            (1.0 - u) - 0.5 * erfc(x / std::f64::consts::SQRT_2)
        };
        x -= residual / pdf;
    }
    Ok(x)
}

/// Sampling strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    /// Deterministic Hammersley low-discrepancy points.
    Qmc,
    /// Seeded pseudo-random uniforms (reproducible per seed).
    Mc,
}

fn clamp_unit(u: f64, n: usize) -> f64 {
    let lo = 0.5 / n as f64;
    u.clamp(lo, 1.0 - lo)
}

/// Map a uniform pair to a coherent-state sample around `spec`, including the
/// `f_{+,0}` position shift.
fn coherent_sample(spec: &WavepacketSpec, u: f64, v: f64) -> PhasePoint {
    let s = (0.5 * spec.eps).sqrt();
    let x1 = spec.x1_0 + s * inverse_normal_cdf(u).expect("u clamped into (0,1)");
    let xi1 = spec.xi1_0 + s * inverse_normal_cdf(v).expect("v clamped into (0,1)");
    let xi = Vec2::new(xi1, spec.xi2_0);
    let shift = if spec.xi2_0 != 0.0 {
        0.5 * spec.eps * spec.xi2_0 / xi.norm_sq()
    } else {
        0.0
    };
    PhasePoint::new(Vec2::new(x1 + shift, 0.0), xi)
}

/// Sample `n` plus-mode particles of weight `1/n` from the shifted coherent
/// Wigner density `f_{+,0}`.
pub fn sample_pure_state(
    spec: &WavepacketSpec,
    n: usize,
    method: SampleMethod,
    seed: u64,
) -> Vec<Particle> {
    debug_assert!(n >= 1);
    let w = 1.0 / n as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (u, v) = match method {
                SampleMethod::Qmc => (
                    (i as f64 + 0.5) / n as f64,
                    clamp_unit(radical_inverse_base2(i as u64), n),
                ),
                SampleMethod::Mc => {
                    let mut rng = RngStream::new(seed, i as u64);
                    (
                        clamp_unit(rng.next_uniform(), n),
                        clamp_unit(rng.next_uniform(), n),
                    )
                }
            };
            Particle::new(coherent_sample(spec, u, v), Mode::Plus, w)
        })
        .collect()
}

/// Draw `n` mixture centers `(x1_0, xi1_0)` from `f0` (seeded, exact
/// inverse-CDF mapping); used both by the kinetic sampler and to pick the
/// wavefunctions of the quantum mixture ensemble.
pub fn mixture_centers(mix: &MixtureSpec, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let _ = mix;
    let sigma = (0.5 / MIXTURE_XI_PRECISION).sqrt();
    (0..n)
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let u = clamp_unit(rng.next_uniform(), n);
            let v = clamp_unit(rng.next_uniform(), n);
            let x = MixtureSpec::bump_quantile(u);
            let xi = MIXTURE_XI_MEAN + sigma * inverse_normal_cdf(v).expect("clamped");
            (x, xi)
        })
        .collect()
}

/// Sample `n` plus-mode particles from the mixture: centers drawn from `f0`
/// by exact inverse-CDF mapping (the profile factorizes), then the
/// coherent-state offset exactly as in `sample_pure_state`. QMC uses a 4D
/// Hammersley-style set with radical inverses in bases 2, 3, 5.
pub fn sample_mixture(
    mix: &MixtureSpec,
    n: usize,
    method: SampleMethod,
    seed: u64,
) -> Vec<Particle> {
    debug_assert!(n >= 1);
    let w = 1.0 / n as f64;
    let sigma_center = (0.5 / MIXTURE_XI_PRECISION).sqrt();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let us: [f64; 4] = match method {
                SampleMethod::Qmc => [
                    (i as f64 + 0.5) / n as f64,
                    clamp_unit(radical_inverse_base2(i as u64), n),
                    clamp_unit(radical_inverse(3, i as u64), n),
                    clamp_unit(radical_inverse(5, i as u64), n),
                ],
                SampleMethod::Mc => {
                    let mut rng = RngStream::new(seed, i as u64);
                    [
                        clamp_unit(rng.next_uniform(), n),
                        clamp_unit(rng.next_uniform(), n),
                        clamp_unit(rng.next_uniform(), n),
                        clamp_unit(rng.next_uniform(), n),
                    ]
                }
            };
            let x1_0 = MixtureSpec::bump_quantile(us[0]);
            let xi1_0 = MIXTURE_XI_MEAN
                + sigma_center * inverse_normal_cdf(us[1]).expect("clamped");
            let spec = WavepacketSpec::new(x1_0, xi1_0, mix.xi2_0, mix.eps);
            Particle::new(coherent_sample(&spec, us[2], us[3]), Mode::Plus, w)
        })
        .collect()
}
