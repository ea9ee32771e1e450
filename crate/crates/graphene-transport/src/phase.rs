//! Phase-space domain types, the Dirac symbol with its spectral decomposition,
//! band energies and the analytic potentials.
//!
//! Everything here is a pure function of its arguments; the types are plain
//! value types safe to share across threads.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// A point of the plane, used both for positions `x` and momenta `xi`
/// (dimensionless units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Band label: the `+|xi|` (conduction) or `-|xi|` (valence) branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Plus,
    Minus,
}

impl Mode {
    pub fn sign(self) -> f64 {
        match self {
            Mode::Plus => 1.0,
            Mode::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Mode {
        match self {
            Mode::Plus => Mode::Minus,
            Mode::Minus => Mode::Plus,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Plus => write!(f, "plus"),
            Mode::Minus => write!(f, "minus"),
        }
    }
}

/// A point `(x, xi)` of phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec2,
    pub xi: Vec2,
}

impl PhasePoint {
    pub fn new(x: Vec2, xi: Vec2) -> Self {
        PhasePoint { x, xi }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.xi.is_finite()
    }
}

/// One recorded band transition of a particle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Hop {
    /// Trajectory time at which the hop fired.
    pub time: f64,
    /// Phase-space point just before the hop (on the hopping surface).
    pub from: PhasePoint,
    /// Band the particle switched to.
    pub to_mode: Mode,
}

/// A weighted phase-space particle, the unit of the kinetic solver.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Particle {
    pub point: PhasePoint,
    pub mode: Mode,
    pub weight: f64,
    /// Band transitions in time order.
    pub hop_log: Vec<Hop>,
    /// Number of hopping-surface crossings encountered (hops or not);
    /// used by the Klein wavepacket genealogy.
    pub crossings: u32,
}

impl Particle {
    pub fn new(point: PhasePoint, mode: Mode, weight: f64) -> Self {
        debug_assert!(weight >= 0.0);
        Particle {
            point,
            mode,
            weight,
            hop_log: Vec::new(),
            crossings: 0,
        }
    }
}

/// 2x2 complex matrix in row-major order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub fn zero() -> Self {
        Mat2([[Complex64::ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        Mat2([[one, Complex64::ZERO], [Complex64::ZERO, one]])
    }

    pub fn scale(self, s: Complex64) -> Self {
        let mut m = self;
        for row in m.0.iter_mut() {
            for e in row.iter_mut() {
                *e *= s;
            }
        }
        m
    }

    pub fn matmul(self, rhs: Mat2) -> Mat2 {
        let a = self.0;
        let b = rhs.0;
        let mut c = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                c.0[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    }

    pub fn apply(self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Frobenius norm.
    pub fn norm(self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut m = self;
        for (r, rr) in m.0.iter_mut().zip(rhs.0.iter()) {
            for (e, ee) in r.iter_mut().zip(rr.iter()) {
                *e += ee;
            }
        }
        m
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut m = self;
        for (r, rr) in m.0.iter_mut().zip(rhs.0.iter()) {
            for (e, ee) in r.iter_mut().zip(rr.iter()) {
                *e -= ee;
            }
        }
        m
    }
}

/// Dirac symbol `A(xi) = [[0, xi1 - i xi2], [xi1 + i xi2, 0]]`,
/// Hermitian with eigenvalues `+|xi|` and `-|xi|`.
pub fn dirac_matrix(xi: Vec2) -> Mat2 {
    let off = Complex64::new(xi.x, -xi.y);
    Mat2([
        [Complex64::ZERO, off],
        [off.conj(), Complex64::ZERO],
    ])
}

/// Eigenprojectors `Pi_pm = Id/2 pm A(xi)/(2|xi|)` of the Dirac symbol.
///
/// Fails at the conical point `xi = 0`, where the bands touch and the
/// projectors are undefined; callers must regularize.
pub fn eigenprojectors(xi: Vec2) -> Result<(Mat2, Mat2)> {
    let n = xi.norm();
    if n == 0.0 {
        return Err(Error::SingularMomentum { xi_norm: n });
    }
    let half = Complex64::new(0.5, 0.0);
    let half_id = Mat2::identity().scale(half);
    let a_over = dirac_matrix(xi).scale(Complex64::new(0.5 / n, 0.0));
    Ok((half_id + a_over, half_id - a_over))
}

/// Band energy `E_pm(x, xi) = pm |xi| + V(x)`.
pub fn band_energy(mode: Mode, point: &PhasePoint, pot: &Potential) -> f64 {
    mode.sign() * point.xi.norm() + pot.value(point.x)
}

/// Reference wavepacket data `(x1_0, xi1_0, xi2_0) = (-2, 1.3, 0.1)` shared by
/// all experiments; the atan potential is calibrated against it.
pub const REF_X1_0: f64 = -2.0;
pub const REF_XI1_0: f64 = 1.3;
pub const REF_XI2_0: f64 = 0.1;

/// The three closed-form potentials. All depend on `x1` only, so the gradient
/// is `(V'(x1), 0)` and the Hessian `diag(V''(x1), 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// Smooth barrier `4 sin^3(pi (x1 + 1)/4)` on `[-1, 3]`, zero elsewhere.
    /// The junctions at `x1 = -1, 3` are C^2 (sin^3 vanishes to second order).
    Barrier,
    /// Harmonic ramp `(x1 + 10)^2 / 20`.
    Harmonic,
    /// Smooth step `alpha (atan(2 x1) + pi/2)`.
    Atan { alpha: f64 },
}

impl Potential {
    /// Atan potential with `alpha` calibrated so that `V2'` at its stopping
    /// point equals `V1'` at the harmonic stopping point, for the reference
    /// wavepacket. Resolves to `alpha ~ 0.6429`.
    pub fn atan_calibrated() -> Potential {
        Potential::Atan {
            alpha: calibrate_atan_alpha(),
        }
    }

    pub fn value(&self, x: Vec2) -> f64 {
        match *self {
            Potential::Barrier => {
                if (-1.0..=3.0).contains(&x.x) {
                    let s = (PI / 4.0 * (x.x + 1.0)).sin();
                    4.0 * s * s * s
                } else {
                    0.0
                }
            }
            Potential::Harmonic => (x.x + 10.0) * (x.x + 10.0) / 20.0,
            Potential::Atan { alpha } => alpha * ((2.0 * x.x).atan() + FRAC_PI_2),
        }
    }

    pub fn gradient(&self, x: Vec2) -> Vec2 {
        let d = match *self {
            Potential::Barrier => {
                if (-1.0..=3.0).contains(&x.x) {
                    let t = PI / 4.0 * (x.x + 1.0);
                    let (s, c) = t.sin_cos();
                    3.0 * PI * s * s * c
                } else {
                    0.0
                }
            }
            Potential::Harmonic => (x.x + 10.0) / 10.0,
            Potential::Atan { alpha } => {
                let u = 2.0 * x.x;
                2.0 * alpha / (1.0 + u * u)
            }
        };
        Vec2::new(d, 0.0)
    }

    /// Hessian as `(V''(x1), 0; 0, 0)`; only the `x1 x1` entry is nonzero.
    pub fn hessian(&self, x: Vec2) -> [[f64; 2]; 2] {
        let d2 = match *self {
            Potential::Barrier => {
                if (-1.0..=3.0).contains(&x.x) {
                    let t = PI / 4.0 * (x.x + 1.0);
                    let (s, c) = t.sin_cos();
                    0.75 * PI * PI * s * (2.0 * c * c - s * s)
                } else {
                    0.0
                }
            }
            Potential::Harmonic => 0.1,
            Potential::Atan { alpha } => {
                let u = 2.0 * x.x;
                let d = 1.0 + u * u;
                -8.0 * alpha * u / (d * d)
            }
        };
        [[d2, 0.0], [0.0, 0.0]]
    }

    /// Hessian applied to a vector.
    pub fn hessian_apply(&self, x: Vec2, v: Vec2) -> Vec2 {
        let h = self.hessian(x);
        Vec2::new(h[0][0] * v.x + h[0][1] * v.y, h[1][0] * v.x + h[1][1] * v.y)
    }

    /// Global bound on the spectral norm of the Hessian; enters the per-hop
    /// energy-mismatch bound `2 sup|d2V| |xi*|^2 / |grad V(x*)|^2`.
    pub fn sup_hessian_norm(&self) -> f64 {
        match *self {
            // max over theta of 3 pi^2/4 |sin(2cos^2 - sin^2)| is attained at
            // theta = pi/2 with value 3 pi^2 / 4
            Potential::Barrier => 0.75 * PI * PI,
            Potential::Harmonic => 0.1,
            // max of 8 alpha |u| / (1+u^2)^2 over u = 2 x1 at u^2 = 1/3
            Potential::Atan { alpha } => {
                let u = (1.0f64 / 3.0).sqrt();
                8.0 * alpha * u / ((1.0 + u * u) * (1.0 + u * u))
            }
        }
    }
}

/// Harmonic stopping point `x1*` of the reference wavepacket, from energy
/// conservation `V1(x1*) + |xi2_0| = V1(x1_0) + |xi_0|`.
pub fn harmonic_stop_point() -> f64 {
    let e = (REF_XI1_0 * REF_XI1_0 + REF_XI2_0 * REF_XI2_0).sqrt()
        + Potential::Harmonic.value(Vec2::new(REF_X1_0, 0.0));
    -10.0 + (20.0 * (e - REF_XI2_0.abs())).sqrt()
}

fn calibrate_atan_alpha() -> f64 {
    let vp1 = Potential::Harmonic
        .gradient(Vec2::new(harmonic_stop_point(), 0.0))
        .x;
    let xi0_norm = (REF_XI1_0 * REF_XI1_0 + REF_XI2_0 * REF_XI2_0).sqrt();
    // (atan(2 x1_0) + pi/2), the potential shape factor at the launch point
    let c0 = (2.0 * REF_X1_0).atan() + FRAC_PI_2;
    // Residual of V2'(x2*(alpha)) = V1'(x1*), with the stopping point x2*
    // determined by energy conservation on the atan profile.
    let residual = |alpha: f64| -> f64 {
        let arg = (xi0_norm + alpha * c0 - REF_XI2_0.abs()) / alpha - FRAC_PI_2;
        let u = arg.tan(); // u = 2 x2*
        2.0 * alpha / (1.0 + u * u) - vp1
    };
    let (mut lo, mut hi) = (0.5, 0.9);
    debug_assert!(residual(lo) < 0.0 && residual(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
