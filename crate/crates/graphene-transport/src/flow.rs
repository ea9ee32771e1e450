//! Classical band transport: Hamiltonian fields of `pm|xi| + V(x)`, a
//! fourth-order symplectic composition integrator, continuation through the
//! conical point and detection of hopping-surface crossings.

use crate::error::{Error, Result};
use crate::phase::{Mode, PhasePoint, Potential, Vec2};
use serde::{Deserialize, Serialize};

/// Triple-jump composition weights: three Strang steps of sizes
/// `g1 dt, g2 dt, g1 dt` give a symmetric method of order 4.
/// `g1 = 1/(2 - 2^(1/3))`, `g2 = 1 - 2 g1`.
pub const TRIPLE_JUMP_G1: f64 = 1.351_207_191_959_657_8;
pub const TRIPLE_JUMP_G2: f64 = -1.702_414_383_919_315_5;

/// Step-size and event-localization tolerances for `propagate`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntegratorParams {
    /// Base time step.
    pub dt: f64,
    /// Tolerance on `xi . grad V` for a refined surface crossing.
    pub crossing_tol: f64,
    /// Tolerance on `|xi|` below which a crossing counts as a conical hit;
    /// scaled internally by `max(1, |xi(t0)|)`.
    pub conical_tol: f64,
}

impl IntegratorParams {
    pub fn new(dt: f64) -> Self {
        IntegratorParams {
            dt,
            crossing_tol: 1e-10,
            conical_tol: 1e-8,
        }
    }
}

/// Events reported by `propagate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// Transversal crossing of `Sigma = {xi . grad V = 0}` from the ingoing side.
    SigmaCrossing,
    /// The crossing point lies at the cone `|xi| ~ 0`.
    ConicalHit,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowEvent {
    pub kind: EventKind,
    pub time: f64,
    pub point: PhasePoint,
}

/// Hamiltonian vector field `(dx/dt, dxi/dt) = (pm xi/|xi|, -grad V)`.
///
/// At the cone (`|xi| <= conical_tol`) returns the outgoing branch of the
/// unique Lipschitz continuation, whose velocity limit is `-sign grad V/|grad V|`.
pub fn hamiltonian_field(
    mode: Mode,
    point: &PhasePoint,
    pot: &Potential,
    conical_tol: f64,
) -> Result<(Vec2, Vec2)> {
    let grad = pot.gradient(point.x);
    let n = point.xi.norm();
    if n > conical_tol {
        Ok((point.xi * (mode.sign() / n), -grad))
    } else {
        let g = grad.norm();
        if g == 0.0 {
            return Err(Error::NonUniqueContinuation { x: point.x });
        }
        Ok((grad * (-mode.sign() / g), -grad))
    }
}

/// Half-kick `xi -= h/2 grad V(x)`, exact drift `x += sign h xi/|xi|`, half-kick.
/// Both sub-flows are the exact flows of their split Hamiltonians.
fn strang(mode: Mode, p: PhasePoint, h: f64, pot: &Potential) -> Result<PhasePoint> {
    let mut xi = p.xi - pot.gradient(p.x) * (0.5 * h);
    let n = xi.norm();
    if n == 0.0 {
        return Err(Error::SingularMomentum { xi_norm: n });
    }
    let x = p.x + xi * (mode.sign() * h / n);
    xi = xi - pot.gradient(x) * (0.5 * h);
    Ok(PhasePoint::new(x, xi))
}

/// One step of the order-4 triple-jump composition of Strang steps.
pub fn step(mode: Mode, point: &PhasePoint, dt: f64, pot: &Potential) -> Result<PhasePoint> {
    let p = strang(mode, *point, TRIPLE_JUMP_G1 * dt, pot)?;
    let p = strang(mode, p, TRIPLE_JUMP_G2 * dt, pot)?;
    strang(mode, p, TRIPLE_JUMP_G1 * dt, pot)
}

/// `g = xi . grad V(x)`; trajectories cross `Sigma = {g = 0}` from `g > 0`
/// to `g < 0` where `|xi|` attains its minimum.
pub fn sigma_indicator(point: &PhasePoint, pot: &Potential) -> f64 {
    point.xi.dot(pot.gradient(point.x))
}

/// `dg/dt = -|grad V|^2 + sign d2V xi . xi / |xi|`, negative near Sigma.
fn sigma_indicator_rate(mode: Mode, point: &PhasePoint, pot: &Potential) -> f64 {
    let grad = pot.gradient(point.x);
    let n = point.xi.norm();
    let curv = if n > 0.0 {
        pot.hessian_apply(point.x, point.xi).dot(point.xi) / n
    } else {
        0.0
    };
    -grad.norm_sq() + mode.sign() * curv
}

/// Result of integrating up to the next event or the end of the interval.
#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub point: PhasePoint,
    pub time: f64,
    pub event: Option<FlowEvent>,
}

/// Integrate from `(t0, start)` until the first Sigma crossing / conical hit
/// or until `t1`. The returned point sits on the event when one is reported.
pub fn propagate_until_event(
    mode: Mode,
    start: &PhasePoint,
    t0: f64,
    t1: f64,
    params: &IntegratorParams,
    pot: &Potential,
) -> Result<Segment> {
    let conical_tol = params.conical_tol * start.xi.norm().max(1.0);
    let mut state = *start;
    let mut t = t0;
    let mut g_prev = sigma_indicator(&state, pot);
    // A crossing only counts once the trajectory has been strictly on the
    // ingoing side; this keeps restarts on Sigma and flat-potential regions
    // (g identically 0) from retriggering.
    let mut armed = g_prev > params.crossing_tol;

    while t < t1 {
        let mut dt_step = params.dt.min(t1 - t);
        // localize sharply: halve the step when an armed crossing is predicted
        // within ten base steps
        if armed && g_prev > 0.0 {
            let rate = sigma_indicator_rate(mode, &state, pot);
            if rate < 0.0 && g_prev / (-rate) < 10.0 * params.dt {
                dt_step = dt_step.min(0.5 * params.dt);
            }
        }
        let next = step(mode, &state, dt_step, pot)?;
        if !next.is_finite() {
            return Err(Error::Integration {
                t,
                detail: format!("non-finite state from {state:?} (dt = {dt_step})"),
            });
        }
        let g_next = sigma_indicator(&next, pot);

        if armed && g_prev > 0.0 && g_next < 0.0 {
            let (point, time) =
                refine_crossing(mode, &state, t, dt_step, g_next, params, pot)?;
            let kind = if point.xi.norm() < conical_tol {
                EventKind::ConicalHit
            } else {
                EventKind::SigmaCrossing
            };
            return Ok(Segment {
                point,
                time,
                event: Some(FlowEvent { kind, time, point }),
            });
        }

        state = next;
        t += dt_step;
        g_prev = g_next;
        if g_prev > params.crossing_tol {
            armed = true;
        }
    }

    Ok(Segment {
        point: state,
        time: t1,
        event: None,
    })
}

/// Bisection on the integrated flow map over the bracketing step.
fn refine_crossing(
    mode: Mode,
    lo_state: &PhasePoint,
    lo_time: f64,
    dt_step: f64,
    _g_hi: f64,
    params: &IntegratorParams,
    pot: &Potential,
) -> Result<(PhasePoint, f64)> {
    let mut lo = *lo_state;
    let mut t_lo = lo_time;
    let mut t_hi = lo_time + dt_step;
    for _ in 0..80 {
        let half = 0.5 * (t_hi - t_lo);
        let mid = step(mode, &lo, half, pot)?;
        let g_mid = sigma_indicator(&mid, pot);
        if g_mid.abs() <= params.crossing_tol {
            return Ok((mid, t_lo + half));
        }
        if g_mid > 0.0 {
            lo = mid;
            t_lo += half;
        } else {
            t_hi = t_lo + half;
        }
    }
    Ok((lo, t_lo))
}

/// Restart a trajectory from a conical hit on the outgoing branch of `mode`:
/// seed a short time `tau` along the limit field of the continuation.
pub fn conical_restart(mode: Mode, x: Vec2, pot: &Potential, tau: f64) -> Result<PhasePoint> {
    let grad = pot.gradient(x);
    let g = grad.norm();
    if g == 0.0 {
        return Err(Error::NonUniqueContinuation { x });
    }
    let x_new = x + grad * (-mode.sign() * tau / g);
    let xi_new = -grad * tau;
    Ok(PhasePoint::new(x_new, xi_new))
}

/// Advance `(t0, point)` to `t1`, recording every Sigma crossing and conical
/// hit along the way; the trajectory continues on the same band through all
/// events (conical hits restart on the outgoing branch).
pub fn propagate(
    mode: Mode,
    point: &PhasePoint,
    t0: f64,
    t1: f64,
    params: &IntegratorParams,
    pot: &Potential,
) -> Result<(PhasePoint, Vec<FlowEvent>)> {
    debug_assert!(t1 >= t0);
    let mut state = *point;
    let mut t = t0;
    let mut events = Vec::new();
    while t < t1 {
        let seg = propagate_until_event(mode, &state, t, t1, params, pot)?;
        state = seg.point;
        t = seg.time;
        if let Some(ev) = seg.event {
            events.push(ev);
            if ev.kind == EventKind::ConicalHit {
                let tau = 1e-3 * params.dt;
                state = conical_restart(mode, state.x, pot, tau)?;
                t += tau;
            }
        }
    }
    Ok((state, events))
}

/// Time and size of the minimal gap `|xi|` along the trajectory, attained on
/// Sigma; `None` when the trajectory does not cross in `[t0, t1]`.
pub fn min_gap_along(
    mode: Mode,
    point: &PhasePoint,
    t0: f64,
    t1: f64,
    params: &IntegratorParams,
    pot: &Potential,
) -> Result<Option<(f64, f64)>> {
    let seg = propagate_until_event(mode, point, t0, t1, params, pot)?;
    Ok(seg
        .event
        .map(|ev| (ev.time, ev.point.xi.norm())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::band_energy;

    const HARM: Potential = Potential::Harmonic;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn ref_start() -> PhasePoint {
        PhasePoint::new(Vec2::new(-2.0, 0.0), Vec2::new(1.3, 0.1))
    }

    #[test]
    fn field_hand_values() {
        let p = PhasePoint::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        let (dx, dxi) = hamiltonian_field(Mode::Plus, &p, &HARM, 1e-8).unwrap();
        assert_eq!(dx, Vec2::new(1.0, 0.0));
        assert_eq!(dxi, Vec2::new(-1.0, 0.0));
        let (dx, dxi) = hamiltonian_field(Mode::Minus, &p, &HARM, 1e-8).unwrap();
        assert_eq!(dx, Vec2::new(-1.0, 0.0));
        assert_eq!(dxi, Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn field_conical_outgoing_branch() {
        let p = PhasePoint::new(Vec2::new(-0.615, 0.0), Vec2::ZERO);
        let (dx, dxi) = hamiltonian_field(Mode::Plus, &p, &HARM, 1e-8).unwrap();
        assert_close(dx.x, -1.0, 1e-12);
        assert_close(dx.y, 0.0, 1e-12);
        assert_close(dxi.x, -0.9385, 1e-4);
    }

    #[test]
    fn field_degenerate_errors() {
        // grad V = 0 outside the barrier support
        let p = PhasePoint::new(Vec2::new(-5.0, 0.0), Vec2::ZERO);
        assert!(matches!(
            hamiltonian_field(Mode::Plus, &p, &Potential::Barrier, 1e-8),
            Err(Error::NonUniqueContinuation { .. })
        ));
    }

    #[test]
    fn free_region_drift_is_exact() {
        let pot = Potential::Barrier;
        let p = PhasePoint::new(Vec2::new(-6.0, 0.2), Vec2::new(0.5, -0.3));
        let dt = 0.37;
        let q = step(Mode::Plus, &p, dt, &pot).unwrap();
        let n = p.xi.norm();
        assert_close(q.x.x, p.x.x + dt * p.xi.x / n, 1e-15);
        assert_close(q.x.y, p.x.y + dt * p.xi.y / n, 1e-15);
        assert_eq!(q.xi, p.xi);
    }

    #[test]
    fn step_matches_fine_reference() {
        // one dt = 1e-2 step against a dt = 1e-5 reference integration
        let p = ref_start();
        let coarse = step(Mode::Plus, &p, 1e-2, &HARM).unwrap();
        let mut fine = p;
        for _ in 0..1000 {
            fine = step(Mode::Plus, &fine, 1e-5, &HARM).unwrap();
        }
        assert_close(coarse.x.x, fine.x.x, 1e-9);
        assert_close(coarse.x.y, fine.x.y, 1e-9);
        assert_close(coarse.xi.x, fine.xi.x, 1e-9);
        assert_close(coarse.xi.y, fine.xi.y, 1e-9);
    }

    #[test]
    fn fourth_order_energy_convergence() {
        // energy defect over [0, 1] scales as dt^4: slope 4 +- 0.2
        let p = ref_start();
        let e0 = band_energy(Mode::Plus, &p, &HARM);
        let defect = |dt: f64| -> f64 {
            let mut q = p;
            let steps = (1.0 / dt).round() as usize;
            let mut worst: f64 = 0.0;
            for _ in 0..steps {
                q = step(Mode::Plus, &q, dt, &HARM).unwrap();
                worst = worst.max((band_energy(Mode::Plus, &q, &HARM) - e0).abs());
            }
            worst
        };
        let d1 = defect(1e-2);
        let d2 = defect(5e-3);
        let d3 = defect(2.5e-3);
        let s12 = (d1 / d2).log2();
        let s23 = (d2 / d3).log2();
        assert!((s12 - 4.0).abs() <= 0.2, "slope {s12}");
        assert!((s23 - 4.0).abs() <= 0.2, "slope {s23}");
    }

    #[test]
    fn step_is_time_reversible() {
        let p = ref_start();
        for dt in [1e-2, 3e-3] {
            let q = step(Mode::Plus, &p, dt, &HARM).unwrap();
            let back = step(Mode::Plus, &q, -dt, &HARM).unwrap();
            assert_close(back.x.x, p.x.x, 1e-12);
            assert_close(back.x.y, p.x.y, 1e-12);
            assert_close(back.xi.x, p.xi.x, 1e-12);
            assert_close(back.xi.y, p.xi.y, 1e-12);
        }
    }

    #[test]
    fn xi2_is_conserved_bitwise() {
        let mut q = ref_start();
        for _ in 0..5000 {
            q = step(Mode::Plus, &q, 2e-3, &HARM).unwrap();
            assert!((q.xi.y - 0.1).abs() <= 1e-14);
        }
    }

    #[test]
    fn harmonic_crossing_location_and_energy() {
        let p = ref_start();
        let params = IntegratorParams::new(1e-3);
        let (_, events) = propagate(Mode::Plus, &p, 0.0, 4.5, &params, &HARM).unwrap();
        assert_eq!(events.len(), 1, "exactly one crossing before t = 4.5");
        let ev = events[0];
        assert_eq!(ev.kind, EventKind::SigmaCrossing);
        // x1* from energy conservation: V1(x1*) + |xi2| = E
        assert_close(ev.point.x.x, -0.61507540675948772, 1e-5);
        assert!(ev.point.xi.x.abs() <= 1e-6, "xi1* = {}", ev.point.xi.x);
        assert_close(ev.point.xi.norm(), 0.1, 1e-7);
        // ingoing orientation
        assert!(sigma_indicator(&ev.point, &HARM).abs() <= params.crossing_tol);
        // energy conservation through the crossing refinement
        let e0 = band_energy(Mode::Plus, &p, &HARM);
        let e1 = band_energy(Mode::Plus, &ev.point, &HARM);
        assert_close(e1, e0, 1e-8);
    }

    #[test]
    fn no_events_in_flat_region() {
        let pot = Potential::Barrier;
        let p = PhasePoint::new(Vec2::new(-8.0, 0.0), Vec2::new(-1.0, 0.0));
        let params = IntegratorParams::new(1e-2);
        let (end, events) = propagate(Mode::Plus, &p, 0.0, 2.0, &params, &pot).unwrap();
        assert!(events.is_empty());
        assert_close(end.x.x, -10.0, 1e-12);
    }

    #[test]
    fn energy_drift_bound_over_long_run() {
        let p = ref_start();
        let params = IntegratorParams::new(1e-3);
        let e0 = band_energy(Mode::Plus, &p, &HARM);
        let (end, _) = propagate(Mode::Plus, &p, 0.0, 10.0, &params, &HARM).unwrap();
        let e1 = band_energy(Mode::Plus, &end, &HARM);
        assert!((e1 - e0).abs() <= 1e-8, "drift {}", (e1 - e0).abs());
    }

    #[test]
    fn min_gap_matches_conserved_xi2() {
        let p = ref_start();
        let params = IntegratorParams::new(1e-3);
        let (t_min, gap) = min_gap_along(Mode::Plus, &p, 0.0, 4.5, &params, &HARM)
            .unwrap()
            .expect("crossing expected");
        assert!(t_min > 0.0 && t_min < 4.5);
        assert_close(gap, 0.1, 1e-7);

        // dense-sampling oracle: |xi| at dt/100 resolution around t_min
        let mut q = p;
        let fine = params.dt / 100.0;
        let mut t = 0.0;
        let mut min_norm = q.xi.norm();
        while t < 4.5 {
            q = step(Mode::Plus, &q, fine, &HARM).unwrap();
            t += fine;
            min_norm = min_norm.min(q.xi.norm());
        }
        assert!((gap * gap - min_norm * min_norm).abs() <= 1e-8);
    }

    #[test]
    fn min_gap_none_when_no_crossing() {
        let p = PhasePoint::new(Vec2::new(-2.0, 0.0), Vec2::new(-1.3, 0.1));
        let params = IntegratorParams::new(1e-3);
        // moving downhill: g < 0 from the start, never crosses
        let r = min_gap_along(Mode::Plus, &p, 0.0, 3.0, &params, &HARM).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn conical_hit_detected_for_head_on_trajectory() {
        // xi2 = 0: the trajectory runs straight into the cone
        let p = PhasePoint::new(Vec2::new(-2.0, 0.0), Vec2::new(1.3, 0.0));
        let params = IntegratorParams::new(1e-3);
        let (_, gap) = min_gap_along(Mode::Plus, &p, 0.0, 4.5, &params, &HARM)
            .unwrap()
            .expect("hit expected");
        assert!(gap <= params.conical_tol * p.xi.norm().max(1.0), "gap {gap}");

        let seg = propagate_until_event(Mode::Plus, &p, 0.0, 4.5, &params, &HARM).unwrap();
        assert_eq!(seg.event.unwrap().kind, EventKind::ConicalHit);

        // continuation: velocity flips to the outgoing branch and the particle
        // rolls back; energy is preserved through the hit
        let e0 = band_energy(Mode::Plus, &p, &HARM);
        let (end, events) = propagate(Mode::Plus, &p, 0.0, 6.0, &params, &HARM).unwrap();
        assert_eq!(events.len(), 1);
        assert!(end.x.x < events[0].point.x.x, "rolled back downhill");
        assert_close(band_energy(Mode::Plus, &end, &HARM), e0, 1e-6);
    }
}
