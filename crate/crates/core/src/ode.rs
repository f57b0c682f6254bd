//! Adaptive Dormand-Prince 5(4) integrator with a sign-change stopping event.

use crate::{Error, Result};

/// An autonomous system `y' = f(y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Width of the final bracket around an event.
    pub event_time_tol: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, initial_step: 1e-3, max_step: f64::INFINITY, max_steps: 2_000_000, event_time_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Outcome of [`integrate_until`].
#[derive(Debug, Clone)]
pub struct EventHit {
    pub t: f64,
    pub y: Vec<f64>,
    pub stats: IntegrationStats,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim] }
    }
}

/// One Dormand-Prince step of size `h` from `y` (with `k[0] = f(y)` already
/// filled). Writes the fifth-order solution to `out` and `f(out)` to `k[6]`;
/// returns the scaled RMS error estimate.
fn dp_step<S: OdeSystem + ?Sized>(sys: &S, y: &[f64], h: f64, ws: &mut Workspace, out: &mut [f64], opts: &IntegratorOptions) -> f64 {
    let n = y.len();
    let Workspace { k, tmp } = ws;
    macro_rules! stage {
        ($dst:expr, $($c:expr => $src:expr),+) => {{
            for i in 0..n {
                tmp[i] = y[i] + h * (0.0 $(+ $c * k[$src][i])+);
            }
            let (left, right) = k.split_at_mut($dst);
            let _ = left;
            sys.rhs(tmp, &mut right[0]);
        }};
    }
    stage!(1, A21 => 0);
    stage!(2, A31 => 0, A32 => 1);
    stage!(3, A41 => 0, A42 => 1, A43 => 2);
    stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
    stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
    for i in 0..n {
        out[i] = y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
    }
    let (left, right) = k.split_at_mut(6);
    let _ = left;
    sys.rhs(out, &mut right[0]);
    let mut err2 = 0.0;
    for i in 0..n {
        let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        let scale = opts.atol + opts.rtol * y[i].abs().max(out[i].abs());
        err2 += (e / scale) * (e / scale);
    }
    (err2 / n as f64).sqrt()
}

/// Integrates from `t = 0` until `event(y)` first becomes negative, or fails
/// once `t_max` is passed.
///
/// When a step ends with a negative event value the crossing is bracketed and
/// bisected by re-stepping from the accepted point until the bracket is
/// narrower than `event_time_tol`. The returned state is at the right end of
/// that bracket, so `event(y) < 0` holds there.
pub fn integrate_until<S, E>(sys: &S, y0: &[f64], t_max: f64, event: E, opts: &IntegratorOptions) -> Result<EventHit>
where
    S: OdeSystem + ?Sized,
    E: Fn(&[f64]) -> f64,
{
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let mut stats = IntegrationStats::default();
    let mut y = y0.to_vec();
    if event(&y) < 0.0 {
        return Ok(EventHit { t: 0.0, y, stats });
    }
    let mut ws = Workspace::new(n);
    let mut y_new = vec![0.0; n];
    sys.rhs(&y, &mut ws.k[0]);
    stats.rhs_evals += 1;
    let mut t = 0.0;
    let mut h = opts.initial_step.min(opts.max_step);
    let mut prev_err: f64 = 1e-4;

    while stats.accepted + stats.rejected < opts.max_steps {
        if t > t_max {
            return Err(Error::ExtinctionNotReached { t, infective: event(&y) });
        }
        let err = dp_step(sys, &y, h, &mut ws, &mut y_new, opts);
        stats.rhs_evals += 6;
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            if h < 1e-14 * t.max(1.0) {
                return Err(Error::Integration { t, reason: "non-finite derivative".into() });
            }
            continue;
        }
        if err <= 1.0 {
            if event(&y_new) < 0.0 {
                let (tc, yc) = locate_event(sys, &y, t, h, &event, &mut ws, opts, &mut stats);
                return Ok(EventHit { t: tc, y: yc, stats });
            }
            t += h;
            std::mem::swap(&mut y, &mut y_new);
            ws.k.swap(0, 6);
            stats.accepted += 1;
            // PI controller (Hairer, Norsett & Wanner, II.4).
            let factor = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.7 / 5.0) * prev_err.powf(0.4 / 5.0) };
            h = (h * factor.clamp(0.2, 5.0)).min(opts.max_step);
            prev_err = err.max(1e-4);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            if h < 1e-14 * t.max(1.0) {
                return Err(Error::Integration { t, reason: "step size underflow".into() });
            }
        }
    }
    Err(Error::Integration { t, reason: format!("step budget of {} exhausted", opts.max_steps) })
}

#[allow(clippy::too_many_arguments)]
fn locate_event<S, E>(
    sys: &S,
    y: &[f64],
    t: f64,
    h: f64,
    event: &E,
    ws: &mut Workspace,
    opts: &IntegratorOptions,
    stats: &mut IntegrationStats,
) -> (f64, Vec<f64>)
where
    S: OdeSystem + ?Sized,
    E: Fn(&[f64]) -> f64,
{
    let k0 = ws.k[0].clone();
    let mut out = vec![0.0; y.len()];
    let (mut lo, mut hi) = (0.0, h);
    let mut best = None;
    while hi - lo > opts.event_time_tol {
        let mid = 0.5 * (lo + hi);
        ws.k[0].copy_from_slice(&k0);
        dp_step(sys, y, mid, ws, &mut out, opts);
        stats.rhs_evals += 6;
        if event(&out) < 0.0 {
            hi = mid;
            best = Some(out.clone());
        } else {
            lo = mid;
        }
    }
    let y_hi = match best {
        Some(v) => v,
        None => {
            ws.k[0].copy_from_slice(&k0);
            dp_step(sys, y, hi, ws, &mut out, opts);
            stats.rhs_evals += 6;
            out
        }
    };
    (t + hi, y_hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
    }

    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn decay_event_time() {
        // y = exp(-t) crosses 1e-3 at ln(1000).
        let hit = integrate_until(&Decay(1.0), &[1.0], 100.0, |y| y[0] - 1e-3, &IntegratorOptions::default()).unwrap();
        assert!((hit.t - 1000f64.ln()).abs() < 2e-6, "{}", hit.t);
        assert!(hit.y[0] < 1e-3);
        assert!((hit.y[0] - (-hit.t).exp()).abs() < 1e-11);
    }

    #[test]
    fn oscillator_accuracy() {
        // First zero of cos(t) + 2 at none; stop when y0 = cos t crosses -0.5 at 2 pi / 3.
        let hit = integrate_until(&Oscillator, &[1.0, 0.0], 10.0, |y| y[0] + 0.5, &IntegratorOptions::default()).unwrap();
        assert!((hit.t - 2.0 * std::f64::consts::PI / 3.0).abs() < 2e-6);
        assert!((hit.y[1] + hit.t.sin()).abs() < 1e-8);
    }

    #[test]
    fn horizon_failure() {
        let err = integrate_until(&Decay(0.0), &[1.0], 50.0, |y| y[0] - 0.5, &IntegratorOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ExtinctionNotReached { .. }));
    }
}
