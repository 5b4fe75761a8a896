//! Adaptive Dormand-Prince 5(4) integration for small autonomous-size systems.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-12, atol: 1e-14, h_init: 1e-3, h_max: 0.05, h_min: 1e-14, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Finish<const N: usize> {
    /// Reached `t_end`.
    End { t: f64, y: [f64; N] },
    /// The observer asked to stop after the step ending at `t`.
    Stopped { t: f64, y: [f64; N] },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
// Fifth minus embedded fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`. Steps are clipped so that
/// every entry of `stops` (sorted, inside the interval) is hit exactly. The
/// observer sees every accepted step and may stop the integration.
pub fn integrate<const N: usize, F, O>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    stops: &[f64],
    ctl: &StepControl,
    mut observe: O,
) -> Result<Finish<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]) -> ControlFlow<()>,
{
    let mut t = t0;
    let mut y = y0;
    let mut h = ctl.h_init.min(ctl.h_max);
    let mut k1 = f(t, &y);
    let mut next_stop = stops.partition_point(|&s| s <= t0);
    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > ctl.max_steps {
            return Err(Error::Numerical(format!("step budget exhausted at t = {t}")));
        }
        let target = stops.get(next_stop).cloned().unwrap_or(t_end).min(t_end);
        let mut clipped = false;
        if t + h >= target {
            h = target - t;
            clipped = true;
        }
        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(t + h, &y_new);

        let mut err = 0.0f64;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            if h < ctl.h_min {
                return Err(Error::Numerical(format!("non-finite state near t = {t}")));
            }
            continue;
        }
        if err <= 1.0 {
            t = if clipped { target } else { t + h };
            y = y_new;
            k1 = k7;
            if clipped && next_stop < stops.len() && target == stops[next_stop] {
                next_stop += 1;
            }
            if observe(t, &y).is_break() {
                return Ok(Finish::Stopped { t, y });
            }
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
            h = (h * grow).min(ctl.h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
        if h < ctl.h_min {
            return Err(Error::Numerical(format!("step size underflow at t = {t}")));
        }
    }
    Ok(Finish::End { t, y })
}
