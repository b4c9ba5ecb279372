//! Adaptive explicit integration for scalar autonomous ODEs.
//!
//! Dormand-Prince 5(4) embedded pair with standard step-size control. This
//! is all the simulator needs: one state variable, a smooth right-hand
//! side, and tolerances tight enough to use the closed form as a referee.

use crate::scalar::{real, Real};

/// Integration failure: the step budget ran out before the interval ended.
#[derive(Debug, thiserror::Error)]
#[error("step budget of {max_steps} exhausted at t = {reached}")]
pub struct StepBudgetExceeded {
    pub max_steps: usize,
    pub reached: f64,
}

/// Tolerances and budget for [`integrate_autonomous`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        OdeOptions {
            rel_tol: real(1e-9),
            abs_tol: real(1e-3),
            max_steps: 1_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau.
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
// 4th-order weights for the embedded error estimate.
const E1: f64 = 5179.0 / 57600.0;
const E3: f64 = 7571.0 / 16695.0;
const E4: f64 = 393.0 / 640.0;
const E5: f64 = -92097.0 / 339200.0;
const E6: f64 = 187.0 / 2100.0;
const E7: f64 = 1.0 / 40.0;

/// Integrates `dy/dt = f(y)` from `y0` over a span of length `duration`.
pub fn integrate_autonomous<T: Real>(
    f: impl Fn(T) -> T,
    y0: T,
    duration: T,
    opts: &OdeOptions<T>,
) -> Result<T, StepBudgetExceeded> {
    if duration <= T::zero() {
        return Ok(y0);
    }
    let mut t = T::zero();
    let mut y = y0;

    let tol0 = opts.abs_tol + opts.rel_tol * y0.abs();
    let f0 = f(y0).abs();
    // first trial step: small against both the span and the initial rate
    let mut h = if f0 > T::zero() {
        (tol0 / f0)
            .min(duration / real(16.0))
            .max(duration * real(1e-12))
    } else {
        duration / real(16.0)
    };

    let min_factor: T = real(0.2);
    let max_factor: T = real(5.0);
    let safety: T = real(0.9);
    let order_exp: T = real(0.2);

    for step in 0..opts.max_steps {
        if t >= duration {
            return Ok(y);
        }
        if h > duration - t {
            h = duration - t;
        }

        let k1 = f(y);
        let k2 = f(y + h * (real::<T>(A21) * k1));
        let k3 = f(y + h * (real::<T>(A31) * k1 + real::<T>(A32) * k2));
        let k4 = f(y + h * (real::<T>(A41) * k1 + real::<T>(A42) * k2 + real::<T>(A43) * k3));
        let k5 = f(y + h
            * (real::<T>(A51) * k1
                + real::<T>(A52) * k2
                + real::<T>(A53) * k3
                + real::<T>(A54) * k4));
        let k6 = f(y + h
            * (real::<T>(A61) * k1
                + real::<T>(A62) * k2
                + real::<T>(A63) * k3
                + real::<T>(A64) * k4
                + real::<T>(A65) * k5));
        let y5 = y + h
            * (real::<T>(B1) * k1
                + real::<T>(B3) * k3
                + real::<T>(B4) * k4
                + real::<T>(B5) * k5
                + real::<T>(B6) * k6);
        let k7 = f(y5);
        let y4 = y + h
            * (real::<T>(E1) * k1
                + real::<T>(E3) * k3
                + real::<T>(E4) * k4
                + real::<T>(E5) * k5
                + real::<T>(E6) * k6
                + real::<T>(E7) * k7);

        let scale = opts.abs_tol + opts.rel_tol * y.abs().max(y5.abs());
        let err = (y5 - y4).abs() / scale;

        if err <= T::one() || step + 1 == opts.max_steps {
            if err > T::one() {
                break; // budget exhausted on a rejected step
            }
            t = t + h;
            y = y5;
            let factor = if err == T::zero() {
                max_factor
            } else {
                (safety * err.powf(-order_exp))
                    .min(max_factor)
                    .max(min_factor)
            };
            h = h * factor;
        } else {
            let factor = (safety * err.powf(-order_exp)).max(min_factor);
            h = h * factor;
        }
    }
    if t >= duration {
        Ok(y)
    } else {
        Err(StepBudgetExceeded {
            max_steps: opts.max_steps,
            reached: t.to_f64().unwrap_or(f64::NAN),
        })
    }
}
