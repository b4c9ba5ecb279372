//! Switching-rate model core.
//!
//! A two-terminal resistive device is described by its switching rate
//! `dR/dt = m(R, v)`: an exponential voltage sensitivity `s(v)` multiplied
//! by a quadratic window `(r(v) - R)^2` that vanishes at the voltage
//! dependent resistive boundary `r(v)`. Positive and negative stimulation
//! use separate branch parameters. The exact form gates the window with
//! hard steps; the smooth form replaces every step with a sigmoid so the
//! expression is continuous and differentiable for circuit solvers.

use crate::error::ModelError;
use crate::scalar::{real, Real};

/// Stimulation branch selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// Branch owning voltage `v`. Zero maps to the positive branch, which
    /// keeps that branch closed on its boundary (`s(0) = 0` either way).
    pub fn of_voltage<T: Real>(v: T) -> Polarity {
        if v > T::zero() {
            Polarity::Positive
        } else if v < T::zero() {
            Polarity::Negative
        } else {
            Polarity::Positive
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Polarity::Positive)
    }
}

/// Exponential with linearized overflow guard.
///
/// Equals `exp(x)` for `x <= threshold` and continues with the tangent line
/// `exp(threshold) * (1 + x - threshold)` above it, so value and first
/// derivative are continuous at the knee.
pub fn limexp<T: Real>(x: T, threshold: T) -> T {
    if x <= threshold {
        x.exp()
    } else {
        threshold.exp() * (T::one() + x - threshold)
    }
}

/// Default linearization knee for [`limexp`]: e^80 ~ 5.5e34 stays far from
/// f64 overflow while leaving ordinary operating exponents untouched.
pub const LIMEXP_THRESHOLD: f64 = 80.0;

/// Stationarity validity bound: the rate surface is only trusted for low
/// voltage stimulation, |v| <= 1 V.
pub const STATIONARITY_LIMIT_V: f64 = 1.0;

/// Sigmoid smoothing parameters for the continuous model variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams<T> {
    /// Resistance-gate sigmoid slope (ohm).
    pub b_r: T,
    /// Voltage-gate sigmoid slope (V).
    pub b_v: T,
    /// Linearization knee handed to [`limexp`] for the sensitivity
    /// exponentials (the emitted Verilog-A routes every exponential through
    /// the simulator's own `limexp`).
    pub limexp_threshold: T,
}

impl<T: Real> Default for SmoothingParams<T> {
    fn default() -> Self {
        SmoothingParams {
            b_r: T::one(),
            b_v: real(1e-3),
            limexp_threshold: real(LIMEXP_THRESHOLD),
        }
    }
}

impl<T: Real> SmoothingParams<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("b_R", self.b_r),
            ("b_v", self.b_v),
            ("limexp_threshold", self.limexp_threshold),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!(
                    "{name} must be strictly positive (got {v})"
                )));
            }
        }
        Ok(())
    }
}

/// The eight fitted constants of the switching-rate law plus the read-out
/// voltage. One value of this struct defines one device model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    /// Sensitivity amplitude, positive branch (1/(ohm*s)).
    pub a_p: T,
    /// Sensitivity amplitude, negative branch (1/(ohm*s)).
    pub a_n: T,
    /// Sensitivity voltage scale, positive branch (V).
    pub t_p: T,
    /// Sensitivity voltage scale, negative branch (V).
    pub t_n: T,
    /// Positive boundary intercept (ohm).
    pub a0: T,
    /// Positive boundary slope (ohm/V).
    pub a1: T,
    /// Negative boundary intercept (ohm).
    pub b0: T,
    /// Negative boundary slope (ohm/V).
    pub b1: T,
    /// Standardized read-out voltage (V).
    pub v_read: T,
}

impl<T: Real> ModelParams<T> {
    /// Shipped TiOx device preset.
    ///
    /// Sensitivity amplitudes are sign-normalized so each branch drives the
    /// state toward its own boundary: positive bias raises R toward the
    /// upper boundary, negative bias lowers it toward the lower one.
    pub fn preset() -> Self {
        ModelParams {
            a_p: real(4.86e-5),
            a_n: real(-1.09e-3),
            t_p: real(0.12),
            t_n: real(0.18),
            a0: real(17.16e3),
            a1: real(0.15e3),
            b0: real(24.81e3),
            b1: real(17.91e3),
            v_read: real(0.2),
        }
    }

    /// Validates the invariants against a declared operating voltage box
    /// `[v_min, v_max]` with `v_min < 0 < v_max`.
    ///
    /// Besides positivity/finiteness this requires `r_p(v_max) > r_n(v_min)`:
    /// the resistive range reachable at the box extremes must be nonempty,
    /// otherwise a state between the two boundaries can never switch again.
    pub fn validate(&self, v_min: T, v_max: T) -> Result<(), ModelError> {
        let fields = [
            ("A_p", self.a_p),
            ("A_n", self.a_n),
            ("t_p", self.t_p),
            ("t_n", self.t_n),
            ("a0", self.a0),
            ("a1", self.a1),
            ("b0", self.b0),
            ("b1", self.b1),
            ("V_read", self.v_read),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!(
                    "{name} is not finite"
                )));
            }
        }
        if !(self.t_p > T::zero()) || !(self.t_n > T::zero()) {
            return Err(ModelError::InvalidParameter(
                "t_p and t_n must be positive".into(),
            ));
        }
        if self.a1 < T::zero() || self.b1 < T::zero() {
            return Err(ModelError::InvalidParameter(
                "boundary slopes a1 and b1 must be nonnegative".into(),
            ));
        }
        if !(v_min < T::zero() && v_max > T::zero()) {
            return Err(ModelError::InvalidParameter(
                "operating voltage box must straddle zero".into(),
            ));
        }
        if self.threshold_resistance(v_max) <= self.threshold_resistance(v_min) {
            return Err(ModelError::InvalidParameter(format!(
                "degenerate boundary geometry: r_p({v_max}) <= r_n({v_min}) over the operating box"
            )));
        }
        Ok(())
    }

    /// Validates against the default |v| <= 1 V operating box.
    pub fn validate_default_box(&self) -> Result<(), ModelError> {
        self.validate(real(-STATIONARITY_LIMIT_V), real(STATIONARITY_LIMIT_V))
    }

    /// Boundary resistance `r(v)`: `a0 + a1*v` for v > 0, `b0 + b1*v` for
    /// v < 0, and `a0` at exactly zero.
    pub fn threshold_resistance(&self, v: T) -> T {
        match Polarity::of_voltage(v) {
            Polarity::Positive => self.a0 + self.a1 * v,
            Polarity::Negative => self.b0 + self.b1 * v,
        }
    }

    /// Boundary resistance of a specific branch.
    pub fn branch_threshold(&self, v: T, pol: Polarity) -> T {
        match pol {
            Polarity::Positive => self.a0 + self.a1 * v,
            Polarity::Negative => self.b0 + self.b1 * v,
        }
    }

    /// Threshold voltage: inverse of the boundary line for one branch.
    pub fn threshold_voltage(&self, resistance: T, pol: Polarity) -> Result<T, ModelError> {
        let (intercept, slope) = match pol {
            Polarity::Positive => (self.a0, self.a1),
            Polarity::Negative => (self.b0, self.b1),
        };
        if slope == T::zero() {
            return Err(ModelError::ThresholdUndefined(pol.name()));
        }
        Ok((resistance - intercept) / slope)
    }

    /// Switching sensitivity `s(v)`: exactly zero at v = 0, which is what
    /// makes the model non-volatile at rest.
    pub fn switching_sensitivity(&self, v: T) -> T {
        self.switching_sensitivity_limexp(v, real(LIMEXP_THRESHOLD))
    }

    fn switching_sensitivity_limexp(&self, v: T, knee: T) -> T {
        if v == T::zero() {
            return T::zero();
        }
        let (amp, scale) = match Polarity::of_voltage(v) {
            Polarity::Positive => (self.a_p, self.t_p),
            Polarity::Negative => (self.a_n, self.t_n),
        };
        amp * (limexp(v.abs() / scale, knee) - T::one())
    }

    /// Exact piecewise switching rate `m(R, v)` with hard gates.
    pub fn switching_rate_exact(&self, resistance: T, v: T) -> Result<T, ModelError> {
        check_resistance(resistance)?;
        Ok(self.rate_exact_unchecked(resistance, v))
    }

    pub(crate) fn rate_exact_unchecked(&self, resistance: T, v: T) -> T {
        if v == T::zero() {
            return T::zero();
        }
        if v > T::zero() {
            let r = self.a0 + self.a1 * v;
            if resistance < r {
                let gap = r - resistance;
                self.switching_sensitivity(v) * gap * gap
            } else {
                T::zero()
            }
        } else {
            let r = self.b0 + self.b1 * v;
            if resistance > r {
                let gap = resistance - r;
                self.switching_sensitivity(v) * gap * gap
            } else {
                T::zero()
            }
        }
    }

    /// Smooth switching rate: both branch terms summed and every step
    /// replaced by a sigmoid. The sensitivity exponentials go through
    /// [`limexp`]; the gate sigmoids saturate through the IEEE exponential,
    /// whose overflow collapses a far tail to an exact zero — that is the
    /// true limit value and it keeps the boundary rate exactly zero.
    pub fn switching_rate_smooth(
        &self,
        sm: &SmoothingParams<T>,
        resistance: T,
        v: T,
    ) -> Result<T, ModelError> {
        check_resistance(resistance)?;
        Ok(self.rate_smooth_unchecked(sm, resistance, v))
    }

    pub(crate) fn rate_smooth_unchecked(&self, sm: &SmoothingParams<T>, resistance: T, v: T) -> T {
        let knee = sm.limexp_threshold;
        // 250 slopes below a corner the sigmoid is under 1e-108; returning an
        // exact zero there keeps boundary rates exactly zero without touching
        // anything a double can resolve
        let sigmoid = |x: T, slope: T| {
            let z = x / slope;
            if z < real(-250.0) {
                T::zero()
            } else {
                T::one() / (T::one() + (-z).exp())
            }
        };

        let s_p = if v == T::zero() {
            T::zero()
        } else {
            self.a_p * (limexp(v.abs() / self.t_p, knee) - T::one())
        };
        let s_n = if v == T::zero() {
            T::zero()
        } else {
            self.a_n * (limexp(v.abs() / self.t_n, knee) - T::one())
        };

        let gap_p = (self.a0 + self.a1 * v) - resistance;
        let gap_n = resistance - (self.b0 + self.b1 * v);

        s_p * gap_p * gap_p * sigmoid(gap_p, sm.b_r) * sigmoid(v, sm.b_v)
            + s_n * gap_n * gap_n * sigmoid(gap_n, sm.b_r) * sigmoid(-v, sm.b_v)
    }

    /// Closed-form constant-voltage response of the exact model.
    ///
    /// Integrating `dR/dt = s * (r - R)^2` (positive branch, R below r) or
    /// `dR/dt = s * (R - r)^2` (negative branch, R above r) gives a
    /// hyperbolic approach that saturates at the boundary and never crosses
    /// it. States on the closed side of a gate do not move.
    ///
    /// With an anti-saturating amplitude sign (a branch driving the state
    /// away from its own boundary) the trajectory genuinely diverges in
    /// finite time; reaching that point within `dt` is an error rather than
    /// a state.
    pub fn pulse_response(&self, r0: T, v: T, dt: T) -> Result<T, ModelError> {
        check_resistance(r0)?;
        if dt < T::zero() || !dt.is_finite() {
            return Err(ModelError::NegativeDuration(
                dt.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if dt == T::zero() || v == T::zero() {
            return Ok(r0);
        }
        let s = self.switching_sensitivity(v);
        if s == T::zero() {
            return Ok(r0);
        }
        if v > T::zero() {
            let r = self.a0 + self.a1 * v;
            if r0 >= r {
                return Ok(r0);
            }
            let gap = r - r0;
            let denom = T::one() / gap + s * dt;
            if denom <= T::zero() {
                return Err(ModelError::InvalidParameter(format!(
                    "trajectory diverges within {dt} s at v = {v} (anti-saturating sensitivity sign)"
                )));
            }
            Ok(r - T::one() / denom)
        } else {
            let r = self.b0 + self.b1 * v;
            if r0 <= r {
                return Ok(r0);
            }
            let gap = r0 - r;
            let denom = T::one() / gap - s * dt;
            if denom <= T::zero() {
                return Err(ModelError::InvalidParameter(format!(
                    "trajectory diverges within {dt} s at v = {v} (anti-saturating sensitivity sign)"
                )));
            }
            Ok(r + T::one() / denom)
        }
    }

    /// True when `v` is outside the validated stationarity range.
    pub fn outside_stationary_range(v: T) -> bool {
        v.abs() > real(STATIONARITY_LIMIT_V)
    }
}

fn check_resistance<T: Real>(r: T) -> Result<(), ModelError> {
    if r > T::zero() && r.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonpositiveResistance(
            r.to_f64().unwrap_or(f64::NAN),
        ))
    }
}
