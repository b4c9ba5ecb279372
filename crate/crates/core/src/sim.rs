//! Virtual device under test.
//!
//! A [`VirtualDevice`] owns a model instance and the current resistive
//! state, evolves under piecewise-constant voltage waveforms, and supports
//! the standardized read-out. Reads never perturb the state; they only
//! consume randomness when read noise is configured.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, SimError};
use crate::model::{ModelParams, SmoothingParams};
use crate::ode::{integrate_autonomous, OdeOptions};
use crate::scalar::Real;

/// One constant-voltage pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSegment<T> {
    /// Applied voltage (V).
    pub amplitude: T,
    /// Duration (s), nonnegative.
    pub width: T,
}

impl<T: Real> PulseSegment<T> {
    pub fn new(amplitude: T, width: T) -> Result<Self, SimError> {
        if !width.is_finite() || width < T::zero() {
            return Err(SimError::InvalidSegment(format!(
                "width must be >= 0 (got {width})"
            )));
        }
        if !amplitude.is_finite() {
            return Err(SimError::InvalidSegment("amplitude must be finite".into()));
        }
        Ok(PulseSegment { amplitude, width })
    }
}

/// Ordered sequence of pulse segments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Waveform<T> {
    pub segments: Vec<PulseSegment<T>>,
}

impl<T: Real> Waveform<T> {
    pub fn new(segments: Vec<PulseSegment<T>>) -> Self {
        Waveform { segments }
    }

    pub fn total_duration(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.width)
    }
}

/// How a segment advances the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMethod {
    /// Closed-form solution of the exact piecewise model.
    ClosedForm,
    /// Adaptive Runge-Kutta integration of the smoothed model.
    Numeric,
}

/// One sample of a simulation trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint<T> {
    pub time: T,
    pub voltage: T,
    pub resistance: T,
}

/// A stateful device-under-test: model parameters plus the current
/// resistive state and an optional multiplicative read-noise level.
#[derive(Debug, Clone)]
pub struct VirtualDevice<T> {
    params: ModelParams<T>,
    smoothing: SmoothingParams<T>,
    resistance: T,
    read_noise_sigma: T,
    rng: ChaCha8Rng,
}

impl<T: Real> VirtualDevice<T> {
    /// Creates a noiseless device at initial state `r0`.
    pub fn new(
        params: ModelParams<T>,
        smoothing: SmoothingParams<T>,
        r0: T,
    ) -> Result<Self, ModelError> {
        if !(r0 > T::zero()) || !r0.is_finite() {
            return Err(ModelError::NonpositiveResistance(
                r0.to_f64().unwrap_or(f64::NAN),
            ));
        }
        smoothing.validate()?;
        Ok(VirtualDevice {
            params,
            smoothing,
            resistance: r0,
            read_noise_sigma: T::zero(),
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    /// Enables relative multiplicative Gaussian read noise. The generator is
    /// ChaCha8 seeded from `seed`; identical seeds reproduce identical read
    /// sequences bit-exactly.
    pub fn with_read_noise(mut self, sigma: T, seed: u64) -> Result<Self, ModelError> {
        if sigma < T::zero() || !sigma.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "read noise sigma must be >= 0 (got {sigma})"
            )));
        }
        self.read_noise_sigma = sigma;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self)
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn smoothing(&self) -> &SmoothingParams<T> {
        &self.smoothing
    }

    /// Current true resistive state (no read noise).
    pub fn resistance(&self) -> T {
        self.resistance
    }

    /// Applies one constant-voltage segment.
    pub fn apply_segment(
        &mut self,
        seg: PulseSegment<T>,
        method: IntegrationMethod,
    ) -> Result<(), SimError> {
        if !seg.width.is_finite() || seg.width < T::zero() {
            return Err(SimError::InvalidSegment(format!(
                "width must be >= 0 (got {})",
                seg.width
            )));
        }
        if ModelParams::<T>::outside_stationary_range(seg.amplitude) {
            log::warn!(
                "segment amplitude {} V is outside the validated stationary range (|v| <= 1 V)",
                seg.amplitude
            );
        }
        let next = match method {
            IntegrationMethod::ClosedForm => {
                self.params
                    .pulse_response(self.resistance, seg.amplitude, seg.width)?
            }
            IntegrationMethod::Numeric => {
                let opts = OdeOptions::default();
                let params = self.params;
                let sm = self.smoothing;
                integrate_autonomous(
                    |r| params.rate_smooth_unchecked(&sm, r, seg.amplitude),
                    self.resistance,
                    seg.width,
                    &opts,
                )
                .map_err(|e| SimError::StiffSegment(e.max_steps))?
            }
        };
        self.resistance = next;
        Ok(())
    }

    /// Standardized read-out: returns `R * (1 + eta)` with `eta` zero-mean
    /// Gaussian of the configured sigma. Advances only the RNG, never the
    /// state. Reads are modeled as non-perturbing.
    pub fn read_resistance(&mut self) -> T {
        let eta = self.read_noise_sigma * T::standard_normal(&mut self.rng);
        self.resistance * (T::one() + eta)
    }

    /// Instantaneous ohmic terminal current at bias `v`.
    pub fn device_current(&self, v: T) -> T {
        v / self.resistance
    }

    /// Applies all segments in order, returning one trace point per segment
    /// boundary plus the initial point. Zero-width segments coalesce with
    /// the previous boundary so trace times stay strictly increasing.
    pub fn run_waveform(
        &mut self,
        waveform: &Waveform<T>,
        method: IntegrationMethod,
    ) -> Result<Vec<TracePoint<T>>, SimError> {
        let mut trace = Vec::with_capacity(waveform.segments.len() + 1);
        trace.push(TracePoint {
            time: T::zero(),
            voltage: T::zero(),
            resistance: self.resistance,
        });
        let mut t = T::zero();
        for seg in &waveform.segments {
            self.apply_segment(*seg, method)?;
            t = t + seg.width;
            let point = TracePoint {
                time: t,
                voltage: seg.amplitude,
                resistance: self.resistance,
            };
            match trace.last() {
                Some(last) if last.time == t => *trace.last_mut().unwrap() = point,
                _ => trace.push(point),
            }
        }
        Ok(trace)
    }
}
