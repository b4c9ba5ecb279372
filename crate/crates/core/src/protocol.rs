//! Characterization protocols.
//!
//! Two pulse-train routines probe the switching-rate surface along its two
//! axes. The operating-state sweeper holds the amplitude fixed for a long
//! train and lets the state run, revealing rate-vs-resistance. The biasing
//! optimizer ramps the amplitude in alternating-polarity trains while a
//! tolerance band around a target state bounds the excursion, revealing
//! rate-vs-voltage near that state. Both emit the same measurement-log
//! shape, so imported instrument data analyzes identically.

use crate::error::ProtocolError;
use crate::scalar::{real, Real};
use crate::sim::{IntegrationMethod, PulseSegment, VirtualDevice};

/// Operating-state sweeper configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweeperConfig<T> {
    /// Pulses per train.
    pub pulses_per_train: usize,
    /// Pulse width (s).
    pub pulse_width: T,
    /// First amplitude magnitude (V).
    pub v_start: T,
    /// Amplitude increment every two trains (V).
    pub v_step: T,
    /// Final amplitude magnitude (V).
    pub v_stop: T,
}

impl<T: Real> Default for SweeperConfig<T> {
    fn default() -> Self {
        SweeperConfig {
            pulses_per_train: 500,
            pulse_width: real(100e-6),
            v_start: real(0.6),
            v_step: real(0.1),
            v_stop: real(0.8),
        }
    }
}

impl<T: Real> SweeperConfig<T> {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.pulses_per_train < 1 {
            return Err(ProtocolError::InvalidConfig(
                "pulses_per_train must be >= 1".into(),
            ));
        }
        if !(self.pulse_width > T::zero()) {
            return Err(ProtocolError::InvalidConfig(
                "pulse_width must be > 0".into(),
            ));
        }
        if !(self.v_start > T::zero()) || self.v_start > self.v_stop {
            return Err(ProtocolError::InvalidConfig(
                "need 0 < v_start <= v_stop".into(),
            ));
        }
        if !(self.v_step > T::zero()) {
            return Err(ProtocolError::InvalidConfig("v_step must be > 0".into()));
        }
        Ok(())
    }

    /// Train amplitudes: polarity alternates each train, the magnitude grows
    /// by `v_step` every two trains, and the run ends after the negative
    /// train at `v_stop`.
    pub fn amplitudes(&self) -> Vec<T> {
        let mut out = Vec::new();
        let tol = self.v_step * real(1e-9);
        let mut level = 0usize;
        loop {
            let magnitude = self.v_start + real::<T>(level as f64) * self.v_step;
            if magnitude > self.v_stop + tol {
                break;
            }
            out.push(magnitude);
            out.push(-magnitude);
            level += 1;
        }
        out
    }
}

/// Biasing-optimizer configuration. `target` is the resistive state the
/// device is held around; it has no default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig<T> {
    /// Pulses per train.
    pub pulses_per_train: usize,
    /// Pulse width (s).
    pub pulse_width: T,
    /// Tolerance band half width as a fraction of `target`.
    pub eps_opt: T,
    /// Target resistive state (ohm).
    pub target: T,
    /// First train amplitude of each polarity ramp (V).
    pub ramp_v_start: T,
    /// Per-train amplitude increment (V).
    pub ramp_v_step: T,
    /// Amplitude cap (V).
    pub ramp_v_max: T,
    /// Run budget in trains.
    pub max_trains: usize,
    /// Flip on either band edge instead of only the driven side.
    pub two_sided: bool,
}

impl<T: Real> OptimizerConfig<T> {
    pub fn new(target: T) -> Self {
        OptimizerConfig {
            pulses_per_train: 10,
            pulse_width: real(100e-6),
            eps_opt: real(0.10),
            target,
            ramp_v_start: real(0.1),
            ramp_v_step: real(0.02),
            ramp_v_max: real(0.9),
            max_trains: 2000,
            two_sided: false,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.pulses_per_train < 1 {
            return Err(ProtocolError::InvalidConfig(
                "pulses_per_train must be >= 1".into(),
            ));
        }
        if !(self.pulse_width > T::zero()) {
            return Err(ProtocolError::InvalidConfig(
                "pulse_width must be > 0".into(),
            ));
        }
        if !(self.eps_opt > T::zero() && self.eps_opt < T::one()) {
            return Err(ProtocolError::InvalidConfig("need 0 < eps_opt < 1".into()));
        }
        if !(self.target > T::zero()) {
            return Err(ProtocolError::InvalidConfig("target must be > 0".into()));
        }
        if !(self.ramp_v_start > T::zero()) || self.ramp_v_start > self.ramp_v_max {
            return Err(ProtocolError::InvalidConfig(
                "need 0 < ramp_v_start <= ramp_v_max".into(),
            ));
        }
        if !(self.ramp_v_step > T::zero()) {
            return Err(ProtocolError::InvalidConfig(
                "ramp_v_step must be > 0".into(),
            ));
        }
        if self.max_trains < 1 {
            return Err(ProtocolError::InvalidConfig(
                "max_trains must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Tolerance band `[target*(1-eps), target*(1+eps)]`.
    pub fn band(&self) -> (T, T) {
        (
            self.target * (T::one() - self.eps_opt),
            self.target * (T::one() + self.eps_opt),
        )
    }
}

/// Record phase: a programming pulse or a read-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Write,
    Read,
}

/// One acquired record. Write records carry the pulse index within the
/// train and no resistance; read records carry a resistance and no pulse
/// index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord<T> {
    pub train: usize,
    pub pulse: Option<usize>,
    pub phase: Phase,
    pub voltage: T,
    pub width: T,
    pub resistance: Option<T>,
}

/// Which protocol produced a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Sweeper,
    Optimizer,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Sweeper => "sweeper",
            ProtocolKind::Optimizer => "optimizer",
        }
    }
}

/// Snapshot of the configuration a log was produced with. Imported logs
/// have none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolConfig<T> {
    Sweeper(SweeperConfig<T>),
    Optimizer(OptimizerConfig<T>),
}

/// Ordered write/read records with the protocol tag and, for logs produced
/// here, the configuration snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLog<T> {
    pub kind: ProtocolKind,
    pub config: Option<ProtocolConfig<T>>,
    pub records: Vec<MeasurementRecord<T>>,
}

/// Runaway guard bounds for the optimizer (ohm).
const RUNAWAY_LO: f64 = 1e2;
const RUNAWAY_HI: f64 = 1e7;

/// Runs the operating-state sweeper: within each train every write pulse is
/// followed by one read.
pub fn run_sweeper<T: Real>(
    device: &mut VirtualDevice<T>,
    cfg: &SweeperConfig<T>,
) -> Result<MeasurementLog<T>, ProtocolError> {
    cfg.validate()?;
    let v_read = device.params().v_read;
    let mut records = Vec::new();
    for (train, amplitude) in cfg.amplitudes().into_iter().enumerate() {
        for pulse in 0..cfg.pulses_per_train {
            device.apply_segment(
                PulseSegment {
                    amplitude,
                    width: cfg.pulse_width,
                },
                IntegrationMethod::ClosedForm,
            )?;
            records.push(MeasurementRecord {
                train,
                pulse: Some(pulse),
                phase: Phase::Write,
                voltage: amplitude,
                width: cfg.pulse_width,
                resistance: None,
            });
            records.push(MeasurementRecord {
                train,
                pulse: None,
                phase: Phase::Read,
                voltage: v_read,
                width: T::zero(),
                resistance: Some(device.read_resistance()),
            });
        }
    }
    Ok(MeasurementLog {
        kind: ProtocolKind::Sweeper,
        config: Some(ProtocolConfig::Sweeper(*cfg)),
        records,
    })
}

/// Runs the biasing optimizer: trains of `pulses_per_train` pulses followed
/// by one read, flipping polarity when the read exits the band on the side
/// the current polarity pushes toward (or either side with `two_sided`),
/// and restarting the ramp at `ramp_v_start` after each flip.
///
/// The log opens with one read taken before any train so every train has a
/// pre-train state on record.
pub fn run_optimizer<T: Real>(
    device: &mut VirtualDevice<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<MeasurementLog<T>, ProtocolError> {
    cfg.validate()?;
    let v_read = device.params().v_read;
    let (band_lo, band_hi) = cfg.band();
    let cap_tol = cfg.ramp_v_step * real(1e-9);

    let mut records = Vec::new();
    records.push(MeasurementRecord {
        train: 0,
        pulse: None,
        phase: Phase::Read,
        voltage: v_read,
        width: T::zero(),
        resistance: Some(device.read_resistance()),
    });

    let mut positive = true;
    let mut amplitude = cfg.ramp_v_start;
    // completed a full ramp to the cap since this polarity was last entered
    let mut ramp_done = [false, false];

    for train in 0..cfg.max_trains {
        let v = if positive { amplitude } else { -amplitude };
        for pulse in 0..cfg.pulses_per_train {
            device.apply_segment(
                PulseSegment {
                    amplitude: v,
                    width: cfg.pulse_width,
                },
                IntegrationMethod::ClosedForm,
            )?;
            records.push(MeasurementRecord {
                train,
                pulse: Some(pulse),
                phase: Phase::Write,
                voltage: v,
                width: cfg.pulse_width,
                resistance: None,
            });
        }
        let read = device.read_resistance();
        records.push(MeasurementRecord {
            train,
            pulse: None,
            phase: Phase::Read,
            voltage: v_read,
            width: T::zero(),
            resistance: Some(read),
        });

        let state = device.resistance().to_f64().unwrap_or(f64::NAN);
        if !(RUNAWAY_LO..=RUNAWAY_HI).contains(&state) {
            return Err(ProtocolError::RunawayDevice(state));
        }

        if amplitude >= cfg.ramp_v_max - cap_tol {
            ramp_done[positive as usize] = true;
        }

        let exited = if cfg.two_sided {
            read < band_lo || read > band_hi
        } else if positive {
            read > band_hi
        } else {
            read < band_lo
        };

        if exited {
            positive = !positive;
            amplitude = cfg.ramp_v_start;
            ramp_done[positive as usize] = false;
        } else {
            amplitude = (amplitude + cfg.ramp_v_step).min(cfg.ramp_v_max);
        }

        if ramp_done[0] && ramp_done[1] {
            break;
        }
    }

    Ok(MeasurementLog {
        kind: ProtocolKind::Optimizer,
        config: Some(ProtocolConfig::Optimizer(*cfg)),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, SmoothingParams};

    fn device(r0: f64) -> VirtualDevice<f64> {
        VirtualDevice::new(ModelParams::preset(), SmoothingParams::default(), r0).unwrap()
    }

    #[test]
    fn sweeper_default_schedule() {
        let cfg = SweeperConfig::<f64>::default();
        let amps = cfg.amplitudes();
        let expected = [0.6, -0.6, 0.7, -0.7, 0.8, -0.8];
        assert_eq!(amps.len(), expected.len());
        for (a, e) in amps.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn sweeper_schedule_off_grid_stop() {
        let cfg = SweeperConfig {
            v_stop: 0.85,
            ..SweeperConfig::<f64>::default()
        };
        assert_eq!(cfg.amplitudes().len(), 6); // 0.9 exceeds 0.85
    }

    #[test]
    fn sweeper_log_shape_and_final_state() {
        let mut d = device(13_650.0);
        let log = run_sweeper(&mut d, &SweeperConfig::default()).unwrap();
        let writes = log
            .records
            .iter()
            .filter(|r| r.phase == Phase::Write)
            .count();
        let reads = log
            .records
            .iter()
            .filter(|r| r.phase == Phase::Read)
            .count();
        assert_eq!(writes, 3000);
        assert_eq!(reads, 3000);
        // final read of train 0 is the closed-form 50 ms response at +0.6 V
        let train0_last = log
            .records
            .iter()
            .filter(|r| r.train == 0 && r.phase == Phase::Read)
            .next_back()
            .unwrap()
            .resistance
            .unwrap();
        assert!(((train0_last - 15_677.652570829217) / 15_677.65).abs() < 1e-12);
    }

    #[test]
    fn sweeper_trains_are_monotone_and_bounded_by_threshold() {
        let mut d = device(13_650.0);
        let log = run_sweeper(&mut d, &SweeperConfig::default()).unwrap();
        let params: ModelParams<f64> = ModelParams::preset();
        for train in 0..6 {
            let reads: Vec<f64> = log
                .records
                .iter()
                .filter(|r| r.train == train && r.phase == Phase::Read)
                .map(|r| r.resistance.unwrap())
                .collect();
            let amp = log
                .records
                .iter()
                .find(|r| r.train == train && r.phase == Phase::Write)
                .unwrap()
                .voltage;
            let boundary = params.threshold_resistance(amp);
            for w in reads.windows(2) {
                if amp > 0.0 {
                    assert!(w[1] >= w[0]);
                    assert!(w[1] <= boundary);
                } else {
                    assert!(w[1] <= w[0]);
                    assert!(w[1] >= boundary);
                }
            }
        }
    }

    #[test]
    fn optimizer_band_and_flip_rules() {
        let mut d = device(13_650.0);
        let cfg = OptimizerConfig::<f64>::new(13_650.0);
        let (lo, hi) = cfg.band();
        assert!((lo - 12_285.0).abs() < 1e-9);
        assert!((hi - 15_015.0).abs() < 1e-9);
        let log = run_optimizer(&mut d, &cfg).unwrap();

        // group per-train write voltage and the per-train read
        let mut trains: Vec<(f64, f64)> = Vec::new();
        let mut current: Option<(usize, f64)> = None;
        for r in &log.records {
            match r.phase {
                Phase::Write => current = Some((r.train, r.voltage)),
                Phase::Read => {
                    if let Some((train, v)) = current.take() {
                        assert_eq!(train, r.train);
                        trains.push((v, r.resistance.unwrap()));
                    }
                }
            }
        }
        assert_eq!(trains.len(), cfg.max_trains);

        let mut largest_excursion: f64 = 0.0;
        let mut prev_read = log.records[0].resistance.unwrap();
        for (_, read) in &trains {
            largest_excursion = largest_excursion.max((read - prev_read).abs());
            prev_read = *read;
        }
        for (k, (v, read)) in trains.iter().enumerate() {
            // every driven-side out-of-band read is followed by a flip
            let exited = if *v > 0.0 { *read > hi } else { *read < lo };
            if k + 1 < trains.len() {
                let next_v = trains[k + 1].0;
                if exited {
                    assert!(next_v * v < 0.0, "train {k}: expected flip after exit");
                    assert!((next_v.abs() - cfg.ramp_v_start).abs() < 1e-12);
                } else {
                    assert!(next_v * v > 0.0, "train {k}: unexpected flip");
                    let expect = (v.abs() + cfg.ramp_v_step).min(cfg.ramp_v_max);
                    assert!((next_v.abs() - expect).abs() < 1e-12);
                }
            }
            // containment within the band inflated by the largest excursion
            assert!(*read >= lo - largest_excursion - 1e-9);
            assert!(*read <= hi + largest_excursion + 1e-9);
        }
    }

    #[test]
    fn optimizer_log_starts_with_pre_read() {
        let mut d = device(13_650.0);
        let log = run_optimizer(&mut d, &OptimizerConfig::new(13_650.0)).unwrap();
        assert_eq!(log.records[0].phase, Phase::Read);
        assert_eq!(log.records[0].resistance, Some(13_650.0));
        // per-train stimulation time is N * t_w = 1 ms
        let cfg = match log.config.unwrap() {
            ProtocolConfig::Optimizer(c) => c,
            _ => panic!(),
        };
        assert!((cfg.pulses_per_train as f64 * cfg.pulse_width - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn identical_seeds_reproduce_logs_bit_exactly() {
        let cfg = OptimizerConfig::new(13_650.0);
        let make = || {
            let mut d = device(13_650.0).with_read_noise(0.01, 77).unwrap();
            run_optimizer(&mut d, &cfg).unwrap()
        };
        assert_eq!(make(), make());

        let scfg = SweeperConfig::default();
        let make = || {
            let mut d = device(13_650.0).with_read_noise(0.01, 78).unwrap();
            run_sweeper(&mut d, &scfg).unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn runaway_device_is_reported() {
        // a device whose upper boundary sits beyond the guard: one strong
        // positive train carries the state past 1e7 ohm
        let params = ModelParams {
            a0: 2e7,
            a1: 0.0,
            ..ModelParams::<f64>::preset()
        };
        let mut d = VirtualDevice::new(params, SmoothingParams::default(), 13_650.0).unwrap();
        let mut cfg = OptimizerConfig::new(13_650.0);
        cfg.ramp_v_start = 0.9;
        let err = run_optimizer(&mut d, &cfg).unwrap_err();
        assert!(matches!(err, ProtocolError::RunawayDevice(_)));
    }

    #[test]
    fn two_sided_band_exit_flips_on_either_side() {
        // start below the band: with the one-sided rule a positive ramp keeps
        // pushing toward the band, with the two-sided rule it flips at once
        let mk = |two_sided: bool| {
            let mut cfg = OptimizerConfig::new(13_650.0);
            cfg.max_trains = 3;
            cfg.two_sided = two_sided;
            let mut d = device(12_000.0);
            run_optimizer(&mut d, &cfg).unwrap()
        };
        // first write of trains 0 and 1 (10 pulses per train)
        let first_two_writes = |log: &MeasurementLog<f64>| -> (f64, f64) {
            let w: Vec<f64> = log
                .records
                .iter()
                .filter(|r| r.phase == Phase::Write)
                .map(|r| r.voltage)
                .collect();
            (w[0], w[10])
        };
        let (a0, a1) = first_two_writes(&mk(false));
        assert!(
            a0 > 0.0 && a1 > 0.0,
            "one-sided keeps driving toward the band"
        );
        let (b0, b1) = first_two_writes(&mk(true));
        assert!(b0 > 0.0 && b1 < 0.0, "two-sided flips on the opposite edge");
    }

    #[test]
    fn config_validation() {
        assert!(SweeperConfig {
            v_step: 0.0,
            ..SweeperConfig::<f64>::default()
        }
        .validate()
        .is_err());
        assert!(SweeperConfig {
            v_start: -0.1,
            ..SweeperConfig::<f64>::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            eps_opt: 1.5,
            ..OptimizerConfig::new(13_650.0)
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig::<f64>::new(0.0).validate().is_err());
    }
}
