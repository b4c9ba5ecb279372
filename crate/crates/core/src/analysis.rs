//! Measurement-log analysis: optimizer refinement and rate conversion,
//! sweeper time-series construction, and the smoothing time derivative.

use crate::error::AnalysisError;
use crate::model::Polarity;
use crate::protocol::{MeasurementLog, Phase, ProtocolKind};
use crate::scalar::{real, Real};

/// Candidate-band half width for optimizer refinement, as a fraction of the
/// band center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig<T> {
    pub eps_ref: T,
}

impl<T: Real> Default for RefinementConfig<T> {
    fn default() -> Self {
        RefinementConfig {
            eps_ref: real(0.05),
        }
    }
}

impl<T: Real> RefinementConfig<T> {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.eps_ref > T::zero() && self.eps_ref < T::one() {
            Ok(())
        } else {
            Err(AnalysisError::InsufficientData(
                "eps_ref must lie in (0, 1)".into(),
            ))
        }
    }
}

/// A switching-rate sample: dR/dt at a state and stimulus voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint<T> {
    pub resistance: T,
    pub voltage: T,
    pub rate: T,
}

/// Result of optimizer refinement for one polarity: the most data-populated
/// band and its rate points (attributed to the pre-train state).
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSet<T> {
    pub polarity: Polarity,
    /// Winning band center (the most populated candidate).
    pub band_center: T,
    /// Mean pre-train state of the band members; a low-noise stand-in for
    /// the band center when a single reference state is needed.
    pub reference: T,
    pub points: Vec<RatePoint<T>>,
}

/// One optimizer train reduced to its switching datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainDatum<T> {
    pub train: usize,
    pub voltage: T,
    pub r_pre: T,
    pub r_post: T,
    /// Total programming time of the train (s).
    pub duration: T,
}

impl<T: Real> TrainDatum<T> {
    pub fn delta_r(&self) -> T {
        self.r_post - self.r_pre
    }

    pub fn polarity(&self) -> Polarity {
        Polarity::of_voltage(self.voltage)
    }
}

/// Per-train read series from a sweeper log: `(t, R)` samples measured from
/// the train start, annotated with the train amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSeries<T> {
    pub train: usize,
    pub amplitude: T,
    pub samples: Vec<(T, T)>,
}

/// Converts per-train switching data into rate points: `rate = dR / (N*t_w)`
/// with the rate attributed to the pre-train state.
pub fn optimizer_rates<T: Real>(
    data: &[(T, T, T)], // (r_pre, voltage, delta_r)
    pulses_per_train: usize,
    pulse_width: T,
) -> Vec<RatePoint<T>> {
    let window = real::<T>(pulses_per_train as f64) * pulse_width;
    data.iter()
        .map(|&(r_pre, voltage, delta_r)| RatePoint {
            resistance: r_pre,
            voltage,
            rate: delta_r / window,
        })
        .collect()
}

/// Reduces an optimizer log to per-train data. Requires a read before each
/// train; the leading read our optimizer writes provides it for train 0.
/// Imported logs without one simply contribute no datum for their first
/// train.
pub fn optimizer_train_data<T: Real>(
    log: &MeasurementLog<T>,
) -> Result<Vec<TrainDatum<T>>, AnalysisError> {
    if log.kind != ProtocolKind::Optimizer {
        return Err(AnalysisError::WrongProtocol {
            expected: "optimizer",
            got: log.kind.name(),
        });
    }
    let mut out = Vec::new();
    let mut last_read: Option<T> = None;
    let mut i = 0;
    while i < log.records.len() {
        let rec = &log.records[i];
        match rec.phase {
            Phase::Read => {
                let r = rec.resistance.ok_or_else(|| {
                    AnalysisError::LogIntegrity("read record without resistance".into())
                })?;
                if !(r > T::zero()) {
                    return Err(AnalysisError::LogIntegrity(
                        "read record with nonpositive resistance".into(),
                    ));
                }
                last_read = Some(r);
                i += 1;
            }
            Phase::Write => {
                let train = rec.train;
                let voltage = rec.voltage;
                let mut duration = T::zero();
                while i < log.records.len()
                    && log.records[i].phase == Phase::Write
                    && log.records[i].train == train
                {
                    if (log.records[i].voltage - voltage).abs()
                        > voltage.abs() * real(1e-12) + real(1e-12)
                    {
                        return Err(AnalysisError::LogIntegrity(format!(
                            "train {train} mixes write amplitudes"
                        )));
                    }
                    duration = duration + log.records[i].width;
                    i += 1;
                }
                let read = match log.records.get(i) {
                    Some(r) if r.phase == Phase::Read => r,
                    _ => {
                        return Err(AnalysisError::LogIntegrity(format!(
                            "train {train} has no trailing read"
                        )))
                    }
                };
                let r_post = read.resistance.ok_or_else(|| {
                    AnalysisError::LogIntegrity("read record without resistance".into())
                })?;
                i += 1;
                if !(duration > T::zero()) {
                    return Err(AnalysisError::LogIntegrity(format!(
                        "train {train} has zero programming time"
                    )));
                }
                if let Some(r_pre) = last_read {
                    out.push(TrainDatum {
                        train,
                        voltage,
                        r_pre,
                        r_post,
                        duration,
                    });
                }
                last_read = Some(r_post);
            }
        }
    }
    if out.is_empty() {
        return Err(AnalysisError::InsufficientData(
            "optimizer log contains no trains".into(),
        ));
    }
    Ok(out)
}

/// Picks the band center maximizing the number of data whose pre-train
/// state lies in `[c*(1-eps), c*(1+eps)]`, scanning all observed pre-train
/// states as candidates. Ties break toward the candidate nearest the median
/// pre-train state, then toward the smallest candidate.
pub fn refine_band_center<T: Real>(r_pre: &[T], eps: T) -> Option<T> {
    if r_pre.is_empty() {
        return None;
    }
    let mut sorted: Vec<T> = r_pre.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / real(2.0)
    };

    let mut best: Option<(usize, T, T)> = None; // (count, |c - median|, c)
    let mut idx = 0;
    while idx < n {
        let c = sorted[idx];
        // skip duplicate candidates
        while idx + 1 < n && sorted[idx + 1] == c {
            idx += 1;
        }
        idx += 1;
        let lo = c * (T::one() - eps);
        let hi = c * (T::one() + eps);
        let count = sorted.iter().filter(|&&r| r >= lo && r <= hi).count();
        let dist = (c - median).abs();
        let better = match &best {
            None => true,
            Some((bc, bd, bcand)) => {
                count > *bc || (count == *bc && (dist < *bd || (dist == *bd && c < *bcand)))
            }
        };
        if better {
            best = Some((count, dist, c));
        }
    }
    best.map(|(_, _, c)| c)
}

/// Refinement outcome for one polarity, keeping the full train data of the
/// band members for downstream stages.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedTrains<T> {
    pub polarity: Polarity,
    pub band_center: T,
    pub reference: T,
    pub members: Vec<TrainDatum<T>>,
}

/// Band refinement over per-train data for one polarity.
pub fn refine_trains<T: Real>(
    data: &[TrainDatum<T>],
    polarity: Polarity,
    eps: T,
) -> Result<RefinedTrains<T>, AnalysisError> {
    let subset: Vec<&TrainDatum<T>> = data.iter().filter(|d| d.polarity() == polarity).collect();
    if subset.is_empty() {
        return Err(AnalysisError::NoDataForPolarity(polarity.name()));
    }
    let pre: Vec<T> = subset.iter().map(|d| d.r_pre).collect();
    let center = refine_band_center(&pre, eps).unwrap();
    let lo = center * (T::one() - eps);
    let hi = center * (T::one() + eps);
    let members: Vec<TrainDatum<T>> = subset
        .into_iter()
        .filter(|d| d.r_pre >= lo && d.r_pre <= hi)
        .copied()
        .collect();
    let count = real::<T>(members.len() as f64);
    let reference = members.iter().fold(T::zero(), |acc, d| acc + d.r_pre) / count;
    Ok(RefinedTrains {
        polarity,
        band_center: center,
        reference,
        members,
    })
}

/// Runs refinement on an optimizer log for both polarities and converts the
/// winning-band data to rate points.
pub fn refine_optimizer_log<T: Real>(
    log: &MeasurementLog<T>,
    cfg: &RefinementConfig<T>,
) -> Result<(RefinedSet<T>, RefinedSet<T>), AnalysisError> {
    cfg.validate()?;
    let data = optimizer_train_data(log)?;
    let mut sets = Vec::with_capacity(2);
    for polarity in [Polarity::Positive, Polarity::Negative] {
        let refined = refine_trains(&data, polarity, cfg.eps_ref)?;
        let points = refined
            .members
            .iter()
            .map(|d| RatePoint {
                resistance: d.r_pre,
                voltage: d.voltage,
                rate: d.delta_r() / d.duration,
            })
            .collect();
        sets.push(RefinedSet {
            polarity,
            band_center: refined.band_center,
            reference: refined.reference,
            points,
        });
    }
    let negative = sets.pop().unwrap();
    let positive = sets.pop().unwrap();
    Ok((positive, negative))
}

/// Converts a sweeper log into per-train `(t, R)` series: the read after
/// write pulse `k` is placed at the cumulative programming time through
/// that pulse (`(k+1)*t_w` for uniform widths).
pub fn sweeper_timeseries<T: Real>(
    log: &MeasurementLog<T>,
) -> Result<Vec<TrainSeries<T>>, AnalysisError> {
    if log.kind != ProtocolKind::Sweeper {
        return Err(AnalysisError::WrongProtocol {
            expected: "sweeper",
            got: log.kind.name(),
        });
    }
    let mut series: Vec<TrainSeries<T>> = Vec::new();
    let mut i = 0;
    while i < log.records.len() {
        let w = &log.records[i];
        if w.phase != Phase::Write {
            return Err(AnalysisError::LogIntegrity(format!(
                "record {i}: expected a write, found a read"
            )));
        }
        let r = match log.records.get(i + 1) {
            Some(r) if r.phase == Phase::Read => r,
            _ => {
                return Err(AnalysisError::LogIntegrity(format!(
                    "record {i}: write pulse without a following read"
                )))
            }
        };
        let resistance = r
            .resistance
            .ok_or_else(|| AnalysisError::LogIntegrity("read record without resistance".into()))?;
        if series.last().map(|s| s.train) != Some(w.train) {
            if series.iter().any(|s| s.train == w.train) {
                return Err(AnalysisError::LogIntegrity(format!(
                    "train {} is not contiguous",
                    w.train
                )));
            }
            series.push(TrainSeries {
                train: w.train,
                amplitude: w.voltage,
                samples: Vec::new(),
            });
        }
        let current = series.last_mut().unwrap();
        if (w.voltage - current.amplitude).abs()
            > current.amplitude.abs() * real(1e-12) + real(1e-12)
        {
            return Err(AnalysisError::LogIntegrity(format!(
                "train {} mixes write amplitudes",
                w.train
            )));
        }
        let t_prev = current.samples.last().map(|&(t, _)| t).unwrap_or(T::zero());
        current.samples.push((t_prev + w.width, resistance));
        i += 2;
    }
    if series.is_empty() {
        return Err(AnalysisError::InsufficientData(
            "sweeper log contains no trains".into(),
        ));
    }
    Ok(series)
}

/// Smoothing time derivative: at each interior sample the rate is the
/// least-squares slope over the centered window. Near the series ends the
/// window shrinks to the largest centered one that fits, never below five
/// samples; the first and last two samples therefore produce no point. The
/// resistance of each point is the window-center sample.
pub fn smoothing_derivative<T: Real>(
    samples: &[(T, T)],
    voltage: T,
    window: usize,
) -> Result<Vec<RatePoint<T>>, AnalysisError> {
    if window < 5 || window % 2 == 0 {
        return Err(AnalysisError::InvalidWindow(window));
    }
    let n = samples.len();
    if n < 5 {
        return Err(AnalysisError::InsufficientData(format!(
            "need at least 5 samples for the smoothing derivative (got {n})"
        )));
    }
    let half = (window - 1) / 2;
    let mut out = Vec::with_capacity(n - 4);
    for i in 2..n - 2 {
        let h = half.min(i).min(n - 1 - i);
        let lo = i - h;
        let hi = i + h;
        let count = real::<T>((2 * h + 1) as f64);
        let mut t_mean = T::zero();
        let mut r_mean = T::zero();
        for &(t, r) in &samples[lo..=hi] {
            t_mean = t_mean + t;
            r_mean = r_mean + r;
        }
        t_mean = t_mean / count;
        r_mean = r_mean / count;
        let mut num = T::zero();
        let mut den = T::zero();
        for &(t, r) in &samples[lo..=hi] {
            num = num + (t - t_mean) * (r - r_mean);
            den = den + (t - t_mean) * (t - t_mean);
        }
        if den == T::zero() {
            return Err(AnalysisError::LogIntegrity(
                "repeated sample times in series".into(),
            ));
        }
        out.push(RatePoint {
            resistance: samples[i].1,
            voltage,
            rate: num / den,
        });
    }
    Ok(out)
}
