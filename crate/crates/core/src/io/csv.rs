//! Fixed-schema CSV files: waveforms, traces, measurement logs, and rate
//! points. Hand-rolled on purpose; the schemas are tiny and exact control
//! of the rendering keeps runs byte-reproducible.

use std::path::Path;

use super::{fmt_float, parse_float, write_atomic};
use crate::analysis::RatePoint;
use crate::error::FileError;
use crate::protocol::{MeasurementLog, MeasurementRecord, Phase, ProtocolKind};
use crate::scalar::Real;
use crate::sim::{PulseSegment, TracePoint, Waveform};

const WAVEFORM_HEADER: &str = "amplitude_V,width_s";
const TRACE_HEADER: &str = "time_s,voltage_V,resistance_ohm";
const LOG_HEADER: &str = "train,pulse,phase,voltage_V,width_s,resistance_ohm";
const RATES_HEADER: &str = "resistance_ohm,voltage_V,rate_ohm_per_s";

fn check_header(path: &Path, line: Option<&str>, expected: &str) -> Result<(), FileError> {
    match line {
        Some(h) if h.trim() == expected => Ok(()),
        Some(h) => Err(FileError::schema(
            path,
            1,
            format!("expected header {expected:?}, got {h:?}"),
        )),
        None => Err(FileError::schema(
            path,
            1,
            format!("empty file; expected header {expected:?}"),
        )),
    }
}

fn fields<'a>(
    path: &Path,
    lineno: usize,
    line: &'a str,
    n: usize,
) -> Result<Vec<&'a str>, FileError> {
    let cols: Vec<&str> = line.split(',').collect();
    if cols.len() != n {
        return Err(FileError::schema(
            path,
            lineno,
            format!("expected {n} columns, got {}", cols.len()),
        ));
    }
    Ok(cols)
}

// ---------------------------------------------------------------- waveform

pub fn render_waveform<T: Real>(w: &Waveform<T>) -> String {
    let mut out = String::from(WAVEFORM_HEADER);
    out.push('\n');
    for seg in &w.segments {
        out.push_str(&fmt_float(seg.amplitude));
        out.push(',');
        out.push_str(&fmt_float(seg.width));
        out.push('\n');
    }
    out
}

pub fn write_waveform<T: Real>(path: &Path, w: &Waveform<T>) -> Result<(), FileError> {
    write_atomic(path, &render_waveform(w))
}

pub fn read_waveform<T: Real>(path: &Path) -> Result<Waveform<T>, FileError> {
    let text = std::fs::read_to_string(path)?;
    parse_waveform(path, &text)
}

pub fn parse_waveform<T: Real>(path: &Path, text: &str) -> Result<Waveform<T>, FileError> {
    let mut lines = text.lines();
    check_header(path, lines.next(), WAVEFORM_HEADER)?;
    let mut segments = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols = fields(path, lineno, line, 2)?;
        let amplitude = parse_float(path, lineno, cols[0])?;
        let width = parse_float(path, lineno, cols[1])?;
        let seg = PulseSegment::new(amplitude, width)
            .map_err(|e| FileError::schema(path, lineno, e.to_string()))?;
        segments.push(seg);
    }
    Ok(Waveform::new(segments))
}

// ------------------------------------------------------------------- trace

pub fn render_trace<T: Real>(trace: &[TracePoint<T>]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for p in trace {
        out.push_str(&fmt_float(p.time));
        out.push(',');
        out.push_str(&fmt_float(p.voltage));
        out.push(',');
        out.push_str(&fmt_float(p.resistance));
        out.push('\n');
    }
    out
}

pub fn write_trace<T: Real>(path: &Path, trace: &[TracePoint<T>]) -> Result<(), FileError> {
    write_atomic(path, &render_trace(trace))
}

pub fn read_trace<T: Real>(path: &Path) -> Result<Vec<TracePoint<T>>, FileError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    check_header(path, lines.next(), TRACE_HEADER)?;
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols = fields(path, lineno, line, 3)?;
        out.push(TracePoint {
            time: parse_float(path, lineno, cols[0])?,
            voltage: parse_float(path, lineno, cols[1])?,
            resistance: parse_float(path, lineno, cols[2])?,
        });
    }
    Ok(out)
}

// ----------------------------------------------------------- measurement log

pub fn render_log<T: Real>(log: &MeasurementLog<T>) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in &log.records {
        out.push_str(&r.train.to_string());
        out.push(',');
        if let Some(p) = r.pulse {
            out.push_str(&p.to_string());
        }
        out.push(',');
        out.push(match r.phase {
            Phase::Write => 'W',
            Phase::Read => 'R',
        });
        out.push(',');
        out.push_str(&fmt_float(r.voltage));
        out.push(',');
        out.push_str(&fmt_float(r.width));
        out.push(',');
        if let Some(res) = r.resistance {
            out.push_str(&fmt_float(res));
        }
        out.push('\n');
    }
    out
}

pub fn write_log<T: Real>(path: &Path, log: &MeasurementLog<T>) -> Result<(), FileError> {
    write_atomic(path, &render_log(log))
}

/// Reads a measurement log. The protocol tag is supplied by the caller
/// (`--mode` on the command line); instrument exports in this schema load
/// unchanged and carry no configuration snapshot.
pub fn read_log<T: Real>(path: &Path, kind: ProtocolKind) -> Result<MeasurementLog<T>, FileError> {
    let text = std::fs::read_to_string(path)?;
    parse_log(path, &text, kind)
}

pub fn parse_log<T: Real>(
    path: &Path,
    text: &str,
    kind: ProtocolKind,
) -> Result<MeasurementLog<T>, FileError> {
    let mut lines = text.lines();
    check_header(path, lines.next(), LOG_HEADER)?;
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols = fields(path, lineno, line, 6)?;
        let train: usize = cols[0].trim().parse().map_err(|_| {
            FileError::schema(path, lineno, format!("bad train index {:?}", cols[0]))
        })?;
        let pulse =
            match cols[1].trim() {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|_| {
                    FileError::schema(path, lineno, format!("bad pulse index {s:?}"))
                })?),
            };
        let phase = match cols[2].trim() {
            "W" => Phase::Write,
            "R" => Phase::Read,
            other => {
                return Err(FileError::schema(
                    path,
                    lineno,
                    format!("phase must be W or R, got {other:?}"),
                ))
            }
        };
        let voltage = parse_float(path, lineno, cols[3])?;
        let width = parse_float(path, lineno, cols[4])?;
        let resistance = match cols[5].trim() {
            "" => None,
            s => Some(parse_float::<T>(path, lineno, s)?),
        };
        match phase {
            Phase::Read => {
                let r = resistance.ok_or_else(|| {
                    FileError::schema(path, lineno, "read row without resistance")
                })?;
                if !(r > T::zero()) {
                    return Err(FileError::schema(
                        path,
                        lineno,
                        "read row with nonpositive resistance",
                    ));
                }
            }
            Phase::Write => {
                if resistance.is_some() {
                    return Err(FileError::schema(
                        path,
                        lineno,
                        "write row carries a resistance",
                    ));
                }
            }
        }
        records.push(MeasurementRecord {
            train,
            pulse,
            phase,
            voltage,
            width,
            resistance,
        });
    }
    Ok(MeasurementLog {
        kind,
        config: None,
        records,
    })
}

// ------------------------------------------------------------------- rates

pub fn render_rates<T: Real>(points: &[RatePoint<T>]) -> String {
    let mut out = String::from(RATES_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&fmt_float(p.resistance));
        out.push(',');
        out.push_str(&fmt_float(p.voltage));
        out.push(',');
        out.push_str(&fmt_float(p.rate));
        out.push('\n');
    }
    out
}

pub fn write_rates<T: Real>(path: &Path, points: &[RatePoint<T>]) -> Result<(), FileError> {
    write_atomic(path, &render_rates(points))
}

pub fn read_rates<T: Real>(path: &Path) -> Result<Vec<RatePoint<T>>, FileError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    check_header(path, lines.next(), RATES_HEADER)?;
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols = fields(path, lineno, line, 3)?;
        out.push(RatePoint {
            resistance: parse_float(path, lineno, cols[0])?,
            voltage: parse_float(path, lineno, cols[1])?,
            rate: parse_float(path, lineno, cols[2])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, SmoothingParams};
    use crate::protocol::{run_sweeper, SweeperConfig};
    use crate::sim::VirtualDevice;

    #[test]
    fn waveform_round_trip() {
        let w = Waveform::new(vec![
            PulseSegment::new(0.8, 1e-4).unwrap(),
            PulseSegment::new(-0.6, 2.5e-4).unwrap(),
        ]);
        let text = render_waveform(&w);
        assert!(text.starts_with("amplitude_V,width_s\n"));
        let back: Waveform<f64> = parse_waveform(Path::new("t"), &text).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn log_round_trip_preserves_records() {
        let mut d = VirtualDevice::new(
            ModelParams::<f64>::preset(),
            SmoothingParams::default(),
            13_650.0,
        )
        .unwrap();
        let cfg = SweeperConfig {
            pulses_per_train: 4,
            ..SweeperConfig::default()
        };
        let log = run_sweeper(&mut d, &cfg).unwrap();
        let text = render_log(&log);
        let back = parse_log::<f64>(Path::new("t"), &text, ProtocolKind::Sweeper).unwrap();
        assert_eq!(back.records, log.records);
        assert_eq!(back.kind, ProtocolKind::Sweeper);
        assert!(back.config.is_none());
    }

    #[test]
    fn log_schema_violations() {
        let good = "train,pulse,phase,voltage_V,width_s,resistance_ohm\n";
        assert!(parse_log::<f64>(Path::new("t"), good, ProtocolKind::Sweeper).is_ok());
        let bad_header = "train,phase\n";
        assert!(parse_log::<f64>(Path::new("t"), bad_header, ProtocolKind::Sweeper).is_err());
        let read_without_r = format!("{good}0,,R,0.2,0,\n");
        assert!(parse_log::<f64>(Path::new("t"), &read_without_r, ProtocolKind::Sweeper).is_err());
        let write_with_r = format!("{good}0,0,W,0.6,1e-4,12000\n");
        assert!(parse_log::<f64>(Path::new("t"), &write_with_r, ProtocolKind::Sweeper).is_err());
        let bad_phase = format!("{good}0,0,X,0.6,1e-4,\n");
        assert!(parse_log::<f64>(Path::new("t"), &bad_phase, ProtocolKind::Sweeper).is_err());
    }

    #[test]
    fn rates_round_trip() {
        let pts = vec![
            RatePoint {
                resistance: 12_600.0,
                voltage: 0.8,
                rate: 8.353e5,
            },
            RatePoint {
                resistance: 14_900.0,
                voltage: -0.8,
                rate: -1.79e6,
            },
        ];
        let text = render_rates(&pts);
        let back: Vec<RatePoint<f64>> = {
            let mut lines = text.lines();
            check_header(Path::new("t"), lines.next(), RATES_HEADER).unwrap();
            lines
                .map(|l| {
                    let c: Vec<&str> = l.split(',').collect();
                    RatePoint {
                        resistance: c[0].parse().unwrap(),
                        voltage: c[1].parse().unwrap(),
                        rate: c[2].parse().unwrap(),
                    }
                })
                .collect()
        };
        assert_eq!(pts, back);
    }

    #[test]
    fn trace_render_has_full_precision() {
        let trace = vec![TracePoint {
            time: 0.0,
            voltage: 0.0,
            resistance: 13_308.83278023784,
        }];
        let text = render_trace(&trace);
        let value_field = text.lines().nth(1).unwrap().split(',').nth(2).unwrap();
        // 17 significant digits and a lossless round trip
        let digits = value_field
            .split('e')
            .next()
            .unwrap()
            .chars()
            .filter(|c| c.is_ascii_digit())
            .count();
        assert!(digits >= 17, "{value_field}");
        assert_eq!(value_field.parse::<f64>().unwrap(), 13_308.83278023784);
    }
}
