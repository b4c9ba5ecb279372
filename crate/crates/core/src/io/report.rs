//! Structured-text rendering of protocol sidecars and fit reports.

use std::path::Path;

use super::{fmt_float, kv, write_atomic};
use crate::error::FileError;
use crate::fit::{FitOutcome, LineFit, SensitivityFit};
use crate::protocol::ProtocolConfig;
use crate::scalar::Real;

/// Renders the configuration snapshot written alongside a protocol log.
pub fn render_config_sidecar<T: Real>(config: &ProtocolConfig<T>, seed: u64, noise: T) -> String {
    let mut pairs: Vec<(&str, String)> = Vec::new();
    match config {
        ProtocolConfig::Sweeper(c) => {
            pairs.push(("protocol", "sweeper".into()));
            pairs.push(("pulses_per_train", c.pulses_per_train.to_string()));
            pairs.push(("pulse_width_s", fmt_float(c.pulse_width)));
            pairs.push(("v_start_V", fmt_float(c.v_start)));
            pairs.push(("v_step_V", fmt_float(c.v_step)));
            pairs.push(("v_stop_V", fmt_float(c.v_stop)));
        }
        ProtocolConfig::Optimizer(c) => {
            pairs.push(("protocol", "optimizer".into()));
            pairs.push(("pulses_per_train", c.pulses_per_train.to_string()));
            pairs.push(("pulse_width_s", fmt_float(c.pulse_width)));
            pairs.push(("eps_opt", fmt_float(c.eps_opt)));
            pairs.push(("target_ohm", fmt_float(c.target)));
            pairs.push(("ramp_v_start_V", fmt_float(c.ramp_v_start)));
            pairs.push(("ramp_v_step_V", fmt_float(c.ramp_v_step)));
            pairs.push(("ramp_v_max_V", fmt_float(c.ramp_v_max)));
            pairs.push(("max_trains", c.max_trains.to_string()));
            pairs.push(("two_sided", c.two_sided.to_string()));
        }
    }
    pairs.push(("read_noise_sigma", fmt_float(noise)));
    pairs.push(("seed", seed.to_string()));
    kv::render("protocol configuration snapshot", &pairs)
}

pub fn write_config_sidecar<T: Real>(
    path: &Path,
    config: &ProtocolConfig<T>,
    seed: u64,
    noise: T,
) -> Result<(), FileError> {
    write_atomic(path, &render_config_sidecar(config, seed, noise))
}

fn push_line<T: Real>(out: &mut Vec<(&'static str, String)>, tag: &'static str, line: &LineFit<T>) {
    match tag {
        "positive" => {
            out.push(("a0", fmt_float(line.intercept)));
            out.push(("a1", fmt_float(line.slope)));
            out.push(("positive_line_r_squared", fmt_float(line.r_squared)));
        }
        _ => {
            out.push(("b0", fmt_float(line.intercept)));
            out.push(("b1", fmt_float(line.slope)));
            out.push(("negative_line_r_squared", fmt_float(line.r_squared)));
        }
    }
}

fn push_sens<T: Real>(
    out: &mut Vec<(&'static str, String)>,
    tag: &'static str,
    fit: &SensitivityFit<T>,
) {
    match tag {
        "positive" => {
            out.push(("A_p", fmt_float(fit.amplitude)));
            out.push(("t_p", fmt_float(fit.voltage_scale)));
            out.push(("positive_sensitivity_rmse", fmt_float(fit.rmse)));
        }
        _ => {
            out.push(("A_n", fmt_float(fit.amplitude)));
            out.push(("t_n", fmt_float(fit.voltage_scale)));
            out.push(("negative_sensitivity_rmse", fmt_float(fit.rmse)));
        }
    }
}

/// Renders a full extraction report: recovered constants, per-stage
/// goodness of fit, reference states, the consistency metric, per-train
/// boundary fits, and every diagnostic the pipeline recorded.
pub fn render_fit_report<T: Real>(outcome: &FitOutcome<T>) -> String {
    let report = &outcome.report;
    let mut pairs: Vec<(&'static str, String)> = Vec::new();
    pairs.push(("complete", outcome.params.is_some().to_string()));
    if let Some(line) = &report.positive_line {
        push_line(&mut pairs, "positive", line);
    }
    if let Some(line) = &report.negative_line {
        push_line(&mut pairs, "negative", line);
    }
    if let Some(fit) = &report.positive_sensitivity {
        push_sens(&mut pairs, "positive", fit);
    }
    if let Some(fit) = &report.negative_sensitivity {
        push_sens(&mut pairs, "negative", fit);
    }
    if let Some(rs) = report.rs0_positive {
        pairs.push(("rs0_positive_ohm", fmt_float(rs)));
    }
    if let Some(rs) = report.rs0_negative {
        pairs.push(("rs0_negative_ohm", fmt_float(rs)));
    }
    if let Some(r) = report.reference_positive {
        pairs.push(("reference_positive_ohm", fmt_float(r)));
    }
    if let Some(r) = report.reference_negative {
        pairs.push(("reference_negative_ohm", fmt_float(r)));
    }
    if let Some(c) = &report.consistency {
        if let Some(m) = c.positive.median_rel {
            pairs.push(("consistency_positive_median", fmt_float(m)));
        }
        if let Some(w) = c.positive.worst_rel {
            pairs.push(("consistency_positive_worst", fmt_float(w)));
        }
        if c.positive.uninformative {
            pairs.push(("consistency_positive_uninformative", "true".into()));
        }
        if let Some(m) = c.negative.median_rel {
            pairs.push(("consistency_negative_median", fmt_float(m)));
        }
        if let Some(w) = c.negative.worst_rel {
            pairs.push(("consistency_negative_worst", fmt_float(w)));
        }
        if c.negative.uninformative {
            pairs.push(("consistency_negative_uninformative", "true".into()));
        }
    }

    let mut out = kv::render("model extraction report", &pairs);
    out.push('\n');
    out.push_str("# per-train boundary fits: voltage_V, s_hat, r_hat_ohm, rmse_ohm, n\n");
    for w in &report.window_fits {
        out.push_str(&format!(
            "window_fit = {}, {}, {}, {}, {}\n",
            fmt_float(w.voltage),
            fmt_float(w.s_hat),
            fmt_float(w.r_hat),
            fmt_float(w.rmse),
            w.n_points,
        ));
    }
    if !report.diagnostics.is_empty() {
        out.push('\n');
        out.push_str("# stage diagnostics\n");
        for d in &report.diagnostics {
            out.push_str(&format!("diagnostic = [{}] {}\n", d.stage, d.detail));
        }
    }
    out
}

pub fn write_fit_report<T: Real>(path: &Path, outcome: &FitOutcome<T>) -> Result<(), FileError> {
    write_atomic(path, &render_fit_report(outcome))
}
