//! Verilog-A module emission.
//!
//! Generates the behavioral module text for the smoothed switching-rate
//! model: the resistive state lives on an internal voltage node carried by
//! the time-domain integration operator `idt`, terminal current is ohmic
//! against that state, and every exponential goes through the simulator's
//! overflow-limited `limexp`. Emission is deterministic: identical inputs
//! produce byte-identical ASCII text with LF line endings.

use crate::error::VaError;
use crate::model::{ModelParams, SmoothingParams};
use crate::scalar::Real;

/// Emission options.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitOptions {
    pub module_name: String,
    /// Initial resistive state (ohm).
    pub r_init: f64,
    /// Significant digits for numeric literals (6..=17).
    pub precision: usize,
}

impl EmitOptions {
    pub fn new(r_init: f64) -> Self {
        EmitOptions {
            module_name: "reram_model".into(),
            r_init,
            precision: 9,
        }
    }

    fn validate(&self) -> Result<(), VaError> {
        let mut chars = self.module_name.chars();
        let head_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_');
        if !head_ok || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(VaError::BadModuleName(self.module_name.clone()));
        }
        if !(self.r_init > 0.0) || !self.r_init.is_finite() {
            return Err(VaError::InvalidOption(format!(
                "R_init must be > 0 (got {})",
                self.r_init
            )));
        }
        if !(6..=17).contains(&self.precision) {
            return Err(VaError::InvalidOption(format!(
                "precision must be in 6..=17 (got {})",
                self.precision
            )));
        }
        Ok(())
    }
}

/// Formats a literal with `precision` significant digits in scientific
/// notation with a signed two-digit exponent, e.g. `1.09000000e-03`.
pub fn va_literal(value: f64, precision: usize) -> String {
    let formatted = format!("{:.*e}", precision.saturating_sub(1), value);
    let (mantissa, exponent) = formatted.split_once('e').expect("exponential format");
    let exp: i32 = exponent.parse().expect("numeric exponent");
    format!(
        "{mantissa}e{}{:02}",
        if exp < 0 { '-' } else { '+' },
        exp.abs()
    )
}

/// Emits the Verilog-A module text for the smoothed model.
pub fn emit_verilog_a<T: Real>(
    params: &ModelParams<T>,
    smoothing: &SmoothingParams<T>,
    opts: &EmitOptions,
) -> Result<String, VaError> {
    opts.validate()?;
    let f = |x: T| va_literal(x.to_f64().unwrap_or(f64::NAN), opts.precision);
    let r_init = va_literal(opts.r_init, opts.precision);
    let name = &opts.module_name;

    let mut out = String::new();
    let mut line = |s: &str| {
        out.push_str(s);
        out.push('\n');
    };

    line("// Behavioral ReRAM switching-rate model.");
    line("// Resistive state in ohms is carried on the internal node `rs` by the");
    line("// time-domain integration operator; terminal conduction is ohmic.");
    line("");
    line("`include \"constants.vams\"");
    line("`include \"disciplines.vams\"");
    line("");
    line(&format!("module {name}(te, be);"));
    line("");
    line("    // external terminals: top electrode, bottom electrode");
    line("    inout te, be;");
    line("    electrical te, be;");
    line("");
    line("    // internal state node: V(rs) is the resistive state in ohms");
    line("    electrical rs;");
    line("");
    line("    // switching-rate constants");
    line(&format!("    parameter real A_p = {};", f(params.a_p)));
    line(&format!("    parameter real A_n = {};", f(params.a_n)));
    line(&format!(
        "    parameter real t_p = {} from (0:inf);",
        f(params.t_p)
    ));
    line(&format!(
        "    parameter real t_n = {} from (0:inf);",
        f(params.t_n)
    ));
    line(&format!("    parameter real a0 = {};", f(params.a0)));
    line(&format!(
        "    parameter real a1 = {} from [0:inf);",
        f(params.a1)
    ));
    line(&format!("    parameter real b0 = {};", f(params.b0)));
    line(&format!(
        "    parameter real b1 = {} from [0:inf);",
        f(params.b1)
    ));
    line("    // standardized read-out voltage (documentation parameter)");
    line(&format!(
        "    parameter real V_read = {};",
        f(params.v_read)
    ));
    line("    // sigmoid smoothing slopes");
    line(&format!(
        "    parameter real b_R = {} from (0:inf);",
        f(smoothing.b_r)
    ));
    line(&format!(
        "    parameter real b_v = {} from (0:inf);",
        f(smoothing.b_v)
    ));
    line("    // initial resistive state");
    line(&format!(
        "    parameter real R_init = {r_init} from (0:inf);"
    ));
    line("");
    line("    real v, state, rp, rn, sp, sn, gate_rp, gate_rn, gate_vp, gate_vn, rate;");
    line("");
    line("    analog begin");
    line("        v = V(te, be);");
    line("        state = V(rs);");
    line("");
    line("        // voltage dependent resistive boundaries");
    line("        rp = a0 + a1*v;");
    line("        rn = b0 + b1*v;");
    line("");
    line("        // exponential switching sensitivity per branch");
    line("        sp = A_p*(-1.0 + limexp(abs(v)/t_p));");
    line("        sn = A_n*(-1.0 + limexp(abs(v)/t_n));");
    line("");
    line("        // sigmoid gates replacing the hard steps");
    line("        gate_rp = 1.0/(1.0 + limexp(-(rp - state)/b_R));");
    line("        gate_rn = 1.0/(1.0 + limexp(-(state - rn)/b_R));");
    line("        gate_vp = 1.0/(1.0 + limexp(-v/b_v));");
    line("        gate_vn = 1.0/(1.0 + limexp(v/b_v));");
    line("");
    line("        rate = sp*(rp - state)*(rp - state)*gate_rp*gate_vp");
    line("             + sn*(state - rn)*(state - rn)*gate_rn*gate_vn;");
    line("");
    line("        // state carried by time-domain integration");
    line("        V(rs) <+ idt(rate, R_init);");
    line("");
    line("        // ohmic conduction against the current state");
    line("        I(te, be) <+ V(te, be)/state;");
    line("    end");
    line("");
    line("endmodule");

    debug_assert!(out.is_ascii());
    Ok(out)
}
