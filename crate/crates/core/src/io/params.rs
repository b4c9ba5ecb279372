//! Model parameter files: a flat key/value document with all twelve
//! constants in SI units. Written values carry 17 significant digits, so a
//! write/read cycle is lossless for `f64`.

use std::path::Path;

use super::{fmt_float, kv, parse_float, write_atomic};
use crate::error::FileError;
use crate::model::{ModelParams, SmoothingParams};
use crate::scalar::{real, Real};

const MODEL_KEYS: [&str; 8] = ["A_p", "A_n", "t_p", "t_n", "a0", "a1", "b0", "b1"];
const OPTIONAL_KEYS: [&str; 4] = ["V_read", "b_R", "b_v", "limexp_threshold"];

pub fn render<T: Real>(params: &ModelParams<T>, smoothing: &SmoothingParams<T>) -> String {
    kv::render(
        "switching-rate model parameters (SI units: ohm, V, s)",
        &[
            ("A_p", fmt_float(params.a_p)),
            ("A_n", fmt_float(params.a_n)),
            ("t_p", fmt_float(params.t_p)),
            ("t_n", fmt_float(params.t_n)),
            ("a0", fmt_float(params.a0)),
            ("a1", fmt_float(params.a1)),
            ("b0", fmt_float(params.b0)),
            ("b1", fmt_float(params.b1)),
            ("V_read", fmt_float(params.v_read)),
            ("b_R", fmt_float(smoothing.b_r)),
            ("b_v", fmt_float(smoothing.b_v)),
            ("limexp_threshold", fmt_float(smoothing.limexp_threshold)),
        ],
    )
}

pub fn write<T: Real>(
    path: &Path,
    params: &ModelParams<T>,
    smoothing: &SmoothingParams<T>,
) -> Result<(), FileError> {
    write_atomic(path, &render(params, smoothing))
}

pub fn read<T: Real>(path: &Path) -> Result<(ModelParams<T>, SmoothingParams<T>), FileError> {
    let text = std::fs::read_to_string(path)?;
    parse(path, &text)
}

pub fn parse<T: Real>(
    path: &Path,
    text: &str,
) -> Result<(ModelParams<T>, SmoothingParams<T>), FileError> {
    let pairs = kv::parse(path, text)?;
    for (key, _) in &pairs {
        if !MODEL_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
            return Err(FileError::UnknownKey {
                path: path.display().to_string(),
                key: key.clone(),
            });
        }
    }
    let get = |key: &'static str| -> Result<Option<T>, FileError> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| parse_float(path, 0, v))
            .transpose()
    };
    let require = |key: &'static str| -> Result<T, FileError> {
        get(key)?.ok_or(FileError::MissingKey {
            path: path.display().to_string(),
            key,
        })
    };

    let params = ModelParams {
        a_p: require("A_p")?,
        a_n: require("A_n")?,
        t_p: require("t_p")?,
        t_n: require("t_n")?,
        a0: require("a0")?,
        a1: require("a1")?,
        b0: require("b0")?,
        b1: require("b1")?,
        v_read: get("V_read")?.unwrap_or_else(|| real(0.2)),
    };
    let defaults = SmoothingParams::<T>::default();
    let smoothing = SmoothingParams {
        b_r: get("b_R")?.unwrap_or(defaults.b_r),
        b_v: get("b_v")?.unwrap_or(defaults.b_v),
        limexp_threshold: get("limexp_threshold")?.unwrap_or(defaults.limexp_threshold),
    };
    params
        .validate_default_box()
        .map_err(|e| FileError::Invalid {
            path: path.display().to_string(),
            source: Box::new(e),
        })?;
    smoothing.validate().map_err(|e| FileError::Invalid {
        path: path.display().to_string(),
        source: Box::new(e),
    })?;
    Ok((params, smoothing))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let p = ModelParams::<f64>::preset();
        let sm = SmoothingParams::default();
        let text = render(&p, &sm);
        let (p2, sm2) = parse(Path::new("t"), &text).unwrap();
        assert_eq!(p, p2);
        assert_eq!(sm, sm2);
        // twice through for good measure
        assert_eq!(text, render(&p2, &sm2));
    }

    #[test]
    fn optional_keys_default() {
        let text = "A_p = 4.86e-5\nA_n = -1.09e-3\nt_p = 0.12\nt_n = 0.18\n\
                    a0 = 17160\na1 = 150\nb0 = 24810\nb1 = 17910\n";
        let (p, sm) = parse::<f64>(Path::new("t"), text).unwrap();
        assert_eq!(p.v_read, 0.2);
        assert_eq!(sm.b_r, 1.0);
        assert_eq!(sm.b_v, 1e-3);
        assert_eq!(sm.limexp_threshold, 80.0);
    }

    #[test]
    fn unknown_and_missing_keys_rejected() {
        let text = "A_p = 1\nbogus = 2\n";
        assert!(matches!(
            parse::<f64>(Path::new("t"), text),
            Err(FileError::UnknownKey { .. })
        ));
        let text = "A_p = 4.86e-5\n";
        assert!(matches!(
            parse::<f64>(Path::new("t"), text),
            Err(FileError::MissingKey { .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let text = "A_p = 4.86e-5\nA_n = -1.09e-3\nt_p = -0.12\nt_n = 0.18\n\
                    a0 = 17160\na1 = 150\nb0 = 24810\nb1 = 17910\n";
        assert!(matches!(
            parse::<f64>(Path::new("t"), text),
            Err(FileError::Invalid { .. })
        ));
    }
}
