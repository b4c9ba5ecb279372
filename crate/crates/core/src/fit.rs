//! Parameter extraction.
//!
//! The pipeline recovers the eight model constants from a sweeper log and
//! an optimizer log. Per sweeper train the boundary and rate scale come
//! from fitting the window law to the read trajectory in the time domain
//! (the exact integral of the quadratic window, fitted where the read
//! noise actually lives); the boundary points then feed ordinary
//! least-squares threshold lines. Optimizer trains are reduced to rates,
//! transported to the refined reference state through the exact secant
//! identity of the window law, aggregated per voltage, and fitted with the
//! exponential sensitivity model. A final cross-consistency check compares
//! the refined measurements against the assembled model.

use crate::analysis::{
    optimizer_train_data, refine_trains, smoothing_derivative, sweeper_timeseries, RatePoint,
    RefinedSet, TrainDatum,
};
use crate::error::FitError;
use crate::model::{ModelParams, Polarity, SmoothingParams};
use crate::protocol::MeasurementLog;
use crate::scalar::{real, Real};

/// Quadratic window fit at one fixed voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFit<T> {
    pub voltage: T,
    /// Fitted rate scale `s` (signed; matches the branch direction).
    pub s_hat: T,
    /// Fitted boundary resistance (ohm).
    pub r_hat: T,
    /// Root-mean-square residual against the perfect-square model (same
    /// units as the fitted observable).
    pub rmse: T,
    pub n_points: usize,
    /// Set when the fitted curvature sign contradicts the branch direction.
    pub direction_warning: bool,
    /// One-sigma uncertainty of the boundary, when the estimator provides
    /// one.
    pub r_hat_sigma: Option<T>,
}

/// Ordinary least-squares line through boundary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub intercept: T,
    pub slope: T,
    pub r_squared: T,
    /// Largest |voltage| among the fitted points; the line is only trusted
    /// up to this magnitude.
    pub v_max: T,
}

impl<T: Real> LineFit<T> {
    pub fn at(&self, v: T) -> T {
        self.intercept + self.slope * v
    }
}

/// Exponential sensitivity fit for one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityFit<T> {
    /// Amplitude `A` (signed).
    pub amplitude: T,
    /// Voltage scale `t` (V).
    pub voltage_scale: T,
    pub rmse: T,
    /// Set when the scale minimizer landed on a scan boundary.
    pub at_scan_bound: bool,
    pub n_points: usize,
}

/// Cross-consistency of one branch: refined measurements vs the model
/// evaluated at the branch reference state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchConsistency<T> {
    pub median_rel: Option<T>,
    pub worst_rel: Option<T>,
    pub points_used: usize,
    /// True when every point had zero measured rate, leaving the metric
    /// undefined.
    pub uninformative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport<T> {
    pub positive: BranchConsistency<T>,
    pub negative: BranchConsistency<T>,
}

/// A recorded stage problem; the pipeline keeps going where it can.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub stage: &'static str,
    pub detail: String,
}

/// Per-stage results of a full extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T> {
    pub window_fits: Vec<WindowFit<T>>,
    pub positive_line: Option<LineFit<T>>,
    pub negative_line: Option<LineFit<T>>,
    pub positive_sensitivity: Option<SensitivityFit<T>>,
    pub negative_sensitivity: Option<SensitivityFit<T>>,
    /// Refined band centers (the reported reference states per branch).
    pub rs0_positive: Option<T>,
    pub rs0_negative: Option<T>,
    /// Band-mean reference states used for transport and weighting.
    pub reference_positive: Option<T>,
    pub reference_negative: Option<T>,
    pub consistency: Option<ConsistencyReport<T>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Default for FitReport<T> {
    fn default() -> Self {
        FitReport {
            window_fits: Vec::new(),
            positive_line: None,
            negative_line: None,
            positive_sensitivity: None,
            negative_sensitivity: None,
            rs0_positive: None,
            rs0_negative: None,
            reference_positive: None,
            reference_negative: None,
            consistency: None,
            diagnostics: Vec::new(),
        }
    }
}

/// Extraction result: the recovered parameters when every stage produced
/// one, plus the full report either way.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome<T> {
    pub params: Option<ModelParams<T>>,
    pub report: FitReport<T>,
}

/// Extraction pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractConfig<T> {
    /// Refinement band half width (fraction of the center).
    pub eps_ref: T,
    /// Read-out voltage carried into the assembled parameters.
    pub v_read: T,
    /// Smoothing carried into downstream consumers of the parameters.
    pub smoothing: SmoothingParams<T>,
    /// Boundary fits enter the threshold lines only when their relative
    /// boundary uncertainty is below this gate.
    pub boundary_sigma_gate: T,
    /// Minimum trains per voltage group in the sensitivity stage.
    pub group_min: usize,
    /// Transported rates with a window-ratio amplification above this cap
    /// are discarded as too noisy.
    pub transport_cap: T,
    /// Scan interval for the sensitivity voltage scale (V).
    pub t_scan: (T, T),
    /// Coarse scan resolution before golden-section refinement.
    pub t_scan_points: usize,
    /// Smoothing-derivative window used by the diagnostic rate export.
    pub derivative_window: usize,
    /// Voltages excluded from the sweeper stage (operator filter).
    pub exclude_voltages: Vec<T>,
}

impl<T: Real> Default for ExtractConfig<T> {
    fn default() -> Self {
        ExtractConfig {
            eps_ref: real(0.05),
            v_read: real(0.2),
            smoothing: SmoothingParams::default(),
            boundary_sigma_gate: real(0.02),
            group_min: 3,
            transport_cap: real(100.0),
            t_scan: (real(0.01), real(1.0)),
            t_scan_points: 200,
            derivative_window: 11,
            exclude_voltages: Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------
// small dense solvers
// ---------------------------------------------------------------------

fn solve3<T: Real>(mut m: [[T; 3]; 3], mut rhs: [T; 3]) -> Option<[T; 3]> {
    for col in 0..3 {
        let mut pivot = col;
        for row in col + 1..3 {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col] == T::zero() {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] = m[row][k] - f * m[col][k];
            }
            rhs[row] = rhs[row] - f * rhs[col];
        }
    }
    let mut x = [T::zero(); 3];
    for col in (0..3).rev() {
        let mut acc = rhs[col];
        for k in col + 1..3 {
            acc = acc - m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

fn invert3<T: Real>(m: [[T; 3]; 3]) -> Option<[[T; 3]; 3]> {
    let mut cols = [[T::zero(); 3]; 3];
    for j in 0..3 {
        let mut e = [T::zero(); 3];
        e[j] = T::one();
        let x = solve3(m, e)?;
        for i in 0..3 {
            cols[i][j] = x[i];
        }
    }
    Some(cols)
}

// ---------------------------------------------------------------------
// fitting operations
// ---------------------------------------------------------------------

/// Least-squares quadratic `rate = c2 R^2 + c1 R + c0` over rate points at
/// one fixed voltage, mapped to the window form `s*(r - R)^2`. The perfect
/// square leaves a constant residual `c0 - c1^2/(4 c2)`; it is folded into
/// the reported rmse rather than zeroed.
pub fn fit_window_quadratic<T: Real>(points: &[RatePoint<T>]) -> Result<WindowFit<T>, FitError> {
    if points.len() < 3 {
        return Err(FitError::RankDeficient);
    }
    let voltage = points[0].voltage;
    let tol = voltage.abs() * real(1e-9) + real(1e-12);
    if points.iter().any(|p| (p.voltage - voltage).abs() > tol) {
        return Err(FitError::InvalidInput(
            "window fit requires a single fixed voltage".into(),
        ));
    }
    let mut distinct: Vec<T> = points.iter().map(|p| p.resistance).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(FitError::RankDeficient);
    }

    // center the abscissa to keep the normal equations well conditioned
    let n = real::<T>(points.len() as f64);
    let x_mean = points.iter().fold(T::zero(), |acc, p| acc + p.resistance) / n;
    let mut s = [T::zero(); 5]; // sums of x^0 .. x^4
    let mut b = [T::zero(); 3]; // sums of y x^2, y x, y
    for p in points {
        let x = p.resistance - x_mean;
        let x2 = x * x;
        s[0] = s[0] + T::one();
        s[1] = s[1] + x;
        s[2] = s[2] + x2;
        s[3] = s[3] + x2 * x;
        s[4] = s[4] + x2 * x2;
        b[0] = b[0] + p.rate * x2;
        b[1] = b[1] + p.rate * x;
        b[2] = b[2] + p.rate;
    }
    let m = [[s[4], s[3], s[2]], [s[3], s[2], s[1]], [s[2], s[1], s[0]]];
    let [d2, d1, _d0] = solve3(m, b).ok_or(FitError::RankDeficient)?;
    if d2 == T::zero() || !d2.is_finite() {
        return Err(FitError::DegenerateQuadratic);
    }
    let s_hat = d2;
    let r_hat = x_mean - d1 / (real::<T>(2.0) * d2);

    let mut sse = T::zero();
    for p in points {
        let gap = r_hat - p.resistance;
        let resid = p.rate - s_hat * gap * gap;
        sse = sse + resid * resid;
    }
    let rmse = (sse / n).sqrt();

    let direction_warning = match Polarity::of_voltage(voltage) {
        Polarity::Positive => s_hat <= T::zero(),
        Polarity::Negative => s_hat >= T::zero(),
    };

    Ok(WindowFit {
        voltage,
        s_hat,
        r_hat,
        rmse,
        n_points: points.len(),
        direction_warning,
        r_hat_sigma: None,
    })
}

/// Fits the integrated window law `R(t) = r -+ 1/(a + s t)` to one train's
/// read trajectory. This is the same quadratic window as
/// [`fit_window_quadratic`], estimated in the time domain: a coarse scan
/// over the boundary with the exact `1/|R - r|` linearization seeds a
/// damped Gauss-Newton refinement.
pub fn fit_window_trajectory<T: Real>(
    samples: &[(T, T)],
    voltage: T,
) -> Result<WindowFit<T>, FitError> {
    let n = samples.len();
    if n < 4 {
        return Err(FitError::RankDeficient);
    }
    let positive = Polarity::of_voltage(voltage).is_positive();
    let sign: T = if positive { -T::one() } else { T::one() }; // R = r + sign/(a + s t)

    let mut r_min = samples[0].1;
    let mut r_max = samples[0].1;
    for &(_, r) in samples {
        r_min = r_min.min(r);
        r_max = r_max.max(r);
    }
    if r_max - r_min == T::zero() {
        return Err(FitError::InvalidInput("train shows no switching".into()));
    }
    let edge = if positive { r_max } else { r_min };
    let span = r_max - r_min + T::one();

    let t_mean = samples.iter().fold(T::zero(), |acc, &(t, _)| acc + t) / real(n as f64);
    let sse_of = |r: T, a: T, s: T| {
        samples.iter().fold(T::zero(), |acc, &(t, y)| {
            let resid = y - (r + sign / (a + s * t));
            acc + resid * resid
        })
    };

    // scan boundary candidates beyond the data edge
    let mut best: Option<(T, [T; 3])> = None;
    let scan_n = 60;
    let lo = T::one();
    let hi = real::<T>(30.0) * span;
    let ratio = (hi / lo).powf(T::one() / real((scan_n - 1) as f64));
    let mut offset = lo;
    for _ in 0..scan_n {
        let r = if positive {
            edge + offset
        } else {
            edge - offset
        };
        offset = offset * ratio;
        // exact linearization 1/|R - r| = a + s t
        let mut ok = true;
        let mut y_mean = T::zero();
        for &(_, rr) in samples {
            let w = if positive { r - rr } else { rr - r };
            if w <= T::zero() {
                ok = false;
                break;
            }
            y_mean = y_mean + T::one() / w;
        }
        if !ok {
            continue;
        }
        y_mean = y_mean / real(n as f64);
        let mut num = T::zero();
        let mut den = T::zero();
        for &(t, rr) in samples {
            let w = if positive { r - rr } else { rr - r };
            num = num + (t - t_mean) * (T::one() / w - y_mean);
            den = den + (t - t_mean) * (t - t_mean);
        }
        if den == T::zero() {
            continue;
        }
        let s = num / den;
        let a = y_mean - s * t_mean;
        if s <= T::zero() || a <= T::zero() {
            continue;
        }
        let cost = sse_of(r, a, s);
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, [r, a, s]));
        }
    }
    let (mut cost, mut theta) =
        best.ok_or_else(|| FitError::InvalidInput("train shows no switching".into()))?;

    // damped Gauss-Newton refinement
    let t0 = samples[0].0;
    let mut lambda: T = real(1e-4);
    for _ in 0..200 {
        let [r, a, s] = theta;
        // normal equations J^T J and J^T f with J = d(model)/d(theta)
        let mut jtj = [[T::zero(); 3]; 3];
        let mut jtf = [T::zero(); 3];
        for &(t, y) in samples {
            let d = a + s * t;
            let u2 = T::one() / (d * d);
            let j = [T::one(), -sign * u2, -sign * u2 * t];
            let f = y - (r + sign / d);
            for row in 0..3 {
                jtf[row] = jtf[row] + j[row] * f;
                for col in 0..3 {
                    jtj[row][col] = jtj[row][col] + j[row] * j[col];
                }
            }
        }
        let mut damped = jtj;
        for k in 0..3 {
            damped[k][k] = damped[k][k] * (T::one() + lambda);
        }
        let Some(step) = solve3(damped, jtf) else {
            break;
        };
        let cand = [r + step[0], a + step[1], s + step[2]];
        let feasible =
            cand[1] > T::zero() && cand[2] > T::zero() && cand[1] + cand[2] * t0 > T::zero();
        if !feasible {
            lambda = lambda * real(10.0);
            if lambda > real(1e14) {
                break;
            }
            continue;
        }
        let cand_cost = sse_of(cand[0], cand[1], cand[2]);
        if cand_cost <= cost {
            let rel_drop = (cost - cand_cost) / cost.max(real(1e-300));
            theta = cand;
            cost = cand_cost;
            lambda = (lambda * real(0.3)).max(real(1e-14));
            if rel_drop < real(1e-15) {
                break;
            }
        } else {
            lambda = lambda * real(10.0);
            if lambda > real(1e14) {
                break;
            }
        }
    }

    let [r_hat, a, s] = theta;
    // boundary sigma from the Gauss-Newton covariance
    let mut jtj = [[T::zero(); 3]; 3];
    for &(t, _) in samples {
        let d = a + s * t;
        let u2 = T::one() / (d * d);
        let j = [T::one(), -sign * u2, -sign * u2 * t];
        for row in 0..3 {
            for col in 0..3 {
                jtj[row][col] = jtj[row][col] + j[row] * j[col];
            }
        }
    }
    let dof = real::<T>((n.max(4) - 3) as f64);
    let var = cost / dof;
    let sigma_r = invert3(jtj).map(|inv| (inv[0][0].max(T::zero()) * var).sqrt());
    let rmse = (cost / real(n as f64)).sqrt();
    let s_hat = if positive { s } else { -s };

    Ok(WindowFit {
        voltage,
        s_hat,
        r_hat,
        rmse,
        n_points: n,
        direction_warning: false,
        r_hat_sigma: sigma_r,
    })
}

/// Ordinary least-squares line through `(voltage, boundary)` points.
pub fn fit_threshold_line<T: Real>(points: &[(T, T)]) -> Result<LineFit<T>, FitError> {
    let mut distinct: Vec<T> = points.iter().map(|&(v, _)| v).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() <= a.abs().max(b.abs()) * real(1e-12));
    if distinct.len() < 2 {
        return Err(FitError::Underdetermined);
    }
    let n = real::<T>(points.len() as f64);
    let v_mean = points.iter().fold(T::zero(), |acc, &(v, _)| acc + v) / n;
    let r_mean = points.iter().fold(T::zero(), |acc, &(_, r)| acc + r) / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for &(v, r) in points {
        num = num + (v - v_mean) * (r - r_mean);
        den = den + (v - v_mean) * (v - v_mean);
    }
    let slope = num / den;
    let intercept = r_mean - slope * v_mean;
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for &(v, r) in points {
        let e = r - (intercept + slope * v);
        ss_res = ss_res + e * e;
        ss_tot = ss_tot + (r - r_mean) * (r - r_mean);
    }
    let r_squared = if ss_tot == T::zero() {
        T::one()
    } else {
        (T::one() - ss_res / ss_tot).max(T::zero()).min(T::one())
    };
    let v_max = points
        .iter()
        .fold(T::zero(), |acc: T, &(v, _)| acc.max(v.abs()));
    Ok(LineFit {
        intercept,
        slope,
        r_squared,
        v_max,
    })
}

/// Sensitivity-fit scan settings.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityScan<T> {
    pub t_lo: T,
    pub t_hi: T,
    pub points: usize,
}

impl<T: Real> Default for SensitivityScan<T> {
    fn default() -> Self {
        SensitivityScan {
            t_lo: real(0.01),
            t_hi: real(1.0),
            points: 200,
        }
    }
}

/// Fits `rate = A * (exp(|v|/t) - 1) * (r(v) - R_ref)^2` over rate points
/// at a fixed reference state, with `r` from the supplied threshold line.
/// `A` is solved linearly at each candidate `t`; the scale is located by a
/// coarse scan plus golden-section refinement.
pub fn fit_sensitivity_exp<T: Real>(
    points: &[RatePoint<T>],
    r_ref: T,
    line: &LineFit<T>,
    polarity: Polarity,
    scan: &SensitivityScan<T>,
) -> Result<SensitivityFit<T>, FitError> {
    let mut mags: Vec<T> = points.iter().map(|p| p.voltage.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mags.dedup_by(|a, b| (*a - *b).abs() <= a.abs().max(b.abs()) * real(1e-9));
    if mags.len() < 3 {
        return Err(FitError::InvalidInput(
            "sensitivity fit needs at least 3 distinct voltage magnitudes".into(),
        ));
    }
    if points.iter().all(|p| p.rate == T::zero()) {
        return Err(FitError::NoSwitchingSignal);
    }

    let positive = polarity.is_positive();
    let mut weights = Vec::with_capacity(points.len());
    for p in points {
        let boundary = line.at(p.voltage);
        let gap = if positive {
            boundary - r_ref
        } else {
            r_ref - boundary
        };
        if gap <= T::zero() {
            return Err(FitError::ReferenceOutsideWindow(format!(
                "reference {r_ref} is outside the active window at v = {}",
                p.voltage
            )));
        }
        weights.push(gap * gap);
    }

    let sse_at = |t: T| -> (T, T) {
        let mut gy = T::zero();
        let mut gg = T::zero();
        for (p, &w) in points.iter().zip(&weights) {
            let g = ((p.voltage.abs() / t).exp() - T::one()) * w;
            gy = gy + p.rate * g;
            gg = gg + g * g;
        }
        if gg == T::zero() {
            return (T::infinity(), T::zero());
        }
        let amp = gy / gg;
        let mut sse = T::zero();
        for (p, &w) in points.iter().zip(&weights) {
            let g = ((p.voltage.abs() / t).exp() - T::one()) * w;
            let resid = p.rate - amp * g;
            sse = sse + resid * resid;
        }
        (sse, amp)
    };

    let n_scan = scan.points.max(3);
    let step = (scan.t_hi - scan.t_lo) / real((n_scan - 1) as f64);
    let mut best_idx = 0usize;
    let mut best_sse = T::infinity();
    for k in 0..n_scan {
        let t = scan.t_lo + step * real(k as f64);
        let (sse, _) = sse_at(t);
        if sse < best_sse {
            best_sse = sse;
            best_idx = k;
        }
    }
    let mut lo = scan.t_lo + step * real(best_idx.saturating_sub(1) as f64);
    let mut hi = scan.t_lo + step * real(best_idx.min(n_scan - 2) as f64 + 1.0);
    // golden-section refinement inside the bracketing cells
    let gr: T = (real::<T>(5.0).sqrt() - T::one()) / real(2.0);
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    while hi - lo > real(1e-12) {
        if sse_at(c).0 < sse_at(d).0 {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - gr * (hi - lo);
        d = lo + gr * (hi - lo);
    }
    let t_best = (lo + hi) / real(2.0);
    let (sse, amp) = sse_at(t_best);
    let bound_tol = step;
    let at_scan_bound = t_best - scan.t_lo < bound_tol || scan.t_hi - t_best < bound_tol;

    Ok(SensitivityFit {
        amplitude: amp,
        voltage_scale: t_best,
        rmse: (sse / real(points.len() as f64)).sqrt(),
        at_scan_bound,
        n_points: points.len(),
    })
}

/// Median relative discrepancy between a refined set's rates and the model
/// evaluated at the set's reference state. Points with zero measured rate
/// carry no information and are skipped; if nothing remains the branch is
/// flagged uninformative.
pub fn cross_consistency<T: Real>(
    params: &ModelParams<T>,
    positive: &RefinedSet<T>,
    negative: &RefinedSet<T>,
) -> ConsistencyReport<T> {
    let branch = |set: &RefinedSet<T>| {
        let mut rels: Vec<T> = Vec::new();
        for p in &set.points {
            if p.rate == T::zero() {
                continue;
            }
            let pred = params.rate_exact_unchecked(set.reference, p.voltage);
            rels.push((pred - p.rate).abs() / p.rate.abs());
        }
        if rels.is_empty() {
            return BranchConsistency {
                median_rel: None,
                worst_rel: None,
                points_used: 0,
                uninformative: true,
            };
        }
        rels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = rels.len();
        let median = if n % 2 == 1 {
            rels[n / 2]
        } else {
            (rels[n / 2 - 1] + rels[n / 2]) / real(2.0)
        };
        BranchConsistency {
            median_rel: Some(median),
            worst_rel: Some(rels[n - 1]),
            points_used: n,
            uninformative: false,
        }
    };
    ConsistencyReport {
        positive: branch(positive),
        negative: branch(negative),
    }
}

// ---------------------------------------------------------------------
// the composed pipeline
// ---------------------------------------------------------------------

/// Transports one train's mean rate to the reference state.
///
/// For the window law the train secant is exactly
/// `dR/(N t_w) = +-s * w_pre * w_post`, so multiplying by
/// `w_ref^2 / (w_pre * w_post)` re-expresses the measurement at the
/// reference state without approximation.
fn transport_datum<T: Real>(
    datum: &TrainDatum<T>,
    line: &LineFit<T>,
    reference: T,
    cap: T,
) -> Option<RatePoint<T>> {
    let positive = datum.polarity().is_positive();
    let boundary = line.at(datum.voltage);
    let gap = |r: T| if positive { boundary - r } else { r - boundary };
    let w_pre = gap(datum.r_pre);
    let w_post = gap(datum.r_post);
    let w_ref = gap(reference);
    if w_ref <= T::zero() || w_pre <= T::zero() || w_post <= T::zero() {
        return None;
    }
    let factor = w_ref * w_ref / (w_pre * w_post);
    if factor > cap {
        return None;
    }
    let raw = datum.delta_r() / datum.duration;
    Some(RatePoint {
        resistance: reference,
        voltage: datum.voltage,
        rate: raw * factor,
    })
}

fn voltage_key<T: Real>(v: T) -> i64 {
    (v.to_f64().unwrap_or(f64::NAN) * 1e6).round() as i64
}

/// Runs the full extraction: sweeper boundaries and threshold lines,
/// optimizer refinement and sensitivity fits, and the cross-consistency
/// check. Stage failures become diagnostics and independent stages keep
/// going; `params` is present only when all eight constants were
/// recovered.
pub fn extract_model<T: Real>(
    sweeper_log: &MeasurementLog<T>,
    optimizer_log: &MeasurementLog<T>,
    cfg: &ExtractConfig<T>,
) -> FitOutcome<T> {
    let mut report = FitReport::default();

    // -- sweeper side: per-train boundary fits
    let mut boundary_points: Vec<(Polarity, T, T)> = Vec::new(); // (pol, v, r_hat)
    match sweeper_timeseries(sweeper_log) {
        Ok(series) => {
            for s in &series {
                if cfg
                    .exclude_voltages
                    .iter()
                    .any(|&ex| (ex - s.amplitude).abs() <= real(1e-9))
                {
                    report.diagnostics.push(Diagnostic {
                        stage: "window-fit",
                        detail: format!(
                            "train {} at {} V excluded by operator filter",
                            s.train, s.amplitude
                        ),
                    });
                    continue;
                }
                match fit_window_trajectory(&s.samples, s.amplitude) {
                    Ok(fit) => {
                        let usable = match fit.r_hat_sigma {
                            Some(sig) => sig / fit.r_hat.abs() <= cfg.boundary_sigma_gate,
                            None => false,
                        };
                        if usable {
                            boundary_points.push((
                                Polarity::of_voltage(s.amplitude),
                                s.amplitude,
                                fit.r_hat,
                            ));
                        } else {
                            report.diagnostics.push(Diagnostic {
                                stage: "window-fit",
                                detail: format!(
                                    "train {} at {} V: boundary uncertainty too large; excluded from the threshold line",
                                    s.train, s.amplitude
                                ),
                            });
                        }
                        report.window_fits.push(fit);
                    }
                    Err(e) => report.diagnostics.push(Diagnostic {
                        stage: "window-fit",
                        detail: format!("train {} at {} V: {e}", s.train, s.amplitude),
                    }),
                }
            }
        }
        Err(e) => report.diagnostics.push(Diagnostic {
            stage: "window-fit",
            detail: format!("sweeper log unusable: {e}"),
        }),
    }

    // -- threshold lines per polarity
    let line_for = |pol: Polarity, report: &mut FitReport<T>| -> Option<LineFit<T>> {
        let pts: Vec<(T, T)> = boundary_points
            .iter()
            .filter(|(p, _, _)| *p == pol)
            .map(|&(_, v, r)| (v, r))
            .collect();
        match fit_threshold_line(&pts) {
            Ok(line) => Some(line),
            Err(FitError::Underdetermined) if pts.len() == 1 => {
                report.diagnostics.push(Diagnostic {
                    stage: "threshold-line",
                    detail: format!(
                        "{} branch: underdetermined (single usable voltage {} V); continuing with a flat line",
                        pol.name(),
                        pts[0].0
                    ),
                });
                Some(LineFit {
                    intercept: pts[0].1,
                    slope: T::zero(),
                    r_squared: T::one(),
                    v_max: pts[0].0.abs(),
                })
            }
            Err(e) => {
                report.diagnostics.push(Diagnostic {
                    stage: "threshold-line",
                    detail: format!("{} branch: {e}", pol.name()),
                });
                None
            }
        }
    };
    let positive_line = line_for(Polarity::Positive, &mut report);
    let negative_line = line_for(Polarity::Negative, &mut report);
    report.positive_line = positive_line;
    report.negative_line = negative_line;

    // -- optimizer side
    let train_data = match optimizer_train_data(optimizer_log) {
        Ok(d) => Some(d),
        Err(e) => {
            report.diagnostics.push(Diagnostic {
                stage: "refinement",
                detail: format!("optimizer log unusable: {e}"),
            });
            None
        }
    };

    let mut consistency_sets: [Option<RefinedSet<T>>; 2] = [None, None];
    let mut sens_results: [Option<SensitivityFit<T>>; 2] = [None, None];

    if let Some(data) = &train_data {
        for (idx, pol) in [Polarity::Positive, Polarity::Negative]
            .into_iter()
            .enumerate()
        {
            let refined = match refine_trains(data, pol, cfg.eps_ref) {
                Ok(r) => r,
                Err(e) => {
                    report.diagnostics.push(Diagnostic {
                        stage: "refinement",
                        detail: format!("{} branch: {e}", pol.name()),
                    });
                    continue;
                }
            };
            match pol {
                Polarity::Positive => {
                    report.rs0_positive = Some(refined.band_center);
                    report.reference_positive = Some(refined.reference);
                }
                Polarity::Negative => {
                    report.rs0_negative = Some(refined.band_center);
                    report.reference_negative = Some(refined.reference);
                }
            }
            let line = match pol {
                Polarity::Positive => positive_line.as_ref(),
                Polarity::Negative => negative_line.as_ref(),
            };
            let Some(line) = line else {
                report.diagnostics.push(Diagnostic {
                    stage: "sensitivity",
                    detail: format!(
                        "{} branch: no threshold line available; stage skipped",
                        pol.name()
                    ),
                });
                continue;
            };

            // transport every active same-polarity train to the reference
            // state, then average per voltage
            let mut groups: std::collections::BTreeMap<i64, (T, Vec<T>)> =
                std::collections::BTreeMap::new();
            for d in data.iter().filter(|d| d.polarity() == pol) {
                if d.voltage.abs() > line.v_max + real(1e-9) {
                    continue; // no boundary extrapolation above the fitted range
                }
                if let Some(p) = transport_datum(d, line, refined.reference, cfg.transport_cap) {
                    groups
                        .entry(voltage_key(d.voltage))
                        .or_insert_with(|| (d.voltage, Vec::new()))
                        .1
                        .push(p.rate);
                }
            }
            let sens_points: Vec<RatePoint<T>> = groups
                .values()
                .filter(|(_, rates)| rates.len() >= cfg.group_min)
                .map(|(v, rates)| {
                    let mean =
                        rates.iter().fold(T::zero(), |acc, &r| acc + r) / real(rates.len() as f64);
                    RatePoint {
                        resistance: refined.reference,
                        voltage: *v,
                        rate: mean,
                    }
                })
                .collect();

            let scan = SensitivityScan {
                t_lo: cfg.t_scan.0,
                t_hi: cfg.t_scan.1,
                points: cfg.t_scan_points,
            };
            match fit_sensitivity_exp(&sens_points, refined.reference, line, pol, &scan) {
                Ok(fit) => {
                    if fit.at_scan_bound {
                        report.diagnostics.push(Diagnostic {
                            stage: "sensitivity",
                            detail: format!(
                                "{} branch: voltage scale at scan bound ({} V)",
                                pol.name(),
                                fit.voltage_scale
                            ),
                        });
                    }
                    sens_results[idx] = Some(fit);
                }
                Err(e) => report.diagnostics.push(Diagnostic {
                    stage: "sensitivity",
                    detail: format!("{} branch: {e}", pol.name()),
                }),
            }

            // refined-band points transported to the reference state for the
            // consistency check
            let members: Vec<RatePoint<T>> = refined
                .members
                .iter()
                .filter_map(|d| transport_datum(d, line, refined.reference, cfg.transport_cap))
                .collect();
            consistency_sets[idx] = Some(RefinedSet {
                polarity: pol,
                band_center: refined.band_center,
                reference: refined.reference,
                points: members,
            });
        }
    }

    report.positive_sensitivity = sens_results[0];
    report.negative_sensitivity = sens_results[1];

    // -- assemble parameters when everything is present
    let params = match (
        positive_line,
        negative_line,
        sens_results[0],
        sens_results[1],
    ) {
        (Some(pl), Some(nl), Some(ps), Some(ns)) => Some(ModelParams {
            a_p: ps.amplitude,
            a_n: ns.amplitude,
            t_p: ps.voltage_scale,
            t_n: ns.voltage_scale,
            a0: pl.intercept,
            a1: pl.slope,
            b0: nl.intercept,
            b1: nl.slope,
            v_read: cfg.v_read,
        }),
        _ => None,
    };

    if let (Some(p), Some(pos), Some(neg)) = (&params, &consistency_sets[0], &consistency_sets[1]) {
        report.consistency = Some(cross_consistency(p, pos, neg));
    }

    FitOutcome { params, report }
}

/// Diagnostic rate export used by the analyze path: the smoothing time
/// derivative applied per sweeper train.
pub fn sweeper_rate_points<T: Real>(
    log: &MeasurementLog<T>,
    window: usize,
    exclude_voltages: &[T],
) -> Result<Vec<RatePoint<T>>, FitError> {
    let series = sweeper_timeseries(log)?;
    let mut out = Vec::new();
    for s in &series {
        if exclude_voltages
            .iter()
            .any(|&ex| (ex - s.amplitude).abs() <= real(1e-9))
        {
            continue;
        }
        out.extend(smoothing_derivative(&s.samples, s.amplitude, window)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::RatePoint;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn quadratic_fit_recovers_exact_window() {
        let s = 3.8138e-2;
        let r = 17_280.0;
        let points: Vec<RatePoint<f64>> = [12_000.0, 13_000.0, 14_000.0, 15_000.0]
            .iter()
            .map(|&rr| RatePoint {
                resistance: rr,
                voltage: 0.8,
                rate: s * (r - rr) * (r - rr),
            })
            .collect();
        let fit = fit_window_quadratic(&points).unwrap();
        assert!(rel(fit.s_hat, s) < 1e-9);
        assert!(rel(fit.r_hat, r) < 1e-9);
        assert!(fit.rmse < 1e-6);
        assert!(!fit.direction_warning);
    }

    #[test]
    fn quadratic_fit_scaling_consistency() {
        let s = 2.0e-2;
        let r = 15_000.0;
        let mk = |alpha: f64| {
            let pts: Vec<RatePoint<f64>> = [11_000.0, 12_000.0, 13_000.0, 14_000.0]
                .iter()
                .map(|&rr| RatePoint {
                    resistance: rr,
                    voltage: 0.7,
                    rate: alpha * s * (r - rr) * (r - rr),
                })
                .collect();
            fit_window_quadratic(&pts).unwrap()
        };
        let base = mk(1.0);
        let scaled = mk(3.0);
        assert!(rel(scaled.s_hat, 3.0 * base.s_hat) < 1e-9);
        assert!(rel(scaled.r_hat, base.r_hat) < 1e-9);
    }

    #[test]
    fn quadratic_fit_rank_and_direction() {
        let same_r: Vec<RatePoint<f64>> = (0..4)
            .map(|k| RatePoint {
                resistance: 12_000.0,
                voltage: 0.8,
                rate: k as f64,
            })
            .collect();
        assert!(matches!(
            fit_window_quadratic(&same_r),
            Err(FitError::RankDeficient)
        ));

        // negative-branch data fed with positive-voltage labels trips the
        // direction warning
        let s = -5e-2;
        let r = 11_000.0;
        let pts: Vec<RatePoint<f64>> = [12_000.0, 13_000.0, 14_000.0]
            .iter()
            .map(|&rr| RatePoint {
                resistance: rr,
                voltage: 0.8,
                rate: s * (rr - r) * (rr - r),
            })
            .collect();
        let fit = fit_window_quadratic(&pts).unwrap();
        assert!(fit.direction_warning);

        let mixed = vec![
            RatePoint {
                resistance: 12_000.0,
                voltage: 0.8,
                rate: 1.0,
            },
            RatePoint {
                resistance: 13_000.0,
                voltage: 0.7,
                rate: 1.0,
            },
            RatePoint {
                resistance: 14_000.0,
                voltage: 0.8,
                rate: 1.0,
            },
        ];
        assert!(matches!(
            fit_window_quadratic(&mixed),
            Err(FitError::InvalidInput(_))
        ));
    }

    #[test]
    fn trajectory_fit_is_exact_on_closed_form_data() {
        let params: ModelParams<f64> = ModelParams::preset();
        for v in [0.6, -0.6, 0.7, -0.7, 0.8, -0.8] {
            let r0 = if v > 0.0 { 12_600.0 } else { 15_600.0 };
            let samples: Vec<(f64, f64)> = (0..500)
                .map(|k| {
                    let t = (k + 1) as f64 * 1e-4;
                    (t, params.pulse_response(r0, v, t).unwrap())
                })
                .collect();
            let fit = fit_window_trajectory(&samples, v).unwrap();
            let truth_r = params.threshold_resistance(v);
            let truth_s = params.switching_sensitivity(v);
            assert!(
                rel(fit.r_hat, truth_r) < 1e-8,
                "v={v}: r {} vs {}",
                fit.r_hat,
                truth_r
            );
            assert!(
                rel(fit.s_hat, truth_s) < 1e-8,
                "v={v}: s {} vs {}",
                fit.s_hat,
                truth_s
            );
            assert!(fit.rmse < 1e-6);
            assert!(fit.r_hat_sigma.unwrap() < 1.0);
        }
    }

    #[test]
    fn trajectory_fit_rejects_flat_train() {
        let samples: Vec<(f64, f64)> = (0..50).map(|k| (k as f64 * 1e-4, 13_000.0)).collect();
        assert!(fit_window_trajectory(&samples, 0.3).is_err());
    }

    #[test]
    fn line_fit_exact_points() {
        let pts = [(-0.6, 14_064.0), (-0.7, 12_273.0), (-0.8, 10_482.0)];
        let line = fit_threshold_line(&pts).unwrap();
        assert!(rel(line.intercept, 24_810.0) < 1e-12);
        assert!(rel(line.slope, 17_910.0) < 1e-12);
        assert!((line.r_squared - 1.0).abs() < 1e-12);
        assert!((line.v_max - 0.8).abs() < 1e-15);
    }

    #[test]
    fn line_fit_underdetermined() {
        assert!(matches!(
            fit_threshold_line(&[(0.8, 17_280.0), (0.8, 17_281.0)]),
            Err(FitError::Underdetermined)
        ));
        assert!(matches!(
            fit_threshold_line::<f64>(&[]),
            Err(FitError::Underdetermined)
        ));
    }

    #[test]
    fn sensitivity_fit_recovers_ground_truth() {
        let a = 4.86e-5;
        let t = 0.12;
        let r_ref = 12_600.0;
        let line = LineFit {
            intercept: 17_160.0,
            slope: 150.0,
            r_squared: 1.0,
            v_max: 0.8,
        };
        let points: Vec<RatePoint<f64>> = (3..=8)
            .map(|k| {
                let v = k as f64 / 10.0;
                let gap = line.at(v) - r_ref;
                RatePoint {
                    resistance: r_ref,
                    voltage: v,
                    rate: a * ((v / t).exp() - 1.0) * gap * gap,
                }
            })
            .collect();
        let fit = fit_sensitivity_exp(
            &points,
            r_ref,
            &line,
            Polarity::Positive,
            &SensitivityScan::default(),
        )
        .unwrap();
        assert!(rel(fit.amplitude, a) < 1e-3, "A {} vs {a}", fit.amplitude);
        assert!(
            rel(fit.voltage_scale, t) < 1e-3,
            "t {} vs {t}",
            fit.voltage_scale
        );
        assert!(!fit.at_scan_bound);

        // negative branch with signed rates recovers a signed amplitude
        let an = -1.09e-3;
        let tn = 0.18;
        let r_ref = 14_900.0;
        let nline = LineFit {
            intercept: 24_810.0,
            slope: 17_910.0,
            r_squared: 1.0,
            v_max: 0.8,
        };
        let points: Vec<RatePoint<f64>> = (6..=8)
            .chain(std::iter::once(9))
            .map(|k| {
                let v = -(k as f64) / 10.0;
                let gap = r_ref - nline.at(v);
                RatePoint {
                    resistance: r_ref,
                    voltage: v,
                    rate: an * ((v.abs() / tn).exp() - 1.0) * gap * gap,
                }
            })
            .collect();
        let fit = fit_sensitivity_exp(
            &points,
            r_ref,
            &nline,
            Polarity::Negative,
            &SensitivityScan::default(),
        )
        .unwrap();
        assert!(rel(fit.amplitude, an) < 1e-3);
        assert!(rel(fit.voltage_scale, tn) < 1e-3);
    }

    #[test]
    fn sensitivity_fit_errors() {
        let line = LineFit {
            intercept: 17_160.0,
            slope: 150.0,
            r_squared: 1.0,
            v_max: 0.8,
        };
        let zeros: Vec<RatePoint<f64>> = (3..=5)
            .map(|k| RatePoint {
                resistance: 12_600.0,
                voltage: k as f64 / 10.0,
                rate: 0.0,
            })
            .collect();
        assert!(matches!(
            fit_sensitivity_exp(
                &zeros,
                12_600.0,
                &line,
                Polarity::Positive,
                &SensitivityScan::default()
            ),
            Err(FitError::NoSwitchingSignal)
        ));

        // reference above the positive boundary is outside the window
        let pts: Vec<RatePoint<f64>> = (3..=5)
            .map(|k| RatePoint {
                resistance: 18_000.0,
                voltage: k as f64 / 10.0,
                rate: 1.0,
            })
            .collect();
        assert!(matches!(
            fit_sensitivity_exp(
                &pts,
                18_000.0,
                &line,
                Polarity::Positive,
                &SensitivityScan::default()
            ),
            Err(FitError::ReferenceOutsideWindow(_))
        ));

        let two: Vec<RatePoint<f64>> = (3..=4)
            .map(|k| RatePoint {
                resistance: 12_600.0,
                voltage: k as f64 / 10.0,
                rate: 1.0,
            })
            .collect();
        assert!(fit_sensitivity_exp(
            &two,
            12_600.0,
            &line,
            Polarity::Positive,
            &SensitivityScan::default()
        )
        .is_err());
    }

    #[test]
    fn consistency_self_and_mismatch() {
        let params: ModelParams<f64> = ModelParams::preset();
        let mk_set = |pol: Polarity, r_ref: f64, model: &ModelParams<f64>| {
            let points: Vec<RatePoint<f64>> = (6..=8)
                .map(|k| {
                    let v = if pol.is_positive() {
                        k as f64 / 10.0
                    } else {
                        -(k as f64) / 10.0
                    };
                    RatePoint {
                        resistance: r_ref,
                        voltage: v,
                        rate: model.switching_rate_exact(r_ref, v).unwrap(),
                    }
                })
                .collect();
            RefinedSet {
                polarity: pol,
                band_center: r_ref,
                reference: r_ref,
                points,
            }
        };
        let pos = mk_set(Polarity::Positive, 12_600.0, &params);
        let neg = mk_set(Polarity::Negative, 14_900.0, &params);
        let rep = cross_consistency(&params, &pos, &neg);
        assert!(rep.positive.median_rel.unwrap() < 1e-12);
        assert!(rep.negative.median_rel.unwrap() < 1e-12);

        // doubling the negative amplitude makes the negative branch miss by
        // exactly 100 percent of the measurement
        let mut doubled = params;
        doubled.a_n *= 2.0;
        let rep = cross_consistency(&doubled, &pos, &neg);
        assert!((rep.negative.median_rel.unwrap() - 1.0).abs() < 1e-12);
        assert!(rep.positive.median_rel.unwrap() < 1e-12);

        // zero-rate points are uninformative
        let dead = RefinedSet {
            polarity: Polarity::Negative,
            band_center: 14_900.0,
            reference: 14_900.0,
            points: vec![RatePoint {
                resistance: 14_900.0,
                voltage: -0.3,
                rate: 0.0,
            }],
        };
        let rep = cross_consistency(&params, &pos, &dead);
        assert!(rep.negative.uninformative);
        assert_eq!(rep.negative.points_used, 0);
    }

    #[test]
    fn transport_is_the_exact_secant_identity() {
        let params: ModelParams<f64> = ModelParams::preset();
        let line = LineFit {
            intercept: 24_810.0,
            slope: 17_910.0,
            r_squared: 1.0,
            v_max: 0.9,
        };
        let v = -0.75;
        let r_pre = 14_200.0;
        let duration = 1e-3;
        let r_post = params.pulse_response(r_pre, v, duration).unwrap();
        let datum = TrainDatum {
            train: 0,
            voltage: v,
            r_pre,
            r_post,
            duration,
        };
        let reference = 14_650.0;
        let p = transport_datum(&datum, &line, reference, 100.0).unwrap();
        let truth = params.switching_rate_exact(reference, v).unwrap();
        assert!(rel(p.rate, truth) < 1e-12, "{} vs {truth}", p.rate);
    }
}
