//! Fit models for the measured curves. Frequencies are cyclic MHz, times
//! are microseconds.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{fit, Bounds, FitData, FitFlag, FitOptions, FitResult};
use crate::dynamics::{rabi_population, rydberg_fraction_vs_delay, AncillaLifetime, RabiModel};
use crate::error::{Error, Result};
use crate::susceptibility::{chi_rydberg_eit, chi_two_level, EitConditions};
use crate::units::{Frequency, LaserDrive, TransitionParams};

/// Least-squares `y ≈ a·shape + b`; returns `(a, b)`.
fn linear_init(shape: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let ms = shape.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = shape.iter().map(|s| (s - ms).powi(2)).sum();
    let sxy: f64 = shape.iter().zip(y).map(|(s, v)| (s - ms) * (v - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (a, my - a * ms)
}

fn best_of(candidates: Vec<Result<FitResult>>) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for c in candidates {
        match c {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => r.chi_sq < b.chi_sq,
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Numeric("no fit candidates".into())))
}

/// `offset + amplitude (Γ/2)² / ((x − center)² + (Γ/2)²)`; parameters
/// `[offset, amplitude, center, fwhm]`.
pub fn lorentzian(x: f64, p: &[f64]) -> f64 {
    let hw = 0.5 * p[3];
    p[0] + p[1] * hw * hw / ((x - p[2]).powi(2) + hw * hw)
}

/// Lorentzian fit with data-driven initial values. Returns parameters
/// `offset, amplitude, center, fwhm`.
pub fn fit_lorentzian(data: FitData<'_>, opts: &FitOptions) -> Result<FitResult> {
    let (x, y) = (data.x, data.y);
    if x.len() < 4 {
        return Err(Error::invalid("data", "Lorentzian fit needs at least 4 points"));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let (imax, imin) = (argmax(y), argmin(y));
    let dip = median - y[imin] > y[imax] - median;
    let peak_idx = if dip { imin } else { imax };
    let level = 0.5 * (y[peak_idx] + median);
    let beyond = |v: f64| if dip { v > level } else { v < level };
    let mut left = peak_idx;
    while left > 0 && !beyond(y[left]) {
        left -= 1;
    }
    let mut right = peak_idx;
    while right + 1 < y.len() && !beyond(y[right]) {
        right += 1;
    }
    let span = (x[x.len() - 1] - x[0]).abs();
    let fwhm0 = (x[right] - x[left]).abs().max(span / x.len() as f64);
    let center0 = x[peak_idx];
    let shape: Vec<f64> = x.iter().map(|&v| lorentzian(v, &[0.0, 1.0, center0, fwhm0])).collect();
    let (amp0, off0) = linear_init(&shape, y);
    let bounds = Bounds {
        lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY, 1e-9 * span.max(1e-300)],
        upper: vec![f64::INFINITY; 4],
    };
    fit(
        &lorentzian,
        data,
        &["offset", "amplitude", "center", "fwhm"],
        &[off0, amp0, center0, fwhm0],
        &bounds,
        opts,
    )
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0)
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0)
}

/// Names of the Rydberg-EIT spectrum parameters, in model order.
pub const RYDBERG_EIT_PARAMS: [&str; 6] = ["amplitude", "offset", "p_s", "gamma_eit", "omega_c", "u_int"];

/// Absorption model `offset + amplitude · Im χ` of an array in which a
/// fraction `p_s` of atoms is blockaded. Parameters follow
/// [`RYDBERG_EIT_PARAMS`]; `gamma_eit` is the half width `Γe/2` of the
/// probe transition, `u_int` shifts the Rydberg level. The control field is
/// on resonance and `Γr` comes from `transition`.
pub fn rydberg_eit_model(transition: &TransitionParams, delta_mhz: f64, p: &[f64]) -> f64 {
    let eval = || -> Result<f64> {
        let tr = TransitionParams::new(
            Frequency::from_cyclic_mhz(2.0 * p[3])?,
            transition.gamma_r(),
            transition.lambda_p(),
            transition.lambda_c(),
        )?;
        let cond = EitConditions::new(
            LaserDrive::from_mhz(0.0, delta_mhz)?,
            LaserDrive::from_mhz(p[4], 0.0)?,
            tr,
        )
        .with_u_int(Frequency::from_cyclic_mhz(p[5])?);
        Ok(chi_rydberg_eit(&cond, p[2])?.im())
    };
    match eval() {
        Ok(v) => p[1] + p[0] * v,
        Err(_) => f64::NAN,
    }
}

/// Rydberg-EIT spectrum fit with six free parameters (see
/// [`RYDBERG_EIT_PARAMS`]). `x` is the probe detuning in MHz.
pub fn fit_rydberg_eit_spectrum(
    data: FitData<'_>,
    transition: &TransitionParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    eit_fit(data, transition, opts, false)
}

/// Plain EIT spectrum: the Rydberg-EIT model with `p_s` held at zero.
pub fn fit_eit_spectrum(
    data: FitData<'_>,
    transition: &TransitionParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    eit_fit(data, transition, opts, true)
}

fn eit_fit(
    data: FitData<'_>,
    transition: &TransitionParams,
    opts: &FitOptions,
    plain: bool,
) -> Result<FitResult> {
    let (x, y) = (data.x, data.y);
    if x.len() < 8 {
        return Err(Error::invalid("data", "EIT fit needs at least 8 points"));
    }
    let gamma0 = transition.gamma_e().cyclic_mhz() / 2.0;
    let maxima = two_largest_maxima(x, y);
    let omega_c_guesses: Vec<f64> = match maxima {
        Some((a, b)) => vec![(b - a).abs(), 0.7 * (b - a).abs()],
        None => vec![2.0 * gamma0, 4.0 * gamma0],
    };
    let model = |d: f64, p: &[f64]| rydberg_eit_model(transition, d, p);
    let p_s_guesses: &[f64] = if plain { &[0.0] } else { &[0.05, 0.3] };
    let bounds = Bounds {
        lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 1e-3, 0.0, -100.0],
        upper: vec![
            f64::INFINITY,
            f64::INFINITY,
            if plain { 0.0 } else { 1.0 },
            100.0,
            500.0,
            100.0,
        ],
    };
    let mut candidates = Vec::new();
    for &oc in &omega_c_guesses {
        for &ps in p_s_guesses {
            let mut init = [1.0, 0.0, ps, gamma0, oc.max(1e-3), 0.0];
            let shape: Vec<f64> = x.iter().map(|&d| model(d, &init)).collect();
            let (a, b) = linear_init(&shape, y);
            init[0] = a;
            init[1] = b;
            candidates.push(fit(&model, data, &RYDBERG_EIT_PARAMS, &init, &bounds, opts));
        }
    }
    best_of(candidates)
}

/// Positions of the two highest local maxima of a lightly smoothed copy
/// of `y`, ordered by `x`.
fn two_largest_maxima(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = y.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (1..n - 1)
        .filter(|&i| smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1])
        .map(|i| (smooth[i], x[i]))
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (a, b) = (peaks[0].1, peaks[1].1);
    Some((a.min(b), a.max(b)))
}

/// Tuning of the damped-beating Rabi fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiFitOptions {
    /// Fraction of shots without an ancilla atom. It only adds a constant
    /// that is degenerate with `offset`/`amplitude`, so it is held fixed.
    pub w0: f64,
    pub fit: FitOptions,
}

impl Default for RabiFitOptions {
    fn default() -> Self {
        RabiFitOptions {
            w0: 0.0,
            fit: FitOptions::default(),
        }
    }
}

/// Free parameters of the Rabi fit, in model order.
pub const RABI_FREE_PARAMS: [&str; 5] = ["omega_uv", "tau_decay", "w2", "amplitude", "offset"];

/// `offset + amplitude · P_g(t)` with weights `(w0, 1 − w0 − w2, w2)`.
/// `t` in µs, `omega_uv` in cyclic MHz, `tau_decay` in µs.
pub fn damped_beating_rabi(w0: f64, t_us: f64, p: &[f64]) -> f64 {
    let w2 = p[2];
    let w1 = 1.0 - w0 - w2;
    let model = Frequency::from_cyclic_mhz(p[0]).and_then(|om| {
        RabiModel::new(om, p[1] * 1e-6, [w0, w1.max(0.0), w2], p[3], p[4])
    });
    match model {
        Ok(m) => p[4] + p[3] * rabi_population(&m, t_us * 1e-6),
        Err(_) => f64::NAN,
    }
}

/// Damped Rabi oscillation with two-atom beating. The returned result lists
/// `omega_uv, tau_decay, w0, w1, w2, amplitude, offset`; `w0` is fixed and
/// `w1 = 1 − w0 − w2` is derived, with covariance propagated.
///
/// Initial frequencies come from a periodogram peak, tried both as `Ω` and
/// as `√2 Ω`.
pub fn fit_damped_beating_rabi(data: FitData<'_>, opts: &RabiFitOptions) -> Result<FitResult> {
    let (t, y) = (data.x, data.y);
    if !(0.0..1.0).contains(&opts.w0) {
        return Err(Error::invalid("w0", "must lie in [0, 1)"));
    }
    if t.len() < 8 {
        return Err(Error::invalid("data", "Rabi fit needs at least 8 points"));
    }
    let span = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return Err(Error::invalid("data", "time points must span a nonzero interval"));
    }
    let f_peak = periodogram_peak(t, y, span);
    let w0 = opts.w0;
    let model = move |x: f64, p: &[f64]| damped_beating_rabi(w0, x, p);
    let bounds = Bounds {
        lower: vec![1e-6, 1e-3 * span, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
        upper: vec![1e3, 1e4 * span, 1.0 - w0, f64::INFINITY, f64::INFINITY],
    };
    let mut candidates = Vec::new();
    for f0 in [f_peak, f_peak / 2f64.sqrt()] {
        for w2 in [0.05f64, 0.3] {
            for tau in [0.3 * span, 2.0 * span] {
                let mut init = [f0.max(2e-6), tau, w2.min(1.0 - w0), 1.0, 0.0];
                let shape: Vec<f64> = t.iter().map(|&x| model(x, &init)).collect();
                let (a, b) = linear_init(&shape, y);
                init[3] = a;
                init[4] = b;
                candidates.push(fit(&model, data, &RABI_FREE_PARAMS, &init, &bounds, &opts.fit));
            }
        }
    }
    let r = best_of(candidates)?;
    Ok(expand_rabi_result(r, w0))
}

/// Inserts the fixed `w0` and derived `w1` into a Rabi fit result.
fn expand_rabi_result(r: FitResult, w0: f64) -> FitResult {
    // output = T · free + const, rows: omega, tau, w0, w1, w2, amplitude, offset
    let rows: [(Option<usize>, f64); 7] = [
        (Some(0), 1.0),
        (Some(1), 1.0),
        (None, 0.0),
        (Some(2), -1.0),
        (Some(2), 1.0),
        (Some(3), 1.0),
        (Some(4), 1.0),
    ];
    let tm = DMatrix::from_fn(7, 5, |i, j| match rows[i] {
        (Some(k), s) if k == j => s,
        _ => 0.0,
    });
    let covariance = &tm * &r.covariance * tm.transpose();
    let params = vec![
        r.params[0],
        r.params[1],
        w0,
        1.0 - w0 - r.params[2],
        r.params[2],
        r.params[3],
        r.params[4],
    ];
    let sd = (0..7).map(|k| covariance[(k, k)].max(0.0).sqrt()).collect();
    FitResult {
        names: ["omega_uv", "tau_decay", "w0", "w1", "w2", "amplitude", "offset"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        params,
        sd,
        covariance,
        ..r
    }
}

/// Frequency (cyclic, inverse time unit of `t`) of the largest periodogram
/// peak of the mean-subtracted data, scanned up to the mean-spacing Nyquist
/// limit.
pub fn periodogram_peak(t: &[f64], y: &[f64], span: f64) -> f64 {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let f_max = 0.5 * (n - 1) as f64 / span;
    let df = 0.1 / span;
    let steps = ((f_max / df).ceil() as usize).max(2);
    let mut best = (0.0, df);
    for k in 1..=steps {
        let f = k as f64 * df;
        let w = 2.0 * PI * f;
        let (mut c, mut s) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            c += (yi - mean) * (w * ti).cos();
            s += (yi - mean) * (w * ti).sin();
        }
        let p = c * c + s * s;
        if p > best.0 {
            best = (p, f);
        }
    }
    best.1
}

/// Transmittance limits for the lifetime fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittanceBounds {
    pub mirror: f64,
    pub eit: f64,
}

/// Lifetime fit result with a profile-likelihood lower limit on `tau` when
/// the data do not constrain it.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeFit {
    pub result: FitResult,
    /// Smallest `tau` (µs) whose profile chi-square stays within 1 of the
    /// best fit; set only when `tau` is unidentifiable.
    pub tau_lower_bound: Option<f64>,
}

/// Names of the lifetime fit parameters, in model order.
pub const LIFETIME_PARAMS: [&str; 3] = ["eta_init", "tau", "offset"];

/// `offset − (T_EIT − T_mirror) · P_P(δt)`, with `P_P` the mean Rydberg
/// population during a probe window of `probe_us`.
pub fn lifetime_model(limits: TransmittanceBounds, probe_us: f64, delay_us: f64, p: &[f64]) -> f64 {
    match AncillaLifetime::new(p[0], p[1] * 1e-6, probe_us * 1e-6, delay_us.max(0.0) * 1e-6) {
        Ok(lt) => p[2] - (limits.eit - limits.mirror) * rydberg_fraction_vs_delay(&lt),
        Err(_) => f64::NAN,
    }
}

/// Upper limit on `tau` in µs.
const TAU_MAX_US: f64 = 1e5;

/// Fits `η_init`, `τ` (µs) and the offset (within `[T_mirror, T_EIT]`) to
/// transmittance versus delay (µs).
pub fn fit_lifetime(
    data: FitData<'_>,
    limits: TransmittanceBounds,
    probe_us: f64,
    opts: &FitOptions,
) -> Result<LifetimeFit> {
    if data.x.len() < 4 {
        return Err(Error::invalid("data", "lifetime fit needs at least 4 delay points"));
    }
    if !(limits.mirror < limits.eit) {
        return Err(Error::invalid("bounds", "T_mirror must be below T_EIT"));
    }
    if !(probe_us > 0.0) {
        return Err(Error::invalid("probe_us", "must be > 0"));
    }
    if data.x.iter().any(|&d| d < 0.0) {
        return Err(Error::invalid("delay", "delays must be >= 0"));
    }
    let model = |d: f64, p: &[f64]| lifetime_model(limits, probe_us, d, p);
    let bounds = Bounds {
        lower: vec![0.0, 0.1, limits.mirror],
        upper: vec![1.0, TAU_MAX_US, limits.eit],
    };
    let span = data.x.iter().cloned().fold(0.0, f64::max).max(probe_us);
    let mut candidates = Vec::new();
    for tau in [0.3 * span, span, 5.0 * span] {
        for eta in [0.3, 0.9] {
            candidates.push(fit(&model, data, &LIFETIME_PARAMS, &[eta, tau, limits.eit], &bounds, opts));
        }
    }
    let mut result = best_of(candidates)?;
    let tau = result.get("tau");
    let weak = result.is_at_bound("tau")
        || result.is_flagged_unidentifiable("tau")
        || !(result.sd_of("tau") < tau);
    let mut tau_lower_bound = None;
    if weak {
        if !result.is_flagged_unidentifiable("tau") {
            result.flags.push(FitFlag::Unidentifiable("tau".into()));
        }
        let chi_best = result.chi_sq;
        let profile = |tau_fixed: f64| -> Result<f64> {
            let b = Bounds {
                lower: vec![0.0, tau_fixed, limits.mirror],
                upper: vec![1.0, tau_fixed, limits.eit],
            };
            let init = [result.get("eta_init"), tau_fixed, result.get("offset")];
            Ok(fit(&model, data, &LIFETIME_PARAMS, &init, &b, opts)?.chi_sq)
        };
        let mut hi = tau;
        let mut lo = hi;
        while lo > 0.1 && profile(lo)? <= chi_best + 1.0 {
            hi = lo;
            lo *= 0.5;
        }
        lo = lo.max(0.1);
        if profile(lo)? > chi_best + 1.0 {
            for _ in 0..40 {
                let mid = (lo * hi).sqrt();
                if profile(mid)? > chi_best + 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        tau_lower_bound = Some(hi);
    }
    Ok(LifetimeFit {
        result,
        tau_lower_bound,
    })
}

/// Ordinary least-squares loss line `y = intercept − rate · x`. Standard
/// deviations use the residual variance with `n − 2` degrees of freedom
/// (NaN for two points).
pub fn fit_linear_loss(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("data", "x and y differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("data", "at least 2 points required"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("data", "non-finite value"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 1e-300 * (1.0 + mx * mx)) {
        return Err(Error::invalid("x", "all x values coincide"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let rate = -sxy / sxx;
    let intercept = my + rate * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - (intercept - rate * a)).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let s2 = if x.len() > 2 { rss / (n - 2.0) } else { f64::NAN };
    let var_rate = s2 / sxx;
    let cov_ri = mx * var_rate;
    let var_int = s2 * (1.0 / n + mx * mx / sxx);
    let covariance = DMatrix::from_row_slice(2, 2, &[var_rate, cov_ri, cov_ri, var_int]);
    Ok(FitResult {
        names: vec!["rate".into(), "intercept".into()],
        params: vec![rate, intercept],
        sd: vec![var_rate.sqrt(), var_int.sqrt()],
        covariance,
        chi_sq: rss,
        reduced_chi_sq: if x.len() > 2 { s2 } else { 0.0 },
        residuals,
        converged: true,
        n_iter: 0,
        flags: Vec::new(),
    })
}

/// Fits `sd = b · √mean` through the origin by least squares in `√mean`.
/// Returns the single parameter `b`.
pub fn fit_sqrt_noise(means: &[f64], sds: &[f64]) -> Result<FitResult> {
    if means.len() != sds.len() || means.is_empty() {
        return Err(Error::invalid("data", "means and sds must be non-empty and equal length"));
    }
    if means.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || sds.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("data", "means must be >= 0 and values finite"));
    }
    let sum_m: f64 = means.iter().sum();
    if !(sum_m > 0.0) {
        return Err(Error::invalid("means", "at least one mean must be positive"));
    }
    let b = means.iter().zip(sds).map(|(m, s)| m.sqrt() * s).sum::<f64>() / sum_m;
    let residuals: Vec<f64> = means.iter().zip(sds).map(|(m, s)| s - b * m.sqrt()).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let n = means.len();
    let s2 = if n > 1 { rss / (n - 1) as f64 } else { f64::NAN };
    let var_b = s2 / sum_m;
    Ok(FitResult {
        names: vec!["b".into()],
        params: vec![b],
        sd: vec![var_b.sqrt()],
        covariance: DMatrix::from_element(1, 1, var_b),
        chi_sq: rss,
        reduced_chi_sq: if n > 1 { s2 } else { 0.0 },
        residuals,
        converged: true,
        n_iter: 0,
        flags: Vec::new(),
    })
}

/// Absorption `Im χ` of a Lorentzian line of full width `gamma_mhz`; used to
/// build synthetic mirror spectra.
pub fn two_level_absorption(delta_mhz: f64, gamma_mhz: f64) -> Result<f64> {
    Ok(chi_two_level(Frequency::from_cyclic_mhz(delta_mhz)?, Frequency::from_cyclic_mhz(gamma_mhz)?)?.im())
}
