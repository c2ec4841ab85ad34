//! Bounded Levenberg–Marquardt least squares and the fit models used for
//! spectra, Rabi oscillations, lifetimes, loss rates and camera noise.
//!
//! The engine is unit agnostic. The model wrappers in [`models`] work in
//! cyclic MHz and microseconds.

pub mod models;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tuning of the minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest cosine between the residual
    /// vector and a free Jacobian column.
    pub gtol: f64,
    /// Relative forward-difference step for the Jacobian.
    pub jac_step: f64,
    /// Multiply the covariance by the reduced chi-square.
    pub scale_covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            gtol: 1e-8,
            jac_step: 1e-6,
            scale_covariance: false,
        }
    }
}

/// Per-parameter box constraints; use infinities for open sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn clamp(&self, p: &mut [f64]) {
        for (k, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitFlag {
    /// The parameter ended on one of its bounds.
    AtBound(String),
    /// The data do not constrain this parameter (singular curvature).
    Unidentifiable(String),
    /// The iteration limit was reached or no downhill step could be found
    /// before the gradient test passed.
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Standard deviations from the covariance diagonal.
    pub sd: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub chi_sq: f64,
    pub reduced_chi_sq: f64,
    /// Weighted residuals `(y − f)/σ`.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub flags: Vec<FitFlag>,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Value of a named parameter; panics on unknown names.
    pub fn get(&self, name: &str) -> f64 {
        self.params[self.index(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }

    pub fn sd_of(&self, name: &str) -> f64 {
        self.sd[self.index(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }

    pub fn is_flagged_unidentifiable(&self, name: &str) -> bool {
        self.flags
            .iter()
            .any(|f| matches!(f, FitFlag::Unidentifiable(n) if n == name))
    }

    pub fn is_at_bound(&self, name: &str) -> bool {
        self.flags
            .iter()
            .any(|f| matches!(f, FitFlag::AtBound(n) if n == name))
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        let n = self.params.len();
        DMatrix::from_fn(n, n, |i, j| {
            let d = self.sd[i] * self.sd[j];
            if d > 0.0 {
                self.covariance[(i, j)] / d
            } else if i == j {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Plain-text report: one line per parameter, then the correlation
    /// matrix.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "converged: {}  iterations: {}  chi2: {:.6}  reduced chi2: {:.6}",
            self.converged, self.n_iter, self.chi_sq, self.reduced_chi_sq
        );
        let _ = writeln!(out, "{:<14} {:>16} {:>16}", "name", "value", "sd");
        for k in 0..self.params.len() {
            let _ = writeln!(out, "{:<14} {:>16.8e} {:>16.8e}", self.names[k], self.params[k], self.sd[k]);
        }
        let _ = writeln!(out, "correlation:");
        let corr = self.correlation();
        for i in 0..self.params.len() {
            let row: Vec<String> = (0..self.params.len()).map(|j| format!("{:>7.3}", corr[(i, j)])).collect();
            let _ = writeln!(out, "{:<14} {}", self.names[i], row.join(" "));
        }
        for f in &self.flags {
            let _ = writeln!(out, "flag: {f:?}");
        }
        out
    }
}

/// Data for a weighted fit.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sigma: &'a [f64],
}

impl<'a> FitData<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], sigma: &'a [f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() != sigma.len() {
            return Err(Error::invalid(
                "data",
                format!("length mismatch x={} y={} sigma={}", x.len(), y.len(), sigma.len()),
            ));
        }
        if x.is_empty() {
            return Err(Error::invalid("data", "no points"));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data", "non-finite x or y"));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("sigma", "all sigma_y must be finite and > 0"));
        }
        Ok(FitData { x, y, sigma })
    }
}

struct Problem<'a, F> {
    model: &'a F,
    data: FitData<'a>,
    bounds: &'a Bounds,
    opts: FitOptions,
}

impl<F: Fn(f64, &[f64]) -> f64> Problem<'_, F> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let d = &self.data;
        DVector::from_iterator(
            d.x.len(),
            (0..d.x.len()).map(|i| (d.y[i] - (self.model)(d.x[i], p)) / d.sigma[i]),
        )
    }

    fn step(&self, p: &[f64], k: usize, rel: f64) -> f64 {
        rel * p[k].abs().max(1.0)
    }

    /// Jacobian of the model `∂f/∂p / σ` (the negative residual Jacobian).
    fn jacobian(&self, p: &[f64], r0: &DVector<f64>, central: bool) -> DMatrix<f64> {
        let n = self.data.x.len();
        let m = p.len();
        let mut jac = DMatrix::zeros(n, m);
        let mut q = p.to_vec();
        for k in 0..m {
            if central {
                let h = self.step(p, k, 1e-5);
                let (lo, hi) = (
                    (p[k] - h).max(self.bounds.lower[k]),
                    (p[k] + h).min(self.bounds.upper[k]),
                );
                q[k] = hi;
                let rp = self.residuals(&q);
                q[k] = lo;
                let rm = self.residuals(&q);
                q[k] = p[k];
                let span = hi - lo;
                if span > 0.0 {
                    for i in 0..n {
                        jac[(i, k)] = (rm[i] - rp[i]) / span;
                    }
                }
            } else {
                let mut h = self.step(p, k, self.opts.jac_step);
                if p[k] + h > self.bounds.upper[k] {
                    h = -h;
                }
                q[k] = p[k] + h;
                let rh = self.residuals(&q);
                q[k] = p[k];
                for i in 0..n {
                    jac[(i, k)] = (r0[i] - rh[i]) / h;
                }
            }
        }
        jac
    }

    /// Free-parameter mask: parameters pinned on a bound by a gradient
    /// pointing outward are excluded.
    fn free_mask(&self, p: &[f64], grad: &DVector<f64>) -> Vec<bool> {
        (0..p.len())
            .map(|k| {
                let lo = self.bounds.lower[k];
                let hi = self.bounds.upper[k];
                if lo == hi {
                    return false;
                }
                // descent direction is −grad
                !((p[k] <= lo && grad[k] > 0.0) || (p[k] >= hi && grad[k] < 0.0))
            })
            .collect()
    }

    fn gradient_cosine(&self, jac: &DMatrix<f64>, r: &DVector<f64>, free: &[bool]) -> f64 {
        let rn = r.norm();
        if rn == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for k in 0..jac.ncols() {
            if !free[k] {
                continue;
            }
            let col = jac.column(k);
            let cn = col.norm();
            if cn > 0.0 {
                worst = worst.max((col.dot(r)).abs() / (cn * rn));
            }
        }
        worst
    }
}

/// Minimizes `Σ ((y − model(x, p))/σ)²` subject to `bounds`.
///
/// Iterates Levenberg–Marquardt with forward-difference Jacobians; once the
/// forward-difference iteration stalls the Jacobian switches to central
/// differences so the gradient test can reach `gtol`. A fit that stops
/// without passing the gradient test is returned with `converged = false`
/// and the best parameters found.
pub fn fit<F: Fn(f64, &[f64]) -> f64>(
    model: &F,
    data: FitData<'_>,
    names: &[&str],
    init: &[f64],
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitResult> {
    let m = init.len();
    if names.len() != m || bounds.lower.len() != m || bounds.upper.len() != m {
        return Err(Error::invalid("parameters", "names, init and bounds must have equal length"));
    }
    for k in 0..m {
        let (lo, hi) = (bounds.lower[k], bounds.upper[k]);
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid("bounds", format!("inconsistent bounds for {}: [{lo}, {hi}]", names[k])));
        }
        if !init[k].is_finite() || init[k] < lo || init[k] > hi {
            return Err(Error::invalid("init", format!("{} = {} outside [{lo}, {hi}]", names[k], init[k])));
        }
    }
    let prob = Problem {
        model,
        data,
        bounds,
        opts: *opts,
    };

    let mut p = init.to_vec();
    let mut r = prob.residuals(&p);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("model is not finite at the initial parameters".into()));
    }
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut central = false;
    let mut converged = chi2 == 0.0;
    let mut n_iter = 0;
    let mut diag_scale = DVector::<f64>::zeros(m);

    while !converged && n_iter < opts.max_iter {
        let jac = prob.jacobian(&p, &r, central);
        let a = jac.transpose() * &jac;
        // gradient of χ²/2 with respect to p is −Jᵀr for the model Jacobian
        let grad = -(jac.transpose() * &r);
        let free = prob.free_mask(&p, &grad);
        if prob.gradient_cosine(&jac, &r, &free) <= opts.gtol {
            if central {
                converged = true;
                break;
            }
            central = true;
            continue;
        }
        for k in 0..m {
            diag_scale[k] = diag_scale[k].max(a[(k, k)]);
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut lhs = a.clone();
            let mut rhs = -grad.clone();
            for k in 0..m {
                if free[k] {
                    lhs[(k, k)] += lambda * diag_scale[k].max(1e-300);
                } else {
                    for j in 0..m {
                        lhs[(k, j)] = 0.0;
                        lhs[(j, k)] = 0.0;
                    }
                    lhs[(k, k)] = 1.0;
                    rhs[k] = 0.0;
                }
            }
            let delta = match lhs.cholesky() {
                Some(c) => c.solve(&rhs),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            bounds.clamp(&mut trial);
            let r_trial = prob.residuals(&trial);
            let chi2_trial = r_trial.norm_squared();
            if chi2_trial.is_finite() && chi2_trial < chi2 {
                let rel_gain = (chi2 - chi2_trial) / chi2.max(f64::MIN_POSITIVE);
                p = trial;
                r = r_trial;
                chi2 = chi2_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                n_iter += 1;
                if rel_gain < 1e-12 {
                    central = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if chi2 == 0.0 {
            converged = true;
            break;
        }
        if !accepted {
            if central {
                break;
            }
            central = true;
            lambda = 1e-3;
        }
    }

    finish(&prob, names, p, r, chi2, converged, n_iter)
}

fn finish<F: Fn(f64, &[f64]) -> f64>(
    prob: &Problem<'_, F>,
    names: &[&str],
    p: Vec<f64>,
    r: DVector<f64>,
    chi2: f64,
    converged: bool,
    n_iter: usize,
) -> Result<FitResult> {
    let m = p.len();
    let n = r.len();
    let jac = prob.jacobian(&p, &r, true);
    let mut flags = Vec::new();
    let mut fixed = vec![false; m];
    for k in 0..m {
        let (lo, hi) = (prob.bounds.lower[k], prob.bounds.upper[k]);
        if lo == hi {
            fixed[k] = true;
        } else if p[k] <= lo || p[k] >= hi {
            flags.push(FitFlag::AtBound(names[k].to_string()));
        }
    }
    let free_idx: Vec<usize> = (0..m).filter(|&k| !fixed[k]).collect();
    let nf = free_idx.len();
    let jf = DMatrix::from_fn(n, nf, |i, j| jac[(i, free_idx[j])]);
    let a = jf.transpose() * &jf;

    // scale columns so the singularity test is unit independent
    let scale: Vec<f64> = (0..nf).map(|k| a[(k, k)].sqrt()).collect();
    let mut cov_f = DMatrix::zeros(nf, nf);
    if nf > 0 {
        let scaled = DMatrix::from_fn(nf, nf, |i, j| {
            let d = scale[i] * scale[j];
            if d > 0.0 {
                a[(i, j)] / d
            } else if i == j {
                0.0
            } else {
                0.0
            }
        });
        let eig = scaled.clone().symmetric_eigen();
        let emax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-10 * emax.max(f64::MIN_POSITIVE);
        let mut inv = DMatrix::zeros(nf, nf);
        for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(idx);
            if ev > tol {
                inv += v * v.transpose() / ev;
            } else {
                for k in 0..nf {
                    if v[k].abs() > 0.1 {
                        let name = names[free_idx[k]].to_string();
                        if !flags.contains(&FitFlag::Unidentifiable(name.clone())) {
                            flags.push(FitFlag::Unidentifiable(name));
                        }
                    }
                }
            }
        }
        for i in 0..nf {
            if scale[i] == 0.0 {
                let name = names[free_idx[i]].to_string();
                if !flags.contains(&FitFlag::Unidentifiable(name.clone())) {
                    flags.push(FitFlag::Unidentifiable(name));
                }
            }
        }
        cov_f = DMatrix::from_fn(nf, nf, |i, j| {
            let d = scale[i] * scale[j];
            if d > 0.0 {
                inv[(i, j)] / d
            } else {
                0.0
            }
        });
    }
    let dof = n.saturating_sub(nf);
    let reduced = if dof > 0 { chi2 / dof as f64 } else { 0.0 };
    if prob.opts.scale_covariance && dof > 0 {
        cov_f *= reduced;
    }
    let mut covariance = DMatrix::zeros(m, m);
    for (i, &gi) in free_idx.iter().enumerate() {
        for (j, &gj) in free_idx.iter().enumerate() {
            covariance[(gi, gj)] = cov_f[(i, j)];
        }
    }
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    let sd = (0..m).map(|k| covariance[(k, k)].max(0.0).sqrt()).collect();
    if !converged {
        flags.push(FitFlag::NotConverged);
    }
    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        params: p,
        sd,
        covariance,
        chi_sq: chi2,
        reduced_chi_sq: reduced,
        residuals: r.iter().copied().collect(),
        converged,
        n_iter,
        flags,
    })
}
