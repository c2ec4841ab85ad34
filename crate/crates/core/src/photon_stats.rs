//! Monte-Carlo histograms of detected photon numbers with EMCCD gain noise,
//! maximum-likelihood estimation of the switched photon number, and the
//! camera count-to-photon calibration.
//!
//! Every random draw of sample `i` comes from stream `i` of a ChaCha8
//! generator seeded with the run seed, so results do not depend on how the
//! samples are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure_finite, ensure_positive, ensure_probability, Error, Result};
use crate::fitting::models::fit_sqrt_noise;
use crate::fitting::FitResult;

/// A value with a Gaussian uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uncertain {
    pub mean: f64,
    pub sd: f64,
}

impl Uncertain {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        ensure_finite("mean", mean)?;
        ensure_finite("sd", sd)?;
        if sd < 0.0 {
            return Err(Error::invalid("sd", "must be >= 0"));
        }
        Ok(Uncertain { mean, sd })
    }

    /// Quantile `u ∈ [0, 1)` of the Gaussian truncated to `[lo, hi]`.
    fn truncated_quantile(&self, u: f64, lo: f64, hi: f64) -> f64 {
        if self.sd == 0.0 {
            return self.mean.clamp(lo, hi);
        }
        let n = Normal::new(self.mean, self.sd).expect("validated");
        let (a, b) = (n.cdf(lo), n.cdf(hi));
        if b - a < 1e-300 {
            // all mass beyond one end
            return if self.mean < lo { lo } else { hi };
        }
        n.inverse_cdf(a + u * (b - a)).clamp(lo, hi)
    }
}

/// Parameters of the reflected-photon detection experiment. Times in
/// seconds, photon numbers in detected photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel {
    /// Poisson mean of the photons detected with the mirror transparent.
    pub mu_background: f64,
    /// Additional Poisson mean while the ancilla switches the mirror for the
    /// whole probe window.
    pub mu_switched: f64,
    pub prep_fidelity: Uncertain,
    pub tau: Uncertain,
    /// Time from ancilla excitation to the start of the probe window.
    pub delay: f64,
    pub probe_duration: f64,
    /// Variance of the amplified signal over its mean (2 for an EMCCD at
    /// high gain, 1 for no excess noise).
    pub excess_noise_factor: f64,
    /// Photons per camera count.
    pub alpha: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel {
            mu_background: 18.3,
            mu_switched: 65.0,
            prep_fidelity: Uncertain { mean: 0.85, sd: 0.10 },
            tau: Uncertain { mean: 27e-6, sd: 6e-6 },
            delay: 4e-6,
            probe_duration: 60e-6,
            excess_noise_factor: 2.0,
            // mean of the gain-ratio (0.298) and shot-noise (0.32) calibrations
            alpha: 0.309,
        }
    }
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu_background", self.mu_background), ("mu_switched", self.mu_switched)] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        ensure_probability("prep_fidelity", self.prep_fidelity.mean)?;
        Uncertain::new(self.prep_fidelity.mean, self.prep_fidelity.sd)?;
        ensure_positive("tau", self.tau.mean)?;
        Uncertain::new(self.tau.mean, self.tau.sd)?;
        ensure_finite("delay", self.delay)?;
        if self.delay < 0.0 {
            return Err(Error::invalid("delay", "must be >= 0"));
        }
        ensure_positive("probe_duration", self.probe_duration)?;
        ensure_finite("excess_noise_factor", self.excess_noise_factor)?;
        if self.excess_noise_factor < 1.0 {
            return Err(Error::invalid("excess_noise_factor", "must be >= 1"));
        }
        ensure_positive("alpha", self.alpha)?;
        Ok(())
    }

    pub fn counts_to_photons(&self, counts: f64) -> f64 {
        self.alpha * counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncillaState {
    Ground,
    Rydberg,
}

/// Equal-width bins `[lo + k·width, lo + (k+1)·width)`. Values below the
/// first or above the last edge are counted in the end bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub lo: f64,
    pub width: f64,
    pub n_bins: usize,
}

impl Default for Binning {
    fn default() -> Self {
        Binning {
            lo: 0.0,
            width: 2.0,
            n_bins: 100,
        }
    }
}

impl Binning {
    fn validate(&self) -> Result<()> {
        ensure_finite("lo", self.lo)?;
        ensure_positive("width", self.width)?;
        if self.n_bins == 0 {
            return Err(Error::invalid("n_bins", "must be >= 1"));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins).map(|k| self.lo + k as f64 * self.width).collect()
    }

    fn index(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.width).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.n_bins - 1)
        }
    }

    fn upper(&self) -> f64 {
        self.lo + self.n_bins as f64 * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_samples: usize,
    pub seed: u64,
    /// Mean and unbiased variance of the unbinned samples.
    pub sample_mean: f64,
    pub sample_variance: f64,
}

impl PhotonHistogram {
    fn binning(&self) -> Binning {
        Binning {
            lo: self.bin_edges[0],
            width: self.bin_edges[1] - self.bin_edges[0],
            n_bins: self.counts.len(),
        }
    }
}

/// Per-bin mean and standard deviation of the normalized histogram over
/// independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBand {
    pub bin_edges: Vec<f64>,
    /// Counts pooled over all runs.
    pub pooled: Vec<u64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub runs: usize,
    pub samples_per_run: usize,
}

/// Uniform draws consumed by every sample, in order: preparation fidelity,
/// presence, lifetime, decay moment.
struct ShotDraws([f64; 4]);

impl ShotDraws {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        ShotDraws([rng.random(), rng.random(), rng.random(), rng.random()])
    }

    /// Fraction of the probe window during which the ancilla is in the
    /// Rydberg state.
    fn alive_fraction(&self, model: &DetectionModel, state: AncillaState) -> f64 {
        if state == AncillaState::Ground {
            return 0.0;
        }
        let [u_eta, u_present, u_tau, u_decay] = self.0;
        let eta = model.prep_fidelity.truncated_quantile(u_eta, 0.0, 1.0);
        if u_present >= eta {
            return 0.0;
        }
        let tau = model
            .tau
            .truncated_quantile(u_tau, 0.0, f64::INFINITY)
            .max(f64::MIN_POSITIVE);
        let t_decay = -tau * (1.0 - u_decay).ln();
        ((t_decay - model.delay) / model.probe_duration).clamp(0.0, 1.0)
    }
}

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng)
}

/// Gain smearing of `n` detected photons: gamma with mean `n` and variance
/// `(F − 1)·n`, so that a Poisson input leaves with variance `F·mean`.
fn emccd(rng: &mut ChaCha8Rng, n: f64, excess: f64) -> f64 {
    if n <= 0.0 || excess <= 1.0 {
        return n;
    }
    let k = excess - 1.0;
    Gamma::new(n / k, k).expect("positive shape and scale").sample(rng)
}

fn sample_shot(model: &DetectionModel, state: AncillaState, seed: u64, index: u64) -> f64 {
    let mut rng = rng_for(seed, index);
    let f = ShotDraws::draw(&mut rng).alive_fraction(model, state);
    let n = poisson(&mut rng, model.mu_background) + poisson(&mut rng, model.mu_switched * f);
    emccd(&mut rng, n, model.excess_noise_factor)
}

fn histogram_from(samples: &[f64], binning: &Binning, seed: u64) -> PhotonHistogram {
    let mut counts = vec![0u64; binning.n_bins];
    for &x in samples {
        counts[binning.index(x)] += 1;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    PhotonHistogram {
        bin_edges: binning.edges(),
        counts,
        n_samples: samples.len(),
        seed,
        sample_mean: mean,
        sample_variance: var,
    }
}

/// Histogram of `n_samples` simulated shots.
pub fn simulate_histogram(
    model: &DetectionModel,
    state: AncillaState,
    n_samples: usize,
    binning: &Binning,
    seed: u64,
) -> Result<PhotonHistogram> {
    model.validate()?;
    binning.validate()?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be >= 1"));
    }
    let samples: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| sample_shot(model, state, seed, i))
        .collect();
    Ok(histogram_from(&samples, binning, seed))
}

/// `runs` independent histograms of `samples_per_run` shots each; run `r`
/// uses sample streams `r·samples_per_run ..`.
pub fn simulate_band(
    model: &DetectionModel,
    state: AncillaState,
    runs: usize,
    samples_per_run: usize,
    binning: &Binning,
    seed: u64,
) -> Result<HistogramBand> {
    model.validate()?;
    binning.validate()?;
    if runs < 2 || samples_per_run == 0 {
        return Err(Error::invalid("runs", "need >= 2 runs of >= 1 sample"));
    }
    let hists: Vec<Vec<u64>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut counts = vec![0u64; binning.n_bins];
            for i in 0..samples_per_run {
                let x = sample_shot(model, state, seed, (r * samples_per_run + i) as u64);
                counts[binning.index(x)] += 1;
            }
            counts
        })
        .collect();
    let nb = binning.n_bins;
    let norm = samples_per_run as f64;
    let mut pooled = vec![0u64; nb];
    let mut mean = vec![0.0; nb];
    let mut sd = vec![0.0; nb];
    for b in 0..nb {
        let vals: Vec<f64> = hists.iter().map(|h| h[b] as f64 / norm).collect();
        pooled[b] = hists.iter().map(|h| h[b]).sum();
        let m = vals.iter().sum::<f64>() / runs as f64;
        mean[b] = m;
        sd[b] = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
    }
    Ok(HistogramBand {
        bin_edges: binning.edges(),
        pooled,
        mean,
        sd,
        runs,
        samples_per_run,
    })
}

/// Maximum-likelihood switched photon number and its curvature error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchedMeanEstimate {
    pub mu_switched: f64,
    pub sd: f64,
    /// Observed shots in the bins used.
    pub tail_counts: u64,
}

/// Number of alive-fraction draws behind the likelihood model.
const LIKELIHOOD_DRAWS: u64 = 20_000;
const ALIVE_LEVELS: usize = 200;
const LIKELIHOOD_SEED: u64 = 0x5eed_0f_a11;

/// Probability that the gain-smeared signal of `n` photons lands in each
/// bin, for `n = 0..n_max`.
fn gain_bin_table(binning: &Binning, excess: f64, n_max: usize) -> Vec<Vec<f64>> {
    let edges = binning.edges();
    (0..=n_max)
        .map(|n| {
            let mut row = vec![0.0; binning.n_bins];
            if n == 0 || excess <= 1.0 {
                row[binning.index(n as f64)] = 1.0;
                return row;
            }
            let k = excess - 1.0;
            let g = GammaDist::new(n as f64 / k, 1.0 / k).expect("positive parameters");
            let mut prev = 0.0;
            for b in 0..binning.n_bins {
                let c = if b + 1 == binning.n_bins { 1.0 } else { g.cdf(edges[b + 1]) };
                row[b] = (c - prev).max(0.0);
                prev = c;
            }
            row
        })
        .collect()
}

fn poisson_pmf_into(lambda: f64, weight: f64, out: &mut [f64]) {
    if lambda <= 0.0 {
        out[0] += weight;
        return;
    }
    let ll = lambda.ln();
    for (n, o) in out.iter_mut().enumerate() {
        *o += weight * (n as f64 * ll - lambda - ln_gamma(n as f64 + 1.0)).exp();
    }
}

/// Fits `mu_switched` by maximizing the Poisson likelihood of the counts in
/// bins whose lower edge is at or above `tail_threshold`, with every other
/// model parameter held at `model`. The expected histogram combines the
/// alive-fraction distribution (sampled) with exact Poisson and gain
/// probabilities.
pub fn estimate_switched_mean(
    observed: &PhotonHistogram,
    model: &DetectionModel,
    tail_threshold: f64,
) -> Result<SwitchedMeanEstimate> {
    model.validate()?;
    ensure_finite("tail_threshold", tail_threshold)?;
    let binning = observed.binning();
    let edges = &observed.bin_edges;
    let tail: Vec<usize> = (0..binning.n_bins).filter(|&b| edges[b] >= tail_threshold).collect();
    if tail.is_empty() || tail_threshold < edges[0] {
        return Err(Error::invalid("tail_threshold", "outside the histogram support"));
    }
    let tail_counts: u64 = tail.iter().map(|&b| observed.counts[b]).sum();
    if tail_counts == 0 {
        return Err(Error::invalid("observed", "no counts above the tail threshold"));
    }

    // alive-fraction distribution on ALIVE_LEVELS + 1 levels
    let fractions: Vec<f64> = (0..LIKELIHOOD_DRAWS)
        .into_par_iter()
        .map(|i| ShotDraws::draw(&mut rng_for(LIKELIHOOD_SEED, i)).alive_fraction(model, AncillaState::Rydberg))
        .collect();
    let mut level_w = vec![0.0; ALIVE_LEVELS + 1];
    for f in &fractions {
        level_w[(f * ALIVE_LEVELS as f64).round() as usize] += 1.0 / LIKELIHOOD_DRAWS as f64;
    }

    let mu_hi = 2.0 * binning.upper() + 10.0;
    let lambda_max = model.mu_background + mu_hi;
    let n_max = (lambda_max + 12.0 * lambda_max.sqrt() + 30.0) as usize;
    let table = gain_bin_table(&binning, model.excess_noise_factor, n_max);
    let total = observed.n_samples as f64;

    let log_lik = |mu: f64| -> f64 {
        let mut q = vec![0.0; n_max + 1];
        for (l, &w) in level_w.iter().enumerate() {
            if w > 0.0 {
                let f = l as f64 / ALIVE_LEVELS as f64;
                poisson_pmf_into(model.mu_background + mu * f, w, &mut q);
            }
        }
        tail.iter()
            .map(|&b| {
                let p: f64 = q.iter().zip(&table).map(|(qn, row)| qn * row[b]).sum();
                let e = (total * p).max(1e-300);
                observed.counts[b] as f64 * e.ln() - e
            })
            .sum()
    };

    let n_grid = 200;
    let grid: Vec<f64> = (0..=n_grid).map(|k| mu_hi * k as f64 / n_grid as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&m| log_lik(m)).collect();
    let best = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n_grid)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (log_lik(c), log_lik(d));
    while b - a > 1e-6 * (1.0 + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = log_lik(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = log_lik(d);
        }
    }
    let mu = 0.5 * (a + b);
    let h = 1e-2 * (1.0 + mu);
    let m0 = mu.max(h);
    let curv = (log_lik(m0 + h) - 2.0 * log_lik(m0) + log_lik(m0 - h)) / (h * h);
    let sd = if curv < 0.0 { (-1.0 / curv).sqrt() } else { f64::INFINITY };
    Ok(SwitchedMeanEstimate {
        mu_switched: mu,
        sd,
        tail_counts,
    })
}

/// Photon-number calibration of the camera from shot noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    /// Photons per count.
    pub alpha: f64,
    pub sd: f64,
    /// Fit of `sd = b·√mean`, `b = √(2/α)`.
    pub fit: FitResult,
}

/// Fits `sd = √(2/α)·√mean` to `(mean_counts, sd_counts)` pairs.
pub fn camera_conversion_from_noise(pairs: &[(f64, f64)]) -> Result<CameraCalibration> {
    if pairs.len() < 2 {
        return Err(Error::invalid("pairs", "need at least two (mean, sd) pairs"));
    }
    if pairs.iter().any(|p| !(p.0 > 0.0)) {
        return Err(Error::invalid("pairs", "means must be positive"));
    }
    let first = pairs[0].0;
    if pairs.iter().all(|p| p.0 == first) {
        return Err(Error::invalid("pairs", "all means are equal"));
    }
    let means: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let sds: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let fit = fit_sqrt_noise(&means, &sds)?;
    let b = fit.params[0];
    if !(b > 0.0) {
        return Err(Error::Numeric("fitted noise slope is not positive".into()));
    }
    Ok(CameraCalibration {
        alpha: 2.0 / (b * b),
        sd: 4.0 * fit.sd[0] / (b * b * b),
        fit,
    })
}

/// Mean and standard deviation of `frames` simulated camera frames at each
/// mean count level, for a camera with `alpha` photons per count.
pub fn simulate_camera_noise(
    alpha: f64,
    excess_noise_factor: f64,
    mean_counts: &[f64],
    frames: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    ensure_positive("alpha", alpha)?;
    if !(excess_noise_factor >= 1.0) {
        return Err(Error::invalid("excess_noise_factor", "must be >= 1"));
    }
    if frames < 2 {
        return Err(Error::invalid("frames", "must be >= 2"));
    }
    mean_counts
        .iter()
        .enumerate()
        .map(|(level, &c)| {
            ensure_positive("mean_counts", c)?;
            let vals: Vec<f64> = (0..frames)
                .map(|f| {
                    let mut rng = rng_for(seed, (level * frames + f) as u64);
                    let n = poisson(&mut rng, alpha * c);
                    emccd(&mut rng, n, excess_noise_factor) / alpha
                })
                .collect();
            let m = vals.iter().sum::<f64>() / frames as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (frames - 1) as f64;
            Ok((m, v.sqrt()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn certain(model: DetectionModel) -> DetectionModel {
        DetectionModel {
            prep_fidelity: Uncertain { mean: 1.0, sd: 0.0 },
            tau: Uncertain { mean: 1e3, sd: 0.0 },
            excess_noise_factor: 1.0,
            ..model
        }
    }

    #[test]
    fn no_decay_limit_is_poisson_at_sum() {
        let m = certain(DetectionModel::default());
        let h = simulate_histogram(&m, AncillaState::Rydberg, 40_000, &Binning::default(), 3).unwrap();
        let mu: f64 = 18.3 + 65.0 * (1.0 - 4e-6 / 1e3 - 0.5 * 60e-6 / 1e3);
        let se = (mu / 40_000.0).sqrt();
        assert!((h.sample_mean - mu).abs() < 4.0 * se, "{}", h.sample_mean);
        assert!((h.sample_variance / h.sample_mean - 1.0).abs() < 0.05);
        assert_eq!(h.counts.iter().sum::<u64>(), 40_000);
    }

    #[test]
    fn ground_state_variance_doubles() {
        let h = simulate_histogram(&DetectionModel::default(), AncillaState::Ground, 50_000, &Binning::default(), 1)
            .unwrap();
        assert!((h.sample_mean - 18.3).abs() < 0.2);
        assert!((h.sample_variance / h.sample_mean - 2.0).abs() < 0.1);
    }

    #[test]
    fn identical_for_identical_seed() {
        let m = DetectionModel::default();
        let a = simulate_histogram(&m, AncillaState::Rydberg, 5000, &Binning::default(), 9).unwrap();
        let b = simulate_histogram(&m, AncillaState::Rydberg, 5000, &Binning::default(), 9).unwrap();
        let c = simulate_histogram(&m, AncillaState::Rydberg, 5000, &Binning::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn truncated_quantiles_stay_in_range() {
        let u = Uncertain { mean: 0.85, sd: 0.10 };
        for k in 0..100 {
            let x = u.truncated_quantile(k as f64 / 100.0, 0.0, 1.0);
            assert!((0.0..=1.0).contains(&x));
        }
        // median of a symmetric window is the mean
        assert_relative_eq!(u.truncated_quantile(0.5, 0.6, 1.1), 0.85, epsilon = 1e-9);
    }

    #[test]
    fn gain_table_rows_are_distributions() {
        let t = gain_bin_table(&Binning::default(), 2.0, 50);
        for row in &t {
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        let t1 = gain_bin_table(&Binning::default(), 1.0, 5);
        assert_eq!(t1[5][2], 1.0);
    }

    #[test]
    fn estimator_rejects_bad_thresholds() {
        let m = DetectionModel::default();
        let h = simulate_histogram(&m, AncillaState::Ground, 2000, &Binning::default(), 2).unwrap();
        assert!(estimate_switched_mean(&h, &m, 500.0).is_err());
        // ground-state shots never reach 150 photons
        assert!(estimate_switched_mean(&h, &m, 150.0).is_err());
    }

    #[test]
    fn camera_exact_sqrt_two() {
        let pairs: Vec<(f64, f64)> = [10.0f64, 50.0, 200.0].iter().map(|&c| (c, (2.0 * c).sqrt())).collect();
        let cal = camera_conversion_from_noise(&pairs).unwrap();
        assert_relative_eq!(cal.alpha, 1.0, epsilon = 1e-12);
        assert!(camera_conversion_from_noise(&pairs[..1]).is_err());
        assert!(camera_conversion_from_noise(&[(5.0, 3.0), (5.0, 3.1)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn mean_rises_with_fidelity(lo in 0.1f64..0.5, step in 0.3f64..0.5, seed in 0u64..1000) {
            let base = DetectionModel::default();
            let mk = |eta: f64| DetectionModel { prep_fidelity: Uncertain { mean: eta, sd: 0.1 }, ..base };
            let b = Binning::default();
            let a = simulate_histogram(&mk(lo), AncillaState::Rydberg, 4000, &b, seed).unwrap();
            let c = simulate_histogram(&mk(lo + step), AncillaState::Rydberg, 4000, &b, seed).unwrap();
            prop_assert!(c.sample_mean > a.sample_mean);
        }

        #[test]
        fn counts_sum_to_samples(n in 1usize..300, seed in any::<u64>(), lo in -5.0f64..5.0) {
            let b = Binning { lo, width: 3.0, n_bins: 20 };
            let h = simulate_histogram(&DetectionModel::default(), AncillaState::Rydberg, n, &b, seed).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<u64>() as usize, n);
            prop_assert!(h.bin_edges.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
