//! Time-domain models: ancilla Rabi oscillations with two-atom beating,
//! Rydberg decay during the probe window, mixture spectra, collective
//! exchange on radial shells, Bloch-oscillation kinematics and radially
//! averaged transmission profiles.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure_finite, ensure_positive, ensure_probability, Error, Result};
use crate::pair_potentials::{effective_exchange_rate, PotentialDataset};
use crate::susceptibility::{chi_eit, chi_two_level, EitConditions};
use crate::units::{ArraySpec, Frequency, Length, PLANCK};

/// Damped Rabi oscillation of the ancilla ground-state population, with
/// a fraction of shots holding zero, one or two atoms at the ancilla site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiModel {
    omega_uv: Frequency,
    decay_time: f64,
    weights: [f64; 3],
    amplitude: f64,
    offset: f64,
}

impl RabiModel {
    /// `weights[n]` is the probability of `n` atoms; `decay_time` in s.
    pub fn new(
        omega_uv: Frequency,
        decay_time: f64,
        weights: [f64; 3],
        amplitude: f64,
        offset: f64,
    ) -> Result<Self> {
        ensure_finite("omega_uv", omega_uv.rad_per_s())?;
        ensure_positive("decay_time", decay_time)?;
        for w in weights {
            ensure_probability("weight", w)?;
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weights", format!("must sum to 1, got {sum}")));
        }
        ensure_finite("amplitude", amplitude)?;
        ensure_finite("offset", offset)?;
        Ok(RabiModel {
            omega_uv,
            decay_time,
            weights,
            amplitude,
            offset,
        })
    }

    pub fn omega_uv(&self) -> Frequency {
        self.omega_uv
    }

    pub fn decay_time(&self) -> f64 {
        self.decay_time
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    /// `offset + amplitude · rabi_population(t)`.
    pub fn signal(&self, t: f64) -> f64 {
        self.offset + self.amplitude * rabi_population(self, t)
    }
}

/// Ground-state population at time `t` (s):
/// `w0 + Σ_{N=1,2} w_N [1/2 + 1/2 e^{−t/τ} cos(√N Ω t)]`.
pub fn rabi_population(model: &RabiModel, t: f64) -> f64 {
    let [w0, w1, w2] = model.weights;
    let om = model.omega_uv.rad_per_s();
    let damp = (-t / model.decay_time).exp();
    let osc = |n: f64| 0.5 + 0.5 * damp * (n.sqrt() * om * t).cos();
    w0 + w1 * osc(1.0) + w2 * osc(2.0)
}

/// Ancilla preparation and decay parameters; times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AncillaLifetime {
    pub eta_init: f64,
    pub tau: f64,
    pub probe_duration: f64,
    pub delay: f64,
}

impl AncillaLifetime {
    pub fn new(eta_init: f64, tau: f64, probe_duration: f64, delay: f64) -> Result<Self> {
        ensure_probability("eta_init", eta_init)?;
        ensure_positive("tau", tau)?;
        ensure_positive("probe_duration", probe_duration)?;
        ensure_finite("delay", delay)?;
        if delay < 0.0 {
            return Err(Error::invalid("delay", "must be >= 0"));
        }
        Ok(AncillaLifetime {
            eta_init,
            tau,
            probe_duration,
            delay,
        })
    }
}

/// Mean Rydberg population during the probe window
/// `[δt, δt + t_p]`: `η (τ/t_p) e^{−δt/τ} (1 − e^{−t_p/τ})`.
pub fn rydberg_fraction_vs_delay(lt: &AncillaLifetime) -> f64 {
    let x = lt.probe_duration / lt.tau;
    // (1 − e^{−x})/x without cancellation for small x
    let window = if x < 1e-8 { 1.0 - 0.5 * x } else { -(-x).exp_m1() / x };
    lt.eta_init * (-lt.delay / lt.tau).exp() * window
}

/// Values on a detuning grid (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub detunings: Vec<Frequency>,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(detunings: Vec<Frequency>, values: Vec<f64>) -> Result<Self> {
        if detunings.len() != values.len() {
            return Err(Error::invalid("spectrum", "grid and values differ in length"));
        }
        Ok(Spectrum { detunings, values })
    }

    /// Indices of strict interior local maxima (plateaus count once).
    pub fn local_maxima(&self) -> Vec<usize> {
        let v = &self.values;
        let mut out = Vec::new();
        let mut k = 1;
        while k + 1 < v.len() {
            if v[k] > v[k - 1] {
                let mut end = k;
                while end + 1 < v.len() && v[end + 1] == v[k] {
                    end += 1;
                }
                if end + 1 < v.len() && v[end + 1] < v[k] {
                    out.push((k + end) / 2);
                }
                k = end + 1;
            } else {
                k += 1;
            }
        }
        out
    }
}

/// Pointwise `p_p · mirror + (1 − p_p) · eit`.
pub fn mixture_spectrum(p_p: f64, mirror: &Spectrum, eit: &Spectrum) -> Result<Spectrum> {
    ensure_probability("p_p", p_p)?;
    if mirror.detunings != eit.detunings {
        return Err(Error::invalid("spectrum", "mirror and EIT grids differ"));
    }
    let values = mirror
        .values
        .iter()
        .zip(&eit.values)
        .map(|(m, e)| p_p * m + (1.0 - p_p) * e)
        .collect();
    Spectrum::new(mirror.detunings.clone(), values)
}

/// Absorption spectra of the two mixture components: the cooperative mirror
/// as a Lorentzian of width `gamma_mirror`, and the EIT array.
pub fn mirror_and_eit_absorption(
    grid: &[Frequency],
    eit: &EitConditions,
    gamma_mirror: Frequency,
) -> Result<(Spectrum, Spectrum)> {
    let mirror = grid
        .iter()
        .map(|&d| chi_two_level(d, gamma_mirror).map(|c| c.im()))
        .collect::<Result<Vec<_>>>()?;
    let e = grid
        .iter()
        .map(|&d| chi_eit(&eit.with_probe_detuning(d)).im())
        .collect();
    Ok((Spectrum::new(grid.to_vec(), mirror)?, Spectrum::new(grid.to_vec(), e)?))
}

/// A ring of `count` array atoms at equal distance from the ancilla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub radius: Length,
    pub count: usize,
}

/// Groups the occupied array sites (drawn with `seed`) by distance to the
/// ancilla.
pub fn shells_from_array(array: &ArraySpec, seed: u64) -> Vec<Shell> {
    let anc = array.ancilla_site();
    let mut by_d2: BTreeMap<i64, usize> = BTreeMap::new();
    for (i, j) in array.occupied_sites(seed) {
        let (di, dj) = ((i - anc.0) as i64, (j - anc.1) as i64);
        *by_d2.entry(di * di + dj * dj).or_default() += 1;
    }
    let a = array.lattice_const().meters();
    by_d2
        .into_iter()
        .map(|(d2, count)| Shell {
            radius: Length::m(a * (d2 as f64).sqrt()),
            count,
        })
        .collect()
}

/// Occupation of the ancilla node and of each shell on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeEvolution {
    pub times: Vec<f64>,
    pub p_center: Vec<f64>,
    /// `p_shells[t][k]`: population of shell `k` at `times[t]`.
    pub p_shells: Vec<Vec<f64>>,
}

impl ExchangeEvolution {
    /// Average of the centre population over `[t0, t1]` by trapezoidal
    /// integration of the stored grid.
    pub fn mean_center(&self, t0: f64, t1: f64) -> Result<f64> {
        let (times, p) = (&self.times, &self.p_center);
        if !(t1 > t0) || t0 < times[0] || t1 > *times.last().unwrap() + 1e-15 {
            return Err(Error::invalid("window", "outside the evolution time grid"));
        }
        let interp = |t: f64| {
            let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
            let (ta, tb) = (times[k - 1], times[k]);
            let w = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
            p[k - 1] + w * (p[k] - p[k - 1])
        };
        let mut pts = vec![t0];
        pts.extend(times.iter().copied().filter(|&t| t > t0 && t < t1));
        pts.push(t1);
        let area: f64 = pts
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (interp(w[0]) + interp(w[1])))
            .sum();
        Ok(area / (t1 - t0))
    }
}

/// Single excitation hopping from the ancilla node onto symmetric shell
/// states: node–shell coupling `√count · J_eff(radius)`, population loss
/// `γ(radius)` on every node (the ancilla node uses `γ(0)`).
///
/// `times` in seconds; the excitation starts on the ancilla.
pub fn collective_exchange_evolution<J, G>(
    shells: &[Shell],
    j_eff: J,
    gamma: G,
    times: &[f64],
) -> Result<ExchangeEvolution>
where
    J: Fn(Length) -> Result<Frequency>,
    G: Fn(Length) -> Result<Frequency>,
{
    if shells.is_empty() {
        return Err(Error::invalid("shells", "at least one shell required"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("times", "must be finite and >= 0"));
    }
    let k = shells.len() + 1;
    let mut h = DMatrix::<Complex64>::zeros(k, k);
    h[(0, 0)] = Complex64::new(0.0, -0.5 * gamma(Length::ZERO)?.rad_per_s());
    for (idx, s) in shells.iter().enumerate() {
        let g = (s.count as f64).sqrt() * j_eff(s.radius)?.rad_per_s();
        h[(0, idx + 1)] = Complex64::new(g, 0.0);
        h[(idx + 1, 0)] = Complex64::new(g, 0.0);
        h[(idx + 1, idx + 1)] = Complex64::new(0.0, -0.5 * gamma(s.radius)?.rad_per_s());
    }
    let mut psi0 = DVector::<Complex64>::zeros(k);
    psi0[0] = Complex64::new(1.0, 0.0);
    let mut p_center = Vec::with_capacity(times.len());
    let mut p_shells = Vec::with_capacity(times.len());
    // step from the previous time, reusing the propagator while the step
    // length repeats
    let mut psi = psi0.clone();
    let mut t_prev = 0.0;
    let mut step: Option<(f64, DMatrix<Complex64>)> = None;
    for &t in times {
        let dt = t - t_prev;
        if dt < 0.0 {
            psi = (&h * Complex64::new(0.0, -t)).exp() * &psi0;
        } else if dt > 0.0 {
            let reuse = matches!(&step, Some((s, _)) if (s - dt).abs() <= 1e-12 * dt);
            if !reuse {
                step = Some((dt, (&h * Complex64::new(0.0, -dt)).exp()));
            }
            psi = &step.as_ref().expect("set above").1 * psi;
        }
        t_prev = t;
        p_center.push(psi[0].norm_sqr());
        p_shells.push((1..k).map(|i| psi[i].norm_sqr()).collect());
    }
    Ok(ExchangeEvolution {
        times: times.to_vec(),
        p_center,
        p_shells,
    })
}

/// Collective rate `√(Σ count · J_eff(radius)²)` of the star model.
pub fn collective_exchange_rate<J>(shells: &[Shell], j_eff: J) -> Result<Frequency>
where
    J: Fn(Length) -> Result<Frequency>,
{
    let mut sum = 0.0;
    for s in shells {
        sum += s.count as f64 * j_eff(s.radius)?.rad_per_s().powi(2);
    }
    Frequency::from_rad_per_s(sum.sqrt())
}

/// Effective exchange rate for the star model: [`effective_exchange_rate`]
/// inside the dataset range, zero outside it (closer shells are blockaded,
/// farther ones are not tabulated).
pub fn shell_exchange_rate(
    r: Length,
    dataset: &PotentialDataset,
    eit: &EitConditions,
    n_sa: f64,
) -> Result<Frequency> {
    let (lo, hi) = dataset.valid_range();
    if r < lo || r > hi {
        return Ok(Frequency::ZERO);
    }
    effective_exchange_rate(r, dataset, eit, n_sa)
}

/// Time-averaged ancilla-node occupation over a probe pulse of length
/// `probe_duration` (s), evolved on `steps + 1` equally spaced times.
/// The excitation starts on the ancilla when the pulse starts.
pub fn exchange_smoothing_factor<J, G>(shells: &[Shell], j_eff: J, gamma: G, probe_duration: f64, steps: usize) -> Result<f64>
where
    J: Fn(Length) -> Result<Frequency>,
    G: Fn(Length) -> Result<Frequency>,
{
    ensure_positive("probe_duration", probe_duration)?;
    if steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    let times: Vec<f64> = (0..=steps).map(|k| probe_duration * k as f64 / steps as f64).collect();
    collective_exchange_evolution(shells, j_eff, gamma, &times)?.mean_center(0.0, probe_duration)
}

/// Bloch period `h/Δz` (s) and maximum breathing half-width `4 J a/Δz`.
pub fn bloch_kinematics(
    delta_z: Frequency,
    tunneling: Frequency,
    a_lat: Length,
) -> Result<(f64, Length)> {
    ensure_positive("delta_z", delta_z.rad_per_s())?;
    ensure_finite("tunneling", tunneling.rad_per_s())?;
    ensure_positive("a_lat", a_lat.meters())?;
    let period = 1.0 / delta_z.cyclic_hz();
    let half_width = 4.0 * tunneling.rad_per_s().abs() * a_lat.meters() / delta_z.rad_per_s();
    Ok((period, Length::m(half_width)))
}

/// Tilt energy per site, `h Δz`, in joules.
pub fn tilt_energy(delta_z: Frequency) -> f64 {
    PLANCK * delta_z.cyclic_hz()
}

/// Transmittance averaged in annuli around the ancilla.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    /// Bin centres.
    pub radii: Vec<Length>,
    pub transmittance: Vec<f64>,
    pub pixel_counts: Vec<usize>,
    pub bin_width: Length,
}

impl RadialProfile {
    /// Pixel-weighted mean over the bins lying entirely within `radius`.
    pub fn mean_within(&self, radius: Length) -> Result<f64> {
        let half = 0.5 * self.bin_width.meters();
        let (mut sum, mut n) = (0.0, 0usize);
        for ((r, t), c) in self.radii.iter().zip(&self.transmittance).zip(&self.pixel_counts) {
            if r.meters() + half <= radius.meters() * (1.0 + 1e-12) {
                sum += t * *c as f64;
                n += c;
            }
        }
        if n == 0 {
            return Err(Error::invalid("radius", "no complete bin inside this radius"));
        }
        Ok(sum / n as f64)
    }

    /// Least-squares slope of transmittance against radius (per metre) over
    /// the bins with centres in `[r0, r1]`.
    pub fn slope_between(&self, r0: Length, r1: Length) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .radii
            .iter()
            .zip(&self.transmittance)
            .filter(|(r, _)| r.meters() >= r0.meters() && r.meters() <= r1.meters())
            .map(|(r, t)| (r.meters(), *t))
            .collect();
        if pts.len() < 2 {
            return Err(Error::invalid("range", "fewer than two bins between r0 and r1"));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Ok(sxy / sxx)
    }

    /// Pointwise `w·self + (1 − w)·other`; both profiles must share bins.
    pub fn mix(&self, w: f64, other: &RadialProfile) -> Result<RadialProfile> {
        ensure_probability("w", w)?;
        if self.radii != other.radii || self.pixel_counts != other.pixel_counts {
            return Err(Error::invalid("profiles", "bins differ"));
        }
        Ok(RadialProfile {
            transmittance: self
                .transmittance
                .iter()
                .zip(&other.transmittance)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
            ..self.clone()
        })
    }
}

/// Bins the pixels of an image (row-major, `nx` columns, pixel centres at
/// `origin + (ix, iy)·pitch`) by distance to `center`, up to `r_max`.
pub fn radial_average(
    image: &[f64],
    nx: usize,
    origin: [f64; 2],
    pitch: f64,
    center: [f64; 2],
    bin_width: f64,
    r_max: f64,
) -> Result<RadialProfile> {
    ensure_positive("bin_width", bin_width)?;
    ensure_positive("r_max", r_max)?;
    if nx == 0 || image.len() % nx != 0 {
        return Err(Error::invalid("image", "size is not a multiple of the row length"));
    }
    let nbins = (r_max / bin_width).ceil() as usize;
    let mut sum = vec![0.0; nbins];
    let mut cnt = vec![0usize; nbins];
    for (idx, &v) in image.iter().enumerate() {
        let (ix, iy) = (idx % nx, idx / nx);
        let x = origin[0] + ix as f64 * pitch - center[0];
        let y = origin[1] + iy as f64 * pitch - center[1];
        let r = x.hypot(y);
        if r < r_max {
            let b = ((r / bin_width) as usize).min(nbins - 1);
            sum[b] += v;
            cnt[b] += 1;
        }
    }
    let mut radii = Vec::new();
    let mut t = Vec::new();
    let mut counts = Vec::new();
    for b in 0..nbins {
        if cnt[b] > 0 {
            radii.push(Length::m((b as f64 + 0.5) * bin_width));
            t.push(sum[b] / cnt[b] as f64);
            counts.push(cnt[b]);
        }
    }
    Ok(RadialProfile {
        radii,
        transmittance: t,
        pixel_counts: counts,
        bin_width: Length::m(bin_width),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{LaserDrive, TransitionParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn mhz(x: f64) -> Frequency {
        Frequency::from_cyclic_mhz(x).unwrap()
    }

    #[test]
    fn rabi_start_and_pi_pulse() {
        let m = RabiModel::new(mhz(1.22), 6e-6, [0.0, 1.0, 0.0], 1.0, 0.0).unwrap();
        assert_relative_eq!(rabi_population(&m, 0.0), 1.0, epsilon = 1e-15);
        let t_pi = PI / mhz(1.22).rad_per_s();
        let damp = (-t_pi / 6e-6f64).exp();
        assert_relative_eq!(rabi_population(&m, t_pi), 0.5 - 0.5 * damp, epsilon = 1e-12);
        assert!(RabiModel::new(mhz(1.0), 6e-6, [0.5, 0.6, 0.0], 1.0, 0.0).is_err());
        assert!(RabiModel::new(mhz(1.0), 0.0, [0.0, 1.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn rabi_beating_has_both_frequencies() {
        let m = RabiModel::new(mhz(1.22), 1.0, [0.0, 0.72, 0.28], 1.0, 0.0).unwrap();
        let n = 4096;
        let dt = 0.01e-6;
        let sig: Vec<f64> = (0..n).map(|k| rabi_population(&m, k as f64 * dt) - 0.5).collect();
        let power = |f_mhz: f64| {
            let w = 2.0 * PI * f_mhz * 1e6;
            let (mut c, mut s) = (0.0, 0.0);
            for (k, v) in sig.iter().enumerate() {
                c += v * (w * k as f64 * dt).cos();
                s += v * (w * k as f64 * dt).sin();
            }
            c * c + s * s
        };
        let grid: Vec<f64> = (1..400).map(|k| k as f64 * 0.01).collect();
        let pw: Vec<f64> = grid.iter().map(|&f| power(f)).collect();
        let mut peaks: Vec<(f64, f64)> = (1..pw.len() - 1)
            .filter(|&k| pw[k] > pw[k - 1] && pw[k] >= pw[k + 1])
            .map(|k| (pw[k], grid[k]))
            .collect();
        peaks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut top: Vec<f64> = peaks[..2].iter().map(|p| p.1).collect();
        top.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((top[0] - 1.22).abs() < 0.02, "{top:?}");
        assert!((top[1] - 1.22 * 2f64.sqrt()).abs() < 0.02, "{top:?}");
    }

    #[test]
    fn lifetime_mapping_value() {
        let lt = AncillaLifetime::new(0.85, 27e-6, 20e-6, 4e-6).unwrap();
        let p = rydberg_fraction_vs_delay(&lt);
        let oracle = 0.85 * (27.0 / 20.0) * (-4.0f64 / 27.0).exp() * (1.0 - (-20.0f64 / 27.0).exp());
        assert_relative_eq!(p, oracle, max_relative = 1e-14);
        assert!((p - 0.52).abs() < 0.01);
        let late = AncillaLifetime::new(0.85, 27e-6, 20e-6, 1.0).unwrap();
        assert!(rydberg_fraction_vs_delay(&late) < 1e-300);
        let stable = AncillaLifetime::new(0.85, 1e9, 20e-6, 4e-6).unwrap();
        assert_relative_eq!(rydberg_fraction_vs_delay(&stable), 0.85, max_relative = 1e-9);
    }

    fn fig2_components() -> (Spectrum, Spectrum) {
        let grid: Vec<Frequency> = (0..=800).map(|k| mhz(-10.0 + k as f64 * 0.025)).collect();
        let eit = EitConditions::new(
            LaserDrive::from_mhz(0.01, 0.0).unwrap(),
            LaserDrive::from_mhz(6.7, 0.0).unwrap(),
            TransitionParams::default(),
        );
        mirror_and_eit_absorption(&grid, &eit, mhz(3.75)).unwrap()
    }

    #[test]
    fn mixture_peak_counts() {
        let (m, e) = fig2_components();
        assert_eq!(mixture_spectrum(0.0, &m, &e).unwrap().local_maxima().len(), 2);
        assert_eq!(mixture_spectrum(1.0, &m, &e).unwrap().local_maxima().len(), 1);
        let mix = mixture_spectrum(0.52, &m, &e).unwrap();
        let peaks = mix.local_maxima();
        assert_eq!(peaks.len(), 3);
        let pos: Vec<f64> = peaks.iter().map(|&k| mix.detunings[k].cyclic_mhz()).collect();
        assert!(pos[1].abs() < 1e-9);
        assert!((pos[0] + 3.35).abs() < 0.3 && (pos[2] - 3.35).abs() < 0.3, "{pos:?}");
        let strong = mixture_spectrum(0.96, &m, &e).unwrap();
        let center = strong.values[400];
        assert!(strong.values.iter().all(|&v| v <= center));
        assert_eq!(mixture_spectrum(0.0, &m, &e).unwrap().values, e.values);
        assert_eq!(mixture_spectrum(1.0, &m, &e).unwrap().values, m.values);
    }

    #[test]
    fn mixture_grid_mismatch() {
        let (m, e) = fig2_components();
        let short = Spectrum::new(e.detunings[1..].to_vec(), e.values[1..].to_vec()).unwrap();
        assert!(mixture_spectrum(0.5, &m, &short).is_err());
    }

    #[test]
    fn exchange_no_coupling_decays() {
        let shells = [Shell { radius: Length::from_um(3.0).unwrap(), count: 4 }];
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 1e-6).collect();
        let g0 = Frequency::from_rad_per_s(2e4).unwrap();
        let ev = collective_exchange_evolution(
            &shells,
            |_| Ok(Frequency::ZERO),
            |r| Ok(if r.meters() == 0.0 { g0 } else { Frequency::ZERO }),
            &times,
        )
        .unwrap();
        for (t, p) in times.iter().zip(&ev.p_center) {
            assert_relative_eq!(*p, (-2e4 * t).exp(), max_relative = 1e-10);
        }
        let none = collective_exchange_evolution(&shells, |_| Ok(Frequency::ZERO), |_| Ok(Frequency::ZERO), &times).unwrap();
        assert!(none.p_center.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn exchange_single_shell_transfer_time() {
        let n = 6;
        let j = Frequency::from_cyclic_khz(3.2).unwrap();
        let shells = [Shell { radius: Length::from_um(3.7).unwrap(), count: n }];
        let t_full = PI / (2.0 * (n as f64).sqrt() * j.rad_per_s());
        let ev = collective_exchange_evolution(&shells, |_| Ok(j), |_| Ok(Frequency::ZERO), &[0.0, t_full / 3.0, t_full]).unwrap();
        assert!(ev.p_center[2] < 1e-12);
        assert_relative_eq!(ev.p_center[1], (PI / 6.0).cos().powi(2), max_relative = 1e-10);
        assert_relative_eq!(ev.p_shells[2][0], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn exchange_mean_center() {
        let ev = ExchangeEvolution {
            times: vec![0.0, 1.0, 2.0],
            p_center: vec![1.0, 0.0, 1.0],
            p_shells: vec![vec![], vec![], vec![]],
        };
        assert_relative_eq!(ev.mean_center(0.0, 2.0).unwrap(), 0.5);
        assert_relative_eq!(ev.mean_center(0.5, 1.0).unwrap(), 0.25);
        assert!(ev.mean_center(0.0, 3.0).is_err());
    }

    #[test]
    fn shells_cover_array() {
        let spec = ArraySpec::default();
        let shells = shells_from_array(&spec, 0);
        let total: usize = shells.iter().map(|s| s.count).sum();
        assert_eq!(total, spec.sites().len() - 1);
        assert_eq!(shells[0].count, 4);
        assert_relative_eq!(shells[0].radius.nm(), 532.0, max_relative = 1e-12);
    }

    #[test]
    fn bloch_values() {
        let (tb, dz) = bloch_kinematics(
            Frequency::from_cyclic_hz(360.0).unwrap(),
            Frequency::from_cyclic_hz(324.0).unwrap(),
            Length::from_nm(532.0).unwrap(),
        )
        .unwrap();
        assert!((tb * 1e3 - 2.78).abs() < 0.005);
        assert_relative_eq!(dz.nm() / 532.0, 3.6, max_relative = 1e-12);
        let (_, zero) = bloch_kinematics(Frequency::from_cyclic_hz(360.0).unwrap(), Frequency::ZERO, Length::from_nm(532.0).unwrap()).unwrap();
        assert_eq!(zero.meters(), 0.0);
        assert!(bloch_kinematics(Frequency::ZERO, Frequency::ZERO, Length::from_nm(532.0).unwrap()).is_err());
    }

    #[test]
    fn radial_average_flat() {
        let img = vec![0.7; 100];
        let prof = radial_average(&img, 10, [-4.5, -4.5], 1.0, [0.0, 0.0], 1.0, 5.0).unwrap();
        assert!(prof.transmittance.iter().all(|&t| (t - 0.7).abs() < 1e-15));
        let inside = (0..100)
            .filter(|k| (-4.5 + (k % 10) as f64).hypot(-4.5 + (k / 10) as f64) < 5.0)
            .count();
        assert_eq!(prof.pixel_counts.iter().sum::<usize>(), inside);
    }

    proptest! {
        #[test]
        fn rabi_population_bounded(om in 0.1f64..5.0, tau in 0.5f64..50.0, w0 in 0.0f64..1.0, frac in 0.0f64..1.0, t in 0.0f64..100.0) {
            let w2 = (1.0 - w0) * frac;
            let w1 = 1.0 - w0 - w2;
            let m = RabiModel::new(mhz(om), tau * 1e-6, [w0, w1, w2], 1.0, 0.0).unwrap();
            let p = rabi_population(&m, t * 1e-6);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
        }

        #[test]
        fn lifetime_monotone(eta in 0.01f64..1.0, tau in 1.0f64..100.0, dt in 0.0f64..50.0, step in 0.01f64..5.0) {
            let a = AncillaLifetime::new(eta, tau * 1e-6, 20e-6, dt * 1e-6).unwrap();
            let later = AncillaLifetime { delay: (dt + step) * 1e-6, ..a };
            let longer = AncillaLifetime { tau: (tau + step) * 1e-6, ..a };
            prop_assert!(rydberg_fraction_vs_delay(&later) < rydberg_fraction_vs_delay(&a));
            prop_assert!(rydberg_fraction_vs_delay(&longer) > rydberg_fraction_vs_delay(&a));
        }

        #[test]
        fn mixture_bounded(p in 0.0f64..1.0) {
            let (m, e) = fig2_components();
            let mix = mixture_spectrum(p, &m, &e).unwrap();
            for k in 0..mix.values.len() {
                let (lo, hi) = (m.values[k].min(e.values[k]), m.values[k].max(e.values[k]));
                prop_assert!(mix.values[k] >= lo - 1e-15 && mix.values[k] <= hi + 1e-15);
            }
        }

        #[test]
        fn exchange_conserves_probability(j1 in 0.0f64..50.0, j2 in 0.0f64..50.0, t in 0.0f64..100.0) {
            let shells = [
                Shell { radius: Length::from_um(2.0).unwrap(), count: 4 },
                Shell { radius: Length::from_um(4.0).unwrap(), count: 8 },
            ];
            let ev = collective_exchange_evolution(
                &shells,
                |r| Frequency::from_cyclic_khz(if r.um() < 3.0 { j1 } else { j2 }),
                |_| Ok(Frequency::ZERO),
                &[t * 1e-6],
            ).unwrap();
            let total = ev.p_center[0] + ev.p_shells[0].iter().sum::<f64>();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
