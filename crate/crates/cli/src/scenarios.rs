//! One function per scenario. Each reads its config section, runs the
//! simulation and returns tables plus summary scalars.

use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rydberg_mirror::coupled_dipole::{
    array_spectrum, bloch_disordered_response, collective_resonance, disc_half_max_radius,
    radial_transmission_profile, single_scatterer_floor, DipoleLattice, DipolePattern, GaussianBeam,
    ImagingOptions, ProfileMode, RadialOptions,
};
use rydberg_mirror::dynamics::{
    bloch_kinematics, collective_exchange_evolution, collective_exchange_rate, exchange_smoothing_factor,
    mirror_and_eit_absorption, mixture_spectrum, rydberg_fraction_vs_delay, shell_exchange_rate,
    shells_from_array, AncillaLifetime, Shell, Spectrum,
};
use rydberg_mirror::fitting::models::{
    damped_beating_rabi, fit_damped_beating_rabi, fit_lifetime, fit_rydberg_eit_spectrum, lifetime_model,
    rydberg_eit_model, RabiFitOptions, TransmittanceBounds,
};
use rydberg_mirror::fitting::{FitData, FitOptions, FitResult};
use rydberg_mirror::pair_potentials::{exchange_breakdown, exchange_duration, PotentialDataset};
use rydberg_mirror::photon_stats::{
    camera_conversion_from_noise, estimate_switched_mean, simulate_band, simulate_camera_noise,
    simulate_histogram, AncillaState, Binning, DetectionModel, PhotonHistogram, Uncertain,
};
use rydberg_mirror::steady_state::{chi_vs_distance, eit_blockade_radius};
use rydberg_mirror::susceptibility::{atoms_in_blockade, blockade_radius, chi_eit, chi_two_level};
use rydberg_mirror::{
    ArraySpec, C6Coefficient, EitConditions, Frequency, LaserDrive, Length, TransitionParams,
};
use serde_json::json;

use crate::config::{self, section, Config, ExchangeDressing, ProfileModeName};
use crate::output::{finite_or_null, Outputs, Table};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Blockade,
    Spectrum,
    SwitchedSpectrum,
    Spatial,
    Rabi,
    Lifetime,
    Histogram,
    Exchange,
    Bloch,
    Calibrate,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Blockade,
        Scenario::Spectrum,
        Scenario::SwitchedSpectrum,
        Scenario::Spatial,
        Scenario::Rabi,
        Scenario::Lifetime,
        Scenario::Histogram,
        Scenario::Exchange,
        Scenario::Bloch,
        Scenario::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Blockade => "blockade",
            Scenario::Spectrum => "spectrum",
            Scenario::SwitchedSpectrum => "switched-spectrum",
            Scenario::Spatial => "spatial",
            Scenario::Rabi => "rabi",
            Scenario::Lifetime => "lifetime",
            Scenario::Histogram => "histogram",
            Scenario::Exchange => "exchange",
            Scenario::Bloch => "bloch",
            Scenario::Calibrate => "calibrate",
        }
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown scenario '{s}'")))
    }
}

/// Settings that come from the command line rather than the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub band: bool,
}

/// The scenario runs behind a figure name, each with its pinned config.
pub fn figure_runs(figure: &str) -> Result<Vec<(Scenario, Config)>> {
    let base = Config::default();
    let runs = match figure {
        "2a" => vec![(Scenario::Spectrum, base)],
        "2b" => vec![(Scenario::SwitchedSpectrum, base)],
        "3" => vec![(Scenario::Rabi, base)],
        "4" => vec![(Scenario::Histogram, base.clone()), (Scenario::Lifetime, base)],
        "5a" => vec![(Scenario::Spatial, base)],
        "5b" => vec![(
            Scenario::Spatial,
            Config {
                spatial: Some(config::Spatial::large()),
                ..base
            },
        )],
        "S3" => {
            let spectrum = config::Spectrum {
                array_n: 0,
                ..config::Spectrum::default()
            };
            vec![(
                Scenario::Spectrum,
                Config {
                    spectrum: Some(spectrum),
                    ..base
                },
            )]
        }
        "S4c" => vec![(Scenario::Blockade, base)],
        "S5" => vec![(Scenario::Exchange, base)],
        "S8" => vec![(Scenario::Bloch, base)],
        "S9" => vec![(Scenario::Calibrate, base)],
        other => return Err(CliError::Config(format!("unknown figure '{other}'"))),
    };
    Ok(runs)
}

/// Shared physics derived from the config.
struct Physics {
    transition: TransitionParams,
    dataset: PotentialDataset,
}

impl Physics {
    fn from_config(cfg: &config::Physics) -> Result<Self> {
        let transition = TransitionParams::new(
            Frequency::from_cyclic_mhz(cfg.gamma_e_mhz)?,
            Frequency::from_cyclic_khz(cfg.gamma_r_khz)?,
            Length::from_nm(cfg.lambda_p_nm)?,
            Length::from_nm(cfg.lambda_c_nm)?,
        )?;
        let dataset = match &cfg.pair_dataset {
            Some(p) => PotentialDataset::load(p).map_err(|e| match e {
                rydberg_mirror::Error::Parse { .. } => CliError::Config(format!("{}: {e}", p.display())),
                other => CliError::Model(other),
            })?,
            None => PotentialDataset::default_dataset(),
        };
        Ok(Physics { transition, dataset })
    }

    fn eit(&self, omega_p_mhz: f64, omega_c_mhz: f64, delta_p_mhz: f64) -> Result<EitConditions> {
        Ok(EitConditions::new(
            LaserDrive::from_mhz(omega_p_mhz, delta_p_mhz)?,
            LaserDrive::from_mhz(omega_c_mhz, -delta_p_mhz)?,
            self.transition,
        ))
    }
}

pub fn run_scenario(cfg: &Config, scenario: Scenario, opts: RunOptions) -> Result<Outputs> {
    let phys = Physics::from_config(&cfg.physics)?;
    match scenario {
        Scenario::Blockade => blockade(section(&cfg.blockade, "blockade")?, &phys),
        Scenario::Spectrum => spectrum(section(&cfg.spectrum, "spectrum")?, &phys, opts),
        Scenario::SwitchedSpectrum => switched_spectrum(section(&cfg.switched_spectrum, "switched-spectrum")?, &phys),
        Scenario::Spatial => spatial(section(&cfg.spatial, "spatial")?, &phys, opts),
        Scenario::Rabi => rabi(section(&cfg.rabi, "rabi")?, opts),
        Scenario::Lifetime => lifetime(section(&cfg.lifetime, "lifetime")?, opts),
        Scenario::Histogram => histogram(section(&cfg.histogram, "histogram")?, opts),
        Scenario::Exchange => exchange(section(&cfg.exchange, "exchange")?, &phys, opts),
        Scenario::Bloch => bloch(section(&cfg.bloch, "bloch")?, &phys, opts),
        Scenario::Calibrate => calibrate(section(&cfg.calibrate, "calibrate")?, opts),
    }
}

fn need_points(name: &str, n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(CliError::Config(format!("{name} must be at least {min}")));
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn mhz_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<Frequency>> {
    linspace(lo, hi, n)
        .into_iter()
        .map(|v| Frequency::from_cyclic_mhz(v).map_err(CliError::from))
        .collect()
}

/// Gaussian noise of width `sd` added to `clean`, drawn from one seeded
/// stream.
fn add_noise(clean: &[f64], sd: f64, seed: u64, stream: u64) -> Result<Vec<f64>> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(CliError::Config("noise_sd must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = Normal::new(0.0, sd).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(clean.iter().map(|v| v + n.sample(&mut rng)).collect())
}

fn put_fit(out: &mut Outputs, prefix: &str, fit: &FitResult) {
    let mut params = serde_json::Map::new();
    for (k, name) in fit.names.iter().enumerate() {
        params.insert(
            name.clone(),
            json!({ "value": finite_or_null(fit.params[k]), "sd": finite_or_null(fit.sd[k]) }),
        );
    }
    out.put(&format!("{prefix}_params"), serde_json::Value::Object(params));
    out.put_f64(&format!("{prefix}_reduced_chi_sq"), fit.reduced_chi_sq);
    out.put(&format!("{prefix}_converged"), fit.converged);
}

/// Refines the maximum at index `k` by a parabola through its neighbours.
fn refine_peak(x: &[f64], y: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= x.len() {
        return x[k];
    }
    let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return x[k];
    }
    x[k] + 0.5 * (a - c) / den * (x[k + 1] - x[k])
}

fn blockade(cfg: &config::Blockade, phys: &Physics) -> Result<Outputs> {
    need_points("blockade.points", cfg.points, 2)?;
    let tr = &phys.transition;
    let probe = LaserDrive::from_mhz(cfg.omega_p_mhz, 0.0)?;
    let control = LaserDrive::from_mhz(cfg.omega_c_mhz, 0.0)?;
    let r_grid = linspace(cfg.r_min_um, cfg.r_max_um, cfg.points)
        .into_iter()
        .map(Length::from_um)
        .collect::<rydberg_mirror::Result<Vec<_>>>()?;
    let curve = chi_vs_distance(&probe, &control, &phys.dataset, tr, &r_grid)?;
    let mut t = Table::new("chi", &["r_m", "chi_re", "chi_im"]);
    for (r, chi) in &curve {
        t.push(vec![r.meters(), chi.re(), chi.im()]);
    }
    let r_b = blockade_radius(C6Coefficient::from_ghz_um6(cfg.c6_ghz_um6)?, tr.gamma_e(), control.rabi())?;
    let r_ss = eit_blockade_radius(&probe, &control, &phys.dataset, tr)?;
    let mut out = Outputs::default();
    out.table(t);
    out.put_f64("r_b_um", r_b.um());
    out.put_f64("r_b_steady_state_um", r_ss.um());
    out.put_f64("atoms_in_blockade", atoms_in_blockade(r_b, ArraySpec::default().lattice_const())?);
    Ok(out)
}

fn spectrum(cfg: &config::Spectrum, phys: &Physics, opts: RunOptions) -> Result<Outputs> {
    need_points("spectrum.points", cfg.points, 8)?;
    let tr = phys.transition;
    let eit = phys.eit(cfg.omega_p_mhz, cfg.omega_c_mhz, 0.0)?;
    let x = linspace(cfg.delta_min_mhz, cfg.delta_max_mhz, cfg.points);
    let truth = [1.0, 0.0, cfg.p_s, tr.gamma_e().cyclic_mhz() / 2.0, cfg.omega_c_mhz, 0.0];
    let mut two = Vec::with_capacity(x.len());
    let mut ladder = Vec::with_capacity(x.len());
    let mut blockaded = Vec::with_capacity(x.len());
    for &d in &x {
        let f = Frequency::from_cyclic_mhz(d)?;
        two.push(chi_two_level(f, tr.gamma_e())?.im());
        ladder.push(chi_eit(&eit.with_probe_detuning(f)).im());
        blockaded.push(rydberg_eit_model(&tr, d, &truth));
    }
    let data = add_noise(&blockaded, cfg.noise_sd, opts.seed, 0)?;
    let sigma = vec![cfg.noise_sd; x.len()];
    let fit = fit_rydberg_eit_spectrum(FitData::new(&x, &data, &sigma)?, &tr, &FitOptions::default())?;

    let mut t = Table::new(
        "chi",
        &["delta_hz", "two_level_im_chi", "eit_im_chi", "rydberg_eit_im_chi", "rydberg_eit_data", "rydberg_eit_fit"],
    );
    for k in 0..x.len() {
        let fitted = rydberg_eit_model(&tr, x[k], &fit.params);
        t.push(vec![x[k] * 1e6, two[k], ladder[k], blockaded[k], data[k], fitted]);
    }
    let mut out = Outputs::default();
    out.table(t);

    let grid: Vec<Frequency> = x.iter().map(|&d| Frequency::from_cyclic_mhz(d)).collect::<rydberg_mirror::Result<_>>()?;
    let peaks = Spectrum::new(grid, ladder.clone())?.local_maxima();
    let positions: Vec<f64> = peaks.iter().map(|&k| refine_peak(&x, &ladder, k)).collect();
    out.put("eit_peaks_mhz", positions.clone());
    let splitting = if positions.len() == 2 { positions[1] - positions[0] } else { f64::NAN };
    out.put_f64("splitting_mhz", splitting);
    put_fit(&mut out, "rydberg_eit_fit", &fit);

    if cfg.array_n > 0 {
        need_points("spectrum.array_points", cfg.array_points, 5)?;
        let a = Length::from_m(cfg.a_over_lambda * tr.lambda_p().meters())?;
        let beam = GaussianBeam::new(Length::from_um(cfg.waist_um)?)?;
        let lattice = DipoleLattice::square(cfg.array_n, a, tr, beam)?;
        let grid = mhz_grid(-cfg.array_span_mhz, cfg.array_span_mhz, cfg.array_points)?;
        let resp = array_spectrum(&lattice, &grid, &ImagingOptions::default())?;
        let mut at = Table::new(
            "array",
            &["delta_hz", "mode_transmittance", "mode_reflectance", "roi_transmittance", "roi_reflectance"],
        );
        for p in &resp.points {
            at.push(vec![
                p.detuning.cyclic_hz(),
                p.transmittance,
                p.reflectance,
                p.roi_transmittance,
                p.roi_reflectance,
            ]);
        }
        out.table(at);
        out.put_f64("array_linewidth_mhz", resp.fitted_linewidth.map_or(f64::NAN, |w| w.cyclic_mhz()));
        out.put_f64(
            "array_center_mhz",
            resp.linewidth_fit.as_ref().map_or(f64::NAN, |f| f.get("center")),
        );
        out.put_f64("gamma_e_mhz", tr.gamma_e().cyclic_mhz());
    }
    Ok(out)
}

fn switched_spectrum(cfg: &config::SwitchedSpectrum, phys: &Physics) -> Result<Outputs> {
    need_points("switched-spectrum.points", cfg.points, 3)?;
    let grid = mhz_grid(cfg.delta_min_mhz, cfg.delta_max_mhz, cfg.points)?;
    let eit = phys.eit(cfg.omega_p_mhz, cfg.omega_c_mhz, 0.0)?;
    let (mirror, ladder) = mirror_and_eit_absorption(&grid, &eit, Frequency::from_cyclic_mhz(cfg.gamma_mirror_mhz)?)?;
    let mut header = vec!["delta_hz".to_string(), "mirror_absorption".into(), "eit_absorption".into()];
    let mut mixes = Vec::new();
    let mut peaks = Vec::new();
    for &p in &cfg.p_p_values {
        let m = mixture_spectrum(p, &mirror, &ladder)?;
        header.push(format!("mixture_p_p_{p}"));
        let x: Vec<f64> = grid.iter().map(|d| d.cyclic_mhz()).collect();
        let pos: Vec<f64> = m.local_maxima().iter().map(|&k| refine_peak(&x, &m.values, k)).collect();
        peaks.push(json!({ "p_p": p, "count": pos.len(), "positions_mhz": pos }));
        mixes.push(m);
    }
    let mut t = Table::with_header("absorption", header);
    for k in 0..grid.len() {
        let mut row = vec![grid[k].cyclic_hz(), mirror.values[k], ladder.values[k]];
        row.extend(mixes.iter().map(|m| m.values[k]));
        t.push(row);
    }
    let mut out = Outputs::default();
    out.table(t);
    out.put("maxima", peaks);
    Ok(out)
}

fn array_spec(a_nm: f64, radius_um: f64, filling: f64) -> Result<ArraySpec> {
    let d = ArraySpec::default();
    Ok(ArraySpec::new(
        Length::from_nm(a_nm)?,
        Length::from_um(radius_um)?,
        filling,
        d.ancilla_site(),
        d.lattice_depth(),
    )?)
}

/// Shells of the occupied array and the dressing conditions of the star
/// exchange model.
fn exchange_shells(
    array: &ArraySpec,
    seed: u64,
    dressing: &ExchangeDressing,
    phys: &Physics,
) -> Result<(Vec<Shell>, EitConditions)> {
    let eit = phys.eit(dressing.omega_p_mhz, dressing.omega_c_mhz, 0.0)?;
    Ok((shells_from_array(array, seed), eit))
}

fn spatial(cfg: &config::Spatial, phys: &Physics, opts: RunOptions) -> Result<Outputs> {
    let tr = phys.transition;
    let array = array_spec(cfg.lattice_const_nm, cfg.radius_um, cfg.filling)?;
    let beam = GaussianBeam::new(Length::from_um(cfg.waist_um)?)?;
    let imaging = ImagingOptions::default();
    let mut out = Outputs::default();

    let delta_p = match cfg.probe_detuning_mhz {
        Some(d) => d,
        None => {
            let reference = array_spec(cfg.lattice_const_nm, cfg.radius_um.min(4.7), 1.0)?;
            let lattice = DipoleLattice::from_array(&reference, opts.seed, tr, beam)?;
            collective_resonance(&lattice, &imaging)?.cyclic_mhz()
        }
    };
    out.put_f64("probe_detuning_mhz", delta_p);
    let eit = phys.eit(cfg.omega_p_mhz, cfg.omega_c_mhz, delta_p)?;
    let radial = RadialOptions {
        roi: Length::from_um(cfg.roi_um)?,
        bin_width: Length::from_um(cfg.bin_um)?,
        pixel_pitch: Length::from_um(cfg.pixel_um)?,
        radial_points: cfg.radial_points,
        self_blockade: cfg.self_blockade,
    };
    let mode = match cfg.mode {
        ProfileModeName::CoupledDipole => ProfileMode::CoupledDipole { beam, imaging },
        ProfileModeName::ChiMap => ProfileMode::ChiMap {
            mirror_transmittance: cfg.mirror_transmittance,
        },
    };
    let profiles = radial_transmission_profile(&array, opts.seed, &eit, &phys.dataset, &radial, &mode)?;

    let factor = if cfg.exchange_smoothing {
        let d = &cfg.exchange;
        let (shells, xeit) = exchange_shells(&array, opts.seed, d, phys)?;
        let j = |r: Length| shell_exchange_rate(r, &phys.dataset, &xeit, d.n_sa);
        let gamma = Frequency::from_cyclic_khz(d.gamma_khz)?;
        let f = exchange_smoothing_factor(&shells, j, |_| Ok(gamma), d.probe_duration_us * 1e-6, d.steps)?;
        out.put_f64("collective_exchange_khz", collective_exchange_rate(&shells, j)?.cyclic_khz());
        out.put_f64("smoothing_factor", f);
        f
    } else {
        1.0
    };
    let plain = profiles.mixed(cfg.p_p)?;
    let smoothed = profiles.mixed(cfg.p_p * factor)?;

    let center = Length::from_um(cfg.center_radius_um)?;
    let r_b = Length::from_um(cfg.blockade_radius_um)?;
    let r_end = Length::from_um(cfg.blockade_radius_um + cfg.slope_window_um)?;
    out.put_f64("center_transmittance", smoothed.mean_within(center)?);
    out.put_f64("center_transmittance_unsmoothed", plain.mean_within(center)?);
    out.put_f64("slope_per_um", smoothed.slope_between(r_b, r_end)? * 1e-6);
    out.put_f64("slope_unsmoothed_per_um", plain.slope_between(r_b, r_end)? * 1e-6);
    out.put_f64("half_max_radius_um", disc_half_max_radius(&smoothed).map_or(f64::NAN, |r| r.um()));
    out.put("occupied_sites", array.occupied_sites(opts.seed).len());

    let mut t = Table::new(
        "profile",
        &["r_m", "pixels", "switched_transmittance", "uniform_transmittance", "mixed_transmittance", "smoothed_transmittance"],
    );
    for k in 0..plain.radii.len() {
        t.push(vec![
            plain.radii[k].meters(),
            plain.pixel_counts[k] as f64,
            profiles.switched.transmittance[k],
            profiles.uniform.transmittance[k],
            plain.transmittance[k],
            smoothed.transmittance[k],
        ]);
    }
    out.table(t);
    Ok(out)
}

fn rabi(cfg: &config::Rabi, opts: RunOptions) -> Result<Outputs> {
    need_points("rabi.points", cfg.points, 8)?;
    let t = linspace(0.0, cfg.t_max_us, cfg.points);
    let truth = [cfg.omega_uv_mhz, cfg.tau_decay_us, cfg.p_2, cfg.amplitude, cfg.offset];
    let clean: Vec<f64> = t.iter().map(|&x| damped_beating_rabi(0.0, x, &truth)).collect();
    if clean.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("rabi parameters give an invalid model".into()));
    }
    let data = add_noise(&clean, cfg.noise_sd, opts.seed, 0)?;
    let sigma = vec![cfg.noise_sd; t.len()];
    let fit = fit_damped_beating_rabi(FitData::new(&t, &data, &sigma)?, &RabiFitOptions::default())?;
    let free: Vec<f64> = ["omega_uv", "tau_decay", "w2", "amplitude", "offset"].iter().map(|n| fit.get(n)).collect();
    let mut table = Table::new("trace", &["t_s", "model", "data", "fit"]);
    for k in 0..t.len() {
        table.push(vec![t[k] * 1e-6, clean[k], data[k], damped_beating_rabi(0.0, t[k], &free)]);
    }
    let mut out = Outputs::default();
    out.table(table);
    put_fit(&mut out, "fit", &fit);
    out.put_f64("two_atom_frequency_mhz", 2f64.sqrt() * fit.get("omega_uv"));
    Ok(out)
}

fn lifetime(cfg: &config::Lifetime, opts: RunOptions) -> Result<Outputs> {
    need_points("lifetime.points", cfg.points, 4)?;
    let limits = TransmittanceBounds {
        mirror: cfg.t_mirror,
        eit: cfg.t_eit,
    };
    let delays = linspace(0.0, cfg.delay_max_us, cfg.points);
    let truth = [cfg.eta_init, cfg.tau_us, cfg.t_eit];
    let clean: Vec<f64> = delays.iter().map(|&d| lifetime_model(limits, cfg.probe_us, d, &truth)).collect();
    if clean.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("lifetime parameters give an invalid model".into()));
    }
    let data = add_noise(&clean, cfg.noise_sd, opts.seed, 0)?;
    let sigma = vec![cfg.noise_sd; delays.len()];
    let fit = fit_lifetime(FitData::new(&delays, &data, &sigma)?, limits, cfg.probe_us, &FitOptions::default())?;
    let lt = |delay_us: f64| {
        AncillaLifetime::new(cfg.eta_init, cfg.tau_us * 1e-6, cfg.probe_us * 1e-6, delay_us * 1e-6)
            .map(|l| rydberg_fraction_vs_delay(&l))
    };
    let mut table = Table::new("trace", &["delay_s", "rydberg_fraction", "model", "data", "fit"]);
    for k in 0..delays.len() {
        let fitted = lifetime_model(limits, cfg.probe_us, delays[k], &fit.result.params);
        table.push(vec![delays[k] * 1e-6, lt(delays[k])?, clean[k], data[k], fitted]);
    }
    let mut out = Outputs::default();
    out.table(table);
    out.put_f64("rydberg_fraction_at_report_delay", lt(cfg.report_delay_us)?);
    put_fit(&mut out, "fit", &fit.result);
    out.put("tau_lower_bound_us", fit.tau_lower_bound.map_or(serde_json::Value::Null, finite_or_null));
    Ok(out)
}

fn detection_model(cfg: &config::Histogram) -> Result<DetectionModel> {
    let m = DetectionModel {
        mu_background: cfg.mu_background,
        mu_switched: cfg.mu_switched,
        prep_fidelity: Uncertain::new(cfg.prep_fidelity, cfg.prep_fidelity_sd)?,
        tau: Uncertain::new(cfg.tau_us * 1e-6, cfg.tau_sd_us * 1e-6)?,
        delay: cfg.delay_us * 1e-6,
        probe_duration: cfg.probe_us * 1e-6,
        excess_noise_factor: cfg.excess_noise_factor,
        alpha: cfg.alpha_photons_per_count,
    };
    m.validate()?;
    Ok(m)
}

/// Histogram rebuilt from band-mode pooled counts; moments use bin centres.
fn pooled_histogram(edges: &[f64], pooled: &[u64], seed: u64) -> PhotonHistogram {
    let n: u64 = pooled.iter().sum();
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mean = centers.iter().zip(pooled).map(|(c, k)| c * *k as f64).sum::<f64>() / n as f64;
    let var = centers.iter().zip(pooled).map(|(c, k)| (c - mean).powi(2) * *k as f64).sum::<f64>() / (n as f64 - 1.0);
    PhotonHistogram {
        bin_edges: edges.to_vec(),
        counts: pooled.to_vec(),
        n_samples: n as usize,
        seed,
        sample_mean: mean,
        sample_variance: var,
    }
}

fn histogram(cfg: &config::Histogram, opts: RunOptions) -> Result<Outputs> {
    let model = detection_model(cfg)?;
    let binning = Binning {
        lo: cfg.bin_lo_photons,
        width: cfg.bin_width_photons,
        n_bins: cfg.bins,
    };
    let mut out = Outputs::default();
    out.put("band", opts.band);
    let mut rydberg = None;
    for (k, (state, name)) in [(AncillaState::Ground, "ground"), (AncillaState::Rydberg, "rydberg")].into_iter().enumerate() {
        // distinct streams for the two states
        let seed = opts.seed.wrapping_mul(2).wrapping_add(k as u64);
        let hist = if opts.band {
            let band = simulate_band(&model, state, cfg.band_runs, cfg.band_samples, &binning, seed)?;
            let mut t = Table::new(name, &["bin_lo_photons", "bin_hi_photons", "count", "mean", "sd"]);
            for b in 0..band.pooled.len() {
                t.push(vec![band.bin_edges[b], band.bin_edges[b + 1], band.pooled[b] as f64, band.mean[b], band.sd[b]]);
            }
            out.table(t);
            pooled_histogram(&band.bin_edges, &band.pooled, seed)
        } else {
            let h = simulate_histogram(&model, state, cfg.samples, &binning, seed)?;
            let mut t = Table::new(name, &["bin_lo_photons", "bin_hi_photons", "count"]);
            for b in 0..h.counts.len() {
                t.push(vec![h.bin_edges[b], h.bin_edges[b + 1], h.counts[b] as f64]);
            }
            out.table(t);
            h
        };
        out.put_f64(&format!("{name}_mean_photons"), hist.sample_mean);
        out.put_f64(&format!("{name}_variance_over_mean"), hist.sample_variance / hist.sample_mean);
        out.put(&format!("{name}_samples"), hist.n_samples);
        if state == AncillaState::Rydberg {
            rydberg = Some(hist);
        }
    }
    let hist = rydberg.expect("rydberg histogram simulated");
    let est = estimate_switched_mean(&hist, &model, cfg.tail_threshold_photons)?;
    out.put_f64("ml_mu_switched", est.mu_switched);
    out.put_f64("ml_mu_switched_sd", est.sd);
    out.put("ml_tail_counts", est.tail_counts);
    Ok(out)
}

fn exchange(cfg: &config::Exchange, phys: &Physics, opts: RunOptions) -> Result<Outputs> {
    need_points("exchange.points", cfg.points, 2)?;
    let d = &cfg.dressing;
    let array = array_spec(cfg.lattice_const_nm, cfg.radius_um, cfg.filling)?;
    let (shells, eit) = exchange_shells(&array, opts.seed, d, phys)?;
    let mut t = Table::new(
        "rates",
        &["r_m", "exchange_hz", "effective_exchange_hz", "rydberg_fraction", "mean_shift_hz"],
    );
    let mut peak = (f64::NAN, 0.0);
    for r_um in linspace(cfg.r_min_um, cfg.r_max_um, cfg.points) {
        let r = Length::from_um(r_um)?;
        let b = exchange_breakdown(r, &phys.dataset, &eit, d.n_sa)?;
        let j = b.j_eff.cyclic_hz();
        if j > peak.1 {
            peak = (r_um, j);
        }
        t.push(vec![r.meters(), b.j_ex.cyclic_hz(), j, b.p_s, b.mean_shift.cyclic_hz()]);
    }
    let mut out = Outputs::default();
    out.table(t);
    out.put_f64("peak_radius_um", peak.0);
    out.put_f64("peak_effective_exchange_khz", peak.1 * 1e-3);

    let j = |r: Length| shell_exchange_rate(r, &phys.dataset, &eit, d.n_sa);
    let rate = collective_exchange_rate(&shells, j)?;
    out.put_f64("collective_exchange_khz", rate.cyclic_khz());
    out.put_f64("exchange_duration_us", exchange_duration(rate)? * 1e6);
    out.put("array_atoms", shells.iter().map(|s| s.count).sum::<usize>());
    need_points("exchange.dressing.steps", d.steps, 1)?;
    let gamma = Frequency::from_cyclic_khz(d.gamma_khz)?;
    let times = linspace(0.0, cfg.t_max_us * 1e-6, d.steps + 1);
    let evo = collective_exchange_evolution(&shells, j, |_| Ok(gamma), &times)?;
    let mut et = Table::new("evolution", &["t_s", "center_population", "shell_population"]);
    for k in 0..times.len() {
        et.push(vec![times[k], evo.p_center[k], evo.p_shells[k].iter().sum()]);
    }
    out.table(et);
    let tp = d.probe_duration_us * 1e-6;
    if tp <= cfg.t_max_us * 1e-6 {
        out.put_f64("mean_center_over_probe", evo.mean_center(0.0, tp)?);
    }
    Ok(out)
}

fn bloch(cfg: &config::Bloch, phys: &Physics, opts: RunOptions) -> Result<Outputs> {
    need_points("bloch.samples", cfg.samples, 1)?;
    let tr = phys.transition;
    let a = Length::from_m(cfg.a_over_lambda * tr.lambda_p().meters())?;
    let (period, half_width) = bloch_kinematics(
        Frequency::from_cyclic_hz(cfg.delta_z_hz)?,
        Frequency::from_cyclic_hz(cfg.tunneling_hz)?,
        a,
    )?;
    let mut out = Outputs::default();
    out.put_f64("bloch_period_ms", period * 1e3);
    out.put_f64("half_width_um", half_width.um());
    out.put_f64("half_width_over_a", half_width.meters() / a.meters());
    let imaging = ImagingOptions::default();
    out.put_f64("single_scatterer_floor", single_scatterer_floor(&imaging, DipolePattern::Isotropic)?);
    out.put_f64("single_scatterer_floor_circular", single_scatterer_floor(&imaging, DipolePattern::Circular)?);

    if cfg.array_n > 0 {
        let beam = GaussianBeam::new(Length::from_um(cfg.waist_um)?)?;
        let lattice = DipoleLattice::square(cfg.array_n, a, tr, beam)?;
        let detuning = Frequency::from_cyclic_mhz(cfg.probe_detuning_mhz)?;
        let mut t = Table::new(
            "disorder",
            &["spread_m", "roi_reflectance", "roi_reflectance_sem", "roi_transmittance", "mode_reflectance", "mode_transmittance"],
        );
        let mut reflectance = Vec::new();
        for &s in &cfg.spreads_over_a {
            let spread = Length::from_m(s * a.meters())?;
            let r = bloch_disordered_response(&lattice, detuning, spread, cfg.samples, opts.seed, &imaging)?;
            let m = r.mean;
            t.push(vec![spread.meters(), m.roi_reflectance, r.roi_reflectance_sem, m.roi_transmittance, m.reflectance, m.transmittance]);
            reflectance.push(json!({ "spread_over_a": s, "roi_reflectance": finite_or_null(m.roi_reflectance) }));
        }
        out.table(t);
        out.put("reflectance_vs_spread", reflectance);
    }
    Ok(out)
}

fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Config(format!("{}: expected two numeric columns", path.display())))
        };
        pairs.push((parse(0)?, parse(1)?));
    }
    Ok(pairs)
}

fn calibrate(cfg: &config::Calibrate, opts: RunOptions) -> Result<Outputs> {
    let pairs = match &cfg.pairs_csv {
        Some(p) => read_pairs(p)?,
        None => simulate_camera_noise(
            cfg.alpha_photons_per_count,
            cfg.excess_noise_factor,
            &cfg.mean_counts,
            cfg.frames,
            opts.seed,
        )?,
    };
    let cal = camera_conversion_from_noise(&pairs)?;
    let b = cal.fit.params[0];
    let mut t = Table::new("noise", &["mean_counts", "sd_counts", "fit_sd_counts"]);
    for &(m, s) in &pairs {
        t.push(vec![m, s, b * m.sqrt()]);
    }
    let mut out = Outputs::default();
    out.table(t);
    out.put_f64("alpha_photons_per_count", cal.alpha);
    out.put_f64("alpha_sd", cal.sd);
    Ok(out)
}
