//! Scenario configuration. Every key carries its unit in the name; unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Global {
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub output_dir: PathBuf,
}

impl Default for Global {
    fn default() -> Self {
        Global {
            seed: 1,
            threads: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Probe transition and the pair-state dataset shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub gamma_e_mhz: f64,
    pub gamma_r_khz: f64,
    pub lambda_p_nm: f64,
    pub lambda_c_nm: f64,
    /// Pair-potential table; the bundled dataset when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_dataset: Option<PathBuf>,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            gamma_e_mhz: 6.06,
            gamma_r_khz: 5.0,
            lambda_p_nm: 780.241,
            lambda_c_nm: 479.8,
            pair_dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blockade {
    pub c6_ghz_um6: f64,
    pub omega_p_mhz: f64,
    pub omega_c_mhz: f64,
    pub r_min_um: f64,
    pub r_max_um: f64,
    pub points: usize,
}

impl Default for Blockade {
    fn default() -> Self {
        Blockade {
            c6_ghz_um6: 35.0,
            omega_p_mhz: 0.168,
            omega_c_mhz: 6.7,
            r_min_um: 1.0,
            r_max_um: 12.0,
            points: 111,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectrum {
    pub omega_p_mhz: f64,
    pub omega_c_mhz: f64,
    pub delta_min_mhz: f64,
    pub delta_max_mhz: f64,
    pub points: usize,
    /// Side length of the square coupled-dipole array.
    pub array_n: usize,
    pub a_over_lambda: f64,
    pub waist_um: f64,
    pub array_span_mhz: f64,
    pub array_points: usize,
    /// Blockaded fraction of the synthetic Rydberg-EIT spectrum that is fitted.
    pub p_s: f64,
    pub noise_sd: f64,
}

impl Default for Spectrum {
    fn default() -> Self {
        Spectrum {
            omega_p_mhz: 0.168,
            omega_c_mhz: 6.7,
            delta_min_mhz: -10.0,
            delta_max_mhz: 10.0,
            points: 401,
            array_n: 20,
            a_over_lambda: 0.68,
            waist_um: 10.0,
            array_span_mhz: 8.0,
            array_points: 41,
            p_s: 0.16,
            noise_sd: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchedSpectrum {
    /// Mirror linewidth of the Lorentzian mirror spectrum.
    pub gamma_mirror_mhz: f64,
    pub omega_p_mhz: f64,
    pub omega_c_mhz: f64,
    pub delta_min_mhz: f64,
    pub delta_max_mhz: f64,
    pub points: usize,
    pub p_p_values: Vec<f64>,
}

impl Default for SwitchedSpectrum {
    fn default() -> Self {
        SwitchedSpectrum {
            gamma_mirror_mhz: 3.75,
            omega_p_mhz: 0.168,
            omega_c_mhz: 6.7,
            delta_min_mhz: -10.0,
            delta_max_mhz: 10.0,
            points: 401,
            p_p_values: vec![0.0, 0.52, 0.96, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileModeName {
    CoupledDipole,
    ChiMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spatial {
    pub lattice_const_nm: f64,
    pub radius_um: f64,
    pub filling: f64,
    pub waist_um: f64,
    pub p_p: f64,
    pub omega_p_mhz: f64,
    pub omega_c_mhz: f64,
    /// Probe detuning; the collective resonance of a reference array (same
    /// lattice, radius capped at 4.7 µm) when absent. The control is detuned
    /// by the opposite amount.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_detuning_mhz: Option<f64>,
    pub self_blockade: f64,
    pub mode: ProfileModeName,
    /// Transmittance of a mirror atom in chi-map mode.
    pub mirror_transmittance: f64,
    pub roi_um: f64,
    pub bin_um: f64,
    pub pixel_um: f64,
    pub radial_points: usize,
    /// Radius of the central average.
    pub center_radius_um: f64,
    /// Radial slope is fitted on `[r_b, r_b + slope_window_um]`.
    pub slope_window_um: f64,
    pub blockade_radius_um: f64,
    pub exchange_smoothing: bool,
    pub exchange: ExchangeDressing,
}

impl Default for Spatial {
    fn default() -> Self {
        Spatial {
            lattice_const_nm: 532.0,
            radius_um: 4.7,
            filling: 1.0,
            waist_um: 10.0,
            p_p: 0.52,
            omega_p_mhz: 0.168,
            omega_c_mhz: 6.7,
            probe_detuning_mhz: None,
            self_blockade: 0.16,
            mode: ProfileModeName::CoupledDipole,
            mirror_transmittance: 0.35,
            roi_um: 7.0,
            bin_um: 0.5,
            pixel_um: 0.1,
            radial_points: 120,
            center_radius_um: 1.0,
            slope_window_um: 2.0,
            blockade_radius_um: 4.6,
            exchange_smoothing: false,
            exchange: ExchangeDressing::default(),
        }
    }
}

impl Spatial {
    /// The large-array variant with exchange smoothing.
    pub fn large() -> Self {
        Spatial {
            radius_um: 12.5,
            filling: 0.865,
            roi_um: 10.0,
            pixel_um: 0.2,
            exchange_smoothing: true,
            ..Spatial::default()
        }
    }
}

/// Dressing of the array atoms that mediates ancilla exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeDressing {
    pub omega_p_mhz: f64,
    pub omega_c_mhz: f64,
    /// Atoms sharing one Rydberg excitation in the dressed-state fraction.
    pub n_sa: f64,
    pub probe_duration_us: f64,
    /// Loss rate of every node in the star model.
    pub gamma_khz: f64,
    pub steps: usize,
}

impl Default for ExchangeDressing {
    fn default() -> Self {
        ExchangeDressing {
            omega_p_mhz: 0.168,
            omega_c_mhz: 13.4,
            n_sa: 77.0,
            probe_duration_us: 20.0,
            gamma_khz: 0.0,
            steps: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rabi {
    pub omega_uv_mhz: f64,
    pub tau_decay_us: f64,
    /// Weight of the two-ancilla (√2-enhanced) component.
    pub p_2: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub t_max_us: f64,
    pub points: usize,
    pub noise_sd: f64,
}

impl Default for Rabi {
    fn default() -> Self {
        Rabi {
            omega_uv_mhz: 1.22,
            tau_decay_us: 6.0,
            p_2: 0.28,
            amplitude: 0.45,
            offset: 0.35,
            t_max_us: 6.0,
            points: 61,
            noise_sd: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lifetime {
    pub eta_init: f64,
    pub tau_us: f64,
    pub probe_us: f64,
    pub t_mirror: f64,
    pub t_eit: f64,
    pub delay_max_us: f64,
    pub points: usize,
    pub noise_sd: f64,
    /// Delay at which the Rydberg fraction is reported.
    pub report_delay_us: f64,
}

impl Default for Lifetime {
    fn default() -> Self {
        Lifetime {
            eta_init: 0.85,
            tau_us: 27.0,
            probe_us: 20.0,
            t_mirror: 0.35,
            t_eit: 0.85,
            delay_max_us: 120.0,
            points: 16,
            noise_sd: 0.02,
            report_delay_us: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Histogram {
    pub mu_background: f64,
    pub mu_switched: f64,
    pub prep_fidelity: f64,
    pub prep_fidelity_sd: f64,
    pub tau_us: f64,
    pub tau_sd_us: f64,
    pub delay_us: f64,
    pub probe_us: f64,
    pub excess_noise_factor: f64,
    pub alpha_photons_per_count: f64,
    pub samples: usize,
    pub bin_lo_photons: f64,
    pub bin_width_photons: f64,
    pub bins: usize,
    pub tail_threshold_photons: f64,
    pub band_runs: usize,
    pub band_samples: usize,
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram {
            mu_background: 18.3,
            mu_switched: 65.0,
            prep_fidelity: 0.85,
            prep_fidelity_sd: 0.10,
            tau_us: 27.0,
            tau_sd_us: 6.0,
            delay_us: 4.0,
            probe_us: 60.0,
            excess_noise_factor: 2.0,
            alpha_photons_per_count: 0.309,
            samples: 100_000,
            bin_lo_photons: 0.0,
            bin_width_photons: 2.0,
            bins: 100,
            tail_threshold_photons: 60.0,
            band_runs: 200,
            band_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    pub dressing: ExchangeDressing,
    pub r_min_um: f64,
    pub r_max_um: f64,
    pub points: usize,
    pub lattice_const_nm: f64,
    pub radius_um: f64,
    pub filling: f64,
    pub t_max_us: f64,
}

impl Default for Exchange {
    fn default() -> Self {
        Exchange {
            dressing: ExchangeDressing::default(),
            r_min_um: 1.0,
            r_max_um: 12.0,
            points: 111,
            lattice_const_nm: 532.0,
            radius_um: 12.5,
            filling: 0.865,
            t_max_us: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bloch {
    pub delta_z_hz: f64,
    pub tunneling_hz: f64,
    pub array_n: usize,
    pub a_over_lambda: f64,
    pub waist_um: f64,
    /// Vertical spreads in units of the lattice constant.
    pub spreads_over_a: Vec<f64>,
    pub samples: usize,
    /// Probe detuning; displaced atoms respond near the single-atom line.
    pub probe_detuning_mhz: f64,
}

impl Default for Bloch {
    fn default() -> Self {
        Bloch {
            delta_z_hz: 360.0,
            tunneling_hz: 324.0,
            array_n: 20,
            a_over_lambda: 0.68,
            waist_um: 10.0,
            spreads_over_a: vec![0.0, 1.2, 2.4, 3.6],
            samples: 8,
            probe_detuning_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibrate {
    pub alpha_photons_per_count: f64,
    pub excess_noise_factor: f64,
    pub mean_counts: Vec<f64>,
    pub frames: usize,
    /// Measured `mean_counts,sd_counts` pairs; replaces the simulation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs_csv: Option<PathBuf>,
}

impl Default for Calibrate {
    fn default() -> Self {
        Calibrate {
            alpha_photons_per_count: 0.32,
            excess_noise_factor: 2.0,
            mean_counts: (1..=8).map(|k| 250.0 * k as f64).collect(),
            frames: 1000,
            pairs_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    #[serde(default)]
    pub global: Global,
    #[serde(default)]
    pub physics: Physics,
    pub blockade: Option<Blockade>,
    pub spectrum: Option<Spectrum>,
    pub switched_spectrum: Option<SwitchedSpectrum>,
    pub spatial: Option<Spatial>,
    pub rabi: Option<Rabi>,
    pub lifetime: Option<Lifetime>,
    pub histogram: Option<Histogram>,
    pub exchange: Option<Exchange>,
    pub bloch: Option<Bloch>,
    pub calibrate: Option<Calibrate>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            global: Global::default(),
            physics: Physics::default(),
            blockade: Some(Blockade::default()),
            spectrum: Some(Spectrum::default()),
            switched_spectrum: Some(SwitchedSpectrum::default()),
            spatial: Some(Spatial::default()),
            rabi: Some(Rabi::default()),
            lifetime: Some(Lifetime::default()),
            histogram: Some(Histogram::default()),
            exchange: Some(Exchange::default()),
            bloch: Some(Bloch::default()),
            calibrate: Some(Calibrate::default()),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Looks up a scenario section, failing with the section name when absent.
pub fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("config has no [{name}] section")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let text = Config::default().to_toml();
        let parsed = Config::parse(&text).unwrap();
        assert_eq!(parsed, Config::default());
        assert_eq!(parsed.to_toml(), text);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Config::parse("[blockade]\nc6 = 35.0\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        let mut text = Config::default().to_toml();
        text.push_str("\n[extra]\nx = 1\n");
        assert!(Config::parse(&text).is_err());
    }

    #[test]
    fn missing_section_named() {
        let cfg = Config::parse("[global]\nseed = 3\nthreads = 1\noutput_dir = \"o\"\n").unwrap();
        let err = section(&cfg.rabi, "rabi").unwrap_err();
        assert!(err.to_string().contains("[rabi]"));
    }
}
