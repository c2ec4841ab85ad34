//! Radially averaged transmittance around the ancilla.

use std::collections::HashMap;

use super::switched::switched_site_chi;
use super::{
    array_spectrum, switched_image, DipoleLattice, GaussianBeam, ImageGrid, ImagingOptions, SwitchedSetup,
};
use crate::dynamics::{radial_average, RadialProfile};
use crate::error::{ensure_positive, ensure_probability, Error, Result};
use crate::pair_potentials::PotentialDataset;
use crate::susceptibility::{chi_eit, chi_two_level, EitConditions, Susceptibility};
use crate::units::{ArraySpec, Frequency, Length};

/// How the switched image is turned into pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileMode {
    /// Coupled-dipole solve imaged through the aperture.
    CoupledDipole { beam: GaussianBeam, imaging: ImagingOptions },
    /// Each pixel takes the response of the nearest lattice site,
    /// `T = 1 − (1 − mirror_transmittance)·Im s`; empty sites read 1.
    ChiMap { mirror_transmittance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOptions {
    /// Outer radius of the profile around the ancilla.
    pub roi: Length,
    pub bin_width: Length,
    pub pixel_pitch: Length,
    /// Distances at which the pair steady state is solved.
    pub radial_points: usize,
    pub self_blockade: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions {
            roi: Length::m(7e-6),
            bin_width: Length::m(0.5e-6),
            pixel_pitch: Length::m(0.1e-6),
            radial_points: 120,
            self_blockade: 0.16,
        }
    }
}

/// Profiles with the ancilla present in every shot and with no ancilla.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfiles {
    pub switched: RadialProfile,
    pub uniform: RadialProfile,
}

impl RadialProfiles {
    /// Shot average with the ancilla present in a fraction `p_p` of shots.
    pub fn mixed(&self, p_p: f64) -> Result<RadialProfile> {
        self.switched.mix(p_p, &self.uniform)
    }
}

/// Centre of a Lorentzian fit to the imaged transmission dip of `lattice`
/// over ±8 MHz.
pub fn collective_resonance(lattice: &DipoleLattice, imaging: &ImagingOptions) -> Result<Frequency> {
    let grid = (0..41)
        .map(|k| Frequency::from_cyclic_mhz(-8.0 + 0.4 * k as f64))
        .collect::<Result<Vec<_>>>()?;
    let fit = array_spectrum(lattice, &grid, imaging)?
        .linewidth_fit
        .ok_or_else(|| Error::Numeric("no transmission dip to fit".into()))?;
    Frequency::from_cyclic_mhz(fit.get("center"))
}

/// Radial transmittance profiles around the ancilla of `array`, with the
/// sites occupied according to `seed`.
pub fn radial_transmission_profile(
    array: &ArraySpec,
    seed: u64,
    eit: &EitConditions,
    dataset: &PotentialDataset,
    opts: &RadialOptions,
    mode: &ProfileMode,
) -> Result<RadialProfiles> {
    ensure_positive("roi", opts.roi.meters())?;
    ensure_positive("pixel_pitch", opts.pixel_pitch.meters())?;
    ensure_probability("self_blockade", opts.self_blockade)?;
    if opts.roi.meters() > 2.0 * array.radius().meters() {
        return Err(Error::invalid("roi", "exceeds the array diameter"));
    }
    let ancilla = array.ancilla_position();
    let setup = SwitchedSetup {
        eit: *eit,
        dataset,
        ancilla,
        self_blockade: opts.self_blockade,
        radial_points: opts.radial_points,
    };
    let grid = ImageGrid::square(ancilla, opts.roi, opts.pixel_pitch)?;
    let (sw, un) = match mode {
        ProfileMode::CoupledDipole { beam, imaging } => {
            let lattice = DipoleLattice::from_array(array, seed, eit.transition, *beam)?;
            let ims = switched_image(&lattice, &setup, &grid, imaging)?;
            (ims.switched_transmittance.data, ims.uniform_transmittance.data)
        }
        ProfileMode::ChiMap { mirror_transmittance } => {
            ensure_probability("mirror_transmittance", *mirror_transmittance)?;
            let beam = GaussianBeam::new(Length::m(10e-6))?;
            let lattice = DipoleLattice::from_array(array, seed, eit.transition, beam)?;
            let site_chi = switched_site_chi(&lattice, &setup)?;
            let ta = chi_two_level(eit.probe.detuning(), eit.transition.gamma_e())?.value();
            let p_s = opts.self_blockade;
            let uniform = Susceptibility(p_s * ta + (1.0 - p_s) * chi_eit(eit).value());
            let sites = array.occupied_sites(seed);
            let index: HashMap<(i32, i32), usize> = sites.iter().enumerate().map(|(k, s)| (*s, k)).collect();
            let a = array.lattice_const().meters();
            let loss = 1.0 - mirror_transmittance;
            let pixels = |chi: &dyn Fn(usize) -> Susceptibility| -> Vec<f64> {
                let mut out = Vec::with_capacity(grid.nx * grid.ny);
                for iy in 0..grid.ny {
                    for ix in 0..grid.nx {
                        let x = grid.x0 + ix as f64 * grid.pitch;
                        let y = grid.y0 + iy as f64 * grid.pitch;
                        let site = ((x / a).round() as i32, (y / a).round() as i32);
                        out.push(match index.get(&site) {
                            Some(&k) => 1.0 - loss * chi(k).im(),
                            None => 1.0,
                        });
                    }
                }
                out
            };
            (pixels(&|k| site_chi[k]), pixels(&|_| uniform))
        }
    };
    let r_max = opts.roi.meters();
    let bin = opts.bin_width.meters();
    let origin = [grid.x0, grid.y0];
    Ok(RadialProfiles {
        switched: radial_average(&sw, grid.nx, origin, grid.pitch, ancilla, bin, r_max)?,
        uniform: radial_average(&un, grid.nx, origin, grid.pitch, ancilla, bin, r_max)?,
    })
}
