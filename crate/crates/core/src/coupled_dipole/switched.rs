//! Ancilla-switched images and vertically disordered arrays.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{response_point, solve_dipoles, DipoleLattice, Image, ImageGrid, ImagingOptions, ResponsePoint};
use crate::dynamics::RadialProfile;
use crate::error::{ensure_finite, ensure_probability, Error, Result};
use crate::pair_potentials::PotentialDataset;
use crate::steady_state::chi_vs_distance;
use crate::susceptibility::{chi_eit, chi_two_level, EitConditions, Susceptibility};
use crate::units::{Frequency, Length};

/// Inputs of the switched-array images.
#[derive(Debug, Clone)]
pub struct SwitchedSetup<'a> {
    /// Probe (Rabi frequency and detuning), control and transition.
    pub eit: EitConditions,
    pub dataset: &'a PotentialDataset,
    /// Ancilla position in meters.
    pub ancilla: [f64; 2],
    /// Fraction of array atoms blockaded by the array's own Rydberg
    /// admixture; these respond as two-level atoms everywhere.
    pub self_blockade: f64,
    /// Number of distances at which the pair steady state is solved before
    /// interpolating to the sites.
    pub radial_points: usize,
}

/// Images of the array with the ancilla present and with a uniform EIT
/// response, plus the per-site susceptibilities used.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedImages {
    pub switched_transmittance: Image,
    pub switched_reflectance: Image,
    pub uniform_transmittance: Image,
    pub uniform_reflectance: Image,
    pub site_chi: Vec<Susceptibility>,
}

impl SwitchedImages {
    /// Shot-averaged transmittance with the ancilla present in a fraction
    /// `p_p` of shots.
    pub fn transmittance(&self, p_p: f64) -> Result<Image> {
        ensure_probability("p_p", p_p)?;
        self.switched_transmittance.mix(p_p, &self.uniform_transmittance)
    }

    pub fn reflectance(&self, p_p: f64) -> Result<Image> {
        ensure_probability("p_p", p_p)?;
        self.switched_reflectance.mix(p_p, &self.uniform_reflectance)
    }
}

fn self_blockaded(chi: Complex64, two_level: Complex64, p_s: f64) -> Susceptibility {
    Susceptibility(p_s * two_level + (1.0 - p_s) * chi)
}

/// Per-site susceptibility from the pair steady state at each site's
/// distance to the ancilla. Distances outside the dataset range use the
/// nearest tabulated distance.
pub(crate) fn switched_site_chi(lattice: &DipoleLattice, setup: &SwitchedSetup<'_>) -> Result<Vec<Susceptibility>> {
    ensure_probability("self_blockade", setup.self_blockade)?;
    ensure_finite("ancilla", setup.ancilla[0])?;
    ensure_finite("ancilla", setup.ancilla[1])?;
    if setup.radial_points < 2 {
        return Err(Error::invalid("radial_points", "must be >= 2"));
    }
    let dist: Vec<f64> = lattice
        .positions()
        .iter()
        .map(|p| (p[0] - setup.ancilla[0]).hypot(p[1] - setup.ancilla[1]))
        .collect();
    let (r_min, r_max) = setup.dataset.valid_range();
    let far = dist.iter().cloned().fold(0.0, f64::max).clamp(r_min.meters(), r_max.meters());
    let lo = r_min.meters();
    let n = setup.radial_points;
    let grid: Vec<Length> = (0..n)
        .map(|i| {
            let r = if far > lo { lo * (far / lo).powf(i as f64 / (n - 1) as f64) } else { lo };
            Length::m(r.clamp(lo, r_max.meters()))
        })
        .collect();
    let table = chi_vs_distance(&setup.eit.probe, &setup.eit.control, setup.dataset, &setup.eit.transition, &grid)?;
    let ta = chi_two_level(setup.eit.probe.detuning(), setup.eit.transition.gamma_e())?.value();
    Ok(dist
        .iter()
        .map(|&d| {
            let d = d.clamp(table[0].0.meters(), table[n - 1].0.meters());
            let k = table.partition_point(|(r, _)| r.meters() <= d).clamp(1, n - 1);
            let (ra, ca) = (table[k - 1].0.meters(), table[k - 1].1.value());
            let (rb, cb) = (table[k].0.meters(), table[k].1.value());
            let w = if rb > ra { (d - ra) / (rb - ra) } else { 0.0 };
            self_blockaded(ca + (cb - ca) * w, ta, setup.self_blockade)
        })
        .collect())
}

/// Transmittance and reflectance images of the array with a Rydberg ancilla
/// at `setup.ancilla`, and of the same array without it.
pub fn switched_image(
    lattice: &DipoleLattice,
    setup: &SwitchedSetup<'_>,
    grid: &ImageGrid,
    imaging: &ImagingOptions,
) -> Result<SwitchedImages> {
    let detuning = setup.eit.probe.detuning();
    let site_chi = switched_site_chi(lattice, setup)?;
    let ta = chi_two_level(detuning, setup.eit.transition.gamma_e())?.value();
    let uniform = self_blockaded(chi_eit(&setup.eit).value(), ta, setup.self_blockade);
    let uniform_chi = vec![uniform; lattice.len()];
    let (sw, un) = rayon::join(
        || solve_dipoles(lattice, detuning, Some(&site_chi)),
        || solve_dipoles(lattice, detuning, Some(&uniform_chi)),
    );
    let (sw_t, sw_r, _) = sw?.images(grid, imaging)?;
    let (un_t, un_r, _) = un?.images(grid, imaging)?;
    Ok(SwitchedImages {
        switched_transmittance: sw_t,
        switched_reflectance: sw_r,
        uniform_transmittance: un_t,
        uniform_reflectance: un_r,
        site_chi,
    })
}

/// Radius at which a radial profile crosses halfway between its innermost
/// and outermost values.
pub fn disc_half_max_radius(profile: &RadialProfile) -> Option<Length> {
    let v = &profile.transmittance;
    let r = &profile.radii;
    if v.len() < 2 {
        return None;
    }
    let (inner, outer) = (v[0], v[v.len() - 1]);
    let half = 0.5 * (inner + outer);
    for k in 1..v.len() {
        let (a, b) = (v[k - 1] - half, v[k] - half);
        if a == 0.0 {
            return Some(r[k - 1]);
        }
        if a * b < 0.0 || b == 0.0 {
            let w = a / (a - b);
            let x = r[k - 1].meters() + w * (r[k].meters() - r[k - 1].meters());
            return Length::from_m(x).ok();
        }
    }
    None
}

/// Sample-averaged response of an array with random vertical displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderedResponse {
    pub mean: ResponsePoint,
    /// Standard error of the mean imaged reflectance.
    pub roi_reflectance_sem: f64,
    pub samples: Vec<ResponsePoint>,
}

/// Averages the response over `samples` draws of vertical displacements,
/// uniform within `±spread`. Sample `s` uses stream `s` of a ChaCha8
/// generator seeded with `seed`.
pub fn bloch_disordered_response(
    lattice: &DipoleLattice,
    detuning: Frequency,
    spread: Length,
    samples: usize,
    seed: u64,
    imaging: &ImagingOptions,
) -> Result<DisorderedResponse> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    let s = spread.meters();
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::invalid("spread", "must be finite and >= 0"));
    }
    let points = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let z: Vec<f64> = (0..lattice.len())
                .map(|_| if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 })
                .collect();
            response_point(&lattice.with_z(&z)?, detuning, None, imaging)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = points.len() as f64;
    let avg = |f: fn(&ResponsePoint) -> f64| points.iter().map(f).sum::<f64>() / n;
    let mean = ResponsePoint {
        detuning,
        transmittance: avg(|p| p.transmittance),
        reflectance: avg(|p| p.reflectance),
        roi_transmittance: avg(|p| p.roi_transmittance),
        roi_reflectance: avg(|p| p.roi_reflectance),
        scattered: avg(|p| p.scattered),
        collected_backward: avg(|p| p.collected_backward),
    };
    let sem = if points.len() > 1 {
        let var = points.iter().map(|p| (p.roi_reflectance - mean.roi_reflectance).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(DisorderedResponse {
        mean,
        roi_reflectance_sem: sem,
        samples: points,
    })
}
