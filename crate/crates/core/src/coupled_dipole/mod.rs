//! Classical coupled-dipole model of a finite atomic array driven by a
//! focused Gaussian probe beam.
//!
//! Internally all lengths are scaled by the probe wavenumber `k`, so the
//! Green's function is that of `k = 1` and the polarizability of a site with
//! normalized susceptibility `s` is `6π s`.

mod green;
mod imaging;
mod radial;
mod switched;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::fitting::models::fit_lorentzian;
use crate::fitting::{FitData, FitOptions, FitResult};
use crate::susceptibility::{chi_two_level, Susceptibility};
use crate::units::{ArraySpec, Frequency, Length, TransitionParams};

pub use green::green_tensor;
pub use imaging::{single_scatterer_floor, DipolePattern, Image, ImageGrid, ImagingOptions};
pub use radial::{collective_resonance, radial_transmission_profile, ProfileMode, RadialOptions, RadialProfiles};
pub use switched::{
    bloch_disordered_response, disc_half_max_radius, switched_image, DisorderedResponse, SwitchedImages,
    SwitchedSetup,
};

use green::Vec3;

/// Largest number of dipoles accepted by default.
pub const DEFAULT_MAX_DIPOLES: usize = 2500;

const CZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Gaussian probe beam propagating along +z with its focus in the plane
/// `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBeam {
    waist: Length,
    center: [f64; 2],
    amplitude: Complex64,
    polarization: [Complex64; 2],
}

impl GaussianBeam {
    /// σ⁺ circular polarization `(x̂ + iŷ)/√2`, unit amplitude, centred on
    /// the origin.
    pub fn new(waist: Length) -> Result<Self> {
        ensure_positive("waist", waist.meters())?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Ok(GaussianBeam {
            waist,
            center: [0.0, 0.0],
            amplitude: Complex64::new(1.0, 0.0),
            polarization: [Complex64::new(s, 0.0), Complex64::new(0.0, s)],
        })
    }

    /// Beam axis position in meters.
    pub fn with_center(self, center: [f64; 2]) -> Self {
        GaussianBeam { center, ..self }
    }

    pub fn with_amplitude(self, amplitude: Complex64) -> Result<Self> {
        if !(amplitude.norm() > 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid("amplitude", "must be finite and nonzero"));
        }
        Ok(GaussianBeam { amplitude, ..self })
    }

    /// Transverse polarization; normalized internally.
    pub fn with_polarization(self, pol: [Complex64; 2]) -> Result<Self> {
        let n = (pol[0].norm_sqr() + pol[1].norm_sqr()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("polarization", "must be a nonzero finite vector"));
        }
        Ok(GaussianBeam {
            polarization: [pol[0] / n, pol[1] / n],
            ..self
        })
    }

    pub fn waist(&self) -> Length {
        self.waist
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn polarization(&self) -> [Complex64; 2] {
        self.polarization
    }

    /// Unit vector orthogonal to the polarization.
    fn cross_polarization(&self) -> [Complex64; 2] {
        let e = self.polarization;
        [-e[1].conj(), e[0].conj()]
    }

    /// Paraxial mode profile at scaled position `r` relative to the beam
    /// axis (`k` converts the waist); `backward` mirrors the propagation
    /// direction.
    fn mode(&self, k: f64, r: [f64; 3], backward: bool) -> Complex64 {
        let w0 = self.waist.meters() * k;
        let zr = 0.5 * w0 * w0;
        let z = if backward { -r[2] } else { r[2] };
        let q = Complex64::new(1.0, z / zr);
        let rho2 = r[0] * r[0] + r[1] * r[1];
        (-rho2 / (w0 * w0 * q)).exp() / q * Complex64::from_polar(1.0, z)
    }
}

/// Dipole positions (meters) with the probe transition and beam.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleLattice {
    positions: Vec<[f64; 3]>,
    transition: TransitionParams,
    beam: GaussianBeam,
}

impl DipoleLattice {
    pub fn new(positions: Vec<[f64; 3]>, transition: TransitionParams, beam: GaussianBeam) -> Result<Self> {
        Self::with_limit(positions, transition, beam, DEFAULT_MAX_DIPOLES)
    }

    /// As [`DipoleLattice::new`] with an explicit size limit.
    pub fn with_limit(
        positions: Vec<[f64; 3]>,
        transition: TransitionParams,
        beam: GaussianBeam,
        max_dipoles: usize,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("positions", "at least one dipole required"));
        }
        if positions.len() > max_dipoles {
            return Err(Error::invalid(
                "positions",
                format!("{} dipoles exceed the limit of {max_dipoles}", positions.len()),
            ));
        }
        for p in &positions {
            for &c in p {
                ensure_finite("position", c)?;
            }
        }
        let tol = 1e-6 * transition.lambda_p().meters();
        let mut order: Vec<usize> = (0..positions.len()).collect();
        order.sort_by(|&a, &b| positions[a][0].total_cmp(&positions[b][0]));
        for (idx, &a) in order.iter().enumerate() {
            for &b in &order[idx + 1..] {
                if positions[b][0] - positions[a][0] > tol {
                    break;
                }
                let d2: f64 = (0..3).map(|c| (positions[a][c] - positions[b][c]).powi(2)).sum();
                if d2.sqrt() <= tol {
                    return Err(Error::Singular(format!("dipoles {a} and {b} coincide")));
                }
            }
        }
        Ok(DipoleLattice {
            positions,
            transition,
            beam,
        })
    }

    /// Occupied sites of `spec` in the plane `z = 0`; the ancilla site is
    /// left empty.
    pub fn from_array(spec: &ArraySpec, seed: u64, transition: TransitionParams, beam: GaussianBeam) -> Result<Self> {
        let positions = spec
            .occupied_sites(seed)
            .into_iter()
            .map(|s| {
                let p = spec.position(s);
                [p[0], p[1], 0.0]
            })
            .collect();
        Self::new(positions, transition, beam)
    }

    /// Fully filled `n × n` square lattice centred on the origin.
    pub fn square(n: usize, a_lat: Length, transition: TransitionParams, beam: GaussianBeam) -> Result<Self> {
        ensure_positive("a_lat", a_lat.meters())?;
        let a = a_lat.meters();
        let c = 0.5 * (n as f64 - 1.0);
        let positions = (0..n * n)
            .map(|k| [(k % n) as f64 * a - c * a, (k / n) as f64 * a - c * a, 0.0])
            .collect();
        Self::new(positions, transition, beam)
    }

    /// Replaces the z coordinates.
    pub fn with_z(&self, z: &[f64]) -> Result<Self> {
        if z.len() != self.positions.len() {
            return Err(Error::invalid("z", "one offset per dipole required"));
        }
        let positions = self.positions.iter().zip(z).map(|(p, &zz)| [p[0], p[1], zz]).collect();
        Self::new(positions, self.transition, self.beam)
    }

    pub fn with_beam(&self, beam: GaussianBeam) -> Self {
        DipoleLattice { beam, ..self.clone() }
    }

    /// Rigid translation of all positions (meters).
    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let positions = self
            .positions
            .iter()
            .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
            .collect();
        DipoleLattice { positions, ..self.clone() }
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn transition(&self) -> &TransitionParams {
        &self.transition
    }

    pub fn beam(&self) -> &GaussianBeam {
        &self.beam
    }

    fn k(&self) -> f64 {
        2.0 * PI / self.transition.lambda_p().meters()
    }

    /// Scaled positions relative to the beam axis.
    fn scaled_positions(&self) -> Vec<[f64; 3]> {
        let k = self.k();
        let c = self.beam.center;
        self.positions
            .iter()
            .map(|p| [(p[0] - c[0]) * k, (p[1] - c[1]) * k, p[2] * k])
            .collect()
    }
}

/// Induced dipoles of one configuration.
#[derive(Debug, Clone)]
pub struct DipoleSolution {
    /// Scaled positions relative to the beam axis, scatterers only.
    positions: Vec<[f64; 3]>,
    dipoles: Vec<Vec3>,
    beam: GaussianBeam,
    k: f64,
}

/// Coupling of the scattered light to the Gaussian modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCoupling {
    /// Forward co-polarized scattering amplitude `c`; the transmitted
    /// amplitude is `1 + c`.
    pub forward: Complex64,
    pub forward_cross: Complex64,
    pub backward: Complex64,
    pub backward_cross: Complex64,
}

impl ModeCoupling {
    pub fn transmittance(&self) -> f64 {
        (Complex64::new(1.0, 0.0) + self.forward).norm_sqr() + self.forward_cross.norm_sqr()
    }

    pub fn reflectance(&self) -> f64 {
        self.backward.norm_sqr() + self.backward_cross.norm_sqr()
    }

    /// Extinguished fraction of the beam power, `−2 Re c`.
    pub fn extinction(&self) -> f64 {
        -2.0 * self.forward.re
    }
}

/// Solves for the induced dipoles at probe detuning `detuning`. A per-site
/// susceptibility replaces the two-level response; sites with zero
/// susceptibility do not scatter.
pub fn solve_dipoles(
    lattice: &DipoleLattice,
    detuning: Frequency,
    site_chi: Option<&[Susceptibility]>,
) -> Result<DipoleSolution> {
    let chi: Vec<Complex64> = match site_chi {
        Some(c) => {
            if c.len() != lattice.len() {
                return Err(Error::invalid("site_chi", "one susceptibility per site required"));
            }
            c.iter().map(|s| s.value()).collect()
        }
        None => vec![chi_two_level(detuning, lattice.transition.gamma_e())?.value(); lattice.len()],
    };
    if chi.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("site_chi", "non-finite susceptibility"));
    }
    let all = lattice.scaled_positions();
    let active: Vec<usize> = (0..all.len()).filter(|&i| chi[i].norm() > 1e-12).collect();
    let positions: Vec<[f64; 3]> = active.iter().map(|&i| all[i]).collect();
    let inv_alpha: Vec<Complex64> = active.iter().map(|&i| 1.0 / (6.0 * PI * chi[i])).collect();
    let k = lattice.k();
    let beam = lattice.beam;
    let n = positions.len();
    if n == 0 {
        return Ok(DipoleSolution {
            positions,
            dipoles: Vec::new(),
            beam,
            k,
        });
    }

    let z0 = positions[0][2];
    let planar = positions.iter().all(|p| (p[2] - z0).abs() < 1e-12);
    let nc = if planar { 2 } else { 3 };
    let dim = nc * n;
    let mut data = vec![CZERO; dim * dim];
    // column-major fill, one dipole's columns per task
    data.par_chunks_mut(dim * nc).enumerate().for_each(|(l, cols)| {
        for j in 0..n {
            let block = if j == l {
                None
            } else {
                let d = [
                    positions[j][0] - positions[l][0],
                    positions[j][1] - positions[l][1],
                    positions[j][2] - positions[l][2],
                ];
                Some(green_tensor(d))
            };
            for b in 0..nc {
                for a in 0..nc {
                    let v = match &block {
                        None if a == b => inv_alpha[l],
                        None => CZERO,
                        Some(g) => -g[a][b],
                    };
                    cols[b * dim + j * nc + a] = v;
                }
            }
        }
    });
    let m = DMatrix::from_vec(dim, dim, data);
    let amp = beam.amplitude;
    let pol = beam.polarization;
    let rhs = DVector::from_fn(dim, |row, _| {
        let (j, a) = (row / nc, row % nc);
        if a == 2 {
            CZERO
        } else {
            amp * pol[a] * beam.mode(k, positions[j], false)
        }
    });
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("coupled-dipole matrix is singular".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite dipole amplitudes".into()));
    }
    let dipoles = (0..n)
        .map(|j| {
            let mut p = [CZERO; 3];
            for a in 0..nc {
                p[a] = sol[j * nc + a];
            }
            p
        })
        .collect();
    Ok(DipoleSolution {
        positions,
        dipoles,
        beam,
        k,
    })
}

impl DipoleSolution {
    /// Number of scattering dipoles.
    pub fn len(&self) -> usize {
        self.dipoles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dipoles.is_empty()
    }

    /// Induced dipole moments in scaled units (field of dipole `p` at
    /// scaled separation `d` is `G(d)·p`).
    pub fn dipoles(&self) -> &[[Complex64; 3]] {
        &self.dipoles
    }

    /// Incident field at a position in meters.
    pub fn incident_field(&self, r: [f64; 3]) -> [Complex64; 3] {
        let s = self.scale(r);
        let u = self.beam.mode(self.k, s, false) * self.beam.amplitude;
        let pol = self.beam.polarization;
        [pol[0] * u, pol[1] * u, CZERO]
    }

    /// Scattered field at a position in meters (must not coincide with a
    /// dipole).
    pub fn scattered_field(&self, r: [f64; 3]) -> [Complex64; 3] {
        let s = self.scale(r);
        let mut e = [CZERO; 3];
        for (pos, p) in self.positions.iter().zip(&self.dipoles) {
            let g = green_tensor([s[0] - pos[0], s[1] - pos[1], s[2] - pos[2]]);
            let f = green::apply(&g, p);
            for c in 0..3 {
                e[c] += f[c];
            }
        }
        e
    }

    fn scale(&self, r: [f64; 3]) -> [f64; 3] {
        let c = self.beam.center;
        [(r[0] - c[0]) * self.k, (r[1] - c[1]) * self.k, r[2] * self.k]
    }

    /// Projections of the scattered far field onto the forward and backward
    /// Gaussian modes in both polarizations.
    pub fn mode_coupling(&self) -> ModeCoupling {
        let w0 = self.beam.waist.meters() * self.k;
        let norm = Complex64::new(0.0, 1.0) / (PI * w0 * w0 * self.beam.amplitude);
        let e = self.beam.polarization;
        let x = self.beam.cross_polarization();
        let mut acc = [CZERO; 4];
        for (pos, p) in self.positions.iter().zip(&self.dipoles) {
            let uf = self.beam.mode(self.k, *pos, false).conj();
            let ub = self.beam.mode(self.k, *pos, true).conj();
            let proj = |v: [Complex64; 2]| v[0].conj() * p[0] + v[1].conj() * p[1];
            acc[0] += uf * proj(e);
            acc[1] += uf * proj(x);
            acc[2] += ub * proj(e);
            acc[3] += ub * proj(x);
        }
        ModeCoupling {
            forward: norm * acc[0],
            forward_cross: norm * acc[1],
            backward: norm * acc[2],
            backward_cross: norm * acc[3],
        }
    }

    /// Total scattered power `Σ p_j† Im G(r_j − r_l) p_l` divided by the
    /// incident beam power.
    pub fn scattered_fraction(&self) -> f64 {
        imaging::total_scattered_power(&self.positions, &self.dipoles) / self.incident_power()
    }

    /// Fraction of the scattered power collected in reflection by the
    /// imaging aperture.
    pub fn collected_backward(&self, imaging: &ImagingOptions) -> Result<f64> {
        imaging::collected_backward_fraction(&self.positions, &self.dipoles, imaging, self.k)
    }

    /// Transmittance, reflectance and incident-intensity images on `grid`.
    pub fn images(&self, grid: &ImageGrid, imaging: &ImagingOptions) -> Result<(Image, Image, Image)> {
        imaging::images(self, grid, imaging)
    }

    /// Beam power `|E0|² π w0²/2` in the same units.
    fn incident_power(&self) -> f64 {
        let w0 = self.beam.waist.meters() * self.k;
        self.beam.amplitude.norm_sqr() * PI * w0 * w0 / 2.0
    }
}

/// Response of the array at one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    pub detuning: Frequency,
    /// Power transmitted into the forward Gaussian mode.
    pub transmittance: f64,
    /// Power reflected into the backward Gaussian mode.
    pub reflectance: f64,
    /// Imaged transmittance inside the region of interest.
    pub roi_transmittance: f64,
    /// Imaged reflectance inside the region of interest.
    pub roi_reflectance: f64,
    /// Scattered power over beam power.
    pub scattered: f64,
    /// Fraction of the scattered power collected in reflection by the
    /// imaging aperture.
    pub collected_backward: f64,
}

/// Full response of one configuration at one detuning.
pub fn response_point(
    lattice: &DipoleLattice,
    detuning: Frequency,
    site_chi: Option<&[Susceptibility]>,
    imaging: &ImagingOptions,
) -> Result<ResponsePoint> {
    let sol = solve_dipoles(lattice, detuning, site_chi)?;
    response_of(&sol, detuning, imaging)
}

fn response_of(sol: &DipoleSolution, detuning: Frequency, imaging: &ImagingOptions) -> Result<ResponsePoint> {
    let modes = sol.mode_coupling();
    let roi = imaging.roi_grid(sol.beam.center)?;
    let (t_img, r_img, i_in) = imaging::images(sol, &roi, imaging)?;
    let sum_in: f64 = i_in.data.iter().sum();
    let roi_t = t_img.data.iter().zip(&i_in.data).map(|(t, i)| t * i).sum::<f64>() / sum_in;
    let roi_r = r_img.data.iter().zip(&i_in.data).map(|(r, i)| r * i).sum::<f64>() / sum_in;
    let scattered = sol.scattered_fraction();
    let collected = if sol.is_empty() { 0.0 } else { sol.collected_backward(imaging)? };
    Ok(ResponsePoint {
        detuning,
        transmittance: modes.transmittance(),
        reflectance: modes.reflectance(),
        roi_transmittance: roi_t,
        roi_reflectance: roi_r,
        scattered,
        collected_backward: collected,
    })
}

/// Spectrum of the array with a Lorentzian fit to the imaged transmittance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayResponse {
    pub points: Vec<ResponsePoint>,
    /// Full width of the fitted transmission dip.
    pub fitted_linewidth: Option<Frequency>,
    pub linewidth_fit: Option<FitResult>,
}

/// Response over a detuning grid, one independent solve per point.
pub fn array_spectrum(
    lattice: &DipoleLattice,
    detunings: &[Frequency],
    imaging: &ImagingOptions,
) -> Result<ArrayResponse> {
    let points = detunings
        .par_iter()
        .map(|&d| response_point(lattice, d, None, imaging))
        .collect::<Result<Vec<_>>>()?;
    let (fit, width) = if points.len() >= 5 {
        let x: Vec<f64> = points.iter().map(|p| p.detuning.cyclic_mhz()).collect();
        let y: Vec<f64> = points.iter().map(|p| p.roi_transmittance).collect();
        let s = vec![1e-3; x.len()];
        match fit_lorentzian(FitData::new(&x, &y, &s)?, &FitOptions::default()) {
            Ok(r) => {
                let w = Frequency::from_cyclic_mhz(r.get("fwhm").abs()).ok();
                (Some(r), w)
            }
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    Ok(ArrayResponse {
        points,
        fitted_linewidth: width,
        linewidth_fit: fit,
    })
}
