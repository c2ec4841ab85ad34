//! Far-field quantities from the angular spectrum of the dipole field:
//! aperture-limited images of the transmitted and reflected light, and the
//! fraction of scattered power collected by the imaging aperture.
//!
//! A dipole `p` at `r_j` contributes `(i/2k_z)(I − K̂K̂ᵀ) p e^{−iq·ρ_j ∓ ik_z z_j}`
//! to the forward (−) and backward (+) plane-wave spectra, with
//! `K̂ = (q, ±k_z)`. The spectra are sampled on the reciprocal grid of a
//! periodic box and truncated by the numerical aperture.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{DipoleSolution, CZERO};
use crate::error::{ensure_positive, Error, Result};
use crate::units::Length;

/// Imaging system and sampling of the angular spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingOptions {
    pub na: f64,
    /// Period of the box whose reciprocal grid samples the spectrum; must
    /// exceed the extent of the array plus the imaged region.
    pub period: Length,
    /// Half width of the square region of interest around the beam axis.
    pub roi_half_width: Length,
    pub pixel_pitch: Length,
    /// Sub-samples per axis used to weight pupil cells cut by the aperture
    /// edge.
    pub pupil_subsamples: usize,
}

impl Default for ImagingOptions {
    fn default() -> Self {
        ImagingOptions {
            na: 0.68,
            period: Length::m(80e-6),
            roi_half_width: Length::m(2.5e-6),
            pixel_pitch: Length::m(0.1e-6),
            pupil_subsamples: 4,
        }
    }
}

impl ImagingOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.na > 0.0 && self.na < 1.0) {
            return Err(Error::invalid("na", "must lie in (0, 1)"));
        }
        ensure_positive("period", self.period.meters())?;
        ensure_positive("roi_half_width", self.roi_half_width.meters())?;
        ensure_positive("pixel_pitch", self.pixel_pitch.meters())?;
        if self.pupil_subsamples == 0 {
            return Err(Error::invalid("pupil_subsamples", "must be >= 1"));
        }
        Ok(())
    }

    /// Square region of interest centred on `center` (meters).
    pub(crate) fn roi_grid(&self, center: [f64; 2]) -> Result<ImageGrid> {
        ImageGrid::square(center, self.roi_half_width, self.pixel_pitch)
    }
}

/// Pixel centres `(x0 + ix·pitch, y0 + iy·pitch)` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub pitch: f64,
}

impl ImageGrid {
    /// Square grid covering `center ± half_width`.
    pub fn square(center: [f64; 2], half_width: Length, pitch: Length) -> Result<Self> {
        ensure_positive("half_width", half_width.meters())?;
        ensure_positive("pitch", pitch.meters())?;
        let half = (half_width.meters() / pitch.meters()).round() as usize;
        let n = 2 * half + 1;
        if n > 4001 {
            return Err(Error::invalid("image", "more than 4001 pixels per axis"));
        }
        Ok(ImageGrid {
            nx: n,
            ny: n,
            x0: center[0] - half as f64 * pitch.meters(),
            y0: center[1] - half as f64 * pitch.meters(),
            pitch: pitch.meters(),
        })
    }
}

/// Row-major image (`data[iy · nx + ix]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: ImageGrid,
    pub data: Vec<f64>,
}

impl Image {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.data[iy * self.grid.nx + ix]
    }

    /// Pixel centre in meters.
    pub fn pixel_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.grid.x0 + ix as f64 * self.grid.pitch,
            self.grid.y0 + iy as f64 * self.grid.pitch,
        ]
    }

    /// Pointwise `w·self + (1 − w)·other` on identical grids.
    pub fn mix(&self, w: f64, other: &Image) -> Result<Image> {
        if self.grid != other.grid {
            return Err(Error::invalid("image", "grids differ"));
        }
        Ok(Image {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| w * a + (1.0 - w) * b).collect(),
        })
    }
}

/// Reciprocal grid restricted to the aperture (scaled units, `k = 1`).
struct Pupil {
    q: Vec<f64>,
    /// `weights[b · n + a]` for `(q[a], q[b])`: covered fraction of the cell.
    weights: Vec<f64>,
    dq: f64,
}

impl Pupil {
    fn new(opts: &ImagingOptions, k: f64) -> Result<Self> {
        opts.validate()?;
        let dq = 2.0 * PI / (opts.period.meters() * k);
        let m = (opts.na / dq).ceil() as i64 + 1;
        let q: Vec<f64> = (-m..=m).map(|i| i as f64 * dq).collect();
        let n = q.len();
        let s = opts.pupil_subsamples;
        let na2 = opts.na * opts.na;
        let mut weights = vec![0.0; n * n];
        for b in 0..n {
            for a in 0..n {
                let mut inside = 0;
                for u in 0..s {
                    for v in 0..s {
                        let qx = q[a] + dq * ((u as f64 + 0.5) / s as f64 - 0.5);
                        let qy = q[b] + dq * ((v as f64 + 0.5) / s as f64 - 0.5);
                        if qx * qx + qy * qy <= na2 {
                            inside += 1;
                        }
                    }
                }
                weights[b * n + a] = inside as f64 / (s * s) as f64;
            }
        }
        Ok(Pupil { q, weights, dq })
    }

    fn len(&self) -> usize {
        self.q.len()
    }
}

/// `Σ_j p_j e^{−iq·ρ_j − i s k_z z_j}` on the pupil grid, `s = ±1`.
fn dipole_spectrum(
    pupil: &Pupil,
    positions: &[[f64; 3]],
    dipoles: &[[Complex64; 3]],
    sign: f64,
) -> Vec<[Complex64; 3]> {
    let n = pupil.len();
    let phases = |axis: usize| -> Vec<Vec<Complex64>> {
        positions
            .iter()
            .map(|p| pupil.q.iter().map(|&q| Complex64::from_polar(1.0, -q * p[axis])).collect())
            .collect()
    };
    let (ex, ey) = (phases(0), phases(1));
    let flat = positions.iter().all(|p| p[2] == 0.0);
    (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx % n, idx / n);
            if pupil.weights[idx] == 0.0 {
                return [CZERO; 3];
            }
            let kz = (1.0 - pupil.q[a].powi(2) - pupil.q[b].powi(2)).sqrt();
            let mut acc = [CZERO; 3];
            for (j, p) in dipoles.iter().enumerate() {
                let mut ph = ex[j][a] * ey[j][b];
                if !flat {
                    ph *= Complex64::from_polar(1.0, -sign * kz * positions[j][2]);
                }
                for c in 0..3 {
                    acc[c] += p[c] * ph;
                }
            }
            acc
        })
        .collect()
}

/// Plane-wave amplitude `(i/2k_z)(I − K̂K̂ᵀ) P` for direction `(qx, qy, s·k_z)`.
fn radiated(qx: f64, qy: f64, sign: f64, p: &[Complex64; 3]) -> [Complex64; 3] {
    let kz = (1.0 - qx * qx - qy * qy).sqrt();
    let kv = [qx, qy, sign * kz];
    let dot = p[0] * kv[0] + p[1] * kv[1] + p[2] * kv[2];
    let pref = Complex64::new(0.0, 0.5 / kz);
    [
        pref * (p[0] - dot * kv[0]),
        pref * (p[1] - dot * kv[1]),
        pref * (p[2] - dot * kv[2]),
    ]
}

/// Power radiated into the backward aperture, in the units where a single
/// dipole radiates `|p|²/6π` in total.
fn backward_collected_power(pupil: &Pupil, positions: &[[f64; 3]], dipoles: &[[Complex64; 3]]) -> f64 {
    let spec = dipole_spectrum(pupil, positions, dipoles, -1.0);
    let n = pupil.len();
    let cell = pupil.dq * pupil.dq / (4.0 * PI * PI);
    (0..n * n)
        .filter(|&i| pupil.weights[i] > 0.0)
        .map(|idx| {
            let (qx, qy) = (pupil.q[idx % n], pupil.q[idx / n]);
            let kz = (1.0 - qx * qx - qy * qy).sqrt();
            let e = radiated(qx, qy, -1.0, &spec[idx]);
            let i: f64 = e.iter().map(|c| c.norm_sqr()).sum();
            pupil.weights[idx] * cell * kz * i
        })
        .sum()
}

pub(crate) fn total_scattered_power(positions: &[[f64; 3]], dipoles: &[[Complex64; 3]]) -> f64 {
    let n = positions.len();
    (0..n)
        .into_par_iter()
        .map(|j| {
            let mut s = CZERO;
            for l in 0..n {
                let d = [
                    positions[j][0] - positions[l][0],
                    positions[j][1] - positions[l][1],
                    positions[j][2] - positions[l][2],
                ];
                let m = super::green::im_green(d);
                for a in 0..3 {
                    for b in 0..3 {
                        s += dipoles[j][a].conj() * m[a][b] * dipoles[l][b];
                    }
                }
            }
            s.re
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Collected backward power over total scattered power for dipoles at
/// scaled positions.
pub(crate) fn collected_backward_fraction(
    positions: &[[f64; 3]],
    dipoles: &[[Complex64; 3]],
    opts: &ImagingOptions,
    k: f64,
) -> Result<f64> {
    let pupil = Pupil::new(opts, k)?;
    let total = total_scattered_power(positions, dipoles);
    if !(total > 0.0) {
        return Err(Error::Numeric("no scattered power".into()));
    }
    Ok(backward_collected_power(&pupil, positions, dipoles) / total)
}

/// Emission pattern of a lone scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipolePattern {
    /// Orientation average over three orthogonal linear dipoles.
    Isotropic,
    /// Dipole rotating in the array plane, as driven by σ⁺ light.
    Circular,
    /// Linear dipole in the array plane.
    Linear,
}

/// Fraction of the light scattered by one atom that the aperture collects
/// in reflection, evaluated by the same pupil quadrature as the array
/// images.
pub fn single_scatterer_floor(opts: &ImagingOptions, pattern: DipolePattern) -> Result<f64> {
    let one = Complex64::new(1.0, 0.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sets: Vec<[Complex64; 3]> = match pattern {
        DipolePattern::Isotropic => vec![[one, CZERO, CZERO], [CZERO, one, CZERO], [CZERO, CZERO, one]],
        DipolePattern::Circular => vec![[one * s, Complex64::new(0.0, s), CZERO]],
        DipolePattern::Linear => vec![[one, CZERO, CZERO]],
    };
    // the quadrature is scale free; a nominal wavenumber fixes the grid
    let k = 2.0 * PI / 780.241e-9;
    let pupil = Pupil::new(opts, k)?;
    let origin = [[0.0; 3]];
    let mut collected = 0.0;
    let mut total = 0.0;
    for p in sets {
        collected += backward_collected_power(&pupil, &origin, &[p]);
        total += total_scattered_power(&origin, &[p]);
    }
    Ok(collected / total)
}

/// Images of transmittance, reflectance and incident intensity on `grid`.
/// Intensities are the transverse field components through the aperture;
/// transmittance and reflectance are normalized pixelwise by the imaged
/// incident intensity.
pub(crate) fn images(sol: &DipoleSolution, grid: &ImageGrid, opts: &ImagingOptions) -> Result<(Image, Image, Image)> {
    let k = sol.k;
    let pupil = Pupil::new(opts, k)?;
    let n = pupil.len();
    let w0 = sol.beam.waist().meters() * k;
    let amp = sol.beam.amplitude;
    let pol = sol.beam.polarization();
    let fwd = dipole_spectrum(&pupil, &sol.positions, &sol.dipoles, 1.0);
    let bwd = dipole_spectrum(&pupil, &sol.positions, &sol.dipoles, -1.0);

    // plane-wave spectra times aperture weight, per transverse component
    let mut spectra: Vec<DMatrix<Complex64>> = (0..6).map(|_| DMatrix::zeros(n, n)).collect();
    for idx in 0..n * n {
        let w = pupil.weights[idx];
        if w == 0.0 {
            continue;
        }
        let (a, b) = (idx % n, idx / n);
        let (qx, qy) = (pupil.q[a], pupil.q[b]);
        let inc = amp * PI * w0 * w0 * (-(qx * qx + qy * qy) * w0 * w0 / 4.0).exp();
        let ef = radiated(qx, qy, 1.0, &fwd[idx]);
        let eb = radiated(qx, qy, -1.0, &bwd[idx]);
        for c in 0..2 {
            spectra[c][(b, a)] = w * (inc * pol[c] + ef[c]);
            spectra[2 + c][(b, a)] = w * eb[c];
            spectra[4 + c][(b, a)] = w * inc * pol[c];
        }
    }
    let cell = pupil.dq * pupil.dq / (4.0 * PI * PI);
    let c = sol.beam.center();
    let axis = |m: usize, origin: f64, center: f64| {
        DMatrix::from_fn(m, n, |i, a| {
            let x = (origin + i as f64 * grid.pitch - center) * k;
            Complex64::from_polar(1.0, pupil.q[a] * x)
        })
    };
    let ax = axis(grid.nx, grid.x0, c[0]);
    let ay = axis(grid.ny, grid.y0, c[1]);
    let axt = ax.transpose();
    let fields: Vec<DMatrix<Complex64>> = spectra.iter().map(|s| &ay * s * &axt * Complex64::new(cell, 0.0)).collect();
    let intensity = |i0: usize| -> Vec<f64> {
        let mut out = vec![0.0; grid.nx * grid.ny];
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                out[iy * grid.nx + ix] = fields[i0][(iy, ix)].norm_sqr() + fields[i0 + 1][(iy, ix)].norm_sqr();
            }
        }
        out
    };
    let (i_f, i_b, i_in) = (intensity(0), intensity(2), intensity(4));
    let t = i_f.iter().zip(&i_in).map(|(a, b)| a / b).collect();
    let r = i_b.iter().zip(&i_in).map(|(a, b)| a / b).collect();
    let norm = amp.norm_sqr();
    Ok((
        Image { grid: *grid, data: t },
        Image { grid: *grid, data: r },
        Image {
            grid: *grid,
            data: i_in.iter().map(|v| v / norm).collect(),
        },
    ))
}
