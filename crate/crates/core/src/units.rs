//! Units, physical constants and the shared domain types.
//!
//! Everything internal is SI with frequencies in rad/s. Cyclic values
//! (`Ω/2π` in MHz, kHz, Hz) appear only in constructors and accessors.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, ensure_positive, ensure_probability, Error, Result};

/// Planck constant in J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant in J s.
pub const HBAR: f64 = PLANCK / TAU;
/// Atomic mass unit in kg (CODATA 2018).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of 87Rb in kg.
pub const RB87_MASS: f64 = 86.909_180_527 * ATOMIC_MASS_UNIT;

/// Angular frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Frequency(f64);

impl Frequency {
    pub const ZERO: Frequency = Frequency(0.0);

    pub fn from_rad_per_s(value: f64) -> Result<Self> {
        ensure_finite("frequency", value).map(Frequency)
    }

    pub fn from_cyclic_hz(hz: f64) -> Result<Self> {
        Self::from_rad_per_s(TAU * ensure_finite("frequency", hz)?)
    }

    pub fn from_cyclic_khz(khz: f64) -> Result<Self> {
        Self::from_cyclic_hz(khz * 1e3)
    }

    pub fn from_cyclic_mhz(mhz: f64) -> Result<Self> {
        Self::from_cyclic_hz(mhz * 1e6)
    }

    pub(crate) fn mhz(mhz: f64) -> Self {
        Frequency(TAU * mhz * 1e6)
    }

    pub fn rad_per_s(self) -> f64 {
        self.0
    }

    pub fn cyclic_hz(self) -> f64 {
        self.0 / TAU
    }

    pub fn cyclic_khz(self) -> f64 {
        self.cyclic_hz() * 1e-3
    }

    pub fn cyclic_mhz(self) -> f64 {
        self.cyclic_hz() * 1e-6
    }

    pub fn abs(self) -> Self {
        Frequency(self.0.abs())
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2pi x {} MHz", self.cyclic_mhz())
    }
}

impl Add for Frequency {
    type Output = Frequency;
    fn add(self, rhs: Frequency) -> Frequency {
        Frequency(self.0 + rhs.0)
    }
}

impl Sub for Frequency {
    type Output = Frequency;
    fn sub(self, rhs: Frequency) -> Frequency {
        Frequency(self.0 - rhs.0)
    }
}

impl Neg for Frequency {
    type Output = Frequency;
    fn neg(self) -> Frequency {
        Frequency(-self.0)
    }
}

impl Mul<f64> for Frequency {
    type Output = Frequency;
    fn mul(self, rhs: f64) -> Frequency {
        Frequency(self.0 * rhs)
    }
}

impl Div<f64> for Frequency {
    type Output = Frequency;
    fn div(self, rhs: f64) -> Frequency {
        Frequency(self.0 / rhs)
    }
}

/// Length in metres.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Length(f64);

impl Length {
    pub const ZERO: Length = Length(0.0);

    pub fn from_m(m: f64) -> Result<Self> {
        ensure_finite("length", m).map(Length)
    }

    pub fn from_um(um: f64) -> Result<Self> {
        Self::from_m(ensure_finite("length", um)? * 1e-6)
    }

    pub fn from_nm(nm: f64) -> Result<Self> {
        Self::from_m(ensure_finite("length", nm)? * 1e-9)
    }

    pub(crate) const fn m(m: f64) -> Self {
        Length(m)
    }

    pub fn meters(self) -> f64 {
        self.0
    }

    pub fn um(self) -> f64 {
        self.0 * 1e6
    }

    pub fn nm(self) -> f64 {
        self.0 * 1e9
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} um", self.um())
    }
}

impl Mul<f64> for Length {
    type Output = Length;
    fn mul(self, rhs: f64) -> Length {
        Length(self.0 * rhs)
    }
}

/// Van der Waals coefficient `C6`, kept as `C6/h` in GHz µm⁶.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct C6Coefficient(f64);

impl C6Coefficient {
    pub fn from_ghz_um6(value: f64) -> Result<Self> {
        ensure_finite("c6", value).map(C6Coefficient)
    }

    pub fn ghz_um6(self) -> f64 {
        self.0
    }

    /// Angular-frequency shift times length⁶, in rad/s m⁶.
    pub fn rad_m6(self) -> f64 {
        TAU * self.0 * 1e9 * 1e-36
    }

    /// Interaction shift `C6/r⁶`.
    pub fn shift_at(self, r: Length) -> Frequency {
        Frequency(self.rad_m6() / r.0.powi(6))
    }
}

/// Resonant dipole coefficient `C3`, kept as `C3/h` in GHz µm³.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct C3Coefficient(f64);

impl C3Coefficient {
    pub fn from_ghz_um3(value: f64) -> Result<Self> {
        ensure_finite("c3", value).map(C3Coefficient)
    }

    pub fn ghz_um3(self) -> f64 {
        self.0
    }

    pub fn rad_m3(self) -> f64 {
        TAU * self.0 * 1e9 * 1e-18
    }

    pub fn shift_at(self, r: Length) -> Frequency {
        Frequency(self.rad_m3() / r.0.powi(3))
    }
}

/// Linewidths and wavelengths of the ground–excited–Rydberg ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionParams {
    gamma_e: Frequency,
    gamma_r: Frequency,
    lambda_p: Length,
    lambda_c: Length,
    sigma0: f64,
}

impl TransitionParams {
    pub fn new(
        gamma_e: Frequency,
        gamma_r: Frequency,
        lambda_p: Length,
        lambda_c: Length,
    ) -> Result<Self> {
        ensure_positive("gamma_e", gamma_e.0)?;
        if gamma_r.0 < 0.0 {
            return Err(Error::invalid("gamma_r", "must be >= 0"));
        }
        ensure_positive("lambda_p", lambda_p.0)?;
        ensure_positive("lambda_c", lambda_c.0)?;
        Ok(TransitionParams {
            gamma_e,
            gamma_r,
            lambda_p,
            lambda_c,
            sigma0: resonant_cross_section(lambda_p),
        })
    }

    /// Builds parameters with an externally supplied cross-section, which
    /// must agree with `3λ²/2π` to 1e-12 relative.
    pub fn with_sigma0(self, sigma0: f64) -> Result<Self> {
        let expected = resonant_cross_section(self.lambda_p);
        if !((sigma0 - expected).abs() <= 1e-12 * expected) {
            return Err(Error::invalid(
                "sigma0",
                format!("{sigma0:e} m^2 inconsistent with probe wavelength ({expected:e} m^2)"),
            ));
        }
        Ok(TransitionParams { sigma0, ..self })
    }

    pub fn with_gamma_r(self, gamma_r: Frequency) -> Result<Self> {
        Self::new(self.gamma_e, gamma_r, self.lambda_p, self.lambda_c)
    }

    pub fn gamma_e(&self) -> Frequency {
        self.gamma_e
    }

    /// Half-width `γe = Γe/2` of the probe transition.
    pub fn gamma_e_half(&self) -> Frequency {
        self.gamma_e / 2.0
    }

    pub fn gamma_r(&self) -> Frequency {
        self.gamma_r
    }

    pub fn lambda_p(&self) -> Length {
        self.lambda_p
    }

    pub fn lambda_c(&self) -> Length {
        self.lambda_c
    }

    /// Resonant cross-section in m².
    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn k_p(&self) -> f64 {
        TAU / self.lambda_p.0
    }

    /// `χ0 = σ0 n_a / k_p` for an areal density `n_a` in m⁻².
    pub fn chi0(&self, areal_density: f64) -> Result<f64> {
        ensure_finite("areal_density", areal_density)?;
        if areal_density < 0.0 {
            return Err(Error::invalid("areal_density", "must be >= 0"));
        }
        Ok(self.sigma0 * areal_density / self.k_p())
    }
}

impl Default for TransitionParams {
    /// 87Rb D2 probe with a 480 nm Rydberg coupling beam, Γe/2π = 6.06 MHz
    /// and an effective Rydberg dephasing Γr/2π = 5 kHz.
    fn default() -> Self {
        let lambda_p = Length::m(780.241e-9);
        TransitionParams {
            gamma_e: Frequency::mhz(6.06),
            gamma_r: Frequency::mhz(5e-3),
            lambda_p,
            lambda_c: Length::m(479.8e-9),
            sigma0: resonant_cross_section(lambda_p),
        }
    }
}

fn resonant_cross_section(lambda: Length) -> f64 {
    3.0 * lambda.0 * lambda.0 / TAU
}

/// A coherent field on one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserDrive {
    rabi: Frequency,
    detuning: Frequency,
}

impl LaserDrive {
    pub fn new(rabi: Frequency, detuning: Frequency) -> Result<Self> {
        if !(rabi.0 >= 0.0) {
            return Err(Error::invalid("rabi", format!("must be >= 0, got {}", rabi.0)));
        }
        Ok(LaserDrive { rabi, detuning })
    }

    /// Convenience constructor from cyclic MHz values.
    pub fn from_mhz(rabi_mhz: f64, detuning_mhz: f64) -> Result<Self> {
        Self::new(
            Frequency::from_cyclic_mhz(rabi_mhz)?,
            Frequency::from_cyclic_mhz(detuning_mhz)?,
        )
    }

    pub fn rabi(&self) -> Frequency {
        self.rabi
    }

    pub fn detuning(&self) -> Frequency {
        self.detuning
    }

    pub fn with_detuning(self, detuning: Frequency) -> Self {
        LaserDrive { detuning, ..self }
    }

    pub fn with_rabi(self, rabi: Frequency) -> Result<Self> {
        Self::new(rabi, self.detuning)
    }
}

/// Disc-shaped square lattice with one ancilla site.
///
/// Site `(i, j)` sits at `(i·a, j·a)` relative to the array centre; a site
/// belongs to the disc if its distance from the centre is at most `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArraySpec {
    lattice_const: Length,
    radius: Length,
    filling: f64,
    ancilla_site: (i32, i32),
    lattice_depth: f64,
}

impl ArraySpec {
    pub fn new(
        lattice_const: Length,
        radius: Length,
        filling: f64,
        ancilla_site: (i32, i32),
        lattice_depth: f64,
    ) -> Result<Self> {
        ensure_positive("lattice_const", lattice_const.0)?;
        ensure_positive("radius", radius.0)?;
        ensure_probability("filling", filling)?;
        ensure_finite("lattice_depth", lattice_depth)?;
        if lattice_depth < 0.0 {
            return Err(Error::invalid("lattice_depth", "must be >= 0"));
        }
        let spec = ArraySpec {
            lattice_const,
            radius,
            filling,
            ancilla_site,
            lattice_depth,
        };
        if !spec.contains(ancilla_site) {
            return Err(Error::invalid(
                "ancilla_site",
                format!("{ancilla_site:?} lies outside the array radius"),
            ));
        }
        Ok(spec)
    }

    pub fn lattice_const(&self) -> Length {
        self.lattice_const
    }

    pub fn radius(&self) -> Length {
        self.radius
    }

    pub fn filling(&self) -> f64 {
        self.filling
    }

    pub fn ancilla_site(&self) -> (i32, i32) {
        self.ancilla_site
    }

    /// Lattice depth in units of the recoil energy.
    pub fn lattice_depth(&self) -> f64 {
        self.lattice_depth
    }

    pub fn with_radius(self, radius: Length) -> Result<Self> {
        Self::new(
            self.lattice_const,
            radius,
            self.filling,
            self.ancilla_site,
            self.lattice_depth,
        )
    }

    pub fn with_filling(self, filling: f64) -> Result<Self> {
        Self::new(
            self.lattice_const,
            self.radius,
            filling,
            self.ancilla_site,
            self.lattice_depth,
        )
    }

    pub fn contains(&self, (i, j): (i32, i32)) -> bool {
        let a = self.lattice_const.0;
        let d2 = (i as f64 * a).powi(2) + (j as f64 * a).powi(2);
        // small slack so sites exactly on the rim are not lost to rounding
        d2 <= self.radius.0 * self.radius.0 * (1.0 + 1e-12)
    }

    /// All sites in the disc, in row-major order (`j` outer, `i` inner).
    pub fn sites(&self) -> Vec<(i32, i32)> {
        let n = (self.radius.0 / self.lattice_const.0).floor() as i32 + 1;
        let mut out = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                if self.contains((i, j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Position of a site in metres.
    pub fn position(&self, (i, j): (i32, i32)) -> [f64; 2] {
        let a = self.lattice_const.0;
        [i as f64 * a, j as f64 * a]
    }

    pub fn ancilla_position(&self) -> [f64; 2] {
        self.position(self.ancilla_site)
    }

    /// Sites holding an array atom, excluding the ancilla. Each site is
    /// filled independently with probability `filling`; the draw is fixed by
    /// `seed`.
    pub fn occupied_sites(&self, seed: u64) -> Vec<(i32, i32)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sites()
            .into_iter()
            .filter(|&s| {
                // draw for every site so the pattern does not depend on where the ancilla is
                let keep = self.filling >= 1.0 || rng.random::<f64>() < self.filling;
                keep && s != self.ancilla_site
            })
            .collect()
    }

    /// Areal density `1/a²` of a fully filled lattice, in m⁻².
    pub fn areal_density(&self) -> f64 {
        1.0 / (self.lattice_const.0 * self.lattice_const.0)
    }
}

impl Default for ArraySpec {
    /// a = 532 nm, r = 4.7 µm, unit filling, ancilla at the centre.
    fn default() -> Self {
        ArraySpec {
            lattice_const: Length::m(532e-9),
            radius: Length::m(4.7e-6),
            filling: 1.0,
            ancilla_site: (0, 0),
            lattice_depth: 0.0,
        }
    }
}

/// Lattice recoil energy `h²/(8 m a²)` in joules.
pub fn recoil_energy(lattice_const: Length, mass_kg: f64) -> Result<f64> {
    ensure_positive("lattice_const", lattice_const.0)?;
    ensure_positive("mass", mass_kg)?;
    Ok(PLANCK * PLANCK / (8.0 * mass_kg * lattice_const.0 * lattice_const.0))
}

/// Area of a disc of the given radius in m²; used for counting lattice
/// sites inside a circle.
pub(crate) fn disc_area(r: Length) -> f64 {
    PI * r.0 * r.0
}
