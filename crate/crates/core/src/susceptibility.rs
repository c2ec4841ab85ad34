//! Closed-form probe susceptibilities, collective Rydberg fraction and
//! blockade geometry.
//!
//! All susceptibilities are normalized to `χ0` and signed so that
//! absorption is `Im χ > 0`.

use num_complex::Complex64;

use crate::error::{ensure_finite, ensure_positive, ensure_probability, Error, Result};
use crate::units::{C6Coefficient, Frequency, LaserDrive, Length, TransitionParams};

/// Probe susceptibility `χ/χ0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Susceptibility(pub Complex64);

impl Susceptibility {
    pub const ZERO: Susceptibility = Susceptibility(Complex64::new(0.0, 0.0));

    pub fn re(self) -> f64 {
        self.0.re
    }

    pub fn im(self) -> f64 {
        self.0.im
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// Probe and control fields on the ladder plus an interaction shift of the
/// Rydberg level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitConditions {
    pub probe: LaserDrive,
    pub control: LaserDrive,
    pub transition: TransitionParams,
    /// Interaction shift of the Rydberg level.
    pub u_int: Frequency,
}

impl EitConditions {
    pub fn new(probe: LaserDrive, control: LaserDrive, transition: TransitionParams) -> Self {
        EitConditions {
            probe,
            control,
            transition,
            u_int: Frequency::ZERO,
        }
    }

    pub fn with_u_int(self, u_int: Frequency) -> Self {
        EitConditions { u_int, ..self }
    }

    pub fn with_probe_detuning(self, delta_p: Frequency) -> Self {
        EitConditions {
            probe: self.probe.with_detuning(delta_p),
            ..self
        }
    }

    /// `Δ2 = δp + δc`.
    pub fn two_photon_detuning(&self) -> Frequency {
        self.probe.detuning() + self.control.detuning()
    }
}

/// Two-level response `iΓe/(Γe − 2iδp)`.
pub fn chi_two_level(delta_p: Frequency, gamma_e: Frequency) -> Result<Susceptibility> {
    ensure_positive("gamma_e", gamma_e.rad_per_s())?;
    ensure_finite("delta_p", delta_p.rad_per_s())?;
    Ok(two_level_unchecked(delta_p.rad_per_s(), gamma_e.rad_per_s()))
}

fn two_level_unchecked(delta: f64, gamma: f64) -> Susceptibility {
    let i = Complex64::i();
    Susceptibility(i * gamma / Complex64::new(gamma, -2.0 * delta))
}

/// Ladder EIT response with an interaction shift on the Rydberg level:
/// `iΓe / (Γe − 2iδp + Ωc² / (Γr − 2i(Δ2 + U)))`.
///
/// With `Γr = 0`, `Δ2 + U = 0` and `Ωc > 0` the dressing term diverges and
/// the medium is exactly transparent.
pub fn chi_eit(cond: &EitConditions) -> Susceptibility {
    let gamma_e = cond.transition.gamma_e().rad_per_s();
    let gamma_r = cond.transition.gamma_r().rad_per_s();
    let delta_p = cond.probe.detuning().rad_per_s();
    let omega_c = cond.control.rabi().rad_per_s();
    let shift = (cond.two_photon_detuning() + cond.u_int).rad_per_s();

    if omega_c == 0.0 {
        return two_level_unchecked(delta_p, gamma_e);
    }
    let inner = Complex64::new(gamma_r, -2.0 * shift);
    if inner.norm_sqr() == 0.0 {
        return Susceptibility::ZERO;
    }
    let denom = Complex64::new(gamma_e, -2.0 * delta_p) + omega_c * omega_c / inner;
    if !denom.is_finite() {
        return Susceptibility::ZERO;
    }
    Susceptibility(Complex64::i() * gamma_e / denom)
}

/// Statistical mixture of a fraction `p_s` of blockaded (two-level) atoms
/// and `1 − p_s` EIT atoms.
pub fn chi_rydberg_eit(cond: &EitConditions, p_s: f64) -> Result<Susceptibility> {
    ensure_probability("p_s", p_s)?;
    let ta = chi_two_level(cond.probe.detuning(), cond.transition.gamma_e())?;
    let eit = chi_eit(cond);
    Ok(Susceptibility(eit.0 + p_s * (ta.0 - eit.0)))
}

/// Rydberg fraction of the dressed array including collective enhancement
/// by `n_sa` atoms sharing one excitation:
/// `n Ωp²Ωc² / (n Ωp²Ωc² + (Ωc² − 4δpΔ2)² + 16Δ2²γe²)`.
pub fn rydberg_fraction(
    probe: &LaserDrive,
    control: &LaserDrive,
    delta_p: Frequency,
    delta_2: Frequency,
    gamma_e_half: Frequency,
    n_sa: f64,
) -> Result<f64> {
    ensure_finite("n_sa", n_sa)?;
    if n_sa < 1.0 {
        return Err(Error::invalid("n_sa", format!("must be >= 1, got {n_sa}")));
    }
    ensure_finite("delta_p", delta_p.rad_per_s())?;
    ensure_finite("delta_2", delta_2.rad_per_s())?;
    ensure_finite("gamma_e_half", gamma_e_half.rad_per_s())?;
    let wp2 = probe.rabi().rad_per_s().powi(2);
    let wc2 = control.rabi().rad_per_s().powi(2);
    let dp = delta_p.rad_per_s();
    let d2 = delta_2.rad_per_s();
    let g = gamma_e_half.rad_per_s();
    let num = n_sa * wp2 * wc2;
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = num + (wc2 - 4.0 * dp * d2).powi(2) + 16.0 * d2 * d2 * g * g;
    Ok((num / den).clamp(0.0, 1.0))
}

/// `r_b = (2 C6 Γe / Ωc²)^{1/6}`.
pub fn blockade_radius(
    c6: C6Coefficient,
    gamma_e: Frequency,
    omega_c: Frequency,
) -> Result<Length> {
    ensure_positive("c6", c6.rad_m6())?;
    ensure_positive("gamma_e", gamma_e.rad_per_s())?;
    ensure_positive("omega_c", omega_c.rad_per_s())?;
    let r6 = 2.0 * c6.rad_m6() * gamma_e.rad_per_s() / omega_c.rad_per_s().powi(2);
    Length::from_m(r6.powf(1.0 / 6.0))
}

/// Number of lattice sites `π r_b² / a²` inside a blockade disc
/// (real-valued).
pub fn atoms_in_blockade(r_b: Length, a_lat: Length) -> Result<f64> {
    ensure_finite("r_b", r_b.meters())?;
    if r_b.meters() < 0.0 {
        return Err(Error::invalid("r_b", "must be >= 0"));
    }
    ensure_positive("a_lat", a_lat.meters())?;
    Ok(crate::units::disc_area(r_b) / a_lat.meters().powi(2))
}

/// Fraction of isotropically scattered light collected by an objective of
/// numerical aperture `na`: `(1 − √(1 − na²))/2`.
pub fn isotropic_collection_fraction(na: f64) -> Result<f64> {
    ensure_probability("na", na)?;
    Ok((1.0 - (1.0 - na * na).sqrt()) / 2.0)
}
