//! Steady states of small Lindblad systems and the distance-dependent probe
//! susceptibility of an EIT atom near a Rydberg ancilla.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{ensure_positive, Error, Result};
use crate::pair_potentials::PotentialDataset;
use crate::susceptibility::Susceptibility;
use crate::units::{Frequency, LaserDrive, Length, TransitionParams};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// The probe transition of a level system, used to turn the steady-state
/// coherence into a susceptibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeTransition {
    pub ground: usize,
    pub excited: usize,
    pub rabi: Frequency,
    pub gamma_e_half: Frequency,
}

/// Hamiltonian (rad/s, rotating frame) and jump operators of a few-level
/// system.
///
/// A collapse `(from, to, rate)` is the jump `√rate |to⟩⟨from|`; `from == to`
/// gives pure dephasing of that level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSystem {
    hamiltonian: DMatrix<Complex64>,
    collapse_rates: Vec<(usize, usize, f64)>,
    probe: Option<ProbeTransition>,
}

impl LevelSystem {
    pub fn new(
        hamiltonian: DMatrix<Complex64>,
        collapse_rates: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if dim < 2 || hamiltonian.ncols() != dim {
            return Err(Error::invalid(
                "hamiltonian",
                format!("must be square with dim >= 2, got {}x{}", dim, hamiltonian.ncols()),
            ));
        }
        if hamiltonian.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("hamiltonian", "contains non-finite entries"));
        }
        let scale = hamiltonian.norm().max(f64::MIN_POSITIVE);
        let anti = (&hamiltonian - hamiltonian.adjoint()).norm();
        if anti > 1e-12 * scale {
            return Err(Error::invalid(
                "hamiltonian",
                format!("not Hermitian (|H - H^dag| / |H| = {:e})", anti / scale),
            ));
        }
        for &(from, to, rate) in &collapse_rates {
            if from >= dim || to >= dim {
                return Err(Error::invalid("collapse", format!("level index out of range in ({from}, {to})")));
            }
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::invalid("collapse", format!("rate must be finite and >= 0, got {rate}")));
            }
        }
        Ok(LevelSystem {
            hamiltonian,
            collapse_rates,
            probe: None,
        })
    }

    pub fn with_probe(mut self, probe: ProbeTransition) -> Result<Self> {
        let dim = self.dim();
        if probe.ground >= dim || probe.excited >= dim || probe.ground == probe.excited {
            return Err(Error::invalid("probe", "levels out of range or identical"));
        }
        ensure_positive("probe rabi", probe.rabi.rad_per_s())?;
        ensure_positive("gamma_e_half", probe.gamma_e_half.rad_per_s())?;
        self.probe = Some(probe);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &DMatrix<Complex64> {
        &self.hamiltonian
    }

    pub fn collapse_rates(&self) -> &[(usize, usize, f64)] {
        &self.collapse_rates
    }

    pub fn probe(&self) -> Option<ProbeTransition> {
        self.probe
    }

    /// Lindblad generator acting on the row-major vectorization of `ρ`,
    /// using `vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)`.
    pub fn liouvillian(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let id = DMatrix::<Complex64>::identity(n, n);
        let h = &self.hamiltonian;
        let mi = Complex64::new(0.0, -1.0);
        let mut l = (h.kronecker(&id) - id.kronecker(&h.transpose())) * mi;
        for &(from, to, rate) in &self.collapse_rates {
            if rate == 0.0 {
                continue;
            }
            let mut jump = DMatrix::<Complex64>::zeros(n, n);
            jump[(to, from)] = Complex64::new(rate.sqrt(), 0.0);
            let jdj = jump.adjoint() * &jump;
            l += jump.kronecker(&jump.map(|z| z.conj()));
            l -= (jdj.kronecker(&id) + id.kronecker(&jdj.transpose())) * Complex64::new(0.5, 0.0);
        }
        l
    }
}

/// Steady-state density matrix and, if the system has a probe transition,
/// the normalized susceptibility `−2γe ρ_eg / Ωp`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateResult {
    pub rho: DMatrix<Complex64>,
    pub chi_norm: Option<Susceptibility>,
    /// `‖L ρ‖ / ‖L‖` of the returned state.
    pub residual: f64,
}

/// Solves `L ρ = 0` with `tr ρ = 1`.
///
/// The null space of the generator is inspected first so that a
/// degenerate steady state is reported as
/// [`Error::NonUniqueSteadyState`] rather than as a failed solve.
pub fn solve_steady_state(sys: &LevelSystem) -> Result<SteadyStateResult> {
    let n = sys.dim();
    let n2 = n * n;
    let mut l = sys.liouvillian();
    let scale = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::NonUniqueSteadyState { null_dim: n2 });
    }
    l /= Complex64::new(scale, 0.0);

    let sv = l.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let null_dim = sv.iter().filter(|&&s| s <= 1e-12 * smax).count();
    if null_dim > 1 {
        return Err(Error::NonUniqueSteadyState { null_dim });
    }

    // replace the equation for ρ_00 by the trace condition
    let mut a = l.clone();
    for c in 0..n2 {
        a[(0, c)] = C0;
    }
    for k in 0..n {
        a[(0, k * n + k)] = C1;
    }
    let mut b = DVector::<Complex64>::zeros(n2);
    b[0] = C1;

    let lu = a.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::Singular("trace-constrained Liouvillian".into()))?;
    for _ in 0..2 {
        let r = &b - &a * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    if x.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("non-finite steady state".into()));
    }

    let rho_raw = DMatrix::from_row_slice(n, n, x.as_slice());
    // symmetrize away round-off before the typed checks
    let rho = (&rho_raw + rho_raw.adjoint()) * Complex64::new(0.5, 0.0);
    let vec_rho = DVector::from_row_slice(rho.transpose().as_slice());
    let residual = (&l * &vec_rho).norm() / l.norm();
    check_state(&rho, &rho_raw, residual)?;

    let chi_norm = sys.probe.map(|p| {
        let rho_eg = rho[(p.excited, p.ground)];
        Susceptibility(rho_eg * (-2.0 * p.gamma_e_half.rad_per_s() / p.rabi.rad_per_s()))
    });
    Ok(SteadyStateResult {
        rho,
        chi_norm,
        residual,
    })
}

fn check_state(rho: &DMatrix<Complex64>, raw: &DMatrix<Complex64>, residual: f64) -> Result<()> {
    let trace = rho.trace();
    if (trace.re - 1.0).abs() > 1e-9 || trace.im.abs() > 1e-9 {
        return Err(Error::Numeric(format!("trace {trace} != 1")));
    }
    let herm = (raw - raw.adjoint()).norm();
    if herm > 1e-9 {
        return Err(Error::Numeric(format!("state not Hermitian ({herm:e})")));
    }
    let min_eig = rho.clone().symmetric_eigenvalues().min();
    if min_eig < -1e-9 {
        return Err(Error::Numeric(format!("state not positive (min eigenvalue {min_eig:e})")));
    }
    if residual > 1e-9 {
        return Err(Error::Numeric(format!("steady-state residual {residual:e}")));
    }
    Ok(())
}

/// Inclusion rules for pair states in [`build_eit_pair_system`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSystemOptions {
    /// Pair states need `overlap_sq` strictly above this value.
    pub overlap_threshold: f64,
    /// Pair states shifted by at least this much are treated as fully
    /// blockaded and dropped.
    pub max_shift: Frequency,
}

impl Default for PairSystemOptions {
    fn default() -> Self {
        PairSystemOptions {
            overlap_threshold: 0.05,
            max_shift: Frequency::mhz(100.0),
        }
    }
}

/// Builds the EIT ladder of one array atom with the ancilla at distance `r`:
/// levels `g = 0`, `e = 1` and one level per included pair state, coupled
/// from `e` with `Ωc √overlap_sq` and shifted by `−(Δ2 + U(r))`.
pub fn build_eit_pair_system(
    probe: &LaserDrive,
    control: &LaserDrive,
    dataset: &PotentialDataset,
    r: Length,
    transition: &TransitionParams,
) -> Result<LevelSystem> {
    build_eit_pair_system_with(probe, control, dataset, r, transition, &PairSystemOptions::default())
}

pub fn build_eit_pair_system_with(
    probe: &LaserDrive,
    control: &LaserDrive,
    dataset: &PotentialDataset,
    r: Length,
    transition: &TransitionParams,
    opts: &PairSystemOptions,
) -> Result<LevelSystem> {
    dataset.check_range(r)?;
    let filtered = dataset.filtered(opts.overlap_threshold)?;
    let delta_2 = probe.detuning() + control.detuning();
    let pairs: Vec<(f64, f64)> = filtered
        .entries()
        .iter()
        .map(|e| (e.overlap_sq(), e.shift_at(r).rad_per_s()))
        .filter(|&(_, u)| u.abs() < opts.max_shift.rad_per_s())
        .collect();

    let dim = 2 + pairs.len();
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    let half_p = 0.5 * probe.rabi().rad_per_s();
    h[(1, 0)] = Complex64::new(half_p, 0.0);
    h[(0, 1)] = Complex64::new(half_p, 0.0);
    h[(1, 1)] = Complex64::new(-probe.detuning().rad_per_s(), 0.0);
    let mut collapses = vec![(1, 0, transition.gamma_e().rad_per_s())];
    for (k, &(overlap, u)) in pairs.iter().enumerate() {
        let lvl = 2 + k;
        let half_c = 0.5 * control.rabi().rad_per_s() * overlap.sqrt();
        h[(lvl, 1)] = Complex64::new(half_c, 0.0);
        h[(1, lvl)] = Complex64::new(half_c, 0.0);
        h[(lvl, lvl)] = Complex64::new(-(delta_2.rad_per_s() + u), 0.0);
        collapses.push((lvl, 0, transition.gamma_r().rad_per_s()));
    }
    LevelSystem::new(h, collapses)?.with_probe(ProbeTransition {
        ground: 0,
        excited: 1,
        rabi: probe.rabi(),
        gamma_e_half: transition.gamma_e_half(),
    })
}

/// Steady-state susceptibility at each distance of `r_grid`, in grid order.
pub fn chi_vs_distance(
    probe: &LaserDrive,
    control: &LaserDrive,
    dataset: &PotentialDataset,
    transition: &TransitionParams,
    r_grid: &[Length],
) -> Result<Vec<(Length, Susceptibility)>> {
    chi_vs_distance_with(probe, control, dataset, transition, r_grid, &PairSystemOptions::default())
}

pub fn chi_vs_distance_with(
    probe: &LaserDrive,
    control: &LaserDrive,
    dataset: &PotentialDataset,
    transition: &TransitionParams,
    r_grid: &[Length],
    opts: &PairSystemOptions,
) -> Result<Vec<(Length, Susceptibility)>> {
    r_grid
        .par_iter()
        .map(|&r| chi_at(probe, control, dataset, transition, r, opts).map(|c| (r, c)))
        .collect()
}

fn chi_at(
    probe: &LaserDrive,
    control: &LaserDrive,
    dataset: &PotentialDataset,
    transition: &TransitionParams,
    r: Length,
    opts: &PairSystemOptions,
) -> Result<Susceptibility> {
    let sys = build_eit_pair_system_with(probe, control, dataset, r, transition, opts)?;
    let res = solve_steady_state(&sys)?;
    Ok(res.chi_norm.expect("pair system carries a probe transition"))
}

/// Distance at which `Im χ/χ0` falls through `level` when moving outward,
/// located on a log-spaced bracket over the dataset range and refined by
/// bisection to 1e-6 µm.
pub fn absorption_crossing(
    probe: &LaserDrive,
    control: &LaserDrive,
    dataset: &PotentialDataset,
    transition: &TransitionParams,
    level: f64,
    opts: &PairSystemOptions,
) -> Result<Length> {
    let (lo, hi) = dataset.valid_range();
    let n = 96;
    let grid: Vec<Length> = (0..n)
        .map(|k| Length::m(lo.meters() * (hi.meters() / lo.meters()).powf(k as f64 / (n - 1) as f64)))
        .collect();
    let curve = chi_vs_distance_with(probe, control, dataset, transition, &grid, opts)?;
    // outermost bracket where absorption drops below the level
    let k = (1..n)
        .rev()
        .find(|&k| curve[k - 1].1.im() >= level && curve[k].1.im() < level)
        .ok_or_else(|| Error::Numeric(format!("absorption never crosses {level} in the dataset range")))?;
    let (mut a, mut b) = (grid[k - 1].meters(), grid[k].meters());
    while (b - a) > 1e-12 {
        let mid = 0.5 * (a + b);
        let c = chi_at(probe, control, dataset, transition, Length::m(mid), opts)?;
        if c.im() >= level {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Length::m(0.5 * (a + b)))
}

/// The EIT blockade radius: where `Im χ/χ0` crosses 1/2.
pub fn eit_blockade_radius(
    probe: &LaserDrive,
    control: &LaserDrive,
    dataset: &PotentialDataset,
    transition: &TransitionParams,
) -> Result<Length> {
    absorption_crossing(probe, control, dataset, transition, 0.5, &PairSystemOptions::default())
}
