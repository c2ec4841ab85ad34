//! Tabulated Rydberg pair-state curves and the exchange rates derived from
//! them.
//!
//! Dataset files are line oriented:
//!
//! ```text
//! # comment
//! range_um <r_min> <r_max>
//! <label> <c6_GHz_um6> <c3_GHz_um3> <asymptote_MHz> <overlap_sq>
//! ```
//!
//! Comments are kept and written back first, followed by the range line
//! and the entries in file order.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::susceptibility::{rydberg_fraction, EitConditions};
use crate::units::{C3Coefficient, C6Coefficient, Frequency, Length};

const DEFAULT_DATA: &str = include_str!("../data/default_pairs.dat");
const SIMPLIFIED_DATA: &str = include_str!("../data/simplified_pairs.dat");

/// One pair-state curve `asymptote + C3/r³ + C6/r⁶` with its relative
/// optical coupling `overlap_sq`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPotentialEntry {
    label: String,
    c6: C6Coefficient,
    c3: C3Coefficient,
    asymptote_mhz: f64,
    overlap_sq: f64,
}

impl PairPotentialEntry {
    pub fn new(
        label: impl Into<String>,
        c6: C6Coefficient,
        c3: C3Coefficient,
        asymptote_mhz: f64,
        overlap_sq: f64,
    ) -> Result<Self> {
        let label = label.into();
        if label.is_empty() || label.chars().any(char::is_whitespace) || label.starts_with('#') {
            return Err(Error::invalid("label", format!("{label:?} is not a single token")));
        }
        crate::error::ensure_finite("asymptote", asymptote_mhz)?;
        crate::error::ensure_probability("overlap_sq", overlap_sq)?;
        Ok(PairPotentialEntry {
            label,
            c6,
            c3,
            asymptote_mhz,
            overlap_sq,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn c6(&self) -> C6Coefficient {
        self.c6
    }

    pub fn c3(&self) -> C3Coefficient {
        self.c3
    }

    pub fn asymptote(&self) -> Frequency {
        Frequency::mhz(self.asymptote_mhz)
    }

    pub fn overlap_sq(&self) -> f64 {
        self.overlap_sq
    }

    /// Curve value without a range check.
    pub fn shift_at(&self, r: Length) -> Frequency {
        self.asymptote() + self.c3.shift_at(r) + self.c6.shift_at(r)
    }
}

/// An ordered set of pair curves and the distance range where they apply.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialDataset {
    entries: Vec<PairPotentialEntry>,
    r_min_um: f64,
    r_max_um: f64,
    comments: Vec<String>,
}

impl PotentialDataset {
    pub fn new(entries: Vec<PairPotentialEntry>, r_min: Length, r_max: Length) -> Result<Self> {
        Self::build(entries, r_min.um(), r_max.um(), Vec::new())
    }

    fn build(
        entries: Vec<PairPotentialEntry>,
        r_min_um: f64,
        r_max_um: f64,
        comments: Vec<String>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("dataset", "needs at least one entry"));
        }
        if !(r_min_um.is_finite() && r_max_um.is_finite() && 0.0 < r_min_um && r_min_um < r_max_um)
        {
            return Err(Error::invalid(
                "valid_range",
                format!("need 0 < r_min < r_max, got [{r_min_um}, {r_max_um}] um"),
            ));
        }
        let total: f64 = entries.iter().map(|e| e.overlap_sq).sum();
        if total > 1.0 + 1e-6 {
            return Err(Error::invalid(
                "overlap_sq",
                format!("overlaps sum to {total}, must not exceed 1"),
            ));
        }
        Ok(PotentialDataset {
            entries,
            r_min_um,
            r_max_um,
            comments,
        })
    }

    /// The bundled effective curves: split `|SP⟩` pair around C6/h = 35
    /// GHz µm⁶ plus two weakly coupled Zeeman-shifted pair states.
    pub fn default_dataset() -> Self {
        Self::parse(DEFAULT_DATA).expect("bundled dataset parses")
    }

    /// A single C6/h = 35 GHz µm⁶ curve with unit overlap.
    pub fn simplified() -> Self {
        Self::parse(SIMPLIFIED_DATA).expect("bundled dataset parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            line: 0,
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut comments = Vec::new();
        let mut range = None;
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim().to_string());
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |reason: String| Error::Parse {
                line: line_no,
                reason,
            };
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| err(format!("bad number {s:?}: {e}")))
            };
            if fields[0] == "range_um" {
                if fields.len() != 3 {
                    return Err(err("expected `range_um <min> <max>`".into()));
                }
                if range.is_some() {
                    return Err(err("duplicate range_um line".into()));
                }
                range = Some((num(fields[1])?, num(fields[2])?));
                continue;
            }
            if fields.len() != 5 {
                return Err(err(format!("expected 5 columns, found {}", fields.len())));
            }
            let entry = PairPotentialEntry::new(
                fields[0],
                C6Coefficient::from_ghz_um6(num(fields[1])?)?,
                C3Coefficient::from_ghz_um3(num(fields[2])?)?,
                num(fields[3])?,
                num(fields[4])?,
            )
            .map_err(|e| err(e.to_string()))?;
            entries.push(entry);
        }
        let (lo, hi) = range.ok_or(Error::Parse {
            line: 0,
            reason: "missing `range_um` line".into(),
        })?;
        Self::build(entries, lo, hi, comments)
    }

    /// Serializes to the dataset file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            if c.is_empty() {
                out.push_str("#\n");
            } else {
                let _ = writeln!(out, "# {c}");
            }
        }
        let _ = writeln!(out, "range_um {} {}", self.r_min_um, self.r_max_um);
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                e.label,
                e.c6.ghz_um6(),
                e.c3.ghz_um3(),
                e.asymptote_mhz,
                e.overlap_sq
            );
        }
        out
    }

    pub fn entries(&self) -> &[PairPotentialEntry] {
        &self.entries
    }

    pub fn valid_range(&self) -> (Length, Length) {
        (Length::m(self.r_min_um * 1e-6), Length::m(self.r_max_um * 1e-6))
    }

    pub fn check_range(&self, r: Length) -> Result<()> {
        let um = r.um();
        // relative slack so grid end points computed in metres are accepted
        let tol = 1e-9 * self.r_max_um;
        if um.is_finite() && um >= self.r_min_um - tol && um <= self.r_max_um + tol {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                r_um: um,
                min_um: self.r_min_um,
                max_um: self.r_max_um,
            })
        }
    }

    /// Keeps entries whose optical overlap exceeds `threshold`.
    pub fn filtered(&self, threshold: f64) -> Result<Self> {
        let entries: Vec<_> = self
            .entries
            .iter()
            .filter(|e| e.overlap_sq > threshold)
            .cloned()
            .collect();
        if entries.is_empty() {
            return Err(Error::invalid(
                "dataset",
                format!("no pair state has overlap above {threshold}"),
            ));
        }
        Self::build(entries, self.r_min_um, self.r_max_um, self.comments.clone())
    }

    /// The two entries with the largest overlap, in dataset order; `None`
    /// for single-curve datasets.
    fn main_pair(&self) -> Option<(usize, usize)> {
        if self.entries.len() < 2 {
            return None;
        }
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        // stable sort keeps file order among equal overlaps
        idx.sort_by(|&a, &b| {
            self.entries[b]
                .overlap_sq
                .partial_cmp(&self.entries[a].overlap_sq)
                .unwrap()
        });
        let (a, b) = (idx[0].min(idx[1]), idx[0].max(idx[1]));
        Some((a, b))
    }
}

/// `asymptote + C3/r³ + C6/r⁶`, guarded by the dataset range.
pub fn evaluate_potential(
    entry: &PairPotentialEntry,
    r: Length,
    dataset: &PotentialDataset,
) -> Result<Frequency> {
    dataset.check_range(r)?;
    Ok(entry.shift_at(r))
}

/// Exchange rate `J = |U₊ − U₋|/2`.
pub fn exchange_rate(u_plus: Frequency, u_minus: Frequency) -> Frequency {
    (u_plus - u_minus).abs() / 2.0
}

/// Time `1/(2 J)` (with `J` cyclic) for one complete exchange, in seconds.
pub fn exchange_duration(rate: Frequency) -> Result<f64> {
    crate::error::ensure_positive("exchange rate", rate.rad_per_s())?;
    Ok(1.0 / (2.0 * rate.cyclic_hz()))
}

/// Exchange between the two dominant curves and the shift they impose on
/// the dressed S state at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeBreakdown {
    /// Coherent exchange rate of the main pair.
    pub j_ex: Frequency,
    /// Overlap-weighted mean shift of the main pair.
    pub mean_shift: Frequency,
    /// Rydberg fraction of the dressed atom at this distance.
    pub p_s: f64,
    /// `p_s · j_ex`.
    pub j_eff: Frequency,
    /// Half-splittings between all other pairs of curves (dephasing budget).
    pub dephasing: Vec<(String, String, Frequency)>,
}

/// Full breakdown behind [`effective_exchange_rate`].
pub fn exchange_breakdown(
    r: Length,
    dataset: &PotentialDataset,
    eit: &EitConditions,
    n_sa: f64,
) -> Result<ExchangeBreakdown> {
    dataset.check_range(r)?;
    let e = dataset.entries();
    let (j_ex, mean_shift, main) = match dataset.main_pair() {
        Some((a, b)) => {
            let (ua, ub) = (e[a].shift_at(r), e[b].shift_at(r));
            let (wa, wb) = (e[a].overlap_sq, e[b].overlap_sq);
            let mean = if wa + wb > 0.0 {
                (ua * wa + ub * wb) / (wa + wb)
            } else {
                (ua + ub) / 2.0
            };
            (exchange_rate(ua, ub), mean, Some((a, b)))
        }
        None => (Frequency::ZERO, e[0].shift_at(r), None),
    };
    let p_s = rydberg_fraction(
        &eit.probe,
        &eit.control,
        eit.probe.detuning(),
        eit.two_photon_detuning() + mean_shift,
        eit.transition.gamma_e_half(),
        n_sa,
    )?;
    let mut dephasing = Vec::new();
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            if Some((i, j)) == main {
                continue;
            }
            dephasing.push((
                e[i].label.clone(),
                e[j].label.clone(),
                exchange_rate(e[i].shift_at(r), e[j].shift_at(r)),
            ));
        }
    }
    Ok(ExchangeBreakdown {
        j_ex,
        mean_shift,
        p_s,
        j_eff: j_ex * p_s,
        dephasing,
    })
}

/// `J_eff(r) = P_S(r) · J_ex(r)`: the exchange rate of the dominant pair
/// weighted by the Rydberg fraction of the dressed atom, whose two-photon
/// detuning is shifted by the pair interaction.
pub fn effective_exchange_rate(
    r: Length,
    dataset: &PotentialDataset,
    eit: &EitConditions,
    n_sa: f64,
) -> Result<Frequency> {
    exchange_breakdown(r, dataset, eit, n_sa).map(|b| b.j_eff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{LaserDrive, TransitionParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn um(x: f64) -> Length {
        Length::from_um(x).unwrap()
    }

    fn exchange_conditions() -> EitConditions {
        EitConditions::new(
            LaserDrive::from_mhz(0.168, 0.0).unwrap(),
            LaserDrive::from_mhz(13.4, 0.0).unwrap(),
            TransitionParams::default(),
        )
    }

    fn normalize(s: &str) -> Vec<String> {
        s.lines()
            .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|l| !l.is_empty())
            .collect()
    }

    #[test]
    fn potential_value_at_blockade_radius() {
        let ds = PotentialDataset::simplified();
        let u = evaluate_potential(&ds.entries()[0], um(4.6), &ds).unwrap();
        assert_relative_eq!(u.cyclic_mhz(), 35e3 / 4.6f64.powi(6), max_relative = 1e-12);
        assert!((u.cyclic_mhz() / 3.67 - 1.0).abs() < 0.01);
    }

    #[test]
    fn potential_limits() {
        let e = PairPotentialEntry::new(
            "Z",
            C6Coefficient::from_ghz_um6(0.0).unwrap(),
            C3Coefficient::from_ghz_um3(0.0).unwrap(),
            53.2,
            0.1,
        )
        .unwrap();
        for r in [1.0, 3.0, 17.0] {
            assert_relative_eq!(e.shift_at(um(r)).cyclic_mhz(), 53.2, max_relative = 1e-12);
        }
        let far = PairPotentialEntry::new(
            "F",
            C6Coefficient::from_ghz_um6(35.0).unwrap(),
            C3Coefficient::from_ghz_um3(1.0).unwrap(),
            -2.0,
            0.1,
        )
        .unwrap();
        assert!((far.shift_at(um(1e6)).cyclic_mhz() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_rejected() {
        let ds = PotentialDataset::default_dataset();
        let e = &ds.entries()[0];
        assert!(matches!(
            evaluate_potential(e, um(0.5), &ds),
            Err(Error::OutOfRange { .. })
        ));
        assert!(evaluate_potential(e, um(30.0), &ds).is_err());
    }

    #[test]
    fn exchange_rate_definition() {
        let j = exchange_rate(
            Frequency::from_cyclic_khz(100.0).unwrap(),
            Frequency::ZERO,
        );
        assert_relative_eq!(j.cyclic_khz(), 50.0, max_relative = 1e-12);
        let u = Frequency::from_cyclic_mhz(3.0).unwrap();
        assert_eq!(exchange_rate(u, u), Frequency::ZERO);
        let t = exchange_duration(Frequency::from_cyclic_khz(30.0).unwrap()).unwrap();
        assert!((t * 1e6 - 16.67).abs() < 0.01);
    }

    #[test]
    fn parse_errors() {
        assert!(PotentialDataset::parse("+ 1 0 0 0.5\n").is_err());
        assert!(PotentialDataset::parse("range_um 1 25\n").is_err());
        assert!(PotentialDataset::parse("range_um 5 2\n+ 1 0 0 0.5\n").is_err());
        assert!(PotentialDataset::parse("range_um 1 25\n+ 1 0 0\n").is_err());
        assert!(PotentialDataset::parse("range_um 1 25\n+ 1 0 0 0.7\n- 1 0 0 0.7\n").is_err());
        let e = PotentialDataset::parse("range_um 1 25\n+ x 0 0 0.5\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn bundled_files_round_trip() {
        for text in [DEFAULT_DATA, SIMPLIFIED_DATA] {
            let ds = PotentialDataset::parse(text).unwrap();
            assert_eq!(normalize(&ds.to_text()), normalize(text));
        }
    }

    #[test]
    fn filter_threshold() {
        let ds = PotentialDataset::default_dataset();
        assert_eq!(ds.filtered(0.05).unwrap().entries().len(), 2);
        assert_eq!(ds.filtered(0.0).unwrap().entries().len(), 4);
        assert_eq!(ds.filtered(0.5).is_err(), true);
        assert!(ds.filtered(0.9).is_err());
    }

    #[test]
    fn effective_exchange_limits() {
        let ds = PotentialDataset::default_dataset();
        let eit = exchange_conditions();
        let near = effective_exchange_rate(um(1.0), &ds, &eit, 77.0).unwrap();
        let far = effective_exchange_rate(um(25.0), &ds, &eit, 77.0).unwrap();
        let peak = effective_exchange_rate(um(3.7), &ds, &eit, 77.0).unwrap();
        assert!(near.cyclic_hz() < 1e-3 * peak.cyclic_hz());
        assert!(far.cyclic_hz() < 1e-3 * peak.cyclic_hz());
        let single = PotentialDataset::simplified();
        assert_eq!(
            effective_exchange_rate(um(3.7), &single, &eit, 77.0).unwrap(),
            Frequency::ZERO
        );
    }

    #[test]
    fn effective_exchange_single_maximum() {
        let ds = PotentialDataset::default_dataset();
        let eit = exchange_conditions();
        let vals: Vec<f64> = (0..=400)
            .map(|k| {
                let r = 2.0 * 5f64.powf(k as f64 / 400.0);
                effective_exchange_rate(um(r), &ds, &eit, 77.0).unwrap().cyclic_hz()
            })
            .collect();
        let maxima = (1..vals.len() - 1)
            .filter(|&k| vals[k] > vals[k - 1] && vals[k] >= vals[k + 1])
            .count();
        assert_eq!(maxima, 1);
    }

    proptest! {
        #[test]
        fn vdw_monotone(c6 in 0.1f64..100.0, r in 1.0f64..24.0, dr in 1e-3f64..1.0) {
            let e = PairPotentialEntry::new(
                "A",
                C6Coefficient::from_ghz_um6(c6).unwrap(),
                C3Coefficient::default(),
                0.0,
                1.0,
            ).unwrap();
            prop_assert!(e.shift_at(um(r)) > e.shift_at(um(r + dr)));
        }

        #[test]
        fn writer_is_idempotent(
            vals in prop::collection::vec((-100.0f64..100.0, -10.0f64..10.0, -60.0f64..60.0, 0.0f64..0.25), 1..4)
        ) {
            let entries: Vec<_> = vals.iter().enumerate().map(|(i, &(c6, c3, a, o))| {
                PairPotentialEntry::new(
                    format!("p{i}"),
                    C6Coefficient::from_ghz_um6(c6).unwrap(),
                    C3Coefficient::from_ghz_um3(c3).unwrap(),
                    a,
                    o,
                ).unwrap()
            }).collect();
            let ds = PotentialDataset::new(entries, um(1.0), um(20.0)).unwrap();
            let text = ds.to_text();
            let back = PotentialDataset::parse(&text).unwrap();
            prop_assert_eq!(&back, &ds);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
