use num_complex::Complex64;
use proptest::prelude::*;
use rydberg_mirror::coupled_dipole::*;
use rydberg_mirror::dynamics::RadialProfile;
use rydberg_mirror::pair_potentials::{PairPotentialEntry, PotentialDataset};
use rydberg_mirror::susceptibility::chi_eit;
use rydberg_mirror::*;

fn um(x: f64) -> Length {
    Length::from_um(x).unwrap()
}

fn mhz(x: f64) -> Frequency {
    Frequency::from_cyclic_mhz(x).unwrap()
}

fn beam() -> GaussianBeam {
    GaussianBeam::new(um(10.0)).unwrap()
}

fn square(n: usize) -> DipoleLattice {
    let tr = TransitionParams::default();
    let a = Length::from_m(0.68 * tr.lambda_p().meters()).unwrap();
    DipoleLattice::square(n, a, tr, beam()).unwrap()
}

fn eit_at(delta_p: Frequency) -> EitConditions {
    EitConditions::new(
        LaserDrive::new(mhz(0.168), delta_p).unwrap(),
        LaserDrive::new(mhz(6.7), -delta_p).unwrap(),
        TransitionParams::default(),
    )
}

#[test]
fn rigid_translation_leaves_response_unchanged() {
    let lat = square(6);
    let shift = [1.3e-6, -0.7e-6, 0.0];
    let moved = lat
        .translated(shift)
        .with_beam(lat.beam().with_center([shift[0], shift[1]]));
    let a = solve_dipoles(&lat, mhz(0.8), None).unwrap().mode_coupling();
    let b = solve_dipoles(&moved, mhz(0.8), None).unwrap().mode_coupling();
    assert!((a.transmittance() - b.transmittance()).abs() < 1e-9);
    assert!((a.reflectance() - b.reflectance()).abs() < 1e-9);
}

#[test]
fn dipoles_scale_with_beam_amplitude() {
    let lat = square(5);
    let amp = Complex64::new(0.6, -1.7);
    let scaled = lat.with_beam(lat.beam().with_amplitude(amp).unwrap());
    let a = solve_dipoles(&lat, mhz(-1.0), None).unwrap();
    let b = solve_dipoles(&scaled, mhz(-1.0), None).unwrap();
    for (pa, pb) in a.dipoles().iter().zip(b.dipoles()) {
        for c in 0..3 {
            assert!((pa[c] * amp - pb[c]).norm() <= 1e-12 * (1.0 + pb[c].norm()));
        }
    }
    let (ta, tb) = (a.mode_coupling().transmittance(), b.mode_coupling().transmittance());
    assert!((ta - tb).abs() < 1e-12);
}

#[test]
fn twenty_by_twenty_array_is_subradiant() {
    let lat = square(20);
    let grid: Vec<Frequency> = (0..41).map(|k| mhz(-8.0 + 0.4 * k as f64)).collect();
    let sp = array_spectrum(&lat, &grid, &ImagingOptions::default()).unwrap();
    let width = sp.fitted_linewidth.unwrap();
    assert!(width.cyclic_mhz() < 6.0666, "{}", width.cyclic_mhz());
}

#[test]
fn zero_spread_disorder_equals_ordered_array() {
    let lat = square(6);
    let img = ImagingOptions::default();
    let ordered = response_point(&lat, mhz(0.5), None, &img).unwrap();
    let dis = bloch_disordered_response(&lat, mhz(0.5), Length::ZERO, 3, 7, &img).unwrap();
    assert_eq!(dis.samples.len(), 3);
    assert!((dis.mean.roi_reflectance - ordered.roi_reflectance).abs() < 1e-12);
    assert!((dis.mean.transmittance - ordered.transmittance).abs() < 1e-12);
    assert!(dis.roi_reflectance_sem < 1e-12);
}

#[test]
fn disorder_is_seed_deterministic() {
    let lat = square(5);
    let img = ImagingOptions::default();
    let s = um(1.0);
    let a = bloch_disordered_response(&lat, mhz(0.0), s, 4, 3, &img).unwrap();
    let b = bloch_disordered_response(&lat, mhz(0.0), s, 4, 3, &img).unwrap();
    assert_eq!(a, b);
}

fn small_setup(ds: &PotentialDataset, delta_p: Frequency) -> SwitchedSetup<'_> {
    SwitchedSetup {
        eit: eit_at(delta_p),
        dataset: ds,
        ancilla: [0.0, 0.0],
        self_blockade: 0.16,
        radial_points: 40,
    }
}

#[test]
fn switched_image_limits() {
    let tr = TransitionParams::default();
    let spec = ArraySpec::default().with_radius(um(3.0)).unwrap();
    let lat = DipoleLattice::from_array(&spec, 0, tr, beam()).unwrap();
    let img = ImagingOptions::default();
    let grid = ImageGrid::square([0.0, 0.0], um(2.0), um(0.2)).unwrap();
    let ds = PotentialDataset::default_dataset();
    let delta = mhz(1.0);
    let ims = switched_image(&lat, &small_setup(&ds, delta), &grid, &img).unwrap();
    assert_eq!(ims.transmittance(0.0).unwrap(), ims.uniform_transmittance);
    assert_eq!(ims.transmittance(1.0).unwrap(), ims.switched_transmittance);

    // an effectively infinite blockade radius turns every site into a mirror atom
    let huge = PotentialDataset::new(
        vec![PairPotentialEntry::new(
            "x",
            C6Coefficient::from_ghz_um6(1e9).unwrap(),
            C3Coefficient::from_ghz_um3(0.0).unwrap(),
            0.0,
            1.0,
        )
        .unwrap()],
        um(0.1),
        um(25.0),
    )
    .unwrap();
    let blocked = switched_image(&lat, &small_setup(&huge, delta), &grid, &img).unwrap();
    let (mirror_t, _, _) = solve_dipoles(&lat, delta, None).unwrap().images(&grid, &img).unwrap();
    let worst = blocked
        .switched_transmittance
        .data
        .iter()
        .zip(&mirror_t.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    // the pair steady state carries probe saturation of order (Ωp/Γe)² ≈ 8e-4
    assert!(worst < 3e-3, "{worst}");
}

#[test]
fn uniform_radial_profile_is_flat_at_eit_level() {
    let ds = PotentialDataset::default_dataset();
    let eit = eit_at(mhz(0.0));
    let opts = RadialOptions {
        roi: um(4.0),
        radial_points: 30,
        ..RadialOptions::default()
    };
    let t_mirror = 0.35;
    let mode = ProfileMode::ChiMap {
        mirror_transmittance: t_mirror,
    };
    let spec = ArraySpec::default();
    let pr = radial_transmission_profile(&spec, 0, &eit, &ds, &opts, &mode).unwrap();
    let flat = pr.mixed(0.0).unwrap();
    let ta = rydberg_mirror::susceptibility::chi_two_level(Frequency::ZERO, eit.transition.gamma_e()).unwrap();
    let s_im = 0.16 * ta.im() + 0.84 * chi_eit(&eit).im();
    let expected = 1.0 - (1.0 - t_mirror) * s_im;
    // skip the innermost bin, which holds the empty ancilla site
    for t in &flat.transmittance[1..] {
        assert!((t - expected).abs() < 1e-12, "{t} vs {expected}");
    }
    assert!(radial_transmission_profile(&spec, 0, &eit, &ds, &RadialOptions { roi: um(10.0), ..opts }, &mode).is_err());
}

#[test]
fn switched_disc_radius_matches_blockade_radius() {
    // array wider than the blockade radius so the disc edge is not the array edge
    let tr = TransitionParams::default();
    let spec = ArraySpec::default().with_radius(um(7.0)).unwrap();
    let img = ImagingOptions::default();
    let b = beam();
    let reference = DipoleLattice::from_array(&ArraySpec::default(), 0, tr, b).unwrap();
    let delta = collective_resonance(&reference, &img).unwrap();
    let opts = RadialOptions {
        roi: um(6.5),
        pixel_pitch: um(0.1),
        radial_points: 60,
        ..RadialOptions::default()
    };
    let ds = PotentialDataset::default_dataset();
    let mode = ProfileMode::CoupledDipole { beam: b, imaging: img };
    let pr = radial_transmission_profile(&spec, 0, &eit_at(delta), &ds, &opts, &mode).unwrap();
    let mixed: RadialProfile = pr.mixed(0.52).unwrap();
    let r = disc_half_max_radius(&mixed).unwrap();
    assert!((r.um() / 4.6 - 1.0).abs() < 0.15, "{}", r.um());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mode_power_is_bounded(n in 2usize..6, ratio in 0.3f64..1.2, det in -6.0f64..6.0) {
        let tr = TransitionParams::default();
        let a = Length::from_m(ratio * tr.lambda_p().meters()).unwrap();
        let lat = DipoleLattice::square(n, a, tr, beam()).unwrap();
        let m = solve_dipoles(&lat, mhz(det), None).unwrap().mode_coupling();
        prop_assert!(m.transmittance() + m.reflectance() <= 1.0 + 1e-6);
        prop_assert!(m.extinction() >= -1e-12);
    }
}
