//! Acceptance criteria 1–10. Each criterion prints one PASS/FAIL line; the
//! process fails if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rydberg_mirror::dynamics::{rydberg_fraction_vs_delay, AncillaLifetime};
use rydberg_mirror::fitting::models::*;
use rydberg_mirror::fitting::{FitData, FitOptions, FitResult};
use rydberg_mirror::photon_stats::{
    camera_conversion_from_noise, simulate_camera_noise, simulate_histogram, AncillaState, Binning, DetectionModel,
    Uncertain,
};
use rydberg_mirror::steady_state::{solve_steady_state, LevelSystem, ProbeTransition};
use rydberg_mirror::susceptibility::{chi_eit, chi_two_level};
use rydberg_mirror::{EitConditions, Frequency, LaserDrive, Susceptibility, TransitionParams};
use rydberg_mirror_cli::Config;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sim(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("sim {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn work_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

/// Runs `reproduce --figure` and returns the summary plus the wall time.
fn reproduce(figure: &str) -> Result<(Value, Duration), String> {
    let dir = work_dir(&format!("fig_{figure}"));
    let t0 = Instant::now();
    sim(&["reproduce", "--figure", figure, "--out", dir.to_str().unwrap()])?;
    let elapsed = t0.elapsed();
    let text = fs::read_to_string(dir.join("summary.json")).map_err(|e| e.to_string())?;
    Ok((serde_json::from_str(&text).map_err(|e| e.to_string())?, elapsed))
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn mhz(x: f64) -> Frequency {
    Frequency::from_cyclic_mhz(x).unwrap()
}

fn criterion_1() -> Result<Outcome, String> {
    let (s, t) = reproduce("S4c")?;
    let closed = num(&s["blockade"]["r_b_um"]);
    let steady = num(&s["blockade"]["r_b_steady_state_um"]);
    let pass = (closed / 4.60 - 1.0).abs() <= 0.01 && (steady / 4.63 - 1.0).abs() <= 0.04 && t.as_secs_f64() < 5.0;
    Ok(outcome(
        pass,
        format!("closed form {closed:.4} um, steady state {steady:.4} um, {:.2} s", t.as_secs_f64()),
    ))
}

/// Steady-state susceptibility of a ladder g–e–r built directly from its
/// Hamiltonian; `control = None` gives the two-level atom.
fn ladder_chi(tr: &TransitionParams, probe: LaserDrive, control: Option<LaserDrive>) -> Susceptibility {
    let dim = if control.is_some() { 3 } else { 2 };
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    h[(0, 1)] = Complex64::new(0.5 * probe.rabi().rad_per_s(), 0.0);
    h[(1, 0)] = h[(0, 1)];
    h[(1, 1)] = Complex64::new(-probe.detuning().rad_per_s(), 0.0);
    let mut collapses = vec![(1, 0, tr.gamma_e().rad_per_s())];
    if let Some(c) = control {
        h[(1, 2)] = Complex64::new(0.5 * c.rabi().rad_per_s(), 0.0);
        h[(2, 1)] = h[(1, 2)];
        h[(2, 2)] = Complex64::new(-(probe.detuning() + c.detuning()).rad_per_s(), 0.0);
        collapses.push((2, 0, tr.gamma_r().rad_per_s()));
    }
    let sys = LevelSystem::new(h, collapses)
        .unwrap()
        .with_probe(ProbeTransition {
            ground: 0,
            excited: 1,
            rabi: probe.rabi(),
            gamma_e_half: tr.gamma_e_half(),
        })
        .unwrap();
    solve_steady_state(&sys).unwrap().chi_norm.unwrap()
}

fn criterion_2() -> Result<Outcome, String> {
    let t0 = Instant::now();
    let tr = TransitionParams::default();
    let control = LaserDrive::from_mhz(6.7, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..201 {
        let d = -15.0 + 0.15 * k as f64;
        let probe = LaserDrive::from_mhz(6.06e-5, d).unwrap();
        let two = ladder_chi(&tr, probe, None);
        let oracle = chi_two_level(mhz(d), tr.gamma_e()).unwrap();
        worst = worst.max((two.0 - oracle.0).norm() / oracle.0.norm());
        let eit = ladder_chi(&tr, probe, Some(control));
        let oracle = chi_eit(&EitConditions::new(probe, control, tr));
        worst = worst.max((eit.0 - oracle.0).norm() / oracle.0.norm());
    }
    let t = t0.elapsed().as_secs_f64();
    Ok(outcome(worst <= 1e-6 && t < 10.0, format!("max relative deviation {worst:.2e}, {t:.2} s")))
}

fn criterion_3() -> Result<Outcome, String> {
    let f = rydberg_fraction_vs_delay(&AncillaLifetime::new(0.85, 27e-6, 20e-6, 4e-6).unwrap());
    Ok(outcome((f - 0.52).abs() <= 0.01, format!("P_P = {f:.4}")))
}

fn criterion_4() -> Result<Outcome, String> {
    let (s, _) = reproduce("2b")?;
    let maxima = s["switched-spectrum"]["maxima"].as_array().cloned().unwrap_or_default();
    let count = |p: f64| {
        maxima
            .iter()
            .find(|m| num(&m["p_p"]) == p)
            .and_then(|m| m["count"].as_u64())
    };
    let (c0, c52, c1) = (count(0.0), count(0.52), count(1.0));
    Ok(outcome(
        c0 == Some(2) && c52 == Some(3) && c1 == Some(1),
        format!("maxima at p_p = 0 / 0.52 / 1: {c0:?} / {c52:?} / {c1:?}"),
    ))
}

fn criterion_5() -> Result<Outcome, String> {
    let (spec, t_spec) = reproduce("2a")?;
    let (bloch, t_bloch) = reproduce("S8")?;
    let width = num(&spec["spectrum"]["array_linewidth_mhz"]);
    let gamma_e = num(&spec["spectrum"]["gamma_e_mhz"]);
    let r = bloch["bloch"]["reflectance_vs_spread"]
        .as_array()
        .and_then(|v| v.iter().find(|p| (num(&p["spread_over_a"]) - 3.6).abs() < 1e-9))
        .map_or(f64::NAN, |p| num(&p["roi_reflectance"]));
    let floor = num(&bloch["bloch"]["single_scatterer_floor"]);
    let t = (t_spec + t_bloch).as_secs_f64();
    let pass = width < gamma_e && (0.10..=0.22).contains(&r) && (floor - 0.133).abs() <= 0.005 && t < 300.0;
    Ok(outcome(
        pass,
        format!("linewidth {width:.3} MHz (< {gamma_e:.2}), disordered R {r:.4}, floor {floor:.4}, {t:.0} s"),
    ))
}

/// Rydberg-state mean by quadrature over the truncated Gaussians of the
/// preparation fidelity and lifetime.
fn rydberg_mean_oracle(m: &DetectionModel) -> f64 {
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 4000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        s * h / 3.0
    }
    fn truncated_mean(u: Uncertain, lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
        if u.sd == 0.0 {
            return g(u.mean.clamp(lo, hi));
        }
        let w = |x: f64| (-(x - u.mean).powi(2) / (2.0 * u.sd * u.sd)).exp();
        simpson(|x| w(x) * g(x), lo, hi) / simpson(w, lo, hi)
    }
    let tp = m.probe_duration;
    let alive = |tau: f64| {
        if tau <= 0.0 {
            0.0
        } else {
            (tau / tp) * (-m.delay / tau).exp() * (1.0 - (-tp / tau).exp())
        }
    };
    let eta = truncated_mean(m.prep_fidelity, 0.0, 1.0, |x| x);
    let hi = m.tau.mean + 12.0 * m.tau.sd;
    m.mu_background + m.mu_switched * eta * truncated_mean(m.tau, 0.0, hi, alive)
}

fn criterion_6() -> Result<Outcome, String> {
    let t0 = Instant::now();
    let (s, _) = reproduce("4")?;
    let h = &s["histogram"];
    let g_mean = num(&h["ground_mean_photons"]);
    let g_ratio = num(&h["ground_variance_over_mean"]);
    let r_mean = num(&h["rydberg_mean_photons"]);
    let n = num(&h["rydberg_samples"]);
    let se = (num(&h["rydberg_variance_over_mean"]) * r_mean / n).sqrt();
    let model = DetectionModel::default();
    let oracle = rydberg_mean_oracle(&model);
    let ml = num(&h["ml_mu_switched"]);

    // central parameter values reproduce the quoted alive-fraction mean
    let point = DetectionModel {
        prep_fidelity: Uncertain::new(0.85, 0.0).unwrap(),
        tau: Uncertain::new(27e-6, 0.0).unwrap(),
        ..model
    };
    let hp = simulate_histogram(&point, AncillaState::Rydberg, 100_000, &Binning::default(), 3).unwrap();
    let point_oracle = rydberg_mean_oracle(&point);
    let point_se = (hp.sample_variance / 1e5).sqrt();
    let t = t0.elapsed().as_secs_f64();

    let pass = (g_mean - 18.3).abs() <= 0.2
        && (g_ratio - 2.0).abs() <= 0.1
        && (r_mean - oracle).abs() <= 3.0 * se
        && (point_oracle - 37.4).abs() < 0.1
        && (hp.sample_mean - point_oracle).abs() <= 3.0 * point_se
        && (ml - 65.0).abs() <= 3.0
        && t < 30.0;
    Ok(outcome(
        pass,
        format!(
            "ground {g_mean:.3} (var/mean {g_ratio:.3}); Rydberg {r_mean:.3} vs oracle {oracle:.3} (se {se:.3}); \
             central-value Rydberg {:.3} vs {point_oracle:.3}; ML mu_switched {ml:.2}; {t:.1} s",
            hp.sample_mean
        ),
    ))
}

fn noisy(clean: &[f64], sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sd).unwrap();
    clean.iter().map(|v| v + n.sample(&mut rng)).collect()
}

/// Fraction of trials in which every listed parameter lies within one
/// standard deviation of its truth, per parameter.
fn coverage(trials: &[Option<FitResult>], truth: &[(&str, f64)]) -> Vec<(String, f64)> {
    truth
        .iter()
        .map(|&(name, value)| {
            let hits = trials
                .iter()
                .filter(|f| f.as_ref().is_some_and(|f| (f.get(name) - value).abs() <= f.sd_of(name)))
                .count();
            (name.to_string(), hits as f64 / trials.len() as f64)
        })
        .collect()
}

const TRIALS: u64 = 50;

fn trials(f: impl Fn(u64) -> Option<FitResult> + Sync) -> Vec<Option<FitResult>> {
    (0..TRIALS).into_par_iter().map(|s| f(1000 + s)).collect()
}

fn criterion_7() -> Result<Outcome, String> {
    let t0 = Instant::now();
    let tr = TransitionParams::default();
    let mut report: Vec<(String, Vec<(String, f64)>)> = Vec::new();

    // cooperative mirror line
    let x: Vec<f64> = (0..121).map(|k| -15.0 + 0.25 * k as f64).collect();
    let truth = [0.1, 0.8, 0.2, 3.75];
    let clean: Vec<f64> = x.iter().map(|&v| lorentzian(v, &truth)).collect();
    let s = vec![0.02; x.len()];
    let fits = trials(|seed| {
        let y = noisy(&clean, 0.02, seed);
        fit_lorentzian(FitData::new(&x, &y, &s).ok()?, &FitOptions::default()).ok()
    });
    let names = [("offset", 0.1), ("amplitude", 0.8), ("center", 0.2), ("fwhm", 3.75)];
    report.push(("fit_lorentzian".into(), coverage(&fits, &names)));

    // Rydberg EIT and plain EIT spectra
    let x: Vec<f64> = (0..161).map(|k| -12.0 + 0.15 * k as f64).collect();
    let s = vec![0.01; x.len()];
    for (label, p_s) in [("fit_rydberg_eit_spectrum", 0.16), ("fit_eit_spectrum", 0.0)] {
        let truth = [0.9, 0.05, p_s, tr.gamma_e().cyclic_mhz() / 2.0, 6.7, 0.3];
        let clean: Vec<f64> = x.iter().map(|&d| rydberg_eit_model(&tr, d, &truth)).collect();
        let fits = trials(|seed| {
            let y = noisy(&clean, 0.01, seed);
            let data = FitData::new(&x, &y, &s).ok()?;
            if p_s > 0.0 {
                fit_rydberg_eit_spectrum(data, &tr, &FitOptions::default()).ok()
            } else {
                fit_eit_spectrum(data, &tr, &FitOptions::default()).ok()
            }
        });
        let mut names: Vec<(&str, f64)> = RYDBERG_EIT_PARAMS.iter().copied().zip(truth).collect();
        if p_s == 0.0 {
            names.retain(|(n, _)| *n != "p_s");
        }
        report.push((label.into(), coverage(&fits, &names)));
    }

    // ancilla Rabi oscillation with two-atom beating
    let t: Vec<f64> = (0..61).map(|k| 0.1 * k as f64).collect();
    let truth = [1.22, 6.0, 0.28, 0.45, 0.35];
    let clean: Vec<f64> = t.iter().map(|&v| damped_beating_rabi(0.0, v, &truth)).collect();
    let s = vec![0.03; t.len()];
    let fits = trials(|seed| {
        let y = noisy(&clean, 0.03, seed);
        fit_damped_beating_rabi(FitData::new(&t, &y, &s).ok()?, &RabiFitOptions::default()).ok()
    });
    let names: Vec<(&str, f64)> = RABI_FREE_PARAMS.iter().copied().zip(truth).collect();
    report.push(("fit_damped_beating_rabi".into(), coverage(&fits, &names)));

    // lifetime
    let limits = TransmittanceBounds { mirror: 0.35, eit: 0.85 };
    let d: Vec<f64> = (0..16).map(|k| 8.0 * k as f64).collect();
    let truth = [0.85, 27.0, 0.85];
    let clean: Vec<f64> = d.iter().map(|&v| lifetime_model(limits, 20.0, v, &truth)).collect();
    let s = vec![0.02; d.len()];
    let fits = trials(|seed| {
        let y = noisy(&clean, 0.02, seed);
        fit_lifetime(FitData::new(&d, &y, &s).ok()?, limits, 20.0, &FitOptions::default())
            .ok()
            .map(|f| f.result)
    });
    report.push(("fit_lifetime".into(), coverage(&fits, &[("eta_init", 0.85), ("tau", 27.0), ("offset", 0.85)])));

    // loss slopes
    let x: Vec<f64> = (0..10).map(|k| 0.8 * k as f64).collect();
    for slope in [0.055, 0.013] {
        let clean: Vec<f64> = x.iter().map(|v| 0.9 - slope * v).collect();
        let fits = trials(|seed| fit_linear_loss(&x, &noisy(&clean, 0.003, seed)).ok());
        report.push((
            format!("fit_linear_loss({slope})"),
            coverage(&fits, &[("rate", slope), ("intercept", 0.9)]),
        ));
    }

    // camera conversion factor from shot-noise pairs
    let levels: Vec<f64> = (1..=8).map(|k| 250.0 * k as f64).collect();
    let hits = (0..TRIALS)
        .into_par_iter()
        .filter(|&s| {
            simulate_camera_noise(0.32, 2.0, &levels, 1000, 1000 + s)
                .and_then(|pairs| camera_conversion_from_noise(&pairs))
                .is_ok_and(|c| (c.alpha - 0.32).abs() <= c.sd)
        })
        .count();
    report.push(("camera alpha".into(), vec![("alpha".into(), hits as f64 / TRIALS as f64)]));

    let t = t0.elapsed().as_secs_f64();
    let worst = report
        .iter()
        .flat_map(|(_, c)| c.iter().map(|(_, f)| *f))
        .fold(1.0, f64::min);
    let detail = report
        .iter()
        .map(|(name, c)| {
            let parts: Vec<String> = c.iter().map(|(p, f)| format!("{p} {:.0}%", 100.0 * f)).collect();
            format!("{name}: {}", parts.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(outcome(worst >= 0.6 && t < 120.0, format!("{detail}; {t:.1} s")))
}

fn criterion_8() -> Result<Outcome, String> {
    let (s, _) = reproduce("S5")?;
    let e = &s["exchange"];
    let r = num(&e["peak_radius_um"]);
    let j = num(&e["peak_effective_exchange_khz"]);
    let jc = num(&e["collective_exchange_khz"]);
    let dur = num(&e["exchange_duration_us"]);
    let pass = (r - 3.7).abs() <= 1.0
        && (j / 3.2 - 1.0).abs() <= 0.4
        && (jc / 30.0 - 1.0).abs() <= 0.4
        && (dur / 16.7 - 1.0).abs() <= 0.4;
    Ok(outcome(
        pass,
        format!("peak {j:.3} kHz at {r:.2} um; collective {jc:.2} kHz, exchange duration {dur:.2} us"),
    ))
}

fn criterion_9() -> Result<Outcome, String> {
    let (small, _) = reproduce("5a")?;
    let (large, _) = reproduce("5b")?;
    let c_small = num(&small["spatial"]["center_transmittance"]);
    let l = &large["spatial"];
    let (c_on, c_off) = (num(&l["center_transmittance"]), num(&l["center_transmittance_unsmoothed"]));
    let (s_on, s_off) = (num(&l["slope_per_um"]), num(&l["slope_unsmoothed_per_um"]));
    let pass = (0.40..=0.56).contains(&c_small) && c_on > c_off && s_on.abs() < s_off.abs() && c_on > c_small;
    Ok(outcome(
        pass,
        format!(
            "small centre {c_small:.4}; large centre {c_on:.4} smoothed vs {c_off:.4}; \
             slope {s_on:.4} vs {s_off:.4} per um"
        ),
    ))
}

fn reduced_config() -> Config {
    let mut c = Config::default();
    let s = c.spectrum.as_mut().unwrap();
    s.points = 101;
    s.array_n = 6;
    s.array_points = 11;
    let sp = c.spatial.as_mut().unwrap();
    sp.radius_um = 3.0;
    sp.roi_um = 3.0;
    sp.pixel_um = 0.2;
    sp.radial_points = 30;
    sp.probe_detuning_mhz = Some(1.0);
    sp.blockade_radius_um = 1.5;
    sp.slope_window_um = 1.0;
    sp.exchange_smoothing = true;
    sp.exchange.steps = 50;
    let b = c.bloch.as_mut().unwrap();
    b.array_n = 6;
    b.samples = 2;
    b.spreads_over_a = vec![0.0, 1.2];
    let h = c.histogram.as_mut().unwrap();
    h.samples = 5000;
    h.band_runs = 4;
    h.band_samples = 1000;
    c.exchange.as_mut().unwrap().points = 21;
    c.blockade.as_mut().unwrap().points = 21;
    c.calibrate.as_mut().unwrap().frames = 200;
    c
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn criterion_10() -> Result<Outcome, String> {
    let root = work_dir("determinism");
    fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let cfg = root.join("reduced.toml");
    fs::write(&cfg, reduced_config().to_toml()).map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let scenarios = [
        "blockade",
        "spectrum",
        "switched-spectrum",
        "spatial",
        "rabi",
        "lifetime",
        "histogram",
        "exchange",
        "bloch",
        "calibrate",
    ];
    let mut differing = Vec::new();
    let mut checked = 0;
    for sc in scenarios {
        let modes: &[bool] = if sc == "histogram" { &[false, true] } else { &[false] };
        for &band in modes {
            let mut snaps = Vec::new();
            for threads in ["1", "4"] {
                let dir = root.join(format!("{sc}_{band}_{threads}"));
                let d = dir.to_str().unwrap();
                let mut args = vec![sc, "--config", cfg, "--seed", "7", "--threads", threads, "--out", d];
                if band {
                    args.push("--band");
                }
                sim(&args)?;
                snaps.push(snapshot(&dir));
            }
            checked += snaps[0].len();
            if snaps[0].is_empty() || snaps[0] != snaps[1] {
                differing.push(format!("{sc}{}", if band { " --band" } else { "" }));
            }
        }
    }
    Ok(outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{checked} files identical at 1 and 4 threads")
        } else {
            format!("differ: {}", differing.join(", "))
        },
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome, String>); 10] = [
        ("blockade radius", criterion_1),
        ("analytic-oracle equivalence", criterion_2),
        ("lifetime mapping", criterion_3),
        ("triple-peak reproduction", criterion_4),
        ("subradiance", criterion_5),
        ("photon histograms", criterion_6),
        ("fit recovery", criterion_7),
        ("exchange", criterion_8),
        ("radial profile", criterion_9),
        ("determinism", criterion_10),
    ];
    // ACCEPTANCE_ONLY=3,7 restricts the run to the listed criteria
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|k| k.trim().parse().ok()).collect());
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            continue;
        }
        let o = run().unwrap_or_else(|e| outcome(false, e));
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} ({name}): {} - {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
