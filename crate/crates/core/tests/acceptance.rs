//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use nanocavity::cavity::{
    curve_minimum, default_sweep_grid, interior_minima, model_total_q, scattering_at, sweep_peak_reflectivity,
    wavelength_to_omega, omega_to_wavelength, CavityCoupling, SlabGeometry, CALIBRATED_N1_EFF,
};
use nanocavity::experiment::{q_theo, resonant_wavelength, HoleShift, MEASURED_LATTICE_NM, MEASURED_RESONANCE_NM};
use nanocavity::fit::{analyze_spectrum, fano_peak_height, sampled_fwhm, slab_gap_template, FitResult, PipelineOptions};
use nanocavity::lineshape::{synthesize_spectrum, CompositeModel, FabryPerotBackground, FanoPeak, LorentzianPeak};
use nanocavity::optics::{airy_stack_reflectance, Stack};
use nanocavity::spectrum::linspace;
use nanocavity::Spectrum;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference_coupling() -> CavityCoupling {
    CavityCoupling::new(1370.0, 1e4, 1e4, 1e8).unwrap()
}

fn c1_uniform_quarter() -> Outcome {
    let cp = CavityCoupling::new(1370.0, 1e4, 1e4, 1e12).unwrap();
    let r = scattering_at(&SlabGeometry::uniform(1.0), &cp, 1370.0).unwrap().cross_reflectance();
    let (kx, ky) = (cp.kappa_x(), cp.kappa_y());
    let oracle = (kx * ky).powi(2) / (kx * kx + ky * ky).powi(2);
    outcome((r - 0.25).abs() <= 1e-6 && (oracle - 0.25).abs() < 1e-15, format!("R_cross = {r:.9}"))
}

fn c2_flux() -> Outcome {
    let g = SlabGeometry::default();
    let cp = CavityCoupling::new(1370.0, 1e4, 1e4, 1e12).unwrap();
    let lw = 1370.0 / cp.q_total();
    let grid = linspace(1370.0 - 10.0 * lw, 1370.0 + 10.0 * lw, 1001);
    let worst = grid
        .iter()
        .map(|&w| (scattering_at(&g, &cp, w).unwrap().total_flux(g.n0, g.n3) - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(worst <= 1e-6, format!("max |flux - 1| = {worst:.2e} over 1001 points"))
}

fn c3_model_q() -> Outcome {
    let q = model_total_q(&SlabGeometry::uniform(1.0), &reference_coupling()).unwrap();
    outcome((q / 5000.0 - 1.0).abs() <= 0.01, format!("Q = {q:.1}"))
}

fn c4_sweep_minimum() -> Outcome {
    let g = SlabGeometry::default();
    let start = Instant::now();
    let curve = sweep_peak_reflectivity(&g, &reference_coupling(), &default_sweep_grid()).unwrap();
    let elapsed = start.elapsed();
    let (w, r) = curve_minimum(&curve).unwrap();
    let minima = interior_minima(&curve);
    let pass = curve.len() == 341
        && minima == 1
        && (1340.0..=1480.0).contains(&w)
        && (w - 1370.0).abs() <= 60.0
        && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "n1_eff = {CALIBRATED_N1_EFF}, minimum {r:.4} at {w} nm, {minima} interior minima, {} points in {elapsed:.2?}",
            curve.len()
        ),
    )
}

/// Q = 58 000 Fano peak on a slab/gap interference background, plus a floor.
fn round_trip_generator() -> (CompositeModel, FabryPerotBackground) {
    let mut fp = slab_gap_template(1.0, CALIBRATED_N1_EFF, 200.0, 1200.0, 3.4).unwrap();
    fp.scale = 0.08;
    let peak = FanoPeak::new(LorentzianPeak::from_wavelength(0.1, 1390.0, 58_000.0).unwrap(), 0.1, 0.0).unwrap();
    (CompositeModel::new(vec![peak], Some(fp.clone()), 0.005).unwrap(), fp)
}

fn round_trip_grid() -> Vec<f64> {
    linspace(1388.8, 1391.2, 1601)
}

fn lead_fit(spectrum: &Spectrum, options: &PipelineOptions) -> FitResult {
    let fits = analyze_spectrum(spectrum, options).unwrap();
    fits.into_iter().next().unwrap().outcome.unwrap()
}

fn c5_fit_round_trip() -> Outcome {
    let (model, fp) = round_trip_generator();
    let sigma = fano_peak_height(&model.peaks[0]) / 20.0;
    let options = PipelineOptions {
        fp_background: Some(fp),
        ..Default::default()
    };
    let start = Instant::now();
    let qs: Vec<(f64, bool)> = (0..20)
        .map(|seed| {
            let s = synthesize_spectrum(&model, &round_trip_grid(), sigma, &[], seed).unwrap();
            let fit = lead_fit(&s, &options);
            (fit.q_exp, fit.converged)
        })
        .collect();
    let elapsed = start.elapsed();
    let mean = qs.iter().map(|q| q.0).sum::<f64>() / qs.len() as f64;
    let worst = qs.iter().map(|q| (q.0 / 58_000.0 - 1.0).abs()).fold(0.0, f64::max);
    let all_converged = qs.iter().all(|q| q.1);
    let pass = (mean / 58_000.0 - 1.0).abs() <= 0.03 && worst <= 0.05 && all_converged && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "mean Q_exp = {mean:.0} ({:+.2}%), worst seed {:.2}%, converged {}, {elapsed:.2?}",
            100.0 * (mean / 58_000.0 - 1.0),
            100.0 * worst,
            all_converged
        ),
    )
}

fn c6_lorentzian_fwhm() -> Outcome {
    let peak = LorentzianPeak::from_wavelength(1.0, 1300.0, 5000.0).unwrap();
    let model = CompositeModel::single(FanoPeak::symmetric(peak));
    let lw = 1300.0 / 5000.0;
    let s = synthesize_spectrum(&model, &linspace(1300.0 - 10.0 * lw, 1300.0 + 10.0 * lw, 20001), 0.0, &[], 0).unwrap();
    let (center, fwhm) = sampled_fwhm(&s).unwrap();
    let q = center / fwhm;
    let analytic = peak.omega_c() / (2.0 * peak.gamma_c());
    outcome((q / analytic - 1.0).abs() <= 1e-3, format!("sampled Q = {q:.2}, analytic {analytic:.2}"))
}

fn c7_half_wave_and_fresnel() -> Outcome {
    let slab = Stack::lossless(1.0, &[(3.4, 200.0)], 1.0).unwrap();
    let r_slab = airy_stack_reflectance(&slab, 1360.0).unwrap().0;
    let bare = Stack::lossless(1.0, &[], 3.4).unwrap();
    let r_bare = airy_stack_reflectance(&bare, 1360.0).unwrap().0;
    outcome(
        r_slab < 1e-10 && (r_bare - 0.2975).abs() <= 1e-4,
        format!("R(half-wave) = {r_slab:.2e}, R(air/3.4) = {r_bare:.6}"),
    )
}

fn c8_tables() -> Outcome {
    let endpoints = [
        (HoleShift::None, 5000.0, 3400.0),
        (HoleShift::Tenth, 15_400.0, 9400.0),
        (HoleShift::Fifth, 78_000.0, 43_000.0),
    ];
    let exact = endpoints
        .iter()
        .all(|&(s, hi, lo)| q_theo(350.0, s).unwrap() == hi && q_theo(490.0, s).unwrap() == lo);
    let q390 = q_theo(390.0, HoleShift::Fifth).unwrap();
    let worst = MEASURED_LATTICE_NM
        .iter()
        .zip(MEASURED_RESONANCE_NM)
        .map(|(&a, l)| (resonant_wavelength(a).unwrap() - l).abs())
        .fold(0.0, f64::max);
    let pass = exact && (q390 / 64_000.0 - 1.0).abs() <= 0.10 && worst <= 2.0;
    outcome(
        pass,
        format!("endpoints exact: {exact}, Q_theo(390, 0.2a) = {q390}, worst resonance residual {worst:.2} nm"),
    )
}

fn c9_extinction() -> Outcome {
    let g = SlabGeometry::default();
    let single = CavityCoupling::new(1370.0, 1e4, f64::INFINITY, 1e8).unwrap();
    let structural = [1280.0, 1369.9, 1370.0, 1370.1, 1620.0]
        .iter()
        .map(|&w| scattering_at(&g, &single, w).unwrap().cross_reflectance())
        .fold(0.0, f64::max);
    // 10⁶ linewidths above the resonance frequency, at a moderate and a very high Q.
    let mut detuned: f64 = 0.0;
    for (q_cav, q_loss) in [(1e4, 1e8), (1e12, 1e16)] {
        let cp = CavityCoupling::new(1370.0, q_cav, q_cav, q_loss).unwrap();
        let omega0 = wavelength_to_omega(1370.0);
        let linewidth = omega0 / cp.q_total();
        for k in [1.01e6, 3e6] {
            let w = omega_to_wavelength(omega0 + k * linewidth);
            detuned = detuned.max(scattering_at(&g, &cp, w).unwrap().cross_reflectance());
        }
        if q_cav > 1e6 {
            for k in [-3e6, -1.01e6] {
                let w = omega_to_wavelength(omega0 + k * linewidth);
                detuned = detuned.max(scattering_at(&g, &cp, w).unwrap().cross_reflectance());
            }
        }
    }
    outcome(
        structural < 1e-12 && detuned < 1e-12,
        format!("κx·κy = 0: max R_cross = {structural:.1e}; > 10⁶ linewidths: max R_cross = {detuned:.1e}"),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a / b - 1.0).abs()
    }
}

fn c10_scale_invariance() -> Outcome {
    let (model, fp) = round_trip_generator();
    let sigma = fano_peak_height(&model.peaks[0]) / 20.0;
    let options = PipelineOptions {
        fp_background: Some(fp),
        ..Default::default()
    };
    let s = synthesize_spectrum(&model, &round_trip_grid(), sigma, &[], 7).unwrap();
    let a = lead_fit(&s, &options);
    let b = lead_fit(&s.scaled(7.3).unwrap(), &options);
    let invariant = rel(b.q_exp, a.q_exp).max(rel(b.lambda0, a.lambda0)).max(rel(b.fwhm, a.fwhm));
    let scaled = ["peak0.kappa", "fp.scale", "floor"]
        .iter()
        .map(|n| rel(b.value_of(n).unwrap(), 7.3 * a.value_of(n).unwrap()))
        .fold(0.0, f64::max);
    outcome(
        invariant <= 1e-9 && scaled <= 1e-9 && a.converged && b.converged,
        format!("max relative change of (Q, λ0, FWHM) = {invariant:.1e}; of (κ, FP scale, floor)/c = {scaled:.1e}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("uniform-medium cross reflectivity 0.25", c1_uniform_quarter, Duration::from_secs(1)),
        ("flux conservation", c2_flux, Duration::from_secs(1)),
        ("model linewidth Q = 5000", c3_model_q, Duration::from_secs(2)),
        ("peak-reflectivity sweep minimum", c4_sweep_minimum, Duration::from_secs(10)),
        ("fit round trip Q = 58000", c5_fit_round_trip, Duration::from_secs(10)),
        ("Lorentzian FWHM identity", c6_lorentzian_fwhm, Duration::from_secs(1)),
        ("half-wave transparency and Fresnel", c7_half_wave_and_fresnel, Duration::from_secs(1)),
        ("design tables", c8_tables, Duration::from_secs(1)),
        ("off-resonance extinction", c9_extinction, Duration::from_secs(1)),
        ("estimator scale invariance", c10_scale_invariance, Duration::from_secs(2)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{elapsed:.2?} / {budget:?}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
