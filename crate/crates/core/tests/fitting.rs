use nanocavity::cavity::{SlabGeometry, CALIBRATED_N1_EFF};
use nanocavity::experiment::{build_sweep_dataset, fabricated_lattice_grid, CouplingPolicy, HoleShift};
use nanocavity::fit::{
    analyze_spectrum, detect_peaks, estimate_snr, fano_peak_height, fit_composite, slab_gap_template, FitOptions,
    FitResult, ParameterBounds, ParameterKind, PipelineOptions,
};
use nanocavity::lineshape::{synthesize_spectrum, CompositeModel, FabryPerotBackground, FanoPeak, LorentzianPeak};
use nanocavity::spectrum::linspace;
use nanocavity::Spectrum;

fn high_q_model(fano_re: f64, fano_im: f64) -> (CompositeModel, FabryPerotBackground) {
    let mut fp = slab_gap_template(1.0, CALIBRATED_N1_EFF, 200.0, 1200.0, 3.4).unwrap();
    fp.scale = 0.08;
    let peak = FanoPeak::new(LorentzianPeak::from_wavelength(0.1, 1390.0, 58_000.0).unwrap(), fano_re, fano_im).unwrap();
    (CompositeModel::new(vec![peak], Some(fp.clone()), 0.005).unwrap(), fp)
}

fn grid() -> Vec<f64> {
    linspace(1388.8, 1391.2, 1601)
}

fn lead(s: &Spectrum, options: &PipelineOptions) -> FitResult {
    analyze_spectrum(s, options).unwrap().remove(0).outcome.unwrap()
}

#[test]
fn detects_high_q_peak_on_interference_background() {
    let (model, _) = high_q_model(0.1, 0.0);
    let s = synthesize_spectrum(&model, &grid(), 0.0, &[], 0).unwrap();
    let c = detect_peaks(&s, 0.1 * fano_peak_height(&model.peaks[0]));
    assert_eq!(c.len(), 1);
    assert!((c[0].wavelength_nm - 1390.0).abs() < 0.05);
}

#[test]
fn asymmetric_fit_has_noise_level_residuals() {
    let (model, fp) = high_q_model(0.1, 0.1);
    let sigma = fano_peak_height(&model.peaks[0]) / 20.0;
    let options = PipelineOptions {
        fp_background: Some(fp),
        ..Default::default()
    };
    for seed in 0..5 {
        let s = synthesize_spectrum(&model, &grid(), sigma, &[], seed).unwrap();
        let fit = lead(&s, &options);
        assert!(fit.converged);
        assert!(fit.residual_rms < 2.0 * sigma, "rms {} sigma {sigma}", fit.residual_rms);
        assert!((fit.q_exp / 58_000.0 - 1.0).abs() < 0.05, "Q {}", fit.q_exp);
        assert!(fit.value_of("peak0.fano_im").unwrap() > 0.0);
    }
}

#[test]
fn snr_tracks_generator_noise() {
    let (model, fp) = high_q_model(0.1, 0.0);
    let height = fano_peak_height(&model.peaks[0]);
    let options = PipelineOptions {
        fp_background: Some(fp),
        ..Default::default()
    };
    let mean_snr = |factor: f64| -> Vec<f64> {
        (0..100)
            .map(|seed| {
                let s = synthesize_spectrum(&model, &grid(), factor * height / 20.0, &[], seed).unwrap();
                lead(&s, &options).snr.unwrap()
            })
            .collect()
    };
    let single = mean_snr(1.0);
    let doubled = mean_snr(2.0);
    let m1 = single.iter().sum::<f64>() / 100.0;
    let m2 = doubled.iter().sum::<f64>() / 100.0;
    assert!((m1 / 20.0 - 1.0).abs() < 0.25, "mean SNR {m1}");
    assert!((m2 / m1 - 0.5).abs() < 0.05, "ratio {}", m2 / m1);
}

#[test]
fn snr_needs_sixteen_background_samples() {
    let (model, fp) = high_q_model(0.0, 0.0);
    let s = synthesize_spectrum(&model, &grid(), 0.004, &[], 1).unwrap();
    let options = PipelineOptions {
        fp_background: Some(fp),
        ..Default::default()
    };
    let fit = lead(&s, &options);
    assert!(estimate_snr(&s, &fit, 5.0).is_ok());
    assert!(estimate_snr(&s, &fit, 1e5).is_err());
}

#[test]
fn oversampling_leaves_noiseless_q_unchanged() {
    let (model, fp) = high_q_model(0.1, 0.05);
    let options = PipelineOptions {
        fp_background: Some(fp),
        ..Default::default()
    };
    let coarse = synthesize_spectrum(&model, &linspace(1388.8, 1391.2, 801), 0.0, &[], 0).unwrap();
    let fine = synthesize_spectrum(&model, &linspace(1388.8, 1391.2, 1601), 0.0, &[], 0).unwrap();
    let (a, b) = (lead(&coarse, &options), lead(&fine, &options));
    assert!((a.q_exp / b.q_exp - 1.0).abs() < 1e-4);
    assert!((a.q_exp / 58_000.0 - 1.0).abs() < 1e-6, "{}", a.q_exp);
    assert_eq!(a.snr, Some(f64::INFINITY));
}

#[test]
fn wide_window_frees_interference_thicknesses() {
    // Q = 150 window spans more than a quarter fringe, so the stack is fitted too.
    let mut truth_fp = slab_gap_template(1.0, 2.6, 200.0, 1200.0, 3.4).unwrap();
    truth_fp.scale = 0.3;
    let peak = FanoPeak::new(LorentzianPeak::from_wavelength(0.5, 1390.0, 150.0).unwrap(), 0.0, 0.05).unwrap();
    let model = CompositeModel::new(vec![peak], Some(truth_fp), 0.02).unwrap();
    let s = synthesize_spectrum(&model, &linspace(1000.0, 1800.0, 4001), 0.0, &[], 0).unwrap();
    let template = slab_gap_template(1.0, 2.6, 204.0, 1180.0, 3.4).unwrap();
    let options = PipelineOptions {
        fp_background: Some(template),
        ..Default::default()
    };
    let fit = lead(&s, &options);
    assert!(fit.converged);
    assert!((fit.value_of("fp.thickness1").unwrap() - 1180.0).abs() > 1.0, "thickness stayed fixed");
    assert!((fit.q_exp / 150.0 - 1.0).abs() < 0.01, "Q {}", fit.q_exp);
}

#[test]
fn both_peaks_of_a_doublet_are_fitted() {
    let peaks = [(1385.0, 30_000.0), (1395.0, 12_000.0)]
        .iter()
        .map(|&(c, q)| FanoPeak::symmetric(LorentzianPeak::from_wavelength(0.3, c, q).unwrap()))
        .collect();
    let model = CompositeModel::new(peaks, None, 0.01).unwrap();
    let s = synthesize_spectrum(&model, &linspace(1380.0, 1400.0, 40_001), 0.004, &[], 9).unwrap();
    let fits = analyze_spectrum(&s, &PipelineOptions::default()).unwrap();
    assert_eq!(fits.len(), 2);
    let mut qs: Vec<(f64, f64)> = fits
        .iter()
        .map(|f| {
            let r = f.outcome.as_ref().unwrap();
            (r.lambda0, r.q_exp)
        })
        .collect();
    qs.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!((qs[0].1 / 30_000.0 - 1.0).abs() < 0.05 && (qs[1].1 / 12_000.0 - 1.0).abs() < 0.05, "{qs:?}");
    assert!(fits.iter().all(|f| f.is_success()));
}

#[test]
fn exact_initialization_is_a_fixed_point() {
    let (model, _) = high_q_model(0.1, 0.05);
    let s = synthesize_spectrum(&model, &grid(), 0.0, &[], 0).unwrap();
    let mut bounds = ParameterBounds::around(&model, &s);
    for (k, v) in [(ParameterKind::FpThickness(0), 200.0), (ParameterKind::FpThickness(1), 1200.0)] {
        bounds.fix(k, v).unwrap();
    }
    bounds.fix(ParameterKind::Floor, 0.005).unwrap();
    bounds.fix(ParameterKind::FanoRe(0), 0.1).unwrap();
    let fit = fit_composite(&s, &model, &bounds, &FitOptions::default()).unwrap();
    let want = model.peaks[0].base;
    let got = fit.params.peaks[0].base;
    assert!(fit.converged);
    for (a, b) in [(got.kappa(), want.kappa()), (got.gamma_c(), want.gamma_c()), (got.omega_c(), want.omega_c())] {
        assert!((a / b - 1.0).abs() < 1e-8);
    }
}

#[test]
fn flat_noise_is_rejected() {
    let s = synthesize_spectrum(&CompositeModel::floor_only(0.1).unwrap(), &grid(), 0.003, &[], 5).unwrap();
    assert!(analyze_spectrum(&s, &PipelineOptions::default()).is_err());
    let weak = PipelineOptions {
        min_prominence: Some(0.0),
        ..Default::default()
    };
    // Every noise maximum is now a candidate; the ones under 3σ are rejected one by one.
    let fits = analyze_spectrum(&s, &weak).unwrap();
    let rejected = fits
        .iter()
        .filter(|f| matches!(f.outcome, Err(nanocavity::Error::NoSignificantPeak { .. })))
        .count();
    assert!(rejected > 0 && rejected < fits.len(), "{rejected} of {}", fits.len());
}

#[test]
fn dataset_minimum_sits_in_low_signal_band() {
    let rows = build_sweep_dataset(
        HoleShift::Fifth,
        &fabricated_lattice_grid(),
        &SlabGeometry::default(),
        &CouplingPolicy::default(),
    )
    .unwrap();
    let min = rows.iter().min_by(|a, b| a.peak_reflectivity.total_cmp(&b.peak_reflectivity)).unwrap();
    assert!((1340.0..=1480.0).contains(&min.resonance_nm), "minimum at {}", min.resonance_nm);
    assert!(rows.windows(2).all(|w| w[1].q_theo < w[0].q_theo));
}

#[test]
fn q_range_bounds_the_linewidth() {
    let (model, fp) = high_q_model(0.1, 0.0);
    let s = synthesize_spectrum(&model, &grid(), fano_peak_height(&model.peaks[0]) / 20.0, &[], 2).unwrap();
    let open = PipelineOptions {
        fp_background: Some(fp),
        ..Default::default()
    };
    let free = lead(&s, &open);
    let capped = lead(
        &s,
        &PipelineOptions {
            q_range: Some((1e3, 3e4)),
            ..open.clone()
        },
    );
    assert!(capped.q_exp <= 3e4 * (1.0 + 1e-12), "Q {}", capped.q_exp);
    assert!(capped.cost() > free.cost());
    let roomy = lead(
        &s,
        &PipelineOptions {
            q_range: Some((1e4, 1e6)),
            ..open.clone()
        },
    );
    assert!((roomy.q_exp / free.q_exp - 1.0).abs() < 1e-6);
    let bad = PipelineOptions {
        q_range: Some((5e4, 1e4)),
        ..open
    };
    assert!(analyze_spectrum(&s, &bad).is_err());
}
