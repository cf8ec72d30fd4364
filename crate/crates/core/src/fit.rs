//! Q-factor extraction: peak detection, damped least-squares fitting of a
//! [`CompositeModel`] to a spectrum, and the derived linewidth and SNR metrics.

use std::cell::RefCell;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::cavity::{omega_to_wavelength, wavelength_to_omega, SPEED_OF_LIGHT};
use crate::error::{invalid, Error, Result};
use crate::lineshape::{
    composite_eval, fwhm_from_rates, resonant_amplitude, CompositeModel, FabryPerotBackground, FanoPeak, LorentzianPeak,
};
use crate::optics::{airy_stack_reflectance, free_spectral_range, Stack};
use crate::spectrum::{Spectrum, MIN_SPECTRUM_LEN};

/// Wavelength-meter resolution, nm. Narrower fitted linewidths are flagged.
pub const INSTRUMENT_RESOLUTION_NM: f64 = 3e-4;
pub const BELOW_RESOLUTION_FLAG: &str = "below instrument resolution";

/// Converts a median absolute deviation into a Gaussian standard deviation.
const MAD_TO_SIGMA: f64 = 1.4826;

/// A local maximum found by [`detect_peaks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakCandidate {
    pub index: usize,
    pub wavelength_nm: f64,
    /// Sample value at the maximum.
    pub height: f64,
    /// Height above the higher of the two surrounding saddles.
    pub prominence: f64,
    /// Width at half prominence, nm.
    pub rough_width_nm: f64,
}

/// Local maxima with topographic prominence of at least `min_prominence`,
/// sorted by height, highest first. Endpoints never count as maxima.
pub fn detect_peaks(spectrum: &Spectrum, min_prominence: f64) -> Vec<PeakCandidate> {
    let x = spectrum.wavelengths();
    let y = spectrum.reflectance();
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] <= y[i - 1] {
            i += 1;
            continue;
        }
        // Walk across a plateau of equal samples.
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 < n && y[j + 1] < y[i] {
            let peak = (i + j) / 2;
            let (left_min, left_base) = saddle(y, i, -1);
            let (right_min, right_base) = saddle(y, j, 1);
            let prominence = y[peak] - left_min.max(right_min);
            if prominence >= min_prominence && prominence > 0.0 {
                let level = y[peak] - 0.5 * prominence;
                let lo = crossing(x, y, i, left_base, level);
                let hi = crossing(x, y, j, right_base, level);
                out.push(PeakCandidate {
                    index: peak,
                    wavelength_nm: x[peak],
                    height: y[peak],
                    prominence,
                    rough_width_nm: hi - lo,
                });
            }
        }
        i = j + 1;
    }
    out.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.index.cmp(&b.index)));
    out
}

/// Lowest sample between `start` and the first strictly higher sample in direction `dir`.
fn saddle(y: &[f64], start: usize, dir: isize) -> (f64, usize) {
    let top = y[start];
    let (mut min, mut at) = (top, start);
    let mut k = start as isize + dir;
    while k >= 0 && (k as usize) < y.len() {
        let v = y[k as usize];
        if v > top {
            break;
        }
        if v < min {
            min = v;
            at = k as usize;
        }
        k += dir;
    }
    (min, at)
}

/// Interpolated position where the samples from `from` towards `base` first drop below `level`.
fn crossing(x: &[f64], y: &[f64], from: usize, base: usize, level: f64) -> f64 {
    let dir: isize = if base < from { -1 } else { 1 };
    let mut k = from;
    while k != base {
        let next = (k as isize + dir) as usize;
        if y[next] < level {
            let f = (y[k] - level) / (y[k] - y[next]);
            return x[k] + f * (x[next] - x[k]);
        }
        k = next;
    }
    x[base]
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `1.4826 · MAD`: a standard-deviation estimate insensitive to outliers.
pub fn robust_std(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let m = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    MAD_TO_SIGMA * median(&mut dev)
}

/// White-noise level estimated from first differences, which suppresses any
/// background that is smooth on the sampling scale.
pub fn robust_noise_sigma(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    robust_std(&diffs) / std::f64::consts::SQRT_2
}

/// `Q = λ₀ / FWHM`.
pub fn q_from_linewidth(lambda0_nm: f64, fwhm_nm: f64) -> Result<f64> {
    if !(fwhm_nm.is_finite() && fwhm_nm > 0.0) {
        return invalid(format!("FWHM {fwhm_nm} nm must be finite and > 0"));
    }
    if !(lambda0_nm.is_finite() && lambda0_nm > 0.0) {
        return invalid(format!("center wavelength {lambda0_nm} nm must be finite and > 0"));
    }
    Ok(lambda0_nm / fwhm_nm)
}

/// Center and full width at half maximum of the highest sample, measured from
/// zero by linear interpolation between samples.
pub fn sampled_fwhm(spectrum: &Spectrum) -> Result<(f64, f64)> {
    let x = spectrum.wavelengths();
    let y = spectrum.reflectance();
    let top = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let level = 0.5 * y[top];
    if level <= 0.0 {
        return invalid("spectrum has no positive maximum");
    }
    let left = (0..top).rev().find(|&k| y[k] < level);
    let right = (top + 1..y.len()).find(|&k| y[k] < level);
    let (Some(l), Some(r)) = (left, right) else {
        return invalid("half-maximum crossing lies outside the spectrum");
    };
    let lo = crossing(x, y, l + 1, l, level);
    let hi = crossing(x, y, r - 1, r, level);
    Ok((0.5 * (lo + hi), hi - lo))
}

/// Maximum of `κ(|b + L|² − |b|²)` over detuning: the peak rise above the
/// off-resonance level.
pub fn fano_peak_height(peak: &FanoPeak) -> f64 {
    let (br, bi) = (peak.background_re, peak.background_im);
    // f(u) = (1 − 2b_re − 2b_im·u)/(1 + u²), u = δ/Γ.
    let f = |u: f64| (1.0 - 2.0 * br - 2.0 * bi * u) / (1.0 + u * u);
    let best = if bi == 0.0 {
        f(0.0)
    } else {
        let a = 1.0 - 2.0 * br;
        let disc = (a * a + 4.0 * bi * bi).sqrt();
        f((a + disc) / (2.0 * bi)).max(f((a - disc) / (2.0 * bi)))
    };
    peak.base.kappa() * best.max(0.0)
}

/// Role of one entry of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParameterKind {
    Kappa(usize),
    GammaC(usize),
    OmegaC(usize),
    FanoRe(usize),
    FanoIm(usize),
    FpScale,
    FpThickness(usize),
    Floor,
}

impl ParameterKind {
    fn is_linear(self) -> bool {
        matches!(self, ParameterKind::Kappa(_) | ParameterKind::FpScale | ParameterKind::Floor)
    }
}

impl fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParameterKind::Kappa(p) => write!(f, "peak{p}.kappa"),
            ParameterKind::GammaC(p) => write!(f, "peak{p}.gamma_c"),
            ParameterKind::OmegaC(p) => write!(f, "peak{p}.omega_c"),
            ParameterKind::FanoRe(p) => write!(f, "peak{p}.fano_re"),
            ParameterKind::FanoIm(p) => write!(f, "peak{p}.fano_im"),
            ParameterKind::FpScale => f.write_str("fp.scale"),
            ParameterKind::FpThickness(l) => write!(f, "fp.thickness{l}"),
            ParameterKind::Floor => f.write_str("floor"),
        }
    }
}

/// Parameter roles of `model`: five per peak, then FP scale and one thickness per
/// layer if present, then the floor.
pub fn parameter_layout(model: &CompositeModel) -> Vec<ParameterKind> {
    let mut kinds = Vec::new();
    for p in 0..model.peaks.len() {
        kinds.extend([
            ParameterKind::Kappa(p),
            ParameterKind::GammaC(p),
            ParameterKind::OmegaC(p),
            ParameterKind::FanoRe(p),
            ParameterKind::FanoIm(p),
        ]);
    }
    if let Some(fp) = &model.fp_background {
        kinds.push(ParameterKind::FpScale);
        kinds.extend((0..fp.stack.layers().len()).map(ParameterKind::FpThickness));
    }
    kinds.push(ParameterKind::Floor);
    kinds
}

pub fn pack_parameters(model: &CompositeModel) -> Vec<f64> {
    let mut u = Vec::new();
    for p in &model.peaks {
        u.extend([p.base.kappa(), p.base.gamma_c(), p.base.omega_c(), p.background_re, p.background_im]);
    }
    if let Some(fp) = &model.fp_background {
        u.push(fp.scale);
        u.extend(fp.stack.layers().iter().map(|l| l.thickness_nm()));
    }
    u.push(model.floor);
    u
}

/// Rebuild a model with the structure of `template` from a parameter vector.
pub fn unpack_parameters(template: &CompositeModel, u: &[f64]) -> Result<CompositeModel> {
    if u.len() != parameter_layout(template).len() {
        return invalid(format!("parameter vector has {} entries, model needs {}", u.len(), parameter_layout(template).len()));
    }
    let n = template.peaks.len();
    let peaks = (0..n)
        .map(|p| {
            let v = &u[5 * p..5 * p + 5];
            FanoPeak::new(LorentzianPeak::new(v[0], v[1], v[2])?, v[3], v[4])
        })
        .collect::<Result<Vec<_>>>()?;
    let fp = match &template.fp_background {
        Some(fp) => {
            let layers = fp.stack.layers().len();
            let stack = fp.stack.with_thicknesses(&u[5 * n + 1..5 * n + 1 + layers])?;
            Some(FabryPerotBackground::new(stack, u[5 * n])?)
        }
        None => None,
    };
    CompositeModel::new(peaks, fp, u[u.len() - 1])
}

/// Closed interval per parameter; `lower == upper` holds a parameter fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBounds {
    pub kinds: Vec<ParameterKind>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBounds {
    /// Physically admissible box around `init`: κ ∈ (0, 1], Γ within three decades
    /// of its start and below ω/4, resonance inside the spectral span, Fano offsets
    /// in [−10, 10], non-negative scale and floor, thicknesses within ×2.
    pub fn around(init: &CompositeModel, spectrum: &Spectrum) -> Self {
        let kinds = parameter_layout(init);
        let u = pack_parameters(init);
        let w = spectrum.wavelengths();
        let (omega_lo, omega_hi) = (wavelength_to_omega(w[w.len() - 1]), wavelength_to_omega(w[0]));
        let (mut lower, mut upper) = (Vec::with_capacity(u.len()), Vec::with_capacity(u.len()));
        for (k, &v) in kinds.iter().zip(&u) {
            let (lo, hi) = match k {
                ParameterKind::Kappa(_) => (f64::MIN_POSITIVE, 1.0),
                ParameterKind::GammaC(p) => {
                    let omega = u[5 * p + 2];
                    (v / 1000.0, (v * 1000.0).min(omega / 4.0))
                }
                ParameterKind::OmegaC(_) => (omega_lo.min(v), omega_hi.max(v)),
                ParameterKind::FanoRe(_) | ParameterKind::FanoIm(_) => (-10.0, 10.0),
                ParameterKind::FpScale | ParameterKind::Floor => (0.0, f64::INFINITY),
                ParameterKind::FpThickness(_) => (0.5 * v, 2.0 * v),
            };
            lower.push(lo);
            upper.push(hi);
        }
        Self { kinds, lower, upper }
    }

    fn position(&self, kind: ParameterKind) -> Result<usize> {
        self.kinds
            .iter()
            .position(|&k| k == kind)
            .ok_or_else(|| Error::InvalidInput(format!("model has no parameter {kind}")))
    }

    pub fn set(&mut self, kind: ParameterKind, lower: f64, upper: f64) -> Result<()> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return invalid(format!("bounds [{lower}, {upper}] for {kind} are not an interval"));
        }
        let i = self.position(kind)?;
        self.lower[i] = lower;
        self.upper[i] = upper;
        Ok(())
    }

    pub fn fix(&mut self, kind: ParameterKind, value: f64) -> Result<()> {
        self.set(kind, value, value)
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }

    fn contains(&self, u: &[f64]) -> Option<usize> {
        (0..u.len()).find(|&i| !(u[i] >= self.lower[i] && u[i] <= self.upper[i]))
    }

    fn project(&self, i: usize, v: f64) -> f64 {
        v.clamp(self.lower[i], self.upper[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged once an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Γ_c multipliers for the restarts; the best converged result wins.
    pub gamma_jitter: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-10,
            gamma_jitter: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: CompositeModel,
    pub parameter_names: Vec<String>,
    pub values: Vec<f64>,
    /// Standard errors; zero for fixed parameters.
    pub stderr: Vec<f64>,
    pub q_exp: f64,
    pub lambda0: f64,
    pub fwhm: f64,
    /// Filled in by [`estimate_snr`] through the pipeline.
    pub snr: Option<f64>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sum of squared residuals after the start and after each accepted step.
    pub cost_history: Vec<f64>,
    /// Parameters the data cannot determine independently.
    pub singular_parameters: Vec<String>,
    pub meta: Vec<String>,
}

impl FitResult {
    pub fn value_of(&self, name: &str) -> Option<f64> {
        self.parameter_names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn stderr_of(&self, name: &str) -> Option<f64> {
        self.parameter_names.iter().position(|n| n == name).map(|i| self.stderr[i])
    }

    pub fn cost(&self) -> f64 {
        self.cost_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Model evaluation on a fixed grid straight from the parameter vector.
struct Problem<'a> {
    template: &'a CompositeModel,
    wavelengths: &'a [f64],
    omegas: Vec<f64>,
    data: &'a [f64],
    /// Interference term for the most recent thickness vector.
    airy: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl Problem<'_> {
    fn eval(&self, u: &[f64], out: &mut [f64]) -> bool {
        let n = self.template.peaks.len();
        let floor = u[u.len() - 1];
        out.iter_mut().for_each(|v| *v = floor);
        for p in 0..n {
            let v = &u[5 * p..5 * p + 5];
            let b = num_complex::Complex64::new(v[3], v[4]);
            for (o, &w) in out.iter_mut().zip(&self.omegas) {
                *o += v[0] * (b + resonant_amplitude(v[1], v[2], w)).norm_sqr();
            }
        }
        if let Some(fp) = &self.template.fp_background {
            let layers = fp.stack.layers().len();
            let scale = u[5 * n];
            if scale != 0.0 {
                let thickness = &u[5 * n + 1..5 * n + 1 + layers];
                let mut cache = self.airy.borrow_mut();
                if cache.1.is_empty() || cache.0 != thickness {
                    let Ok(stack) = fp.stack.with_thicknesses(thickness) else {
                        return false;
                    };
                    let values: Result<Vec<f64>> =
                        self.wavelengths.iter().map(|&w| airy_stack_reflectance(&stack, w).map(|(r, _)| r)).collect();
                    let Ok(values) = values else {
                        return false;
                    };
                    *cache = (thickness.to_vec(), values);
                }
                for (o, r) in out.iter_mut().zip(&cache.1) {
                    *o += scale * r;
                }
            }
        }
        out.iter().all(|v| v.is_finite())
    }

    fn cost(&self, u: &[f64], scratch: &mut [f64]) -> f64 {
        if !self.eval(u, scratch) {
            return f64::INFINITY;
        }
        scratch.iter().zip(self.data).map(|(m, y)| (m - y).powi(2)).sum()
    }
}

struct LmRun {
    u: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
}

/// Per-parameter finite-difference scale and origin. Linear amplitudes scale
/// with the data so the fit is equivariant under rescaling of the spectrum; the
/// resonance is stepped relative to its linewidth rather than its absolute value.
fn step_scales(kinds: &[ParameterKind], u0: &[f64], data_scale: f64) -> (Vec<f64>, Vec<f64>) {
    let mut typical = Vec::with_capacity(u0.len());
    let mut origin = vec![0.0; u0.len()];
    for (i, k) in kinds.iter().enumerate() {
        typical.push(match k {
            k if k.is_linear() => data_scale,
            ParameterKind::GammaC(_) | ParameterKind::FpThickness(_) => u0[i].abs(),
            ParameterKind::OmegaC(p) => {
                origin[i] = u0[i];
                u0[5 * p + 1].abs()
            }
            _ => 1.0,
        });
    }
    (typical, origin)
}

fn jacobian(
    problem: &Problem,
    u: &[f64],
    base: &[f64],
    free: &[usize],
    bounds: &ParameterBounds,
    typical: &[f64],
    origin: &[f64],
) -> Option<DMatrix<f64>> {
    let m = base.len();
    let mut jac = DMatrix::zeros(m, free.len());
    let mut shifted = u.to_vec();
    let mut column = vec![0.0; m];
    for (c, &i) in free.iter().enumerate() {
        let h = (1e-6 * (u[i] - origin[i]).abs().max(typical[i])).max(1e-12);
        let forward = u[i] + h;
        shifted[i] = if forward <= bounds.upper[i] { forward } else { u[i] - h };
        let actual = shifted[i] - u[i];
        if !problem.eval(&shifted, &mut column) {
            return None;
        }
        for r in 0..m {
            jac[(r, c)] = (column[r] - base[r]) / actual;
        }
        shifted[i] = u[i];
    }
    Some(jac)
}

fn levenberg_marquardt(
    problem: &Problem,
    u0: &[f64],
    bounds: &ParameterBounds,
    typical: &[f64],
    origin: &[f64],
    options: &FitOptions,
) -> LmRun {
    let m = problem.data.len();
    let free: Vec<usize> = (0..u0.len()).filter(|&i| !bounds.is_fixed(i)).collect();
    let data_norm: f64 = problem.data.iter().map(|y| y * y).sum();
    let mut u = u0.to_vec();
    let mut model = vec![0.0; m];
    let mut trial = vec![0.0; m];
    let mut cost = problem.cost(&u, &mut model);
    let mut history = vec![cost];
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations && cost.is_finite() {
        if cost <= 1e-30 * data_norm || free.is_empty() {
            converged = true;
            break;
        }
        iterations += 1;
        problem.eval(&u, &mut model);
        let Some(jac) = jacobian(problem, &u, &model, &free, bounds, typical, origin) else {
            break;
        };
        let resid = DVector::from_iterator(m, model.iter().zip(problem.data).map(|(a, y)| a - y));
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * resid;
        let max_diag = (0..free.len()).map(|c| jtj[(c, c)]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            converged = true;
            break;
        }
        let diag: Vec<f64> = (0..free.len()).map(|c| jtj[(c, c)].max(1e-30 * max_diag)).collect();

        let mut accepted = false;
        while mu <= 1e20 {
            let mut lhs = jtj.clone();
            for c in 0..free.len() {
                lhs[(c, c)] += mu * diag[c];
            }
            let step = lhs.cholesky().map(|ch| ch.solve(&(-&grad)));
            let Some(step) = step else {
                mu *= 10.0;
                continue;
            };
            let mut candidate = u.clone();
            for (c, &i) in free.iter().enumerate() {
                candidate[i] = bounds.project(i, u[i] + step[c]);
            }
            let new_cost = problem.cost(&candidate, &mut trial);
            if new_cost < cost {
                let relative_step = free
                    .iter()
                    .map(|&i| (candidate[i] - u[i]).abs() / (u[i] - origin[i]).abs().max(typical[i]))
                    .fold(0.0, f64::max);
                let decrease = (cost - new_cost) / cost;
                u = candidate;
                cost = new_cost;
                history.push(cost);
                mu = (mu / 10.0).max(1e-12);
                accepted = true;
                if decrease < options.cost_tolerance || relative_step < 1e-14 {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            // No representable downhill step remains.
            converged = true;
        }
        if converged {
            break;
        }
    }
    LmRun {
        u,
        cost,
        converged,
        iterations,
        history,
    }
}

fn at_bound_count(u: &[f64], bounds: &ParameterBounds) -> usize {
    (0..u.len())
        .filter(|&i| !bounds.is_fixed(i) && (u[i] == bounds.lower[i] || u[i] == bounds.upper[i]))
        .count()
}

/// Least-squares fit of `init`'s structure to `spectrum`, with restarts over
/// [`FitOptions::gamma_jitter`]. Non-convergence is reported through
/// [`FitResult::converged`], not as an error.
pub fn fit_composite(
    spectrum: &Spectrum,
    init: &CompositeModel,
    bounds: &ParameterBounds,
    options: &FitOptions,
) -> Result<FitResult> {
    if init.peaks.is_empty() {
        return invalid("model has no peaks to fit");
    }
    let kinds = parameter_layout(init);
    let u0 = pack_parameters(init);
    if bounds.kinds != kinds {
        return invalid("bounds do not match the model's parameter layout");
    }
    if let Some(i) = bounds.contains(&u0) {
        return invalid(format!(
            "initial {} = {} lies outside [{}, {}]",
            kinds[i], u0[i], bounds.lower[i], bounds.upper[i]
        ));
    }
    if options.max_iterations == 0 || options.gamma_jitter.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return invalid("fit options need max_iterations > 0 and positive finite Γ multipliers");
    }
    let problem = Problem {
        template: init,
        wavelengths: spectrum.wavelengths(),
        omegas: spectrum.wavelengths().iter().map(|&w| wavelength_to_omega(w)).collect(),
        data: spectrum.reflectance(),
        airy: RefCell::new((Vec::new(), Vec::new())),
    };
    let mut scratch = vec![0.0; spectrum.len()];
    if !problem.cost(&u0, &mut scratch).is_finite() {
        return invalid("initial model does not evaluate finitely on the spectrum grid");
    }
    let data_scale = spectrum.reflectance().iter().fold(0.0, |a: f64, &b| a.max(b.abs()));
    let (typical, origin) = step_scales(&kinds, &u0, if data_scale > 0.0 { data_scale } else { 1.0 });

    let jitter = if options.gamma_jitter.is_empty() { vec![1.0] } else { options.gamma_jitter.clone() };
    let mut best: Option<LmRun> = None;
    for &g in &jitter {
        let mut start = u0.clone();
        for (i, k) in kinds.iter().enumerate() {
            if matches!(k, ParameterKind::GammaC(_)) {
                start[i] = bounds.project(i, u0[i] * g);
            }
        }
        let run = levenberg_marquardt(&problem, &start, bounds, &typical, &origin, options);
        let better = match &best {
            None => true,
            Some(b) if run.converged != b.converged => run.converged,
            Some(b) => {
                let tie = (run.cost - b.cost).abs() <= 1e-12 * b.cost.max(f64::MIN_POSITIVE);
                if tie {
                    at_bound_count(&run.u, bounds) < at_bound_count(&b.u, bounds)
                } else {
                    run.cost < b.cost
                }
            }
        };
        if better {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    finish(&problem, &kinds, bounds, &typical, &origin, run)
}

fn finish(
    problem: &Problem,
    kinds: &[ParameterKind],
    bounds: &ParameterBounds,
    typical: &[f64],
    origin: &[f64],
    run: LmRun,
) -> Result<FitResult> {
    let params = unpack_parameters(problem.template, &run.u)?;
    let m = problem.data.len();
    let free: Vec<usize> = (0..run.u.len()).filter(|&i| !bounds.is_fixed(i)).collect();
    let mut model = vec![0.0; m];
    problem.eval(&run.u, &mut model);
    let mut stderr = vec![0.0; run.u.len()];
    let mut singular = Vec::new();
    if !free.is_empty() {
        if let Some(jac) = jacobian(problem, &run.u, &model, &free, bounds, typical, origin) {
            let (errs, null) = covariance_errors(&jac, run.cost, m);
            for (c, &i) in free.iter().enumerate() {
                stderr[i] = errs[c];
                if null[c] {
                    singular.push(kinds[i].to_string());
                }
            }
        }
    }
    let lead = params.peaks[0].base;
    let lambda0 = omega_to_wavelength(lead.omega_c());
    let fwhm = fwhm_from_rates(lead.gamma_c(), lead.omega_c());
    let mut meta = Vec::new();
    if fwhm < INSTRUMENT_RESOLUTION_NM {
        meta.push(BELOW_RESOLUTION_FLAG.to_string());
    }
    if !singular.is_empty() {
        meta.push(format!("singular Jacobian: {}", singular.join(", ")));
    }
    if !run.converged {
        meta.push(format!("not converged after {} iterations", run.iterations));
    }
    Ok(FitResult {
        params,
        parameter_names: kinds.iter().map(ToString::to_string).collect(),
        values: run.u,
        stderr,
        q_exp: q_from_linewidth(lambda0, fwhm)?,
        lambda0,
        fwhm,
        snr: None,
        residual_rms: (run.cost / m as f64).sqrt(),
        converged: run.converged,
        iterations: run.iterations,
        cost_history: run.history,
        singular_parameters: singular,
        meta,
    })
}

/// Standard errors from the pseudo-inverse of `JᵀJ` scaled by the residual
/// variance, and a flag per column marking membership in a near-null direction.
fn covariance_errors(jac: &DMatrix<f64>, cost: f64, m: usize) -> (Vec<f64>, Vec<bool>) {
    let k = jac.ncols();
    let norms: Vec<f64> = (0..k).map(|c| jac.column(c).norm()).collect();
    let mut scaled = jac.clone();
    for c in 0..k {
        if norms[c] > 0.0 {
            scaled.column_mut(c).scale_mut(1.0 / norms[c]);
        }
    }
    let variance = if m > k { cost / (m - k) as f64 } else { 0.0 };
    let svd = scaled.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let s_max = svd.singular_values.max();
    let mut errs = vec![0.0; k];
    let mut null = vec![false; k];
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s <= 1e-6 * s_max {
            for c in 0..k {
                if v_t[(j, c)].abs() > 0.1 {
                    null[c] = true;
                }
            }
            continue;
        }
        for c in 0..k {
            errs[c] += (v_t[(j, c)] / s).powi(2);
        }
    }
    for c in 0..k {
        if norms[c] == 0.0 {
            null[c] = true;
            errs[c] = 0.0;
        } else {
            errs[c] = (variance * errs[c]).sqrt() / norms[c];
        }
    }
    (errs, null)
}

/// Peak height of the lead peak over the robust spread of the residuals farther
/// than `exclusion_halfwidths·FWHM` from λ₀. Residuals at rounding level count
/// as zero spread and give `+∞`.
pub fn estimate_snr(spectrum: &Spectrum, fit: &FitResult, exclusion_halfwidths: f64) -> Result<f64> {
    if !(exclusion_halfwidths.is_finite() && exclusion_halfwidths >= 0.0) {
        return invalid(format!("exclusion {exclusion_halfwidths} must be finite and >= 0"));
    }
    let reach = exclusion_halfwidths * fit.fwhm;
    let residuals: Vec<f64> = spectrum
        .iter()
        .filter(|(w, _)| (w - fit.lambda0).abs() > reach)
        .map(|(w, r)| r - composite_eval(&fit.params, w))
        .collect();
    if residuals.len() < MIN_SPECTRUM_LEN {
        return Err(Error::InsufficientBackground {
            available: residuals.len(),
            required: MIN_SPECTRUM_LEN,
        });
    }
    let height = fano_peak_height(&fit.params.peaks[0]);
    let deviation = robust_std(&residuals);
    let data_scale = spectrum.reflectance().iter().fold(0.0, |a: f64, &b| a.max(b));
    if deviation <= 64.0 * f64::EPSILON * data_scale {
        return Ok(f64::INFINITY);
    }
    Ok(height / deviation)
}

/// Settings for [`analyze_spectrum`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub fit: FitOptions,
    /// Fit window half-width in units of the detected rough width.
    pub window_halfwidths: f64,
    /// SNR background excludes this many FWHM around λ₀.
    pub exclusion_halfwidths: f64,
    /// Defaults to the larger of 8× the noise estimate and 0.1% of the data range.
    pub min_prominence: Option<f64>,
    /// Peaks rising less than this multiple of the noise estimate are rejected.
    pub significance: f64,
    /// Fit the dispersive (imaginary) Fano offset; otherwise peaks stay symmetric.
    pub fano: bool,
    /// Interference background template; its scale is re-estimated from the data.
    pub fp_background: Option<FabryPerotBackground>,
    /// Free the template thicknesses when the window spans at least a quarter fringe.
    pub fit_fp_thickness: bool,
    pub max_peaks: usize,
    /// Admissible quality-factor interval; narrows the default linewidth box.
    pub q_range: Option<(f64, f64)>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            window_halfwidths: 25.0,
            exclusion_halfwidths: 5.0,
            min_prominence: None,
            significance: 3.0,
            fano: true,
            fp_background: None,
            fit_fp_thickness: true,
            max_peaks: usize::MAX,
            q_range: None,
        }
    }
}

/// Outcome for one detected peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakFit {
    pub candidate: PeakCandidate,
    pub outcome: Result<FitResult>,
}

impl PeakFit {
    pub fn is_success(&self) -> bool {
        matches!(&self.outcome, Ok(f) if f.converged)
    }
}

/// Detect, window, fit and score every significant peak. The whole spectrum is
/// rejected when no peak rises `significance`× above the noise.
pub fn analyze_spectrum(spectrum: &Spectrum, options: &PipelineOptions) -> Result<Vec<PeakFit>> {
    if !(options.window_halfwidths > 0.0 && options.significance >= 0.0) {
        return invalid("window half-width must be > 0 and significance >= 0");
    }
    if let Some((q_min, q_max)) = options.q_range {
        if !(q_min > 1.0 && q_min <= q_max) {
            return invalid(format!("Q range [{q_min}, {q_max}] must satisfy 1 < min <= max"));
        }
    }
    let y = spectrum.reflectance();
    let sigma = robust_noise_sigma(y);
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let min_prominence = options.min_prominence.unwrap_or((8.0 * sigma).max(1e-3 * (hi - lo)));
    let mut kept: Vec<PeakCandidate> = Vec::new();
    for c in detect_peaks(spectrum, min_prominence) {
        let shadowed = kept
            .iter()
            .any(|k| (k.wavelength_nm - c.wavelength_nm).abs() < 3.0 * k.rough_width_nm.max(c.rough_width_nm));
        if !shadowed && kept.len() < options.max_peaks {
            kept.push(c);
        }
    }
    let top = kept.first().copied();
    match top {
        None => {
            return Err(Error::NoSignificantPeak {
                height: 0.0,
                deviation: sigma,
            })
        }
        Some(t) if t.prominence < options.significance * sigma => {
            return Err(Error::NoSignificantPeak {
                height: t.prominence,
                deviation: sigma,
            })
        }
        _ => {}
    }
    Ok(kept
        .into_iter()
        .map(|candidate| {
            let outcome = if candidate.prominence < options.significance * sigma {
                Err(Error::NoSignificantPeak {
                    height: candidate.prominence,
                    deviation: sigma,
                })
            } else {
                fit_candidate(spectrum, &candidate, options)
            };
            PeakFit { candidate, outcome }
        })
        .collect())
}

fn fit_candidate(spectrum: &Spectrum, c: &PeakCandidate, options: &PipelineOptions) -> Result<FitResult> {
    let reach = options.window_halfwidths * c.rough_width_nm;
    let window = spectrum.window(c.wavelength_nm - reach, c.wavelength_nm + reach)?;
    let (init, bounds) = initial_model(&window, c, options)?;
    let mut fit = fit_composite(&window, &init, &bounds, &options.fit)?;
    fit.snr = Some(estimate_snr(&window, &fit, options.exclusion_halfwidths)?);
    Ok(fit)
}

/// Starting model for one candidate, built only from quantities that scale with
/// the data so that fits commute with rescaling the spectrum.
fn initial_model(window: &Spectrum, c: &PeakCandidate, options: &PipelineOptions) -> Result<(CompositeModel, ParameterBounds)> {
    let mut outskirts: Vec<f64> = window
        .iter()
        .filter(|(w, _)| (w - c.wavelength_nm).abs() > 5.0 * c.rough_width_nm)
        .map(|(_, r)| r)
        .collect();
    let background = if outskirts.len() >= 4 {
        median(&mut outskirts)
    } else {
        window.reflectance().iter().copied().fold(f64::INFINITY, f64::min)
    }
    .max(0.0);
    let omega = wavelength_to_omega(c.wavelength_nm);
    let width = c.rough_width_nm.max(1e-9 * c.wavelength_nm);
    let mut gamma = width * omega * omega / (4.0 * std::f64::consts::PI * SPEED_OF_LIGHT * 1e9);
    let gamma_box = options.q_range.map(|(q_min, q_max)| (omega / (2.0 * q_max), omega / (2.0 * q_min)));
    if let Some((lo, hi)) = gamma_box {
        gamma = gamma.clamp(lo, hi);
    }
    let kappa = (c.height - background).clamp(f64::MIN_POSITIVE, 1.0);
    let peak = FanoPeak::symmetric(LorentzianPeak::new(kappa, gamma, omega)?);
    let (fp, floor) = match &options.fp_background {
        Some(template) => {
            let r = airy_stack_reflectance(&template.stack, c.wavelength_nm)?.0;
            let scale = if r > 0.0 { background / r } else { 0.0 };
            (Some(FabryPerotBackground::new(template.stack.clone(), scale)?), 0.0)
        }
        None => (None, background),
    };
    let init = CompositeModel::new(vec![peak], fp, floor)?;
    let mut bounds = ParameterBounds::around(&init, window);
    // With a free constant background the real offset only rescales κ and shifts
    // that constant (κ|b + L|² = κb² + κ(1 − 2b)|L|² for real b), so it is pinned.
    bounds.fix(ParameterKind::FanoRe(0), 0.0)?;
    if let Some((lo, hi)) = gamma_box {
        let i = bounds.kinds.iter().position(|&k| k == ParameterKind::GammaC(0)).unwrap_or(0);
        bounds.set(ParameterKind::GammaC(0), lo.max(bounds.lower[i]).min(gamma), hi.min(bounds.upper[i]).max(gamma))?;
    }
    if !options.fano {
        bounds.fix(ParameterKind::FanoIm(0), 0.0)?;
    }
    if let Some(fp) = &init.fp_background {
        // A window much narrower than a fringe cannot resolve the stack thicknesses;
        // keep the template's and fit only its scale next to the floor.
        let w = window.wavelengths();
        let span = w[w.len() - 1] - w[0];
        let resolves_fringe = free_spectral_range(&fp.stack, c.wavelength_nm).is_ok_and(|fsr| span >= 0.25 * fsr);
        if !(options.fit_fp_thickness && resolves_fringe) {
            for (l, layer) in fp.stack.layers().iter().enumerate() {
                bounds.fix(ParameterKind::FpThickness(l), layer.thickness_nm())?;
            }
        }
    }
    Ok((init, bounds))
}

/// Stack a pipeline FP template is usually built from: slab and gap over a substrate.
pub fn slab_gap_template(n0: f64, n_slab: f64, t_slab: f64, t_gap: f64, n_substrate: f64) -> Result<FabryPerotBackground> {
    FabryPerotBackground::new(Stack::lossless(n0, &[(n_slab, t_slab), (n0, t_gap)], n_substrate)?, 1.0)
}
