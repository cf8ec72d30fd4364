//! Closed-form reflectance lineshapes and the synthetic spectrum generator.
//!
//! A cavity peak is `κ |b + (-Γ/(Γ - i(ω-ω_c)))|²` with a complex background
//! offset `b`; `b = 0` is the plain Lorentzian. The composite model adds a
//! scaled multilayer (Airy) reflectance and a constant floor incoherently.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cavity::{omega_to_wavelength, wavelength_to_omega, SPEED_OF_LIGHT};
use crate::error::{invalid, Result};
use crate::optics::{airy_stack_reflectance, Stack};
use crate::spectrum::{validate_grid, Spectrum};

/// Single resonance: coupling efficiency, field decay rate and resonance frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianPeak {
    kappa: f64,
    gamma_c: f64,
    omega_c: f64,
}

impl LorentzianPeak {
    pub fn new(kappa: f64, gamma_c: f64, omega_c: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return invalid(format!("kappa = {kappa} must lie in (0, 1]"));
        }
        if !(gamma_c.is_finite() && gamma_c > 0.0 && omega_c.is_finite() && omega_c > 0.0) {
            return invalid(format!("gamma_c = {gamma_c} and omega_c = {omega_c} must be finite and > 0"));
        }
        if omega_c / (2.0 * gamma_c) <= 1.0 {
            return invalid(format!("implied Q = {} must exceed 1", omega_c / (2.0 * gamma_c)));
        }
        Ok(Self { kappa, gamma_c, omega_c })
    }

    /// Peak at `center_nm` with quality factor `q = ω_c / (2Γ_c)`.
    pub fn from_wavelength(kappa: f64, center_nm: f64, q: f64) -> Result<Self> {
        if !(center_nm > 0.0 && q > 0.0) {
            return invalid(format!("center {center_nm} nm and Q {q} must be > 0"));
        }
        let omega_c = wavelength_to_omega(center_nm);
        Self::new(kappa, omega_c / (2.0 * q), omega_c)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        omega_to_wavelength(self.omega_c)
    }

    pub fn q(&self) -> f64 {
        self.omega_c / (2.0 * self.gamma_c)
    }

    /// Exact wavelength-domain FWHM: the half-maximum points sit at `ω_c ± Γ_c`.
    pub fn fwhm_wavelength_nm(&self) -> f64 {
        fwhm_from_rates(self.gamma_c, self.omega_c)
    }

    /// Resonant amplitude `-Γ/(Γ - i(ω-ω_c))`.
    pub fn amplitude(&self, omega: f64) -> Complex64 {
        resonant_amplitude(self.gamma_c, self.omega_c, omega)
    }
}

pub(crate) fn resonant_amplitude(gamma_c: f64, omega_c: f64, omega: f64) -> Complex64 {
    -gamma_c / Complex64::new(gamma_c, -(omega - omega_c))
}

pub(crate) fn fwhm_from_rates(gamma_c: f64, omega_c: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT * 1e9 * 2.0 * gamma_c / (omega_c * omega_c - gamma_c * gamma_c)
}

/// Lorentzian with a constant complex background inside the modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanoPeak {
    pub base: LorentzianPeak,
    pub background_re: f64,
    pub background_im: f64,
}

impl FanoPeak {
    pub fn new(base: LorentzianPeak, background_re: f64, background_im: f64) -> Result<Self> {
        if !(background_re.is_finite() && background_im.is_finite()) {
            return invalid("Fano offsets must be finite");
        }
        Ok(Self {
            base,
            background_re,
            background_im,
        })
    }

    pub fn symmetric(base: LorentzianPeak) -> Self {
        Self {
            base,
            background_re: 0.0,
            background_im: 0.0,
        }
    }

    /// Off-resonance level `κ |b|²`.
    pub fn background_level(&self) -> f64 {
        self.base.kappa * (self.background_re.powi(2) + self.background_im.powi(2))
    }
}

/// Multilayer interference background: `scale · R_airy(stack, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FabryPerotBackground {
    pub stack: Stack,
    pub scale: f64,
}

impl FabryPerotBackground {
    pub fn new(stack: Stack, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return invalid(format!("Fabry-Perot scale {scale} must be finite and >= 0"));
        }
        Ok(Self { stack, scale })
    }

    /// Slab + gap over a substrate with the given indices and thicknesses.
    pub fn slab_over_substrate(n0: f64, n_slab: f64, t_slab: f64, t_gap: f64, n_substrate: f64, scale: f64) -> Result<Self> {
        let stack = Stack::lossless(n0, &[(n_slab, t_slab), (n0, t_gap)], n_substrate)?;
        Self::new(stack, scale)
    }

    pub fn eval(&self, wavelength_nm: f64) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        self.scale * airy_stack_reflectance(&self.stack, wavelength_nm).map(|(r, _)| r).unwrap_or(0.0)
    }
}

/// Cavity peaks + Fabry-Pérot background + constant floor.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeModel {
    pub peaks: Vec<FanoPeak>,
    pub fp_background: Option<FabryPerotBackground>,
    pub floor: f64,
}

impl CompositeModel {
    pub fn new(peaks: Vec<FanoPeak>, fp_background: Option<FabryPerotBackground>, floor: f64) -> Result<Self> {
        if !(floor.is_finite() && floor >= 0.0) {
            return invalid(format!("floor {floor} must be finite and >= 0"));
        }
        Ok(Self {
            peaks,
            fp_background,
            floor,
        })
    }

    pub fn floor_only(floor: f64) -> Result<Self> {
        Self::new(Vec::new(), None, floor)
    }

    pub fn single(peak: FanoPeak) -> Self {
        Self {
            peaks: vec![peak],
            fp_background: None,
            floor: 0.0,
        }
    }

    /// Everything except the cavity peaks, at `wavelength_nm`.
    pub fn background_eval(&self, wavelength_nm: f64) -> f64 {
        self.floor + self.fp_background.as_ref().map_or(0.0, |fp| fp.eval(wavelength_nm))
    }
}

pub fn lorentzian_reflectance(peak: &LorentzianPeak, omega: f64) -> f64 {
    let d = omega - peak.omega_c;
    let g2 = peak.gamma_c * peak.gamma_c;
    peak.kappa * g2 / (g2 + d * d)
}

pub fn fano_reflectance(peak: &FanoPeak, omega: f64) -> f64 {
    let b = Complex64::new(peak.background_re, peak.background_im);
    peak.base.kappa * (b + peak.base.amplitude(omega)).norm_sqr()
}

pub fn composite_eval(model: &CompositeModel, wavelength_nm: f64) -> f64 {
    let omega = wavelength_to_omega(wavelength_nm);
    let peaks: f64 = model.peaks.iter().map(|p| fano_reflectance(p, omega)).sum();
    peaks + model.background_eval(wavelength_nm)
}

/// Multiplicative Gaussian absorption dip `1 - depth·exp(-((λ-center)/width)²/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionDip {
    pub center_nm: f64,
    pub depth: f64,
    pub width_nm: f64,
}

impl AbsorptionDip {
    pub fn new(center_nm: f64, depth: f64, width_nm: f64) -> Result<Self> {
        let dip = Self {
            center_nm,
            depth,
            width_nm,
        };
        dip.validate()?;
        Ok(dip)
    }

    fn validate(&self) -> Result<()> {
        if !(self.center_nm.is_finite() && self.center_nm > 0.0) {
            return invalid(format!("dip center {} nm must be > 0", self.center_nm));
        }
        if !(0.0..=1.0).contains(&self.depth) {
            return invalid(format!("dip depth {} must lie in [0, 1]", self.depth));
        }
        if !(self.width_nm.is_finite() && self.width_nm > 0.0) {
            return invalid(format!("dip width {} nm must be > 0", self.width_nm));
        }
        Ok(())
    }

    pub fn transmission(&self, wavelength_nm: f64) -> f64 {
        let u = (wavelength_nm - self.center_nm) / self.width_nm;
        1.0 - self.depth * (-0.5 * u * u).exp()
    }
}

/// Noisy samples of `model` on `grid`, with optional absorption dips.
///
/// Noise is additive zero-mean Gaussian from a ChaCha8 stream seeded with
/// `rng_seed`, so output is bit-reproducible; negative values are clamped to zero.
pub fn synthesize_spectrum(
    model: &CompositeModel,
    grid: &[f64],
    noise_sigma: f64,
    dips: &[AbsorptionDip],
    rng_seed: u64,
) -> Result<Spectrum> {
    validate_grid(grid)?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return invalid(format!("noise sigma {noise_sigma} must be finite and >= 0"));
    }
    dips.iter().try_for_each(AbsorptionDip::validate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    let values = grid
        .iter()
        .map(|&w| {
            let clean = composite_eval(model, w) * dips.iter().map(|d| d.transmission(w)).product::<f64>();
            let noise = if noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            (clean + noise).max(0.0)
        })
        .collect();
    Ok(Spectrum::new(grid.to_vec(), values)?
        .with_meta(format!("synthetic: noise_sigma={noise_sigma:e} seed={rng_seed} dips={}", dips.len())))
}
