use crate::error::{invalid, Result};

/// Minimum number of samples a spectrum must carry.
pub const MIN_SPECTRUM_LEN: usize = 16;

/// A sampled reflectance series on a strictly increasing vacuum-wavelength grid (nm).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavelengths: Vec<f64>,
    reflectance: Vec<f64>,
    /// Free-form provenance lines (comment lines of a spectrum file, generator settings, flags).
    pub meta: Vec<String>,
}

impl Spectrum {
    pub fn new(wavelengths: Vec<f64>, reflectance: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != reflectance.len() {
            return invalid(format!(
                "length mismatch: {} wavelengths vs {} reflectance values",
                wavelengths.len(),
                reflectance.len()
            ));
        }
        if wavelengths.len() < MIN_SPECTRUM_LEN {
            return invalid(format!(
                "spectrum length {} violates length >= {MIN_SPECTRUM_LEN}",
                wavelengths.len()
            ));
        }
        if let Some(i) = wavelengths.iter().position(|w| !w.is_finite() || *w <= 0.0) {
            return invalid(format!("wavelength {} at index {i} is not finite and positive", wavelengths[i]));
        }
        if let Some(i) = reflectance.iter().position(|r| !r.is_finite() || *r < 0.0) {
            return invalid(format!("reflectance {} at index {i} is not finite and non-negative", reflectance[i]));
        }
        if let Some(i) = first_non_increasing(&wavelengths) {
            return invalid(format!("wavelengths not strictly increasing at index {i}"));
        }
        Ok(Self {
            wavelengths,
            reflectance,
            meta: Vec::new(),
        })
    }

    pub fn with_meta(mut self, line: impl Into<String>) -> Self {
        self.meta.push(line.into());
        self
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn reflectance(&self) -> &[f64] {
        &self.reflectance
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.wavelengths.iter().copied().zip(self.reflectance.iter().copied())
    }

    /// Samples with wavelength in `[lo, hi]`. Errors if fewer than the minimum length remain.
    pub fn window(&self, lo: f64, hi: f64) -> Result<Spectrum> {
        let (w, r): (Vec<f64>, Vec<f64>) = self.iter().filter(|(w, _)| *w >= lo && *w <= hi).unzip();
        let mut out = Spectrum::new(w, r)?;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Every reflectance value multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Spectrum> {
        if !(factor > 0.0 && factor.is_finite()) {
            return invalid(format!("scale factor {factor} must be finite and positive"));
        }
        let mut out = self.clone();
        out.reflectance.iter_mut().for_each(|r| *r *= factor);
        Ok(out)
    }
}

/// Index of the first sample that is not strictly greater than its predecessor.
pub(crate) fn first_non_increasing(grid: &[f64]) -> Option<usize> {
    grid.windows(2).position(|w| !(w[1] > w[0])).map(|i| i + 1)
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return invalid("empty wavelength grid");
    }
    if let Some(i) = grid.iter().position(|w| !w.is_finite() || *w <= 0.0) {
        return invalid(format!("grid wavelength {} at index {i} is not finite and positive", grid[i]));
    }
    if let Some(i) = first_non_increasing(grid) {
        return invalid(format!("grid not strictly increasing at index {i}"));
    }
    Ok(())
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}
