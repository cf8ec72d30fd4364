//! Normal-incidence plane-wave optics of 1D multilayers.
//!
//! Field amplitudes are pairs `(E+, E-)` of the downward (into the stack) and
//! upward travelling waves. Time dependence is `exp(+iωt)`, so a forward wave
//! accumulates `exp(-iβd)` over a thickness `d`. Indices are specified the
//! usual way, with `Im(n) >= 0` for absorbing media; under `exp(+iωt)` the
//! matrices see the conjugate index (see [`material_index`]).
//!
//! All 2×2 matrices here map the amplitudes just above an element to the
//! amplitudes just below it; a stack matrix is the product with the topmost
//! element on the right.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// A homogeneous layer of finite thickness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    refractive_index: Complex64,
    thickness_nm: f64,
}

impl Layer {
    pub fn new(refractive_index: Complex64, thickness_nm: f64) -> Result<Self> {
        check_index(refractive_index, "layer index")?;
        if refractive_index.im < 0.0 {
            return invalid(format!(
                "layer index {refractive_index} has negative imaginary part (gain is not supported)"
            ));
        }
        if !(thickness_nm.is_finite() && thickness_nm > 0.0) {
            return invalid(format!("layer thickness {thickness_nm} nm must be finite and > 0"));
        }
        Ok(Self {
            refractive_index,
            thickness_nm,
        })
    }

    pub fn real(index: f64, thickness_nm: f64) -> Result<Self> {
        Self::new(Complex64::new(index, 0.0), thickness_nm)
    }

    pub fn refractive_index(&self) -> Complex64 {
        self.refractive_index
    }

    pub fn thickness_nm(&self) -> f64 {
        self.thickness_nm
    }

    pub fn optical_thickness_nm(&self) -> f64 {
        self.refractive_index.re * self.thickness_nm
    }
}

/// Layers between two semi-infinite claddings, ordered top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    top_cladding_index: Complex64,
    layers: Vec<Layer>,
    bottom_cladding_index: Complex64,
}

impl Stack {
    pub fn new(top: Complex64, layers: Vec<Layer>, bottom: Complex64) -> Result<Self> {
        check_index(top, "top cladding index")?;
        check_index(bottom, "bottom cladding index")?;
        Ok(Self {
            top_cladding_index: top,
            layers,
            bottom_cladding_index: bottom,
        })
    }

    /// Stack with real indices throughout. `layers` are `(index, thickness_nm)` pairs.
    pub fn lossless(top: f64, layers: &[(f64, f64)], bottom: f64) -> Result<Self> {
        let layers = layers
            .iter()
            .map(|&(n, d)| Layer::real(n, d))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Complex64::new(top, 0.0), layers, Complex64::new(bottom, 0.0))
    }

    pub fn top_cladding_index(&self) -> Complex64 {
        self.top_cladding_index
    }

    pub fn bottom_cladding_index(&self) -> Complex64 {
        self.bottom_cladding_index
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Copy of this stack with the layer thicknesses replaced.
    pub fn with_thicknesses(&self, thicknesses_nm: &[f64]) -> Result<Self> {
        if thicknesses_nm.len() != self.layers.len() {
            return invalid(format!(
                "{} thicknesses given for {} layers",
                thicknesses_nm.len(),
                self.layers.len()
            ));
        }
        let layers = self
            .layers
            .iter()
            .zip(thicknesses_nm)
            .map(|(l, &d)| Layer::new(l.refractive_index, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, ..self.clone() })
    }

    /// The same structure seen from below.
    pub fn reversed(&self) -> Self {
        Self {
            top_cladding_index: self.bottom_cladding_index,
            layers: self.layers.iter().rev().copied().collect(),
            bottom_cladding_index: self.top_cladding_index,
        }
    }

    pub fn is_lossless(&self) -> bool {
        self.top_cladding_index.im == 0.0
            && self.bottom_cladding_index.im == 0.0
            && self.layers.iter().all(|l| l.refractive_index.im == 0.0)
    }
}

/// Index as it enters the `exp(+iωt)` matrices: the conjugate of the specified
/// `n' + i n''`, so that `exp(-iβd)` decays for `n'' > 0`. Identity for real `n`.
pub fn material_index(n: Complex64) -> Complex64 {
    n.conj()
}

fn check_index(n: Complex64, what: &str) -> Result<()> {
    if !(n.re.is_finite() && n.im.is_finite() && n.re > 0.0) {
        return invalid(format!("{what} {n} must have a finite, positive real part"));
    }
    Ok(())
}

/// 2×2 complex transfer matrix acting on `(E+, E-)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer2 {
    pub m: [[Complex64; 2]; 2],
}

impl Transfer2 {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self {
            m: [[one, zero], [zero, one]],
        }
    }

    /// Interface from medium `n_a` (above) into `n_b` (below), from continuity of
    /// tangential E and H.
    pub fn interface(n_a: Complex64, n_b: Complex64) -> Self {
        let (n_a, n_b) = (material_index(n_a), material_index(n_b));
        let s = 0.5 / n_b;
        let p = (n_b + n_a) * s;
        let q = (n_b - n_a) * s;
        Self { m: [[p, q], [q, p]] }
    }

    /// Propagation through `d` nm of index `n` at vacuum wavelength `wavelength_nm`.
    pub fn propagation(n: Complex64, d: f64, wavelength_nm: f64) -> Self {
        let phase = material_index(n) * (2.0 * PI * d / wavelength_nm);
        let zero = Complex64::new(0.0, 0.0);
        let i = Complex64::i();
        Self {
            m: [[(-i * phase).exp(), zero], [zero, (i * phase).exp()]],
        }
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

impl Mul for Transfer2 {
    type Output = Transfer2;

    fn mul(self, rhs: Transfer2) -> Transfer2 {
        let a = &self.m;
        let b = &rhs.m;
        Transfer2 {
            m: [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ],
        }
    }
}

/// Amplitude coefficients `(r, t)` parametrizing the interface matrix from `n_a` into `n_b`:
///
/// `1/(2 n_b) [[n_b+n_a, n_b-n_a], [n_b-n_a, n_b+n_a]] = (1/t) [[1, r], [r, 1]]`,
/// i.e. `r = (n_b - n_a)/(n_b + n_a)` and `t = 2 n_b/(n_a + n_b)`, evaluated on
/// [`material_index`] values.
pub fn fresnel_amplitudes(n_a: Complex64, n_b: Complex64) -> Result<(Complex64, Complex64)> {
    check_index(n_a, "index n_a")?;
    check_index(n_b, "index n_b")?;
    let (n_a, n_b) = (material_index(n_a), material_index(n_b));
    let sum = n_a + n_b;
    Ok(((n_b - n_a) / sum, 2.0 * n_b / sum))
}

/// Full plane-wave response of a stack at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackResponse {
    /// Reflected amplitude for unit downward incidence from the top cladding.
    pub r: Complex64,
    /// Transmitted amplitude into the bottom cladding.
    pub t: Complex64,
    pub reflectance: f64,
    pub transmittance: f64,
}

pub fn stack_matrix(stack: &Stack, wavelength_nm: f64) -> Transfer2 {
    let mut total = Transfer2::identity();
    let mut above = stack.top_cladding_index;
    for layer in &stack.layers {
        total = Transfer2::propagation(layer.refractive_index, layer.thickness_nm, wavelength_nm)
            * Transfer2::interface(above, layer.refractive_index)
            * total;
        above = layer.refractive_index;
    }
    Transfer2::interface(above, stack.bottom_cladding_index) * total
}

pub fn stack_response(stack: &Stack, wavelength_nm: f64) -> Result<StackResponse> {
    if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
        return invalid(format!("wavelength {wavelength_nm} nm must be finite and > 0"));
    }
    let m = stack_matrix(stack, wavelength_nm).m;
    // Bottom-side upward amplitude vanishes: m10 + m11 r = 0.
    let r = -m[1][0] / m[1][1];
    let t = m[0][0] + m[0][1] * r;
    let ratio = stack.bottom_cladding_index.re / stack.top_cladding_index.re;
    Ok(StackResponse {
        r,
        t,
        reflectance: r.norm_sqr(),
        transmittance: ratio * t.norm_sqr(),
    })
}

/// `(R, T)` of a stack by the Airy / transfer-matrix method.
pub fn airy_stack_reflectance(stack: &Stack, wavelength_nm: f64) -> Result<(f64, f64)> {
    let resp = stack_response(stack, wavelength_nm)?;
    Ok((resp.reflectance, resp.transmittance))
}

/// `λ² / (2 Σ nᵢ dᵢ)` at the given center wavelength.
pub fn free_spectral_range(stack: &Stack, center_wavelength_nm: f64) -> Result<f64> {
    if stack.layers.is_empty() {
        return invalid("free spectral range of an empty stack is undefined");
    }
    if !(center_wavelength_nm.is_finite() && center_wavelength_nm > 0.0) {
        return invalid(format!("center wavelength {center_wavelength_nm} nm must be finite and > 0"));
    }
    let optical: f64 = stack.layers.iter().map(Layer::optical_thickness_nm).sum();
    Ok(center_wavelength_nm * center_wavelength_nm / (2.0 * optical))
}
