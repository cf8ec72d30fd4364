//! Polarization-resolved (4×4) transfer-matrix model of a photonic-crystal slab
//! nanocavity suspended over a substrate, and its cross-polarized reflectivity.
//!
//! The basis is `(S_x+, S_x-, S_y+, S_y-)`: "+" travels downward into the
//! structure, "-" upward. Every matrix maps the amplitudes just above an
//! element to those just below it, so the system matrix for the slab
//! structure is
//!
//! ```text
//! T_s = T_23 · T_p(t2) · T_12 · T_p(t1/2) · T_c · T_p(t1/2) · T_01
//! ```
//!
//! with the top interface acting first. The resonant cavity sits on the slab
//! mid-plane and is the only element that mixes x and y.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::optics::material_index;
use crate::par;
use crate::spectrum::{linspace, validate_grid, Spectrum};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Slab effective index calibrated so the peak-reflectivity curve of the default
/// geometry (t1 = 200 nm, t2 = 1200 nm, n3 = 3.4, Q_cav = 1e4/1e4, Q_loss = 1e8)
/// bottoms out at 1370 nm. Reproduce with [`calibrate_slab_index`].
pub const CALIBRATED_N1_EFF: f64 = 2.6221;

/// Area-weighted permittivity estimate for a triangular air-hole lattice with
/// r = 0.3a in GaAs (ε = 11.56): air fill fraction (2π/√3)(r/a)².
pub fn effective_index_estimate(r_over_a: f64, slab_permittivity: f64) -> f64 {
    let fill = 2.0 * PI / 3f64.sqrt() * r_over_a * r_over_a;
    (fill + (1.0 - fill) * slab_permittivity).sqrt()
}

/// Vacuum wavelength (nm) to angular frequency (rad/s).
pub fn wavelength_to_omega(wavelength_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Angular frequency (rad/s) to vacuum wavelength (nm).
pub fn omega_to_wavelength(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega * 1e9
}

/// Amplitudes `(S_x+, S_x-, S_y+, S_y-)` at one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourPortField {
    pub s_x_plus: Complex64,
    pub s_x_minus: Complex64,
    pub s_y_plus: Complex64,
    pub s_y_minus: Complex64,
}

impl FourPortField {
    pub fn to_array(self) -> [Complex64; 4] {
        [self.s_x_plus, self.s_x_minus, self.s_y_plus, self.s_y_minus]
    }

    pub fn from_array(a: [Complex64; 4]) -> Self {
        Self {
            s_x_plus: a[0],
            s_x_minus: a[1],
            s_y_plus: a[2],
            s_y_minus: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// 4×4 complex transfer matrix in the `(S_x+, S_x-, S_y+, S_y-)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix4 {
    pub m: [[Complex64; 4]; 4],
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl TransferMatrix4 {
    pub fn zeros() -> Self {
        Self { m: [[ZERO; 4]; 4] }
    }

    pub fn identity() -> Self {
        let mut t = Self::zeros();
        (0..4).for_each(|i| t.m[i][i] = ONE);
        t
    }

    /// Block-diagonal matrix with the same 2×2 block for both polarizations.
    pub fn from_polarization_block(block: [[Complex64; 2]; 2]) -> Self {
        let mut t = Self::zeros();
        for i in 0..2 {
            for j in 0..2 {
                t.m[i][j] = block[i][j];
                t.m[i + 2][j + 2] = block[i][j];
            }
        }
        t
    }

    pub fn apply(&self, field: FourPortField) -> FourPortField {
        let v = field.to_array();
        let mut out = [ZERO; 4];
        for (i, row) in self.m.iter().enumerate() {
            out[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        FourPortField::from_array(out)
    }

    /// True if every x↔y mixing entry is exactly zero.
    pub fn is_block_diagonal(&self) -> bool {
        (0..2).all(|i| (2..4).all(|j| self.m[i][j] == ZERO && self.m[j][i] == ZERO))
    }

    pub fn max_abs_diff(&self, other: &TransferMatrix4) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        worst
    }
}

impl Mul for TransferMatrix4 {
    type Output = TransferMatrix4;

    fn mul(self, rhs: TransferMatrix4) -> TransferMatrix4 {
        let mut out = TransferMatrix4::zeros();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.m[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..4 {
                    out.m[i][j] += a * rhs.m[k][j];
                }
            }
        }
        out
    }
}

/// Resonance and quality factors of the cavity coupling plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityCoupling {
    resonance_wavelength_nm: f64,
    q_cav_x: f64,
    q_cav_y: f64,
    q_loss: f64,
}

impl CavityCoupling {
    /// `q_cav_x` / `q_cav_y` may be `+inf` to decouple a polarization.
    pub fn new(resonance_wavelength_nm: f64, q_cav_x: f64, q_cav_y: f64, q_loss: f64) -> Result<Self> {
        if !(resonance_wavelength_nm.is_finite() && resonance_wavelength_nm > 0.0) {
            return invalid(format!("resonance wavelength {resonance_wavelength_nm} nm must be > 0"));
        }
        for (name, q) in [("q_cav_x", q_cav_x), ("q_cav_y", q_cav_y), ("q_loss", q_loss)] {
            if !(q > 0.0) || q.is_nan() {
                return invalid(format!("{name} = {q} must be > 0"));
            }
        }
        Ok(Self {
            resonance_wavelength_nm,
            q_cav_x,
            q_cav_y,
            q_loss,
        })
    }

    pub fn resonance_wavelength_nm(&self) -> f64 {
        self.resonance_wavelength_nm
    }

    pub fn q_cav_x(&self) -> f64 {
        self.q_cav_x
    }

    pub fn q_cav_y(&self) -> f64 {
        self.q_cav_y
    }

    pub fn q_loss(&self) -> f64 {
        self.q_loss
    }

    pub fn omega0(&self) -> f64 {
        wavelength_to_omega(self.resonance_wavelength_nm)
    }

    pub fn with_resonance(&self, resonance_wavelength_nm: f64) -> Result<Self> {
        Self::new(resonance_wavelength_nm, self.q_cav_x, self.q_cav_y, self.q_loss)
    }

    /// `1/(1/Q_x + 1/Q_y + 1/Q_loss)`.
    pub fn q_total(&self) -> f64 {
        1.0 / (1.0 / self.q_cav_x + 1.0 / self.q_cav_y + 1.0 / self.q_loss)
    }

    pub fn kappa_x(&self) -> f64 {
        kappa_unchecked(self.q_cav_x, self.omega0())
    }

    pub fn kappa_y(&self) -> f64 {
        kappa_unchecked(self.q_cav_y, self.omega0())
    }
}

/// Layer indices and thicknesses of the slab structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabGeometry {
    /// Upper cladding and air gap.
    pub n0: f64,
    /// Effective index of the patterned slab.
    pub n1_eff: f64,
    /// Slab thickness, nm.
    pub t1: f64,
    /// Gap left by the removed sacrificial layer, nm.
    pub t2: f64,
    /// Substrate.
    pub n3: f64,
}

impl Default for SlabGeometry {
    fn default() -> Self {
        Self {
            n0: 1.0,
            n1_eff: CALIBRATED_N1_EFF,
            t1: 200.0,
            t2: 1200.0,
            n3: 3.4,
        }
    }
}

impl SlabGeometry {
    /// A single homogeneous medium of index `n`, keeping the default thicknesses.
    pub fn uniform(n: f64) -> Self {
        Self {
            n0: n,
            n1_eff: n,
            n3: n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n0", self.n0), ("n1_eff", self.n1_eff), ("n3", self.n3), ("t1", self.t1), ("t2", self.t2)] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("geometry.{name} = {v} must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// How the resonant prefactor of the cavity matrix is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CavityForm {
    /// `T_c = I + K / (i(ϖ-ϖ0) + ϖ0/(2Q_loss))`; reduces to the identity without coupling.
    #[default]
    Standard,
    /// Prefactor multiplies the whole matrix, unit diagonal included.
    Literal,
}

/// Propagation through `d` nm of index `n`: `diag(e^{-iβd}, e^{+iβd}, e^{-iβd}, e^{+iβd})`,
/// `β = n ω / c₀` (see [`material_index`] for complex `n`).
pub fn propagation_matrix(n: Complex64, d_nm: f64, wavelength_nm: f64) -> Result<TransferMatrix4> {
    if !(d_nm.is_finite() && d_nm >= 0.0) {
        return invalid(format!("propagation length {d_nm} nm must be finite and >= 0"));
    }
    if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
        return invalid(format!("wavelength {wavelength_nm} nm must be > 0"));
    }
    Ok(propagation_unchecked(n, d_nm, wavelength_nm))
}

fn propagation_unchecked(n: Complex64, d_nm: f64, wavelength_nm: f64) -> TransferMatrix4 {
    let phase = material_index(n) * (2.0 * PI * d_nm / wavelength_nm);
    let fwd = (-Complex64::i() * phase).exp();
    let bwd = (Complex64::i() * phase).exp();
    let mut t = TransferMatrix4::zeros();
    t.m[0][0] = fwd;
    t.m[1][1] = bwd;
    t.m[2][2] = fwd;
    t.m[3][3] = bwd;
    t
}

/// Interface from `n_j` (above) into `n_j1` (below); no polarization mixing.
pub fn interface_matrix(n_j: Complex64, n_j1: Complex64) -> Result<TransferMatrix4> {
    for (name, n) in [("n_j", n_j), ("n_j1", n_j1)] {
        if !(n.re.is_finite() && n.re > 0.0 && n.im.is_finite()) {
            return invalid(format!("{name} = {n} must have a positive real part"));
        }
    }
    Ok(interface_unchecked(n_j, n_j1))
}

fn interface_unchecked(n_j: Complex64, n_j1: Complex64) -> TransferMatrix4 {
    let (n_j, n_j1) = (material_index(n_j), material_index(n_j1));
    let s = 0.5 / n_j1;
    let p = (n_j1 + n_j) * s;
    let q = (n_j1 - n_j) * s;
    TransferMatrix4::from_polarization_block([[p, q], [q, p]])
}

/// `κ = sqrt(ϖ0 / (2 Q_cav))`. An infinite `q_cav` gives κ = 0.
pub fn coupling_constant(q_cav: f64, omega0: f64) -> Result<f64> {
    if !(q_cav > 0.0) || q_cav.is_nan() {
        return invalid(format!("q_cav = {q_cav} must be > 0"));
    }
    if !(omega0.is_finite() && omega0 > 0.0) {
        return invalid(format!("omega0 = {omega0} must be finite and > 0"));
    }
    Ok(kappa_unchecked(q_cav, omega0))
}

fn kappa_unchecked(q_cav: f64, omega0: f64) -> f64 {
    (omega0 / (2.0 * q_cav)).sqrt()
}

/// Cavity coupling-plane matrix at angular frequency `omega`.
pub fn cavity_matrix(coupling: &CavityCoupling, omega: f64) -> TransferMatrix4 {
    cavity_matrix_with_form(coupling, omega, CavityForm::Standard)
}

pub fn cavity_matrix_with_form(coupling: &CavityCoupling, omega: f64, form: CavityForm) -> TransferMatrix4 {
    let omega0 = coupling.omega0();
    let kx = coupling.kappa_x();
    let ky = coupling.kappa_y();
    let (xx, yy, xy) = (kx * kx, ky * ky, kx * ky);
    // Rows: x+ loses to the mode, x- gains from it; same for y.
    let k = [
        [-xx, -xx, -xy, -xy],
        [xx, xx, xy, xy],
        [-xy, -xy, -yy, -yy],
        [xy, xy, yy, yy],
    ];
    let prefactor = 1.0 / Complex64::new(omega0 / (2.0 * coupling.q_loss), omega - omega0);
    let mut t = TransferMatrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            // Exact zeros survive so an uncoupled polarization stays unmixed.
            if k[i][j] != 0.0 {
                t.m[i][j] = prefactor * k[i][j];
            }
        }
        t.m[i][i] += match form {
            CavityForm::Standard => ONE,
            CavityForm::Literal => prefactor,
        };
    }
    t
}

/// System matrix of the slab structure at vacuum wavelength `wavelength_nm`.
pub fn system_matrix(geometry: &SlabGeometry, coupling: &CavityCoupling, wavelength_nm: f64) -> TransferMatrix4 {
    system_matrix_with_form(geometry, coupling, wavelength_nm, CavityForm::Standard)
}

pub fn system_matrix_with_form(
    geometry: &SlabGeometry,
    coupling: &CavityCoupling,
    wavelength_nm: f64,
    form: CavityForm,
) -> TransferMatrix4 {
    let n0 = Complex64::new(geometry.n0, 0.0);
    let n1 = Complex64::new(geometry.n1_eff, 0.0);
    let n3 = Complex64::new(geometry.n3, 0.0);
    let half = propagation_unchecked(n1, geometry.t1 / 2.0, wavelength_nm);
    let omega = wavelength_to_omega(wavelength_nm);
    interface_unchecked(n0, n3)
        * propagation_unchecked(n0, geometry.t2, wavelength_nm)
        * interface_unchecked(n1, n0)
        * half
        * cavity_matrix_with_form(coupling, omega, form)
        * half
        * interface_unchecked(n0, n1)
}

/// Reflected and transmitted amplitudes for unit x-polarized input from the top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringAmplitudes {
    pub r_xx: Complex64,
    pub r_yx: Complex64,
    pub t_xx: Complex64,
    pub t_yx: Complex64,
}

impl ScatteringAmplitudes {
    /// `|S_y-0 / S_x+0|²`.
    pub fn cross_reflectance(&self) -> f64 {
        self.r_yx.norm_sqr()
    }

    pub fn co_reflectance(&self) -> f64 {
        self.r_xx.norm_sqr()
    }

    /// Reflected plus index-weighted transmitted flux.
    pub fn total_flux(&self, n_top: f64, n_bottom: f64) -> f64 {
        self.r_xx.norm_sqr()
            + self.r_yx.norm_sqr()
            + n_bottom / n_top * (self.t_xx.norm_sqr() + self.t_yx.norm_sqr())
    }
}

/// Solve `T_s · (1, r_xx, 0, r_yx) = (t_xx, 0, t_yx, 0)` for all four unknowns at once.
///
/// Near a high-Q resonance the entries of `T_s` are large and nearly cancel, so
/// back-substituting the reflected amplitudes into the transmitted rows loses
/// precision; the joint pivoted solve does not.
pub fn solve_scattering(t_s: &TransferMatrix4) -> Result<ScatteringAmplitudes> {
    let m = &t_s.m;
    // Unknowns (r_xx, r_yx, t_xx, t_yx).
    let mut a = [[ZERO; 4]; 4];
    let mut b = [ZERO; 4];
    for row in 0..4 {
        a[row][0] = m[row][1];
        a[row][1] = m[row][3];
        b[row] = -m[row][0];
    }
    a[0][2] = -ONE;
    a[2][3] = -ONE;
    let condition = linalg::condition1(&a);
    if !(condition < 1e15) {
        return Err(Error::SingularSystem { condition });
    }
    let x = linalg::solve(a, b).ok_or(Error::SingularSystem { condition })?;
    // Without mixing terms the y outputs are structurally zero.
    let (r_yx, t_yx) = if t_s.is_block_diagonal() { (ZERO, ZERO) } else { (x[1], x[3]) };
    Ok(ScatteringAmplitudes {
        r_xx: x[0],
        r_yx,
        t_xx: x[2],
        t_yx,
    })
}

pub fn scattering_at(geometry: &SlabGeometry, coupling: &CavityCoupling, wavelength_nm: f64) -> Result<ScatteringAmplitudes> {
    solve_scattering(&system_matrix(geometry, coupling, wavelength_nm)).map_err(|e| at_wavelength(wavelength_nm, e))
}

fn at_wavelength(wavelength_nm: f64, source: Error) -> Error {
    Error::AtWavelength {
        wavelength_nm,
        source: Box::new(source),
    }
}

fn cross_reflectance_at(geometry: &SlabGeometry, coupling: &CavityCoupling, wavelength_nm: f64, form: CavityForm) -> Result<f64> {
    solve_scattering(&system_matrix_with_form(geometry, coupling, wavelength_nm, form))
        .map(|s| s.cross_reflectance())
        .map_err(|e| at_wavelength(wavelength_nm, e))
}

/// Cross-polarized reflectance sampled on `grid`.
pub fn cross_pol_spectrum(geometry: &SlabGeometry, coupling: &CavityCoupling, grid: &[f64]) -> Result<Spectrum> {
    cross_pol_spectrum_with_form(geometry, coupling, grid, CavityForm::Standard)
}

pub fn cross_pol_spectrum_with_form(
    geometry: &SlabGeometry,
    coupling: &CavityCoupling,
    grid: &[f64],
    form: CavityForm,
) -> Result<Spectrum> {
    geometry.validate()?;
    validate_grid(grid)?;
    let values = par::try_map(grid, |&w| cross_reflectance_at(geometry, coupling, w, form))?;
    Spectrum::new(grid.to_vec(), values)
}

/// Search-window half-width in linewidths around the resonance.
const SEARCH_HALF_WIDTH_LINEWIDTHS: f64 = 20.0;
const COARSE_POINTS: usize = 2001;
const GOLDEN_REL_TOL: f64 = 1e-10;

/// Maximum of `f` on `[lo, hi]`: coarse scan then golden-section on the bracketing cell.
fn maximize<F>(f: F, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let grid = linspace(lo, hi, points);
    let values = grid.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(points - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > GOLDEN_REL_TOL * a.abs().max(b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x)?;
    let (x, fx) = [(x, fx), (grid[best], values[best]), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |acc, p| if p.1 > acc.1 { p } else { acc });
    Ok((x, fx))
}

/// Location and value of the cross-polarized reflectance maximum near the resonance.
pub fn locate_peak(geometry: &SlabGeometry, coupling: &CavityCoupling) -> Result<(f64, f64)> {
    geometry.validate()?;
    let center = coupling.resonance_wavelength_nm();
    let half = SEARCH_HALF_WIDTH_LINEWIDTHS * center / coupling.q_total();
    maximize(
        |w| cross_reflectance_at(geometry, coupling, w, CavityForm::Standard),
        center - half,
        center + half,
        COARSE_POINTS,
    )
}

/// Maximum cross-polarized reflectivity with the cavity resonance placed at `resonance_nm`.
pub fn peak_reflectivity(geometry: &SlabGeometry, template: &CavityCoupling, resonance_nm: f64) -> Result<f64> {
    let coupling = template.with_resonance(resonance_nm)?;
    locate_peak(geometry, &coupling).map(|(_, r)| r)
}

/// Peak reflectivity at every resonance wavelength of `resonances_nm`.
pub fn sweep_peak_reflectivity(
    geometry: &SlabGeometry,
    template: &CavityCoupling,
    resonances_nm: &[f64],
) -> Result<Vec<(f64, f64)>> {
    validate_grid(resonances_nm)?;
    par::try_map(resonances_nm, |&w| peak_reflectivity(geometry, template, w).map(|r| (w, r)))
}

/// Default resonance grid for peak-reflectivity sweeps: 1280..=1620 nm in 1 nm steps.
pub fn default_sweep_grid() -> Vec<f64> {
    (0..=340).map(|i| 1280.0 + i as f64).collect()
}

/// Total Q of the modelled resonance, `λ_peak / FWHM`, with the FWHM measured at
/// half of the background-subtracted peak height.
pub fn model_total_q(geometry: &SlabGeometry, coupling: &CavityCoupling) -> Result<f64> {
    let (peak_nm, peak) = locate_peak(geometry, coupling)?;
    let center = coupling.resonance_wavelength_nm();
    let half = SEARCH_HALF_WIDTH_LINEWIDTHS * center / coupling.q_total();
    let f = |w: f64| cross_reflectance_at(geometry, coupling, w, CavityForm::Standard);
    let (lo, hi) = (center - half, center + half);
    let background = f(lo)?.min(f(hi)?);
    if !(peak >= 10.0 * background) || peak <= 0.0 {
        return Err(Error::PeakNotFound { peak, background });
    }
    let level = background + 0.5 * (peak - background);
    let left = bisect_crossing(&f, lo, peak_nm, level)?;
    let right = bisect_crossing(&f, peak_nm, hi, level)?;
    Ok(peak_nm / (right - left))
}

/// Crossing of `f = level` inside `[a, b]`, assuming one sign change.
fn bisect_crossing<F>(f: &F, mut a: f64, mut b: f64, level: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut fa = f(a)? - level;
    let fb = f(b)? - level;
    if fa.signum() == fb.signum() {
        return invalid(format!("no half-maximum crossing in [{a}, {b}]"));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a) <= 1e-14 * m {
            break;
        }
        let fm = f(m)? - level;
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Wavelength of the sampled minimum of a sweep curve.
pub fn curve_minimum(curve: &[(f64, f64)]) -> Option<(f64, f64)> {
    curve.iter().copied().fold(None, |acc, p| match acc {
        Some(best) if best.1 <= p.1 => Some(best),
        _ => Some(p),
    })
}

/// Number of strict local minima in the interior of a sampled curve.
pub fn interior_minima(curve: &[(f64, f64)]) -> usize {
    curve.windows(3).filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1).count()
}

/// Scalar search for the slab index that places the peak-reflectivity minimum at
/// `target_nm`. The minimum moves monotonically to longer wavelength as the slab's
/// optical thickness grows, so bisection on `n1_eff ∈ [lo, hi]` suffices.
pub fn calibrate_slab_index(
    geometry: &SlabGeometry,
    template: &CavityCoupling,
    target_nm: f64,
    index_range: (f64, f64),
) -> Result<f64> {
    let min_at = |n1: f64| -> Result<f64> {
        let g = SlabGeometry { n1_eff: n1, ..*geometry };
        refined_sweep_minimum(&g, template, 1280.0, 1620.0)
    };
    let (mut lo, mut hi) = index_range;
    let (f_lo, f_hi) = (min_at(lo)? - target_nm, min_at(hi)? - target_nm);
    if f_lo.signum() == f_hi.signum() {
        return invalid(format!("target {target_nm} nm not bracketed by n1_eff in [{lo}, {hi}]"));
    }
    while hi - lo > 1e-5 {
        let mid = 0.5 * (lo + hi);
        if min_at(mid)? < target_nm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Location of the peak-reflectivity minimum on `[lo, hi]`, refined by golden section
/// around the best point of a 5 nm scan.
pub fn refined_sweep_minimum(geometry: &SlabGeometry, template: &CavityCoupling, lo: f64, hi: f64) -> Result<f64> {
    let n = ((hi - lo) / 5.0).round() as usize + 1;
    let grid = linspace(lo, hi, n);
    let curve = sweep_peak_reflectivity(geometry, template, &grid)?;
    let (w, _) = curve_minimum(&curve).expect("non-empty sweep");
    let (a, b) = ((w - 5.0).max(lo), (w + 5.0).min(hi));
    let (x, _) = maximize(|r| peak_reflectivity(geometry, template, r).map(|v| -v), a, b, 11)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn reference_coupling() -> CavityCoupling {
        CavityCoupling::new(1310.0, 1e4, 1e4, 1e8).unwrap()
    }

    #[test]
    fn propagation_zero_and_half_wave() {
        let id = propagation_matrix(c(1.0), 0.0, 1300.0).unwrap();
        assert_eq!(id, TransferMatrix4::identity());
        let half = propagation_matrix(c(1.0), 650.0, 1300.0).unwrap();
        assert!(half.max_abs_diff(&TransferMatrix4::from_polarization_block([[c(-1.0), ZERO], [ZERO, c(-1.0)]])) < 1e-12);
        assert!(propagation_matrix(c(1.0), -1.0, 1300.0).is_err());
        assert!(propagation_matrix(c(1.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn propagation_composes_additively() {
        let n = Complex64::new(2.6, 0.01);
        let a = propagation_matrix(n, 123.0, 1337.0).unwrap() * propagation_matrix(n, 77.5, 1337.0).unwrap();
        let b = propagation_matrix(n, 200.5, 1337.0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn interface_identity_and_inverse() {
        assert!(interface_matrix(c(2.0), c(2.0)).unwrap().max_abs_diff(&TransferMatrix4::identity()) < 1e-15);
        let there = interface_matrix(c(1.0), c(3.4)).unwrap();
        let back = interface_matrix(c(3.4), c(1.0)).unwrap();
        assert!((there * back).max_abs_diff(&TransferMatrix4::identity()) < 1e-12);
        assert!(there.is_block_diagonal());
        assert!(interface_matrix(c(0.0), c(1.0)).is_err());
    }

    #[test]
    fn single_interface_solve_reproduces_fresnel() {
        let t = interface_matrix(c(1.0), c(3.4)).unwrap();
        let s = solve_scattering(&t).unwrap();
        assert_abs_diff_eq!(s.co_reflectance(), (2.4f64 / 4.4).powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(s.co_reflectance(), 0.2975, epsilon = 1e-4);
        assert_eq!(s.r_yx, ZERO);
    }

    #[test]
    fn coupling_constant_values() {
        let w0 = wavelength_to_omega(1310.0);
        assert_abs_diff_eq!(w0, 1.438e15, epsilon = 1e12);
        let k = coupling_constant(1e4, w0).unwrap();
        // Independent evaluation: sqrt(2π c / λ / (2Q)).
        let oracle = (2.0 * PI * 299_792_458.0 / 1.31e-6 / 2e4).sqrt();
        assert_abs_diff_eq!(k, oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(k, 2.68e5, epsilon = 0.01e5);
        let ratio = coupling_constant(1e4, w0).unwrap().powi(2) / coupling_constant(4e4, w0).unwrap().powi(2);
        assert_abs_diff_eq!(ratio, 4.0, epsilon = 1e-12);
        assert_eq!(coupling_constant(f64::INFINITY, w0).unwrap(), 0.0);
        assert!(coupling_constant(0.0, w0).is_err());
        assert!(coupling_constant(1e4, -1.0).is_err());
    }

    #[test]
    fn cavity_matrix_limits() {
        let none = CavityCoupling::new(1310.0, f64::INFINITY, f64::INFINITY, 1e8).unwrap();
        assert_eq!(cavity_matrix(&none, wavelength_to_omega(1310.0)), TransferMatrix4::identity());

        let cp = reference_coupling();
        let w0 = cp.omega0();
        let linewidth = w0 / cp.q_total();
        let far = cavity_matrix(&cp, w0 + 1e6 * linewidth);
        assert!(far.max_abs_diff(&TransferMatrix4::identity()) < 1e-6);

        let x_only = CavityCoupling::new(1310.0, 1e4, f64::INFINITY, 1e8).unwrap();
        let t = cavity_matrix(&x_only, w0);
        assert!(t.is_block_diagonal());
        for i in 2..4 {
            for j in 2..4 {
                assert_eq!(t.m[i][j], if i == j { ONE } else { ZERO });
            }
        }
    }

    #[test]
    fn literal_form_scales_diagonal() {
        let cp = reference_coupling();
        let w = cp.omega0() * (1.0 + 1e-5);
        let std = cavity_matrix_with_form(&cp, w, CavityForm::Standard);
        let lit = cavity_matrix_with_form(&cp, w, CavityForm::Literal);
        assert_eq!(std.m[0][1], lit.m[0][1]);
        assert_ne!(std.m[0][0], lit.m[0][0]);
    }

    #[test]
    fn homogeneous_system_is_pure_phase() {
        let g = SlabGeometry::uniform(1.0);
        let cp = CavityCoupling::new(1310.0, f64::INFINITY, f64::INFINITY, 1e8).unwrap();
        let t = system_matrix(&g, &cp, 1300.0);
        assert!(t.is_block_diagonal());
        for i in 0..4 {
            assert_abs_diff_eq!(t.m[i][i].norm(), 1.0, epsilon = 1e-12);
            for j in 0..4 {
                if i != j {
                    assert_abs_diff_eq!(t.m[i][j].norm(), 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn uncoupled_cross_reflection_is_exactly_zero() {
        let cp = CavityCoupling::new(1310.0, 1e4, f64::INFINITY, 1e8).unwrap();
        for w in [1300.0, 1310.0, 1310.05] {
            let s = scattering_at(&SlabGeometry::default(), &cp, w).unwrap();
            assert_eq!(s.r_yx, ZERO);
        }
    }

    #[test]
    fn uniform_medium_quarter_reflectivity() {
        let cp = CavityCoupling::new(1310.0, 1e4, 1e4, 1e12).unwrap();
        let s = scattering_at(&SlabGeometry::uniform(1.0), &cp, 1310.0).unwrap();
        assert_abs_diff_eq!(s.cross_reflectance(), 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(s.total_flux(1.0, 1.0), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn uniform_medium_unbalanced_closed_form() {
        let cp = CavityCoupling::new(1310.0, 1e4, 3e4, 1e12).unwrap();
        let (kx, ky) = (cp.kappa_x(), cp.kappa_y());
        let oracle = (kx * ky).powi(2) / (kx * kx + ky * ky).powi(2);
        let s = scattering_at(&SlabGeometry::uniform(1.0), &cp, 1310.0).unwrap();
        assert_abs_diff_eq!(s.cross_reflectance(), oracle, epsilon = 1e-6);
        assert!((oracle - 0.25).abs() > 0.05);
    }

    #[test]
    fn singular_system_is_reported() {
        let err = solve_scattering(&TransferMatrix4::zeros()).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
    }

    #[test]
    fn spectrum_far_detuned_is_dark() {
        let cp = reference_coupling();
        let lw = cp.resonance_wavelength_nm() / cp.q_total();
        // Lorentzian tails: 1e-6 of a ~0.5 peak needs ~700 linewidths of detuning.
        let grid = linspace(1310.0 + 1000.0 * lw, 1310.0 + 3000.0 * lw, 64);
        let s = cross_pol_spectrum(&SlabGeometry::default(), &cp, &grid).unwrap();
        assert!(s.reflectance().iter().all(|&r| r < 1e-6));
        assert!(cross_pol_spectrum(&SlabGeometry::default(), &cp, &[1300.0, 1299.0]).is_err());
    }

    #[test]
    fn layered_peak_differs_from_uniform() {
        let (_, peak) = locate_peak(&SlabGeometry::default(), &reference_coupling()).unwrap();
        assert!((peak - 0.25).abs() > 1e-3, "peak {peak}");
    }

    #[test]
    fn total_q_decay_rate_sum() {
        let g = SlabGeometry::uniform(1.0);
        let q = model_total_q(&g, &CavityCoupling::new(1310.0, 1e4, 1e4, 1e8).unwrap()).unwrap();
        assert!((q / 5000.0 - 1.0).abs() < 0.01, "Q = {q}");
        let q = model_total_q(&g, &CavityCoupling::new(1310.0, 1e4, 1e4, 2e4).unwrap()).unwrap();
        assert!((q / 4000.0 - 1.0).abs() < 0.01, "Q = {q}");
    }

    #[test]
    fn peak_reflectivity_decoupled_input() {
        let t = CavityCoupling::new(1310.0, f64::INFINITY, 1e4, 1e8).unwrap();
        assert_eq!(peak_reflectivity(&SlabGeometry::default(), &t, 1400.0).unwrap(), 0.0);
    }

    #[test]
    fn effective_index_starting_point() {
        assert_abs_diff_eq!(effective_index_estimate(0.3, 11.56), 2.85, epsilon = 0.01);
    }
}
