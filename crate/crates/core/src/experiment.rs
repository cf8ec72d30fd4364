//! Published lattice-design data: the lattice-constant → resonance line, the
//! Q_theo ranges per end-hole shift, and the relative slab thickness. Joined
//! with the cavity model to emit per-lattice sweep tables.

use std::fmt;
use std::str::FromStr;

use crate::cavity::{peak_reflectivity, CavityCoupling, SlabGeometry};
use crate::error::{invalid, Error, Result};
use crate::par;

/// Physical slab thickness, nm. Constant across all lattice designs.
pub const SLAB_THICKNESS_NM: f64 = 200.0;
/// Hole radius as a fraction of the lattice constant.
pub const RADIUS_OVER_A: f64 = 0.3;

/// Lattice constants (nm) of the reflectance-measured resonances, and the peaks (nm).
pub const MEASURED_LATTICE_NM: [f64; 5] = [350.0, 360.0, 370.0, 380.0, 390.0];
pub const MEASURED_RESONANCE_NM: [f64; 5] = [1274.0, 1300.0, 1324.0, 1351.0, 1374.0];

const TABULATED_A_MIN: f64 = 350.0;
const TABULATED_A_MAX: f64 = 490.0;
const REGRESSION_A_MIN: f64 = 340.0;
const REGRESSION_A_MAX: f64 = 500.0;

/// Outward shift of the two L3 end holes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HoleShift {
    None,
    /// 0.1·a
    Tenth,
    /// 0.2·a
    Fifth,
}

impl HoleShift {
    pub const ALL: [HoleShift; 3] = [HoleShift::None, HoleShift::Tenth, HoleShift::Fifth];

    /// Shift as a fraction of the lattice constant.
    pub fn fraction(self) -> f64 {
        match self {
            HoleShift::None => 0.0,
            HoleShift::Tenth => 0.1,
            HoleShift::Fifth => 0.2,
        }
    }
}

impl fmt::Display for HoleShift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HoleShift::None => "none",
            HoleShift::Tenth => "0.1a",
            HoleShift::Fifth => "0.2a",
        })
    }
}

impl FromStr for HoleShift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "0" | "0a" | "0.0a" => Ok(HoleShift::None),
            "0.1a" | "0.1" => Ok(HoleShift::Tenth),
            "0.2a" | "0.2" => Ok(HoleShift::Fifth),
            other => invalid(format!("unknown hole shift '{other}' (expected none, 0.1a or 0.2a)")),
        }
    }
}

/// One L3 cavity design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeDesign {
    pub a_nm: f64,
    pub shift: HoleShift,
}

impl LatticeDesign {
    /// Design on the fabricated grid: `a ∈ [350, 490]` in 10 nm steps.
    pub fn tabulated(a_nm: f64, shift: HoleShift) -> Result<Self> {
        let steps = (a_nm - TABULATED_A_MIN) / 10.0;
        if !(TABULATED_A_MIN..=TABULATED_A_MAX).contains(&a_nm) || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::OutOfRange(format!(
                "lattice constant {a_nm} nm is not on the 350..=490 nm, 10 nm grid"
            )));
        }
        Ok(Self { a_nm, shift })
    }

    pub fn radius_nm(&self) -> f64 {
        RADIUS_OVER_A * self.a_nm
    }

    pub fn slab_thickness_nm(&self) -> f64 {
        SLAB_THICKNESS_NM
    }
}

/// Q_theo endpoints `(Q at a = 350 nm, Q at a = 490 nm)` per shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTheoTable {
    pub none: (f64, f64),
    pub tenth: (f64, f64),
    pub fifth: (f64, f64),
}

impl Default for QTheoTable {
    fn default() -> Self {
        Self {
            none: (5000.0, 3400.0),
            tenth: (15_400.0, 9400.0),
            fifth: (78_000.0, 43_000.0),
        }
    }
}

impl QTheoTable {
    pub fn endpoints(&self, shift: HoleShift) -> (f64, f64) {
        match shift {
            HoleShift::None => self.none,
            HoleShift::Tenth => self.tenth,
            HoleShift::Fifth => self.fifth,
        }
    }

    /// Linear interpolation in `a` between the tabulated endpoints.
    pub fn q_theo(&self, a_nm: f64, shift: HoleShift) -> Result<f64> {
        if !(TABULATED_A_MIN..=TABULATED_A_MAX).contains(&a_nm) {
            return Err(Error::OutOfRange(format!("lattice constant {a_nm} nm outside [350, 490] nm")));
        }
        let (q_hi, q_lo) = self.endpoints(shift);
        let f = (a_nm - TABULATED_A_MIN) / (TABULATED_A_MAX - TABULATED_A_MIN);
        Ok(q_hi + f * (q_lo - q_hi))
    }
}

/// `Q_theo(a, shift)` from the default table.
pub fn q_theo(a_nm: f64, shift: HoleShift) -> Result<f64> {
    QTheoTable::default().q_theo(a_nm, shift)
}

/// Least-squares line `λ = slope·a + intercept` through the measured resonances.
pub fn resonance_regression() -> (f64, f64) {
    let n = MEASURED_LATTICE_NM.len() as f64;
    let mean_a = MEASURED_LATTICE_NM.iter().sum::<f64>() / n;
    let mean_l = MEASURED_RESONANCE_NM.iter().sum::<f64>() / n;
    let (sxy, sxx) = MEASURED_LATTICE_NM
        .iter()
        .zip(MEASURED_RESONANCE_NM.iter())
        .fold((0.0, 0.0), |(sxy, sxx), (a, l)| {
            (sxy + (a - mean_a) * (l - mean_l), sxx + (a - mean_a).powi(2))
        });
    let slope = sxy / sxx;
    (slope, mean_l - slope * mean_a)
}

/// Resonant wavelength (nm) of a no-shift design with lattice constant `a_nm`.
pub fn resonant_wavelength(a_nm: f64) -> Result<f64> {
    if !(REGRESSION_A_MIN..=REGRESSION_A_MAX).contains(&a_nm) {
        return Err(Error::OutOfRange(format!("lattice constant {a_nm} nm outside [340, 500] nm")));
    }
    let (slope, intercept) = resonance_regression();
    Ok(slope * a_nm + intercept)
}

/// `t* = t / a`.
pub fn relative_thickness(a_nm: f64) -> Result<f64> {
    if !(a_nm.is_finite() && a_nm > 0.0) {
        return invalid(format!("lattice constant {a_nm} nm must be > 0"));
    }
    Ok(SLAB_THICKNESS_NM / a_nm)
}

/// How Q_theo is split into the coupling-plane quality factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingPolicy {
    /// `q_cav_x = x_factor · Q_theo`.
    pub x_factor: f64,
    /// `q_cav_y = y_factor · Q_theo`.
    pub y_factor: f64,
    pub q_loss: f64,
}

impl Default for CouplingPolicy {
    /// Both vertical channels at `2·Q_theo`, so the radiative total equals Q_theo.
    fn default() -> Self {
        Self {
            x_factor: 2.0,
            y_factor: 2.0,
            q_loss: 1e8,
        }
    }
}

impl CouplingPolicy {
    pub fn coupling(&self, resonance_nm: f64, q_theo: f64) -> Result<CavityCoupling> {
        CavityCoupling::new(resonance_nm, self.x_factor * q_theo, self.y_factor * q_theo, self.q_loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub a_nm: f64,
    pub resonance_nm: f64,
    pub relative_thickness: f64,
    pub q_theo: f64,
    pub peak_reflectivity: f64,
}

/// One row per lattice constant: resonance, t*, Q_theo and modelled peak reflectivity.
pub fn build_sweep_dataset(
    shift: HoleShift,
    a_grid: &[f64],
    geometry: &SlabGeometry,
    policy: &CouplingPolicy,
) -> Result<Vec<SweepRow>> {
    if a_grid.is_empty() {
        return invalid("empty lattice-constant grid");
    }
    par::try_map(a_grid, |&a| {
        let resonance_nm = resonant_wavelength(a)?;
        let q = q_theo(a, shift)?;
        let coupling = policy.coupling(resonance_nm, q)?;
        Ok(SweepRow {
            a_nm: a,
            resonance_nm,
            relative_thickness: relative_thickness(a)?,
            q_theo: q,
            peak_reflectivity: peak_reflectivity(geometry, &coupling, resonance_nm)?,
        })
    })
}

/// The fabricated lattice grid, 350..=490 nm.
pub fn fabricated_lattice_grid() -> Vec<f64> {
    (0..=14).map(|i| 350.0 + 10.0 * i as f64).collect()
}
