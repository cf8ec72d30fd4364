//! Cross-polarized reflectance of photonic-crystal slab nanocavities: a
//! polarization-resolved transfer-matrix model, closed-form lineshapes, a
//! synthetic spectrum generator and a least-squares Q-factor extraction pipeline.

pub mod cavity;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod lineshape;
pub mod linalg;
pub mod optics;
pub mod par;
pub mod spectrum;

pub use error::{Error, Result};
pub use spectrum::Spectrum;
