//! Floquet spectral toolkit for the periodic 3x3 Manakov operator
//! `iJ d/dx + V` on the unit circle.

pub mod error;
pub mod floquet;
pub mod linalg;
pub mod magnus;
pub mod monodromy;
pub mod potential;
pub mod quasimomentum;
pub mod quad;
pub mod roots;
pub mod spectra;
pub mod zs;

pub use error::{Error, Result};
pub use linalg::C64;
pub use potential::PeriodicPotential;
