//! Classical and quantum dissipative standard map.
//!
//! The classical map in rescaled variables is
//!
//! ```text
//! p' = gamma p + k sin x
//! x' = x + p'
//! ```
//!
//! on the cylinder `x in [0, 2pi)`. Its quantum counterpart is a kicked
//! rotor with Lindblad amplitude damping toward `p = 0`.

pub mod classical;
pub mod eigen;
pub mod error;
pub mod husimi;
pub mod io;
pub mod orbits;
pub mod params;
pub mod presets;
pub mod quantum;
pub mod rng;
pub mod ulam;

pub use classical::{EnsembleConfig, MomentumDistribution, PhasePoint, ScanCell, ScanGrid};
pub use eigen::{arnoldi_top, ArnoldiConfig, LinearOperator, SpectrumResult};
pub use error::{Error, Result};
pub use husimi::{GridSpec, HusimiGrid, HusimiMode};
pub use num_complex::Complex64;
pub use orbits::{NewtonConfig, PeriodicOrbit};
pub use params::MapParams;
pub use presets::{preset, Preset, PresetKind};
pub use quantum::{
    DampingMethod, DensityMatrix, HilbertSpace, PeriodConfig, PeriodMap, Splitting, Stage,
};
pub use ulam::{TransferOperator, UlamGrid, UlamSampling};
