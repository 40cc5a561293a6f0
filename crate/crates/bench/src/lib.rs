//! Fixtures shared by the benchmarks in `benches/`.

use dsm_core::quantum::build_space;
use dsm_core::{DensityMatrix, MapParams, PeriodConfig, PeriodMap};

/// Period map at `gamma = 0.33` with the default splitting and basis margin.
pub fn period_map(k: f64, hbar_eff: f64) -> PeriodMap {
    let params = MapParams::new(k, 0.33, hbar_eff).expect("valid parameters");
    let space = build_space(&params, 1.5, dsm_core::quantum::DEFAULT_DIM_CAP).expect("space fits");
    PeriodMap::new(space, params, PeriodConfig::default()).expect("valid config")
}

/// A full-rank random state matching `map`.
pub fn random_state(map: &PeriodMap, seed: u64) -> DensityMatrix {
    DensityMatrix::random(map.space.dim, seed)
}
