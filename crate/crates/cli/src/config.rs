//! Run configuration: defaults, then a preset, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use dsm_core::classical::EnsembleConfig;
use dsm_core::orbits::NewtonConfig;
use dsm_core::presets::{self, PresetKind};
use dsm_core::{ArnoldiConfig, GridSpec, MapParams, PeriodConfig, UlamSampling};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub params: MapParams,
    /// Master seed, copied into every seeded section when set from the
    /// command line.
    pub seed: u64,
    pub scan: ScanConfig,
    pub bifurcation: BifurcationConfig,
    pub orbits: OrbitsConfig,
    pub ulam: UlamConfig,
    pub quantum: QuantumConfig,
    pub husimi: HusimiConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub k_range: (f64, f64),
    pub gamma_range: (f64, f64),
    /// `(n_k, n_gamma)`
    pub resolution: (usize, usize),
    pub ensemble: EnsembleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationConfig {
    pub k_range: (f64, f64),
    pub n_k: usize,
    pub ensemble: EnsembleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitsConfig {
    /// `(q, w)` pairs to search.
    pub pairs: Vec<(usize, i64)>,
    pub grid_n: usize,
    pub newton: NewtonConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UlamConfig {
    /// Cells per axis.
    pub cells: usize,
    pub p_pad: f64,
    pub sampling: UlamSampling,
    pub arnoldi: ArnoldiConfig,
    pub write_matrix: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumConfig {
    pub margin: f64,
    pub dim_cap: usize,
    pub period: PeriodConfig,
    pub arnoldi: ArnoldiConfig,
    /// Leading eigenoperators written as DMRX files.
    pub save_eigenoperators: usize,
    /// Also compute the Ulam spectrum with the `ulam` section.
    pub with_ulam: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HusimiConfig {
    pub grid: GridSpec,
    /// DMRX file to render; when unset the states are computed from `quantum`.
    pub input: Option<PathBuf>,
    /// Orbit CSV for the overlay and scar report; when unset the `orbits`
    /// section is searched.
    pub orbits_csv: Option<PathBuf>,
    /// Scar radius; `3 sqrt(hbar_eff)` when unset.
    pub radius: Option<f64>,
    /// States rendered when computing: the invariant plus `n_states - 1`
    /// leading eigenstates.
    pub n_states: usize,
    pub write_csv: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            k_range: (0.0, 8.0),
            gamma_range: (0.0, 0.98),
            resolution: (20, 10),
            ensemble: EnsembleConfig {
                ensemble_size: 1000,
                steps: 1000,
                ..Default::default()
            },
        }
    }
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        Self {
            k_range: (4.0, 6.0),
            n_k: 50,
            ensemble: EnsembleConfig {
                ensemble_size: 1000,
                steps: 1000,
                ..Default::default()
            },
        }
    }
}

impl Default for OrbitsConfig {
    fn default() -> Self {
        Self {
            pairs: vec![(1, 0)],
            grid_n: 40,
            newton: NewtonConfig::default(),
        }
    }
}

impl Default for UlamConfig {
    fn default() -> Self {
        Self {
            cells: 100,
            p_pad: 1.05,
            sampling: UlamSampling::default(),
            arnoldi: ArnoldiConfig {
                n_eigs: 20,
                ..Default::default()
            },
            write_matrix: false,
        }
    }
}

impl Default for QuantumConfig {
    fn default() -> Self {
        Self {
            margin: 1.5,
            dim_cap: dsm_core::quantum::DEFAULT_DIM_CAP,
            period: PeriodConfig::default(),
            arnoldi: ArnoldiConfig {
                n_eigs: 10,
                ..Default::default()
            },
            save_eigenoperators: 4,
            with_ulam: false,
        }
    }
}

impl Default for HusimiConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            input: None,
            orbits_csv: None,
            radius: None,
            n_states: 2,
            write_csv: true,
        }
    }
}

impl RunConfig {
    /// Overwrite the fields a preset pins.
    pub fn apply_preset(&mut self, name: &str) -> Result<(), CliError> {
        let p = presets::preset(name).map_err(|e| CliError::Config(e.to_string()))?;
        self.preset = Some(name.to_string());
        self.params = p.params;
        match p.kind {
            PresetKind::Scan => {
                self.scan.k_range = p.k_range;
                self.scan.gamma_range = p.gamma_range;
                self.scan.resolution = p.resolution;
                self.scan.ensemble = p.ensemble;
            }
            PresetKind::Bifurcation => {
                self.bifurcation.k_range = p.k_range;
                self.bifurcation.n_k = p.resolution.0;
                self.bifurcation.ensemble = p.ensemble;
            }
            PresetKind::Spectrum | PresetKind::Husimi => {
                self.quantum.arnoldi.n_eigs = p.n_eigs;
                if let Some(cells) = p.ulam_cells {
                    self.quantum.with_ulam = true;
                    self.ulam.cells = cells;
                    self.ulam.arnoldi.n_eigs = p.n_eigs.min(30);
                }
                if p.kind == PresetKind::Husimi {
                    // Only a handful of states are rendered.
                    self.quantum.arnoldi.n_eigs = self.quantum.arnoldi.n_eigs.min(10);
                }
            }
        }
        if !p.orbits.is_empty() {
            self.orbits.pairs = p.orbits;
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.scan.ensemble.seed = seed;
        self.bifurcation.ensemble.seed = seed;
        self.ulam.sampling.seed = seed;
        self.ulam.arnoldi.seed = seed;
        self.quantum.arnoldi.seed = seed;
    }

    /// Every seed that feeds a computation, for the provenance record.
    pub fn seeds(&self) -> Value {
        serde_json::json!({
            "seed": self.seed,
            "scan.ensemble": self.scan.ensemble.seed,
            "bifurcation.ensemble": self.bifurcation.ensemble.seed,
            "ulam.sampling": self.ulam.sampling.seed,
            "ulam.arnoldi": self.ulam.arnoldi.seed,
            "quantum.arnoldi": self.quantum.arnoldi.seed,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.params
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.scan.resolution.0 == 0 || self.scan.resolution.1 == 0 {
            return bad("scan.resolution must be positive".into());
        }
        if self.bifurcation.n_k == 0 {
            return bad("bifurcation.n_k must be positive".into());
        }
        if self.orbits.pairs.iter().any(|&(q, _)| q == 0) {
            return bad("orbit period q must be >= 1".into());
        }
        if self.ulam.cells < 2 {
            return bad("ulam.cells must be >= 2".into());
        }
        if self.quantum.arnoldi.n_eigs == 0 || self.ulam.arnoldi.n_eigs == 0 {
            return bad("n_eigs must be positive".into());
        }
        if self.husimi.grid.nx == 0 || self.husimi.grid.np == 0 {
            return bad("husimi grid must be non-empty".into());
        }
        if self.husimi.n_states == 0 {
            return bad("husimi.n_states must be positive".into());
        }
        Ok(())
    }
}

/// Recursively overlay `top` onto `base`; objects merge, everything else is
/// replaced.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
}

pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<RunConfig, CliError> {
    let doc: Option<Value> = match file {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            )
        }
    };
    let preset = flags.preset.clone().or_else(|| {
        doc.as_ref()
            .and_then(|d| d.get("preset"))
            .and_then(Value::as_str)
            .map(str::to_string)
    });
    let mut config = RunConfig::default();
    if let Some(name) = &preset {
        config.apply_preset(name)?;
    }
    if let Some(doc) = doc {
        let mut base = serde_json::to_value(&config).expect("config serializes");
        merge(&mut base, doc);
        config = serde_json::from_value(base).map_err(|e| CliError::Config(e.to_string()))?;
    }
    // A preset given on the command line wins over the file's own fields.
    if let Some(name) = &flags.preset {
        config.apply_preset(name)?;
    }
    if let Some(seed) = flags.seed {
        config.set_seed(seed);
    }
    config.validate()?;
    Ok(config)
}
