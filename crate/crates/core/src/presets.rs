//! Named parameter sets for the standard runs, plus reduced quick variants.

use serde::{Deserialize, Serialize};

use crate::classical::EnsembleConfig;
use crate::error::{Error, Result};
use crate::params::MapParams;

pub const GAMMA: f64 = 0.33;
pub const HBAR_DESK: f64 = 0.042;
pub const HBAR_QUICK: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    Scan,
    Bifurcation,
    /// Quantum spectrum, optionally with the Ulam spectrum alongside.
    Spectrum,
    /// Husimi grids of the invariant state and leading eigenstate.
    Husimi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub kind: PresetKind,
    pub params: MapParams,
    pub k_range: (f64, f64),
    pub gamma_range: (f64, f64),
    /// `(n_k, n_gamma)`
    pub resolution: (usize, usize),
    pub ensemble: EnsembleConfig,
    pub n_eigs: usize,
    /// Ulam cells per axis, when the classical spectrum is wanted too.
    pub ulam_cells: Option<usize>,
    /// `(q, w)` orbits drawn on the Husimi plots.
    pub orbits: Vec<(usize, i64)>,
    pub quick: bool,
}

pub const NAMES: [&str; 15] = [
    "fig1a", "fig1b", "fig1c", "fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b", "fig3c",
    "fig3d", "fig4a", "fig4b", "fig5a", "fig5b",
];

fn panel_k(panel: char, first: [f64; 4]) -> Option<f64> {
    match panel {
        'a' => Some(first[0]),
        'b' => Some(first[1]),
        'c' => Some(first[2]),
        'd' => Some(first[3]),
        _ => None,
    }
}

const REGION1: [f64; 4] = [4.0, 5.13, 5.5, 6.0];
const REGION2: [f64; 4] = [6.86, 6.8, f64::NAN, f64::NAN];

/// Look up a preset; a `-quick` suffix selects the reduced variant.
pub fn preset(name: &str) -> Result<Preset> {
    let (base, quick) = match name.strip_suffix("-quick") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let unknown = || Error::InvalidParams(format!("unknown preset {name:?}"));
    let panel = base.chars().last().ok_or_else(unknown)?;
    let fig = base.strip_suffix(panel).ok_or_else(unknown)?;
    let p = |k: f64| MapParams {
        k,
        gamma: GAMMA,
        hbar_eff: HBAR_DESK,
    };
    let mut out = Preset {
        name: name.to_string(),
        kind: PresetKind::Spectrum,
        params: p(4.0),
        k_range: (4.0, 4.0),
        gamma_range: (GAMMA, GAMMA),
        resolution: (1, 1),
        ensemble: EnsembleConfig::default(),
        n_eigs: 100,
        ulam_cells: None,
        orbits: Vec::new(),
        quick,
    };
    match (fig, panel) {
        ("fig1", 'a') => {
            out.kind = PresetKind::Scan;
            out.k_range = (0.0, 8.0);
            out.gamma_range = (0.0, 0.98);
            out.resolution = (200, 100);
        }
        ("fig1", 'b') | ("fig1", 'c') => {
            out.kind = PresetKind::Bifurcation;
            out.k_range = if panel == 'b' { (4.0, 6.0) } else { (6.7, 7.0) };
            out.resolution = (400, 1);
        }
        ("fig2", _) | ("fig3", _) => {
            let k = panel_k(panel, REGION1).ok_or_else(unknown)?;
            out.params = p(k);
            if fig == "fig3" {
                out.kind = PresetKind::Husimi;
                out.orbits = match panel {
                    'a' => vec![(2, 0)],
                    'b' | 'c' => vec![(2, 2)],
                    _ => Vec::new(),
                };
            }
        }
        ("fig4", _) | ("fig5", _) => {
            let k = panel_k(panel, REGION2).filter(|k| !k.is_nan()).ok_or_else(unknown)?;
            out.params = p(k);
            if fig == "fig4" {
                out.ulam_cells = Some(300);
            } else {
                out.kind = PresetKind::Husimi;
            }
            out.orbits = vec![(3, 2)];
        }
        _ => return Err(unknown()),
    }
    out.k_range = match out.kind {
        PresetKind::Scan | PresetKind::Bifurcation => out.k_range,
        _ => (out.params.k, out.params.k),
    };
    if quick {
        out.params.hbar_eff = HBAR_QUICK;
        out.ensemble.ensemble_size = 1000;
        out.ensemble.steps = 1000;
        out.resolution = (
            out.resolution.0.min(40),
            out.resolution.1.min(20),
        );
        out.n_eigs = out.n_eigs.min(20);
        out.ulam_cells = out.ulam_cells.map(|_| 100);
    }
    Ok(out)
}

pub fn all_presets(quick: bool) -> Vec<Preset> {
    NAMES
        .iter()
        .map(|n| {
            let name = if quick { format!("{n}-quick") } else { n.to_string() };
            preset(&name).expect("built-in preset")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        for n in NAMES {
            let p = preset(n).unwrap();
            assert_eq!(p.params.gamma, 0.33);
            assert_eq!(p.params.hbar_eff, 0.042);
            let q = preset(&format!("{n}-quick")).unwrap();
            assert_eq!(q.params.hbar_eff, 0.1);
        }
        assert!(preset("fig6a").is_err());
        assert!(preset("fig2e").is_err());
    }

    #[test]
    fn preset_parameters() {
        let ks: Vec<f64> = ["fig2a", "fig2b", "fig2c", "fig2d", "fig4a", "fig4b"]
            .iter()
            .map(|n| preset(n).unwrap().params.k)
            .collect();
        assert_eq!(ks, vec![4.0, 5.13, 5.5, 6.0, 6.86, 6.8]);
        assert_eq!(preset("fig3b").unwrap().orbits, vec![(2, 2)]);
        assert_eq!(preset("fig4a").unwrap().ulam_cells, Some(300));
        assert_eq!(preset("fig1c").unwrap().k_range, (6.7, 7.0));
        assert_eq!(preset("fig1a").unwrap().kind, PresetKind::Scan);
    }
}
