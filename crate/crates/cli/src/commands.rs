use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use dsm_core::classical::{self, jacobian, linspace, map_step, PhasePoint};
use dsm_core::eigen::{leading_interior, phase_cluster, spectral_gap};
use dsm_core::husimi::{self as hq, scar_localization, symmetric_scar_ratio, uniform_baseline};
use dsm_core::orbits::{dedup_orbits, seed_orbit_search};
use dsm_core::quantum::{build_space, eigen_operator, to_unit_trace};
use dsm_core::ulam::{build_ulam_matrix, ulam_spectrum};
use dsm_core::{
    arnoldi_top, io, DensityMatrix, Error, HilbertSpace, MapParams, PeriodMap, PeriodicOrbit,
    SpectrumResult, UlamGrid,
};
use log::info;
use serde_json::json;

use crate::{CliError, Run};

const RESUME: &str = "RESUME";

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// `config.json` and `provenance.json`. Neither carries timestamps, so a
/// rerun from the echoed config reproduces the directory bit for bit.
fn write_provenance(run: &Run) -> Result<(), CliError> {
    write_json(&run.out.join("config.json"), &run.config)?;
    write_json(
        &run.out.join("provenance.json"),
        &json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": run.command,
            "args": run.args,
            "seeds": run.config.seeds(),
            "workers": run.workers,
        }),
    )
}

fn scan_rows_done(out: &Path) -> Result<usize, CliError> {
    let path = out.join(RESUME);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    text.trim()
        .strip_prefix("next_row=")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| CliError::Runtime(format!("malformed {}", path.display())))
}

pub fn scan(run: &Run, resume: bool) -> Result<(), CliError> {
    let c = &run.config.scan;
    let hbar = run.config.params.hbar_eff;
    let csv_path = run.out.join("scan.csv");
    let first_row = if resume {
        let echoed = run.out.join("config.json");
        let text = fs::read_to_string(&echoed).map_err(|e| CliError::io(&echoed, e))?;
        let previous: crate::config::RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        if previous != run.config {
            return Err(CliError::Config(
                "resume config differs from the interrupted run".into(),
            ));
        }
        scan_rows_done(&run.out)?
    } else {
        write_provenance(run)?;
        File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
        0
    };
    let ks = linspace(c.k_range.0, c.k_range.1, c.resolution.0);
    let gammas = linspace(c.gamma_range.0, c.gamma_range.1, c.resolution.1);
    for (row, &g) in gammas.iter().enumerate().skip(first_row) {
        let cells = classical::scan_row(g, &ks, hbar, &c.ensemble)?;
        let mut buf = Vec::new();
        io::write_scan_csv(&mut buf, &cells)?;
        let body = if row == 0 {
            &buf[..]
        } else {
            let header_end = buf.iter().position(|&b| b == b'\n').map_or(0, |i| i + 1);
            &buf[header_end..]
        };
        let mut f = OpenOptions::new()
            .append(true)
            .open(&csv_path)
            .map_err(|e| CliError::io(&csv_path, e))?;
        f.write_all(body)?;
        f.sync_data()?;
        fs::write(run.out.join(RESUME), format!("next_row={}\n", row + 1))?;
        info!("scan row {}/{} (gamma = {g})", row + 1, gammas.len());
    }
    fs::remove_file(run.out.join(RESUME))?;
    Ok(())
}

pub fn bifurcation(run: &Run) -> Result<(), CliError> {
    write_provenance(run)?;
    let c = &run.config.bifurcation;
    let columns = classical::bifurcation_diagram(
        run.config.params.gamma,
        c.k_range,
        c.n_k,
        &c.ensemble,
    )?;
    io::write_bifurcation_csv(create(&run.out.join("bifurcation.csv"))?, &columns)?;
    Ok(())
}

fn search_orbits(run: &Run) -> Result<Vec<PeriodicOrbit>, CliError> {
    let c = &run.config.orbits;
    let mut all = Vec::new();
    for &(q, w) in &c.pairs {
        let found = seed_orbit_search(&run.config.params, q, w, c.grid_n, &c.newton)?;
        info!("(q, w) = ({q}, {w}): {} orbits", found.len());
        all.extend(found);
    }
    Ok(all)
}

pub fn orbits(run: &Run) -> Result<(), CliError> {
    write_provenance(run)?;
    let found = search_orbits(run)?;
    io::write_orbits_csv(create(&run.out.join("orbits.csv"))?, &found)?;
    Ok(())
}

fn spectrum_summary(s: &SpectrumResult, family_q: &[usize]) -> serde_json::Value {
    let lead = leading_interior(s).map(|(_, z)| [z.re, z.im]);
    let clusters: serde_json::Map<String, serde_json::Value> = family_q
        .iter()
        .map(|&q| (format!("q{q}"), json!(phase_cluster(s, q, 0.05))))
        .collect();
    json!({
        "n": s.len(),
        "lambda1": lead,
        "gap": spectral_gap(s).ok(),
        "max_residual": s.residuals.iter().copied().fold(0.0, f64::max),
        "matvecs": s.n_matvecs,
        "restarts": s.restarts,
        "phase_cluster": clusters,
    })
}

/// Unwrap a spectrum, writing the partial result before reporting failure.
fn converged(
    result: dsm_core::Result<SpectrumResult>,
    partial_path: &Path,
) -> Result<SpectrumResult, CliError> {
    match result {
        Ok(s) => Ok(s),
        Err(Error::ArnoldiNoConvergence {
            restarts,
            converged,
            wanted,
            partial,
        }) => {
            io::write_spectrum_csv(create(partial_path)?, &partial)?;
            Err(CliError::Runtime(format!(
                "Arnoldi stopped after {restarts} restarts with {converged}/{wanted} pairs; \
                 partial spectrum in {}",
                partial_path.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn run_ulam(run: &Run, name: &str) -> Result<SpectrumResult, CliError> {
    let c = &run.config.ulam;
    let grid = UlamGrid::for_params(&run.config.params, c.cells, c.cells, c.p_pad)?;
    let op = build_ulam_matrix(&run.config.params, &grid, &c.sampling)?;
    info!("Ulam matrix: {} cells, {} nonzeros", op.n, op.nnz());
    if c.write_matrix {
        op.write_coo(create(&run.out.join("ulam_matrix.coo"))?)?;
    }
    let s = converged(
        ulam_spectrum(&op, &c.arnoldi),
        &run.out.join(format!("{name}.partial.csv")),
    )?;
    io::write_spectrum_csv(create(&run.out.join(format!("{name}.csv")))?, &s)?;
    Ok(s)
}

pub fn ulam(run: &Run) -> Result<(), CliError> {
    write_provenance(run)?;
    let s = run_ulam(run, "ulam_spectrum")?;
    write_json(&run.out.join("summary.json"), &spectrum_summary(&s, &orbit_periods(run)))
}

fn orbit_periods(run: &Run) -> Vec<usize> {
    let mut qs: Vec<usize> = run.config.orbits.pairs.iter().map(|&(q, _)| q).collect();
    qs.push(10);
    qs.sort_unstable();
    qs.dedup();
    qs
}

fn quantum_spectrum(run: &Run, n_eigs: usize) -> Result<(PeriodMap, SpectrumResult), CliError> {
    let c = &run.config.quantum;
    let space = build_space(&run.config.params, c.margin, c.dim_cap)?;
    info!(
        "Hilbert space: m_max = {}, dim = {}, splitting {}",
        space.m_max,
        space.dim,
        c.period.splitting.label()
    );
    let map = PeriodMap::new(space, run.config.params, c.period)?;
    let mut arnoldi = c.arnoldi.clone();
    arnoldi.n_eigs = n_eigs;
    let s = converged(
        arnoldi_top(&map, &arnoldi, None),
        &run.out.join("spectrum.partial.csv"),
    )?;
    Ok((map, s))
}

/// Eigenoperator `i` of a spectrum; the invariant is scaled to unit trace.
fn state(s: &SpectrumResult, i: usize, dim: usize) -> Result<DensityMatrix, CliError> {
    let op = eigen_operator(&s.eigenvectors[i], dim)?;
    Ok(if i == 0 { to_unit_trace(&op) } else { op })
}

pub fn qspectrum(run: &Run) -> Result<(), CliError> {
    write_provenance(run)?;
    let c = &run.config.quantum;
    let (map, s) = quantum_spectrum(run, c.arnoldi.n_eigs)?;
    io::write_spectrum_csv(create(&run.out.join("spectrum.csv"))?, &s)?;
    for i in 0..c.save_eigenoperators.min(s.len()) {
        let path = run.out.join(format!("eigen_{i:03}.dmrx"));
        io::save_dmrx(&path, &state(&s, i, map.space.dim)?)?;
    }
    let mut summary = json!({
        "dim": map.space.dim,
        "m_max": map.space.m_max,
        "splitting": c.period.splitting.label(),
        "quantum": spectrum_summary(&s, &orbit_periods(run)),
    });
    if c.with_ulam {
        let u = run_ulam(run, "ulam_spectrum")?;
        summary["ulam"] = spectrum_summary(&u, &orbit_periods(run));
    }
    write_json(&run.out.join("summary.json"), &summary)
}

fn load_orbits(path: &Path) -> Result<Vec<PeriodicOrbit>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(io::read_orbits_csv(f)?)
}

/// Space for an operator read from disk: the basis size comes from the file
/// and the momentum band from the configured parameters.
fn space_for(rho: &DensityMatrix, params: &MapParams) -> Result<HilbertSpace, CliError> {
    if rho.dim.is_multiple_of(2) {
        return Err(CliError::Config(format!(
            "operator dimension {} is not 2 m_max + 1",
            rho.dim
        )));
    }
    let mut space = HilbertSpace::with_m_max(rho.dim / 2, params.hbar_eff);
    if let Ok(band) = params.finite_band() {
        space.p_band = band;
    }
    Ok(space)
}

pub fn husimi(run: &Run) -> Result<(), CliError> {
    write_provenance(run)?;
    let c = &run.config.husimi;
    let (space, states): (HilbertSpace, Vec<(String, DensityMatrix)>) = match &c.input {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::MissingInput(path.display().to_string()));
            }
            let rho = io::load_dmrx(path)?;
            let name = path
                .file_stem()
                .map_or("input".into(), |s| s.to_string_lossy().into_owned());
            (space_for(&rho, &run.config.params)?, vec![(name, rho)])
        }
        None => {
            let n_eigs = run.config.quantum.arnoldi.n_eigs.max(c.n_states + 1);
            let (map, s) = quantum_spectrum(run, n_eigs)?;
            io::write_spectrum_csv(create(&run.out.join("spectrum.csv"))?, &s)?;
            let states = (0..c.n_states.min(s.len()))
                .map(|i| {
                    let name = if i == 0 {
                        "invariant".to_string()
                    } else {
                        format!("state_{i}")
                    };
                    state(&s, i, map.space.dim).map(|rho| (name, rho))
                })
                .collect::<Result<_, _>>()?;
            (map.space, states)
        }
    };
    let orbits = match &c.orbits_csv {
        Some(path) => load_orbits(path)?,
        None => search_orbits(run)?,
    };
    let orbits = dedup_orbits(orbits);
    io::write_orbits_csv(create(&run.out.join("orbits.csv"))?, &orbits)?;

    let radius = c.radius.unwrap_or(3.0 * run.config.params.hbar_eff.sqrt());
    let mut report = csv_report(&run.out.join("scar_report.csv"))?;
    for (name, rho) in &states {
        let grid = hq::husimi(rho, &space, &c.grid)?;
        io::write_dmlg(create(&run.out.join(format!("husimi_{name}.dmlg")))?, &grid)?;
        if c.write_csv {
            io::write_husimi_csv(create(&run.out.join(format!("husimi_{name}.csv")))?, &grid)?;
        }
        for (i, o) in orbits.iter().enumerate() {
            let loc = scar_localization(&grid, o, radius);
            let base = uniform_baseline(&grid, o, radius);
            let ratio = if base > 0.0 { loc / base } else { 0.0 };
            let sym = symmetric_scar_ratio(&grid, o, radius);
            writeln!(
                report,
                "{name},{},{},{i},{},{},{},{},{}",
                o.period_q,
                o.winding_w,
                io::fmt_f64(loc),
                io::fmt_f64(base),
                io::fmt_f64(ratio),
                io::fmt_f64(sym),
                o.is_stable(),
            )?;
        }
    }
    report.flush()?;
    Ok(())
}

fn csv_report(path: &Path) -> Result<BufWriter<File>, CliError> {
    let mut w = create(path)?;
    writeln!(
        w,
        "state,q,w,orbit,localization,uniform_baseline,ratio,ratio_with_mirror,stable"
    )?;
    Ok(w)
}

/// Small, fast checks that the kernels obey their contracts.
pub fn selftest(run: &Run) -> Result<(), CliError> {
    write_provenance(run)?;
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let p = MapParams::new(5.13, 0.33, 0.1)?;
    let worst_det = (0..1000)
        .map(|i| {
            let x = i as f64 * 0.00628;
            let j = jacobian(x, &p);
            (j[0][0] * j[1][1] - j[0][1] * j[1][0] - p.gamma).abs()
        })
        .fold(0.0, f64::max);
    check("jacobian determinant", worst_det < 1e-14, format!("{worst_det:.1e}"));

    let band = p.finite_band()?;
    let escaped = (0..1000)
        .map(|i| PhasePoint::new(i as f64 * 0.00628, band * (2.0 * (i % 7) as f64 / 6.0 - 1.0)))
        .filter(|&z| map_step(z, &p).p.abs() > band)
        .count();
    check("trapping band", escaped == 0, format!("{escaped} escaped"));

    let fixed = seed_orbit_search(&p, 1, 0, 12, &Default::default())?;
    check("fixed points", fixed.len() == 2, format!("{} found", fixed.len()));

    let space = build_space(&p, 1.5, 4001)?;
    let map = PeriodMap::new(space, p, Default::default())?;
    let rho = map.apply_to(&DensityMatrix::random(space.dim, 1))?;
    let tr = (rho.trace() - 1.0).norm();
    check("period map trace", tr < 1e-10, format!("{tr:.1e}"));
    let herm = rho.hermiticity_error();
    check("period map hermiticity", herm < 1e-12, format!("{herm:.1e}"));
    let min_eig = rho.min_eigenvalue();
    check("period map positivity", min_eig > -1e-8, format!("{min_eig:.1e}"));

    let grid = UlamGrid::for_params(&p, 40, 40, 1.05)?;
    let op = build_ulam_matrix(&p, &grid, &Default::default())?;
    let worst_col = (0..op.n)
        .map(|j| (op.column_sum(j) - 1.0).abs())
        .fold(0.0, f64::max);
    check("ulam column sums", worst_col < 1e-12, format!("{worst_col:.1e}"));

    if failures > 0 {
        Err(CliError::Runtime(format!("{failures} self-test checks failed")))
    } else {
        Ok(())
    }
}
