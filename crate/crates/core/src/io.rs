//! File formats: CSV tables and the DMRX / DMLG binary layouts.
//!
//! DMRX: `b"DMRX"`, u32 dim, then `dim^2` complex entries as (re, im) f64
//! pairs, row-major. DMLG: `b"DMLG"`, u32 nx, u32 np, four f64 extents
//! `(x_min, x_max, p_min, p_max)`, then `nx * np` f64 values with index
//! `ix * np + ip`. All little-endian.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::classical::{MomentumDistribution, PhasePoint, ScanCell};
use crate::eigen::SpectrumResult;
use crate::error::{Error, Result};
use crate::husimi::{HusimiGrid, DEFAULT_P_PAD};
use crate::orbits::PeriodicOrbit;
use crate::quantum::DensityMatrix;

const DMRX: &[u8; 4] = b"DMRX";
const DMLG: &[u8; 4] = b"DMLG";

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(out)
}

pub fn write_scan_csv<W: Write>(out: W, cells: &[ScanCell]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["k", "gamma", "eta", "out_of_band_count"])?;
    for c in cells {
        w.write_record([
            fmt_f64(c.k),
            fmt_f64(c.gamma),
            fmt_f64(c.eta),
            c.out_of_band.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sparse table: only occupied bins are written.
pub fn write_bifurcation_csv<W: Write>(
    out: W,
    columns: &[(f64, MomentumDistribution)],
) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["k", "p_bin_center", "probability"])?;
    for (k, dist) in columns {
        for (i, &prob) in dist.bins.iter().enumerate() {
            if prob > 0.0 {
                w.write_record([fmt_f64(*k), fmt_f64(dist.bin_center(i)), fmt_f64(prob)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_orbits_csv<W: Write>(out: W, orbits: &[PeriodicOrbit]) -> Result<()> {
    let mut w = writer(out);
    w.write_record([
        "q", "w", "index", "x", "p", "mult1_re", "mult1_im", "mult2_re", "mult2_im", "residual",
    ])?;
    for o in orbits {
        for (i, z) in o.points.iter().enumerate() {
            w.write_record([
                o.period_q.to_string(),
                o.winding_w.to_string(),
                i.to_string(),
                fmt_f64(z.x),
                fmt_f64(z.p),
                fmt_f64(o.multipliers[0].re),
                fmt_f64(o.multipliers[0].im),
                fmt_f64(o.multipliers[1].re),
                fmt_f64(o.multipliers[1].im),
                fmt_f64(o.residual),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of `write_orbits_csv`. Consecutive rows with `index = 0` start
/// a new orbit.
pub fn read_orbits_csv<R: Read>(input: R) -> Result<Vec<PeriodicOrbit>> {
    let mut r = csv::Reader::from_reader(input);
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 10 {
            return Err(Error::Format(format!("orbit row has {} fields", rec.len())));
        }
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad number {:?}", &rec[i])))
        };
        let int = |i: usize| -> Result<i64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad integer {:?}", &rec[i])))
        };
        let (q, w, index) = (int(0)?, int(1)?, int(2)?);
        if q < 1 {
            return Err(Error::Format(format!("period {q} < 1")));
        }
        let point = PhasePoint { x: f(3)?, p: f(4)? };
        if index == 0 {
            orbits.push(PeriodicOrbit {
                points: Vec::with_capacity(q as usize),
                period_q: q as usize,
                winding_w: w,
                multipliers: [
                    Complex64::new(f(5)?, f(6)?),
                    Complex64::new(f(7)?, f(8)?),
                ],
                residual: f(9)?,
            });
        }
        match orbits.last_mut() {
            Some(o) if o.points.len() as i64 == index => o.points.push(point),
            _ => return Err(Error::Format(format!("orbit point {index} out of order"))),
        }
    }
    Ok(orbits)
}

pub fn write_spectrum_csv<W: Write>(out: W, spectrum: &SpectrumResult) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["index", "re", "im", "modulus", "phase", "residual"])?;
    for (i, z) in spectrum.eigenvalues.iter().enumerate() {
        let res = spectrum.residuals.get(i).copied().unwrap_or(f64::NAN);
        w.write_record([
            i.to_string(),
            fmt_f64(z.re),
            fmt_f64(z.im),
            fmt_f64(z.norm()),
            fmt_f64(z.arg()),
            fmt_f64(res),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Eigenvalues from a spectrum CSV.
pub fn read_spectrum_csv<R: Read>(input: R) -> Result<Vec<Complex64>> {
    let mut r = csv::Reader::from_reader(input);
    r.records()
        .map(|rec| {
            let rec = rec?;
            let re = rec.get(1).unwrap_or("").trim().parse::<f64>();
            let im = rec.get(2).unwrap_or("").trim().parse::<f64>();
            match (re, im) {
                (Ok(re), Ok(im)) => Ok(Complex64::new(re, im)),
                _ => Err(Error::Format("bad spectrum row".into())),
            }
        })
        .collect()
}

pub fn write_husimi_csv<W: Write>(out: W, grid: &HusimiGrid) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["x", "p", "value"])?;
    for ix in 0..grid.nx {
        for ip in 0..grid.np {
            w.write_record([
                fmt_f64(grid.x(ix)),
                fmt_f64(grid.p(ip)),
                fmt_f64(grid.get(ix, ip)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_dmrx<W: Write>(mut out: W, rho: &DensityMatrix) -> Result<()> {
    let dim = u32::try_from(rho.dim).map_err(|_| Error::Format("dim exceeds u32".into()))?;
    let mut buf = Vec::with_capacity(8 + 16 * rho.data.len());
    buf.extend_from_slice(DMRX);
    buf.extend_from_slice(&dim.to_le_bytes());
    for z in &rho.data {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_exact_vec<R: Read>(input: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn f64_at(buf: &[u8], i: usize) -> f64 {
    f64::from_le_bytes(buf[8 * i..8 * i + 8].try_into().unwrap())
}

pub fn read_dmrx<R: Read>(mut input: R) -> Result<DensityMatrix> {
    let head = read_exact_vec(&mut input, 8)?;
    if &head[..4] != DMRX {
        return Err(Error::Format("missing DMRX magic".into()));
    }
    let dim = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let body = read_exact_vec(&mut input, 16 * dim * dim)?;
    let data = (0..dim * dim)
        .map(|i| Complex64::new(f64_at(&body, 2 * i), f64_at(&body, 2 * i + 1)))
        .collect();
    DensityMatrix::from_data(dim, data)
}

pub fn write_dmlg<W: Write>(mut out: W, grid: &HusimiGrid) -> Result<()> {
    let mut buf = Vec::with_capacity(44 + 8 * grid.values.len());
    buf.extend_from_slice(DMLG);
    for n in [grid.nx, grid.np] {
        let n = u32::try_from(n).map_err(|_| Error::Format("size exceeds u32".into()))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    for v in [0.0, std::f64::consts::TAU, grid.p_min, grid.p_max] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &grid.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// The file does not carry the band; it is recovered assuming the default
/// padding.
pub fn read_dmlg<R: Read>(mut input: R) -> Result<HusimiGrid> {
    let head = read_exact_vec(&mut input, 44)?;
    if &head[..4] != DMLG {
        return Err(Error::Format("missing DMLG magic".into()));
    }
    let nx = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let np = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let ext = &head[12..];
    let (p_min, p_max) = (f64_at(ext, 2), f64_at(ext, 3));
    let body = read_exact_vec(&mut input, 8 * nx * np)?;
    let values: Vec<f64> = (0..nx * np).map(|i| f64_at(&body, i)).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(HusimiGrid {
        nx,
        np,
        p_min,
        p_max,
        p_band: p_max / DEFAULT_P_PAD,
        min_raw: values.iter().copied().fold(f64::INFINITY, f64::min),
        normalized: max == 1.0,
        values,
    })
}

pub fn save_dmrx(path: &Path, rho: &DensityMatrix) -> Result<()> {
    write_dmrx(std::io::BufWriter::new(std::fs::File::create(path)?), rho)
}

pub fn load_dmrx(path: &Path) -> Result<DensityMatrix> {
    read_dmrx(std::io::BufReader::new(std::fs::File::open(path)?))
}
