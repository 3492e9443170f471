//! Columnar text form of a stack.
//!
//! ```text
//! # L=3,R=3,gamma=3,M=1,m=0.1,taper=hann,leakage_tol=0.000001,...,strides=1;1;1
//! j,x0,x1,value
//! 0,0,0,0.125
//! ```
//!
//! One row per stored sample of Γ_j at the physical point (x0, x1); rows with
//! j = R hold the tail. Floats are written in shortest round-trip form, so a
//! stack reads back bit for bit. Fine components are not stored.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::stack::CovarianceStack;
use super::table::{KernelTable, QuarterGrid};
use super::{build_cutoffs, CovError, CovResult, DecomposeOptions, Taper, TorusLattice};

pub fn write_stack<W: Write>(stack: &CovarianceStack, out: W) -> CovResult<()> {
    let lat = stack.lattice();
    let o = stack.options();
    let strides: Vec<String> = (0..stack.scales())
        .map(|j| stack.table(j).map(|t| t.stride().to_string()))
        .collect::<CovResult<_>>()?;
    let mut out = std::io::BufWriter::new(out);
    writeln!(
        out,
        "# L={},R={},gamma={},M={},m={},taper={},leakage_tol={},psd_tol={},symbol_eps={},max_table_entries={},tail_max_side={},strides={}",
        lat.l(),
        lat.r(),
        lat.gamma(),
        lat.m_fine(),
        lat.mass(),
        stack.cutoffs().taper().name(),
        o.leakage_tol,
        o.psd_tol,
        o.symbol_eps,
        o.max_table_entries,
        o.tail_max_side,
        strides.join(";")
    )?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| CovError::Format(e.to_string());
    w.write_record(["j", "x0", "x1", "value"]).map_err(csv_err)?;
    let mut emit = |j: usize, s: usize, g: &QuarterGrid| -> CovResult<()> {
        for i0 in 0..g.n() {
            for i1 in 0..g.n() {
                w.write_record(&[
                    j.to_string(),
                    (s * i0).to_string(),
                    (s * i1).to_string(),
                    g.get(i0, i1).to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        Ok(())
    };
    for j in 0..stack.scales() {
        let t = stack.table(j)?;
        emit(j, t.stride(), t.samples())?;
    }
    if let Some(tail) = stack.tail() {
        emit(stack.scales(), 1, tail)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> CovResult<HashMap<String, String>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| CovError::Format("missing '#' header line".into()))?;
    body.trim()
        .split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CovError::Format(format!("bad header field '{kv}'")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn field<T: std::str::FromStr>(h: &HashMap<String, String>, key: &str) -> CovResult<T> {
    h.get(key)
        .ok_or_else(|| CovError::Format(format!("header lacks '{key}'")))?
        .parse()
        .map_err(|_| CovError::Format(format!("header field '{key}' does not parse")))
}

pub fn read_stack<R: BufRead>(mut input: R) -> CovResult<CovarianceStack> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let h = parse_header(first.trim_end())?;
    let l: u32 = field(&h, "L")?;
    let r: u32 = field(&h, "R")?;
    let gamma: u32 = field(&h, "gamma")?;
    let m_fine: u32 = field(&h, "M")?;
    let mass: f64 = field(&h, "m")?;
    let taper_name: String = field(&h, "taper")?;
    let taper = Taper::parse(&taper_name).ok_or_else(|| CovError::Format(format!("unknown taper '{taper_name}'")))?;
    let options = DecomposeOptions {
        leakage_tol: field(&h, "leakage_tol")?,
        psd_tol: field(&h, "psd_tol")?,
        symbol_eps: field(&h, "symbol_eps")?,
        max_table_entries: field(&h, "max_table_entries")?,
        tail_max_side: field(&h, "tail_max_side")?,
        fine_components: false,
    };
    let strides: Vec<usize> = field::<String>(&h, "strides")?
        .split(';')
        .map(|s| s.parse().map_err(|_| CovError::Format(format!("bad stride '{s}'"))))
        .collect::<CovResult<_>>()?;
    let lattice = TorusLattice::new(l, r, gamma, mass)?;
    if lattice.m_fine() != m_fine || strides.len() != r as usize {
        return Err(CovError::Format("header is inconsistent".into()));
    }
    let cutoffs = build_cutoffs(gamma, m_fine, (r * m_fine) as usize, taper)?;

    // sampling geometry per scale and for the tail
    let mut periods: Vec<usize> = (1..=r).map(|e| (l as usize).pow(e)).collect();
    periods.push(lattice.side() as usize);
    let mut strides_all = strides.clone();
    strides_all.push(1);
    let mut grids: Vec<QuarterGrid> = periods
        .iter()
        .zip(&strides_all)
        .map(|(&p, &s)| QuarterGrid::zeros((p / s).div_ceil(2)))
        .collect();
    let mut filled = vec![0usize; grids.len()];

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CovError::Format(e.to_string()))?;
        let bad = || CovError::Format(format!("bad row {:?}", rec.iter().collect::<Vec<_>>()));
        if rec.len() != 4 {
            return Err(bad());
        }
        let j: usize = rec[0].parse().map_err(|_| bad())?;
        let x0: usize = rec[1].parse().map_err(|_| bad())?;
        let x1: usize = rec[2].parse().map_err(|_| bad())?;
        let v: f64 = rec[3].parse().map_err(|_| bad())?;
        let s = *strides_all.get(j).ok_or_else(bad)?;
        if x0 % s != 0 || x1 % s != 0 || x0 / s >= grids[j].n() || x1 / s >= grids[j].n() {
            return Err(bad());
        }
        grids[j].set(x0 / s, x1 / s, v);
        filled[j] += 1;
    }
    let tail = if filled[r as usize] > 0 { grids.pop() } else { None };
    if tail.is_none() {
        grids.pop();
    }
    for (j, g) in grids.iter().enumerate() {
        if filled[j] != g.n() * g.n() {
            return Err(CovError::Format(format!("scale {j}: {} of {} samples", filled[j], g.n() * g.n())));
        }
    }
    let tables = grids
        .into_iter()
        .enumerate()
        .map(|(j, g)| KernelTable::new(strides[j], periods[j], cutoffs.band_radius((j + 1) * m_fine as usize) as usize, g))
        .collect();
    CovarianceStack::from_parts(lattice, cutoffs, options, tables, tail)
}
