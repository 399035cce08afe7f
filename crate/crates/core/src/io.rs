//! Text and binary file formats.
//!
//! - scattering CSV `a,b,s,q,value`, nonzero points only
//! - mask: `n_a` lines of `n_b` characters `1`/`0`
//! - weights CSV `k,re,im`, 17 significant digits
//! - echo ensemble: `"SCID"`, version, `J, n_t, n_g, L` as little-endian u32,
//!   then `L·N` complex samples as little-endian f64 pairs
//! - manifest: `key=value` lines, sorted by key

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::channel::{Echo, EchoEnsemble};
use crate::error::{Error, Result};
use crate::gabor::WeightSequence;
use crate::grid::{Cover, Grid, ScatteringFunction};
use crate::C64;

pub const ENSEMBLE_MAGIC: &[u8; 4] = b"SCID";
pub const ENSEMBLE_VERSION: u32 = 1;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Data lines of a CSV body after checking the header; yields `(line number, fields)`.
fn csv_rows<'a>(
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => return Err(parse_err(1, format!("expected header `{header}`"))),
    }
    Ok(lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(line, format!("bad {name} `{raw}`")))
}

pub fn write_scattering(sf: &ScatteringFunction) -> String {
    let mut out = String::from("a,b,s,q,value\n");
    for (j, &(a, b)) in sf.cover().cells().iter().enumerate() {
        let patch = sf.patch(j);
        for s in 0..patch.nrows() {
            for q in 0..patch.ncols() {
                let v = patch[(s, q)];
                if v != 0.0 {
                    let _ = writeln!(out, "{a},{b},{s},{q},{v:.16e}");
                }
            }
        }
    }
    out
}

/// Parses a scattering CSV onto `cover`; points absent from the file are zero.
pub fn read_scattering(text: &str, grid: &Grid, cover: &Cover) -> Result<ScatteringFunction> {
    let mut patches = vec![DMatrix::zeros(grid.n_t(), grid.n_g()); cover.len()];
    let mut seen = std::collections::HashSet::new();
    for (line, f) in csv_rows(text, "a,b,s,q,value")? {
        if f.len() != 5 {
            return Err(parse_err(line, "expected 5 fields"));
        }
        let a: usize = field(line, "a", f[0])?;
        let b: usize = field(line, "b", f[1])?;
        let s: usize = field(line, "s", f[2])?;
        let q: usize = field(line, "q", f[3])?;
        let v: f64 = field(line, "value", f[4])?;
        if s >= grid.n_t() || q >= grid.n_g() {
            return Err(parse_err(
                line,
                format!("fine index ({s}, {q}) outside the patch"),
            ));
        }
        if !seen.insert((a, b, s, q)) {
            return Err(parse_err(line, "duplicate point"));
        }
        let j = cover
            .position(a, b)
            .ok_or(Error::MassOutsideCover { a, b })?;
        patches[j][(s, q)] = v;
    }
    ScatteringFunction::new(grid.clone(), cover.clone(), patches)
}

pub fn write_mask(cover: &Cover, grid: &Grid) -> String {
    cover
        .mask(grid)
        .iter()
        .map(|row| {
            row.iter()
                .map(|&m| if m { '1' } else { '0' })
                .collect::<String>()
                + "\n"
        })
        .collect()
}

pub fn parse_mask(text: &str) -> Result<Vec<Vec<bool>>> {
    let rows = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    other => Err(parse_err(i + 1, format!("mask character `{other}`"))),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(parse_err(1, "empty mask"));
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Format("mask rows differ in length".into()));
    }
    Ok(rows)
}

pub fn write_weights(w: &WeightSequence) -> String {
    let mut out = String::from("k,re,im\n");
    for (k, c) in w.values().iter().enumerate() {
        let _ = writeln!(out, "{k},{:.16e},{:.16e}", c.re, c.im);
    }
    out
}

pub fn read_weights(text: &str) -> Result<WeightSequence> {
    let mut values = Vec::new();
    for (line, f) in csv_rows(text, "k,re,im")? {
        if f.len() != 3 {
            return Err(parse_err(line, "expected 3 fields"));
        }
        let k: usize = field(line, "k", f[0])?;
        if k != values.len() {
            return Err(parse_err(line, format!("expected k = {}", values.len())));
        }
        values.push(C64::new(field(line, "re", f[1])?, field(line, "im", f[2])?));
    }
    WeightSequence::from_values(values)
}

fn u32_of(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{name} = {v} does not fit in u32")))
}

pub fn write_ensemble(ens: &EchoEnsemble, mut out: impl Write) -> Result<()> {
    let g = ens.grid();
    out.write_all(ENSEMBLE_MAGIC)?;
    for v in [
        ENSEMBLE_VERSION,
        u32_of("J", g.j())?,
        u32_of("n_t", g.n_t())?,
        u32_of("n_g", g.n_g())?,
        u32_of("L", ens.len())?,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * g.total_samples());
    for echo in ens.echoes() {
        buf.clear();
        for z in echo.samples() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an ensemble; the header must agree with `grid`, which supplies `T`.
pub fn read_ensemble(grid: &Grid, mut input: impl Read) -> Result<EchoEnsemble> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != ENSEMBLE_MAGIC {
        return Err(Error::Format("not an echo ensemble file".into()));
    }
    let mut header = [0u32; 5];
    for h in header.iter_mut() {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *h = u32::from_le_bytes(b);
    }
    let [version, j, n_t, n_g, l] = header;
    if version != ENSEMBLE_VERSION {
        return Err(Error::Format(format!(
            "unsupported ensemble version {version}"
        )));
    }
    if (j as usize, n_t as usize, n_g as usize) != (grid.j(), grid.n_t(), grid.n_g()) {
        return Err(Error::Mismatch(format!(
            "ensemble has J={j}, n_t={n_t}, n_g={n_g}; config has J={}, n_t={}, n_g={}",
            grid.j(),
            grid.n_t(),
            grid.n_g()
        )));
    }
    let n = grid.total_samples();
    let mut buf = vec![0u8; 16 * n];
    let mut echoes = Vec::with_capacity(l as usize);
    for _ in 0..l {
        input.read_exact(&mut buf)?;
        let samples = buf
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        echoes.push(Echo::new(samples));
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after ensemble".into()));
    }
    EchoEnsemble::new(grid.clone(), echoes)
}

/// Flat `key=value` record; keys are kept sorted so output is canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest(pub BTreeMap<String, String>);

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }
    /// Floats are written in shortest round-trip scientific form.
    pub fn set_float(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, format!("{value:e}"))
    }
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, "expected key=value"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(parse_err(i + 1, "empty key"));
            }
            m.0.insert(k.to_string(), v.trim().to_string());
        }
        Ok(m)
    }
}
