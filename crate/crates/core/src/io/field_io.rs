//! Binary field files.
//!
//! Layout: the magic `HGPF1\n`, a block of `key=value` header lines closed by
//! an empty line, then one little-endian `f64` per node in flat index order
//! (transverse indices slowest, `tau` fastest).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{make_grid, CellSpec, Field, Grid, Resolution};
use crate::heis::{build_integer_base, parse_rational};

const MAGIC: &[u8] = b"HGPF1\n";

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn header(grid: &Grid) -> Vec<(String, String)> {
    let spec = grid.spec();
    let base = &spec.base;
    let r = grid.resolution();
    let mut h = vec![
        ("n".to_string(), base.n().to_string()),
        (
            "omega_num".into(),
            join(base.omega().iter().map(|q| q.numer().clone())),
        ),
        (
            "omega_den".into(),
            join(base.omega().iter().map(|q| q.denom().clone())),
        ),
    ];
    for (j, k) in base.vectors().iter().enumerate() {
        h.push((format!("k{}", j + 1), join(&k.0)));
    }
    h.extend([
        ("theta".to_string(), base.theta().to_string()),
        ("p".into(), spec.p.to_string()),
        ("m".into(), format!("{:?}", spec.m)),
        ("l".into(), format!("{:?}", spec.l)),
        ("delta".into(), format!("{:?}", spec.delta)),
        ("resolution".into(), join([r.ns, r.na, r.nt])),
        (
            "spacing".into(),
            format!("{:?} {:?} {:?}", grid.ds(), grid.da(), grid.dtau()),
        ),
        ("nodes".into(), grid.len().to_string()),
    ]);
    h
}

pub fn dump_field(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for (k, v) in header(field.grid()) {
        writeln!(w, "{k}={v}")?;
    }
    writeln!(w)?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_err(m: impl Into<String>) -> Error {
    Error::Format(m.into())
}

struct Parsed {
    entries: Vec<(String, String)>,
    payload: Vec<u8>,
}

fn read_parts(path: &Path) -> Result<Parsed> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err("file shorter than the magic"))?;
    if magic != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    let mut entries = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(fmt_err("header not terminated by an empty line"));
        }
        let line = line.trim_end_matches('\n');
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| fmt_err(format!("malformed header line {line:?}")))?;
        entries.push((k.to_string(), v.to_string()));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok(Parsed { entries, payload })
}

fn lookup<'a>(entries: &'a [(String, String)], key: &str) -> Result<&'a str> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| fmt_err(format!("header lacks {key:?}")))
}

fn num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse()
        .map_err(|_| fmt_err(format!("bad value for {key}: {s:?}")))
}

fn grid_from_header(entries: &[(String, String)]) -> Result<Grid> {
    let nums: Vec<&str> = lookup(entries, "omega_num")?.split(' ').collect();
    let dens: Vec<&str> = lookup(entries, "omega_den")?.split(' ').collect();
    if nums.len() != dens.len() {
        return Err(fmt_err("omega numerators and denominators differ in length"));
    }
    let omega = nums
        .iter()
        .zip(&dens)
        .map(|(a, b)| parse_rational(&format!("{a}/{b}")))
        .collect::<Result<Vec<_>>>()?;
    let base = build_integer_base(&omega)?;
    let p = num(lookup(entries, "p")?, "p")?;
    let m = num(lookup(entries, "m")?, "m")?;
    let l = num(lookup(entries, "l")?, "l")?;
    let delta = num(lookup(entries, "delta")?, "delta")?;
    let res: Vec<usize> = lookup(entries, "resolution")?
        .split(' ')
        .map(|s| num(s, "resolution"))
        .collect::<Result<_>>()?;
    if res.len() != 3 {
        return Err(fmt_err("resolution needs three entries"));
    }
    let spec = CellSpec::new(base, p, m, l, delta)?;
    make_grid(spec, Resolution::new(res[0], res[1], res[2]))
}

fn decode(grid: Arc<Grid>, entries: &[(String, String)], payload: &[u8]) -> Result<Field> {
    // every header entry must agree with the grid it describes
    let expected = header(&grid);
    for (k, v) in &expected {
        let got = lookup(entries, k)?;
        if got != v {
            return Err(fmt_err(format!("header {k}={got} does not match the grid ({v})")));
        }
    }
    let nodes = grid.len();
    if payload.len() != nodes * 8 {
        return Err(fmt_err(format!(
            "payload holds {} bytes, expected {} for {nodes} nodes",
            payload.len(),
            nodes * 8
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Field::new(grid, values)
}

/// Reads a field and rebuilds its grid from the header.
pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    let parsed = read_parts(path.as_ref())?;
    let grid = Arc::new(grid_from_header(&parsed.entries)?);
    decode(grid, &parsed.entries, &parsed.payload)
}

/// Reads a field that must live on `grid`.
pub fn load_field_onto(path: impl AsRef<Path>, grid: Arc<Grid>) -> Result<Field> {
    let parsed = read_parts(path.as_ref())?;
    decode(grid, &parsed.entries, &parsed.payload).map_err(|e| match e {
        Error::Format(m) if m.contains("does not match") => Error::GridMismatch,
        other => other,
    })
}
