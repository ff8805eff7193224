//! Text and binary file formats for maps, sign-change edges, orbits and
//! trajectories.
//!
//! Every file opens with `#` header lines carrying a format tag and the
//! configuration digest. Floats are printed with 17 significant digits so
//! text round-trips are exact.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::orbits::{FamilyPolyline, PeriodicOrbit};
use crate::scan::{CellFlag, GridSpec, MapResult, Quantity, Restriction, SignEdge};

pub const MAP_TAG: &str = "STRMAP/1";
pub const EDGES_TAG: &str = "STREDGE/1";
pub const ORBITS_TAG: &str = "STRORB/1";
pub const TRAJECTORY_TAG: &str = "STRTRJ/1";
const END_HEADER: &str = "# end-header";

/// Body encoding of a map file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    /// Little-endian IEEE-754 doubles, row-major with `rho` fastest.
    Binary,
}

impl Encoding {
    fn name(self) -> &'static str {
        match self {
            Encoding::Ascii => "ascii",
            Encoding::Binary => "f64le",
        }
    }
}

/// `{:.16e}` with `nan` / `inf` / `-inf` literals.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Format(format!("bad number {s:?}"))),
    }
}

fn rle_flags(flags: &[CellFlag]) -> String {
    let mut out = Vec::new();
    let mut iter = flags.iter().peekable();
    while let Some(&f) = iter.next() {
        let mut n = 1usize;
        while iter.peek() == Some(&&f) {
            iter.next();
            n += 1;
        }
        out.push(format!("{}{}", f.code(), n));
    }
    out.join(" ")
}

fn parse_rle_flags(s: &str, len: usize) -> Result<Vec<CellFlag>> {
    let mut flags = Vec::with_capacity(len);
    for run in s.split_whitespace() {
        let mut chars = run.chars();
        let code = chars.next().ok_or_else(|| Error::Format("empty flag run".into()))?;
        let flag = CellFlag::from_code(code).ok_or_else(|| Error::Format(format!("unknown cell flag {code:?}")))?;
        let n: usize = chars.as_str().parse().map_err(|_| Error::Format(format!("bad flag run {run:?}")))?;
        if flags.len() + n > len {
            return Err(Error::Format("flag runs exceed the grid size".into()));
        }
        flags.extend(std::iter::repeat_n(flag, n));
    }
    if flags.len() != len {
        return Err(Error::Format(format!("flag runs cover {} of {len} cells", flags.len())));
    }
    Ok(flags)
}

/// Write a map with the given body encoding.
pub fn write_map<W: Write>(mut w: W, map: &MapResult, encoding: Encoding) -> Result<()> {
    let g = &map.grid;
    let mut header = String::new();
    header.push_str(&format!("# {MAP_TAG}\n"));
    header.push_str(&format!("# quantity={}\n", map.quantity.name()));
    header.push_str(&format!("# rho_lo={}\n# rho_hi={}\n", fmt_f64(g.rho_lo), fmt_f64(g.rho_hi)));
    header.push_str(&format!("# z_lo={}\n# z_hi={}\n", fmt_f64(g.z_lo), fmt_f64(g.z_hi)));
    header.push_str(&format!("# nx={}\n# ny={}\n", g.nx, g.ny));
    header.push_str(&format!("# restriction={}\n", g.restriction.name()));
    header.push_str("# sentinel=nan\n# trapped=inf\n");
    header.push_str(&format!("# encoding={}\n", encoding.name()));
    header.push_str(&format!("# digest={}\n", map.digest));
    header.push_str(&format!("# version={}\n", map.version));
    header.push_str(&format!("# flags={}\n", rle_flags(&map.flags)));
    header.push_str(END_HEADER);
    header.push('\n');
    w.write_all(header.as_bytes())?;
    match encoding {
        Encoding::Ascii => {
            for row in map.values.chunks(g.nx) {
                let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Encoding::Binary => w.write_all(&map.payload())?,
    }
    w.flush()?;
    Ok(())
}

fn read_header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Format("unexpected end of file in header".into()));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

/// Header `key=value` pairs of a tagged file, in order.
fn read_header<R: BufRead>(r: &mut R, tag: &str) -> Result<Vec<(String, String)>> {
    let first = read_header_line(r)?;
    let found = first.strip_prefix("# ").unwrap_or("");
    if found != tag {
        return Err(Error::Format(format!("expected format tag {tag}, found {first:?}")));
    }
    let mut pairs = Vec::new();
    loop {
        let line = read_header_line(r)?;
        if line == END_HEADER {
            return Ok(pairs);
        }
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| Error::Format(format!("header line without '#': {line:?}")))?
            .trim();
        if let Some((k, v)) = body.split_once('=') {
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
}

fn field<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Format(format!("header lacks {key}")))
}

fn field_f64(pairs: &[(String, String)], key: &str) -> Result<f64> {
    parse_f64(field(pairs, key)?)
}

fn field_usize(pairs: &[(String, String)], key: &str) -> Result<usize> {
    field(pairs, key)?.parse().map_err(|_| Error::Format(format!("bad {key}")))
}

pub fn read_map<R: Read>(r: R) -> Result<MapResult> {
    let mut r = BufReader::new(r);
    let h = read_header(&mut r, MAP_TAG)?;
    let quantity: Quantity = field(&h, "quantity")?.parse().map_err(|e| Error::Format(format!("{e}")))?;
    let restriction: Restriction = field(&h, "restriction")?.parse().map_err(|e| Error::Format(format!("{e}")))?;
    let grid = GridSpec::new(
        (field_f64(&h, "rho_lo")?, field_f64(&h, "rho_hi")?, field_usize(&h, "nx")?),
        (field_f64(&h, "z_lo")?, field_f64(&h, "z_hi")?, field_usize(&h, "ny")?),
        restriction,
    )
    .map_err(|e| Error::Format(format!("{e}")))?;
    let n = grid.len();
    let flags = parse_rle_flags(field(&h, "flags")?, n)?;
    let values = match field(&h, "encoding")? {
        "ascii" => {
            let mut text = String::new();
            r.read_to_string(&mut text)?;
            let values = text.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>()?;
            if values.len() != n {
                return Err(Error::Format(format!("expected {n} values, found {}", values.len())));
            }
            values
        }
        "f64le" => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            if bytes.len() != 8 * n {
                return Err(Error::Format(format!("expected {} payload bytes, found {}", 8 * n, bytes.len())));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
        }
        other => return Err(Error::Format(format!("unknown encoding {other:?}"))),
    };
    Ok(MapResult {
        grid,
        quantity,
        values,
        flags,
        digest: field(&h, "digest")?.to_string(),
        version: field(&h, "version")?.to_string(),
        runtime: 0.0,
    })
}

/// Write atomically through a temporary file in the same directory.
fn write_atomic(path: &Path, write: impl FnOnce(&mut io::BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_map_file(path: &Path, map: &MapResult, encoding: Encoding) -> Result<()> {
    write_atomic(path, |w| write_map(w, map, encoding))
}

pub fn read_map_file(path: &Path) -> Result<MapResult> {
    read_map(fs::File::open(path)?)
}

pub fn write_edges<W: Write>(mut w: W, digest: &str, edges: &[SignEdge]) -> Result<()> {
    writeln!(w, "# {EDGES_TAG}")?;
    writeln!(w, "# digest={digest}")?;
    writeln!(w, "# columns=i_a j_a i_b j_b")?;
    writeln!(w, "{END_HEADER}")?;
    for e in edges {
        writeln!(w, "{} {} {} {}", e.a.0, e.a.1, e.b.0, e.b.1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_edges<R: Read>(r: R) -> Result<(String, Vec<SignEdge>)> {
    let mut r = BufReader::new(r);
    let h = read_header(&mut r, EDGES_TAG)?;
    let digest = field(&h, "digest")?.to_string();
    let mut edges = Vec::new();
    for line in r.lines() {
        let line = line?;
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad edge line {line:?}"))))
            .collect::<Result<_>>()?;
        match nums[..] {
            [] => continue,
            [ia, ja, ib, jb] => edges.push(SignEdge { a: (ia, ja), b: (ib, jb) }),
            _ => return Err(Error::Format(format!("bad edge line {line:?}"))),
        }
    }
    Ok((digest, edges))
}

/// One `key=value` record per orbit, then one per family.
pub fn write_orbits<W: Write>(mut w: W, digest: &str, orbits: &[PeriodicOrbit], families: &[FamilyPolyline]) -> Result<()> {
    writeln!(w, "# {ORBITS_TAG}")?;
    writeln!(w, "# digest={digest}")?;
    writeln!(w, "{END_HEADER}")?;
    for o in orbits {
        let family = o.family_id.map_or_else(|| "none".to_string(), |f| f.to_string());
        let residuals: Vec<String> = o.residuals.iter().map(|r| fmt_f64(*r)).collect();
        writeln!(
            w,
            "kind=orbit class={} z0={} rho0={} H={} t_perp={} period={} perp_norm={} half_norm={} full_norm={} \
             residuals={} n_eq_half={} n_thalweg_half={} family={}",
            o.class_n,
            fmt_f64(o.z0),
            fmt_f64(o.rho0),
            fmt_f64(o.energy),
            fmt_f64(o.t_perp),
            fmt_f64(o.period),
            fmt_f64(o.norms.perp()),
            fmt_f64(o.norms.half),
            fmt_f64(o.norms.full),
            residuals.join(","),
            o.n_eq_half,
            o.n_thalweg_half,
            family,
        )?;
    }
    for f in families {
        let pts: Vec<String> = f.points.iter().map(|p| format!("{}:{}", fmt_f64(p.z0), fmt_f64(p.rho0))).collect();
        writeln!(
            w,
            "kind=family id={} class={} loop={} side={} n={} points={}",
            f.id,
            f.class_n,
            f.is_loop as u8,
            f.thalweg_side(),
            f.points.len(),
            pts.join(";"),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed orbit-file record: its fields in order of appearance.
pub type Record = Vec<(String, String)>;

pub fn read_orbit_records<R: Read>(r: R) -> Result<(String, Vec<Record>)> {
    let mut r = BufReader::new(r);
    let h = read_header(&mut r, ORBITS_TAG)?;
    let digest = field(&h, "digest")?.to_string();
    let mut records = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = line
            .split_whitespace()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("field without '=': {kv:?}")))
            })
            .collect::<Result<Record>>()?;
        records.push(rec);
    }
    Ok((digest, records))
}

/// Look up a field of a parsed record.
pub fn record_field<'a>(rec: &'a Record, key: &str) -> Option<&'a str> {
    rec.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Column names of a trajectory file.
pub const TRAJECTORY_COLUMNS: [&str; 8] = ["t", "z", "rho", "p_z", "p_rho", "H", "lambda", "thalweg"];

pub fn write_trajectory<W: Write>(mut w: W, digest: &str, header: &[(&str, String)], rows: &[[f64; 8]]) -> Result<()> {
    writeln!(w, "# {TRAJECTORY_TAG}")?;
    writeln!(w, "# digest={digest}")?;
    for (k, v) in header {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "# columns={}", TRAJECTORY_COLUMNS.join(" "))?;
    writeln!(w, "{END_HEADER}")?;
    for row in rows {
        let cols: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", cols.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Header pairs and rows of a trajectory file.
pub fn read_trajectory<R: Read>(r: R) -> Result<(Vec<(String, String)>, Vec<[f64; 8]>)> {
    let mut r = BufReader::new(r);
    let h = read_header(&mut r, TRAJECTORY_TAG)?;
    let mut rows = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>()?;
        let row: [f64; 8] = vals
            .try_into()
            .map_err(|_| Error::Format(format!("trajectory row needs 8 columns: {line:?}")))?;
        rows.push(row);
    }
    Ok((h, rows))
}
