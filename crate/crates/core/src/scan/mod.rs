//! Parallel evaluation of indicators and residuals over grids of starts.
//!
//! Rows are processed in batches. Within a batch the cells are evaluated on a
//! worker pool and gathered back by index, so the result does not depend on
//! the number of workers or the scheduling order. After every batch the
//! partial map can be written as a checkpoint; a resumed run skips the cells
//! already marked complete.

mod grid;

pub use grid::{GridSpec, Restriction};

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dynamics::{self, MeridianState, CRITICAL_ENERGY};
use crate::error::{Error, Result};
use crate::format;
use crate::indicators::{self, FirstPassage};
use crate::integrator::TerminalReason;
use crate::orbits;

/// Quantity painted on a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Mlce,
    EscapeTime,
    CrossingTime,
    LambdaMin,
    LambdaMax,
    LambdaSum,
    /// `p_rho` at the `n`-th equatorial crossing.
    Residual(usize),
}

impl Quantity {
    pub fn name(&self) -> String {
        match self {
            Quantity::Mlce => "mlce".into(),
            Quantity::EscapeTime => "t_esc".into(),
            Quantity::CrossingTime => "t_cross".into(),
            Quantity::LambdaMin => "lambda_min".into(),
            Quantity::LambdaMax => "lambda_max".into(),
            Quantity::LambdaSum => "lambda_sum".into(),
            Quantity::Residual(n) => format!("residual_{n}"),
        }
    }

    /// Whether a start at rest at `(z, rho)` is within the quantity's own
    /// domain. Indicators defined below the critical energy also need the
    /// start inside the bounded inner region, which for a start at rest is
    /// the region inside the field line `r^3 = 2 rho^2`.
    pub fn admits(&self, z: f64, rho: f64) -> bool {
        let Ok(h) = dynamics::potential(z, rho) else { return false };
        match self {
            Quantity::Mlce | Quantity::CrossingTime => {
                h < CRITICAL_ENERGY && dynamics::in_scan_domain(z, rho).unwrap_or(false)
            }
            Quantity::EscapeTime => h >= CRITICAL_ENERGY,
            Quantity::Residual(_) => z != 0.0,
            Quantity::LambdaMin | Quantity::LambdaMax | Quantity::LambdaSum => true,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('-', "_");
        Ok(match s.as_str() {
            "mlce" => Quantity::Mlce,
            "t_esc" => Quantity::EscapeTime,
            "t_cross" => Quantity::CrossingTime,
            "lambda_min" => Quantity::LambdaMin,
            "lambda_max" => Quantity::LambdaMax,
            "lambda_sum" => Quantity::LambdaSum,
            other => match other.strip_prefix("residual_").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Quantity::Residual(n),
                _ => return Err(Error::Config(format!("unknown quantity {other:?}"))),
            },
        })
    }
}

/// Per-cell status. Only `Ok`, `Escaped` (latitude extrema) and `Trapped`
/// cells carry a non-NaN value; trapped cells hold `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellFlag {
    Ok,
    /// Outside the grid restriction or the quantity's domain.
    Excluded,
    /// First-passage time exceeded the cap.
    Trapped,
    /// Left through `rho = 2` before the measurement finished.
    Escaped,
    /// Fell into the singularity guard.
    Singular,
    /// Fewer than `n` equatorial crossings before escape or the time cap.
    Unreachable,
    /// The evaluation returned an error.
    Failed,
    /// Not computed yet (checkpoints only).
    Pending,
}

impl CellFlag {
    pub fn code(self) -> char {
        match self {
            CellFlag::Ok => 'o',
            CellFlag::Excluded => 'x',
            CellFlag::Trapped => 't',
            CellFlag::Escaped => 'e',
            CellFlag::Singular => 's',
            CellFlag::Unreachable => 'u',
            CellFlag::Failed => 'f',
            CellFlag::Pending => 'p',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Some(match c {
            'o' => CellFlag::Ok,
            'x' => CellFlag::Excluded,
            't' => CellFlag::Trapped,
            'e' => CellFlag::Escaped,
            's' => CellFlag::Singular,
            'u' => CellFlag::Unreachable,
            'f' => CellFlag::Failed,
            'p' => CellFlag::Pending,
            _ => return None,
        })
    }
}

/// A painted map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub grid: GridSpec,
    pub quantity: Quantity,
    /// `nx * ny` values, row-major with `rho` fastest.
    pub values: Vec<f64>,
    pub flags: Vec<CellFlag>,
    /// Digest of the numerical configuration, grid and quantity.
    pub digest: String,
    pub version: String,
    /// Wall-clock seconds spent computing (not written to files).
    pub runtime: f64,
}

impl MapResult {
    fn pending(grid: GridSpec, quantity: Quantity, digest: String) -> Self {
        Self {
            grid,
            quantity,
            values: vec![f64::NAN; grid.len()],
            flags: vec![CellFlag::Pending; grid.len()],
            digest,
            version: env!("CARGO_PKG_VERSION").to_string(),
            runtime: 0.0,
        }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn flag(&self, i: usize, j: usize) -> CellFlag {
        self.flags[self.grid.index(i, j)]
    }

    pub fn completed(&self) -> usize {
        self.flags.iter().filter(|f| **f != CellFlag::Pending).count()
    }

    pub fn is_complete(&self) -> bool {
        self.completed() == self.flags.len()
    }

    pub fn count(&self, flag: CellFlag) -> usize {
        self.flags.iter().filter(|f| **f == flag).count()
    }

    /// Values as little-endian IEEE-754 doubles.
    pub fn payload(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Digest binding a map to its configuration, grid and quantity.
pub fn map_digest(config: &RunConfig, grid: &GridSpec, quantity: Quantity) -> String {
    config.digest_with(&format!("grid={}\nquantity={}\n", grid.canonical(), quantity.name()))
}

/// Evaluate one cell. Never fails: errors become `Failed` cells.
pub fn evaluate_cell(grid: &GridSpec, quantity: Quantity, config: &RunConfig, k: usize) -> (f64, CellFlag) {
    let (z, rho) = grid.start(k);
    if !grid.restriction.admits(z, rho) || !quantity.admits(z, rho) {
        return (f64::NAN, CellFlag::Excluded);
    }
    match evaluate_start(quantity, config, z, rho) {
        Ok(r) => r,
        Err(_) => (f64::NAN, CellFlag::Failed),
    }
}

fn passage(outcome: FirstPassage) -> (f64, CellFlag) {
    match outcome {
        FirstPassage::Reached(t) => (t, CellFlag::Ok),
        FirstPassage::Trapped => (f64::INFINITY, CellFlag::Trapped),
        FirstPassage::Singular(_) => (f64::NAN, CellFlag::Singular),
    }
}

fn evaluate_start(quantity: Quantity, config: &RunConfig, z: f64, rho: f64) -> Result<(f64, CellFlag)> {
    let start = MeridianState::at_rest(z, rho);
    Ok(match quantity {
        Quantity::Mlce => {
            let r = indicators::mlce(&start, &config.mlce_config())?;
            if r.flags.hit_singularity {
                (f64::NAN, CellFlag::Singular)
            } else if r.flags.escaped {
                (f64::NAN, CellFlag::Escaped)
            } else {
                (r.value, CellFlag::Ok)
            }
        }
        Quantity::EscapeTime => {
            passage(indicators::escape_time(&start, config.trapped_cap, &config.integrator)?.outcome)
        }
        Quantity::CrossingTime => {
            passage(indicators::crossing_time(&start, config.trapped_cap, &config.integrator)?.outcome)
        }
        Quantity::LambdaMin | Quantity::LambdaMax | Quantity::LambdaSum => {
            let r = indicators::lambda_extrema(&start, config.lambda_time, &config.integrator)?;
            let flag = match r.early_termination {
                None => CellFlag::Ok,
                Some(TerminalReason::Singularity) => return Ok((f64::NAN, CellFlag::Singular)),
                Some(_) => CellFlag::Escaped,
            };
            let v = match quantity {
                Quantity::LambdaMin => r.lambda_min,
                Quantity::LambdaMax => r.lambda_max,
                _ => r.sum,
            };
            (v, flag)
        }
        Quantity::Residual(n) => match orbits::nth_crossing(z, rho, n, &config.orbit_config())? {
            Some(c) => (c.p_rho, CellFlag::Ok),
            None => (f64::NAN, CellFlag::Unreachable),
        },
    })
}

/// Controls batching, checkpointing and interruption of a scan.
#[derive(Debug, Clone, Default)]
pub struct ScanOptions<'a> {
    /// Rows per batch; `0` picks a default.
    pub batch_rows: usize,
    /// Written after every batch.
    pub checkpoint: Option<&'a Path>,
    /// Partial result to continue from.
    pub resume: Option<MapResult>,
    /// Stop after this many batches (the partial map is returned).
    pub max_batches: Option<usize>,
}

pub(crate) fn build_pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    let workers = config.resolved_workers()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Scan `grid` for `quantity` in one go.
pub fn scan(grid: &GridSpec, quantity: Quantity, config: &RunConfig) -> Result<MapResult> {
    scan_with(grid, quantity, config, ScanOptions::default())
}

/// Scan with batching, checkpoints and optional resume.
pub fn scan_with(grid: &GridSpec, quantity: Quantity, config: &RunConfig, options: ScanOptions<'_>) -> Result<MapResult> {
    grid.validate()?;
    config.validate()?;
    if let Quantity::Residual(0) = quantity {
        return Err(Error::Precondition("crossing ordinals start at 1".into()));
    }
    let digest = map_digest(config, grid, quantity);
    let mut map = match options.resume {
        Some(prev) => {
            if prev.digest != digest {
                return Err(Error::Checkpoint(format!(
                    "digest {} does not match this run ({digest})",
                    prev.digest
                )));
            }
            if prev.grid != *grid || prev.quantity != quantity || prev.values.len() != grid.len() {
                return Err(Error::Checkpoint("grid or quantity differs from this run".into()));
            }
            prev
        }
        None => MapResult::pending(*grid, quantity, digest),
    };
    let pool = build_pool(config)?;
    let started = Instant::now();
    let batch_rows = if options.batch_rows == 0 { 8 } else { options.batch_rows };
    let mut batches = 0usize;
    for first_row in (0..grid.ny).step_by(batch_rows) {
        let rows = first_row..(first_row + batch_rows).min(grid.ny);
        let todo: Vec<usize> = rows
            .flat_map(|j| (0..grid.nx).map(move |i| grid.index(i, j)))
            .filter(|&k| map.flags[k] == CellFlag::Pending)
            .collect();
        if todo.is_empty() {
            continue;
        }
        if options.max_batches.is_some_and(|m| batches >= m) {
            break;
        }
        let results: Vec<(f64, CellFlag)> =
            pool.install(|| todo.par_iter().map(|&k| evaluate_cell(grid, quantity, config, k)).collect());
        for (&k, (v, f)) in todo.iter().zip(results) {
            map.values[k] = v;
            map.flags[k] = f;
        }
        batches += 1;
        if let Some(path) = options.checkpoint {
            format::write_map_file(path, &map, format::Encoding::Binary)?;
        }
    }
    map.runtime += started.elapsed().as_secs_f64();
    Ok(map)
}

/// Continue the scan stored in the checkpoint at `path`, updating it after
/// every batch. A missing checkpoint starts from scratch.
pub fn resume(path: &Path, grid: &GridSpec, quantity: Quantity, config: &RunConfig, max_batches: Option<usize>) -> Result<MapResult> {
    let previous = if path.exists() { Some(format::read_map_file(path)?) } else { None };
    scan_with(
        grid,
        quantity,
        config,
        ScanOptions { batch_rows: 0, checkpoint: Some(path), resume: previous, max_batches },
    )
}

/// A grid edge whose end cells have residuals of opposite sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignEdge {
    /// `(i, j)` of the lower-index end.
    pub a: (usize, usize),
    /// `(i, j)` of the other end, one step along `rho` or `z`.
    pub b: (usize, usize),
}

/// Edges between horizontally or vertically adjacent computed cells whose
/// values differ in sign (zero counts as non-negative).
pub fn sign_edges(map: &MapResult) -> Vec<SignEdge> {
    let g = &map.grid;
    let usable = |i: usize, j: usize| map.flag(i, j) == CellFlag::Ok && map.value(i, j).is_finite();
    let mut edges = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            if !usable(i, j) {
                continue;
            }
            let neg = map.value(i, j) < 0.0;
            if i + 1 < g.nx && usable(i + 1, j) && (map.value(i + 1, j) < 0.0) != neg {
                edges.push(SignEdge { a: (i, j), b: (i + 1, j) });
            }
            if j + 1 < g.ny && usable(i, j + 1) && (map.value(i, j + 1) < 0.0) != neg {
                edges.push(SignEdge { a: (i, j), b: (i, j + 1) });
            }
        }
    }
    edges
}

/// Residual map for crossing ordinal `n` plus its sign-change edges.
pub fn scan_residual(grid: &GridSpec, n: usize, config: &RunConfig) -> Result<(MapResult, Vec<SignEdge>)> {
    if grid.touches_equator() {
        return Err(Error::Precondition(
            "residual scans need a z band that excludes the equator".into(),
        ));
    }
    let map = scan(grid, Quantity::Residual(n), config)?;
    let edges = sign_edges(&map);
    Ok((map, edges))
}
