//! Rectangular grids of zero-velocity starts in the `(rho, z)` plane.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::{self, CRITICAL_ENERGY};
use crate::error::{Error, Result};

/// Which cells of a grid are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Restriction {
    All,
    /// `H < 1/32`.
    HBelowCritical,
    /// `H >= 1/32`.
    HAtLeastCritical,
    /// Inside the dipole field line through `(0, 2)`: `r^3 <= 2 rho^2`.
    InsideFieldLine,
}

impl Restriction {
    pub fn name(self) -> &'static str {
        match self {
            Restriction::All => "all",
            Restriction::HBelowCritical => "h-below",
            Restriction::HAtLeastCritical => "h-at-least",
            Restriction::InsideFieldLine => "inside-field-line",
        }
    }

    /// Whether a start at rest at `(z, rho)` passes the restriction.
    pub fn admits(self, z: f64, rho: f64) -> bool {
        match self {
            Restriction::All => true,
            Restriction::HBelowCritical => dynamics::potential(z, rho).is_ok_and(|h| h < CRITICAL_ENERGY),
            Restriction::HAtLeastCritical => dynamics::potential(z, rho).is_ok_and(|h| h >= CRITICAL_ENERGY),
            Restriction::InsideFieldLine => dynamics::in_scan_domain(z, rho).unwrap_or(false),
        }
    }
}

impl FromStr for Restriction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(Restriction::All),
            "h-below" | "h_below_1_32" => Ok(Restriction::HBelowCritical),
            "h-at-least" | "h_at_least_1_32" => Ok(Restriction::HAtLeastCritical),
            "inside-field-line" | "inside_field_line" => Ok(Restriction::InsideFieldLine),
            other => Err(Error::Config(format!("unknown restriction {other:?}"))),
        }
    }
}

/// Cell-centred sampling of `[rho_lo, rho_hi] x [z_lo, z_hi]` with `nx`
/// columns along `rho` and `ny` rows along `z`. Values are stored row-major
/// with `rho` as the fast axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub nx: usize,
    pub ny: usize,
    pub restriction: Restriction,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rho_lo: 0.02,
            rho_hi: 2.1,
            z_lo: 0.005,
            z_hi: 1.25,
            nx: 400,
            ny: 300,
            restriction: Restriction::All,
        }
    }
}

/// Centre of cell `k` of `n` on `[lo, hi]`. Written so that the centre of
/// cell `n - 1 - k` on `[-hi, -lo]` is exactly the negation.
fn centre(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    let a = (n - k) as f64 - 0.5;
    let b = k as f64 + 0.5;
    (a * lo + b * hi) / n as f64
}

impl GridSpec {
    pub fn new(rho: (f64, f64, usize), z: (f64, f64, usize), restriction: Restriction) -> Result<Self> {
        let g = Self { rho_lo: rho.0, rho_hi: rho.1, nx: rho.2, z_lo: z.0, z_hi: z.1, ny: z.2, restriction };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.rho_lo, self.rho_hi, self.z_lo, self.z_hi].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if !(self.rho_lo > 0.0) {
            return Err(Error::Config(format!("grid needs rho_lo > 0, got {}", self.rho_lo)));
        }
        if !(self.rho_hi > self.rho_lo && self.z_hi > self.z_lo) {
            return Err(Error::Config("grid bounds must be increasing".into()));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config(format!("grid needs nx, ny >= 2, got {}x{}", self.nx, self.ny)));
        }
        Ok(())
    }

    pub fn with_restriction(mut self, restriction: Restriction) -> Self {
        self.restriction = restriction;
        self
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rho_at(&self, i: usize) -> f64 {
        centre(self.rho_lo, self.rho_hi, self.nx, i)
    }

    pub fn z_at(&self, j: usize) -> f64 {
        centre(self.z_lo, self.z_hi, self.ny, j)
    }

    /// Flat index of cell `(i, j)` (column `i` along `rho`, row `j` along `z`).
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    /// `(z0, rho0)` of the start in cell `k`.
    pub fn start(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.cell(k);
        (self.z_at(j), self.rho_at(i))
    }

    /// The same grid reflected through the equator. Row `j` of the result
    /// holds the mirror image of row `ny - 1 - j`.
    pub fn mirrored(&self) -> Self {
        Self { z_lo: -self.z_hi, z_hi: -self.z_lo, ..*self }
    }

    /// Whether some row lies on or across the equator.
    pub fn touches_equator(&self) -> bool {
        self.z_lo <= 0.0 && self.z_hi >= 0.0
    }

    /// Stable text form, also accepted by `parse`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rho={:?}:{:?}:{},z={:?}:{:?}:{},restrict={}",
            self.rho_lo,
            self.rho_hi,
            self.nx,
            self.z_lo,
            self.z_hi,
            self.ny,
            self.restriction.name()
        )
    }
}

fn parse_axis(key: &str, s: &str) -> Result<(f64, f64, usize)> {
    let bad = || Error::Config(format!("grid axis {key}: expected LO:HI:N, got {s:?}"));
    let mut parts = s.split(':');
    let (Some(lo), Some(hi), Some(n), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(bad());
    };
    let lo = lo.trim().parse::<f64>().map_err(|_| bad())?;
    let hi = hi.trim().parse::<f64>().map_err(|_| bad())?;
    let n = n.trim().parse::<usize>().map_err(|_| bad())?;
    Ok((lo, hi, n))
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `rho=LO:HI:NX,z=LO:HI:NY[,restrict=NAME]`; `default` gives the
    /// standard grid.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "default" {
            return Ok(Self::default());
        }
        let (mut rho, mut z, mut restriction) = (None, None, Restriction::All);
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("grid spec: expected key=value, got {part:?}")))?;
            match k.trim() {
                "rho" => rho = Some(parse_axis("rho", v)?),
                "z" => z = Some(parse_axis("z", v)?),
                "restrict" => restriction = v.parse()?,
                other => return Err(Error::Config(format!("grid spec: unknown key {other:?}"))),
            }
        }
        let rho = rho.ok_or_else(|| Error::Config("grid spec needs rho=LO:HI:NX".into()))?;
        let z = z.ok_or_else(|| Error::Config("grid spec needs z=LO:HI:NY".into()))?;
        Self::new(rho, z, restriction)
    }
}
