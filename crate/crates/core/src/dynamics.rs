//! Meridian-plane dynamics of a charged particle in a dipole field.
//!
//! Everything here is dimensionless: lengths are in units of the Störmer
//! length built from the conserved azimuthal momentum, so the effective
//! potential is
//!
//! ```text
//! V(z, rho) = 1/2 * (1/rho - rho / r^3)^2,   r^2 = z^2 + rho^2
//! ```
//!
//! and the Hamiltonian is `H = (p_z^2 + p_rho^2) / 2 + V`. The potential
//! vanishes on the thalweg `r^3 = rho^2` and the equatorial saddle at
//! `(0, 2)` sits at the critical energy `1/32`.

use crate::error::DomainError;

/// Energy of the equatorial saddle at `rho = 2`; below it the inner allowed
/// region is closed.
pub const CRITICAL_ENERGY: f64 = 1.0 / 32.0;

/// Radius at which a particle is counted as escaped.
pub const ESCAPE_RADIUS: f64 = 2.0;

/// States closer than this to the axis or the origin are rejected.
pub const AXIS_GUARD: f64 = 1e-6;

/// A point of the reduced phase space together with its time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeridianState {
    pub z: f64,
    pub rho: f64,
    pub p_z: f64,
    pub p_rho: f64,
    pub t: f64,
}

impl MeridianState {
    pub fn new(z: f64, rho: f64, p_z: f64, p_rho: f64) -> Self {
        Self { z, rho, p_z, p_rho, t: 0.0 }
    }

    /// A start with zero meridian velocity at `t = 0`.
    pub fn at_rest(z: f64, rho: f64) -> Self {
        Self::new(z, rho, 0.0, 0.0)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.z, self.rho, self.p_z, self.p_rho]
    }

    pub fn from_array(y: [f64; 4], t: f64) -> Self {
        Self { z: y[0], rho: y[1], p_z: y[2], p_rho: y[3], t }
    }

    /// The image under `z -> -z`.
    pub fn mirrored(&self) -> Self {
        Self { z: -self.z, p_z: -self.p_z, ..*self }
    }

    pub fn radius(&self) -> f64 {
        self.z.hypot(self.rho)
    }
}

/// Time derivative of a [`MeridianState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDerivative {
    pub dz: f64,
    pub drho: f64,
    /// Axial force `f(z, rho) = -dV/dz`.
    pub dp_z: f64,
    /// Radial force `g(z, rho) = -dV/drho`.
    pub dp_rho: f64,
}

impl PhaseDerivative {
    pub fn to_array(&self) -> [f64; 4] {
        [self.dz, self.drho, self.dp_z, self.dp_rho]
    }
}

/// Inner and outer turning radii of purely equatorial motion at a given energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPoints {
    pub rho_min: f64,
    pub rho_max: f64,
}

impl TurningPoints {
    /// Radius just inside `rho_max` whose outward crossing defines the crossing time.
    pub fn crossing_threshold(&self) -> f64 {
        self.rho_max - (self.rho_max - self.rho_min) / 50.0
    }
}

/// Intermediate geometric quantities shared by the potential and its derivatives.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    inv_rho: f64,
    inv_r3: f64,
    inv_r5: f64,
    /// `B = 1/rho - rho/r^3`, so that `V = B^2 / 2`.
    b: f64,
}

#[inline]
fn geometry(z: f64, rho: f64) -> Result<Geometry, DomainError> {
    let r2 = z * z + rho * rho;
    if !(rho >= AXIS_GUARD) || !(r2 >= AXIS_GUARD * AXIS_GUARD) || !r2.is_finite() {
        return Err(DomainError::Singular { z, rho });
    }
    let r = r2.sqrt();
    let inv_r3 = 1.0 / (r2 * r);
    let inv_r5 = inv_r3 / r2;
    let inv_rho = 1.0 / rho;
    Ok(Geometry { inv_rho, inv_r3, inv_r5, b: inv_rho - rho * inv_r3 })
}

/// Effective potential `V(z, rho)`.
pub fn potential(z: f64, rho: f64) -> Result<f64, DomainError> {
    let g = geometry(z, rho)?;
    Ok(0.5 * g.b * g.b)
}

/// Right-hand side of Hamilton's equations.
pub fn eom_rhs(state: &MeridianState) -> Result<PhaseDerivative, DomainError> {
    let (f, g) = forces(state.z, state.rho)?;
    Ok(PhaseDerivative { dz: state.p_z, drho: state.p_rho, dp_z: f, dp_rho: g })
}

/// The force pair `(f, g) = (-dV/dz, -dV/drho)`.
///
/// `f` is computed with `z` as an explicit factor and `g` depends on `z` only
/// through `z^2`, so both parities hold bit-exactly.
#[inline]
pub fn forces(z: f64, rho: f64) -> Result<(f64, f64), DomainError> {
    let g = geometry(z, rho)?;
    let f = -3.0 * z * rho * g.b * g.inv_r5;
    let radial =
        (g.inv_rho * g.inv_rho - 3.0 * rho * rho * g.inv_r5 + g.inv_r3) * g.b;
    Ok((f, radial))
}

pub fn energy(state: &MeridianState) -> Result<f64, DomainError> {
    let v = potential(state.z, state.rho)?;
    Ok(0.5 * (state.p_z * state.p_z + state.p_rho * state.p_rho) + v)
}

/// Second derivatives of `-V`: `[[df/dz, df/drho], [dg/dz, dg/drho]]`.
///
/// The mixed entry is computed once, so the block is exactly symmetric.
pub fn force_hessian(z: f64, rho: f64) -> Result<[[f64; 2]; 2], DomainError> {
    let g = geometry(z, rho)?;
    let inv_r7 = g.inv_r5 / (z * z + rho * rho);
    let rho2 = rho * rho;
    let b_z = 3.0 * rho * z * g.inv_r5;
    let b_rho = -g.inv_rho * g.inv_rho - g.inv_r3 + 3.0 * rho2 * g.inv_r5;
    let b_zz = 3.0 * rho * g.inv_r5 - 15.0 * rho * z * z * inv_r7;
    let b_zrho = z * (3.0 * g.inv_r5 - 15.0 * rho2 * inv_r7);
    let b_rhorho =
        2.0 * g.inv_rho * g.inv_rho * g.inv_rho + 9.0 * rho * g.inv_r5 - 15.0 * rho2 * rho * inv_r7;
    let f_z = -(b_z * b_z + g.b * b_zz);
    let f_rho = -(b_z * b_rho + g.b * b_zrho);
    let g_rho = -(b_rho * b_rho + g.b * b_rhorho);
    Ok([[f_z, f_rho], [f_rho, g_rho]])
}

/// Linearization of [`eom_rhs`] in the variable order `(z, rho, p_z, p_rho)`.
pub fn jacobian(state: &MeridianState) -> Result<[[f64; 4]; 4], DomainError> {
    let h = force_hessian(state.z, state.rho)?;
    Ok([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [h[0][0], h[0][1], 0.0, 0.0],
        [h[1][0], h[1][1], 0.0, 0.0],
    ])
}

/// Closed-form turning radii for equatorial motion, valid for `0 < H <= 1/32`.
///
/// With `s = sqrt(2H)` the radii are `(1 - sqrt(1 - 4s)) / 2s` and
/// `(sqrt(1 + 4s) - 1) / 2s`; they are evaluated in the rationalized form
/// `2 / (1 + sqrt(1 -+ 4s))`, which is free of cancellation at small `H`.
pub fn turning_points(h: f64) -> Result<TurningPoints, DomainError> {
    if !(h > 0.0 && h <= CRITICAL_ENERGY) {
        return Err(DomainError::Energy { h, reason: "turning points need 0 < H <= 1/32" });
    }
    let s = (2.0 * h).sqrt();
    let rho_max = 2.0 / (1.0 + (1.0 - 4.0 * s).max(0.0).sqrt());
    let rho_min = 2.0 / (1.0 + (1.0 + 4.0 * s).sqrt());
    Ok(TurningPoints { rho_min, rho_max })
}

/// Radius `(4H)^(-1/3)` beyond which the radial velocity only grows.
pub fn outer_boundary_radius(h: f64) -> Result<f64, DomainError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(DomainError::Energy { h, reason: "outer boundary needs H > 0" });
    }
    Ok((4.0 * h).powf(-1.0 / 3.0))
}

/// Magnetic latitude `asin(z / r)`.
pub fn latitude(z: f64, rho: f64) -> Result<f64, DomainError> {
    let r = z.hypot(rho);
    if !(r >= AXIS_GUARD) {
        return Err(DomainError::Singular { z, rho });
    }
    Ok((z / r).clamp(-1.0, 1.0).asin())
}

/// Whether `(z, rho)` lies inside the field line through `(0, 2)`, i.e.
/// `r <= 2 cos^2(latitude)`, written as `r^3 <= 2 rho^2`.
pub fn in_scan_domain(z: f64, rho: f64) -> Result<bool, DomainError> {
    let r2 = z * z + rho * rho;
    if !(r2 >= AXIS_GUARD * AXIS_GUARD) {
        return Err(DomainError::Singular { z, rho });
    }
    Ok(r2 * r2.sqrt() <= 2.0 * rho * rho)
}

/// Signed distance-like function that vanishes on the thalweg `r^3 = rho^2`.
#[inline]
pub fn thalweg_function(z: f64, rho: f64) -> f64 {
    let r2 = z * z + rho * rho;
    r2 * r2.sqrt() - rho * rho
}
