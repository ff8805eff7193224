//! Symmetric open periodic orbits.
//!
//! An orbit started at rest that crosses the equator with `p_rho = 0` at time
//! `t` is periodic with period `4t`: it returns to rest at the mirror point
//! `(-z0, rho0)` at `2t` and to the start at `4t`. Orbits are grouped by the
//! ordinal of that perpendicular crossing (class `s1`, `s2`, `s3`, ...).
//! Searches follow the sign of the radial momentum at the `n`-th crossing
//! over a grid of starts and refine every sign change along grid edges.

mod families;
mod search;

pub use families::{assemble_families, FamilyPoint, FamilyPolyline};
pub use search::{search, EdgeFailure, SearchResult};

use crate::dynamics::{self, MeridianState};
use crate::error::{Error, Result};
use crate::integrator::{self, EventKind, EventSpec, IntegratorConfig, TerminalReason};

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitConfig {
    /// Integration settings; `t_cap` bounds the wait for crossings. The
    /// default tolerance is far tighter than for indicators because later
    /// crossings of slow, near-thalweg orbits are very sensitive to it.
    pub integrator: IntegratorConfig,
    /// A crossing counts as perpendicular when `|p_rho|` is below this.
    pub residual_tol: f64,
    /// Upper bound on every verification norm.
    pub verify_tol: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default().with_t_cap(1e3).with_tolerance(1e-14),
            residual_tol: 1e-8,
            verify_tol: 1e-5,
        }
    }
}

/// One transversal crossing of the equatorial plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingRecord {
    pub ordinal: usize,
    pub t: f64,
    pub rho: f64,
    /// Radial momentum at the crossing; zero for a perpendicular crossing.
    pub p_rho: f64,
    pub p_z: f64,
    pub z: f64,
}

/// Why a crossing sequence ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceEnd {
    Complete,
    Escaped,
    Singular,
    TimeCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingSequence {
    pub records: Vec<CrossingRecord>,
    pub end: SequenceEnd,
}

fn check_start(z0: f64, rho0: f64) -> Result<()> {
    if z0 == 0.0 {
        return Err(Error::Precondition(
            "start on the equatorial plane never crosses it (z0 = 0)".into(),
        ));
    }
    dynamics::potential(z0, rho0)?;
    Ok(())
}

/// The first `n_max` equatorial crossings of the orbit started at rest at
/// `(z0, rho0)`, or fewer if it escapes, hits the singularity guard or the
/// time cap first.
pub fn crossing_sequence(z0: f64, rho0: f64, n_max: usize, config: &OrbitConfig) -> Result<CrossingSequence> {
    check_start(z0, rho0)?;
    if n_max == 0 {
        return Ok(CrossingSequence { records: Vec::new(), end: SequenceEnd::Complete });
    }
    let start = MeridianState::at_rest(z0, rho0);
    let events = [
        EventSpec::stop_at(EventKind::EquatorialCrossing, n_max),
        EventSpec::stop(EventKind::escape()),
    ];
    let run = integrator::integrate_with_events(&start, &config.integrator, &events)?;
    let records = run
        .events
        .iter()
        .filter(|e| e.spec_index == 0)
        .map(|e| CrossingRecord {
            ordinal: e.ordinal,
            t: e.t,
            rho: e.state.rho,
            p_rho: e.state.p_rho,
            p_z: e.state.p_z,
            z: e.state.z,
        })
        .collect();
    let end = match run.reason {
        TerminalReason::Event { spec_index: 0, .. } => SequenceEnd::Complete,
        TerminalReason::Event { .. } => SequenceEnd::Escaped,
        TerminalReason::Singularity => SequenceEnd::Singular,
        TerminalReason::TimeCap | TerminalReason::Observer => SequenceEnd::TimeCap,
    };
    Ok(CrossingSequence { records, end })
}

/// The `n`-th crossing, or `None` when the orbit never gets there.
pub fn nth_crossing(z0: f64, rho0: f64, n: usize, config: &OrbitConfig) -> Result<Option<CrossingRecord>> {
    if n == 0 {
        return Err(Error::Precondition("crossing ordinals start at 1".into()));
    }
    let seq = crossing_sequence(z0, rho0, n, config)?;
    Ok(seq.records.get(n - 1).copied())
}

/// Signed `p_rho` at the `n`-th crossing; `None` when unreachable.
pub fn perp_residual(z0: f64, rho0: f64, n: usize, config: &OrbitConfig) -> Result<Option<f64>> {
    Ok(nth_crossing(z0, rho0, n, config)?.map(|c| c.p_rho))
}

/// A root of the perpendicularity residual on a segment between two starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedRoot {
    pub z0: f64,
    pub rho0: f64,
    pub residual: f64,
    /// Time of the `n`-th crossing at the refined start.
    pub t_perp: f64,
    /// `|residual| < tol`; otherwise the bracket collapsed onto a jump.
    pub converged: bool,
    pub iterations: usize,
}

/// Refine a sign change of the `n`-th crossing residual between `a` and `b`
/// (each `(z0, rho0)`) along the straight segment joining them.
///
/// Illinois steps are used while they shrink the bracket; a bisection step is
/// forced whenever two consecutive steps fail to halve it. The bracket is
/// shrunk until it can no longer be split in floating point, even after
/// `|residual| < tol`: later crossings amplify any leftover residual on
/// unstable orbits. `tol` only decides convergence, so a bracket that
/// collapses onto a jump in the residual comes back unconverged.
pub fn refine_root(a: (f64, f64), b: (f64, f64), n: usize, config: &OrbitConfig) -> Result<RefinedRoot> {
    let eval = |s: f64| -> Result<(f64, f64, CrossingRecord)> {
        let z = a.0 + s * (b.0 - a.0);
        let rho = a.1 + s * (b.1 - a.1);
        match nth_crossing(z, rho, n, config)? {
            Some(c) => Ok((z, rho, c)),
            None => Err(Error::Numerical(format!(
                "residual unreachable at (z0={z}, rho0={rho}) inside the bracket"
            ))),
        }
    };
    let (_, _, ca) = eval(0.0)?;
    let (_, _, cb) = eval(1.0)?;
    let (mut fa, mut fb) = (ca.p_rho, cb.p_rho);
    let tol = config.residual_tol;
    for (s, c) in [(0.0, ca), (1.0, cb)] {
        if c.p_rho.abs() < tol {
            let z = a.0 + s * (b.0 - a.0);
            let rho = a.1 + s * (b.1 - a.1);
            return Ok(RefinedRoot { z0: z, rho0: rho, residual: c.p_rho, t_perp: c.t, converged: true, iterations: 0 });
        }
    }
    if (fa < 0.0) == (fb < 0.0) {
        return Err(Error::Precondition(format!(
            "residuals at the bracket ends have the same sign ({fa:e}, {fb:e})"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = if fa.abs() < fb.abs() { (0.0, ca) } else { (1.0, cb) };
    let mut side = 0i8;
    let mut width_two_ago = f64::INFINITY;
    let mut width_prev = 1.0;
    let mut iterations = 0;
    while iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        iterations += 1;
        let width = hi - lo;
        let mut s = if width > 0.5 * width_two_ago {
            mid
        } else {
            (lo * fb - hi * fa) / (fb - fa)
        };
        if !(s > lo && s < hi) {
            s = mid;
        }
        width_two_ago = width_prev;
        width_prev = width;
        let (_, _, c) = eval(s)?;
        let f = c.p_rho;
        if f.abs() < best.1.p_rho.abs() {
            best = (s, c);
        }
        if f == 0.0 {
            break;
        }
        if (f < 0.0) == (fa < 0.0) {
            lo = s;
            fa = f;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            hi = s;
            fb = f;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    let (s, c) = best;
    Ok(RefinedRoot {
        z0: a.0 + s * (b.0 - a.0),
        rho0: a.1 + s * (b.1 - a.1),
        residual: c.p_rho,
        t_perp: c.t,
        converged: c.p_rho.abs() < tol,
        iterations,
    })
}

/// Closure norms of a candidate symmetric periodic orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyNorms {
    /// `|z|` at the quarter period.
    pub perp_z: f64,
    /// `|p_rho|` at the quarter period.
    pub perp_p_rho: f64,
    /// Distance at the half period from the static mirror point `(-z0, rho0, 0, 0)`.
    pub half: f64,
    /// Distance at the full period from the start.
    pub full: f64,
}

impl VerifyNorms {
    pub fn perp(&self) -> f64 {
        self.perp_z.max(self.perp_p_rho)
    }

    pub fn max(&self) -> f64 {
        self.perp().max(self.half).max(self.full)
    }
}

fn distance(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Integrate one full period `T = 4 t_perp` and measure how well the orbit
/// closes at `T/4`, `T/2` and `T`.
pub fn verify(z0: f64, rho0: f64, t_perp: f64, config: &OrbitConfig) -> Result<VerifyNorms> {
    if !(t_perp > 0.0 && t_perp.is_finite()) {
        return Err(Error::Precondition(format!("t_perp must be positive, got {t_perp}")));
    }
    dynamics::potential(z0, rho0)?;
    let start = MeridianState::at_rest(z0, rho0);
    let states = integrator::states_at(&start, &config.integrator, &[t_perp, 2.0 * t_perp, 4.0 * t_perp])?;
    if states.len() < 3 {
        return Err(Error::Numerical(format!(
            "orbit from (z0={z0}, rho0={rho0}) hit the singularity guard before 4*t_perp"
        )));
    }
    let quarter = states[0];
    Ok(VerifyNorms {
        perp_z: quarter.z.abs(),
        perp_p_rho: quarter.p_rho.abs(),
        half: distance(&states[1].to_array(), &[-z0, rho0, 0.0, 0.0]),
        full: distance(&states[2].to_array(), &start.to_array()),
    })
}

/// A located, verified and classified symmetric open periodic orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub z0: f64,
    pub rho0: f64,
    /// Ordinal of the first perpendicular crossing (1, 2, 3 for s1, s2, s3).
    pub class_n: usize,
    pub t_perp: f64,
    pub period: f64,
    pub energy: f64,
    pub norms: VerifyNorms,
    /// `p_rho` at crossings `1..=max(3, n_detected)`; NaN where unreachable.
    pub residuals: Vec<f64>,
    /// Equatorial crossings in `[0, T/2)`.
    pub n_eq_half: usize,
    /// Thalweg crossings in `[0, T/2)`.
    pub n_thalweg_half: usize,
    pub family_id: Option<usize>,
}

/// Crossings of the equatorial plane and of the thalweg `r^3 = rho^2` in
/// `[0, span)` for the orbit started at rest at `(z0, rho0)`.
pub fn crossing_counts(z0: f64, rho0: f64, span: f64, config: &OrbitConfig) -> Result<(usize, usize)> {
    let start = MeridianState::at_rest(z0, rho0);
    let cfg = IntegratorConfig { t_cap: span, ..config.integrator.clone() };
    let run = integrator::integrate_with_events(
        &start,
        &cfg,
        &[EventSpec::watch(EventKind::EquatorialCrossing), EventSpec::watch(EventKind::ThalwegCrossing)],
    )?;
    if run.reason == TerminalReason::Singularity {
        return Err(Error::Numerical("singularity guard reached while counting crossings".into()));
    }
    let count = |idx: usize| run.events.iter().filter(|e| e.spec_index == idx && e.t < span).count();
    Ok((count(0), count(1)))
}

/// Verify the orbit with perpendicular crossing time `t_perp` found by an
/// `n_detected` search, assign the smallest perpendicular ordinal as its class
/// and count its crossings per half period.
pub fn classify(z0: f64, rho0: f64, t_perp: f64, n_detected: usize, config: &OrbitConfig) -> Result<PeriodicOrbit> {
    check_start(z0, rho0)?;
    if n_detected == 0 {
        return Err(Error::Precondition("crossing ordinals start at 1".into()));
    }
    let detected_norms = verify(z0, rho0, t_perp, config)?;
    if !(detected_norms.max() < config.verify_tol) {
        return Err(Error::Numerical(format!(
            "verification failed at (z0={z0}, rho0={rho0}): max norm {:e}",
            detected_norms.max()
        )));
    }
    let n_max = n_detected.max(3);
    // Crossing `m` of a symmetric orbit comes no later than `(2m - 1) t_perp`;
    // give the sequence enough room to reach the recorded ordinals.
    let window = IntegratorConfig {
        t_cap: config.integrator.t_cap.max((2 * n_max) as f64 * t_perp),
        ..config.integrator.clone()
    };
    let seq = crossing_sequence(z0, rho0, n_max, &OrbitConfig { integrator: window, ..config.clone() })?;
    let residuals: Vec<f64> = (0..n_max)
        .map(|i| seq.records.get(i).map_or(f64::NAN, |c| c.p_rho))
        .collect();
    let class_n = (1..=n_detected)
        .find(|&m| residuals[m - 1].abs() < config.residual_tol)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "no perpendicular crossing among the first {n_detected} at (z0={z0}, rho0={rho0})"
            ))
        })?;
    let class_t = seq.records[class_n - 1].t;
    let norms = if class_n == n_detected && (class_t - t_perp).abs() <= 1e-9 * t_perp.max(1.0) {
        detected_norms
    } else {
        verify(z0, rho0, class_t, config)?
    };
    let period = 4.0 * class_t;
    let (n_eq_half, n_thalweg_half) = crossing_counts(z0, rho0, 0.5 * period, config)?;
    Ok(PeriodicOrbit {
        z0,
        rho0,
        class_n,
        t_perp: class_t,
        period,
        energy: dynamics::potential(z0, rho0)?,
        norms,
        residuals,
        n_eq_half,
        n_thalweg_half,
        family_id: None,
    })
}
