//! Event functions and their localization on the dense-output interpolant.

use crate::dynamics::{thalweg_function, MeridianState, ESCAPE_RADIUS};

/// Time tolerance for event localization.
pub const EVENT_TIME_TOL: f64 = 1e-12;

/// Which sign changes of an event function are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// From negative to non-negative.
    Rising,
    /// From non-negative to negative.
    Falling,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// `z` changes sign.
    EquatorialCrossing,
    /// `rho` crosses `threshold`; `Rising` means with `p_rho > 0`.
    RadiusReached { threshold: f64, direction: Direction },
    /// `rho` reaches the escape radius moving outward.
    Escape { radius: f64 },
    /// `r` drops below `r_min`.
    Singularity { r_min: f64 },
    /// The orbit crosses the thalweg `r^3 = rho^2`.
    ThalwegCrossing,
}

impl EventKind {
    pub fn escape() -> Self {
        EventKind::Escape { radius: ESCAPE_RADIUS }
    }

    #[inline]
    pub fn value(&self, y: &[f64; 4]) -> f64 {
        match *self {
            EventKind::EquatorialCrossing => y[0],
            EventKind::RadiusReached { threshold, .. } => y[1] - threshold,
            EventKind::Escape { radius } => y[1] - radius,
            EventKind::Singularity { r_min } => y[0].hypot(y[1]) - r_min,
            EventKind::ThalwegCrossing => thalweg_function(y[0], y[1]),
        }
    }

    pub fn direction(&self) -> Direction {
        match *self {
            EventKind::EquatorialCrossing | EventKind::ThalwegCrossing => Direction::Any,
            EventKind::RadiusReached { direction, .. } => direction,
            EventKind::Escape { .. } => Direction::Rising,
            EventKind::Singularity { .. } => Direction::Falling,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::EquatorialCrossing => "equatorial_crossing",
            EventKind::RadiusReached { .. } => "radius_reached",
            EventKind::Escape { .. } => "escape",
            EventKind::Singularity { .. } => "singularity",
            EventKind::ThalwegCrossing => "thalweg_crossing",
        }
    }
}

/// An event to monitor. With `terminal_at = Some(k)` the integration halts at
/// the `k`-th occurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    pub terminal_at: Option<usize>,
}

impl EventSpec {
    pub fn watch(kind: EventKind) -> Self {
        Self { kind, terminal_at: None }
    }

    pub fn stop(kind: EventKind) -> Self {
        Self { kind, terminal_at: Some(1) }
    }

    pub fn stop_at(kind: EventKind, occurrence: usize) -> Self {
        Self { kind, terminal_at: Some(occurrence.max(1)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    /// Index of the triggering spec in the list passed to the integrator.
    pub spec_index: usize,
    pub kind: EventKind,
    pub t: f64,
    pub state: MeridianState,
    /// 1-based count of this spec's events so far.
    pub ordinal: usize,
}

/// Sign class used for crossing detection; zero counts as non-negative so a
/// root that lands exactly on a step boundary is reported once.
#[inline]
pub(crate) fn is_negative(g: f64) -> bool {
    g < 0.0
}

#[inline]
pub(crate) fn crosses(direction: Direction, g0: f64, g1: f64) -> bool {
    let (n0, n1) = (is_negative(g0), is_negative(g1));
    match direction {
        Direction::Rising => n0 && !n1,
        Direction::Falling => !n0 && n1,
        Direction::Any => n0 != n1,
    }
}

/// Illinois-modified regula falsi on `[t0, t1]` for a bracketed sign change.
///
/// Every operation is odd in `g`, so a mirrored trajectory (`g -> -g`)
/// produces the identical root.
pub(crate) fn locate<F: Fn(f64) -> f64>(g: F, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= EVENT_TIME_TOL {
            break;
        }
        let mut m = (a * gb - b * ga) / (gb - ga);
        if !(m > a && m < b) {
            m = 0.5 * (a + b);
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if is_negative(gm) == is_negative(ga) {
            a = m;
            ga = gm;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = m;
            gb = gm;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    // The endpoint on the far side of the crossing keeps the reported state
    // consistent with the detected sign change.
    b
}
