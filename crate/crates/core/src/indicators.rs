//! Per-start diagnostics: maximum Lyapunov exponent, escape time, crossing
//! time and latitude extrema.

use std::ops::ControlFlow;

use crate::dynamics::{self, MeridianState, CRITICAL_ENERGY, ESCAPE_RADIUS};
use crate::error::{DomainError, Error, IntegrationError, Result};
use crate::integrator::{
    self, augmented, Direction, Dopri5, EventKind, EventSpec, IntegratorConfig, TerminalReason,
    VariationalSystem,
};

/// Default cap for escape and crossing times; longer orbits count as trapped.
pub const TRAPPED_CAP: f64 = 1e4;

/// Finite-time mLCE estimates below this are classified as regular.
pub fn regular_threshold(total_time: f64) -> f64 {
    10.0 * total_time.ln() / total_time
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlceConfig {
    pub total_time: f64,
    pub renorm_interval: f64,
    /// Record `(t, running estimate)` after every renormalization.
    pub keep_history: bool,
    pub integrator: IntegratorConfig,
}

impl Default for MlceConfig {
    fn default() -> Self {
        Self {
            total_time: 1e4,
            renorm_interval: 1.0,
            keep_history: false,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MlceFlags {
    /// Ran for the full requested time.
    pub converged: bool,
    pub hit_singularity: bool,
    pub escaped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlceResult {
    pub value: f64,
    pub renorm_count: usize,
    /// Time actually integrated.
    pub elapsed: f64,
    pub history: Vec<(f64, f64)>,
    pub flags: MlceFlags,
}

/// Initial tangent `(1, 1, 1, 1) / 2`, with the axial components flipped for
/// starts below the equator so that mirrored starts give identical estimates.
pub fn initial_tangent(start: &MeridianState) -> [f64; 4] {
    let s = if start.z.is_sign_negative() { -0.5 } else { 0.5 };
    [s, 0.5, s, 0.5]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Finite-time maximum Lyapunov exponent by tangent-vector renormalization:
/// the tangent is evolved with the linearized flow, `ln |v|` is accumulated
/// and `v` rescaled to unit length every `renorm_interval`, and the estimate
/// is the accumulated sum over the elapsed time.
pub fn mlce(start: &MeridianState, config: &MlceConfig) -> Result<MlceResult> {
    let (total, tau) = (config.total_time, config.renorm_interval);
    if !(tau > 0.0 && total > tau && total.is_finite()) {
        return Err(Error::Precondition(format!(
            "mLCE needs total_time > renorm_interval > 0 (got {total}, {tau})"
        )));
    }
    dynamics::energy(start)?;
    let cfg = &config.integrator;
    let t0 = start.t;
    let mut stepper = Dopri5::new(VariationalSystem, t0, augmented(start, &initial_tangent(start)), cfg)?;
    let mut sum_log = 0.0;
    let mut renorm_count = 0usize;
    let mut history = Vec::new();
    let mut flags = MlceFlags::default();
    let mut k = 1u64;

    'outer: loop {
        let target = t0 + (k as f64 * tau).min(total);
        while stepper.t() < target {
            if stepper.accepted_steps() >= cfg.max_steps {
                return Err(IntegrationError::TooManySteps(cfg.max_steps).into());
            }
            match stepper.step(target) {
                Ok(()) => {}
                Err(IntegrationError::Domain(_)) => {
                    flags.hit_singularity = true;
                    break 'outer;
                }
                Err(e) => return Err(e.into()),
            }
            let y = stepper.y();
            if cfg.r_min > 0.0 && y[0].hypot(y[1]) < cfg.r_min {
                flags.hit_singularity = true;
                break 'outer;
            }
            if y[1] >= ESCAPE_RADIUS {
                flags.escaped = true;
                break 'outer;
            }
        }
        let mut y = *stepper.y();
        let n = norm(&y[4..]);
        if !(n > 0.0 && n.is_finite()) {
            flags.hit_singularity = true;
            break;
        }
        sum_log += n.ln();
        for v in &mut y[4..] {
            *v /= n;
        }
        stepper.reset_state(y)?;
        renorm_count += 1;
        if config.keep_history {
            history.push((stepper.t() - t0, sum_log / (stepper.t() - t0)));
        }
        if stepper.t() >= t0 + total {
            flags.converged = true;
            break;
        }
        k += 1;
    }

    let elapsed = stepper.t() - t0;
    if !flags.converged {
        // Fold in the growth since the last renormalization.
        let n = norm(&stepper.y()[4..]);
        if n > 0.0 && n.is_finite() {
            sum_log += n.ln();
        }
    }
    let value = if elapsed > 0.0 { sum_log / elapsed } else { 0.0 };
    Ok(MlceResult { value, renorm_count, elapsed, history, flags })
}

/// Outcome of a first-passage time measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstPassage {
    Reached(f64),
    /// Not reached within the cap.
    Trapped,
    /// The orbit fell into the singularity guard at time `t`.
    Singular(f64),
}

impl FirstPassage {
    pub fn time(&self) -> Option<f64> {
        match *self {
            FirstPassage::Reached(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_trapped(&self) -> bool {
        matches!(self, FirstPassage::Trapped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeResult {
    pub outcome: FirstPassage,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingResult {
    pub outcome: FirstPassage,
    pub cap: f64,
    /// Radius whose outward crossing is timed.
    pub threshold: f64,
}

fn first_passage(
    start: &MeridianState,
    event: EventKind,
    cap: f64,
    integrator: &IntegratorConfig,
) -> Result<FirstPassage> {
    if !(cap > 0.0) {
        return Err(Error::Precondition(format!("cap must be positive, got {cap}")));
    }
    let cfg = IntegratorConfig { t_cap: cap, ..integrator.clone() };
    let run = integrator::integrate_with_events(start, &cfg, &[EventSpec::stop(event)])?;
    Ok(match run.reason {
        TerminalReason::Event { .. } => FirstPassage::Reached(run.terminal.t - start.t),
        TerminalReason::Singularity => FirstPassage::Singular(run.terminal.t - start.t),
        TerminalReason::TimeCap | TerminalReason::Observer => FirstPassage::Trapped,
    })
}

/// Time for the orbit to reach `rho = 2`.
pub fn escape_time(start: &MeridianState, cap: f64, integrator: &IntegratorConfig) -> Result<EscapeResult> {
    dynamics::energy(start)?;
    let outcome = if start.rho >= ESCAPE_RADIUS {
        FirstPassage::Reached(0.0)
    } else {
        first_passage(start, EventKind::escape(), cap, integrator)?
    };
    Ok(EscapeResult { outcome, cap })
}

/// Time of the first outward crossing of `rho_max - (rho_max - rho_min) / 50`,
/// with the turning radii taken at the start's energy. Needs `0 < H < 1/32`.
pub fn crossing_time(start: &MeridianState, cap: f64, integrator: &IntegratorConfig) -> Result<CrossingResult> {
    let h = dynamics::energy(start)?;
    if !(h < CRITICAL_ENERGY) {
        return Err(DomainError::Energy { h, reason: "crossing time needs H < 1/32" }.into());
    }
    if !(h > 0.0) {
        return Err(DomainError::Energy { h, reason: "degenerate start with H = 0" }.into());
    }
    let threshold = dynamics::turning_points(h)?.crossing_threshold();
    let event = EventKind::RadiusReached { threshold, direction: Direction::Rising };
    let outcome = first_passage(start, event, cap, integrator)?;
    Ok(CrossingResult { outcome, cap, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaExtrema {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `lambda_min + lambda_max`; zero for orbits symmetric about the equator.
    pub sum: f64,
    /// Set when the run ended before `total_time` (escape or singularity).
    pub early_termination: Option<TerminalReason>,
}

/// Running extrema of the latitude `asin(z / r)` sampled at every accepted
/// step and at the terminal point.
pub fn lambda_extrema(start: &MeridianState, total_time: f64, integrator: &IntegratorConfig) -> Result<LambdaExtrema> {
    let lat0 = dynamics::latitude(start.z, start.rho)?;
    let (mut lo, mut hi) = (lat0, lat0);
    let cfg = IntegratorConfig { t_cap: total_time, ..integrator.clone() };
    let run = integrator::integrate_observed(start, &cfg, &[EventSpec::stop(EventKind::escape())], |step, _| {
        let s = step.end_state();
        if let Ok(l) = dynamics::latitude(s.z, s.rho) {
            lo = lo.min(l);
            hi = hi.max(l);
        }
        ControlFlow::Continue(())
    })?;
    if let Ok(l) = dynamics::latitude(run.terminal.z, run.terminal.rho) {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    let early_termination = match run.reason {
        TerminalReason::TimeCap => None,
        other => Some(other),
    };
    Ok(LambdaExtrema { lambda_min: lo, lambda_max: hi, sum: lo + hi, early_termination })
}
