//! Adaptive integration of the meridian-plane equations of motion and of
//! their tangent flow, with event detection on the dense output.

mod dopri5;
mod events;

pub use dopri5::{Dopri5, H_MIN};
pub use events::{Direction, EventKind, EventRecord, EventSpec, EVENT_TIME_TOL};

use std::ops::ControlFlow;

use crate::dynamics::{self, MeridianState};
use crate::error::{DomainError, IntegrationError};
use events::{crosses, locate};

/// A first-order autonomous system `y' = F(y)` of dimension `N`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, y: &[f64; N], dy: &mut [f64; N]) -> Result<(), DomainError>;
}

/// Hamilton's equations in the variable order `(z, rho, p_z, p_rho)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeridianSystem;

impl OdeSystem<4> for MeridianSystem {
    #[inline]
    fn rhs(&self, y: &[f64; 4], dy: &mut [f64; 4]) -> Result<(), DomainError> {
        let (f, g) = dynamics::forces(y[0], y[1])?;
        *dy = [y[2], y[3], f, g];
        Ok(())
    }
}

/// Base flow plus tangent vector: `y[..4]` is the state, `y[4..]` the tangent.
#[derive(Debug, Clone, Copy, Default)]
pub struct VariationalSystem;

impl OdeSystem<8> for VariationalSystem {
    #[inline]
    fn rhs(&self, y: &[f64; 8], dy: &mut [f64; 8]) -> Result<(), DomainError> {
        let (f, g) = dynamics::forces(y[0], y[1])?;
        let h = dynamics::force_hessian(y[0], y[1])?;
        *dy = [
            y[2],
            y[3],
            f,
            g,
            y[6],
            y[7],
            h[0][0] * y[4] + h[0][1] * y[5],
            h[1][0] * y[4] + h[1][1] * y[5],
        ];
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Initial step; estimated from the vector field when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    /// Maximum integration time, measured from the start state's `t`.
    pub t_cap: f64,
    /// Singularity guard: the run terminates once `r < r_min`.
    pub r_min: f64,
    pub max_steps: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            h_init: None,
            h_max: 0.5,
            t_cap: 1e4,
            r_min: 1e-3,
            max_steps: 100_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_cap(mut self, t_cap: f64) -> Self {
        self.t_cap = t_cap;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.abs_tol = tol;
        self.rel_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.abs_tol) || !positive(self.rel_tol) {
            return Err(IntegrationError::Config("tolerances must be positive".into()));
        }
        if !positive(self.t_cap) {
            return Err(IntegrationError::Config("t_cap must be positive".into()));
        }
        if !positive(self.h_max) || self.h_init.is_some_and(|h| !positive(h)) {
            return Err(IntegrationError::Config("step sizes must be positive".into()));
        }
        if !(self.r_min >= 0.0) {
            return Err(IntegrationError::Config("r_min must be non-negative".into()));
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalReason {
    TimeCap,
    /// A terminal event fired; the index refers to the event list.
    Event { spec_index: usize, kind: EventKind },
    /// The orbit came within `r_min` of the origin or left the domain.
    Singularity,
    /// The step observer asked to stop.
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub events: Vec<EventRecord>,
    pub terminal: MeridianState,
    pub reason: TerminalReason,
    /// Largest `|H(t) - H(0)| / max(H(0), 1e-12)` seen at accepted steps.
    pub energy_drift: f64,
    pub stats: StepStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub terminal: MeridianState,
    pub reason: TerminalReason,
    pub energy_drift: f64,
    pub stats: StepStats,
    /// Dense-output samples on a uniform time grid, when requested.
    pub samples: Vec<MeridianState>,
}

/// View of the last accepted step handed to step observers.
pub struct StepView<'a> {
    stepper: &'a Dopri5<MeridianSystem, 4>,
}

impl StepView<'_> {
    pub fn t_start(&self) -> f64 {
        self.stepper.t_prev()
    }

    pub fn t_end(&self) -> f64 {
        self.stepper.t()
    }

    pub fn end_state(&self) -> MeridianState {
        MeridianState::from_array(*self.stepper.y(), self.stepper.t())
    }

    /// Interpolated state at `t` within `[t_start, t_end]`.
    pub fn state_at(&self, t: f64) -> MeridianState {
        MeridianState::from_array(self.stepper.interpolate(t), t)
    }
}

/// Integrate until the time cap or a terminal event, calling `observer`
/// after every accepted step with the step and the events found in it.
///
/// Events within a step are reported in time order; when a terminal event
/// fires, later events of the same step are dropped and the run ends at the
/// event state.
pub fn integrate_observed<F>(
    start: &MeridianState,
    config: &IntegratorConfig,
    events: &[EventSpec],
    mut observer: F,
) -> Result<RunOutcome, IntegrationError>
where
    F: FnMut(&StepView<'_>, &[EventRecord]) -> ControlFlow<()>,
{
    let h0 = dynamics::energy(start)?;
    let h_scale = h0.abs().max(1e-12);
    let t_end = start.t + config.t_cap;
    let mut stepper = Dopri5::new(MeridianSystem, start.t, start.to_array(), config)?;
    let mut counts = vec![0usize; events.len()];
    let mut found: Vec<EventRecord> = Vec::new();
    let mut all: Vec<EventRecord> = Vec::new();
    let mut drift: f64 = 0.0;
    let guard = EventKind::Singularity { r_min: config.r_min };

    if config.r_min > 0.0 && start.radius() < config.r_min {
        return Ok(RunOutcome {
            events: all,
            terminal: *start,
            reason: TerminalReason::Singularity,
            energy_drift: 0.0,
            stats: StepStats::default(),
        });
    }

    loop {
        if stepper.t() >= t_end {
            return Ok(finish(all, &stepper, TerminalReason::TimeCap, drift));
        }
        if stepper.accepted_steps() >= config.max_steps {
            return Err(IntegrationError::TooManySteps(config.max_steps));
        }
        match stepper.step(t_end) {
            Ok(()) => {}
            Err(IntegrationError::Domain(_)) => {
                return Ok(finish(all, &stepper, TerminalReason::Singularity, drift));
            }
            Err(e) => return Err(e),
        }
        let y0 = *stepper.y_prev();
        let y1 = *stepper.y();
        let (t0, t1) = (stepper.t_prev(), stepper.t());

        found.clear();
        for (index, spec) in events.iter().enumerate() {
            let (g0, g1) = (spec.kind.value(&y0), spec.kind.value(&y1));
            if crosses(spec.kind.direction(), g0, g1) {
                let t = locate(|t| spec.kind.value(&stepper.interpolate(t)), t0, t1, g0, g1);
                let state = MeridianState::from_array(stepper.interpolate(t), t);
                found.push(EventRecord { spec_index: index, kind: spec.kind, t, state, ordinal: 0 });
            }
        }
        let mut singular_at = None;
        if config.r_min > 0.0 {
            let (g0, g1) = (guard.value(&y0), guard.value(&y1));
            if crosses(Direction::Falling, g0, g1) {
                singular_at = Some(locate(|t| guard.value(&stepper.interpolate(t)), t0, t1, g0, g1));
            }
        }
        found.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.spec_index.cmp(&b.spec_index)));

        let mut stop: Option<(TerminalReason, MeridianState)> = None;
        let mut kept = 0;
        for record in found.iter_mut() {
            if singular_at.is_some_and(|ts| ts < record.t) {
                break;
            }
            counts[record.spec_index] += 1;
            record.ordinal = counts[record.spec_index];
            kept += 1;
            let spec = &events[record.spec_index];
            if spec.terminal_at.is_some_and(|k| record.ordinal >= k) {
                stop = Some((
                    TerminalReason::Event { spec_index: record.spec_index, kind: record.kind },
                    record.state,
                ));
                break;
            }
        }
        found.truncate(kept);
        if stop.is_none() {
            if let Some(ts) = singular_at {
                stop = Some((TerminalReason::Singularity, MeridianState::from_array(stepper.interpolate(ts), ts)));
            }
        }

        if let Ok(h) = dynamics::energy(&MeridianState::from_array(y1, t1)) {
            drift = drift.max((h - h0).abs() / h_scale);
        }
        all.extend_from_slice(&found);
        let flow = observer(&StepView { stepper: &stepper }, &found);

        if let Some((reason, state)) = stop {
            return Ok(RunOutcome {
                events: all,
                terminal: state,
                reason,
                energy_drift: drift,
                stats: stats(&stepper),
            });
        }
        if flow.is_break() {
            return Ok(finish(all, &stepper, TerminalReason::Observer, drift));
        }
    }
}

fn stats<S, const N: usize>(stepper: &Dopri5<S, N>) -> StepStats
where
    S: OdeSystem<N>,
{
    StepStats { accepted: stepper.accepted_steps(), rejected: stepper.rejected_steps() }
}

fn finish(
    events: Vec<EventRecord>,
    stepper: &Dopri5<MeridianSystem, 4>,
    reason: TerminalReason,
    drift: f64,
) -> RunOutcome {
    RunOutcome {
        events,
        terminal: MeridianState::from_array(*stepper.y(), stepper.t()),
        reason,
        energy_drift: drift,
        stats: stats(stepper),
    }
}

/// Integrate to the time cap (or the singularity guard), optionally sampling
/// the path every `sample_dt`.
pub fn integrate(
    start: &MeridianState,
    config: &IntegratorConfig,
    sample_dt: Option<f64>,
) -> Result<Trajectory, IntegrationError> {
    if let Some(dt) = sample_dt {
        if !(dt > 0.0) {
            return Err(IntegrationError::Config("sample interval must be positive".into()));
        }
    }
    let mut samples = Vec::new();
    let mut next_index = 0u64;
    if sample_dt.is_some() {
        samples.push(*start);
        next_index = 1;
    }
    let run = integrate_observed(start, config, &[], |step, _| {
        if let Some(dt) = sample_dt {
            loop {
                let t = start.t + next_index as f64 * dt;
                if t > step.t_end() {
                    break;
                }
                samples.push(step.state_at(t));
                next_index += 1;
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(Trajectory {
        terminal: run.terminal,
        reason: run.reason,
        energy_drift: run.energy_drift,
        stats: run.stats,
        samples,
    })
}

/// Integrate while monitoring `events`.
pub fn integrate_with_events(
    start: &MeridianState,
    config: &IntegratorConfig,
    events: &[EventSpec],
) -> Result<RunOutcome, IntegrationError> {
    integrate_observed(start, config, events, |_, _| ControlFlow::Continue(()))
}

/// States at the requested times (ascending, relative to the start time),
/// read from the dense output. Stops early at the singularity guard, in
/// which case fewer states are returned.
pub fn states_at(
    start: &MeridianState,
    config: &IntegratorConfig,
    times: &[f64],
) -> Result<Vec<MeridianState>, IntegrationError> {
    let Some(&last) = times.last() else {
        return Ok(Vec::new());
    };
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(IntegrationError::Config("sample times must be ascending and non-negative".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut pending = times.iter().peekable();
    while pending.peek().is_some_and(|&&t| t == 0.0) {
        out.push(*start);
        pending.next();
    }
    if pending.peek().is_none() {
        return Ok(out);
    }
    let cfg = IntegratorConfig { t_cap: last, ..config.clone() };
    integrate_observed(start, &cfg, &[], |step, _| {
        while let Some(&&t) = pending.peek() {
            let abs_t = start.t + t;
            if abs_t > step.t_end() {
                break;
            }
            out.push(step.state_at(abs_t));
            pending.next();
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalOutcome {
    pub state: MeridianState,
    pub tangent: [f64; 4],
    pub reason: TerminalReason,
}

/// Evolve `state` together with a tangent vector under the linearized flow
/// for `config.t_cap`.
pub fn integrate_variational(
    state: &MeridianState,
    tangent: [f64; 4],
    config: &IntegratorConfig,
) -> Result<VariationalOutcome, IntegrationError> {
    if tangent.iter().all(|&v| v == 0.0) || tangent.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::Config("tangent vector must be finite and non-zero".into()));
    }
    let y0 = augmented(state, &tangent);
    let t_end = state.t + config.t_cap;
    let mut stepper = Dopri5::new(VariationalSystem, state.t, y0, config)?;
    let mut reason = TerminalReason::TimeCap;
    while stepper.t() < t_end {
        if stepper.accepted_steps() >= config.max_steps {
            return Err(IntegrationError::TooManySteps(config.max_steps));
        }
        match stepper.step(t_end) {
            Ok(()) => {}
            Err(IntegrationError::Domain(_)) => {
                reason = TerminalReason::Singularity;
                break;
            }
            Err(e) => return Err(e),
        }
        let y = stepper.y();
        if config.r_min > 0.0 && y[0].hypot(y[1]) < config.r_min {
            reason = TerminalReason::Singularity;
            break;
        }
    }
    let y = stepper.y();
    Ok(VariationalOutcome {
        state: MeridianState::new(y[0], y[1], y[2], y[3]).with_time(stepper.t()),
        tangent: [y[4], y[5], y[6], y[7]],
        reason,
    })
}

pub(crate) fn augmented(state: &MeridianState, tangent: &[f64; 4]) -> [f64; 8] {
    [state.z, state.rho, state.p_z, state.p_rho, tangent[0], tangent[1], tangent[2], tangent[3]]
}
