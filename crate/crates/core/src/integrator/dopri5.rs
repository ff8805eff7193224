//! Dormand–Prince 5(4) stepper with PI step control and 4th-order dense output.
//!
//! Only autonomous systems are integrated here, so the stage nodes never enter.

use super::{IntegratorConfig, OdeSystem};
use crate::error::{DomainError, IntegrationError};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const PI_BETA: f64 = 0.04;
const ERR_EXPONENT: f64 = 0.2 - PI_BETA * 0.75;

/// Smallest step the controller is allowed to take.
pub const H_MIN: f64 = 1e-14;

/// Adaptive stepper. Holds the current point, the FSAL derivative and the
/// dense-output coefficients of the last accepted step.
#[derive(Debug, Clone)]
pub struct Dopri5<S, const N: usize> {
    sys: S,
    abs_tol: f64,
    rel_tol: f64,
    h_max: f64,
    t: f64,
    y: [f64; N],
    /// Rounding error carried over from the last update of `y`.
    comp: [f64; N],
    dy: [f64; N],
    h: f64,
    err_old: f64,
    last_rejected: bool,
    t_prev: f64,
    y_prev: [f64; N],
    h_last: f64,
    cont: [[f64; N]; 5],
    accepted: u64,
    rejected: u64,
}

#[inline]
fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

impl<S: OdeSystem<N>, const N: usize> Dopri5<S, N> {
    pub fn new(sys: S, t0: f64, y0: [f64; N], config: &IntegratorConfig) -> Result<Self, IntegrationError> {
        config.validate()?;
        let mut dy = [0.0; N];
        sys.rhs(&y0, &mut dy)?;
        let mut stepper = Self {
            sys,
            abs_tol: config.abs_tol,
            rel_tol: config.rel_tol,
            h_max: config.h_max,
            t: t0,
            y: y0,
            comp: [0.0; N],
            dy,
            h: 0.0,
            err_old: 1e-4,
            last_rejected: false,
            t_prev: t0,
            y_prev: y0,
            h_last: 0.0,
            cont: [[0.0; N]; 5],
            accepted: 0,
            rejected: 0,
        };
        stepper.h = match config.h_init {
            Some(h) => h.min(config.h_max),
            None => stepper.initial_step(),
        };
        Ok(stepper)
    }

    #[inline]
    fn scale(&self, a: f64, b: f64) -> f64 {
        self.abs_tol + self.rel_tol * a.abs().max(b.abs())
    }

    /// Starting step estimate from the size of the solution and its first two derivatives.
    fn initial_step(&self) -> f64 {
        let n = N as f64;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            dnf += (self.dy[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        dnf /= n;
        dny /= n;
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(self.h_max);
        let y1 = combine(&self.y, h, &[(1.0, &self.dy)]);
        let mut f1 = [0.0; N];
        if self.sys.rhs(&y1, &mut f1).is_err() {
            return h * 1e-3;
        }
        let mut der2 = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            der2 += ((f1[i] - self.dy[i]) / sk).powi(2);
        }
        let der2 = (der2 / n).sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
        (100.0 * h).min(h1).min(self.h_max)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    /// Start time of the last accepted step.
    pub fn t_prev(&self) -> f64 {
        self.t_prev
    }

    pub fn y_prev(&self) -> &[f64; N] {
        &self.y_prev
    }

    pub fn accepted_steps(&self) -> u64 {
        self.accepted
    }

    pub fn rejected_steps(&self) -> u64 {
        self.rejected
    }

    pub fn system(&self) -> &S {
        &self.sys
    }

    /// Replace the current point (e.g. after renormalizing a tangent vector).
    pub fn reset_state(&mut self, y: [f64; N]) -> Result<(), DomainError> {
        self.sys.rhs(&y, &mut self.dy)?;
        self.y = y;
        self.comp = [0.0; N];
        Ok(())
    }

    /// Dense-output value at `t` inside the last accepted step.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        if t == self.t {
            return self.y;
        }
        if t == self.t_prev || self.h_last == 0.0 {
            return self.y_prev;
        }
        let theta = (t - self.t_prev) / self.h_last;
        let theta1 = 1.0 - theta;
        let c = &self.cont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = c[0][i]
                + theta * (c[1][i] + theta1 * (c[2][i] + theta * (c[3][i] + theta1 * c[4][i])));
        }
        out
    }

    /// Take one accepted step that does not pass `t_limit`.
    ///
    /// Stage evaluations that leave the domain count as rejections. When the
    /// step shrinks below [`H_MIN`] the last domain error is returned if there
    /// was one, otherwise a step underflow.
    pub fn step(&mut self, t_limit: f64) -> Result<(), IntegrationError> {
        let mut domain_failure: Option<DomainError> = None;
        loop {
            let remaining = t_limit - self.t;
            let mut h = self.h.min(self.h_max);
            let mut lands = false;
            if h >= remaining * (1.0 - 1e-12) {
                h = remaining;
                lands = true;
            }
            if h < H_MIN && !(lands && h > 0.0) {
                return Err(match domain_failure {
                    Some(e) => e.into(),
                    None => IntegrationError::StepUnderflow { t: self.t, h },
                });
            }
            match self.attempt(h) {
                Ok((err, y_new, comp, dy_new, k)) => {
                    if err <= 1.0 {
                        let fac11 = err.powf(ERR_EXPONENT);
                        let fac = (fac11 / self.err_old.powf(PI_BETA) / SAFETY)
                            .clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
                        let mut h_new = h / fac;
                        if self.last_rejected {
                            h_new = h_new.min(h);
                        }
                        self.err_old = err.max(1e-4);
                        self.last_rejected = false;
                        self.build_dense(h, &y_new, &dy_new, &k);
                        self.t_prev = self.t;
                        self.y_prev = self.y;
                        self.h_last = h;
                        self.t = if lands { t_limit } else { self.t + h };
                        self.y = y_new;
                        self.comp = comp;
                        self.dy = dy_new;
                        // A landing step is usually shorter than the controller
                        // would like; keep the larger proposal.
                        self.h = if lands { h_new.max(self.h) } else { h_new };
                        self.accepted += 1;
                        return Ok(());
                    }
                    let fac11 = err.powf(ERR_EXPONENT);
                    self.h = h / (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
                    self.last_rejected = true;
                    self.rejected += 1;
                }
                Err(e) => {
                    domain_failure = Some(e);
                    self.h = h * 0.25;
                    self.last_rejected = true;
                    self.rejected += 1;
                }
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn attempt(&self, h: f64) -> Result<(f64, [f64; N], [f64; N], [f64; N], [[f64; N]; 6]), DomainError> {
        let k1 = self.dy;
        let y = &self.y;
        let mut k2 = [0.0; N];
        let mut k3 = [0.0; N];
        let mut k4 = [0.0; N];
        let mut k5 = [0.0; N];
        let mut k6 = [0.0; N];
        let mut k7 = [0.0; N];
        self.sys.rhs(&combine(y, h, &[(A21, &k1)]), &mut k2)?;
        self.sys.rhs(&combine(y, h, &[(A31, &k1), (A32, &k2)]), &mut k3)?;
        self.sys.rhs(&combine(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]), &mut k4)?;
        self.sys.rhs(&combine(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]), &mut k5)?;
        let y6 = combine(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        self.sys.rhs(&y6, &mut k6)?;
        // Compensated update: long runs take ~1e5 steps, and the plain sum
        // would lose the low bits of every increment.
        let mut y_new = [0.0; N];
        let mut comp = [0.0; N];
        for i in 0..N {
            let inc = h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]) + self.comp[i];
            y_new[i] = y[i] + inc;
            comp[i] = inc - (y_new[i] - y[i]);
        }
        self.sys.rhs(&y_new, &mut k7)?;
        let mut sum = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = self.scale(y[i], y_new[i]);
            sum += (e / sk) * (e / sk);
        }
        let err = (sum / N as f64).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::Singular { z: y_new[0], rho: y_new[1] });
        }
        Ok((err, y_new, comp, k7, [k1, k3, k4, k5, k6, k7]))
    }

    fn build_dense(&mut self, h: f64, y_new: &[f64; N], _dy_new: &[f64; N], k: &[[f64; N]; 6]) {
        let [k1, k3, k4, k5, k6, k7] = k;
        for i in 0..N {
            let ydiff = y_new[i] - self.y[i];
            let bspl = h * k1[i] - ydiff;
            self.cont[0][i] = self.y[i];
            self.cont[1][i] = ydiff;
            self.cont[2][i] = bspl;
            self.cont[3][i] = ydiff - h * k7[i] - bspl;
            self.cont[4][i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
    }
}
