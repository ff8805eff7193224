//! Independent reference computations used by the integration tests.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use stormer_core::dynamics;
use stormer_core::integrator::{self, IntegratorConfig};
use stormer_core::MeridianState;

/// Equatorial `B(rho) = 1/rho - 1/rho^2`, so that `V(0, rho) = B^2 / 2`.
pub fn b_eq(rho: f64) -> f64 {
    (rho - 1.0) / (rho * rho)
}

pub fn v_eq(rho: f64) -> f64 {
    0.5 * b_eq(rho) * b_eq(rho)
}

/// Plain bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Turning radii of equatorial motion at energy `h` by bisection on
/// `V(0, rho) = h`; `V` falls on `(0, 1)` and rises on `(1, 2]`.
pub fn turning_points_oracle(h: f64) -> (f64, f64) {
    let g = |rho: f64| v_eq(rho) - h;
    (bisect(g, 1e-3, 1.0), bisect(g, 1.0, 2.0))
}

/// `B(rho_star) - B(rho)` in factored form, given `rho - rho_star` exactly.
fn b_gap(rho: f64, rho_star: f64, diff: f64) -> f64 {
    diff * (rho * rho_star - rho - rho_star) / (rho_star * rho_star * rho * rho)
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Composite five-point Gauss-Legendre rule.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        for (x, c) in GL_NODES.iter().zip(GL_WEIGHTS) {
            sum += c * f(mid + 0.5 * w * x);
        }
    }
    0.5 * w * sum
}

/// Half period of equatorial radial oscillation at energy `h`:
/// the integral of `1 / sqrt(2 (h - V))` between the turning points, with
/// `rho = mid - d cos(phi)` removing both endpoint singularities.
pub fn half_period(h: f64) -> f64 {
    let (lo, hi) = turning_points_oracle(h);
    let d = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    gauss_legendre(
        |phi| {
            let rho = mid - d * phi.cos();
            let above_lo = 2.0 * d * (0.5 * phi).sin().powi(2);
            let below_hi = -2.0 * d * (0.5 * phi).cos().powi(2);
            let gap_hi = b_gap(rho, hi, below_hi);
            let gap_lo = -b_gap(rho, lo, above_lo);
            let kinetic2 = gap_hi * gap_lo;
            d * phi.sin() / kinetic2.sqrt()
        },
        0.0,
        std::f64::consts::PI,
        400,
    )
}

/// Time to travel from `rho_max` inward to `rho_a` (`rho_min < rho_a < rho_max`)
/// with `rho = rho_max - u^2`.
pub fn time_from_outer(h: f64, rho_a: f64) -> f64 {
    let (lo, hi) = turning_points_oracle(h);
    gauss_legendre(
        |u| {
            let rho = hi - u * u;
            let gap_hi = b_gap(rho, hi, -u * u);
            let gap_lo = -b_gap(rho, lo, rho - lo);
            2.0 * u / (gap_hi * gap_lo).sqrt()
        },
        0.0,
        (hi - rho_a).sqrt(),
        400,
    )
}

/// Central finite-difference Jacobian of the equations of motion.
pub fn fd_jacobian(s: &MeridianState, eps: f64) -> [[f64; 4]; 4] {
    let y = s.to_array();
    let mut jac = [[0.0; 4]; 4];
    for col in 0..4 {
        let mut yp = y;
        let mut ym = y;
        yp[col] += eps;
        ym[col] -= eps;
        let fp = dynamics::eom_rhs(&MeridianState::from_array(yp, 0.0)).unwrap().to_array();
        let fm = dynamics::eom_rhs(&MeridianState::from_array(ym, 0.0)).unwrap().to_array();
        for row in 0..4 {
            jac[row][col] = (fp[row] - fm[row]) / (2.0 * eps);
        }
    }
    jac
}

/// Growth of a perturbation `eps * v` after time `t`, from two nearby
/// trajectories.
pub fn two_trajectory_growth(s: &MeridianState, v: [f64; 4], eps: f64, t: f64, tol: f64) -> f64 {
    let cfg = IntegratorConfig::default().with_t_cap(t).with_tolerance(tol);
    let y = s.to_array();
    let shifted = MeridianState::from_array(std::array::from_fn(|i| y[i] + eps * v[i]), s.t);
    let a = integrator::integrate(s, &cfg, None).unwrap().terminal.to_array();
    let b = integrator::integrate(&shifted, &cfg, None).unwrap().terminal.to_array();
    let diff: f64 = (0..4).map(|i| (b[i] - a[i]).powi(2)).sum::<f64>().sqrt();
    let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (eps * vn)
}

/// A start at rest inside the bounded region below the critical energy.
pub fn bounded_start(rng: &mut impl Rng) -> (f64, f64) {
    loop {
        let z = rng.random_range(0.01..1.0);
        let rho = rng.random_range(0.3..1.9);
        let h = dynamics::potential(z, rho).unwrap();
        if h < dynamics::CRITICAL_ENERGY && h > 1e-4 && dynamics::in_scan_domain(z, rho).unwrap() {
            return (z, rho);
        }
    }
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
