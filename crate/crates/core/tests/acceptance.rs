//! Acceptance checks, one PASS/FAIL line each. Exits non-zero if any fails.

mod common;

use std::collections::VecDeque;
use std::time::Instant;

use stormer_core::dynamics::{self, CRITICAL_ENERGY};
use stormer_core::format::{self, Encoding};
use stormer_core::indicators::{self, MlceConfig};
use stormer_core::integrator::{self, IntegratorConfig};
use stormer_core::orbits::{self, SearchResult};
use stormer_core::scan::{self, CellFlag, GridSpec, MapResult, Quantity};
use stormer_core::{MeridianState, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn energy_conservation() -> Outcome {
    let start = MeridianState::at_rest(0.2, 1.2);
    let clock = Instant::now();
    let run = integrator::integrate(&start, &IntegratorConfig::default().with_t_cap(1e3), None).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let h0 = dynamics::energy(&start).unwrap();
    let end = (dynamics::energy(&run.terminal).unwrap() - h0).abs() / h0;
    outcome(
        run.energy_drift <= 1e-7 && secs < 5.0,
        format!(
            "|dH|/H at t=1e3 is {end:.2e}, max over the run {:.2e} (limit 1e-7); {} steps in {secs:.3} s",
            run.energy_drift, run.stats.accepted
        ),
    )
}

fn turning_points() -> Outcome {
    let mut worst: f64 = 0.0;
    for h in [1.0 / 50.0, 1.0 / 40.0, 1.0 / 33.0] {
        let tp = dynamics::turning_points(h).unwrap();
        let (lo, hi) = common::turning_points_oracle(h);
        worst = worst.max((tp.rho_min - lo).abs()).max((tp.rho_max - hi).abs());
    }
    let rho_max = dynamics::turning_points(CRITICAL_ENERGY).unwrap().rho_max;
    let outer = dynamics::outer_boundary_radius(CRITICAL_ENERGY).unwrap();
    outcome(
        worst < 1e-10 && (rho_max - 2.0).abs() < 1e-12 && (outer - 2.0).abs() < 1e-12,
        format!(
            "max bisection disagreement {worst:.1e}; rho_max(1/32) - 2 = {:.1e}; outer radius(1/32) - 2 = {:.1e}",
            rho_max - 2.0,
            outer - 2.0
        ),
    )
}

fn symmetry_theorems(searches: &[&SearchResult]) -> Outcome {
    let mut rng = common::seeded(2024);
    let cfg = IntegratorConfig::default().with_t_cap(100.0).with_tolerance(1e-14);
    let mut worst_return: f64 = 0.0;
    let mut returned = 0;
    for _ in 0..50 {
        let (z, rho) = common::bounded_start(&mut rng);
        let fwd = integrator::integrate(&MeridianState::at_rest(z, rho), &cfg, None).unwrap().terminal;
        let back = MeridianState::new(fwd.z, fwd.rho, -fwd.p_z, -fwd.p_rho);
        let end = integrator::integrate(&back, &cfg, None).unwrap().terminal;
        let err = (end.z - z).abs().max((end.rho - rho).abs()).max(end.p_z.abs()).max(end.p_rho.abs());
        worst_return = worst_return.max(err);
        returned += usize::from(err < 1e-6);
    }
    let orbits: Vec<_> = searches.iter().flat_map(|s| &s.orbits).collect();
    let worst_norm = orbits.iter().map(|o| o.norms.max()).fold(0.0, f64::max);
    let rejected = searches
        .iter()
        .flat_map(|s| &s.failures)
        .filter(|f| f.reason.contains("verification"))
        .count();
    outcome(
        worst_return < 1e-6 && worst_norm < 1e-5 && rejected == 0,
        format!(
            "{returned} of 50 starts return within 1e-6 from t=100 (worst {worst_return:.1e}); \
             {} verified orbits with worst norm {worst_norm:.1e}; {rejected} perpendicular roots failed verification",
            orbits.len()
        ),
    )
}

fn class_structure(s1: &SearchResult, s2: &SearchResult, s3: &SearchResult, secs: f64) -> Outcome {
    let sides: Vec<i32> = s1.families.iter().filter(|f| f.class_n == 1).map(|f| f.thalweg_side()).collect();
    let both_sides = sides.contains(&-1) && sides.contains(&1);
    let higher: Vec<_> = s2.orbits.iter().chain(&s3.orbits).filter(|o| o.class_n >= 2).collect();
    let dedup_bad = higher.iter().filter(|o| !(o.residuals[0].abs() > 1e-8)).count();
    let s1_orbits: Vec<_> = s1.orbits.iter().filter(|o| o.class_n == 1).collect();
    let s1_bad: Vec<_> = s1_orbits
        .iter()
        .filter(|o| !(o.residuals[1].abs() < 1e-7 && o.residuals[2].abs() < 1e-7))
        .collect();
    let worst_late = s1_orbits
        .iter()
        .map(|o| o.residuals[1].abs().max(o.residuals[2].abs()))
        .fold(0.0, f64::max);
    let mut detail = format!(
        "s1 search {}x{} in {secs:.0} s: {} orbits in {} families (thalweg sides {:?}); \
         {} s2/s3 orbits with {dedup_bad} failing |res_1| > 1e-8; \
         {} of {} s1 orbits exceed 1e-7 at crossing 2 or 3 (worst {worst_late:.1e})",
        s1.map.grid.nx,
        s1.map.grid.ny,
        s1.orbits.len(),
        s1.families.len(),
        {
            let mut s = sides.clone();
            s.sort();
            s.dedup();
            s
        },
        higher.len(),
        s1_bad.len(),
        s1_orbits.len(),
    );
    for o in s1_bad.iter().take(4) {
        detail.push_str(&format!(
            "\n      z0={:.6} rho0={:.6} H={:.2e} t_perp={:.1} res2={:.1e} res3={:.1e}",
            o.z0, o.rho0, o.energy, o.t_perp, o.residuals[1], o.residuals[2]
        ));
    }
    outcome(s1.families.len() >= 2 && both_sides && dedup_bad == 0 && !higher.is_empty() && s1_bad.is_empty(), detail)
}

/// 8-connected components of trapped cells that touch no excluded
/// (`H < 1/32`) cell.
fn isolated_trapped_regions(map: &MapResult) -> Vec<usize> {
    let g = &map.grid;
    let mut seen = vec![false; g.len()];
    let mut sizes = Vec::new();
    for k0 in 0..g.len() {
        if seen[k0] || map.flags[k0] != CellFlag::Trapped {
            continue;
        }
        let (mut size, mut touches) = (0, false);
        let mut queue = VecDeque::from([k0]);
        seen[k0] = true;
        while let Some(k) = queue.pop_front() {
            size += 1;
            let (i, j) = g.cell(k);
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= g.nx as i64 || nj >= g.ny as i64 {
                        continue;
                    }
                    let n = g.index(ni as usize, nj as usize);
                    match map.flags[n] {
                        CellFlag::Excluded => touches = true,
                        CellFlag::Trapped if !seen[n] => {
                            seen[n] = true;
                            queue.push_back(n);
                        }
                        _ => {}
                    }
                }
            }
        }
        if !touches {
            sizes.push(size);
        }
    }
    sizes
}

fn indicator_discrimination(cfg: &RunConfig) -> Outcome {
    let island = indicators::mlce(&MeridianState::at_rest(0.205, 1.62), &MlceConfig::default()).unwrap().value;
    let chaotic = MeridianState::at_rest(0.2, 1.62);
    let at = |tau: f64| {
        let c = MlceConfig { renorm_interval: tau, ..MlceConfig::default() };
        indicators::mlce(&chaotic, &c).unwrap().value
    };
    let (a, b) = (at(0.5), at(2.0));
    let spread = (a - b).abs() / a.max(b);

    let grid = GridSpec { nx: 200, ny: 150, ..GridSpec::default() };
    let clock = Instant::now();
    let map = scan::scan(&grid, Quantity::EscapeTime, cfg).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let computed = map.count(CellFlag::Ok) + map.count(CellFlag::Trapped);
    let fraction = map.count(CellFlag::Trapped) as f64 / computed as f64;
    let isolated = isolated_trapped_regions(&map);
    let workers = cfg.resolved_workers().unwrap();
    outcome(
        island < 1e-2
            && a > 5e-2
            && b > 5e-2
            && spread <= 0.25
            && secs < 900.0
            && fraction > 0.0
            && fraction < 1.0
            && !isolated.is_empty(),
        format!(
            "island mLCE {island:.1e}; chaotic (0.2, 1.62) mLCE {a:.4} (tau 0.5) vs {b:.4} (tau 2.0), spread {:.1}%; \
             200x150 escape map in {secs:.1} s on {workers} worker(s), trapped fraction {fraction:.4}, \
             isolated trapped regions of sizes {isolated:?}",
            100.0 * spread
        ),
    )
}

fn cross_indicator(cfg: &RunConfig) -> Outcome {
    let patch: GridSpec = "rho=1.595:1.645:50,z=0.19:0.22:50,restrict=h-below".parse().unwrap();
    let cross = scan::scan(&patch, Quantity::CrossingTime, cfg).unwrap();
    let threshold = indicators::regular_threshold(cfg.mlce_time);
    let trapped: Vec<usize> = (0..patch.len()).filter(|&k| cross.flags[k] == CellFlag::Trapped).collect();
    let regular = trapped
        .iter()
        .filter(|&&k| {
            let (v, f) = scan::evaluate_cell(&patch, Quantity::Mlce, cfg, k);
            f == CellFlag::Ok && v < threshold
        })
        .count();
    let share = regular as f64 / trapped.len().max(1) as f64;
    outcome(
        !trapped.is_empty() && share >= 0.9,
        format!(
            "patch {patch}: {regular} of {} t_cross-trapped cells below the regular threshold {threshold:.2e} ({:.1}%)",
            trapped.len(),
            100.0 * share
        ),
    )
}

fn mirror_symmetry(cfg: &RunConfig) -> Outcome {
    let grid: GridSpec = "rho=0.05:2.1:24,z=0.01:1.2:18".parse().unwrap();
    let mirrored = grid.mirrored();
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for q in [Quantity::EscapeTime, Quantity::CrossingTime, Quantity::LambdaSum] {
        let up = scan::scan(&grid, q, cfg).unwrap();
        let down = scan::scan(&mirrored, q, cfg).unwrap();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (mut a, mut b) = (up.value(i, j), down.value(i, grid.ny - 1 - j));
                if q == Quantity::LambdaSum {
                    (a, b) = (a.abs(), b.abs());
                }
                if up.flag(i, j) != down.flag(i, grid.ny - 1 - j) {
                    mismatched += 1;
                } else if a.is_finite() && b.is_finite() {
                    worst = worst.max((a - b).abs());
                } else if !(a == b || (a.is_nan() && b.is_nan())) {
                    mismatched += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-8 && mismatched == 0,
        format!("t_esc, t_cross, |lambda_sum| on 24x18 bands: max difference {worst:.1e}, {mismatched} flag or sentinel mismatches"),
    )
}

fn encoded(map: &MapResult) -> Vec<u8> {
    let mut buf = Vec::new();
    format::write_map(&mut buf, map, Encoding::Binary).unwrap();
    buf
}

fn determinism(cfg: &RunConfig) -> Outcome {
    let grid: GridSpec = "rho=0.3:2.0:16,z=0.02:1.0:24".parse().unwrap();
    let short = RunConfig { mlce_time: 500.0, ..cfg.clone() };
    let one = scan::scan(&grid, Quantity::Mlce, &RunConfig { workers: Some(1), ..short.clone() }).unwrap();
    let many = scan::scan(&grid, Quantity::Mlce, &RunConfig { workers: Some(4), ..short.clone() }).unwrap();
    let same_workers = one.payload() == many.payload();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mlce.ckpt");
    let partial = scan::resume(&path, &grid, Quantity::Mlce, &short, Some(1)).unwrap();
    let resumed = scan::resume(&path, &grid, Quantity::Mlce, &short, None).unwrap();
    let same_resume = encoded(&resumed) == encoded(&one) && std::fs::read(&path).unwrap() == encoded(&one);
    outcome(
        same_workers && same_resume && !partial.is_complete(),
        format!(
            "1 vs 4 workers identical: {same_workers}; resumed after {} of {} cells identical: {same_resume}",
            partial.completed(),
            grid.len()
        ),
    )
}

fn main() {
    let cfg = RunConfig::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("{} {n} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "energy conservation", energy_conservation());
    report(2, "closed-form turning points", turning_points());

    let clock = Instant::now();
    let s1 = orbits::search(&GridSpec { nx: 200, ny: 200, ..GridSpec::default() }, 1, &cfg).unwrap();
    let s1_secs = clock.elapsed().as_secs_f64();
    let coarse = GridSpec { nx: 60, ny: 60, ..GridSpec::default() };
    let s2 = orbits::search(&coarse, 2, &cfg).unwrap();
    let s3 = orbits::search(&coarse, 3, &cfg).unwrap();

    report(3, "symmetry theorems", symmetry_theorems(&[&s1, &s2, &s3]));
    report(4, "class structure", class_structure(&s1, &s2, &s3, s1_secs));
    report(5, "indicator discrimination", indicator_discrimination(&cfg));
    report(6, "cross-indicator consistency", cross_indicator(&cfg));
    report(7, "mirror symmetry", mirror_symmetry(&cfg));
    report(8, "determinism", determinism(&cfg));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
