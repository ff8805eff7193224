mod common;

use stormer_core::format;
use stormer_core::orbits::{self, OrbitConfig};
use stormer_core::scan::{self, GridSpec, Restriction};
use stormer_core::{Error, RunConfig};

/// First sign change of the `n`-th crossing residual along the row `z` at
/// `samples` points of `[rho_lo, rho_hi]`.
fn row_bracket(z: f64, rho_lo: f64, rho_hi: f64, samples: usize, n: usize, cfg: &OrbitConfig) -> (f64, f64) {
    let res = |rho: f64| orbits::perp_residual(z, rho, n, cfg).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..samples {
        let rho = rho_lo + (rho_hi - rho_lo) * k as f64 / (samples - 1) as f64;
        if let Some(r) = res(rho) {
            if let Some((rp, vp)) = prev {
                if (vp < 0.0) != (r < 0.0) {
                    return (rp, rho);
                }
            }
            prev = Some((rho, r));
        } else {
            prev = None;
        }
    }
    panic!("no sign change on row z={z}");
}

fn planted() -> (f64, f64, f64, f64, OrbitConfig) {
    let cfg = OrbitConfig::default();
    let z = 0.3;
    let (a, b) = row_bracket(z, 0.5, 1.6, 56, 1, &cfg);
    let oracle = common::bisect(|rho| orbits::perp_residual(z, rho, 1, &cfg).unwrap().unwrap(), a, b);
    (z, a, b, oracle, cfg)
}

#[test]
fn refinement_finds_the_planted_root() {
    let (z, a, b, oracle, cfg) = planted();
    let root = orbits::refine_root((z, a), (z, b), 1, &cfg).unwrap();
    assert!(root.converged, "{root:?}");
    assert!(root.residual.abs() < cfg.residual_tol);
    assert!((root.rho0 - oracle).abs() < 1e-6, "{} vs {oracle}", root.rho0);
    assert_eq!(root.z0, z);
    assert!(root.t_perp > 0.0);
}

#[test]
fn located_orbit_verifies_and_classifies_as_s1() {
    let (z, a, b, _, cfg) = planted();
    let root = orbits::refine_root((z, a), (z, b), 1, &cfg).unwrap();
    let norms = orbits::verify(root.z0, root.rho0, root.t_perp, &cfg).unwrap();
    assert!(norms.max() < 1e-5, "{norms:?}");

    let wrong = orbits::verify(root.z0, root.rho0, 1.1 * root.t_perp, &cfg).unwrap();
    assert!(wrong.full > 1e-3, "{wrong:?}");

    let mirrored = orbits::verify(-root.z0, root.rho0, root.t_perp, &cfg).unwrap();
    assert_eq!(mirrored, norms);

    let orbit = orbits::classify(root.z0, root.rho0, root.t_perp, 1, &cfg).unwrap();
    assert_eq!(orbit.class_n, 1);
    assert_eq!(orbit.n_eq_half, 1);
    assert_eq!(orbit.period, 4.0 * orbit.t_perp);
    assert_eq!(orbit.residuals.len(), 3);
    assert!(orbit.residuals.iter().all(|r| r.abs() < 1e-7), "{:?}", orbit.residuals);
}

#[test]
fn wrong_period_fails_classification() {
    let (z, a, b, _, cfg) = planted();
    let root = orbits::refine_root((z, a), (z, b), 1, &cfg).unwrap();
    assert!(matches!(orbits::classify(root.z0, root.rho0, 1.1 * root.t_perp, 1, &cfg), Err(Error::Numerical(_))));
}

#[test]
fn second_class_orbits_cross_three_times_per_half_period() {
    let mut cfg = RunConfig::default();
    cfg.workers = Some(2);
    let grid = GridSpec::new((0.6, 1.5, 24), (0.05, 0.7, 24), Restriction::All).unwrap();
    let result = orbits::search(&grid, 2, &cfg).unwrap();
    let s2: Vec<_> = result.orbits.iter().filter(|o| o.class_n == 2).collect();
    assert!(!s2.is_empty(), "no s2 orbits among {}", result.orbits.len());
    for o in &s2 {
        assert_eq!(o.n_eq_half, 3, "{o:?}");
        assert!(o.norms.max() < 1e-5);
        assert!(o.residuals[1].abs() < 1e-8);
        assert!(o.residuals[0].abs() >= 1e-8);
    }
    for o in result.orbits.iter().filter(|o| o.class_n == 1) {
        assert_eq!(o.n_eq_half, 1);
    }
    assert!(result.orbits.iter().all(|o| o.family_id.is_some()));
}

#[test]
fn orbit_file_records_class_and_period() {
    let (z, a, b, _, cfg) = planted();
    let root = orbits::refine_root((z, a), (z, b), 1, &cfg).unwrap();
    let mut orbit = orbits::classify(root.z0, root.rho0, root.t_perp, 1, &cfg).unwrap();
    orbit.family_id = Some(0);
    let families = orbits::assemble_families(&[orbits::FamilyPoint {
        cell: (0, 0),
        z0: orbit.z0,
        rho0: orbit.rho0,
        class_n: 1,
        orbit_index: 0,
    }]);
    let mut buf = Vec::new();
    format::write_orbits(&mut buf, "abc", std::slice::from_ref(&orbit), &families).unwrap();
    let (digest, records) = format::read_orbit_records(buf.as_slice()).unwrap();
    assert_eq!(digest, "abc");
    let rec = records.iter().find(|r| format::record_field(r, "kind") == Some("orbit")).unwrap();
    assert_eq!(format::record_field(rec, "class"), Some("1"));
    let period = format::parse_f64(format::record_field(rec, "period").unwrap()).unwrap();
    let t_perp = format::parse_f64(format::record_field(rec, "t_perp").unwrap()).unwrap();
    assert_eq!(period, 4.0 * t_perp);
    assert_eq!(format::parse_f64(format::record_field(rec, "z0").unwrap()).unwrap(), orbit.z0);
    let fam = records.iter().find(|r| format::record_field(r, "kind") == Some("family")).unwrap();
    assert_eq!(format::record_field(fam, "n"), Some("1"));
}

#[test]
fn planted_orbit_gives_one_edge_in_its_row() {
    let cfg = RunConfig::default();
    let grid = GridSpec::new((0.5, 1.6, 45), (0.29, 0.31, 2), Restriction::All).unwrap();
    let z = grid.z_at(0);
    let ocfg = cfg.orbit_config();
    let (a, b) = row_bracket(z, 0.5, 1.6, 56, 1, &ocfg);
    let oracle = common::bisect(|rho| orbits::perp_residual(z, rho, 1, &ocfg).unwrap().unwrap(), a, b);
    let (_, edges) = scan::scan_residual(&grid, 1, &cfg).unwrap();
    let dx = (grid.rho_hi - grid.rho_lo) / grid.nx as f64;
    let near: Vec<_> = edges
        .iter()
        .filter(|e| e.a.1 == 0 && e.b.1 == 0)
        .filter(|e| (0.5 * (grid.rho_at(e.a.0) + grid.rho_at(e.b.0)) - oracle).abs() < 1.5 * dx)
        .collect();
    assert_eq!(near.len(), 1, "{near:?}");
    assert!(grid.rho_at(near[0].a.0) <= oracle && oracle <= grid.rho_at(near[0].b.0));
}
