use stormer_core::format::{self, Encoding};
use stormer_core::scan::{self, CellFlag, GridSpec, Quantity, Restriction, ScanOptions};
use stormer_core::{Error, RunConfig};

fn quick(workers: usize) -> RunConfig {
    RunConfig {
        mlce_time: 100.0,
        trapped_cap: 200.0,
        lambda_time: 100.0,
        workers: Some(workers),
        ..RunConfig::default()
    }
}

fn grid(spec: &str) -> GridSpec {
    spec.parse().unwrap()
}

#[test]
fn worker_count_does_not_change_results() {
    let g = grid("rho=0.4:2.0:9,z=0.05:1.0:7");
    for q in [Quantity::Mlce, Quantity::EscapeTime, Quantity::LambdaSum, Quantity::Residual(1)] {
        let one = scan::scan(&g, q, &quick(1)).unwrap();
        let four = scan::scan(&g, q, &quick(4)).unwrap();
        assert_eq!(one.payload(), four.payload(), "{}", q.name());
        assert_eq!(one.flags, four.flags);
        assert_eq!(one.digest, four.digest);
    }
}

#[test]
fn mirrored_band_gives_mirrored_maps() {
    let g = grid("rho=0.3:2.05:10,z=0.02:1.1:8");
    let m = g.mirrored();
    let cfg = quick(2);
    for q in [Quantity::EscapeTime, Quantity::CrossingTime, Quantity::LambdaSum] {
        let up = scan::scan(&g, q, &cfg).unwrap();
        let down = scan::scan(&m, q, &cfg).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (a, b) = (up.value(i, j), down.value(i, g.ny - 1 - j));
                assert_eq!(up.flag(i, j), down.flag(i, g.ny - 1 - j));
                let b = if q == Quantity::LambdaSum { -b } else { b };
                assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{} ({i},{j}): {a} vs {b}", q.name());
            }
        }
    }
}

#[test]
fn restrictions_and_domains_exclude_cells() {
    let g = grid("rho=0.3:2.05:10,z=0.02:1.1:8");
    let cfg = quick(2);
    let esc = scan::scan(&g, Quantity::EscapeTime, &cfg).unwrap();
    let cross = scan::scan(&g, Quantity::CrossingTime, &cfg).unwrap();
    for k in 0..g.len() {
        let (i, j) = g.cell(k);
        let excluded = (esc.flag(i, j) == CellFlag::Excluded, cross.flag(i, j) == CellFlag::Excluded);
        assert!(excluded.0 || excluded.1, "cell ({i},{j}) admitted by both");
        if esc.flag(i, j) == CellFlag::Trapped {
            assert_eq!(esc.value(i, j), f64::INFINITY);
        }
        if excluded.0 {
            assert!(esc.value(i, j).is_nan());
        }
    }
    let inside = scan::scan(&g.with_restriction(Restriction::InsideFieldLine), Quantity::LambdaMax, &cfg).unwrap();
    assert!(inside.count(CellFlag::Excluded) > 0);
    assert!(inside.is_complete());
}

#[test]
fn interrupted_scan_resumes_to_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.ckpt");
    let g = grid("rho=0.4:2.0:6,z=0.05:1.0:20");
    let cfg = quick(3);
    let q = Quantity::Mlce;

    let partial = scan::resume(&path, &g, q, &cfg, Some(1)).unwrap();
    assert!(!partial.is_complete());
    assert_eq!(partial.count(CellFlag::Pending), 6 * 12);
    let on_disk = format::read_map_file(&path).unwrap();
    assert_eq!(on_disk.flags, partial.flags);

    let finished = scan::resume(&path, &g, q, &cfg, None).unwrap();
    assert!(finished.is_complete());
    let fresh = scan::scan(&g, q, &cfg).unwrap();
    assert_eq!(finished.payload(), fresh.payload());

    let (mut a, mut b) = (Vec::new(), Vec::new());
    format::write_map(&mut a, &finished, Encoding::Binary).unwrap();
    format::write_map(&mut b, &fresh, Encoding::Binary).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resume_without_checkpoint_starts_fresh() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("none.ckpt");
    let g = grid("rho=0.4:2.0:4,z=0.05:1.0:3");
    let map = scan::resume(&path, &g, Quantity::EscapeTime, &quick(1), None).unwrap();
    assert!(map.is_complete());
    assert!(path.exists());
}

#[test]
fn checkpoint_from_other_settings_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.ckpt");
    let g = grid("rho=0.4:2.0:4,z=0.05:1.0:16");
    scan::resume(&path, &g, Quantity::EscapeTime, &quick(1), Some(1)).unwrap();

    let mut other = quick(1);
    other.integrator.rel_tol = 1e-10;
    assert!(matches!(scan::resume(&path, &g, Quantity::EscapeTime, &other, None), Err(Error::Checkpoint(_))));
    assert!(matches!(scan::resume(&path, &g, Quantity::LambdaMin, &quick(1), None), Err(Error::Checkpoint(_))));
    // the worker count is free to change between sessions
    assert!(scan::resume(&path, &g, Quantity::EscapeTime, &quick(4), None).unwrap().is_complete());
}

#[test]
fn residual_scan_needs_a_band_off_the_equator() {
    let cfg = quick(2);
    let bad = grid("rho=0.5:1.5:4,z=-0.1:0.3:4");
    assert!(matches!(scan::scan_residual(&bad, 1, &cfg), Err(Error::Precondition(_))));
    let below = grid("rho=0.5:1.5:6,z=-0.6:-0.05:6");
    let above = below.mirrored();
    let (map_below, edges_below) = scan::scan_residual(&below, 1, &cfg).unwrap();
    let (map_above, edges_above) = scan::scan_residual(&above, 1, &cfg).unwrap();
    assert_eq!(edges_below.len(), edges_above.len());
    for j in 0..below.ny {
        for i in 0..below.nx {
            assert_eq!(map_below.value(i, j).to_bits(), map_above.value(i, below.ny - 1 - j).to_bits());
        }
    }
    assert!(matches!(
        scan::scan_with(&above, Quantity::Residual(0), &cfg, ScanOptions::default()),
        Err(Error::Precondition(_))
    ));
}
