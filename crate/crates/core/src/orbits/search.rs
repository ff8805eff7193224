//! Residual scan, refinement, verification and family assembly in one pass.

use rayon::prelude::*;

use super::{classify, refine_root, assemble_families, FamilyPoint, FamilyPolyline, PeriodicOrbit};
use crate::config::RunConfig;
use crate::error::Result;
use crate::scan::{self, GridSpec, MapResult, SignEdge};

/// A sign-change edge that did not yield a verified orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFailure {
    pub edge: SignEdge,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub map: MapResult,
    pub edges: Vec<SignEdge>,
    /// Verified orbits in edge order, with family ids filled in.
    pub orbits: Vec<PeriodicOrbit>,
    pub families: Vec<FamilyPolyline>,
    pub failures: Vec<EdgeFailure>,
}

fn refine_edge(grid: &GridSpec, edge: SignEdge, n: usize, config: &RunConfig) -> Result<PeriodicOrbit> {
    let ocfg = config.orbit_config();
    let a = (grid.z_at(edge.a.1), grid.rho_at(edge.a.0));
    let b = (grid.z_at(edge.b.1), grid.rho_at(edge.b.0));
    let root = refine_root(a, b, n, &ocfg)?;
    if !root.converged {
        return Err(crate::Error::Numerical(format!(
            "bracket collapsed with residual {:e} (discontinuity, not a root)",
            root.residual
        )));
    }
    classify(root.z0, root.rho0, root.t_perp, n, &ocfg)
}

/// Locate the symmetric periodic orbits whose `n`-th equatorial crossing is
/// perpendicular within `grid`.
pub fn search(grid: &GridSpec, n: usize, config: &RunConfig) -> Result<SearchResult> {
    let (map, edges) = scan::scan_residual(grid, n, config)?;
    let pool = scan::build_pool(config)?;
    let outcomes: Vec<Result<PeriodicOrbit>> =
        pool.install(|| edges.par_iter().map(|&e| refine_edge(grid, e, n, config)).collect());
    let mut orbits = Vec::new();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (edge, outcome) in edges.iter().zip(outcomes) {
        match outcome {
            Ok(orbit) => {
                points.push(FamilyPoint {
                    cell: (edge.a.0.min(edge.b.0), edge.a.1.min(edge.b.1)),
                    z0: orbit.z0,
                    rho0: orbit.rho0,
                    class_n: orbit.class_n,
                    orbit_index: orbits.len(),
                });
                orbits.push(orbit);
            }
            Err(e) => failures.push(EdgeFailure { edge: *edge, reason: e.to_string() }),
        }
    }
    let families = assemble_families(&points);
    for f in &families {
        for p in &f.points {
            orbits[p.orbit_index].family_id = Some(f.id);
        }
    }
    Ok(SearchResult { map, edges, orbits, families, failures })
}
