//! Grouping of located orbits into one-parameter families.
//!
//! Points of the same class whose grid cells touch (including diagonally)
//! belong to one family; each family is ordered into a polyline by
//! nearest-neighbour chaining.

use crate::dynamics::thalweg_function;

/// A located orbit tagged with the grid cell it was found in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyPoint {
    /// `(rho index, z index)` of the grid node the bracketing edge starts at.
    pub cell: (usize, usize),
    pub z0: f64,
    pub rho0: f64,
    pub class_n: usize,
    /// Index into the caller's orbit list.
    pub orbit_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyPolyline {
    pub id: usize,
    pub class_n: usize,
    pub points: Vec<FamilyPoint>,
    /// The chain closes on itself.
    pub is_loop: bool,
}

impl FamilyPolyline {
    /// Side of the thalweg `r^3 = rho^2` holding most of the family:
    /// `1` outside (`r^3 > rho^2`), `-1` inside, `0` when evenly split.
    pub fn thalweg_side(&self) -> i32 {
        let s: i32 = self
            .points
            .iter()
            .map(|p| {
                let v = thalweg_function(p.z0, p.rho0);
                (v > 0.0) as i32 - (v < 0.0) as i32
            })
            .sum();
        s.signum()
    }
}

fn adjacent(a: &FamilyPoint, b: &FamilyPoint) -> bool {
    a.cell.0.abs_diff(b.cell.0) <= 1 && a.cell.1.abs_diff(b.cell.1) <= 1
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn chain(members: &[FamilyPoint]) -> (Vec<FamilyPoint>, bool) {
    let n = members.len();
    let degree = |i: usize| (0..n).filter(|&j| j != i && adjacent(&members[i], &members[j])).count();
    let first = (0..n).min_by_key(|&i| (degree(i), i)).unwrap_or(0);
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = first;
    used[cur] = true;
    order.push(members[cur]);
    for _ in 1..n {
        let here = &members[cur];
        let next = (0..n).filter(|&j| !used[j]).min_by(|&a, &b| {
            let da = (members[a].z0 - here.z0).hypot(members[a].rho0 - here.rho0);
            let db = (members[b].z0 - here.z0).hypot(members[b].rho0 - here.rho0);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        let Some(next) = next else { break };
        used[next] = true;
        order.push(members[next]);
        cur = next;
    }
    let is_loop = n >= 3 && adjacent(&order[0], &order[n - 1]);
    (order, is_loop)
}

/// Partition `points` into families: connected components of the
/// cell-adjacency graph within each class. Families are numbered by class,
/// then by their smallest input index.
pub fn assemble_families(points: &[FamilyPoint]) -> Vec<FamilyPolyline> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i].class_n == points[j].class_n && adjacent(&points[i], &points[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<(usize, usize, Vec<FamilyPoint>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.1 == root) {
            Some(g) => g.2.push(points[i]),
            None => groups.push((points[i].class_n, root, vec![points[i]])),
        }
    }
    groups.sort_by_key(|g| (g.0, g.1));
    groups
        .into_iter()
        .enumerate()
        .map(|(id, (class_n, _, members))| {
            let (points, is_loop) = chain(&members);
            FamilyPolyline { id, class_n, points, is_loop }
        })
        .collect()
}
