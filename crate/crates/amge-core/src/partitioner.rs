//! Deterministic graph partitioning into connected, roughly balanced parts.
//!
//! Seeds are spread evenly through the node index range, regions grow by
//! breadth-first accretion (smallest region first, lowest-index frontier
//! node), and a repair pass splits any disconnected part into components and
//! merges the extras into the smallest adjacent part. All tie-breaks are by
//! lowest index, so identical inputs give identical output.

use crate::{EntityKind, Error, Relation, Result};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct PartitionSpec {
    pub n_parts: usize,
    /// Accepted deviation of part sizes from the mean, as a fraction.
    pub balance_tol: f64,
    /// Rotates the evenly spaced seed positions.
    pub seed: u64,
}

impl PartitionSpec {
    pub fn new(n_parts: usize) -> Self {
        PartitionSpec {
            n_parts,
            balance_tol: 0.5,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_balance_tol(mut self, tol: f64) -> Self {
        self.balance_tol = tol;
        self
    }
}

/// Partition outcome: the `part_node` relation plus the realized imbalance,
/// reported because connectivity repair may override the balance target.
#[derive(Debug, Clone)]
pub struct Partitioning {
    pub part_node: Relation,
    pub part_sizes: Vec<usize>,
    pub max_imbalance: f64,
}

/// Partition a symmetric adjacency into `n_parts` connected parts. Self-loops
/// in the adjacency are ignored.
pub fn partition_graph(adjacency: &Relation, spec: &PartitionSpec) -> Result<Partitioning> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "partition adjacency must be square",
            left: n,
            right: adjacency.ncols(),
        });
    }
    let k = spec.n_parts;
    if k == 0 {
        return Err(Error::Partition("zero parts requested".into()));
    }
    if k > n {
        return Err(Error::TooManyParts {
            requested: k,
            available: n,
        });
    }

    let neighbors = |u: usize| adjacency.row(u).iter().copied().filter(move |&v| v != u);

    // Evenly spaced seeds, rotated by the spec seed, advanced past
    // collisions.
    let mut assignment = vec![usize::MAX; n];
    let mut sizes = vec![0usize; k];
    for part in 0..k {
        let ideal = ((part as f64 + 0.5) * n as f64 / k as f64) as usize;
        let mut pos = (ideal + (spec.seed as usize % n)) % n;
        while assignment[pos] != usize::MAX {
            pos = (pos + 1) % n;
        }
        assignment[pos] = part;
        sizes[part] = 1;
    }

    // Grow the smallest region by its lowest-index unassigned neighbor.
    let mut assigned = k;
    let mut saturated = vec![false; k];
    while assigned < n {
        let mut grew = false;
        let mut order: Vec<usize> = (0..k).filter(|&p| !saturated[p]).collect();
        order.sort_by_key(|&p| (sizes[p], p));
        for part in order {
            let mut candidate = None;
            for u in 0..n {
                if assignment[u] != part {
                    continue;
                }
                for v in neighbors(u) {
                    if assignment[v] == usize::MAX && candidate.is_none_or(|c| v < c) {
                        candidate = Some(v);
                    }
                }
            }
            match candidate {
                Some(v) => {
                    assignment[v] = part;
                    sizes[part] += 1;
                    assigned += 1;
                    grew = true;
                    break;
                }
                None => saturated[part] = true,
            }
        }
        if !grew {
            // Unreached pockets: attach each remaining node adjacent to an
            // assigned one to the smallest such part.
            let mut best: Option<(usize, usize, usize)> = None;
            for u in 0..n {
                if assignment[u] != usize::MAX {
                    continue;
                }
                for v in neighbors(u) {
                    let p = assignment[v];
                    if p != usize::MAX && best.is_none_or(|(s, _, b)| (sizes[p], u) < (s, b)) {
                        best = Some((sizes[p], p, u));
                    }
                }
            }
            match best {
                Some((_, p, u)) => {
                    assignment[u] = p;
                    sizes[p] += 1;
                    assigned += 1;
                    saturated.iter_mut().for_each(|s| *s = false);
                }
                None => {
                    return Err(Error::Partition(
                        "graph is disconnected: unreachable nodes remain".into(),
                    ))
                }
            }
        }
    }

    repair_connectivity(n, k, &mut assignment, &mut sizes, &|u| {
        neighbors(u).collect::<Vec<_>>()
    });

    let mean = n as f64 / k as f64;
    let max_imbalance = sizes
        .iter()
        .map(|&s| (s as f64 - mean).abs() / mean)
        .fold(0.0f64, f64::max);

    let part_node = Relation::from_pairs(
        part_kind_for(adjacency.row_kind),
        adjacency.row_kind,
        k,
        n,
        assignment.iter().enumerate().map(|(u, &p)| (p, u)),
    )?;
    Ok(Partitioning {
        part_node,
        part_sizes: sizes,
        max_imbalance,
    })
}

/// Partition into `ceil(n_nodes / factor)` parts.
pub fn coarsen_by_factor(adjacency: &Relation, factor: usize, seed: u64) -> Result<Partitioning> {
    if factor == 0 {
        return Err(Error::Partition("coarsening factor must be >= 1".into()));
    }
    let n = adjacency.nrows();
    let parts = n.div_ceil(factor);
    partition_graph(adjacency, &PartitionSpec::new(parts).with_seed(seed))
}

fn part_kind_for(node_kind: EntityKind) -> EntityKind {
    match node_kind {
        EntityKind::Core => EntityKind::CoreGroup,
        EntityKind::Element => EntityKind::Agglomerate,
        EntityKind::NewElement => EntityKind::Agglomerate,
        other => other,
    }
}

/// Split disconnected parts and merge every extra component into the
/// smallest adjacent part; the component containing the lowest node index
/// stays. Runs until every part is connected.
fn repair_connectivity(
    n: usize,
    k: usize,
    assignment: &mut [usize],
    sizes: &mut [usize],
    neighbors: &dyn Fn(usize) -> Vec<usize>,
) {
    loop {
        let mut changed = false;
        for part in 0..k {
            let members: Vec<usize> = (0..n).filter(|&u| assignment[u] == part).collect();
            if members.is_empty() {
                continue;
            }
            let components = connected_components(&members, neighbors);
            if components.len() <= 1 {
                continue;
            }
            // Keep the component holding the lowest node index.
            for component in components.into_iter().skip(1) {
                let mut target: Option<(usize, usize)> = None;
                for &u in &component {
                    for v in neighbors(u) {
                        let p = assignment[v];
                        if p != part && target.is_none_or(|(s, tp)| (sizes[p], p) < (s, tp)) {
                            target = Some((sizes[p], p));
                        }
                    }
                }
                if let Some((_, p)) = target {
                    for &u in &component {
                        assignment[u] = p;
                    }
                    sizes[part] -= component.len();
                    sizes[p] += component.len();
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Components of the induced subgraph, ordered by their lowest node index.
fn connected_components(members: &[usize], neighbors: &dyn Fn(usize) -> Vec<usize>) -> Vec<Vec<usize>> {
    let member_set: std::collections::HashSet<usize> = members.iter().copied().collect();
    let mut seen = std::collections::HashSet::new();
    let mut components = Vec::new();
    for &start in members {
        if seen.contains(&start) {
            continue;
        }
        let mut component = vec![start];
        seen.insert(start);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in neighbors(u) {
                if member_set.contains(&v) && seen.insert(v) {
                    component.push(v);
                    queue.push_back(v);
                }
            }
        }
        components.push(component);
    }
    components
}

/// True when every part of `part_node` induces a connected subgraph.
pub fn parts_connected(part_node: &Relation, adjacency: &Relation) -> bool {
    let neighbors = |u: usize| -> Vec<usize> {
        adjacency.row(u).iter().copied().filter(|&v| v != u).collect()
    };
    (0..part_node.nrows()).all(|p| {
        let members = part_node.row(p);
        members.is_empty() || connected_components(members, &neighbors).len() == 1
    })
}
