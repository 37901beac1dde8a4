//! Simulated multi-core environment.
//!
//! Cores never exchange real messages: every operation runs sequentially and
//! deterministically, but row ownership is tracked so that each distributed
//! product can account for the rows a core would have fetched from another.
//! Message volume counts relation entries rather than bytes.

use crate::meshtopo::Mesh;
use crate::partitioner::{self, PartitionSpec};
use crate::{EntityKind, Error, Relation, Result};
use std::collections::BTreeMap;
use std::io::Write;

/// Ownership of the current level's entities by physical cores.
#[derive(Debug, Clone)]
pub struct CoreLayout {
    pub n_cores_total: usize,
    /// Rows indexed by physical core id; inactive cores own nothing.
    pub core_element: Relation,
    owners: BTreeMap<EntityKind, Vec<usize>>,
}

impl CoreLayout {
    pub fn new(n_cores_total: usize, core_element: Relation) -> Result<CoreLayout> {
        if core_element.nrows() != n_cores_total {
            return Err(Error::DimensionMismatch {
                context: "core_element rows vs total cores",
                left: core_element.nrows(),
                right: n_cores_total,
            });
        }
        if !core_element.is_partition() {
            return Err(Error::NotAPartition(
                "core_element must assign every element to exactly one core".into(),
            ));
        }
        let element_owner = core_element.column_owner()?;
        let mut owners = BTreeMap::new();
        owners.insert(EntityKind::Element, element_owner);
        Ok(CoreLayout {
            n_cores_total,
            core_element,
            owners,
        })
    }

    /// Single core owning everything.
    pub fn trivial(n_elements: usize) -> CoreLayout {
        let core_element = Relation::from_rows(
            EntityKind::Core,
            EntityKind::Element,
            n_elements,
            vec![(0..n_elements).collect()],
        )
        .expect("indices in bounds");
        CoreLayout::new(1, core_element).expect("trivial layout is a partition")
    }

    pub fn active_cores(&self) -> Vec<usize> {
        (0..self.n_cores_total)
            .filter(|&c| !self.core_element.row(c).is_empty())
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.active_cores().len()
    }

    pub fn element_owner(&self, e: usize) -> usize {
        self.owners[&EntityKind::Element][e]
    }

    /// Register ownership for another entity kind (facets, dofs, truedofs,
    /// newdofs, ...), derived by the caller from element ownership.
    pub fn set_owners(&mut self, kind: EntityKind, owners: Vec<usize>) {
        self.owners.insert(kind, owners);
    }

    pub fn owners(&self, kind: EntityKind) -> Option<&[usize]> {
        self.owners.get(&kind).map(Vec::as_slice)
    }

    fn owner_of(&self, kind: EntityKind, index: usize) -> Result<usize> {
        match kind {
            // A core row is owned by that core; a Core group row by its
            // representative (lowest) member, which callers record when the
            // grouping is formed.
            EntityKind::Core => Ok(index),
            _ => self
                .owners
                .get(&kind)
                .and_then(|v| v.get(index).copied())
                .ok_or(Error::Redistribution(format!(
                    "no ownership map for entity kind `{kind}`"
                ))),
        }
    }

    /// Derive facet/dof/truedof ownership from element ownership: a facet
    /// belongs to the core of its lowest adjacent element, a dof to its
    /// element's core, a truedof to the core of its lowest dof.
    pub fn derive_mesh_owners(
        &mut self,
        topology: &crate::meshtopo::Topology,
        dofs: &crate::meshtopo::DofSpace,
    ) {
        let element_owner = self.owners[&EntityKind::Element].clone();
        let facet_owner: Vec<usize> = topology
            .facet_sides
            .iter()
            .map(|&(neg, pos)| {
                let e = match (neg, pos) {
                    (Some(a), Some(b)) => a.min(b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => unreachable!("facet with no elements"),
                };
                element_owner[e]
            })
            .collect();
        let dof_owner: Vec<usize> = dofs
            .dof_element
            .iter()
            .map(|&e| element_owner[e])
            .collect();
        let mut truedof_owner = vec![usize::MAX; dofs.n_truedofs()];
        for (d, td) in dofs.dof_truedof.iter() {
            if truedof_owner[td] == usize::MAX {
                truedof_owner[td] = dof_owner[d];
            }
        }
        self.set_owners(EntityKind::Facet, facet_owner);
        self.set_owners(EntityKind::Dof, dof_owner);
        self.set_owners(EntityKind::TrueDof, truedof_owner);
    }
}

/// One aggregated exchange between a pair of cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommRecord {
    pub op: String,
    pub src: usize,
    pub dst: usize,
    pub messages: u64,
    /// Relation/matrix entries moved.
    pub volume: u64,
}

/// Message accounting for one or more distributed operations.
#[derive(Debug, Clone, Default)]
pub struct CommLedger {
    pub records: Vec<CommRecord>,
}

impl CommLedger {
    pub fn total_messages(&self) -> u64 {
        self.records.iter().map(|r| r.messages).sum()
    }

    pub fn total_volume(&self) -> u64 {
        self.records.iter().map(|r| r.volume).sum()
    }

    pub fn merge(&mut self, other: CommLedger) {
        self.records.extend(other.records);
    }
}

/// Summed counts per ledger, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommTotals {
    pub messages: u64,
    pub volume: u64,
}

pub fn comm_summary(ledgers: &[CommLedger]) -> Vec<CommTotals> {
    ledgers
        .iter()
        .map(|l| CommTotals {
            messages: l.total_messages(),
            volume: l.total_volume(),
        })
        .collect()
}

/// Ledger CSV export: `level,op,src,dst,messages,volume`.
pub fn write_ledger_csv<W: Write>(w: &mut W, ledgers: &[(usize, &CommLedger)]) -> Result<()> {
    writeln!(w, "level,op,src,dst,messages,volume")?;
    for (level, ledger) in ledgers {
        for r in &ledger.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                level, r.op, r.src, r.dst, r.messages, r.volume
            )?;
        }
    }
    Ok(())
}

/// Initial distribution of a mesh across `n_cores` connected element sets.
pub fn initial_layout(mesh: &Mesh, n_cores: usize, spec: &PartitionSpec) -> Result<CoreLayout> {
    let n_elements = mesh.topology.n_elements();
    if n_cores > n_elements {
        return Err(Error::TooManyParts {
            requested: n_cores,
            available: n_elements,
        });
    }
    let adjacency = mesh.topology.element_element();
    let mut part_spec = *spec;
    part_spec.n_parts = n_cores;
    let partitioning = partitioner::partition_graph(&adjacency, &part_spec)?;
    let mut core_element = partitioning.part_node;
    core_element.row_kind = EntityKind::Core;
    let mut layout = CoreLayout::new(n_cores, core_element)?;
    let dofs = crate::meshtopo::build_dofs(&mesh.topology);
    layout.derive_mesh_owners(&mesh.topology, &dofs);
    Ok(layout)
}

/// Distributed boolean product. The result is identical to the serial
/// [`Relation::multiply`]; the ledger records, for every ordered core pair
/// that exchanged rows of `r2`, one message whose volume is the number of
/// transferred entries (each remote row counted once per pair).
pub fn dist_bool_multiply(
    r1: &Relation,
    r2: &Relation,
    layout: &CoreLayout,
    op: &str,
) -> Result<(Relation, CommLedger)> {
    let product = r1.multiply(r2)?;
    let mut transfers: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut fetched: std::collections::BTreeSet<(usize, usize)> = std::collections::BTreeSet::new();
    for i in 0..r1.nrows() {
        let dst = layout.owner_of(r1.row_kind, i)?;
        for &j in r1.row(i) {
            let src = layout.owner_of(r2.row_kind, j)?;
            if src != dst && fetched.insert((dst, j)) {
                transfers.entry((src, dst)).or_default().push(j);
            }
        }
    }
    let records = transfers
        .into_iter()
        .map(|((src, dst), rows)| CommRecord {
            op: op.to_string(),
            src,
            dst,
            messages: 1,
            volume: rows.iter().map(|&j| r2.row(j).len() as u64).sum(),
        })
        .collect();
    Ok((product, CommLedger { records }))
}
