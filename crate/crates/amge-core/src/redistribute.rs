//! Redistribution of elements, dofs, and element matrices to a smaller set
//! of cores, expressed entirely as relation and sparse matrix products.
//!
//! Topology first: the active cores are grouped through the `core_core`
//! adjacency, every element is copied to a `newelement` owned by its group's
//! representative core, and each group runs a local partitioner to form
//! agglomerates. Dofs follow: each dof is copied to a `newdof` on the core
//! owning its agglomerate, element matrices are conjugated by the
//! `newdof_dof` bijection, and one newdof per shared true dof is promoted to
//! a `newtruedof`, which realizes the permutation `newtruedof_truedof`
//! between the two configurations.

use crate::meshtopo::DofSpace;
use crate::partitioner::{self, PartitionSpec};
use crate::relmat::num_triple_product;
use crate::simcores::{dist_bool_multiply, CommLedger, CoreLayout};
use crate::{EntityKind, Error, Relation, Result, SparseMatrix};

/// Number of core groups for a given active-core count (the smallest integer
/// not less than `n_active / beta_c`).
pub fn n_core_groups(n_active: usize, beta_c: usize) -> usize {
    n_active.div_ceil(beta_c)
}

/// `core_core = core_element x element_element x (core_element)^T`.
pub fn build_core_core(core_element: &Relation, element_element: &Relation) -> Result<Relation> {
    core_element
        .multiply(element_element)?
        .multiply(&core_element.transpose())
}

/// Group the active cores into `ceil(n_active / beta_c)` connected groups.
/// Rows of the result are indexed by group, columns by physical core.
pub fn coarsen_cores(core_core: &Relation, beta_c: usize, seed: u64) -> Result<Relation> {
    if beta_c == 0 {
        return Err(Error::Redistribution("beta_c must be >= 1".into()));
    }
    // Compress to the active cores so the partitioner sees a connected graph.
    let active: Vec<usize> = (0..core_core.nrows())
        .filter(|&c| !core_core.row(c).is_empty())
        .collect();
    let n_active = active.len();
    if n_active == 0 {
        return Err(Error::Redistribution("no active cores".into()));
    }
    let mut position = vec![usize::MAX; core_core.nrows()];
    for (p, &c) in active.iter().enumerate() {
        position[c] = p;
    }
    let compressed_pairs: Vec<(usize, usize)> = active
        .iter()
        .enumerate()
        .flat_map(|(p, &c)| core_core.row(c).iter().map(move |&d| (p, d)))
        .map(|(p, d)| (p, position[d]))
        .collect();
    let compressed = Relation::from_pairs(
        EntityKind::Core,
        EntityKind::Core,
        n_active,
        n_active,
        compressed_pairs,
    )?;
    let parts = n_core_groups(n_active, beta_c);
    let grouping = partitioner::partition_graph(&compressed, &PartitionSpec::new(parts).with_seed(seed))?;
    Relation::from_pairs(
        EntityKind::CoreGroup,
        EntityKind::Core,
        parts,
        core_core.nrows(),
        grouping
            .part_node
            .iter()
            .map(|(g, p)| (g, active[p])),
    )
}

/// Elements of each group (`Core_element = Core_core x core_element`) and the
/// element-copy bijection. Newelements are enumerated group by group in
/// ascending element order; when the grouping is the identity (each active
/// core its own group) nothing moves and the bijection is the identity.
pub fn redistribute_elements(
    core_group_core: &Relation,
    core_element: &Relation,
) -> Result<(Relation, Relation)> {
    let group_element = core_group_core.multiply(core_element)?;
    let n_elements = group_element.ncols();
    let identity_grouping = core_group_core.rows().all(|r| r.len() == 1) && {
        let active: Vec<usize> = (0..core_element.nrows())
            .filter(|&c| !core_element.row(c).is_empty())
            .collect();
        core_group_core.nrows() == active.len()
            && core_group_core
                .rows()
                .zip(&active)
                .all(|(r, &c)| r == [c])
    };
    let newelement_element = if identity_grouping {
        let mut id = Relation::identity(EntityKind::Element, n_elements);
        id.row_kind = EntityKind::NewElement;
        id
    } else {
        let pairs = group_element
            .rows()
            .flat_map(|els| els.iter().copied())
            .enumerate();
        Relation::from_pairs(
            EntityKind::NewElement,
            EntityKind::Element,
            n_elements,
            n_elements,
            pairs,
        )?
    };
    let mut group_element = group_element;
    group_element.row_kind = EntityKind::CoreGroup;
    Ok((group_element, newelement_element))
}

/// Partition each group's newelements into `ceil(local / factor)` connected
/// agglomerates via `newelement_newelement`, then map back to elements.
pub fn agglomerate_after_redistribution(
    newelement_element: &Relation,
    element_element: &Relation,
    group_element: &Relation,
    factor: usize,
    seed: u64,
) -> Result<(Relation, Relation)> {
    if factor == 0 {
        return Err(Error::Partition("agglomeration factor must be >= 1".into()));
    }
    let mut ne_e = newelement_element.clone();
    ne_e.row_kind = EntityKind::NewElement;
    let newelement_newelement = ne_e
        .multiply(element_element)?
        .multiply(&ne_e.transpose())?;

    // Newelements of one group are consecutive by construction; recover the
    // ranges from group sizes.
    let element_of: Vec<usize> = newelement_element
        .rows()
        .map(|r| r[0])
        .collect();
    let group_of_element = group_element.column_owner()?;
    let mut ae_rows: Vec<Vec<usize>> = Vec::new();
    let mut start = 0usize;
    while start < element_of.len() {
        let group = group_of_element[element_of[start]];
        let mut end = start;
        while end < element_of.len() && group_of_element[element_of[end]] == group {
            end += 1;
        }
        let local: Vec<usize> = (start..end).collect();
        let local_adj = Relation::from_pairs(
            EntityKind::NewElement,
            EntityKind::NewElement,
            local.len(),
            local.len(),
            local.iter().enumerate().flat_map(|(p, &ne)| {
                newelement_newelement
                    .row(ne)
                    .iter()
                    .filter_map(move |&m| (start..end).contains(&m).then(|| (p, m - start)))
            }),
        )?;
        let parts = local.len().div_ceil(factor);
        let local_parts =
            partitioner::partition_graph(&local_adj, &PartitionSpec::new(parts).with_seed(seed))?;
        for p in 0..parts {
            ae_rows.push(local_parts.part_node.row(p).iter().map(|&l| l + start).collect());
        }
        start = end;
    }
    let ae_newelement = Relation::from_rows(
        EntityKind::Agglomerate,
        EntityKind::NewElement,
        element_of.len(),
        ae_rows,
    )?;
    let ae_element = ae_newelement.multiply(newelement_element)?;
    Ok((ae_newelement, ae_element))
}

/// Dof copies. Velocity newdofs are enumerated newelement by newelement in
/// local facet order, pressure newdofs follow, mirroring the fine layout so
/// a trivial redistribution yields the identity.
pub struct DofRedistribution {
    pub newdof_dof: Relation,
    pub newelement_newdof: Relation,
    pub n_vel_newdofs: usize,
}

pub fn build_newdof_dof(
    ae_element: &Relation,
    element_dof: &Relation,
    newelement_element: &Relation,
    n_vel_dofs: usize,
) -> Result<DofRedistribution> {
    // Decoupling precondition: every dof lies in exactly one element, hence
    // in exactly one agglomerate.
    let ae_dof = ae_element.multiply(element_dof)?;
    if !ae_dof.is_partition() {
        return Err(Error::Redistribution(
            "element_dof is not decoupled: some dof belongs to several agglomerates".into(),
        ));
    }
    let element_of: Vec<usize> = newelement_element.rows().map(|r| r[0]).collect();
    let n_dofs = element_dof.ncols();
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n_dofs);
    let mut newdof = 0usize;
    for &e in &element_of {
        for &d in element_dof.row(e).iter().filter(|&&d| d < n_vel_dofs) {
            pairs.push((newdof, d));
            newdof += 1;
        }
    }
    let n_vel_newdofs = newdof;
    for &e in &element_of {
        for &d in element_dof.row(e).iter().filter(|&&d| d >= n_vel_dofs) {
            pairs.push((newdof, d));
            newdof += 1;
        }
    }
    if newdof != n_dofs {
        return Err(Error::Redistribution(format!(
            "copied {newdof} dofs out of {n_dofs}"
        )));
    }
    let newdof_dof = Relation::from_pairs(EntityKind::NewDof, EntityKind::Dof, n_dofs, n_dofs, pairs)?;
    let mut ne_e = newelement_element.clone();
    ne_e.row_kind = EntityKind::NewElement;
    let newelement_newdof = ne_e
        .multiply(element_dof)?
        .multiply(&newdof_dof.transpose())?;
    Ok(DofRedistribution {
        newdof_dof,
        newelement_newdof,
        n_vel_newdofs,
    })
}

/// `A_diag_new = newdof_dof x A_diag x (newdof_dof)^T`.
pub fn redistribute_element_matrices(
    a_diag: &SparseMatrix,
    newdof_dof: &Relation,
) -> Result<SparseMatrix> {
    let nd = newdof_dof.to_matrix();
    let mut out = num_triple_product(&nd, a_diag, &nd.transpose())?;
    out.row_kind = Some(EntityKind::NewDof);
    out.col_kind = Some(EntityKind::NewDof);
    Ok(out)
}

/// Representative selection for the redistributed true dofs.
pub struct TrueDofRedistribution {
    pub newtruedof_newdof: Relation,
    pub newtruedof_truedof: Relation,
}

/// Group the newdofs into equivalence classes through
/// `newdof_newdof = newdof_truedof x (newdof_truedof)^T`, pick the lowest
/// newdof of each class as its newtruedof, and enumerate classes by the
/// owning group of that representative (original truedof order within a
/// group).
pub fn select_newtruedofs(
    newdof_dof: &Relation,
    dof_truedof: &Relation,
    newdof_group: &[usize],
) -> Result<TrueDofRedistribution> {
    let newdof_truedof = newdof_dof.multiply(dof_truedof)?;
    let newdof_newdof = newdof_truedof.multiply(&newdof_truedof.transpose())?;
    let n_truedofs = dof_truedof.ncols();
    // Representative newdof per truedof: lowest index in its class. The
    // class of a newdof is exactly the set sharing its truedof.
    let mut rep = vec![usize::MAX; n_truedofs];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_truedofs];
    for (nd, td) in newdof_truedof.iter() {
        members[td].push(nd);
        if nd < rep[td] {
            rep[td] = nd;
        }
    }
    if let Some(td) = rep.iter().position(|&r| r == usize::MAX) {
        return Err(Error::Redistribution(format!(
            "true dof {td} has no newdof copies"
        )));
    }
    // Consistency of the class product: members of a class must be mutually
    // related through newdof_newdof.
    debug_assert!(members
        .iter()
        .all(|m| m.iter().all(|&a| m.iter().all(|&b| newdof_newdof.contains(a, b)))));

    let mut order: Vec<usize> = (0..n_truedofs).collect();
    order.sort_by_key(|&td| (newdof_group[rep[td]], td));

    let mut ntd_newdof_pairs = Vec::new();
    let mut ntd_truedof_pairs = Vec::with_capacity(n_truedofs);
    for (ntd, &td) in order.iter().enumerate() {
        for &nd in &members[td] {
            ntd_newdof_pairs.push((ntd, nd));
        }
        ntd_truedof_pairs.push((ntd, td));
    }
    let n_newdofs = newdof_dof.nrows();
    Ok(TrueDofRedistribution {
        newtruedof_newdof: Relation::from_pairs(
            EntityKind::NewTrueDof,
            EntityKind::NewDof,
            n_truedofs,
            n_newdofs,
            ntd_newdof_pairs,
        )?,
        newtruedof_truedof: Relation::from_pairs(
            EntityKind::NewTrueDof,
            EntityKind::TrueDof,
            n_truedofs,
            n_truedofs,
            ntd_truedof_pairs,
        )?,
    })
}

/// `P = (newdof_dof)^T x P_new`: expresses an interpolation built on the new
/// configuration in terms of the previous configuration's dofs.
pub fn compose_interpolation(newdof_dof: &Relation, p_new: &SparseMatrix) -> Result<SparseMatrix> {
    newdof_dof.to_matrix().transpose().multiply(p_new)
}

/// All maps produced by one redistribution step.
pub struct RedistributionMaps {
    pub core_group_core: Relation,
    pub group_element: Relation,
    pub newelement_element: Relation,
    pub ae_newelement: Relation,
    pub ae_element: Relation,
    pub newdof_dof: Relation,
    pub newelement_newdof: Relation,
    pub newtruedof_newdof: Relation,
    pub newtruedof_truedof: Relation,
    pub n_vel_newdofs: usize,
    /// Representative (lowest) physical core of each group; these stay
    /// active, the rest idle.
    pub group_rep: Vec<usize>,
    /// Owning group of each newelement.
    pub newelement_group: Vec<usize>,
    /// Owning group of each newdof.
    pub newdof_group: Vec<usize>,
    pub beta_c: usize,
    pub ledger: CommLedger,
}

/// Run the full topology + dof redistribution for one level, with message
/// accounting against the current layout.
pub fn apply_redistribution(
    layout: &CoreLayout,
    element_element: &Relation,
    dofs: &DofSpace,
    n_groups: usize,
    beta_c: usize,
    agglomeration_factor: usize,
    seed: u64,
) -> Result<RedistributionMaps> {
    let mut ledger = CommLedger::default();
    let (ce_ee, l) = dist_bool_multiply(
        &layout.core_element,
        element_element,
        layout,
        "core_element_x_element_element",
    )?;
    ledger.merge(l);
    let (core_core, l) = dist_bool_multiply(
        &ce_ee,
        &layout.core_element.transpose(),
        layout,
        "x_element_core",
    )?;
    ledger.merge(l);

    let n_active = layout.n_active();
    let beta_for_groups = if n_groups >= n_active {
        1
    } else {
        // Smallest beta whose ceil law lands on the requested group count.
        (1..=n_active)
            .find(|&b| n_core_groups(n_active, b) == n_groups)
            .ok_or_else(|| {
                Error::Redistribution(format!(
                    "no coarsening factor yields {n_groups} groups from {n_active} cores"
                ))
            })?
    };
    let core_group_core = coarsen_cores(&core_core, beta_for_groups, seed)?;
    let group_rep: Vec<usize> = core_group_core
        .rows()
        .map(|cores| *cores.iter().min().expect("group is nonempty"))
        .collect();

    let (group_element, newelement_element) =
        redistribute_elements(&core_group_core, &layout.core_element)?;
    // Element copies move from their old owner to the group representative.
    {
        let group_of_element = group_element.column_owner()?;
        let mut records = std::collections::BTreeMap::new();
        for (e, &g) in group_of_element.iter().enumerate() {
            let src = layout.element_owner(e);
            let dst = group_rep[g];
            if src != dst {
                *records.entry((src, dst)).or_insert(0u64) += 1;
            }
        }
        for ((src, dst), volume) in records {
            ledger.records.push(crate::simcores::CommRecord {
                op: "newelement_element_copy".into(),
                src,
                dst,
                messages: 1,
                volume,
            });
        }
    }

    let (ae_newelement, ae_element) = agglomerate_after_redistribution(
        &newelement_element,
        element_element,
        &group_element,
        agglomeration_factor,
        seed,
    )?;

    let dof_r = build_newdof_dof(
        &ae_element,
        &dofs.element_dof,
        &newelement_element,
        dofs.n_vel_dofs,
    )?;

    let group_of_element = group_element.column_owner()?;
    let newelement_group: Vec<usize> = newelement_element
        .rows()
        .map(|r| group_of_element[r[0]])
        .collect();
    let newdof_group: Vec<usize> = dof_r
        .newelement_newdof
        .transpose()
        .rows()
        .map(|nes| newelement_group[nes[0]])
        .collect();

    let truedof_r = select_newtruedofs(&dof_r.newdof_dof, &dofs.dof_truedof, &newdof_group)?;

    Ok(RedistributionMaps {
        core_group_core,
        group_element,
        newelement_element,
        ae_newelement,
        ae_element,
        newdof_dof: dof_r.newdof_dof,
        newelement_newdof: dof_r.newelement_newdof,
        newtruedof_newdof: truedof_r.newtruedof_newdof,
        newtruedof_truedof: truedof_r.newtruedof_truedof,
        n_vel_newdofs: dof_r.n_vel_newdofs,
        group_rep,
        newelement_group,
        newdof_group,
        beta_c,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshtopo::{build_dofs, build_mesh_anisotropic, element_matrices, BoundarySpec, Mesh};
    use crate::simcores::initial_layout;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn figure_mesh() -> Mesh {
        build_mesh_anisotropic(2, &[3, 2], BoundarySpec::default()).unwrap()
    }

    fn figure_layout(mesh: &Mesh) -> CoreLayout {
        initial_layout(mesh, 3, &PartitionSpec::new(3)).unwrap()
    }

    #[test]
    fn core_core_figure_adjacency() {
        let mesh = figure_mesh();
        let layout = figure_layout(&mesh);
        let cc = build_core_core(&layout.core_element, &mesh.topology.element_element()).unwrap();
        assert!(cc.contains(0, 1) && cc.contains(1, 0));
        assert!(cc.contains(1, 2) && cc.contains(2, 1));
        assert!(!cc.contains(0, 2) && !cc.contains(2, 0));
        for c in 0..3 {
            assert!(cc.contains(c, c));
        }
    }

    #[test]
    fn core_core_single_core() {
        let mesh = figure_mesh();
        let layout = CoreLayout::trivial(6);
        let cc = build_core_core(&layout.core_element, &mesh.topology.element_element()).unwrap();
        assert_eq!(cc.nrows(), 1);
        assert!(cc.contains(0, 0));
        assert_eq!(cc.nnz(), 1);
    }

    #[test]
    fn core_core_disconnected_blocks() {
        // Two components, one core each: block-diagonal core adjacency.
        let element_element = Relation::from_rows(
            EntityKind::Element,
            EntityKind::Element,
            4,
            vec![vec![0, 1], vec![0, 1], vec![2, 3], vec![2, 3]],
        )
        .unwrap();
        let core_element = Relation::from_rows(
            EntityKind::Core,
            EntityKind::Element,
            4,
            vec![vec![0, 1], vec![2, 3]],
        )
        .unwrap();
        let cc = build_core_core(&core_element, &element_element).unwrap();
        assert!(cc.contains(0, 0) && cc.contains(1, 1));
        assert!(!cc.contains(0, 1) && !cc.contains(1, 0));
    }

    fn path_core_core(n: usize) -> Relation {
        Relation::from_pairs(
            EntityKind::Core,
            EntityKind::Core,
            n,
            n,
            (0..n).flat_map(|i| {
                let mut v = vec![(i, i)];
                if i + 1 < n {
                    v.push((i, i + 1));
                    v.push((i + 1, i));
                }
                v
            }),
        )
        .unwrap()
    }

    #[test]
    fn coarsen_cores_ceil_law() {
        for (n, beta, expected) in [(512usize, 8usize, 64usize), (1, 4, 1), (3, 2, 2)] {
            let cc = path_core_core(n);
            let grouping = coarsen_cores(&cc, beta, 0).unwrap();
            assert_eq!(grouping.nrows(), expected);
            assert!(grouping.is_partition());
        }
    }

    #[test]
    fn coarsen_cores_figure_is_valid_grouping() {
        let cc = path_core_core(3);
        let grouping = coarsen_cores(&cc, 2, 0).unwrap();
        assert_eq!(grouping.nrows(), 2);
        assert!(grouping.is_partition());
        assert!(partitioner::parts_connected(&grouping, &cc));
    }

    #[test]
    fn redistribute_elements_figure() {
        let mesh = figure_mesh();
        let layout = figure_layout(&mesh);
        // Fig. 1(h) grouping as given: {C1}, {C2, C3}.
        let grouping = Relation::from_rows(
            EntityKind::CoreGroup,
            EntityKind::Core,
            3,
            vec![vec![0], vec![1, 2]],
        )
        .unwrap();
        let (group_element, ne_e) =
            redistribute_elements(&grouping, &layout.core_element).unwrap();
        // Fig. 1(i).
        assert_eq!(group_element.row(0), &[0, 1]);
        assert_eq!(group_element.row(1), &[2, 3, 4, 5]);
        assert!(ne_e.is_permutation());
    }

    #[test]
    fn identity_grouping_is_noop() {
        let mesh = figure_mesh();
        let layout = figure_layout(&mesh);
        let grouping = Relation::from_rows(
            EntityKind::CoreGroup,
            EntityKind::Core,
            3,
            vec![vec![0], vec![1], vec![2]],
        )
        .unwrap();
        let (_, ne_e) = redistribute_elements(&grouping, &layout.core_element).unwrap();
        assert!(ne_e.same_entries(&Relation::identity(EntityKind::Element, 6)));
        assert_eq!(ne_e.row_kind, EntityKind::NewElement);
    }

    #[test]
    fn newelement_bijection_on_random_layouts() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..8 {
            let nx = rng.gen_range(3..9);
            let ny = rng.gen_range(2..7);
            let mesh = build_mesh_anisotropic(2, &[nx, ny], BoundarySpec::default()).unwrap();
            let n_cores = rng.gen_range(2..=4.min(nx * ny));
            let layout = initial_layout(&mesh, n_cores, &PartitionSpec::new(n_cores)).unwrap();
            let cc = build_core_core(&layout.core_element, &mesh.topology.element_element()).unwrap();
            let grouping = coarsen_cores(&cc, 2, 0).unwrap();
            let (_, ne_e) = redistribute_elements(&grouping, &layout.core_element).unwrap();
            assert!(ne_e.is_permutation());
        }
    }

    #[test]
    fn agglomerate_figure_matches_groups() {
        let mesh = figure_mesh();
        let layout = figure_layout(&mesh);
        let grouping = Relation::from_rows(
            EntityKind::CoreGroup,
            EntityKind::Core,
            3,
            vec![vec![0], vec![1, 2]],
        )
        .unwrap();
        let ee = mesh.topology.element_element();
        let (group_element, ne_e) = redistribute_elements(&grouping, &layout.core_element).unwrap();
        // Factor 8 leaves one agglomerate per group: Fig. 1(j).
        let (ae_ne, ae_e) =
            agglomerate_after_redistribution(&ne_e, &ee, &group_element, 8, 0).unwrap();
        assert!(ae_ne.is_partition());
        assert_eq!(ae_e.row(0), &[0, 1]);
        assert_eq!(ae_e.row(1), &[2, 3, 4, 5]);
    }

    #[test]
    fn agglomerate_unit_factor_gives_permutation() {
        let mesh = figure_mesh();
        let layout = figure_layout(&mesh);
        let grouping = Relation::from_rows(
            EntityKind::CoreGroup,
            EntityKind::Core,
            3,
            vec![vec![0], vec![1, 2]],
        )
        .unwrap();
        let ee = mesh.topology.element_element();
        let (group_element, ne_e) = redistribute_elements(&grouping, &layout.core_element).unwrap();
        let (_, ae_e) = agglomerate_after_redistribution(&ne_e, &ee, &group_element, 1, 0).unwrap();
        assert!(ae_e.is_permutation());
    }

    #[test]
    fn agglomerates_connected_on_random_meshes() {
        let mut rng = StdRng::seed_from_u64(43);
        for _ in 0..6 {
            let n = rng.gen_range(4..9);
            let mesh = build_mesh_anisotropic(2, &[n, n], BoundarySpec::default()).unwrap();
            let n_cores = rng.gen_range(2..5);
            let layout = initial_layout(&mesh, n_cores, &PartitionSpec::new(n_cores)).unwrap();
            let ee = mesh.topology.element_element();
            let cc = build_core_core(&layout.core_element, &ee).unwrap();
            let grouping = coarsen_cores(&cc, 2, 1).unwrap();
            let (group_element, ne_e) = redistribute_elements(&grouping, &layout.core_element).unwrap();
            let (ae_ne, ae_e) =
                agglomerate_after_redistribution(&ne_e, &ee, &group_element, 4, 1).unwrap();
            assert!(ae_ne.is_partition());
            assert!(ae_e.is_partition());
            assert!(partitioner::parts_connected(&ae_e, &ee));
        }
    }

    #[test]
    fn newdof_trivial_single_core_identity() {
        let mesh = figure_mesh();
        let dofs = build_dofs(&mesh.topology);
        let n = mesh.topology.n_elements();
        let ne_e = Relation::identity(EntityKind::Element, n);
        let ae_e = Relation::from_rows(
            EntityKind::Agglomerate,
            EntityKind::Element,
            n,
            vec![(0..n).collect()],
        )
        .unwrap();
        let r = build_newdof_dof(&ae_e, &dofs.element_dof, &ne_e, dofs.n_vel_dofs).unwrap();
        assert!(r
            .newdof_dof
            .same_entries(&Relation::identity(EntityKind::Dof, dofs.n_dofs())));
        assert_eq!(r.n_vel_newdofs, dofs.n_vel_dofs);
    }

    #[test]
    fn newdof_figure_counts_per_group() {
        // The worked example carries only the 14 interior-facet dofs.
        let element_dof = crate::relmat::Relation::from_rows(
            EntityKind::Element,
            EntityKind::Dof,
            14,
            vec![
                vec![0, 1],
                vec![2, 3],
                vec![4, 5, 6],
                vec![7, 8, 9],
                vec![10, 11],
                vec![12, 13],
            ],
        )
        .unwrap();
        let ae_element = Relation::from_rows(
            EntityKind::Agglomerate,
            EntityKind::Element,
            6,
            vec![vec![0, 1], vec![2, 3, 4, 5]],
        )
        .unwrap();
        let ne_e = Relation::identity(EntityKind::Element, 6);
        let r = build_newdof_dof(&ae_element, &element_dof, &ne_e, 14).unwrap();
        assert_eq!(r.newdof_dof.nrows(), 14);
        assert!(r.newdof_dof.is_permutation());
        // Newdofs owned through AE1 = dofs of e1, e2 (4 of them); AE2 the
        // remaining 10.
        let ae_newdof = ae_element
            .multiply(&element_dof)
            .unwrap()
            .multiply(&r.newdof_dof.transpose())
            .unwrap();
        assert_eq!(ae_newdof.row(0).len(), 4);
        assert_eq!(ae_newdof.row(1).len(), 10);
    }

    #[test]
    fn newdof_bijective_on_random_meshes() {
        let mut rng = StdRng::seed_from_u64(57);
        for _ in 0..6 {
            let nx = rng.gen_range(3..8);
            let ny = rng.gen_range(2..6);
            let mesh = build_mesh_anisotropic(2, &[nx, ny], BoundarySpec::default()).unwrap();
            let dofs = build_dofs(&mesh.topology);
            let n_cores = rng.gen_range(2..4);
            let layout = initial_layout(&mesh, n_cores, &PartitionSpec::new(n_cores)).unwrap();
            let maps = apply_redistribution(
                &layout,
                &mesh.topology.element_element(),
                &dofs,
                1,
                n_cores,
                4,
                0,
            )
            .unwrap();
            assert!(maps.newdof_dof.is_permutation());
            assert!(maps.newelement_element.is_permutation());
            assert!(maps.newtruedof_truedof.is_permutation());
        }
    }

    #[test]
    fn element_matrix_redistribution_identity() {
        let mesh = figure_mesh();
        let dofs = build_dofs(&mesh.topology);
        let mats = element_matrices(&mesh, &dofs, &vec![1.0; 6]).unwrap();
        let a_diag = mats.a_diag();
        let identity = Relation::identity(EntityKind::Dof, dofs.n_dofs());
        let moved = redistribute_element_matrices(&a_diag, &identity).unwrap();
        assert_eq!(moved.max_abs_diff(&a_diag), Some(0.0));
    }

    #[test]
    fn element_matrix_redistribution_preserves_values() {
        let mesh = figure_mesh();
        let dofs = build_dofs(&mesh.topology);
        let k: Vec<f64> = (0..6).map(|i| 1.0 + 0.3 * i as f64).collect();
        let mats = element_matrices(&mesh, &dofs, &k).unwrap();
        let a_diag = mats.a_diag();
        let layout = figure_layout(&mesh);
        let maps = apply_redistribution(
            &layout,
            &mesh.topology.element_element(),
            &dofs,
            2,
            2,
            8,
            0,
        )
        .unwrap();
        let moved = redistribute_element_matrices(&a_diag, &maps.newdof_dof).unwrap();
        // Permutation similarity preserves the Frobenius norm and entry
        // values under index relabeling.
        assert!((moved.frobenius_norm() - a_diag.frobenius_norm()).abs() < 1e-13);
        let owner = maps.newdof_dof.column_owner().unwrap();
        for (i, j, v) in a_diag.iter() {
            assert_eq!(moved.get(owner[i], owner[j]), v);
        }
    }

    #[test]
    fn newtruedof_identity_for_identity_redistribution() {
        let mesh = figure_mesh();
        let dofs = build_dofs(&mesh.topology);
        let identity = Relation::identity(EntityKind::Dof, dofs.n_dofs());
        let groups = vec![0usize; dofs.n_dofs()];
        let r = select_newtruedofs(&identity, &dofs.dof_truedof, &groups).unwrap();
        assert!(r
            .newtruedof_truedof
            .same_entries(&Relation::identity(EntityKind::TrueDof, dofs.n_truedofs())));
    }

    #[test]
    fn newtruedof_figure_class_count() {
        // Figure relations: 14 dofs onto 7 truedofs, identity copies.
        let dof_truedof = Relation::from_pairs(
            EntityKind::Dof,
            EntityKind::TrueDof,
            14,
            7,
            vec![
                (0, 0),
                (1, 2),
                (2, 1),
                (3, 2),
                (4, 0),
                (5, 3),
                (6, 5),
                (7, 1),
                (8, 4),
                (9, 5),
                (10, 3),
                (11, 6),
                (12, 4),
                (13, 6),
            ],
        )
        .unwrap();
        let identity = Relation::identity(EntityKind::Dof, 14);
        let groups = [vec![0usize; 4], vec![1usize; 10]].concat();
        let r = select_newtruedofs(&identity, &dof_truedof, &groups).unwrap();
        assert_eq!(r.newtruedof_truedof.nrows(), 7);
        assert!(r.newtruedof_truedof.is_permutation());
        // Every class keeps all its newdofs.
        assert_eq!(r.newtruedof_newdof.nnz(), 14);
    }

    #[test]
    fn compose_interpolation_cases() {
        let mesh = figure_mesh();
        let dofs = build_dofs(&mesh.topology);
        let n = dofs.n_dofs();
        let identity_map = Relation::identity(EntityKind::Dof, n);
        let p_new = SparseMatrix::from_triplets(
            n,
            3,
            (0..n).map(|i| (i, i % 3, 1.0 + i as f64)),
        )
        .unwrap();
        let p = compose_interpolation(&identity_map, &p_new).unwrap();
        assert_eq!(p.max_abs_diff(&p_new), Some(0.0));

        // P_new = identity: P is the transposed copy map.
        let layout = figure_layout(&mesh);
        let maps = apply_redistribution(
            &layout,
            &mesh.topology.element_element(),
            &dofs,
            2,
            2,
            8,
            0,
        )
        .unwrap();
        let p = compose_interpolation(&maps.newdof_dof, &SparseMatrix::identity(n)).unwrap();
        let expected = maps.newdof_dof.transpose().to_matrix();
        assert_eq!(p.max_abs_diff(&expected), Some(0.0));
    }

    #[test]
    fn coarse_operator_agrees_through_both_interpolations() {
        // P^T A_diag P with P composed back to old dofs must match
        // P_new^T A_diag_new P_new on the redistributed operator.
        let mesh = build_mesh_anisotropic(2, &[4, 3], BoundarySpec::default()).unwrap();
        let dofs = build_dofs(&mesh.topology);
        let k: Vec<f64> = (0..12).map(|i| 1.0 + 0.1 * i as f64).collect();
        let a_diag = element_matrices(&mesh, &dofs, &k).unwrap().a_diag();
        let layout = initial_layout(&mesh, 3, &PartitionSpec::new(3)).unwrap();
        let maps = apply_redistribution(
            &layout,
            &mesh.topology.element_element(),
            &dofs,
            2,
            2,
            4,
            0,
        )
        .unwrap();
        let a_new = redistribute_element_matrices(&a_diag, &maps.newdof_dof).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let n = dofs.n_dofs();
        let p_new = SparseMatrix::from_triplets(
            n,
            5,
            (0..n).filter_map(|i| {
                rng.gen::<f64>().lt(&0.6).then(|| (i, rng.gen_range(0..5), rng.gen_range(-1.0..1.0)))
            }),
        )
        .unwrap();
        let via_new = num_triple_product(&p_new.transpose(), &a_new, &p_new).unwrap();
        let p_old = compose_interpolation(&maps.newdof_dof, &p_new).unwrap();
        let via_old = num_triple_product(&p_old.transpose(), &a_diag, &p_old).unwrap();
        let scale = via_new.max_abs().max(1.0);
        assert!(via_new.max_abs_diff(&via_old).unwrap() <= 1e-12 * scale);
    }

    #[test]
    fn ceil_law_matches_formula() {
        for n in 1..40usize {
            for beta in 1..10usize {
                assert_eq!(n_core_groups(n, beta), n.div_ceil(beta));
            }
        }
    }
}
