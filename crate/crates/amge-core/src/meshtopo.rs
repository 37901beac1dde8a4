//! Structured quad/hex meshes on the unit square/cube, with the topology
//! relations, decoupled Raviart-Thomas/piecewise-constant dof spaces, and
//! mixed Darcy element matrices.
//!
//! Every level of the agglomeration hierarchy is described by the same
//! [`Topology`] shape; the structured mesh only builds level 0. Facets keep
//! an oriented element pair `(neg, pos)`: the global facet normal points from
//! `neg` to `pos`, and on the structured mesh it is the positive axis
//! direction. Interior facets are enumerated before boundary facets, sweeping
//! the mesh slab by slab.

use crate::linalg::DenseMatrix;
use crate::relmat::io;
use crate::{EntityKind, Error, Relation, Result};
use std::io::Write as _;
use std::path::Path;

/// Boundary classification of a facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryAttr {
    Interior,
    /// Inflow Dirichlet boundary with pressure `p_in`.
    DirichletIn,
    /// Outflow Dirichlet boundary with pressure `p_out`.
    DirichletOut,
    /// Homogeneous no-flow boundary.
    Neumann,
}

/// Domain faces of the unit box, one per axis side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    NegX,
    PosX,
    NegY,
    PosY,
    NegZ,
    PosZ,
}

/// Boundary attributes per domain face.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySpec {
    faces: [BoundaryAttr; 6],
}

impl Default for BoundarySpec {
    /// Left face inflow (`p_in`), right face outflow (`p_out`), remaining
    /// faces no-flow.
    fn default() -> Self {
        let mut faces = [BoundaryAttr::Neumann; 6];
        faces[0] = BoundaryAttr::DirichletIn;
        faces[1] = BoundaryAttr::DirichletOut;
        BoundarySpec { faces }
    }
}

impl BoundarySpec {
    pub fn with_face(mut self, face: Face, attr: BoundaryAttr) -> Self {
        self.faces[face as usize] = attr;
        self
    }

    pub fn attr(&self, face: Face) -> BoundaryAttr {
        self.faces[face as usize]
    }

    fn attr_for(&self, axis: usize, low_side: bool) -> BoundaryAttr {
        self.faces[2 * axis + usize::from(!low_side)]
    }
}

/// Level topology: oriented facets between elements plus measures and
/// boundary attributes. Vertices always refer to the finest mesh and are only
/// used to decide facet-facet connectivity when grouping coarse facets.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Per-element facet lists in the canonical local order (geometric order
    /// on the structured mesh, ascending ids on coarse levels).
    pub element_facets: Vec<Vec<usize>>,
    /// Oriented adjacency: facet normal points from `.0` to `.1`; `None`
    /// marks the domain exterior.
    pub facet_sides: Vec<(Option<usize>, Option<usize>)>,
    pub facet_attr: Vec<BoundaryAttr>,
    pub facet_measure: Vec<f64>,
    pub element_measure: Vec<f64>,
    pub facet_vertex: Relation,
}

impl Topology {
    pub fn n_elements(&self) -> usize {
        self.element_facets.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facet_sides.len()
    }

    pub fn element_facet(&self) -> Relation {
        Relation::from_rows(
            EntityKind::Element,
            EntityKind::Facet,
            self.n_facets(),
            self.element_facets.clone(),
        )
        .expect("facet indices are in bounds by construction")
    }

    /// `element_element = element_facet x facet_element`; keeps self-loops.
    pub fn element_element(&self) -> Relation {
        let ef = self.element_facet();
        ef.multiply(&ef.transpose())
            .expect("kinds match by construction")
    }

    pub fn domain_measure(&self) -> f64 {
        self.element_measure.iter().sum()
    }

    /// Facets with the given boundary attribute.
    pub fn facets_with_attr(&self, attr: BoundaryAttr) -> Vec<usize> {
        (0..self.n_facets())
            .filter(|&f| self.facet_attr[f] == attr)
            .collect()
    }

    /// The single element of a boundary facet, with its outward sign
    /// relative to the facet orientation.
    pub fn boundary_element(&self, facet: usize) -> Option<(usize, f64)> {
        match self.facet_sides[facet] {
            (Some(e), None) => Some((e, 1.0)),
            (None, Some(e)) => Some((e, -1.0)),
            _ => None,
        }
    }
}

/// Structured mesh of the unit square/cube.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub cell_sizes: Vec<f64>,
    /// Mesh size: largest cell extent.
    pub h: f64,
    pub topology: Topology,
    pub boundary_spec: BoundarySpec,
}

/// Structured mesh with `n` cells per axis.
pub fn build_mesh(dim: usize, n_per_axis: usize, spec: BoundarySpec) -> Result<Mesh> {
    build_mesh_anisotropic(dim, &vec![n_per_axis; dim], spec)
}

/// Structured mesh with per-axis cell counts.
pub fn build_mesh_anisotropic(dim: usize, cells: &[usize], spec: BoundarySpec) -> Result<Mesh> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidMesh(format!("dimension {dim} not supported")));
    }
    if cells.len() != dim {
        return Err(Error::InvalidMesh(format!(
            "expected {dim} cell counts, got {}",
            cells.len()
        )));
    }
    if cells.iter().any(|&n| n == 0) {
        return Err(Error::InvalidMesh("zero cells along an axis".into()));
    }
    let cells: Vec<usize> = cells.to_vec();
    let sizes: Vec<f64> = cells.iter().map(|&n| 1.0 / n as f64).collect();
    let n_elements: usize = cells.iter().product();

    let strides = element_strides(&cells);
    let elem_id = |coord: &[usize]| -> usize {
        coord
            .iter()
            .zip(&strides)
            .map(|(&c, &s)| c * s)
            .sum::<usize>()
    };

    // Sweep facets slab by slab along axis 0, recursing into the remaining
    // axes, then renumber so interior facets come first in sweep order.
    struct FacetDesc {
        axis: usize,
        plane: usize,
        other: Vec<usize>,
    }
    let mut descs: Vec<FacetDesc> = Vec::new();
    match dim {
        2 => {
            let (nx, ny) = (cells[0], cells[1]);
            for x in 0..nx {
                if x == 0 {
                    for y in 0..ny {
                        descs.push(FacetDesc {
                            axis: 0,
                            plane: 0,
                            other: vec![y],
                        });
                    }
                }
                for y in 0..ny {
                    descs.push(FacetDesc {
                        axis: 0,
                        plane: x + 1,
                        other: vec![y],
                    });
                }
                for yb in 0..=ny {
                    descs.push(FacetDesc {
                        axis: 1,
                        plane: yb,
                        other: vec![x],
                    });
                }
            }
        }
        3 => {
            let (nx, ny, nz) = (cells[0], cells[1], cells[2]);
            for x in 0..nx {
                if x == 0 {
                    for y in 0..ny {
                        for z in 0..nz {
                            descs.push(FacetDesc {
                                axis: 0,
                                plane: 0,
                                other: vec![y, z],
                            });
                        }
                    }
                }
                for y in 0..ny {
                    for z in 0..nz {
                        descs.push(FacetDesc {
                            axis: 0,
                            plane: x + 1,
                            other: vec![y, z],
                        });
                    }
                }
                for y in 0..ny {
                    if y == 0 {
                        for z in 0..nz {
                            descs.push(FacetDesc {
                                axis: 1,
                                plane: 0,
                                other: vec![x, z],
                            });
                        }
                    }
                    for z in 0..nz {
                        descs.push(FacetDesc {
                            axis: 1,
                            plane: y + 1,
                            other: vec![x, z],
                        });
                    }
                    for zb in 0..=nz {
                        descs.push(FacetDesc {
                            axis: 2,
                            plane: zb,
                            other: vec![x, y],
                        });
                    }
                }
            }
        }
        _ => unreachable!(),
    }

    let is_interior = |d: &FacetDesc| d.plane > 0 && d.plane < cells[d.axis];
    let mut ordered: Vec<&FacetDesc> = descs.iter().filter(|d| is_interior(d)).collect();
    ordered.extend(descs.iter().filter(|d| !is_interior(d)));

    let n_facets = ordered.len();
    let mut facet_sides = Vec::with_capacity(n_facets);
    let mut facet_attr = Vec::with_capacity(n_facets);
    let mut facet_measure = Vec::with_capacity(n_facets);
    let mut facet_vertices: Vec<Vec<usize>> = Vec::with_capacity(n_facets);
    // Facet lookup by (axis, plane, other coords) for the element pass.
    let mut lookup = std::collections::HashMap::new();
    for (id, d) in ordered.iter().enumerate() {
        lookup.insert((d.axis, d.plane, d.other.clone()), id);
        let mut coord = insert_axis(&d.other, d.axis, 0);
        let neg = if d.plane > 0 {
            coord[d.axis] = d.plane - 1;
            Some(elem_id(&coord))
        } else {
            None
        };
        let pos = if d.plane < cells[d.axis] {
            coord[d.axis] = d.plane;
            Some(elem_id(&coord))
        } else {
            None
        };
        facet_sides.push((neg, pos));
        facet_attr.push(if is_interior(d) {
            BoundaryAttr::Interior
        } else {
            spec.attr_for(d.axis, d.plane == 0)
        });
        facet_measure.push(
            sizes
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != d.axis)
                .map(|(_, &s)| s)
                .product(),
        );
        facet_vertices.push(facet_corner_vertices(&cells, d.axis, d.plane, &d.other));
    }

    let mut element_facets = vec![Vec::with_capacity(2 * dim); n_elements];
    for coord in element_coords(&cells) {
        let e = elem_id(&coord);
        for axis in 0..dim {
            let other: Vec<usize> = coord
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != axis)
                .map(|(_, &c)| c)
                .collect();
            for plane in [coord[axis], coord[axis] + 1] {
                let id = lookup[&(axis, plane, other.clone())];
                element_facets[e].push(id);
            }
        }
    }

    let n_vertices: usize = cells.iter().map(|&n| n + 1).product();
    let facet_vertex = Relation::from_rows(
        EntityKind::Facet,
        EntityKind::Vertex,
        n_vertices,
        facet_vertices,
    )?;

    let element_measure = vec![sizes.iter().product::<f64>(); n_elements];
    let h = sizes.iter().cloned().fold(0.0f64, f64::max);

    Ok(Mesh {
        dim,
        cells,
        cell_sizes: sizes,
        h,
        topology: Topology {
            element_facets,
            facet_sides,
            facet_attr,
            facet_measure,
            element_measure,
            facet_vertex,
        },
        boundary_spec: spec,
    })
}

fn element_strides(cells: &[usize]) -> Vec<usize> {
    // C order: the last axis varies fastest.
    let dim = cells.len();
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * cells[a + 1];
    }
    strides
}

fn element_coords(cells: &[usize]) -> Vec<Vec<usize>> {
    let mut coords = vec![vec![]];
    for &n in cells {
        let mut next = Vec::with_capacity(coords.len() * n);
        for c in &coords {
            for v in 0..n {
                let mut c2 = c.clone();
                c2.push(v);
                next.push(c2);
            }
        }
        coords = next;
    }
    coords
}

fn insert_axis(other: &[usize], axis: usize, value: usize) -> Vec<usize> {
    let mut coord = Vec::with_capacity(other.len() + 1);
    coord.extend_from_slice(&other[..axis]);
    coord.push(value);
    coord.extend_from_slice(&other[axis..]);
    coord
}

fn facet_corner_vertices(cells: &[usize], axis: usize, plane: usize, other: &[usize]) -> Vec<usize> {
    let dim = cells.len();
    let vstrides = {
        let mut s = vec![1usize; dim];
        for a in (0..dim - 1).rev() {
            s[a] = s[a + 1] * (cells[a + 1] + 1);
        }
        s
    };
    let free_axes: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
    let mut corners = Vec::new();
    for mask in 0..(1usize << free_axes.len()) {
        let mut coord = insert_axis(other, axis, plane);
        for (bit, &a) in free_axes.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                coord[a] += 1;
            }
        }
        corners.push(coord.iter().zip(&vstrides).map(|(&c, &s)| c * s).sum());
    }
    corners
}

/// Decoupled dof space: one velocity dof per element-facet incidence plus one
/// pressure dof per element; velocity dofs first, pressure dofs after.
#[derive(Debug, Clone)]
pub struct DofSpace {
    pub element_dof: Relation,
    pub dof_truedof: Relation,
    /// +1 when the owning element sits on the negative side of the facet.
    pub dof_sign: Vec<f64>,
    pub dof_element: Vec<usize>,
    /// Facet of each velocity dof; `None` for pressure dofs.
    pub dof_facet: Vec<Option<usize>>,
    pub n_vel_dofs: usize,
    pub n_vel_truedofs: usize,
}

impl DofSpace {
    pub fn n_dofs(&self) -> usize {
        self.dof_sign.len()
    }

    pub fn n_truedofs(&self) -> usize {
        self.dof_truedof.ncols()
    }

    pub fn n_elements(&self) -> usize {
        self.element_dof.nrows()
    }

    /// Velocity dofs of one element, in local facet order.
    pub fn element_vel_dofs(&self, e: usize) -> &[usize] {
        let row = self.element_dof.row(e);
        &row[..row.len() - 1]
    }

    pub fn pressure_dof(&self, e: usize) -> usize {
        *self.element_dof.row(e).last().expect("element has dofs")
    }
}

/// Velocity truedofs are the facets (in facet order); pressure truedofs
/// follow, one per element.
pub fn build_dofs(topology: &Topology) -> DofSpace {
    let n_elements = topology.n_elements();
    let n_facets = topology.n_facets();
    let n_vel_dofs: usize = topology.element_facets.iter().map(Vec::len).sum();

    let mut dof_sign = Vec::with_capacity(n_vel_dofs + n_elements);
    let mut dof_element = Vec::with_capacity(n_vel_dofs + n_elements);
    let mut dof_facet = Vec::with_capacity(n_vel_dofs + n_elements);
    let mut dof_truedof_pairs = Vec::with_capacity(n_vel_dofs + n_elements);
    let mut element_rows: Vec<Vec<usize>> = vec![Vec::new(); n_elements];

    let mut dof = 0usize;
    for (e, facets) in topology.element_facets.iter().enumerate() {
        for &f in facets {
            let sign = match topology.facet_sides[f] {
                (Some(neg), _) if neg == e => 1.0,
                _ => -1.0,
            };
            dof_sign.push(sign);
            dof_element.push(e);
            dof_facet.push(Some(f));
            dof_truedof_pairs.push((dof, f));
            element_rows[e].push(dof);
            dof += 1;
        }
    }
    for e in 0..n_elements {
        dof_sign.push(1.0);
        dof_element.push(e);
        dof_facet.push(None);
        dof_truedof_pairs.push((dof, n_facets + e));
        element_rows[e].push(dof);
        dof += 1;
    }

    let element_dof = Relation::from_rows(EntityKind::Element, EntityKind::Dof, dof, element_rows)
        .expect("dof ids in bounds");
    let dof_truedof = Relation::from_pairs(
        EntityKind::Dof,
        EntityKind::TrueDof,
        dof,
        n_facets + n_elements,
        dof_truedof_pairs,
    )
    .expect("truedof ids in bounds");

    DofSpace {
        element_dof,
        dof_truedof,
        dof_sign,
        dof_element,
        dof_facet,
        n_vel_dofs,
        n_vel_truedofs: n_facets,
    }
}

/// Dense element block of the mixed saddle form, ordered
/// `[velocity dofs | pressure dof]`. The stored mass block already includes
/// the `1/k` weight.
#[derive(Debug, Clone)]
pub struct ElementBlock {
    pub vel_dofs: Vec<usize>,
    pub pressure_dof: usize,
    pub mass: DenseMatrix,
    /// Signed divergence row: entry per velocity dof, `sign * 1`.
    pub div: Vec<f64>,
    pub k: f64,
}

#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub blocks: Vec<ElementBlock>,
    pub n_dofs: usize,
}

impl ElementMatrices {
    /// Same geometry, new per-element permeability.
    pub fn reweighted(&self, k: &[f64]) -> Result<ElementMatrices> {
        if k.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                context: "permeability values per element",
                left: k.len(),
                right: self.blocks.len(),
            });
        }
        if let Some(bad) = k.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::InvalidMesh(format!("non-positive permeability {bad}")));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(k)
            .map(|(b, &knew)| {
                let mut mass = b.mass.clone();
                let scale = b.k / knew;
                for j in 0..mass.ncols {
                    for i in 0..mass.nrows {
                        mass[(i, j)] *= scale;
                    }
                }
                ElementBlock {
                    vel_dofs: b.vel_dofs.clone(),
                    pressure_dof: b.pressure_dof,
                    mass,
                    div: b.div.clone(),
                    k: knew,
                }
            })
            .collect();
        Ok(ElementMatrices {
            blocks,
            n_dofs: self.n_dofs,
        })
    }

    /// Block-diagonal saddle matrix over decoupled dofs.
    pub fn a_diag(&self) -> crate::SparseMatrix {
        let mut triplets = Vec::new();
        for b in &self.blocks {
            let n = b.vel_dofs.len();
            for i in 0..n {
                for j in 0..n {
                    let v = b.mass[(i, j)];
                    if v != 0.0 {
                        triplets.push((b.vel_dofs[i], b.vel_dofs[j], v));
                    }
                }
            }
            for (i, &d) in b.div.iter().enumerate() {
                if d != 0.0 {
                    triplets.push((b.pressure_dof, b.vel_dofs[i], d));
                    triplets.push((b.vel_dofs[i], b.pressure_dof, d));
                }
            }
        }
        crate::SparseMatrix::from_triplets(self.n_dofs, self.n_dofs, triplets)
            .expect("dof indices in bounds")
            .with_kinds(EntityKind::Dof, EntityKind::Dof)
    }
}

/// Lowest-order Raviart-Thomas mass and divergence blocks on the structured
/// mesh. Velocity dofs are integrated facet fluxes, so the divergence row is
/// just the outward sign per facet and the mass block couples the two facets
/// of each axis with the 1/3, 1/6 reference weights scaled by geometry.
pub fn element_matrices(mesh: &Mesh, dofs: &DofSpace, k: &[f64]) -> Result<ElementMatrices> {
    let n_elements = mesh.topology.n_elements();
    if k.len() != n_elements {
        return Err(Error::DimensionMismatch {
            context: "permeability values per element",
            left: k.len(),
            right: n_elements,
        });
    }
    if let Some(bad) = k.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidMesh(format!("non-positive permeability {bad}")));
    }
    let dim = mesh.dim;
    let volume: f64 = mesh.cell_sizes.iter().product();
    let mut blocks = Vec::with_capacity(n_elements);
    for e in 0..n_elements {
        let vel_dofs: Vec<usize> = dofs.element_vel_dofs(e).to_vec();
        debug_assert_eq!(vel_dofs.len(), 2 * dim);
        let mut mass = DenseMatrix::zeros(2 * dim, 2 * dim);
        for axis in 0..dim {
            // For unit-flux facet dofs on a box cell the axis pair block is
            // (h_a / volume) * h_a * [[1/3, 1/6], [1/6, 1/3]].
            let c = mesh.cell_sizes[axis] * mesh.cell_sizes[axis] / volume / k[e];
            let (lo, hi) = (2 * axis, 2 * axis + 1);
            mass[(lo, lo)] = c / 3.0;
            mass[(hi, hi)] = c / 3.0;
            mass[(lo, hi)] = c / 6.0;
            mass[(hi, lo)] = c / 6.0;
        }
        let div: Vec<f64> = vel_dofs.iter().map(|&d| dofs.dof_sign[d]).collect();
        blocks.push(ElementBlock {
            vel_dofs,
            pressure_dof: dofs.pressure_dof(e),
            mass,
            div,
            k: k[e],
        });
    }
    Ok(ElementMatrices {
        blocks,
        n_dofs: dofs.n_dofs(),
    })
}

impl Mesh {
    /// Write the topology relations as Matrix Market files plus a plain-text
    /// metadata file.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join("element_facet.mtx"))?;
        io::write_relation(&mut f, &self.topology.element_facet())?;
        let mut f = std::fs::File::create(dir.join("facet_vertex.mtx"))?;
        io::write_relation(&mut f, &self.topology.facet_vertex)?;
        let mut meta = std::fs::File::create(dir.join("mesh.meta"))?;
        writeln!(meta, "dim {}", self.dim)?;
        writeln!(
            meta,
            "cells {}",
            self.cells
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        )?;
        writeln!(meta, "h {:.17e}", self.h)?;
        for (name, attr) in [
            ("dirichlet_in", BoundaryAttr::DirichletIn),
            ("dirichlet_out", BoundaryAttr::DirichletOut),
            ("neumann", BoundaryAttr::Neumann),
        ] {
            writeln!(
                meta,
                "{name}_facets {}",
                self.topology.facets_with_attr(attr).len()
            )?;
        }
        Ok(())
    }
}
