//! Element-agglomeration multigrid coarsening with data redistribution at
//! coarse levels, driving a multilevel Monte Carlo estimator for mixed-form
//! Darcy flow with log-normal random permeability.
//!
//! The crate is organized around boolean relation tables (`relmat`): mesh
//! topology, degree-of-freedom maps, core ownership, agglomeration, and
//! redistribution are all expressed as sparse boolean matrices and their
//! products. On top of that sit structured meshes with lowest-order
//! Raviart-Thomas / piecewise-constant spaces (`meshtopo`), a deterministic
//! graph partitioner (`partitioner`), a simulated multi-core environment with
//! message accounting (`simcores`), the redistribution algorithms
//! (`redistribute`), the agglomeration multigrid hierarchy builder (`amge`),
//! saddle-point Darcy solves (`darcy`), a spectral log-normal field sampler
//! (`sampler`), and the multilevel Monte Carlo estimator (`mlmc`).

pub mod amge;
pub mod darcy;
pub mod linalg;
pub mod meshtopo;
pub mod mlmc;
pub mod partitioner;
pub mod redistribute;
pub mod relmat;
pub mod sampler;
pub mod simcores;

mod error;

pub use error::{Error, Result};
pub use relmat::{EntityKind, Relation, SparseMatrix};
