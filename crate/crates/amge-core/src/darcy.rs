//! Global assembly and solution of the mixed saddle-point Darcy system, plus
//! the outflow-flux quantity of interest.
//!
//! The solve eliminates the no-flow velocity truedofs, factors the velocity
//! mass block by a banded Cholesky, and runs preconditioned CG on the
//! pressure Schur complement (preconditioned by the diagonal-mass lumped
//! Schur matrix, factored exactly). Dirichlet pressure data enters through
//! the velocity right-hand side, as natural for the mixed form. The solver
//! also accumulates a deterministic operation count used as the cost model.

use crate::linalg::ReorderedCholesky;
use crate::meshtopo::{BoundaryAttr, DofSpace, ElementMatrices, Topology};
use crate::relmat::{io, num_triple_product};
use crate::{EntityKind, Error, Relation, Result, SparseMatrix};
use std::io::Write;

/// Pressure data on the Dirichlet boundary; the Neumann part is always
/// homogeneous.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryConfig {
    pub p_in: f64,
    pub p_out: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            p_in: 1.0,
            p_out: 0.0,
        }
    }
}

impl BoundaryConfig {
    fn pressure(&self, attr: BoundaryAttr) -> Option<f64> {
        match attr {
            BoundaryAttr::DirichletIn => Some(self.p_in),
            BoundaryAttr::DirichletOut => Some(self.p_out),
            _ => None,
        }
    }
}

/// Mixed solution over truedofs: `q` holds one integrated normal flux per
/// facet, `p` one pressure per element.
#[derive(Debug, Clone)]
pub struct Solution {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Relative residual of the reduced saddle system.
    pub residual: f64,
    /// Deterministic work estimate (factorization and iteration flops).
    pub ops: u64,
}

/// Assemble the global matrix over truedofs:
/// `A = (dof_truedof)^T x A_diag x dof_truedof`.
pub fn assemble(a_diag: &SparseMatrix, dof_truedof: &Relation) -> Result<SparseMatrix> {
    let p = dof_truedof.to_matrix();
    let mut a = num_triple_product(&p.transpose(), a_diag, &p)?;
    a.row_kind = Some(EntityKind::TrueDof);
    a.col_kind = Some(EntityKind::TrueDof);
    Ok(a)
}

/// One level's Darcy problem in Schur-ready block form.
pub struct DarcyProblem {
    /// Velocity mass over free (non-Neumann) velocity truedofs.
    mass: SparseMatrix,
    /// Divergence: one row per element, columns over free velocity truedofs.
    div: SparseMatrix,
    /// Velocity right-hand side from the Dirichlet pressure data.
    rhs_vel: Vec<f64>,
    /// Free index of each velocity truedof (`usize::MAX` marks eliminated).
    free_index: Vec<usize>,
    free_facets: Vec<usize>,
    /// Pin one pressure when no Dirichlet boundary fixes the constant mode.
    pin_pressure: bool,
    n_vel_truedofs: usize,
}

impl DarcyProblem {
    pub fn new(
        topology: &Topology,
        dofs: &DofSpace,
        matrices: &ElementMatrices,
        bc: &BoundaryConfig,
    ) -> Result<DarcyProblem> {
        let n_facets = topology.n_facets();
        debug_assert_eq!(dofs.n_vel_truedofs, n_facets);
        let mut free_index = vec![usize::MAX; n_facets];
        let mut free_facets = Vec::new();
        let mut has_dirichlet = false;
        for f in 0..n_facets {
            match topology.facet_attr[f] {
                BoundaryAttr::Neumann => {}
                attr => {
                    if bc.pressure(attr).is_some() {
                        has_dirichlet = true;
                    }
                    free_index[f] = free_facets.len();
                    free_facets.push(f);
                }
            }
        }
        let n_free = free_facets.len();
        if n_free == 0 {
            return Err(Error::SingularSystem(
                "all velocity truedofs eliminated by no-flow boundaries".into(),
            ));
        }

        let mut mass_triplets = Vec::new();
        let mut div_triplets = Vec::new();
        for (e, block) in matrices.blocks.iter().enumerate() {
            let tds: Vec<usize> = block
                .vel_dofs
                .iter()
                .map(|&d| dofs.dof_facet[d].expect("velocity dof has a facet"))
                .collect();
            for (i, &tdi) in tds.iter().enumerate() {
                let fi = free_index[tdi];
                if fi == usize::MAX {
                    continue;
                }
                for (j, &tdj) in tds.iter().enumerate() {
                    let fj = free_index[tdj];
                    if fj == usize::MAX {
                        continue;
                    }
                    let v = block.mass[(i, j)];
                    if v != 0.0 {
                        mass_triplets.push((fi, fj, v));
                    }
                }
                let d = block.div[i];
                if d != 0.0 {
                    div_triplets.push((e, fi, d));
                }
            }
        }
        let mass = SparseMatrix::from_triplets(n_free, n_free, mass_triplets)?;
        let div = SparseMatrix::from_triplets(topology.n_elements(), n_free, div_triplets)?;

        let mut rhs_vel = vec![0.0; n_free];
        for f in 0..n_facets {
            if let Some(p_d) = bc.pressure(topology.facet_attr[f]) {
                let (_, outward) = topology
                    .boundary_element(f)
                    .ok_or_else(|| Error::InvalidMesh(format!("facet {f} marked Dirichlet but interior")))?;
                rhs_vel[free_index[f]] = -p_d * outward;
            }
        }

        Ok(DarcyProblem {
            mass,
            div,
            rhs_vel,
            free_index,
            free_facets,
            pin_pressure: !has_dirichlet,
            n_vel_truedofs: n_facets,
        })
    }
}

/// Solve the reduced saddle system to a relative residual of 1e-10.
pub fn solve_mixed(problem: &DarcyProblem) -> Result<Solution> {
    const TARGET: f64 = 1e-10;
    let n_free = problem.free_facets.len();
    let n_p = problem.div.nrows();
    let mut ops: u64 = 0;

    let mass_chol = ReorderedCholesky::factor(&problem.mass)?;
    ops += mass_chol.factor_ops();

    // Lumped Schur preconditioner: div * diag(mass)^-1 * div^T.
    let inv_diag: Vec<f64> = (0..n_free).map(|i| 1.0 / problem.mass.get(i, i)).collect();
    let schur_precond = {
        let bt = problem.div.transpose();
        let scaled = SparseMatrix::from_triplets(
            n_free,
            n_p,
            bt.iter().map(|(i, j, v)| (i, j, v * inv_diag[i])),
        )?;
        problem.div.multiply(&scaled)?
    };
    let (precond, pinned) = if problem.pin_pressure {
        if n_p == 1 {
            (None, true)
        } else {
            let reduced = SparseMatrix::from_triplets(
                n_p - 1,
                n_p - 1,
                schur_precond
                    .iter()
                    .filter(|&(i, j, _)| i > 0 && j > 0)
                    .map(|(i, j, v)| (i - 1, j - 1, v)),
            )?;
            (Some(ReorderedCholesky::factor(&reduced)?), true)
        }
    } else {
        (Some(ReorderedCholesky::factor(&schur_precond)?), false)
    };
    if let Some(p) = &precond {
        ops += p.factor_ops();
    }

    // Schur right-hand side: B M^-1 f (the pressure source is zero).
    let apply_m_inv = |x: &[f64], ops: &mut u64| -> Vec<f64> {
        *ops += mass_chol.solve_ops();
        mass_chol.solve(x)
    };
    let apply_schur = |p: &[f64], ops: &mut u64| -> Vec<f64> {
        let mut btp = vec![0.0; n_free];
        problem.div.transpose().matvec(p, &mut btp);
        let minv = apply_m_inv(&btp, ops);
        let mut out = vec![0.0; n_p];
        problem.div.matvec(&minv, &mut out);
        *ops += 2 * problem.div.nnz() as u64;
        out
    };

    let minv_f = apply_m_inv(&problem.rhs_vel, &mut ops);
    let mut schur_rhs = vec![0.0; n_p];
    problem.div.matvec(&minv_f, &mut schur_rhs);

    // Preconditioned CG on the (possibly pinned) pressure space.
    let project = |v: &mut Vec<f64>| {
        if pinned {
            v[0] = 0.0;
        }
    };
    let apply_precond = |r: &[f64], ops: &mut u64| -> Vec<f64> {
        match &precond {
            None => vec![0.0; n_p],
            Some(chol) if pinned => {
                *ops += chol.solve_ops();
                let reduced: Vec<f64> = r[1..].to_vec();
                let z = chol.solve(&reduced);
                let mut full = vec![0.0; n_p];
                full[1..].copy_from_slice(&z);
                full
            }
            Some(chol) => {
                *ops += chol.solve_ops();
                chol.solve(r)
            }
        }
    };

    let mut p = vec![0.0; n_p];
    let mut r = schur_rhs.clone();
    project(&mut r);
    let rhs_norm = norm(&r).max(f64::MIN_POSITIVE);
    let mut z = apply_precond(&r, &mut ops);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let max_iters = 40 * n_p.max(16);
    let mut converged = norm(&r) <= 1e-13 * rhs_norm;
    let mut iterations = 0;
    while !converged && iterations < max_iters {
        iterations += 1;
        let mut sd = apply_schur(&d, &mut ops);
        project(&mut sd);
        let dsd = dot(&d, &sd);
        if dsd <= 0.0 {
            return Err(Error::SingularSystem(format!(
                "Schur complement lost definiteness (d^T S d = {dsd:e})"
            )));
        }
        let alpha = rz / dsd;
        axpy(alpha, &d, &mut p);
        axpy(-alpha, &sd, &mut r);
        ops += 4 * n_p as u64;
        if norm(&r) <= 1e-14 * rhs_norm {
            converged = true;
            break;
        }
        z = apply_precond(&r, &mut ops);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n_p {
            d[i] = z[i] + beta * d[i];
        }
        converged = norm(&r) <= 1e-14 * rhs_norm;
    }

    // Recover the velocity and check the true reduced residual.
    let mut btp = vec![0.0; n_free];
    problem.div.transpose().matvec(&p, &mut btp);
    let fv: Vec<f64> = problem
        .rhs_vel
        .iter()
        .zip(&btp)
        .map(|(f, b)| f - b)
        .collect();
    let q_free = apply_m_inv(&fv, &mut ops);

    let mut residual_vel = vec![0.0; n_free];
    problem.mass.matvec(&q_free, &mut residual_vel);
    let mut btp2 = vec![0.0; n_free];
    problem.div.transpose().matvec(&p, &mut btp2);
    for i in 0..n_free {
        residual_vel[i] += btp2[i] - problem.rhs_vel[i];
    }
    let mut residual_p = vec![0.0; n_p];
    problem.div.matvec(&q_free, &mut residual_p);
    if pinned {
        // The compatible part of the divergence residual; the pinned
        // constant mode is immaterial.
        let mean = residual_p.iter().sum::<f64>() / n_p as f64;
        for v in &mut residual_p {
            *v -= mean;
        }
    }
    let scale = norm(&problem.rhs_vel).max(1e-300);
    let residual = (norm2(&residual_vel) + norm2(&residual_p)).sqrt() / scale;
    if !residual.is_finite() || residual > TARGET {
        return Err(Error::NonConvergence {
            residual,
            iterations,
        });
    }

    let mut q = vec![0.0; problem.n_vel_truedofs];
    for (f, &td) in problem.free_facets.iter().enumerate() {
        q[td] = q_free[f];
    }
    Ok(Solution {
        q,
        p,
        residual,
        ops,
    })
}

/// Assemble and solve in one step for a level described by its topology,
/// dof space, and element matrices.
pub fn solve_level(
    topology: &Topology,
    dofs: &DofSpace,
    matrices: &ElementMatrices,
    bc: &BoundaryConfig,
) -> Result<Solution> {
    let problem = DarcyProblem::new(topology, dofs, matrices, bc)?;
    solve_mixed(&problem)
}

/// Mean normal flux across the outflow boundary:
/// `Q = (1/|G_out|) * sum over outflow facets of outward q`.
pub fn qoi_flux(solution: &Solution, topology: &Topology) -> Result<f64> {
    boundary_flux(solution, topology, BoundaryAttr::DirichletOut)
}

/// Mean outward flux over all facets with the given boundary attribute.
pub fn boundary_flux(
    solution: &Solution,
    topology: &Topology,
    attr: BoundaryAttr,
) -> Result<f64> {
    let facets = topology.facets_with_attr(attr);
    if facets.is_empty() {
        return Err(Error::InvalidMesh(format!(
            "no boundary facets with attribute {attr:?}"
        )));
    }
    let total_measure: f64 = facets.iter().map(|&f| topology.facet_measure[f]).sum();
    let mut total = 0.0;
    for &f in &facets {
        let (_, outward) = topology
            .boundary_element(f)
            .ok_or_else(|| Error::InvalidMesh(format!("facet {f} is not on the boundary")))?;
        total += outward * solution.q[f];
    }
    Ok(total / total_measure)
}

/// Max-norm of the discrete divergence of the velocity.
pub fn divergence_inf_norm(solution: &Solution, dofs: &DofSpace, matrices: &ElementMatrices) -> f64 {
    let mut worst = 0.0f64;
    for block in &matrices.blocks {
        let mut s = 0.0;
        for (i, &d) in block.vel_dofs.iter().enumerate() {
            let td = dofs.dof_facet[d].expect("velocity dof has a facet");
            s += block.div[i] * solution.q[td];
        }
        worst = worst.max(s.abs());
    }
    worst
}

/// Solution vectors in Matrix Market array format.
pub fn dump_solution(dir: &std::path::Path, name: &str, solution: &Solution) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(format!("{name}_velocity.mtx")))?;
    io::write_vector(&mut f, &solution.q)?;
    let mut f = std::fs::File::create(dir.join(format!("{name}_pressure.mtx")))?;
    io::write_vector(&mut f, &solution.p)?;
    f.flush()?;
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
