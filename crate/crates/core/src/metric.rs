//! Gradient representation in the shear-elasticity plus L2 metric, and the
//! harmonic Lamé field it is weighted with.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::NodalField;
use crate::linalg::{solve_spd, CsrMatrix, SolveStats, SolverOptions};
use crate::mesh::{CellGeometry, Point, SimplicialMesh};
use crate::preshape::DerivativeCovector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub alpha_le: f64,
    pub alpha_l2: f64,
    pub mu_max: f64,
    pub mu_min: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            alpha_le: 0.02,
            alpha_l2: 1.0,
            mu_max: 1.0,
            mu_min: 1.0,
        }
    }
}

impl MetricConfig {
    /// `has_dirichlet`: whether the metric mesh has boundary vertices.
    pub fn validate(&self, has_dirichlet: bool) -> Result<()> {
        let ok =
            self.alpha_le > 0.0 && self.alpha_l2 >= 0.0 && self.mu_max > 0.0 && self.mu_min > 0.0;
        if !ok || !(self.alpha_le + self.alpha_l2).is_finite() {
            return Err(Error::Config(
                "metric needs alpha_le > 0, alpha_l2 >= 0 and positive mu bounds".into(),
            ));
        }
        if self.alpha_l2 == 0.0 && !has_dirichlet {
            return Err(Error::Config(
                "alpha_l2 = 0 without a Dirichlet boundary leaves rigid motions in the kernel"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Vector field on the metric mesh, zero on its boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub values: Vec<Point>,
}

impl GradientField {
    pub fn zeros(n: usize) -> Self {
        GradientField {
            values: vec![Point::zeros(); n],
        }
    }
}

fn geometries(mesh: &SimplicialMesh, positions: &[Point]) -> Result<Vec<CellGeometry>> {
    (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| mesh.geometry_at(positions, c))
        .collect()
}

/// Harmonic interpolation of the Lamé parameter: `mu_max` on
/// `shape_vertices`, `mu_min` on the mesh boundary (shape wins where both
/// apply), P1 Laplace solution elsewhere.
pub fn solve_mu(
    mesh: &SimplicialMesh,
    shape_vertices: &[usize],
    cfg: &MetricConfig,
) -> Result<NodalField> {
    let n = mesh.n_vertices();
    if cfg.mu_max == cfg.mu_min {
        return Ok(NodalField::constant(n, cfg.mu_max));
    }
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &v in mesh.boundary_vertices() {
        fixed[v] = Some(cfg.mu_min);
    }
    for &v in shape_vertices {
        fixed[v] = Some(cfg.mu_max);
    }
    if fixed.iter().all(|f| f.is_none()) {
        return Err(Error::Solver(
            "Lamé field problem has no Dirichlet vertices".into(),
        ));
    }
    let mut index = vec![usize::MAX; n];
    let mut n_free = 0;
    for v in 0..n {
        if fixed[v].is_none() {
            index[v] = n_free;
            n_free += 1;
        }
    }
    let geom = geometries(mesh, mesh.vertices())?;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n_free];
    for (c, g) in geom.iter().enumerate() {
        let cell = mesh.cell(c);
        for (a, &va) in cell.iter().enumerate() {
            if index[va] == usize::MAX {
                continue;
            }
            for (b, &vb) in cell.iter().enumerate() {
                let k = g.volume * g.gradients[a].dot(&g.gradients[b]);
                match fixed[vb] {
                    Some(val) => rhs[index[va]] -= k * val,
                    None => triplets.push((index[va], index[vb], k)),
                }
            }
        }
    }
    let mut values: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    if n_free > 0 {
        let a = CsrMatrix::from_triplets(n_free, &triplets);
        let (x, _) = solve_spd(&a, &rhs, &SolverOptions::default())?;
        for v in 0..n {
            if index[v] != usize::MAX {
                values[v] = x[index[v]];
            }
        }
    }
    Ok(NodalField::new(values))
}

/// The metric's stiffness-plus-mass matrix restricted to interior dofs.
#[derive(Clone, Debug)]
pub struct MetricOperator {
    pub matrix: CsrMatrix,
    dim: usize,
    /// Reduced index of each full dof, `usize::MAX` for Dirichlet dofs.
    index: Vec<usize>,
}

impl MetricOperator {
    pub fn assemble(
        mesh: &SimplicialMesh,
        positions: &[Point],
        mu: &NodalField,
        cfg: &MetricConfig,
    ) -> Result<Self> {
        mu.check_len(mesh.n_vertices())?;
        cfg.validate(!mesh.boundary_vertices().is_empty())?;
        let dim = mesh.dim_ambient();
        let mut index = vec![usize::MAX; mesh.n_vertices() * dim];
        let mut n_free = 0;
        for v in 0..mesh.n_vertices() {
            if !mesh.is_boundary(v) {
                for i in 0..dim {
                    index[v * dim + i] = n_free;
                    n_free += 1;
                }
            }
        }
        let geom = geometries(mesh, positions)?;
        let k = mesh.dim_cell();
        let mass_scale = 1.0 / ((k + 1) * (k + 2)) as f64;
        let per_cell: Vec<Vec<(usize, usize, f64)>> = geom
            .par_iter()
            .enumerate()
            .map(|(c, g)| {
                let cell = mesh.cell(c);
                let mu_bar = cell.iter().map(|&v| mu[v]).sum::<f64>() / cell.len() as f64;
                let mut out = Vec::with_capacity((cell.len() * dim).pow(2));
                for (a, &va) in cell.iter().enumerate() {
                    for (b, &vb) in cell.iter().enumerate() {
                        let ga = g.gradients[a];
                        let gb = g.gradients[b];
                        let gg = ga.dot(&gb);
                        let m = g.volume * mass_scale * if a == b { 2.0 } else { 1.0 };
                        for i in 0..dim {
                            let ri = index[va * dim + i];
                            if ri == usize::MAX {
                                continue;
                            }
                            for j in 0..dim {
                                let rj = index[vb * dim + j];
                                if rj == usize::MAX {
                                    continue;
                                }
                                let delta = if i == j { 1.0 } else { 0.0 };
                                let stiff = 0.5 * g.volume * mu_bar * (delta * gg + ga[j] * gb[i]);
                                out.push((ri, rj, cfg.alpha_le * stiff + cfg.alpha_l2 * delta * m));
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let triplets: Vec<(usize, usize, f64)> = per_cell.into_iter().flatten().collect();
        Ok(MetricOperator {
            matrix: CsrMatrix::from_triplets(n_free, &triplets),
            dim,
            index,
        })
    }

    fn reduce(&self, values: &[Point]) -> Vec<f64> {
        let mut out = vec![0.0; self.matrix.n()];
        for (v, p) in values.iter().enumerate() {
            for i in 0..self.dim {
                let r = self.index[v * self.dim + i];
                if r != usize::MAX {
                    out[r] = p[i];
                }
            }
        }
        out
    }

    fn expand(&self, x: &[f64], n_vertices: usize) -> Vec<Point> {
        let mut out = vec![Point::zeros(); n_vertices];
        for (v, p) in out.iter_mut().enumerate() {
            for i in 0..self.dim {
                let r = self.index[v * self.dim + i];
                if r != usize::MAX {
                    p[i] = x[r];
                }
            }
        }
        out
    }

    /// Solves `a(U, V) = rhs(V)` for all interior test fields `V`.
    pub fn solve(
        &self,
        rhs: &[Point],
        opts: &SolverOptions,
    ) -> Result<(GradientField, SolveStats)> {
        let b = self.reduce(rhs);
        let (x, stats) = solve_spd(&self.matrix, &b, opts)?;
        if stats.relative_residual > 1e-10 {
            return Err(Error::Solver(format!(
                "metric solve residual {:.3e} above 1e-10",
                stats.relative_residual
            )));
        }
        Ok((
            GradientField {
                values: self.expand(&x, rhs.len()),
            },
            stats,
        ))
    }

    /// `a(U, V)` for interior fields.
    pub fn energy(&self, u: &[Point], v: &[Point]) -> f64 {
        self.matrix.bilinear(&self.reduce(u), &self.reduce(v))
    }
}

/// Represents `rhs` as a vector field in the metric on `mesh` at its own
/// vertex positions.
pub fn represent_gradient(
    mesh: &SimplicialMesh,
    mu: &NodalField,
    cfg: &MetricConfig,
    rhs: &DerivativeCovector,
) -> Result<GradientField> {
    if rhs.len() != mesh.n_vertices() {
        return Err(Error::LengthMismatch {
            expected: mesh.n_vertices(),
            actual: rhs.len(),
        });
    }
    let op = MetricOperator::assemble(mesh, mesh.vertices(), mu, cfg)?;
    Ok(op.solve(&rhs.values, &SolverOptions::default())?.0)
}

/// Moves a covector given on surface vertices onto the vertices of a
/// conforming volume mesh; `map[i]` is the volume index of surface vertex `i`.
pub fn inject(
    covector: &DerivativeCovector,
    map: &[usize],
    n_volume: usize,
) -> Result<DerivativeCovector> {
    if covector.len() != map.len() {
        return Err(Error::LengthMismatch {
            expected: map.len(),
            actual: covector.len(),
        });
    }
    let mut values = vec![Point::zeros(); n_volume];
    for (d, &v) in covector.values.iter().zip(map) {
        if v >= n_volume {
            return Err(Error::Config(format!(
                "surface vertex maps to missing volume vertex {v}"
            )));
        }
        values[v] += d;
    }
    Ok(DerivativeCovector {
        values,
        component: covector.component,
    })
}

/// Consistent-mass L2 norm of a P1 vector field.
pub fn l2_norm(u: &GradientField, mesh: &SimplicialMesh) -> Result<f64> {
    l2_norm_at(&u.values, mesh, mesh.vertices())
}

pub fn l2_norm_at(u: &[Point], mesh: &SimplicialMesh, positions: &[Point]) -> Result<f64> {
    if u.len() != mesh.n_vertices() {
        return Err(Error::LengthMismatch {
            expected: mesh.n_vertices(),
            actual: u.len(),
        });
    }
    let k = mesh.dim_cell();
    let scale = 1.0 / ((k + 1) * (k + 2)) as f64;
    let mut sum = 0.0;
    for c in 0..mesh.n_cells() {
        let vol = mesh.geometry_at(positions, c)?.volume;
        let cell = mesh.cell(c);
        // sum_ab M_ab u_a.u_b with M_ab = vol (1 + delta_ab) / ((k+1)(k+2))
        let s: Point = cell.iter().map(|&v| u[v]).sum();
        let sq: f64 = cell.iter().map(|&v| u[v].norm_squared()).sum();
        sum += vol * scale * (s.norm_squared() + sq);
    }
    Ok(sum.sqrt())
}
