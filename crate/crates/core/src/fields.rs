//! Nodal (P1) and cell (P0) fields, the initial node density and the
//! normalized target density.

use std::ops::{Deref, Index};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mesh::{Point, SimplicialMesh};
use crate::preshape::PreShapeState;

/// One value per vertex, interpreted as a piecewise-linear function.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField(Vec<f64>);

/// One value per cell, interpreted as a piecewise-constant function.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField(Vec<f64>);

macro_rules! field_impl {
    ($name:ident) => {
        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                $name(values)
            }

            pub fn constant(n: usize, value: f64) -> Self {
                $name(vec![value; n])
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn check_len(&self, expected: usize) -> Result<()> {
                if self.0.len() != expected {
                    return Err(Error::LengthMismatch {
                        expected,
                        actual: self.0.len(),
                    });
                }
                if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Config(format!(
                        "non-finite field value at index {i}"
                    )));
                }
                Ok(())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
    };
}

field_impl!(NodalField);
field_impl!(CellField);

impl NodalField {
    /// Exact integral of the P1 interpolant over the mesh at `positions`.
    pub fn integral(&self, mesh: &SimplicialMesh, positions: &[Point]) -> Result<f64> {
        let mut sum = 0.0;
        for (c, cell) in mesh.cells().enumerate() {
            let vol = mesh.geometry_at(positions, c)?.volume;
            sum += vol * cell.iter().map(|&v| self.0[v]).sum::<f64>() / cell.len() as f64;
        }
        Ok(sum)
    }

    /// Per-cell mean of the vertex values.
    pub fn cell_average(&self, mesh: &SimplicialMesh) -> CellField {
        CellField(
            mesh.cells()
                .map(|cell| cell.iter().map(|&v| self.0[v]).sum::<f64>() / cell.len() as f64)
                .collect(),
        )
    }
}

/// Initial node density: at every vertex the mean of the inverse volumes
/// of its incident cells, rescaled to unit integral.
pub fn estimate_gm(mesh: &SimplicialMesh) -> Result<NodalField> {
    let mut inv = vec![0.0; mesh.n_cells()];
    for (c, slot) in inv.iter_mut().enumerate() {
        *slot = 1.0 / mesh.cell_geometry(c)?.volume;
    }
    let mut sum = vec![0.0; mesh.n_vertices()];
    let mut count = vec![0usize; mesh.n_vertices()];
    for (c, cell) in mesh.cells().enumerate() {
        for &v in cell {
            sum[v] += inv[c];
            count[v] += 1;
        }
    }
    let raw: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    let g = NodalField(raw);
    let total = g.integral(mesh, mesh.vertices())?;
    Ok(NodalField(g.0.iter().map(|v| v / total).collect()))
}

/// Constant density with unit integral.
pub fn uniform_gm(mesh: &SimplicialMesh) -> Result<NodalField> {
    let total = mesh.total_volume_at(mesh.vertices())?;
    Ok(NodalField::constant(mesh.n_vertices(), 1.0 / total))
}

/// Cell density `rho = mean(g^M) / det` of the current configuration.
pub fn current_density(state: &PreShapeState) -> CellField {
    CellField(state.density().to_vec())
}

/// Declarative target density. `Analytic(q)` is normalized to the mass of
/// the initial density over the current shape; `Uniform` is the special
/// case `q = 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetSpec {
    Uniform,
    Analytic(Expr),
}

impl TargetSpec {
    pub fn analytic(source: &str) -> Result<TargetSpec> {
        Ok(TargetSpec::Analytic(Expr::parse(source)?))
    }

    /// `q` and its ambient gradient.
    pub fn q(&self, p: &Point) -> (f64, Point) {
        match self {
            TargetSpec::Uniform => (1.0, Point::zeros()),
            TargetSpec::Analytic(e) => e.eval_grad(p),
        }
    }

    /// Checks positivity of `q` at every cell centroid of `mesh` at `positions`.
    pub fn validate(&self, mesh: &SimplicialMesh, positions: &[Point]) -> Result<()> {
        for c in 0..mesh.n_cells() {
            let centroid = mesh.geometry_at(positions, c)?.centroid;
            let (q, _) = self.q(&centroid);
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::Target(format!(
                    "q = {q} at centroid of cell {c} ({:.4}, {:.4}, {:.4}); q must be positive",
                    centroid.x, centroid.y, centroid.z
                )));
            }
        }
        Ok(())
    }
}

/// Target evaluated on one configuration, with the pieces the derivative
/// needs.
#[derive(Clone, Debug)]
pub struct TargetEval {
    /// `f` per cell.
    pub values: CellField,
    /// `q` at the cell centroids.
    pub q: Vec<f64>,
    /// `grad q` at the cell centroids.
    pub grad_q: Vec<Point>,
    /// Midpoint-rule integral of `q` over the current shape.
    pub integral_q: f64,
    /// Integral of the initial density (the mass `f` is normalized to).
    pub mass: f64,
}

impl TargetEval {
    /// `mass / integral_q`.
    pub fn scale(&self) -> f64 {
        self.mass / self.integral_q
    }
}

pub fn evaluate_target(spec: &TargetSpec, state: &PreShapeState) -> Result<TargetEval> {
    let geom = state.current_geometry();
    let mut q = Vec::with_capacity(geom.len());
    let mut grad_q = Vec::with_capacity(geom.len());
    let mut integral_q = 0.0;
    for (c, g) in geom.iter().enumerate() {
        let (v, dv) = spec.q(&g.centroid);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Target(format!(
                "q = {v} at centroid of cell {c}; q must be positive"
            )));
        }
        integral_q += v * g.volume;
        q.push(v);
        grad_q.push(dv);
    }
    let mass = state.mass();
    let s = mass / integral_q;
    Ok(TargetEval {
        values: CellField(q.iter().map(|v| s * v).collect()),
        q,
        grad_q,
        integral_q,
        mass,
    })
}

/// Normalized target density on the current configuration of `state`.
pub fn build_target(spec: &TargetSpec, state: &PreShapeState) -> Result<CellField> {
    Ok(evaluate_target(spec, state)?.values)
}
