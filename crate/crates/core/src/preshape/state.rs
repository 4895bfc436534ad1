use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::NodalField;
use crate::mesh::{CellGeometry, Point, SimplicialMesh};

/// A pre-shape: the reference mesh with its node density, plus a current
/// placement of the same vertices. Geometry of both configurations is
/// cached per cell.
#[derive(Clone, Debug)]
pub struct PreShapeState {
    reference: Arc<SimplicialMesh>,
    ref_geom: Arc<Vec<CellGeometry>>,
    g_m: Arc<NodalField>,
    g_cell: Arc<Vec<f64>>,
    mass: f64,
    positions: Vec<Point>,
    cur_geom: Vec<CellGeometry>,
    density: Vec<f64>,
    normals: Option<Vec<Point>>,
}

impl PreShapeState {
    /// State at the identity placement.
    pub fn new(reference: SimplicialMesh, g_m: NodalField) -> Result<Self> {
        g_m.check_len(reference.n_vertices())?;
        if let Some(v) = g_m.values().iter().position(|&g| g <= 0.0) {
            return Err(Error::Config(format!(
                "node density must be positive (vertex {v})"
            )));
        }
        let ref_geom = cell_geometries(&reference, reference.vertices())?;
        let g_cell = g_m.cell_average(&reference).into_inner();
        let mass = g_cell
            .iter()
            .zip(&ref_geom)
            .map(|(g, geo)| g * geo.volume)
            .sum();
        let positions = reference.vertices().to_vec();
        let normals = if reference.is_surface() {
            Some(reference.vertex_normals()?)
        } else {
            None
        };
        let density = g_cell.clone();
        Ok(PreShapeState {
            cur_geom: ref_geom.clone(),
            ref_geom: Arc::new(ref_geom),
            reference: Arc::new(reference),
            g_m: Arc::new(g_m),
            g_cell: Arc::new(g_cell),
            mass,
            positions,
            density,
            normals,
        })
    }

    /// Same reference, new placement. Boundary vertices must stay put and
    /// no cell may degenerate or flip.
    pub fn with_positions(&self, positions: Vec<Point>) -> Result<Self> {
        let mesh = &*self.reference;
        if positions.len() != mesh.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: mesh.n_vertices(),
                actual: positions.len(),
            });
        }
        for &v in mesh.boundary_vertices() {
            if positions[v] != mesh.vertices()[v] {
                return Err(Error::Config(format!("boundary vertex {v} was moved")));
            }
        }
        for c in 0..mesh.n_cells() {
            let s = mesh.signed_measure(&positions, mesh.vertices(), c);
            if !(s > 0.0) {
                return Err(Error::InvertedCell { cell: c, volume: s });
            }
        }
        let cur_geom = cell_geometries(mesh, &positions)?;
        let normals = if mesh.is_surface() {
            Some(mesh.vertex_normals_at(&positions)?)
        } else {
            None
        };
        let mut out = PreShapeState {
            reference: self.reference.clone(),
            ref_geom: self.ref_geom.clone(),
            g_m: self.g_m.clone(),
            g_cell: self.g_cell.clone(),
            mass: self.mass,
            positions,
            cur_geom,
            density: Vec::new(),
            normals,
        };
        out.update_density();
        Ok(out)
    }

    /// Placement `x + s u`.
    pub fn displaced(&self, u: &[Point], s: f64) -> Result<Self> {
        if u.len() != self.positions.len() {
            return Err(Error::LengthMismatch {
                expected: self.positions.len(),
                actual: u.len(),
            });
        }
        let pos = self
            .positions
            .iter()
            .zip(u)
            .map(|(x, d)| x + d * s)
            .collect();
        self.with_positions(pos)
    }

    /// Same state with every cell's reference and current frame replaced by
    /// an independent random rotation of itself. All frame-independent
    /// quantities must be unchanged up to round-off.
    pub fn with_rotated_frames(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = &*self.reference;
        let dim = mesh.dim_cell();
        let mut rotate = |geo: &CellGeometry, points: &[Point]| {
            let q = random_rotation(&mut rng, dim);
            CellGeometry::with_frame(points, geo.frame.rotated(&q), mesh.is_surface())
        };
        let mut ref_geom = Vec::with_capacity(mesh.n_cells());
        let mut cur_geom = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let rp: Vec<Point> = mesh.cell(c).iter().map(|&v| mesh.vertices()[v]).collect();
            let cp: Vec<Point> = mesh.cell(c).iter().map(|&v| self.positions[v]).collect();
            ref_geom.push(rotate(&self.ref_geom[c], &rp));
            cur_geom.push(rotate(&self.cur_geom[c], &cp));
        }
        let mut out = self.clone();
        out.ref_geom = Arc::new(ref_geom);
        out.cur_geom = cur_geom;
        out.update_density();
        out
    }

    fn update_density(&mut self) {
        self.density = self
            .cur_geom
            .iter()
            .zip(self.ref_geom.iter())
            .zip(self.g_cell.iter())
            .map(|((cur, r), g)| g / cur.jacobian_det(r))
            .collect();
    }

    pub fn reference(&self) -> &SimplicialMesh {
        &self.reference
    }

    pub fn g_m(&self) -> &NodalField {
        &self.g_m
    }

    /// Cell means of the node density on the reference mesh.
    pub fn g_cell(&self) -> &[f64] {
        &self.g_cell
    }

    /// Total mass of the node density.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn reference_geometry(&self) -> &[CellGeometry] {
        &self.ref_geom
    }

    pub fn current_geometry(&self) -> &[CellGeometry] {
        &self.cur_geom
    }

    /// Current cell density.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Unit vertex normals of the current placement (surfaces only).
    pub fn normals(&self) -> Option<&[Point]> {
        self.normals.as_deref()
    }

    /// Mesh with vertices at the current placement.
    pub fn current_mesh(&self) -> Result<SimplicialMesh> {
        self.reference.moved(&self.positions)
    }

    pub fn current_volume(&self) -> f64 {
        self.cur_geom.iter().map(|g| g.volume).sum()
    }
}

fn cell_geometries(mesh: &SimplicialMesh, positions: &[Point]) -> Result<Vec<CellGeometry>> {
    (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| mesh.geometry_at(positions, c))
        .collect()
}

fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Matrix3<f64> {
    if dim == 2 {
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = t.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    } else {
        let axis = Point::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        Rotation3::from_scaled_axis(axis.normalize() * angle).into_inner()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::estimate_gm;
    use crate::mesh::generate;

    #[test]
    fn identity_density_equals_node_density_means() {
        let m = generate::unit_square(8, 0.2, 3).unwrap();
        let g = estimate_gm(&m).unwrap();
        let s = PreShapeState::new(m, g).unwrap();
        for (r, g) in s.density().iter().zip(s.g_cell()) {
            assert!((r - g).abs() < 1e-12 * g);
        }
        assert!((s.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_motion_and_inversion_are_rejected() {
        let m = generate::unit_square(4, 0.0, 0).unwrap();
        let g = estimate_gm(&m).unwrap();
        let s = PreShapeState::new(m, g).unwrap();
        let b = s.reference().boundary_vertices()[0];
        let mut pos = s.positions().to_vec();
        pos[b].x += 1e-3;
        assert!(matches!(s.with_positions(pos), Err(Error::Config(_))));
        let interior = (0..s.positions().len())
            .find(|&v| !s.reference().is_boundary(v))
            .unwrap();
        let mut pos = s.positions().to_vec();
        pos[interior].x += 0.6;
        assert!(matches!(
            s.with_positions(pos),
            Err(Error::InvertedCell { .. }) | Err(Error::DegenerateCell { .. })
        ));
    }

    #[test]
    fn mass_is_conserved_under_motion() {
        let m = generate::unit_square(10, 0.2, 1).unwrap();
        let g = estimate_gm(&m).unwrap();
        let s = PreShapeState::new(m, g).unwrap();
        let u: Vec<Point> = s
            .positions()
            .iter()
            .enumerate()
            .map(|(v, p)| {
                if s.reference().is_boundary(v) {
                    Point::zeros()
                } else {
                    Point::new((3.0 * p.y).sin(), (2.0 * p.x).cos(), 0.0) * 0.02
                }
            })
            .collect();
        let t = s.displaced(&u, 1.0).unwrap();
        let mass: f64 = t
            .density()
            .iter()
            .zip(t.current_geometry())
            .map(|(r, g)| r * g.volume)
            .sum();
        assert!((mass - t.mass()).abs() < 1e-13);
    }

    #[test]
    fn rotated_frames_leave_density_unchanged() {
        let m = generate::uv_sphere(12, 7, Point::zeros(), 1.0).unwrap();
        let n = m.n_vertices();
        let s = PreShapeState::new(m, NodalField::constant(n, 1.0)).unwrap();
        let u: Vec<Point> = s
            .positions()
            .iter()
            .map(|p| Point::new(p.y, 0.3 * p.z, p.x * p.x) * 0.05)
            .collect();
        let t = s.displaced(&u, 1.0).unwrap();
        let r = t.with_rotated_frames(5);
        for (a, b) in t.density().iter().zip(r.density()) {
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
    }
}
