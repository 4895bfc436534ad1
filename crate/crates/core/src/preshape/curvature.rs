use crate::error::{Error, Result};
use crate::fields::NodalField;
use crate::mesh::Point;

use super::{Component, DerivativeCovector, PreShapeState};

/// Gradient of the total current volume with respect to each vertex
/// position. For triangles this is the cotangent formula.
pub fn area_derivative(state: &PreShapeState) -> Vec<Point> {
    let mesh = state.reference();
    let mut out = vec![Point::zeros(); mesh.n_vertices()];
    for (c, g) in state.current_geometry().iter().enumerate() {
        for (k, &a) in mesh.cell(c).iter().enumerate() {
            out[a] += g.gradients[k] * g.volume;
        }
    }
    out
}

/// Barycentric vertex areas (one third of each incident triangle).
pub fn vertex_areas(state: &PreShapeState) -> Vec<f64> {
    let mesh = state.reference();
    let share = 1.0 / (mesh.dim_cell() + 1) as f64;
    let mut out = vec![0.0; mesh.n_vertices()];
    for (c, g) in state.current_geometry().iter().enumerate() {
        for &a in mesh.cell(c) {
            out[a] += g.volume * share;
        }
    }
    out
}

/// Discrete mean curvature (mean of the principal curvatures) at the
/// vertices of a surface; positive on spheres with outward normals and zero
/// at boundary vertices.
pub fn mean_curvature(state: &PreShapeState) -> Result<NodalField> {
    let normals = state
        .normals()
        .ok_or_else(|| Error::Unsupported("mean curvature needs a surface mesh".into()))?;
    let mesh = state.reference();
    let dim = mesh.dim_cell() as f64;
    let grad = area_derivative(state);
    let areas = vertex_areas(state);
    Ok(NodalField::new(
        (0..mesh.n_vertices())
            .map(|i| {
                if mesh.is_boundary(i) {
                    0.0
                } else {
                    grad[i].dot(&normals[i]) / (dim * areas[i])
                }
            })
            .collect(),
    ))
}

/// Normal covector of `1/2 int det^-2` (node density 1, target 0):
/// `-(dim/2) rho_i^2 kappa_i A_i n_i`. Following it as an ascent direction
/// decreases the surface area.
pub fn minimal_surface_descent_direction(state: &PreShapeState) -> Result<DerivativeCovector> {
    let mesh = state.reference();
    if !mesh.is_surface() {
        return Err(Error::Unsupported(
            "minimal surfaces need a surface mesh".into(),
        ));
    }
    if mesh.boundary_vertices().is_empty() {
        return Err(Error::Unsupported(
            "closed surface has no fixed boundary to span".into(),
        ));
    }
    let kappa = mean_curvature(state)?;
    let normals = state.normals().expect("surface");
    let areas = vertex_areas(state);
    let mut rho2 = vec![0.0; mesh.n_vertices()];
    let mut weight = vec![0.0; mesh.n_vertices()];
    for (c, (cur, reference)) in state
        .current_geometry()
        .iter()
        .zip(state.reference_geometry())
        .enumerate()
    {
        let r = reference.volume / cur.volume;
        for &a in mesh.cell(c) {
            rho2[a] += cur.volume * r * r;
            weight[a] += cur.volume;
        }
    }
    let half_dim = mesh.dim_cell() as f64 / 2.0;
    let values = (0..mesh.n_vertices())
        .map(|i| normals[i] * (-half_dim * rho2[i] / weight[i] * kappa[i] * areas[i]))
        .collect();
    Ok(DerivativeCovector {
        values,
        component: Component::Normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    fn state(m: crate::mesh::SimplicialMesh) -> PreShapeState {
        let n = m.n_vertices();
        PreShapeState::new(m, NodalField::constant(n, 1.0)).unwrap()
    }

    #[test]
    fn sphere_curvature_is_inverse_radius() {
        let c = Point::new(0.5, 0.5, 0.5);
        let s = state(generate::uv_sphere(78, 41, c, 0.3).unwrap());
        let k = mean_curvature(&s).unwrap();
        // skip the pole fans, where the UV triangulation is worst
        let mut checked = 0;
        for (i, p) in s.positions().iter().enumerate() {
            if ((p.z - 0.5) / 0.3).abs() < 0.9 {
                assert!((k[i] * 0.3 - 1.0).abs() < 0.05, "vertex {i}: {}", k[i]);
                checked += 1;
            }
        }
        assert!(checked > 2000);
    }

    #[test]
    fn flat_patch_has_zero_curvature() {
        let s = state(generate::flat_patch(8, 1.0).unwrap());
        let k = mean_curvature(&s).unwrap();
        assert!(k.values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn cylinder_curvature_is_half_inverse_radius() {
        let r = 0.5;
        let s = state(generate::cylinder(48, 20, r, 2.0).unwrap());
        let k = mean_curvature(&s).unwrap();
        for (i, _) in s.positions().iter().enumerate() {
            if !s.reference().is_boundary(i) {
                assert!((k[i] * 2.0 * r - 1.0).abs() < 0.02, "{}", k[i]);
            }
        }
    }

    #[test]
    fn flat_disk_is_already_minimal() {
        let s = state(generate::disk(6, 1.0).unwrap());
        let m = minimal_surface_descent_direction(&s).unwrap();
        assert!(m.max_norm() < 1e-12);
    }

    #[test]
    fn cap_ascent_points_inward() {
        let s = state(generate::hemisphere_cap(6, 1.0).unwrap());
        let m = minimal_surface_descent_direction(&s).unwrap();
        let inward: Vec<Point> = s
            .normals()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if s.reference().is_boundary(i) {
                    Point::zeros()
                } else {
                    -n
                }
            })
            .collect();
        assert!(m.pair(&inward) > 0.0);
    }

    #[test]
    fn closed_surface_is_rejected() {
        let s = state(generate::icosphere(1, Point::zeros(), 1.0).unwrap());
        assert!(minimal_surface_descent_direction(&s).is_err());
    }
}
