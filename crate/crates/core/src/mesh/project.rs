//! Closest-point projection onto a fixed triangulated surface.

use rayon::prelude::*;

use super::{Point, SimplicialMesh};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SurfaceProjector {
    triangles: Vec<[Point; 3]>,
    /// Bounding sphere per simplex, used to skip far candidates.
    centers: Vec<Point>,
    radii: Vec<f64>,
}

impl SurfaceProjector {
    /// Snapshot of a surface mesh at its stored vertex positions.
    pub fn new(mesh: &SimplicialMesh) -> Result<Self> {
        if !mesh.is_surface() {
            return Err(Error::Unsupported("projection needs a surface mesh".into()));
        }
        let v = mesh.vertices();
        let triangles: Vec<[Point; 3]> =
            mesh.cells().map(|c| [v[c[0]], v[c[1]], v[c[2]]]).collect();
        let centers: Vec<Point> = triangles
            .iter()
            .map(|t| (t[0] + t[1] + t[2]) / 3.0)
            .collect();
        let radii = triangles
            .iter()
            .zip(&centers)
            .map(|(t, c)| t.iter().map(|p| (p - c).norm()).fold(0.0, f64::max))
            .collect();
        Ok(SurfaceProjector {
            triangles,
            centers,
            radii,
        })
    }

    /// Nearest point of the stored surface to `p`.
    pub fn project(&self, p: &Point) -> Point {
        let mut best = (f64::INFINITY, *p);
        for (k, t) in self.triangles.iter().enumerate() {
            let lower = (p - self.centers[k]).norm() - self.radii[k];
            if lower * lower.abs() >= best.0 {
                continue;
            }
            let q = closest_on_triangle(p, &t[0], &t[1], &t[2]);
            let d = (p - q).norm_squared();
            if d < best.0 {
                best = (d, q);
            }
        }
        best.1
    }

    /// Projects every point whose `fixed` flag is unset.
    pub fn project_all(&self, points: &mut [Point], fixed: &[bool]) {
        points.par_iter_mut().zip(fixed).for_each(|(p, &f)| {
            if !f {
                *p = self.project(p);
            }
        });
    }
}

/// Region-based closest point on a triangle.
fn closest_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use proptest::prelude::*;

    #[test]
    fn vertices_project_to_themselves() {
        let m = generate::uv_sphere(12, 7, Point::new(0.5, 0.5, 0.5), 0.3).unwrap();
        let pr = SurfaceProjector::new(&m).unwrap();
        for v in m.vertices() {
            assert!((pr.project(v) - v).norm() < 1e-15);
        }
    }

    #[test]
    fn planar_mesh_is_rejected() {
        let m = generate::unit_square(3, 0.0, 0).unwrap();
        assert!(SurfaceProjector::new(&m).is_err());
    }

    proptest! {
        #[test]
        fn triangle_projection_beats_sampled_points(
            px in -2.0..2.0f64, py in -2.0..2.0f64, pz in -2.0..2.0f64,
            u in 0.0..1.0f64, w in 0.0..1.0f64,
        ) {
            let (a, b, c) = (Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.2, 0.1), Point::new(0.3, 0.9, -0.2));
            let p = Point::new(px, py, pz);
            let q = closest_on_triangle(&p, &a, &b, &c);
            let (u, w) = if u + w > 1.0 { (1.0 - u, 1.0 - w) } else { (u, w) };
            let sample = a + (b - a) * u + (c - a) * w;
            prop_assert!((p - q).norm() <= (p - sample).norm() + 1e-12);
        }
    }
}
