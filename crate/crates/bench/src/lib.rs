//! Fixtures shared by the benchmarks.

use paramtrack_core::fields::{estimate_gm, uniform_gm};
use paramtrack_core::mesh::generate::{self, SHAPE_TAG};
use paramtrack_core::{Point, PreShapeState, SimplicialMesh, TargetSpec};

/// Distorted unstructured square with the cosine ring target.
pub fn square() -> (PreShapeState, TargetSpec) {
    let m = generate::unstructured_square(43, 0.0, 7).expect("square mesh");
    let p: Vec<Point> = m
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if m.is_boundary(i) {
                *p
            } else {
                Point::new(p.x + 0.025 * (25.5 * p.x).sin(), p.y, 0.0)
            }
        })
        .collect();
    let m = m.moved(&p).expect("distortion");
    let g = estimate_gm(&m).expect("density");
    let spec =
        TargetSpec::analytic("2 + cos(5*2*pi*((x - 0.35)^2 + 2*(y - 0.4)^2))").expect("target");
    (PreShapeState::new(m, g).expect("state"), spec)
}

/// Sphere surface and the tetrahedral hold-all it sits in.
pub fn sphere() -> (PreShapeState, TargetSpec, SimplicialMesh, Vec<usize>) {
    let holdall = generate::sphere_in_cube(39, 21, 0.3, 1, 2).expect("hold-all");
    let (surface, map) = holdall.extract_surface(SHAPE_TAG).expect("surface");
    let g = uniform_gm(&surface).expect("density");
    let spec = TargetSpec::analytic("1 + 0.5*sin(10*2*pi*x)").expect("target");
    (
        PreShapeState::new(surface, g).expect("state"),
        spec,
        holdall,
        map,
    )
}
