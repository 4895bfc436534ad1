//! Mesh generators for the bundled experiments and for tests.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point, SimplicialMesh, TaggedFacet};
use crate::error::Result;

/// Physical tag of the embedded sphere facets in [`sphere_in_cube`].
pub const SHAPE_TAG: i32 = 1;
/// Physical tag of the outer boundary facets in [`sphere_in_cube`].
pub const OUTER_TAG: i32 = 2;

/// Triangulation of `[0,1]^2` on an `n x n` grid with alternating
/// diagonals. Interior vertices are displaced uniformly by up to
/// `jitter * h` in each coordinate.
pub fn unit_square(n: usize, jitter: f64, seed: u64) -> Result<SimplicialMesh> {
    let h = 1.0 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let mut p = Point::new(i as f64 * h, j as f64 * h, 0.0);
            if jitter > 0.0 && i > 0 && i < n && j > 0 && j < n {
                p.x += rng.random_range(-jitter..=jitter) * h;
                p.y += rng.random_range(-jitter..=jitter) * h;
            }
            vertices.push(p);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(6 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                cells.extend_from_slice(&[a, b, c, a, c, d]);
            } else {
                cells.extend_from_slice(&[a, b, d, b, c, d]);
            }
        }
    }
    SimplicialMesh::new(2, 2, vertices, cells)
}

/// Unstructured triangulation of `[0,1]^2`: `n_side` equal boundary
/// segments per side, interior nodes on a jittered hexagonal lattice of
/// matching spacing, connected by a Delaunay triangulation.
pub fn unstructured_square(n_side: usize, jitter: f64, seed: u64) -> Result<SimplicialMesh> {
    let h = 1.0 / n_side as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::new();
    for k in 0..n_side {
        let t = k as f64 * h;
        vertices.push(Point::new(t, 0.0, 0.0));
        vertices.push(Point::new(1.0, t, 0.0));
        vertices.push(Point::new(1.0 - t, 1.0, 0.0));
        vertices.push(Point::new(0.0, 1.0 - t, 0.0));
    }
    let dy = h * 3f64.sqrt() / 2.0;
    let rows = ((1.0 - h) / dy).floor() as usize;
    let y0 = (1.0 - (rows - 1) as f64 * dy) / 2.0;
    for r in 0..rows {
        let y = y0 + r as f64 * dy;
        let shift = if r % 2 == 0 { 0.5 } else { 1.0 };
        let mut x = shift * h;
        while x < 1.0 - 0.45 * h {
            let p = Point::new(
                x + rng.random_range(-jitter..=jitter) * h,
                y + rng.random_range(-jitter..=jitter) * h,
                0.0,
            );
            vertices.push(p);
            x += h;
        }
    }
    let pts: Vec<delaunator::Point> = vertices
        .iter()
        .map(|p| delaunator::Point { x: p.x, y: p.y })
        .collect();
    let mut tris = delaunator::triangulate(&pts).triangles;
    flip_fixed_corners(&vertices, &mut tris);
    SimplicialMesh::new(2, 2, vertices, tris)
}

/// Delaunay meshes of a square put a triangle on all three vertices of
/// each corner. Such a cell cannot move, so flip its interior edge.
fn flip_fixed_corners(vertices: &[Point], tris: &mut [usize]) {
    let on_boundary = |v: usize| {
        let p = vertices[v];
        p.x == 0.0 || p.y == 0.0 || p.x == 1.0 || p.y == 1.0
    };
    let same_side = |a: usize, b: usize| {
        let (p, q) = (vertices[a], vertices[b]);
        (p.x == q.x && (p.x == 0.0 || p.x == 1.0)) || (p.y == q.y && (p.y == 0.0 || p.y == 1.0))
    };
    let n = tris.len() / 3;
    for c in 0..n {
        let t = [tris[3 * c], tris[3 * c + 1], tris[3 * c + 2]];
        if !t.iter().all(|&v| on_boundary(v)) {
            continue;
        }
        // the edge not lying on one side of the square is interior
        let Some(k) = (0..3).find(|&k| !same_side(t[(k + 1) % 3], t[(k + 2) % 3])) else {
            continue;
        };
        let (apex, a, b) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
        let Some(d) = (0..n).find(|&d| {
            d != c && {
                let u = &tris[3 * d..3 * d + 3];
                u.contains(&a) && u.contains(&b)
            }
        }) else {
            continue;
        };
        let u = [tris[3 * d], tris[3 * d + 1], tris[3 * d + 2]];
        let opp = *u.iter().find(|&&v| v != a && v != b).unwrap();
        tris[3 * c..3 * c + 3].copy_from_slice(&[apex, a, opp]);
        tris[3 * d..3 * d + 3].copy_from_slice(&[apex, opp, b]);
    }
}

/// Flat `[0,size]^2` patch triangulated as a surface in 3D.
pub fn flat_patch(n: usize, size: f64) -> Result<SimplicialMesh> {
    let sq = unit_square(n, 0.0, 0)?;
    let vertices = sq.vertices().iter().map(|p| p * size).collect();
    SimplicialMesh::new(3, 2, vertices, sq.connectivity().to_vec())
}

/// Latitude-longitude sphere with `n_lon` meridians and `n_bands`
/// latitude bands: `n_lon * (n_bands - 1) + 2` vertices and
/// `2 * n_lon * (n_bands - 1)` triangles.
pub fn uv_sphere(
    n_lon: usize,
    n_bands: usize,
    center: Point,
    radius: f64,
) -> Result<SimplicialMesh> {
    let (vertices, cells) = uv_sphere_raw(n_lon, n_bands, center, radius);
    SimplicialMesh::new(3, 2, vertices, cells)
}

fn uv_sphere_raw(
    n_lon: usize,
    n_bands: usize,
    center: Point,
    radius: f64,
) -> (Vec<Point>, Vec<usize>) {
    let mut vertices = vec![center + Point::new(0.0, 0.0, radius)];
    for k in 1..n_bands {
        let theta = PI * k as f64 / n_bands as f64;
        for l in 0..n_lon {
            let phi = 2.0 * PI * l as f64 / n_lon as f64;
            vertices.push(
                center
                    + radius
                        * Point::new(
                            theta.sin() * phi.cos(),
                            theta.sin() * phi.sin(),
                            theta.cos(),
                        ),
            );
        }
    }
    let south = vertices.len();
    vertices.push(center - Point::new(0.0, 0.0, radius));
    let ring = |k: usize, l: usize| 1 + (k - 1) * n_lon + l % n_lon;
    let mut cells = Vec::new();
    for l in 0..n_lon {
        cells.extend_from_slice(&[0, ring(1, l), ring(1, l + 1)]);
    }
    for k in 1..n_bands - 1 {
        for l in 0..n_lon {
            let (a, b, c, d) = (
                ring(k, l),
                ring(k + 1, l),
                ring(k + 1, l + 1),
                ring(k, l + 1),
            );
            cells.extend_from_slice(&[a, b, c, a, c, d]);
        }
    }
    for l in 0..n_lon {
        cells.extend_from_slice(&[south, ring(n_bands - 1, l + 1), ring(n_bands - 1, l)]);
    }
    (vertices, cells)
}

/// Subdivided icosahedron projected onto the sphere.
pub fn icosphere(subdivisions: usize, center: Point, radius: f64) -> Result<SimplicialMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point> = [
        (-1., t, 0.),
        (1., t, 0.),
        (-1., -t, 0.),
        (1., -t, 0.),
        (0., -1., t),
        (0., 1., t),
        (0., -1., -t),
        (0., 1., -t),
        (t, 0., -1.),
        (t, 0., 1.),
        (-t, 0., -1.),
        (-t, 0., 1.),
    ]
    .iter()
    .map(|&(x, y, z)| Point::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|p| center + p * radius).collect();
    SimplicialMesh::new(3, 2, vertices, faces.concat())
}

/// Open cylinder of radius `radius` along the z axis.
pub fn cylinder(
    n_around: usize,
    n_along: usize,
    radius: f64,
    length: f64,
) -> Result<SimplicialMesh> {
    let mut vertices = Vec::new();
    for j in 0..=n_along {
        // offset every other ring by half a step so triangles are isotropic
        let shift = if j % 2 == 0 { 0.0 } else { 0.5 };
        for i in 0..n_around {
            let phi = 2.0 * PI * (i as f64 + shift) / n_around as f64;
            vertices.push(Point::new(
                radius * phi.cos(),
                radius * phi.sin(),
                length * j as f64 / n_along as f64,
            ));
        }
    }
    let id = |i: usize, j: usize| j * n_around + i % n_around;
    let mut cells = Vec::new();
    for j in 0..n_along {
        for i in 0..n_around {
            if j % 2 == 0 {
                cells.extend_from_slice(&[id(i, j), id(i + 1, j), id(i, j + 1)]);
                cells.extend_from_slice(&[id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else {
                cells.extend_from_slice(&[id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                cells.extend_from_slice(&[id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            }
        }
    }
    SimplicialMesh::new(3, 2, vertices, cells)
}

/// Concentric-ring triangulation of the unit disk (ring `k` carries `6k`
/// vertices), mapped through `embed(rho, phi)`. Produces `6 rings^2`
/// triangles; the last ring is the boundary.
fn ring_disk(rings: usize, embed: impl Fn(f64, f64) -> Point) -> Result<SimplicialMesh> {
    let mut vertices = vec![embed(0.0, 0.0)];
    let mut ring_ids: Vec<Vec<usize>> = vec![vec![0]];
    for k in 1..=rings {
        let m = 6 * k;
        let ids = (0..m)
            .map(|l| {
                vertices.push(embed(
                    k as f64 / rings as f64,
                    2.0 * PI * l as f64 / m as f64,
                ));
                vertices.len() - 1
            })
            .collect();
        ring_ids.push(ids);
    }
    let mut cells = Vec::new();
    for k in 1..=rings {
        let (inner, outer) = (&ring_ids[k - 1], &ring_ids[k]);
        if inner.len() == 1 {
            for l in 0..outer.len() {
                cells.extend_from_slice(&[inner[0], outer[l], outer[(l + 1) % outer.len()]]);
            }
            continue;
        }
        // zip the two rings by angle
        let (ni, no) = (inner.len(), outer.len());
        let (mut a, mut b) = (0usize, 0usize);
        while a < ni || b < no {
            let next_inner = (a + 1) as f64 / ni as f64;
            let next_outer = (b + 1) as f64 / no as f64;
            if b < no && (a >= ni || next_outer <= next_inner) {
                cells.extend_from_slice(&[inner[a % ni], outer[b % no], outer[(b + 1) % no]]);
                b += 1;
            } else {
                cells.extend_from_slice(&[inner[a % ni], outer[b % no], inner[(a + 1) % ni]]);
                a += 1;
            }
        }
    }
    SimplicialMesh::new(3, 2, vertices, cells)
}

/// Flat disk of the given radius in the plane z = 0.
pub fn disk(rings: usize, radius: f64) -> Result<SimplicialMesh> {
    ring_disk(rings, |rho, phi| {
        Point::new(radius * rho * phi.cos(), radius * rho * phi.sin(), 0.0)
    })
}

/// Upper hemisphere of the given radius, boundary circle in the plane z = 0.
pub fn hemisphere_cap(rings: usize, radius: f64) -> Result<SimplicialMesh> {
    ring_disk(rings, |rho, phi| {
        let theta = rho * PI / 2.0;
        radius
            * Point::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            )
    })
}

/// Tetrahedral mesh of (approximately) the unit cube containing a
/// conforming triangulated sphere. The sphere is a [`uv_sphere`] surface;
/// the volume is built from radial layers of prisms split into three
/// tetrahedra each, plus a cone of tetrahedra onto the center.
///
/// Facets on the sphere carry [`SHAPE_TAG`], facets on the outer boundary
/// [`OUTER_TAG`]. Outer boundary vertices lie on the cube faces.
pub fn sphere_in_cube(
    n_lon: usize,
    n_bands: usize,
    radius: f64,
    inner_layers: usize,
    outer_layers: usize,
) -> Result<SimplicialMesh> {
    let center = Point::new(0.5, 0.5, 0.5);
    let (surf, tris) = uv_sphere_raw(n_lon, n_bands, Point::zeros(), 1.0);
    let ns = surf.len();
    let shells = inner_layers + outer_layers;
    let position = |shell: usize, d: &Point| -> Point {
        if shell <= inner_layers {
            center + d * (radius * shell as f64 / inner_layers as f64)
        } else {
            let t = (shell - inner_layers) as f64 / outer_layers as f64;
            let to_box = 0.5 / d.x.abs().max(d.y.abs()).max(d.z.abs());
            center + d * (radius + t * (to_box - radius))
        }
    };
    let mut vertices = vec![center];
    for shell in 1..=shells {
        for d in &surf {
            vertices.push(position(shell, d));
        }
    }
    let id = |shell: usize, i: usize| 1 + (shell - 1) * ns + i;
    let mut cells = Vec::new();
    for t in tris.chunks_exact(3) {
        cells.extend_from_slice(&[0, id(1, t[0]), id(1, t[1]), id(1, t[2])]);
        let mut s = [t[0], t[1], t[2]];
        s.sort_unstable();
        let [v0, v1, v2] = s;
        for shell in 1..shells {
            let (b, u) = (shell, shell + 1);
            // Diagonals of the side quads run from the smaller surface index
            // on the lower shell to the larger one on the upper shell, so
            // neighbouring prisms agree on every shared face.
            cells.extend_from_slice(&[id(b, v0), id(b, v1), id(b, v2), id(u, v2)]);
            cells.extend_from_slice(&[id(b, v0), id(b, v1), id(u, v1), id(u, v2)]);
            cells.extend_from_slice(&[id(b, v0), id(u, v0), id(u, v1), id(u, v2)]);
        }
    }
    let facets = tris
        .chunks_exact(3)
        .flat_map(|t| {
            [
                TaggedFacet {
                    vertices: t.iter().map(|&i| id(inner_layers, i)).collect(),
                    tag: SHAPE_TAG,
                },
                TaggedFacet {
                    vertices: t.iter().map(|&i| id(shells, i)).collect(),
                    tag: OUTER_TAG,
                },
            ]
        })
        .collect();
    SimplicialMesh::new(3, 3, vertices, cells)?.with_facets(facets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uv_sphere_counts_match_structured_formula() {
        let m = uv_sphere(78, 41, Point::zeros(), 0.3).unwrap();
        assert_eq!(m.n_cells(), 6240);
        assert_eq!(m.n_vertices(), 3122);
        assert!(m.boundary_vertices().is_empty());
    }

    #[test]
    fn unit_square_counts() {
        let m = unit_square(4, 0.1, 1).unwrap();
        assert_eq!(m.n_cells(), 32);
        assert_eq!(m.n_vertices(), 25);
        assert_eq!(m.boundary_vertices().len(), 16);
        assert!((m.total_volume_at(m.vertices()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ring_disk_counts_and_boundary() {
        let m = hemisphere_cap(13, 1.0).unwrap();
        assert_eq!(m.n_cells(), 6 * 13 * 13);
        assert_eq!(m.boundary_vertices().len(), 78);
        for &v in m.boundary_vertices() {
            assert!(m.vertices()[v].z.abs() < 1e-15);
        }
    }

    #[test]
    fn sphere_in_cube_is_conforming() {
        let m = sphere_in_cube(12, 7, 0.3, 2, 2).unwrap();
        // closed volume: every boundary vertex is on the outer shell
        let outer: std::collections::BTreeSet<usize> = m
            .facets()
            .iter()
            .filter(|f| f.tag == OUTER_TAG)
            .flat_map(|f| f.vertices.clone())
            .collect();
        let boundary: std::collections::BTreeSet<usize> =
            m.boundary_vertices().iter().copied().collect();
        assert_eq!(outer, boundary);
        let vol = m.total_volume_at(m.vertices()).unwrap();
        assert!(vol > 0.8 && vol <= 1.0 + 1e-12, "volume {vol}");
    }

    #[test]
    fn extracted_sphere_matches_uv_sphere() {
        let m = sphere_in_cube(12, 7, 0.3, 2, 2).unwrap();
        let (s, map) = m.extract_surface(SHAPE_TAG).unwrap();
        let reference = uv_sphere(12, 7, Point::new(0.5, 0.5, 0.5), 0.3).unwrap();
        assert_eq!(s.n_cells(), reference.n_cells());
        assert_eq!(s.n_vertices(), reference.n_vertices());
        assert!(s.boundary_vertices().is_empty());
        for (i, &v) in map.iter().enumerate() {
            assert_eq!(s.vertices()[i], m.vertices()[v]);
        }
        // outward orientation
        let n = s.vertex_normals().unwrap();
        for (p, n) in s.vertices().iter().zip(&n) {
            assert!((p - Point::new(0.5, 0.5, 0.5)).dot(n) > 0.0);
        }
    }

    #[test]
    fn unstructured_square_has_no_frozen_cells() {
        let m = unstructured_square(43, 0.0, 7).unwrap();
        assert_eq!(m.n_vertices(), 2212);
        assert_eq!(m.boundary_vertices().len(), 172);
        assert!((m.total_volume_at(m.vertices()).unwrap() - 1.0).abs() < 1e-12);
        for cell in m.cells() {
            assert!(cell.iter().any(|&v| !m.is_boundary(v)));
        }
    }
}
