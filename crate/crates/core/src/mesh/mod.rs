//! Simplicial meshes: triangles in the plane, triangulated surfaces in space
//! and tetrahedral volumes. Geometry queries work on an arbitrary position
//! array so that a fixed reference mesh can be evaluated in a moved
//! configuration without copying its topology.

pub mod generate;
pub mod gmsh;
pub mod project;
pub mod vtk;

use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Relative degeneracy threshold, scaled by `scale^dim_cell`.
pub const DEGENERACY_EPS: f64 = 1e-14;

/// A facet carried over from the input file with its physical tag.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedFacet {
    pub vertices: Vec<usize>,
    pub tag: i32,
}

#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    dim_cell: usize,
    dim_ambient: usize,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    on_boundary: Vec<bool>,
    boundary: Vec<usize>,
    facets: Vec<TaggedFacet>,
}

impl SimplicialMesh {
    /// Builds a mesh from flat cell connectivity (`dim_cell + 1` indices per
    /// cell). Orientation is repaired, the boundary computed and degenerate
    /// cells rejected.
    pub fn new(
        dim_ambient: usize,
        dim_cell: usize,
        mut vertices: Vec<Point>,
        cells: Vec<usize>,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim_ambient) || !(2..=3).contains(&dim_cell) || dim_cell > dim_ambient
        {
            return Err(Error::UnsupportedMesh(format!(
                "cell dimension {dim_cell} in ambient dimension {dim_ambient}"
            )));
        }
        let nv = dim_cell + 1;
        if !cells.len().is_multiple_of(nv) || cells.is_empty() {
            return Err(Error::UnsupportedMesh(format!(
                "connectivity length {} is not a positive multiple of {nv}",
                cells.len()
            )));
        }
        if let Some(&bad) = cells.iter().find(|&&i| i >= vertices.len()) {
            return Err(Error::UnsupportedMesh(format!(
                "cell references vertex {bad} but only {} vertices exist",
                vertices.len()
            )));
        }
        if dim_ambient == 2 {
            for v in &mut vertices {
                v.z = 0.0;
            }
        }
        let mut mesh = SimplicialMesh {
            dim_cell,
            dim_ambient,
            vertices,
            cells,
            on_boundary: Vec::new(),
            boundary: Vec::new(),
            facets: Vec::new(),
        };
        mesh.check_degenerate()?;
        mesh.repair_orientation()?;
        mesh.compute_boundary();
        Ok(mesh)
    }

    pub fn with_facets(mut self, facets: Vec<TaggedFacet>) -> Result<Self> {
        for f in &facets {
            if f.vertices.len() != self.dim_cell
                || f.vertices.iter().any(|&v| v >= self.n_vertices())
            {
                return Err(Error::UnsupportedMesh(format!(
                    "facet {:?} does not fit the mesh",
                    f.vertices
                )));
            }
        }
        self.facets = facets;
        Ok(self)
    }

    /// Surface mesh made of the facets carrying `tag`, with `map[i]` the
    /// index in `self` of surface vertex `i`. Surface vertices are ordered
    /// by their index in `self`.
    pub fn extract_surface(&self, tag: i32) -> Result<(SimplicialMesh, Vec<usize>)> {
        if self.dim_cell != 3 {
            return Err(Error::UnsupportedMesh(
                "surface extraction needs a tetrahedral mesh".into(),
            ));
        }
        let picked: Vec<&TaggedFacet> = self.facets.iter().filter(|f| f.tag == tag).collect();
        if picked.is_empty() {
            return Err(Error::UnsupportedMesh(format!("no facets tagged {tag}")));
        }
        let mut map: Vec<usize> = picked
            .iter()
            .flat_map(|f| f.vertices.iter().copied())
            .collect();
        map.sort_unstable();
        map.dedup();
        let mut local = HashMap::new();
        for (i, &v) in map.iter().enumerate() {
            local.insert(v, i);
        }
        let vertices = map.iter().map(|&v| self.vertices[v]).collect();
        let cells = picked
            .iter()
            .flat_map(|f| f.vertices.iter().map(|v| local[v]))
            .collect();
        Ok((SimplicialMesh::new(3, 2, vertices, cells)?, map))
    }

    pub fn dim_cell(&self) -> usize {
        self.dim_cell
    }

    pub fn dim_ambient(&self) -> usize {
        self.dim_ambient
    }

    /// 0 for volume meshes, 1 for hypersurfaces.
    pub fn codim(&self) -> usize {
        self.dim_ambient - self.dim_cell
    }

    pub fn is_surface(&self) -> bool {
        self.codim() == 1
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim_cell + 1)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let nv = self.dim_cell + 1;
        &self.cells[c * nv..(c + 1) * nv]
    }

    pub fn cells(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.cells.chunks_exact(self.dim_cell + 1)
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.cells
    }

    /// Sorted boundary vertex indices.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.on_boundary
    }

    pub fn facets(&self) -> &[TaggedFacet] {
        &self.facets
    }

    /// Bounding-box diagonal; used to scale absolute tolerances.
    pub fn scale(&self) -> f64 {
        bounding_diagonal(&self.vertices)
    }

    /// Copy of the mesh with the given vertex positions.
    pub fn moved(&self, positions: &[Point]) -> Result<Self> {
        if positions.len() != self.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: self.n_vertices(),
                actual: positions.len(),
            });
        }
        let mut m = self.clone();
        m.vertices = positions.to_vec();
        m.check_degenerate()?;
        Ok(m)
    }

    pub fn cell_geometry(&self, c: usize) -> Result<CellGeometry> {
        self.geometry_at(&self.vertices, c)
    }

    /// Geometry of cell `c` with vertex positions taken from `positions`.
    pub fn geometry_at(&self, positions: &[Point], c: usize) -> Result<CellGeometry> {
        let pts = self.cell_points(positions, c);
        let g = CellGeometry::from_points(&pts[..=self.dim_cell], self.is_surface());
        let tol = DEGENERACY_EPS * self.scale().powi(self.dim_cell as i32);
        if !(g.volume > tol) {
            return Err(Error::DegenerateCell {
                cell: c,
                volume: g.volume,
            });
        }
        Ok(g)
    }

    fn cell_points(&self, positions: &[Point], c: usize) -> [Point; 4] {
        let mut pts = [Point::zeros(); 4];
        for (k, &v) in self.cell(c).iter().enumerate() {
            pts[k] = positions[v];
        }
        pts
    }

    /// Orientation-aware measure used to detect inverted cells. Volume
    /// cells use the ambient determinant; surface cells compare their
    /// normal to the normal the same cell has in `reference`.
    pub fn signed_measure(&self, positions: &[Point], reference: &[Point], c: usize) -> f64 {
        let pts = self.cell_points(positions, c);
        let e1 = pts[1] - pts[0];
        let e2 = pts[2] - pts[0];
        match (self.dim_cell, self.dim_ambient) {
            (2, 2) => 0.5 * (e1.x * e2.y - e1.y * e2.x),
            (3, 3) => e1.dot(&e2.cross(&(pts[3] - pts[0]))) / 6.0,
            _ => {
                let r = self.cell_points(reference, c);
                let n_ref = (r[1] - r[0]).cross(&(r[2] - r[0]));
                let n = e1.cross(&e2);
                0.5 * n.norm() * n.dot(&n_ref).signum()
            }
        }
    }

    /// Area-weighted vertex normals of a surface mesh evaluated at `positions`.
    pub fn vertex_normals_at(&self, positions: &[Point]) -> Result<Vec<Point>> {
        if !self.is_surface() {
            return Err(Error::Unsupported(
                "vertex normals are defined for surface meshes only".into(),
            ));
        }
        let mut acc = vec![Point::zeros(); self.n_vertices()];
        for cell in self.cells() {
            let (a, b, c) = (positions[cell[0]], positions[cell[1]], positions[cell[2]]);
            // Half the cross product is the area-weighted unit normal.
            let n = 0.5 * (b - a).cross(&(c - a));
            for &v in cell {
                acc[v] += n;
            }
        }
        let tol = DEGENERACY_EPS * self.scale().powi(2);
        acc.into_iter()
            .enumerate()
            .map(|(v, n)| {
                let len = n.norm();
                if len <= tol {
                    Err(Error::DegenerateNormal(v))
                } else {
                    Ok(n / len)
                }
            })
            .collect()
    }

    pub fn vertex_normals(&self) -> Result<Vec<Point>> {
        self.vertex_normals_at(&self.vertices)
    }

    /// For each vertex, the cells containing it.
    pub fn vertex_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for (c, cell) in self.cells().enumerate() {
            for &v in cell {
                out[v].push(c);
            }
        }
        out
    }

    /// Unique undirected edges `(a, b)` with `a < b`, in first-seen order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for cell in self.cells() {
            for i in 0..cell.len() {
                for j in i + 1..cell.len() {
                    let e = (cell[i].min(cell[j]), cell[i].max(cell[j]));
                    if seen.insert(e, ()).is_none() {
                        out.push(e);
                    }
                }
            }
        }
        out
    }

    pub fn total_volume_at(&self, positions: &[Point]) -> Result<f64> {
        let mut sum = 0.0;
        for c in 0..self.n_cells() {
            sum += self.geometry_at(positions, c)?.volume;
        }
        Ok(sum)
    }

    fn check_degenerate(&self) -> Result<()> {
        for c in 0..self.n_cells() {
            self.geometry_at(&self.vertices, c)?;
        }
        Ok(())
    }

    fn repair_orientation(&mut self) -> Result<()> {
        let nv = self.dim_cell + 1;
        if self.codim() == 0 {
            for c in 0..self.n_cells() {
                if self.signed_measure(&self.vertices, &self.vertices, c) < 0.0 {
                    self.cells.swap(c * nv + nv - 2, c * nv + nv - 1);
                }
            }
            return Ok(());
        }

        // Surface: propagate orientation across shared edges, breadth first.
        let n_cells = self.n_cells();
        let mut edge_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (c, cell) in self.cells().enumerate() {
            for k in 0..3 {
                let (a, b) = (cell[k], cell[(k + 1) % 3]);
                edge_cells.entry((a.min(b), a.max(b))).or_default().push(c);
            }
        }
        let mut visited = vec![false; n_cells];
        let mut components: Vec<Vec<usize>> = Vec::new();
        for seed in 0..n_cells {
            if visited[seed] {
                continue;
            }
            visited[seed] = true;
            let mut comp = vec![seed];
            let mut queue = VecDeque::from([seed]);
            while let Some(c) = queue.pop_front() {
                let cell: [usize; 3] = self.cell(c).try_into().unwrap();
                for k in 0..3 {
                    let (a, b) = (cell[k], cell[(k + 1) % 3]);
                    for &d in &edge_cells[&(a.min(b), a.max(b))] {
                        if d == c {
                            continue;
                        }
                        let traverses_same = directed_edge(self.cell(d), a, b);
                        if visited[d] {
                            if traverses_same {
                                return Err(Error::UnsupportedMesh(
                                    "surface is not orientable".into(),
                                ));
                            }
                            continue;
                        }
                        if traverses_same {
                            self.cells.swap(d * 3 + 1, d * 3 + 2);
                        }
                        visited[d] = true;
                        comp.push(d);
                        queue.push_back(d);
                    }
                }
            }
            components.push(comp);
        }

        // Closed components get outward normals (positive enclosed volume).
        for comp in components {
            let closed = comp.iter().all(|&c| {
                let cell = self.cell(c);
                (0..3).all(|k| {
                    let (a, b) = (cell[k], cell[(k + 1) % 3]);
                    edge_cells[&(a.min(b), a.max(b))].len() == 2
                })
            });
            if !closed {
                continue;
            }
            let enclosed: f64 = comp
                .iter()
                .map(|&c| {
                    let cell = self.cell(c);
                    let (a, b, d) = (
                        self.vertices[cell[0]],
                        self.vertices[cell[1]],
                        self.vertices[cell[2]],
                    );
                    a.dot(&b.cross(&d))
                })
                .sum();
            if enclosed < 0.0 {
                for &c in &comp {
                    self.cells.swap(c * 3 + 1, c * 3 + 2);
                }
            }
        }
        Ok(())
    }

    fn compute_boundary(&mut self) {
        let mut count: HashMap<[usize; 3], usize> = HashMap::new();
        for cell in self.cells.chunks_exact(self.dim_cell + 1) {
            for skip in 0..cell.len() {
                let mut key = [usize::MAX; 3];
                let mut k = 0;
                for (i, &v) in cell.iter().enumerate() {
                    if i != skip {
                        key[k] = v;
                        k += 1;
                    }
                }
                key[..k].sort_unstable();
                *count.entry(key).or_default() += 1;
            }
        }
        let mut on_boundary = vec![false; self.vertices.len()];
        for (key, n) in count {
            if n == 1 {
                for &v in key.iter().filter(|&&v| v != usize::MAX) {
                    on_boundary[v] = true;
                }
            }
        }
        self.boundary = (0..on_boundary.len()).filter(|&v| on_boundary[v]).collect();
        self.on_boundary = on_boundary;
    }
}

fn directed_edge(cell: &[usize], a: usize, b: usize) -> bool {
    (0..3).any(|k| cell[k] == a && cell[(k + 1) % 3] == b)
}

pub fn bounding_diagonal(points: &[Point]) -> f64 {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Orthonormal frame spanning a cell's affine hull.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    vectors: [Point; 3],
    dim: usize,
}

impl Frame {
    /// Modified Gram-Schmidt with one re-orthogonalization pass.
    pub fn gram_schmidt(edges: &[Point]) -> Frame {
        let mut vectors = [Point::zeros(); 3];
        for (k, e) in edges.iter().enumerate() {
            let mut v = *e;
            for _ in 0..2 {
                for u in &vectors[..k] {
                    v -= u * u.dot(&v);
                }
            }
            vectors[k] = v.normalize();
        }
        Frame {
            vectors,
            dim: edges.len(),
        }
    }

    pub fn tangents(&self) -> &[Point] {
        &self.vectors[..self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rotates the frame within its span by the orthogonal matrix `q`
    /// (`dim x dim`, upper-left block is used): `t'_j = sum_i t_i q_ij`.
    pub fn rotated(&self, q: &Matrix3<f64>) -> Frame {
        let mut vectors = [Point::zeros(); 3];
        for (j, out) in vectors.iter_mut().enumerate().take(self.dim) {
            for i in 0..self.dim {
                *out += self.vectors[i] * q[(i, j)];
            }
        }
        Frame {
            vectors,
            dim: self.dim,
        }
    }
}

/// Per-cell geometric data.
#[derive(Clone, Debug)]
pub struct CellGeometry {
    /// Unsigned measure (area for triangles, volume for tetrahedra).
    pub volume: f64,
    pub centroid: Point,
    pub frame: Frame,
    /// Unit normal of a surface triangle, oriented with the vertex order.
    pub normal: Option<Point>,
    /// Edge vectors expressed in frame coordinates (`dim x dim` block).
    pub local_edges: Matrix3<f64>,
    /// In-plane gradients of the barycentric coordinate functions.
    pub gradients: [Point; 4],
}

impl CellGeometry {
    pub fn from_points(points: &[Point], surface: bool) -> CellGeometry {
        let k = points.len() - 1;
        let mut edges = [Point::zeros(); 3];
        for i in 0..k {
            edges[i] = points[i + 1] - points[0];
        }
        let frame = Frame::gram_schmidt(&edges[..k]);
        Self::with_frame(points, frame, surface)
    }

    /// Same geometry computed in a caller-provided frame. Everything except
    /// the `frame` and `local_edges` fields is frame independent.
    pub fn with_frame(points: &[Point], frame: Frame, surface: bool) -> CellGeometry {
        let k = points.len() - 1;
        let centroid = points.iter().sum::<Point>() / points.len() as f64;
        let mut local = Matrix3::identity();
        for (i, t) in frame.tangents().iter().enumerate() {
            for j in 0..k {
                local[(i, j)] = t.dot(&(points[j + 1] - points[0]));
            }
        }
        let (det, inv) = if k == 2 {
            let b = Matrix2::new(local[(0, 0)], local[(0, 1)], local[(1, 0)], local[(1, 1)]);
            let det = b.determinant();
            let inv = b.try_inverse().unwrap_or_else(Matrix2::zeros);
            let mut m = Matrix3::zeros();
            m.fixed_view_mut::<2, 2>(0, 0).copy_from(&inv);
            (det, m)
        } else {
            (
                local.determinant(),
                local.try_inverse().unwrap_or_else(Matrix3::zeros),
            )
        };
        // lambda_j(x) = (B^{-1} T^T (x - p0))_j  =>  grad lambda_j = sum_m T_m B^{-1}_{jm}
        let mut gradients = [Point::zeros(); 4];
        for j in 0..k {
            let mut g = Point::zeros();
            for (m, t) in frame.tangents().iter().enumerate() {
                g += t * inv[(j, m)];
            }
            gradients[j + 1] = g;
        }
        gradients[0] = -(gradients[1] + gradients[2] + gradients[3]);
        let fact = if k == 2 { 2.0 } else { 6.0 };
        let normal = if surface {
            let t = frame.tangents();
            Some(t[0].cross(&t[1]))
        } else {
            None
        };
        CellGeometry {
            volume: det.abs() / fact,
            centroid,
            frame,
            normal,
            local_edges: local,
            gradients,
        }
    }

    /// `det(B_self) / det(B_ref)`: Jacobian determinant of the affine map
    /// from the reference cell onto this cell, written in the two frames.
    pub fn jacobian_det(&self, reference: &CellGeometry) -> f64 {
        local_det(&self.local_edges, self.frame.dim)
            / local_det(&reference.local_edges, reference.frame.dim)
    }

    /// Coefficient vectors `c_a` with `div_Γ V = Σ_a c_a · V_a` for a P1 field,
    /// computed as the frame trace of the in-plane gradient.
    pub fn divergence_weights(&self) -> [Point; 4] {
        let mut out = [Point::zeros(); 4];
        for (a, g) in self.gradients.iter().enumerate().take(self.frame.dim + 1) {
            for t in self.frame.tangents() {
                out[a] += t * t.dot(g);
            }
        }
        out
    }
}

fn local_det(m: &Matrix3<f64>, dim: usize) -> f64 {
    if dim == 2 {
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    } else {
        m.determinant()
    }
}
