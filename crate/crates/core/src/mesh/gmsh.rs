//! Gmsh MSH reader (ASCII 2.2 and 4.1) and 2.2 writer.
//!
//! Only linear simplices are accepted. The highest-dimensional element type
//! present becomes the cells; lower-dimensional simplices one dimension
//! below are kept as tagged facets. Points and lines below the facet
//! dimension are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Point, SimplicialMesh, TaggedFacet};
use crate::error::{Error, Result};

const LINE: u32 = 1;
const TRIANGLE: u32 = 2;
const TETRAHEDRON: u32 = 4;
const POINT: u32 = 15;

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Force the ambient dimension. By default triangle meshes whose
    /// z coordinates all vanish are treated as planar.
    pub dim_ambient: Option<usize>,
}

pub fn load_gmsh(path: impl AsRef<Path>) -> Result<SimplicialMesh> {
    load_gmsh_with(path, LoadOptions::default())
}

pub fn load_gmsh_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<SimplicialMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_gmsh(&text, path, opts)
}

struct Element {
    kind: u32,
    tag: i32,
    nodes: Vec<usize>,
    line: usize,
}

struct Tokens<'a> {
    path: PathBuf,
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, path: &Path) -> Self {
        let inner = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
        Tokens {
            path: path.to_path_buf(),
            inner: Box::new(inner),
            line: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_token(&mut self) -> Option<&'a str> {
        let (line, tok) = self.inner.next()?;
        self.line = line;
        Some(tok)
    }

    fn expect_token(&mut self) -> Result<&'a str> {
        self.next_token()
            .ok_or_else(|| self.err("unexpected end of file"))
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T> {
        let tok = self.expect_token()?;
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse `{tok}`")))
    }

    fn expect(&mut self, marker: &str) -> Result<()> {
        let tok = self.expect_token()?;
        if tok != marker {
            return Err(self.err(format!("expected `{marker}`, found `{tok}`")));
        }
        Ok(())
    }

    fn skip_section(&mut self, name: &str) -> Result<()> {
        let end = format!("$End{name}");
        while self.expect_token()? != end {}
        Ok(())
    }
}

fn parse_gmsh(text: &str, path: &Path, opts: LoadOptions) -> Result<SimplicialMesh> {
    let mut tok = Tokens::new(text, path);
    let mut version: Option<f64> = None;
    let mut nodes: HashMap<usize, Point> = HashMap::new();
    let mut node_order: Vec<usize> = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    // (dim, entity tag) -> first physical tag
    let mut entity_physical: HashMap<(usize, i32), i32> = HashMap::new();

    while let Some(t) = tok.next_token() {
        match t {
            "$MeshFormat" => {
                let v: f64 = tok.parse()?;
                let file_type: u32 = tok.parse()?;
                let _size: u32 = tok.parse()?;
                if file_type != 0 {
                    return Err(tok.err("binary MSH files are not supported"));
                }
                if !(v == 2.2 || (4.0..4.2).contains(&v)) {
                    return Err(tok.err(format!("unsupported MSH version {v}")));
                }
                version = Some(v);
                tok.expect("$EndMeshFormat")?;
            }
            "$Entities" => parse_entities(&mut tok, &mut entity_physical)?,
            "$Nodes" => match version {
                Some(v) if v < 3.0 => {
                    let n: usize = tok.parse()?;
                    for _ in 0..n {
                        let id: usize = tok.parse()?;
                        let p = Point::new(tok.parse()?, tok.parse()?, tok.parse()?);
                        if nodes.insert(id, p).is_some() {
                            return Err(tok.err(format!("duplicate node {id}")));
                        }
                        node_order.push(id);
                    }
                    tok.expect("$EndNodes")?;
                }
                Some(_) => {
                    let blocks: usize = tok.parse()?;
                    let _n: usize = tok.parse()?;
                    let _min: usize = tok.parse()?;
                    let _max: usize = tok.parse()?;
                    for _ in 0..blocks {
                        let dim: usize = tok.parse()?;
                        let _entity: i32 = tok.parse()?;
                        let parametric: u32 = tok.parse()?;
                        let count: usize = tok.parse()?;
                        let ids: Vec<usize> =
                            (0..count).map(|_| tok.parse()).collect::<Result<_>>()?;
                        for id in ids {
                            let p = Point::new(tok.parse()?, tok.parse()?, tok.parse()?);
                            if parametric == 1 {
                                for _ in 0..dim {
                                    let _u: f64 = tok.parse()?;
                                }
                            }
                            if nodes.insert(id, p).is_some() {
                                return Err(tok.err(format!("duplicate node {id}")));
                            }
                            node_order.push(id);
                        }
                    }
                    tok.expect("$EndNodes")?;
                }
                None => return Err(tok.err("$Nodes before $MeshFormat")),
            },
            "$Elements" => match version {
                Some(v) if v < 3.0 => {
                    let n: usize = tok.parse()?;
                    for _ in 0..n {
                        let _id: usize = tok.parse()?;
                        let kind: u32 = tok.parse()?;
                        let line = tok.line;
                        let ntags: usize = tok.parse()?;
                        let tags: Vec<i32> =
                            (0..ntags).map(|_| tok.parse()).collect::<Result<_>>()?;
                        let count = nodes_per_element(kind)
                            .ok_or_else(|| tok.err(format!("unsupported element type {kind}")))?;
                        let nodes = (0..count).map(|_| tok.parse()).collect::<Result<_>>()?;
                        elements.push(Element {
                            kind,
                            tag: tags.first().copied().unwrap_or(0),
                            nodes,
                            line,
                        });
                    }
                    tok.expect("$EndElements")?;
                }
                Some(_) => {
                    let blocks: usize = tok.parse()?;
                    let _n: usize = tok.parse()?;
                    let _min: usize = tok.parse()?;
                    let _max: usize = tok.parse()?;
                    for _ in 0..blocks {
                        let dim: usize = tok.parse()?;
                        let entity: i32 = tok.parse()?;
                        let kind: u32 = tok.parse()?;
                        let line = tok.line;
                        let count: usize = tok.parse()?;
                        let per = nodes_per_element(kind)
                            .ok_or_else(|| tok.err(format!("unsupported element type {kind}")))?;
                        let tag = entity_physical
                            .get(&(dim, entity))
                            .copied()
                            .unwrap_or(entity);
                        for _ in 0..count {
                            let _id: usize = tok.parse()?;
                            let nodes = (0..per).map(|_| tok.parse()).collect::<Result<_>>()?;
                            elements.push(Element {
                                kind,
                                tag,
                                nodes,
                                line,
                            });
                        }
                    }
                    tok.expect("$EndElements")?;
                }
                None => return Err(tok.err("$Elements before $MeshFormat")),
            },
            s if s.starts_with("$End") => return Err(tok.err(format!("unmatched `{s}`"))),
            s if s.starts_with('$') => tok.skip_section(&s[1..])?,
            s => return Err(tok.err(format!("unexpected token `{s}`"))),
        }
    }
    if version.is_none() {
        return Err(tok.err("missing $MeshFormat"));
    }

    let cell_kind = if elements.iter().any(|e| e.kind == TETRAHEDRON) {
        TETRAHEDRON
    } else if elements.iter().any(|e| e.kind == TRIANGLE) {
        TRIANGLE
    } else {
        return Err(Error::UnsupportedMesh(format!(
            "{}: no triangle or tetrahedron elements",
            path.display()
        )));
    };
    let facet_kind = if cell_kind == TETRAHEDRON {
        TRIANGLE
    } else {
        LINE
    };

    // Compact numbering over the nodes actually used by cells, in file order.
    let mut used: HashMap<usize, usize> = HashMap::new();
    for e in elements.iter().filter(|e| e.kind == cell_kind) {
        for &n in &e.nodes {
            if !nodes.contains_key(&n) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: e.line,
                    message: format!("element references unknown node {n}"),
                });
            }
            used.insert(n, 0);
        }
    }
    let mut vertices = Vec::with_capacity(used.len());
    for id in &node_order {
        if let Some(slot) = used.get_mut(id) {
            *slot = vertices.len();
            vertices.push(nodes[id]);
        }
    }
    let cells: Vec<usize> = elements
        .iter()
        .filter(|e| e.kind == cell_kind)
        .flat_map(|e| e.nodes.iter().map(|n| used[n]))
        .collect();
    let mut facets = Vec::new();
    for e in elements.iter().filter(|e| e.kind == facet_kind) {
        if let Some(vs) = e
            .nodes
            .iter()
            .map(|n| used.get(n).copied())
            .collect::<Option<Vec<_>>>()
        {
            facets.push(TaggedFacet {
                vertices: vs,
                tag: e.tag,
            });
        }
    }

    let (dim_cell, dim_ambient) = if cell_kind == TETRAHEDRON {
        (3, 3)
    } else {
        let planar = vertices.iter().all(|p| p.z == 0.0);
        (2, opts.dim_ambient.unwrap_or(if planar { 2 } else { 3 }))
    };
    SimplicialMesh::new(dim_ambient, dim_cell, vertices, cells)?.with_facets(facets)
}

fn parse_entities(tok: &mut Tokens<'_>, out: &mut HashMap<(usize, i32), i32>) -> Result<()> {
    let counts: [usize; 4] = [tok.parse()?, tok.parse()?, tok.parse()?, tok.parse()?];
    for (dim, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let tag: i32 = tok.parse()?;
            let coords = if dim == 0 { 3 } else { 6 };
            for _ in 0..coords {
                let _x: f64 = tok.parse()?;
            }
            let nphys: usize = tok.parse()?;
            let phys: Vec<i32> = (0..nphys).map(|_| tok.parse()).collect::<Result<_>>()?;
            if let Some(&p) = phys.first() {
                out.insert((dim, tag), p);
            }
            if dim > 0 {
                let nb: usize = tok.parse()?;
                for _ in 0..nb {
                    let _b: i32 = tok.parse()?;
                }
            }
        }
    }
    tok.expect("$EndEntities")
}

fn nodes_per_element(kind: u32) -> Option<usize> {
    match kind {
        LINE => Some(2),
        TRIANGLE => Some(3),
        TETRAHEDRON => Some(4),
        POINT => Some(1),
        _ => None,
    }
}

/// Writes MSH 2.2 ASCII. Facets come first with their tags, cells after
/// them with physical tag 0.
pub fn write_gmsh(mesh: &SimplicialMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, gmsh_string(mesh))?;
    Ok(())
}

pub fn gmsh_string(mesh: &SimplicialMesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {} {} {}", i + 1, p.x, p.y, p.z);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(s, "{}", mesh.facets().len() + mesh.n_cells());
    let (facet_kind, cell_kind) = if mesh.dim_cell() == 3 {
        (TRIANGLE, TETRAHEDRON)
    } else {
        (LINE, TRIANGLE)
    };
    let mut id = 1;
    for f in mesh.facets() {
        let _ = write!(s, "{id} {facet_kind} 2 {} {}", f.tag, f.tag);
        for v in &f.vertices {
            let _ = write!(s, " {}", v + 1);
        }
        s.push('\n');
        id += 1;
    }
    for cell in mesh.cells() {
        let _ = write!(s, "{id} {cell_kind} 2 0 1");
        for v in cell {
            let _ = write!(s, " {}", v + 1);
        }
        s.push('\n');
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}
