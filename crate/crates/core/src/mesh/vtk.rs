//! Legacy ASCII VTK output (`DATASET UNSTRUCTURED_GRID`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point, SimplicialMesh};
use crate::error::{Error, Result};

/// A named data array attached to the written grid.
#[derive(Clone, Copy, Debug)]
pub enum VtkField<'a> {
    Nodal(&'a str, &'a [f64]),
    Cell(&'a str, &'a [f64]),
    NodalVector(&'a str, &'a [Point]),
}

pub fn write_vtk(
    mesh: &SimplicialMesh,
    fields: &[VtkField<'_>],
    path: impl AsRef<Path>,
) -> Result<()> {
    write_vtk_at(mesh, mesh.vertices(), fields, path)
}

/// Writes the mesh with vertex coordinates taken from `positions`.
pub fn write_vtk_at(
    mesh: &SimplicialMesh,
    positions: &[Point],
    fields: &[VtkField<'_>],
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, vtk_string(mesh, positions, fields)?)?;
    Ok(())
}

pub fn vtk_string(
    mesh: &SimplicialMesh,
    positions: &[Point],
    fields: &[VtkField<'_>],
) -> Result<String> {
    let (nv, nc) = (mesh.n_vertices(), mesh.n_cells());
    check_len(nv, positions.len())?;
    for f in fields {
        match f {
            VtkField::Nodal(_, v) => check_len(nv, v.len())?,
            VtkField::Cell(_, v) => check_len(nc, v.len())?,
            VtkField::NodalVector(_, v) => check_len(nv, v.len())?,
        }
    }

    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nparamtrack\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in positions {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    let per = mesh.dim_cell() + 1;
    let _ = writeln!(s, "CELLS {nc} {}", nc * (per + 1));
    for cell in mesh.cells() {
        let _ = write!(s, "{per}");
        for v in cell {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    let kind = if mesh.dim_cell() == 3 { 10 } else { 5 };
    for _ in 0..nc {
        let _ = writeln!(s, "{kind}");
    }

    let nodal: Vec<_> = fields
        .iter()
        .filter(|f| !matches!(f, VtkField::Cell(..)))
        .collect();
    if !nodal.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for f in nodal {
            match f {
                VtkField::Nodal(name, v) => scalars(&mut s, name, v),
                VtkField::NodalVector(name, v) => {
                    let _ = writeln!(s, "VECTORS {name} double");
                    for p in v.iter() {
                        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
                    }
                }
                VtkField::Cell(..) => unreachable!(),
            }
        }
    }
    let cell: Vec<_> = fields
        .iter()
        .filter_map(|f| match f {
            VtkField::Cell(name, v) => Some((name, v)),
            _ => None,
        })
        .collect();
    if !cell.is_empty() {
        let _ = writeln!(s, "CELL_DATA {nc}");
        for (name, v) in cell {
            scalars(&mut s, name, v);
        }
    }
    Ok(s)
}

fn scalars(s: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(s, "{v}");
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Reads back points and cell connectivity from a file produced by
/// [`write_vtk`]. Data arrays are skipped.
pub fn read_vtk_geometry(text: &str) -> Result<(Vec<Point>, Vec<Vec<usize>>)> {
    let bad = |m: &str| Error::Unsupported(format!("malformed VTK: {m}"));
    let mut lines = text.lines();
    let mut points = Vec::new();
    let mut cells = Vec::new();
    while let Some(line) = lines.next() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("POINTS") => {
                let n: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("POINTS"))?;
                for _ in 0..n {
                    let c: Vec<f64> = lines
                        .next()
                        .ok_or_else(|| bad("truncated POINTS"))?
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| bad("coordinate")))
                        .collect::<Result<_>>()?;
                    points.push(Point::new(c[0], c[1], c[2]));
                }
            }
            Some("CELLS") => {
                let n: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("CELLS"))?;
                for _ in 0..n {
                    let ids: Vec<usize> = lines
                        .next()
                        .ok_or_else(|| bad("truncated CELLS"))?
                        .split_whitespace()
                        .skip(1)
                        .map(|t| t.parse().map_err(|_| bad("index")))
                        .collect::<Result<_>>()?;
                    cells.push(ids);
                }
            }
            _ => {}
        }
    }
    Ok((points, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    #[test]
    fn cell_field_block() {
        let m = generate::unit_square(1, 0.0, 0).unwrap();
        let s = vtk_string(&m, m.vertices(), &[VtkField::Cell("density", &[1.0, 2.0])]).unwrap();
        assert!(s.contains("CELLS 2 8\n"));
        assert!(s.contains("CELL_DATA 2\nSCALARS density double 1"));
        assert!(!s.contains("POINT_DATA"));
    }

    #[test]
    fn geometry_only() {
        let m = generate::unit_square(1, 0.0, 0).unwrap();
        let s = vtk_string(&m, m.vertices(), &[]).unwrap();
        assert!(!s.contains("CELL_DATA") && !s.contains("POINT_DATA"));
    }

    #[test]
    fn length_mismatch() {
        let m = generate::unit_square(1, 0.0, 0).unwrap();
        assert!(matches!(
            vtk_string(&m, m.vertices(), &[VtkField::Nodal("g", &[1.0])]),
            Err(Error::LengthMismatch {
                expected: 4,
                actual: 1
            })
        ));
    }

    #[test]
    fn round_trip_geometry_and_determinism() {
        let m = generate::unit_square(6, 0.2, 3).unwrap();
        let g: Vec<f64> = (0..m.n_vertices()).map(|i| i as f64 / 7.0).collect();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.vtk"), dir.path().join("b.vtk"));
        write_vtk(&m, &[VtkField::Nodal("g", &g)], &a).unwrap();
        write_vtk(&m, &[VtkField::Nodal("g", &g)], &b).unwrap();
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(text, fs::read_to_string(&b).unwrap());
        let (pts, cells) = read_vtk_geometry(&text).unwrap();
        for (p, q) in pts.iter().zip(m.vertices()) {
            assert!((p - q).norm() <= 1e-15);
        }
        assert_eq!(cells.concat(), m.connectivity());
    }
}
