use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use paramtrack_core::mesh::generate;
use paramtrack_core::mesh::gmsh::write_gmsh;
use paramtrack_core::SimplicialMesh;

/// Meshes the presets are built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MeshKind {
    /// Unstructured unit square, 4250 triangles.
    Square,
    /// Uniform structured unit square, 32 x 32 x 2 triangles.
    Grid,
    /// Sphere of radius 0.3 inside a tetrahedral unit cube, desk size.
    SphereHoldall,
    /// As `sphere-holdall` with twice the resolution in each direction.
    SphereHoldallFine,
    /// Hemisphere cap of radius 1 with 1014 triangles.
    Cap,
}

pub fn build(kind: MeshKind) -> Result<SimplicialMesh> {
    Ok(match kind {
        MeshKind::Square => generate::unstructured_square(43, 0.0, 7)?,
        MeshKind::Grid => generate::unit_square(32, 0.0, 0)?,
        MeshKind::SphereHoldall => generate::sphere_in_cube(39, 21, 0.3, 1, 2)?,
        MeshKind::SphereHoldallFine => generate::sphere_in_cube(78, 40, 0.3, 2, 4)?,
        MeshKind::Cap => generate::hemisphere_cap(13, 1.0)?,
    })
}

pub fn write(kind: MeshKind, path: &Path) -> Result<SimplicialMesh> {
    let mesh = build(kind)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_gmsh(&mesh, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(mesh)
}
