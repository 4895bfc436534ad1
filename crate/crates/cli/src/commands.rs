use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use anyhow::Result;
use paramtrack_core::mesh::gmsh::load_gmsh;
use paramtrack_core::preshape::{assemble_derivative, Component};
use paramtrack_core::verify::circle::{
    circle_derivative_assembled, circle_derivative_closed_form, Vec2,
};
use paramtrack_core::verify::fd::default_steps;
use paramtrack_core::verify::{audit, fd_check_covector, CircleOracle};
use paramtrack_core::{Point, SimplicialMesh};

use crate::config::RunConfig;
use crate::pipeline::prepare;

/// Tolerances applied by `check`.
pub const FD_REL_TOL: f64 = 1e-5;
pub const FD_ABS_TOL: f64 = 1e-9;
pub const FD_SLOPE: (f64, f64) = (1.8, 2.2);
pub const MASS_TOL: f64 = 1e-10;
pub const DECOMPOSITION_TOL: f64 = 1e-10;
pub const FRAME_TOL: f64 = 1e-12;
pub const CIRCLE_REL_TOL: f64 = 1e-3;
pub const CIRCLE_RATIO: (f64, f64) = (3.5, 4.5);

#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn line(name: impl Into<String>, pass: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        detail,
        pass,
    }
}

/// Finite-difference and structural checks at the initial state of `cfg`,
/// followed by the circle oracle suite. `negate` flips the assembled
/// covector, which must make the finite-difference check fail.
pub fn check(cfg: &RunConfig, seed: u64, negate: bool) -> Result<Vec<CheckLine>> {
    let prepared = prepare(cfg)?;
    let state = &prepared.initial.shape;
    let spec = &prepared.spec;
    let mut out = Vec::new();

    let mut d = assemble_derivative(state, spec, Component::Full)?;
    if negate {
        for v in &mut d.values {
            *v = -*v;
        }
    }
    let steps = default_steps(state, cfg.check.steps);
    let fd = fd_check_covector(state, spec, &d, cfg.check.directions, &steps, seed)?;
    let mut fd_ok = true;
    let mut slopes = (f64::INFINITY, f64::NEG_INFINITY);
    for dir in &fd.directions {
        let min_abs = dir.abs_errors.iter().copied().fold(f64::INFINITY, f64::min);
        let tiny = dir.pairing.abs() < FD_ABS_TOL;
        fd_ok &= dir.min_rel_error < FD_REL_TOL || (tiny && min_abs < FD_ABS_TOL);
        match dir.slope {
            Some(s) => slopes = (slopes.0.min(s), slopes.1.max(s)),
            None if !tiny => fd_ok = false,
            None => {}
        }
    }
    fd_ok &= slopes.0 >= FD_SLOPE.0 && slopes.1 <= FD_SLOPE.1 || slopes.0 > slopes.1;
    let slope_text = if slopes.0 <= slopes.1 {
        format!("slopes [{:.3}, {:.3}]", slopes.0, slopes.1)
    } else {
        "no truncation-dominated steps".to_string()
    };
    out.push(line(
        "finite differences",
        fd_ok,
        format!(
            "{} directions (seed {seed}), worst min relative error {:.2e} (< {FD_REL_TOL:e}), {slope_text}",
            fd.directions.len(),
            fd.worst_min_rel_error(),
        ),
    ));

    let a = audit(state, spec, cfg.check.samples, seed)?;
    out.push(line(
        "mass conservation",
        a.mass_defect < MASS_TOL,
        format!("relative defect {:.2e} (< {MASS_TOL:e})", a.mass_defect),
    ));
    if let Some(dd) = a.decomposition_defect {
        out.push(line(
            "normal/tangential decomposition",
            dd < DECOMPOSITION_TOL,
            format!(
                "relative defect {dd:.2e} over {} fields (< {DECOMPOSITION_TOL:e})",
                cfg.check.samples
            ),
        ));
    }
    out.push(line(
        "frame independence",
        a.frame_defect < FRAME_TOL,
        format!("relative defect {:.2e} (< {FRAME_TOL:e})", a.frame_defect),
    ));
    out.push(line(
        "area tangential nullity",
        true,
        format!("{:.3e} (informational)", a.nullity),
    ));
    out.extend(circle_suite()?);
    Ok(out)
}

/// Smooth test field for the circle oracles.
pub fn circle_field(x: Vec2) -> Vec2 {
    [
        1.0 + 0.3 * x[1] + x[0] * x[0],
        0.5 - 0.2 * x[0] + x[0] * x[1] + x[1].powi(3),
    ]
}

pub const CIRCLE_SEGMENTS: [usize; 3] = [64, 256, 1024];

/// Assembled versus closed-form circle derivatives for each target family.
pub fn circle_suite() -> Result<Vec<CheckLine>> {
    let oracles = [
        ("rescale 1.7", CircleOracle::Rescale(1.7)),
        ("rotate 0.9", CircleOracle::Rotate(0.9)),
        ("rotate pi", CircleOracle::Rotate(PI)),
        (
            "translate (0.4, -1.1)",
            CircleOracle::Translate([0.4, -1.1]),
        ),
    ];
    let mut out = Vec::new();
    for (name, o) in oracles {
        let mut errs = Vec::new();
        let mut last = None;
        for n in CIRCLE_SEGMENTS {
            let a = circle_derivative_assembled(o, n, circle_field)?;
            let c = circle_derivative_closed_form(o, n, circle_field)?;
            errs.push((a.total() - c.total()).abs());
            last = Some((a, c));
        }
        let (a, c) = last.expect("segment counts");
        let rel = errs[2] / c.total().abs();
        let ratios = [(errs[0] / errs[1]).sqrt(), (errs[1] / errs[2]).sqrt()];
        let in_range = |r: f64| (CIRCLE_RATIO.0..=CIRCLE_RATIO.1).contains(&r);
        let mut pass = rel < CIRCLE_REL_TOL && ratios.iter().all(|&r| in_range(r));
        let mut detail = format!(
            "relative error {rel:.2e} at 1024 segments, per-doubling ratios {:.3} {:.3}",
            ratios[0], ratios[1]
        );
        match o {
            CircleOracle::Rescale(_) => {
                pass &= a.tangential.abs() < CIRCLE_REL_TOL;
                detail += &format!(", tangential {:.1e}", a.tangential);
            }
            CircleOracle::Rotate(t) if t == PI => {
                pass &= a.tangential.abs() < CIRCLE_REL_TOL;
                detail += &format!(", tangential {:.1e}", a.tangential);
            }
            _ => {}
        }
        out.push(line(format!("circle {name}"), pass, detail));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct QualityReport {
    pub n_vertices: usize,
    pub n_cells: usize,
    pub volume_min: f64,
    pub volume_max: f64,
    pub volume_mean: f64,
    /// Variance of the cell volumes divided by the squared mean.
    pub volume_rel_variance: f64,
    /// Counts of cell volumes in ten equal bins between min and max.
    pub histogram: [usize; 10],
    /// Mean cell volume over cell volume.
    pub density_min: f64,
    pub density_max: f64,
    pub density_mean: f64,
    /// Normalized inradius over circumradius, 1 for regular simplices.
    pub quality_min: f64,
    pub quality_mean: f64,
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vertices {} cells {}", self.n_vertices, self.n_cells)?;
        writeln!(
            f,
            "cell volume min {:.6e} max {:.6e} mean {:.6e} relative variance {:.6e}",
            self.volume_min, self.volume_max, self.volume_mean, self.volume_rel_variance
        )?;
        let w = (self.volume_max - self.volume_min) / 10.0;
        for (k, c) in self.histogram.iter().enumerate() {
            let lo = self.volume_min + w * k as f64;
            writeln!(f, "  [{:.4e}, {:.4e}) {c}", lo, lo + w)?;
        }
        writeln!(
            f,
            "relative density min {:.4} max {:.4} mean {:.4}",
            self.density_min, self.density_max, self.density_mean
        )?;
        write!(
            f,
            "radius ratio min {:.4} mean {:.4}",
            self.quality_min, self.quality_mean
        )
    }
}

/// Normalized inradius / circumradius of a triangle or tetrahedron.
pub fn radius_ratio(p: &[Point]) -> f64 {
    match p.len() {
        3 => {
            let (a, b, c) = (
                (p[1] - p[2]).norm(),
                (p[0] - p[2]).norm(),
                (p[0] - p[1]).norm(),
            );
            let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
            let r = 2.0 * area / (a + b + c);
            let big_r = a * b * c / (4.0 * area);
            2.0 * r / big_r
        }
        4 => {
            let e = [p[1] - p[0], p[2] - p[0], p[3] - p[0]];
            let vol = e[0].dot(&e[1].cross(&e[2])).abs() / 6.0;
            let faces = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
            let area: f64 = faces
                .iter()
                .map(|f| 0.5 * (p[f[1]] - p[f[0]]).cross(&(p[f[2]] - p[f[0]])).norm())
                .sum();
            let r = 3.0 * vol / area;
            // circumcenter c - p0 solves 2 e_k . x = |e_k|^2
            let m = nalgebra_free_solve(&e);
            3.0 * r / m.norm()
        }
        _ => f64::NAN,
    }
}

/// Offset of the circumcenter from the first vertex via Cramer's rule.
fn nalgebra_free_solve(e: &[Point; 3]) -> Point {
    let det = 2.0 * e[0].dot(&e[1].cross(&e[2]));
    let (l0, l1, l2) = (
        e[0].norm_squared(),
        e[1].norm_squared(),
        e[2].norm_squared(),
    );
    (e[1].cross(&e[2]) * l0 + e[2].cross(&e[0]) * l1 + e[0].cross(&e[1]) * l2) / det
}

pub fn quality(mesh: &SimplicialMesh) -> Result<QualityReport> {
    let vols: Vec<f64> = (0..mesh.n_cells())
        .map(|c| Ok(mesh.cell_geometry(c)?.volume))
        .collect::<paramtrack_core::Result<_>>()?;
    let n = vols.len() as f64;
    let mean = vols.iter().sum::<f64>() / n;
    let var = vols.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (vmin, vmax) = vols
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let mut histogram = [0usize; 10];
    for v in &vols {
        let k = if vmax > vmin {
            (((v - vmin) / (vmax - vmin)) * 10.0) as usize
        } else {
            0
        };
        histogram[k.min(9)] += 1;
    }
    let dens: Vec<f64> = vols.iter().map(|v| mean / v).collect();
    let q: Vec<f64> = mesh
        .cells()
        .map(|c| radius_ratio(&c.iter().map(|&i| mesh.vertices()[i]).collect::<Vec<_>>()))
        .collect();
    Ok(QualityReport {
        n_vertices: mesh.n_vertices(),
        n_cells: mesh.n_cells(),
        volume_min: vmin,
        volume_max: vmax,
        volume_mean: mean,
        volume_rel_variance: var / (mean * mean),
        histogram,
        density_min: dens.iter().copied().fold(f64::INFINITY, f64::min),
        density_max: dens.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        density_mean: dens.iter().sum::<f64>() / n,
        quality_min: q.iter().copied().fold(f64::INFINITY, f64::min),
        quality_mean: q.iter().sum::<f64>() / n,
    })
}

pub fn quality_file(path: &Path) -> Result<QualityReport> {
    quality(&load_gmsh(path)?)
}
