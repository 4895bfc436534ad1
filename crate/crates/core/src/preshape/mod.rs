//! The parameterization tracking objective and its pre-shape derivative.

mod curvature;
mod state;

pub use curvature::{
    area_derivative, mean_curvature, minimal_surface_descent_direction, vertex_areas,
};
pub use state::PreShapeState;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{evaluate_target, CellField, TargetEval, TargetSpec};
use crate::mesh::Point;

/// Which part of the derivative to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Full,
    Tangential,
    Normal,
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Component::Full),
            "tangential" => Ok(Component::Tangential),
            "normal" => Ok(Component::Normal),
            _ => Err(Error::Config(format!("unknown component `{s}`"))),
        }
    }
}

/// Per-vertex covector `d` with `DJ[V] = sum_i d_i . V_i` for P1 fields `V`.
/// Entries at boundary vertices are kept but test fields vanish there.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeCovector {
    pub values: Vec<Point>,
    pub component: Component,
}

impl DerivativeCovector {
    pub fn pair(&self, v: &[Point]) -> f64 {
        self.values.iter().zip(v).map(|(d, v)| d.dot(v)).sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    /// Max norm over interior vertices only.
    pub fn interior_max_norm(&self, boundary: &[bool]) -> f64 {
        self.values
            .iter()
            .zip(boundary)
            .filter(|(_, &b)| !b)
            .map(|(d, _)| d.norm())
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `1/2 sum_C (rho_C - f_C)^2 vol_C` on the current configuration.
pub fn objective(state: &PreShapeState, target: &CellField) -> Result<f64> {
    target.check_len(state.reference().n_cells())?;
    Ok(state
        .density()
        .iter()
        .zip(target.values())
        .zip(state.current_geometry())
        .map(|((r, f), g)| 0.5 * (r - f) * (r - f) * g.volume)
        .sum())
}

/// Largest cell residual `|rho - f|`.
pub fn residual_max(state: &PreShapeState, target: &CellField) -> f64 {
    state
        .density()
        .iter()
        .zip(target.values())
        .map(|(r, f)| (r - f).abs())
        .fold(0.0, f64::max)
}

/// Derivative of `integral q` along `V`: `sum_C vol (grad q . V_bar + q div V)`.
fn integral_q_derivative(state: &PreShapeState, t: &TargetEval, v: &[Point]) -> f64 {
    let mesh = state.reference();
    let mut dq = 0.0;
    for (c, g) in state.current_geometry().iter().enumerate() {
        let (vbar, div) = cell_mean_and_div(mesh.cell(c), g, v);
        dq += g.volume * (t.grad_q[c].dot(&vbar) + t.q[c] * div);
    }
    dq
}

fn cell_mean_and_div(cell: &[usize], g: &crate::mesh::CellGeometry, v: &[Point]) -> (Point, f64) {
    let w = g.divergence_weights();
    let mut mean = Point::zeros();
    let mut div = 0.0;
    for (k, &a) in cell.iter().enumerate() {
        mean += v[a];
        div += w[k].dot(&v[a]);
    }
    (mean / cell.len() as f64, div)
}

/// Material derivative of the normalized target along the P1 field `v`, per
/// cell: `s grad q . V_bar - f dQ[V] / Q` with `s = mass / Q`.
pub fn material_derivative_target(
    state: &PreShapeState,
    spec: &TargetSpec,
    v: &[Point],
) -> Result<CellField> {
    check_field(state, v)?;
    let t = evaluate_target(spec, state)?;
    let s = t.scale();
    let dq = integral_q_derivative(state, &t, v);
    let mesh = state.reference();
    Ok(CellField::new(
        (0..mesh.n_cells())
            .map(|c| {
                let g = &state.current_geometry()[c];
                let (vbar, _) = cell_mean_and_div(mesh.cell(c), g, v);
                s * t.grad_q[c].dot(&vbar) - t.values[c] * dq / t.integral_q
            })
            .collect(),
    ))
}

/// `DJ[V]` evaluated directly from the integral form, independently of the
/// covector assembly.
pub fn directional_derivative(
    state: &PreShapeState,
    spec: &TargetSpec,
    v: &[Point],
) -> Result<f64> {
    check_field(state, v)?;
    let t = evaluate_target(spec, state)?;
    let df = material_derivative_target(state, spec, v)?;
    let mesh = state.reference();
    let mut sum = 0.0;
    for (c, g) in state.current_geometry().iter().enumerate() {
        let (_, div) = cell_mean_and_div(mesh.cell(c), g, v);
        let rho = state.density()[c];
        let f = t.values[c];
        sum += g.volume * (-0.5 * (rho * rho - f * f) * div - (rho - f) * df[c]);
    }
    Ok(sum)
}

fn check_field(state: &PreShapeState, v: &[Point]) -> Result<()> {
    if v.len() != state.positions().len() {
        return Err(Error::LengthMismatch {
            expected: state.positions().len(),
            actual: v.len(),
        });
    }
    Ok(())
}

/// Assembles the derivative covector of the tracking objective.
pub fn assemble_derivative(
    state: &PreShapeState,
    spec: &TargetSpec,
    component: Component,
) -> Result<DerivativeCovector> {
    let mesh = state.reference();
    if component == Component::Normal && !mesh.is_surface() {
        return Err(Error::Unsupported(
            "the normal component does not exist on codimension-zero meshes".into(),
        ));
    }
    let t = evaluate_target(spec, state)?;
    let s = t.scale();
    // Weight of the nonlocal term coming from the variation of the normalization.
    let k_nonlocal: f64 = state
        .density()
        .iter()
        .zip(t.values.values())
        .zip(state.current_geometry())
        .map(|((r, f), g)| g.volume * (r - f) * f)
        .sum::<f64>()
        / t.integral_q;

    let per_cell: Vec<[Point; 4]> = state
        .current_geometry()
        .par_iter()
        .enumerate()
        .map(|(c, g)| {
            let rho = state.density()[c];
            let f = t.values[c];
            let div_coef = g.volume * (-0.5 * (rho * rho - f * f) + k_nonlocal * t.q[c]);
            let n = mesh.dim_cell() + 1;
            let mean_coef = g.volume * (k_nonlocal - (rho - f) * s) / n as f64;
            let w = g.divergence_weights();
            let mut out = [Point::zeros(); 4];
            for k in 0..n {
                out[k] = w[k] * div_coef + t.grad_q[c] * mean_coef;
            }
            out
        })
        .collect();

    let mut d = vec![Point::zeros(); mesh.n_vertices()];
    for (c, contrib) in per_cell.iter().enumerate() {
        for (k, &a) in mesh.cell(c).iter().enumerate() {
            d[a] += contrib[k];
        }
    }

    let values = match (component, state.normals()) {
        (Component::Full, _) | (Component::Tangential, None) => d,
        (Component::Tangential, Some(n)) => {
            d.iter().zip(n).map(|(d, n)| d - n * n.dot(d)).collect()
        }
        (Component::Normal, Some(n)) => d.iter().zip(n).map(|(d, n)| n * n.dot(d)).collect(),
        (Component::Normal, None) => unreachable!(),
    };
    Ok(DerivativeCovector { values, component })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_target, estimate_gm, NodalField};
    use crate::mesh::{generate, SimplicialMesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y, 0.0)
    }

    fn random_interior_field(state: &PreShapeState, seed: u64, amp: f64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = state.reference();
        (0..mesh.n_vertices())
            .map(|v| {
                let r = Point::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    if mesh.dim_ambient() == 3 {
                        rng.random_range(-1.0..1.0)
                    } else {
                        0.0
                    },
                );
                if mesh.is_boundary(v) {
                    Point::zeros()
                } else {
                    r * amp
                }
            })
            .collect()
    }

    fn distorted_square(n: usize, seed: u64) -> PreShapeState {
        let m = generate::unit_square(n, 0.2, seed).unwrap();
        let g = estimate_gm(&m).unwrap();
        let s = PreShapeState::new(m, g).unwrap();
        let u = random_interior_field(&s, seed + 1, 0.1 / n as f64);
        s.displaced(&u, 1.0).unwrap()
    }

    #[test]
    fn exact_solution_has_zero_objective_and_derivative() {
        let m = generate::unit_square(6, 0.0, 0).unwrap();
        let g = estimate_gm(&m).unwrap();
        let s = PreShapeState::new(m, g).unwrap();
        let f = build_target(&TargetSpec::Uniform, &s).unwrap();
        assert!(objective(&s, &f).unwrap().abs() < 1e-28);
        for comp in [Component::Full, Component::Tangential] {
            let d = assemble_derivative(&s, &TargetSpec::Uniform, comp).unwrap();
            assert!(d.max_norm() < 1e-12);
        }
    }

    #[test]
    fn four_cell_objective_matches_hand_oracle() {
        // unit square fanned around a center vertex, all reference areas 1/4
        let v = vec![
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(1.0, 1.0),
            p(0.0, 1.0),
            p(0.5, 0.5),
        ];
        let m = SimplicialMesh::new(2, 2, v, vec![0, 1, 4, 1, 2, 4, 2, 3, 4, 3, 0, 4]).unwrap();
        let s = PreShapeState::new(m, NodalField::constant(5, 1.0)).unwrap();
        let mut pos = s.positions().to_vec();
        pos[4] = p(0.5, 0.25);
        let s = s.with_positions(pos).unwrap();
        let f = build_target(&TargetSpec::Uniform, &s).unwrap();
        // areas become 1/8, 1/4, 3/8, 1/4; rho = (1/4) / area
        let oracle: f64 = [0.125, 0.25, 0.375, 0.25]
            .iter()
            .map(|&a| 0.5 * (0.25 / a - 1.0f64).powi(2) * a)
            .sum();
        assert!((oracle - 1.0 / 12.0).abs() < 1e-15);
        assert!((objective(&s, &f).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn covector_matches_direct_pairing() {
        let s = distorted_square(8, 4);
        let spec = TargetSpec::analytic("2 + cos(5*2*pi*((x - 0.35)^2 + 2*(y - 0.4)^2))").unwrap();
        let d = assemble_derivative(&s, &spec, Component::Full).unwrap();
        for seed in 0..5 {
            let v = random_interior_field(&s, 100 + seed, 1.0);
            let a = d.pair(&v);
            let b = directional_derivative(&s, &spec, &v).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn central_differences_agree() {
        let s = distorted_square(4, 7);
        let spec = TargetSpec::analytic("1 + 0.5*sin(3*x)*cos(2*y)").unwrap();
        let d = assemble_derivative(&s, &spec, Component::Full).unwrap();
        let j = |st: &PreShapeState| objective(st, &build_target(&spec, st).unwrap()).unwrap();
        for seed in 0..3 {
            let v = random_interior_field(&s, seed, 1.0);
            let h = 1e-5;
            let fd =
                (j(&s.displaced(&v, h).unwrap()) - j(&s.displaced(&v, -h).unwrap())) / (2.0 * h);
            let a = d.pair(&v);
            assert!((fd - a).abs() <= 1e-6 * a.abs().max(1e-8), "{fd} vs {a}");
        }
    }

    #[test]
    fn uniform_material_derivative_vanishes_in_the_plane() {
        let s = distorted_square(6, 2);
        let v = random_interior_field(&s, 9, 1.0);
        let df = material_derivative_target(&s, &TargetSpec::Uniform, &v).unwrap();
        assert!(df.values().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn linear_q_nonlocal_term_vanishes() {
        let s = distorted_square(6, 3);
        let spec = TargetSpec::analytic("x").unwrap();
        let v = random_interior_field(&s, 11, 1.0);
        let t = evaluate_target(&spec, &s).unwrap();
        let df = material_derivative_target(&s, &spec, &v).unwrap();
        let mesh = s.reference();
        for (c, g) in s.current_geometry().iter().enumerate() {
            let (vbar, _) = cell_mean_and_div(mesh.cell(c), g, &v);
            assert!((df[c] - t.scale() * vbar.x).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_component_rejected_on_planar_mesh() {
        let s = distorted_square(3, 0);
        assert!(matches!(
            assemble_derivative(&s, &TargetSpec::Uniform, Component::Normal),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn surface_components_sum_to_full() {
        let m = generate::uv_sphere(16, 9, Point::zeros(), 1.0).unwrap();
        let n = m.n_vertices();
        let s = PreShapeState::new(m, NodalField::constant(n, 1.0)).unwrap();
        let u = random_interior_field(&s, 3, 0.01);
        let s = s.displaced(&u, 1.0).unwrap();
        let spec = TargetSpec::analytic("1 + 0.5*sin(2*x)").unwrap();
        let full = assemble_derivative(&s, &spec, Component::Full).unwrap();
        let tan = assemble_derivative(&s, &spec, Component::Tangential).unwrap();
        let nor = assemble_derivative(&s, &spec, Component::Normal).unwrap();
        for i in 0..n {
            let dn = s.normals().unwrap()[i];
            assert!(tan.values[i].dot(&dn).abs() < 1e-14 * (1.0 + full.values[i].norm()));
            assert!(
                (full.values[i] - tan.values[i] - nor.values[i]).norm()
                    < 1e-14 * (1.0 + full.values[i].norm())
            );
        }
    }
}
