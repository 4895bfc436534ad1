//! Structural defects of a state: mass conservation, normal/tangential
//! decomposition, frame independence and the tangential nullity of the area
//! functional.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fields::{build_target, TargetSpec};
use crate::mesh::Point;
use crate::preshape::{area_derivative, assemble_derivative, objective, Component, PreShapeState};

use super::fd::random_interior_direction;

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub seed: u64,
    /// `|sum rho vol - mass| / mass`.
    pub mass_defect: f64,
    /// Largest `|Full - Tangential - Normal|` relative to the pairing
    /// magnitudes; `None` for planar meshes, where there is no normal part.
    pub decomposition_defect: Option<f64>,
    /// Relative change of objective and covector under random frame rotations.
    pub frame_defect: f64,
    /// Area derivative paired with a smooth interior tangential field.
    pub nullity: f64,
}

/// Smooth ambient field used for the nullity measurement.
pub fn nullity_field(p: &Point) -> Point {
    Point::new(
        (2.0 * p.x + p.y).sin(),
        (p.y - 3.0 * p.z).cos(),
        (p.x * p.z).sin() + 0.5 * p.y,
    )
}

/// `|sum_i dA_i . V_i|` for `V = field` projected onto the vertex tangent
/// planes and zeroed on the boundary. Tangential fields leave the area
/// unchanged, so this vanishes up to discretization error.
pub fn area_tangential_nullity(state: &PreShapeState, field: impl Fn(&Point) -> Point) -> f64 {
    let mesh = state.reference();
    let grad = area_derivative(state);
    let normals = state.normals();
    let mut sum = 0.0;
    for (i, (p, g)) in state.positions().iter().zip(&grad).enumerate() {
        if mesh.is_boundary(i) {
            continue;
        }
        let mut v = field(p);
        if let Some(n) = normals {
            v -= n[i] * n[i].dot(&v);
        }
        sum += g.dot(&v);
    }
    sum.abs()
}

pub fn audit(
    state: &PreShapeState,
    spec: &TargetSpec,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mesh = state.reference();
    let total: f64 = state
        .density()
        .iter()
        .zip(state.current_geometry())
        .map(|(r, g)| r * g.volume)
        .sum();
    let mass_defect = (total - state.mass()).abs() / state.mass();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = assemble_derivative(state, spec, Component::Full)?;
    let decomposition_defect = if mesh.is_surface() {
        let tan = assemble_derivative(state, spec, Component::Tangential)?;
        let nor = assemble_derivative(state, spec, Component::Normal)?;
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let v = random_interior_direction(state, &mut rng)?;
            let (f, t, n) = (full.pair(&v), tan.pair(&v), nor.pair(&v));
            let scale = f.abs().max(t.abs() + n.abs());
            if scale > 0.0 {
                worst = worst.max((f - t - n).abs() / scale);
            }
        }
        Some(worst)
    } else {
        None
    };

    let rotated = state.with_rotated_frames(rng.random());
    let j0 = objective(state, &build_target(spec, state)?)?;
    let j1 = objective(&rotated, &build_target(spec, &rotated)?)?;
    let d1 = assemble_derivative(&rotated, spec, Component::Full)?;
    let dmax = full.max_norm();
    let cov = full
        .values
        .iter()
        .zip(&d1.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let frame_defect = relative(j0, j1).max(if dmax > 0.0 { cov / dmax } else { cov });

    Ok(AuditReport {
        seed,
        mass_defect,
        decomposition_defect,
        frame_defect,
        nullity: area_tangential_nullity(state, nullity_field),
    })
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale > 0.0 {
        (a - b).abs() / scale
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{uniform_gm, NodalField};
    use crate::mesh::generate;

    #[test]
    fn identity_state_has_no_defects() {
        let m = generate::icosphere(2, Point::new(0.5, 0.5, 0.5), 0.3).unwrap();
        let s = PreShapeState::new(m.clone(), uniform_gm(&m).unwrap()).unwrap();
        let r = audit(&s, &TargetSpec::analytic("1 + x").unwrap(), 10, 4).unwrap();
        assert!(r.mass_defect < 1e-12);
        assert!(r.decomposition_defect.unwrap() < 1e-10);
        assert!(r.frame_defect < 1e-12);
        assert!(r.nullity < 1e-2);
    }

    #[test]
    fn perturbed_open_surface_decomposes() {
        let m = generate::hemisphere_cap(6, 1.0).unwrap();
        let n = m.n_vertices();
        let g = NodalField::new((0..n).map(|i| 1.0 + 0.1 * (i % 5) as f64).collect());
        let s = PreShapeState::new(m, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_interior_direction(&s, &mut rng).unwrap();
        let s = s.displaced(&u, 0.01).unwrap();
        let r = audit(&s, &TargetSpec::analytic("2 + sin(3*x)*y").unwrap(), 20, 8).unwrap();
        assert!(r.decomposition_defect.unwrap() < 1e-10);
        assert!(r.frame_defect < 1e-12);
        assert!(r.mass_defect < 1e-12);
    }

    #[test]
    fn planar_nullity_is_rounding_only() {
        // interior fields on a flat domain integrate div V to zero exactly
        let m = generate::unit_square(6, 0.2, 5).unwrap();
        let s = PreShapeState::new(m.clone(), uniform_gm(&m).unwrap()).unwrap();
        assert!(area_tangential_nullity(&s, nullity_field) < 1e-14);
    }

    #[test]
    fn nullity_shrinks_at_second_order_on_refined_spheres() {
        let levels: Vec<f64> = (2..5)
            .map(|k| {
                let m = generate::icosphere(k, Point::new(0.5, 0.5, 0.5), 0.3).unwrap();
                let s = PreShapeState::new(m.clone(), uniform_gm(&m).unwrap()).unwrap();
                area_tangential_nullity(&s, nullity_field)
            })
            .collect();
        for w in levels.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "{levels:?}");
        }
    }
}
