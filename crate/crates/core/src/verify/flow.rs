//! Explicit flow along the minimal-surface ascent direction.

use crate::error::{Error, Result};
use crate::fields::NodalField;
use crate::mesh::SimplicialMesh;
use crate::preshape::{minimal_surface_descent_direction, vertex_areas, PreShapeState};

#[derive(Clone, Debug)]
pub struct FlowReport {
    /// Surface area before the first step and after each accepted step.
    pub areas: Vec<f64>,
    /// Step size used for each accepted step.
    pub steps: Vec<f64>,
    pub state: PreShapeState,
}

impl FlowReport {
    /// First step count after which the area is within `rel` of `target`.
    pub fn steps_to_reach(&self, target: f64, rel: f64) -> Option<usize> {
        self.areas
            .iter()
            .position(|a| (a - target).abs() <= rel * target)
    }
}

/// Moves the free vertices of `mesh` with velocity `m_i / A_i`, where `m` is
/// the minimal-surface covector of unit node density and `A_i` the vertex
/// areas. A step that would invert a cell or fail to reduce the area is
/// retried with half the step size.
pub fn minimal_surface_flow(
    mesh: &SimplicialMesh,
    dt: f64,
    max_steps: usize,
) -> Result<FlowReport> {
    if !(dt > 0.0) {
        return Err(Error::Config("flow step must be positive".into()));
    }
    let mut state = PreShapeState::new(mesh.clone(), NodalField::constant(mesh.n_vertices(), 1.0))?;
    let mut areas = vec![state.current_volume()];
    let mut steps = Vec::new();
    let mut dt = dt;
    while steps.len() < max_steps {
        let m = minimal_surface_descent_direction(&state)?;
        let a = vertex_areas(&state);
        let vel: Vec<_> = m.values.iter().zip(&a).map(|(m, a)| m / *a).collect();
        let mut accepted = None;
        for _ in 0..30 {
            match state.displaced(&vel, dt) {
                Ok(next) if next.current_volume() < state.current_volume() => {
                    accepted = Some(next);
                    break;
                }
                Ok(_)
                | Err(
                    Error::InvertedCell { .. }
                    | Error::DegenerateCell { .. }
                    | Error::DegenerateNormal(_),
                ) => dt *= 0.5,
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some(next) => {
                state = next;
                areas.push(state.current_volume());
                steps.push(dt);
            }
            None => break,
        }
    }
    Ok(FlowReport {
        areas,
        steps,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use std::f64::consts::PI;

    #[test]
    fn cap_flattens_towards_the_disk() {
        let m = generate::hemisphere_cap(8, 1.0).unwrap();
        let r = minimal_surface_flow(&m, 0.01, 400).unwrap();
        assert!(r.areas.windows(2).all(|w| w[1] < w[0]));
        let last = *r.areas.last().unwrap();
        assert!((last - PI).abs() < 0.05 * PI, "{last}");
    }

    #[test]
    fn flat_disk_does_not_move() {
        let m = generate::disk(5, 1.0).unwrap();
        let r = minimal_surface_flow(&m, 0.01, 5).unwrap();
        // area cannot decrease, so no step is accepted
        assert_eq!(r.areas.len(), 1);
    }
}
