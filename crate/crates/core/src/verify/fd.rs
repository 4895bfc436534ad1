//! Central-difference check of the assembled derivative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{build_target, TargetSpec};
use crate::mesh::Point;
use crate::metric::l2_norm_at;
use crate::preshape::{
    assemble_derivative, objective, Component, DerivativeCovector, PreShapeState,
};

#[derive(Clone, Debug)]
pub struct FdDirection {
    /// Assembled covector paired with the direction.
    pub pairing: f64,
    /// `|fd(h) - pairing|` for each step.
    pub abs_errors: Vec<f64>,
    /// Absolute errors divided by `|pairing|`.
    pub rel_errors: Vec<f64>,
    pub min_rel_error: f64,
    /// Log-log slope of the error over the truncation-dominated steps.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub seed: u64,
    pub steps: Vec<f64>,
    pub directions: Vec<FdDirection>,
}

impl FdReport {
    pub fn worst_min_rel_error(&self) -> f64 {
        self.directions
            .iter()
            .map(|d| d.min_rel_error)
            .fold(0.0, f64::max)
    }

    /// Smallest and largest fitted slope; `None` if any direction had too
    /// few truncation-dominated steps for a fit.
    pub fn slope_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for d in &self.directions {
            let s = d.slope?;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        Some((lo, hi))
    }
}

/// Steps `scale * 2^-k` for `k = 0..count` with `scale` a fraction of the
/// mean current edge length.
pub fn default_steps(state: &PreShapeState, count: usize) -> Vec<f64> {
    let mesh = state.reference();
    let p = state.positions();
    let edges = mesh.edges();
    let mean = edges
        .iter()
        .map(|&(a, b)| (p[a] - p[b]).norm())
        .sum::<f64>()
        / edges.len() as f64;
    (0..count)
        .map(|k| 0.02 * mean * 0.5f64.powi(k as i32))
        .collect()
}

/// Random P1 field, zero on the boundary, with unit L2 norm on the current
/// configuration.
pub fn random_interior_direction(state: &PreShapeState, rng: &mut impl Rng) -> Result<Vec<Point>> {
    let mesh = state.reference();
    let planar = mesh.dim_ambient() == 2;
    let v: Vec<Point> = (0..mesh.n_vertices())
        .map(|i| {
            if mesh.is_boundary(i) {
                return Point::zeros();
            }
            let z = if planar {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            };
            Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), z)
        })
        .collect();
    let norm = l2_norm_at(&v, mesh, state.positions())?;
    if !(norm > 0.0) {
        return Err(Error::Config(
            "mesh has no interior vertices to perturb".into(),
        ));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// Objective with the target rebuilt on the given state.
pub fn objective_with_target(state: &PreShapeState, spec: &TargetSpec) -> Result<f64> {
    objective(state, &build_target(spec, state)?)
}

/// Compares the assembled full derivative with central differences of the
/// objective along `count` random interior directions. Direction `k` uses
/// the RNG seeded with `seed + k`.
pub fn fd_check(
    state: &PreShapeState,
    spec: &TargetSpec,
    count: usize,
    steps: &[f64],
    seed: u64,
) -> Result<FdReport> {
    let d = assemble_derivative(state, spec, Component::Full)?;
    fd_check_covector(state, spec, &d, count, steps, seed)
}

/// As [`fd_check`] but against a caller-supplied covector.
pub fn fd_check_covector(
    state: &PreShapeState,
    spec: &TargetSpec,
    d: &DerivativeCovector,
    count: usize,
    steps: &[f64],
    seed: u64,
) -> Result<FdReport> {
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Config(
            "finite-difference steps must be positive".into(),
        ));
    }
    check_len(d, state)?;
    let directions = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
            let v = random_interior_direction(state, &mut rng)?;
            let pairing = d.pair(&v);
            let mut abs_errors = Vec::with_capacity(steps.len());
            for &h in steps {
                let jp = objective_with_target(&state.displaced(&v, h)?, spec)?;
                let jm = objective_with_target(&state.displaced(&v, -h)?, spec)?;
                abs_errors.push(((jp - jm) / (2.0 * h) - pairing).abs());
            }
            let rel_errors: Vec<f64> = abs_errors.iter().map(|e| e / pairing.abs()).collect();
            let min_rel_error = rel_errors.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(FdDirection {
                pairing,
                slope: truncation_slope(steps, &abs_errors),
                abs_errors,
                rel_errors,
                min_rel_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FdReport {
        seed,
        steps: steps.to_vec(),
        directions,
    })
}

fn check_len(d: &DerivativeCovector, state: &PreShapeState) -> Result<()> {
    if d.len() != state.positions().len() {
        return Err(Error::LengthMismatch {
            expected: state.positions().len(),
            actual: d.len(),
        });
    }
    Ok(())
}

/// Least-squares slope of `log e` against `log h` over the longest run of
/// consecutive steps (largest first) on which the error keeps dropping by
/// more than the first-order factor, i.e. after any pre-asymptotic steps and
/// before rounding takes over.
pub fn truncation_slope(steps: &[f64], errors: &[f64]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..steps.len()).collect();
    idx.sort_by(|&a, &b| steps[b].total_cmp(&steps[a]));
    let mut run: Vec<usize> = Vec::new();
    let mut cur = vec![idx[0]];
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ratio = steps[a] / steps[b];
        if errors[b] > 0.0 && errors[a] / errors[b] > ratio * 1.2 {
            cur.push(b);
        } else {
            cur = vec![b];
        }
        if cur.len() > run.len() {
            run = cur.clone();
        }
    }
    if run.len() < 3 {
        return None;
    }
    let pts: Vec<(f64, f64)> = run
        .iter()
        .map(|&i| (steps[i].ln(), errors[i].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::uniform_gm;
    use crate::mesh::generate;

    fn jittered_state(seed: u64) -> PreShapeState {
        let m = generate::unit_square(4, 0.0, 0).unwrap();
        let s = PreShapeState::new(m.clone(), uniform_gm(&m).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_interior_direction(&s, &mut rng).unwrap();
        s.displaced(&u, 0.03).unwrap()
    }

    #[test]
    fn slope_fit_recovers_quadratic_then_stops_at_rounding() {
        let steps: Vec<f64> = (0..10).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        let errors: Vec<f64> = steps.iter().map(|h| (3.0 * h * h).max(1e-9)).collect();
        let s = truncation_slope(&steps, &errors).unwrap();
        assert!((s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn slope_fit_skips_a_preasymptotic_start() {
        let steps: Vec<f64> = (0..10).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        let mut errors: Vec<f64> = steps.iter().map(|h| (3.0 * h * h).max(1e-9)).collect();
        errors[0] = errors[1] * 1.1;
        let s = truncation_slope(&steps, &errors).unwrap();
        assert!((s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn thirty_two_cell_square_passes() {
        let s = jittered_state(3);
        assert_eq!(s.reference().n_cells(), 32);
        let steps = default_steps(&s, 10);
        let r = fd_check(&s, &TargetSpec::Uniform, 20, &steps, 11).unwrap();
        assert!(
            r.worst_min_rel_error() < 1e-5,
            "{}",
            r.worst_min_rel_error()
        );
        let (lo, hi) = r.slope_range().unwrap();
        assert!(lo >= 1.8 && hi <= 2.2, "{lo} {hi}");
    }

    #[test]
    fn exact_solution_has_vanishing_quotients() {
        let m = generate::unit_square(4, 0.0, 0).unwrap();
        let s = PreShapeState::new(m.clone(), uniform_gm(&m).unwrap()).unwrap();
        let r = fd_check(&s, &TargetSpec::Uniform, 5, &[1e-6], 0).unwrap();
        for d in &r.directions {
            assert!(d.pairing.abs() < 1e-9);
            assert!(d.abs_errors[0] < 1e-9, "{:?}", d.abs_errors);
        }
    }

    #[test]
    fn flipped_covector_is_caught() {
        let s = jittered_state(5);
        let mut d = assemble_derivative(&s, &TargetSpec::Uniform, Component::Full).unwrap();
        for v in &mut d.values {
            *v = -*v;
        }
        let r =
            fd_check_covector(&s, &TargetSpec::Uniform, &d, 3, &default_steps(&s, 6), 0).unwrap();
        assert!(r.worst_min_rel_error() > 1.0);
    }

    #[test]
    fn directions_are_unit_and_vanish_on_the_boundary() {
        let s = jittered_state(1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_interior_direction(&s, &mut rng).unwrap();
        let n = l2_norm_at(&v, s.reference(), s.positions()).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        for &b in s.reference().boundary_vertices() {
            assert_eq!(v[b], Point::zeros());
        }
    }
}
