//! Closed-form derivatives of `1/2 int_{S^1} |phi - phi_target|^2 ds` at the
//! identity embedding of the unit circle, against a P1 assembly on an
//! inscribed polygon.
//!
//! At the identity `phi - phi_target` is `(1 - alpha) n` for a rescaling,
//! `(1 - cos a) n - sin a tau` for a rotation and `-z` for a translation, so
//! the pairings carry those signs.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CircleOracle {
    Rescale(f64),
    Rotate(f64),
    Translate(Vec2),
}

impl CircleOracle {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CircleOracle::Rescale(a) => a > 0.0 && a.is_finite(),
            CircleOracle::Rotate(a) => (0.0..2.0 * PI).contains(&a),
            CircleOracle::Translate(z) => z.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid circle oracle {self:?}")))
        }
    }

    /// Target position of the circle point `x`.
    pub fn target(&self, x: Vec2) -> Vec2 {
        match *self {
            CircleOracle::Rescale(a) => [a * x[0], a * x[1]],
            CircleOracle::Rotate(a) => {
                let (s, c) = a.sin_cos();
                [c * x[0] - s * x[1], s * x[0] + c * x[1]]
            }
            CircleOracle::Translate(z) => [x[0] + z[0], x[1] + z[1]],
        }
    }

    /// Normal and tangential coefficients of the derivative integrand at the
    /// circle point with normal `n` and tangent `t`.
    fn coefficients(&self, n: Vec2, t: Vec2) -> (f64, f64) {
        match *self {
            CircleOracle::Rescale(a) => (1.0 - a, 0.0),
            CircleOracle::Rotate(a) => (1.0 - a.cos(), -a.sin()),
            CircleOracle::Translate(z) => (-dot(n, z), -dot(t, z)),
        }
    }
}

/// Normal and tangential parts of a derivative paired with a test field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pairing {
    pub normal: f64,
    pub tangential: f64,
}

impl Pairing {
    pub fn total(&self) -> f64 {
        self.normal + self.tangential
    }
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn circle_point(k: usize, segments: usize) -> Vec2 {
    let th = 2.0 * PI * k as f64 / segments as f64;
    [th.cos(), th.sin()]
}

fn tangent(x: Vec2) -> Vec2 {
    [-x[1], x[0]]
}

/// Trapezoidal quadrature of the closed-form pairings with exact normals
/// and tangents.
pub fn circle_derivative_closed_form(
    oracle: CircleOracle,
    segments: usize,
    v: impl Fn(Vec2) -> Vec2,
) -> Result<Pairing> {
    oracle.validate()?;
    check_segments(segments)?;
    let w = 2.0 * PI / segments as f64;
    let mut out = Pairing {
        normal: 0.0,
        tangential: 0.0,
    };
    for k in 0..segments {
        let n = circle_point(k, segments);
        let t = tangent(n);
        let (cn, ct) = oracle.coefficients(n, t);
        let vk = v(n);
        out.normal += w * cn * dot(n, vk);
        out.tangential += w * ct * dot(t, vk);
    }
    Ok(out)
}

/// Covector of the functional on the inscribed polygon with `segments`
/// edges: `d_i = int (phi - phi_target) lambda_i ds` with both maps
/// interpolated linearly, i.e. the consistent mass matrix applied to the
/// nodal differences.
pub fn circle_covector(oracle: CircleOracle, segments: usize) -> Result<Vec<Vec2>> {
    oracle.validate()?;
    check_segments(segments)?;
    let x: Vec<Vec2> = (0..segments).map(|k| circle_point(k, segments)).collect();
    let diff: Vec<Vec2> = x
        .iter()
        .map(|&p| {
            let t = oracle.target(p);
            [p[0] - t[0], p[1] - t[1]]
        })
        .collect();
    let mut d = vec![[0.0; 2]; segments];
    for i in 0..segments {
        let j = (i + 1) % segments;
        let len = ((x[j][0] - x[i][0]).powi(2) + (x[j][1] - x[i][1]).powi(2)).sqrt();
        for c in 0..2 {
            d[i][c] += len / 6.0 * (2.0 * diff[i][c] + diff[j][c]);
            d[j][c] += len / 6.0 * (diff[i][c] + 2.0 * diff[j][c]);
        }
    }
    Ok(d)
}

/// Assembled covector split at the polygon vertices into normal and
/// tangential parts and paired with `v` sampled at the vertices. The vertex
/// normals of a regular inscribed polygon coincide with the exact ones.
pub fn circle_derivative_assembled(
    oracle: CircleOracle,
    segments: usize,
    v: impl Fn(Vec2) -> Vec2,
) -> Result<Pairing> {
    let d = circle_covector(oracle, segments)?;
    let mut out = Pairing {
        normal: 0.0,
        tangential: 0.0,
    };
    for (k, dk) in d.iter().enumerate() {
        let n = circle_point(k, segments);
        let t = tangent(n);
        let vk = v(n);
        out.normal += dot(*dk, n) * dot(vk, n);
        out.tangential += dot(*dk, t) * dot(vk, t);
    }
    Ok(out)
}

fn check_segments(segments: usize) -> Result<()> {
    if segments < 3 {
        return Err(Error::Config(format!(
            "a polygon needs at least 3 segments, got {segments}"
        )));
    }
    Ok(())
}

/// Observed convergence order between two segment counts from the pairing
/// errors `e_coarse`, `e_fine`.
pub fn observed_order(e_coarse: f64, e_fine: f64, coarse: usize, fine: usize) -> f64 {
    (e_coarse / e_fine).ln() / (fine as f64 / coarse as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(x: Vec2) -> Vec2 {
        [
            1.0 + 0.3 * x[1] + x[0] * x[0],
            0.5 - 0.2 * x[0] + x[0] * x[1],
        ]
    }

    #[test]
    fn identity_rescale_vanishes() {
        let c = circle_derivative_closed_form(CircleOracle::Rescale(1.0), 64, field).unwrap();
        let a = circle_derivative_assembled(CircleOracle::Rescale(1.0), 64, field).unwrap();
        assert_eq!((c.normal, c.tangential), (0.0, 0.0));
        assert_eq!((a.normal, a.tangential), (0.0, 0.0));
    }

    #[test]
    fn half_turn_has_no_tangential_part() {
        let a = circle_derivative_assembled(CircleOracle::Rotate(PI), 256, field).unwrap();
        let c = circle_derivative_closed_form(CircleOracle::Rotate(PI), 256, field).unwrap();
        assert!(c.tangential.abs() < 1e-13);
        assert!(a.tangential.abs() < 1e-12);
        // 2 int <n, V> ds is twice the disk integral of div V = 3x, which is 0
        assert!(c.normal.abs() < 1e-12);
    }

    #[test]
    fn translation_against_normal_component_of_z() {
        // V = <n, z> n with z = (1, 0): pairing is -int cos^2 = -pi
        let z = [1.0, 0.0];
        let v = |x: Vec2| [x[0] * x[0], x[0] * x[1]];
        let c = circle_derivative_closed_form(CircleOracle::Translate(z), 512, v).unwrap();
        assert!((c.normal + PI).abs() < 1e-12);
        assert!(c.tangential.abs() < 1e-12);
    }

    #[test]
    fn assembly_matches_direct_integral_of_the_polygon_functional() {
        // d . V equals the derivative of 1/2 sum over segments of the exact
        // P1 integral, checked by central differences on the nodal positions
        let oracle = CircleOracle::Rotate(0.7);
        let n = 16;
        let d = circle_covector(oracle, n).unwrap();
        let x: Vec<Vec2> = (0..n).map(|k| circle_point(k, n)).collect();
        let targets: Vec<Vec2> = x.iter().map(|&p| oracle.target(p)).collect();
        let lens: Vec<f64> = (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                ((x[j][0] - x[i][0]).powi(2) + (x[j][1] - x[i][1]).powi(2)).sqrt()
            })
            .collect();
        let j = |p: &[Vec2]| -> f64 {
            (0..n)
                .map(|i| {
                    let k = (i + 1) % n;
                    let a = [p[i][0] - targets[i][0], p[i][1] - targets[i][1]];
                    let b = [p[k][0] - targets[k][0], p[k][1] - targets[k][1]];
                    0.5 * lens[i] / 3.0 * (dot(a, a) + dot(a, b) + dot(b, b))
                })
                .sum()
        };
        let v: Vec<Vec2> = x.iter().map(|&p| field(p)).collect();
        let h = 1e-5;
        let shift = |s: f64| -> Vec<Vec2> {
            x.iter()
                .zip(&v)
                .map(|(p, v)| [p[0] + s * v[0], p[1] + s * v[1]])
                .collect()
        };
        let fd = (j(&shift(h)) - j(&shift(-h))) / (2.0 * h);
        let pair: f64 = d.iter().zip(&v).map(|(d, v)| dot(*d, *v)).sum();
        assert!((fd - pair).abs() < 1e-9 * pair.abs().max(1.0));
    }

    #[test]
    fn invalid_oracles_are_rejected() {
        assert!(CircleOracle::Rescale(0.0).validate().is_err());
        assert!(CircleOracle::Rotate(7.0).validate().is_err());
        assert!(CircleOracle::Translate([f64::NAN, 0.0]).validate().is_err());
        assert!(circle_covector(CircleOracle::Rescale(2.0), 2).is_err());
    }
}
