//! Ground-plane polar geometry.
//!
//! Every position is projected onto the ground plane and expressed as
//! `(r, psi)` around the cell center, which is also where the base station
//! sits. Heights only enter through the link distances in [`crate::comm`].

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, Error, Result};

/// A ground-plane position in polar coordinates. The angle is kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPos {
    r: f64,
    psi: f64,
}

impl PolarPos {
    pub const ORIGIN: PolarPos = PolarPos { r: 0.0, psi: 0.0 };

    pub fn new(r: f64, psi: f64) -> Result<Self> {
        let r = check_non_negative("r", r)?;
        let psi = normalize_angle(psi)?;
        Ok(Self { r, psi })
    }

    #[inline]
    pub fn r(&self) -> f64 {
        self.r
    }

    #[inline]
    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// Rotates the position by `delta` radians around the center.
    pub fn rotated(&self, delta: f64) -> Result<Self> {
        Self::new(self.r, self.psi + delta)
    }

    /// Reflects the position across the x-axis (`psi -> 2π - psi`).
    pub fn mirrored(&self) -> Self {
        Self {
            r: self.r,
            psi: wrap(-self.psi),
        }
    }
}

#[inline]
fn wrap(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Maps any finite angle onto `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument {
            name: "theta",
            requirement: "finite",
            value: theta,
        });
    }
    Ok(wrap(theta))
}

/// Straight-line ground distance between two points (law of cosines).
#[inline]
pub fn chord_distance(p1: PolarPos, p2: PolarPos) -> f64 {
    chord(p1.r, p2.r, p1.psi - p2.psi)
}

#[inline]
pub(crate) fn chord(r1: f64, r2: f64, dpsi: f64) -> f64 {
    (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * dpsi.cos())
        .max(0.0)
        .sqrt()
}

/// Maps a pair of unit uniforms onto the uniform-in-disc request law
/// (radial density `2r/a²`, uniform angle) by inverse CDF.
pub fn request_from_uniforms(u_radius: f64, u_angle: f64, a: f64) -> PolarPos {
    PolarPos {
        r: a * u_radius.clamp(0.0, 1.0).sqrt(),
        psi: wrap(TAU * u_angle),
    }
}

/// Draws a request location uniformly over the disc of radius `a`.
pub fn sample_request<R: Rng + ?Sized>(rng: &mut R, a: f64) -> PolarPos {
    let u_radius: f64 = rng.random();
    let u_angle: f64 = rng.random();
    request_from_uniforms(u_radius, u_angle, a)
}

/// A request seen from the UAV: both radii plus the ground node's angle
/// measured from the UAV's own angular coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    pub r_u: f64,
    pub r_g: f64,
    pub theta_g: f64,
}

impl RelativeState {
    /// The ground node as a position in the frame where the UAV sits at angle 0.
    pub fn node(&self) -> PolarPos {
        PolarPos {
            r: self.r_g,
            psi: wrap(self.theta_g),
        }
    }
}

pub fn relative_state(q_u: PolarPos, q_g: PolarPos) -> RelativeState {
    RelativeState {
        r_u: q_u.r,
        r_g: q_g.r,
        theta_g: wrap(q_g.psi - q_u.psi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn p(r: f64, psi: f64) -> PolarPos {
        PolarPos::new(r, psi).unwrap()
    }

    #[test]
    fn chord_examples() {
        assert_eq!(chord_distance(p(5.0, 0.3), p(5.0, 0.3)), 0.0);
        assert_abs_diff_eq!(
            chord_distance(p(3.0, 0.0), p(4.0, PI / 2.0)),
            5.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            chord_distance(p(2.0, 0.0), p(3.0, PI)),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            normalize_angle(-PI / 2.0).unwrap(),
            3.0 * PI / 2.0,
            epsilon = 1e-12
        );
        assert_eq!(normalize_angle(4.0 * PI).unwrap(), 0.0);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
        assert_eq!(normalize_angle(-1e-300).unwrap(), 0.0);
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(PolarPos::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn inverse_cdf_endpoints() {
        assert_eq!(request_from_uniforms(0.0, 0.3, 1600.0).r(), 0.0);
        assert_eq!(request_from_uniforms(1.0, 0.3, 1600.0).r(), 1600.0);
    }

    #[test]
    fn relative_state_examples() {
        let s = relative_state(p(5.0, 1.0), p(7.0, 1.0));
        assert_eq!((s.r_u, s.r_g), (5.0, 7.0));
        assert_abs_diff_eq!(s.theta_g, 0.0, epsilon = 1e-12);
        let s = relative_state(p(5.0, 0.0), p(7.0, 3.0 * PI / 2.0));
        assert_abs_diff_eq!(s.theta_g, 3.0 * PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sampled_radius_mean_is_two_thirds() {
        let a = 1600.0;
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let r = sample_request(&mut rng, a).r();
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - 2.0 * a / 3.0).abs() < 3.0 * se,
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn sampled_radius_passes_ks_at_one_percent() {
        let a = 1600.0;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut radii: Vec<f64> = (0..n).map(|_| sample_request(&mut rng, a).r()).collect();
        radii.sort_by(f64::total_cmp);
        let d = radii
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cdf = (r / a).powi(2);
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (cdf - lo).abs().max((hi - cdf).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic Kolmogorov critical value at alpha = 0.01.
        let critical = 1.6276 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    fn pos() -> impl Strategy<Value = PolarPos> {
        (0.0..2000.0f64, -10.0..10.0f64).prop_map(|(r, psi)| p(r, psi))
    }

    proptest! {
        #[test]
        fn chord_is_symmetric(a in pos(), b in pos()) {
            prop_assert_eq!(chord_distance(a, b), chord_distance(b, a));
        }

        #[test]
        fn chord_triangle_inequality(a in pos(), b in pos(), c in pos()) {
            let slack = 1e-9 * (a.r() + b.r() + c.r() + 1.0);
            prop_assert!(chord_distance(a, c) <= chord_distance(a, b) + chord_distance(b, c) + slack);
        }

        #[test]
        fn chord_rotation_invariant(a in pos(), b in pos(), delta in -10.0..10.0f64) {
            let d0 = chord_distance(a, b);
            let d1 = chord_distance(a.rotated(delta).unwrap(), b.rotated(delta).unwrap());
            prop_assert!((d0 - d1).abs() < 1e-8 * (1.0 + d0));
        }

        #[test]
        fn relative_state_rotation_invariant(u in pos(), g in pos(), delta in -10.0..10.0f64) {
            let s0 = relative_state(u, g);
            let s1 = relative_state(u.rotated(delta).unwrap(), g.rotated(delta).unwrap());
            prop_assert_eq!(s0.r_u, s1.r_u);
            prop_assert_eq!(s0.r_g, s1.r_g);
            let d = (s0.theta_g - s1.theta_g).abs();
            prop_assert!(d < 1e-9 || (TAU - d) < 1e-9);
        }

        #[test]
        fn normalized_angle_in_range(theta in -1e6..1e6f64) {
            let t = normalize_angle(theta).unwrap();
            prop_assert!((0.0..TAU).contains(&t));
            let k = ((theta - t) / TAU).round();
            prop_assert!((theta - t - k * TAU).abs() < 1e-6);
        }
    }
}
