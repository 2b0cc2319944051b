//! Analytic target shapes for fitting experiments.
//!
//! All shapes are exact signed distance fields built from Euclidean box
//! and sphere primitives (1-Lipschitz, and unions of such stay
//! 1-Lipschitz), are bitwise even in z, and sit well inside `[-1,1]³`.

use crate::triplane::Point3;
use crate::{Error, Result};

/// Half-width of the SDF band around the surface inside which texture
/// supervision applies.
pub const TEXTURE_BAND: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetShape {
    /// Centered sphere, radius 0.5.
    Sphere,
    /// Seat and back boards plus four legs, mirror-symmetric in z.
    CapsuleChair,
    /// Fuselage with two mirrored wings and a centered tail fin.
    Winged,
}

/// Exact distance to an axis-aligned box.
fn box_sdf(p: [f64; 3], center: [f64; 3], half: [f64; 3]) -> f64 {
    let q = [
        (p[0] - center[0]).abs() - half[0],
        (p[1] - center[1]).abs() - half[1],
        (p[2] - center[2]).abs() - half[2],
    ];
    let outside = (q[0].max(0.0).powi(2) + q[1].max(0.0).powi(2) + q[2].max(0.0).powi(2)).sqrt();
    outside + q[0].max(q[1]).max(q[2]).min(0.0)
}

impl TargetShape {
    pub const ALL: [TargetShape; 3] =
        [TargetShape::Sphere, TargetShape::CapsuleChair, TargetShape::Winged];

    pub fn name(self) -> &'static str {
        match self {
            TargetShape::Sphere => "sphere",
            TargetShape::CapsuleChair => "capsule-chair",
            TargetShape::Winged => "winged",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown shape {name:?}; expected sphere, capsule-chair or winged"
                ))
            })
    }

    /// Signed distance at `p`; negative inside.
    pub fn sdf(self, p: Point3) -> f64 {
        let p = [p.x, p.y, p.z];
        match self {
            TargetShape::Sphere => {
                (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.5
            }
            TargetShape::CapsuleChair => {
                // y is up; the chair faces +x; z legs/edges come in
                // mirrored pairs so the union is exactly z-even
                let seat = box_sdf(p, [0.0, 0.0, 0.0], [0.35, 0.06, 0.35]);
                let back = box_sdf(p, [-0.30, 0.36, 0.0], [0.06, 0.36, 0.35]);
                let leg_a = box_sdf(p, [0.28, -0.34, 0.28], [0.05, 0.28, 0.05]);
                let leg_b = box_sdf(p, [0.28, -0.34, -0.28], [0.05, 0.28, 0.05]);
                let leg_c = box_sdf(p, [-0.28, -0.34, 0.28], [0.05, 0.28, 0.05]);
                let leg_d = box_sdf(p, [-0.28, -0.34, -0.28], [0.05, 0.28, 0.05]);
                seat.min(back).min(leg_a).min(leg_b).min(leg_c).min(leg_d)
            }
            TargetShape::Winged => {
                let fuselage = box_sdf(p, [0.0, 0.0, 0.0], [0.55, 0.11, 0.11]);
                let wing_a = box_sdf(p, [0.08, 0.02, 0.38], [0.14, 0.03, 0.30]);
                let wing_b = box_sdf(p, [0.08, 0.02, -0.38], [0.14, 0.03, 0.30]);
                let tail = box_sdf(p, [-0.46, 0.20, 0.0], [0.08, 0.14, 0.03]);
                fuselage.min(wing_a).min(wing_b).min(tail)
            }
        }
    }
}

/// Analytic surface color used as texture supervision: smooth in x and
/// y, even in z, valued strictly inside (0,1).
pub fn target_color(p: Point3) -> [f64; 3] {
    [0.5 + 0.4 * p.x, 0.5 + 0.4 * p.y, 0.2 + 0.6 * p.z.abs()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_round_trip() {
        for shape in TargetShape::ALL {
            assert_eq!(TargetShape::from_name(shape.name()).unwrap(), shape);
        }
        assert!(TargetShape::from_name("torus").is_err());
    }

    #[test]
    fn sphere_values_are_exact() {
        let s = TargetShape::Sphere;
        assert_eq!(s.sdf(Point3::new(0.0, 0.0, 0.0)), -0.5);
        assert_eq!(s.sdf(Point3::new(0.5, 0.0, 0.0)), 0.0);
        assert!((s.sdf(Point3::new(0.0, 0.9, 0.0)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn all_shapes_bitwise_even_in_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        for shape in TargetShape::ALL {
            for _ in 0..2000 {
                let p = Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let a = shape.sdf(p);
                let b = shape.sdf(p.mirror_z());
                assert_eq!(a.to_bits(), b.to_bits(), "{} at {p:?}", shape.name());
            }
        }
    }

    #[test]
    fn shapes_have_an_inside_and_fit_the_domain() {
        // a point inside each shape, and positive sdf on the cube faces
        assert!(TargetShape::Sphere.sdf(Point3::new(0.0, 0.0, 0.0)) < 0.0);
        assert!(TargetShape::CapsuleChair.sdf(Point3::new(0.0, 0.0, 0.0)) < 0.0);
        assert!(TargetShape::Winged.sdf(Point3::new(0.0, 0.0, 0.0)) < 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        for shape in TargetShape::ALL {
            for _ in 0..500 {
                let mut p = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let axis = rng.random_range(0..3);
                p[axis] = if rng.random_range(0..2) == 0 { -1.0 } else { 1.0 };
                assert!(shape.sdf(Point3::new(p[0], p[1], p[2])) > 0.05);
            }
        }
    }

    #[test]
    fn sampled_lipschitz_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for shape in TargetShape::ALL {
            for _ in 0..2000 {
                let a = Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let b = Point3::new(
                    a.x + rng.random_range(-0.1..0.1),
                    a.y + rng.random_range(-0.1..0.1),
                    a.z + rng.random_range(-0.1..0.1),
                );
                let dist = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2))
                    .sqrt();
                if dist > 0.0 {
                    let ratio = (shape.sdf(a) - shape.sdf(b)).abs() / dist;
                    assert!(ratio <= 1.01, "{} ratio {ratio}", shape.name());
                }
            }
        }
    }

    #[test]
    fn target_color_is_bounded_and_even() {
        let mut rng = ChaCha8Rng::seed_from_u64(84);
        for _ in 0..1000 {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let c = target_color(p);
            assert!(c.iter().all(|v| (0.0..1.0).contains(v)), "{c:?}");
            let m = target_color(p.mirror_z());
            for k in 0..3 {
                assert_eq!(c[k].to_bits(), m[k].to_bits());
            }
        }
    }
}
