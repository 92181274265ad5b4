//! Analytic ray intersection for the solid primitives the renderer understands.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Swept sphere along the segment `a`–`b`.
    Capsule {
        a: Vec3,
        b: Vec3,
        radius: f64,
    },
    /// Axis-aligned box in the frame the rays are expressed in.
    Cuboid {
        min: Vec3,
        max: Vec3,
    },
    /// Cylinder with a vertical (z) axis.
    Cylinder {
        center_xy: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
    },
}

impl Primitive {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Primitive::Sphere { center, radius }
    }

    pub fn capsule(a: Vec3, b: Vec3, radius: f64) -> Self {
        Primitive::Capsule { a, b, radius }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        let ok = match self {
            Primitive::Sphere { center, radius } => finite(center) && positive(*radius),
            Primitive::Capsule { a, b, radius } => {
                finite(a) && finite(b) && positive(*radius) && (b - a).norm() > 1e-9
            }
            Primitive::Cuboid { min, max } => {
                finite(min) && finite(max) && (0..3).all(|i| max[i] > min[i])
            }
            Primitive::Cylinder {
                center_xy,
                radius,
                z_min,
                z_max,
            } => {
                center_xy.iter().all(|c| c.is_finite())
                    && positive(*radius)
                    && z_min.is_finite()
                    && z_max.is_finite()
                    && z_max > z_min
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("degenerate primitive {self:?}")))
        }
    }

    /// Center and radius of a sphere enclosing the primitive.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        match *self {
            Primitive::Sphere { center, radius } => (center, radius),
            Primitive::Capsule { a, b, radius } => ((a + b) * 0.5, 0.5 * (b - a).norm() + radius),
            Primitive::Cuboid { min, max } => ((min + max) * 0.5, 0.5 * (max - min).norm()),
            Primitive::Cylinder {
                center_xy,
                radius,
                z_min,
                z_max,
            } => {
                let half = 0.5 * (z_max - z_min);
                (
                    Vec3::new(center_xy[0], center_xy[1], z_min + half),
                    radius.hypot(half),
                )
            }
        }
    }

    /// Distance along the unit direction `dir` to the nearest surface point
    /// strictly in front of `origin`.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match *self {
            Primitive::Sphere { center, radius } => ray_sphere(origin, dir, &center, radius),
            Primitive::Capsule { a, b, radius } => ray_capsule(origin, dir, &a, &b, radius),
            Primitive::Cuboid { min, max } => ray_cuboid(origin, dir, &min, &max),
            Primitive::Cylinder {
                center_xy,
                radius,
                z_min,
                z_max,
            } => ray_vertical_cylinder(origin, dir, center_xy, radius, z_min, z_max),
        }
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        match *self {
            Primitive::Sphere { center, radius } => Primitive::Sphere {
                center: center + offset,
                radius,
            },
            Primitive::Capsule { a, b, radius } => Primitive::Capsule {
                a: a + offset,
                b: b + offset,
                radius,
            },
            Primitive::Cuboid { min, max } => Primitive::Cuboid {
                min: min + offset,
                max: max + offset,
            },
            Primitive::Cylinder {
                center_xy,
                radius,
                z_min,
                z_max,
            } => Primitive::Cylinder {
                center_xy: [center_xy[0] + offset.x, center_xy[1] + offset.y],
                radius,
                z_min: z_min + offset.z,
                z_max: z_max + offset.z,
            },
        }
    }
}

#[inline]
fn nearest_positive(t0: f64, t1: f64) -> Option<f64> {
    if t0 > 0.0 {
        Some(t0)
    } else if t1 > 0.0 {
        Some(t1)
    } else {
        None
    }
}

#[inline]
fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

pub fn ray_sphere(origin: &Vec3, dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    if c > 0.0 && b > 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    nearest_positive(-b - s, -b + s)
}

fn ray_capsule(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, radius: f64) -> Option<f64> {
    let axis = b - a;
    let length = axis.norm();
    let u = axis / length;
    let oa = origin - a;

    // The solid capsule is the union of the finite cylinder and the two end
    // balls; cylinder caps lie inside the balls, so only the side is tested.
    let w = oa - u * oa.dot(&u);
    let e = dir - u * dir.dot(&u);
    let qa = e.norm_squared();
    let mut side = None;
    if qa > 1e-14 {
        let qb = w.dot(&e);
        let qc = w.norm_squared() - radius * radius;
        let disc = qb * qb - qa * qc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-qb - s) / qa, (-qb + s) / qa] {
                if t > 0.0 {
                    let h = (oa + dir * t).dot(&u);
                    if (0.0..=length).contains(&h) {
                        side = Some(t);
                        break;
                    }
                }
            }
        }
    }
    let caps = min_opt(
        ray_sphere(origin, dir, a, radius),
        ray_sphere(origin, dir, b, radius),
    );
    min_opt(side, caps)
}

fn ray_cuboid(origin: &Vec3, dir: &Vec3, min: &Vec3, max: &Vec3) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        if dir[i].abs() < 1e-15 {
            if origin[i] < min[i] || origin[i] > max[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[i];
        let (mut t0, mut t1) = ((min[i] - origin[i]) * inv, (max[i] - origin[i]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    nearest_positive(t_near, t_far)
}

fn ray_vertical_cylinder(
    origin: &Vec3,
    dir: &Vec3,
    center_xy: [f64; 2],
    radius: f64,
    z_min: f64,
    z_max: f64,
) -> Option<f64> {
    let ox = origin.x - center_xy[0];
    let oy = origin.y - center_xy[1];
    let mut best = None;

    let qa = dir.x * dir.x + dir.y * dir.y;
    if qa > 1e-14 {
        let qb = ox * dir.x + oy * dir.y;
        let qc = ox * ox + oy * oy - radius * radius;
        let disc = qb * qb - qa * qc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-qb - s) / qa, (-qb + s) / qa] {
                if t > 0.0 {
                    let z = origin.z + t * dir.z;
                    if (z_min..=z_max).contains(&z) {
                        best = Some(t);
                        break;
                    }
                }
            }
        }
    }
    if dir.z.abs() > 1e-15 {
        for plane in [z_min, z_max] {
            let t = (plane - origin.z) / dir.z;
            if t > 0.0 {
                let x = ox + t * dir.x;
                let y = oy + t * dir.y;
                if x * x + y * y <= radius * radius {
                    best = min_opt(best, Some(t));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn sphere_front_and_back() {
        let s = Primitive::sphere(Vec3::new(4.0, 0.0, 0.0), 0.2);
        assert_relative_eq!(s.ray_hit(&Vec3::zeros(), &Vec3::x()).unwrap(), 3.8, epsilon = 1e-12);
        assert!(s.ray_hit(&Vec3::zeros(), &-Vec3::x()).is_none());
        // Origin inside: exit distance.
        let inside = Primitive::sphere(Vec3::zeros(), 1.0);
        assert_relative_eq!(inside.ray_hit(&Vec3::zeros(), &Vec3::y()).unwrap(), 1.0);
    }

    #[test]
    fn capsule_side_and_caps() {
        let c = Primitive::capsule(Vec3::new(3.0, 0.0, -1.0), Vec3::new(3.0, 0.0, 1.0), 0.5);
        assert_relative_eq!(c.ray_hit(&Vec3::zeros(), &Vec3::x()).unwrap(), 2.5);
        // Ray along the axis from below hits the bottom hemisphere.
        let up = c.ray_hit(&Vec3::new(3.0, 0.0, -5.0), &Vec3::z()).unwrap();
        assert_relative_eq!(up, 3.5, epsilon = 1e-12);
        // Grazing above the top cap misses.
        assert!(c
            .ray_hit(&Vec3::new(0.0, 0.0, 1.6), &Vec3::x())
            .is_none());
    }

    #[test]
    fn capsule_agrees_with_sampled_distance_field() {
        // March along the ray with the capsule's signed distance; the first
        // crossing must coincide with the analytic hit.
        let (a, b, r) = (Vec3::new(2.0, 0.3, -0.4), Vec3::new(2.5, -0.2, 0.9), 0.25);
        let c = Primitive::capsule(a, b, r);
        let sdf = |p: Vec3| {
            let ab = b - a;
            let h = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (p - a - ab * h).norm() - r
        };
        for k in 0..200 {
            let ang = -0.6 + 1.2 * k as f64 / 199.0;
            let dir = Vec3::new(ang.cos(), 0.0, ang.sin()).normalize();
            let analytic = c.ray_hit(&Vec3::zeros(), &dir);
            let mut t = 0.0;
            let mut marched = None;
            while t < 10.0 {
                let d = sdf(dir * t);
                if d < 1e-9 {
                    marched = Some(t);
                    break;
                }
                t += d.max(1e-6);
            }
            match (analytic, marched) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-6, "{x} vs {y}"),
                (None, None) => {}
                other => panic!("disagreement at angle {ang}: {other:?}"),
            }
        }
    }

    #[test]
    fn cuboid_and_cylinder_hits() {
        let b = Primitive::Cuboid {
            min: Vec3::new(2.0, -1.0, -1.0),
            max: Vec3::new(3.0, 1.0, 1.0),
        };
        assert_relative_eq!(b.ray_hit(&Vec3::zeros(), &Vec3::x()).unwrap(), 2.0);
        assert!(b.ray_hit(&Vec3::zeros(), &Vec3::y()).is_none());

        let cyl = Primitive::Cylinder {
            center_xy: [5.0, 0.0],
            radius: 1.0,
            z_min: -2.0,
            z_max: 0.5,
        };
        assert_relative_eq!(cyl.ray_hit(&Vec3::zeros(), &Vec3::x()).unwrap(), 4.0);
        // Straight down onto the top cap.
        let down = cyl.ray_hit(&Vec3::new(5.0, 0.2, 3.0), &-Vec3::z()).unwrap();
        assert_relative_eq!(down, 2.5);
    }

    #[test]
    fn degenerate_primitives_rejected() {
        assert!(Primitive::sphere(Vec3::zeros(), 0.0).validate().is_err());
        assert!(Primitive::sphere(Vec3::zeros(), -1.0).validate().is_err());
        assert!(Primitive::capsule(Vec3::x(), Vec3::x(), 0.1)
            .validate()
            .is_err());
        assert!(Primitive::capsule(Vec3::x(), Vec3::y(), 0.1)
            .validate()
            .is_ok());
    }

    #[test]
    fn bounding_sphere_contains_hits() {
        let c = Primitive::capsule(Vec3::new(3.0, 1.0, 0.0), Vec3::new(4.0, -1.0, 0.5), 0.3);
        let (center, radius) = c.bounding_sphere();
        for k in 0..50 {
            let ang = -0.8 + 1.6 * k as f64 / 49.0;
            let dir = Vec3::new(ang.cos(), ang.sin(), 0.05).normalize();
            if let Some(t) = c.ray_hit(&Vec3::zeros(), &dir) {
                assert!((dir * t - center).norm() <= radius + 1e-9);
            }
        }
    }
}
