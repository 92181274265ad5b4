//! Rigid transforms between the ground frame and the sensor frame.
//!
//! A [`Pose`] places the sensor in the ground frame: a sensor-frame vector `x`
//! maps to `R(q)·x + position` in ground coordinates. The sensor +x axis is the
//! LiDAR forward direction, +z is up.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

const UNIT_TOLERANCE: f64 = 1e-6;

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: &Quaternion<f64>) -> Result<Matrix3<f64>> {
    let norm = q.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "quaternion norm {norm} is not unit within {UNIT_TOLERANCE}"
        )));
    }
    Ok(rotation_from_components(q.w, q.i, q.j, q.k))
}

#[inline]
fn rotation_from_components(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    Matrix3::new(
        1.0 - 2.0 * (yy + zz),
        2.0 * (xy - wz),
        2.0 * (xz + wy),
        2.0 * (xy + wz),
        1.0 - 2.0 * (xx + zz),
        2.0 * (yz - wx),
        2.0 * (xz - wy),
        2.0 * (yz + wx),
        1.0 - 2.0 * (xx + yy),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    position: Vec3,
    orientation: UnitQuaternion<f64>,
    timestamp: f64,
}

impl Pose {
    /// Builds a pose, normalizing the quaternion given as `[w, x, y, z]`.
    pub fn new(position: Vec3, quaternion: [f64; 4], timestamp: f64) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("pose position is not finite".into()));
        }
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::InvalidInput(format!(
                "pose timestamp {timestamp} must be finite and non-negative"
            )));
        }
        let [w, x, y, z] = quaternion;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidInput(format!(
                "quaternion norm {norm} cannot be normalized"
            )));
        }
        Ok(Self {
            position,
            orientation: UnitQuaternion::from_quaternion(q),
            timestamp,
        })
    }

    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
            timestamp: 0.0,
        }
    }

    /// Pose rotated by `yaw` radians about the ground z axis.
    pub fn from_yaw(position: Vec3, yaw: f64, timestamp: f64) -> Result<Self> {
        let half = 0.5 * yaw;
        Self::new(position, [half.cos(), 0.0, 0.0, half.sin()], timestamp)
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    /// Orientation as `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let [w, x, y, z] = self.quaternion();
        rotation_from_components(w, x, y, z)
    }

    /// Heading of the sensor +x axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        let [w, x, y, z] = self.quaternion();
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }

    pub fn ground_to_sensor(&self, point: &Vec3) -> Vec3 {
        self.rotation().transpose() * (point - self.position)
    }

    pub fn sensor_to_ground(&self, point: &Vec3) -> Vec3 {
        self.rotation() * point + self.position
    }

    /// Re-expresses a planar ground velocity in sensor axes, using yaw only.
    pub fn velocity_to_sensor(&self, v: GroundVelocity) -> [f64; 2] {
        rotate_to_sensor([v.vx, v.vy], self.yaw())
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
            timestamp: self.timestamp,
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.orientation * other.position + self.position,
            orientation: self.orientation * other.orientation,
            timestamp: other.timestamp,
        }
    }

    /// Linear position and spherical-linear orientation blend, `s` in `[0, 1]`.
    pub fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        let s = s.clamp(0.0, 1.0);
        let orientation = self
            .orientation
            .try_slerp(&other.orientation, s, 1e-12)
            .unwrap_or(self.orientation);
        Pose {
            position: self.position.lerp(&other.position, s),
            orientation,
            timestamp: self.timestamp + (other.timestamp - self.timestamp) * s,
        }
    }
}

pub fn ground_to_sensor(point: &Vec3, sensor: &Pose) -> Vec3 {
    sensor.ground_to_sensor(point)
}

pub fn velocity_to_sensor(v: GroundVelocity, sensor: &Pose) -> [f64; 2] {
    sensor.velocity_to_sensor(v)
}

pub fn invert_pose(p: &Pose) -> Pose {
    p.inverse()
}

/// Rotates a planar ground-frame vector into a frame whose x axis has heading `yaw`.
#[inline]
pub fn rotate_to_sensor(v: [f64; 2], yaw: f64) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
}

/// Planar ground-frame velocity in mm/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundVelocity {
    pub vx: f64,
    pub vy: f64,
}

impl GroundVelocity {
    pub const ZERO: GroundVelocity = GroundVelocity { vx: 0.0, vy: 0.0 };

    pub fn new(vx: f64, vy: f64) -> Result<Self> {
        if !(vx.is_finite() && vy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "velocity ({vx}, {vy}) is not finite"
            )));
        }
        Ok(Self { vx, vy })
    }

    /// From a velocity in m/s.
    pub fn from_mps(v: Vec2) -> Self {
        Self {
            vx: v.x * 1000.0,
            vy: v.y * 1000.0,
        }
    }

    pub fn speed_mps(&self) -> f64 {
        self.vx.hypot(self.vy) / 1000.0
    }
}

impl std::ops::Sub for GroundVelocity {
    type Output = GroundVelocity;

    fn sub(self, rhs: Self) -> Self {
        GroundVelocity {
            vx: self.vx - rhs.vx,
            vy: self.vy - rhs.vy,
        }
    }
}

impl std::ops::Neg for GroundVelocity {
    type Output = GroundVelocity;

    fn neg(self) -> Self {
        GroundVelocity {
            vx: -self.vx,
            vy: -self.vy,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn quarter_turn_z() -> [f64; 4] {
        [FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin()]
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let m = quat_to_matrix(&Quaternion::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(m, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_maps_x_to_y() {
        let [w, x, y, z] = quarter_turn_z();
        let m = quat_to_matrix(&Quaternion::new(w, x, y, z)).unwrap();
        let v = m * Vec3::x();
        assert_relative_eq!(v, Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let err = quat_to_matrix(&Quaternion::new(1.0, 0.1, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn pose_rejects_bad_timestamp() {
        assert!(Pose::new(Vec3::zeros(), [1.0, 0.0, 0.0, 0.0], -1.0).is_err());
        assert!(Pose::new(Vec3::zeros(), [1.0, 0.0, 0.0, 0.0], f64::NAN).is_err());
        assert!(Pose::new(Vec3::zeros(), [0.0, 0.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn ground_to_sensor_examples() {
        let sensor = Pose::new(Vec3::new(2.0, -1.0, 0.8), [1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(
            sensor.ground_to_sensor(&Vec3::new(2.0, -1.0, 0.8)),
            Vec3::zeros()
        );

        let p = Pose::identity().ground_to_sensor(&Vec3::new(3.0, 4.0, 0.0));
        assert_eq!(p, Vec3::new(3.0, 4.0, 0.0));

        // Hand-computed: Rz(90)^T (0, 1, 0) = (1, 0, 0).
        let rotated = Pose::new(Vec3::new(1.0, 0.0, 0.0), quarter_turn_z(), 0.0).unwrap();
        let p = rotated.ground_to_sensor(&Vec3::new(1.0, 1.0, 0.0));
        assert_relative_eq!(p, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn velocity_to_sensor_examples() {
        let v = GroundVelocity::new(1200.0, 0.0).unwrap();
        assert_eq!(Pose::identity().velocity_to_sensor(v), [1200.0, 0.0]);

        let yawed = Pose::from_yaw(Vec3::zeros(), FRAC_PI_2, 0.0).unwrap();
        let r = yawed.velocity_to_sensor(v);
        assert!(r[0].abs() < 1e-9);
        assert_relative_eq!(r[1], -1200.0, epsilon = 1e-9);

        assert_eq!(
            yawed.velocity_to_sensor(GroundVelocity::ZERO),
            [0.0, 0.0]
        );
    }

    #[test]
    fn invert_pose_examples() {
        let inv = Pose::identity().inverse();
        assert_eq!(inv.position(), Vec3::zeros());
        assert_eq!(inv.quaternion(), [1.0, 0.0, 0.0, 0.0]);

        let t = Pose::new(Vec3::new(5.0, 0.0, 0.0), [1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(t.inverse().position(), Vec3::new(-5.0, 0.0, 0.0));
    }

    #[test]
    fn velocity_transform_ignores_roll_and_pitch() {
        // Roll the sensor by 30 deg about x; the planar transform must not change.
        let half = 15f64.to_radians();
        let rolled = Pose::new(Vec3::zeros(), [half.cos(), half.sin(), 0.0, 0.0], 0.0).unwrap();
        let v = GroundVelocity::new(300.0, -400.0).unwrap();
        let r = rolled.velocity_to_sensor(v);
        assert_relative_eq!(r[0], 300.0, epsilon = 1e-9);
        assert_relative_eq!(r[1], -400.0, epsilon = 1e-9);
    }

    #[test]
    fn interpolation_hits_endpoints_and_midpoint() {
        let a = Pose::from_yaw(Vec3::new(0.0, 0.0, 1.0), 0.0, 1.0).unwrap();
        let b = Pose::from_yaw(Vec3::new(2.0, 0.0, 1.0), FRAC_PI_2, 2.0).unwrap();
        let mid = a.interpolate(&b, 0.5);
        assert_relative_eq!(mid.position(), Vec3::new(1.0, 0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(mid.yaw(), FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(mid.timestamp(), 1.5);
        assert_relative_eq!(a.interpolate(&b, 1.0).yaw(), FRAC_PI_2, epsilon = 1e-12);
    }

    fn unit_quaternion() -> impl Strategy<Value = [f64; 4]> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
            .prop_filter("non-degenerate", |(w, x, y, z)| {
                (w * w + x * x + y * y + z * z) > 1e-3
            })
            .prop_map(|(w, x, y, z)| {
                let n = (w * w + x * x + y * y + z * z).sqrt();
                [w / n, x / n, y / n, z / n]
            })
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn pose() -> impl Strategy<Value = Pose> {
        (point(), unit_quaternion()).prop_map(|(p, q)| Pose::new(p, q, 0.0).unwrap())
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(q in unit_quaternion()) {
            let m = quat_to_matrix(&Quaternion::new(q[0], q[1], q[2], q[3])).unwrap();
            let err = (m.transpose() * m - Matrix3::identity()).abs().max();
            prop_assert!(err < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn rotation_equals_square_of_half_rotation(q in unit_quaternion()) {
            // Independent route: halve the rotation angle with nalgebra and apply it twice.
            let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
            let half = UnitQuaternion::identity().slerp(&uq, 0.5);
            let half_m = half.to_rotation_matrix().into_inner();
            let m = quat_to_matrix(&Quaternion::new(q[0], q[1], q[2], q[3])).unwrap();
            prop_assert!((m - half_m * half_m).abs().max() < 1e-12);
        }

        #[test]
        fn round_trip_and_norm_preservation(p in pose(), a in point(), b in point()) {
            let back = p.sensor_to_ground(&p.ground_to_sensor(&a));
            prop_assert!((back - a).norm() < 1e-9);
            let d_sensor = (p.ground_to_sensor(&a) - p.ground_to_sensor(&b)).norm();
            prop_assert!((d_sensor - (a - b).norm()).abs() < 1e-9);
        }

        #[test]
        fn inverse_composes_to_identity(p in pose(), pts in proptest::collection::vec(point(), 1000)) {
            let id = p.compose(&p.inverse());
            for x in &pts {
                let y = id.sensor_to_ground(x);
                prop_assert!((y - x).norm() < 1e-9);
            }
        }

        #[test]
        fn velocity_transform_is_linear(
            p in pose(),
            (ux, uy, vx, vy) in (-2000.0f64..2000.0, -2000.0f64..2000.0, -2000.0f64..2000.0, -2000.0f64..2000.0),
            (alpha, beta) in (-3.0f64..3.0, -3.0f64..3.0),
        ) {
            let u = GroundVelocity { vx: ux, vy: uy };
            let v = GroundVelocity { vx, vy };
            let combo = GroundVelocity { vx: alpha * ux + beta * vx, vy: alpha * uy + beta * vy };
            let lhs = p.velocity_to_sensor(combo);
            let fu = p.velocity_to_sensor(u);
            let fv = p.velocity_to_sensor(v);
            for i in 0..2 {
                let rhs = alpha * fu[i] + beta * fv[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }
    }
}
