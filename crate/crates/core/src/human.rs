//! Parametric articulated walker: a capsule/sphere body sized from height and
//! weight, driven by a cyclic gait table.
//!
//! Body-local axes: +x forward (walking direction), +y left, +z up. The local
//! origin is on the ground directly under the pelvis.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{GroundVelocity, Vec2, Vec3};
use crate::shapes::Primitive;

/// The fifteen (height mm, weight kg) combinations used for dataset generation.
pub const MODEL_GRID: [(f64, f64); 15] = [
    (1200.0, 15.0),
    (1200.0, 20.0),
    (1200.0, 30.0),
    (1400.0, 20.0),
    (1400.0, 30.0),
    (1400.0, 40.0),
    (1600.0, 40.0),
    (1600.0, 50.0),
    (1600.0, 70.0),
    (1700.0, 50.0),
    (1700.0, 60.0),
    (1700.0, 80.0),
    (1800.0, 50.0),
    (1800.0, 70.0),
    (1800.0, 90.0),
];

pub const DEFAULT_GAIT_SAMPLES: usize = 230;

// Segment lengths as fractions of standing height.
const HEAD: f64 = 0.13;
const TORSO: f64 = 0.30;
const PELVIS: f64 = 0.05;
const THIGH: f64 = 0.245;
const SHANK: f64 = 0.246;
const FOOT_HEIGHT: f64 = 0.039;
const FOOT_LENGTH: f64 = 0.152;
const UPPER_ARM: f64 = 0.186;
const FOREARM: f64 = 0.146;
const HIP_HALF_WIDTH: f64 = 0.05;
const SHOULDER_HALF_WIDTH: f64 = 0.129;
/// Shoulder joint height above the hip joint.
const SHOULDER_ABOVE_HIP: f64 = 0.288;
/// The head sits between the shoulders and overlaps the torso top.
const NECK_OVERLAP: f64 = 0.01;
/// Fraction of the foot behind the ankle.
const HEEL_FRACTION: f64 = 0.25;

// Girth radii in meters at the reference build (1700 mm, 60 kg).
const REF_HEIGHT_MM: f64 = 1700.0;
const REF_WEIGHT_KG: f64 = 60.0;
const REF_TORSO_RADIUS: f64 = 0.150;
const REF_PELVIS_RADIUS: f64 = 0.140;
const REF_UPPER_ARM_RADIUS: f64 = 0.045;
const REF_FOREARM_RADIUS: f64 = 0.038;
const REF_THIGH_RADIUS: f64 = 0.070;
const REF_SHANK_RADIUS: f64 = 0.048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDims {
    /// Meters.
    pub length: f64,
    /// Meters.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub height_mm: f64,
    pub weight_kg: f64,
    pub head: SegmentDims,
    pub torso: SegmentDims,
    pub pelvis: SegmentDims,
    pub upper_arm: SegmentDims,
    pub forearm: SegmentDims,
    pub thigh: SegmentDims,
    pub shank: SegmentDims,
    /// `length` is heel-to-toe; the radius is half the foot height.
    pub foot: SegmentDims,
    pub foot_height: f64,
    pub hip_half_width: f64,
    pub shoulder_half_width: f64,
}

pub fn build_body(height_mm: f64, weight_kg: f64) -> Result<BodyModel> {
    if !(800.0..=2200.0).contains(&height_mm) {
        return Err(Error::InvalidModel(format!(
            "height {height_mm} mm outside [800, 2200]"
        )));
    }
    if !(10.0..=150.0).contains(&weight_kg) {
        return Err(Error::InvalidModel(format!(
            "weight {weight_kg} kg outside [10, 150]"
        )));
    }
    let h = height_mm / 1000.0;
    let girth = ((weight_kg / height_mm) / (REF_WEIGHT_KG / REF_HEIGHT_MM)).sqrt();
    let seg = |frac: f64, ref_radius: f64| {
        let length = frac * h;
        // Capsules need a non-degenerate axis once inset by their radius.
        let radius = (ref_radius * girth).min(0.45 * length);
        SegmentDims { length, radius }
    };
    let torso = seg(TORSO, REF_TORSO_RADIUS);
    let upper_arm = seg(UPPER_ARM, REF_UPPER_ARM_RADIUS);
    Ok(BodyModel {
        height_mm,
        weight_kg,
        head: SegmentDims {
            length: HEAD * h,
            radius: 0.5 * HEAD * h,
        },
        torso,
        pelvis: seg(PELVIS, REF_PELVIS_RADIUS),
        upper_arm,
        forearm: seg(FOREARM, REF_FOREARM_RADIUS),
        thigh: seg(THIGH, REF_THIGH_RADIUS),
        shank: seg(SHANK, REF_SHANK_RADIUS),
        foot: SegmentDims {
            length: FOOT_LENGTH * h,
            radius: 0.5 * FOOT_HEIGHT * h,
        },
        foot_height: FOOT_HEIGHT * h,
        hip_half_width: HIP_HALF_WIDTH * h,
        shoulder_half_width: (SHOULDER_HALF_WIDTH * h)
            .max(torso.radius + upper_arm.radius + 0.005),
    })
}

impl BodyModel {
    pub fn height_m(&self) -> f64 {
        self.height_mm / 1000.0
    }

    /// Vertical extent of the body in the neutral standing pose, meters.
    pub fn standing_height(&self) -> f64 {
        let prims = surface_primitives(self, &JointAngles::default());
        let (lo, hi) = vertical_extent(&prims);
        hi - lo
    }
}

/// Joint angles in radians; index 0 is the left limb, 1 the right.
///
/// Hip and shoulder angles are flexion forward from hanging straight down;
/// knee flexion folds the shank backward, elbow flexion folds the forearm
/// forward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointAngles {
    pub hip: [f64; 2],
    pub knee: [f64; 2],
    pub shoulder: [f64; 2],
    pub elbow: [f64; 2],
}

impl JointAngles {
    fn lerp(&self, other: &JointAngles, s: f64) -> JointAngles {
        let l = |a: [f64; 2], b: [f64; 2]| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
        JointAngles {
            hip: l(self.hip, other.hip),
            knee: l(self.knee, other.knee),
            shoulder: l(self.shoulder, other.shoulder),
            elbow: l(self.elbow, other.elbow),
        }
    }

    /// Same pose with left and right limbs exchanged.
    pub fn mirrored(&self) -> JointAngles {
        let s = |a: [f64; 2]| [a[1], a[0]];
        JointAngles {
            hip: s(self.hip),
            knee: s(self.knee),
            shoulder: s(self.shoulder),
            elbow: s(self.elbow),
        }
    }

    fn as_array(&self) -> [f64; 8] {
        [
            self.hip[0],
            self.hip[1],
            self.knee[0],
            self.knee[1],
            self.shoulder[0],
            self.shoulder[1],
            self.elbow[0],
            self.elbow[1],
        ]
    }

    fn from_array(a: [f64; 8]) -> JointAngles {
        JointAngles {
            hip: [a[0], a[1]],
            knee: [a[2], a[3]],
            shoulder: [a[4], a[5]],
            elbow: [a[6], a[7]],
        }
    }
}

/// One period of walking, sampled uniformly in phase.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitCycle {
    samples: Vec<JointAngles>,
}

/// Largest joint-angle jump allowed between the last and first sample.
pub const MAX_WRAP_JUMP: f64 = 5.0 * std::f64::consts::PI / 180.0;

impl GaitCycle {
    pub fn new(samples: Vec<JointAngles>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidModel(
                "gait cycle needs at least two samples".into(),
            ));
        }
        if samples
            .iter()
            .flat_map(|s| s.as_array())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidModel("gait cycle contains non-finite angles".into()));
        }
        let first = samples[0].as_array();
        let last = samples[samples.len() - 1].as_array();
        if let Some(j) = (0..8).find(|&j| (first[j] - last[j]).abs() >= MAX_WRAP_JUMP) {
            return Err(Error::InvalidModel(format!(
                "gait cycle is not cyclic: joint column {j} jumps {:.2} deg at the wrap",
                (first[j] - last[j]).abs().to_degrees()
            )));
        }
        Ok(Self { samples })
    }

    /// Procedural walk: sinusoidal hip flexion (±30°), double-bump knee
    /// flexion (0–60°), arm swing (±25°) in anti-phase with the same-side hip.
    pub fn procedural(n_samples: usize) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::InvalidModel("gait cycle needs at least two samples".into()));
        }
        let left = |phase: f64| -> [f64; 4] {
            let s = (TAU * phase).sin();
            let hip = 30f64.to_radians() * s;
            let knee = 60f64.to_radians() * periodic_bump(phase, 0.0, 0.08)
                + 15f64.to_radians() * periodic_bump(phase, 0.35, 0.06);
            let shoulder = -25f64.to_radians() * s;
            let elbow = 20f64.to_radians() - 10f64.to_radians() * s;
            [hip, knee, shoulder, elbow]
        };
        let lefts: Vec<[f64; 4]> = (0..n_samples)
            .map(|i| left(i as f64 / n_samples as f64))
            .collect();
        let samples = (0..n_samples)
            .map(|i| {
                let l = lefts[i];
                // Right limbs lag by half a cycle; an exact index shift keeps
                // the symmetry free of rounding when n is even.
                let r = if n_samples.is_multiple_of(2) {
                    lefts[(i + n_samples / 2) % n_samples]
                } else {
                    left(i as f64 / n_samples as f64 + 0.5)
                };
                JointAngles {
                    hip: [l[0], r[0]],
                    knee: [l[1], r[1]],
                    shoulder: [l[2], r[2]],
                    elbow: [l[3], r[3]],
                }
            })
            .collect();
        Self::new(samples)
    }

    /// All joints at zero: a person standing upright.
    pub fn standing(n_samples: usize) -> Self {
        Self {
            samples: vec![JointAngles::default(); n_samples.max(2)],
        }
    }

    /// Reads a whitespace-separated table, one sample per line, columns in
    /// degrees: `hip_l hip_r knee_l knee_r shoulder_l shoulder_r elbow_l elbow_r`.
    /// Blank lines and `#` comments are ignored.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table_str(&text).map_err(|e| match e {
            Error::InvalidInput(reason) => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
            let arr: [f64; 8] = vals.try_into().map_err(|v: Vec<f64>| {
                Error::InvalidInput(format!(
                    "line {}: expected 8 columns, found {}",
                    lineno + 1,
                    v.len()
                ))
            })?;
            samples.push(JointAngles::from_array(arr.map(f64::to_radians)));
        }
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[JointAngles] {
        &self.samples
    }

    /// Cyclic shift of the sample labels by `offset`.
    pub fn shifted(&self, offset: usize) -> GaitCycle {
        let n = self.samples.len();
        GaitCycle {
            samples: (0..n).map(|i| self.samples[(i + offset) % n]).collect(),
        }
    }
}

/// Unit-height Gaussian bump around `center` on the phase circle.
fn periodic_bump(phase: f64, center: f64, width: f64) -> f64 {
    let d = (phase - center).rem_euclid(1.0);
    let d = d.min(1.0 - d);
    (-(d * d) / (2.0 * width * width)).exp()
}

/// Joint angles at `phase`, linearly interpolated between neighboring samples.
pub fn gait_pose(gait: &GaitCycle, phase: f64) -> JointAngles {
    let n = gait.samples.len();
    let pos = phase.rem_euclid(1.0) * n as f64;
    let base = pos.floor();
    let frac = pos - base;
    let i0 = (base as usize) % n;
    let i1 = (i0 + 1) % n;
    gait.samples[i0].lerp(&gait.samples[i1], frac)
}

/// Joint positions of the posed skeleton in body-local coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Skeleton {
    pub root: Vec3,
    pub hip: [Vec3; 2],
    pub knee: [Vec3; 2],
    pub ankle: [Vec3; 2],
    pub heel: [Vec3; 2],
    pub toe: [Vec3; 2],
    pub shoulder: [Vec3; 2],
    pub elbow: [Vec3; 2],
    pub wrist: [Vec3; 2],
}

#[inline]
fn sagittal(angle: f64) -> Vec3 {
    Vec3::new(angle.sin(), 0.0, -angle.cos())
}

/// Forward kinematics. The root height is chosen so the lower sole touches
/// the ground, and soles stay parallel to the ground.
pub fn pose_skeleton(body: &BodyModel, angles: &JointAngles) -> Skeleton {
    let leg_drop = |side: usize| {
        let th = angles.hip[side];
        let tk = angles.knee[side];
        body.thigh.length * th.cos() + body.shank.length * (th - tk).cos()
    };
    let root_z = leg_drop(0).max(leg_drop(1)) + body.foot_height;
    let root = Vec3::new(0.0, 0.0, root_z);
    let lateral = [1.0, -1.0];

    let mut sk = Skeleton {
        root,
        hip: [root; 2],
        knee: [root; 2],
        ankle: [root; 2],
        heel: [root; 2],
        toe: [root; 2],
        shoulder: [root; 2],
        elbow: [root; 2],
        wrist: [root; 2],
    };
    let shoulder_z = root_z + SHOULDER_ABOVE_HIP * body.height_m();
    for side in 0..2 {
        let hip = root + Vec3::new(0.0, lateral[side] * body.hip_half_width, 0.0);
        let knee = hip + sagittal(angles.hip[side]) * body.thigh.length;
        let ankle = knee + sagittal(angles.hip[side] - angles.knee[side]) * body.shank.length;
        let sole = ankle.z - body.foot_height;
        sk.hip[side] = hip;
        sk.knee[side] = knee;
        sk.ankle[side] = ankle;
        sk.heel[side] = Vec3::new(ankle.x - HEEL_FRACTION * body.foot.length, ankle.y, sole);
        sk.toe[side] = Vec3::new(
            ankle.x + (1.0 - HEEL_FRACTION) * body.foot.length,
            ankle.y,
            sole,
        );

        let shoulder = Vec3::new(0.0, lateral[side] * body.shoulder_half_width, shoulder_z);
        let elbow = shoulder + sagittal(angles.shoulder[side]) * body.upper_arm.length;
        let wrist =
            elbow + sagittal(angles.shoulder[side] + angles.elbow[side]) * body.forearm.length;
        sk.shoulder[side] = shoulder;
        sk.elbow[side] = elbow;
        sk.wrist[side] = wrist;
    }
    sk
}

/// Body-local surface primitives for a posed body.
pub fn surface_primitives(body: &BodyModel, angles: &JointAngles) -> Vec<Primitive> {
    let sk = pose_skeleton(body, angles);
    let h = body.height_m();
    let mut prims = Vec::with_capacity(13);

    let torso_base = sk.root.z + PELVIS * h;
    let torso_top = torso_base + body.torso.length;
    let r = body.torso.radius;
    prims.push(Primitive::capsule(
        Vec3::new(0.0, 0.0, torso_base + r),
        Vec3::new(0.0, 0.0, torso_top - r),
        r,
    ));
    prims.push(Primitive::capsule(sk.hip[0], sk.hip[1], body.pelvis.radius));
    prims.push(Primitive::sphere(
        Vec3::new(0.0, 0.0, torso_top - NECK_OVERLAP * h + body.head.radius),
        body.head.radius,
    ));
    for side in 0..2 {
        prims.push(Primitive::capsule(sk.hip[side], sk.knee[side], body.thigh.radius));
        prims.push(Primitive::capsule(sk.knee[side], sk.ankle[side], body.shank.radius));
        let rf = body.foot.radius;
        prims.push(Primitive::capsule(
            sk.heel[side] + Vec3::new(rf, 0.0, rf),
            sk.toe[side] + Vec3::new(-rf, 0.0, rf),
            rf,
        ));
        prims.push(Primitive::capsule(
            sk.shoulder[side],
            sk.elbow[side],
            body.upper_arm.radius,
        ));
        prims.push(Primitive::capsule(
            sk.elbow[side],
            sk.wrist[side],
            body.forearm.radius,
        ));
    }
    prims
}

/// Lowest and highest surface z over a set of spheres and capsules.
pub fn vertical_extent(prims: &[Primitive]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in prims {
        let (zl, zh) = match *p {
            Primitive::Sphere { center, radius } => (center.z - radius, center.z + radius),
            Primitive::Capsule { a, b, radius } => {
                (a.z.min(b.z) - radius, a.z.max(b.z) + radius)
            }
            Primitive::Cuboid { min, max } => (min.z, max.z),
            Primitive::Cylinder { z_min, z_max, .. } => (z_min, z_max),
        };
        lo = lo.min(zl);
        hi = hi.max(zh);
    }
    (lo, hi)
}

/// Largest fore-aft heel separation over the cycle, meters.
///
/// Only the component along the walking direction counts, so the fixed
/// lateral hip width does not enter the estimate.
pub fn stride_length(gait: &GaitCycle, body: &BodyModel) -> f64 {
    gait.samples
        .iter()
        .map(|a| {
            let sk = pose_skeleton(body, a);
            (sk.heel[0].x - sk.heel[1].x).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct HumanWalkingModel {
    pub body: Arc<BodyModel>,
    pub gait: Arc<GaitCycle>,
    /// Meters.
    pub stride: f64,
    /// Gait-cycle length in strides; one cycle contains two steps.
    pub cycle_strides: f64,
    pub phase: f64,
    /// Ground-frame position, meters.
    pub position: Vec2,
    /// Radians, ground frame.
    pub heading: f64,
    pub ground_velocity: GroundVelocity,
}

impl HumanWalkingModel {
    pub fn new(body: Arc<BodyModel>, gait: Arc<GaitCycle>, phase: f64) -> Result<Self> {
        let stride = stride_length(&gait, &body);
        if !(stride > 0.0) {
            return Err(Error::InvalidModel(format!(
                "gait produces non-positive stride {stride}"
            )));
        }
        if !(0.0..1.0).contains(&phase) {
            return Err(Error::InvalidModel(format!("phase {phase} outside [0, 1)")));
        }
        Ok(Self {
            body,
            gait,
            stride,
            cycle_strides: 2.0,
            phase,
            position: Vec2::zeros(),
            heading: 0.0,
            ground_velocity: GroundVelocity::ZERO,
        })
    }

    pub fn cycle_length(&self) -> f64 {
        self.cycle_strides * self.stride
    }
}

/// Phase after walking `speed` m/s for `dt` seconds.
pub fn advance_phase(model: &HumanWalkingModel, speed: f64, dt: f64) -> Result<f64> {
    if !(model.stride > 0.0) || !(model.cycle_strides > 0.0) {
        return Err(Error::InvalidModel(format!(
            "stride {} must be positive",
            model.stride
        )));
    }
    if !(dt > 0.0) || !(speed >= 0.0) || !speed.is_finite() || !dt.is_finite() {
        return Err(Error::InvalidInput(format!(
            "advance_phase needs dt > 0 and speed >= 0 (dt={dt}, speed={speed})"
        )));
    }
    let next = (model.phase + speed * dt / model.cycle_length()).rem_euclid(1.0);
    Ok(if next >= 1.0 { 0.0 } else { next })
}

/// Ground-frame primitives of the model at its current phase, heading and position.
pub fn body_surface(model: &HumanWalkingModel) -> Vec<Primitive> {
    let angles = gait_pose(&model.gait, model.phase);
    let (s, c) = model.heading.sin_cos();
    let place = |p: Vec3| {
        Vec3::new(
            c * p.x - s * p.y + model.position.x,
            s * p.x + c * p.y + model.position.y,
            p.z,
        )
    };
    surface_primitives(&model.body, &angles)
        .into_iter()
        .map(|p| match p {
            Primitive::Sphere { center, radius } => Primitive::Sphere {
                center: place(center),
                radius,
            },
            Primitive::Capsule { a, b, radius } => Primitive::Capsule {
                a: place(a),
                b: place(b),
                radius,
            },
            other => other,
        })
        .collect()
}
