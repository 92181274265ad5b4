//! Virtual spinning LiDAR: beam layout, spherical projection, per-pixel ray casting.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::raster::Raster;
use crate::shapes::Primitive;

/// Range raster in meters; `HOLE` marks a pixel without a return.
pub type DepthFrame = Raster<f32>;

/// Per-pixel sensor-frame coordinates in meters.
pub type XyzMap = Raster<[f64; 3]>;

pub const HOLE: f32 = 0.0;

/// Returns closer than this are discarded as self-hits.
pub const MIN_RANGE: f64 = 0.1;

#[inline]
pub fn is_hole(depth: f32) -> bool {
    depth == HOLE
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub n_columns: usize,
    /// Degrees.
    pub elevation_max: f64,
    /// Degrees.
    pub elevation_min: f64,
    /// Degrees; 360 for a full spin.
    pub azimuth_span: f64,
    /// Meters.
    pub max_range: f64,
    /// Hz.
    pub frame_rate: f64,
    /// Standard deviation of additive range noise on rendered humans, meters.
    pub range_noise_sigma: f64,
    /// Probability that a composited pixel is dropped to a hole.
    pub dropout_probability: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_beams: 32,
            n_columns: 1024,
            elevation_max: 10.67,
            elevation_min: -30.67,
            azimuth_span: 360.0,
            max_range: 100.0,
            frame_rate: 10.0,
            range_noise_sigma: 0.0,
            dropout_probability: 0.0,
        }
    }
}

impl LidarConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_beams < 2 {
            v.push(format!("n_beams must be >= 2 (got {})", self.n_beams));
        }
        if self.n_columns < 2 {
            v.push(format!("n_columns must be >= 2 (got {})", self.n_columns));
        }
        if !(self.elevation_max > self.elevation_min) {
            v.push(format!(
                "elevation_max {} must exceed elevation_min {}",
                self.elevation_max, self.elevation_min
            ));
        }
        if !(self.elevation_max <= 90.0 && self.elevation_min >= -90.0) {
            v.push("elevations must lie within [-90, 90] degrees".into());
        }
        if !(self.azimuth_span > 0.0 && self.azimuth_span <= 360.0) {
            v.push(format!(
                "azimuth_span must be in (0, 360] (got {})",
                self.azimuth_span
            ));
        }
        if !(self.max_range > MIN_RANGE && self.max_range.is_finite()) {
            v.push(format!("max_range must exceed {MIN_RANGE} m"));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            v.push("frame_rate must be positive".into());
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            v.push("range_noise_sigma must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            v.push("dropout_probability must be in [0, 1]".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn full_spin(&self) -> bool {
        self.azimuth_span >= 360.0
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.frame_rate
    }
}

/// Projection of a point onto the raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub row: usize,
    pub col: usize,
    pub depth: f64,
}

/// Beam elevations (row 0 highest) and azimuth bin centers (column 0 at
/// `+azimuth_span / 2`, decreasing clockwise; sensor +x at azimuth 0), plus
/// the unit ray direction of every pixel.
#[derive(Debug, Clone)]
pub struct BeamTable {
    config: LidarConfig,
    elevations: Vec<f64>,
    azimuths: Vec<f64>,
    elevation_step: f64,
    azimuth_step: f64,
    directions: Vec<Vec3>,
}

impl BeamTable {
    pub fn new(config: &LidarConfig) -> Result<Self> {
        build_beam_table(config)
    }

    pub fn config(&self) -> &LidarConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.config.n_beams
    }

    pub fn cols(&self) -> usize {
        self.config.n_columns
    }

    /// Degrees, descending.
    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    /// Degrees, descending.
    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn elevation_step(&self) -> f64 {
        self.elevation_step
    }

    pub fn azimuth_step(&self) -> f64 {
        self.azimuth_step
    }

    #[inline]
    pub fn direction(&self, row: usize, col: usize) -> &Vec3 {
        &self.directions[row * self.config.n_columns + col]
    }

    pub fn empty_frame(&self) -> DepthFrame {
        Raster::filled(self.rows(), self.cols(), HOLE)
    }

    /// Column nearest to azimuth 0 (sensor forward).
    pub fn forward_column(&self) -> usize {
        let half = 0.5 * self.config.azimuth_span;
        (half / self.azimuth_step).round() as usize % self.cols()
    }

    /// Nearest beam row for an elevation in degrees, or `None` outside the
    /// field plus a half-spacing guard band.
    pub fn row_for_elevation(&self, elevation: f64) -> Option<usize> {
        let half = 0.5 * self.elevation_step;
        if elevation > self.config.elevation_max + half
            || elevation < self.config.elevation_min - half
        {
            return None;
        }
        let r = ((self.config.elevation_max - elevation) / self.elevation_step).round();
        Some((r.max(0.0) as usize).min(self.rows() - 1))
    }

    /// Nearest azimuth column for an azimuth in degrees.
    pub fn col_for_azimuth(&self, azimuth: f64) -> Option<usize> {
        let n = self.cols() as i64;
        let k = ((0.5 * self.config.azimuth_span - azimuth) / self.azimuth_step).round() as i64;
        if self.config.full_spin() {
            Some(k.rem_euclid(n) as usize)
        } else if (0..n).contains(&k) {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn project_point(&self, p: &Vec3) -> Option<PixelHit> {
        project_point(p, self)
    }
}

pub fn build_beam_table(config: &LidarConfig) -> Result<BeamTable> {
    config.validate()?;
    let n_beams = config.n_beams;
    let n_cols = config.n_columns;
    let elevation_step = (config.elevation_max - config.elevation_min) / (n_beams - 1) as f64;
    let azimuth_step = config.azimuth_span / n_cols as f64;
    let elevations: Vec<f64> = (0..n_beams)
        .map(|r| config.elevation_max - r as f64 * elevation_step)
        .collect();
    let azimuths: Vec<f64> = (0..n_cols)
        .map(|c| 0.5 * config.azimuth_span - c as f64 * azimuth_step)
        .collect();

    let mut directions = Vec::with_capacity(n_beams * n_cols);
    for el in &elevations {
        let (se, ce) = el.to_radians().sin_cos();
        for az in &azimuths {
            let (sa, ca) = az.to_radians().sin_cos();
            directions.push(Vec3::new(ce * ca, ce * sa, se));
        }
    }
    Ok(BeamTable {
        config: config.clone(),
        elevations,
        azimuths,
        elevation_step,
        azimuth_step,
        directions,
    })
}

pub fn project_point(p: &Vec3, bt: &BeamTable) -> Option<PixelHit> {
    let depth = p.norm();
    if !depth.is_finite() || depth < MIN_RANGE || depth > bt.config.max_range {
        return None;
    }
    let elevation = p.z.atan2(p.x.hypot(p.y)).to_degrees();
    let azimuth = p.y.atan2(p.x).to_degrees();
    let row = bt.row_for_elevation(elevation)?;
    let col = bt.col_for_azimuth(azimuth)?;
    Some(PixelHit { row, col, depth })
}

/// Inclusive row range and column list a bounding sphere (sensor frame) can
/// cover. Rays are exact beam directions, so a pixel can only hit the sphere
/// when its direction lies inside the sphere's angular cone.
fn pixel_window(bt: &BeamTable, center: &Vec3, radius: f64) -> Option<(usize, usize, Vec<usize>)> {
    let cfg = &bt.config;
    let d = center.norm();
    if d - radius > cfg.max_range {
        return None;
    }
    let all_cols = || (0..bt.cols()).collect::<Vec<_>>();
    if d <= radius + 1e-9 {
        return Some((0, bt.rows() - 1, all_cols()));
    }
    // Small margin keeps boundary pixels from being culled by rounding.
    let alpha = (radius / d).asin().to_degrees() + 1e-6;
    let el_c = center.z.atan2(center.x.hypot(center.y)).to_degrees();

    let lo_el = el_c - alpha;
    let hi_el = el_c + alpha;
    if hi_el < cfg.elevation_min - 1e-9 || lo_el > cfg.elevation_max + 1e-9 {
        return None;
    }
    let step = bt.elevation_step;
    let r_lo = ((cfg.elevation_max - hi_el) / step).ceil().max(0.0) as usize;
    let r_hi = (((cfg.elevation_max - lo_el) / step).floor().max(0.0) as usize).min(bt.rows() - 1);
    if r_lo > r_hi {
        return None;
    }

    if el_c.abs() + alpha >= 90.0 {
        return Some((r_lo, r_hi, all_cols()));
    }
    let beta = {
        let s = alpha.to_radians().sin() / el_c.abs().to_radians().cos().max(1e-12);
        if s >= 1.0 {
            return Some((r_lo, r_hi, all_cols()));
        }
        s.asin().to_degrees() + 1e-6
    };
    let az_c = center.y.atan2(center.x).to_degrees();
    let half_span = 0.5 * cfg.azimuth_span;
    let k_lo = ((half_span - (az_c + beta)) / bt.azimuth_step).ceil() as i64;
    let k_hi = ((half_span - (az_c - beta)) / bt.azimuth_step).floor() as i64;
    if k_hi < k_lo {
        return None;
    }
    let n = bt.cols() as i64;
    let cols = if cfg.full_spin() {
        if k_hi - k_lo + 1 >= n {
            all_cols()
        } else {
            (k_lo..=k_hi).map(|k| k.rem_euclid(n) as usize).collect()
        }
    } else {
        (k_lo.max(0)..=k_hi.min(n - 1)).map(|k| k as usize).collect()
    };
    if cols.is_empty() {
        return None;
    }
    Some((r_lo, r_hi, cols))
}

/// Casts every pixel ray that can reach `primitives` (ground frame) from the
/// sensor pose and keeps the nearest in-range hit in `frame`.
pub fn render_into(frame: &mut DepthFrame, primitives: &[Primitive], sensor: &Pose, bt: &BeamTable) {
    let rot = sensor.rotation();
    let rot_t = rot.transpose();
    let origin = sensor.position();
    let max_range = bt.config.max_range;
    for prim in primitives {
        let (center, radius) = prim.bounding_sphere();
        let center_s = rot_t * (center - origin);
        let Some((r_lo, r_hi, cols)) = pixel_window(bt, &center_s, radius) else {
            continue;
        };
        for row in r_lo..=r_hi {
            for &col in &cols {
                let dir = rot * bt.direction(row, col);
                if let Some(t) = prim.ray_hit(&origin, &dir) {
                    if (MIN_RANGE..=max_range).contains(&t) {
                        let px = frame.get_mut(row, col);
                        let t = t as f32;
                        if is_hole(*px) || t < *px {
                            *px = t;
                        }
                    }
                }
            }
        }
    }
}

/// Human depth layer: nearest hit per pixel, holes where nothing is hit.
pub fn render_body(primitives: &[Primitive], sensor: &Pose, bt: &BeamTable) -> Result<DepthFrame> {
    for p in primitives {
        p.validate()?;
    }
    let mut frame = bt.empty_frame();
    render_into(&mut frame, primitives, sensor, bt);
    Ok(frame)
}

pub fn depth_to_xyz(frame: &DepthFrame, bt: &BeamTable) -> Result<XyzMap> {
    frame.ensure_dims(bt.rows(), bt.cols())?;
    let data = frame
        .iter_indexed()
        .map(|(r, c, &d)| {
            if is_hole(d) {
                [0.0; 3]
            } else {
                let v = bt.direction(r, c) * d as f64;
                [v.x, v.y, v.z]
            }
        })
        .collect();
    Raster::from_vec(frame.rows(), frame.cols(), data)
}

/// Zero-mean Gaussian perturbation of every valid pixel; perturbed values
/// leaving the measurable interval become holes.
pub fn apply_range_noise<R: Rng + ?Sized>(
    frame: &mut DepthFrame,
    sigma: f64,
    max_range: f64,
    rng: &mut R,
) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    for px in frame.as_mut_slice() {
        if is_hole(*px) {
            continue;
        }
        let v = *px as f64 + normal.sample(rng);
        *px = if (MIN_RANGE..=max_range).contains(&v) {
            v as f32
        } else {
            HOLE
        };
    }
}
