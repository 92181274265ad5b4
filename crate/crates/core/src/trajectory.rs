//! Human and sensor trajectories, window extraction and scenario sampling.
//!
//! Human trajectory files hold one trajectory per block of `t x y` lines
//! (seconds, meters, ground frame); blocks are separated by blank lines and
//! `#` starts a comment. Sensor track files hold one sample per line:
//! `t x y z qw qx qy qz cvx cvy` with the command velocity in mm/s.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{GroundVelocity, Pose, Vec2, Vec3};
use crate::human::MODEL_GRID;

pub const SAMPLE_RATE_HZ: f64 = 10.0;
pub const MIN_SPACING: f64 = 0.05;
pub const MAX_SPACING: f64 = 0.2;
/// Walking-plausibility bound between consecutive human samples, m/s.
pub const MAX_HUMAN_SPEED: f64 = 4.0;
/// Below this speed (m/s) the previous heading is held.
pub const HEADING_HOLD_SPEED: f64 = 0.05;
pub const MAX_HUMANS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    /// Builds a human trajectory, enforcing sample spacing and speed bounds.
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("trajectory has no samples".into()));
        }
        for s in &samples {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::InvalidInput("trajectory sample is not finite".into()));
            }
        }
        for (i, w) in samples.windows(2).enumerate() {
            let dt = w[1].t - w[0].t;
            if !(MIN_SPACING..=MAX_SPACING).contains(&dt) {
                return Err(Error::InvalidInput(format!(
                    "sample {}: spacing {dt:.4} s outside [{MIN_SPACING}, {MAX_SPACING}]",
                    i + 1
                )));
            }
            let speed = (w[1].x - w[0].x).hypot(w[1].y - w[0].y) / dt;
            if speed > MAX_HUMAN_SPEED {
                return Err(Error::InvalidInput(format!(
                    "sample {}: speed {speed:.2} m/s exceeds {MAX_HUMAN_SPEED}",
                    i + 1
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTrajectories {
    pub trajectories: Vec<Trajectory>,
    /// Blocks that parsed but violated trajectory invariants.
    pub dropped: usize,
}

pub fn load_trajectories(path: &Path) -> Result<LoadedTrajectories> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let loaded = parse_trajectories(&text).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })?;
    if loaded.dropped > 0 {
        log::warn!(
            "{}: dropped {} trajectories violating invariants",
            path.display(),
            loaded.dropped
        );
    }
    if loaded.trajectories.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} holds no valid trajectories",
            path.display()
        )));
    }
    Ok(loaded)
}

fn parse_trajectories(text: &str) -> std::result::Result<LoadedTrajectories, String> {
    let mut blocks: Vec<Vec<TrajectorySample>> = vec![Vec::new()];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // Comment-only lines do not split blocks.
            if raw.trim().is_empty() && !blocks.last().unwrap().is_empty() {
                blocks.push(Vec::new());
            }
            continue;
        }
        let vals = parse_columns(line, lineno)?;
        if vals.len() < 3 {
            return Err(format!(
                "line {}: expected `t x y`, found {} columns",
                lineno + 1,
                vals.len()
            ));
        }
        blocks.last_mut().unwrap().push(TrajectorySample {
            t: vals[0],
            x: vals[1],
            y: vals[2],
        });
    }
    let mut trajectories = Vec::new();
    let mut dropped = 0;
    for block in blocks.into_iter().filter(|b| !b.is_empty()) {
        match Trajectory::new(block) {
            Ok(t) => trajectories.push(t),
            Err(_) => dropped += 1,
        }
    }
    Ok(LoadedTrajectories {
        trajectories,
        dropped,
    })
}

fn parse_columns(line: &str, lineno: usize) -> std::result::Result<Vec<f64>, String> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| format!("line {}: `{t}`: {e}", lineno + 1))
        })
        .collect()
}

/// Axis-aligned ground rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x_max > self.x_min && self.y_max > self.y_min)
    }
}

/// Smooth random walk at 10 Hz: constant speed drawn from [0.4, 1.8] m/s,
/// Ornstein–Uhlenbeck turn rate, heading reflected at the bounds.
pub fn synthesize_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: Bounds,
    duration: f64,
) -> Result<Trajectory> {
    if bounds.is_degenerate() {
        return Err(Error::InvalidInput(format!("degenerate bounds {bounds:?}")));
    }
    if !(duration >= 3.2) {
        return Err(Error::InvalidInput(format!(
            "duration {duration} s is shorter than 3.2 s"
        )));
    }
    let n = (duration * SAMPLE_RATE_HZ).round() as usize;
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let speed = rng.random_range(0.4..=1.8);
    let mut heading = rng.random_range(-PI..PI);
    let mut x = rng.random_range(bounds.x_min..=bounds.x_max);
    let mut y = rng.random_range(bounds.y_min..=bounds.y_max);
    let mut turn_rate = 0.0f64;
    // OU parameters: mean reversion 1/s, stationary std ~0.35 rad/s.
    let theta = 1.0;
    let sigma = 0.5;

    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        samples.push(TrajectorySample {
            t: k as f64 * dt,
            x,
            y,
        });
        let noise: f64 = StandardNormal.sample(rng);
        turn_rate += -theta * turn_rate * dt + sigma * dt.sqrt() * noise;
        heading += turn_rate * dt;
        let mut nx = x + speed * heading.cos() * dt;
        let mut ny = y + speed * heading.sin() * dt;
        if !(bounds.x_min..=bounds.x_max).contains(&nx) {
            heading = PI - heading;
            nx = x + speed * heading.cos() * dt;
        }
        if !(bounds.y_min..=bounds.y_max).contains(&ny) {
            heading = -heading;
            ny = y + speed * heading.sin() * dt;
        }
        x = nx.clamp(bounds.x_min, bounds.x_max);
        y = ny.clamp(bounds.y_min, bounds.y_max);
    }
    Trajectory::new(samples)
}

/// Per-frame kinematic state of a trajectory window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFrame {
    pub timestamp: f64,
    pub position: Vec2,
    /// Radians.
    pub heading: f64,
    /// m/s.
    pub speed: f64,
    pub velocity: GroundVelocity,
}

/// Velocities by central differences (one-sided at the window edges); heading
/// from the velocity direction, held through near-stationary frames.
pub fn extract_window(t: &Trajectory, start: usize, n_frames: usize) -> Result<Vec<WindowFrame>> {
    if n_frames == 0 || start + n_frames > t.len() {
        return Err(Error::Range(format!(
            "window [{start}, {}) exceeds trajectory of {} samples",
            start + n_frames,
            t.len()
        )));
    }
    let w = &t.samples[start..start + n_frames];
    let vel: Vec<Vec2> = (0..n_frames)
        .map(|k| {
            if n_frames == 1 {
                return Vec2::zeros();
            }
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n_frames - 1 => (k - 1, k),
                k => (k - 1, k + 1),
            };
            let dt = w[b].t - w[a].t;
            Vec2::new((w[b].x - w[a].x) / dt, (w[b].y - w[a].y) / dt)
        })
        .collect();

    let mut heading = vel
        .iter()
        .find(|v| v.norm() >= HEADING_HOLD_SPEED)
        .map(|v| v.y.atan2(v.x))
        .unwrap_or(0.0);
    Ok(w
        .iter()
        .zip(&vel)
        .map(|(s, v)| {
            let speed = v.norm();
            if speed >= HEADING_HOLD_SPEED {
                heading = v.y.atan2(v.x);
            }
            WindowFrame {
                timestamp: s.t,
                position: Vec2::new(s.x, s.y),
                heading,
                speed,
                velocity: GroundVelocity::from_mps(*v),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub pose: Pose,
    /// Commanded platform velocity, ground frame.
    pub command: GroundVelocity,
}

#[derive(Debug, Clone)]
pub struct SensorTrack {
    samples: Vec<SensorSample>,
}

impl SensorTrack {
    pub fn new(samples: Vec<SensorSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(
                "sensor track needs at least two samples".into(),
            ));
        }
        if let Some(i) = samples
            .windows(2)
            .position(|w| !(w[1].pose.timestamp() > w[0].pose.timestamp()))
        {
            return Err(Error::InvalidInput(format!(
                "sensor track timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[SensorSample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].pose.timestamp()
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].pose.timestamp()
    }

    /// Bracketing sample index and blend factor for time `t` (clamped).
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.samples.len();
        let hi = self
            .samples
            .partition_point(|s| s.pose.timestamp() <= t)
            .clamp(1, n - 1);
        let a = self.samples[hi - 1].pose.timestamp();
        let b = self.samples[hi].pose.timestamp();
        (hi - 1, ((t - a) / (b - a)).clamp(0.0, 1.0))
    }

    /// Linear position / spherical-linear orientation between samples.
    pub fn pose_at(&self, t: f64) -> Pose {
        let (i, s) = self.locate(t);
        let pose = self.samples[i]
            .pose
            .interpolate(&self.samples[i + 1].pose, s);
        pose.with_timestamp(t.max(0.0))
    }

    pub fn command_at(&self, t: f64) -> GroundVelocity {
        let (i, s) = self.locate(t);
        let a = self.samples[i].command;
        let b = self.samples[i + 1].command;
        GroundVelocity {
            vx: a.vx + s * (b.vx - a.vx),
            vy: a.vy + s * (b.vy - a.vy),
        }
    }

    /// Central difference of interpolated positions, mm/s.
    pub fn differenced_velocity_at(&self, t: f64, half_window: f64) -> GroundVelocity {
        let lo = (t - half_window).max(self.start_time());
        let hi = (t + half_window).min(self.end_time());
        if hi <= lo {
            return GroundVelocity::ZERO;
        }
        let d = self.pose_at(hi).position() - self.pose_at(lo).position();
        GroundVelocity::from_mps(Vec2::new(d.x, d.y) / (hi - lo))
    }
}

pub fn load_sensor_track(path: &Path) -> Result<SensorTrack> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut samples = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = parse_columns(line, lineno).map_err(fmt)?;
        if v.len() != 10 {
            return Err(fmt(format!(
                "line {}: expected 10 columns `t x y z qw qx qy qz cvx cvy`, found {}",
                lineno + 1,
                v.len()
            )));
        }
        let pose = Pose::new(Vec3::new(v[1], v[2], v[3]), [v[4], v[5], v[6], v[7]], v[0])
            .map_err(|e| fmt(format!("line {}: {e}", lineno + 1)))?;
        let command =
            GroundVelocity::new(v[8], v[9]).map_err(|e| fmt(format!("line {}: {e}", lineno + 1)))?;
        samples.push(SensorSample { pose, command });
    }
    SensorTrack::new(samples).map_err(|e| fmt(e.to_string()))
}

pub fn write_sensor_track(track: &SensorTrack, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("# t x y z qw qx qy qz cvx cvy\n");
    for s in &track.samples {
        let p = s.pose.position();
        let [w, x, y, z] = s.pose.quaternion();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {}",
            s.pose.timestamp(),
            p.x,
            p.y,
            p.z,
            w,
            x,
            y,
            z,
            s.command.vx,
            s.command.vy
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_trajectories(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("# t x y\n");
    for (i, t) in trajectories.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for s in t.samples() {
            let _ = writeln!(out, "{} {} {}", s.t, s.x, s.y);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Robot-like sensor path at 10 Hz: forward motion at `speed` m/s with a
/// slowly drifting turn rate, reflected at the bounds, sensor at fixed
/// `height`. Orientation follows the direction of travel; the command
/// velocity is the exact per-step motion.
pub fn synthesize_sensor_track<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: Bounds,
    duration: f64,
    speed: f64,
    height: f64,
) -> Result<SensorTrack> {
    if bounds.is_degenerate() {
        return Err(Error::InvalidInput(format!("degenerate bounds {bounds:?}")));
    }
    if !(speed >= 0.0) || !(duration > 0.0) {
        return Err(Error::InvalidInput(
            "sensor track needs speed >= 0 and duration > 0".into(),
        ));
    }
    let n = ((duration * SAMPLE_RATE_HZ).round() as usize).max(2);
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let mut x = 0.5 * (bounds.x_min + bounds.x_max);
    let mut y = 0.5 * (bounds.y_min + bounds.y_max);
    let mut heading = rng.random_range(-PI..PI);
    let mut turn_rate = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let (s, c) = heading.sin_cos();
        let vx = speed * c;
        let vy = speed * s;
        let pose = Pose::from_yaw(Vec3::new(x, y, height), heading, k as f64 * dt)?;
        samples.push(SensorSample {
            pose,
            command: GroundVelocity::from_mps(Vec2::new(vx, vy)),
        });
        let noise: f64 = StandardNormal.sample(rng);
        turn_rate += -0.5 * turn_rate * dt + 0.2 * dt.sqrt() * noise;
        let mut nx = x + vx * dt;
        let mut ny = y + vy * dt;
        let mut next_heading = heading + turn_rate * dt;
        // Reflection only changes the heading from the next sample on, so the
        // command velocity always matches the executed step.
        if !(bounds.x_min..=bounds.x_max).contains(&nx) {
            next_heading = PI - heading;
            nx = x;
        }
        if !(bounds.y_min..=bounds.y_max).contains(&ny) {
            next_heading = -next_heading;
            ny = y;
        }
        x = nx;
        y = ny;
        heading = next_heading;
    }
    SensorTrack::new(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_frames: usize,
    pub min_humans: usize,
    pub max_humans: usize,
    /// (height mm, weight kg) pairs sampled uniformly.
    pub model_grid: Vec<(f64, f64)>,
    pub frame_rate: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_frames: 32,
            min_humans: 1,
            max_humans: MAX_HUMANS,
            model_grid: MODEL_GRID.to_vec(),
            frame_rate: SAMPLE_RATE_HZ,
        }
    }
}

impl ScenarioConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_frames == 0 {
            v.push("n_frames must be >= 1".into());
        }
        if self.min_humans < 1 || self.max_humans > MAX_HUMANS || self.min_humans > self.max_humans
        {
            v.push(format!(
                "human count range [{}, {}] must lie within [1, {MAX_HUMANS}]",
                self.min_humans, self.max_humans
            ));
        }
        if self.model_grid.is_empty() {
            v.push("model grid is empty".into());
        }
        if !(self.frame_rate > 0.0) {
            v.push("frame_rate must be positive".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanSpec {
    pub height_mm: f64,
    pub weight_kg: f64,
    /// Index into the trajectory set.
    pub trajectory: usize,
    /// First trajectory sample of the window.
    pub start_index: usize,
    pub initial_phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n_frames: usize,
    /// Sensor-track time of frame 0, seconds.
    pub start_time: f64,
    pub frame_rate: f64,
    pub humans: Vec<HumanSpec>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn frame_time(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.frame_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.humans.is_empty() || self.humans.len() > MAX_HUMANS {
            return Err(Error::InvalidInput(format!(
                "scenario holds {} humans; expected 1 to {MAX_HUMANS}",
                self.humans.len()
            )));
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidInput("scenario has zero frames".into()));
        }
        Ok(())
    }
}

pub fn sample_scenario<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ScenarioConfig,
    trajectories: &[Trajectory],
    sensor: &SensorTrack,
    seed: u64,
) -> Result<ScenarioSpec> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v.join("; ")));
    }
    let span = (cfg.n_frames - 1) as f64 / cfg.frame_rate;
    let last_start = sensor.end_time() - span;
    let starts: Vec<f64> = sensor
        .samples()
        .iter()
        .map(|s| s.pose.timestamp())
        .take_while(|&t| t <= last_start + 1e-9)
        .collect();
    if starts.is_empty() {
        return Err(Error::Range(format!(
            "sensor track of {:.2} s is too short for {} frames",
            sensor.end_time() - sensor.start_time(),
            cfg.n_frames
        )));
    }
    let eligible: Vec<usize> = trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| t.len() >= cfg.n_frames)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no trajectory has at least {} samples",
            cfg.n_frames
        )));
    }

    let start_time = starts[rng.random_range(0..starts.len())];
    let count = rng.random_range(cfg.min_humans..=cfg.max_humans);
    let humans = (0..count)
        .map(|_| {
            let (height_mm, weight_kg) = cfg.model_grid[rng.random_range(0..cfg.model_grid.len())];
            let trajectory = eligible[rng.random_range(0..eligible.len())];
            let start_index =
                rng.random_range(0..=trajectories[trajectory].len() - cfg.n_frames);
            let initial_phase = rng.random_range(0.0..1.0);
            HumanSpec {
                height_mm,
                weight_kg,
                trajectory,
                start_index,
                initial_phase,
            }
        })
        .collect();
    Ok(ScenarioSpec {
        n_frames: cfg.n_frames,
        start_time,
        frame_rate: cfg.frame_rate,
        humans,
        seed,
    })
}
