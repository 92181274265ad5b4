//! Named, runtime-selectable input sources.
//!
//! Each family has a trait and a [`Registry`] mapping a name to a constructor
//! that reads its parameters from a TOML table. Unknown parameter keys are
//! rejected so typos surface as configuration errors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};

use crate::compositor::SensorFrameState;
use crate::error::{Error, Result};
use crate::geometry::{GroundVelocity, Vec3};
use crate::lidar::{render_into, BeamTable, DepthFrame, MIN_RANGE};
use crate::raster::Raster;
use crate::shapes::Primitive;
use crate::trajectory::{
    load_sensor_track, load_trajectories, synthesize_sensor_track, synthesize_trajectory, Bounds, ScenarioSpec,
    SensorTrack, Trajectory,
};

pub type Params = toml::Table;

/// Typed access to a parameter table that remembers which keys were read.
pub struct ParamReader<'a> {
    kind: &'static str,
    name: &'a str,
    params: &'a Params,
    seen: BTreeSet<&'a str>,
    errors: Vec<String>,
}

impl<'a> ParamReader<'a> {
    pub fn new(kind: &'static str, name: &'a str, params: &'a Params) -> Self {
        Self {
            kind,
            name,
            params,
            seen: BTreeSet::new(),
            errors: Vec::new(),
        }
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a toml::Value> {
        self.seen.insert(key);
        self.params.get(key)
    }

    pub fn f64(&mut self, key: &'a str, default: f64) -> f64 {
        match self.raw(key) {
            None => default,
            Some(toml::Value::Float(v)) => *v,
            Some(toml::Value::Integer(v)) => *v as f64,
            Some(v) => {
                self.errors.push(format!("{}.{key}: expected a number, got {v}", self.name));
                default
            }
        }
    }

    pub fn usize(&mut self, key: &'a str, default: usize) -> usize {
        match self.raw(key) {
            None => default,
            Some(toml::Value::Integer(v)) if *v >= 0 => *v as usize,
            Some(v) => {
                self.errors
                    .push(format!("{}.{key}: expected a non-negative integer, got {v}", self.name));
                default
            }
        }
    }

    pub fn bool(&mut self, key: &'a str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(toml::Value::Boolean(b)) => *b,
            Some(v) => {
                self.errors.push(format!("{}.{key}: expected true or false, got {v}", self.name));
                default
            }
        }
    }

    pub fn string(&mut self, key: &'a str, default: &str) -> String {
        match self.raw(key) {
            None => default.to_string(),
            Some(toml::Value::String(s)) => s.clone(),
            Some(v) => {
                self.errors.push(format!("{}.{key}: expected a string, got {v}", self.name));
                default.to_string()
            }
        }
    }

    /// Optional path; absent is not an error.
    pub fn opt_path(&mut self, key: &'a str) -> Option<PathBuf> {
        match self.raw(key) {
            None => None,
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(v) => {
                self.errors.push(format!("{}.{key}: expected a path string, got {v}", self.name));
                None
            }
        }
    }

    /// Raw value for types the reader does not model; marks the key as used.
    pub fn value(&mut self, key: &'a str) -> Option<&'a toml::Value> {
        self.raw(key)
    }

    pub fn error(&mut self, msg: String) {
        self.errors.push(msg);
    }

    /// Problems collected so far plus unknown keys, without failing.
    pub fn into_errors(self) -> Vec<String> {
        let mut errors = self.errors;
        for key in self.params.keys() {
            if !self.seen.contains(key.as_str()) {
                errors.push(format!("{} `{}`: unknown key `{key}`", self.kind, self.name));
            }
        }
        errors
    }

    pub fn path(&mut self, key: &'a str) -> Option<PathBuf> {
        match self.raw(key) {
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            None => {
                self.errors.push(format!("{}.{key}: required path missing", self.name));
                None
            }
            Some(v) => {
                self.errors.push(format!("{}.{key}: expected a path string, got {v}", self.name));
                None
            }
        }
    }

    pub fn bounds(&mut self, key: &'a str, default: Bounds) -> Bounds {
        match self.raw(key) {
            None => default,
            Some(toml::Value::Array(a)) if a.len() == 4 => {
                let v: Vec<f64> = a
                    .iter()
                    .filter_map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)))
                    .collect();
                if v.len() == 4 {
                    let b = Bounds {
                        x_min: v[0],
                        x_max: v[1],
                        y_min: v[2],
                        y_max: v[3],
                    };
                    if b.is_degenerate() {
                        self.errors.push(format!("{}.{key}: degenerate bounds {v:?}", self.name));
                    }
                    b
                } else {
                    self.errors.push(format!("{}.{key}: bounds must be numbers", self.name));
                    default
                }
            }
            Some(v) => {
                self.errors
                    .push(format!("{}.{key}: expected [x_min, x_max, y_min, y_max], got {v}", self.name));
                default
            }
        }
    }

    pub fn check(&mut self, key: &'a str, ok: bool, what: &str) {
        if !ok {
            self.errors.push(format!("{}.{key}: {what}", self.name));
        }
    }

    /// All problems found, including keys nobody asked for.
    pub fn finish(self) -> Result<()> {
        let errors = self.into_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }
}

pub type Constructor<T> = fn(&Params) -> Result<Box<T>>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Constructor<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, ctor: Constructor<T>) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn create(&self, name: &str, params: &Params) -> Result<Box<T>> {
        let ctor = self.entries.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        ctor(params)
    }
}

/// Background range images aligned with the sensor states of one sequence.
pub trait BackgroundSource: Send + Sync {
    fn frames(&self, sensor: &[SensorFrameState], bt: &BeamTable, rng: &mut dyn RngCore) -> Result<Vec<DepthFrame>>;
}

pub trait TrajectorySource: Send + Sync {
    fn trajectories(&self, rng: &mut dyn RngCore) -> Result<Vec<Trajectory>>;
}

pub trait SensorTrackSource: Send + Sync {
    fn track(&self, rng: &mut dyn RngCore) -> Result<SensorTrack>;
}

/// Ground-frame sensor velocity at time `t`.
pub trait SensorVelocitySource: Send + Sync {
    fn velocity(&self, track: &SensorTrack, t: f64) -> GroundVelocity;
}

pub const DEFAULT_BOUNDS: Bounds = Bounds {
    x_min: -15.0,
    x_max: 15.0,
    y_min: -15.0,
    y_max: 15.0,
};

/// Ground plane plus random axis-aligned boxes and upright cylinders, kept
/// clear of the sensor path.
#[derive(Debug, Clone)]
pub struct FlatWorld {
    pub obstacles: usize,
    /// Obstacles are placed within this distance of the first sensor position.
    pub extent: f64,
    /// Minimum horizontal gap between any obstacle and the sensor path.
    pub clearance: f64,
}

impl FlatWorld {
    fn from_params(p: &Params) -> Result<Box<dyn BackgroundSource>> {
        let mut r = ParamReader::new("background", "flat-world", p);
        let obstacles = r.usize("obstacles", 25);
        let extent = r.f64("extent", 30.0);
        let clearance = r.f64("clearance", 1.5);
        r.check("extent", extent > 0.0, "must be positive");
        r.check("clearance", clearance >= 0.0, "must be non-negative");
        r.finish()?;
        Ok(Box::new(FlatWorld {
            obstacles,
            extent,
            clearance,
        }))
    }

    pub fn scene<R: Rng + ?Sized>(&self, sensor: &[SensorFrameState], rng: &mut R) -> Vec<Primitive> {
        let Some(first) = sensor.first() else {
            return Vec::new();
        };
        let o = first.pose.position();
        let path: Vec<(f64, f64)> = sensor
            .iter()
            .map(|s| {
                let p = s.pose.position();
                (p.x, p.y)
            })
            .collect();
        let clear = |cx: f64, cy: f64, r: f64| {
            path.iter()
                .all(|&(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() > r + self.clearance)
        };
        let mut prims = Vec::with_capacity(self.obstacles);
        let mut attempts = 0;
        while prims.len() < self.obstacles && attempts < self.obstacles * 20 {
            attempts += 1;
            let cx = o.x + rng.random_range(-self.extent..self.extent);
            let cy = o.y + rng.random_range(-self.extent..self.extent);
            let prim = if rng.random_bool(0.5) {
                let hx: f64 = rng.random_range(0.25..1.5);
                let hy: f64 = rng.random_range(0.25..1.5);
                let h = rng.random_range(0.5..3.0);
                if !clear(cx, cy, (hx * hx + hy * hy).sqrt()) {
                    continue;
                }
                Primitive::Cuboid {
                    min: Vec3::new(cx - hx, cy - hy, 0.0),
                    max: Vec3::new(cx + hx, cy + hy, h),
                }
            } else {
                let radius = rng.random_range(0.1..0.6);
                let h = rng.random_range(1.0..4.0);
                if !clear(cx, cy, radius) {
                    continue;
                }
                Primitive::Cylinder {
                    center_xy: [cx, cy],
                    radius,
                    z_min: 0.0,
                    z_max: h,
                }
            };
            prims.push(prim);
        }
        prims
    }
}

/// Depth of the z = 0 plane along every beam that points downward.
pub fn render_ground(frame: &mut DepthFrame, sensor: &crate::geometry::Pose, bt: &BeamTable) {
    let rot = sensor.rotation();
    let z0 = sensor.position().z;
    if z0 <= 0.0 {
        return;
    }
    let max_range = bt.config().max_range;
    for r in 0..bt.rows() {
        for c in 0..bt.cols() {
            let dz = (rot * bt.direction(r, c)).z;
            if dz < 0.0 {
                let t = -z0 / dz;
                if (MIN_RANGE..=max_range).contains(&t) {
                    frame.set(r, c, t as f32);
                }
            }
        }
    }
}

impl BackgroundSource for FlatWorld {
    fn frames(&self, sensor: &[SensorFrameState], bt: &BeamTable, rng: &mut dyn RngCore) -> Result<Vec<DepthFrame>> {
        let scene = self.scene(sensor, rng);
        for p in &scene {
            p.validate()?;
        }
        Ok(sensor
            .iter()
            .map(|s| {
                let mut frame = bt.empty_frame();
                render_ground(&mut frame, &s.pose, bt);
                render_into(&mut frame, &scene, &s.pose, bt);
                frame
            })
            .collect())
    }
}

/// Pre-recorded background rasters listed as `t path` lines; each raster is
/// raw little-endian f32, row-major, holes stored as 0. Relative paths are
/// resolved against the list file's directory.
#[derive(Debug, Clone)]
pub struct RasterList {
    pub entries: Vec<(f64, PathBuf)>,
}

impl RasterList {
    fn from_params(p: &Params) -> Result<Box<dyn BackgroundSource>> {
        let mut r = ParamReader::new("background", "raster-list", p);
        let list = r.path("list");
        r.finish()?;
        Ok(Box::new(RasterList::load(&list.expect("checked by finish"))?))
    }

    pub fn load(list: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(list).map_err(|e| Error::io(list, e))?;
        let dir = list.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (t, file) = line.split_once(char::is_whitespace).ok_or_else(|| Error::Format {
                path: list.to_path_buf(),
                reason: format!("line {}: expected `t path`", i + 1),
            })?;
            let t: f64 = t.parse().map_err(|_| Error::Format {
                path: list.to_path_buf(),
                reason: format!("line {}: bad timestamp `{t}`", i + 1),
            })?;
            entries.push((t, dir.join(file.trim())));
        }
        if entries.is_empty() {
            return Err(Error::EmptyInput(format!("{} lists no rasters", list.display())));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { entries })
    }

    /// Entry closest in time to `t`; the earlier one wins ties.
    pub fn nearest(&self, t: f64) -> &(f64, PathBuf) {
        let i = self.entries.partition_point(|e| e.0 < t);
        match (i.checked_sub(1), self.entries.get(i)) {
            (Some(a), Some(b)) if t - self.entries[a].0 <= b.0 - t => &self.entries[a],
            (_, Some(b)) => b,
            (Some(a), None) => &self.entries[a],
            (None, None) => unreachable!("list is non-empty"),
        }
    }
}

pub fn read_raster(path: &Path, rows: usize, cols: usize) -> Result<DepthFrame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 4 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} bytes, expected {rows}x{cols} f32", bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if v.is_finite() && v >= MIN_RANGE as f32 {
                v
            } else {
                crate::lidar::HOLE
            }
        })
        .collect();
    Raster::from_vec(rows, cols, data)
}

pub fn write_raster(frame: &DepthFrame, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = frame.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl BackgroundSource for RasterList {
    fn frames(&self, sensor: &[SensorFrameState], bt: &BeamTable, _rng: &mut dyn RngCore) -> Result<Vec<DepthFrame>> {
        sensor
            .iter()
            .map(|s| read_raster(&self.nearest(s.pose.timestamp()).1, bt.rows(), bt.cols()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryFile {
    pub path: PathBuf,
}

impl TrajectorySource for TrajectoryFile {
    fn trajectories(&self, _rng: &mut dyn RngCore) -> Result<Vec<Trajectory>> {
        let loaded = load_trajectories(&self.path)?;
        if loaded.dropped > 0 {
            log::warn!(
                "{}: dropped {} trajectories violating sampling or speed limits",
                self.path.display(),
                loaded.dropped
            );
        }
        Ok(loaded.trajectories)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTrajectories {
    pub count: usize,
    pub duration: f64,
    pub bounds: Bounds,
}

impl TrajectorySource for SyntheticTrajectories {
    fn trajectories(&self, rng: &mut dyn RngCore) -> Result<Vec<Trajectory>> {
        (0..self.count)
            .map(|_| synthesize_trajectory(rng, self.bounds, self.duration))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SensorTrackFile {
    pub path: PathBuf,
}

impl SensorTrackSource for SensorTrackFile {
    fn track(&self, _rng: &mut dyn RngCore) -> Result<SensorTrack> {
        load_sensor_track(&self.path)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSensorTrack {
    pub duration: f64,
    pub speed: f64,
    pub height: f64,
    pub bounds: Bounds,
}

impl SensorTrackSource for SyntheticSensorTrack {
    fn track(&self, rng: &mut dyn RngCore) -> Result<SensorTrack> {
        synthesize_sensor_track(rng, self.bounds, self.duration, self.speed, self.height)
    }
}

/// Uses the track's recorded command velocity.
#[derive(Debug, Clone, Copy)]
pub struct CommandVelocity;

impl SensorVelocitySource for CommandVelocity {
    fn velocity(&self, track: &SensorTrack, t: f64) -> GroundVelocity {
        track.command_at(t)
    }
}

/// Central difference of interpolated sensor positions.
#[derive(Debug, Clone, Copy)]
pub struct PoseDifferenceVelocity {
    pub half_window: f64,
}

impl SensorVelocitySource for PoseDifferenceVelocity {
    fn velocity(&self, track: &SensorTrack, t: f64) -> GroundVelocity {
        track.differenced_velocity_at(t, self.half_window)
    }
}

pub fn background_registry() -> Registry<dyn BackgroundSource> {
    let mut r = Registry::new("background");
    r.register("flat-world", FlatWorld::from_params)
        .register("raster-list", RasterList::from_params);
    r
}

pub fn trajectory_registry() -> Registry<dyn TrajectorySource> {
    let mut r: Registry<dyn TrajectorySource> = Registry::new("trajectory");
    r.register("file", |p| {
        let mut r = ParamReader::new("trajectory", "file", p);
        let path = r.path("path");
        r.finish()?;
        Ok(Box::new(TrajectoryFile {
            path: path.expect("checked by finish"),
        }))
    })
    .register("synthetic", |p| {
        let mut r = ParamReader::new("trajectory", "synthetic", p);
        let count = r.usize("count", 200);
        let duration = r.f64("duration", 20.0);
        let bounds = r.bounds("bounds", DEFAULT_BOUNDS);
        r.check("count", count > 0, "must be at least 1");
        r.check("duration", duration > 0.0, "must be positive");
        r.finish()?;
        Ok(Box::new(SyntheticTrajectories {
            count,
            duration,
            bounds,
        }))
    });
    r
}

pub fn sensor_track_registry() -> Registry<dyn SensorTrackSource> {
    let mut r: Registry<dyn SensorTrackSource> = Registry::new("sensor track");
    r.register("file", |p| {
        let mut r = ParamReader::new("sensor track", "file", p);
        let path = r.path("path");
        r.finish()?;
        Ok(Box::new(SensorTrackFile {
            path: path.expect("checked by finish"),
        }))
    })
    .register("synthetic", |p| {
        let mut r = ParamReader::new("sensor track", "synthetic", p);
        let duration = r.f64("duration", 60.0);
        let speed = r.f64("speed", 0.5);
        let height = r.f64("height", 0.8);
        let bounds = r.bounds("bounds", DEFAULT_BOUNDS);
        r.check("duration", duration > 0.0, "must be positive");
        r.check("speed", speed >= 0.0, "must be non-negative");
        r.check("height", height > 0.0, "must be positive");
        r.finish()?;
        Ok(Box::new(SyntheticSensorTrack {
            duration,
            speed,
            height,
            bounds,
        }))
    });
    r
}

pub fn sensor_velocity_registry() -> Registry<dyn SensorVelocitySource> {
    let mut r: Registry<dyn SensorVelocitySource> = Registry::new("sensor velocity");
    r.register("command", |p| {
        ParamReader::new("sensor velocity", "command", p).finish()?;
        Ok(Box::new(CommandVelocity))
    })
    .register("pose-diff", |p| {
        let mut r = ParamReader::new("sensor velocity", "pose-diff", p);
        let half_window = r.f64("half_window", 0.05);
        r.check("half_window", half_window > 0.0, "must be positive");
        r.finish()?;
        Ok(Box::new(PoseDifferenceVelocity { half_window }))
    });
    r
}

/// Sensor pose and velocity at every frame time of `spec`.
pub fn sensor_states(spec: &ScenarioSpec, track: &SensorTrack, velocity: &dyn SensorVelocitySource) -> Vec<SensorFrameState> {
    (0..spec.n_frames)
        .map(|k| {
            let t = spec.frame_time(k);
            SensorFrameState::new(track.pose_at(t), velocity.velocity(track, t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::Pose;
    use crate::lidar::{is_hole, LidarConfig};

    fn table(s: &str) -> Params {
        s.parse().unwrap()
    }

    #[test]
    fn registries_list_their_variants() {
        assert_eq!(background_registry().names(), ["flat-world", "raster-list"]);
        assert_eq!(trajectory_registry().names(), ["file", "synthetic"]);
        assert_eq!(sensor_track_registry().names(), ["file", "synthetic"]);
        assert_eq!(sensor_velocity_registry().names(), ["command", "pose-diff"]);
    }

    #[test]
    fn unknown_names_and_keys_are_rejected() {
        let err = background_registry().create("mesh", &Params::new()).err().unwrap();
        assert!(matches!(err, Error::UnknownStrategy { .. }), "{err}");
        let err = background_registry()
            .create("flat-world", &table("obstacles = 3\ncolour = 1"))
            .err()
            .unwrap();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = trajectory_registry()
            .create("synthetic", &table("count = -1\nduration = 0"))
            .err()
            .unwrap();
        let msg = err.to_string();
        assert!(msg.contains("count") && msg.contains("duration"), "{msg}");
    }

    #[test]
    fn ground_depth_matches_height_over_sine() {
        let bt = BeamTable::new(&LidarConfig::default()).unwrap();
        let pose = Pose::new(Vec3::new(0.0, 0.0, 0.8), [1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let mut f = bt.empty_frame();
        render_ground(&mut f, &pose, &bt);
        for r in 0..bt.rows() {
            let el = bt.elevations()[r].to_radians();
            let d = *f.get(r, 0);
            if el < 0.0 && 0.8 / -el.sin() <= 100.0 {
                assert!((d as f64 - 0.8 / -el.sin()).abs() < 1e-4);
            } else {
                assert!(is_hole(d));
            }
        }
    }

    #[test]
    fn flat_world_keeps_sensor_path_clear() {
        let w = FlatWorld {
            obstacles: 40,
            extent: 10.0,
            clearance: 1.5,
        };
        let pose = Pose::new(Vec3::new(0.0, 0.0, 0.8), [1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let states = vec![SensorFrameState::new(pose, GroundVelocity::ZERO)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scene = w.scene(&states, &mut rng);
        assert!(!scene.is_empty());
        for p in &scene {
            let (c, r) = p.bounding_sphere();
            let horiz = (c.x * c.x + c.y * c.y).sqrt();
            assert!(horiz > 1.5 || r > horiz, "{p:?}");
            assert!(p.ray_hit(&Vec3::new(0.0, 0.0, 0.8), &Vec3::new(0.0, 0.0, 1.0)).is_none());
        }
    }

    #[test]
    fn raster_list_matches_nearest_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let lidar = LidarConfig {
            n_beams: 2,
            n_columns: 4,
            ..LidarConfig::default()
        };
        let bt = BeamTable::new(&lidar).unwrap();
        let mut list = String::new();
        for (i, t) in [0.0, 0.1, 0.2].iter().enumerate() {
            let f = Raster::filled(2, 4, 1.0 + i as f32);
            let name = format!("bg{i}.f32");
            write_raster(&f, &dir.path().join(&name)).unwrap();
            list.push_str(&format!("{t} {name}\n"));
        }
        std::fs::write(dir.path().join("list.txt"), list).unwrap();
        let mut params = Params::new();
        params.insert("list".into(), dir.path().join("list.txt").to_string_lossy().into_owned().into());
        let src = background_registry().create("raster-list", &params).unwrap();
        let states: Vec<_> = [0.04, 0.06, 0.5]
            .iter()
            .map(|&t| {
                let pose = Pose::new(Vec3::zeros(), [1.0, 0.0, 0.0, 0.0], t).unwrap();
                SensorFrameState::new(pose, GroundVelocity::ZERO)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frames = src.frames(&states, &bt, &mut rng).unwrap();
        let firsts: Vec<f32> = frames.iter().map(|f| *f.get(0, 0)).collect();
        assert_eq!(firsts, [1.0, 2.0, 3.0]);
    }
}
