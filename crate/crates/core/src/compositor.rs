//! Per-frame compositing of human layers over background range images and
//! the sequence loop that drives walking models through their windows.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{rotate_to_sensor, GroundVelocity, Pose, Vec2};
use crate::human::{advance_phase, body_surface, build_body, GaitCycle, HumanWalkingModel};
use crate::lidar::{apply_range_noise, depth_to_xyz, is_hole, render_body, BeamTable, DepthFrame, LidarConfig, HOLE};
use crate::raster::Raster;
use crate::trajectory::{extract_window, ScenarioSpec, Trajectory, WindowFrame};

#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Label {
    #[default]
    Background = 0,
    Human = 1,
}

impl TryFrom<u8> for Label {
    type Error = u8;

    fn try_from(v: u8) -> std::result::Result<Self, u8> {
        match v {
            0 => Ok(Label::Background),
            1 => Ok(Label::Human),
            other => Err(other),
        }
    }
}

pub type LabelMap = Raster<Label>;
/// Sensor-frame (vx, vy) in mm/s.
pub type VelocityMap = Raster<[f32; 2]>;
/// Human id owning each pixel, `None` for background and holes.
pub type WinnerMap = Raster<Option<u16>>;
/// Sensor-frame coordinates in meters, zero on holes.
pub type XyzFrame = Raster<[f32; 3]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub depth: DepthFrame,
    pub labels: LabelMap,
    pub winners: WinnerMap,
}

/// Pixel-wise minimum over the valid background depth and all valid layer
/// depths. Exact ties go to humans over background, then to the lower id.
pub fn composite_frame(background: &DepthFrame, layers: &[(DepthFrame, u16)]) -> Result<Composite> {
    let (rows, cols) = background.dims();
    for (layer, _) in layers {
        layer.ensure_dims(rows, cols)?;
    }
    let mut depth = background.clone();
    let mut winners: WinnerMap = Raster::filled(rows, cols, None);
    for (layer, id) in layers {
        let (out, win) = (depth.as_mut_slice(), winners.as_mut_slice());
        for ((d, w), &h) in out.iter_mut().zip(win.iter_mut()).zip(layer.as_slice()) {
            if is_hole(h) {
                continue;
            }
            let take = is_hole(*d)
                || h < *d
                || (h == *d && w.is_none_or(|cur| *id < cur));
            if take {
                *d = h;
                *w = Some(*id);
            }
        }
    }
    let labels = winners.map(|w| if w.is_some() { Label::Human } else { Label::Background });
    Ok(Composite {
        depth,
        labels,
        winners,
    })
}

/// Sensor-frame pixel velocity of a human moving at `human` seen from a
/// sensor moving at `sensor`, rounded to f32.
pub fn relative_velocity(human: GroundVelocity, sensor: GroundVelocity, yaw: f64) -> [f32; 2] {
    let d = human - sensor;
    let [x, y] = rotate_to_sensor([d.vx, d.vy], yaw);
    [x as f32, y as f32]
}

/// Velocity map from labels and winners; `human_velocities` is indexed by
/// human id.
pub fn velocity_map(
    labels: &LabelMap,
    winners: &WinnerMap,
    human_velocities: &[GroundVelocity],
    sensor_velocity: GroundVelocity,
    sensor: &Pose,
) -> Result<VelocityMap> {
    velocity_map_with_yaw(labels, winners, human_velocities, sensor_velocity, sensor.yaw())
}

pub fn velocity_map_with_yaw(
    labels: &LabelMap,
    winners: &WinnerMap,
    human_velocities: &[GroundVelocity],
    sensor_velocity: GroundVelocity,
    yaw: f64,
) -> Result<VelocityMap> {
    winners.ensure_dims(labels.rows(), labels.cols())?;
    let background = relative_velocity(GroundVelocity::ZERO, sensor_velocity, yaw);
    let per_human: Vec<[f32; 2]> = human_velocities
        .iter()
        .map(|&v| relative_velocity(v, sensor_velocity, yaw))
        .collect();
    let mut data = Vec::with_capacity(labels.len());
    for (i, (&label, &winner)) in labels.as_slice().iter().zip(winners.as_slice()).enumerate() {
        let v = match label {
            Label::Background => background,
            Label::Human => {
                let id = winner.ok_or_else(|| {
                    Error::Consistency(format!(
                        "human pixel ({}, {}) has no winner id",
                        i / labels.cols(),
                        i % labels.cols()
                    ))
                })?;
                *per_human.get(id as usize).ok_or_else(|| {
                    Error::Consistency(format!("winner id {id} has no velocity"))
                })?
            }
        };
        data.push(v);
    }
    Raster::from_vec(labels.rows(), labels.cols(), data)
}

pub fn xyz_frame(depth: &DepthFrame, bt: &BeamTable) -> Result<XyzFrame> {
    Ok(depth_to_xyz(depth, bt)?.map(|p| [p[0] as f32, p[1] as f32, p[2] as f32]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub depth: DepthFrame,
    pub xyz: Option<XyzFrame>,
    pub labels: LabelMap,
    pub velocity: Option<VelocityMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub lidar: LidarConfig,
    pub seed: u64,
    pub frames: Vec<Frame>,
}

impl SequenceRecord {
    /// Dimension and label-soundness problems, one message per offending pixel.
    pub fn violations(&self) -> Vec<String> {
        let (rows, cols) = (self.lidar.n_beams, self.lidar.n_columns);
        let mut out = Vec::new();
        for (k, f) in self.frames.iter().enumerate() {
            let mut dims = vec![f.depth.dims(), f.labels.dims()];
            dims.extend(f.xyz.as_ref().map(|x| x.dims()));
            dims.extend(f.velocity.as_ref().map(|v| v.dims()));
            if let Some(d) = dims.iter().find(|&&d| d != (rows, cols)) {
                out.push(format!("frame {k}: raster {d:?} != ({rows}, {cols})"));
                continue;
            }
            for (r, c, &l) in f.labels.iter_indexed() {
                if l == Label::Human && is_hole(*f.depth.get(r, c)) {
                    out.push(format!("frame {k} pixel ({r}, {c}): human label on hole"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrameState {
    pub pose: Pose,
    /// Heading used for the velocity transform, radians.
    pub yaw: f64,
    pub velocity: GroundVelocity,
}

impl SensorFrameState {
    pub fn new(pose: Pose, velocity: GroundVelocity) -> Self {
        Self {
            yaw: pose.yaw(),
            pose,
            velocity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanFrameState {
    pub position: Vec2,
    pub heading: f64,
    pub phase: f64,
    pub velocity: GroundVelocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanTrack {
    pub height_mm: f64,
    pub weight_kg: f64,
    pub trajectory: usize,
    pub start_index: usize,
    pub frames: Vec<HumanFrameState>,
}

/// Everything needed to replay the velocity maps of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMetadata {
    pub seed: u64,
    pub frame_rate: f64,
    pub start_time: f64,
    pub sensor: Vec<SensorFrameState>,
    pub humans: Vec<HumanTrack>,
}

impl SequenceMetadata {
    pub fn n_frames(&self) -> usize {
        self.sensor.len()
    }

    pub fn human_velocities(&self, frame: usize) -> Vec<GroundVelocity> {
        self.humans.iter().map(|h| h.frames[frame].velocity).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SequenceOptions {
    /// Keep every human at its initial phase.
    pub freeze_gait: bool,
    /// Keep every human at its first window position with zero velocity.
    pub freeze_trajectory: bool,
}

#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub record: SequenceRecord,
    pub metadata: SequenceMetadata,
    pub winners: Vec<WinnerMap>,
}

fn frozen(w: &WindowFrame) -> WindowFrame {
    WindowFrame {
        speed: 0.0,
        velocity: GroundVelocity::ZERO,
        ..*w
    }
}

/// Runs the render / composite / label / advance loop over `spec.n_frames`
/// frames. `backgrounds[k]` and `sensor[k]` belong to frame k; the random
/// generator only feeds range noise and dropout.
#[allow(clippy::too_many_arguments)]
pub fn generate_sequence<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    backgrounds: &[DepthFrame],
    sensor: &[SensorFrameState],
    trajectories: &[Trajectory],
    gait: &Arc<GaitCycle>,
    bt: &BeamTable,
    options: SequenceOptions,
    rng: &mut R,
) -> Result<GeneratedSequence> {
    spec.validate()?;
    let n = spec.n_frames;
    if backgrounds.len() < n || sensor.len() < n {
        return Err(Error::InvalidInput(format!(
            "{n} frames need as many backgrounds ({}) and sensor states ({})",
            backgrounds.len(),
            sensor.len()
        )));
    }
    if spec.humans.len() > u16::MAX as usize {
        return Err(Error::InvalidInput("too many humans".into()));
    }
    let cfg = bt.config();
    let dt = 1.0 / spec.frame_rate;

    let mut models = Vec::with_capacity(spec.humans.len());
    let mut windows = Vec::with_capacity(spec.humans.len());
    for (i, h) in spec.humans.iter().enumerate() {
        let traj = trajectories.get(h.trajectory).ok_or_else(|| {
            Error::InvalidInput(format!("human {i} references missing trajectory {}", h.trajectory))
        })?;
        let mut window = extract_window(traj, h.start_index, n)?;
        if options.freeze_trajectory {
            let first = frozen(&window[0]);
            window = vec![first; n];
        }
        let body = Arc::new(build_body(h.height_mm, h.weight_kg)?);
        models.push(HumanWalkingModel::new(body, gait.clone(), h.initial_phase)?);
        windows.push(window);
    }

    let mut frames = Vec::with_capacity(n);
    let mut all_winners = Vec::with_capacity(n);
    let mut tracks: Vec<Vec<HumanFrameState>> = vec![Vec::with_capacity(n); models.len()];
    for k in 0..n {
        let background = &backgrounds[k];
        background.ensure_dims(bt.rows(), bt.cols())?;
        let s = &sensor[k];
        let mut layers = Vec::with_capacity(models.len());
        let mut velocities = Vec::with_capacity(models.len());
        for (id, (model, window)) in models.iter_mut().zip(&windows).enumerate() {
            let w = &window[k];
            model.position = w.position;
            model.heading = w.heading;
            model.ground_velocity = w.velocity;
            let mut layer = render_body(&body_surface(model), &s.pose, bt)?;
            apply_range_noise(&mut layer, cfg.range_noise_sigma, cfg.max_range, rng);
            layers.push((layer, id as u16));
            velocities.push(w.velocity);
            tracks[id].push(HumanFrameState {
                position: w.position,
                heading: w.heading,
                phase: model.phase,
                velocity: w.velocity,
            });
        }
        let mut comp = composite_frame(background, &layers)?;
        if cfg.dropout_probability > 0.0 {
            let p = cfg.dropout_probability;
            let slices = comp.depth.as_mut_slice().iter_mut().zip(comp.winners.as_mut_slice());
            for ((d, w), l) in slices.zip(comp.labels.as_mut_slice()) {
                if rng.random_bool(p) {
                    *d = HOLE;
                    *w = None;
                    *l = Label::Background;
                }
            }
        }
        let velocity = velocity_map_with_yaw(&comp.labels, &comp.winners, &velocities, s.velocity, s.yaw)?;
        let xyz = xyz_frame(&comp.depth, bt)?;
        frames.push(Frame {
            depth: comp.depth,
            xyz: Some(xyz),
            labels: comp.labels,
            velocity: Some(velocity),
        });
        all_winners.push(comp.winners);

        if !options.freeze_gait {
            for (model, window) in models.iter_mut().zip(&windows) {
                model.phase = advance_phase(model, window[k].speed, dt)?;
            }
        }
    }

    let humans = spec
        .humans
        .iter()
        .zip(tracks)
        .map(|(h, frames)| HumanTrack {
            height_mm: h.height_mm,
            weight_kg: h.weight_kg,
            trajectory: h.trajectory,
            start_index: h.start_index,
            frames,
        })
        .collect();
    Ok(GeneratedSequence {
        record: SequenceRecord {
            lidar: cfg.clone(),
            seed: spec.seed,
            frames,
        },
        metadata: SequenceMetadata {
            seed: spec.seed,
            frame_rate: spec.frame_rate,
            start_time: spec.start_time,
            sensor: sensor[..n].to_vec(),
            humans,
        },
        winners: all_winners,
    })
}

/// Recomputes every velocity map from labels, winners and metadata and
/// reports the first pixel that differs bit-wise, per frame.
pub fn replay_velocities(
    record: &SequenceRecord,
    winners: &[WinnerMap],
    meta: &SequenceMetadata,
) -> Vec<String> {
    let mut out = Vec::new();
    for (k, f) in record.frames.iter().enumerate() {
        let (Some(stored), Some(win), Some(s)) = (&f.velocity, winners.get(k), meta.sensor.get(k)) else {
            out.push(format!("frame {k}: missing velocity, winners or sensor state"));
            continue;
        };
        match velocity_map_with_yaw(&f.labels, win, &meta.human_velocities(k), s.velocity, s.yaw) {
            Ok(v) => {
                if let Some((r, c, _)) = v
                    .iter_indexed()
                    .find(|&(r, c, a)| !same_bits(a, stored.get(r, c)))
                {
                    out.push(format!("frame {k} pixel ({r}, {c}): velocity mismatch"));
                }
            }
            Err(e) => out.push(format!("frame {k}: {e}")),
        }
    }
    out
}

pub fn same_bits(a: &[f32; 2], b: &[f32; 2]) -> bool {
    a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::Vec3;
    use crate::human::DEFAULT_GAIT_SAMPLES;
    use crate::trajectory::{HumanSpec, TrajectorySample};

    fn frame(vals: &[f32]) -> DepthFrame {
        Raster::from_vec(1, vals.len(), vals.to_vec()).unwrap()
    }

    #[test]
    fn min_selection_and_holes() {
        let bg = frame(&[5.0, HOLE, HOLE, 2.0]);
        let h = frame(&[3.2, 3.2, HOLE, 3.0]);
        let c = composite_frame(&bg, &[(h, 0)]).unwrap();
        assert_eq!(c.depth.as_slice(), &[3.2, 3.2, HOLE, 2.0]);
        assert_eq!(
            c.labels.as_slice(),
            &[Label::Human, Label::Human, Label::Background, Label::Background]
        );
        assert_eq!(c.winners.as_slice(), &[Some(0), Some(0), None, None]);
    }

    #[test]
    fn nearer_human_wins_and_ties_break_low() {
        let bg = frame(&[HOLE, 4.0, 4.0]);
        let a = frame(&[3.2, 4.0, 3.0]);
        let b = frame(&[2.9, 4.0, 3.0]);
        let c = composite_frame(&bg, &[(b, 1), (a, 0)]).unwrap();
        assert_eq!(c.depth.as_slice(), &[2.9, 4.0, 3.0]);
        assert_eq!(c.winners.as_slice(), &[Some(1), Some(0), Some(0)]);
        assert!(c.labels.as_slice().iter().all(|&l| l == Label::Human));
    }

    #[test]
    fn composite_rejects_mismatched_layer() {
        let bg = frame(&[1.0, 2.0]);
        let err = composite_frame(&bg, &[(frame(&[1.0]), 0)]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn velocity_map_cases() {
        let labels = Raster::from_vec(1, 2, vec![Label::Human, Label::Background]).unwrap();
        let winners = Raster::from_vec(1, 2, vec![Some(0), None]).unwrap();
        let vh = GroundVelocity::new(1200.0, 0.0).unwrap();
        let vs = GroundVelocity::new(500.0, 0.0).unwrap();
        let v = velocity_map(&labels, &winners, &[vh], vs, &Pose::identity()).unwrap();
        assert_eq!(v.as_slice(), &[[700.0, 0.0], [-500.0, 0.0]]);

        let still = velocity_map(&labels, &winners, &[GroundVelocity::ZERO], GroundVelocity::ZERO, &Pose::identity())
            .unwrap();
        assert!(still.as_slice().iter().all(|p| p[0] == 0.0 && p[1] == 0.0));
    }

    #[test]
    fn human_pixel_without_winner_is_inconsistent() {
        let labels = Raster::from_vec(1, 1, vec![Label::Human]).unwrap();
        let winners = Raster::from_vec(1, 1, vec![None]).unwrap();
        let err = velocity_map(&labels, &winners, &[], GroundVelocity::ZERO, &Pose::identity()).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    fn straight_line(speed: f64, y: f64, n: usize) -> Trajectory {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 * 0.1;
                TrajectorySample { t, x: 5.0, y: y + speed * t }
            })
            .collect();
        Trajectory::new(samples).unwrap()
    }

    fn fixture(speed: f64) -> (ScenarioSpec, Vec<Trajectory>, BeamTable, Vec<DepthFrame>, Vec<SensorFrameState>) {
        let bt = BeamTable::new(&LidarConfig::default()).unwrap();
        let spec = ScenarioSpec {
            n_frames: 8,
            start_time: 0.0,
            frame_rate: 10.0,
            humans: vec![HumanSpec {
                height_mm: 1700.0,
                weight_kg: 60.0,
                trajectory: 0,
                start_index: 0,
                initial_phase: 0.25,
            }],
            seed: 3,
        };
        let pose = Pose::new(Vec3::new(0.0, 0.0, 0.8), [1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let sensor = vec![SensorFrameState::new(pose, GroundVelocity::ZERO); 8];
        let bg = vec![bt.empty_frame(); 8];
        (spec, vec![straight_line(speed, -0.4, 10)], bt, bg, sensor)
    }

    fn run(speed: f64) -> GeneratedSequence {
        let (spec, trajs, bt, bg, sensor) = fixture(speed);
        let gait = Arc::new(GaitCycle::procedural(DEFAULT_GAIT_SAMPLES).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        generate_sequence(&spec, &bg, &sensor, &trajs, &gait, &bt, SequenceOptions::default(), &mut rng).unwrap()
    }

    #[test]
    fn sequence_has_requested_frames_and_replays() {
        let g = run(1.2);
        assert_eq!(g.record.frames.len(), 8);
        assert!(g.record.violations().is_empty());
        assert!(replay_velocities(&g.record, &g.winners, &g.metadata).is_empty());
        let humans: usize = g.record.frames[0]
            .labels
            .as_slice()
            .iter()
            .filter(|&&l| l == Label::Human)
            .count();
        assert!(humans > 50, "{humans}");
        let m = &g.metadata.humans[0];
        assert_eq!(m.frames.len(), 8);
        assert!(m.frames[1].phase != m.frames[0].phase);
    }

    #[test]
    fn stationary_human_keeps_silhouette() {
        let g = run(0.0);
        let first = &g.record.frames[0];
        for f in &g.record.frames[1..] {
            assert_eq!(f.depth, first.depth);
            assert_eq!(f.labels, first.labels);
        }
        assert!(g.metadata.humans[0].frames.iter().all(|s| s.phase == 0.25));
    }

    #[test]
    fn no_humans_in_view_leaves_background() {
        let (mut spec, _, bt, _, sensor) = fixture(1.0);
        let far = Trajectory::new(
            (0..10)
                .map(|k| TrajectorySample { t: k as f64 * 0.1, x: 500.0, y: 0.0 })
                .collect(),
        )
        .unwrap();
        spec.humans[0].trajectory = 0;
        let mut bg = bt.empty_frame();
        for (i, d) in bg.as_mut_slice().iter_mut().enumerate() {
            *d = if i % 3 == 0 { HOLE } else { 1.0 + (i % 50) as f32 * 0.5 };
        }
        let bgs = vec![bg.clone(); 8];
        let gait = Arc::new(GaitCycle::procedural(DEFAULT_GAIT_SAMPLES).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = generate_sequence(&spec, &bgs, &sensor, &[far], &gait, &bt, SequenceOptions::default(), &mut rng)
            .unwrap();
        for f in &g.record.frames {
            assert_eq!(f.depth, bg);
            assert!(f.labels.as_slice().iter().all(|&l| l == Label::Background));
        }
    }

    #[test]
    fn adding_a_layer_never_increases_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mk = |rng: &mut ChaCha8Rng| {
                let v: Vec<f32> = (0..16)
                    .map(|_| if rng.random_bool(0.3) { HOLE } else { rng.random_range(0.5f32..20.0) })
                    .collect();
                frame(&v)
            };
            let bg = mk(&mut rng);
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let one = composite_frame(&bg, &[(a.clone(), 0)]).unwrap();
            let two = composite_frame(&bg, &[(a, 0), (b, 1)]).unwrap();
            for (x, y) in one.depth.as_slice().iter().zip(two.depth.as_slice()) {
                assert!(is_hole(*x) || *y <= *x);
            }
        }
    }
}
