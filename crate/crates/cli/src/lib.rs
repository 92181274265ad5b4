//! Dataset-level operations behind the `seqgen` binary.

pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqgen_core::compositor::{generate_sequence, Frame, GeneratedSequence, Label, SensorFrameState};
use seqgen_core::dataset::{
    check_record, decode_sequence_unchecked, encode_sequence, export_preview, metadata_from_xml, metadata_to_xml,
    read_sequence,
};
use seqgen_core::human::{GaitCycle, DEFAULT_GAIT_SAMPLES};
use seqgen_core::lidar::{is_hole, BeamTable, DepthFrame};
use seqgen_core::sources::{
    background_registry, sensor_states, sensor_track_registry, sensor_velocity_registry, trajectory_registry,
    BackgroundSource, SensorVelocitySource,
};
use seqgen_core::trajectory::{sample_scenario, ScenarioSpec, SensorTrack, Trajectory};

pub use config::GenerationConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("validation failed with {} problem(s):\n  {}", .0.len(), .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] seqgen_core::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(seqgen_core::Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub index: usize,
    pub seed: u64,
    pub file: String,
    pub sha256: String,
    pub metadata: String,
    pub metadata_sha256: String,
    pub humans: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: serde_json::Value,
    pub sequences: Vec<SequenceEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed of sequence `index`: the first word of ChaCha stream `index + 1`
/// under the master seed. Stream 0 feeds the shared assets.
pub fn sequence_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// Inputs shared by every sequence of a dataset.
pub struct Assets {
    pub bt: BeamTable,
    pub trajectories: Vec<Trajectory>,
    pub track: SensorTrack,
    pub gait: Arc<GaitCycle>,
    pub background: Box<dyn BackgroundSource>,
    pub velocity: Box<dyn SensorVelocitySource>,
}

impl Assets {
    pub fn build(cfg: &GenerationConfig) -> Result<Self, CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let trajectories = trajectory_registry()
            .create(&cfg.trajectories.name, &cfg.trajectories.params)?
            .trajectories(&mut rng)?;
        let track = sensor_track_registry()
            .create(&cfg.sensor.name, &cfg.sensor.params)?
            .track(&mut rng)?;
        let gait = match &cfg.gait {
            Some(p) => GaitCycle::from_table_file(p)?,
            None => GaitCycle::procedural(DEFAULT_GAIT_SAMPLES)?,
        };
        Ok(Self {
            bt: BeamTable::new(&cfg.lidar)?,
            trajectories,
            track,
            gait: Arc::new(gait),
            background: background_registry().create(&cfg.background.name, &cfg.background.params)?,
            velocity: sensor_velocity_registry().create(&cfg.sensor_velocity.name, &cfg.sensor_velocity.params)?,
        })
    }
}

/// Scenario, sensor states, background frames and the generator state that
/// continues into rendering, for the sequence with `seed`.
pub struct Prepared {
    pub spec: ScenarioSpec,
    pub sensor: Vec<SensorFrameState>,
    pub backgrounds: Vec<DepthFrame>,
    pub rng: ChaCha8Rng,
}

pub fn prepare(cfg: &GenerationConfig, assets: &Assets, seed: u64) -> Result<Prepared, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = sample_scenario(&mut rng, &cfg.scenario, &assets.trajectories, &assets.track, seed)?;
    let sensor = sensor_states(&spec, &assets.track, assets.velocity.as_ref());
    let backgrounds = assets.background.frames(&sensor, &assets.bt, &mut rng)?;
    Ok(Prepared {
        spec,
        sensor,
        backgrounds,
        rng,
    })
}

/// One sequence, fully determined by the config, the shared assets and `seed`.
pub fn generate_one(cfg: &GenerationConfig, assets: &Assets, seed: u64) -> Result<GeneratedSequence, CliError> {
    let mut p = prepare(cfg, assets, seed)?;
    Ok(generate_sequence(
        &p.spec,
        &p.backgrounds,
        &p.sensor,
        &assets.trajectories,
        &assets.gait,
        &assets.bt,
        cfg.options,
        &mut p.rng,
    )?)
}

struct Cleanup {
    dir: PathBuf,
    created_dir: bool,
    files: std::sync::Mutex<Vec<PathBuf>>,
    armed: bool,
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        for f in self.files.lock().map(|g| g.clone()).unwrap_or_default() {
            let _ = std::fs::remove_file(f);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

fn write_tracked(cleanup: &Cleanup, path: PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    cleanup.files.lock().expect("cleanup list poisoned").push(path.clone());
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))
}

/// Writes `n_sequences` LSEQ files, their XML sidecars and a manifest into
/// `out`, which must be absent or empty. Output bytes do not depend on `jobs`.
/// Anything written is removed again if generation fails.
pub fn cmd_generate(cfg: &GenerationConfig, out: &Path, jobs: usize) -> Result<Manifest, CliError> {
    let created_dir = !out.exists();
    if !created_dir {
        let mut entries = std::fs::read_dir(out).map_err(|e| io_err(out, e))?;
        if entries.next().is_some() {
            return Err(CliError::Other(format!("output directory {} is not empty", out.display())));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut cleanup = Cleanup {
        dir: out.to_path_buf(),
        created_dir,
        files: Default::default(),
        armed: true,
    };

    let assets = Assets::build(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let sequences: Vec<SequenceEntry> = pool.install(|| {
        (0..cfg.n_sequences)
            .into_par_iter()
            .map(|i| {
                let seed = sequence_seed(cfg.seed, i);
                let g = generate_one(cfg, &assets, seed)?;
                let file = format!("seq_{i:05}.lseq");
                let metadata = format!("seq_{i:05}.xml");
                let bytes = encode_sequence(&g.record)?;
                let xml = metadata_to_xml(&g.metadata)?;
                write_tracked(&cleanup, out.join(&file), &bytes)?;
                write_tracked(&cleanup, out.join(&metadata), xml.as_bytes())?;
                log::info!("sequence {i}: {} humans", g.metadata.humans.len());
                Ok(SequenceEntry {
                    index: i,
                    seed,
                    file,
                    sha256: sha256_hex(&bytes),
                    metadata,
                    metadata_sha256: sha256_hex(xml.as_bytes()),
                    humans: g.metadata.humans.len(),
                    frames: g.record.frames.len(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let manifest = Manifest {
        format: "lseq-dataset".into(),
        version: 1,
        seed: cfg.seed,
        config: cfg.echo(),
        sequences,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    write_tracked(&cleanup, out.join(MANIFEST), text.as_bytes())?;
    cleanup.armed = false;
    Ok(manifest)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub sequences: usize,
    pub frames: usize,
    pub problems: Vec<String>,
}

/// Runs every dataset-level invariant: digests, header dimensions against
/// the manifest, label soundness, xyz against depth and velocity replay.
pub fn cmd_validate(dir: &Path) -> Result<ValidationReport, CliError> {
    let manifest = Manifest::load(dir)?;
    let mut report = ValidationReport::default();
    let expect_dims = manifest.config.get("lidar").and_then(|l| {
        Some((l.get("n_beams")?.as_u64()? as usize, l.get("n_columns")?.as_u64()? as usize))
    });
    for e in &manifest.sequences {
        report.sequences += 1;
        let mut problems = Vec::new();
        let seq_path = dir.join(&e.file);
        let meta_path = dir.join(&e.metadata);
        let bytes = match std::fs::read(&seq_path) {
            Ok(b) => b,
            Err(err) => {
                report.problems.push(format!("{}: {err}", e.file));
                continue;
            }
        };
        let xml = match std::fs::read_to_string(&meta_path) {
            Ok(x) => x,
            Err(err) => {
                report.problems.push(format!("{}: {err}", e.metadata));
                continue;
            }
        };
        if sha256_hex(&bytes) != e.sha256 {
            problems.push("content digest differs from manifest".to_string());
        }
        if sha256_hex(xml.as_bytes()) != e.metadata_sha256 {
            problems.push(format!("{}: content digest differs from manifest", e.metadata));
        }
        match (decode_sequence_unchecked(&bytes, &seq_path), metadata_from_xml(&xml, &meta_path)) {
            (Ok(record), Ok(meta)) => {
                report.frames += record.frames.len();
                if record.frames.len() != e.frames {
                    problems.push(format!("{} frames, manifest says {}", record.frames.len(), e.frames));
                }
                if meta.humans.len() != e.humans {
                    problems.push(format!("{} humans, manifest says {}", meta.humans.len(), e.humans));
                }
                let dims = (record.lidar.n_beams, record.lidar.n_columns);
                if expect_dims.is_some_and(|d| d != dims) {
                    problems.push(format!("raster {dims:?} differs from configured {expect_dims:?}"));
                }
                problems.extend(check_record(&record, &meta));
            }
            (r, m) => {
                problems.extend(r.err().map(|x| x.to_string()));
                problems.extend(m.err().map(|x| x.to_string()));
            }
        }
        report
            .problems
            .extend(problems.into_iter().map(|p| format!("{}: {p}", e.file)));
    }
    Ok(report)
}

pub const BANDS: [(&str, f32, f32); 3] = [("0-4 m", 0.0, 4.0), ("4-8 m", 4.0, 8.0), ("8- m", 8.0, f32::INFINITY)];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BandCounts {
    pub human: u64,
    pub background: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PixelCounts {
    pub bands: [BandCounts; 3],
    pub holes: u64,
}

impl PixelCounts {
    pub fn add(&mut self, other: &PixelCounts) {
        for (a, b) in self.bands.iter_mut().zip(&other.bands) {
            a.human += b.human;
            a.background += b.background;
        }
        self.holes += other.holes;
    }

    pub fn total(&self) -> BandCounts {
        self.bands.iter().fold(BandCounts::default(), |a, b| BandCounts {
            human: a.human + b.human,
            background: a.background + b.background,
        })
    }

    /// Background pixels per human pixel over valid pixels.
    pub fn class_ratio(&self) -> Option<f64> {
        let t = self.total();
        (t.human > 0).then(|| t.background as f64 / t.human as f64)
    }
}

pub fn frame_counts(frame: &Frame) -> PixelCounts {
    let mut c = PixelCounts::default();
    for (&d, &l) in frame.depth.as_slice().iter().zip(frame.labels.as_slice()) {
        if is_hole(d) {
            c.holes += 1;
            continue;
        }
        let band = BANDS.iter().position(|&(_, lo, hi)| d >= lo && d < hi).unwrap_or(2);
        match l {
            Label::Human => c.bands[band].human += 1,
            Label::Background => c.bands[band].background += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetStats {
    pub counts: PixelCounts,
    /// (file, human count) per sequence.
    pub humans: Vec<(String, usize)>,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>14} {:>14}", "band", "human", "background")?;
        for ((name, _, _), b) in BANDS.iter().zip(&self.counts.bands) {
            writeln!(f, "{name:<8} {:>14} {:>14}", b.human, b.background)?;
        }
        let t = self.counts.total();
        writeln!(f, "{:<8} {:>14} {:>14}", "0- m", t.human, t.background)?;
        writeln!(f, "holes    {:>14}", self.counts.holes)?;
        match self.counts.class_ratio() {
            Some(r) => writeln!(f, "background/human pixel ratio: {r:.3}")?,
            None => writeln!(f, "background/human pixel ratio: n/a (no human pixels)")?,
        }
        writeln!(f, "humans per sequence:")?;
        for (file, n) in &self.humans {
            writeln!(f, "  {file} {n}")?;
        }
        Ok(())
    }
}

pub fn cmd_stats(dir: &Path) -> Result<DatasetStats, CliError> {
    let manifest = Manifest::load(dir)?;
    let mut stats = DatasetStats::default();
    for e in &manifest.sequences {
        let record = read_sequence(&dir.join(&e.file))?;
        for frame in &record.frames {
            stats.counts.add(&frame_counts(frame));
        }
        stats.humans.push((e.file.clone(), e.humans));
    }
    Ok(stats)
}

pub fn cmd_preview(file: &Path, frame: usize, out: &Path) -> Result<(), CliError> {
    let record = read_sequence(file)?;
    let f = record.frames.get(frame).ok_or_else(|| {
        CliError::Other(format!("{} has {} frames; no frame {frame}", file.display(), record.frames.len()))
    })?;
    export_preview(f, record.lidar.max_range, out)?;
    Ok(())
}
