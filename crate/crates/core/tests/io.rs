use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqgen_core::compositor::{generate_sequence, GeneratedSequence, Label, SequenceOptions};
use seqgen_core::dataset::{check_record, read_metadata, read_sequence, write_metadata, write_sequence};
use seqgen_core::human::{GaitCycle, DEFAULT_GAIT_SAMPLES};
use seqgen_core::lidar::{BeamTable, LidarConfig};
use seqgen_core::sources::{sensor_states, BackgroundSource, CommandVelocity, FlatWorld, SyntheticSensorTrack, SensorTrackSource, SyntheticTrajectories, TrajectorySource, DEFAULT_BOUNDS};
use seqgen_core::trajectory::{sample_scenario, ScenarioConfig};
use seqgen_core::Error;

fn generate(seed: u64, humans: usize) -> GeneratedSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bt = BeamTable::new(&LidarConfig::default()).unwrap();
    let trajs = SyntheticTrajectories {
        count: 30,
        duration: 10.0,
        bounds: DEFAULT_BOUNDS,
    }
    .trajectories(&mut rng)
    .unwrap();
    let track = SyntheticSensorTrack {
        duration: 20.0,
        speed: 0.5,
        height: 0.8,
        bounds: DEFAULT_BOUNDS,
    }
    .track(&mut rng)
    .unwrap();
    let cfg = ScenarioConfig {
        min_humans: humans,
        max_humans: humans,
        ..ScenarioConfig::default()
    };
    let spec = sample_scenario(&mut rng, &cfg, &trajs, &track, seed).unwrap();
    let sensor = sensor_states(&spec, &track, &CommandVelocity);
    let world = FlatWorld {
        obstacles: 10,
        extent: 20.0,
        clearance: 1.5,
    };
    let bgs = world.frames(&sensor, &bt, &mut rng).unwrap();
    let gait = Arc::new(GaitCycle::procedural(DEFAULT_GAIT_SAMPLES).unwrap());
    generate_sequence(&spec, &bgs, &sensor, &trajs, &gait, &bt, SequenceOptions::default(), &mut rng).unwrap()
}

#[test]
fn sequence_and_metadata_round_trip() {
    let g = generate(5, 3);
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("s.lseq");
    let xml = dir.path().join("s.xml");
    write_sequence(&g.record, &seq).unwrap();
    write_metadata(&g.metadata, &xml).unwrap();
    assert_eq!(std::fs::metadata(&seq).unwrap().len(), 88 + 32 * 32 * 1024 * 25);

    let back = read_sequence(&seq).unwrap();
    assert_eq!(back, g.record);
    let meta = read_metadata(&xml).unwrap();
    assert_eq!(meta.humans.len(), 3);
    assert!(meta.humans.iter().all(|h| h.frames.len() == 32));
    assert_eq!(meta.humans, g.metadata.humans);
    for (a, b) in meta.sensor.iter().zip(&g.metadata.sensor) {
        assert_eq!(a.yaw, b.yaw);
        assert_eq!(a.velocity, b.velocity);
    }
    assert!(check_record(&back, &meta).is_empty());
}

#[test]
fn replay_catches_perturbed_velocity() {
    let g = generate(9, 4);
    let mut r = g.record.clone();
    let (k, idx) = r
        .frames
        .iter()
        .enumerate()
        .find_map(|(k, f)| f.labels.as_slice().iter().position(|&l| l == Label::Human).map(|i| (k, i)))
        .expect("some human pixel");
    r.frames[k].velocity.as_mut().unwrap().as_mut_slice()[idx][0] += 1.0;
    let problems = check_record(&r, &g.metadata);
    assert_eq!(problems.len(), 1, "{problems:?}");
    let cols = r.lidar.n_columns;
    assert!(problems[0].contains(&format!("({}, {})", idx / cols, idx % cols)));
}

#[test]
fn zero_human_metadata_is_rejected() {
    let mut g = generate(2, 1);
    g.metadata.humans.clear();
    let dir = tempfile::tempdir().unwrap();
    let err = write_metadata(&g.metadata, &dir.path().join("m.xml")).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}
