//! TOML generation config.
//!
//! ```toml
//! seed = 7
//! n_sequences = 100
//!
//! [lidar]
//! n_beams = 32
//! n_columns = 1024
//! max_range = 100.0
//!
//! [dataset]
//! n_frames = 32
//!
//! [humans]
//! min = 1
//! max = 30
//!
//! [trajectories]
//! source = "synthetic"
//! count = 200
//!
//! [sensor]
//! source = "synthetic"
//! speed = 0.5
//!
//! [sensor_velocity]
//! source = "command"
//!
//! [background]
//! source = "flat-world"
//! obstacles = 25
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use seqgen_core::compositor::SequenceOptions;
use seqgen_core::human::{build_body, MODEL_GRID};
use seqgen_core::lidar::LidarConfig;
use seqgen_core::sources::{
    background_registry, sensor_track_registry, sensor_velocity_registry, trajectory_registry, ParamReader, Params,
};
use seqgen_core::trajectory::ScenarioConfig;

use crate::CliError;

/// A registry name plus the parameters handed to its constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceChoice {
    pub name: String,
    pub params: Params,
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    pub seed: u64,
    pub n_sequences: usize,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub lidar: LidarConfig,
    pub scenario: ScenarioConfig,
    pub options: SequenceOptions,
    /// Joint-angle table; the built-in procedural cycle when absent.
    pub gait: Option<PathBuf>,
    pub trajectories: SourceChoice,
    pub sensor: SourceChoice,
    pub sensor_velocity: SourceChoice,
    pub background: SourceChoice,
}

const PATH_KEYS: [&str; 2] = ["path", "list"];

fn section(root: &Params, key: &str, errors: &mut Vec<String>) -> Params {
    match root.get(key) {
        None => Params::new(),
        Some(toml::Value::Table(t)) => t.clone(),
        Some(v) => {
            errors.push(format!("[{key}] must be a table, got {v}"));
            Params::new()
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn source(
    root: &Params,
    key: &'static str,
    default: &str,
    names: &[&str],
    base: &Path,
    errors: &mut Vec<String>,
) -> SourceChoice {
    let mut params = section(root, key, errors);
    let name = match params.remove("source") {
        None => default.to_string(),
        Some(toml::Value::String(s)) => s,
        Some(v) => {
            errors.push(format!("[{key}].source must be a string, got {v}"));
            default.to_string()
        }
    };
    if !names.contains(&name.as_str()) {
        errors.push(format!("[{key}].source `{name}` unknown (available: {})", names.join(", ")));
    }
    for k in PATH_KEYS {
        if let Some(toml::Value::String(s)) = params.get(k) {
            let p = resolve(base, Path::new(s));
            if !p.exists() {
                errors.push(format!("[{key}].{k}: {} does not exist", p.display()));
            }
            params.insert(k.to_string(), toml::Value::String(p.to_string_lossy().into_owned()));
        }
    }
    SourceChoice { name, params }
}

impl GenerationConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses and validates, reporting every problem at once.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let root: Params = text.parse().map_err(|e: toml::de::Error| CliError::Config(vec![e.to_string()]))?;
        let mut errors = Vec::new();

        let mut top = ParamReader::new("config", "top level", &root);
        let seed = match top.value("seed") {
            None => 0,
            Some(toml::Value::Integer(v)) if *v >= 0 => *v as u64,
            Some(v) => {
                top.error(format!("seed must be a non-negative integer, got {v}"));
                0
            }
        };
        let n_sequences = top.usize("n_sequences", 1);
        let out = top.opt_path("out").map(|p| resolve(base, &p));
        let jobs = top.usize("jobs", 1);
        top.check("n_sequences", n_sequences >= 1, "must be at least 1");
        top.check("jobs", jobs >= 1, "must be at least 1");
        for key in ["lidar", "dataset", "humans", "trajectories", "sensor", "sensor_velocity", "background"] {
            top.value(key);
        }
        errors.extend(top.into_errors());

        let lidar_t = section(&root, "lidar", &mut errors);
        let mut r = ParamReader::new("section", "lidar", &lidar_t);
        let d = LidarConfig::default();
        let lidar = LidarConfig {
            n_beams: r.usize("n_beams", d.n_beams),
            n_columns: r.usize("n_columns", d.n_columns),
            elevation_max: r.f64("elevation_max", d.elevation_max),
            elevation_min: r.f64("elevation_min", d.elevation_min),
            azimuth_span: r.f64("azimuth_span", d.azimuth_span),
            max_range: r.f64("max_range", d.max_range),
            frame_rate: r.f64("frame_rate", d.frame_rate),
            range_noise_sigma: r.f64("range_noise_sigma", d.range_noise_sigma),
            dropout_probability: r.f64("dropout_probability", d.dropout_probability),
        };
        errors.extend(r.into_errors());
        errors.extend(lidar.violations().into_iter().map(|v| format!("[lidar] {v}")));

        let dataset_t = section(&root, "dataset", &mut errors);
        let mut r = ParamReader::new("section", "dataset", &dataset_t);
        let n_frames = r.usize("n_frames", 32);
        let options = SequenceOptions {
            freeze_gait: r.bool("freeze_gait", false),
            freeze_trajectory: r.bool("freeze_trajectory", false),
        };
        errors.extend(r.into_errors());

        let humans_t = section(&root, "humans", &mut errors);
        let mut r = ParamReader::new("section", "humans", &humans_t);
        let min_humans = r.usize("min", 1);
        let max_humans = r.usize("max", 30);
        let gait = r.opt_path("gait").map(|p| resolve(base, &p));
        let model_grid = match r.value("grid") {
            None => MODEL_GRID.to_vec(),
            Some(toml::Value::Array(rows)) => {
                let parsed: Option<Vec<(f64, f64)>> = rows
                    .iter()
                    .map(|row| {
                        let pair = row.as_array()?;
                        let num = |v: &toml::Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
                        match pair.as_slice() {
                            [h, w] => Some((num(h)?, num(w)?)),
                            _ => None,
                        }
                    })
                    .collect();
                parsed.unwrap_or_else(|| {
                    errors.push("[humans].grid must be a list of [height_mm, weight_kg] pairs".into());
                    MODEL_GRID.to_vec()
                })
            }
            Some(v) => {
                errors.push(format!("[humans].grid must be an array, got {v}"));
                MODEL_GRID.to_vec()
            }
        };
        errors.extend(r.into_errors());
        for &(h, w) in &model_grid {
            if let Err(e) = build_body(h, w) {
                errors.push(format!("[humans].grid entry [{h}, {w}]: {e}"));
            }
        }
        if let Some(g) = &gait {
            if !g.exists() {
                errors.push(format!("[humans].gait: {} does not exist", g.display()));
            }
        }
        let scenario = ScenarioConfig {
            n_frames,
            min_humans,
            max_humans,
            model_grid,
            frame_rate: lidar.frame_rate,
        };
        errors.extend(scenario.violations().into_iter().map(|v| format!("[dataset/humans] {v}")));

        let trajectories = source(&root, "trajectories", "synthetic", &trajectory_registry().names(), base, &mut errors);
        let sensor = source(&root, "sensor", "synthetic", &sensor_track_registry().names(), base, &mut errors);
        let sensor_velocity = source(
            &root,
            "sensor_velocity",
            "command",
            &sensor_velocity_registry().names(),
            base,
            &mut errors,
        );
        let background = source(&root, "background", "flat-world", &background_registry().names(), base, &mut errors);

        let cfg = GenerationConfig {
            seed,
            n_sequences,
            out,
            jobs,
            lidar,
            scenario,
            options,
            gait,
            trajectories,
            sensor,
            sensor_velocity,
            background,
        };
        if errors.is_empty() {
            // Strategy parameters are checked by their constructors.
            if let Err(e) = cfg.instantiate_check() {
                errors.push(e);
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Config(errors))
        }
    }

    fn instantiate_check(&self) -> Result<(), String> {
        let mut errors = Vec::new();
        let mut note = |r: seqgen_core::Result<()>| {
            if let Err(e) = r {
                errors.push(e.to_string());
            }
        };
        note(trajectory_registry().create(&self.trajectories.name, &self.trajectories.params).map(drop));
        note(sensor_track_registry().create(&self.sensor.name, &self.sensor.params).map(drop));
        note(
            sensor_velocity_registry()
                .create(&self.sensor_velocity.name, &self.sensor_velocity.params)
                .map(drop),
        );
        note(background_registry().create(&self.background.name, &self.background.params).map(drop));
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors.join("; "))
        }
    }

    /// Canonical echo of every setting that affects the generated bytes.
    pub fn echo(&self) -> serde_json::Value {
        let l = &self.lidar;
        let s = |c: &SourceChoice| {
            let mut v = serde_json::to_value(&c.params).unwrap_or_default();
            if let Some(o) = v.as_object_mut() {
                o.insert("source".into(), c.name.clone().into());
            }
            v
        };
        serde_json::json!({
            "seed": self.seed,
            "n_sequences": self.n_sequences,
            "lidar": {
                "n_beams": l.n_beams,
                "n_columns": l.n_columns,
                "elevation_max": l.elevation_max,
                "elevation_min": l.elevation_min,
                "azimuth_span": l.azimuth_span,
                "max_range": l.max_range,
                "frame_rate": l.frame_rate,
                "range_noise_sigma": l.range_noise_sigma,
                "dropout_probability": l.dropout_probability,
            },
            "dataset": {
                "n_frames": self.scenario.n_frames,
                "freeze_gait": self.options.freeze_gait,
                "freeze_trajectory": self.options.freeze_trajectory,
            },
            "humans": {
                "min": self.scenario.min_humans,
                "max": self.scenario.max_humans,
                "grid": self.scenario.model_grid.iter().map(|&(h, w)| [h, w]).collect::<Vec<_>>(),
                "gait": self.gait.as_ref().map(|p| p.to_string_lossy().into_owned()),
            },
            "trajectories": s(&self.trajectories),
            "sensor": s(&self.sensor),
            "sensor_velocity": s(&self.sensor_velocity),
            "background": s(&self.background),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = GenerationConfig::parse("", Path::new(".")).unwrap();
        assert_eq!(c.n_sequences, 1);
        assert_eq!(c.lidar, LidarConfig::default());
        assert_eq!(c.scenario.n_frames, 32);
        assert_eq!(c.scenario.model_grid.len(), 15);
        assert_eq!(c.background.name, "flat-world");
        assert_eq!(c.sensor_velocity.name, "command");
    }

    #[test]
    fn every_violation_is_reported() {
        let text = r#"
            n_sequences = 0
            bogus = 1
            [lidar]
            n_beams = 1
            [humans]
            min = 5
            max = 2
            [background]
            source = "mesh"
            [trajectories]
            source = "file"
            path = "missing.txt"
        "#;
        let Err(CliError::Config(v)) = GenerationConfig::parse(text, Path::new("/nonexistent")) else {
            panic!("expected config error");
        };
        let all = v.join("\n");
        for needle in ["n_sequences", "bogus", "n_beams", "human count range [5, 2]", "mesh", "missing.txt"] {
            assert!(all.contains(needle), "{needle} not in {all}");
        }
    }

    #[test]
    fn strategy_parameters_are_checked() {
        let text = "[background]\nsource = \"flat-world\"\nobstacles = 3\nwobble = 2\n";
        let Err(CliError::Config(v)) = GenerationConfig::parse(text, Path::new(".")) else {
            panic!("expected config error");
        };
        assert!(v.join(" ").contains("wobble"));
    }
}
