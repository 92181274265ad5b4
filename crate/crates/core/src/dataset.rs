//! LSEQ sequence files, XML metadata sidecars and PNG previews.
//!
//! LSEQ layout (all little-endian):
//!
//! | offset | type      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | [u8; 4]   | magic `LSEQ`                            |
//! | 4      | u32       | format version (1)                      |
//! | 8      | u32 × 3   | n_frames, n_beams, n_columns            |
//! | 20     | u32       | flags: bit 0 xyz, bit 1 velocity        |
//! | 24     | u64       | rng seed                                |
//! | 32     | f64 × 7   | elevation max/min (deg), azimuth span (deg), max range (m), frame rate (Hz), range noise sigma (m), dropout probability |
//! | 88     | frames    | per frame, planar: depth f32 m; x, y, z f32 m; label u8; vx, vy f32 mm/s |

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::compositor::{xyz_frame, Frame, HumanFrameState, HumanTrack, Label, SensorFrameState, SequenceMetadata, SequenceRecord};
use crate::error::{Error, Result};
use crate::geometry::{GroundVelocity, Pose, Vec2, Vec3};
use crate::lidar::{is_hole, BeamTable, LidarConfig};
use crate::raster::Raster;

pub const MAGIC: &[u8; 4] = b"LSEQ";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 88;
pub const FLAG_XYZ: u32 = 1;
pub const FLAG_VELOCITY: u32 = 2;

/// Bytes per frame for the given raster size and channel flags.
pub fn frame_len(n_beams: usize, n_columns: usize, flags: u32) -> usize {
    let mut per_pixel = 4 + 1;
    if flags & FLAG_XYZ != 0 {
        per_pixel += 12;
    }
    if flags & FLAG_VELOCITY != 0 {
        per_pixel += 8;
    }
    n_beams * n_columns * per_pixel
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFileHeader {
    pub version: u32,
    pub n_frames: usize,
    pub n_beams: usize,
    pub n_columns: usize,
    pub flags: u32,
    pub seed: u64,
    pub lidar: LidarConfig,
}

fn record_flags(r: &SequenceRecord) -> u32 {
    let first = r.frames.first();
    let mut flags = 0;
    if first.is_some_and(|f| f.xyz.is_some()) {
        flags |= FLAG_XYZ;
    }
    if first.is_some_and(|f| f.velocity.is_some()) {
        flags |= FLAG_VELOCITY;
    }
    flags
}

pub fn encode_sequence(r: &SequenceRecord) -> Result<Vec<u8>> {
    let problems = r.violations();
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let flags = record_flags(r);
    if r.frames
        .iter()
        .any(|f| f.xyz.is_some() != (flags & FLAG_XYZ != 0) || f.velocity.is_some() != (flags & FLAG_VELOCITY != 0))
    {
        return Err(Error::InvalidInput("frames disagree on which channels are present".into()));
    }
    let (rows, cols) = (r.lidar.n_beams, r.lidar.n_columns);
    let mut out = Vec::with_capacity(HEADER_LEN + r.frames.len() * frame_len(rows, cols, flags));
    out.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, r.frames.len() as u32, rows as u32, cols as u32, flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&r.seed.to_le_bytes());
    let l = &r.lidar;
    for v in [
        l.elevation_max,
        l.elevation_min,
        l.azimuth_span,
        l.max_range,
        l.frame_rate,
        l.range_noise_sigma,
        l.dropout_probability,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in &r.frames {
        for d in f.depth.as_slice() {
            out.extend_from_slice(&d.to_le_bytes());
        }
        if let Some(xyz) = &f.xyz {
            for axis in 0..3 {
                for p in xyz.as_slice() {
                    out.extend_from_slice(&p[axis].to_le_bytes());
                }
            }
        }
        out.extend(f.labels.as_slice().iter().map(|&l| l as u8));
        if let Some(v) = &f.velocity {
            for axis in 0..2 {
                for p in v.as_slice() {
                    out.extend_from_slice(&p[axis].to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn write_sequence(r: &SequenceRecord, path: &Path) -> Result<()> {
    let bytes = encode_sequence(r)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

fn f32_plane(b: &[u8], n: usize) -> impl Iterator<Item = f32> + '_ {
    b[..n * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
}

pub fn decode_header(bytes: &[u8], path: &Path) -> Result<SequenceFileHeader> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fmt(format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(fmt(format!("unsupported version {version}")));
    }
    let (n_frames, n_beams, n_columns) = (
        u32_at(bytes, 8) as usize,
        u32_at(bytes, 12) as usize,
        u32_at(bytes, 16) as usize,
    );
    let flags = u32_at(bytes, 20);
    if n_frames == 0 || n_beams == 0 || n_columns == 0 {
        return Err(fmt(format!("zero dimension in {n_frames}x{n_beams}x{n_columns}")));
    }
    if flags & !(FLAG_XYZ | FLAG_VELOCITY) != 0 {
        return Err(fmt(format!("unknown flag bits {flags:#x}")));
    }
    let seed = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let lidar = LidarConfig {
        n_beams,
        n_columns,
        elevation_max: f64_at(bytes, 32),
        elevation_min: f64_at(bytes, 40),
        azimuth_span: f64_at(bytes, 48),
        max_range: f64_at(bytes, 56),
        frame_rate: f64_at(bytes, 64),
        range_noise_sigma: f64_at(bytes, 72),
        dropout_probability: f64_at(bytes, 80),
    };
    let problems = lidar.violations();
    if !problems.is_empty() {
        return Err(fmt(format!("header lidar config: {}", problems.join("; "))));
    }
    Ok(SequenceFileHeader {
        version,
        n_frames,
        n_beams,
        n_columns,
        flags,
        seed,
        lidar,
    })
}

/// Parses without checking label soundness; structural damage is still an error.
pub fn decode_sequence_unchecked(bytes: &[u8], path: &Path) -> Result<SequenceRecord> {
    let h = decode_header(bytes, path)?;
    let (rows, cols) = (h.n_beams, h.n_columns);
    let n = rows * cols;
    let flen = frame_len(rows, cols, h.flags);
    let payload = &bytes[HEADER_LEN..];
    let corrupt = |frame: usize, reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        frame,
        reason,
    };
    let expected = flen * h.n_frames;
    if payload.len() > expected {
        return Err(corrupt(h.n_frames, format!("{} trailing bytes", payload.len() - expected)));
    }
    let mut frames = Vec::with_capacity(h.n_frames);
    for k in 0..h.n_frames {
        let Some(mut b) = payload.get(k * flen..(k + 1) * flen) else {
            let have = payload.len().saturating_sub(k * flen);
            return Err(corrupt(k, format!("truncated: {have} of {flen} bytes")));
        };
        let depth = Raster::from_vec(rows, cols, f32_plane(b, n).collect())?;
        b = &b[n * 4..];
        let xyz = if h.flags & FLAG_XYZ != 0 {
            let mut pts = vec![[0f32; 3]; n];
            for axis in 0..3 {
                for (p, v) in pts.iter_mut().zip(f32_plane(b, n)) {
                    p[axis] = v;
                }
                b = &b[n * 4..];
            }
            Some(Raster::from_vec(rows, cols, pts)?)
        } else {
            None
        };
        let labels = b[..n]
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                Label::try_from(v).map_err(|v| {
                    corrupt(k, format!("pixel ({}, {}): label byte {v}", i / cols, i % cols))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = Raster::from_vec(rows, cols, labels)?;
        b = &b[n..];
        let velocity = if h.flags & FLAG_VELOCITY != 0 {
            let mut vs = vec![[0f32; 2]; n];
            for axis in 0..2 {
                for (p, v) in vs.iter_mut().zip(f32_plane(b, n)) {
                    p[axis] = v;
                }
                b = &b[n * 4..];
            }
            Some(Raster::from_vec(rows, cols, vs)?)
        } else {
            None
        };
        frames.push(Frame {
            depth,
            xyz,
            labels,
            velocity,
        });
    }
    Ok(SequenceRecord {
        lidar: h.lidar,
        seed: h.seed,
        frames,
    })
}

pub fn decode_sequence(bytes: &[u8], path: &Path) -> Result<SequenceRecord> {
    let r = decode_sequence_unchecked(bytes, path)?;
    let problems = r.violations();
    if problems.is_empty() {
        Ok(r)
    } else {
        Err(Error::Validation(problems))
    }
}

pub fn read_sequence(path: &Path) -> Result<SequenceRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sequence(&bytes, path)
}

fn attr<'a>(node: roxmltree::Node<'a, '_>, name: &str, path: &Path) -> Result<&'a str> {
    node.attribute(name).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        reason: format!("<{}> lacks attribute `{name}`", node.tag_name().name()),
    })
}

fn num<T: std::str::FromStr>(node: roxmltree::Node<'_, '_>, name: &str, path: &Path) -> Result<T> {
    let s = attr(node, name, path)?;
    s.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        reason: format!("<{}> attribute `{name}`=\"{s}\" is not a number", node.tag_name().name()),
    })
}

fn children<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &'a str) -> impl Iterator<Item = roxmltree::Node<'a, 'i>> {
    node.children().filter(move |c| c.has_tag_name(tag))
}

/// Serializes metadata as XML. Floats use shortest round-trip formatting so
/// reading back yields identical values.
pub fn metadata_to_xml(meta: &SequenceMetadata) -> Result<String> {
    if meta.humans.is_empty() {
        return Err(Error::InvalidInput("a scene holds at least one human".into()));
    }
    let n = meta.n_frames();
    if let Some(h) = meta.humans.iter().find(|h| h.frames.len() != n) {
        return Err(Error::InvalidInput(format!(
            "human track has {} states for {n} frames",
            h.frames.len()
        )));
    }
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<sequence seed=\"{}\" frames=\"{n}\" frame_rate=\"{}\" start_time=\"{}\">",
        meta.seed, meta.frame_rate, meta.start_time
    );
    s.push_str("  <sensor>\n");
    for (k, f) in meta.sensor.iter().enumerate() {
        let p = f.pose.position();
        let q = f.pose.quaternion();
        let _ = writeln!(
            s,
            "    <frame k=\"{k}\" t=\"{}\" x=\"{}\" y=\"{}\" z=\"{}\" qw=\"{}\" qx=\"{}\" qy=\"{}\" qz=\"{}\" yaw=\"{}\" vx=\"{}\" vy=\"{}\"/>",
            f.pose.timestamp(),
            p.x,
            p.y,
            p.z,
            q[0],
            q[1],
            q[2],
            q[3],
            f.yaw,
            f.velocity.vx,
            f.velocity.vy
        );
    }
    s.push_str("  </sensor>\n");
    let _ = writeln!(s, "  <humans count=\"{}\">", meta.humans.len());
    for (id, h) in meta.humans.iter().enumerate() {
        let _ = writeln!(
            s,
            "    <human id=\"{id}\" height_mm=\"{}\" weight_kg=\"{}\" trajectory=\"{}\" start_index=\"{}\">",
            h.height_mm, h.weight_kg, h.trajectory, h.start_index
        );
        for (k, f) in h.frames.iter().enumerate() {
            let _ = writeln!(
                s,
                "      <frame k=\"{k}\" x=\"{}\" y=\"{}\" heading=\"{}\" phase=\"{}\" vx=\"{}\" vy=\"{}\"/>",
                f.position.x, f.position.y, f.heading, f.phase, f.velocity.vx, f.velocity.vy
            );
        }
        s.push_str("    </human>\n");
    }
    s.push_str("  </humans>\n</sequence>\n");
    Ok(s)
}

pub fn write_metadata(meta: &SequenceMetadata, path: &Path) -> Result<()> {
    let xml = metadata_to_xml(meta)?;
    std::fs::write(path, xml).map_err(|e| Error::io(path, e))
}

pub fn metadata_from_xml(text: &str, path: &Path) -> Result<SequenceMetadata> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let doc = roxmltree::Document::parse(text).map_err(|e| fmt(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("sequence") {
        return Err(fmt(format!("root element <{}>", root.tag_name().name())));
    }
    let n: usize = num(root, "frames", path)?;
    let sensor_node = children(root, "sensor")
        .next()
        .ok_or_else(|| fmt("missing <sensor>".into()))?;
    let sensor = children(sensor_node, "frame")
        .map(|f| {
            let pose = Pose::new(
                Vec3::new(num(f, "x", path)?, num(f, "y", path)?, num(f, "z", path)?),
                [num(f, "qw", path)?, num(f, "qx", path)?, num(f, "qy", path)?, num(f, "qz", path)?],
                num(f, "t", path)?,
            )?;
            Ok(SensorFrameState {
                pose,
                yaw: num(f, "yaw", path)?,
                velocity: GroundVelocity::new(num(f, "vx", path)?, num(f, "vy", path)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if sensor.len() != n {
        return Err(fmt(format!("{} sensor frames for {n} frames", sensor.len())));
    }
    let humans_node = children(root, "humans")
        .next()
        .ok_or_else(|| fmt("missing <humans>".into()))?;
    let humans = children(humans_node, "human")
        .map(|h| {
            let frames = children(h, "frame")
                .map(|f| {
                    Ok(HumanFrameState {
                        position: Vec2::new(num(f, "x", path)?, num(f, "y", path)?),
                        heading: num(f, "heading", path)?,
                        phase: num(f, "phase", path)?,
                        velocity: GroundVelocity::new(num(f, "vx", path)?, num(f, "vy", path)?)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if frames.len() != n {
                return Err(fmt(format!("human has {} states for {n} frames", frames.len())));
            }
            Ok(HumanTrack {
                height_mm: num(h, "height_mm", path)?,
                weight_kg: num(h, "weight_kg", path)?,
                trajectory: num(h, "trajectory", path)?,
                start_index: num(h, "start_index", path)?,
                frames,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count: usize = num(humans_node, "count", path)?;
    if humans.is_empty() || humans.len() != count {
        return Err(fmt(format!("humans count {count} but {} entries", humans.len())));
    }
    Ok(SequenceMetadata {
        seed: num(root, "seed", path)?,
        frame_rate: num(root, "frame_rate", path)?,
        start_time: num(root, "start_time", path)?,
        sensor,
        humans,
    })
}

pub fn read_metadata(path: &Path) -> Result<SequenceMetadata> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    metadata_from_xml(&text, path)
}

/// Dataset-level consistency of a record against its metadata: label
/// soundness, xyz recomputed from depth, and velocity replay. The file format
/// carries no per-pixel human id, so a human pixel passes when its velocity
/// is bit-identical to the replayed value of some human in the frame.
pub fn check_record(r: &SequenceRecord, meta: &SequenceMetadata) -> Vec<String> {
    let mut out = r.violations();
    if r.frames.len() != meta.n_frames() {
        out.push(format!(
            "{} frames but metadata describes {}",
            r.frames.len(),
            meta.n_frames()
        ));
        return out;
    }
    let bt = match BeamTable::new(&r.lidar) {
        Ok(bt) => bt,
        Err(e) => {
            out.push(e.to_string());
            return out;
        }
    };
    for (k, f) in r.frames.iter().enumerate() {
        if let Some(xyz) = &f.xyz {
            match xyz_frame(&f.depth, &bt) {
                Ok(expected) => {
                    if let Some((row, col, _)) = expected
                        .iter_indexed()
                        .find(|&(row, col, p)| p.map(f32::to_bits) != xyz.get(row, col).map(f32::to_bits))
                    {
                        out.push(format!("frame {k} pixel ({row}, {col}): xyz disagrees with depth"));
                    }
                }
                Err(e) => out.push(format!("frame {k}: {e}")),
            }
        }
        let Some(vel) = &f.velocity else { continue };
        let s = &meta.sensor[k];
        let background = crate::compositor::relative_velocity(GroundVelocity::ZERO, s.velocity, s.yaw);
        let humans: Vec<[f32; 2]> = meta
            .human_velocities(k)
            .into_iter()
            .map(|v| crate::compositor::relative_velocity(v, s.velocity, s.yaw))
            .collect();
        for (row, col, &label) in f.labels.iter_indexed() {
            let v = vel.get(row, col);
            let ok = match label {
                Label::Background => crate::compositor::same_bits(v, &background),
                Label::Human => humans.iter().any(|h| crate::compositor::same_bits(v, h)),
            };
            if !ok {
                out.push(format!(
                    "frame {k} pixel ({row}, {col}): velocity {v:?} does not replay for a {} pixel",
                    if label == Label::Human { "human" } else { "background" }
                ));
            }
        }
    }
    out
}

/// Rows are repeated this many times so the 32-row raster stays legible.
pub const PREVIEW_ROW_SCALE: u32 = 4;

fn gray(depth: f32, max_range: f64) -> u8 {
    if is_hole(depth) {
        return 0;
    }
    let t = (depth as f64 / max_range).clamp(0.0, 1.0);
    (255.0 - 215.0 * t).round() as u8
}

/// Depth panel (near is bright, holes black) stacked over a label panel in
/// which human pixels are tinted red.
pub fn preview_image(frame: &Frame, max_range: f64) -> RgbImage {
    let (rows, cols) = frame.depth.dims();
    let s = PREVIEW_ROW_SCALE;
    let panel = rows as u32 * s;
    RgbImage::from_fn(cols as u32, 2 * panel, |x, y| {
        let overlay = y >= panel;
        let r = ((y % panel) / s) as usize;
        let c = x as usize;
        let g = gray(*frame.depth.get(r, c), max_range);
        if overlay && *frame.labels.get(r, c) == Label::Human {
            Rgb([255, g / 3, g / 3])
        } else {
            Rgb([g, g, g])
        }
    })
}

pub fn export_preview(frame: &Frame, max_range: f64, path: &Path) -> Result<()> {
    preview_image(frame, max_range).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lidar::HOLE;

    fn tiny_record() -> SequenceRecord {
        let lidar = LidarConfig {
            n_beams: 2,
            n_columns: 3,
            ..LidarConfig::default()
        };
        let bt = BeamTable::new(&lidar).unwrap();
        let frames = (0..2)
            .map(|k| {
                let depth = Raster::from_vec(2, 3, vec![1.0, HOLE, 2.5, 3.0 + k as f32, 4.0, HOLE]).unwrap();
                let labels = depth.map(|&d| if d == 3.0 { Label::Human } else { Label::Background });
                Frame {
                    xyz: Some(xyz_frame(&depth, &bt).unwrap()),
                    velocity: Some(depth.map(|&d| [d * 10.0, -d])),
                    depth,
                    labels,
                }
            })
            .collect();
        SequenceRecord {
            lidar,
            seed: 99,
            frames,
        }
    }

    #[test]
    fn payload_size_of_default_sequence() {
        assert_eq!(32 * frame_len(32, 1024, FLAG_XYZ | FLAG_VELOCITY), 32 * 32 * 1024 * 25);
    }

    #[test]
    fn bytes_round_trip() {
        let r = tiny_record();
        let bytes = encode_sequence(&r).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 6 * 25);
        let back = decode_sequence(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, r);
        assert_eq!(encode_sequence(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_names_frame() {
        let bytes = encode_sequence(&tiny_record()).unwrap();
        let cut = &bytes[..bytes.len() - 10];
        match decode_sequence(cut, Path::new("mem")).unwrap_err() {
            Error::CorruptFile { frame, .. } => assert_eq!(frame, 1),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bad_magic_and_human_on_hole() {
        let mut bytes = encode_sequence(&tiny_record()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_sequence(&bad, Path::new("m")).unwrap_err(), Error::Format { .. }));

        // Frame 0 label plane starts after depth and xyz planes.
        let label_off = HEADER_LEN + 6 * 4 + 6 * 12;
        bytes[label_off + 1] = 1;
        match decode_sequence(&bytes, Path::new("m")).unwrap_err() {
            Error::Validation(v) => assert!(v[0].contains("(0, 1)"), "{v:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn preview_rules() {
        let mut r = tiny_record();
        let f = &mut r.frames[0];
        let img = preview_image(f, 100.0);
        assert_eq!(img.dimensions(), (3, 16));
        assert_eq!(img.get_pixel(1, 0), &Rgb([0, 0, 0]));
        let near = img.get_pixel(0, 0)[0];
        let far = img.get_pixel(2, 0)[0];
        assert!(near > far);

        f.depth = Raster::filled(2, 3, HOLE);
        f.labels = Raster::filled(2, 3, Label::Background);
        assert!(preview_image(f, 100.0).pixels().all(|p| p.0 == [0, 0, 0]));

        f.depth = Raster::filled(2, 3, 5.0);
        f.labels.set(0, 0, Label::Human);
        let img = preview_image(f, 100.0);
        let panel = 2 * PREVIEW_ROW_SCALE;
        assert_ne!(img.get_pixel(0, panel), img.get_pixel(1, panel));
    }
}
