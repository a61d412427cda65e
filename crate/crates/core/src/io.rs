//! File adapters: camera calibration JSON, detections and trajectories as
//! JSON Lines, run/scenario configs as TOML, metric reports as JSON.
//!
//! Detection rows are flat JSONL objects
//! `{"frame":k,"cam":c,"cx":px,"cy":px,"w":px,"h":px,"feat":[...]}` sorted by
//! frame; trajectory rows are
//! `{"id":"k_i","frame":k,"pos":[...],"ext":[...],"vel":[...]}`.

use crate::geometry::{BoundingBox, CameraModel, ProjectionMatrix};
use crate::metrics::{Trajectory, TrajectoryPoint};
use crate::sensing::Measurement;
use crate::sim::ScenarioSpec;
use crate::RunConfig;
use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: schema error: {msg}")]
    Schema { path: String, msg: String },
    #[error("detection references camera {camera} with no calibration")]
    CameraMismatch { camera: usize },
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}

impl IoError {
    /// CLI exit code: 2 for parse/schema problems, 3 for infeasible configs.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Infeasible(_) => 3,
            _ => 2,
        }
    }

    fn schema(path: &Path, msg: impl Into<String>) -> Self {
        IoError::Schema {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }
}

/// Per-frame, per-camera measurement lists.
#[derive(Debug, Clone)]
pub struct DetectionFrame {
    pub frame: u32,
    pub per_camera: Vec<Vec<Measurement>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraJson {
    id: usize,
    /// Row-major 3x4 projection.
    p: Vec<f64>,
    image_size: [f64; 2],
    /// Row-major 3x3 image-to-ground homography.
    h_ground: Vec<f64>,
    clutter_rate: f64,
    #[serde(default)]
    schedule: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CamerasFile {
    cameras: Vec<CameraJson>,
}

pub fn write_cameras(path: &Path, cams: &[CameraModel]) -> Result<(), IoError> {
    let file = CamerasFile {
        cameras: cams
            .iter()
            .map(|c| CameraJson {
                id: c.id,
                p: c.projection.transpose().as_slice().to_vec(),
                image_size: [c.image_width, c.image_height],
                h_ground: c.ground_homography.transpose().as_slice().to_vec(),
                clutter_rate: c.clutter_rate,
                schedule: c.schedule.iter().map(|&(s, e)| [s, e]).collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| IoError::schema(path, e.to_string()))?;
    std::fs::write(path, json).map_err(|e| IoError::schema(path, e.to_string()))
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraModel>, IoError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| IoError::schema(path, e.to_string()))?;
    let file: CamerasFile =
        serde_json::from_str(&text).map_err(|e| IoError::schema(path, e.to_string()))?;
    let mut cams = Vec::with_capacity(file.cameras.len());
    for cj in file.cameras {
        if cj.p.len() != 12 || cj.h_ground.len() != 9 {
            return Err(IoError::schema(
                path,
                format!("camera {}: P must be 12 floats, H_ground 9", cj.id),
            ));
        }
        let cam = CameraModel {
            id: cj.id,
            projection: ProjectionMatrix::from_row_slice(&cj.p),
            image_width: cj.image_size[0],
            image_height: cj.image_size[1],
            ground_homography: Matrix3::from_row_slice(&cj.h_ground),
            clutter_rate: cj.clutter_rate,
            schedule: cj.schedule.iter().map(|w| (w[0], w[1])).collect(),
        };
        cam.validate_ground_consistency(1e-6)
            .map_err(|msg| IoError::schema(path, msg))?;
        cams.push(cam);
    }
    cams.sort_by_key(|c| c.id);
    for (i, c) in cams.iter().enumerate() {
        if c.id != i {
            return Err(IoError::schema(
                path,
                format!("camera ids must be contiguous from 0, found {}", c.id),
            ));
        }
    }
    Ok(cams)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRow {
    pub frame: u32,
    pub cam: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub feat: Vec<f64>,
}

pub fn write_detections(path: &Path, frames: &[DetectionFrame]) -> Result<(), IoError> {
    let f = File::create(path).map_err(|e| IoError::schema(path, e.to_string()))?;
    let mut w = BufWriter::new(f);
    for frame in frames {
        for dets in &frame.per_camera {
            for m in dets {
                let row = DetectionRow {
                    frame: frame.frame,
                    cam: m.camera,
                    cx: m.bbox.center.x,
                    cy: m.bbox.center.y,
                    w: m.bbox.width(),
                    h: m.bbox.height(),
                    feat: m.feature.iter().copied().collect(),
                };
                let json = serde_json::to_string(&row)
                    .map_err(|e| IoError::schema(path, e.to_string()))?;
                writeln!(w, "{json}").map_err(|e| IoError::schema(path, e.to_string()))?;
            }
        }
    }
    w.flush().map_err(|e| IoError::schema(path, e.to_string()))
}

/// Streaming detection reader: yields contiguous per-frame batches in file
/// order, synthesizing empty frames for gaps so misses register. Rows must
/// be sorted by frame; memory stays bounded by one frame.
pub struct DetectionReader {
    lines: std::io::Lines<BufReader<File>>,
    path: String,
    n_cameras: usize,
    line_no: usize,
    /// Next row that belongs to a future frame.
    carry: Option<DetectionRow>,
    next_frame: Option<u32>,
    done: bool,
}

impl DetectionReader {
    pub fn open(path: &Path, n_cameras: usize) -> Result<Self, IoError> {
        let f = File::open(path).map_err(|e| IoError::schema(path, e.to_string()))?;
        Ok(Self {
            lines: BufReader::new(f).lines(),
            path: path.display().to_string(),
            n_cameras,
            line_no: 0,
            carry: None,
            next_frame: None,
            done: false,
        })
    }

    fn parse_next(&mut self) -> Result<Option<DetectionRow>, IoError> {
        loop {
            self.line_no += 1;
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            let line = line.map_err(|e| IoError::Parse {
                path: self.path.clone(),
                line: self.line_no,
                msg: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let row: DetectionRow = serde_json::from_str(&line).map_err(|e| IoError::Parse {
                path: self.path.clone(),
                line: self.line_no,
                msg: e.to_string(),
            })?;
            if row.cam >= self.n_cameras {
                return Err(IoError::CameraMismatch { camera: row.cam });
            }
            if row.w <= 0.0 || row.h <= 0.0 {
                return Err(IoError::Parse {
                    path: self.path.clone(),
                    line: self.line_no,
                    msg: "box extent must be positive".into(),
                });
            }
            return Ok(Some(row));
        }
    }

    /// Next frame batch, or `None` at end of file.
    pub fn next_frame(&mut self) -> Result<Option<DetectionFrame>, IoError> {
        if self.done {
            return Ok(None);
        }
        // Establish the frame to emit.
        let frame = match self.next_frame {
            Some(f) => f,
            None => {
                let Some(row) = self.parse_next()? else {
                    self.done = true;
                    return Ok(None);
                };
                let f = row.frame;
                self.carry = Some(row);
                self.next_frame = Some(f);
                f
            }
        };
        let mut per_camera: Vec<Vec<(BoundingBox, DVector<f64>)>> =
            vec![vec![]; self.n_cameras];
        loop {
            let row = match self.carry.take() {
                Some(r) => r,
                None => match self.parse_next()? {
                    Some(r) => r,
                    None => {
                        self.done = true;
                        break;
                    }
                },
            };
            if row.frame < frame {
                return Err(IoError::Parse {
                    path: self.path.clone(),
                    line: self.line_no,
                    msg: format!(
                        "detections must be sorted by frame ({} after {frame})",
                        row.frame
                    ),
                });
            }
            if row.frame > frame {
                self.carry = Some(row);
                // Fill the gap with empty frames.
                self.next_frame = Some(frame + 1);
                break;
            }
            per_camera[row.cam].push((
                BoundingBox::from_center_size(row.cx, row.cy, row.w, row.h),
                DVector::from_vec(row.feat.clone()),
            ));
        }
        let per_camera = per_camera
            .into_iter()
            .enumerate()
            .map(|(c, dets)| {
                dets.into_iter()
                    .enumerate()
                    .map(|(i, (bbox, feat))| Measurement::new(bbox, feat, c, i + 1))
                    .collect()
            })
            .collect();
        Ok(Some(DetectionFrame { frame, per_camera }))
    }
}

/// Reads a detection file into contiguous per-frame batches covering
/// `[first, last]` (empty frames included so misses register). An explicit
/// range widens or narrows that window.
pub fn read_detections(
    path: &Path,
    n_cameras: usize,
    range: Option<(u32, u32)>,
) -> Result<Vec<DetectionFrame>, IoError> {
    let f = File::open(path).map_err(|e| IoError::schema(path, e.to_string()))?;
    let reader = BufReader::new(f);
    let mut by_frame: BTreeMap<u32, Vec<Vec<(BoundingBox, DVector<f64>)>>> = BTreeMap::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DetectionRow = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            msg: e.to_string(),
        })?;
        if row.cam >= n_cameras {
            return Err(IoError::CameraMismatch { camera: row.cam });
        }
        if row.w <= 0.0 || row.h <= 0.0 {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                line: line_no + 1,
                msg: "box extent must be positive".into(),
            });
        }
        by_frame
            .entry(row.frame)
            .or_insert_with(|| vec![vec![]; n_cameras])[row.cam]
            .push((
                BoundingBox::from_center_size(row.cx, row.cy, row.w, row.h),
                DVector::from_vec(row.feat),
            ));
    }
    let (first, last) = match range {
        Some(r) => r,
        None => match (by_frame.keys().next(), by_frame.keys().next_back()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Ok(vec![]),
        },
    };
    let mut out = Vec::with_capacity((last - first + 1) as usize);
    for frame in first..=last {
        let per_camera = match by_frame.remove(&frame) {
            Some(cams) => cams
                .into_iter()
                .enumerate()
                .map(|(c, dets)| {
                    dets.into_iter()
                        .enumerate()
                        .map(|(i, (bbox, feat))| Measurement::new(bbox, feat, c, i + 1))
                        .collect()
                })
                .collect(),
            None => vec![vec![]; n_cameras],
        };
        out.push(DetectionFrame { frame, per_camera });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub id: String,
    pub frame: u32,
    pub pos: [f64; 3],
    pub ext: [f64; 3],
    #[serde(default)]
    pub vel: [f64; 3],
}

pub fn write_trajectories(path: &Path, rows: &[TrajectoryRow]) -> Result<(), IoError> {
    let f = File::create(path).map_err(|e| IoError::schema(path, e.to_string()))?;
    let mut w = BufWriter::new(f);
    for row in rows {
        let json =
            serde_json::to_string(row).map_err(|e| IoError::schema(path, e.to_string()))?;
        writeln!(w, "{json}").map_err(|e| IoError::schema(path, e.to_string()))?;
    }
    w.flush().map_err(|e| IoError::schema(path, e.to_string()))
}

pub fn read_trajectory_rows(path: &Path) -> Result<Vec<TrajectoryRow>, IoError> {
    let f = File::open(path).map_err(|e| IoError::schema(path, e.to_string()))?;
    let reader = BufReader::new(f);
    let mut rows = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: TrajectoryRow = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            msg: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn trajectories_from_rows(rows: &[TrajectoryRow]) -> Vec<Trajectory> {
    let mut by_id: BTreeMap<String, Trajectory> = BTreeMap::new();
    for row in rows {
        by_id
            .entry(row.id.clone())
            .or_insert_with(|| Trajectory {
                id: row.id.clone(),
                points: BTreeMap::new(),
            })
            .points
            .insert(
                row.frame,
                TrajectoryPoint {
                    position: nalgebra::Vector3::new(row.pos[0], row.pos[1], row.pos[2]),
                    half_lengths: nalgebra::Vector3::new(row.ext[0], row.ext[1], row.ext[2]),
                },
            );
    }
    by_id.into_values().collect()
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, IoError> {
    Ok(trajectories_from_rows(&read_trajectory_rows(path)?))
}

pub fn read_run_config(path: &Path) -> Result<RunConfig, IoError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| IoError::schema(path, e.to_string()))?;
    toml::from_str(&text).map_err(|e| IoError::schema(path, e.to_string()))
}

pub fn read_scenario(path: &Path) -> Result<ScenarioSpec, IoError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| IoError::schema(path, e.to_string()))?;
    toml::from_str(&text).map_err(|e| IoError::schema(path, e.to_string()))
}

pub fn write_json_report<T: Serialize>(path: &Path, report: &T) -> Result<(), IoError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| IoError::schema(path, e.to_string()))?;
    std::fs::write(path, json).map_err(|e| IoError::schema(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, ScenarioSpec};
    use tempfile::tempdir;

    #[test]
    fn cameras_round_trip() {
        let out = simulate(&ScenarioSpec {
            frames: 1,
            ..Default::default()
        })
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("cams.json");
        write_cameras(&path, &out.cameras).unwrap();
        let back = read_cameras(&path).unwrap();
        assert_eq!(back.len(), out.cameras.len());
        for (a, b) in back.iter().zip(&out.cameras) {
            assert!((a.projection - b.projection).norm() < 1e-9);
            assert!((a.ground_homography - b.ground_homography).norm() < 1e-9);
        }
    }

    #[test]
    fn detections_round_trip_with_empty_frames() {
        let out = simulate(&ScenarioSpec {
            frames: 12,
            outage_windows: vec![[5, 7]],
            ..Default::default()
        })
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("det.jsonl");
        write_detections(&path, &out.frames).unwrap();
        let back = read_detections(&path, out.cameras.len(), Some((0, 11))).unwrap();
        assert_eq!(back.len(), 12);
        for (a, b) in back.iter().zip(&out.frames) {
            assert_eq!(a.frame, b.frame);
            for (da, db) in a.per_camera.iter().zip(&b.per_camera) {
                assert_eq!(da.len(), db.len());
            }
        }
    }

    #[test]
    fn streaming_reader_matches_batch_reader_and_fills_gaps() {
        let out = simulate(&ScenarioSpec {
            frames: 15,
            outage_windows: vec![[4, 6]],
            clutter_rate: 0.0,
            ..Default::default()
        })
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("det.jsonl");
        write_detections(&path, &out.frames).unwrap();
        let batch = read_detections(&path, out.cameras.len(), None).unwrap();
        let mut reader = DetectionReader::open(&path, out.cameras.len()).unwrap();
        let mut streamed = vec![];
        while let Some(f) = reader.next_frame().unwrap() {
            streamed.push(f);
        }
        assert_eq!(streamed.len(), batch.len());
        for (a, b) in streamed.iter().zip(&batch) {
            assert_eq!(a.frame, b.frame);
            for (da, db) in a.per_camera.iter().zip(&b.per_camera) {
                assert_eq!(da.len(), db.len());
            }
        }
        // Outage frames are synthesized as empty.
        assert!(streamed
            .iter()
            .filter(|f| f.frame >= 4 && f.frame <= 6)
            .all(|f| f.per_camera.iter().all(|d| d.is_empty())));
    }

    #[test]
    fn streaming_reader_rejects_unsorted_frames() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("det.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"frame\":3,\"cam\":0,\"cx\":1.0,\"cy\":1.0,\"w\":5.0,\"h\":5.0,\"feat\":[1.0]}\n",
                "{\"frame\":1,\"cam\":0,\"cx\":1.0,\"cy\":1.0,\"w\":5.0,\"h\":5.0,\"feat\":[1.0]}\n",
            ),
        )
        .unwrap();
        let mut reader = DetectionReader::open(&path, 1).unwrap();
        let mut err = None;
        loop {
            match reader.next_frame() {
                Ok(Some(_)) => continue,
                Ok(None) => break,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert!(matches!(err, Some(IoError::Parse { .. })));
    }

    #[test]
    fn camera_mismatch_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("det.jsonl");
        std::fs::write(
            &path,
            "{\"frame\":0,\"cam\":7,\"cx\":1.0,\"cy\":1.0,\"w\":5.0,\"h\":5.0,\"feat\":[1.0]}\n",
        )
        .unwrap();
        match read_detections(&path, 2, None) {
            Err(IoError::CameraMismatch { camera: 7 }) => {}
            other => panic!("expected camera mismatch, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_line_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("det.jsonl");
        std::fs::write(
            &path,
            "{\"frame\":0,\"cam\":0,\"cx\":1.0,\"cy\":1.0,\"w\":5.0,\"h\":5.0,\"feat\":[1.0]}\nnot json\n",
        )
        .unwrap();
        match read_detections(&path, 2, None) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_schema_error_with_exit_code_2() {
        let err = read_trajectories(Path::new("/nonexistent/xyz.jsonl")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn trajectory_rows_group_into_tracks() {
        let rows = vec![
            TrajectoryRow {
                id: "0_0".into(),
                frame: 0,
                pos: [1.0, 2.0, 0.9],
                ext: [0.3, 0.3, 0.9],
                vel: [0.0; 3],
            },
            TrajectoryRow {
                id: "0_0".into(),
                frame: 1,
                pos: [1.1, 2.0, 0.9],
                ext: [0.3, 0.3, 0.9],
                vel: [0.0; 3],
            },
            TrajectoryRow {
                id: "0_1".into(),
                frame: 0,
                pos: [4.0, 2.0, 0.9],
                ext: [0.3, 0.3, 0.9],
                vel: [0.0; 3],
            },
        ];
        let trajs = trajectories_from_rows(&rows);
        assert_eq!(trajs.len(), 2);
        assert_eq!(trajs[0].points.len(), 2);
    }
}
