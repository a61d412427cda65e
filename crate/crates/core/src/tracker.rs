//! End-to-end orchestration: streaming tracking runs, file-based pipelines,
//! Monte Carlo evaluation aggregation and the occlusion/feature ablation
//! grid.

use crate::config::RunConfig;
use crate::geometry::CameraModel;
use crate::glmb::MvGlmbFilter;
use crate::io::{self, DetectionFrame, IoError, TrajectoryRow};
use crate::metrics::{self, EvalConfig, MetricsReport};
use crate::occlusion::OcclusionModel;
use crate::sim::{self, ScenarioSpec};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Default)]
pub struct TrackFlags {
    pub single_hypothesis: bool,
    pub no_reid: bool,
    pub occlusion_override: Option<OcclusionModel>,
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameStat {
    pub frame: u32,
    pub hypotheses: usize,
    pub estimates: usize,
    pub millis: f64,
    pub predict_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub frames: u32,
    pub total_seconds: f64,
    pub fps: f64,
    pub median_frame_millis: f64,
    pub per_frame: Vec<FrameStat>,
}

impl RunReport {
    fn from_stats(per_frame: Vec<FrameStat>, total_seconds: f64) -> Self {
        let mut times: Vec<f64> = per_frame.iter().map(|s| s.millis).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if times.is_empty() {
            0.0
        } else {
            times[times.len() / 2]
        };
        Self {
            frames: per_frame.len() as u32,
            total_seconds,
            fps: if total_seconds > 0.0 {
                per_frame.len() as f64 / total_seconds
            } else {
                0.0
            },
            median_frame_millis: median,
            per_frame,
        }
    }
}

/// Streaming tracking session: one filter plus the report-confirmation
/// bookkeeping; memory stays bounded by the density size regardless of
/// sequence length.
pub struct TrackingSession {
    filter: MvGlmbFilter,
    confirm: u32,
    appearances: std::collections::BTreeMap<crate::glmb::Label, u32>,
    stats: Vec<FrameStat>,
    started: Instant,
}

impl TrackingSession {
    pub fn new(cams: &[CameraModel], cfg: &RunConfig, flags: &TrackFlags) -> Self {
        let mut cfg = cfg.clone();
        if let Some(seed) = flags.seed_override {
            cfg.glmb.seed = seed;
        }
        if let Some(model) = flags.occlusion_override {
            cfg.occlusion.model = model;
        }
        if flags.single_hypothesis {
            cfg.glmb.single_hypothesis = true;
        }
        if flags.no_reid {
            cfg.reid.enabled = false;
        }
        Self {
            confirm: cfg.glmb.confirm_frames.max(1),
            filter: MvGlmbFilter::new(cams.to_vec(), cfg),
            appearances: std::collections::BTreeMap::new(),
            stats: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Processes one frame and returns the confirmed estimate rows.
    pub fn step(&mut self, frame: &DetectionFrame) -> Vec<TrajectoryRow> {
        let t0 = Instant::now();
        let report = self.filter.step(frame.frame, &frame.per_camera);
        let millis = t0.elapsed().as_secs_f64() * 1e3;
        let estimates = self.filter.estimates();
        let mut rows = Vec::new();
        for e in &estimates {
            let seen = self.appearances.entry(e.label).or_insert(0);
            *seen += 1;
            if *seen < self.confirm {
                continue;
            }
            rows.push(TrajectoryRow {
                id: e.label.to_string(),
                frame: frame.frame,
                pos: e.position,
                ext: e.half_lengths,
                vel: e.velocity,
            });
        }
        self.stats.push(FrameStat {
            frame: frame.frame,
            hypotheses: report.n_hypotheses,
            estimates: estimates.len(),
            millis,
            predict_only: report.predict_only,
        });
        rows
    }

    pub fn finish(self) -> RunReport {
        let total = self.started.elapsed().as_secs_f64();
        RunReport::from_stats(self.stats, total)
    }
}

/// Runs the filter over in-memory frames, returning trajectory rows sorted
/// by (frame, id) and a runtime report.
pub fn run_tracking(
    cams: &[CameraModel],
    frames: &[DetectionFrame],
    cfg: &RunConfig,
    flags: &TrackFlags,
) -> (Vec<TrajectoryRow>, RunReport) {
    let mut session = TrackingSession::new(cams, cfg, flags);
    let mut rows: Vec<TrajectoryRow> = Vec::new();
    for frame in frames {
        rows.extend(session.step(frame));
    }
    (rows, session.finish())
}

/// File-based `track`: streams the detection file through the filter and
/// writes trajectory rows as frames complete.
pub fn track_files(
    detections: &Path,
    cameras: &Path,
    config: Option<&Path>,
    out: &Path,
    report_out: Option<&Path>,
    flags: &TrackFlags,
) -> Result<RunReport, IoError> {
    use std::io::Write;
    let cams = io::read_cameras(cameras)?;
    let cfg = match config {
        Some(p) => io::read_run_config(p)?,
        None => RunConfig::default(),
    };
    let mut reader = io::DetectionReader::open(detections, cams.len())?;
    let mut session = TrackingSession::new(&cams, &cfg, flags);
    let file = std::fs::File::create(out).map_err(|e| IoError::Schema {
        path: out.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut writer = std::io::BufWriter::new(file);
    while let Some(frame) = reader.next_frame()? {
        for row in session.step(&frame) {
            let json = serde_json::to_string(&row).map_err(|e| IoError::Schema {
                path: out.display().to_string(),
                msg: e.to_string(),
            })?;
            writeln!(writer, "{json}").map_err(|e| IoError::Schema {
                path: out.display().to_string(),
                msg: e.to_string(),
            })?;
        }
    }
    writer.flush().map_err(|e| IoError::Schema {
        path: out.display().to_string(),
        msg: e.to_string(),
    })?;
    let report = session.finish();
    if let Some(rp) = report_out {
        io::write_json_report(rp, &report)?;
    }
    Ok(report)
}

/// File-based `simulate`: writes truth/detections/cameras under `out_dir`.
pub fn simulate_files(
    spec: &ScenarioSpec,
    out_dir: &Path,
) -> Result<(std::path::PathBuf, std::path::PathBuf, std::path::PathBuf), IoError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| IoError::Schema {
            path: out_dir.display().to_string(),
            msg: e.to_string(),
        })?;
    let out = sim::simulate(spec).map_err(|e| IoError::Infeasible(e.to_string()))?;
    let truth_path = out_dir.join("truth.jsonl");
    let det_path = out_dir.join("detections.jsonl");
    let cam_path = out_dir.join("cameras.json");
    io::write_trajectories(&truth_path, &out.truth)?;
    io::write_detections(&det_path, &out.frames)?;
    io::write_cameras(&cam_path, &out.cameras)?;
    Ok((truth_path, det_path, cam_path))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub runs: Vec<MetricsReport>,
    pub mean_mota: f64,
    pub std_mota: f64,
    pub mean_idf1: f64,
    pub std_idf1: f64,
    pub mean_ospa2: f64,
    pub std_ospa2: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / values.len() as f64;
    (mean, var.sqrt())
}

pub fn aggregate(runs: Vec<MetricsReport>) -> EvaluationReport {
    let motas: Vec<f64> = runs.iter().map(|r| r.clear.mota).collect();
    let idf1s: Vec<f64> = runs.iter().map(|r| r.idf1).collect();
    let ospas: Vec<f64> = runs.iter().map(|r| r.ospa2).collect();
    let (mean_mota, std_mota) = mean_std(&motas);
    let (mean_idf1, std_idf1) = mean_std(&idf1s);
    let (mean_ospa2, std_ospa2) = mean_std(&ospas);
    EvaluationReport {
        runs,
        mean_mota,
        std_mota,
        mean_idf1,
        std_idf1,
        mean_ospa2,
        std_ospa2,
    }
}

/// File-based `evaluate`. With `mc_runs`, `{run}` in the paths is replaced
/// by each run index and the reports are aggregated (mean, std).
pub fn evaluate_files(
    est: &str,
    truth: &str,
    cfg: &EvalConfig,
    mc_runs: Option<usize>,
    curve_out: Option<&Path>,
) -> Result<EvaluationReport, IoError> {
    let paths: Vec<(String, String)> = match mc_runs {
        Some(n) if n > 0 => (0..n)
            .map(|i| {
                (
                    est.replace("{run}", &i.to_string()),
                    truth.replace("{run}", &i.to_string()),
                )
            })
            .collect(),
        _ => vec![(est.to_string(), truth.to_string())],
    };
    // MC runs evaluate in parallel across seeds.
    let runs: Vec<metrics::MetricsReport> = paths
        .par_iter()
        .map(|(est_path, truth_path)| -> Result<metrics::MetricsReport, IoError> {
            let est_t = io::read_trajectories(Path::new(est_path))?;
            let truth_t = io::read_trajectories(Path::new(truth_path))?;
            Ok(metrics::evaluate(&est_t, &truth_t, cfg))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(curve_path) = curve_out {
        let (est_path, truth_path) = &paths[0];
        let est_t = io::read_trajectories(Path::new(est_path))?;
        let truth_t = io::read_trajectories(Path::new(truth_path))?;
        let (k0, k1) = runs[0].window;
        let curve = metrics::ospa2_curve(&est_t, &truth_t, k0, k1, cfg);
        let mut text = String::from("frame,ospa2\n");
        for (k, v) in curve {
            text.push_str(&format!("{k},{v}\n"));
        }
        std::fs::write(curve_path, text).map_err(|e| IoError::Schema {
            path: curve_path.display().to_string(),
            msg: e.to_string(),
        })?;
    }
    Ok(aggregate(runs))
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub occlusion: String,
    pub features: bool,
    pub reid: bool,
    pub mean_mota: f64,
    pub mean_idf1: f64,
    pub mean_ospa2: f64,
    pub std_idf1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub scenario: String,
    pub seeds: usize,
    pub grid: Vec<AblationCell>,
}

/// Runs the occlusion-model x feature-usage grid (plus the no-recall row)
/// over `seeds` simulated replicates of the scenario.
pub fn run_ablation(
    spec: &ScenarioSpec,
    base_cfg: &RunConfig,
    seeds: usize,
) -> Result<AblationReport, IoError> {
    let combos: Vec<(OcclusionModel, bool, bool)> = vec![
        (OcclusionModel::Ioa, false, true),
        (OcclusionModel::Ioa, true, true),
        (OcclusionModel::Ioa, true, false),
        (OcclusionModel::Los, false, true),
        (OcclusionModel::Los, true, true),
        (OcclusionModel::Constant, false, true),
        (OcclusionModel::Constant, true, true),
    ];
    let cells: Vec<AblationCell> = combos
        .par_iter()
        .map(|&(model, features, reid)| {
            let runs: Vec<MetricsReport> = (0..seeds)
                .into_par_iter()
                .map(|seed| {
                    let mut s = spec.clone();
                    s.seed = seed as u64;
                    let out = sim::simulate(&s).expect("scenario must be feasible");
                    let mut cfg = base_cfg.clone();
                    cfg.occlusion.model = model;
                    cfg.sensing.use_features = features;
                    cfg.reid.enabled = reid;
                    cfg.glmb.seed = seed as u64;
                    let (rows, _) = run_tracking(
                        &out.cameras,
                        &out.frames,
                        &cfg,
                        &TrackFlags::default(),
                    );
                    let est = io::trajectories_from_rows(&rows);
                    let truth = io::trajectories_from_rows(&out.truth);
                    metrics::evaluate(&est, &truth, &EvalConfig::default())
                })
                .collect();
            let agg = aggregate(runs);
            AblationCell {
                occlusion: format!("{model:?}"),
                features,
                reid,
                mean_mota: agg.mean_mota,
                mean_idf1: agg.mean_idf1,
                mean_ospa2: agg.mean_ospa2,
                std_idf1: agg.std_idf1,
            }
        })
        .collect();
    Ok(AblationReport {
        scenario: spec.name.clone(),
        seeds,
        grid: cells,
    })
}
