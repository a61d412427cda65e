//! Command-line front end: simulate | track | evaluate | ablate.
//!
//! Exit codes: 0 success, 2 parse/schema error, 3 infeasible configuration.

use clap::{Parser, Subcommand, ValueEnum};
use mvglmb_core::io::{self, IoError};
use mvglmb_core::metrics::{BaseDistance, EvalConfig};
use mvglmb_core::occlusion::OcclusionModel;
use mvglmb_core::sim::ScenarioSpec;
use mvglmb_core::tracker::{self, TrackFlags};
use mvglmb_core::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mvglmb",
    about = "Multi-view 3D multi-object tracking over 2D detections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OcclusionArg {
    Ioa,
    Los,
    Constant,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Euclidean,
    Giou,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: truth, detections and cameras.
    Simulate {
        /// Scenario TOML; omitted fields take defaults.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "sim_out")]
        out_dir: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the tracker over a detection file.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// Run config TOML; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Runtime report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Keep only the best hypothesis each step.
        #[arg(long)]
        single_hypothesis: bool,
        /// Disable track re-identification.
        #[arg(long)]
        no_reid: bool,
        /// Override the occlusion model.
        #[arg(long)]
        occlusion: Option<OcclusionArg>,
        /// Override the sampler seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score an estimate file against a truth file.
    Evaluate {
        /// Estimate path; with --mc-runs, "{run}" expands per run index.
        #[arg(long)]
        est: String,
        #[arg(long)]
        truth: String,
        #[arg(long, value_enum, default_value = "euclidean")]
        base: BaseArg,
        /// OSPA(2) cutoff; default 1 m (Euclidean) or 1.0 (GIoU).
        #[arg(long)]
        cutoff: Option<f64>,
        /// Matching threshold; default 1 m (Euclidean) or 0.5 (GIoU).
        #[arg(long)]
        threshold: Option<f64>,
        /// Evaluate ground-plane (2D) positions.
        #[arg(long)]
        ground_plane: bool,
        /// Aggregate mean/std over this many runs.
        #[arg(long)]
        mc_runs: Option<usize>,
        /// Write the per-frame OSPA(2) curve CSV here.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Write the report JSON here (stdout always gets a summary).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the occlusion-model x feature-usage grid on a scenario.
    Ablate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn run() -> Result<(), IoError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            scenario,
            out_dir,
            seed,
        } => {
            let mut spec = match scenario {
                Some(p) => io::read_scenario(&p)?,
                None => ScenarioSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let (truth, det, cams) = tracker::simulate_files(&spec, &out_dir)?;
            println!("truth: {}", truth.display());
            println!("detections: {}", det.display());
            println!("cameras: {}", cams.display());
        }
        Command::Track {
            detections,
            cameras,
            config,
            out,
            report,
            single_hypothesis,
            no_reid,
            occlusion,
            seed,
        } => {
            let flags = TrackFlags {
                single_hypothesis,
                no_reid,
                occlusion_override: occlusion.map(|o| match o {
                    OcclusionArg::Ioa => OcclusionModel::Ioa,
                    OcclusionArg::Los => OcclusionModel::Los,
                    OcclusionArg::Constant => OcclusionModel::Constant,
                }),
                seed_override: seed,
            };
            let r = tracker::track_files(
                &detections,
                &cameras,
                config.as_deref(),
                &out,
                report.as_deref(),
                &flags,
            )?;
            println!(
                "{} frames in {:.2}s ({:.1} fps), median {:.2} ms/frame",
                r.frames, r.total_seconds, r.fps, r.median_frame_millis
            );
        }
        Command::Evaluate {
            est,
            truth,
            base,
            cutoff,
            threshold,
            ground_plane,
            mc_runs,
            curve,
            report,
        } => {
            let mut cfg = match base {
                BaseArg::Euclidean => EvalConfig::default(),
                BaseArg::Giou => EvalConfig::giou(),
            };
            cfg.ground_plane = ground_plane;
            if let Some(c) = cutoff {
                cfg.cutoff = c;
            }
            if let Some(t) = threshold {
                cfg.assoc_threshold = t;
            }
            if ground_plane && cfg.base == BaseDistance::Giou3d {
                return Err(IoError::Infeasible(
                    "ground-plane mode requires the Euclidean base distance".into(),
                ));
            }
            let r = tracker::evaluate_files(&est, &truth, &cfg, mc_runs, curve.as_deref())?;
            println!(
                "MOTA {:.4} ({:.4})  IDF1 {:.4} ({:.4})  OSPA2 {:.4} ({:.4})  [{} run(s)]",
                r.mean_mota,
                r.std_mota,
                r.mean_idf1,
                r.std_idf1,
                r.mean_ospa2,
                r.std_ospa2,
                r.runs.len()
            );
            if let Some(p) = report {
                io::write_json_report(&p, &r)?;
            }
        }
        Command::Ablate {
            scenario,
            config,
            seeds,
            report,
        } => {
            let spec = match scenario {
                Some(p) => io::read_scenario(&p)?,
                None => ScenarioSpec::default(),
            };
            let cfg = match config {
                Some(p) => io::read_run_config(&p)?,
                None => RunConfig::default(),
            };
            let r = tracker::run_ablation(&spec, &cfg, seeds)?;
            println!("occlusion features reid   MOTA    IDF1    OSPA2");
            for cell in &r.grid {
                println!(
                    "{:<9} {:<8} {:<6} {:.4}  {:.4}  {:.4}",
                    cell.occlusion,
                    cell.features,
                    cell.reid,
                    cell.mean_mota,
                    cell.mean_idf1,
                    cell.mean_ospa2
                );
            }
            if let Some(p) = report {
                io::write_json_report(&p, &r)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
