//! Streaming filter state: the GLMB density plus the TT store and the birth
//! candidates pending for the next frame.

use super::step::run_step;
use super::{Estimate, GlmbDensity};
use crate::birth::BirthCandidate;
use crate::config::RunConfig;
use crate::geometry::CameraModel;
use crate::reid::TtStore;
use crate::sensing::Measurement;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub frame: u32,
    pub n_hypotheses: usize,
    pub n_estimates: usize,
    pub children_generated: usize,
    pub predict_only: bool,
}

pub struct MvGlmbFilter {
    cfg: RunConfig,
    cams: Vec<CameraModel>,
    pub density: GlmbDensity,
    pub tt_store: TtStore,
    pub pending_birth: Vec<BirthCandidate>,
    single_hypothesis: bool,
    reid_enabled: bool,
    dump: Option<BufWriter<File>>,
}

impl MvGlmbFilter {
    pub fn new(cams: Vec<CameraModel>, cfg: RunConfig) -> Self {
        let dump = cfg.glmb.debug_dump.as_ref().and_then(|p| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| log::warn!("debug dump disabled: {e}"))
                .ok()
        });
        Self {
            single_hypothesis: cfg.glmb.single_hypothesis,
            reid_enabled: cfg.reid.enabled,
            cams,
            density: GlmbDensity::empty(),
            tt_store: TtStore::default(),
            pending_birth: vec![],
            dump,
            cfg,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.cams
    }

    /// Keep only the best hypothesis after each cycle.
    pub fn set_single_hypothesis(&mut self, on: bool) {
        self.single_hypothesis = on;
    }

    pub fn set_reid_enabled(&mut self, on: bool) {
        self.reid_enabled = on;
    }

    /// Processes one frame of per-camera measurements. Frames must arrive in
    /// increasing order, one sampling period apart.
    pub fn step(&mut self, frame: u32, meas: &[Vec<Measurement>]) -> StepReport {
        if let Some(prev) = self.density.frame {
            assert!(frame > prev, "frames must be strictly increasing");
        }
        let (density, pending, stats) = run_step(
            &self.cams,
            &self.cfg,
            &self.density,
            &self.pending_birth,
            &mut self.tt_store,
            frame,
            meas,
            self.single_hypothesis,
            self.reid_enabled,
        );
        self.density = density;
        self.pending_birth = pending;
        let report = StepReport {
            frame,
            n_hypotheses: self.density.hypotheses.len(),
            n_estimates: self.density.extract_estimate().len(),
            children_generated: stats.children_generated,
            predict_only: stats.predict_only,
        };
        self.write_dump(&report);
        report
    }

    pub fn estimates(&self) -> Vec<Estimate> {
        self.density.extract_estimate()
    }

    fn write_dump(&mut self, report: &StepReport) {
        let Some(w) = self.dump.as_mut() else { return };
        #[derive(Serialize)]
        struct HypDump {
            weight: f64,
            labels: Vec<String>,
            assoc: Vec<Vec<u16>>,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            frame: u32,
            n_hypotheses: usize,
            hypotheses: Vec<HypDump>,
            #[serde(skip_serializing_if = "Option::is_none")]
            predict_only: Option<&'a bool>,
        }
        let hyps = self
            .density
            .hypotheses
            .iter()
            .map(|h| HypDump {
                weight: h.weight,
                labels: h
                    .tracks
                    .iter()
                    .map(|&i| self.density.table[i].label.to_string())
                    .collect(),
                assoc: h.assoc.clone(),
            })
            .collect();
        let line = Dump {
            frame: report.frame,
            n_hypotheses: report.n_hypotheses,
            hypotheses: hyps,
            predict_only: report.predict_only.then_some(&true),
        };
        if let Ok(json) = serde_json::to_string(&line) {
            let _ = writeln!(w, "{json}");
            let _ = w.flush();
        }
    }
}
