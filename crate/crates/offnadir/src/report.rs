//! Metrics report output: JSON mirrors [`MetricsReport`], CSV carries one row per track.

use std::path::Path;

use offnadir_core::eval::{EvalConfig, MetricsReport, Track, TrackMetrics};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::write_text;

pub const CSV_HEADER: [&str; 9] = ["track", "f1", "precision", "recall", "ap50_boundary", "mean_epe", "tp", "fp", "fn"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackJson {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub boundary_ap50: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl From<&TrackMetrics> for TrackJson {
    fn from(t: &TrackMetrics) -> Self {
        Self {
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
            boundary_ap50: t.boundary_ap50,
            tp: t.tp,
            fp: t.fp,
            fn_: t.fn_,
        }
    }
}

impl From<TrackJson> for TrackMetrics {
    fn from(t: TrackJson) -> Self {
        Self {
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
            boundary_ap50: t.boundary_ap50,
            tp: t.tp,
            fp: t.fp,
            fn_: t.fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigJson {
    pub iou_threshold: f64,
    /// `raster` or `polygon`.
    pub iou_space: String,
    pub boundary_threshold: f64,
    /// `null` means 2% of each image diagonal.
    pub boundary_d: Option<f64>,
    pub raster_scale: f64,
}

impl From<&EvalConfig> for ConfigJson {
    fn from(c: &EvalConfig) -> Self {
        Self {
            iou_threshold: c.iou_threshold,
            iou_space: c.iou_space.as_str().to_string(),
            boundary_threshold: c.boundary_threshold,
            boundary_d: c.boundary_d,
            raster_scale: c.raster_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub roof: TrackJson,
    pub footprint: TrackJson,
    pub mean_epe: Option<f64>,
    pub epe_count: usize,
    pub config: ConfigJson,
}

impl ReportJson {
    pub fn new(r: &MetricsReport, c: &EvalConfig) -> Self {
        Self {
            roof: (&r.roof).into(),
            footprint: (&r.footprint).into(),
            mean_epe: r.mean_epe,
            epe_count: r.epe_count,
            config: c.into(),
        }
    }

    pub fn metrics(&self) -> MetricsReport {
        MetricsReport {
            roof: self.roof.into(),
            footprint: self.footprint.into(),
            mean_epe: self.mean_epe,
            epe_count: self.epe_count,
        }
    }
}

pub fn report_to_json(r: &MetricsReport, c: &EvalConfig) -> String {
    let mut s = serde_json::to_string_pretty(&ReportJson::new(r, c)).expect("plain data always serializes");
    s.push('\n');
    s
}

/// Numbers use the shortest round-tripping decimal; a missing EPE is an empty field.
pub fn report_to_csv(r: &MetricsReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("writing to memory");
    let epe = r.mean_epe.map(|e| e.to_string()).unwrap_or_default();
    for t in Track::ALL {
        let m = r.track(t);
        w.write_record([
            t.as_str().to_string(),
            m.f1.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.boundary_ap50.to_string(),
            epe.clone(),
            m.tp.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

/// Writes JSON first, then CSV when requested.
pub fn emit_report(r: &MetricsReport, c: &EvalConfig, json: &Path, csv: Option<&Path>) -> Result<()> {
    write_text(json, &report_to_json(r, c))?;
    if let Some(p) = csv {
        write_text(p, &report_to_csv(r))?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ReportJson> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}
