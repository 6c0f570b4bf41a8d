//! Run reports: serializable results of `localize`, `bench` and `simulate`.
//!
//! Everything outside [`RunReport::timing`] is a deterministic function of
//! the inputs and flags.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::beamformer::ScanMode;
use crate::covstream::StreamCounters;
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localize: Option<LocalizeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateResult>,
    /// Wall-clock seconds per stage. Machine dependent.
    #[serde(default)]
    pub timing: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self {
            version: REPORT_VERSION,
            command: command.to_string(),
            config: BTreeMap::new(),
            localize: None,
            truth: None,
            bench: None,
            simulate: None,
            timing: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(format!("report serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("report: {e}")))
    }

    /// The report with timing removed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: BTreeMap::new(),
            ..self.clone()
        }
    }
}

/// Multiply-add counts per pipeline stage.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCosts {
    /// Initial (accelerated) or batch (traditional) covariance.
    pub covariance: u64,
    /// All sliding covariance updates.
    pub covariance_update: u64,
    /// Initial or batch direct inversion.
    pub inverse: u64,
    /// All recursive inverse updates, including fallbacks and refreshes.
    pub inverse_update: u64,
    pub orientation: u64,
    pub weights: u64,
    pub reconstruction: u64,
}

impl StageCosts {
    pub fn total(&self) -> u64 {
        self.covariance
            + self.covariance_update
            + self.inverse
            + self.inverse_update
            + self.orientation
            + self.weights
            + self.reconstruction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: usize,
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<[f64; 3]>,
    /// Why the point was skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRun {
    pub mode: ScanMode,
    /// First sample of the analyzed window.
    pub window_start: u64,
    pub window_len: usize,
    pub points: Vec<PointResult>,
    /// Estimated points by descending activity.
    pub ranking: Vec<usize>,
    pub costs: StageCosts,
    pub counters: StreamCounters,
}

impl ModeRun {
    pub fn top_point(&self) -> Option<usize> {
        self.ranking.first().copied()
    }
}

/// Accelerated vs traditional on the same window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointComparison {
    pub point: usize,
    pub orientation_error: f64,
    pub recon_error: f64,
    pub orientation_error_scaled: f64,
    pub recon_error_scaled: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (mut n, mut sum, mut max) = (0usize, 0.0, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            sum += v;
            max = max.max(v);
        }
        (n > 0).then(|| Summary {
            mean: sum / n as f64,
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub points: Vec<PointComparison>,
    pub orientation_error: Option<Summary>,
    pub recon_error: Option<Summary>,
    pub orientation_error_scaled: Option<Summary>,
    pub recon_error_scaled: Option<Summary>,
    /// Values at the accelerated top-ranked point.
    pub top: Option<PointComparison>,
    pub same_top_point: bool,
    pub same_ranking: bool,
    /// Reconstruction multiply-adds, accelerated / traditional.
    pub reconstruction_cost_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeResult {
    pub channels: usize,
    pub samples: usize,
    pub grid_points: usize,
    pub ns: usize,
    pub cy: usize,
    pub slides: u64,
    pub runs: Vec<ModeRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

impl LocalizeResult {
    pub fn run(&self, mode: ScanMode) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

/// Accuracy against a known scene, per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMetrics {
    pub runs: Vec<TruthRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRun {
    pub mode: ScanMode,
    pub top_point: Option<usize>,
    /// Distance from the top-ranked point to the nearest true source.
    pub localization_error: Option<f64>,
    pub nearest_source: Option<usize>,
    pub top_is_source: bool,
    /// Estimated vs true orientation at the top point, when it is a source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation_error_scaled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub channels: usize,
    pub samples: usize,
    pub grid_points: usize,
    pub sources: Vec<usize>,
    pub eeg: String,
    pub leadfield: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub k: usize,
    pub ns: usize,
    pub cy: usize,
    pub grid_points: usize,
    pub slides: u64,
    pub seed: u64,
    pub init: InitCosts,
    /// Absent when no slide was applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<UpdateCosts>,
    pub reconstruction: ReconstructionCosts,
    pub accelerated: StageCosts,
    pub traditional: StageCosts,
    pub counters: StreamCounters,
    /// Relative Frobenius error of the maintained inverse against a direct
    /// inversion after the last slide.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_drift: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitCosts {
    pub covariance: u64,
    pub inverse: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateCosts {
    pub recursive_covariance: u64,
    pub recursive_inverse: u64,
    pub batch_covariance: u64,
    pub batch_inverse: u64,
    pub recursive_per_slide: f64,
    pub batch_per_slide: f64,
    /// Recursive / batch multiply-adds.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionCosts {
    pub samples: usize,
    pub scalar_per_point: u64,
    pub vector_per_point: u64,
    /// Scalar / vector multiply-adds.
    pub ratio: f64,
}

/// One row per grid point: position, activity and orientation per mode, and
/// the per-point comparison when both modes ran.
pub fn write_points_csv<W: Write>(w: W, result: &LocalizeResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["point".to_string(), "x".into(), "y".into(), "z".into()];
    for run in &result.runs {
        let m = mode_name(run.mode);
        for col in ["activity", "rank", "eta_x", "eta_y", "eta_z", "flag"] {
            header.push(format!("{m}_{col}"));
        }
    }
    if result.comparison.is_some() {
        for col in [
            "orientation_error",
            "recon_error",
            "orientation_error_scaled",
            "recon_error_scaled",
        ] {
            header.push(col.to_string());
        }
    }
    out.write_record(&header).map_err(csv_error)?;

    let ranks: Vec<Vec<Option<usize>>> = result
        .runs
        .iter()
        .map(|run| {
            let mut r = vec![None; result.grid_points];
            for (pos, &p) in run.ranking.iter().enumerate() {
                r[p] = Some(pos + 1);
            }
            r
        })
        .collect();
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();

    for p in 0..result.grid_points {
        let pos = result.runs.first().map(|r| r.points[p].position).unwrap_or_default();
        let mut row = vec![
            p.to_string(),
            pos[0].to_string(),
            pos[1].to_string(),
            pos[2].to_string(),
        ];
        for (run, rank) in result.runs.iter().zip(&ranks) {
            let pr = &run.points[p];
            row.push(fmt(pr.activity));
            row.push(rank[p].map(|r| r.to_string()).unwrap_or_default());
            for i in 0..3 {
                row.push(fmt(pr.orientation.map(|o| o[i])));
            }
            row.push(pr.flag.clone().unwrap_or_default());
        }
        if let Some(cmp) = &result.comparison {
            match cmp.points.iter().find(|c| c.point == p) {
                Some(c) => {
                    for v in [
                        c.orientation_error,
                        c.recon_error,
                        c.orientation_error_scaled,
                        c.recon_error_scaled,
                    ] {
                        row.push(v.to_string());
                    }
                }
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn mode_name(mode: ScanMode) -> &'static str {
    match mode {
        ScanMode::Accelerated => "accelerated",
        ScanMode::Traditional => "traditional",
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("CSV output: {e}"))
}
