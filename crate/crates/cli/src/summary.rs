//! Machine-readable analysis summary: the `analysis.json` written by
//! `analyze` and consumed by `compare`. Maps are sorted and floats use
//! shortest round-trip formatting, so serialization is deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use gaitkit::{Side, WaveformSummary};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub sample_rate: f64,
    /// Index of the first analyzed frame within the input recording; all
    /// frame numbers below use input indexing.
    pub frame_offset: usize,
    pub n_frames: usize,
    pub walking_axis: [f64; 3],
    pub events: Vec<EventRecord>,
    pub cycles: Vec<CycleRecord>,
    /// One record per cycle, in `cycles` order.
    pub parameters: Vec<ParameterRecord>,
    /// Per-coordinate range of motion, one value per cycle of the matching
    /// side (all cycles for side-free coordinates), in `cycles` order.
    pub rom: BTreeMap<String, Vec<f64>>,
    /// Per-coordinate time-normalized mean and SD over the same cycles.
    pub waveforms: BTreeMap<String, WaveformSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub side: Side,
    pub kind: String,
    pub frame: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub side: Side,
    pub start_frame: usize,
    pub end_frame: usize,
    pub contralateral_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecord {
    pub side: Side,
    pub stride_time: f64,
    pub stride_length: f64,
    pub step_time: f64,
    pub step_length: f64,
}

impl AnalysisSummary {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("summary serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::Input(format!("cannot read analysis file '{}': {e}", path.display()))
        })?;
        serde_json::from_slice(&bytes).map_err(|e| {
            CliError::Input(format!("analysis file '{}': {e}", path.display()))
        })
    }

    /// Spatiotemporal values for one side and metric, in cycle order.
    pub fn parameter_series(&self, side: Side, metric: Metric) -> Vec<f64> {
        self.parameters
            .iter()
            .filter(|r| r.side == side)
            .map(|r| metric.value(r))
            .collect()
    }

    pub fn side_count(&self, side: Side) -> usize {
        self.parameters.iter().filter(|r| r.side == side).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    StrideTime,
    StrideLength,
    StepTime,
    StepLength,
}

impl Metric {
    pub const ALL: [Metric; 4] =
        [Metric::StrideTime, Metric::StrideLength, Metric::StepTime, Metric::StepLength];

    pub fn name(self) -> &'static str {
        match self {
            Metric::StrideTime => "stride_time",
            Metric::StrideLength => "stride_length",
            Metric::StepTime => "step_time",
            Metric::StepLength => "step_length",
        }
    }

    fn value(self, record: &ParameterRecord) -> f64 {
        match self {
            Metric::StrideTime => record.stride_time,
            Metric::StrideLength => record.stride_length,
            Metric::StepTime => record.step_time,
            Metric::StepLength => record.step_length,
        }
    }
}
