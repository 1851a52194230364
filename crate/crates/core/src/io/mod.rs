//! Parsers and writers for every external file format the pipeline touches:
//! keypoint detections, camera calibration, TRC marker trajectories, and
//! comparison reports.
//!
//! All parsers own unit conversion: positions come out in meters, times in
//! seconds. Gaps are explicit `None` values, never sentinel zeros.

mod calibration;
mod keypoints;
mod report;
mod trc;

pub use calibration::{parse_calibration, write_calibration};
pub use keypoints::{parse_keypoint_file, parse_keypoint_sequence, write_keypoint_sequence};
pub use report::{parse_report_json, write_report, ComparisonReport, ReportFormat, ReportRow};
pub use trc::{parse_trc, write_trc};

use nalgebra::Point3;
use thiserror::Error;

/// Byte offset of a 1-based (line, column) position in `bytes`.
pub(crate) fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if remaining == 0 {
            return (i + column.saturating_sub(1)).min(bytes.len());
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

pub(crate) fn json_error(bytes: &[u8], err: &serde_json::Error) -> IoError {
    IoError::Format {
        offset: byte_offset(bytes, err.line(), err.column()),
        message: err.to_string(),
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed document at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("calibration entry '{camera}': {message}")]
    Calibration { camera: String, message: String },
    #[error("invalid subject data: {0}")]
    Subject(String),
}

/// One camera's labeled 2D detections for one frame.
///
/// A confidence of exactly 0 marks a missing detection; landmark ids are
/// unique within the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    pub camera_id: String,
    pub frame_index: usize,
    pub points: Vec<KeypointDetection>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointDetection {
    pub landmark_id: u32,
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

impl KeypointFrame {
    pub fn detection(&self, landmark_id: u32) -> Option<&KeypointDetection> {
        self.points.iter().find(|p| p.landmark_id == landmark_id)
    }
}

/// Labeled 3D marker positions over time at a fixed sample rate.
///
/// Every frame has one slot per label; absent positions are gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTrajectorySet {
    pub sample_rate: f64,
    pub labels: Vec<String>,
    pub frames: Vec<Vec<Option<Point3<f64>>>>,
}

impl MarkerTrajectorySet {
    pub fn new(sample_rate: f64, labels: Vec<String>) -> Self {
        Self {
            sample_rate,
            labels,
            frames: Vec::new(),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Push one frame; panics if the slot count does not match the labels.
    pub fn push_frame(&mut self, frame: Vec<Option<Point3<f64>>>) {
        assert_eq!(
            frame.len(),
            self.labels.len(),
            "frame must have one slot per label"
        );
        self.frames.push(frame);
    }

    /// Full trajectory of one marker, `None` where the marker is absent.
    pub fn trajectory(&self, label: &str) -> Option<Vec<Option<Point3<f64>>>> {
        let idx = self.label_index(label)?;
        Some(self.frames.iter().map(|f| f[idx]).collect())
    }

    /// Number of gap frames per marker, in label order.
    pub fn gap_counts(&self) -> Vec<(String, usize)> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let gaps = self.frames.iter().filter(|f| f[i].is_none()).count();
                (label.clone(), gaps)
            })
            .collect()
    }

    /// Longest contiguous frame range in which every listed marker is
    /// present; None when a label is unknown or no such frame exists.
    pub fn dense_span(&self, labels: &[&str]) -> Option<std::ops::Range<usize>> {
        let indices: Vec<usize> = labels
            .iter()
            .map(|l| self.label_index(l))
            .collect::<Option<_>>()?;
        let mut best = 0..0;
        let mut run_start = None;
        for (i, frame) in self.frames.iter().enumerate() {
            let complete = indices.iter().all(|&j| frame[j].is_some());
            match (complete, run_start) {
                (true, None) => run_start = Some(i),
                (false, Some(start)) => {
                    if i - start > best.len() {
                        best = start..i;
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(start) = run_start {
            if self.frames.len() - start > best.len() {
                best = start..self.frames.len();
            }
        }
        (!best.is_empty()).then_some(best)
    }

    /// Copy of the given frame range with the same labels and rate.
    pub fn slice(&self, range: std::ops::Range<usize>) -> MarkerTrajectorySet {
        MarkerTrajectorySet {
            sample_rate: self.sample_rate,
            labels: self.labels.clone(),
            frames: self.frames[range].to_vec(),
        }
    }
}


/// Subject anthropometrics carried through scaling as metadata.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubjectInfo {
    pub id: String,
    pub mass_kg: f64,
    pub stature_m: f64,
}

impl SubjectInfo {
    pub fn new(id: impl Into<String>, mass_kg: f64, stature_m: f64) -> Result<Self, IoError> {
        if !(mass_kg > 0.0) {
            return Err(IoError::Subject(format!(
                "mass must be positive, got {mass_kg}"
            )));
        }
        if !(stature_m > 0.0) {
            return Err(IoError::Subject(format!(
                "stature must be positive, got {stature_m}"
            )));
        }
        Ok(Self {
            id: id.into(),
            mass_kg,
            stature_m,
        })
    }
}
