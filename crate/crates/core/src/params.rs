//! Per-cycle spatiotemporal parameters and kinematic waveform summaries.
//!
//! Lengths are measured along the walking axis, not as 3D distances, so
//! vertical heel motion never inflates them. Waveform SD is the population
//! standard deviation.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{GaitCycle, GaitCycleSet, Side};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("data error: {0}")]
    Data(String),
    #[error("span error: {0}")]
    Span(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatiotemporalRecord {
    pub side: Side,
    pub stride_time: f64,
    pub stride_length: f64,
    pub step_time: f64,
    pub step_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub n_cycles: usize,
}

fn heel_at<'a>(
    trajectory: &'a [Point3<f64>],
    frame: usize,
    side: Side,
    what: &str,
) -> Result<&'a Point3<f64>, ParamError> {
    trajectory.get(frame).ok_or_else(|| {
        ParamError::Data(format!(
            "{} heel missing at {what} frame {frame} (trajectory has {} frames)",
            side.label(),
            trajectory.len()
        ))
    })
}

fn cycle_record(
    cycle: &GaitCycle,
    heel_left: &[Point3<f64>],
    heel_right: &[Point3<f64>],
    axis: &Vector3<f64>,
) -> Result<SpatiotemporalRecord, ParamError> {
    let (ipsi, contra) = match cycle.side {
        Side::Left => (heel_left, heel_right),
        Side::Right => (heel_right, heel_left),
    };
    let start = heel_at(ipsi, cycle.start.frame_index, cycle.side, "cycle start")?;
    let end = heel_at(ipsi, cycle.end.frame_index, cycle.side, "cycle end")?;
    let contra_strike = heel_at(
        contra,
        cycle.contralateral.frame_index,
        cycle.side.opposite(),
        "contralateral strike",
    )?;

    let record = SpatiotemporalRecord {
        side: cycle.side,
        stride_time: cycle.end.time - cycle.start.time,
        stride_length: ((end - start).dot(axis)).abs(),
        step_time: cycle.end.time - cycle.contralateral.time,
        step_length: ((end - contra_strike).dot(axis)).abs(),
    };

    let describe = format!(
        "{} cycle [{}, {}]",
        cycle.side.label(),
        cycle.start.frame_index,
        cycle.end.frame_index
    );
    for (name, value) in [
        ("stride_time", record.stride_time),
        ("stride_length", record.stride_length),
        ("step_time", record.step_time),
        ("step_length", record.step_length),
    ] {
        if !(value > 0.0) {
            return Err(ParamError::Data(format!(
                "{describe}: {name} = {value}, expected > 0"
            )));
        }
    }
    if record.step_time >= record.stride_time {
        return Err(ParamError::Data(format!(
            "{describe}: step_time {} not below stride_time {}",
            record.step_time, record.stride_time
        )));
    }
    if record.step_length > record.stride_length + 1e-9 {
        return Err(ParamError::Data(format!(
            "{describe}: step_length {} exceeds stride_length {}",
            record.step_length, record.stride_length
        )));
    }
    Ok(record)
}

/// One spatiotemporal record per cycle, in cycle order. Stride metrics use
/// the ipsilateral heel at the bounding strikes; step metrics relate the
/// ipsilateral strike ending the cycle to the contralateral strike inside.
pub fn spatiotemporal(
    cycles: &GaitCycleSet,
    heel_left: &[Point3<f64>],
    heel_right: &[Point3<f64>],
    walking_axis: &Vector3<f64>,
) -> Result<Vec<SpatiotemporalRecord>, ParamError> {
    let norm = walking_axis.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(ParamError::Parameter(
            "walking axis must be a nonzero finite vector".into(),
        ));
    }
    let axis = walking_axis / norm;
    cycles
        .cycles
        .iter()
        .map(|cycle| cycle_record(cycle, heel_left, heel_right, &axis))
        .collect()
}

/// Range of motion: max − min over the waveform.
pub fn rom(waveform: &[f64]) -> Result<f64, ParamError> {
    if waveform.is_empty() {
        return Err(ParamError::Span("empty waveform has no range".into()));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in waveform {
        min = min.min(v);
        max = max.max(v);
    }
    Ok(max - min)
}

/// Pointwise mean and population SD across equal-length normalized cycles.
pub fn mean_sd_waveform(cycles: &[Vec<f64>]) -> Result<WaveformSummary, ParamError> {
    let first = cycles
        .first()
        .ok_or_else(|| ParamError::Shape("need at least one cycle".into()))?;
    let len = first.len();
    if len == 0 {
        return Err(ParamError::Shape("cycles must be non-empty".into()));
    }
    for (i, cycle) in cycles.iter().enumerate() {
        if cycle.len() != len {
            return Err(ParamError::Shape(format!(
                "cycle {i} has {} samples, expected {len}",
                cycle.len()
            )));
        }
    }
    let n = cycles.len() as f64;
    let mut mean = vec![0.0; len];
    for cycle in cycles {
        for (m, v) in mean.iter_mut().zip(cycle) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; len];
    for cycle in cycles {
        for ((s, v), m) in sd.iter_mut().zip(cycle).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in sd.iter_mut() {
        *s = s.sqrt();
    }
    Ok(WaveformSummary {
        mean,
        sd,
        n_cycles: cycles.len(),
    })
}
