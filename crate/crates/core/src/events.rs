//! Gait event detection, cycle segmentation, and time normalization.
//!
//! Heel strikes and toe offs are the local maxima and minima of each heel
//! marker's position along the walking axis relative to the pelvis center
//! (a coordinate-based, force-plate-free rule). Cycles run between
//! consecutive same-side heel strikes and must contain exactly one
//! contralateral heel strike.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::MarkerTrajectorySet;

/// Minimum time between two same-kind events; sub-0.4 s strides are not
/// physiological walking.
pub const MIN_PEAK_SEPARATION_S: f64 = 0.4;

/// Samples per time-normalized gait cycle (0-100% inclusive).
pub const NORMALIZED_SAMPLES: usize = 101;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("no gait detected: {0}")]
    NoGait(String),
    #[error("span error: {0}")]
    Span(String),
    #[error("no complete gait cycles")]
    NoCycles,
    #[error("gap at frame {index} in '{label}'")]
    Gap { label: String, index: usize },
    #[error("parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HeelStrike,
    ToeOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub side: Side,
    pub kind: EventKind,
    pub frame_index: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitCycle {
    pub side: Side,
    pub start: GaitEvent,
    pub end: GaitEvent,
    pub contralateral: GaitEvent,
}

impl GaitCycle {
    pub fn start_frame(&self) -> usize {
        self.start.frame_index
    }

    pub fn end_frame(&self) -> usize {
        self.end.frame_index
    }

    pub fn duration(&self) -> f64 {
        self.end.time - self.start.time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitCycleSet {
    pub cycles: Vec<GaitCycle>,
    pub sample_rate: f64,
}

impl GaitCycleSet {
    pub fn for_side(&self, side: Side) -> Vec<&GaitCycle> {
        self.cycles.iter().filter(|c| c.side == side).collect()
    }
}

/// Dominant horizontal displacement direction of the pelvis center,
/// normalized. Fails when the subject does not travel.
pub fn estimate_walking_axis(pelvis_center: &[Point3<f64>]) -> Result<Vector3<f64>, EventError> {
    let (first, last) = match (pelvis_center.first(), pelvis_center.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(EventError::Parameter("empty pelvis trajectory".into())),
    };
    let mut displacement = last - first;
    displacement.y = 0.0;
    let norm = displacement.norm();
    if !(norm > 1e-3) {
        return Err(EventError::NoGait(format!(
            "horizontal pelvis displacement {norm:.2e} m is too small to define a walking axis"
        )));
    }
    Ok(displacement / norm)
}

/// Candidate extremum with the signal value used for weaker-event pruning.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    frame: usize,
    height: f64,
    kind: EventKind,
}

/// Interior local maxima (or minima when `minima`), pruned so that no two
/// survivors are closer than `min_separation` frames; ties resolved toward
/// the stronger, then earlier, candidate.
fn extrema(signal: &[f64], minima: bool, min_separation: usize) -> Vec<Candidate> {
    let mut candidates = Vec::new();
    for i in 1..signal.len().saturating_sub(1) {
        let is_peak = if minima {
            signal[i] < signal[i - 1] && signal[i] <= signal[i + 1]
        } else {
            signal[i] > signal[i - 1] && signal[i] >= signal[i + 1]
        };
        if is_peak {
            candidates.push(Candidate {
                frame: i,
                height: signal[i],
                kind: if minima {
                    EventKind::ToeOff
                } else {
                    EventKind::HeelStrike
                },
            });
        }
    }
    // strongest-first greedy acceptance, as in standard distance-filtered
    // peak pickers
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ha, hb) = (candidates[a].height, candidates[b].height);
        let strength = if minima {
            ha.total_cmp(&hb)
        } else {
            hb.total_cmp(&ha)
        };
        strength.then(candidates[a].frame.cmp(&candidates[b].frame))
    });
    let mut accepted: Vec<Candidate> = Vec::new();
    for idx in order {
        let c = candidates[idx];
        if accepted
            .iter()
            .all(|a| a.frame.abs_diff(c.frame) >= min_separation)
        {
            accepted.push(c);
        }
    }
    accepted.sort_by_key(|c| c.frame);
    accepted
}

/// Enforce per-side alternation by repeatedly dropping the weaker of two
/// same-kind consecutive events (lower heel strike, higher toe off).
fn alternate(mut events: Vec<Candidate>) -> Vec<Candidate> {
    loop {
        let mut dropped = None;
        for i in 0..events.len().saturating_sub(1) {
            let (a, b) = (events[i], events[i + 1]);
            if a.kind != b.kind {
                continue;
            }
            let drop_first = match a.kind {
                EventKind::HeelStrike => a.height < b.height,
                EventKind::ToeOff => a.height > b.height,
            };
            dropped = Some(if drop_first { i } else { i + 1 });
            break;
        }
        match dropped {
            Some(i) => {
                events.remove(i);
            }
            None => return events,
        }
    }
}

fn detect_side(
    heel: &[Point3<f64>],
    pelvis_center: &[Point3<f64>],
    axis: &Vector3<f64>,
    side: Side,
    sample_rate: f64,
) -> Vec<GaitEvent> {
    let signal: Vec<f64> = heel
        .iter()
        .zip(pelvis_center)
        .map(|(h, p)| (h - p).dot(axis))
        .collect();
    let min_separation = ((MIN_PEAK_SEPARATION_S * sample_rate).round() as usize).max(1);
    let mut candidates = extrema(&signal, false, min_separation);
    candidates.extend(extrema(&signal, true, min_separation));
    candidates.sort_by_key(|c| c.frame);
    alternate(candidates)
        .into_iter()
        .map(|c| GaitEvent {
            side,
            kind: c.kind,
            frame_index: c.frame,
            time: c.frame as f64 / sample_rate,
        })
        .collect()
}

/// Detect heel strikes and toe offs for both sides, merged in frame order.
/// `walking_axis` may be left out to estimate it from the pelvis path.
pub fn detect_events(
    heel_left: &[Point3<f64>],
    heel_right: &[Point3<f64>],
    pelvis_center: &[Point3<f64>],
    walking_axis: Option<Vector3<f64>>,
    sample_rate: f64,
) -> Result<Vec<GaitEvent>, EventError> {
    if !(sample_rate > 0.0) {
        return Err(EventError::Parameter(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let n = pelvis_center.len();
    if heel_left.len() != n || heel_right.len() != n {
        return Err(EventError::Parameter(format!(
            "trajectory lengths differ: left {}, right {}, pelvis {n}",
            heel_left.len(),
            heel_right.len()
        )));
    }
    let seconds = n as f64 / sample_rate;
    if seconds < 1.0 {
        return Err(EventError::Span(format!(
            "{n} frames at {sample_rate} Hz spans {seconds:.3} s, need at least 1 s"
        )));
    }
    let axis = match walking_axis {
        Some(v) => {
            let norm = v.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(EventError::Parameter(
                    "walking axis must be a nonzero finite vector".into(),
                ));
            }
            v / norm
        }
        None => estimate_walking_axis(pelvis_center)?,
    };

    let left = detect_side(heel_left, pelvis_center, &axis, Side::Left, sample_rate);
    let right = detect_side(heel_right, pelvis_center, &axis, Side::Right, sample_rate);
    if left.is_empty() || right.is_empty() {
        return Err(EventError::NoGait(format!(
            "found {} left and {} right events; walking requires both sides",
            left.len(),
            right.len()
        )));
    }
    let mut events = left;
    events.extend(right);
    events.sort_by_key(|e| (e.frame_index, e.side == Side::Left));
    Ok(events)
}

fn validate_events(events: &[GaitEvent]) -> Result<(), EventError> {
    for side in [Side::Left, Side::Right] {
        let mut previous: Option<&GaitEvent> = None;
        for event in events.iter().filter(|e| e.side == side) {
            if let Some(prev) = previous {
                if event.frame_index <= prev.frame_index {
                    return Err(EventError::Parameter(format!(
                        "{} events not strictly increasing at frame {}",
                        side.label(),
                        event.frame_index
                    )));
                }
                if event.kind == prev.kind {
                    return Err(EventError::Parameter(format!(
                        "consecutive same-kind {} events at frames {} and {}",
                        side.label(),
                        prev.frame_index,
                        event.frame_index
                    )));
                }
            }
            previous = Some(event);
        }
    }
    Ok(())
}

/// One cycle per consecutive same-side heel-strike pair containing exactly
/// one contralateral heel strike; partial or ambiguous cycles are discarded.
pub fn segment_cycles(
    events: &[GaitEvent],
    sample_rate: f64,
) -> Result<GaitCycleSet, EventError> {
    if !(sample_rate > 0.0) {
        return Err(EventError::Parameter(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    validate_events(events)?;
    let mut cycles = Vec::new();
    for side in [Side::Left, Side::Right] {
        let strikes: Vec<&GaitEvent> = events
            .iter()
            .filter(|e| e.side == side && e.kind == EventKind::HeelStrike)
            .collect();
        for pair in strikes.windows(2) {
            let (start, end) = (pair[0], pair[1]);
            let inside: Vec<&GaitEvent> = events
                .iter()
                .filter(|e| {
                    e.side == side.opposite()
                        && e.kind == EventKind::HeelStrike
                        && e.frame_index > start.frame_index
                        && e.frame_index < end.frame_index
                })
                .collect();
            if let [contralateral] = inside[..] {
                cycles.push(GaitCycle {
                    side,
                    start: *start,
                    end: *end,
                    contralateral: *contralateral,
                });
            }
        }
    }
    if cycles.is_empty() {
        return Err(EventError::NoCycles);
    }
    cycles.sort_by_key(|c| (c.start.frame_index, c.side == Side::Left));
    Ok(GaitCycleSet {
        cycles,
        sample_rate,
    })
}

/// Resample one cycle's waveform onto 101 evenly spaced points (0-100% of
/// the cycle) with piecewise cubic interpolation; endpoints are preserved.
pub fn time_normalize(waveform: &[f64]) -> Result<Vec<f64>, EventError> {
    let n = waveform.len();
    if n < 4 {
        return Err(EventError::Span(format!(
            "cycle has {n} samples, need at least 4 to resample"
        )));
    }
    let mut out = Vec::with_capacity(NORMALIZED_SAMPLES);
    for k in 0..NORMALIZED_SAMPLES {
        let t = k as f64 / (NORMALIZED_SAMPLES - 1) as f64 * (n - 1) as f64;
        let base = ((t.floor() as usize).saturating_sub(1)).min(n - 4);
        let mut value = 0.0;
        for j in 0..4 {
            let xj = (base + j) as f64;
            let mut weight = 1.0;
            for m in 0..4 {
                if m != j {
                    let xm = (base + m) as f64;
                    weight *= (t - xm) / (xj - xm);
                }
            }
            value += weight * waveform[base + j];
        }
        out.push(value);
    }
    Ok(out)
}

/// Per-frame mean of the listed markers; frames where any marker is gapped
/// become gaps.
pub fn marker_midpoint(
    set: &MarkerTrajectorySet,
    labels: &[&str],
) -> Result<Vec<Option<Point3<f64>>>, EventError> {
    if labels.is_empty() {
        return Err(EventError::Parameter("no labels given".into()));
    }
    let indices: Vec<usize> = labels
        .iter()
        .map(|label| {
            set.label_index(label)
                .ok_or_else(|| EventError::Parameter(format!("unknown marker label '{label}'")))
        })
        .collect::<Result<_, _>>()?;
    Ok(set
        .frames
        .iter()
        .map(|frame| {
            let mut sum = Vector3::zeros();
            for &i in &indices {
                match frame[i] {
                    Some(p) => sum += p.coords,
                    None => return None,
                }
            }
            Some(Point3::from(sum / indices.len() as f64))
        })
        .collect())
}

/// Gap-free trajectory for one label; the first gap is an error naming it.
pub fn dense_trajectory(
    set: &MarkerTrajectorySet,
    label: &str,
) -> Result<Vec<Point3<f64>>, EventError> {
    let index = set
        .label_index(label)
        .ok_or_else(|| EventError::Parameter(format!("unknown marker label '{label}'")))?;
    set.frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            frame[index].ok_or(EventError::Gap {
                label: label.to_string(),
                index: i,
            })
        })
        .collect()
}
