//! Inverse kinematics: per-frame weighted least-squares alignment of the
//! model's virtual markers to observed experimental markers, solved by
//! Levenberg-Marquardt with an analytic Jacobian and joint-range projection.

use nalgebra::{DMatrix, DVector, Point3};
use thiserror::Error;

use crate::model::{MarkerCorrespondence, ModelError, PoseVector, SkeletonModel};
use crate::MarkerTrajectorySet;

#[derive(Debug, Error)]
pub enum IkError {
    #[error("underconstrained frame: {found} observed markers with positive weight, need at least {MIN_OBSERVED_MARKERS}")]
    Unconstrained { found: usize },
    #[error("non-finite cost at iteration {iteration}")]
    Numerical { iteration: usize },
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Minimum observed positive-weight markers for a solvable frame (6-DOF
/// pelvis plus joint observability).
pub const MIN_OBSERVED_MARKERS: usize = 4;

#[derive(Debug, Clone)]
pub struct IkSettings {
    pub max_iterations: usize,
    /// Converged when cost (m², weighted) drops to or below this.
    pub cost_tolerance: f64,
    /// Converged when an accepted step's norm (mixed deg/m) drops to or
    /// below this.
    pub step_tolerance: f64,
    pub damping_init: f64,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            cost_tolerance: 1e-14,
            step_tolerance: 1e-8,
            damping_init: 1e-3,
        }
    }
}

impl IkSettings {
    fn validate(&self) -> Result<(), IkError> {
        if self.max_iterations < 1 {
            return Err(IkError::Settings("max_iterations must be >= 1".into()));
        }
        for (name, value) in [
            ("cost_tolerance", self.cost_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("damping_init", self.damping_init),
        ] {
            if !(value > 0.0) {
                return Err(IkError::Settings(format!("{name} must be > 0, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IkFrameResult {
    pub pose: PoseVector,
    /// sqrt(mean squared residual norm) over the positive-weight markers
    /// observed this frame, unweighted.
    pub rms_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm per correspondence pair; None when the pair was
    /// excluded this frame (zero weight or gapped observation).
    pub per_marker_residuals: Vec<Option<f64>>,
}

/// One correspondence pair active in a frame.
struct ActivePair {
    pair_index: usize,
    marker_index: usize,
    observed: Point3<f64>,
    weight: f64,
}

fn active_pairs(
    model: &SkeletonModel,
    observed: &[(String, Point3<f64>)],
    correspondence: &MarkerCorrespondence,
) -> Result<Vec<ActivePair>, IkError> {
    let mut active = Vec::new();
    for (pair_index, pair) in correspondence.pairs.iter().enumerate() {
        if pair.weight <= 0.0 {
            continue;
        }
        let marker_index = model
            .marker_index(&pair.virtual_marker)
            .ok_or_else(|| ModelError::Correspondence(format!(
                "virtual marker '{}' not in model",
                pair.virtual_marker
            )))?;
        if let Some((_, point)) = observed
            .iter()
            .find(|(label, _)| *label == pair.experimental_label)
        {
            active.push(ActivePair {
                pair_index,
                marker_index,
                observed: *point,
                weight: pair.weight,
            });
        }
    }
    Ok(active)
}

/// Weighted marker alignment cost: Σᵢ wᵢ·‖mᵢ_observed − mᵢ_virtual(pose)‖².
/// Pairs whose observation is absent are excluded for the frame.
pub fn ik_cost(
    model: &SkeletonModel,
    pose: &PoseVector,
    observed: &[(String, Point3<f64>)],
    correspondence: &MarkerCorrespondence,
) -> Result<f64, IkError> {
    let active = active_pairs(model, observed, correspondence)?;
    if active.is_empty() {
        return Err(IkError::Unconstrained { found: 0 });
    }
    let virtual_markers = model.forward_kinematics(pose)?;
    Ok(active
        .iter()
        .map(|a| a.weight * (a.observed - virtual_markers[a.marker_index]).norm_squared())
        .sum())
}

/// Analytic Jacobian of every virtual marker position with respect to every
/// coordinate. Rows are marker-major (3 per marker, model order); columns
/// follow the model's coordinate order. Units: meters per degree for
/// rotations, meters per meter for translations.
pub fn marker_jacobian(
    model: &SkeletonModel,
    pose: &PoseVector,
) -> Result<DMatrix<f64>, ModelError> {
    let fk = model.fk_full(pose)?;
    let mask = model.marker_coordinate_mask();
    let n_markers = model.markers.len();
    let n_coords = model.coordinate_count();
    let mut jac = DMatrix::zeros(3 * n_markers, n_coords);
    let deg = std::f64::consts::PI / 180.0;
    for (mi, point) in fk.markers.iter().enumerate() {
        for (ci, coord) in fk.coordinates.iter().enumerate() {
            if !mask[mi][ci] {
                continue;
            }
            let column = if coord.is_rotation {
                coord.axis.cross(&(point - coord.origin)) * deg
            } else {
                coord.axis
            };
            jac[(3 * mi, ci)] = column.x;
            jac[(3 * mi + 1, ci)] = column.y;
            jac[(3 * mi + 2, ci)] = column.z;
        }
    }
    Ok(jac)
}

/// Residual vector (sqrt-weight scaled) and cost for the active pairs.
fn residuals(
    model: &SkeletonModel,
    pose: &PoseVector,
    active: &[ActivePair],
) -> Result<(DVector<f64>, f64), ModelError> {
    let markers = model.forward_kinematics(pose)?;
    let mut r = DVector::zeros(3 * active.len());
    for (i, a) in active.iter().enumerate() {
        let diff = (a.observed - markers[a.marker_index]) * a.weight.sqrt();
        r[3 * i] = diff.x;
        r[3 * i + 1] = diff.y;
        r[3 * i + 2] = diff.z;
    }
    let cost = r.norm_squared();
    Ok((r, cost))
}

/// Solve one frame by Levenberg-Marquardt on [`ik_cost`]: damping scales
/// diag(JᵀJ), ×10 on a rejected step, ×0.5 on an accepted one; every
/// candidate is clamped into the joint ranges before evaluation.
pub fn solve_frame(
    model: &SkeletonModel,
    observed: &[(String, Point3<f64>)],
    correspondence: &MarkerCorrespondence,
    settings: &IkSettings,
    initial_pose: &PoseVector,
) -> Result<IkFrameResult, IkError> {
    settings.validate()?;
    let active = active_pairs(model, observed, correspondence)?;
    if active.len() < MIN_OBSERVED_MARKERS {
        return Err(IkError::Unconstrained {
            found: active.len(),
        });
    }

    let mut pose = initial_pose.clone();
    model.clamp_pose(&mut pose);
    let (mut r, mut cost) = residuals(model, &pose, &active)?;
    if !cost.is_finite() {
        return Err(IkError::Numerical { iteration: 0 });
    }

    let mut lambda = settings.damping_init;
    let mut iterations = 0;
    let mut converged = cost <= settings.cost_tolerance;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let full_jac = marker_jacobian(model, &pose)?;
        let mut jac = DMatrix::zeros(3 * active.len(), model.coordinate_count());
        for (i, a) in active.iter().enumerate() {
            let w = a.weight.sqrt();
            for row in 0..3 {
                for col in 0..jac.ncols() {
                    jac[(3 * i + row, col)] = w * full_jac[(3 * a.marker_index + row, col)];
                }
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;

        let mut normal = jtj.clone();
        for i in 0..normal.nrows() {
            normal[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let delta = match normal.clone().cholesky() {
            Some(chol) => chol.solve(&g),
            None => match normal.lu().solve(&g) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        break;
                    }
                    continue;
                }
            },
        };

        let mut candidate = pose.clone();
        for (v, d) in candidate.values.iter_mut().zip(delta.iter()) {
            *v += d;
        }
        model.clamp_pose(&mut candidate);
        let step_norm = candidate
            .values
            .iter()
            .zip(&pose.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

        let (new_r, new_cost) = residuals(model, &candidate, &active)?;
        if !new_cost.is_finite() {
            return Err(IkError::Numerical { iteration: iterations });
        }
        if new_cost < cost {
            pose = candidate;
            r = new_r;
            cost = new_cost;
            lambda = (lambda * 0.5).max(1e-15);
            if cost <= settings.cost_tolerance || step_norm <= settings.step_tolerance {
                converged = true;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let markers = model.forward_kinematics(&pose)?;
    let mut per_marker_residuals = vec![None; correspondence.pairs.len()];
    let mut sum_sq = 0.0;
    for a in &active {
        let norm = (a.observed - markers[a.marker_index]).norm();
        per_marker_residuals[a.pair_index] = Some(norm);
        sum_sq += norm * norm;
    }
    let rms_error = (sum_sq / active.len() as f64).sqrt();

    Ok(IkFrameResult {
        pose,
        rms_error,
        iterations,
        converged,
        per_marker_residuals,
    })
}

/// Solve every frame of a trajectory set, warm-starting each frame from the
/// most recent solved pose (neutral for frame 0). Frames that fail the
/// observability gate yield `None`; per-frame failures are never thrown.
pub fn solve_trajectory(
    model: &SkeletonModel,
    trajectories: &MarkerTrajectorySet,
    correspondence: &MarkerCorrespondence,
    settings: &IkSettings,
) -> Result<Vec<Option<IkFrameResult>>, IkError> {
    settings.validate()?;
    correspondence
        .validate(model, trajectories)
        .map_err(IkError::Model)?;
    let mut results = Vec::with_capacity(trajectories.n_frames());
    let mut warm = PoseVector::zero(model);
    for frame in &trajectories.frames {
        let observed: Vec<(String, Point3<f64>)> = trajectories
            .labels
            .iter()
            .zip(frame)
            .filter_map(|(label, slot)| slot.map(|p| (label.clone(), p)))
            .collect();
        match solve_frame(model, &observed, correspondence, settings, &warm) {
            Ok(result) => {
                warm = result.pose.clone();
                results.push(Some(result));
            }
            Err(IkError::Unconstrained { .. }) => results.push(None),
            Err(other) => return Err(other),
        }
    }
    Ok(results)
}
