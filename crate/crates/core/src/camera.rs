//! Pinhole camera model with two-coefficient radial distortion and
//! confidence-weighted multi-view triangulation.
//!
//! Conventions: `x_cam = R * x_world + t`, positive depth along +z in the
//! camera frame, pixel coordinates through the intrinsic matrix after
//! distortion of the normalized image coordinates.

use nalgebra::{DMatrix, Matrix2, Matrix2x3, Matrix3, Point3, Vector2, Vector3};
use thiserror::Error;

use crate::io::KeypointFrame;
use crate::MarkerTrajectorySet;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("camera '{camera}': point has non-positive depth {depth}")]
    BehindCamera { camera: String, depth: f64 },
    #[error("undistortion did not converge after {iterations} iterations (residual {residual} px)")]
    UndistortDiverged { iterations: usize, residual: f64 },
    #[error("{found} views pass the confidence gate {min_confidence}, need at least 2")]
    InsufficientViews { found: usize, min_confidence: f64 },
    #[error("degenerate view geometry (singular value ratio {ratio:.3e})")]
    Degenerate { ratio: f64 },
    #[error("camera streams are not aligned: {0}")]
    Alignment(String),
}

/// Calibrated pinhole camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub id: String,
    /// Intrinsic matrix: focal lengths, skew, and principal point in pixels.
    pub intrinsics: Matrix3<f64>,
    /// Radial distortion coefficients (k1, k2).
    pub distortion: (f64, f64),
    pub rotation: Matrix3<f64>,
    /// Translation in meters.
    pub translation: Vector3<f64>,
}

/// One camera's sighting of a landmark.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub camera: &'a CameraModel,
    pub point: (f64, f64),
    pub confidence: f64,
}

/// Triangulated point with its fit quality.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub point: Point3<f64>,
    /// Unweighted RMS pixel reprojection error over the used views.
    pub reprojection_rms: f64,
    pub views_used: usize,
}

const UNDISTORT_ITERATIONS: usize = 20;
const UNDISTORT_TOLERANCE_PX: f64 = 1e-3;
const DEGENERACY_RATIO: f64 = 1e-10;

impl CameraModel {
    /// Check the model invariants, returning a description of the first
    /// violation found.
    pub fn validate(&self) -> Result<(), String> {
        let deviation = (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max();
        if !(deviation < 1e-6) {
            return Err(format!(
                "rotation is not orthonormal (max deviation {deviation:.3e})"
            ));
        }
        let det = self.rotation.determinant();
        if !((det - 1.0).abs() < 1e-6) {
            return Err(format!("rotation determinant is {det}, expected +1"));
        }
        if !(self.intrinsics[(0, 0)] > 0.0 && self.intrinsics[(1, 1)] > 0.0) {
            return Err("focal lengths must be positive".to_string());
        }
        Ok(())
    }

    fn distort(&self, n: Vector2<f64>) -> Vector2<f64> {
        let (k1, k2) = self.distortion;
        let r2 = n.norm_squared();
        n * (1.0 + k1 * r2 + k2 * r2 * r2)
    }

    fn pixel_from_normalized(&self, n: Vector2<f64>) -> (f64, f64) {
        let h = self.intrinsics * Vector3::new(n.x, n.y, 1.0);
        (h.x / h.z, h.y / h.z)
    }

    fn normalized_from_pixel(&self, (u, v): (f64, f64)) -> Vector2<f64> {
        let inv = self
            .intrinsics
            .try_inverse()
            .expect("intrinsics with positive focal lengths are invertible");
        let h = inv * Vector3::new(u, v, 1.0);
        Vector2::new(h.x / h.z, h.y / h.z)
    }

    /// Project a world point to distorted pixel coordinates.
    pub fn project(&self, point: &Point3<f64>) -> Result<(f64, f64), CameraError> {
        let pc = self.rotation * point.coords + self.translation;
        if pc.z <= 0.0 {
            return Err(CameraError::BehindCamera {
                camera: self.id.clone(),
                depth: pc.z,
            });
        }
        let n = Vector2::new(pc.x / pc.z, pc.y / pc.z);
        Ok(self.pixel_from_normalized(self.distort(n)))
    }

    /// Invert the radial distortion by fixed-point iteration, returning the
    /// undistorted pixel coordinates.
    pub fn undistort(&self, pixel: (f64, f64)) -> Result<(f64, f64), CameraError> {
        let n = self.normalized_undistorted(pixel)?;
        Ok(self.pixel_from_normalized(n))
    }

    /// Undistorted normalized image coordinates for a distorted pixel.
    fn normalized_undistorted(&self, pixel: (f64, f64)) -> Result<Vector2<f64>, CameraError> {
        let (k1, k2) = self.distortion;
        let distorted = self.normalized_from_pixel(pixel);
        let mut n = distorted;
        for _ in 0..UNDISTORT_ITERATIONS {
            let r2 = n.norm_squared();
            let d = 1.0 + k1 * r2 + k2 * r2 * r2;
            if !(d > 0.0) || !d.is_finite() {
                return Err(CameraError::UndistortDiverged {
                    iterations: UNDISTORT_ITERATIONS,
                    residual: f64::INFINITY,
                });
            }
            n = distorted / d;
        }
        let forward = self.pixel_from_normalized(self.distort(n));
        let residual = ((forward.0 - pixel.0).powi(2) + (forward.1 - pixel.1).powi(2)).sqrt();
        if residual > UNDISTORT_TOLERANCE_PX {
            return Err(CameraError::UndistortDiverged {
                iterations: UNDISTORT_ITERATIONS,
                residual,
            });
        }
        Ok(n)
    }

    /// Jacobian of the projected pixel with respect to the world point.
    fn projection_jacobian(&self, point: &Point3<f64>) -> Option<Matrix2x3<f64>> {
        let pc = self.rotation * point.coords + self.translation;
        if pc.z <= 0.0 {
            return None;
        }
        let (x, y, z) = (pc.x, pc.y, pc.z);
        let d_norm = Matrix2x3::new(1.0 / z, 0.0, -x / (z * z), 0.0, 1.0 / z, -y / (z * z));
        let n = Vector2::new(x / z, y / z);
        let (k1, k2) = self.distortion;
        let r2 = n.norm_squared();
        let d = 1.0 + k1 * r2 + k2 * r2 * r2;
        let dd_dr2 = k1 + 2.0 * k2 * r2;
        let d_dist = Matrix2::identity() * d + n * n.transpose() * (2.0 * dd_dr2);
        let k = &self.intrinsics;
        let d_pix = Matrix2::new(k[(0, 0)], k[(0, 1)], k[(1, 0)], k[(1, 1)]);
        Some(d_pix * d_dist * d_norm)
    }
}

/// Confidence-weighted linear triangulation with one guarded Gauss-Newton
/// refinement of the pixel reprojection error.
pub fn triangulate(
    observations: &[Observation<'_>],
    min_confidence: f64,
) -> Result<Triangulation, CameraError> {
    let used: Vec<&Observation<'_>> = observations
        .iter()
        .filter(|o| o.confidence >= min_confidence && o.confidence > 0.0)
        .collect();
    if used.len() < 2 {
        return Err(CameraError::InsufficientViews {
            found: used.len(),
            min_confidence,
        });
    }

    let mut a = DMatrix::zeros(2 * used.len(), 4);
    for (i, obs) in used.iter().enumerate() {
        let n = obs.camera.normalized_undistorted(obs.point)?;
        let r = &obs.camera.rotation;
        let t = &obs.camera.translation;
        let w = obs.confidence;
        for col in 0..3 {
            a[(2 * i, col)] = w * (n.x * r[(2, col)] - r[(0, col)]);
            a[(2 * i + 1, col)] = w * (n.y * r[(2, col)] - r[(1, col)]);
        }
        a[(2 * i, 3)] = w * (n.x * t.z - t.x);
        a[(2 * i + 1, 3)] = w * (n.y * t.z - t.y);
    }

    let svd = a.svd(false, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[order.len() - 2]];
    let ratio = if largest > 0.0 {
        second_smallest / largest
    } else {
        0.0
    };
    if ratio < DEGENERACY_RATIO {
        return Err(CameraError::Degenerate { ratio });
    }
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let h = v_t.row(order[order.len() - 1]);
    if h[3].abs() < 1e-15 {
        return Err(CameraError::Degenerate { ratio });
    }
    let mut point = Point3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);

    if let Some(refined) = gauss_newton_step(&used, &point) {
        if weighted_cost(&used, &refined) < weighted_cost(&used, &point) {
            point = refined;
        }
    }

    let mut sum_sq = 0.0;
    for obs in &used {
        let (u, v) = obs.camera.project(&point)?;
        sum_sq += (u - obs.point.0).powi(2) + (v - obs.point.1).powi(2);
    }
    Ok(Triangulation {
        point,
        reprojection_rms: (sum_sq / used.len() as f64).sqrt(),
        views_used: used.len(),
    })
}

fn weighted_cost(used: &[&Observation<'_>], point: &Point3<f64>) -> f64 {
    let mut cost = 0.0;
    for obs in used {
        match obs.camera.project(point) {
            Ok((u, v)) => {
                cost += obs.confidence * ((u - obs.point.0).powi(2) + (v - obs.point.1).powi(2));
            }
            Err(_) => return f64::INFINITY,
        }
    }
    cost
}

fn gauss_newton_step(used: &[&Observation<'_>], point: &Point3<f64>) -> Option<Point3<f64>> {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for obs in used {
        let jac = obs.camera.projection_jacobian(point)?;
        let (u, v) = obs.camera.project(point).ok()?;
        let r = Vector2::new(u - obs.point.0, v - obs.point.1);
        jtj += obs.confidence * jac.transpose() * jac;
        jtr += obs.confidence * jac.transpose() * r;
    }
    let delta = jtj.lu().solve(&(-jtr))?;
    Some(point + delta)
}

/// Triangulate every mapped landmark across time-aligned per-camera streams.
///
/// `landmarks` maps a landmark id to the output marker label, in output
/// order. Frames where fewer than two views pass the confidence gate, or
/// where triangulation fails, become gaps.
pub fn triangulate_sequence(
    streams: &[Vec<KeypointFrame>],
    cameras: &[CameraModel],
    landmarks: &[(u32, String)],
    min_confidence: f64,
    sample_rate: f64,
) -> Result<MarkerTrajectorySet, CameraError> {
    if streams.len() != cameras.len() {
        return Err(CameraError::Alignment(format!(
            "{} streams for {} cameras",
            streams.len(),
            cameras.len()
        )));
    }
    let n_frames = streams.first().map_or(0, Vec::len);
    if streams.iter().any(|s| s.len() != n_frames) {
        let lengths: Vec<String> = streams
            .iter()
            .zip(cameras)
            .map(|(s, c)| format!("{}={}", c.id, s.len()))
            .collect();
        return Err(CameraError::Alignment(format!(
            "stream lengths differ: {}",
            lengths.join(", ")
        )));
    }

    let labels: Vec<String> = landmarks.iter().map(|(_, label)| label.clone()).collect();
    let mut set = MarkerTrajectorySet::new(sample_rate, labels);
    for f in 0..n_frames {
        let index = streams[0][f].frame_index;
        for (stream, camera) in streams.iter().zip(cameras) {
            if stream[f].frame_index != index {
                return Err(CameraError::Alignment(format!(
                    "camera '{}' has frame_index {} at position {f}, expected {index}",
                    camera.id, stream[f].frame_index
                )));
            }
        }
        let mut frame = Vec::with_capacity(landmarks.len());
        for (landmark_id, _) in landmarks {
            let observations: Vec<Observation<'_>> = streams
                .iter()
                .zip(cameras)
                .filter_map(|(stream, camera)| {
                    stream[f].detection(*landmark_id).map(|det| Observation {
                        camera,
                        point: (det.u, det.v),
                        confidence: det.confidence,
                    })
                })
                .collect();
            frame.push(match triangulate(&observations, min_confidence) {
                Ok(result) => Some(result.point),
                Err(_) => None,
            });
        }
        set.push_frame(frame);
    }
    Ok(set)
}
