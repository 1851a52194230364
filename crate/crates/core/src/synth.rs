//! Synthetic gait scenes with exact ground truth: sinusoid-driven joint
//! trajectories through the default model's forward kinematics, analytic
//! event times and spatiotemporal parameters, and seeded multi-camera
//! keypoint rendering.
//!
//! Every joint waveform is a function of cos(2π·τ) (τ = cycles since the
//! first right heel strike), so each joint velocity carries a sin(2π·τ)
//! factor and the heel's forward position relative to the pelvis is
//! strictly monotone between τ = 0 and τ = 0.5: heel strikes fall exactly
//! at integer τ and toe offs exactly half a cycle later. The left leg runs
//! half a cycle behind.

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::events::{EventKind, GaitEvent, Side};
use crate::io::{KeypointDetection, KeypointFrame, SubjectInfo};
use crate::model::{default_model, PoseVector, SkeletonModel};
use crate::params::SpatiotemporalRecord;
use crate::MarkerTrajectorySet;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("recipe: {0}")]
    Recipe(String),
    #[error("render: {0}")]
    Render(String),
}

/// Stature the default model is sized for; recipes scale segments by
/// stature / this.
pub const REFERENCE_STATURE_M: f64 = 1.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitRecipe {
    pub stride_length: f64,
    pub stride_time: f64,
    pub n_strides: usize,
    pub sample_rate: f64,
    /// Hip flexion sinusoid amplitude, degrees.
    pub hip_amplitude: f64,
    /// Knee flexion amplitude (also the knee ROM), degrees.
    pub knee_amplitude: f64,
    /// Pelvis vertical oscillation amplitude, meters.
    pub pelvis_oscillation: f64,
    /// Fraction of a cycle before the first right heel strike; keeps all
    /// events away from the trajectory boundaries.
    pub phase_offset: f64,
    pub subject: SubjectInfo,
    pub seed: u64,
}

impl Default for GaitRecipe {
    fn default() -> Self {
        Self {
            stride_length: 1.30,
            stride_time: 1.0,
            n_strides: 5,
            sample_rate: 100.0,
            hip_amplitude: 25.0,
            knee_amplitude: 60.0,
            pelvis_oscillation: 0.03,
            phase_offset: 0.3,
            subject: SubjectInfo::new("synthetic", 70.0, REFERENCE_STATURE_M)
                .expect("valid default subject"),
            seed: 42,
        }
    }
}

impl GaitRecipe {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, value) in [
            ("stride_length", self.stride_length),
            ("stride_time", self.stride_time),
            ("sample_rate", self.sample_rate),
            ("hip_amplitude", self.hip_amplitude),
            ("knee_amplitude", self.knee_amplitude),
        ] {
            if !(value > 0.0) {
                return Err(SynthError::Recipe(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if self.pelvis_oscillation < 0.0 {
            return Err(SynthError::Recipe(format!(
                "pelvis_oscillation must be >= 0, got {}",
                self.pelvis_oscillation
            )));
        }
        if self.n_strides < 2 {
            return Err(SynthError::Recipe(format!(
                "n_strides must be >= 2 for at least one full cycle, got {}",
                self.n_strides
            )));
        }
        if !(self.phase_offset > 0.0 && self.phase_offset < 0.5) {
            return Err(SynthError::Recipe(format!(
                "phase_offset must lie in (0, 0.5), got {}",
                self.phase_offset
            )));
        }
        if self.hip_amplitude > 30.0 || self.knee_amplitude > 120.0 {
            return Err(SynthError::Recipe(
                "amplitudes exceed the model's joint ranges".into(),
            ));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        (self.n_strides as f64 * self.stride_time * self.sample_rate).round() as usize
    }

    /// Center of the walkway swept by the pelvis, used to aim cameras.
    pub fn walkway_center(&self) -> Point3<f64> {
        Point3::new(
            0.5 * self.n_strides as f64 * self.stride_length,
            1.0,
            0.0,
        )
    }

    fn scaled_model(&self) -> SkeletonModel {
        let mut model = default_model();
        let scale = self.subject.stature_m / REFERENCE_STATURE_M;
        for segment in model.segments.iter_mut() {
            segment.scale = scale;
        }
        model.subject = Some(self.subject.clone());
        model
    }

    /// Pose at time `t`; τ counts cycles since the first right heel strike.
    fn pose_at(&self, model: &SkeletonModel, t: f64) -> PoseVector {
        let tau = t / self.stride_time - self.phase_offset;
        let omega = 2.0 * std::f64::consts::PI;
        let speed = self.stride_length / self.stride_time;
        let c = (omega * tau).cos();
        let mut pose = PoseVector::zero(model);
        for (name, value) in [
            ("pelvis_tx", speed * t),
            ("pelvis_ty", self.pelvis_oscillation * (2.0 * omega * tau).cos()),
            ("hip_flexion_r", self.hip_amplitude * c),
            ("hip_flexion_l", -self.hip_amplitude * c),
            ("knee_angle_r", self.knee_amplitude * (1.0 - c) / 2.0),
            ("knee_angle_l", self.knee_amplitude * (1.0 + c) / 2.0),
        ] {
            pose.set(name, value).expect("default model coordinate");
        }
        pose
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGait {
    pub model: SkeletonModel,
    pub poses: Vec<PoseVector>,
    pub markers: MarkerTrajectorySet,
    pub events: Vec<GaitEvent>,
    pub records: Vec<SpatiotemporalRecord>,
    pub walking_axis: Vector3<f64>,
}

/// Generate a full synthetic walk with analytically known ground truth.
pub fn generate_gait(recipe: &GaitRecipe) -> Result<SyntheticGait, SynthError> {
    recipe.validate()?;
    let model = recipe.scaled_model();
    let n_frames = recipe.n_frames();
    let fs = recipe.sample_rate;

    let mut poses = Vec::with_capacity(n_frames);
    let mut markers = MarkerTrajectorySet::new(fs, model.marker_names());
    for i in 0..n_frames {
        let pose = recipe.pose_at(&model, i as f64 / fs);
        let frame = model
            .forward_kinematics(&pose)
            .map_err(|e| SynthError::Recipe(format!("forward kinematics failed: {e}")))?;
        markers.push_frame(frame.into_iter().map(Some).collect());
        poses.push(pose);
    }

    // heel strikes at τ = k, toe offs at τ = k + 0.5; left side half a
    // cycle behind
    let mut events = Vec::new();
    let mut push_event = |side: Side, kind: EventKind, cycles: f64| {
        let t = (recipe.phase_offset + cycles) * recipe.stride_time;
        let frame = (t * fs).round() as usize;
        if frame >= 1 && frame + 1 < n_frames {
            events.push(GaitEvent {
                side,
                kind,
                frame_index: frame,
                time: frame as f64 / fs,
            });
        }
    };
    for k in 0..recipe.n_strides {
        let k = k as f64;
        push_event(Side::Right, EventKind::HeelStrike, k);
        push_event(Side::Right, EventKind::ToeOff, k + 0.5);
        push_event(Side::Left, EventKind::HeelStrike, k + 0.5);
        push_event(Side::Left, EventKind::ToeOff, k);
    }
    events.sort_by_key(|e| (e.frame_index, e.side == Side::Left));

    let mut records = Vec::new();
    for side in [Side::Right, Side::Left] {
        let strikes: Vec<&GaitEvent> = events
            .iter()
            .filter(|e| e.side == side && e.kind == EventKind::HeelStrike)
            .collect();
        for pair in strikes.windows(2) {
            let has_contra = events.iter().any(|e| {
                e.side == side.opposite()
                    && e.kind == EventKind::HeelStrike
                    && e.frame_index > pair[0].frame_index
                    && e.frame_index < pair[1].frame_index
            });
            if has_contra {
                records.push(SpatiotemporalRecord {
                    side,
                    stride_time: recipe.stride_time,
                    stride_length: recipe.stride_length,
                    step_time: 0.5 * recipe.stride_time,
                    step_length: 0.5 * recipe.stride_length,
                });
            }
        }
    }

    Ok(SyntheticGait {
        model,
        poses,
        markers,
        events,
        records,
        walking_axis: Vector3::x(),
    })
}

/// Static (zero-pose) trial at the walkway center, for model scaling.
pub fn generate_static_trial(
    recipe: &GaitRecipe,
    n_frames: usize,
) -> Result<MarkerTrajectorySet, SynthError> {
    recipe.validate()?;
    if n_frames == 0 {
        return Err(SynthError::Recipe("static trial needs >= 1 frame".into()));
    }
    let model = recipe.scaled_model();
    let mut pose = PoseVector::zero(&model);
    pose.set("pelvis_tx", recipe.walkway_center().x)
        .expect("default model coordinate");
    let frame = model
        .forward_kinematics(&pose)
        .map_err(|e| SynthError::Recipe(format!("forward kinematics failed: {e}")))?;
    let mut set = MarkerTrajectorySet::new(recipe.sample_rate, model.marker_names());
    for _ in 0..n_frames {
        set.push_frame(frame.iter().copied().map(Some).collect());
    }
    Ok(set)
}

/// Landmark ids for the 12 default markers. Heel, knee, ankle, and toe ids
/// follow the BODY25 keypoint numbering (left heel 21, right heel 24);
/// pelvis markers use 4-7, which BODY25 does not define for the pelvis.
pub fn default_landmark_map() -> Vec<(u32, String)> {
    [
        (4, "LASIS"),
        (5, "RASIS"),
        (6, "LPSIS"),
        (7, "RPSIS"),
        (13, "LKNEE"),
        (10, "RKNEE"),
        (14, "LANK"),
        (11, "RANK"),
        (21, "LHEEL"),
        (24, "RHEEL"),
        (19, "LTOE"),
        (22, "RTOE"),
    ]
    .into_iter()
    .map(|(id, label)| (id, label.to_string()))
    .collect()
}

/// Rotation with rows [right, down, forward] looking from `position` toward
/// `target`; right-handed with det +1.
fn look_at_rotation(position: &Point3<f64>, target: &Point3<f64>) -> Matrix3<f64> {
    let forward = (target - position).normalize();
    let right = forward.cross(&Vector3::y()).normalize();
    let down = forward.cross(&right);
    Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

/// Height the rig aims at; framing the knees keeps both feet and the pelvis
/// inside the vertical field of view over the whole walkway.
const RIG_AIM_HEIGHT_M: f64 = 0.5;

/// Four-camera rig at the corners of a rectangle stretched along the walk
/// (4.5 m along, 2.2 m across, 1.2 m high), 3840x2160 at 2400 px focal
/// length with mild radial distortion. The corner layout keeps the whole
/// walkway inside every camera's field of view, so each marker is seen by
/// all four cameras.
pub fn default_camera_rig(walkway_center: Point3<f64>) -> Vec<CameraModel> {
    const CORNERS_M: [(f64, f64); 4] = [(4.5, 2.2), (-4.5, 2.2), (-4.5, -2.2), (4.5, -2.2)];
    const HEIGHT_M: f64 = 1.2;
    let aim = Point3::new(walkway_center.x, RIG_AIM_HEIGHT_M, walkway_center.z);
    CORNERS_M
        .iter()
        .enumerate()
        .map(|(i, (dx, dz))| {
            let position = Point3::new(walkway_center.x + dx, HEIGHT_M, walkway_center.z + dz);
            let rotation = look_at_rotation(&position, &aim);
            let translation = -(rotation * position.coords);
            CameraModel {
                id: format!("cam{i}"),
                intrinsics: Matrix3::new(2400.0, 0.0, 1920.0, 0.0, 2400.0, 1080.0, 0.0, 0.0, 1.0),
                distortion: (-0.04, 0.008),
                rotation,
                translation,
            }
        })
        .collect()
}

/// Normalized radius beyond which an observation counts as outside the
/// camera's usable field of view.
const MAX_NORMALIZED_RADIUS: f64 = 1.2;

/// Project every marker into every camera with seeded Gaussian pixel noise
/// and dropout. Markers behind a camera, outside its field of view, or
/// dropped out are reported with confidence 0; gapped markers are omitted.
/// All randomness flows from `seed`.
pub fn render_views(
    markers: &MarkerTrajectorySet,
    cameras: &[CameraModel],
    landmark_map: &[(u32, String)],
    pixel_noise_sd: f64,
    dropout_rate: f64,
    seed: u64,
) -> Result<Vec<Vec<KeypointFrame>>, SynthError> {
    if !(pixel_noise_sd >= 0.0) {
        return Err(SynthError::Render(format!(
            "pixel_noise_sd must be >= 0, got {pixel_noise_sd}"
        )));
    }
    if !(0.0..=1.0).contains(&dropout_rate) {
        return Err(SynthError::Render(format!(
            "dropout_rate must lie in [0, 1], got {dropout_rate}"
        )));
    }
    let columns: Vec<(u32, usize)> = landmark_map
        .iter()
        .map(|(id, label)| {
            markers
                .label_index(label)
                .map(|i| (*id, i))
                .ok_or_else(|| {
                    SynthError::Render(format!("landmark label '{label}' not in trajectory set"))
                })
        })
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, pixel_noise_sd)
        .map_err(|e| SynthError::Render(format!("noise distribution: {e}")))?;

    let mut streams: Vec<Vec<KeypointFrame>> = cameras
        .iter()
        .map(|_| Vec::with_capacity(markers.n_frames()))
        .collect();
    for (frame_index, frame) in markers.frames.iter().enumerate() {
        for (ci, camera) in cameras.iter().enumerate() {
            let mut points = Vec::with_capacity(columns.len());
            for &(landmark_id, mi) in &columns {
                let Some(point) = frame[mi] else { continue };
                let dropped = dropout_rate > 0.0 && rng.random::<f64>() < dropout_rate;
                let projected = visible_projection(camera, &point);
                let detection = match projected {
                    Some((mut u, mut v)) if !dropped => {
                        if pixel_noise_sd > 0.0 {
                            u += noise.sample(&mut rng);
                            v += noise.sample(&mut rng);
                        }
                        KeypointDetection {
                            landmark_id,
                            u,
                            v,
                            confidence: 1.0,
                        }
                    }
                    _ => KeypointDetection {
                        landmark_id,
                        u: 0.0,
                        v: 0.0,
                        confidence: 0.0,
                    },
                };
                points.push(detection);
            }
            streams[ci].push(KeypointFrame {
                camera_id: camera.id.clone(),
                frame_index,
                points,
            });
        }
    }
    Ok(streams)
}

/// Pixel coordinates if the point is in front of the camera, within the
/// usable normalized radius, and inside the image bounds implied by the
/// principal point.
fn visible_projection(camera: &CameraModel, point: &Point3<f64>) -> Option<(f64, f64)> {
    let cam = camera.rotation * point.coords + camera.translation;
    if cam.z <= 0.0 {
        return None;
    }
    let r = (cam.x / cam.z).hypot(cam.y / cam.z);
    if r > MAX_NORMALIZED_RADIUS {
        return None;
    }
    let (u, v) = camera.project(point).ok()?;
    let (width, height) = (
        2.0 * camera.intrinsics[(0, 2)],
        2.0 * camera.intrinsics[(1, 2)],
    );
    if !(0.0..=width).contains(&u) || !(0.0..=height).contains(&v) {
        return None;
    }
    Some((u, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::triangulate_sequence;
    use crate::events::{detect_events, marker_midpoint};
    use approx::assert_relative_eq;

    #[test]
    fn default_recipe_shape() {
        let recipe = GaitRecipe::default();
        let gait = generate_gait(&recipe).unwrap();
        assert_eq!(gait.markers.n_frames(), 500);
        assert_eq!(gait.poses.len(), 500);
        assert_eq!(gait.markers.labels.len(), 12);
        let right_strikes: Vec<usize> = gait
            .events
            .iter()
            .filter(|e| e.side == Side::Right && e.kind == EventKind::HeelStrike)
            .map(|e| e.frame_index)
            .collect();
        assert_eq!(right_strikes, vec![30, 130, 230, 330, 430]);
        assert_eq!(gait.records.len(), 8);
    }

    #[test]
    fn symmetric_recipe_mirrors_sides() {
        let gait = generate_gait(&GaitRecipe::default()).unwrap();
        let right: Vec<_> = gait
            .records
            .iter()
            .filter(|r| r.side == Side::Right)
            .collect();
        let left: Vec<_> = gait
            .records
            .iter()
            .filter(|r| r.side == Side::Left)
            .collect();
        assert_eq!(right.len(), 4);
        assert_eq!(left.len(), 4);
        for (r, l) in right.iter().zip(&left) {
            assert_eq!(r.stride_time, l.stride_time);
            assert_eq!(r.stride_length, l.stride_length);
            assert_eq!(r.step_time, l.step_time);
            assert_eq!(r.step_length, l.step_length);
        }
    }

    #[test]
    fn stride_length_consistent_with_heel_displacement() {
        let recipe = GaitRecipe::default();
        let gait = generate_gait(&recipe).unwrap();
        let heel = gait.markers.trajectory("RHEEL").unwrap();
        let strikes: Vec<usize> = gait
            .events
            .iter()
            .filter(|e| e.side == Side::Right && e.kind == EventKind::HeelStrike)
            .map(|e| e.frame_index)
            .collect();
        for pair in strikes.windows(2) {
            let displacement =
                (heel[pair[1]].unwrap() - heel[pair[0]].unwrap()).dot(&gait.walking_axis);
            assert!                (
                (displacement - recipe.stride_length).abs() < 1e-9,
                "displacement {displacement} vs {}",
                recipe.stride_length
            );
        }
    }

    #[test]
    fn detected_events_match_ground_truth_within_one_frame() {
        let gait = generate_gait(&GaitRecipe::default()).unwrap();
        let heel_l = crate::events::dense_trajectory(&gait.markers, "LHEEL").unwrap();
        let heel_r = crate::events::dense_trajectory(&gait.markers, "RHEEL").unwrap();
        let pelvis: Vec<Point3<f64>> =
            marker_midpoint(&gait.markers, &["LASIS", "RASIS", "LPSIS", "RPSIS"])
                .unwrap()
                .into_iter()
                .map(|p| p.unwrap())
                .collect();
        let detected = detect_events(
            &heel_l,
            &heel_r,
            &pelvis,
            Some(gait.walking_axis),
            gait.markers.sample_rate,
        )
        .unwrap();
        assert_eq!(detected.len(), gait.events.len());
        for (d, g) in detected.iter().zip(&gait.events) {
            assert_eq!(d.side, g.side, "at ground-truth frame {}", g.frame_index);
            assert_eq!(d.kind, g.kind, "at ground-truth frame {}", g.frame_index);
            assert!(
                d.frame_index.abs_diff(g.frame_index) <= 1,
                "detected {} vs truth {}",
                d.frame_index,
                g.frame_index
            );
        }
    }

    #[test]
    fn poses_stay_inside_joint_ranges() {
        let gait = generate_gait(&GaitRecipe::default()).unwrap();
        for pose in &gait.poses {
            let mut clamped = pose.clone();
            gait.model.clamp_pose(&mut clamped);
            assert_eq!(clamped.values, pose.values);
        }
    }

    #[test]
    fn invalid_recipes_rejected() {
        let mut recipe = GaitRecipe::default();
        recipe.stride_time = 0.0;
        assert!(matches!(
            generate_gait(&recipe),
            Err(SynthError::Recipe(_))
        ));
        let mut recipe = GaitRecipe::default();
        recipe.n_strides = 1;
        assert!(generate_gait(&recipe).is_err());
        let mut recipe = GaitRecipe::default();
        recipe.phase_offset = 0.0;
        assert!(generate_gait(&recipe).is_err());
    }

    #[test]
    fn static_trial_stands_at_walkway_center() {
        let recipe = GaitRecipe::default();
        let trial = generate_static_trial(&recipe, 10).unwrap();
        assert_eq!(trial.n_frames(), 10);
        let mid = marker_midpoint(&trial, &["LASIS", "RASIS", "LPSIS", "RPSIS"]).unwrap();
        let center = recipe.walkway_center();
        for p in mid {
            let p = p.unwrap();
            assert_relative_eq!(p.x, center.x + 0.005, epsilon = 1e-12);
        }
    }

    #[test]
    fn rig_cameras_are_valid_and_face_the_walkway() {
        let recipe = GaitRecipe::default();
        let rig = default_camera_rig(recipe.walkway_center());
        assert_eq!(rig.len(), 4);
        let center = recipe.walkway_center();
        let aim = Point3::new(center.x, 0.5, center.z);
        for camera in &rig {
            camera.validate().unwrap();
            let (u, v) = camera.project(&aim).unwrap();
            assert_relative_eq!(u, 1920.0, epsilon = 1e-6);
            assert_relative_eq!(v, 1080.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn render_is_deterministic_per_seed() {
        let gait = generate_gait(&GaitRecipe::default()).unwrap();
        let rig = default_camera_rig(GaitRecipe::default().walkway_center());
        let map = default_landmark_map();
        let a = render_views(&gait.markers, &rig, &map, 2.0, 0.05, 7).unwrap();
        let b = render_views(&gait.markers, &rig, &map, 2.0, 0.05, 7).unwrap();
        assert_eq!(a, b);
        let c = render_views(&gait.markers, &rig, &map, 2.0, 0.05, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_dropout_zeroes_all_confidences() {
        let gait = generate_gait(&GaitRecipe::default()).unwrap();
        let rig = default_camera_rig(GaitRecipe::default().walkway_center());
        let streams =
            render_views(&gait.markers, &rig, &default_landmark_map(), 0.0, 1.0, 3).unwrap();
        for stream in &streams {
            for frame in stream {
                for point in &frame.points {
                    assert_eq!(point.confidence, 0.0);
                }
            }
        }
    }

    #[test]
    fn behind_camera_observation_gets_zero_confidence() {
        let camera = CameraModel {
            id: "front".into(),
            intrinsics: Matrix3::new(1200.0, 0.0, 960.0, 0.0, 1200.0, 540.0, 0.0, 0.0, 1.0),
            distortion: (0.0, 0.0),
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        };
        let mut set = MarkerTrajectorySet::new(100.0, vec!["M".into()]);
        set.push_frame(vec![Some(Point3::new(0.0, 0.0, -1.0))]);
        let streams =
            render_views(&set, &[camera], &[(0, "M".to_string())], 0.0, 0.0, 1).unwrap();
        assert_eq!(streams[0][0].points.len(), 1);
        assert_eq!(streams[0][0].points[0].confidence, 0.0);
    }

    #[test]
    fn noiseless_render_triangulates_back() {
        let mut recipe = GaitRecipe::default();
        recipe.n_strides = 2;
        let gait = generate_gait(&recipe).unwrap();
        let rig = default_camera_rig(recipe.walkway_center());
        let map = default_landmark_map();
        let streams = render_views(&gait.markers, &rig, &map, 0.0, 0.0, 1).unwrap();
        let rebuilt =
            triangulate_sequence(&streams, &rig, &map, 0.5, recipe.sample_rate).unwrap();
        assert_eq!(rebuilt.n_frames(), gait.markers.n_frames());
        let mut worst: f64 = 0.0;
        for (rebuilt_frame, truth_frame) in rebuilt.frames.iter().zip(&gait.markers.frames) {
            for (r, t) in rebuilt_frame.iter().zip(truth_frame) {
                let (r, t) = (r.expect("triangulated"), t.unwrap());
                worst = worst.max((r - t).norm());
            }
        }
        assert!(worst < 1e-6, "worst reconstruction error {worst}");
    }
}
