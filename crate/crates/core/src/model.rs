//! Simplified lower-limb skeletal model: pelvis root plus thigh, shank, and
//! foot per leg, virtual anatomical markers, isotropic per-segment scaling,
//! and forward kinematics with per-coordinate world frames recorded for
//! analytic Jacobians.
//!
//! Conventions: world X is the walking direction, Y is up, Z is right.
//! Rotations follow a body-fixed Z-X-Y order (tilt/flexion about Z,
//! obliquity/adduction about X, axial rotation about Y); flexion and
//! dorsiflexion are positive. Translations are meters, angles degrees.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::SubjectInfo;
use crate::MarkerTrajectorySet;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("pose error: {0}")]
    Pose(String),
    #[error("scaling segment '{segment}': {message}")]
    Scaling { segment: String, message: String },
    #[error("invalid model: {0}")]
    Structure(String),
    #[error("model serialization: {0}")]
    Serialization(String),
    #[error("marker correspondence: {0}")]
    Correspondence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinateKind {
    Translation(Axis),
    Rotation(Axis),
}

/// One generalized coordinate of a joint. `sign` lets mirrored joints share
/// clinical sign conventions (e.g. adduction positive toward the midline on
/// both legs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub name: String,
    pub kind: CoordinateKind,
    pub sign: f64,
    /// Inclusive range in degrees (rotations) or meters (translations).
    pub range: (f64, f64),
}

/// Joint connecting `parent` (None = ground) to `child`. Coordinates apply
/// in order after the fixed offset, which is expressed in the parent frame
/// and scaled by the parent's segment scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<String>,
    pub child: String,
    pub offset: [f64; 3],
    pub coordinates: Vec<Coordinate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub scale: f64,
}

/// Marker rigidly attached to a segment; offset in the segment frame at
/// scale 1, scaled by the segment's scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualMarker {
    pub name: String,
    pub segment: String,
    pub offset: [f64; 3],
}

/// Marker pair whose measured distance scales `segment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePair {
    pub segment: String,
    pub marker_a: String,
    pub marker_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonModel {
    pub segments: Vec<Segment>,
    pub joints: Vec<Joint>,
    pub markers: Vec<VirtualMarker>,
    pub scale_pairs: Vec<ScalePair>,
    pub subject: Option<SubjectInfo>,
}

/// Named generalized coordinates, ordered as in the owning model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl PoseVector {
    pub fn zero(model: &SkeletonModel) -> Self {
        Self {
            names: model.coordinate_names(),
            values: vec![0.0; model.coordinate_count()],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        match self.names.iter().position(|n| n == name) {
            Some(i) => {
                self.values[i] = value;
                Ok(())
            }
            None => Err(ModelError::Pose(format!("unknown coordinate '{name}'"))),
        }
    }
}

/// Virtual-to-experimental marker pairing with least-squares weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondencePair {
    pub virtual_marker: String,
    pub experimental_label: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerCorrespondence {
    pub pairs: Vec<CorrespondencePair>,
}

impl MarkerCorrespondence {
    /// Pair every model marker with an identically named experimental label
    /// at weight 1.
    pub fn identity(model: &SkeletonModel) -> Self {
        Self {
            pairs: model
                .markers
                .iter()
                .map(|m| CorrespondencePair {
                    virtual_marker: m.name.clone(),
                    experimental_label: m.name.clone(),
                    weight: 1.0,
                })
                .collect(),
        }
    }

    pub fn validate(
        &self,
        model: &SkeletonModel,
        set: &MarkerTrajectorySet,
    ) -> Result<(), ModelError> {
        for pair in &self.pairs {
            if model.marker_index(&pair.virtual_marker).is_none() {
                return Err(ModelError::Correspondence(format!(
                    "virtual marker '{}' not in model",
                    pair.virtual_marker
                )));
            }
            if set.label_index(&pair.experimental_label).is_none() {
                return Err(ModelError::Correspondence(format!(
                    "experimental label '{}' not in trajectory set",
                    pair.experimental_label
                )));
            }
            if pair.weight < 0.0 {
                return Err(ModelError::Correspondence(format!(
                    "negative weight for '{}'",
                    pair.virtual_marker
                )));
            }
        }
        if !self.pairs.iter().any(|p| p.weight > 0.0) {
            return Err(ModelError::Correspondence(
                "all weights are zero".to_string(),
            ));
        }
        Ok(())
    }
}

/// World frame of one coordinate at its application point, recorded during
/// forward kinematics for the analytic Jacobian.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CoordinateWorld {
    pub is_rotation: bool,
    /// World-space axis including the coordinate sign.
    pub axis: Vector3<f64>,
    /// Rotation origin (the joint center); unused for translations.
    pub origin: Point3<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct FkData {
    pub markers: Vec<Point3<f64>>,
    pub coordinates: Vec<CoordinateWorld>,
}

#[derive(Clone, Copy)]
struct WorldFrame {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

impl SkeletonModel {
    pub fn coordinate_names(&self) -> Vec<String> {
        self.joints
            .iter()
            .flat_map(|j| j.coordinates.iter().map(|c| c.name.clone()))
            .collect()
    }

    pub fn coordinate_count(&self) -> usize {
        self.joints.iter().map(|j| j.coordinates.len()).sum()
    }

    pub fn coordinate_range(&self, name: &str) -> Option<(f64, f64)> {
        self.joints
            .iter()
            .flat_map(|j| j.coordinates.iter())
            .find(|c| c.name == name)
            .map(|c| c.range)
    }

    pub fn marker_names(&self) -> Vec<String> {
        self.markers.iter().map(|m| m.name.clone()).collect()
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.name == name)
    }

    pub fn segment_index(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    /// Structural invariants: joints reference existing segments, the
    /// segment graph is a tree rooted at the single ground joint's child,
    /// markers attach to existing segments, coordinate names are unique,
    /// and ranges are non-empty.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut child_counts: HashMap<&str, usize> = HashMap::new();
        let mut ground_joints = 0;
        for joint in &self.joints {
            if self.segment_index(&joint.child).is_none() {
                return Err(ModelError::Structure(format!(
                    "joint '{}' references unknown child segment '{}'",
                    joint.name, joint.child
                )));
            }
            match &joint.parent {
                Some(parent) => {
                    if self.segment_index(parent).is_none() {
                        return Err(ModelError::Structure(format!(
                            "joint '{}' references unknown parent segment '{parent}'",
                            joint.name
                        )));
                    }
                }
                None => ground_joints += 1,
            }
            *child_counts.entry(joint.child.as_str()).or_insert(0) += 1;
            for coord in &joint.coordinates {
                if !(coord.range.0 < coord.range.1) {
                    return Err(ModelError::Structure(format!(
                        "coordinate '{}' has empty range [{}, {}]",
                        coord.name, coord.range.0, coord.range.1
                    )));
                }
                if coord.sign != 1.0 && coord.sign != -1.0 {
                    return Err(ModelError::Structure(format!(
                        "coordinate '{}' has sign {}, expected +1 or -1",
                        coord.name, coord.sign
                    )));
                }
            }
        }
        if ground_joints != 1 {
            return Err(ModelError::Structure(format!(
                "expected exactly one ground joint, found {ground_joints}"
            )));
        }
        for segment in &self.segments {
            if child_counts.get(segment.name.as_str()).copied().unwrap_or(0) != 1 {
                return Err(ModelError::Structure(format!(
                    "segment '{}' must be the child of exactly one joint",
                    segment.name
                )));
            }
            if !(segment.scale > 0.0) {
                return Err(ModelError::Structure(format!(
                    "segment '{}' has non-positive scale {}",
                    segment.name, segment.scale
                )));
            }
        }
        // reachability from ground doubles as the cycle check
        if self.topological_joints()?.len() != self.joints.len() {
            return Err(ModelError::Structure(
                "segment graph is not a tree reachable from ground".to_string(),
            ));
        }
        let names = self.coordinate_names();
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name) {
                return Err(ModelError::Structure(format!(
                    "duplicate coordinate name '{name}'"
                )));
            }
        }
        for marker in &self.markers {
            if self.segment_index(&marker.segment).is_none() {
                return Err(ModelError::Structure(format!(
                    "marker '{}' attaches to unknown segment '{}'",
                    marker.name, marker.segment
                )));
            }
        }
        Ok(())
    }

    /// Joints ordered parent-before-child starting at the ground joint.
    fn topological_joints(&self) -> Result<Vec<usize>, ModelError> {
        let mut order = Vec::with_capacity(self.joints.len());
        let mut resolved: Vec<&str> = Vec::new();
        let mut remaining: Vec<usize> = (0..self.joints.len()).collect();
        while !remaining.is_empty() {
            let before = remaining.len();
            remaining.retain(|&ji| {
                let ready = match &self.joints[ji].parent {
                    None => true,
                    Some(p) => resolved.iter().any(|r| r == p),
                };
                if ready {
                    order.push(ji);
                    resolved.push(self.joints[ji].child.as_str());
                }
                !ready
            });
            if remaining.len() == before {
                break;
            }
        }
        Ok(order)
    }

    fn check_pose(&self, pose: &PoseVector) -> Result<(), ModelError> {
        let names = self.coordinate_names();
        if pose.names == names && pose.values.len() == names.len() {
            return Ok(());
        }
        for name in &pose.names {
            if !names.contains(name) {
                return Err(ModelError::Pose(format!("unknown coordinate '{name}'")));
            }
        }
        for name in &names {
            if !pose.names.contains(name) {
                return Err(ModelError::Pose(format!("missing coordinate '{name}'")));
            }
        }
        Err(ModelError::Pose(
            "pose coordinates out of model order".to_string(),
        ))
    }

    /// World positions of all virtual markers, in `markers` order.
    pub fn forward_kinematics(&self, pose: &PoseVector) -> Result<Vec<Point3<f64>>, ModelError> {
        Ok(self.fk_full(pose)?.markers)
    }

    /// Forward kinematics plus the per-coordinate world frames needed by the
    /// analytic marker Jacobian.
    pub(crate) fn fk_full(&self, pose: &PoseVector) -> Result<FkData, ModelError> {
        self.check_pose(pose)?;
        let order = self.topological_joints()?;
        let mut frames: HashMap<&str, WorldFrame> = HashMap::new();
        let mut coordinates = vec![
            CoordinateWorld {
                is_rotation: false,
                axis: Vector3::zeros(),
                origin: Point3::origin(),
            };
            self.coordinate_count()
        ];
        let coord_offsets = self.coordinate_offsets();

        for ji in order {
            let joint = &self.joints[ji];
            let (parent_frame, parent_scale) = match &joint.parent {
                None => (
                    WorldFrame {
                        r: Matrix3::identity(),
                        t: Vector3::zeros(),
                    },
                    1.0,
                ),
                Some(p) => (
                    frames[p.as_str()],
                    self.segments[self.segment_index(p).expect("validated")].scale,
                ),
            };
            let offset = Vector3::from_row_slice(&joint.offset) * parent_scale;
            let mut frame = WorldFrame {
                r: parent_frame.r,
                t: parent_frame.t + parent_frame.r * offset,
            };
            for (ci, coord) in joint.coordinates.iter().enumerate() {
                let value = pose.values[coord_offsets[ji] + ci];
                let record = &mut coordinates[coord_offsets[ji] + ci];
                match coord.kind {
                    CoordinateKind::Translation(axis) => {
                        let world_axis = frame.r * axis.unit() * coord.sign;
                        *record = CoordinateWorld {
                            is_rotation: false,
                            axis: world_axis,
                            origin: Point3::from(frame.t),
                        };
                        frame.t += world_axis * value;
                    }
                    CoordinateKind::Rotation(axis) => {
                        let world_axis = frame.r * axis.unit() * coord.sign;
                        *record = CoordinateWorld {
                            is_rotation: true,
                            axis: world_axis,
                            origin: Point3::from(frame.t),
                        };
                        let local = Rotation3::from_axis_angle(
                            &nalgebra::Unit::new_normalize(axis.unit()),
                            (value * coord.sign).to_radians(),
                        );
                        frame.r *= local.into_inner();
                    }
                }
            }
            frames.insert(joint.child.as_str(), frame);
        }

        let markers = self
            .markers
            .iter()
            .map(|m| {
                let frame = frames[m.segment.as_str()];
                let scale = self.segments[self.segment_index(&m.segment).expect("validated")].scale;
                Point3::from(frame.t + frame.r * (Vector3::from_row_slice(&m.offset) * scale))
            })
            .collect();
        Ok(FkData {
            markers,
            coordinates,
        })
    }

    /// First coordinate index of each joint, in joint order.
    fn coordinate_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.joints.len());
        let mut total = 0;
        for joint in &self.joints {
            offsets.push(total);
            total += joint.coordinates.len();
        }
        offsets
    }

    /// For each marker, which coordinates move it: those of every joint on
    /// the path from ground to the marker's segment.
    pub(crate) fn marker_coordinate_mask(&self) -> Vec<Vec<bool>> {
        let coord_offsets = self.coordinate_offsets();
        let n_coords = self.coordinate_count();
        let joint_by_child: HashMap<&str, usize> = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| (j.child.as_str(), i))
            .collect();
        self.markers
            .iter()
            .map(|m| {
                let mut mask = vec![false; n_coords];
                let mut segment = Some(m.segment.as_str());
                while let Some(s) = segment {
                    let ji = joint_by_child[s];
                    let joint = &self.joints[ji];
                    for ci in 0..joint.coordinates.len() {
                        mask[coord_offsets[ji] + ci] = true;
                    }
                    segment = joint.parent.as_deref();
                }
                mask
            })
            .collect()
    }

    /// Clamp every pose value into its coordinate range.
    pub fn clamp_pose(&self, pose: &mut PoseVector) {
        let mut i = 0;
        for joint in &self.joints {
            for coord in &joint.coordinates {
                pose.values[i] = pose.values[i].clamp(coord.range.0, coord.range.1);
                i += 1;
            }
        }
    }

    /// Replace the pelvis coordinates so the whole model moves by the given
    /// world rotation and translation on top of the current pose.
    pub fn compose_pelvis_motion(
        &self,
        pose: &PoseVector,
        rotation: &Matrix3<f64>,
        translation: &Vector3<f64>,
    ) -> Result<PoseVector, ModelError> {
        self.check_pose(pose)?;
        let ground = self
            .joints
            .iter()
            .find(|j| j.parent.is_none())
            .ok_or_else(|| ModelError::Structure("no ground joint".to_string()))?;
        let base = Vector3::from_row_slice(&ground.offset);
        let names: Vec<&str> = ground.coordinates.iter().map(|c| c.name.as_str()).collect();
        let get = |n: &str| {
            pose.get(n)
                .ok_or_else(|| ModelError::Pose(format!("missing coordinate '{n}'")))
        };
        let t_old = Vector3::new(get(names[0])?, get(names[1])?, get(names[2])?);
        let r_old = euler_zxy_to_matrix(get(names[3])?, get(names[4])?, get(names[5])?);
        let r_new = rotation * r_old;
        let t_new = rotation * (base + t_old) + translation - base;
        let (tilt, obliquity, yaw) = matrix_to_euler_zxy(&r_new);
        let mut out = pose.clone();
        out.set(names[0], t_new.x)?;
        out.set(names[1], t_new.y)?;
        out.set(names[2], t_new.z)?;
        out.set(names[3], tilt)?;
        out.set(names[4], obliquity)?;
        out.set(names[5], yaw)?;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: SkeletonModel =
            serde_json::from_str(text).map_err(|e| ModelError::Serialization(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// Body-fixed Z-X-Y rotation from degrees: R = Rz(tilt)·Rx(obliquity)·Ry(yaw).
pub fn euler_zxy_to_matrix(tilt_deg: f64, obliquity_deg: f64, yaw_deg: f64) -> Matrix3<f64> {
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), tilt_deg.to_radians());
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), obliquity_deg.to_radians());
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians());
    (rz * rx * ry).into_inner()
}

/// Inverse of [`euler_zxy_to_matrix`], degrees. Valid away from obliquity
/// = ±90°.
pub fn matrix_to_euler_zxy(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let obliquity = r[(2, 1)].clamp(-1.0, 1.0).asin();
    let tilt = (-r[(0, 1)]).atan2(r[(1, 1)]);
    let yaw = (-r[(2, 0)]).atan2(r[(2, 2)]);
    (
        tilt.to_degrees(),
        obliquity.to_degrees(),
        yaw.to_degrees(),
    )
}

/// Default lower-limb model sized for a 1.75 m subject: pelvis root with
/// 6 degrees of freedom, per-leg hip (3), knee (1), and ankle (1), and the
/// 12-marker anatomical set.
pub fn default_model() -> SkeletonModel {
    let rot = |name: &str, axis: Axis, sign: f64, lo: f64, hi: f64| Coordinate {
        name: name.to_string(),
        kind: CoordinateKind::Rotation(axis),
        sign,
        range: (lo, hi),
    };
    let trans = |name: &str, axis: Axis| Coordinate {
        name: name.to_string(),
        kind: CoordinateKind::Translation(axis),
        sign: 1.0,
        range: (-100.0, 100.0),
    };
    let segment = |name: &str| Segment {
        name: name.to_string(),
        scale: 1.0,
    };
    let marker = |name: &str, segment: &str, offset: [f64; 3]| VirtualMarker {
        name: name.to_string(),
        segment: segment.to_string(),
        offset,
    };
    let pair = |segment: &str, a: &str, b: &str| ScalePair {
        segment: segment.to_string(),
        marker_a: a.to_string(),
        marker_b: b.to_string(),
    };

    let leg = |side: &str, mirror: f64| {
        let s = |base: &str| format!("{base}_{side}");
        vec![
            Joint {
                name: s("hip"),
                parent: Some("pelvis".to_string()),
                child: s("thigh"),
                offset: [0.0, 0.0, mirror * 0.09],
                coordinates: vec![
                    rot(&s("hip_flexion"), Axis::Z, 1.0, -30.0, 120.0),
                    rot(&s("hip_adduction"), Axis::X, mirror, -45.0, 45.0),
                    rot(&s("hip_rotation"), Axis::Y, mirror, -45.0, 45.0),
                ],
            },
            Joint {
                name: s("knee"),
                parent: Some(s("thigh")),
                child: s("shank"),
                offset: [0.0, -0.41, 0.0],
                coordinates: vec![rot(&s("knee_angle"), Axis::Z, -1.0, -10.0, 140.0)],
            },
            Joint {
                name: s("ankle"),
                parent: Some(s("shank")),
                child: s("foot"),
                offset: [0.0, -0.43, 0.0],
                coordinates: vec![rot(&s("ankle_angle"), Axis::Z, 1.0, -50.0, 50.0)],
            },
        ]
    };

    let mut joints = vec![Joint {
        name: "ground_pelvis".to_string(),
        parent: None,
        child: "pelvis".to_string(),
        offset: [0.0, 0.92, 0.0],
        coordinates: vec![
            trans("pelvis_tx", Axis::X),
            trans("pelvis_ty", Axis::Y),
            trans("pelvis_tz", Axis::Z),
            rot("pelvis_tilt", Axis::Z, 1.0, -45.0, 45.0),
            rot("pelvis_obliquity", Axis::X, 1.0, -30.0, 30.0),
            rot("pelvis_rotation", Axis::Y, 1.0, -180.0, 180.0),
        ],
    }];
    joints.extend(leg("r", 1.0));
    joints.extend(leg("l", -1.0));

    let model = SkeletonModel {
        segments: vec![
            segment("pelvis"),
            segment("thigh_r"),
            segment("shank_r"),
            segment("foot_r"),
            segment("thigh_l"),
            segment("shank_l"),
            segment("foot_l"),
        ],
        joints,
        markers: vec![
            marker("LASIS", "pelvis", [0.105, 0.055, -0.115]),
            marker("RASIS", "pelvis", [0.105, 0.055, 0.115]),
            marker("LPSIS", "pelvis", [-0.095, 0.065, -0.045]),
            marker("RPSIS", "pelvis", [-0.095, 0.065, 0.045]),
            marker("LKNEE", "thigh_l", [0.0, -0.425, -0.055]),
            marker("RKNEE", "thigh_r", [0.0, -0.425, 0.055]),
            marker("LANK", "shank_l", [0.0, -0.43, -0.045]),
            marker("RANK", "shank_r", [0.0, -0.43, 0.045]),
            marker("LHEEL", "foot_l", [-0.06, -0.07, -0.02]),
            marker("RHEEL", "foot_r", [-0.06, -0.07, 0.02]),
            marker("LTOE", "foot_l", [0.16, -0.075, -0.01]),
            marker("RTOE", "foot_r", [0.16, -0.075, 0.01]),
        ],
        scale_pairs: vec![
            pair("pelvis", "LASIS", "RASIS"),
            pair("thigh_r", "RASIS", "RKNEE"),
            pair("shank_r", "RKNEE", "RANK"),
            pair("foot_r", "RHEEL", "RTOE"),
            pair("thigh_l", "LASIS", "LKNEE"),
            pair("shank_l", "LKNEE", "LANK"),
            pair("foot_l", "LHEEL", "LTOE"),
        ],
        subject: None,
    };
    debug_assert!(model.validate().is_ok());
    model
}

/// Scale each segment by the ratio of the measured defining-pair distance
/// (mean over static frames) to the model's distance at its current scale.
/// Subject anthropometrics are stored as metadata.
pub fn scale_model(
    model: &SkeletonModel,
    static_markers: &MarkerTrajectorySet,
    correspondence: &MarkerCorrespondence,
    subject: &SubjectInfo,
) -> Result<SkeletonModel, ModelError> {
    correspondence.validate(model, static_markers)?;
    let label_for = |virtual_name: &str| -> Option<&str> {
        correspondence
            .pairs
            .iter()
            .find(|p| p.virtual_marker == virtual_name)
            .map(|p| p.experimental_label.as_str())
    };
    let neutral = model.forward_kinematics(&PoseVector::zero(model))?;

    let mut scaled = model.clone();
    for pair in &model.scale_pairs {
        let err = |message: String| ModelError::Scaling {
            segment: pair.segment.clone(),
            message,
        };
        let ia = model
            .marker_index(&pair.marker_a)
            .ok_or_else(|| err(format!("unknown model marker '{}'", pair.marker_a)))?;
        let ib = model
            .marker_index(&pair.marker_b)
            .ok_or_else(|| err(format!("unknown model marker '{}'", pair.marker_b)))?;
        let label_a = label_for(&pair.marker_a)
            .ok_or_else(|| err(format!("no correspondence for '{}'", pair.marker_a)))?;
        let label_b = label_for(&pair.marker_b)
            .ok_or_else(|| err(format!("no correspondence for '{}'", pair.marker_b)))?;
        let ta = static_markers
            .trajectory(label_a)
            .ok_or_else(|| err(format!("label '{label_a}' missing from static trial")))?;
        let tb = static_markers
            .trajectory(label_b)
            .ok_or_else(|| err(format!("label '{label_b}' missing from static trial")))?;

        let mut sum = 0.0;
        let mut count = 0;
        for (a, b) in ta.iter().zip(&tb) {
            if let (Some(pa), Some(pb)) = (a, b) {
                sum += (pa - pb).norm();
                count += 1;
            }
        }
        if count == 0 {
            return Err(err(format!(
                "no static frames where both '{label_a}' and '{label_b}' are present"
            )));
        }
        let measured = sum / count as f64;
        if !(measured > 0.0) {
            return Err(err(format!("non-positive measured distance {measured}")));
        }
        let model_distance = (neutral[ia] - neutral[ib]).norm();
        if !(model_distance > 0.0) {
            return Err(err("model defining pair has zero length".to_string()));
        }
        let si = model
            .segment_index(&pair.segment)
            .ok_or_else(|| err("unknown segment".to_string()))?;
        scaled.segments[si].scale = model.segments[si].scale * measured / model_distance;
    }
    scaled.subject = Some(subject.clone());
    Ok(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_model_has_16_coordinates() {
        let model = default_model();
        assert_eq!(model.coordinate_count(), 16);
        let names = model.coordinate_names();
        for expected in [
            "pelvis_tx",
            "pelvis_ty",
            "pelvis_tz",
            "pelvis_tilt",
            "pelvis_obliquity",
            "pelvis_rotation",
            "hip_flexion_r",
            "hip_adduction_r",
            "hip_rotation_r",
            "knee_angle_r",
            "ankle_angle_r",
            "hip_flexion_l",
            "hip_adduction_l",
            "hip_rotation_l",
            "knee_angle_l",
            "ankle_angle_l",
        ] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
    }

    #[test]
    fn rheel_attaches_to_right_foot() {
        let model = default_model();
        let marker = model.markers.iter().find(|m| m.name == "RHEEL").unwrap();
        assert_eq!(marker.segment, "foot_r");
    }

    #[test]
    fn default_model_validates() {
        assert!(default_model().validate().is_ok());
    }

    #[test]
    fn broken_tree_rejected() {
        let mut model = default_model();
        model.joints[1].parent = Some("nonexistent".to_string());
        assert!(matches!(
            model.validate(),
            Err(ModelError::Structure(_))
        ));
    }

    #[test]
    fn neutral_stance_matches_hand_composition() {
        let model = default_model();
        let markers = model.forward_kinematics(&PoseVector::zero(&model)).unwrap();
        let get = |name: &str| markers[model.marker_index(name).unwrap()];
        // pelvis origin (0, 0.92, 0); offsets compose by pure addition at zero pose
        assert_relative_eq!(get("RASIS").coords, Vector3::new(0.105, 0.975, 0.115));
        assert_relative_eq!(get("RKNEE").coords, Vector3::new(0.0, 0.495, 0.145));
        assert_relative_eq!(get("RHEEL").coords, Vector3::new(-0.06, 0.01, 0.11));
        assert_relative_eq!(get("LTOE").coords, Vector3::new(0.16, 0.005, -0.10));
    }

    #[test]
    fn pelvis_translation_shifts_every_marker() {
        let model = default_model();
        let zero = PoseVector::zero(&model);
        let mut shifted = zero.clone();
        shifted.set("pelvis_tx", 0.1).unwrap();
        let a = model.forward_kinematics(&zero).unwrap();
        let b = model.forward_kinematics(&shifted).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert_relative_eq!(pb - pa, Vector3::new(0.1, 0.0, 0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn knee_flexion_shortens_heel_to_hip() {
        let model = default_model();
        let zero = PoseVector::zero(&model);
        let mut flexed = zero.clone();
        flexed.set("knee_angle_r", 90.0).unwrap();
        let hip = Point3::new(0.0, 0.92, 0.09);
        let d0 = (model.forward_kinematics(&zero).unwrap()
            [model.marker_index("RHEEL").unwrap()]
            - hip)
            .norm();
        let d90 = (model.forward_kinematics(&flexed).unwrap()
            [model.marker_index("RHEEL").unwrap()]
            - hip)
            .norm();
        assert!(d90 < d0, "flexed {d90} not below neutral {d0}");
    }

    #[test]
    fn knee_flexion_moves_heel_backward_and_up() {
        let model = default_model();
        let mut pose = PoseVector::zero(&model);
        pose.set("knee_angle_r", 60.0).unwrap();
        let markers = model.forward_kinematics(&pose).unwrap();
        let heel = markers[model.marker_index("RHEEL").unwrap()];
        assert!(heel.x < -0.06, "heel should move backward, got {}", heel.x);
        assert!(heel.y > 0.01, "heel should rise, got {}", heel.y);
    }

    #[test]
    fn unknown_pose_coordinate_is_error() {
        let model = default_model();
        let mut pose = PoseVector::zero(&model);
        pose.names[0] = "bogus".to_string();
        assert!(matches!(
            model.forward_kinematics(&pose),
            Err(ModelError::Pose(_))
        ));
        let mut ok_pose = PoseVector::zero(&model);
        assert!(ok_pose.set("bogus", 1.0).is_err());
    }

    #[test]
    fn self_scaling_gives_unit_scales() {
        let model = default_model();
        let neutral = model.forward_kinematics(&PoseVector::zero(&model)).unwrap();
        let mut set = MarkerTrajectorySet::new(100.0, model.marker_names());
        for _ in 0..5 {
            set.push_frame(neutral.iter().map(|p| Some(*p)).collect());
        }
        let subject = SubjectInfo::new("S01", 70.0, 1.75).unwrap();
        let scaled = scale_model(
            &model,
            &set,
            &MarkerCorrespondence::identity(&model),
            &subject,
        )
        .unwrap();
        for segment in &scaled.segments {
            assert_relative_eq!(segment.scale, 1.0, epsilon = 1e-9);
        }
        assert_eq!(scaled.subject, Some(subject));
    }

    #[test]
    fn uniform_distance_ratio_recovers_scale() {
        let model = default_model();
        let neutral = model.forward_kinematics(&PoseVector::zero(&model)).unwrap();
        let mut set = MarkerTrajectorySet::new(100.0, model.marker_names());
        set.push_frame(neutral.iter().map(|p| Some(Point3::from(p.coords * 1.1))).collect());
        let subject = SubjectInfo::new("S01", 70.0, 1.75).unwrap();
        let scaled = scale_model(
            &model,
            &set,
            &MarkerCorrespondence::identity(&model),
            &subject,
        )
        .unwrap();
        for segment in &scaled.segments {
            assert_relative_eq!(segment.scale, 1.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn scaling_preserves_marker_names() {
        let model = default_model();
        let neutral = model.forward_kinematics(&PoseVector::zero(&model)).unwrap();
        let mut set = MarkerTrajectorySet::new(100.0, model.marker_names());
        set.push_frame(neutral.iter().map(|p| Some(*p)).collect());
        let subject = SubjectInfo::new("S01", 70.0, 1.75).unwrap();
        let scaled = scale_model(
            &model,
            &set,
            &MarkerCorrespondence::identity(&model),
            &subject,
        )
        .unwrap();
        assert_eq!(scaled.marker_names(), model.marker_names());
    }

    #[test]
    fn missing_defining_pair_names_segment() {
        let model = default_model();
        let neutral = model.forward_kinematics(&PoseVector::zero(&model)).unwrap();
        let labels: Vec<String> = model
            .marker_names()
            .into_iter()
            .filter(|n| n != "RKNEE")
            .collect();
        let mut set = MarkerTrajectorySet::new(100.0, labels.clone());
        set.push_frame(
            model
                .markers
                .iter()
                .zip(&neutral)
                .filter(|(m, _)| m.name != "RKNEE")
                .map(|(_, p)| Some(*p))
                .collect(),
        );
        let correspondence = MarkerCorrespondence {
            pairs: labels
                .iter()
                .map(|l| CorrespondencePair {
                    virtual_marker: l.clone(),
                    experimental_label: l.clone(),
                    weight: 1.0,
                })
                .collect(),
        };
        let subject = SubjectInfo::new("S01", 70.0, 1.75).unwrap();
        let err = scale_model(&model, &set, &correspondence, &subject).unwrap_err();
        match err {
            ModelError::Scaling { segment, .. } => assert_eq!(segment, "thigh_r"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pelvis_rigid_composition_moves_markers_rigidly() {
        let model = default_model();
        let mut pose = PoseVector::zero(&model);
        for (name, value) in [
            ("pelvis_tx", 0.3),
            ("pelvis_ty", -0.05),
            ("pelvis_tilt", 5.0),
            ("pelvis_obliquity", -4.0),
            ("pelvis_rotation", 12.0),
            ("hip_flexion_r", 25.0),
            ("knee_angle_r", 40.0),
            ("ankle_angle_l", -10.0),
            ("hip_adduction_l", 8.0),
        ] {
            pose.set(name, value).unwrap();
        }
        let rotation = euler_zxy_to_matrix(7.0, -3.0, 20.0);
        let translation = Vector3::new(0.25, 0.1, -0.4);
        let moved = model
            .compose_pelvis_motion(&pose, &rotation, &translation)
            .unwrap();
        let before = model.forward_kinematics(&pose).unwrap();
        let after = model.forward_kinematics(&moved).unwrap();
        for (b, a) in before.iter().zip(&after) {
            let expected = rotation * b.coords + translation;
            assert!(
                (a.coords - expected).norm() < 1e-9,
                "marker moved to {a:?}, expected {expected:?}"
            );
        }
        // non-pelvis coordinates untouched
        for name in ["hip_flexion_r", "knee_angle_r", "ankle_angle_l"] {
            assert_relative_eq!(
                moved.get(name).unwrap(),
                pose.get(name).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn euler_round_trip() {
        let r = euler_zxy_to_matrix(17.0, -22.0, 48.0);
        let (tilt, obliquity, yaw) = matrix_to_euler_zxy(&r);
        assert_relative_eq!(tilt, 17.0, epsilon = 1e-10);
        assert_relative_eq!(obliquity, -22.0, epsilon = 1e-10);
        assert_relative_eq!(yaw, 48.0, epsilon = 1e-10);
    }

    #[test]
    fn json_round_trip() {
        let model = default_model();
        let text = model.to_json();
        let back = SkeletonModel::from_json(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn from_json_validates_structure() {
        let mut model = default_model();
        model.segments[0].scale = -1.0;
        let text = model.to_json();
        assert!(matches!(
            SkeletonModel::from_json(&text),
            Err(ModelError::Structure(_))
        ));
    }
}
