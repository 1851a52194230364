//! Camera calibration documents: one JSON file listing per-camera
//! intrinsics `K`, radial distortion `dist`, rotation `R`, and translation
//! `t`, all world-to-camera.

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use super::{json_error, IoError};
use crate::camera::CameraModel;

#[derive(Debug, Deserialize)]
struct CalibrationDoc {
    cameras: Vec<CameraEntry>,
}

#[derive(Debug, Deserialize)]
struct CameraEntry {
    name: String,
    #[serde(rename = "K")]
    k: [f64; 9],
    dist: [f64; 2],
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

fn push_floats(out: &mut String, values: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&v.to_string());
    }
    out.push(']');
}

/// Serialize camera models into the document format read by
/// [`parse_calibration`]. Floats keep full round-trip precision; identical
/// input always yields identical bytes.
pub fn write_calibration(cameras: &[CameraModel]) -> Vec<u8> {
    let mut out = String::from("{\"cameras\":[");
    for (i, camera) in cameras.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("\n  {\"name\":");
        out.push_str(&serde_json::to_string(&camera.id).expect("string encodes"));
        out.push_str(",\"K\":");
        push_floats(&mut out, camera.intrinsics.transpose().iter().copied());
        out.push_str(",\"dist\":");
        push_floats(&mut out, [camera.distortion.0, camera.distortion.1]);
        out.push_str(",\"R\":");
        push_floats(&mut out, camera.rotation.transpose().iter().copied());
        out.push_str(",\"t\":");
        push_floats(&mut out, camera.translation.iter().copied());
        out.push('}');
    }
    out.push_str("\n]}\n");
    out.into_bytes()
}

/// Parse a calibration document, preserving file order. Every rotation is
/// validated orthonormal with determinant +1; violations name the camera.
pub fn parse_calibration(bytes: &[u8]) -> Result<Vec<CameraModel>, IoError> {
    let doc: CalibrationDoc =
        serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;
    doc.cameras
        .into_iter()
        .map(|entry| {
            let model = CameraModel {
                id: entry.name.clone(),
                intrinsics: Matrix3::from_row_slice(&entry.k),
                distortion: (entry.dist[0], entry.dist[1]),
                rotation: Matrix3::from_row_slice(&entry.r),
                translation: Vector3::from_row_slice(&entry.t),
            };
            model.validate().map_err(|message| IoError::Calibration {
                camera: entry.name,
                message,
            })?;
            Ok(model)
        })
        .collect()
}
