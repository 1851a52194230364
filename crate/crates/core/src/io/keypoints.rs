//! Keypoint detection documents: flat `[u, v, confidence]` triplets per
//! person, one document per frame or one sequence document per camera.

use serde::Deserialize;

use super::{json_error, IoError, KeypointDetection, KeypointFrame};

#[derive(Debug, Deserialize)]
struct FrameDoc {
    #[serde(default)]
    people: Vec<PersonEntry>,
}

#[derive(Debug, Deserialize)]
struct PersonEntry {
    pose_keypoints_2d: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct SequenceDoc {
    #[serde(default)]
    camera_id: Option<String>,
    frames: Vec<FrameDoc>,
}

fn person_to_points(flat: &[f64]) -> Result<Vec<KeypointDetection>, String> {
    if flat.len() % 3 != 0 {
        return Err(format!(
            "pose_keypoints_2d length {} is not divisible by 3",
            flat.len()
        ));
    }
    for (k, v) in flat.iter().enumerate() {
        if k % 3 == 2 && !(0.0..=1.0).contains(v) {
            return Err(format!(
                "confidence {} for landmark {} outside [0, 1]",
                v,
                k / 3
            ));
        }
    }
    Ok(flat
        .chunks_exact(3)
        .enumerate()
        .map(|(k, c)| KeypointDetection {
            landmark_id: k as u32,
            u: c[0],
            v: c[1],
            confidence: c[2],
        })
        .collect())
}

fn select_person(doc: &FrameDoc) -> Result<Vec<KeypointDetection>, IoError> {
    let mut best: Option<(f64, Vec<KeypointDetection>)> = None;
    for person in &doc.people {
        let points = person_to_points(&person.pose_keypoints_2d)
            .map_err(|message| IoError::Format { offset: 0, message })?;
        let total: f64 = points.iter().map(|p| p.confidence).sum();
        let take = match &best {
            None => true,
            Some((best_total, _)) => total > *best_total,
        };
        if take {
            best = Some((total, points));
        }
    }
    Ok(best.map(|(_, p)| p).unwrap_or_default())
}

/// Parse a single-frame keypoint document.
///
/// When several person entries are present, the one with the highest total
/// confidence is kept (the pipeline tracks a single subject).
pub fn parse_keypoint_file(
    bytes: &[u8],
    camera_id: &str,
    frame_index: usize,
) -> Result<KeypointFrame, IoError> {
    let doc: FrameDoc = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;
    Ok(KeypointFrame {
        camera_id: camera_id.to_string(),
        frame_index,
        points: select_person(&doc)?,
    })
}

/// Parse a per-camera sequence document holding a `frames` array.
///
/// Frame indices are assigned by array position; every input frame yields
/// exactly one output frame.
pub fn parse_keypoint_sequence(bytes: &[u8], camera_id: &str) -> Result<Vec<KeypointFrame>, IoError> {
    let doc: SequenceDoc = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;
    let camera_id = doc.camera_id.as_deref().unwrap_or(camera_id);
    doc.frames
        .iter()
        .enumerate()
        .map(|(frame_index, frame)| {
            Ok(KeypointFrame {
                camera_id: camera_id.to_string(),
                frame_index,
                points: select_person(frame)?,
            })
        })
        .collect()
}

/// Serialize per-camera frames into the sequence document format.
///
/// Landmark ids are positional in the flat array, so each detection is
/// written at the slot of its id and absent slots are zero triplets with
/// confidence 0. All frames share the same slot count.
pub fn write_keypoint_sequence(camera_id: &str, frames: &[KeypointFrame]) -> Vec<u8> {
    let n_slots = frames
        .iter()
        .flat_map(|f| f.points.iter())
        .map(|p| p.landmark_id as usize + 1)
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str("{\"camera_id\":");
    out.push_str(&serde_json::to_string(camera_id).expect("string encodes"));
    out.push_str(",\"frames\":[");
    let mut slots = vec![(0.0, 0.0, 0.0); n_slots];
    for (i, frame) in frames.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        slots.fill((0.0, 0.0, 0.0));
        for p in &frame.points {
            slots[p.landmark_id as usize] = (p.u, p.v, p.confidence);
        }
        out.push_str("\n{\"people\":[{\"pose_keypoints_2d\":[");
        for (j, (u, v, c)) in slots.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{u},{v},{c}"));
        }
        out.push_str("]}]}");
    }
    out.push_str("\n]}\n");
    out.into_bytes()
}
