//! TRC marker trajectory parsing and serialization.
//!
//! Layout: five tab-separated header lines (file meta, field names, field
//! values, marker labels, per-axis column labels), one blank line, then one
//! data row per frame. The Units header governs scale on parse; output is
//! always written in meters.

use nalgebra::Point3;

use super::{IoError, MarkerTrajectorySet, SubjectInfo};

const SUBJECT_ID: &str = "SubjectID";
const SUBJECT_MASS: &str = "SubjectMass";
const SUBJECT_STATURE: &str = "SubjectStature";

fn line_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Line {
        line,
        message: message.into(),
    }
}

fn next_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    expected: &str,
) -> Result<(usize, &'a str), IoError> {
    lines
        .next()
        .map(|(i, l)| (i + 1, l))
        .ok_or_else(|| line_err(0, format!("unexpected end of file, expected {expected}")))
}

fn header_field<'a>(
    names: &[&str],
    values: &[&'a str],
    key: &str,
) -> Option<&'a str> {
    names
        .iter()
        .position(|n| *n == key)
        .and_then(|i| values.get(i).copied())
}

fn require_field<'a>(
    names: &[&str],
    values: &[&'a str],
    key: &str,
    line: usize,
) -> Result<&'a str, IoError> {
    header_field(names, values, key)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| line_err(line, format!("missing header field {key}")))
}

fn parse_cell<T: std::str::FromStr>(cell: &str, what: &str, line: usize) -> Result<T, IoError> {
    cell.trim()
        .parse()
        .map_err(|_| line_err(line, format!("invalid {what} '{cell}'")))
}

/// Parse a TRC document into trajectories in meters, plus subject metadata
/// when the optional SubjectID/SubjectMass/SubjectStature header fields are
/// present.
pub fn parse_trc(text: &str) -> Result<(MarkerTrajectorySet, Option<SubjectInfo>), IoError> {
    let mut lines = text.lines().enumerate();

    let (line_no, first) = next_line(&mut lines, "PathFileType header")?;
    if !first.starts_with("PathFileType") {
        return Err(line_err(line_no, "expected PathFileType header"));
    }

    let (_, names_row) = next_line(&mut lines, "header field names")?;
    let names: Vec<&str> = names_row.split('\t').collect();
    let (values_line, values_row) = next_line(&mut lines, "header field values")?;
    let values: Vec<&str> = values_row.split('\t').collect();

    let data_rate: f64 = parse_cell(
        require_field(&names, &values, "DataRate", values_line)?,
        "DataRate",
        values_line,
    )?;
    if !(data_rate > 0.0) || !data_rate.is_finite() {
        return Err(line_err(
            values_line,
            format!("DataRate must be positive, got {data_rate}"),
        ));
    }
    let num_frames: usize = parse_cell(
        require_field(&names, &values, "NumFrames", values_line)?,
        "NumFrames",
        values_line,
    )?;
    let num_markers: usize = parse_cell(
        require_field(&names, &values, "NumMarkers", values_line)?,
        "NumMarkers",
        values_line,
    )?;
    let units = require_field(&names, &values, "Units", values_line)?;
    let scale = match units {
        "m" => 1.0,
        "mm" => 1e-3,
        other => {
            return Err(line_err(
                values_line,
                format!("unsupported Units '{other}', expected m or mm"),
            ))
        }
    };

    let subject = parse_subject(&names, &values, values_line)?;

    let (labels_line, labels_row) = next_line(&mut lines, "marker label row")?;
    let label_cells: Vec<&str> = labels_row.split('\t').collect();
    if label_cells.len() < 2 {
        return Err(line_err(labels_line, "expected Frame# and Time columns"));
    }
    let labels: Vec<String> = label_cells[2..]
        .iter()
        .filter(|c| !c.trim().is_empty())
        .map(|c| c.trim().to_string())
        .collect();
    if labels.len() != num_markers {
        return Err(line_err(
            labels_line,
            format!(
                "declared NumMarkers={num_markers} but found {} marker labels",
                labels.len()
            ),
        ));
    }

    next_line(&mut lines, "axis label row")?;

    let mut set = MarkerTrajectorySet::new(data_rate, labels);
    let expected_cols = 2 + 3 * num_markers;
    for (idx, row) in lines {
        let line_no = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split('\t').collect();
        if cells.len() != expected_cols {
            return Err(line_err(
                line_no,
                format!("expected {expected_cols} columns, found {}", cells.len()),
            ));
        }
        let _: i64 = parse_cell(cells[0], "frame number", line_no)?;
        let _: f64 = parse_cell(cells[1], "time", line_no)?;
        let mut frame = Vec::with_capacity(num_markers);
        for m in 0..num_markers {
            let triple = &cells[2 + 3 * m..5 + 3 * m];
            let blanks = triple.iter().filter(|c| c.trim().is_empty()).count();
            frame.push(match blanks {
                3 => None,
                0 => {
                    let x: f64 = parse_cell(triple[0], "coordinate", line_no)?;
                    let y: f64 = parse_cell(triple[1], "coordinate", line_no)?;
                    let z: f64 = parse_cell(triple[2], "coordinate", line_no)?;
                    Some(Point3::new(x * scale, y * scale, z * scale))
                }
                _ => {
                    return Err(line_err(
                        line_no,
                        format!("marker {} has a partially blank X/Y/Z triple", set.labels[m]),
                    ))
                }
            });
        }
        set.push_frame(frame);
    }

    if set.n_frames() != num_frames {
        return Err(line_err(
            values_line,
            format!(
                "declared NumFrames={num_frames} but found {} data rows",
                set.n_frames()
            ),
        ));
    }

    Ok((set, subject))
}

fn parse_subject(
    names: &[&str],
    values: &[&str],
    line: usize,
) -> Result<Option<SubjectInfo>, IoError> {
    let present = [SUBJECT_ID, SUBJECT_MASS, SUBJECT_STATURE]
        .iter()
        .filter(|k| names.contains(k))
        .count();
    match present {
        0 => Ok(None),
        3 => {
            let id = require_field(names, values, SUBJECT_ID, line)?;
            let mass: f64 = parse_cell(
                require_field(names, values, SUBJECT_MASS, line)?,
                SUBJECT_MASS,
                line,
            )?;
            let stature: f64 = parse_cell(
                require_field(names, values, SUBJECT_STATURE, line)?,
                SUBJECT_STATURE,
                line,
            )?;
            Ok(Some(SubjectInfo::new(id, mass, stature)?))
        }
        _ => Err(line_err(
            line,
            "subject header fields must appear together (SubjectID, SubjectMass, SubjectStature)",
        )),
    }
}

/// Serialize trajectories as a TRC document in meters.
///
/// Coordinates are formatted with the shortest representation that parses
/// back to the identical value, so `parse_trc(write_trc(set))` reproduces
/// the set exactly.
pub fn write_trc(set: &MarkerTrajectorySet, subject: Option<&SubjectInfo>) -> String {
    let mut names = vec![
        "DataRate",
        "CameraRate",
        "NumFrames",
        "NumMarkers",
        "Units",
        "OrigDataRate",
        "OrigDataStartFrame",
        "OrigNumFrames",
    ];
    let rate = set.sample_rate.to_string();
    let n_frames = set.n_frames().to_string();
    let mut values = vec![
        rate.clone(),
        rate.clone(),
        n_frames.clone(),
        set.labels.len().to_string(),
        "m".to_string(),
        rate,
        "1".to_string(),
        n_frames,
    ];
    if let Some(info) = subject {
        names.extend([SUBJECT_ID, SUBJECT_MASS, SUBJECT_STATURE]);
        values.push(info.id.clone());
        values.push(info.mass_kg.to_string());
        values.push(info.stature_m.to_string());
    }

    let mut out = String::new();
    out.push_str("PathFileType\t4\t(X/Y/Z)\ttrajectories.trc\n");
    out.push_str(&names.join("\t"));
    out.push('\n');
    out.push_str(&values.join("\t"));
    out.push('\n');

    out.push_str("Frame#\tTime");
    for label in &set.labels {
        out.push('\t');
        out.push_str(label);
        out.push_str("\t\t");
    }
    out.push('\n');
    out.push_str("\t\t");
    let axis_cols: Vec<String> = (1..=set.labels.len())
        .flat_map(|i| [format!("X{i}"), format!("Y{i}"), format!("Z{i}")])
        .collect();
    out.push_str(&axis_cols.join("\t"));
    out.push('\n');
    out.push('\n');

    for (i, frame) in set.frames.iter().enumerate() {
        out.push_str(&(i + 1).to_string());
        out.push('\t');
        out.push_str(&(i as f64 / set.sample_rate).to_string());
        for slot in frame {
            match slot {
                Some(p) => {
                    for c in [p.x, p.y, p.z] {
                        out.push('\t');
                        out.push_str(&c.to_string());
                    }
                }
                None => out.push_str("\t\t\t"),
            }
        }
        out.push('\n');
    }
    out
}
