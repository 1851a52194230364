//! Subcommand implementations. Every output is deterministic: identical
//! inputs and configuration produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gaitkit::camera::triangulate_sequence;
use gaitkit::events::{
    dense_trajectory, detect_events, estimate_walking_axis, marker_midpoint, segment_cycles,
    time_normalize, EventError, GaitCycle,
};
use gaitkit::ik::{solve_trajectory, IkFrameResult, IkSettings};
use gaitkit::io::{
    parse_calibration, parse_keypoint_sequence, parse_report_json, parse_trc, write_calibration,
    write_keypoint_sequence, write_report, write_trc, ComparisonReport, ReportFormat, ReportRow,
};
use gaitkit::model::{default_model, scale_model};
use gaitkit::params::{mean_sd_waveform, rom, spatiotemporal};
use gaitkit::signal::filter_trajectories;
use gaitkit::stats::{bland_altman, compare_rom_sets, BlandAltman, StatsError};
use gaitkit::synth::{
    default_camera_rig, generate_gait, generate_static_trial, render_views, GaitRecipe,
    SyntheticGait,
};
use gaitkit::{
    EventKind, GaitEvent, KeypointFrame, MarkerCorrespondence, MarkerTrajectorySet, Side,
    SkeletonModel, SpatiotemporalRecord, WaveformSummary,
};
use nalgebra::{Point3, Vector3};

use crate::config::PipelineConfig;
use crate::summary::{AnalysisSummary, CycleRecord, EventRecord, Metric, ParameterRecord};
use crate::svg;
use crate::CliError;

/// The three waveform plots analyze always writes: coordinate, file name,
/// y-axis label.
const WAVEFORM_PLOTS: [(&str, &str, &str); 3] = [
    ("knee_angle_r", "waveform_knee_angle_r.svg", "right knee flexion (deg)"),
    ("pelvis_ty", "waveform_pelvis_ty.svg", "pelvis vertical translation (m)"),
    ("hip_flexion_r", "waveform_hip_flexion_r.svg", "right hip flexion (deg)"),
];

/// Virtual markers that must be present to trim, detect events, and compute
/// parameters: both heels and the four pelvis markers.
const REQUIRED_VIRTUAL: [&str; 6] = ["LHEEL", "RHEEL", "LASIS", "RASIS", "LPSIS", "RPSIS"];

fn read_bytes(path: &Path, what: &str) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!("{what} '{}' not found", path.display())));
    }
    fs::read(path)
        .map_err(|e| CliError::Input(format!("cannot read {what} '{}': {e}", path.display())))
}

fn read_text(path: &Path, what: &str) -> Result<String, CliError> {
    String::from_utf8(read_bytes(path, what)?)
        .map_err(|e| CliError::Input(format!("{what} '{}' is not UTF-8: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Input(format!("cannot write '{}': {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Input(format!("cannot create output directory '{}': {e}", dir.display()))
    })
}

fn kind_label(kind: EventKind) -> &'static str {
    match kind {
        EventKind::HeelStrike => "heel_strike",
        EventKind::ToeOff => "toe_off",
    }
}

#[derive(serde::Serialize)]
struct TruthDoc {
    sample_rate: f64,
    walking_axis: [f64; 3],
    events: Vec<EventRecord>,
    parameters: Vec<ParameterRecord>,
}

fn event_record(event: &GaitEvent, frame_offset: usize, sample_rate: f64) -> EventRecord {
    let frame = frame_offset + event.frame_index;
    EventRecord {
        side: event.side,
        kind: kind_label(event.kind).to_string(),
        frame,
        time: frame as f64 / sample_rate,
    }
}

fn parameter_record(record: &SpatiotemporalRecord) -> ParameterRecord {
    ParameterRecord {
        side: record.side,
        stride_time: record.stride_time,
        stride_length: record.stride_length,
        step_time: record.step_time,
        step_length: record.step_length,
    }
}

pub fn cmd_synth(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let recipe = cfg.synth.recipe.apply(GaitRecipe::default())?;
    let landmarks = cfg.landmark_map();
    let gait = generate_gait(&recipe).map_err(|e| CliError::stage("synthesis", e))?;
    let rig = default_camera_rig(recipe.walkway_center());
    let streams = render_views(
        &gait.markers,
        &rig,
        &landmarks,
        cfg.synth.pixel_noise_sd,
        cfg.synth.dropout_rate,
        recipe.seed,
    )
    .map_err(|e| CliError::stage("rendering", e))?;
    let static_trial = generate_static_trial(&recipe, cfg.synth.static_frames)
        .map_err(|e| CliError::stage("synthesis", e))?;

    ensure_dir(out_dir)?;
    println!(
        "synthesized {} frames at {} Hz: {} strides, noise {} px, dropout {}, seed {}",
        gait.markers.n_frames(),
        recipe.sample_rate,
        recipe.n_strides,
        cfg.synth.pixel_noise_sd,
        cfg.synth.dropout_rate,
        recipe.seed,
    );
    write_file(&out_dir.join("calibration.json"), &write_calibration(&rig))?;
    for (camera, frames) in rig.iter().zip(&streams) {
        write_file(
            &out_dir.join(format!("keypoints_{}.json", camera.id)),
            &write_keypoint_sequence(&camera.id, frames),
        )?;
    }
    write_file(
        &out_dir.join("reference.trc"),
        write_trc(&gait.markers, Some(&recipe.subject)).as_bytes(),
    )?;
    write_file(
        &out_dir.join("static.trc"),
        write_trc(&static_trial, Some(&recipe.subject)).as_bytes(),
    )?;
    write_file(&out_dir.join("truth.json"), &truth_json(&recipe, &gait))?;
    Ok(())
}

fn truth_json(recipe: &GaitRecipe, gait: &SyntheticGait) -> Vec<u8> {
    let doc = TruthDoc {
        sample_rate: recipe.sample_rate,
        walking_axis: gait.walking_axis.into(),
        events: gait
            .events
            .iter()
            .map(|e| event_record(e, 0, recipe.sample_rate))
            .collect(),
        parameters: gait.records.iter().map(parameter_record).collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("truth serializes");
    bytes.push(b'\n');
    bytes
}

pub fn cmd_triangulate(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let calibration_path = cfg.paths.calibration.as_deref().ok_or_else(|| {
        CliError::Input(
            "triangulate needs a calibration file: set [paths] calibration or pass --calibration"
                .into(),
        )
    })?;
    let bytes = read_bytes(calibration_path, "calibration file")?;
    let cameras = parse_calibration(&bytes).map_err(|e| {
        CliError::Input(format!("calibration file '{}': {e}", calibration_path.display()))
    })?;

    if cfg.paths.keypoints.is_empty() {
        return Err(CliError::Input(
            "triangulate needs keypoint files: set [paths] keypoints or pass --keypoints".into(),
        ));
    }
    let mut streams_by_id: BTreeMap<String, Vec<KeypointFrame>> = BTreeMap::new();
    for path in &cfg.paths.keypoints {
        let bytes = read_bytes(path, "keypoint file")?;
        let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unnamed");
        let frames = parse_keypoint_sequence(&bytes, fallback)
            .map_err(|e| CliError::Input(format!("keypoint file '{}': {e}", path.display())))?;
        let id = frames
            .first()
            .map(|f| f.camera_id.clone())
            .unwrap_or_else(|| fallback.to_string());
        if streams_by_id.insert(id.clone(), frames).is_some() {
            return Err(CliError::Input(format!("duplicate keypoint stream for camera '{id}'")));
        }
    }
    let streams: Vec<Vec<KeypointFrame>> = cameras
        .iter()
        .map(|camera| {
            streams_by_id.remove(&camera.id).ok_or_else(|| {
                CliError::Input(format!("no keypoint stream for camera '{}'", camera.id))
            })
        })
        .collect::<Result<_, _>>()?;
    if let Some(extra) = streams_by_id.keys().next() {
        return Err(CliError::Input(format!(
            "keypoint stream '{extra}' matches no calibrated camera"
        )));
    }

    let set = triangulate_sequence(
        &streams,
        &cameras,
        &cfg.landmark_map(),
        cfg.triangulate.min_confidence,
        cfg.triangulate.sample_rate,
    )
    .map_err(|e| CliError::stage("triangulation", e))?;

    ensure_dir(out_dir)?;
    let markers_path =
        cfg.paths.markers.clone().unwrap_or_else(|| out_dir.join("markers.trc"));
    if let Some(parent) = markers_path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let n = set.n_frames();
    println!(
        "triangulated {} frames x {} markers from {} cameras",
        n,
        set.labels.len(),
        cameras.len()
    );
    for (label, gaps) in set.gap_counts() {
        println!("  {label}: {gaps} gapped frames ({:.1}%)", 100.0 * gaps as f64 / n as f64);
    }
    write_file(&markers_path, write_trc(&set, None).as_bytes())
}

/// Lowpass the full recording, then restrict to the longest span where all
/// required markers are present, refiltering the restricted raw slice when
/// trimming or unrepaired required-marker gaps force it. Returns the working
/// set, the offset of its first frame in the input, and the labels left
/// unfiltered.
fn filter_and_trim(
    set: &MarkerTrajectorySet,
    cfg: &PipelineConfig,
    required: &[String],
) -> Result<(MarkerTrajectorySet, usize, Vec<String>), CliError> {
    let f = &cfg.filter;
    let run = |s: &MarkerTrajectorySet| {
        filter_trajectories(s, f.cutoff_hz, f.order, f.max_gap)
            .map_err(|e| CliError::stage("filtering", e))
    };
    let (filtered, flagged) = run(set)?;
    let required_refs: Vec<&str> = required.iter().map(String::as_str).collect();
    let span = filtered.dense_span(&required_refs).ok_or_else(|| CliError::Stage {
        stage: "filtering",
        message: format!(
            "no frame span where all required markers ({}) are present after gap repair",
            required.join(", ")
        ),
    })?;
    let required_flagged = |flagged: &[String]| -> Vec<String> {
        flagged.iter().filter(|l| required.contains(l)).cloned().collect()
    };
    if span == (0..set.n_frames()) && required_flagged(&flagged).is_empty() {
        return Ok((filtered, 0, flagged));
    }
    println!(
        "restricting analysis to frames {}..{} of {}",
        span.start,
        span.end,
        set.n_frames()
    );
    let (refiltered, reflagged) = run(&set.slice(span.clone()))?;
    let still = required_flagged(&reflagged);
    if !still.is_empty() {
        return Err(CliError::Stage {
            stage: "filtering",
            message: format!(
                "markers {} have unrepairable gaps inside the analysis span",
                still.join(", ")
            ),
        });
    }
    Ok((refiltered, span.start, reflagged))
}

/// Side a coordinate belongs to by suffix; None means both.
fn coordinate_side(name: &str) -> Option<Side> {
    if name.ends_with("_r") {
        Some(Side::Right)
    } else if name.ends_with("_l") {
        Some(Side::Left)
    } else {
        None
    }
}

fn load_model(cfg: &PipelineConfig) -> Result<SkeletonModel, CliError> {
    let Some(path) = cfg.paths.model.as_deref() else {
        return Ok(default_model());
    };
    let bytes = read_bytes(path, "model file")?;
    let model: SkeletonModel = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Input(format!("model file '{}': {e}", path.display())))?;
    model
        .validate()
        .map_err(|e| CliError::Input(format!("model file '{}': {e}", path.display())))?;
    Ok(model)
}

pub fn cmd_analyze(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let markers_path = cfg.paths.markers.as_deref().ok_or_else(|| {
        CliError::Input("analyze needs a marker file: set [paths] markers or pass --markers".into())
    })?;
    let text = read_text(markers_path, "marker file")?;
    let (set, trc_subject) = parse_trc(&text)
        .map_err(|e| CliError::Input(format!("marker file '{}': {e}", markers_path.display())))?;
    let sample_rate = set.sample_rate;

    let model = load_model(cfg)?;
    let correspondence = MarkerCorrespondence::identity(&model);
    let model = if let Some(static_path) = cfg.paths.static_trial.as_deref() {
        let text = read_text(static_path, "static trial")?;
        let (static_set, static_subject) = parse_trc(&text).map_err(|e| {
            CliError::Input(format!("static trial '{}': {e}", static_path.display()))
        })?;
        let subject = static_subject.or_else(|| trc_subject.clone()).ok_or_else(|| {
            CliError::Input(
                "model scaling needs subject info: add SubjectID, SubjectMass, and \
                 SubjectStature to the static trial TRC header"
                    .into(),
            )
        })?;
        let scaled = scale_model(&model, &static_set, &correspondence, &subject)
            .map_err(|e| CliError::stage("scaling", e))?;
        println!("scaled model to subject '{}' ({} m, {} kg)", subject.id, subject.stature_m, subject.mass_kg);
        scaled
    } else {
        println!("no static trial: using unscaled model");
        model
    };

    let configured_axis = match cfg.events.walking_axis {
        Some([x, y, z]) => {
            let axis = Vector3::new(x, y, z);
            let norm = axis.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(CliError::Input(format!(
                    "walking axis must be a nonzero finite vector, got [{x}, {y}, {z}]"
                )));
            }
            Some(axis / norm)
        }
        None => None,
    };

    let required: Vec<String> = REQUIRED_VIRTUAL
        .iter()
        .map(|virtual_name| {
            correspondence
                .pairs
                .iter()
                .find(|p| p.virtual_marker == *virtual_name)
                .map(|p| p.experimental_label.clone())
                .ok_or_else(|| CliError::Stage {
                    stage: "event detection",
                    message: format!("model provides no marker named '{virtual_name}'"),
                })
        })
        .collect::<Result<_, _>>()?;

    let (working, frame_offset, unfiltered) = filter_and_trim(&set, cfg, &required)?;
    for label in &unfiltered {
        println!("note: marker {label} kept unfiltered (unrepaired gaps)");
    }

    let settings = cfg.ik.settings();
    let results = solve_all(&model, &working, &correspondence, &settings, frame_offset)?;
    let poses: Vec<&gaitkit::PoseVector> = results.iter().map(|r| &r.pose).collect();

    let heel_left = dense_trajectory(&working, &required[0])
        .map_err(|e| CliError::stage("event detection", e))?;
    let heel_right = dense_trajectory(&working, &required[1])
        .map_err(|e| CliError::stage("event detection", e))?;
    let pelvis_labels: Vec<&str> = required[2..].iter().map(String::as_str).collect();
    let pelvis: Vec<Point3<f64>> = marker_midpoint(&working, &pelvis_labels)
        .map_err(|e| CliError::stage("event detection", e))?
        .into_iter()
        .collect::<Option<_>>()
        .expect("required markers are dense over the working span");

    let axis = match configured_axis {
        Some(axis) => axis,
        None => estimate_walking_axis(&pelvis)
            .map_err(|e| CliError::stage("event detection", e))?,
    };
    let events = detect_events(&heel_left, &heel_right, &pelvis, Some(axis), sample_rate)
        .map_err(|e| CliError::stage("event detection", e))?;
    println!("detected {} gait events", events.len());

    let cycles = match segment_cycles(&events, sample_rate) {
        Ok(cycles) if !cycles.cycles.is_empty() => cycles,
        Ok(_) | Err(EventError::NoCycles) => {
            return Err(CliError::Stage {
                stage: "cycle segmentation",
                message: "no complete gait cycles detected".into(),
            })
        }
        Err(e) => return Err(CliError::stage("cycle segmentation", e)),
    };
    let n_right = cycles.for_side(Side::Right).len();
    let n_left = cycles.for_side(Side::Left).len();
    println!(
        "segmented {} gait cycles ({n_right} right, {n_left} left)",
        cycles.cycles.len()
    );

    let records = spatiotemporal(&cycles, &heel_left, &heel_right, &axis)
        .map_err(|e| CliError::stage("parameters", e))?;

    // Per-coordinate normalized waveforms and per-cycle ROM. Sided
    // coordinates use cycles of their own side; side-free ones use all.
    let mut rom_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut waveform_map: BTreeMap<String, WaveformSummary> = BTreeMap::new();
    let mut waveform_rows: Vec<(String, usize, Side, usize, Vec<f64>)> = Vec::new();
    for name in model.coordinate_names() {
        let side = coordinate_side(&name);
        let mut normalized = Vec::new();
        let mut roms = Vec::new();
        for (cycle_index, cycle) in cycles.cycles.iter().enumerate() {
            if side.is_some_and(|s| s != cycle.side) {
                continue;
            }
            let wave: Vec<f64> = (cycle.start_frame()..=cycle.end_frame())
                .map(|f| poses[f].get(&name).expect("pose holds every model coordinate"))
                .collect();
            roms.push(rom(&wave).map_err(|e| CliError::stage("parameters", e))?);
            let norm = time_normalize(&wave).map_err(|e| CliError::stage("normalization", e))?;
            waveform_rows.push((
                name.clone(),
                cycle_index,
                cycle.side,
                frame_offset + cycle.start_frame(),
                norm.clone(),
            ));
            normalized.push(norm);
        }
        if normalized.is_empty() {
            continue;
        }
        waveform_map.insert(
            name.clone(),
            mean_sd_waveform(&normalized).map_err(|e| CliError::stage("normalization", e))?,
        );
        rom_map.insert(name, roms);
    }

    ensure_dir(out_dir)?;
    write_file(
        &out_dir.join("spatiotemporal.csv"),
        spatiotemporal_csv(&cycles.cycles, &records, frame_offset).as_bytes(),
    )?;
    write_file(
        &out_dir.join("joint_angles.csv"),
        joint_angles_csv(&poses, frame_offset, sample_rate).as_bytes(),
    )?;
    write_file(
        &out_dir.join("normalized_waveforms.csv"),
        waveforms_csv(&waveform_rows).as_bytes(),
    )?;
    for (coordinate, file, y_label) in WAVEFORM_PLOTS {
        let summary = waveform_map.get(coordinate).ok_or_else(|| CliError::Stage {
            stage: "plots",
            message: format!("no cycles produced a waveform for coordinate '{coordinate}'"),
        })?;
        let title = format!("{coordinate}: mean +/- 1 SD over {} cycles", summary.n_cycles);
        write_file(
            &out_dir.join(file),
            svg::mean_sd_plot(&title, y_label, &summary.mean, &summary.sd).as_bytes(),
        )?;
    }

    let summary = AnalysisSummary {
        sample_rate,
        frame_offset,
        n_frames: working.n_frames(),
        walking_axis: axis.into(),
        events: events
            .iter()
            .map(|e| event_record(e, frame_offset, sample_rate))
            .collect(),
        cycles: cycles
            .cycles
            .iter()
            .map(|c| CycleRecord {
                side: c.side,
                start_frame: frame_offset + c.start_frame(),
                end_frame: frame_offset + c.end_frame(),
                contralateral_frame: frame_offset + c.contralateral.frame_index,
            })
            .collect(),
        parameters: records.iter().map(parameter_record).collect(),
        rom: rom_map,
        waveforms: waveform_map,
    };
    write_file(&out_dir.join("analysis.json"), &summary.to_bytes())
}

fn solve_all(
    model: &SkeletonModel,
    working: &MarkerTrajectorySet,
    correspondence: &MarkerCorrespondence,
    settings: &IkSettings,
    frame_offset: usize,
) -> Result<Vec<IkFrameResult>, CliError> {
    let results = solve_trajectory(model, working, correspondence, settings)
        .map_err(|e| CliError::stage("inverse kinematics", e))?;
    let mut out = Vec::with_capacity(results.len());
    let mut rms_sum = 0.0;
    let mut rms_max: f64 = 0.0;
    for (i, result) in results.into_iter().enumerate() {
        let result = result.ok_or_else(|| CliError::Stage {
            stage: "inverse kinematics",
            message: format!(
                "frame {}: too few markers to constrain the pose",
                frame_offset + i
            ),
        })?;
        rms_sum += result.rms_error;
        rms_max = rms_max.max(result.rms_error);
        out.push(result);
    }
    println!(
        "solved {} frames (marker RMS mean {:.2} mm, max {:.2} mm)",
        out.len(),
        1e3 * rms_sum / out.len().max(1) as f64,
        1e3 * rms_max
    );
    Ok(out)
}

fn spatiotemporal_csv(
    cycles: &[GaitCycle],
    records: &[SpatiotemporalRecord],
    frame_offset: usize,
) -> String {
    let mut out = String::from(
        "cycle,side,start_frame,end_frame,stride_time_s,stride_length_m,step_time_s,step_length_m\n",
    );
    for (i, (cycle, record)) in cycles.iter().zip(records).enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            record.side.label(),
            frame_offset + cycle.start_frame(),
            frame_offset + cycle.end_frame(),
            record.stride_time,
            record.stride_length,
            record.step_time,
            record.step_length,
        );
    }
    out
}

fn joint_angles_csv(
    poses: &[&gaitkit::PoseVector],
    frame_offset: usize,
    sample_rate: f64,
) -> String {
    let mut out = String::from("frame,time_s");
    for name in &poses[0].names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (i, pose) in poses.iter().enumerate() {
        let frame = frame_offset + i;
        let _ = write!(out, "{frame},{:.6}", frame as f64 / sample_rate);
        for value in &pose.values {
            let _ = write!(out, ",{value:.6}");
        }
        out.push('\n');
    }
    out
}

fn waveforms_csv(rows: &[(String, usize, Side, usize, Vec<f64>)]) -> String {
    let mut out = String::from("coordinate,cycle,side,start_frame");
    for p in 0..gaitkit::events::NORMALIZED_SAMPLES {
        let _ = write!(out, ",p{p}");
    }
    out.push('\n');
    for (coordinate, cycle, side, start_frame, values) in rows {
        let _ = write!(out, "{coordinate},{cycle},{},{start_frame}", side.label());
        for value in values {
            let _ = write!(out, ",{value:.6}");
        }
        out.push('\n');
    }
    out
}

fn pairing_error(name: &str, err: StatsError) -> CliError {
    match err {
        StatsError::TooShort { required, actual } => CliError::Stage {
            stage: "pairing",
            message: format!("'{name}' needs at least {required} paired cycles, got {actual}"),
        },
        StatsError::Pairing { reference, candidate } => CliError::Stage {
            stage: "pairing",
            message: format!(
                "'{name}': reference has {reference} cycles, candidate has {candidate}"
            ),
        },
        other => CliError::stage("statistics", other),
    }
}

fn report_row(name: String, stats: gaitkit::AgreementStats) -> ReportRow {
    ReportRow {
        parameter: name,
        n: stats.n,
        pearson_r: stats.pearson_r,
        mae: stats.mae,
        bias: stats.bias,
        loa_low: stats.loa_low,
        loa_high: stats.loa_high,
    }
}

pub fn cmd_compare(
    reference_path: &Path,
    candidate_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let reference = AnalysisSummary::read(reference_path)?;
    let candidate = AnalysisSummary::read(candidate_path)?;

    let counts: Vec<usize> = [Side::Right, Side::Left]
        .iter()
        .flat_map(|&s| [reference.side_count(s), candidate.side_count(s)])
        .collect();
    if counts[0] != counts[1] || counts[2] != counts[3] {
        return Err(CliError::Stage {
            stage: "pairing",
            message: format!(
                "cycle counts differ: reference has {} right and {} left cycles, \
                 candidate has {} right and {} left",
                counts[0], counts[2], counts[1], counts[3]
            ),
        });
    }

    let mut rows = Vec::new();
    for side in [Side::Right, Side::Left] {
        for metric in Metric::ALL {
            let name = format!("{}_{}", metric.name(), side.label());
            let ref_series = reference.parameter_series(side, metric);
            let cand_series = candidate.parameter_series(side, metric);
            let stats = compare_rom_sets(&ref_series, &cand_series)
                .map_err(|e| pairing_error(&name, e))?;
            rows.push(report_row(name, stats));
        }
    }

    let mut ba_plots: Vec<(String, BlandAltman)> = Vec::new();
    for (coordinate, ref_values) in &reference.rom {
        let Some(cand_values) = candidate.rom.get(coordinate) else {
            println!("note: coordinate '{coordinate}' absent from candidate; skipped");
            continue;
        };
        let name = format!("rom_{coordinate}");
        let stats =
            compare_rom_sets(ref_values, cand_values).map_err(|e| pairing_error(&name, e))?;
        let ba =
            bland_altman(cand_values, ref_values).map_err(|e| pairing_error(&name, e))?;
        rows.push(report_row(name, stats));
        ba_plots.push((coordinate.clone(), ba));
    }
    for coordinate in candidate.rom.keys() {
        if !reference.rom.contains_key(coordinate) {
            println!("note: coordinate '{coordinate}' absent from reference; skipped");
        }
    }

    println!("{:<28} {:>3} {:>10} {:>12} {:>12}", "parameter", "n", "r", "mae", "bias");
    for row in &rows {
        let r = row
            .pearson_r
            .map_or_else(|| "undefined".to_string(), |r| format!("{r:.6}"));
        println!(
            "{:<28} {:>3} {:>10} {:>12.6} {:>12.6}",
            row.parameter, row.n, r, row.mae, row.bias
        );
    }

    let report = ComparisonReport { parameters: rows };
    ensure_dir(out_dir)?;
    write_file(&out_dir.join("comparison.csv"), &write_report(&report, ReportFormat::Csv))?;
    let json = write_report(&report, ReportFormat::Json);
    let back = parse_report_json(&json)
        .map_err(|e| CliError::stage("report", e))?;
    if back != report {
        return Err(CliError::Stage {
            stage: "report",
            message: "serialized report failed its own round trip".into(),
        });
    }
    write_file(&out_dir.join("comparison.json"), &json)?;

    for (coordinate, ba) in &ba_plots {
        let unit = if coordinate.starts_with("pelvis_t") { "m" } else { "deg" };
        let plot = svg::bland_altman_plot(
            &format!("ROM agreement: {coordinate}"),
            &format!("ROM difference, candidate - reference ({unit})"),
            &ba.means,
            &ba.diffs,
            ba.bias,
            ba.loa_low,
            ba.loa_high,
        );
        write_file(&out_dir.join(format!("bland_altman_{coordinate}.svg")), plot.as_bytes())?;
    }
    Ok(())
}
