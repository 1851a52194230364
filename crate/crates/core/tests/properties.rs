//! Property-based checks: distortion inversion, weighted triangulation,
//! TRC serialization, agreement statistics, gap repair, and cycle
//! normalization.

use gaitkit::camera::{triangulate, CameraModel, Observation};
use gaitkit::events::time_normalize;
use gaitkit::io::{parse_trc, write_trc, MarkerTrajectorySet, SubjectInfo};
use gaitkit::signal::{interpolate_gaps, TimeSeries};
use gaitkit::stats::{bland_altman, mae, pearson};
use gaitkit::synth::default_camera_rig;
use nalgebra::{Matrix3, Point3, Vector3};
use proptest::prelude::*;

fn test_camera(k1: f64, k2: f64) -> CameraModel {
    CameraModel {
        id: "prop".into(),
        intrinsics: Matrix3::new(1000.0, 0.0, 640.0, 0.0, 1000.0, 360.0, 0.0, 0.0, 1.0),
        distortion: (k1, k2),
        rotation: Matrix3::identity(),
        translation: Vector3::zeros(),
    }
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

fn arb_slot() -> impl Strategy<Value = Option<Point3<f64>>> {
    prop_oneof![
        1 => Just(None),
        4 => (-10.0f64..10.0, 0.0f64..2.0, -5.0f64..5.0)
            .prop_map(|(x, y, z)| Some(Point3::new(x, y, z))),
    ]
}

fn paired_vec() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

proptest! {
    #[test]
    fn undistort_inverts_the_forward_distortion(
        k1 in -0.05f64..0.05,
        k2 in -0.005f64..0.005,
        nx in -0.35f64..0.35,
        ny in -0.35f64..0.35,
        z in 1.0f64..5.0,
    ) {
        let cam = test_camera(k1, k2);
        let pixel = cam.project(&Point3::new(nx * z, ny * z, z)).unwrap();
        let ideal = cam.undistort(pixel).unwrap();
        prop_assert!((ideal.0 - (1000.0 * nx + 640.0)).abs() < 1e-6);
        prop_assert!((ideal.1 - (1000.0 * ny + 360.0)).abs() < 1e-6);
    }

    #[test]
    fn triangulation_is_invariant_to_confidence_scale(
        dx in -0.6f64..0.6,
        dy in -0.4f64..0.4,
        dz in -0.6f64..0.6,
        confs in prop::collection::vec(0.2f64..1.0, 4),
        scale in 0.25f64..4.0,
    ) {
        let center = Point3::new(0.0, 1.0, 0.0);
        let cameras = default_camera_rig(center);
        let point = Point3::new(center.x + dx, center.y + dy, center.z + dz);
        let pixels: Vec<(f64, f64)> =
            cameras.iter().map(|c| c.project(&point).unwrap()).collect();
        let observations = |k: f64| -> Vec<Observation<'_>> {
            cameras
                .iter()
                .zip(&pixels)
                .zip(&confs)
                .map(|((camera, &pixel), &c)| Observation {
                    camera,
                    point: pixel,
                    confidence: c * k,
                })
                .collect()
        };
        let base = triangulate(&observations(1.0), 0.0).unwrap();
        let scaled = triangulate(&observations(scale), 0.0).unwrap();
        prop_assert!((base.point - scaled.point).norm() < 1e-9);
        prop_assert_eq!(base.views_used, scaled.views_used);
        prop_assert!((base.point - point).norm() < 1e-6);
    }

    #[test]
    fn trc_round_trip_preserves_everything(
        n_markers in 1usize..5,
        n_frames in 1usize..12,
        rate in 50.0f64..240.0,
        with_subject in any::<bool>(),
        seed_rows in prop::collection::vec(prop::collection::vec(arb_slot(), 5), 12),
    ) {
        let labels: Vec<String> = (0..n_markers).map(|i| format!("M{i}")).collect();
        let mut set = MarkerTrajectorySet::new(rate, labels);
        for row in seed_rows.iter().take(n_frames) {
            set.push_frame(row.iter().take(n_markers).cloned().collect());
        }
        let subject = with_subject
            .then(|| SubjectInfo::new("s01", 70.5, 1.76).unwrap());
        let text = write_trc(&set, subject.as_ref());
        let (parsed, parsed_subject) = parse_trc(&text).unwrap();
        prop_assert_eq!(parsed, set);
        prop_assert_eq!(parsed_subject, subject);
    }

    #[test]
    fn bland_altman_bias_is_antisymmetric((a, b) in paired_vec()) {
        let ab = bland_altman(&a, &b).unwrap();
        let ba = bland_altman(&b, &a).unwrap();
        prop_assert!((ab.bias + ba.bias).abs() <= 1e-12 * (1.0 + ab.bias.abs()));
        prop_assert!((ab.sd_diff - ba.sd_diff).abs() <= 1e-12 * (1.0 + ab.sd_diff.abs()));
    }

    #[test]
    fn limits_of_agreement_sit_at_196_sd((a, b) in paired_vec()) {
        let s = bland_altman(&a, &b).unwrap();
        prop_assert!((s.loa_high - s.bias - 1.96 * s.sd_diff).abs() <= 1e-12 * (1.0 + s.sd_diff));
        prop_assert!((s.bias - s.loa_low - 1.96 * s.sd_diff).abs() <= 1e-12 * (1.0 + s.sd_diff));
    }

    #[test]
    fn mae_is_zero_exactly_on_identical_inputs((a, b) in paired_vec()) {
        prop_assert_eq!(mae(&a, &a).unwrap(), 0.0);
        let m = mae(&a, &b).unwrap();
        prop_assert!(m >= 0.0);
        if a != b {
            prop_assert!(m > 0.0);
        }
    }

    #[test]
    fn pearson_is_affine_invariant(
        (a, b) in paired_vec(),
        alpha in prop_oneof![-4.0f64..-0.5, 0.5f64..4.0],
        beta in -50.0f64..50.0,
    ) {
        prop_assume!(spread(&a) > 1e-3 && spread(&b) > 1e-3);
        let r = pearson(&a, &b).unwrap();
        let transformed: Vec<f64> = b.iter().map(|v| alpha * v + beta).collect();
        let rt = pearson(&a, &transformed).unwrap();
        prop_assert!((rt - alpha.signum() * r).abs() < 1e-9);
    }

    #[test]
    fn gap_repair_reproduces_cubic_signals(
        c0 in -5.0f64..5.0,
        c1 in -2.0f64..2.0,
        c2 in -0.5f64..0.5,
        c3 in -0.05f64..0.05,
        n in 12usize..40,
        gap_len in 1usize..5,
        start_seed in 0usize..1000,
    ) {
        let cubic = |i: usize| {
            let t = i as f64;
            c0 + c1 * t + c2 * t * t + c3 * t * t * t
        };
        // Two present samples on each side make the repair exactly cubic.
        let gap_start = 2 + start_seed % (n - gap_len - 3);
        let values: Vec<Option<f64>> = (0..n)
            .map(|i| {
                (!(gap_start..gap_start + gap_len).contains(&i)).then(|| cubic(i))
            })
            .collect();
        let repaired = interpolate_gaps(&TimeSeries { sample_rate: 100.0, values }, 4);
        for i in gap_start..gap_start + gap_len {
            let got = repaired.values[i].expect("gap within limit should repair");
            let expect = cubic(i);
            prop_assert!(
                (got - expect).abs() < 1e-6 * (1.0 + expect.abs()),
                "index {} got {} expected {}", i, got, expect
            );
        }
    }

    #[test]
    fn normalization_yields_101_samples_with_exact_endpoints(
        wave in prop::collection::vec(-50.0f64..50.0, 4..200),
    ) {
        let out = time_normalize(&wave).unwrap();
        prop_assert_eq!(out.len(), 101);
        prop_assert!((out[0] - wave[0]).abs() < 1e-9);
        prop_assert!((out[100] - wave[wave.len() - 1]).abs() < 1e-9);
    }

    #[test]
    fn normalization_reproduces_linear_ramps(
        n in 4usize..200,
        slope in -5.0f64..5.0,
        intercept in -10.0f64..10.0,
    ) {
        let wave: Vec<f64> = (0..n).map(|i| intercept + slope * i as f64).collect();
        let out = time_normalize(&wave).unwrap();
        let last = intercept + slope * (n - 1) as f64;
        for (i, v) in out.iter().enumerate() {
            let expect = intercept + (last - intercept) * i as f64 / 100.0;
            prop_assert!(
                (v - expect).abs() < 1e-9 * (1.0 + expect.abs()),
                "sample {} got {} expected {}", i, v, expect
            );
        }
    }
}
