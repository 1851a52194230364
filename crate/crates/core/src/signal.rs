//! Temporal filtering and gap handling for scalar time series.
//!
//! The low-pass filter is a Butterworth design as cascaded second-order
//! sections, applied forward and backward for zero phase. Edges are handled
//! by odd-reflection padding of `3 * order` samples, so short walking trials
//! filter without startup transients.

use std::f64::consts::PI;

use thiserror::Error;

use crate::MarkerTrajectorySet;

/// Default marker-data cutoff in Hz.
pub const DEFAULT_CUTOFF_HZ: f64 = 6.0;
/// Default filter order (even, two second-order sections).
pub const DEFAULT_FILTER_ORDER: usize = 4;
/// Default longest interpolatable gap in samples.
pub const DEFAULT_MAX_GAP: usize = 10;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid filter parameter: {0}")]
    Parameter(String),
    #[error("series has a gap at sample {index}; interpolate before filtering")]
    Gap { index: usize },
    #[error("series length {len} too short, need at least {min} samples")]
    TooShort { len: usize, min: usize },
}

/// Uniformly sampled scalar series; absent samples are gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub sample_rate: f64,
    pub values: Vec<Option<f64>>,
}

impl TimeSeries {
    pub fn from_values(sample_rate: f64, values: Vec<f64>) -> Self {
        Self {
            sample_rate,
            values: values.into_iter().map(Some).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One digital biquad, denominator normalized to a0 = 1.
#[derive(Debug, Clone, Copy)]
struct Sos {
    b: [f64; 3],
    a1: f64,
    a2: f64,
}

/// Butterworth low-pass prototype sections through the bilinear transform
/// with frequency prewarp. Every section has DC gain exactly 1.
fn design_lowpass(cutoff: f64, sample_rate: f64, order: usize) -> Result<Vec<Sos>, SignalError> {
    if !(sample_rate > 0.0) {
        return Err(SignalError::Parameter(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    if !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
        return Err(SignalError::Parameter(format!(
            "cutoff {cutoff} Hz outside (0, Nyquist = {}) for sample rate {sample_rate} Hz",
            sample_rate / 2.0
        )));
    }
    if order == 0 || order % 2 != 0 {
        return Err(SignalError::Parameter(format!(
            "order must be a positive even integer, got {order}"
        )));
    }
    let k = (PI * cutoff / sample_rate).tan();
    Ok((0..order / 2)
        .map(|i| {
            let phi = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let zeta = phi.sin();
            let a0 = 1.0 + 2.0 * zeta * k + k * k;
            Sos {
                b: [k * k / a0, 2.0 * k * k / a0, k * k / a0],
                a1: 2.0 * (k * k - 1.0) / a0,
                a2: (1.0 - 2.0 * zeta * k + k * k) / a0,
            }
        })
        .collect())
}

/// Direct-form II transposed filter pass, initialized at the steady state
/// for a constant input equal to the first sample. A constant series passes
/// through unchanged.
fn sos_pass(s: &Sos, x: &[f64]) -> Vec<f64> {
    let mut s1 = (1.0 - s.b[0]) * x[0];
    let mut s2 = (s.b[2] - s.a2) * x[0];
    x.iter()
        .map(|&xi| {
            let y = s.b[0] * xi + s1;
            s1 = s.b[1] * xi - s.a1 * y + s2;
            s2 = s.b[2] * xi - s.a2 * y;
            y
        })
        .collect()
}

/// Zero-phase Butterworth low-pass. The effective magnitude response is the
/// square of the single-pass response, so the cutoff attenuates to 0.5.
pub fn lowpass_zero_phase(
    series: &TimeSeries,
    cutoff: f64,
    order: usize,
) -> Result<TimeSeries, SignalError> {
    let sections = design_lowpass(cutoff, series.sample_rate, order)?;
    let mut x = Vec::with_capacity(series.len());
    for (i, v) in series.values.iter().enumerate() {
        match v {
            Some(value) => x.push(*value),
            None => return Err(SignalError::Gap { index: i }),
        }
    }
    let pad = 3 * order;
    let n = x.len();
    if n <= pad {
        return Err(SignalError::TooShort { len: n, min: pad + 1 });
    }

    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in 0..pad {
        ext.push(2.0 * x[0] - x[pad - i]);
    }
    ext.extend_from_slice(&x);
    for i in 0..pad {
        ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
    }

    let mut y = ext;
    for s in &sections {
        y = sos_pass(s, &y);
    }
    y.reverse();
    for s in &sections {
        y = sos_pass(s, &y);
    }
    y.reverse();

    Ok(TimeSeries {
        sample_rate: series.sample_rate,
        values: y[pad..pad + n].iter().map(|&v| Some(v)).collect(),
    })
}

/// Lagrange interpolation through `nodes` evaluated at `t`.
fn lagrange(nodes: &[(f64, f64)], t: f64) -> f64 {
    let mut sum = 0.0;
    for (i, &(ti, vi)) in nodes.iter().enumerate() {
        let mut basis = 1.0;
        for (j, &(tj, _)) in nodes.iter().enumerate() {
            if i != j {
                basis *= (t - tj) / (ti - tj);
            }
        }
        sum += vi * basis;
    }
    sum
}

/// Fill interior gaps of run length ≤ `max_gap` by polynomial interpolation
/// through the two nearest present samples on each side (cubic when all four
/// exist). Boundary gaps and longer runs stay absent.
pub fn interpolate_gaps(series: &TimeSeries, max_gap: usize) -> TimeSeries {
    let v = &series.values;
    let n = v.len();
    let mut out = v.clone();
    let mut i = 0;
    while i < n {
        if v[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && v[i].is_none() {
            i += 1;
        }
        let end = i;
        if start == 0 || end == n || end - start > max_gap {
            continue;
        }
        let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(4);
        let mut found = 0;
        let mut j = start;
        while j > 0 && found < 2 {
            j -= 1;
            if let Some(value) = v[j] {
                nodes.push((j as f64, value));
                found += 1;
            }
        }
        let mut found = 0;
        let mut j = end;
        while j < n && found < 2 {
            if let Some(value) = v[j] {
                nodes.push((j as f64, value));
                found += 1;
            }
            j += 1;
        }
        for g in start..end {
            out[g] = Some(lagrange(&nodes, g as f64));
        }
    }
    TimeSeries {
        sample_rate: series.sample_rate,
        values: out,
    }
}

/// Per marker, per axis: interpolate gaps, then low-pass. Markers whose gaps
/// cannot be fully repaired pass through untouched and are returned in the
/// flagged list.
pub fn filter_trajectories(
    set: &MarkerTrajectorySet,
    cutoff: f64,
    order: usize,
    max_gap: usize,
) -> Result<(MarkerTrajectorySet, Vec<String>), SignalError> {
    let mut out = set.clone();
    let mut flagged = Vec::new();
    for (m, label) in set.labels.iter().enumerate() {
        let axes: Vec<TimeSeries> = (0..3)
            .map(|axis| TimeSeries {
                sample_rate: set.sample_rate,
                values: set.frames.iter().map(|f| f[m].map(|p| p[axis])).collect(),
            })
            .collect();
        let filled: Vec<TimeSeries> = axes
            .iter()
            .map(|s| interpolate_gaps(s, max_gap))
            .collect();
        if filled
            .iter()
            .any(|s| s.values.iter().any(Option::is_none))
        {
            flagged.push(label.clone());
            continue;
        }
        let mut filtered = Vec::with_capacity(3);
        for axis in &filled {
            filtered.push(lowpass_zero_phase(axis, cutoff, order)?);
        }
        for (f, frame) in out.frames.iter_mut().enumerate() {
            frame[m] = Some(nalgebra::Point3::new(
                filtered[0].values[f].expect("gap-free after filtering"),
                filtered[1].values[f].expect("gap-free after filtering"),
                filtered[2].values[f].expect("gap-free after filtering"),
            ));
        }
    }
    Ok((out, flagged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    /// Independently computed zero-phase output for a 30-sample input
    /// (order 4, cutoff 6 Hz at 100 Hz, reflection pad 12).
    const FIXTURE_X: [f64; 30] = [
        0.280472, 0.305774, 0.505041, 0.779997, 0.907475, 1.097915, 0.889482, 0.36921, 0.193062,
        0.068187, -0.035982, -0.613375, -1.113517, -0.966562, -0.736614, -0.74591, -0.68704,
        -0.671463, 0.064349, 0.580606, 0.80023, 0.667144, 0.873563, 0.979107, 1.055961, 0.706444,
        0.190694, -0.202783, -0.258117, -0.37022,
    ];
    const FIXTURE_Y: [f64; 30] = [
        0.31335328018035175,
        0.4520460675140879,
        0.5663196552051547,
        0.6389398673732318,
        0.6572475136423543,
        0.6147743983800237,
        0.5122088684220645,
        0.3575413855715355,
        0.16532623464044635,
        -0.044876632348432796,
        -0.25070323812427603,
        -0.42957740894507906,
        -0.561391103058242,
        -0.6309445109749533,
        -0.6298276059991937,
        -0.5574928607149902,
        -0.4213837942327007,
        -0.23610946653173384,
        -0.021767910305666712,
        0.19837476814751553,
        0.40054840022582594,
        0.56312681122358,
        0.6689117760957857,
        0.7067823726563883,
        0.6725482314007128,
        0.5689554925292377,
        0.4049018694274349,
        0.19402282272040233,
        -0.0471060932693067,
        -0.30087829897429197,
    ];

    #[test]
    fn matches_independent_zero_phase_fixture() {
        let series = TimeSeries::from_values(100.0, FIXTURE_X.to_vec());
        let out = lowpass_zero_phase(&series, 6.0, 4).unwrap();
        for (got, want) in out.values.iter().zip(FIXTURE_Y) {
            assert!(
                (got.unwrap() - want).abs() < 1e-9,
                "got {got:?}, want {want}"
            );
        }
    }

    #[test]
    fn constant_series_is_invariant() {
        let series = TimeSeries::from_values(100.0, vec![3.7; 40]);
        let out = lowpass_zero_phase(&series, 6.0, 4).unwrap();
        for v in &out.values {
            assert!((v.unwrap() - 3.7).abs() < 1e-9);
        }
    }

    #[test]
    fn cutoff_at_or_above_nyquist_is_error() {
        let series = TimeSeries::from_values(100.0, vec![0.0; 40]);
        assert!(matches!(
            lowpass_zero_phase(&series, 50.0, 4),
            Err(SignalError::Parameter(_))
        ));
        assert!(matches!(
            lowpass_zero_phase(&series, 100.0, 4),
            Err(SignalError::Parameter(_))
        ));
    }

    #[test]
    fn odd_order_is_error() {
        let series = TimeSeries::from_values(100.0, vec![0.0; 40]);
        assert!(matches!(
            lowpass_zero_phase(&series, 6.0, 3),
            Err(SignalError::Parameter(_))
        ));
    }

    #[test]
    fn gap_is_error_with_index() {
        let mut series = TimeSeries::from_values(100.0, vec![1.0; 40]);
        series.values[7] = None;
        match lowpass_zero_phase(&series, 6.0, 4) {
            Err(SignalError::Gap { index }) => assert_eq!(index, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_series_is_error() {
        let series = TimeSeries::from_values(100.0, vec![1.0; 12]);
        assert!(matches!(
            lowpass_zero_phase(&series, 6.0, 4),
            Err(SignalError::TooShort { len: 12, min: 13 })
        ));
    }

    #[test]
    fn cutoff_sinusoid_attenuates_to_half() {
        let fs = 100.0;
        let fc = 6.0;
        let n = 2000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * fc * i as f64 / fs).sin())
            .collect();
        let out = lowpass_zero_phase(&TimeSeries::from_values(fs, x.clone()), fc, 4).unwrap();
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let xs = &x[300..n - 300];
        let ys: Vec<f64> = out.values[300..n - 300]
            .iter()
            .map(|v| v.unwrap())
            .collect();
        let ratio = rms(&ys) / rms(xs);
        assert!((ratio - 0.5).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn symmetric_pulse_stays_symmetric() {
        let n = 101;
        let c = 50;
        let x: Vec<f64> = (0..n)
            .map(|i| (-((i as f64 - c as f64) / 6.0).powi(2)).exp())
            .collect();
        let out = lowpass_zero_phase(&TimeSeries::from_values(100.0, x), 6.0, 4).unwrap();
        let y: Vec<f64> = out.values.iter().map(|v| v.unwrap()).collect();
        let peak = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, c);
        for k in 1..=20 {
            assert!(
                (y[c + k] - y[c - k]).abs() < 1e-6,
                "asymmetry at offset {k}: {}",
                (y[c + k] - y[c - k]).abs()
            );
        }
    }

    #[test]
    fn filtering_is_linear() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos() * 2.0).collect();
        let combo: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(a, b)| 2.5 * a - 1.25 * b)
            .collect();
        let f = |v: Vec<f64>| {
            lowpass_zero_phase(&TimeSeries::from_values(100.0, v), 6.0, 4)
                .unwrap()
                .values
        };
        let fx = f(x);
        let fy = f(y);
        let fc = f(combo);
        for i in 0..n {
            let expected = 2.5 * fx[i].unwrap() - 1.25 * fy[i].unwrap();
            assert!((fc[i].unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_ramp_single_gap_recovers_midpoint() {
        let mut series = TimeSeries::from_values(100.0, vec![1.0, 2.0, 3.0]);
        series.values[1] = None;
        let out = interpolate_gaps(&series, 5);
        assert!((out.values[1].unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gap_longer_than_max_is_unchanged() {
        let mut series = TimeSeries::from_values(100.0, (0..20).map(|i| i as f64).collect());
        for i in 5..9 {
            series.values[i] = None;
        }
        let out = interpolate_gaps(&series, 3);
        assert_eq!(out.values[5], None);
        assert_eq!(out.values[8], None);
        let filled = interpolate_gaps(&series, 4);
        assert!(filled.values[5].is_some());
    }

    #[test]
    fn cubic_samples_recover_exactly() {
        let poly = |t: f64| 0.5 * t * t * t - 2.0 * t * t + 3.0 * t - 7.0;
        let mut series = TimeSeries::from_values(100.0, (0..12).map(|i| poly(i as f64)).collect());
        for i in 4..7 {
            series.values[i] = None;
        }
        let out = interpolate_gaps(&series, 5);
        for i in 4..7 {
            assert!(
                (out.values[i].unwrap() - poly(i as f64)).abs() < 1e-9,
                "sample {i}"
            );
        }
    }

    #[test]
    fn boundary_gaps_stay_absent() {
        let mut series = TimeSeries::from_values(100.0, (0..10).map(|i| i as f64).collect());
        series.values[0] = None;
        series.values[9] = None;
        let out = interpolate_gaps(&series, 5);
        assert_eq!(out.values[0], None);
        assert_eq!(out.values[9], None);
    }

    fn noisy_set() -> MarkerTrajectorySet {
        let mut set = MarkerTrajectorySet::new(100.0, vec!["A".to_string(), "B".to_string()]);
        for i in 0..80 {
            let t = i as f64 / 100.0;
            let clean = (2.0 * PI * 1.5 * t).sin();
            let noise = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
            set.push_frame(vec![
                Some(Point3::new(clean + 0.2 * noise, 0.0, 1.0)),
                None,
            ]);
        }
        set
    }

    #[test]
    fn trajectories_filtered_and_fully_absent_marker_flagged() {
        let set = noisy_set();
        let (out, flagged) = filter_trajectories(&set, 6.0, 4, 10).unwrap();
        assert_eq!(flagged, vec!["B".to_string()]);
        assert!(out.frames.iter().all(|f| f[1].is_none()));

        let clean: Vec<f64> = (0..80)
            .map(|i| (2.0 * PI * 1.5 * i as f64 / 100.0).sin())
            .collect();
        let rms = |values: Vec<f64>| {
            (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
        };
        let raw_err = rms(set
            .frames
            .iter()
            .zip(&clean)
            .map(|(f, c)| f[0].unwrap().x - c)
            .collect());
        let filt_err = rms(out
            .frames
            .iter()
            .zip(&clean)
            .map(|(f, c)| f[0].unwrap().x - c)
            .collect());
        assert!(
            filt_err < raw_err,
            "filtered {filt_err} not below raw {raw_err}"
        );
    }

    #[test]
    fn gap_within_max_is_repaired_then_filtered() {
        let mut set = MarkerTrajectorySet::new(100.0, vec!["A".to_string()]);
        for i in 0..60 {
            let t = i as f64 / 100.0;
            let p = Point3::new((2.0 * PI * 1.0 * t).sin(), t, 0.5);
            set.push_frame(vec![if (20..23).contains(&i) { None } else { Some(p) }]);
        }
        let (out, flagged) = filter_trajectories(&set, 6.0, 4, 10).unwrap();
        assert!(flagged.is_empty());
        assert!(out.frames.iter().all(|f| f[0].is_some()));
    }
}
