//! Hand-rolled SVG plots: mean±SD waveform bands and Bland-Altman scatter.
//! All numbers are written with fixed formatting, so identical inputs give
//! identical bytes, and every plot embeds its source data as a CSV comment.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

const BAND_FILL: &str = "#c6dbef";
const LINE_STROKE: &str = "#2171b5";
const BIAS_STROKE: &str = "#d94801";
const LOA_STROKE: &str = "#636363";

/// Linear data-to-pixel mapping for one plot.
struct Axes {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Axes {
    /// Pads each range by 5%, widening zero spans to ±1 so flat data still
    /// gets a finite scale.
    fn padded(x: (f64, f64), y: (f64, f64)) -> Axes {
        let pad = |(lo, hi): (f64, f64)| {
            let span = hi - lo;
            if span > 0.0 {
                (lo - 0.05 * span, hi + 0.05 * span)
            } else {
                (lo - 1.0, hi + 1.0)
            }
        };
        let (x_lo, x_hi) = pad(x);
        let (y_lo, y_hi) = pad(y);
        Axes { x_lo, x_hi, y_lo, y_hi }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (v - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn y_ticks(&self) -> Vec<f64> {
        (0..=4)
            .map(|i| self.y_lo + (self.y_hi - self.y_lo) * i as f64 / 4.0)
            .collect()
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick label: fixed 4 decimals with trailing zeros trimmed.
fn tick(v: f64) -> String {
    let mut s = format!("{v:.4}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Document head: size, data comment, background, title, axis frame with
/// ticks and labels. `data_csv` must not contain `--` (numeric CSV cannot).
fn scaffold(
    title: &str,
    x_label: &str,
    y_label: &str,
    axes: &Axes,
    x_ticks: &[f64],
    data_csv: &str,
) -> String {
    debug_assert!(!data_csv.contains("--"), "comment-ending sequence in data");
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<!-- data\n{data_csv}-->");
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        px(WIDTH / 2.0),
        xml_escape(title)
    );
    for &t in x_ticks {
        let x = px(axes.x(t));
        let _ = writeln!(
            s,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            px(MARGIN_TOP),
            px(HEIGHT - MARGIN_BOTTOM)
        );
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            px(HEIGHT - MARGIN_BOTTOM + 18.0),
            tick(t)
        );
    }
    for t in axes.y_ticks() {
        let y = px(axes.y(t));
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>",
            px(MARGIN_LEFT),
            px(WIDTH - MARGIN_RIGHT)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" dy=\"4\">{}</text>",
            px(MARGIN_LEFT - 8.0),
            tick(t)
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        px(MARGIN_LEFT),
        px(MARGIN_TOP),
        px(WIDTH - MARGIN_LEFT - MARGIN_RIGHT),
        px(HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        px((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        px(HEIGHT - 12.0),
        xml_escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        px(HEIGHT / 2.0),
        px(HEIGHT / 2.0),
        xml_escape(y_label)
    );
    s
}

/// Mean waveform over the gait cycle with a ±1 SD band. `mean` and `sd`
/// share a length of at least 2 and span 0..100% evenly.
pub fn mean_sd_plot(title: &str, y_label: &str, mean: &[f64], sd: &[f64]) -> String {
    assert_eq!(mean.len(), sd.len());
    assert!(mean.len() >= 2);
    let percent =
        |i: usize| 100.0 * i as f64 / (mean.len() - 1) as f64;
    let lo = mean.iter().zip(sd).map(|(m, s)| m - s).fold(f64::INFINITY, f64::min);
    let hi = mean.iter().zip(sd).map(|(m, s)| m + s).fold(f64::NEG_INFINITY, f64::max);
    let axes = Axes::padded((0.0, 100.0), (lo, hi));

    let mut csv = String::from("percent,mean,sd\n");
    for (i, (m, s)) in mean.iter().zip(sd).enumerate() {
        let _ = writeln!(csv, "{},{m:.6},{s:.6}", tick(percent(i)));
    }

    let mut out = scaffold(
        title,
        "gait cycle (%)",
        y_label,
        &axes,
        &[0.0, 20.0, 40.0, 60.0, 80.0, 100.0],
        &csv,
    );

    let mut band = String::from("M");
    for (i, (m, s)) in mean.iter().zip(sd).enumerate() {
        let _ = write!(band, " {} {}", px(axes.x(percent(i))), px(axes.y(m + s)));
    }
    let _ = write!(band, " L");
    for (i, (m, s)) in mean.iter().zip(sd).enumerate().rev() {
        let _ = write!(band, " {} {}", px(axes.x(percent(i))), px(axes.y(m - s)));
    }
    band.push_str(" Z");
    let _ = writeln!(out, "<path d=\"{band}\" fill=\"{BAND_FILL}\" stroke=\"none\"/>");

    let mut line = String::new();
    for (i, m) in mean.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        let _ = write!(line, "{},{}", px(axes.x(percent(i))), px(axes.y(*m)));
    }
    let _ = writeln!(
        out,
        "<polyline points=\"{line}\" fill=\"none\" stroke=\"{LINE_STROKE}\" stroke-width=\"1.5\"/>"
    );
    out.push_str("</svg>\n");
    out
}

/// Bland-Altman agreement plot: per-pair differences against per-pair means,
/// a solid mean-bias line, and dashed limits of agreement at bias ± 1.96 SD.
pub fn bland_altman_plot(
    title: &str,
    y_label: &str,
    means: &[f64],
    diffs: &[f64],
    bias: f64,
    loa_low: f64,
    loa_high: f64,
) -> String {
    assert_eq!(means.len(), diffs.len());
    assert!(!means.is_empty());
    let x_lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let x_hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_lo = diffs.iter().copied().fold(loa_low, f64::min);
    let y_hi = diffs.iter().copied().fold(loa_high, f64::max);
    let axes = Axes::padded((x_lo, x_hi), (y_lo, y_hi));
    let x_ticks: Vec<f64> =
        (0..=4).map(|i| x_lo + (x_hi - x_lo) * i as f64 / 4.0).collect();

    let mut csv = String::from("mean,diff\n");
    for (m, d) in means.iter().zip(diffs) {
        let _ = writeln!(csv, "{m:.6},{d:.6}");
    }
    let _ = writeln!(csv, "# bias,{bias:.6},loa,{loa_low:.6},{loa_high:.6}");

    let mut out = scaffold(title, "pair mean", y_label, &axes, &x_ticks, &csv);

    let (x1, x2) = (px(MARGIN_LEFT), px(WIDTH - MARGIN_RIGHT));
    for (value, label) in [(loa_low, "-1.96 SD"), (loa_high, "+1.96 SD")] {
        let y = px(axes.y(value));
        let _ = writeln!(
            out,
            "<line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{LOA_STROKE}\" \
             stroke-width=\"1\" stroke-dasharray=\"6 4\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{x2}\" y=\"{y}\" text-anchor=\"end\" dy=\"-4\">{label}</text>"
        );
    }
    let y_bias = px(axes.y(bias));
    let _ = writeln!(
        out,
        "<line x1=\"{x1}\" y1=\"{y_bias}\" x2=\"{x2}\" y2=\"{y_bias}\" \
         stroke=\"{BIAS_STROKE}\" stroke-width=\"1.5\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{x2}\" y=\"{y_bias}\" text-anchor=\"end\" dy=\"14\" fill=\"{BIAS_STROKE}\">bias {}</text>",
        tick(bias)
    );
    for (m, d) in means.iter().zip(diffs) {
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{LINE_STROKE}\" fill-opacity=\"0.7\"/>",
            px(axes.x(*m)),
            px(axes.y(*d))
        );
    }
    out.push_str("</svg>\n");
    out
}
