//! SVG rendering of a raw EEG window: one polyline point per sample, with
//! labeled axes and the class name in the title.

use thiserror::Error;

use crate::data::SAMPLES_PER_RECORD;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlotError {
    #[error("window has {actual} samples, expected {expected}")]
    WrongLength { expected: usize, actual: usize },
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 380.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Render one window as a standalone SVG document. The polyline has
/// exactly one point per sample.
pub fn render_eeg_svg(samples: &[f32], title: &str) -> Result<String, PlotError> {
    if samples.len() != SAMPLES_PER_RECORD {
        return Err(PlotError::WrongLength {
            expected: SAMPLES_PER_RECORD,
            actual: samples.len(),
        });
    }

    let min = samples.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let max = samples.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    // Constant signals render as a centered horizontal line.
    let span = if (max - min).abs() < f64::EPSILON {
        1.0
    } else {
        max - min
    };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |i: usize| MARGIN_LEFT + plot_w * i as f64 / (SAMPLES_PER_RECORD - 1) as f64;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - min) / span);

    let mut points = String::with_capacity(SAMPLES_PER_RECORD * 14);
    for (i, &v) in samples.iter().enumerate() {
        if i > 0 {
            points.push(' ');
        }
        points.push_str(&format!("{:.2},{:.2}", x_of(i), y_of(v as f64)));
    }

    let title = xml_escape(title);
    let x_axis_y = MARGIN_TOP + plot_h;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!("  <title>{title}</title>\n"));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\" \
         text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{x_axis_y}\" \
         stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{x_axis_y}\" x2=\"{:.0}\" y2=\"{x_axis_y}\" \
         stroke=\"black\"/>\n",
        WIDTH - MARGIN_RIGHT
    ));
    // Axis labels and extremes.
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">sample index</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.0})\">amplitude</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));
    for (value, y) in [(max, MARGIN_TOP), (min, x_axis_y)] {
        svg.push_str(&format!(
            "  <text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{value:.0}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0
        ));
    }
    for i in [0usize, 44, 88, 132, 177] {
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{i}</text>\n",
            x_of(i),
            x_axis_y + 16.0
        ));
    }
    svg.push_str(&format!(
        "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.2\" points=\"{points}\"/>\n"
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_has_one_point_per_sample() {
        let samples: Vec<f32> = (0..SAMPLES_PER_RECORD).map(|i| (i as f32).sin()).collect();
        let svg = render_eeg_svg(&samples, "EEG window, class E (ictal)").unwrap();
        let points_attr = svg
            .split("points=\"")
            .nth(1)
            .and_then(|s| s.split('"').next())
            .unwrap();
        assert_eq!(points_attr.split(' ').count(), SAMPLES_PER_RECORD);
        assert!(svg.contains("class E"));
        assert!(svg.contains("sample index"));
        assert!(svg.contains("amplitude"));
    }

    #[test]
    fn constant_signal_is_a_horizontal_line() {
        let samples = vec![5.0f32; SAMPLES_PER_RECORD];
        let svg = render_eeg_svg(&samples, "flat").unwrap();
        let points_attr = svg
            .split("points=\"")
            .nth(1)
            .and_then(|s| s.split('"').next())
            .unwrap();
        let ys: Vec<&str> = points_attr
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert_eq!(
            render_eeg_svg(&[1.0; 10], "short").unwrap_err(),
            PlotError::WrongLength {
                expected: SAMPLES_PER_RECORD,
                actual: 10
            }
        );
    }
}
