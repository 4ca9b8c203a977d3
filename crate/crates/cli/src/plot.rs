//! Chart rendering: self-contained SVG latency plots plus a CSV sidecar
//! carrying every plotted number, so figures can be regenerated or checked
//! without scraping vector markup.

use std::fmt::Write as _;
use std::path::Path;

use crate::{CliError, Result};

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
];

/// One plotted curve. `band` holds optional (t, lo, hi) confidence bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<(f64, f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub curves: Vec<Curve>,
}

/// Round a raw step up to the nearest 1, 2 or 5 times a power of ten.
fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.abs().log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi - lo).is_finite() || hi <= lo {
        return vec![lo];
    }
    let step = nice_step((hi - lo) / target as f64);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 1000.0 {
        format!("{}", v as i64)
    } else if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render a chart to SVG markup. Curves without points are skipped and
/// reported as warnings rather than failing the whole figure.
pub fn render_svg(spec: &ChartSpec) -> (String, Vec<String>) {
    let mut warnings = Vec::new();
    let drawn: Vec<&Curve> = spec
        .curves
        .iter()
        .filter(|c| {
            if c.points.is_empty() {
                warnings.push(format!(
                    "chart '{}': series '{}' has no data and was omitted",
                    spec.title, c.label
                ));
                false
            } else {
                true
            }
        })
        .collect();

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for c in &drawn {
        for &(x, y) in &c.points {
            xs.push(x);
            ys.push(y);
        }
        if let Some(band) = &c.band {
            for &(x, lo, hi) in band {
                xs.push(x);
                ys.push(lo);
                ys.push(hi);
            }
        }
    }
    let (x_min, x_max) = bounds(&xs, 0.0, 1.0);
    let (mut y_min, mut y_max) = bounds(&ys, 0.0, 1.0);
    if y_min > 0.0 {
        y_min = 0.0; // latency axes read better anchored at zero
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    );
    let _ = write!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"28\" text-anchor=\"middle\" font-size=\"17\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        esc(&spec.title)
    );

    // Axes and grid.
    for t in ticks(x_min, x_max, 8) {
        let x = px(t);
        let _ = write!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        );
        let _ = write!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y_min, y_max, 6) {
        let y = py(t);
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        );
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" \
         fill=\"none\" stroke=\"#444444\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        esc(&spec.x_label)
    );
    let _ = write!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        esc(&spec.y_label)
    );

    // Confidence bands first so curves draw on top of them.
    for (i, curve) in drawn.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = &curve.band {
            if band.len() >= 2 {
                let mut d = String::from("M");
                for &(x, lo, _) in band {
                    let _ = write!(d, " {:.2} {:.2}", px(x), py(lo));
                }
                for &(x, _, hi) in band.iter().rev() {
                    let _ = write!(d, " L {:.2} {:.2}", px(x), py(hi));
                }
                d.push('Z');
                let _ = write!(
                    svg,
                    "<path d=\"{d}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"
                );
            }
        }
    }
    for (i, curve) in drawn.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
            pts.join(" ")
        );
    }

    // Legend in the right margin.
    for (i, curve) in drawn.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_TOP + 14.0 + i as f64 * 20.0;
        let x = WIDTH - MARGIN_RIGHT + 14.0;
        let _ = write!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" \
             stroke-width=\"2.5\"/>\n",
            x + 22.0
        );
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>\n",
            x + 28.0,
            y + 4.0,
            esc(&curve.label)
        );
    }
    svg.push_str("</svg>\n");
    (svg, warnings)
}

fn bounds(values: &[f64], fallback_lo: f64, fallback_hi: f64) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (fallback_lo, fallback_hi)
    }
}

/// Write the chart SVG plus its data sidecar. The sidecar holds one row per
/// plotted point (`series,t_s,value,ci_half`, ci_half empty when no band),
/// so every number in the figure can be read back exactly.
pub fn write_chart(spec: &ChartSpec, svg_path: &Path, csv_path: &Path) -> Result<Vec<String>> {
    let (svg, warnings) = render_svg(spec);
    std::fs::write(svg_path, &svg).map_err(|e| CliError::io(svg_path, e))?;

    let mut csv = String::from("series,t_s,value,ci_half\n");
    for curve in &spec.curves {
        let halves: Option<&Vec<(f64, f64, f64)>> = curve.band.as_ref();
        for (idx, &(t, v)) in curve.points.iter().enumerate() {
            let half = halves.and_then(|b| b.get(idx)).map(|&(_, lo, hi)| 0.5 * (hi - lo));
            match half {
                Some(h) => {
                    let _ = writeln!(csv, "{},{},{},{}", curve.label, t, v, h);
                }
                None => {
                    let _ = writeln!(csv, "{},{},{},", curve.label, t, v);
                }
            }
        }
    }
    std::fs::write(csv_path, &csv).map_err(|e| CliError::io(csv_path, e))?;
    Ok(warnings)
}
