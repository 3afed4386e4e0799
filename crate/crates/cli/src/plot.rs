//! Minimal deterministic SVG line charts for waveform sets.

use anyhow::{bail, Result};
use gridflux_core::WaveformSet;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const MAX_POINTS: usize = 2000;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

/// Render the named series as an SVG 1.1 line chart: time on the abscissa,
/// one polyline per series, axis labels, and a legend. Output is a pure
/// function of the input.
pub fn emit_plot(w: &WaveformSet, vars: &[String]) -> Result<String> {
    if vars.is_empty() {
        bail!("plot: empty variable selection");
    }
    if w.times.is_empty() {
        bail!("plot: empty waveform");
    }
    let mut series = Vec::new();
    for v in vars {
        match w.column(v) {
            Some(col) => series.push((v.clone(), col)),
            None => bail!("plot: unknown variable '{v}'"),
        }
    }

    let t0 = *w.times.first().unwrap();
    let t1 = *w.times.last().unwrap();
    let t_span = if t1 > t0 { t1 - t0 } else { 1.0 };

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, col) in &series {
        for &v in *col {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        bail!("plot: non-finite data");
    }
    let pad = 0.05 * (y_max - y_min).max(1e-9 * y_max.abs().max(1.0));
    y_min -= pad;
    y_max += pad;
    let y_span = y_max - y_min;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |t: f64| MARGIN_L + (t - t0) / t_span * plot_w;
    let y_of = |v: f64| MARGIN_T + (y_max - v) / y_span * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Grid and ticks.
    for t in ticks(t0, t1) {
        let x = x_of(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{MARGIN_T}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_T + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{}</text>\n",
            MARGIN_T + plot_h + 18.0,
            fmt_tick(t)
        ));
    }
    for v in ticks(y_min, y_max) {
        let y = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_L + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_tick(v)
        ));
    }

    // Axes.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" \
         fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">time (s)</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 16 {:.2})\">value</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));

    // Series and legend.
    let stride = (w.times.len() / MAX_POINTS).max(1);
    for (k, (name, col)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for (i, (&t, &v)) in w.times.iter().zip(col.iter()).enumerate() {
            if i % stride != 0 && i != w.times.len() - 1 {
                continue;
            }
            points.push_str(&format!("{:.2},{:.2} ", x_of(t), y_of(v)));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.trim_end()
        ));
        let ly = MARGIN_T + 14.0 + 18.0 * k as f64;
        let lx = MARGIN_L + plot_w + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            lx + 24.0,
            ly + 4.0,
            escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Up to ~6 round-valued ticks across [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let first = (lo / step).ceil() * step;
    let mut out = Vec::new();
    let mut t = first;
    while t <= hi + step * 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave() -> WaveformSet {
        let mut w = WaveformSet::new(vec!["V(a)".into(), "V(b)".into()]);
        for k in 0..100 {
            let t = k as f64 * 0.01;
            w.push_row(t, [t.sin(), 1.0].into_iter());
        }
        w
    }

    #[test]
    fn renders_polylines_and_legend() {
        let w = wave();
        let svg = emit_plot(&w, &["V(a)".into(), "V(b)".into()]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("V(a)"));
        assert!(svg.contains("time (s)"));
    }

    #[test]
    fn constant_series_is_a_horizontal_line() {
        let w = wave();
        let svg = emit_plot(&w, &["V(b)".into()]).unwrap();
        // All y coordinates of the single polyline are equal.
        let poly = svg
            .lines()
            .find(|l| l.starts_with("<polyline"))
            .unwrap()
            .to_string();
        let ys: Vec<&str> = poly
            .split(' ')
            .filter_map(|p| p.split(',').nth(1))
            .collect();
        assert!(ys.len() > 10);
        assert!(ys.windows(2).all(|w| w[0] == w[1] || w[1].contains('"')));
    }

    #[test]
    fn empty_selection_is_an_error() {
        let w = wave();
        assert!(emit_plot(&w, &[]).is_err());
    }

    #[test]
    fn deterministic_output() {
        let w = wave();
        let a = emit_plot(&w, &["V(a)".into()]).unwrap();
        let b = emit_plot(&w, &["V(a)".into()]).unwrap();
        assert_eq!(a, b);
    }
}
