//! Small deterministic SVG emitters: embedding scatters and sweep lines.
//!
//! Output is plain SVG text with a fixed palette and fixed-precision
//! coordinates, no timestamps or generator metadata, so identical inputs
//! yield byte-identical files.

use std::collections::BTreeSet;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 54.0;

/// Okabe-Ito colorblind-safe cycle.
const PALETTE: [&str; 8] = [
    "#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9", "#f0e442", "#000000",
];

fn axis_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        // degenerate span: pad around the value
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Mapper {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Mapper {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }
    fn y(&self, v: f64) -> f64 {
        // SVG y grows downward
        HEIGHT - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx:.1}\" y=\"24\" text-anchor=\"middle\" ",
            "font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = xml_escape(title),
    )
}

fn axes(m: &Mapper, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    ));
    s.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
        MARGIN,
        MARGIN,
        MARGIN,
        HEIGHT - MARGIN
    ));
    for frac in [0.0, 0.5, 1.0] {
        let xv = m.x0 + frac * (m.x1 - m.x0);
        let yv = m.y0 + frac * (m.y1 - m.y0);
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            m.x(xv),
            HEIGHT - MARGIN + 16.0,
            fmt_tick(xv)
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            MARGIN - 6.0,
            m.y(yv) + 4.0,
            fmt_tick(yv)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        xml_escape(x_label)
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        xml_escape(y_label)
    ));
    s
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of 2-D points colored by label; labels legend in sorted order.
pub fn scatter_svg(
    points: &[(f64, f64)],
    labels: &[String],
    title: &str,
    x_label: &str,
    y_label: &str,
) -> String {
    assert_eq!(points.len(), labels.len(), "one label per point");
    let (x0, x1) = axis_range(points.iter().map(|p| p.0));
    let (y0, y1) = axis_range(points.iter().map(|p| p.1));
    let m = Mapper { x0, x1, y0, y1 };
    let distinct: Vec<&String> = labels.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let color_of = |label: &String| -> &str {
        let i = distinct.iter().position(|l| *l == label).unwrap();
        PALETTE[i % PALETTE.len()]
    };
    let mut s = header(title);
    s.push_str(&axes(&m, x_label, y_label));
    for (p, label) in points.iter().zip(labels) {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            m.x(p.0),
            m.y(p.1),
            color_of(label)
        ));
    }
    for (i, label) in distinct.iter().enumerate() {
        let ly = MARGIN + 16.0 * i as f64;
        s.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{}\"/>\n",
            WIDTH - MARGIN + 12.0,
            ly,
            PALETTE[i % PALETTE.len()]
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            WIDTH - MARGIN + 20.0,
            ly + 4.0,
            xml_escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// One or more named polylines over a shared axis range.
pub fn line_svg(
    series: &[(String, Vec<(f64, f64)>)],
    title: &str,
    x_label: &str,
    y_label: &str,
) -> String {
    let (x0, x1) = axis_range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = axis_range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let m = Mapper { x0, x1, y0, y1 };
    let mut s = header(title);
    s.push_str(&axes(&m, x_label, y_label));
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", m.x(p.0), m.y(p.1)))
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            path.join(" "),
            color
        ));
        let ly = MARGIN + 16.0 * i as f64;
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN + 8.0,
            ly,
            WIDTH - MARGIN + 18.0,
            ly,
            color
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            WIDTH - MARGIN + 22.0,
            ly + 4.0,
            xml_escape(name)
        ));
    }
    s.push_str("</svg>\n");
    s
}
