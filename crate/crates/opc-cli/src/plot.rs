//! Hand-rolled SVG line plots: axes, ticks, a legend, and one polyline per
//! series. The CSV next to each plot is the authoritative record; the SVG
//! only needs to show the curves, so there is no plotting dependency.

use std::fmt::Write as _;

/// One curve. `values` pairs up with the shared time axis.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub values: &'a [f64],
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 62.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 360.0;

/// Renders `series` against `t`. Every series must have `t.len()` samples.
pub fn line_plot(title: &str, t: &[f64], series: &[Series]) -> String {
    assert!(!t.is_empty(), "need at least one sample");
    for s in series {
        assert_eq!(s.values.len(), t.len(), "series {} length", s.label);
    }

    let (t0, t1) = (t[0], t[t.len() - 1]);
    let t_span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in series.iter().flat_map(|s| s.values) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let x = |time: f64| LEFT + (time - t0) / t_span * (RIGHT - LEFT);
    let y = |value: f64| BOTTOM - (value - lo) / (hi - lo) * (BOTTOM - TOP);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    )
    .unwrap();
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    writeln!(
        svg,
        "<text x=\"{:.0}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>",
        (LEFT + RIGHT) / 2.0
    )
    .unwrap();

    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let tick_t = t0 + f * t_span;
        let tick_v = lo + f * (hi - lo);
        let xp = x(tick_t);
        let yp = y(tick_v);
        writeln!(
            svg,
            "<line x1=\"{xp:.2}\" y1=\"{BOTTOM}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"#222\"/>",
            BOTTOM + 5.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{xp:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            BOTTOM + 19.0,
            tick(tick_t)
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{LEFT}\" y2=\"{yp:.2}\" stroke=\"#222\"/>",
            LEFT - 5.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 9.0,
            yp + 4.0,
            tick(tick_v)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.0}\" height=\"{:.0}\" fill=\"none\" stroke=\"#222\"/>",
        RIGHT - LEFT,
        BOTTOM - TOP
    )
    .unwrap();

    for s in series {
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        write!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash} points=\"",
            s.color
        )
        .unwrap();
        for (k, (time, value)) in t.iter().zip(s.values).enumerate() {
            if k > 0 {
                svg.push(' ');
            }
            write!(svg, "{:.2},{:.2}", x(*time), y(*value)).unwrap();
        }
        svg.push_str("\"/>\n");
    }

    for (i, s) in series.iter().enumerate() {
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        writeln!(
            svg,
            "<line x1=\"{:.0}\" y1=\"{ly:.0}\" x2=\"{:.0}\" y2=\"{ly:.0}\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>",
            RIGHT - 120.0,
            RIGHT - 92.0,
            s.color
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.0}\" y=\"{:.0}\">{}</text>",
            RIGHT - 86.0,
            ly + 4.0,
            s.label
        )
        .unwrap();
    }

    svg.push_str("</svg>\n");
    svg
}

/// Short tick label: three significant decimals with trailing zeros trimmed.
fn tick(v: f64) -> String {
    let mut s = format!("{v:.3}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}
