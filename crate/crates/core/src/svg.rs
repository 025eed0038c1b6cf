//! Minimal SVG line plots emitted as plain text, no plotting dependency.

/// One named line.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Render a titled line plot with auto-scaled linear axes.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x_lo, x_hi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        W / 2.0,
        H - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        H / 2.0,
        H / 2.0
    ));
    // tick labels at the corners of the data range
    out.push_str(&format!(
        "<text x=\"{m}\" y=\"{b}\" dy=\"14\">{x_lo:.3}</text>\n\
         <text x=\"{r}\" y=\"{b}\" dy=\"14\" text-anchor=\"end\">{x_hi:.3}</text>\n\
         <text x=\"{m}\" y=\"{b}\" dx=\"-4\" text-anchor=\"end\">{y_lo:.3}</text>\n\
         <text x=\"{m}\" y=\"{t}\" dx=\"-4\" text-anchor=\"end\">{y_hi:.3}</text>\n",
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN + 4.0,
        b = H - MARGIN
    ));
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        if !path.is_empty() {
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                path.join(" ")
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            W - MARGIN - 150.0,
            MARGIN + 16.0 * (k as f64 + 1.0),
            s.name
        ));
    }
    out.push_str("</svg>\n");
    out
}
