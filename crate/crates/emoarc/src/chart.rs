//! Minimal SVG line charts: polylines, axes, and a legend. Output is
//! deterministic (fixed-precision coordinates), so charts can be diffed.

/// One plotted line.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    /// A series over implicit x = 0, 1, 2, ...
    pub fn from_values(label: impl Into<String>, values: &[f64]) -> Self {
        Series {
            label: label.into(),
            points: values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as f64, v))
                .collect(),
        }
    }
}

/// A simple chart with any number of line series and an optional shaded
/// band (drawn behind the lines as a polygon).
#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub width: u32,
    pub height: u32,
    pub series: Vec<Series>,
    pub band: Option<(Vec<(f64, f64)>, Vec<(f64, f64)>)>,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const MARGIN: f64 = 42.0;

impl LineChart {
    pub fn new(title: impl Into<String>) -> Self {
        LineChart {
            title: title.into(),
            width: 720,
            height: 400,
            series: Vec::new(),
            band: None,
        }
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn add_series(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn with_band(mut self, lower: Vec<(f64, f64)>, upper: Vec<(f64, f64)>) -> Self {
        self.band = Some((lower, upper));
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        if let Some((lo, up)) = &self.band {
            for &(x, y) in lo.iter().chain(up) {
                xs.push(x);
                ys.push(y);
            }
        }
        let min_max = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() && hi.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 1.0, lo + 1.0)
            } else {
                (0.0, 1.0)
            }
        };
        let (x0, x1) = min_max(&xs);
        let (y0, y1) = min_max(&ys);
        (x0, x1, y0, y1)
    }

    /// Renders the chart as a standalone SVG document.
    pub fn render(&self) -> String {
        let w = self.width as f64;
        let h = self.height as f64;
        let (x0, x1, y0, y1) = self.bounds();
        let sx = (w - 2.0 * MARGIN) / (x1 - x0);
        let sy = (h - 2.0 * MARGIN) / (y1 - y0);
        let px = |x: f64| MARGIN + (x - x0) * sx;
        let py = |y: f64| h - MARGIN - (y - y0) * sy;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
            self.width, self.height, self.width, self.height
        ));
        out.push_str(&format!(
            "  <rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
            self.width, self.height
        ));
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
            w / 2.0,
            escape(&self.title)
        ));

        if let Some((lower, upper)) = &self.band {
            let mut pts = String::new();
            for &(x, y) in lower {
                pts.push_str(&format!("{:.2},{:.2} ", px(x), py(y)));
            }
            for &(x, y) in upper.iter().rev() {
                pts.push_str(&format!("{:.2},{:.2} ", px(x), py(y)));
            }
            out.push_str(&format!(
                "  <polygon points=\"{}\" fill=\"#b0c4de\" fill-opacity=\"0.4\" stroke=\"none\"/>\n",
                pts.trim_end()
            ));
        }

        // axes
        out.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            MARGIN,
            h - MARGIN,
            w - MARGIN,
            h - MARGIN
        ));
        out.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            MARGIN,
            MARGIN,
            MARGIN,
            h - MARGIN
        ));
        // end-of-axis tick labels
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            MARGIN,
            h - MARGIN + 14.0,
            trim_num(x0)
        ));
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            w - MARGIN,
            h - MARGIN + 14.0,
            trim_num(x1)
        ));
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            MARGIN - 4.0,
            h - MARGIN,
            trim_num(y0)
        ));
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            MARGIN - 4.0,
            MARGIN + 8.0,
            trim_num(y1)
        ));

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut pts = String::new();
            for &(x, y) in &s.points {
                pts.push_str(&format!("{:.2},{:.2} ", px(x), py(y)));
            }
            out.push_str(&format!(
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                pts.trim_end(),
                color
            ));
        }

        // legend, top-right
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let y = MARGIN + 14.0 * i as f64;
            out.push_str(&format!(
                "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
                w - MARGIN - 110.0,
                y,
                color
            ));
            out.push_str(&format!(
                "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                w - MARGIN - 96.0,
                y + 9.0,
                escape(&s.label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}
