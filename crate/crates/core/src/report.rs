//! Deterministic SVG figures with companion CSV data.
//!
//! Every mark carries `data-*` attributes holding the exact plotted values
//! (shortest round-trip float formatting), so a figure can be checked
//! against the statistics it was drawn from.

use std::fmt::{self, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{BoxStats, Channel, MedianCurve, Report};
use crate::taxonomy::{ClassificationTable, IoLabel, NeuronRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Bars,
    Box,
    Scatter,
    Medians,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bars" => Ok(PlotKind::Bars),
            "box" => Ok(PlotKind::Box),
            "scatter" => Ok(PlotKind::Scatter),
            "medians" => Ok(PlotKind::Medians),
            _ => Err(Error::InvalidParameter(format!("unknown plot kind `{s}`"))),
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotKind::Bars => "bars",
            PlotKind::Box => "box",
            PlotKind::Scatter => "scatter",
            PlotKind::Medians => "medians",
        })
    }
}

pub const DEFAULT_DOWNSAMPLE: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    /// Layers to draw; all when `None`. Ignored for medians.
    pub layers: Option<Vec<usize>>,
    /// Maximum scatter points per layer.
    pub downsample: usize,
    pub seed: u64,
}

impl PlotSpec {
    pub fn new(kind: PlotKind) -> Self {
        Self {
            kind,
            layers: None,
            downsample: DEFAULT_DOWNSAMPLE,
            seed: 0,
        }
    }
}

/// Inputs for [`render`]: bars and box plots read a stats report, medians
/// one or more reports, scatter a classification table.
#[derive(Debug, Clone, Copy)]
pub enum PlotData<'a> {
    Reports(&'a [Report]),
    Classes(&'a ClassificationTable),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Figure {
    pub svg: String,
    pub csv: String,
}

pub fn render(spec: &PlotSpec, data: PlotData<'_>) -> Result<Figure> {
    match (spec.kind, data) {
        (PlotKind::Bars, PlotData::Reports([report])) => render_bars(report, spec),
        (PlotKind::Box, PlotData::Reports([report])) => render_box(report, spec),
        (PlotKind::Medians, PlotData::Reports(reports)) => {
            let curves: Vec<MedianCurve> = reports.iter().flat_map(|r| r.medians.iter().cloned()).collect();
            render_medians(&curves)
        }
        (PlotKind::Scatter, PlotData::Classes(table)) => render_scatter(table, spec),
        (PlotKind::Bars | PlotKind::Box, PlotData::Reports(r)) => Err(Error::InvalidParameter(format!(
            "{} plot takes exactly one report, got {}",
            spec.kind,
            r.len()
        ))),
        (PlotKind::Scatter, _) => Err(Error::InvalidParameter("scatter plot needs a classes table".into())),
        (kind, PlotData::Classes(_)) => Err(Error::InvalidParameter(format!("{kind} plot needs a stats report"))),
    }
}

/// Fill colors of the eleven labels, in [`IoLabel::ALL`] order.
pub const LABEL_COLORS: [&str; 11] = [
    "#08306b", "#2171b5", "#6baed6", "#c6dbef", "#bdbdbd", "#238b45", "#a1d99b", "#fc9272", "#fee0d2", "#cb181d",
    "#67000d",
];

const CHANNEL_COLORS: [&str; 3] = ["#1b9e77", "#d95f02", "#7570b3"];
const SERIES_COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Diverging stops for `cos(w_gate, w_in)` at -1, 0 and +1.
pub const DIVERGING_STOPS: [(f64, [u8; 3]); 3] = [
    (-1.0, [0x21, 0x66, 0xac]),
    (0.0, [0xf7, 0xf7, 0xf7]),
    (1.0, [0xb2, 0x18, 0x2b]),
];

/// Piecewise-linear sRGB interpolation between [`DIVERGING_STOPS`].
pub fn diverging_color(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (a, b, t) = if v < 0.0 {
        (DIVERGING_STOPS[0].1, DIVERGING_STOPS[1].1, v + 1.0)
    } else {
        (DIVERGING_STOPS[1].1, DIVERGING_STOPS[2].1, v)
    };
    let mix = |i: usize| (a[i] as f64 + (b[i] as f64 - a[i] as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '-' if out.ends_with('-') => out.push_str("&#45;"),
            c => out.push(c),
        }
    }
    out
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Svg {
    buf: String,
}

impl Svg {
    fn new(width: f64, height: f64, comment: &str, title: &str) -> Self {
        let mut buf = String::new();
        buf.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
        let _ = writeln!(buf, "<!-- {} -->", escape(comment));
        let _ = writeln!(
            buf,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(
            buf,
            "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>"
        );
        let _ = writeln!(
            buf,
            "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            width / 2.0,
            escape(title)
        );
        Self { buf }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.buf,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\"/>"
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\">{}</text>",
            escape(s)
        );
    }

    fn raw(&mut self, s: &str) {
        self.buf.push_str(s);
        self.buf.push('\n');
    }

    fn legend(&mut self, x: f64, y: f64, items: &[(String, &str)]) {
        for (i, (name, color)) in items.iter().enumerate() {
            let yy = y + i as f64 * 16.0;
            let _ = writeln!(
                self.buf,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
                yy - 9.0
            );
            self.text(x + 14.0, yy, "start", name);
        }
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// Plot-area mapping from data to pixel coordinates.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn standard(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self {
            x0: LEFT,
            y0: TOP,
            w: WIDTH - LEFT - RIGHT,
            h: HEIGHT - TOP - BOTTOM,
            x_range,
            y_range,
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.x_range.0) / (self.x_range.1 - self.x_range.0) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.y_range.0) / (self.y_range.1 - self.y_range.0) * self.h
    }

    fn axes(&self, svg: &mut Svg, x_label: &str, y_label: &str, y_ticks: &[f64]) {
        let bottom = self.y0 + self.h;
        svg.line(self.x0, bottom, self.x0 + self.w, bottom, "#000000");
        svg.line(self.x0, self.y0, self.x0, bottom, "#000000");
        for &t in y_ticks {
            let y = self.y(t);
            svg.line(self.x0 - 4.0, y, self.x0, y, "#000000");
            svg.text(self.x0 - 6.0, y + 4.0, "end", &format!("{t}"));
        }
        svg.text(self.x0 + self.w / 2.0, bottom + 38.0, "middle", x_label);
        let _ = writeln!(
            svg.buf,
            "<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
            self.y0 + self.h / 2.0,
            self.y0 + self.h / 2.0,
            escape(y_label)
        );
    }

    fn layer_ticks(&self, svg: &mut Svg, layers: &[usize], slot: f64) {
        let step = (layers.len() / 32).max(1);
        let bottom = self.y0 + self.h;
        for (i, l) in layers.iter().enumerate().step_by(step) {
            let x = self.x0 + (i as f64 + 0.5) * slot;
            svg.text(x, bottom + 14.0, "middle", &l.to_string());
        }
    }
}

fn select_layers(spec: &PlotSpec, n_layers: usize) -> Result<Vec<usize>> {
    let layers = match &spec.layers {
        None => (0..n_layers).collect::<Vec<_>>(),
        Some(ls) => {
            if let Some(&bad) = ls.iter().find(|&&l| l >= n_layers) {
                return Err(Error::InvalidParameter(format!(
                    "layer {bad} selected but the data has {n_layers} layers"
                )));
            }
            let mut ls = ls.clone();
            ls.sort_unstable();
            ls.dedup();
            ls
        }
    };
    if layers.is_empty() {
        return Err(Error::Empty("plot data".into()));
    }
    Ok(layers)
}

/// Stacked label counts per layer.
pub fn render_bars(report: &Report, spec: &PlotSpec) -> Result<Figure> {
    let layers = select_layers(spec, report.layers.len())?;
    let max_total = layers
        .iter()
        .map(|&l| report.layers[l].counts.total())
        .max()
        .unwrap_or(0)
        .max(1);
    let frame = Frame::standard((0.0, 1.0), (0.0, max_total as f64));
    let mut svg = Svg::new(
        WIDTH,
        HEIGHT,
        "neuron-io bars: neurons per layer stacked by IO label",
        &format!("{}: IO classes by layer", report.model),
    );
    let mut csv = String::from("layer,label,count\n");
    let slot = frame.w / layers.len() as f64;
    for (i, &l) in layers.iter().enumerate() {
        let x = frame.x0 + i as f64 * slot + slot * 0.1;
        let mut base = 0usize;
        let _ = writeln!(svg.buf, "<g data-layer=\"{l}\">");
        for (label, count) in report.layers[l].counts.iter() {
            let _ = writeln!(csv, "{l},{},{count}", label.key());
            if count == 0 {
                continue;
            }
            let (y_top, y_bottom) = (frame.y((base + count) as f64), frame.y(base as f64));
            let _ = writeln!(
                svg.buf,
                "<rect x=\"{x:.2}\" y=\"{y_top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" data-label=\"{}\" data-count=\"{count}\"/>",
                slot * 0.8,
                y_bottom - y_top,
                LABEL_COLORS[label.ordinal()],
                label.key()
            );
            base += count;
        }
        svg.raw("</g>");
    }
    frame.axes(&mut svg, "layer", "neurons", &[0.0, max_total as f64]);
    frame.layer_ticks(&mut svg, &layers, slot);
    let legend: Vec<(String, &str)> = IoLabel::ALL
        .iter()
        .map(|l| (l.to_string(), LABEL_COLORS[l.ordinal()]))
        .collect();
    svg.legend(WIDTH - RIGHT + 15.0, TOP + 10.0, &legend);
    Ok(Figure { svg: svg.finish(), csv })
}

fn draw_box(svg: &mut Svg, frame: &Frame, x: f64, width: f64, b: &BoxStats, color: &str, attrs: &str) {
    let mid = x + width / 2.0;
    let _ = writeln!(
        svg.buf,
        "<g {attrs} data-n=\"{}\" data-median=\"{}\" data-q1=\"{}\" data-q3=\"{}\" data-whisker-low=\"{}\" data-whisker-high=\"{}\">",
        b.n, b.median, b.q1, b.q3, b.whisker_low, b.whisker_high
    );
    svg.line(mid, frame.y(b.whisker_low), mid, frame.y(b.q1), "#333333");
    svg.line(mid, frame.y(b.q3), mid, frame.y(b.whisker_high), "#333333");
    svg.line(x, frame.y(b.whisker_low), x + width, frame.y(b.whisker_low), "#333333");
    svg.line(
        x,
        frame.y(b.whisker_high),
        x + width,
        frame.y(b.whisker_high),
        "#333333",
    );
    let _ = writeln!(
        svg.buf,
        "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{width:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.6\" stroke=\"#333333\"/>",
        frame.y(b.q3),
        frame.y(b.q1) - frame.y(b.q3)
    );
    svg.line(x, frame.y(b.median), x + width, frame.y(b.median), "#000000");
    for (id, v) in &b.outliers {
        let _ = writeln!(
            svg.buf,
            "<circle cx=\"{mid:.2}\" cy=\"{:.2}\" r=\"1.2\" fill=\"none\" stroke=\"{color}\" data-neuron=\"{id}\" data-value=\"{v}\"/>",
            frame.y(*v)
        );
    }
    svg.raw("</g>");
}

/// Per-layer boxplots of `|cos(w_gate, w_in)|`, `|cos(w_gate, w_out)|` and
/// `cos(w_in, w_out)`.
pub fn render_box(report: &Report, spec: &PlotSpec) -> Result<Figure> {
    let layers = select_layers(spec, report.layers.len())?;
    let frame = Frame::standard((0.0, 1.0), (-1.0, 1.0));
    let mut svg = Svg::new(
        WIDTH,
        HEIGHT,
        "neuron-io box: quartiles by linear interpolation, whiskers at 1.5 IQR",
        &format!("{}: weight cosines by layer", report.model),
    );
    let mut csv = String::from("layer,channel,n,median,q1,q3,whisker_low,whisker_high,outliers\n");
    let slot = frame.w / layers.len() as f64;
    let width = slot * 0.8 / 3.0;
    svg.line(frame.x0, frame.y(0.0), frame.x0 + frame.w, frame.y(0.0), "#cccccc");
    for (i, &l) in layers.iter().enumerate() {
        for (c, channel) in Channel::ALL.into_iter().enumerate() {
            let b = report.layers[l].boxes.get(channel);
            let x = frame.x0 + i as f64 * slot + slot * 0.1 + c as f64 * width;
            let attrs = format!("data-layer=\"{l}\" data-channel=\"{}\"", channel.key());
            draw_box(&mut svg, &frame, x, width, b, CHANNEL_COLORS[c], &attrs);
            let _ = writeln!(
                csv,
                "{l},{},{},{},{},{},{},{},{}",
                channel.key(),
                b.n,
                b.median,
                b.q1,
                b.q3,
                b.whisker_low,
                b.whisker_high,
                b.outliers.len()
            );
        }
    }
    frame.axes(&mut svg, "layer", "cosine", &[-1.0, -0.5, 0.0, 0.5, 1.0]);
    frame.layer_ticks(&mut svg, &layers, slot);
    let legend: Vec<(String, &str)> = ["|cos(w_gate, w_in)|", "|cos(w_gate, w_out)|", "cos(w_in, w_out)"]
        .iter()
        .zip(CHANNEL_COLORS)
        .map(|(n, c)| (n.to_string(), c))
        .collect();
    svg.legend(WIDTH - RIGHT + 15.0, TOP + 10.0, &legend);
    Ok(Figure { svg: svg.finish(), csv })
}

/// Median `cos(w_in, w_out)` per layer over normalized depth, one polyline
/// per model.
pub fn render_medians(curves: &[MedianCurve]) -> Result<Figure> {
    if curves.is_empty() || curves.iter().any(|c| c.points.is_empty()) {
        return Err(Error::Empty("median curves".into()));
    }
    let frame = Frame::standard((0.0, 1.0), (-1.0, 1.0));
    let mut svg = Svg::new(
        WIDTH,
        HEIGHT,
        "neuron-io medians: x = layer/(n_layers-1)",
        "median cos(w_in, w_out) by layer",
    );
    let mut csv = String::from("model,depth,median\n");
    svg.line(frame.x0, frame.y(0.0), frame.x0 + frame.w, frame.y(0.0), "#cccccc");
    for (i, curve) in curves.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let points: Vec<String> = curve
            .points
            .iter()
            .map(|&(d, m)| format!("{:.2},{:.2}", frame.x(d), frame.y(m)))
            .collect();
        let _ = writeln!(svg.buf, "<g data-model=\"{}\">", escape(&curve.model));
        let _ = writeln!(
            svg.buf,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            points.join(" ")
        );
        for &(d, m) in &curve.points {
            let _ = writeln!(
                svg.buf,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\" data-depth=\"{d}\" data-median=\"{m}\"/>",
                frame.x(d),
                frame.y(m)
            );
            let _ = writeln!(csv, "{},{d},{m}", csv_field(&curve.model));
        }
        svg.raw("</g>");
    }
    let ticks: Vec<(f64, String)> = (0..=4)
        .map(|i| (i as f64 / 4.0, format!("{}", i as f64 / 4.0)))
        .collect();
    for (t, s) in &ticks {
        svg.text(frame.x(*t), frame.y0 + frame.h + 14.0, "middle", s);
    }
    frame.axes(
        &mut svg,
        "relative depth",
        "median cos(w_in, w_out)",
        &[-1.0, -0.5, 0.0, 0.5, 1.0],
    );
    let legend: Vec<(String, &str)> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| (c.model.clone(), SERIES_COLORS[i % SERIES_COLORS.len()]))
        .collect();
    svg.legend(WIDTH - RIGHT + 15.0, TOP + 10.0, &legend);
    Ok(Figure { svg: svg.finish(), csv })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// At most `limit` records of a layer, chosen uniformly with a generator
/// seeded by `seed` and the layer index, in neuron order.
pub fn downsample(records: &[NeuronRecord], limit: usize, seed: u64, layer: usize) -> Vec<&NeuronRecord> {
    if records.len() <= limit {
        return records.iter().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(layer as u64);
    let mut picked = rand::seq::index::sample(&mut rng, records.len(), limit).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| &records[i]).collect()
}

/// One panel per layer: x = `cos(w_gate, w_out)`, y = `cos(w_in, w_out)`,
/// color = `cos(w_gate, w_in)`, with the unit circle for reference.
pub fn render_scatter(table: &ClassificationTable, spec: &PlotSpec) -> Result<Figure> {
    if table.is_empty() {
        return Err(Error::Empty("classification table".into()));
    }
    if spec.downsample == 0 {
        return Err(Error::InvalidParameter("downsample limit must be positive".into()));
    }
    let layers = select_layers(spec, table.n_layers)?;
    let cols = layers.len().min(4);
    let rows = layers.len().div_ceil(cols);
    let panel = 220.0;
    let (width, height) = (cols as f64 * panel + 150.0, rows as f64 * panel + 50.0);
    let stops: Vec<String> = DIVERGING_STOPS
        .iter()
        .map(|(v, c)| format!("{v} #{:02x}{:02x}{:02x}", c[0], c[1], c[2]))
        .collect();
    let comment = format!(
        "neuron-io scatter: x = cos(w_gate,w_out), y = cos(w_in,w_out), color = cos(w_gate,w_in); diverging color stops {}; linear sRGB interpolation; downsample {} per layer, seed {}",
        stops.join(", "),
        spec.downsample,
        spec.seed
    );
    let mut svg = Svg::new(width, height, &comment, &format!("{}: weight cosines", table.model));
    let mut csv = String::from("layer,index,cos_gate_in,cos_gate_out,cos_in_out\n");
    for (p, &l) in layers.iter().enumerate() {
        let (px, py) = (20.0 + (p % cols) as f64 * panel, 35.0 + (p / cols) as f64 * panel);
        let frame = Frame {
            x0: px + 10.0,
            y0: py + 10.0,
            w: panel - 30.0,
            h: panel - 30.0,
            x_range: (-1.0, 1.0),
            y_range: (-1.0, 1.0),
        };
        let (cx, cy, r) = (frame.x(0.0), frame.y(0.0), frame.w / 2.0);
        let _ = writeln!(svg.buf, "<g data-layer=\"{l}\">");
        let _ = writeln!(
            svg.buf,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#999999\"/>",
            frame.x0, frame.y0, frame.w, frame.h
        );
        let _ = writeln!(
            svg.buf,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"none\" stroke=\"#666666\" stroke-dasharray=\"3,3\" class=\"unit-circle\"/>"
        );
        svg.line(frame.x0, cy, frame.x0 + frame.w, cy, "#dddddd");
        svg.line(cx, frame.y0, cx, frame.y0 + frame.h, "#dddddd");
        for rec in downsample(table.layer(l), spec.downsample, spec.seed, l) {
            let c = rec.cosines;
            let _ = writeln!(
                svg.buf,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{}\" data-neuron=\"{}\" data-gate-in=\"{}\" data-gate-out=\"{}\" data-in-out=\"{}\"/>",
                frame.x(c.gate_out),
                frame.y(c.in_out),
                diverging_color(c.gate_in),
                rec.id,
                c.gate_in,
                c.gate_out,
                c.in_out
            );
            let _ = writeln!(csv, "{},{},{},{},{}", l, rec.id.index, c.gate_in, c.gate_out, c.in_out);
        }
        svg.text(
            frame.x0 + frame.w / 2.0,
            frame.y0 + frame.h + 14.0,
            "middle",
            &format!("layer {l}"),
        );
        svg.raw("</g>");
    }
    let legend: Vec<(String, String)> = [-1.0, -0.5, 0.0, 0.5, 1.0]
        .iter()
        .map(|&v| (format!("cos(w_gate, w_in) = {v}"), diverging_color(v)))
        .collect();
    let legend: Vec<(String, &str)> = legend.iter().map(|(n, c)| (n.clone(), c.as_str())).collect();
    svg.legend(width - 140.0, 50.0, &legend);
    Ok(Figure { svg: svg.finish(), csv })
}
