//! SVG 1.1 figures: latent-label maps, overlaid 1-D densities and
//! real/generated scatter plots.
//!
//! Output is a pure function of the input, so identical inputs give
//! byte-identical documents. Points are `<circle>` elements whose `class`
//! names the series (`pt`, `real`, `gen`); mode means are `<path
//! class="mode">` crosses.

use std::fmt::Write as _;

use crate::data::GaussianGrid;
use crate::error::{Error, Result};
use crate::metrics::{kl_1d, Histogram, DEFAULT_SMOOTHING};
use crate::tensor::Tensor;

/// Colour of mode `i` is `PALETTE[i]`; the last entry marks unregistered
/// samples.
pub const PALETTE: [&str; 26] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6",
    "#bfef45", "#fabed4", "#469990", "#dcbeff", "#9a6324", "#800000", "#aaffc3", "#808000",
    "#ffd8b1", "#000075", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#17becf", "#a9a9a9",
];

pub const UNREGISTERED_COLOR: &str = PALETTE[25];

/// Latent maps with more points than this are thinned by a fixed stride.
pub const MAX_LATENT_POINTS: usize = 100_000;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 600.0;
const PLOT_LEFT: f64 = 50.0;
const PLOT_TOP: f64 = 20.0;
const PLOT_SIZE: f64 = 540.0;
const LEGEND_X: f64 = 600.0;

const SERIES_COLORS: [&str; 6] = ["#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Data-to-pixel mapping of the square plot area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axes {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Axes {
    pub fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            PLOT_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * PLOT_SIZE,
            PLOT_TOP + (self.y.1 - y) / (self.y.1 - self.y.0) * PLOT_SIZE,
        )
    }

    pub fn from_px(&self, px: f64, py: f64) -> (f64, f64) {
        (
            self.x.0 + (px - PLOT_LEFT) / PLOT_SIZE * (self.x.1 - self.x.0),
            self.y.1 - (py - PLOT_TOP) / PLOT_SIZE * (self.y.1 - self.y.0),
        )
    }
}

/// Axes used by [`plot_latent_map`]: `[−1, 1]²` widened to cover the points,
/// plus a 5% margin.
pub fn latent_axes(latents: &Tensor) -> Axes {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    for v in latents.data() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let pad = 0.05 * (hi - lo);
    Axes {
        x: (lo - pad, hi + pad),
        y: (lo - pad, hi + pad),
    }
}

/// Axes used by [`plot_scatter`]: the grid extent widened by a quarter.
pub fn scatter_axes(grid: &GaussianGrid) -> Axes {
    let e = grid.extent + grid.extent.max(1.0) * 0.25;
    Axes {
        x: (-e, e),
        y: (-e, e),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Doc {
    out: String,
}

impl Doc {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = writeln!(out, "<title>{}</title>", escape(title));
        let _ = writeln!(
            out,
            "<rect class=\"frame\" x=\"{PLOT_LEFT}\" y=\"{PLOT_TOP}\" width=\"{PLOT_SIZE}\" height=\"{PLOT_SIZE}\" fill=\"white\" stroke=\"black\"/>"
        );
        Self { out }
    }

    fn axes(&mut self, axes: &Axes) {
        self.out.push_str("<g class=\"ticks\" font-size=\"10\" font-family=\"sans-serif\">\n");
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = axes.x.0 + t * (axes.x.1 - axes.x.0);
            let yv = axes.y.0 + t * (axes.y.1 - axes.y.0);
            let (px, _) = axes.to_px(xv, axes.y.0);
            let (_, py) = axes.to_px(axes.x.0, yv);
            let _ = writeln!(
                self.out,
                "<text x=\"{px:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{xv:.2}</text>",
                PLOT_TOP + PLOT_SIZE + 14.0
            );
            let _ = writeln!(
                self.out,
                "<text x=\"{:.3}\" y=\"{py:.3}\" text-anchor=\"end\">{yv:.2}</text>",
                PLOT_LEFT - 4.0
            );
        }
        self.out.push_str("</g>\n");
    }

    fn circle(&mut self, class: &str, px: f64, py: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            "<circle class=\"{class}\" cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"{r}\" fill=\"{fill}\"/>"
        );
    }

    fn legend_entry(&mut self, id: &str, row: usize, color: &str, text: &str, active: bool) {
        let y = PLOT_TOP + 4.0 + row as f64 * 14.0;
        let weight = if active { "bold" } else { "normal" };
        let opacity = if active { "1" } else { "0.3" };
        let _ = writeln!(
            self.out,
            "<g class=\"legend-entry\" id=\"{id}\" opacity=\"{opacity}\"><rect x=\"{LEGEND_X}\" y=\"{y:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"sans-serif\" font-weight=\"{weight}\">{}</text></g>",
            LEGEND_X + 13.0,
            y + 9.0,
            escape(text)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn require_2d(t: &Tensor, what: &'static str) -> Result<usize> {
    let (n, d) = t.require_matrix(what)?;
    if d != 2 {
        return Err(Error::InvalidShape {
            shape: t.shape().to_vec(),
            reason: format!("{what} needs 2-D points"),
        });
    }
    Ok(n)
}

/// Stride used to thin `n` latent points.
pub fn latent_stride(n: usize) -> usize {
    n.div_ceil(MAX_LATENT_POINTS).max(1)
}

/// One point per latent sample coloured by its mode label. Above
/// [`MAX_LATENT_POINTS`] every `latent_stride(n)`-th point is kept.
pub fn plot_latent_map(labels: &[Option<usize>], latents: &Tensor) -> Result<String> {
    let n = require_2d(latents, "plot_latent_map")?;
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "plot_latent_map",
            lhs: vec![labels.len()],
            rhs: latents.shape().to_vec(),
        });
    }
    let axes = latent_axes(latents);
    let mut doc = Doc::new("latent-label map");
    doc.axes(&axes);
    let color = |l: Option<usize>| match l {
        Some(k) => PALETTE[k % 25],
        None => UNREGISTERED_COLOR,
    };
    let mut present = [false; 26];
    doc.out.push_str("<g class=\"points\">\n");
    for i in (0..n).step_by(latent_stride(n)) {
        let l = labels[i];
        present[l.map_or(25, |k| k % 25)] = true;
        let r = latents.row(i);
        let (px, py) = axes.to_px(r[0], r[1]);
        doc.circle("pt", px, py, 1.0, color(l));
    }
    doc.out.push_str("</g>\n<g class=\"legend\">\n");
    for (k, &on) in present.iter().enumerate() {
        let (id, text) = if k == 25 {
            ("legend-none".to_string(), "unregistered".to_string())
        } else {
            (format!("legend-{k}"), format!("mode {k}"))
        };
        doc.legend_entry(&id, k, PALETTE[k], &text, on);
    }
    doc.out.push_str("</g>\n");
    Ok(doc.finish())
}

/// Overlaid step curves of histograms sharing one binning. Each legend entry
/// shows the series' smoothed KL against the first series.
pub fn plot_density_1d(series: &[(String, Histogram)]) -> Result<String> {
    let mut doc = Doc::new("1-D density");
    let Some((_, first)) = series.first() else {
        return Ok(doc.finish());
    };
    for (name, h) in series {
        if !h.same_binning(first) {
            return Err(Error::Config(format!("series `{name}` has a different binning")));
        }
    }
    let peak = series
        .iter()
        .flat_map(|(_, h)| h.masses.iter().map(move |m| m / h.bin_width()))
        .fold(0.0f64, f64::max);
    let axes = Axes {
        x: (first.lo, first.hi),
        y: (0.0, if peak > 0.0 { peak * 1.05 } else { 1.0 }),
    };
    doc.axes(&axes);
    let edges = first.edges();
    for (i, (name, h)) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let mut d = String::new();
        let (x0, y0) = axes.to_px(edges[0], 0.0);
        let _ = write!(d, "M{x0:.3},{y0:.3}");
        for (b, m) in h.masses.iter().enumerate() {
            let y = m / h.bin_width();
            let (xa, ya) = axes.to_px(edges[b], y);
            let (xb, _) = axes.to_px(edges[b + 1], y);
            let _ = write!(d, " L{xa:.3},{ya:.3} L{xb:.3},{ya:.3}");
        }
        let (xe, ye) = axes.to_px(edges[h.bins()], 0.0);
        let _ = write!(d, " L{xe:.3},{ye:.3}");
        let _ = writeln!(
            doc.out,
            "<path class=\"series\" id=\"series-{i}\" d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
        );
        let kl = kl_1d(h, first, DEFAULT_SMOOTHING)?;
        doc.legend_entry(&format!("legend-{i}"), i, color, &format!("{name} (KL {kl:.5})"), true);
    }
    Ok(doc.finish())
}

/// Real points, generated points and mode means over the grid extent.
pub fn plot_scatter(real: &Tensor, generated: &Tensor, grid: &GaussianGrid) -> Result<String> {
    let nr = require_2d(real, "plot_scatter")?;
    let ng = require_2d(generated, "plot_scatter")?;
    let axes = scatter_axes(grid);
    let mut doc = Doc::new("real and generated samples");
    doc.axes(&axes);
    doc.out.push_str("<g class=\"real-points\">\n");
    for i in 0..nr {
        let r = real.row(i);
        let (px, py) = axes.to_px(r[0], r[1]);
        doc.circle("real", px, py, 1.2, "#1f77b4");
    }
    doc.out.push_str("</g>\n<g class=\"generated-points\">\n");
    for i in 0..ng {
        let r = generated.row(i);
        let (px, py) = axes.to_px(r[0], r[1]);
        doc.circle("gen", px, py, 1.2, "#d62728");
    }
    doc.out.push_str("</g>\n<g class=\"modes\">\n");
    for m in &grid.means {
        let (px, py) = axes.to_px(m[0], m[1]);
        let _ = writeln!(
            doc.out,
            "<path class=\"mode\" d=\"M{:.3},{py:.3} L{:.3},{py:.3} M{px:.3},{:.3} L{px:.3},{:.3}\" stroke=\"black\" stroke-width=\"1\"/>",
            px - 4.0,
            px + 4.0,
            py - 4.0,
            py + 4.0
        );
    }
    doc.out.push_str("</g>\n<g class=\"legend\">\n");
    doc.legend_entry("legend-real", 0, "#1f77b4", "real", nr > 0);
    doc.legend_entry("legend-gen", 1, "#d62728", "generated", ng > 0);
    doc.legend_entry("legend-mode", 2, "#000000", "mode mean", true);
    doc.out.push_str("</g>\n");
    Ok(doc.finish())
}
