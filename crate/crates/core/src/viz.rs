//! Figures for two-input networks: the cell decomposition of the input
//! plane, the class separator, and certified regions with their boxes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::infer::{RegionCertificate, RegionMode};
use crate::lp::feasible_point;
use crate::model::{output_affine, Network};
use crate::pattern::{halfspaces, ActivationPattern, NeuronStatus, Polytope};

/// Hard cap on hidden neurons for exhaustive enumeration.
pub const MAX_HIDDEN: usize = 16;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub pattern: ActivationPattern,
    /// Pattern halfspaces intersected with the drawing window.
    pub polytope: Polytope,
    /// Counterclockwise vertex loop.
    pub vertices: Vec<Point>,
}

/// Where `Y_a − Y_b` changes sign inside one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub cell: usize,
    pub from: Point,
    pub to: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMap {
    pub cells: Vec<Cell>,
    pub separator_segments: Vec<Segment>,
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`.
    pub bounds: [[f64; 2]; 2],
    pub classes: (usize, usize),
}

impl CellMap {
    /// Cells whose closed polytope contains `x` within `tol`.
    pub fn cells_containing(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.polytope.rows.iter().all(|r| r.slack(x) >= -tol))
            .map(|(i, _)| i)
            .collect()
    }
}

fn bounds_rows(bounds: &[[f64; 2]; 2]) -> Polytope {
    Polytope::from_box(bounds)
}

/// Enumerates feasible complete patterns by depth-first search over neurons
/// in layer order. Every partial assignment is prefix-structured, so an
/// infeasible prefix prunes its whole subtree.
pub fn enumerate_cells(net: &Network, bounds: [[f64; 2]; 2], classes: (usize, usize)) -> Result<CellMap> {
    if net.input_dim != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: net.input_dim,
        });
    }
    let h = net.num_hidden_neurons();
    if h > MAX_HIDDEN {
        return Err(Error::CapExceeded(format!(
            "{h} hidden neurons exceeds the enumeration cap of {MAX_HIDDEN}"
        )));
    }
    let k = net.output_dim();
    if classes.0 >= k || classes.1 >= k {
        return Err(Error::Index(format!("classes {classes:?} out of range for {k} outputs")));
    }
    // written negated so NaN bounds are rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if bounds.iter().any(|[lo, hi]| !(lo < hi)) {
        return Err(Error::Bounds(format!("drawing window {bounds:?} is empty")));
    }
    let slots: Vec<(usize, usize)> = net
        .hidden_sizes()
        .iter()
        .enumerate()
        .flat_map(|(l, &n)| (0..n).map(move |i| (l, i)))
        .collect();

    let window = bounds_rows(&bounds);
    let region = |sigma: &ActivationPattern| -> Result<Option<Polytope>> {
        let mut poly = halfspaces(net, sigma)?;
        poly.extend(window.rows.iter().cloned());
        let free = vec![(f64::NEG_INFINITY, f64::INFINITY); 2];
        Ok(feasible_point(&poly, &free)?.is_feasible().then_some(poly))
    };

    let mut cells = Vec::new();
    let mut stack = vec![(ActivationPattern::unconstrained(net), 0usize)];
    while let Some((sigma, depth)) = stack.pop() {
        if depth == slots.len() {
            if let Some(poly) = region(&sigma)? {
                let vertices = clip_window(&bounds, &poly);
                cells.push(Cell {
                    pattern: sigma,
                    polytope: poly,
                    vertices,
                });
            }
            continue;
        }
        let (l, i) = slots[depth];
        for status in [NeuronStatus::Off, NeuronStatus::On] {
            let mut child = sigma.clone();
            child.set(l, i, status);
            if region(&child)?.is_some() {
                stack.push((child, depth + 1));
            }
        }
    }
    cells.sort_by_key(|c| c.pattern.key());

    let mut separator_segments = Vec::new();
    for (idx, cell) in cells.iter().enumerate() {
        let out = output_affine(net, &cell.pattern)?;
        let (a, b) = classes;
        let w = [out.w[a][0] - out.w[b][0], out.w[a][1] - out.w[b][1]];
        let c = out.b[a] - out.b[b];
        if let Some((from, to)) = line_through_polygon(&cell.vertices, w, c) {
            separator_segments.push(Segment { cell: idx, from, to });
        }
    }
    Ok(CellMap {
        cells,
        separator_segments,
        bounds,
        classes,
    })
}

fn window_loop(bounds: &[[f64; 2]; 2]) -> Vec<Point> {
    let [[x0, x1], [y0, y1]] = *bounds;
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

/// Sutherland–Hodgman clipping of the window against every row, treating
/// strict rows as closed.
pub fn clip_window(bounds: &[[f64; 2]; 2], poly: &Polytope) -> Vec<Point> {
    let mut pts = window_loop(bounds);
    for row in &poly.rows {
        if pts.is_empty() {
            break;
        }
        let f = |p: &Point| row.rhs - (row.coeffs[0] * p[0] + row.coeffs[1] * p[1]);
        let mut next = Vec::with_capacity(pts.len() + 1);
        for k in 0..pts.len() {
            let cur = pts[k];
            let prev = pts[(k + pts.len() - 1) % pts.len()];
            let (fc, fp) = (f(&cur), f(&prev));
            if fc >= 0.0 {
                if fp < 0.0 {
                    next.push(lerp(prev, cur, fp / (fp - fc)));
                }
                next.push(cur);
            } else if fp >= 0.0 {
                next.push(lerp(prev, cur, fp / (fp - fc)));
            }
        }
        pts = next;
    }
    dedup_loop(pts)
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn dedup_loop(pts: Vec<Point>) -> Vec<Point> {
    let close = |a: &Point, b: &Point| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12;
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|q| !close(q, &p)) {
            out.push(p);
        }
    }
    while out.len() > 1 && close(&out[0], out.last().unwrap()) {
        out.pop();
    }
    out
}

/// Chord of the polygon on the line `w·x + c = 0`, if the line crosses it.
fn line_through_polygon(vertices: &[Point], w: [f64; 2], c: f64) -> Option<(Point, Point)> {
    let f = |p: &Point| w[0] * p[0] + w[1] * p[1] + c;
    let vals: Vec<f64> = vertices.iter().map(f).collect();
    if !(vals.iter().any(|v| *v > 0.0) && vals.iter().any(|v| *v < 0.0)) {
        return None;
    }
    let mut hits = Vec::new();
    for k in 0..vertices.len() {
        let j = (k + 1) % vertices.len();
        let (a, b) = (vals[k], vals[j]);
        if a == 0.0 {
            hits.push(vertices[k]);
        } else if a * b < 0.0 {
            hits.push(lerp(vertices[k], vertices[j], a / (a - b)));
        }
    }
    (hits.len() >= 2).then(|| (hits[0], hits[hits.len() - 1]))
}

/// A certificate to draw, with its optional UA-box.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub cert: RegionCertificate,
    pub ua_box: Option<AxisBox>,
}

#[derive(Debug, Clone)]
pub struct SvgStyle {
    pub width: f64,
    pub height: f64,
    pub separator: String,
    pub overlay_colors: Vec<String>,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            width: 600.0,
            height: 600.0,
            separator: "#f2c200".into(),
            overlay_colors: vec!["#1f4fd1".into(), "#d12f1f".into(), "#2a9d3a".into()],
        }
    }
}

fn cell_fill(i: usize) -> String {
    let hue = (i as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},45%,82%)")
}

fn f4(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

struct Frame {
    bounds: [[f64; 2]; 2],
    width: f64,
    height: f64,
}

impl Frame {
    fn px(&self, p: &[f64]) -> (f64, f64) {
        let [[x0, x1], [y0, y1]] = self.bounds;
        (
            (p[0] - x0) / (x1 - x0) * self.width,
            (y1 - p[1]) / (y1 - y0) * self.height,
        )
    }

    fn points(&self, loop_: &[Point]) -> String {
        loop_
            .iter()
            .map(|p| {
                let (x, y) = self.px(p);
                format!("{},{}", f4(x), f4(y))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Deterministic SVG text for the map and overlays.
pub fn render_svg(map: &CellMap, net: &Network, overlays: &[Overlay], style: &SvgStyle) -> Result<String> {
    let frame = Frame {
        bounds: map.bounds,
        width: style.width,
        height: style.height,
    };
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = f4(style.width),
        h = f4(style.height)
    );
    let _ = writeln!(s, r##"<g id="cells" stroke="#ffffff" stroke-width="1">"##);
    for (i, cell) in map.cells.iter().enumerate() {
        if cell.vertices.len() < 3 {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<polygon data-pattern="{}" fill="{}" points="{}"/>"#,
            cell.pattern.key(),
            cell_fill(i),
            frame.points(&cell.vertices)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<g id="separator" stroke="{}" stroke-width="2.5" stroke-linecap="round">"#,
        style.separator
    );
    for seg in &map.separator_segments {
        let (x1, y1) = frame.px(&seg.from);
        let (x2, y2) = frame.px(&seg.to);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            f4(x1),
            f4(y1),
            f4(x2),
            f4(y2)
        );
    }
    let _ = writeln!(s, "</g>");
    for (k, ov) in overlays.iter().enumerate() {
        let color = &style.overlay_colors[k % style.overlay_colors.len()];
        let region = ov.cert.region(net)?;
        let loop_ = clip_window(&map.bounds, &region);
        let _ = writeln!(s, r#"<g id="overlay-{k}" data-mode="{}">"#, mode_name(ov.cert.mode));
        if loop_.len() >= 3 {
            let _ = writeln!(
                s,
                r#"<polygon fill="{color}" fill-opacity="0.25" stroke="{color}" stroke-width="2" points="{}"/>"#,
                frame.points(&loop_)
            );
        }
        if let Some(b) = &ov.ua_box {
            let (x0, y0) = frame.px(&[b.lo[0], b.hi[1]]);
            let (x1, y1) = frame.px(&[b.hi[0], b.lo[1]]);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{color}" stroke-width="2" stroke-dasharray="6,3"/>"#,
                f4(x0),
                f4(y0),
                f4(x1 - x0),
                f4(y1 - y0)
            );
        }
        let (sx, sy) = frame.px(&ov.cert.seed);
        let _ = writeln!(
            s,
            r##"<circle cx="{}" cy="{}" r="4" fill="#000000" stroke="#ffffff" stroke-width="1"/>"##,
            f4(sx),
            f4(sy)
        );
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

fn mode_name(m: RegionMode) -> &'static str {
    m.as_str()
}

pub fn emit_svg(
    map: &CellMap,
    net: &Network,
    overlays: &[Overlay],
    style: &SvgStyle,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = render_svg(map, net, overlays, style)?;
    std::fs::write(path, text)?;
    Ok(())
}
