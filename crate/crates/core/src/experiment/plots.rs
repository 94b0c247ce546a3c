//! Hand-written SVG figures: a workspace view per run and a cost-per-
//! iteration comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::experiment::logs::write_atomic;
use crate::lmpc::RunResult;
use crate::model::{ObstacleEllipse, Trajectory};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const MODE_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn mode_color(mode: u32) -> &'static str {
    MODE_COLORS[(mode.saturating_sub(1) as usize) % MODE_COLORS.len()]
}

/// Affine map from data coordinates to the plot area, y pointing up.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    equal: bool,
}

impl Frame {
    fn fit(points: impl IntoIterator<Item = (f64, f64)>, equal: bool) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
            equal,
        };
        for (x, y) in points {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            (f.x0, f.x1, f.y0, f.y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if f.x1 - f.x0 < 1e-9 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 - f.y0 < 1e-9 {
            f.y1 = f.y0 + 1.0;
        }
        if !equal {
            let pad = 0.05 * (f.y1 - f.y0) + 0.5;
            f.y0 -= pad;
            f.y1 += pad;
        }
        f
    }

    fn scale(&self) -> (f64, f64) {
        let sx = (WIDTH - 2.0 * MARGIN) / (self.x1 - self.x0);
        let sy = (HEIGHT - 2.0 * MARGIN) / (self.y1 - self.y0);
        if self.equal {
            let s = sx.min(sy);
            (s, s)
        } else {
            (sx, sy)
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (sx, sy) = self.scale();
        (MARGIN + (x - self.x0) * sx, HEIGHT - MARGIN - (y - self.y0) * sy)
    }
}

struct Svg(String);

impl Svg {
    fn new() -> Self {
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        Svg(s)
    }

    fn polyline(&mut self, f: &Frame, pts: impl IntoIterator<Item = (f64, f64)>, style: &str) {
        let mut d = String::new();
        for (x, y) in pts {
            let (px, py) = f.map(x, y);
            write!(d, "{px:.2},{py:.2} ").unwrap();
        }
        writeln!(self.0, r#"<polyline fill="none" {style} points="{}"/>"#, d.trim_end()).unwrap();
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str) {
        let (ax, ay) = (MARGIN, HEIGHT - MARGIN);
        writeln!(
            self.0,
            r##"<path d="M{ax} {MARGIN} V{ay} H{}" stroke="#333" fill="none"/>"##,
            WIDTH - MARGIN
        )
        .unwrap();
        writeln!(
            self.0,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0
        )
        .unwrap();
        writeln!(
            self.0,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{ylabel}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        )
        .unwrap();
        for (x, anchor) in [(f.x0, "start"), (f.x1, "end")] {
            let (px, _) = f.map(x, f.y0);
            writeln!(self.0, r#"<text x="{px:.1}" y="{:.1}" text-anchor="{anchor}">{x:.0}</text>"#, ay + 16.0).unwrap();
        }
        for y in [f.y0, f.y1] {
            let (_, py) = f.map(f.x0, y);
            writeln!(self.0, r#"<text x="{:.1}" y="{py:.1}" text-anchor="end">{y:.0}</text>"#, ax - 4.0).unwrap();
        }
    }

    fn legend(&mut self, entries: &[(&str, String)]) {
        let x = WIDTH - MARGIN - 170.0;
        for (i, (style, label)) in entries.iter().enumerate() {
            let y = MARGIN + 8.0 + 18.0 * i as f64;
            writeln!(
                self.0,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" {style}/><text x="{}" y="{}">{label}</text>"#,
                x + 28.0,
                x + 34.0,
                y + 4.0
            )
            .unwrap();
        }
    }

    fn finish(mut self) -> String {
        self.0.push_str("</svg>\n");
        self.0
    }
}

fn path_points(t: &Trajectory) -> impl Iterator<Item = (f64, f64)> + '_ {
    t.states.iter().map(|x| (x.z, x.y))
}

/// Top view: obstacle, seeds dashed, rollouts gray, final best bold.
pub fn workspace_svg(result: &RunResult, obstacle: &ObstacleEllipse) -> String {
    let mut pts: Vec<(f64, f64)> = vec![
        (obstacle.z_obs - obstacle.a_e, obstacle.y_obs - obstacle.b_e),
        (obstacle.z_obs + obstacle.a_e, obstacle.y_obs + obstacle.b_e),
    ];
    for (_, t) in &result.seeds {
        pts.extend(path_points(t));
    }
    for t in &result.rollouts {
        pts.extend(path_points(t));
    }
    let f = Frame::fit(pts, true);
    let mut svg = Svg::new();
    svg.axes(&f, "z", "y");

    let (cx, cy) = f.map(obstacle.z_obs, obstacle.y_obs);
    let (sx, sy) = f.scale();
    writeln!(
        svg.0,
        r##"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" fill="#bbb" stroke="#555"/>"##,
        obstacle.a_e * sx,
        obstacle.b_e * sy
    )
    .unwrap();
    for t in &result.rollouts {
        svg.polyline(&f, path_points(t), r##"stroke="#999" stroke-width="1" opacity="0.7""##);
    }
    for (m, t) in &result.seeds {
        let style = format!(r#"stroke="{}" stroke-width="1.5" stroke-dasharray="6 4""#, mode_color(m.0));
        svg.polyline(&f, path_points(t), &style);
    }
    let mut legend = vec![
        (r##"stroke="#555" stroke-dasharray="6 4""##, "seed".to_string()),
        (r##"stroke="#999""##, "rollout".to_string()),
    ];
    if let Some((m, t)) = result.best_overall() {
        let style = format!(r#"stroke="{}" stroke-width="3.5""#, mode_color(m.0));
        svg.polyline(&f, path_points(t), &style);
        legend.push((r##"stroke="#000" stroke-width="3.5""##, format!("final best ({})", t.cost)));
    } else {
        legend.push((r##"stroke="#000" stroke-width="3.5""##, "final best".to_string()));
    }
    svg.legend(&legend);
    svg.finish()
}

/// Realized cost per iteration for each run.
pub fn cost_svg(results: &[&RunResult]) -> String {
    let pts = results
        .iter()
        .flat_map(|r| r.iterations.iter().map(|l| (l.j as f64, f64::from(l.cost))));
    let f = Frame::fit(pts, false);
    let mut svg = Svg::new();
    svg.axes(&f, "iteration", "cost");
    let mut legend = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let style = format!(r#"stroke="{}" stroke-width="2""#, MODE_COLORS[i % MODE_COLORS.len()]);
        svg.polyline(&f, r.iterations.iter().map(|l| (l.j as f64, f64::from(l.cost))), &style);
        legend.push((style, r.algorithm.name().to_string()));
    }
    let legend: Vec<(&str, String)> = legend.iter().map(|(s, l)| (s.as_str(), l.clone())).collect();
    svg.legend(&legend);
    svg.finish()
}

/// Writes `workspace_<algorithm>.svg` for each run and `costs.svg`.
pub fn emit_plots(results: &[&RunResult], obstacle: &ObstacleEllipse, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for r in results {
        let p = dir.join(format!("workspace_{}.svg", r.algorithm.name()));
        write_atomic(&p, workspace_svg(r, obstacle).as_bytes())?;
        written.push(p);
    }
    let p = dir.join("costs.svg");
    write_atomic(&p, cost_svg(results).as_bytes())?;
    written.push(p);
    Ok(written)
}
