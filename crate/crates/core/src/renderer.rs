//! SVG diagrams of scenes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::constructor::Scene;
use crate::numeric::Coord;
use crate::statement::{PointId, Segment, Statement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramStyle {
    pub width: f64,
    pub height: f64,
    pub stroke_width: f64,
    pub mark_stroke_width: f64,
    pub font_size: f64,
    pub label_offset: f64,
    pub mark_size: f64,
    pub dot_radius: f64,
    pub show_right_angle_marks: bool,
    pub show_equal_tick_marks: bool,
    pub show_point_dots: bool,
}

impl Default for DiagramStyle {
    fn default() -> Self {
        DiagramStyle {
            width: 480.0,
            height: 480.0,
            stroke_width: 1.6,
            mark_stroke_width: 1.2,
            font_size: 16.0,
            label_offset: 14.0,
            mark_size: 10.0,
            dot_radius: 2.5,
            show_right_angle_marks: true,
            show_equal_tick_marks: true,
            show_point_dots: true,
        }
    }
}

impl DiagramStyle {
    pub fn is_valid(&self) -> bool {
        [
            self.width,
            self.height,
            self.stroke_width,
            self.mark_stroke_width,
            self.font_size,
            self.label_offset,
            self.mark_size,
            self.dot_radius,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }
}

const MARGIN: f64 = 0.05;

/// Scene-to-canvas map: uniform scale, y flipped.
struct View {
    scale: f64,
    ox: f64,
    oy: f64,
    height: f64,
}

impl View {
    fn fit(min: Coord, max: Coord, style: &DiagramStyle) -> View {
        let (w, h) = ((max.x - min.x).max(1e-9), (max.y - min.y).max(1e-9));
        let inner = 1.0 - 2.0 * MARGIN;
        let scale = (style.width * inner / w).min(style.height * inner / h);
        let ox = (style.width - w * scale) / 2.0 - min.x * scale;
        let oy = (style.height - h * scale) / 2.0 - min.y * scale;
        View {
            scale,
            ox,
            oy,
            height: style.height,
        }
    }

    fn map(&self, c: Coord) -> Coord {
        Coord {
            x: c.x * self.scale + self.ox,
            y: self.height - (c.y * self.scale + self.oy),
        }
    }
}

fn seg(a: PointId, b: PointId) -> Option<Segment> {
    Segment::new(a, b).ok()
}

/// Segments a problem statement refers to.
fn referenced_segments(s: &Statement, coords: &[Coord]) -> Vec<Segment> {
    let angle_rays = |a: crate::statement::Angle| {
        let (p, v, q) = a.points();
        [seg(p, v), seg(v, q)]
    };
    let tri_sides = |t: crate::statement::Triangle| {
        let [a, b, c] = t.vertices();
        [seg(a, b), seg(b, c), seg(a, c)]
    };
    let out: Vec<Option<Segment>> = match s {
        Statement::Collinear(a, b, c) => {
            // The line through all three: join the farthest pair.
            let pts = [*a, *b, *c];
            let mut best = (0.0, seg(*a, *b));
            for i in 0..3 {
                for j in i + 1..3 {
                    let d = coords[pts[i].index()].dist(coords[pts[j].index()]);
                    if d > best.0 {
                        best = (d, seg(pts[i], pts[j]));
                    }
                }
            }
            vec![best.1]
        }
        Statement::Parallel(x, y)
        | Statement::Perpendicular(x, y)
        | Statement::EqualSegments(x, y)
        | Statement::SegmentRatio(x, y, _) => vec![Some(*x), Some(*y)],
        Statement::SegmentLength(x, _) => vec![Some(*x)],
        Statement::EqualAngles(a, b) => angle_rays(*a).into_iter().chain(angle_rays(*b)).collect(),
        Statement::AngleMeasure(a, _) | Statement::RightAngle(a) => angle_rays(*a).to_vec(),
        Statement::Midpoint(_, x) => vec![Some(*x)],
        Statement::OnCircle { radius, .. } => vec![Some(*radius)],
        Statement::CongruentTriangles(x, y) | Statement::SimilarTriangles(x, y) => {
            tri_sides(*x).into_iter().chain(tri_sides(*y)).collect()
        }
    };
    out.into_iter().flatten().collect()
}

/// Drops segments covered by a longer drawn segment on the same line.
fn remove_covered(segments: BTreeSet<Segment>, coords: &[Coord]) -> Vec<Segment> {
    let on_segment = |s: Segment, p: Coord| {
        let (a, b) = s.ends();
        let (ca, cb) = (coords[a.index()], coords[b.index()]);
        let len = ca.dist(cb);
        (cb.sub(ca).cross(p.sub(ca))).abs() <= 1e-9 * len * len
            && p.sub(ca).dot(p.sub(cb)) <= 1e-9 * len * len
    };
    let all: Vec<Segment> = segments.into_iter().collect();
    all.iter()
        .copied()
        .filter(|&s| {
            let (a, b) = s.ends();
            !all.iter().any(|&t| {
                t != s && on_segment(t, coords[a.index()]) && on_segment(t, coords[b.index()])
            })
        })
        .collect()
}

fn fmt(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Renders the scene. Identical inputs give identical bytes.
pub fn render_svg(scene: &Scene, style: &DiagramStyle) -> String {
    let coords = scene.geometry.coords();
    let s0 = &scene.initial_statements;

    let mut segments: BTreeSet<Segment> = scene.drawn_segments();
    for s in s0 {
        segments.extend(referenced_segments(s, coords));
    }
    let segments = remove_covered(segments, coords);

    // Circles keyed by centre and radius so repeats collapse.
    let mut circles: BTreeMap<(PointId, i64), f64> = BTreeMap::new();
    let mut add_circle = |c: PointId, r: f64| {
        circles.entry((c, (r * 1e6).round() as i64)).or_insert(r);
    };
    for (c, p) in scene.circles() {
        add_circle(c, coords[c.index()].dist(coords[p.index()]));
    }
    for s in s0 {
        if let Statement::OnCircle { center, radius, .. } = s {
            let (a, b) = radius.ends();
            add_circle(*center, coords[a.index()].dist(coords[b.index()]));
        }
    }

    let mut min = Coord {
        x: f64::INFINITY,
        y: f64::INFINITY,
    };
    let mut max = Coord {
        x: f64::NEG_INFINITY,
        y: f64::NEG_INFINITY,
    };
    let mut grow = |c: Coord, r: f64| {
        min = Coord {
            x: min.x.min(c.x - r),
            y: min.y.min(c.y - r),
        };
        max = Coord {
            x: max.x.max(c.x + r),
            y: max.y.max(c.y + r),
        };
    };
    for &c in coords {
        grow(c, 0.0);
    }
    for (&(c, _), &r) in &circles {
        grow(coords[c.index()], r);
    }
    if coords.is_empty() {
        min = Coord::new(0.0, 0.0);
        max = Coord::new(1.0, 1.0);
    }
    let view = View::fit(min, max, style);
    let px: Vec<Coord> = coords.iter().map(|&c| view.map(c)).collect();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = fmt(style.width),
        h = fmt(style.height)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<g fill="none" stroke="black" stroke-width="{}" stroke-linecap="round">"#,
        fmt(style.stroke_width)
    );
    for (&(c, _), &r) in &circles {
        let p = px[c.index()];
        let _ = writeln!(
            out,
            r#"<circle data-center="{}" cx="{}" cy="{}" r="{}"/>"#,
            c.label(),
            fmt(p.x),
            fmt(p.y),
            fmt(r * view.scale)
        );
    }
    for s in &segments {
        let (a, b) = s.ends();
        let (pa, pb) = (px[a.index()], px[b.index()]);
        let _ = writeln!(
            out,
            r#"<line data-seg="{}{}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            a.label(),
            b.label(),
            fmt(pa.x),
            fmt(pa.y),
            fmt(pb.x),
            fmt(pb.y)
        );
    }
    out.push_str("</g>\n");

    let mut marks = String::new();
    if style.show_right_angle_marks {
        for s in s0 {
            if let Statement::RightAngle(a) = s {
                let (p, v, q) = a.points();
                let pv = px[v.index()];
                let u = unit(px[p.index()].sub(pv));
                let w = unit(px[q.index()].sub(pv));
                let m = style.mark_size;
                let (c1, c2, c3) = (
                    pv.add(u.scale(m)),
                    pv.add(u.scale(m)).add(w.scale(m)),
                    pv.add(w.scale(m)),
                );
                let _ = writeln!(
                    marks,
                    r#"<path class="right-angle" d="M {} {} L {} {} L {} {}"/>"#,
                    fmt(c1.x),
                    fmt(c1.y),
                    fmt(c2.x),
                    fmt(c2.y),
                    fmt(c3.x),
                    fmt(c3.y)
                );
            }
        }
    }
    if style.show_equal_tick_marks {
        let mut group = 0usize;
        let mut ticked: BTreeSet<Segment> = BTreeSet::new();
        for s in s0 {
            if let Statement::EqualSegments(x, y) = s {
                group += 1;
                let count = (group - 1) % 3 + 1;
                for sg in [x, y] {
                    if ticked.insert(*sg) {
                        marks.push_str(&ticks(*sg, count, &px, style));
                    }
                }
            }
        }
    }
    if !marks.is_empty() {
        let _ = writeln!(
            out,
            r#"<g fill="none" stroke="black" stroke-width="{}">"#,
            fmt(style.mark_stroke_width)
        );
        out.push_str(&marks);
        out.push_str("</g>\n");
    }

    if style.show_point_dots {
        out.push_str("<g fill=\"black\" stroke=\"none\">\n");
        for p in &px {
            let r = style.dot_radius;
            let _ = writeln!(
                out,
                r#"<path class="dot" d="M {} {} a {r} {r} 0 1 0 {} 0 a {r} {r} 0 1 0 {} 0"/>"#,
                fmt(p.x - r),
                fmt(p.y),
                fmt(2.0 * r),
                fmt(-2.0 * r),
                r = fmt(r)
            );
        }
        out.push_str("</g>\n");
    }

    let anchors = label_anchors(&px, &segments, scene, style);
    let _ = writeln!(
        out,
        r#"<g font-family="sans-serif" font-size="{}" text-anchor="middle" dominant-baseline="central">"#,
        fmt(style.font_size)
    );
    for (i, a) in anchors.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            fmt(a.x),
            fmt(a.y),
            PointId::new(i as u16).label()
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn unit(v: Coord) -> Coord {
    let n = v.norm();
    if n == 0.0 {
        Coord { x: 0.0, y: 0.0 }
    } else {
        v.scale(1.0 / n)
    }
}

fn ticks(s: Segment, count: usize, px: &[Coord], style: &DiagramStyle) -> String {
    let (a, b) = s.ends();
    let (pa, pb) = (px[a.index()], px[b.index()]);
    let dir = unit(pb.sub(pa));
    let normal = Coord {
        x: -dir.y,
        y: dir.x,
    };
    let mid = pa.lerp(pb, 0.5);
    let half = style.mark_size * 0.6;
    let gap = style.mark_size * 0.4;
    let mut out = String::new();
    for k in 0..count {
        let offset = (k as f64 - (count as f64 - 1.0) / 2.0) * gap;
        let c = mid.add(dir.scale(offset));
        let (p, q) = (c.add(normal.scale(half)), c.sub(normal.scale(half)));
        let _ = writeln!(
            out,
            r#"<path class="tick" d="M {} {} L {} {}"/>"#,
            fmt(p.x),
            fmt(p.y),
            fmt(q.x),
            fmt(q.y)
        );
    }
    out
}

fn dist_to_segment(p: Coord, a: Coord, b: Coord) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, t))
}

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;
const PROBES: [(f64, f64); 8] = [
    (0.0, -1.0),
    (H, -H),
    (1.0, 0.0),
    (H, H),
    (0.0, 1.0),
    (-H, H),
    (-1.0, 0.0),
    (-H, -H),
];

/// Label positions: opposite the mean direction of incident lines, else the
/// first clear probe direction.
fn label_anchors(
    px: &[Coord],
    segments: &[Segment],
    scene: &Scene,
    style: &DiagramStyle,
) -> Vec<Coord> {
    let mut neighbours: Vec<Vec<Coord>> = vec![Vec::new(); px.len()];
    for s in segments {
        let (a, b) = s.ends();
        neighbours[a.index()].push(px[b.index()]);
        neighbours[b.index()].push(px[a.index()]);
    }
    // Points strictly inside a drawn segment see both directions along it.
    for (i, &p) in px.iter().enumerate() {
        for s in segments {
            let (a, b) = s.ends();
            if a.index() != i
                && b.index() != i
                && dist_to_segment(p, px[a.index()], px[b.index()]) < 0.5
            {
                neighbours[i].push(px[a.index()]);
                neighbours[i].push(px[b.index()]);
            }
        }
    }
    for (c, _) in scene.circles() {
        neighbours[c.index()].push(px[c.index()].add(Coord { x: 0.0, y: 1.0 }));
    }
    let clear = |cand: Coord, placed: &[Coord], own: usize| -> bool {
        let min_pt = style.font_size * 0.8;
        px.iter()
            .enumerate()
            .all(|(j, &q)| j == own || cand.dist(q) >= min_pt)
            && placed.iter().all(|&q| cand.dist(q) >= min_pt)
            && segments.iter().all(|s| {
                let (a, b) = s.ends();
                dist_to_segment(cand, px[a.index()], px[b.index()]) >= style.font_size * 0.45
            })
    };
    let mut placed: Vec<Coord> = Vec::with_capacity(px.len());
    for (i, &p) in px.iter().enumerate() {
        let mut sum = Coord { x: 0.0, y: 0.0 };
        for &q in &neighbours[i] {
            sum = sum.add(unit(q.sub(p)));
        }
        let mut candidates = Vec::with_capacity(9);
        if sum.norm() > 1e-6 {
            candidates.push(unit(sum).scale(-1.0));
        }
        candidates.extend(PROBES.iter().map(|&(x, y)| Coord { x, y }));
        let first = p.add(candidates[0].scale(style.label_offset));
        let mut chosen = candidates
            .iter()
            .map(|d| p.add(d.scale(style.label_offset)))
            .find(|&c| clear(c, &placed, i))
            .unwrap_or(first);
        // Anchors must never coincide.
        let mut k = 0;
        while placed.iter().any(|&q| q.dist(chosen) < 1e-3) {
            k += 1;
            chosen = p.add(
                Coord {
                    x: PROBES[k % 8].0,
                    y: PROBES[k % 8].1,
                }
                .scale(style.label_offset * (1.0 + k as f64 / 8.0)),
            );
        }
        placed.push(chosen);
    }
    placed
}
