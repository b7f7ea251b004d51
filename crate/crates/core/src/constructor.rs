//! Scene construction.
//!
//! A scene starts from one of the base generators and grows by applying
//! constructions whose preconditions hold. Each applied step records the
//! points it introduced, the segments and circles it draws, and its effect
//! statements; the union of all effects is the scene's initial statement
//! set S₀. Placement is deterministic given the RNG seed.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::ops::{Add, Sub};

use num_integer::Roots;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{angle_at, check_scene, side_of, Coord, SceneGeometry};
use crate::statement::{PointId, Rational, Segment, Statement, StatementError, StatementSet};

/// Maximum number of points in a scene.
pub const MAX_POINTS: usize = 12;
/// Placement retries before a generator or construction gives up.
pub const PLACEMENT_ATTEMPTS: usize = 50;
/// Scenes live in `[0, CANVAS]²`.
pub const CANVAS: f64 = 10.0;
/// Minimum distance between a new point and every existing point.
const CLEARANCE: f64 = 0.35;
/// Margin kept between generated figures and the canvas edge.
const MARGIN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstructError {
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("unknown construction `{0}`")]
    UnknownConstruction(String),
    #[error("placement failed for `{0}` after {PLACEMENT_ATTEMPTS} attempts")]
    PlacementFailure(String),
    #[error("construction `{name}` is not applicable to binding {binding:?}")]
    NotApplicable { name: String, binding: Vec<PointId> },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Statement(#[from] StatementError),
}

/// Base scene generators shipped with the engine.
pub const GENERATORS: [&str; 12] = [
    "scalene_triangle",
    "isosceles_triangle",
    "equilateral_triangle",
    "right_triangle",
    "rectangle",
    "square",
    "parallelogram",
    "trapezoid",
    "circle_inscribed_triangle",
    "circle_diameter_point",
    "parallel_transversal",
    "triangle_cevian",
];

/// Scene-extending constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Construction {
    /// `(A, B)`: midpoint of a drawn segment.
    Midpoint,
    /// `(A, B, C)`: foot of the perpendicular from A onto segment BC.
    PerpendicularFoot,
    /// `(A, B, C)`: where the bisector of ∠ABC meets side AC.
    AngleBisectorPoint,
    /// `(P, A, B)`: a point Q with PQ ∥ AB.
    ParallelThroughPoint,
    /// `(A, B)`: extend AB beyond B.
    SegmentExtension,
    /// `(P, Q, R, S)`: join P and Q, marking where PQ crosses drawn segment RS.
    ConnectPoints,
    /// `(A, B, C)`: circumcentre of a drawn triangle.
    Circumcenter,
    /// `(A, B, C)`: median from A to side BC.
    Median,
    /// `(P, A, B)`: reflection of P across line AB.
    ReflectPoint,
    /// `(A, B, C)`: midpoints of AB and AC.
    MidsegmentEndpoints,
}

impl Construction {
    pub const ALL: [Construction; 10] = [
        Construction::Midpoint,
        Construction::PerpendicularFoot,
        Construction::AngleBisectorPoint,
        Construction::ParallelThroughPoint,
        Construction::SegmentExtension,
        Construction::ConnectPoints,
        Construction::Circumcenter,
        Construction::Median,
        Construction::ReflectPoint,
        Construction::MidsegmentEndpoints,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Construction::Midpoint => "midpoint",
            Construction::PerpendicularFoot => "perpendicular_foot",
            Construction::AngleBisectorPoint => "angle_bisector_point",
            Construction::ParallelThroughPoint => "parallel_through_point",
            Construction::SegmentExtension => "segment_extension",
            Construction::ConnectPoints => "connect_points",
            Construction::Circumcenter => "circumcenter",
            Construction::Median => "median",
            Construction::ReflectPoint => "reflect_point",
            Construction::MidsegmentEndpoints => "midsegment_endpoints",
        }
    }

    pub fn from_name(name: &str) -> Option<Construction> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    fn arity(self) -> usize {
        match self {
            Construction::Midpoint | Construction::SegmentExtension => 2,
            Construction::ConnectPoints => 4,
            _ => 3,
        }
    }

    fn new_points(self) -> usize {
        match self {
            Construction::MidsegmentEndpoints => 2,
            _ => 1,
        }
    }

    fn is_randomized(self) -> bool {
        matches!(
            self,
            Construction::ParallelThroughPoint | Construction::SegmentExtension
        )
    }
}

/// One step of a scene's construction history.
#[derive(Clone, Debug, PartialEq)]
pub struct AppliedConstruction {
    /// Construction or base-generator name.
    pub name: String,
    pub binding: Vec<PointId>,
    pub new_points: Vec<PointId>,
    /// Segments the step draws.
    pub segments: Vec<Segment>,
    /// Circles the step draws, as (centre, point on circle).
    pub circles: Vec<(PointId, PointId)>,
    pub effects: Vec<Statement>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub generator: String,
    pub geometry: SceneGeometry,
    pub constructions: Vec<AppliedConstruction>,
    pub initial_statements: StatementSet,
}

/// A construction together with the points it is applied to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Application {
    pub construction: Construction,
    pub binding: Vec<PointId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendOutcome {
    pub scene: Scene,
    pub applied: usize,
    /// Set when no construction was applicable before `steps` were applied.
    pub short: bool,
}

impl Scene {
    pub fn num_points(&self) -> usize {
        self.geometry.len()
    }

    pub fn points(&self) -> Vec<PointId> {
        self.geometry.point_ids().collect()
    }

    /// Segments drawn by any construction step.
    pub fn drawn_segments(&self) -> BTreeSet<Segment> {
        self.constructions
            .iter()
            .flat_map(|c| c.segments.iter().copied())
            .collect()
    }

    pub fn circles(&self) -> BTreeSet<(PointId, PointId)> {
        self.constructions
            .iter()
            .flat_map(|c| c.circles.iter().copied())
            .collect()
    }

    fn has_segment(&self, drawn: &BTreeSet<Segment>, a: PointId, b: PointId) -> bool {
        Segment::new(a, b).is_ok_and(|s| drawn.contains(&s))
    }

    fn coord(&self, p: PointId) -> Coord {
        self.geometry.coord(p).expect("bound point exists")
    }

    pub fn to_json(&self) -> SceneJson {
        SceneJson::from(self)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("scene serializes")
    }
}

type Rng = ChaCha8Rng;

fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

fn polar(deg: f64, len: f64) -> Coord {
    let t = deg.to_radians();
    Coord::new(len * t.cos(), len * t.sin())
}

fn line_intersection(p: Coord, u: Coord, q: Coord, w: Coord) -> Option<Coord> {
    let d = u.cross(w);
    if d.abs() < 1e-12 {
        return None;
    }
    let t = q.sub(p).cross(w) / d;
    Some(p.add(u.scale(t)))
}

/// Rotates a local-frame figure by a random angle and places it inside the
/// canvas with a margin; `None` when it does not fit.
fn fit_to_canvas(local: &[Coord], rng: &mut Rng) -> Option<Vec<Coord>> {
    let theta: f64 = rng.random_range(0.0..2.0 * PI);
    let (s, c) = theta.sin_cos();
    let rotated: Vec<Coord> = local
        .iter()
        .map(|p| Coord::new(c * p.x - s * p.y, s * p.x + c * p.y))
        .collect();
    let min_x = rotated.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = rotated
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_y = rotated.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = rotated
        .iter()
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max);
    let room_x = CANVAS - 2.0 * MARGIN - (max_x - min_x);
    let room_y = CANVAS - 2.0 * MARGIN - (max_y - min_y);
    if room_x < 0.0 || room_y < 0.0 {
        return None;
    }
    let ox = MARGIN + rng.random_range(0.0..=room_x) - min_x;
    let oy = MARGIN + rng.random_range(0.0..=room_y) - min_y;
    Some(
        rotated
            .into_iter()
            .map(|p| Coord::new(p.x + ox, p.y + oy))
            .collect(),
    )
}

fn pid(i: usize) -> PointId {
    PointId::new(i as u16)
}

fn segs(pairs: &[(usize, usize)]) -> Vec<Segment> {
    pairs
        .iter()
        .map(|&(a, b)| Segment::new(pid(a), pid(b)).expect("distinct"))
        .collect()
}

/// A base figure in its local frame.
struct BaseFigure {
    local: Vec<Coord>,
    segments: Vec<Segment>,
    circles: Vec<(PointId, PointId)>,
    effects: Vec<Statement>,
}

fn draw_base(generator: &str, rng: &mut Rng) -> Result<BaseFigure, ConstructError> {
    let [a, b, c, d, e, f] = [0, 1, 2, 3, 4, 5].map(pid);
    let triangle_segments = segs(&[(0, 1), (1, 2), (0, 2)]);
    let quad_segments = segs(&[(0, 1), (1, 2), (2, 3), (0, 3)]);
    let fig = match generator {
        "scalene_triangle" => {
            let (alpha, beta) = loop {
                let alpha = rng.random_range(30..=100i64);
                let beta = rng.random_range(25..=(150 - alpha));
                let gamma = 180 - alpha - beta;
                if gamma >= 20 && alpha != beta && beta != gamma && alpha != gamma {
                    break (alpha, beta);
                }
            };
            let len = rng.random_range(4.0..7.5);
            let pa = Coord::new(0.0, 0.0);
            let pb = Coord::new(len, 0.0);
            let pc = line_intersection(
                pa,
                polar(alpha as f64, 1.0),
                pb,
                polar(180.0 - beta as f64, 1.0),
            )
            .expect("non-parallel sides");
            BaseFigure {
                local: vec![pa, pb, pc],
                segments: triangle_segments,
                circles: vec![],
                effects: vec![
                    Statement::angle_val(b, a, c, int(alpha)),
                    Statement::angle_val(a, b, c, int(beta)),
                ],
            }
        }
        "isosceles_triangle" => {
            let apex = rng.random_range(30..=120i64);
            let leg = rng.random_range(4.0..6.5);
            let half = (apex as f64 / 2.0).to_radians();
            let pa = Coord::new(0.0, leg * half.cos());
            let pb = Coord::new(-leg * half.sin(), 0.0);
            let pc = Coord::new(leg * half.sin(), 0.0);
            BaseFigure {
                local: vec![pa, pb, pc],
                segments: triangle_segments,
                circles: vec![],
                effects: vec![
                    Statement::eq_seg(a, b, a, c),
                    Statement::eq_angle([a, b, c], [a, c, b]),
                    Statement::angle_val(b, a, c, int(apex)),
                ],
            }
        }
        "equilateral_triangle" => {
            let side = rng.random_range(3..=8i64);
            let s = side as f64;
            BaseFigure {
                local: vec![
                    Coord::new(0.0, 0.0),
                    Coord::new(s, 0.0),
                    Coord::new(s / 2.0, s * 3f64.sqrt() / 2.0),
                ],
                segments: triangle_segments,
                circles: vec![],
                effects: vec![
                    Statement::eq_seg(a, b, a, c),
                    Statement::eq_seg(a, b, b, c),
                    Statement::seg_len(a, b, int(side)),
                ],
            }
        }
        "right_triangle" => {
            const TRIPLES: [(i64, i64); 6] = [(3, 4), (4, 3), (6, 8), (8, 6), (5, 12), (12, 5)];
            let (p, q) = TRIPLES[rng.random_range(0..TRIPLES.len())];
            // Halve the big triples so the hypotenuse fits the canvas.
            let scale = if p + q > 10 {
                Rational::new(1, 2)
            } else {
                int(1)
            };
            let (la, lc) = (int(p) * scale, int(q) * scale);
            let f64_of = |r: Rational| *r.numer() as f64 / *r.denom() as f64;
            BaseFigure {
                local: vec![
                    Coord::new(0.0, f64_of(la)),
                    Coord::new(0.0, 0.0),
                    Coord::new(f64_of(lc), 0.0),
                ],
                segments: triangle_segments,
                circles: vec![],
                effects: vec![
                    Statement::right_angle(a, b, c),
                    Statement::seg_len(a, b, la),
                    if rng.random_bool(0.5) {
                        Statement::seg_len(b, c, lc)
                    } else {
                        let hyp = (p * p + q * q).sqrt();
                        Statement::seg_len(a, c, int(hyp) * scale)
                    },
                ],
            }
        }
        "rectangle" | "square" => {
            let w = rng.random_range(3..=7i64);
            let h = if generator == "square" {
                w
            } else {
                loop {
                    let h = rng.random_range(2..=6i64);
                    if h != w {
                        break h;
                    }
                }
            };
            let (wf, hf) = (w as f64, h as f64);
            let mut effects = vec![
                Statement::parallel(a, b, d, c),
                Statement::parallel(a, d, b, c),
                Statement::right_angle(d, a, b),
                Statement::seg_len(a, b, int(w)),
            ];
            if generator == "square" {
                effects.push(Statement::eq_seg(a, b, a, d));
            } else {
                effects.push(Statement::seg_len(a, d, int(h)));
            }
            BaseFigure {
                local: vec![
                    Coord::new(0.0, 0.0),
                    Coord::new(wf, 0.0),
                    Coord::new(wf, hf),
                    Coord::new(0.0, hf),
                ],
                segments: quad_segments,
                circles: vec![],
                effects,
            }
        }
        "parallelogram" => {
            let alpha = rng.random_range(40..=80i64);
            let w = rng.random_range(3..=6i64);
            let h = rng.random_range(2..=4i64);
            let side = polar(alpha as f64, h as f64);
            let pa = Coord::new(0.0, 0.0);
            let pb = Coord::new(w as f64, 0.0);
            BaseFigure {
                local: vec![pa, pb, pb.add(side), pa.add(side)],
                segments: quad_segments,
                circles: vec![],
                effects: vec![
                    Statement::parallel(a, b, d, c),
                    Statement::parallel(a, d, b, c),
                    Statement::angle_val(d, a, b, int(alpha)),
                    Statement::seg_len(a, b, int(w)),
                    Statement::seg_len(a, d, int(h)),
                ],
            }
        }
        "trapezoid" => {
            let alpha = rng.random_range(45..=80i64);
            let beta = loop {
                let beta = rng.random_range(45..=80i64);
                if beta != alpha {
                    break beta;
                }
            };
            let base = rng.random_range(6.5..8.0);
            let (pd, pc) = loop {
                let height = rng.random_range(2.0..4.0);
                let pd = Coord::new(height / (alpha as f64).to_radians().tan(), height);
                let pc = Coord::new(base - height / (beta as f64).to_radians().tan(), height);
                if pc.x - pd.x >= 1.5 {
                    break (pd, pc);
                }
            };
            let pa = Coord::new(0.0, 0.0);
            let pb = Coord::new(base, 0.0);
            BaseFigure {
                local: vec![pa, pb, pc, pd],
                segments: quad_segments,
                circles: vec![],
                effects: vec![
                    Statement::parallel(a, b, d, c),
                    Statement::angle_val(d, a, b, int(alpha)),
                    Statement::angle_val(a, b, c, int(beta)),
                ],
            }
        }
        "circle_inscribed_triangle" => {
            // A, B, C on the circle centred at D; C on the major arc AB.
            let central = 2 * rng.random_range(30..=80i64);
            let radius = rng.random_range(3.0..4.2);
            let phi = rng.random_range((central as f64 + 40.0)..320.0);
            let centre = Coord::new(0.0, 0.0);
            BaseFigure {
                local: vec![
                    polar(0.0, radius),
                    polar(central as f64, radius),
                    polar(phi, radius),
                    centre,
                ],
                segments: segs(&[(0, 2), (1, 2), (0, 3), (1, 3)]),
                circles: vec![(d, a)],
                effects: vec![
                    Statement::on_circle(b, d, d, a),
                    Statement::on_circle(c, d, d, a),
                    Statement::angle_val(a, d, b, int(central)),
                ],
            }
        }
        "circle_diameter_point" => {
            // Diameter AB with centre C, D on the circle.
            let alpha = rng.random_range(20..=70i64);
            let radius = rng.random_range(3.0..4.2);
            let pa = Coord::new(-radius, 0.0);
            let pb = Coord::new(radius, 0.0);
            // Inscribed angle ∠DAB = alpha subtends arc DB, so ∠DCB = 2·alpha.
            let pd = polar(2.0 * alpha as f64, radius);
            BaseFigure {
                local: vec![pa, pb, Coord::new(0.0, 0.0), pd],
                segments: segs(&[(0, 1), (0, 3), (1, 3)]),
                circles: vec![(c, a)],
                effects: vec![
                    Statement::midpoint(c, a, b),
                    Statement::on_circle(d, c, c, a),
                    Statement::angle_val(d, a, b, int(alpha)),
                ],
            }
        }
        "parallel_transversal" => {
            // AB ∥ CD with transversal E-B-C-F; A and D on opposite sides of BC.
            let x = rng.random_range(40..=140i64);
            let gap = rng.random_range(2.5..4.0);
            let dir = polar(x as f64, 1.0);
            let pb = Coord::new(0.0, gap);
            let pc = line_intersection(
                pb,
                dir.scale(-1.0),
                Coord::new(0.0, 0.0),
                Coord::new(1.0, 0.0),
            )
            .expect("transversal crosses the lower line");
            let pa = pb.add(Coord::new(-rng.random_range(2.0..3.5), 0.0));
            let pd = pc.add(Coord::new(rng.random_range(2.0..3.5), 0.0));
            let pe = pb.add(dir.scale(rng.random_range(1.2..2.0)));
            let pf = pc.add(dir.scale(-rng.random_range(1.2..2.0)));
            BaseFigure {
                local: vec![pa, pb, pc, pd, pe, pf],
                segments: segs(&[(0, 1), (2, 3), (4, 1), (1, 2), (2, 5)]),
                circles: vec![],
                effects: vec![
                    Statement::parallel(a, b, c, d),
                    Statement::collinear(e, b, c),
                    Statement::collinear(b, c, f),
                    Statement::angle_val(a, b, e, int(180 - x)),
                ],
            }
        }
        "triangle_cevian" => {
            let (a1, a2, beta) = loop {
                let a1 = rng.random_range(20..=60i64);
                let a2 = rng.random_range(20..=60i64);
                let beta = rng.random_range(30..=80i64);
                if 180 - a1 - a2 - beta >= 25 && a1 != a2 {
                    break (a1, a2, beta);
                }
            };
            let len = rng.random_range(5.0..7.5);
            let pb = Coord::new(0.0, 0.0);
            let pc = Coord::new(len, 0.0);
            let pa = line_intersection(
                pb,
                polar(beta as f64, 1.0),
                pc,
                polar(180.0 - (180 - a1 - a2 - beta) as f64, 1.0),
            )
            .expect("non-parallel sides");
            let pd = line_intersection(
                pa,
                polar(-90.0 - (90 - beta - a1) as f64, 1.0),
                pb,
                Coord::new(1.0, 0.0),
            )
            .expect("cevian meets base");
            BaseFigure {
                local: vec![pa, pb, pc, pd],
                segments: segs(&[(0, 1), (0, 2), (1, 3), (3, 2), (0, 3)]),
                circles: vec![],
                effects: vec![
                    Statement::collinear(b, d, c),
                    Statement::angle_val(b, a, d, int(a1)),
                    Statement::angle_val(d, a, c, int(a2)),
                    Statement::angle_val(a, b, c, int(beta)),
                ],
            }
        }
        other => return Err(ConstructError::UnknownGenerator(other.to_string())),
    };
    Ok(fig)
}

fn scene_is_clean(g: &SceneGeometry) -> bool {
    let pts = g.coords();
    let inside = pts
        .iter()
        .all(|p| (0.0..=CANVAS).contains(&p.x) && (0.0..=CANVAS).contains(&p.y));
    let spread = pts
        .iter()
        .enumerate()
        .all(|(i, p)| pts[i + 1..].iter().all(|q| p.dist(*q) >= CLEARANCE));
    inside && spread
}

/// Builds a base scene from the catalog.
pub fn generate_base_scene(generator: &str, seed: u64) -> Result<Scene, ConstructError> {
    if !GENERATORS.contains(&generator) {
        return Err(ConstructError::UnknownGenerator(generator.to_string()));
    }
    let mut rng = Rng::seed_from_u64(seed);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let fig = draw_base(generator, &mut rng)?;
        let Some(coords) = fit_to_canvas(&fig.local, &mut rng) else {
            continue;
        };
        let geometry = SceneGeometry::new(coords);
        let initial: StatementSet = fig.effects.iter().cloned().collect();
        if !scene_is_clean(&geometry) || !check_scene(&geometry, &initial).is_valid() {
            continue;
        }
        let new_points = geometry.point_ids().collect();
        return Ok(Scene {
            seed,
            generator: generator.to_string(),
            geometry,
            constructions: vec![AppliedConstruction {
                name: generator.to_string(),
                binding: vec![],
                new_points,
                segments: fig.segments,
                circles: fig.circles,
                effects: fig.effects,
            }],
            initial_statements: initial,
        });
    }
    Err(ConstructError::PlacementFailure(generator.to_string()))
}

fn segment_param(p: Coord, a: Coord, b: Coord) -> f64 {
    let ab = b.sub(a);
    p.sub(a).dot(ab) / ab.dot(ab)
}

fn sine_at(a: Coord, v: Coord, b: Coord) -> f64 {
    angle_at(a, v, b).map_or(0.0, |t| t.to_radians().sin())
}

/// Minimum sine for "not collinear" preconditions (about 10°).
const MIN_SINE: f64 = 0.17;

struct Placement {
    coords: Vec<Coord>,
    segments: Vec<(PointId, PointId)>,
    circles: Vec<(PointId, PointId)>,
    effects: Vec<Statement>,
}

/// Structural preconditions (drawn segments, point roles).
fn structurally_applicable(
    scene: &Scene,
    drawn: &BTreeSet<Segment>,
    c: Construction,
    b: &[PointId],
) -> bool {
    let has = |x: PointId, y: PointId| scene.has_segment(drawn, x, y);
    let tri = |x, y, z| has(x, y) && has(y, z) && has(x, z);
    match c {
        Construction::Midpoint | Construction::SegmentExtension => has(b[0], b[1]),
        Construction::PerpendicularFoot
        | Construction::ParallelThroughPoint
        | Construction::ReflectPoint => has(b[1], b[2]) && b[1] < b[2],
        Construction::AngleBisectorPoint => tri(b[0], b[1], b[2]) && b[0] < b[2],
        Construction::Circumcenter => tri(b[0], b[1], b[2]) && b[0] < b[1] && b[1] < b[2],
        Construction::Median => tri(b[0], b[1], b[2]) && b[1] < b[2],
        Construction::MidsegmentEndpoints => tri(b[0], b[1], b[2]) && b[1] < b[2],
        Construction::ConnectPoints => {
            !has(b[0], b[1]) && b[0] < b[1] && has(b[2], b[3]) && b[2] < b[3]
        }
    }
}

/// Computes the new points and effects; `None` on numeric degeneracy.
fn place(
    scene: &Scene,
    c: Construction,
    b: &[PointId],
    rng: Option<&mut Rng>,
) -> Option<Placement> {
    let n = scene.num_points();
    let new = |k: usize| pid(n + k);
    let xy = |p: PointId| scene.coord(p);
    let p = match c {
        Construction::Midpoint => {
            let m = xy(b[0]).lerp(xy(b[1]), 0.5);
            Placement {
                coords: vec![m],
                segments: vec![(b[0], new(0)), (new(0), b[1])],
                circles: vec![],
                effects: vec![Statement::midpoint(new(0), b[0], b[1])],
            }
        }
        Construction::PerpendicularFoot => {
            let (pa, pb, pc) = (xy(b[0]), xy(b[1]), xy(b[2]));
            if sine_at(pa, pb, pc) < MIN_SINE || sine_at(pa, pc, pb) < MIN_SINE {
                return None;
            }
            let t = segment_param(pa, pb, pc);
            if !(0.1..=0.9).contains(&t) {
                return None;
            }
            Placement {
                coords: vec![pb.lerp(pc, t)],
                segments: vec![(b[0], new(0)), (b[1], new(0)), (new(0), b[2])],
                circles: vec![],
                effects: vec![
                    Statement::perpendicular(b[0], new(0), b[1], b[2]),
                    Statement::collinear(b[1], new(0), b[2]),
                ],
            }
        }
        Construction::AngleBisectorPoint => {
            let (pa, pv, pc) = (xy(b[0]), xy(b[1]), xy(b[2]));
            let (la, lc) = (pv.dist(pa), pv.dist(pc));
            if sine_at(pa, pv, pc) < MIN_SINE {
                return None;
            }
            // Angle bisector theorem: AD / DC = BA / BC.
            let t = la / (la + lc);
            Placement {
                coords: vec![pa.lerp(pc, t)],
                segments: vec![(b[1], new(0)), (b[0], new(0)), (new(0), b[2])],
                circles: vec![],
                effects: vec![
                    Statement::eq_angle([b[0], b[1], new(0)], [new(0), b[1], b[2]]),
                    Statement::collinear(b[0], new(0), b[2]),
                ],
            }
        }
        Construction::ParallelThroughPoint => {
            let (pp, pa, pb) = (xy(b[0]), xy(b[1]), xy(b[2]));
            if sine_at(pp, pa, pb) < MIN_SINE && sine_at(pp, pb, pa) < MIN_SINE {
                return None;
            }
            let rng = rng?;
            let mag: f64 = rng.random_range(0.4..1.0);
            let t = if rng.random_bool(0.5) { mag } else { -mag };
            Placement {
                coords: vec![pp.add(pb.sub(pa).scale(t))],
                segments: vec![(b[0], new(0))],
                circles: vec![],
                effects: vec![Statement::parallel(b[0], new(0), b[1], b[2])],
            }
        }
        Construction::SegmentExtension => {
            let rng = rng?;
            let t: f64 = rng.random_range(0.3..0.8);
            let (pa, pb) = (xy(b[0]), xy(b[1]));
            Placement {
                coords: vec![pb.add(pb.sub(pa).scale(t))],
                segments: vec![(b[1], new(0))],
                circles: vec![],
                effects: vec![Statement::collinear(b[0], b[1], new(0))],
            }
        }
        Construction::ConnectPoints => {
            if b[2..].contains(&b[0]) || b[2..].contains(&b[1]) {
                return None;
            }
            let (pp, pq, pr, ps) = (xy(b[0]), xy(b[1]), xy(b[2]), xy(b[3]));
            let x = line_intersection(pp, pq.sub(pp), pr, ps.sub(pr))?;
            let t1 = segment_param(x, pp, pq);
            let t2 = segment_param(x, pr, ps);
            if !(0.1..=0.9).contains(&t1)
                || !(0.1..=0.9).contains(&t2)
                || sine_at(pp, x, pr) < MIN_SINE
            {
                return None;
            }
            Placement {
                coords: vec![x],
                segments: vec![
                    (b[0], new(0)),
                    (new(0), b[1]),
                    (b[2], new(0)),
                    (new(0), b[3]),
                ],
                circles: vec![],
                effects: vec![
                    Statement::collinear(b[0], new(0), b[1]),
                    Statement::collinear(b[2], new(0), b[3]),
                ],
            }
        }
        Construction::Circumcenter => {
            let (pa, pb, pc) = (xy(b[0]), xy(b[1]), xy(b[2]));
            let mab = pa.lerp(pb, 0.5);
            let mac = pa.lerp(pc, 0.5);
            let ab = pb.sub(pa);
            let ac = pc.sub(pa);
            let o = line_intersection(mab, Coord::new(-ab.y, ab.x), mac, Coord::new(-ac.y, ac.x))?;
            Placement {
                coords: vec![o],
                segments: vec![],
                circles: vec![(new(0), b[0])],
                effects: vec![
                    Statement::on_circle(b[1], new(0), new(0), b[0]),
                    Statement::on_circle(b[2], new(0), new(0), b[0]),
                ],
            }
        }
        Construction::Median => Placement {
            coords: vec![xy(b[1]).lerp(xy(b[2]), 0.5)],
            segments: vec![(b[0], new(0)), (b[1], new(0)), (new(0), b[2])],
            circles: vec![],
            effects: vec![Statement::midpoint(new(0), b[1], b[2])],
        },
        Construction::ReflectPoint => {
            let (pp, pa, pb) = (xy(b[0]), xy(b[1]), xy(b[2]));
            if sine_at(pp, pa, pb) < MIN_SINE || sine_at(pp, pb, pa) < MIN_SINE {
                return None;
            }
            let foot = pa.lerp(pb, segment_param(pp, pa, pb));
            Placement {
                coords: vec![foot.scale(2.0).sub(pp)],
                segments: vec![(b[1], new(0)), (b[2], new(0))],
                circles: vec![],
                effects: vec![
                    Statement::eq_seg(b[1], b[0], b[1], new(0)),
                    Statement::eq_seg(b[2], b[0], b[2], new(0)),
                ],
            }
        }
        Construction::MidsegmentEndpoints => {
            let (pa, pb, pc) = (xy(b[0]), xy(b[1]), xy(b[2]));
            Placement {
                coords: vec![pa.lerp(pb, 0.5), pa.lerp(pc, 0.5)],
                segments: vec![
                    (new(0), new(1)),
                    (b[0], new(0)),
                    (new(0), b[1]),
                    (b[0], new(1)),
                    (new(1), b[2]),
                ],
                circles: vec![],
                effects: vec![
                    Statement::midpoint(new(0), b[0], b[1]),
                    Statement::midpoint(new(1), b[0], b[2]),
                ],
            }
        }
    };
    Some(p)
}

/// Commits a placement if the resulting scene is clean and valid.
fn commit(scene: &Scene, c: Construction, binding: &[PointId], p: Placement) -> Option<Scene> {
    let existing = scene.geometry.coords();
    for q in &p.coords {
        if !q.is_finite() || !(0.0..=CANVAS).contains(&q.x) || !(0.0..=CANVAS).contains(&q.y) {
            return None;
        }
        if existing.iter().any(|e| e.dist(*q) < CLEARANCE) {
            return None;
        }
    }
    if p.coords.len() == 2 && p.coords[0].dist(p.coords[1]) < CLEARANCE {
        return None;
    }
    let mut next = scene.clone();
    let new_points: Vec<PointId> = p.coords.iter().map(|&q| next.geometry.push(q)).collect();
    for s in &p.effects {
        next.initial_statements.insert(s.clone());
    }
    if !check_scene(&next.geometry, &next.initial_statements).is_valid() {
        return None;
    }
    next.constructions.push(AppliedConstruction {
        name: c.name().to_string(),
        binding: binding.to_vec(),
        new_points,
        segments: p
            .segments
            .iter()
            .map(|&(a, b)| Segment::new(a, b).expect("distinct points"))
            .collect(),
        circles: p.circles,
        effects: p.effects,
    });
    Some(next)
}

fn bindings(n: usize, k: usize) -> Vec<Vec<PointId>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, cur: &mut Vec<PointId>, out: &mut Vec<Vec<PointId>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            let p = pid(i);
            if !cur.contains(&p) {
                cur.push(p);
                rec(n, k, cur, out);
                cur.pop();
            }
        }
    }
    rec(n, k, &mut cur, &mut out);
    out
}

/// Every applicable (construction, binding) pair, in catalog then binding order.
pub fn applicable_constructions(scene: &Scene) -> Vec<Application> {
    applicable_within(scene, MAX_POINTS)
}

fn applicable_within(scene: &Scene, cap: usize) -> Vec<Application> {
    let drawn = scene.drawn_segments();
    let n = scene.num_points();
    let mut out = Vec::new();
    for c in Construction::ALL {
        if n + c.new_points() > cap {
            continue;
        }
        for binding in bindings(n, c.arity()) {
            if !structurally_applicable(scene, &drawn, c, &binding) {
                continue;
            }
            // Deterministic placers are dry-run here; randomized ones are
            // checked for their non-random preconditions only.
            let ok = if c.is_randomized() {
                let mut probe = Rng::seed_from_u64(0);
                place(scene, c, &binding, Some(&mut probe)).is_some()
            } else {
                place(scene, c, &binding, None)
                    .and_then(|p| commit(scene, c, &binding, p))
                    .is_some()
            };
            if ok {
                out.push(Application {
                    construction: c,
                    binding,
                });
            }
        }
    }
    out
}

/// Applies one construction, resampling randomized placements.
pub fn apply_construction(
    scene: &Scene,
    app: &Application,
    rng: &mut Rng,
) -> Result<Scene, ConstructError> {
    apply_within(scene, app, rng, MAX_POINTS)
}

fn apply_within(
    scene: &Scene,
    app: &Application,
    rng: &mut Rng,
    cap: usize,
) -> Result<Scene, ConstructError> {
    let c = app.construction;
    if app.binding.len() != c.arity()
        || app.binding.iter().any(|p| p.index() >= scene.num_points())
        || !structurally_applicable(scene, &scene.drawn_segments(), c, &app.binding)
        || scene.num_points() + c.new_points() > cap
    {
        return Err(ConstructError::NotApplicable {
            name: c.name().to_string(),
            binding: app.binding.clone(),
        });
    }
    let attempts = if c.is_randomized() {
        PLACEMENT_ATTEMPTS
    } else {
        1
    };
    for _ in 0..attempts {
        if let Some(next) =
            place(scene, c, &app.binding, Some(rng)).and_then(|p| commit(scene, c, &app.binding, p))
        {
            return Ok(next);
        }
    }
    Err(ConstructError::PlacementFailure(c.name().to_string()))
}

/// Applies `steps` randomly chosen applicable constructions.
pub fn extend_scene(scene: &Scene, steps: usize, seed: u64) -> ExtendOutcome {
    extend_scene_within(scene, steps, seed, MAX_POINTS)
}

/// `extend_scene` with an explicit point cap.
pub fn extend_scene_within(scene: &Scene, steps: usize, seed: u64, cap: usize) -> ExtendOutcome {
    let mut rng = Rng::seed_from_u64(seed);
    let mut current = scene.clone();
    let mut applied = 0;
    while applied < steps {
        let mut candidates = applicable_within(&current, cap);
        let mut next = None;
        while !candidates.is_empty() {
            let pick = candidates.remove(rng.random_range(0..candidates.len()));
            if let Ok(s) = apply_within(&current, &pick, &mut rng, cap) {
                next = Some(s);
                break;
            }
        }
        match next {
            Some(s) => {
                current = s;
                applied += 1;
            }
            None => {
                return ExtendOutcome {
                    scene: current,
                    applied,
                    short: true,
                }
            }
        }
    }
    ExtendOutcome {
        scene: current,
        applied,
        short: false,
    }
}

/// JSON form of a construction step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionJson {
    pub name: String,
    pub binding: Vec<String>,
    pub new_points: Vec<String>,
    pub segments: Vec<[String; 2]>,
    pub circles: Vec<[String; 2]>,
    pub effects: Vec<Statement>,
}

/// JSON form of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub seed: u64,
    pub generator: String,
    pub constructions: Vec<ConstructionJson>,
    pub points: BTreeMap<String, [f64; 2]>,
    pub initial_statements: StatementSet,
}

fn labels(ps: &[PointId]) -> Vec<String> {
    ps.iter().map(|p| p.label()).collect()
}

impl From<&Scene> for SceneJson {
    fn from(s: &Scene) -> Self {
        SceneJson {
            seed: s.seed,
            generator: s.generator.clone(),
            constructions: s
                .constructions
                .iter()
                .map(|c| ConstructionJson {
                    name: c.name.clone(),
                    binding: labels(&c.binding),
                    new_points: labels(&c.new_points),
                    segments: c
                        .segments
                        .iter()
                        .map(|seg| {
                            let (a, b) = seg.ends();
                            [a.label(), b.label()]
                        })
                        .collect(),
                    circles: c
                        .circles
                        .iter()
                        .map(|(o, p)| [o.label(), p.label()])
                        .collect(),
                    effects: c.effects.clone(),
                })
                .collect(),
            points: s
                .geometry
                .point_ids()
                .map(|p| {
                    let c = s.geometry.coord(p).expect("own point");
                    (p.label(), [c.x, c.y])
                })
                .collect(),
            initial_statements: s.initial_statements.clone(),
        }
    }
}

fn point(label: &str, n: usize) -> Result<PointId, ConstructError> {
    PointId::from_label(label)
        .filter(|p| p.index() < n)
        .ok_or_else(|| ConstructError::InvalidScene(format!("unknown point `{label}`")))
}

impl TryFrom<SceneJson> for Scene {
    type Error = ConstructError;

    fn try_from(j: SceneJson) -> Result<Self, Self::Error> {
        let n = j.points.len();
        let mut coords = vec![None; n];
        for (label, [x, y]) in &j.points {
            let p = point(label, n)?;
            if !x.is_finite() || !y.is_finite() {
                return Err(ConstructError::InvalidScene(format!(
                    "non-finite coordinate for {label}"
                )));
            }
            coords[p.index()] = Some(Coord::new(*x, *y));
        }
        let coords: Vec<Coord> = coords
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| ConstructError::InvalidScene("point labels are not dense".into()))?;
        let pair = |[a, b]: &[String; 2]| -> Result<(PointId, PointId), ConstructError> {
            Ok((point(a, n)?, point(b, n)?))
        };
        let mut constructions = Vec::new();
        for c in &j.constructions {
            let segments = c
                .segments
                .iter()
                .map(|s| {
                    let (a, b) = pair(s)?;
                    Ok(Segment::new(a, b)?)
                })
                .collect::<Result<Vec<_>, ConstructError>>()?;
            constructions.push(AppliedConstruction {
                name: c.name.clone(),
                binding: c
                    .binding
                    .iter()
                    .map(|l| point(l, n))
                    .collect::<Result<_, _>>()?,
                new_points: c
                    .new_points
                    .iter()
                    .map(|l| point(l, n))
                    .collect::<Result<_, _>>()?,
                segments,
                circles: c.circles.iter().map(pair).collect::<Result<_, _>>()?,
                effects: c.effects.clone(),
            });
        }
        for s in &j.initial_statements {
            if let Some(p) = s.points().into_iter().find(|p| p.index() >= n) {
                return Err(ConstructError::InvalidScene(format!(
                    "statement {s} names unknown point {p}"
                )));
            }
        }
        Ok(Scene {
            seed: j.seed,
            generator: j.generator,
            geometry: SceneGeometry::new(coords),
            constructions,
            initial_statements: j.initial_statements,
        })
    }
}

pub fn scene_from_json_str(text: &str) -> Result<Scene, ConstructError> {
    let j: SceneJson =
        serde_json::from_str(text).map_err(|e| ConstructError::InvalidScene(e.to_string()))?;
    Scene::try_from(j)
}

/// Helper for numeric side conditions: true when `p` and `q` lie strictly
/// on the same side of line `ab`.
pub fn same_side(a: Coord, b: Coord, p: Coord, q: Coord) -> bool {
    side_of(a, b, p) * side_of(a, b, q) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::check_statement;
    use crate::statement::tests::p;

    #[test]
    fn isosceles_base_scene_contains_the_defining_statements() {
        let s = generate_base_scene("isosceles_triangle", 7).unwrap();
        assert!(s
            .initial_statements
            .contains(&Statement::eq_seg(p("A"), p("B"), p("A"), p("C"))));
        assert!(s.initial_statements.contains(&Statement::eq_angle(
            [p("A"), p("B"), p("C")],
            [p("A"), p("C"), p("B")]
        )));
    }

    #[test]
    fn right_triangle_has_right_angle_at_b() {
        for seed in 0..20 {
            let s = generate_base_scene("right_triangle", seed).unwrap();
            assert!(s
                .initial_statements
                .contains(&Statement::right_angle(p("A"), p("B"), p("C"))));
        }
    }

    #[test]
    fn every_generator_is_valid_and_in_canvas() {
        for g in GENERATORS {
            for seed in 0..40 {
                let s = generate_base_scene(g, seed).unwrap_or_else(|e| panic!("{g}/{seed}: {e}"));
                assert!(
                    check_scene(&s.geometry, &s.initial_statements).is_valid(),
                    "{g}/{seed}"
                );
                assert!(!s.initial_statements.is_empty());
                for c in s.geometry.coords() {
                    assert!((0.0..=10.0).contains(&c.x) && (0.0..=10.0).contains(&c.y));
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for g in GENERATORS {
            let a = generate_base_scene(g, 99).unwrap();
            let b = generate_base_scene(g, 99).unwrap();
            assert_eq!(a.to_json_string(), b.to_json_string());
        }
    }

    #[test]
    fn unknown_generator() {
        assert_eq!(
            generate_base_scene("hexagon", 1),
            Err(ConstructError::UnknownGenerator("hexagon".into()))
        );
    }

    #[test]
    fn triangle_admits_perpendicular_foot_from_apex() {
        // Acute triangle so every foot lands inside the opposite side.
        let scene = generate_base_scene("isosceles_triangle", 3).unwrap();
        let apps = applicable_constructions(&scene);
        assert!(apps.contains(&Application {
            construction: Construction::PerpendicularFoot,
            binding: vec![p("A"), p("B"), p("C")],
        }));
        let mut sorted = apps.clone();
        sorted.sort();
        assert_eq!(sorted, apps, "deterministic catalog/binding order");
    }

    #[test]
    fn collinear_pair_admits_no_triangle_constructions() {
        let scene = Scene {
            seed: 0,
            generator: "manual".into(),
            geometry: SceneGeometry::new(vec![Coord::new(1.0, 1.0), Coord::new(5.0, 1.0)]),
            constructions: vec![AppliedConstruction {
                name: "manual".into(),
                binding: vec![],
                new_points: vec![p("A"), p("B")],
                segments: vec![Segment::new(p("A"), p("B")).unwrap()],
                circles: vec![],
                effects: vec![],
            }],
            initial_statements: StatementSet::new(),
        };
        let apps = applicable_constructions(&scene);
        assert!(!apps.is_empty());
        for a in &apps {
            assert!(matches!(
                a.construction,
                Construction::Midpoint | Construction::SegmentExtension
            ));
        }
    }

    #[test]
    fn extend_by_zero_is_identity() {
        let base = generate_base_scene("isosceles_triangle", 5).unwrap();
        let out = extend_scene(&base, 0, 11);
        assert_eq!(out.scene, base);
        assert_eq!(out.applied, 0);
        assert!(!out.short);
    }

    #[test]
    fn extend_is_monotone_and_deterministic() {
        let base = generate_base_scene("isosceles_triangle", 5).unwrap();
        let a = extend_scene(&base, 3, 11);
        let b = extend_scene(&base, 3, 11);
        assert_eq!(a.scene.to_json_string(), b.scene.to_json_string());
        assert_eq!(a.applied, 3);
        assert!(a
            .scene
            .initial_statements
            .is_superset(&base.initial_statements));
        assert!(a.scene.initial_statements.len() > base.initial_statements.len());
    }

    #[test]
    fn extend_until_cap_reports_exhaustion() {
        let base = generate_base_scene("scalene_triangle", 2).unwrap();
        let out = extend_scene(&base, 50, 4);
        assert!(out.short);
        assert!(out.scene.num_points() <= MAX_POINTS);
        assert!(applicable_constructions(&out.scene).is_empty());
    }

    #[test]
    fn effects_hold_after_every_step() {
        for seed in 0..60u64 {
            let g = GENERATORS[seed as usize % GENERATORS.len()];
            let base = generate_base_scene(g, seed).unwrap();
            let out = extend_scene(&base, 4, seed ^ 0xabc);
            for c in &out.scene.constructions {
                for e in &c.effects {
                    assert!(
                        check_statement(&out.scene.geometry, e).unwrap().holds(),
                        "{g}/{seed}: {e}"
                    );
                }
            }
            assert!(check_scene(&out.scene.geometry, &out.scene.initial_statements).is_valid());
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let base = generate_base_scene("circle_inscribed_triangle", 8).unwrap();
        let scene = extend_scene(&base, 3, 1).scene;
        let text = scene.to_json_string();
        let back = scene_from_json_str(&text).unwrap();
        assert_eq!(back, scene);
        assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn json_rejects_sparse_labels() {
        let text = r#"{"seed":0,"generator":"g","constructions":[],"points":{"A":[0,0],"C":[1,1]},"initial_statements":[]}"#;
        assert!(scene_from_json_str(text).is_err());
    }
}
