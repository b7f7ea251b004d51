//! Numeric verification of statements on concrete coordinates.
//!
//! Each predicate has a dimensionless residual that is zero exactly when
//! the statement holds; a statement is accepted when its residual is at
//! most [`EPS_REL`]. Floating point lives here and in the constructor
//! only; statements themselves carry exact rationals.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Sub};
use thiserror::Error;

use crate::statement::{Angle, PointId, Rational, Segment, Statement, StatementSet};

/// Acceptance threshold for relational residuals.
pub const EPS_REL: f64 = 1e-9;
/// Minimum pairwise distance, as a fraction of the bounding-box diagonal.
pub const D_MIN_FACTOR: f64 = 1e-3;
/// Minimum triangle angle in degrees.
pub const THETA_MIN_DEG: f64 = 5.0;
/// Largest denominator tried when recognising a measurement as rational.
pub const MAX_ANSWER_DENOM: i64 = 360;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("unknown point {0}")]
    UnknownPoint(PointId),
    #[error("degenerate measurement: {0}")]
    Degenerate(String),
    #[error("statement `{0}` has no measurable value")]
    NotMeasurable(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub fn new(x: f64, y: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite());
        Coord { x, y }
    }

    pub fn scale(self, k: f64) -> Coord {
        Coord::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Coord) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Coord) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Coord) -> f64 {
        self.sub(o).norm()
    }

    pub fn lerp(self, o: Coord, t: f64) -> Coord {
        self.add(o.sub(self).scale(t))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Coord {
    type Output = Coord;

    fn add(self, o: Coord) -> Coord {
        Coord::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Coord {
    type Output = Coord;

    fn sub(self, o: Coord) -> Coord {
        Coord::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Coord,
    pub max: Coord,
}

impl BoundingBox {
    pub fn diagonal(&self) -> f64 {
        self.max.dist(self.min)
    }
}

/// Degeneracy thresholds of a scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub d_min_factor: f64,
    pub theta_min_deg: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            d_min_factor: D_MIN_FACTOR,
            theta_min_deg: THETA_MIN_DEG,
        }
    }
}

/// Coordinates of the points of one scene, indexed by [`PointId`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGeometry {
    points: Vec<Coord>,
    pub thresholds: Thresholds,
}

impl SceneGeometry {
    pub fn new(points: Vec<Coord>) -> Self {
        SceneGeometry {
            points,
            thresholds: Thresholds::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.points
    }

    /// Appends a point and returns its id.
    pub fn push(&mut self, c: Coord) -> PointId {
        self.points.push(c);
        PointId::new((self.points.len() - 1) as u16)
    }

    pub fn point_ids(&self) -> impl Iterator<Item = PointId> {
        (0..self.points.len()).map(|i| PointId::new(i as u16))
    }

    pub fn coord(&self, p: PointId) -> Result<Coord, NumericError> {
        self.points
            .get(p.index())
            .copied()
            .ok_or(NumericError::UnknownPoint(p))
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut min = Coord {
            x: f64::INFINITY,
            y: f64::INFINITY,
        };
        let mut max = Coord {
            x: f64::NEG_INFINITY,
            y: f64::NEG_INFINITY,
        };
        for c in &self.points {
            min = Coord {
                x: min.x.min(c.x),
                y: min.y.min(c.y),
            };
            max = Coord {
                x: max.x.max(c.x),
                y: max.y.max(c.y),
            };
        }
        if self.points.is_empty() {
            min = Coord::new(0.0, 0.0);
            max = min;
        }
        BoundingBox { min, max }
    }

    pub fn d_min(&self) -> f64 {
        self.thresholds.d_min_factor * self.bounding_box().diagonal()
    }

    pub fn length(&self, s: Segment) -> Result<f64, NumericError> {
        let (p, q) = s.ends();
        Ok(self.coord(p)?.dist(self.coord(q)?))
    }

    /// Angle measure in degrees, in `[0, 180]`.
    pub fn angle_deg(&self, a: Angle) -> Result<f64, NumericError> {
        let (p, v, q) = a.points();
        angle_at(self.coord(p)?, self.coord(v)?, self.coord(q)?)
            .ok_or_else(|| NumericError::Degenerate(format!("zero-length ray in {a}")))
    }

    /// Applies `f` to every coordinate.
    pub fn transformed(&self, f: impl Fn(Coord) -> Coord) -> SceneGeometry {
        SceneGeometry {
            points: self.points.iter().map(|&c| f(c)).collect(),
            thresholds: self.thresholds,
        }
    }
}

/// Angle `p v q` at `v` in degrees; `None` when a ray has zero length.
pub fn angle_at(p: Coord, v: Coord, q: Coord) -> Option<f64> {
    let u = p.sub(v);
    let w = q.sub(v);
    if u.norm() == 0.0 || w.norm() == 0.0 {
        return None;
    }
    Some(u.cross(w).abs().atan2(u.dot(w)).to_degrees())
}

/// Signed area test: which side of line `a b` the point `p` is on.
pub fn side_of(a: Coord, b: Coord, p: Coord) -> f64 {
    b.sub(a).cross(p.sub(a))
}

fn to_f64(v: Rational) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

fn sine_between(u: Coord, w: Coord) -> f64 {
    let n = u.norm() * w.norm();
    if n == 0.0 {
        f64::INFINITY
    } else {
        u.cross(w).abs() / n
    }
}

fn cosine_between(u: Coord, w: Coord) -> f64 {
    let n = u.norm() * w.norm();
    if n == 0.0 {
        f64::INFINITY
    } else {
        u.dot(w).abs() / n
    }
}

fn rel_diff(x: f64, y: f64) -> f64 {
    let scale = x.abs().max(y.abs());
    if scale == 0.0 {
        f64::INFINITY
    } else {
        (x - y).abs() / scale
    }
}

fn side_lengths(g: &SceneGeometry, t: [PointId; 3]) -> Result<[f64; 3], NumericError> {
    let [a, b, c] = [g.coord(t[0])?, g.coord(t[1])?, g.coord(t[2])?];
    Ok([a.dist(b), b.dist(c), c.dist(a)])
}

/// Defining residual of `s` on `g`; zero iff the statement holds exactly.
pub fn residual(g: &SceneGeometry, s: &Statement) -> Result<f64, NumericError> {
    for p in s.points() {
        g.coord(p)?;
    }
    let vec = |seg: Segment| -> Coord {
        let (p, q) = seg.ends();
        g.points[q.index()].sub(g.points[p.index()])
    };
    let c = |p: PointId| g.points[p.index()];
    Ok(match *s {
        Statement::Collinear(a, b, d) => sine_between(c(b).sub(c(a)), c(d).sub(c(a))),
        Statement::Parallel(s1, s2) => sine_between(vec(s1), vec(s2)),
        Statement::Perpendicular(s1, s2) => cosine_between(vec(s1), vec(s2)),
        Statement::EqualSegments(s1, s2) => rel_diff(g.length(s1)?, g.length(s2)?),
        Statement::EqualAngles(a1, a2) => match (g.angle_deg(a1), g.angle_deg(a2)) {
            (Ok(x), Ok(y)) => (x - y).abs() / 180.0,
            _ => f64::INFINITY,
        },
        Statement::SegmentLength(seg, v) => rel_diff(g.length(seg)?, to_f64(v)),
        Statement::AngleMeasure(a, v) => match g.angle_deg(a) {
            Ok(x) => (x - to_f64(v)).abs() / to_f64(v).max(1.0),
            Err(_) => f64::INFINITY,
        },
        Statement::RightAngle(a) => {
            let (p, v, q) = a.points();
            cosine_between(c(p).sub(c(v)), c(q).sub(c(v)))
        }
        Statement::Midpoint(m, seg) => {
            let (p, q) = seg.ends();
            let len = c(p).dist(c(q));
            if len == 0.0 {
                f64::INFINITY
            } else {
                c(m).dist(c(p).lerp(c(q), 0.5)) / len
            }
        }
        Statement::OnCircle {
            point,
            center,
            radius,
        } => rel_diff(c(point).dist(c(center)), g.length(radius)?),
        Statement::CongruentTriangles(t1, t2) => {
            let l1 = side_lengths(g, t1.vertices())?;
            let l2 = side_lengths(g, t2.vertices())?;
            (0..3).map(|i| rel_diff(l1[i], l2[i])).fold(0.0, f64::max)
        }
        Statement::SimilarTriangles(t1, t2) => {
            let l1 = side_lengths(g, t1.vertices())?;
            let l2 = side_lengths(g, t2.vertices())?;
            if l1.iter().chain(l2.iter()).any(|&x| x == 0.0) {
                f64::INFINITY
            } else {
                let k = l1[0] / l2[0];
                (1..3)
                    .map(|i| rel_diff(l1[i] / l2[i], k))
                    .fold(0.0, f64::max)
            }
        }
        Statement::SegmentRatio(s1, s2, v) => {
            let d = g.length(s2)?;
            if d == 0.0 {
                f64::INFINITY
            } else {
                rel_diff(g.length(s1)? / d, to_f64(v))
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Holds,
    Fails { residual: f64 },
}

impl Verdict {
    pub fn holds(self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

pub fn check_statement(g: &SceneGeometry, s: &Statement) -> Result<Verdict, NumericError> {
    let r = residual(g, s)?;
    Ok(if r <= EPS_REL {
        Verdict::Holds
    } else {
        Verdict::Fails { residual: r }
    })
}

/// Reason a scene is rejected independently of its statements.
#[derive(Clone, Debug, PartialEq)]
pub enum Degeneracy {
    NonFinite(PointId),
    TooClose {
        a: PointId,
        b: PointId,
        distance: f64,
    },
    ThinTriangle {
        vertices: [PointId; 3],
        min_angle: f64,
    },
    ThinAngle {
        angle: String,
        measure: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneVerdict {
    Valid,
    Invalid {
        failing: Vec<Statement>,
        degeneracies: Vec<Degeneracy>,
    },
}

impl SceneVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, SceneVerdict::Valid)
    }
}

/// Minimum interior angle of triangle `t` in degrees.
pub fn min_triangle_angle(g: &SceneGeometry, t: [PointId; 3]) -> Result<f64, NumericError> {
    let [a, b, c] = [g.coord(t[0])?, g.coord(t[1])?, g.coord(t[2])?];
    let angles = [angle_at(b, a, c), angle_at(a, b, c), angle_at(a, c, b)];
    Ok(angles
        .into_iter()
        .map(|x| x.unwrap_or(0.0))
        .fold(180.0, f64::min))
}

/// Degeneracy defects of the geometry with respect to the statements in `s0`.
///
/// Triangles named by congruence or similarity statements must have every
/// angle at least θ_min; angles named by angle statements must lie within
/// `[θ_min, 180° − θ_min]`.
pub fn degeneracies<'a>(
    g: &SceneGeometry,
    statements: impl IntoIterator<Item = &'a Statement>,
) -> Vec<Degeneracy> {
    let mut out = Vec::new();
    for p in g.point_ids() {
        if !g.points[p.index()].is_finite() {
            out.push(Degeneracy::NonFinite(p));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let d_min = g.d_min();
    let ids: Vec<PointId> = g.point_ids().collect();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let distance = g.points[a.index()].dist(g.points[b.index()]);
            if distance < d_min {
                out.push(Degeneracy::TooClose { a, b, distance });
            }
        }
    }
    let theta = g.thresholds.theta_min_deg;
    for s in statements {
        match *s {
            Statement::CongruentTriangles(t1, t2) | Statement::SimilarTriangles(t1, t2) => {
                for t in [t1, t2] {
                    if let Ok(min_angle) = min_triangle_angle(g, t.vertices()) {
                        if min_angle < theta {
                            out.push(Degeneracy::ThinTriangle {
                                vertices: t.vertices(),
                                min_angle,
                            });
                        }
                    }
                }
            }
            Statement::EqualAngles(a1, a2) => {
                for a in [a1, a2] {
                    push_thin_angle(g, a, theta, &mut out);
                }
            }
            Statement::AngleMeasure(a, _) | Statement::RightAngle(a) => {
                push_thin_angle(g, a, theta, &mut out)
            }
            _ => {}
        }
    }
    out
}

fn push_thin_angle(g: &SceneGeometry, a: Angle, theta: f64, out: &mut Vec<Degeneracy>) {
    if let Ok(measure) = g.angle_deg(a) {
        if measure < theta || measure > 180.0 - theta {
            out.push(Degeneracy::ThinAngle {
                angle: a.to_string(),
                measure,
            });
        }
    }
}

/// Validates a scene: every statement holds and the geometry is not degenerate.
pub fn check_scene(g: &SceneGeometry, s0: &StatementSet) -> SceneVerdict {
    let failing: Vec<Statement> = s0
        .iter()
        .filter(|s| !matches!(check_statement(g, s), Ok(Verdict::Holds)))
        .cloned()
        .collect();
    let degeneracies = degeneracies(g, s0.iter());
    if failing.is_empty() && degeneracies.is_empty() {
        SceneVerdict::Valid
    } else {
        SceneVerdict::Invalid {
            failing,
            degeneracies,
        }
    }
}

/// Quantity asked for by a numeric question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Measurement {
    Length(Segment),
    Angle(Angle),
    Ratio(Segment, Segment),
}

impl Measurement {
    /// The measurement of a value-bearing statement, ignoring its value.
    pub fn of(s: &Statement) -> Result<Measurement, NumericError> {
        match *s {
            Statement::SegmentLength(seg, _) => Ok(Measurement::Length(seg)),
            Statement::AngleMeasure(a, _) => Ok(Measurement::Angle(a)),
            Statement::SegmentRatio(s1, s2, _) => Ok(Measurement::Ratio(s1, s2)),
            _ => Err(NumericError::NotMeasurable(s.to_string())),
        }
    }

    pub fn measure(self, g: &SceneGeometry) -> Result<f64, NumericError> {
        let nonzero = |x: f64, seg: Segment| {
            if x <= 0.0 {
                Err(NumericError::Degenerate(format!(
                    "segment {seg} has zero length"
                )))
            } else {
                Ok(x)
            }
        };
        match self {
            Measurement::Length(seg) => nonzero(g.length(seg)?, seg),
            Measurement::Angle(a) => g.angle_deg(a),
            Measurement::Ratio(s1, s2) => {
                let d = nonzero(g.length(s2)?, s2)?;
                Ok(g.length(s1)? / d)
            }
        }
    }
}

/// Ground-truth value of a measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NumericAnswer {
    Exact(Rational),
    Float(f64),
}

impl NumericAnswer {
    pub fn as_f64(self) -> f64 {
        match self {
            NumericAnswer::Exact(r) => to_f64(r),
            NumericAnswer::Float(x) => x,
        }
    }
}

/// Smallest-denominator rational within [`EPS_REL`] of `x`, if one exists
/// with denominator at most [`MAX_ANSWER_DENOM`].
pub fn recognise_rational(x: f64) -> Option<Rational> {
    if !x.is_finite() || x.abs() > 1e12 {
        return None;
    }
    let tol = EPS_REL * x.abs().max(1.0);
    for q in 1..=MAX_ANSWER_DENOM {
        let p = (x * q as f64).round();
        if (p / q as f64 - x).abs() <= tol {
            return Some(Rational::new(p as i64, q));
        }
    }
    None
}

/// Computes the value of `m` from coordinates.
pub fn numeric_answer(g: &SceneGeometry, m: Measurement) -> Result<NumericAnswer, NumericError> {
    let x = m.measure(g)?;
    Ok(match recognise_rational(x) {
        Some(r) => NumericAnswer::Exact(r),
        None => NumericAnswer::Float(x),
    })
}

/// `numeric_answer` for a value-bearing statement (its value slot is ignored).
pub fn numeric_answer_for(
    g: &SceneGeometry,
    query: &Statement,
) -> Result<NumericAnswer, NumericError> {
    numeric_answer(g, Measurement::of(query)?)
}

/// Whether a claimed value agrees with the coordinate oracle: within 1e-9
/// relative when the oracle is exact, within 1% otherwise.
pub fn answer_agrees(claimed: Rational, oracle: NumericAnswer) -> bool {
    match oracle {
        NumericAnswer::Exact(r) => rel_diff(to_f64(claimed), to_f64(r)) <= EPS_REL,
        NumericAnswer::Float(x) => (to_f64(claimed) - x).abs() <= 0.01 * x.abs(),
    }
}

pub fn rational_to_f64(v: Rational) -> f64 {
    to_f64(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statement::tests::p;
    use proptest::prelude::*;

    fn geom(pts: &[(f64, f64)]) -> SceneGeometry {
        SceneGeometry::new(pts.iter().map(|&(x, y)| Coord::new(x, y)).collect())
    }

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    fn holds(g: &SceneGeometry, s: &Statement) -> bool {
        check_statement(g, s).unwrap().holds()
    }

    #[test]
    fn check_statement_examples() {
        let g = geom(&[(0.0, 0.0), (2.0, 0.0), (1.0, 1.0)]);
        assert!(holds(
            &g,
            &Statement::eq_seg(p("A"), p("C"), p("B"), p("C"))
        ));
        let g = geom(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(holds(&g, &Statement::collinear(p("A"), p("B"), p("C"))));
        let g = geom(&[(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]);
        assert!(holds(&g, &Statement::seg_len(p("B"), p("C"), r(5))));
        assert!(holds(&g, &Statement::right_angle(p("B"), p("A"), p("C"))));
        assert!(holds(
            &g,
            &Statement::angle_val(p("B"), p("A"), p("C"), r(90))
        ));
        match check_statement(&g, &Statement::seg_len(p("B"), p("C"), r(6))).unwrap() {
            Verdict::Fails { residual } => assert!((residual - 1.0 / 6.0).abs() < 1e-12),
            Verdict::Holds => panic!("5 != 6"),
        }
    }

    #[test]
    fn check_statement_unknown_point() {
        let g = geom(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(
            check_statement(&g, &Statement::collinear(p("A"), p("B"), p("C"))),
            Err(NumericError::UnknownPoint(p("C")))
        );
    }

    #[test]
    fn every_predicate_has_a_witness() {
        // A(0,0) B(4,0) C(4,3) D(0,3) rectangle, M midpoint of AB, O centre.
        let g = geom(&[
            (0.0, 0.0),
            (4.0, 0.0),
            (4.0, 3.0),
            (0.0, 3.0),
            (2.0, 0.0),
            (2.0, 1.5),
        ]);
        let [a, b, c, d, m, o] = [p("A"), p("B"), p("C"), p("D"), p("E"), p("F")];
        let good = [
            Statement::parallel(a, b, d, c),
            Statement::perpendicular(a, b, b, c),
            Statement::eq_seg(a, b, c, d),
            Statement::eq_angle([d, a, b], [a, b, c]),
            Statement::seg_len(a, c, r(5)),
            Statement::right_angle(d, a, b),
            Statement::midpoint(m, a, b),
            Statement::on_circle(c, o, o, a),
            Statement::from_parts(
                crate::statement::Predicate::CongruentTriangles,
                &[a, b, c, c, d, a],
                None,
            )
            .unwrap(),
            Statement::from_parts(
                crate::statement::Predicate::SimilarTriangles,
                &[a, m, o, a, b, c],
                None,
            )
            .unwrap(),
            Statement::seg_ratio(a, m, a, b, Rational::new(1, 2)),
            Statement::collinear(a, m, b),
        ];
        for s in &good {
            assert!(
                holds(&g, s),
                "{s} should hold: {:?}",
                check_statement(&g, s)
            );
        }
        let bad = [
            Statement::parallel(a, b, a, c),
            Statement::perpendicular(a, b, a, c),
            Statement::seg_ratio(a, m, a, b, Rational::new(1, 3)),
            Statement::on_circle(m, o, o, a),
            Statement::midpoint(o, a, b),
        ];
        for s in &bad {
            assert!(!holds(&g, s), "{s} should fail");
        }
    }

    #[test]
    fn check_scene_examples() {
        let g = geom(&[(5.0, 8.0), (3.0, 2.0), (7.0, 2.0)]);
        let s0: StatementSet = [Statement::eq_seg(p("A"), p("B"), p("A"), p("C"))]
            .into_iter()
            .collect();
        assert!(check_scene(&g, &s0).is_valid());

        let g2 = geom(&[(5.0, 8.0), (3.0, 2.0), (3.0, 2.0)]);
        match check_scene(&g2, &StatementSet::new()) {
            SceneVerdict::Invalid { degeneracies, .. } => {
                assert!(matches!(degeneracies[0], Degeneracy::TooClose { .. }))
            }
            SceneVerdict::Valid => panic!("coincident points accepted"),
        }

        let bad = Statement::parallel(p("A"), p("B"), p("A"), p("C"));
        let s0: StatementSet = [bad.clone()].into_iter().collect();
        match check_scene(&g, &s0) {
            SceneVerdict::Invalid { failing, .. } => assert_eq!(failing, vec![bad]),
            SceneVerdict::Valid => panic!("false parallel accepted"),
        }
    }

    #[test]
    fn thin_angles_are_degenerate() {
        let g = geom(&[(0.0, 0.0), (10.0, 0.0), (5.0, 0.2)]);
        let s0: StatementSet = [Statement::eq_seg(p("A"), p("C"), p("B"), p("C"))]
            .into_iter()
            .collect();
        assert!(check_scene(&g, &s0).is_valid());
        let s0: StatementSet = [Statement::eq_angle(
            [p("C"), p("A"), p("B")],
            [p("A"), p("B"), p("C")],
        )]
        .into_iter()
        .collect();
        assert!(!check_scene(&g, &s0).is_valid());
    }

    #[test]
    fn numeric_answer_examples() {
        let g = geom(&[(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]);
        let q = Measurement::Length(Segment::new(p("B"), p("C")).unwrap());
        assert_eq!(numeric_answer(&g, q).unwrap(), NumericAnswer::Exact(r(5)));

        let h = 3f64.sqrt() / 2.0;
        let g = geom(&[(0.0, 0.0), (1.0, 0.0), (0.5, h)]);
        let q = Measurement::Angle(Angle::new(p("A"), p("B"), p("C")).unwrap());
        assert_eq!(numeric_answer(&g, q).unwrap(), NumericAnswer::Exact(r(60)));

        let g = geom(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let q = Measurement::Length(Segment::new(p("B"), p("C")).unwrap());
        match numeric_answer(&g, q).unwrap() {
            NumericAnswer::Float(x) => assert!((x - std::f64::consts::SQRT_2).abs() < 1e-8),
            other => panic!("sqrt 2 reported as {other:?}"),
        }

        let g = geom(&[(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)]);
        let q = Measurement::Length(Segment::new(p("A"), p("B")).unwrap());
        assert!(matches!(
            numeric_answer(&g, q),
            Err(NumericError::Degenerate(_))
        ));
        assert!(matches!(
            numeric_answer_for(&g, &Statement::collinear(p("A"), p("B"), p("C"))),
            Err(NumericError::NotMeasurable(_))
        ));
    }

    #[test]
    fn rational_recognition() {
        assert_eq!(recognise_rational(2.5), Some(Rational::new(5, 2)));
        assert_eq!(recognise_rational(1.0 / 3.0), Some(Rational::new(1, 3)));
        assert_eq!(recognise_rational(std::f64::consts::SQRT_2), None);
        assert!(answer_agrees(r(5), NumericAnswer::Exact(r(5))));
        assert!(!answer_agrees(
            Rational::new(101, 20),
            NumericAnswer::Exact(r(5))
        ));
        assert!(answer_agrees(
            Rational::new(141, 100),
            NumericAnswer::Float(std::f64::consts::SQRT_2)
        ));
    }

    #[test]
    fn residual_is_lipschitz_under_small_perturbation() {
        // Finite-difference sanity check: a δ-move of one point moves residuals by O(δ).
        let base = geom(&[(1.0, 1.0), (5.0, 1.0), (3.0, 4.0), (2.0, 1.0)]);
        let stmts = [
            Statement::eq_seg(p("A"), p("C"), p("B"), p("C")),
            Statement::collinear(p("A"), p("B"), p("D")),
            Statement::parallel(p("A"), p("B"), p("D"), p("B")),
            Statement::seg_len(p("A"), p("B"), r(4)),
            Statement::angle_val(p("A"), p("C"), p("B"), r(67)),
        ];
        for s in &stmts {
            let r0 = residual(&base, s).unwrap();
            for delta in [1e-4, 1e-5, 1e-6] {
                let moved = base.transformed(|c| {
                    if c == Coord::new(3.0, 4.0) {
                        c.add(Coord::new(delta, delta))
                    } else {
                        c
                    }
                });
                let r1 = residual(&moved, s).unwrap();
                assert!(
                    (r1 - r0).abs() <= 10.0 * delta,
                    "{s}: jump {} at δ={delta}",
                    (r1 - r0).abs()
                );
            }
        }
    }

    fn rigid(theta: f64, k: f64, tx: f64, ty: f64) -> impl Fn(Coord) -> Coord {
        let (s, c) = theta.sin_cos();
        move |p: Coord| Coord::new(k * (c * p.x - s * p.y) + tx, k * (s * p.x + c * p.y) + ty)
    }

    proptest! {
        #[test]
        fn similarity_invariance(theta in 0.0..std::f64::consts::TAU, k in 0.5f64..3.0, tx in -5.0f64..5.0, ty in -5.0f64..5.0) {
            // Rectangle 4x3 with midpoint and centre.
            let g = geom(&[(0.0, 0.0), (4.0, 0.0), (4.0, 3.0), (0.0, 3.0), (2.0, 0.0), (2.0, 1.5)]);
            let [a, b, c, d, m, o] = [p("A"), p("B"), p("C"), p("D"), p("E"), p("F")];
            let moved = g.transformed(rigid(theta, k, tx, ty));
            let dimensionless = [
                Statement::parallel(a, b, d, c),
                Statement::perpendicular(a, b, b, c),
                Statement::eq_seg(a, b, c, d),
                Statement::right_angle(d, a, b),
                Statement::midpoint(m, a, b),
                Statement::on_circle(c, o, o, a),
                Statement::seg_ratio(a, m, a, b, Rational::new(1, 2)),
                Statement::angle_val(d, a, b, r(90)),
            ];
            for s in &dimensionless {
                prop_assert!(holds(&moved, s), "{} after motion", s);
            }
            // Lengths scale linearly.
            let len = Segment::new(a, c).unwrap();
            prop_assert!((moved.length(len).unwrap() - 5.0 * k).abs() < 1e-9);
        }

        #[test]
        fn integer_scaling_scales_lengths(k in 2i64..6) {
            let g = geom(&[(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]);
            let moved = g.transformed(|c| c.scale(k as f64));
            prop_assert!(holds(&moved, &Statement::seg_len(p("B"), p("C"), r(5 * k))));
            prop_assert!(!holds(&moved, &Statement::seg_len(p("B"), p("C"), r(5))));
        }
    }
}
