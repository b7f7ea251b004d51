//! The formal statement language.
//!
//! A [`Statement`] is an atomic geometric fact over named points. Every
//! statement has exactly one canonical form; the reasoning graph, the
//! dataset files and the verifier all work on canonical statements so that
//! set membership is plain structural equality.
//!
//! Text form (see `docs/grammar.ebnf`):
//!
//! ```text
//! eq_seg(A,B;C,D)   angle_val(A,B,C;90)   seg_ratio(A,B;C,D;1/2)
//! ```

use std::fmt;
use std::str::FromStr;

use indexmap::IndexSet;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational value carried by numeric statements.
pub type Rational = num_rational::Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatementError {
    #[error("malformed statement: {0}")]
    Malformed(String),
    #[error("parse error at byte {offset}: expected one of {expected:?}")]
    Parse {
        offset: usize,
        expected: Vec<&'static str>,
    },
    #[error("unknown predicate `{name}` at byte {offset}")]
    UnknownPredicate { name: String, offset: usize },
    #[error("unknown point `{0}`")]
    UnknownPoint(String),
}

fn malformed<T>(msg: impl Into<String>) -> Result<T, StatementError> {
    Err(StatementError::Malformed(msg.into()))
}

/// A point of a scene.
///
/// The label is a bijective function of the dense index: `A`..`Z` for
/// indices 0..26, then `A1`..`Z1`, `A2`.. and so on up to `Z9`. Ordering
/// points therefore orders both indices and labels consistently.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointId(u16);

impl PointId {
    pub const MAX_INDEX: u16 = 259;

    pub fn new(index: u16) -> Self {
        assert!(index <= Self::MAX_INDEX, "point index {index} out of range");
        PointId(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> String {
        let letter = (b'A' + (self.0 % 26) as u8) as char;
        let tier = self.0 / 26;
        if tier == 0 {
            letter.to_string()
        } else {
            format!("{letter}{tier}")
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        let bytes = label.as_bytes();
        let letter = *bytes.first()?;
        if !letter.is_ascii_uppercase() {
            return None;
        }
        let tier = match bytes.len() {
            1 => 0,
            2 if bytes[1].is_ascii_digit() && bytes[1] != b'0' => (bytes[1] - b'0') as u16,
            _ => return None,
        };
        Some(PointId(tier * 26 + (letter - b'A') as u16))
    }
}

impl fmt::Debug for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Unordered pair of distinct points; stored with endpoints sorted.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Segment(PointId, PointId);

impl Segment {
    pub fn new(p: PointId, q: PointId) -> Result<Self, StatementError> {
        if p == q {
            return malformed(format!("degenerate segment {p}{p}"));
        }
        Ok(if p < q { Segment(p, q) } else { Segment(q, p) })
    }

    pub fn ends(self) -> (PointId, PointId) {
        (self.0, self.1)
    }

    pub fn contains(self, p: PointId) -> bool {
        self.0 == p || self.1 == p
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0, self.1)
    }
}

/// Angle at `vertex` between rays towards `a` and `c`, with `a < c`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Angle {
    a: PointId,
    vertex: PointId,
    c: PointId,
}

impl Angle {
    pub fn new(a: PointId, vertex: PointId, c: PointId) -> Result<Self, StatementError> {
        if a == c || a == vertex || c == vertex {
            return malformed(format!("degenerate angle {a}{vertex}{c}"));
        }
        let (a, c) = if a < c { (a, c) } else { (c, a) };
        Ok(Angle { a, vertex, c })
    }

    pub fn vertex(self) -> PointId {
        self.vertex
    }

    /// `(ray end, vertex, ray end)` in canonical order.
    pub fn points(self) -> (PointId, PointId, PointId) {
        (self.a, self.vertex, self.c)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "∠{}{}{}", self.a, self.vertex, self.c)
    }
}

/// Ordered triple of distinct points. Order matters inside congruence and
/// similarity statements, where it fixes the vertex correspondence.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Triangle([PointId; 3]);

impl Triangle {
    pub fn new(a: PointId, b: PointId, c: PointId) -> Result<Self, StatementError> {
        if a == b || b == c || a == c {
            return malformed(format!("degenerate triangle {a}{b}{c}"));
        }
        Ok(Triangle([a, b, c]))
    }

    pub fn vertices(self) -> [PointId; 3] {
        self.0
    }

    fn permuted(self, perm: [usize; 3]) -> Triangle {
        Triangle([self.0[perm[0]], self.0[perm[1]], self.0[perm[2]]])
    }
}

impl fmt::Display for Triangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "△{}{}{}", self.0[0], self.0[1], self.0[2])
    }
}

/// The closed predicate vocabulary.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Predicate {
    Collinear,
    Parallel,
    Perpendicular,
    EqualSegments,
    EqualAngles,
    SegmentLength,
    AngleMeasure,
    RightAngle,
    Midpoint,
    OnCircle,
    CongruentTriangles,
    SimilarTriangles,
    SegmentRatio,
}

/// Unit of a statement value.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Degrees,
    Length,
    Ratio,
}

impl Predicate {
    pub const ALL: [Predicate; 13] = [
        Predicate::Collinear,
        Predicate::Parallel,
        Predicate::Perpendicular,
        Predicate::EqualSegments,
        Predicate::EqualAngles,
        Predicate::SegmentLength,
        Predicate::AngleMeasure,
        Predicate::RightAngle,
        Predicate::Midpoint,
        Predicate::OnCircle,
        Predicate::CongruentTriangles,
        Predicate::SimilarTriangles,
        Predicate::SegmentRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::Collinear => "collinear",
            Predicate::Parallel => "parallel",
            Predicate::Perpendicular => "perp",
            Predicate::EqualSegments => "eq_seg",
            Predicate::EqualAngles => "eq_angle",
            Predicate::SegmentLength => "seg_len",
            Predicate::AngleMeasure => "angle_val",
            Predicate::RightAngle => "right_angle",
            Predicate::Midpoint => "midpoint",
            Predicate::OnCircle => "on_circle",
            Predicate::CongruentTriangles => "congruent",
            Predicate::SimilarTriangles => "similar",
            Predicate::SegmentRatio => "seg_ratio",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// Sizes of the `;`-separated point groups, in order.
    pub fn groups(self) -> &'static [usize] {
        match self {
            Predicate::Collinear => &[3],
            Predicate::Parallel | Predicate::Perpendicular | Predicate::EqualSegments => &[2, 2],
            Predicate::EqualAngles => &[3, 3],
            Predicate::SegmentLength => &[2],
            Predicate::AngleMeasure | Predicate::RightAngle => &[3],
            Predicate::Midpoint => &[1, 2],
            Predicate::OnCircle => &[2, 2],
            Predicate::CongruentTriangles | Predicate::SimilarTriangles => &[3, 3],
            Predicate::SegmentRatio => &[2, 2],
        }
    }

    pub fn arity(self) -> usize {
        self.groups().iter().sum()
    }

    pub fn unit(self) -> Option<Unit> {
        match self {
            Predicate::SegmentLength => Some(Unit::Length),
            Predicate::AngleMeasure => Some(Unit::Degrees),
            Predicate::SegmentRatio => Some(Unit::Ratio),
            _ => None,
        }
    }

    pub fn has_value(self) -> bool {
        self.unit().is_some()
    }
}

/// An atomic geometric fact.
///
/// Values built through the constructors and [`Statement::from_parts`] are
/// always canonical. The enum variants are public for pattern matching;
/// a hand-assembled variant may be non-canonical until passed through
/// [`canonicalize`].
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Statement {
    Collinear(PointId, PointId, PointId),
    Parallel(Segment, Segment),
    Perpendicular(Segment, Segment),
    EqualSegments(Segment, Segment),
    EqualAngles(Angle, Angle),
    SegmentLength(Segment, Rational),
    AngleMeasure(Angle, Rational),
    RightAngle(Angle),
    Midpoint(PointId, Segment),
    /// `point` lies on the circle centred at `center` whose radius equals `radius`.
    OnCircle {
        point: PointId,
        center: PointId,
        radius: Segment,
    },
    CongruentTriangles(Triangle, Triangle),
    SimilarTriangles(Triangle, Triangle),
    /// `|first| / |second| = value`.
    SegmentRatio(Segment, Segment, Rational),
}

const TRIANGLE_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn sorted_pair<T: Ord>(x: T, y: T) -> (T, T) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

fn canonical_triangle_pair(
    t1: Triangle,
    t2: Triangle,
) -> Result<(Triangle, Triangle), StatementError> {
    if t1 == t2 {
        return malformed(format!("triangle {t1} paired with itself"));
    }
    let mut best: Option<(Triangle, Triangle)> = None;
    for perm in TRIANGLE_PERMS {
        for cand in [
            (t1.permuted(perm), t2.permuted(perm)),
            (t2.permuted(perm), t1.permuted(perm)),
        ] {
            if best.is_none_or(|b| cand < b) {
                best = Some(cand);
            }
        }
    }
    Ok(best.expect("six permutations"))
}

fn check_positive(v: Rational, what: &str) -> Result<(), StatementError> {
    if v <= Rational::zero() {
        return malformed(format!("{what} must be positive, got {v}"));
    }
    Ok(())
}

/// Returns the unique canonical representative of `s`.
pub fn canonicalize(s: &Statement) -> Result<Statement, StatementError> {
    use Statement::*;
    Ok(match *s {
        Collinear(a, b, c) => {
            if a == b || b == c || a == c {
                return malformed(format!(
                    "collinear needs three distinct points, got {a}{b}{c}"
                ));
            }
            let mut v = [a, b, c];
            v.sort();
            Collinear(v[0], v[1], v[2])
        }
        Parallel(s1, s2) | Perpendicular(s1, s2) | EqualSegments(s1, s2) => {
            let s1 = Segment::new(s1.0, s1.1)?;
            let s2 = Segment::new(s2.0, s2.1)?;
            if s1 == s2 {
                return malformed(format!("{} relates {s1} to itself", s.predicate().name()));
            }
            let (x, y) = sorted_pair(s1, s2);
            match s {
                Parallel(..) => Parallel(x, y),
                Perpendicular(..) => Perpendicular(x, y),
                _ => EqualSegments(x, y),
            }
        }
        EqualAngles(a1, a2) => {
            let a1 = Angle::new(a1.a, a1.vertex, a1.c)?;
            let a2 = Angle::new(a2.a, a2.vertex, a2.c)?;
            if a1 == a2 {
                return malformed(format!("angle {a1} equated with itself"));
            }
            let (x, y) = sorted_pair(a1, a2);
            EqualAngles(x, y)
        }
        SegmentLength(seg, v) => {
            check_positive(v, "length")?;
            SegmentLength(Segment::new(seg.0, seg.1)?, v)
        }
        AngleMeasure(ang, v) => {
            check_positive(v, "angle")?;
            if v >= Rational::from_integer(180) {
                return malformed(format!("angle value {v} outside (0, 180)"));
            }
            AngleMeasure(Angle::new(ang.a, ang.vertex, ang.c)?, v)
        }
        RightAngle(ang) => RightAngle(Angle::new(ang.a, ang.vertex, ang.c)?),
        Midpoint(m, seg) => {
            let seg = Segment::new(seg.0, seg.1)?;
            if seg.contains(m) {
                return malformed(format!("midpoint {m} coincides with an endpoint of {seg}"));
            }
            Midpoint(m, seg)
        }
        OnCircle {
            point,
            center,
            radius,
        } => {
            if point == center {
                return malformed(format!("point {point} is the centre of its own circle"));
            }
            let radius = Segment::new(radius.0, radius.1)?;
            if radius == Segment::new(point, center)? {
                return malformed("on_circle with its own radius is a tautology");
            }
            OnCircle {
                point,
                center,
                radius,
            }
        }
        CongruentTriangles(t1, t2) | SimilarTriangles(t1, t2) => {
            let t1 = Triangle::new(t1.0[0], t1.0[1], t1.0[2])?;
            let t2 = Triangle::new(t2.0[0], t2.0[1], t2.0[2])?;
            let (x, y) = canonical_triangle_pair(t1, t2)?;
            if matches!(s, CongruentTriangles(..)) {
                CongruentTriangles(x, y)
            } else {
                SimilarTriangles(x, y)
            }
        }
        SegmentRatio(s1, s2, v) => {
            check_positive(v, "ratio")?;
            let s1 = Segment::new(s1.0, s1.1)?;
            let s2 = Segment::new(s2.0, s2.1)?;
            if s1 == s2 {
                return malformed(format!("ratio of {s1} to itself"));
            }
            if s1 < s2 {
                SegmentRatio(s1, s2, v)
            } else {
                SegmentRatio(s2, s1, v.recip())
            }
        }
    })
}

impl Statement {
    pub fn predicate(&self) -> Predicate {
        match self {
            Statement::Collinear(..) => Predicate::Collinear,
            Statement::Parallel(..) => Predicate::Parallel,
            Statement::Perpendicular(..) => Predicate::Perpendicular,
            Statement::EqualSegments(..) => Predicate::EqualSegments,
            Statement::EqualAngles(..) => Predicate::EqualAngles,
            Statement::SegmentLength(..) => Predicate::SegmentLength,
            Statement::AngleMeasure(..) => Predicate::AngleMeasure,
            Statement::RightAngle(..) => Predicate::RightAngle,
            Statement::Midpoint(..) => Predicate::Midpoint,
            Statement::OnCircle { .. } => Predicate::OnCircle,
            Statement::CongruentTriangles(..) => Predicate::CongruentTriangles,
            Statement::SimilarTriangles(..) => Predicate::SimilarTriangles,
            Statement::SegmentRatio(..) => Predicate::SegmentRatio,
        }
    }

    /// Point arguments in serialization order.
    pub fn points(&self) -> Vec<PointId> {
        use Statement::*;
        match *self {
            Collinear(a, b, c) => vec![a, b, c],
            Parallel(s1, s2)
            | Perpendicular(s1, s2)
            | EqualSegments(s1, s2)
            | SegmentRatio(s1, s2, _) => {
                vec![s1.0, s1.1, s2.0, s2.1]
            }
            EqualAngles(a1, a2) => vec![a1.a, a1.vertex, a1.c, a2.a, a2.vertex, a2.c],
            SegmentLength(s, _) => vec![s.0, s.1],
            AngleMeasure(a, _) | RightAngle(a) => vec![a.a, a.vertex, a.c],
            Midpoint(m, s) => vec![m, s.0, s.1],
            OnCircle {
                point,
                center,
                radius,
            } => vec![point, center, radius.0, radius.1],
            CongruentTriangles(t1, t2) | SimilarTriangles(t1, t2) => {
                vec![t1.0[0], t1.0[1], t1.0[2], t2.0[0], t2.0[1], t2.0[2]]
            }
        }
    }

    pub fn value(&self) -> Option<Rational> {
        match *self {
            Statement::SegmentLength(_, v)
            | Statement::AngleMeasure(_, v)
            | Statement::SegmentRatio(_, _, v) => Some(v),
            _ => None,
        }
    }

    pub fn unit(&self) -> Option<Unit> {
        self.predicate().unit()
    }

    /// Builds a canonical statement from a predicate, its flat point list
    /// (serialization order, uncanonicalized) and an optional value.
    pub fn from_parts(
        pred: Predicate,
        pts: &[PointId],
        value: Option<Rational>,
    ) -> Result<Statement, StatementError> {
        if pts.len() != pred.arity() {
            return malformed(format!(
                "{} takes {} points, got {}",
                pred.name(),
                pred.arity(),
                pts.len()
            ));
        }
        if pred.has_value() != value.is_some() {
            return malformed(format!("{} value slot mismatch", pred.name()));
        }
        let seg = |i: usize| Segment::new(pts[i], pts[i + 1]);
        let ang = |i: usize| Angle::new(pts[i], pts[i + 1], pts[i + 2]);
        let tri = |i: usize| Triangle::new(pts[i], pts[i + 1], pts[i + 2]);
        let raw = match pred {
            Predicate::Collinear => Statement::Collinear(pts[0], pts[1], pts[2]),
            Predicate::Parallel => Statement::Parallel(seg(0)?, seg(2)?),
            Predicate::Perpendicular => Statement::Perpendicular(seg(0)?, seg(2)?),
            Predicate::EqualSegments => Statement::EqualSegments(seg(0)?, seg(2)?),
            Predicate::EqualAngles => Statement::EqualAngles(ang(0)?, ang(3)?),
            Predicate::SegmentLength => Statement::SegmentLength(seg(0)?, value.unwrap()),
            Predicate::AngleMeasure => Statement::AngleMeasure(ang(0)?, value.unwrap()),
            Predicate::RightAngle => Statement::RightAngle(ang(0)?),
            Predicate::Midpoint => Statement::Midpoint(pts[0], seg(1)?),
            Predicate::OnCircle => Statement::OnCircle {
                point: pts[0],
                center: pts[1],
                radius: seg(2)?,
            },
            Predicate::CongruentTriangles => Statement::CongruentTriangles(tri(0)?, tri(3)?),
            Predicate::SimilarTriangles => Statement::SimilarTriangles(tri(0)?, tri(3)?),
            Predicate::SegmentRatio => Statement::SegmentRatio(seg(0)?, seg(2)?, value.unwrap()),
        };
        canonicalize(&raw)
    }

    /// Same statement with its value slot replaced.
    pub fn with_value(&self, value: Rational) -> Result<Statement, StatementError> {
        Statement::from_parts(self.predicate(), &self.points(), Some(value))
    }

    pub fn mentions(&self, p: PointId) -> bool {
        self.points().contains(&p)
    }

    pub fn to_text(&self) -> String {
        serialize_statement(self)
    }

    // Convenience constructors used throughout the crate and its tests. They
    // panic on degenerate input, which is always a programming error there.

    pub fn collinear(a: PointId, b: PointId, c: PointId) -> Statement {
        Statement::from_parts(Predicate::Collinear, &[a, b, c], None).expect("valid collinear")
    }

    pub fn eq_seg(a: PointId, b: PointId, c: PointId, d: PointId) -> Statement {
        Statement::from_parts(Predicate::EqualSegments, &[a, b, c, d], None).expect("valid eq_seg")
    }

    pub fn eq_angle(a: [PointId; 3], b: [PointId; 3]) -> Statement {
        Statement::from_parts(
            Predicate::EqualAngles,
            &[a[0], a[1], a[2], b[0], b[1], b[2]],
            None,
        )
        .expect("valid eq_angle")
    }

    pub fn parallel(a: PointId, b: PointId, c: PointId, d: PointId) -> Statement {
        Statement::from_parts(Predicate::Parallel, &[a, b, c, d], None).expect("valid parallel")
    }

    pub fn perpendicular(a: PointId, b: PointId, c: PointId, d: PointId) -> Statement {
        Statement::from_parts(Predicate::Perpendicular, &[a, b, c, d], None).expect("valid perp")
    }

    pub fn seg_len(a: PointId, b: PointId, v: Rational) -> Statement {
        Statement::from_parts(Predicate::SegmentLength, &[a, b], Some(v)).expect("valid seg_len")
    }

    pub fn angle_val(a: PointId, b: PointId, c: PointId, v: Rational) -> Statement {
        Statement::from_parts(Predicate::AngleMeasure, &[a, b, c], Some(v))
            .expect("valid angle_val")
    }

    pub fn right_angle(a: PointId, b: PointId, c: PointId) -> Statement {
        Statement::from_parts(Predicate::RightAngle, &[a, b, c], None).expect("valid right_angle")
    }

    pub fn midpoint(m: PointId, a: PointId, b: PointId) -> Statement {
        Statement::from_parts(Predicate::Midpoint, &[m, a, b], None).expect("valid midpoint")
    }

    pub fn on_circle(p: PointId, center: PointId, r1: PointId, r2: PointId) -> Statement {
        Statement::from_parts(Predicate::OnCircle, &[p, center, r1, r2], None)
            .expect("valid on_circle")
    }

    pub fn seg_ratio(a: PointId, b: PointId, c: PointId, d: PointId, v: Rational) -> Statement {
        Statement::from_parts(Predicate::SegmentRatio, &[a, b, c, d], Some(v))
            .expect("valid seg_ratio")
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_statement(self))
    }
}

impl FromStr for Statement {
    type Err = StatementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_statement(s)
    }
}

impl Serialize for Statement {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&serialize_statement(self))
    }
}

impl<'de> Deserialize<'de> for Statement {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_statement(&text).map_err(serde::de::Error::custom)
    }
}

pub fn format_rational(v: Rational) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Formal text of a canonical statement.
pub fn serialize_statement(s: &Statement) -> String {
    let pred = s.predicate();
    let pts = s.points();
    let mut out = String::with_capacity(24);
    out.push_str(pred.name());
    out.push('(');
    let mut i = 0;
    for (g, &size) in pred.groups().iter().enumerate() {
        if g > 0 {
            out.push(';');
        }
        for k in 0..size {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&pts[i].label());
            i += 1;
        }
    }
    if let Some(v) = s.value() {
        out.push(';');
        out.push_str(&format_rational(v));
    }
    out.push(')');
    out
}

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn fail<T>(&self, expected: &[&'static str]) -> Result<T, StatementError> {
        Err(StatementError::Parse {
            offset: self.pos,
            expected: expected.to_vec(),
        })
    }

    fn expect(&mut self, ch: u8, name: &'static str) -> Result<(), StatementError> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&[name])
        }
    }

    fn point(&mut self) -> Result<PointId, StatementError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_uppercase() => self.pos += 1,
            _ => return self.fail(&["point"]),
        }
        if let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                self.pos += 1;
            }
        }
        let label = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii");
        PointId::from_label(label).ok_or_else(|| StatementError::UnknownPoint(label.to_string()))
    }

    fn integer(&mut self) -> Result<i64, StatementError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.fail(&["integer"]);
        }
        let digits = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii");
        digits.parse().map_err(|_| StatementError::Parse {
            offset: start,
            expected: vec!["integer in i64 range"],
        })
    }

    fn rational(&mut self) -> Result<Rational, StatementError> {
        let numer = self.integer()?;
        if self.peek() == Some(b'/') {
            self.pos += 1;
            let at = self.pos;
            let denom = self.integer()?;
            if denom == 0 {
                return Err(StatementError::Parse {
                    offset: at,
                    expected: vec!["non-zero denominator"],
                });
            }
            Ok(Rational::new(numer, denom))
        } else {
            Ok(Rational::from_integer(numer))
        }
    }
}

/// Parses one statement in formal text and returns its canonical form.
pub fn parse_statement(text: &str) -> Result<Statement, StatementError> {
    let mut cur = Cursor {
        text: text.as_bytes(),
        pos: 0,
    };
    while cur
        .peek()
        .is_some_and(|c| c.is_ascii_lowercase() || c == b'_')
    {
        cur.pos += 1;
    }
    if cur.pos == 0 {
        return cur.fail(&["predicate name"]);
    }
    let name = &text[..cur.pos];
    let pred = Predicate::from_name(name).ok_or_else(|| StatementError::UnknownPredicate {
        name: name.to_string(),
        offset: 0,
    })?;
    cur.expect(b'(', "(")?;
    let mut pts = Vec::with_capacity(pred.arity());
    for (g, &size) in pred.groups().iter().enumerate() {
        if g > 0 {
            cur.expect(b';', ";")?;
        }
        for k in 0..size {
            if k > 0 {
                cur.expect(b',', ",")?;
            }
            pts.push(cur.point()?);
        }
    }
    let value = if pred.has_value() {
        cur.expect(b';', ";")?;
        Some(cur.rational()?)
    } else {
        None
    };
    cur.expect(b')', ")")?;
    if cur.pos != text.len() {
        return cur.fail(&["end of input"]);
    }
    Statement::from_parts(pred, &pts, value)
}

/// Like [`parse_statement`] but rejects points outside `0..num_points`.
pub fn parse_statement_in(text: &str, num_points: usize) -> Result<Statement, StatementError> {
    let s = parse_statement(text)?;
    if let Some(p) = s.points().into_iter().find(|p| p.index() >= num_points) {
        return Err(StatementError::UnknownPoint(p.label()));
    }
    Ok(s)
}

/// Deduplicated canonical statements in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StatementSet {
    members: IndexSet<Statement>,
}

impl StatementSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `s`; returns its position and whether it was new.
    pub fn insert(&mut self, s: Statement) -> (usize, bool) {
        self.members.insert_full(s)
    }

    pub fn contains(&self, s: &Statement) -> bool {
        self.members.contains(s)
    }

    pub fn index_of(&self, s: &Statement) -> Option<usize> {
        self.members.get_index_of(s)
    }

    pub fn get(&self, i: usize) -> Option<&Statement> {
        self.members.get_index(i)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Statement> {
        self.members.iter()
    }

    pub fn is_superset(&self, other: &StatementSet) -> bool {
        other.iter().all(|s| self.contains(s))
    }
}

impl FromIterator<Statement> for StatementSet {
    fn from_iter<I: IntoIterator<Item = Statement>>(iter: I) -> Self {
        StatementSet {
            members: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a StatementSet {
    type Item = &'a Statement;
    type IntoIter = indexmap::set::Iter<'a, Statement>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

impl Serialize for StatementSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.members.iter())
    }
}

impl<'de> Deserialize<'de> for StatementSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<Statement>::deserialize(deserializer)?;
        Ok(v.into_iter().collect())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn p(label: &str) -> PointId {
        PointId::from_label(label).unwrap()
    }

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn labels_roundtrip() {
        for i in 0..=PointId::MAX_INDEX {
            let id = PointId::new(i);
            assert_eq!(PointId::from_label(&id.label()), Some(id));
        }
        assert_eq!(p("A").index(), 0);
        assert_eq!(p("L").index(), 11);
        assert_eq!(p("A1").index(), 26);
        assert_eq!(PointId::from_label("A0"), None);
        assert_eq!(PointId::from_label("a"), None);
    }

    #[test]
    fn canonicalize_examples() {
        let raw = Statement::EqualSegments(Segment(p("C"), p("D")), Segment(p("A"), p("B")));
        assert_eq!(canonicalize(&raw).unwrap().to_text(), "eq_seg(A,B;C,D)");

        let raw = Statement::EqualAngles(
            Angle {
                a: p("C"),
                vertex: p("B"),
                c: p("A"),
            },
            Angle {
                a: p("F"),
                vertex: p("E"),
                c: p("D"),
            },
        );
        assert_eq!(
            canonicalize(&raw).unwrap().to_text(),
            "eq_angle(A,B,C;D,E,F)"
        );

        let raw = Statement::Collinear(p("C"), p("A"), p("B"));
        assert_eq!(canonicalize(&raw).unwrap().to_text(), "collinear(A,B,C)");
    }

    #[test]
    fn canonicalize_rejects_degenerate() {
        let raw = Statement::Collinear(p("A"), p("A"), p("B"));
        assert!(matches!(
            canonicalize(&raw),
            Err(StatementError::Malformed(_))
        ));
        let seg = Segment::new(p("A"), p("B")).unwrap();
        assert!(canonicalize(&Statement::EqualSegments(seg, seg)).is_err());
        assert!(Statement::from_parts(
            Predicate::AngleMeasure,
            &[p("A"), p("B"), p("C")],
            Some(r(180))
        )
        .is_err());
        assert!(
            Statement::from_parts(Predicate::SegmentLength, &[p("A"), p("B")], Some(r(0))).is_err()
        );
        assert!(
            Statement::from_parts(Predicate::Midpoint, &[p("A"), p("A"), p("B")], None).is_err()
        );
        assert!(Statement::from_parts(
            Predicate::OnCircle,
            &[p("P"), p("O"), p("O"), p("P")],
            None
        )
        .is_err());
        assert!(Statement::from_parts(Predicate::Collinear, &[p("A"), p("B")], None).is_err());
    }

    #[test]
    fn ratio_orientation_inverts_value() {
        let s = Statement::seg_ratio(p("C"), p("D"), p("A"), p("B"), Rational::new(2, 1));
        assert_eq!(s.to_text(), "seg_ratio(A,B;C,D;1/2)");
    }

    #[test]
    fn triangle_pairs_keep_correspondence() {
        let s = Statement::from_parts(
            Predicate::CongruentTriangles,
            &[p("E"), p("D"), p("F"), p("B"), p("A"), p("C")],
            None,
        )
        .unwrap();
        assert_eq!(s.to_text(), "congruent(A,B,C;D,E,F)");
        // The isosceles self-correspondence is a legitimate statement.
        let s = Statement::from_parts(
            Predicate::CongruentTriangles,
            &[p("A"), p("C"), p("B"), p("A"), p("B"), p("C")],
            None,
        )
        .unwrap();
        assert_eq!(s.to_text(), "congruent(A,B,C;A,C,B)");
        assert!(Statement::from_parts(
            Predicate::SimilarTriangles,
            &[p("A"), p("B"), p("C"), p("A"), p("B"), p("C")],
            None
        )
        .is_err());
    }

    #[test]
    fn parse_examples() {
        let s = parse_statement("eq_seg(A,B;C,D)").unwrap();
        assert_eq!(s, Statement::eq_seg(p("A"), p("B"), p("C"), p("D")));
        let s = parse_statement("angle_val(A,B,C;90)").unwrap();
        assert_eq!(s, Statement::angle_val(p("A"), p("B"), p("C"), r(90)));
        assert_eq!(s.unit(), Some(Unit::Degrees));
        match parse_statement("eq_seg(A,B)") {
            Err(StatementError::Parse { offset, expected }) => {
                assert_eq!(offset, 10);
                assert_eq!(expected, vec![";"]);
            }
            other => panic!("expected arity parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_statement("tangent(A,B)"),
            Err(StatementError::UnknownPredicate { .. })
        ));
        assert!(matches!(
            parse_statement("collinear(A,B,C) "),
            Err(StatementError::Parse { offset: 16, .. })
        ));
        assert!(matches!(
            parse_statement("seg_len(A,B;1/0)"),
            Err(StatementError::Parse { .. })
        ));
        assert!(matches!(
            parse_statement("seg_len(A,B;x)"),
            Err(StatementError::Parse { .. })
        ));
        assert!(matches!(
            parse_statement("collinear(A,B,C0)"),
            Err(StatementError::UnknownPoint(_))
        ));
        assert!(
            matches!(parse_statement_in("collinear(A,B,M)", 5), Err(StatementError::UnknownPoint(l)) if l == "M")
        );
        assert!(parse_statement_in("collinear(A,B,E)", 5).is_ok());
    }

    #[test]
    fn serialize_examples() {
        assert_eq!(
            serialize_statement(&Statement::eq_seg(p("A"), p("B"), p("C"), p("D"))),
            "eq_seg(A,B;C,D)"
        );
        assert_eq!(
            serialize_statement(&Statement::angle_val(p("A"), p("B"), p("C"), r(45))),
            "angle_val(A,B,C;45)"
        );
        assert_eq!(
            serialize_statement(&Statement::seg_ratio(
                p("A"),
                p("B"),
                p("C"),
                p("D"),
                Rational::new(1, 2)
            )),
            "seg_ratio(A,B;C,D;1/2)"
        );
        assert_eq!(
            serialize_statement(&Statement::on_circle(p("C"), p("O"), p("A"), p("O"))),
            "on_circle(C,O;A,O)"
        );
    }

    #[test]
    fn parse_canonicalizes_and_reduces() {
        assert_eq!(
            parse_statement("seg_ratio(C,D;A,B;4/2)").unwrap().to_text(),
            "seg_ratio(A,B;C,D;1/2)"
        );
        assert_eq!(
            parse_statement("midpoint(M;B,A)").unwrap().to_text(),
            "midpoint(M;A,B)"
        );
    }

    #[test]
    fn statement_set_dedupes_in_order() {
        let mut set = StatementSet::new();
        let a = Statement::eq_seg(p("A"), p("B"), p("C"), p("D"));
        let b = Statement::collinear(p("A"), p("B"), p("C"));
        assert_eq!(set.insert(a.clone()), (0, true));
        assert_eq!(set.insert(b.clone()), (1, true));
        assert_eq!(
            set.insert(Statement::eq_seg(p("D"), p("C"), p("B"), p("A"))),
            (0, false)
        );
        assert_eq!(set.len(), 2);
        assert_eq!(set.iter().cloned().collect::<Vec<_>>(), vec![a, b]);
    }

    fn arb_point() -> impl Strategy<Value = PointId> {
        (0u16..14).prop_map(PointId::new)
    }

    fn arb_rational() -> impl Strategy<Value = Rational> {
        (1i64..500, 1i64..13).prop_map(|(n, d)| Rational::new(n, d))
    }

    /// Random statements, built from raw parts (most are valid).
    pub fn arb_statement() -> impl Strategy<Value = Statement> {
        (
            proptest::sample::select(Predicate::ALL.to_vec()),
            proptest::collection::vec(arb_point(), 6),
            arb_rational(),
            1i64..180,
        )
            .prop_filter_map("degenerate draw", |(pred, pts, v, deg)| {
                let value = match pred {
                    Predicate::AngleMeasure => Some(Rational::from_integer(deg)),
                    _ if pred.has_value() => Some(v),
                    _ => None,
                };
                Statement::from_parts(pred, &pts[..pred.arity()], value).ok()
            })
    }

    proptest! {
        #[test]
        fn roundtrip_text(s in arb_statement()) {
            let text = serialize_statement(&s);
            prop_assert!(text.is_ascii());
            prop_assert!(!text.contains('\n'));
            prop_assert_eq!(parse_statement(&text).unwrap(), s);
        }

        #[test]
        fn canonicalize_is_idempotent(s in arb_statement()) {
            prop_assert_eq!(canonicalize(&s).unwrap(), s);
        }

        #[test]
        fn symmetric_permutations_agree(pts in proptest::collection::vec(arb_point(), 6), v in arb_rational()) {
            // Swapping symmetric arguments before canonicalization never changes the result.
            let [a, b, c, d, e, f] = [pts[0], pts[1], pts[2], pts[3], pts[4], pts[5]];
            if let Ok(s) = Statement::from_parts(Predicate::EqualSegments, &[a, b, c, d], None) {
                prop_assert_eq!(&Statement::from_parts(Predicate::EqualSegments, &[d, c, b, a], None).unwrap(), &s);
            }
            if let Ok(s) = Statement::from_parts(Predicate::EqualAngles, &[a, b, c, d, e, f], None) {
                prop_assert_eq!(&Statement::from_parts(Predicate::EqualAngles, &[f, e, d, c, b, a], None).unwrap(), &s);
            }
            if let Ok(s) = Statement::from_parts(Predicate::Collinear, &[a, b, c], None) {
                prop_assert_eq!(&Statement::from_parts(Predicate::Collinear, &[c, a, b], None).unwrap(), &s);
            }
            if let Ok(s) = Statement::from_parts(Predicate::SegmentRatio, &[a, b, c, d], Some(v)) {
                prop_assert_eq!(&Statement::from_parts(Predicate::SegmentRatio, &[d, c, b, a], Some(v.recip())).unwrap(), &s);
            }
            if let Ok(s) = Statement::from_parts(Predicate::SimilarTriangles, &[a, b, c, d, e, f], None) {
                prop_assert_eq!(&Statement::from_parts(Predicate::SimilarTriangles, &[e, f, d, b, c, a], None).unwrap(), &s);
            }
        }

        #[test]
        fn equal_forms_hash_equal(s in arb_statement()) {
            use std::collections::hash_map::DefaultHasher;
            use std::hash::{Hash, Hasher};
            let t = parse_statement(&s.to_text()).unwrap();
            let mut h1 = DefaultHasher::new();
            let mut h2 = DefaultHasher::new();
            s.hash(&mut h1);
            t.hash(&mut h2);
            prop_assert_eq!(h1.finish(), h2.finish());
        }
    }
}
