//! Geometric rules and the premise matcher.
//!
//! A rule is a list of premise patterns over point variables, a numeric
//! side condition on the bound points, and a conclusion builder. Patterns
//! are matched against every symmetric presentation of a stored statement
//! (segment endpoints swapped, rays swapped, triangle correspondences
//! permuted and so on), so rules can be written against one argument order.

use std::collections::HashMap;
use std::fmt;
use std::ops::Sub;

use num_integer::Roots;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub};

use crate::numeric::{residual, side_of, Coord, SceneGeometry};
use crate::statement::{PointId, Predicate, Rational, Statement};

/// Index of a point variable inside a rule.
pub type Var = u8;

const MAX_VARS: usize = 10;
const MAX_VALS: usize = 3;

const A: Var = 0;
const B: Var = 1;
const C: Var = 2;
const D: Var = 3;
const E: Var = 4;
const F: Var = 5;
const G: Var = 6;
const H: Var = 7;
const I: Var = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueSlot {
    None,
    Var(u8),
    Fixed(i64),
}

/// When a premise may be satisfied without a fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reflexive {
    Never,
    /// An `eq_seg` premise whose two segments are the same segment.
    SameSegment,
    /// An `eq_angle` premise whose two angles are the same angle.
    SameAngle,
}

#[derive(Clone, Debug)]
pub struct Pattern {
    pub pred: Predicate,
    pub vars: Vec<Var>,
    pub value: ValueSlot,
    pub reflexive: Reflexive,
}

fn pat(pred: Predicate, vars: &[Var], value: ValueSlot) -> Pattern {
    assert_eq!(vars.len(), pred.arity(), "{pred:?} pattern arity");
    Pattern {
        pred,
        vars: vars.to_vec(),
        value,
        reflexive: Reflexive::Never,
    }
}

fn plain(pred: Predicate, vars: &[Var]) -> Pattern {
    pat(pred, vars, ValueSlot::None)
}

fn valued(pred: Predicate, vars: &[Var], slot: u8) -> Pattern {
    pat(pred, vars, ValueSlot::Var(slot))
}

fn or_same(mut p: Pattern) -> Pattern {
    p.reflexive = match p.pred {
        Predicate::EqualSegments => Reflexive::SameSegment,
        Predicate::EqualAngles => Reflexive::SameAngle,
        other => panic!("{other:?} premises cannot be reflexive"),
    };
    p
}

/// Classification used by statistics and narration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostTag {
    Geometric,
    Algebraic,
}

/// Bound variables of a partial match.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Binding {
    pts: [Option<PointId>; MAX_VARS],
    vals: [Option<Rational>; MAX_VALS],
}

impl Binding {
    pub fn point(&self, v: Var) -> PointId {
        self.pts[v as usize].expect("variable bound by premises")
    }

    pub fn value(&self, slot: u8) -> Rational {
        self.vals[slot as usize].expect("value bound by premises")
    }

    fn pts(&self, vs: &[Var]) -> Vec<PointId> {
        vs.iter().map(|&v| self.point(v)).collect()
    }
}

type Guard = fn(&Binding, &Geo) -> bool;
type Conclude = fn(&Binding) -> Option<Statement>;

/// Coordinates lookup for guards.
pub struct Geo<'a>(&'a SceneGeometry);

impl Geo<'_> {
    fn at(&self, b: &Binding, v: Var) -> Coord {
        self.0
            .coord(b.point(v))
            .expect("bound point is in the scene")
    }

    fn noncollinear(&self, b: &Binding, p: Var, q: Var, r: Var) -> bool {
        let st = Statement::collinear(b.point(p), b.point(q), b.point(r));
        residual(self.0, &st).is_ok_and(|x| x > 1e-6)
    }

    /// `o` lies strictly between `p` and `q` (collinearity assumed).
    fn between(&self, b: &Binding, p: Var, o: Var, q: Var) -> bool {
        let (cp, co, cq) = (self.at(b, p), self.at(b, o), self.at(b, q));
        cp.sub(co).dot(cq.sub(co)) < 0.0
    }

    fn side(&self, b: &Binding, l1: Var, l2: Var, p: Var) -> f64 {
        let (a, c) = (self.at(b, l1), self.at(b, l2));
        let s = side_of(a, c, self.at(b, p));
        let scale = a.dist(c) * a.dist(self.at(b, p));
        if s.abs() <= 1e-9 * scale {
            0.0
        } else {
            s
        }
    }

    fn same_side(&self, b: &Binding, l1: Var, l2: Var, p: Var, q: Var) -> bool {
        self.side(b, l1, l2, p) * self.side(b, l1, l2, q) > 0.0
    }

    fn opposite_sides(&self, b: &Binding, l1: Var, l2: Var, p: Var, q: Var) -> bool {
        self.side(b, l1, l2, p) * self.side(b, l1, l2, q) < 0.0
    }

    /// Ray `v d` lies strictly inside the convex angle `p v q`.
    fn inside_angle(&self, b: &Binding, p: Var, v: Var, q: Var, d: Var) -> bool {
        let s_pq = self.side(b, v, p, q);
        s_pq != 0.0 && self.side(b, v, p, d) * s_pq > 0.0 && self.side(b, v, d, q) * s_pq > 0.0
    }
}

pub struct Rule {
    pub name: &'static str,
    pub cost: CostTag,
    pub premises: Vec<Pattern>,
    /// Variable groups whose members must bind distinct points. Variables in
    /// different groups may coincide.
    distinct: Vec<Vec<Var>>,
    guard: Guard,
    conclude: Conclude,
    /// For each variable, a bitmask of variables it must differ from.
    conflicts: [u16; MAX_VARS],
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rule").field("name", &self.name).finish()
    }
}

impl Rule {
    fn new(
        name: &'static str,
        cost: CostTag,
        premises: Vec<Pattern>,
        distinct: Option<Vec<Vec<Var>>>,
        guard: Guard,
        conclude: Conclude,
    ) -> Rule {
        let mut used: Vec<Var> = premises
            .iter()
            .flat_map(|p| p.vars.iter().copied())
            .collect();
        used.sort();
        used.dedup();
        let distinct = distinct.unwrap_or_else(|| vec![used.clone()]);
        let mut conflicts = [0u16; MAX_VARS];
        for group in &distinct {
            for &x in group {
                for &y in group {
                    if x != y {
                        conflicts[x as usize] |= 1 << y;
                    }
                }
            }
        }
        // Reflexive premises must come after every fact-only premise so that
        // their variables are bound when the "same" option is considered.
        let first_reflexive = premises
            .iter()
            .position(|p| p.reflexive != Reflexive::Never);
        if let Some(k) = first_reflexive {
            assert!(
                premises[k..]
                    .iter()
                    .all(|p| p.reflexive != Reflexive::Never),
                "{name}: reflexive premises last"
            );
        }
        Rule {
            name,
            cost,
            premises,
            distinct,
            guard,
            conclude,
            conflicts,
        }
    }

    pub fn distinct_groups(&self) -> &[Vec<Var>] {
        &self.distinct
    }
}

fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

fn rational_sqrt(v: Rational) -> Option<Rational> {
    if v <= int(0) {
        return None;
    }
    let (n, d) = (*v.numer(), *v.denom());
    let (rn, rd) = (n.sqrt(), d.sqrt());
    (rn * rn == n && rd * rd == d).then(|| Rational::new(rn, rd))
}

fn build(pred: Predicate, b: &Binding, vars: &[Var], value: Option<Rational>) -> Option<Statement> {
    Statement::from_parts(pred, &b.pts(vars), value).ok()
}

fn always(_: &Binding, _: &Geo) -> bool {
    true
}

use Predicate as P;

/// The rule library, in the fixed order used for tie-breaking.
pub fn catalog() -> &'static [Rule] {
    static CATALOG: std::sync::OnceLock<Vec<Rule>> = std::sync::OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

pub fn rule_by_name(name: &str) -> Option<&'static Rule> {
    catalog().iter().find(|r| r.name == name)
}

fn build_catalog() -> Vec<Rule> {
    use CostTag::{Algebraic, Geometric};
    let tri_groups = || Some(vec![vec![A, B, C], vec![D, E, F]]);
    vec![
        Rule::new(
            "isosceles_base_angles",
            Geometric,
            vec![plain(P::EqualSegments, &[A, B, A, C])],
            None,
            |b, g| g.noncollinear(b, A, B, C),
            |b| build(P::EqualAngles, b, &[A, B, C, A, C, B], None),
        ),
        Rule::new(
            "isosceles_converse",
            Geometric,
            vec![plain(P::EqualAngles, &[A, B, C, A, C, B])],
            None,
            |b, g| g.noncollinear(b, A, B, C),
            |b| build(P::EqualSegments, b, &[A, B, A, C], None),
        ),
        Rule::new(
            "triangle_angle_sum",
            Algebraic,
            vec![
                valued(P::AngleMeasure, &[B, A, C], 0),
                valued(P::AngleMeasure, &[A, B, C], 1),
            ],
            None,
            |b, g| g.noncollinear(b, A, B, C),
            |b| {
                let rest = int(180)
                    .checked_sub(&b.value(0))?
                    .checked_sub(&b.value(1))?;
                build(P::AngleMeasure, b, &[A, C, B], Some(rest))
            },
        ),
        Rule::new(
            "isosceles_angle_sum",
            Algebraic,
            vec![
                valued(P::AngleMeasure, &[B, A, C], 0),
                plain(P::EqualAngles, &[A, B, C, A, C, B]),
            ],
            None,
            |b, g| g.noncollinear(b, A, B, C),
            |b| {
                let base = (int(180).checked_sub(&b.value(0))?) / int(2);
                build(P::AngleMeasure, b, &[A, B, C], Some(base))
            },
        ),
        Rule::new(
            "equiangular_triangle",
            Algebraic,
            vec![
                plain(P::EqualAngles, &[B, A, C, A, B, C]),
                plain(P::EqualAngles, &[A, B, C, A, C, B]),
            ],
            None,
            |b, g| g.noncollinear(b, A, B, C),
            |b| build(P::AngleMeasure, b, &[B, A, C], Some(int(60))),
        ),
        Rule::new(
            "vertical_angles",
            Geometric,
            vec![
                plain(P::Collinear, &[A, E, C]),
                plain(P::Collinear, &[B, E, D]),
            ],
            None,
            |b, g| g.between(b, A, E, C) && g.between(b, B, E, D) && g.noncollinear(b, A, E, B),
            |b| build(P::EqualAngles, b, &[A, E, B, C, E, D], None),
        ),
        Rule::new(
            "supplementary_angles",
            Algebraic,
            vec![
                plain(P::Collinear, &[A, E, C]),
                valued(P::AngleMeasure, &[A, E, B], 0),
            ],
            None,
            |b, g| g.between(b, A, E, C) && g.noncollinear(b, A, E, B),
            |b| {
                build(
                    P::AngleMeasure,
                    b,
                    &[C, E, B],
                    Some(int(180).checked_sub(&b.value(0))?),
                )
            },
        ),
        Rule::new(
            "angle_addition",
            Algebraic,
            vec![
                valued(P::AngleMeasure, &[A, B, D], 0),
                valued(P::AngleMeasure, &[D, B, C], 1),
            ],
            None,
            |b, g| g.inside_angle(b, A, B, C, D),
            |b| {
                build(
                    P::AngleMeasure,
                    b,
                    &[A, B, C],
                    Some(b.value(0).checked_add(&b.value(1))?),
                )
            },
        ),
        Rule::new(
            "angle_subtraction",
            Algebraic,
            vec![
                valued(P::AngleMeasure, &[A, B, C], 0),
                valued(P::AngleMeasure, &[A, B, D], 1),
            ],
            None,
            |b, g| g.inside_angle(b, A, B, C, D),
            |b| {
                build(
                    P::AngleMeasure,
                    b,
                    &[D, B, C],
                    Some(b.value(0).checked_sub(&b.value(1))?),
                )
            },
        ),
        Rule::new(
            "same_ray_angle",
            Algebraic,
            vec![
                plain(P::Collinear, &[B, C, D]),
                valued(P::AngleMeasure, &[A, B, C], 0),
            ],
            None,
            |b, g| !g.between(b, C, B, D) && g.noncollinear(b, A, B, C),
            |b| build(P::AngleMeasure, b, &[A, B, D], Some(b.value(0))),
        ),
        Rule::new(
            "alternate_interior_angles",
            Geometric,
            vec![plain(P::Parallel, &[A, B, C, D])],
            None,
            |b, g| g.opposite_sides(b, B, C, A, D),
            |b| build(P::EqualAngles, b, &[A, B, C, B, C, D], None),
        ),
        Rule::new(
            "corresponding_angles",
            Geometric,
            vec![
                plain(P::Parallel, &[A, B, C, D]),
                plain(P::Collinear, &[E, B, C]),
            ],
            None,
            |b, g| g.between(b, E, B, C) && g.same_side(b, B, C, A, D),
            |b| build(P::EqualAngles, b, &[A, B, E, D, C, B], None),
        ),
        Rule::new(
            "co_interior_angles",
            Algebraic,
            vec![
                plain(P::Parallel, &[A, B, C, D]),
                valued(P::AngleMeasure, &[A, B, C], 0),
            ],
            None,
            |b, g| g.same_side(b, B, C, A, D),
            |b| {
                build(
                    P::AngleMeasure,
                    b,
                    &[B, C, D],
                    Some(int(180).checked_sub(&b.value(0))?),
                )
            },
        ),
        Rule::new(
            "perpendicular_right_angle",
            Geometric,
            vec![plain(P::Perpendicular, &[A, B, B, C])],
            None,
            always,
            |b| build(P::RightAngle, b, &[A, B, C], None),
        ),
        Rule::new(
            "perpendicular_foot_right_angle",
            Geometric,
            vec![
                plain(P::Perpendicular, &[A, D, B, C]),
                plain(P::Collinear, &[B, D, C]),
            ],
            None,
            always,
            |b| build(P::RightAngle, b, &[A, D, B], None),
        ),
        Rule::new(
            "right_angle_measure",
            Algebraic,
            vec![plain(P::RightAngle, &[A, B, C])],
            None,
            always,
            |b| build(P::AngleMeasure, b, &[A, B, C], Some(int(90))),
        ),
        Rule::new(
            "midpoint_equal_halves",
            Geometric,
            vec![plain(P::Midpoint, &[E, A, B])],
            None,
            always,
            |b| build(P::EqualSegments, b, &[A, E, E, B], None),
        ),
        Rule::new(
            "midpoint_half_ratio",
            Algebraic,
            vec![plain(P::Midpoint, &[E, A, B])],
            None,
            always,
            |b| build(P::SegmentRatio, b, &[A, E, A, B], Some(Rational::new(1, 2))),
        ),
        Rule::new(
            "midsegment_parallel",
            Geometric,
            vec![
                plain(P::Midpoint, &[D, A, B]),
                plain(P::Midpoint, &[E, A, C]),
            ],
            None,
            |b, g| g.noncollinear(b, A, B, C),
            |b| build(P::Parallel, b, &[D, E, B, C], None),
        ),
        Rule::new(
            "midsegment_half_length",
            Algebraic,
            vec![
                plain(P::Midpoint, &[D, A, B]),
                plain(P::Midpoint, &[E, A, C]),
            ],
            None,
            |b, g| g.noncollinear(b, A, B, C),
            |b| build(P::SegmentRatio, b, &[D, E, B, C], Some(Rational::new(1, 2))),
        ),
        Rule::new(
            "pythagoras",
            Algebraic,
            vec![
                pat(P::AngleMeasure, &[A, B, C], ValueSlot::Fixed(90)),
                valued(P::SegmentLength, &[A, B], 0),
                valued(P::SegmentLength, &[B, C], 1),
            ],
            None,
            always,
            |b| {
                let (x, y) = (b.value(0), b.value(1));
                let sq = x.checked_mul(&x)?.checked_add(&y.checked_mul(&y)?)?;
                build(P::SegmentLength, b, &[A, C], Some(rational_sqrt(sq)?))
            },
        ),
        Rule::new(
            "pythagoras_leg",
            Algebraic,
            vec![
                pat(P::AngleMeasure, &[A, B, C], ValueSlot::Fixed(90)),
                valued(P::SegmentLength, &[A, C], 0),
                valued(P::SegmentLength, &[A, B], 1),
            ],
            None,
            always,
            |b| {
                let (z, x) = (b.value(0), b.value(1));
                let sq = z.checked_mul(&z)?.checked_sub(&x.checked_mul(&x)?)?;
                build(P::SegmentLength, b, &[B, C], Some(rational_sqrt(sq)?))
            },
        ),
        Rule::new(
            "sss_congruence",
            Geometric,
            vec![
                plain(P::EqualSegments, &[A, B, D, E]),
                plain(P::EqualSegments, &[B, C, E, F]),
                or_same(plain(P::EqualSegments, &[C, A, F, D])),
            ],
            tri_groups(),
            |b, g| g.noncollinear(b, A, B, C) && g.noncollinear(b, D, E, F),
            |b| build(P::CongruentTriangles, b, &[A, B, C, D, E, F], None),
        ),
        Rule::new(
            "sas_congruence",
            Geometric,
            vec![
                plain(P::EqualSegments, &[A, B, D, E]),
                plain(P::EqualAngles, &[A, B, C, D, E, F]),
                or_same(plain(P::EqualSegments, &[B, C, E, F])),
            ],
            tri_groups(),
            |b, g| g.noncollinear(b, A, B, C) && g.noncollinear(b, D, E, F),
            |b| build(P::CongruentTriangles, b, &[A, B, C, D, E, F], None),
        ),
        Rule::new(
            "asa_congruence",
            Geometric,
            vec![
                plain(P::EqualAngles, &[C, A, B, F, D, E]),
                plain(P::EqualAngles, &[A, B, C, D, E, F]),
                or_same(plain(P::EqualSegments, &[A, B, D, E])),
            ],
            tri_groups(),
            |b, g| g.noncollinear(b, A, B, C) && g.noncollinear(b, D, E, F),
            |b| build(P::CongruentTriangles, b, &[A, B, C, D, E, F], None),
        ),
        Rule::new(
            "congruent_sides",
            Geometric,
            vec![plain(P::CongruentTriangles, &[A, B, C, D, E, F])],
            tri_groups(),
            always,
            |b| build(P::EqualSegments, b, &[A, B, D, E], None),
        ),
        Rule::new(
            "congruent_angles",
            Geometric,
            vec![plain(P::CongruentTriangles, &[A, B, C, D, E, F])],
            tri_groups(),
            always,
            |b| build(P::EqualAngles, b, &[A, B, C, D, E, F], None),
        ),
        Rule::new(
            "aa_similarity",
            Geometric,
            vec![
                plain(P::EqualAngles, &[B, A, C, E, D, F]),
                plain(P::EqualAngles, &[A, B, C, D, E, F]),
            ],
            tri_groups(),
            |b, g| g.noncollinear(b, A, B, C) && g.noncollinear(b, D, E, F),
            |b| build(P::SimilarTriangles, b, &[A, B, C, D, E, F], None),
        ),
        Rule::new(
            "similar_side_ratio",
            Algebraic,
            vec![
                plain(P::SimilarTriangles, &[A, B, C, D, E, F]),
                valued(P::SegmentLength, &[A, B], 0),
                valued(P::SegmentLength, &[D, E], 1),
            ],
            tri_groups(),
            always,
            |b| {
                build(
                    P::SegmentRatio,
                    b,
                    &[B, C, E, F],
                    Some(b.value(0) / b.value(1)),
                )
            },
        ),
        Rule::new(
            "inscribed_angle",
            Geometric,
            vec![
                plain(P::OnCircle, &[B, D, D, A]),
                plain(P::OnCircle, &[C, D, D, A]),
                valued(P::AngleMeasure, &[A, D, B], 0),
            ],
            None,
            |b, g| g.same_side(b, A, B, C, D),
            |b| build(P::AngleMeasure, b, &[A, C, B], Some(b.value(0) / int(2))),
        ),
        Rule::new(
            "inscribed_angle_at_reference",
            Geometric,
            vec![
                plain(P::OnCircle, &[B, D, D, A]),
                plain(P::OnCircle, &[C, D, D, A]),
                valued(P::AngleMeasure, &[B, D, C], 0),
            ],
            None,
            |b, g| g.same_side(b, B, C, A, D),
            |b| build(P::AngleMeasure, b, &[B, A, C], Some(b.value(0) / int(2))),
        ),
        Rule::new(
            "circle_radius",
            Geometric,
            vec![plain(P::OnCircle, &[A, D, B, C])],
            Some(vec![vec![A, D], vec![B, C]]),
            always,
            |b| build(P::EqualSegments, b, &[D, A, B, C], None),
        ),
        Rule::new(
            "thales",
            Geometric,
            vec![
                plain(P::Midpoint, &[D, A, B]),
                plain(P::OnCircle, &[C, D, D, A]),
            ],
            None,
            always,
            |b| build(P::RightAngle, b, &[A, C, B], None),
        ),
        Rule::new(
            "segment_equality_transitivity",
            Algebraic,
            vec![
                plain(P::EqualSegments, &[A, B, C, D]),
                plain(P::EqualSegments, &[C, D, E, F]),
            ],
            Some(vec![vec![A, B], vec![C, D], vec![E, F]]),
            always,
            |b| build(P::EqualSegments, b, &[A, B, E, F], None),
        ),
        Rule::new(
            "angle_equality_transitivity",
            Algebraic,
            vec![
                plain(P::EqualAngles, &[A, B, C, D, E, F]),
                plain(P::EqualAngles, &[D, E, F, G, H, I]),
            ],
            Some(vec![vec![A, B, C], vec![D, E, F], vec![G, H, I]]),
            always,
            |b| build(P::EqualAngles, b, &[A, B, C, G, H, I], None),
        ),
        Rule::new(
            "length_substitution",
            Algebraic,
            vec![
                plain(P::EqualSegments, &[A, B, C, D]),
                valued(P::SegmentLength, &[C, D], 0),
            ],
            Some(vec![vec![A, B], vec![C, D]]),
            always,
            |b| build(P::SegmentLength, b, &[A, B], Some(b.value(0))),
        ),
        Rule::new(
            "angle_substitution",
            Algebraic,
            vec![
                plain(P::EqualAngles, &[A, B, C, D, E, F]),
                valued(P::AngleMeasure, &[D, E, F], 0),
            ],
            Some(vec![vec![A, B, C], vec![D, E, F]]),
            always,
            |b| build(P::AngleMeasure, b, &[A, B, C], Some(b.value(0))),
        ),
        Rule::new(
            "ratio_length",
            Algebraic,
            vec![
                valued(P::SegmentRatio, &[A, B, C, D], 0),
                valued(P::SegmentLength, &[C, D], 1),
            ],
            Some(vec![vec![A, B], vec![C, D]]),
            always,
            |b| {
                build(
                    P::SegmentLength,
                    b,
                    &[A, B],
                    Some(b.value(0).checked_mul(&b.value(1))?),
                )
            },
        ),
    ]
}

/// Alternative argument orders of a predicate's flat point list. The flag
/// marks presentations that invert the statement's value.
fn presentations(pred: Predicate) -> &'static [(&'static [usize], bool)] {
    macro_rules! same {
        ($($p:expr),* $(,)?) => { &[$((&$p, false)),*] };
    }
    match pred {
        P::Collinear => same![
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0]
        ],
        P::Parallel | P::Perpendicular | P::EqualSegments => same![
            [0, 1, 2, 3],
            [1, 0, 2, 3],
            [0, 1, 3, 2],
            [1, 0, 3, 2],
            [2, 3, 0, 1],
            [3, 2, 0, 1],
            [2, 3, 1, 0],
            [3, 2, 1, 0],
        ],
        P::EqualAngles => same![
            [0, 1, 2, 3, 4, 5],
            [2, 1, 0, 3, 4, 5],
            [0, 1, 2, 5, 4, 3],
            [2, 1, 0, 5, 4, 3],
            [3, 4, 5, 0, 1, 2],
            [5, 4, 3, 0, 1, 2],
            [3, 4, 5, 2, 1, 0],
            [5, 4, 3, 2, 1, 0],
        ],
        P::SegmentLength => same![[0, 1], [1, 0]],
        P::AngleMeasure | P::RightAngle => same![[0, 1, 2], [2, 1, 0]],
        P::Midpoint => same![[0, 1, 2], [0, 2, 1]],
        P::OnCircle => same![[0, 1, 2, 3], [0, 1, 3, 2]],
        P::CongruentTriangles | P::SimilarTriangles => same![
            [0, 1, 2, 3, 4, 5],
            [0, 2, 1, 3, 5, 4],
            [1, 0, 2, 4, 3, 5],
            [1, 2, 0, 4, 5, 3],
            [2, 0, 1, 5, 3, 4],
            [2, 1, 0, 5, 4, 3],
            [3, 4, 5, 0, 1, 2],
            [3, 5, 4, 0, 2, 1],
            [4, 3, 5, 1, 0, 2],
            [4, 5, 3, 1, 2, 0],
            [5, 3, 4, 2, 0, 1],
            [5, 4, 3, 2, 1, 0],
        ],
        P::SegmentRatio => &[
            (&[0, 1, 2, 3], false),
            (&[1, 0, 2, 3], false),
            (&[0, 1, 3, 2], false),
            (&[1, 0, 3, 2], false),
            (&[2, 3, 0, 1], true),
            (&[3, 2, 0, 1], true),
            (&[2, 3, 1, 0], true),
            (&[3, 2, 1, 0], true),
        ],
    }
}

/// A statement flattened for matching.
#[derive(Clone, Debug)]
struct Flat {
    pred: Predicate,
    pts: [PointId; 6],
    value: Option<Rational>,
}

impl Flat {
    fn of(s: &Statement) -> Flat {
        let mut pts = [PointId::new(0); 6];
        for (i, p) in s.points().into_iter().enumerate() {
            pts[i] = p;
        }
        Flat {
            pred: s.predicate(),
            pts,
            value: s.value(),
        }
    }
}

/// Statements indexed for premise lookup. Ids are dense and increasing.
#[derive(Default)]
pub struct FactIndex {
    facts: Vec<Flat>,
    by_pred: HashMap<Predicate, Vec<u32>>,
    by_pred_point: HashMap<(Predicate, PointId), Vec<u32>>,
}

impl FactIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn push(&mut self, s: &Statement) {
        let id = self.facts.len() as u32;
        let flat = Flat::of(s);
        self.by_pred.entry(flat.pred).or_default().push(id);
        let arity = flat.pred.arity();
        let mut seen: Vec<PointId> = Vec::with_capacity(arity);
        for &p in &flat.pts[..arity] {
            if !seen.contains(&p) {
                seen.push(p);
                self.by_pred_point
                    .entry((flat.pred, p))
                    .or_default()
                    .push(id);
            }
        }
        self.facts.push(flat);
    }

    fn with_pred(&self, pred: Predicate) -> &[u32] {
        self.by_pred.get(&pred).map_or(&[], |v| v.as_slice())
    }

    fn with_pred_point(&self, pred: Predicate, p: PointId) -> &[u32] {
        self.by_pred_point
            .get(&(pred, p))
            .map_or(&[], |v| v.as_slice())
    }
}

/// A successful match: the facts used (ids into the index, possibly with
/// repeats) and the conclusion.
#[derive(Clone, Debug)]
pub struct Derivation {
    pub premises: Vec<u32>,
    pub conclusion: Statement,
}

fn unify(
    rule: &Rule,
    pattern: &Pattern,
    fact: &Flat,
    perm: &[usize],
    invert: bool,
    bind: &Binding,
) -> Option<Binding> {
    let mut out = *bind;
    for (k, &v) in pattern.vars.iter().enumerate() {
        let p = fact.pts[perm[k]];
        match out.pts[v as usize] {
            Some(q) if q != p => return None,
            Some(_) => {}
            None => {
                let mask = rule.conflicts[v as usize];
                for (w, q) in out.pts.iter().enumerate() {
                    if mask & (1 << w) != 0 && *q == Some(p) {
                        return None;
                    }
                }
                out.pts[v as usize] = Some(p);
            }
        }
    }
    let value = fact.value.map(|x| if invert { x.recip() } else { x });
    match pattern.value {
        ValueSlot::None => {}
        ValueSlot::Fixed(n) => {
            if value != Some(int(n)) {
                return None;
            }
        }
        ValueSlot::Var(slot) => {
            let value = value?;
            match out.vals[slot as usize] {
                Some(x) if x != value => return None,
                Some(_) => {}
                None => out.vals[slot as usize] = Some(value),
            }
        }
    }
    Some(out)
}

fn reflexive_holds(pattern: &Pattern, bind: &Binding) -> bool {
    let get = |k: usize| bind.pts[pattern.vars[k] as usize];
    let all: Option<Vec<PointId>> = (0..pattern.vars.len()).map(get).collect();
    let Some(v) = all else { return false };
    match pattern.reflexive {
        Reflexive::Never => false,
        Reflexive::SameSegment => (v[0] == v[2] && v[1] == v[3]) || (v[0] == v[3] && v[1] == v[2]),
        Reflexive::SameAngle => {
            v[1] == v[4] && ((v[0] == v[3] && v[2] == v[5]) || (v[0] == v[5] && v[2] == v[3]))
        }
    }
}

/// Id window `[lo, hi)` that a premise position may draw facts from.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub lo: u32,
    pub hi: u32,
}

fn in_window(ids: &[u32], w: Window) -> &[u32] {
    let lo = ids.partition_point(|&x| x < w.lo);
    let hi = ids.partition_point(|&x| x < w.hi);
    &ids[lo..hi]
}

struct Matcher<'a> {
    rule: &'a Rule,
    index: &'a FactIndex,
    geo: Geo<'a>,
    order: Vec<usize>,
    windows: Vec<Window>,
    used: Vec<u32>,
    out: Vec<Derivation>,
}

impl Matcher<'_> {
    fn candidates(&self, pattern: &Pattern, bind: &Binding, w: Window) -> &[u32] {
        let mut best: Option<&[u32]> = None;
        for &v in &pattern.vars {
            if let Some(p) = bind.pts[v as usize] {
                let list = self.index.with_pred_point(pattern.pred, p);
                if best.is_none_or(|b| list.len() < b.len()) {
                    best = Some(list);
                }
            }
        }
        in_window(
            best.unwrap_or_else(|| self.index.with_pred(pattern.pred)),
            w,
        )
    }

    fn run(&mut self, k: usize, bind: Binding) {
        if k == self.order.len() {
            if (self.rule.guard)(&bind, &self.geo) {
                if let Some(conclusion) = (self.rule.conclude)(&bind) {
                    self.out.push(Derivation {
                        premises: self.used.clone(),
                        conclusion,
                    });
                }
            }
            return;
        }
        let pattern = &self.rule.premises[self.order[k]];
        let w = self.windows[k];
        if pattern.reflexive != Reflexive::Never && reflexive_holds(pattern, &bind) {
            self.run(k + 1, bind);
        }
        let ids = self.candidates(pattern, &bind, w).to_vec();
        for id in ids {
            let fact = &self.index.facts[id as usize];
            for &(perm, invert) in presentations(pattern.pred) {
                if let Some(next) = unify(self.rule, pattern, fact, perm, invert, &bind) {
                    self.used.push(id);
                    self.run(k + 1, next);
                    self.used.pop();
                }
            }
        }
    }
}

/// Semi-naive evaluation of one rule: every derivation using at least one
/// fact from `delta`, with earlier premise positions restricted to facts
/// before `delta` and later ones to facts before `delta.hi`.
pub fn match_rule_delta(
    rule: &Rule,
    index: &FactIndex,
    geometry: &SceneGeometry,
    delta: Window,
) -> Vec<Derivation> {
    let mut out = Vec::new();
    let n = rule.premises.len();
    for i in 0..n {
        let mut order = vec![i];
        order.extend((0..n).filter(|&j| j != i));
        let windows = order
            .iter()
            .map(|&j| {
                if j == i {
                    delta
                } else if j < i {
                    Window {
                        lo: 0,
                        hi: delta.lo,
                    }
                } else {
                    Window {
                        lo: 0,
                        hi: delta.hi,
                    }
                }
            })
            .collect();
        // The delta premise is always matched by a fact, never reflexively.
        let mut m = Matcher {
            rule,
            index,
            geo: Geo(geometry),
            order,
            windows,
            used: Vec::new(),
            out: Vec::new(),
        };
        m.run_delta_first();
        out.append(&mut m.out);
    }
    out
}

impl Matcher<'_> {
    fn run_delta_first(&mut self) {
        let pattern = &self.rule.premises[self.order[0]];
        let ids = in_window(self.index.with_pred(pattern.pred), self.windows[0]).to_vec();
        for id in ids {
            let fact = &self.index.facts[id as usize];
            for &(perm, invert) in presentations(pattern.pred) {
                if let Some(next) =
                    unify(self.rule, pattern, fact, perm, invert, &Binding::default())
                {
                    self.used.push(id);
                    self.run(1, next);
                    self.used.pop();
                }
            }
        }
    }
}

/// All derivations of `rule` over `facts` (no windowing).
pub fn match_rule(rule: &Rule, facts: &[Statement], geometry: &SceneGeometry) -> Vec<Derivation> {
    let mut index = FactIndex::new();
    for f in facts {
        index.push(f);
    }
    let all = Window {
        lo: 0,
        hi: index.len() as u32,
    };
    let mut m = Matcher {
        rule,
        index: &index,
        geo: Geo(geometry),
        order: (0..rule.premises.len()).collect(),
        windows: vec![all; rule.premises.len()],
        used: Vec::new(),
        out: Vec::new(),
    };
    m.run(0, Binding::default());
    m.out
}

/// Whether `rule` derives `conclusion` from exactly the premise set
/// `premises` (every premise used) on `geometry`.
pub fn rule_derives(
    rule: &Rule,
    premises: &[Statement],
    conclusion: &Statement,
    geometry: &SceneGeometry,
) -> bool {
    let want: Vec<u32> = (0..premises.len() as u32).collect();
    match_rule(rule, premises, geometry).into_iter().any(|d| {
        let mut used = d.premises.clone();
        used.sort();
        used.dedup();
        used == want && &d.conclusion == conclusion
    })
}
