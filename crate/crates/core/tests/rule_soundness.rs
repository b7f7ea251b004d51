use std::collections::BTreeSet;

use geoforge_core::constructor::{extend_scene, generate_base_scene, GENERATORS};
use geoforge_core::numeric::{check_statement, Coord, SceneGeometry};
use geoforge_core::reasoner::{saturate, saturate_with, Budget, Mode};
use geoforge_core::rules::{catalog, match_rule, rule_by_name, rule_derives};
use geoforge_core::statement::{PointId, Rational, Statement, StatementSet};
use proptest::prelude::*;

fn pt(i: u16) -> PointId {
    PointId::new(i)
}

fn holds(g: &SceneGeometry, s: &Statement) -> bool {
    check_statement(g, s).is_ok_and(|v| v.holds())
}

#[test]
fn every_rule_is_sound_on_random_scenes() {
    let mut fired: BTreeSet<String> = BTreeSet::new();
    for gen in GENERATORS {
        for seed in 0..12u64 {
            let base = generate_base_scene(gen, seed).unwrap();
            let scene = extend_scene(&base, 1 + (seed as usize % 4), seed).scene;
            let g = saturate(&scene, Mode::Multi, Budget::default()).unwrap();
            let facts: Vec<Statement> = g.statements().iter().cloned().collect();
            for s in &facts {
                assert!(holds(&scene.geometry, s), "{gen}/{seed}: {s}");
            }
            for t in g.transitions() {
                let rule = rule_by_name(&t.rule).unwrap();
                let prem: Vec<Statement> = t.premises.iter().map(|&i| facts[i].clone()).collect();
                assert!(
                    rule_derives(rule, &prem, &facts[t.conclusion], &scene.geometry),
                    "{gen}/{seed}: {} does not re-derive",
                    t.rule
                );
                fired.insert(t.rule.clone());
            }
            // Every binding over true facts yields a true conclusion.
            for rule in catalog() {
                for d in match_rule(rule, &facts, &scene.geometry) {
                    assert!(
                        holds(&scene.geometry, &d.conclusion),
                        "{gen}/{seed}: {} gave {}",
                        rule.name,
                        d.conclusion
                    );
                }
            }
        }
    }
    let missing: Vec<_> = catalog()
        .iter()
        .filter(|r| !fired.contains(r.name))
        .map(|r| r.name)
        .collect();
    println!("rules not exercised by the scene corpus: {missing:?}");
}

fn placed(pts: &[(f64, f64)], rot: f64, scale: f64, dx: f64, dy: f64) -> SceneGeometry {
    let (s, c) = rot.sin_cos();
    SceneGeometry::new(
        pts.iter()
            .map(|&(x, y)| Coord::new(scale * (c * x - s * y) + dx, scale * (s * x + c * y) + dy))
            .collect(),
    )
}

fn derive_all(g: &SceneGeometry, s0: Vec<Statement>) -> StatementSet {
    let s0: StatementSet = s0.into_iter().collect();
    saturate_with(g, &s0, catalog(), Mode::Single, Budget::default())
        .unwrap()
        .statements()
        .clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perpendicular_and_pythagoras_leg(rot in 0.0..std::f64::consts::TAU, k in 1i64..4, flip in any::<bool>()) {
        let (a, b) = if flip { (3, 4) } else { (4, 3) };
        let g = placed(&[(0.0, a as f64), (0.0, 0.0), (b as f64, 0.0)], rot, k as f64, 1.0, 2.0);
        let r = |n: i64| Rational::from_integer(n);
        let s = derive_all(&g, vec![
            Statement::perpendicular(pt(0), pt(1), pt(1), pt(2)),
            Statement::seg_len(pt(0), pt(2), r(5 * k)),
            Statement::seg_len(pt(0), pt(1), r(a * k)),
        ]);
        prop_assert!(s.contains(&Statement::seg_len(pt(1), pt(2), r(b * k))));
        for st in s.iter() {
            prop_assert!(holds(&g, st), "{}", st);
        }
    }

    #[test]
    fn inscribed_angle_at_reference_point(rot in 0.0..std::f64::consts::TAU, half in 20i64..70, start in 200i64..250) {
        // Centre D, reference A; B and C on the circle with central angle BDC = 2·half.
        let at = |deg: f64| (deg.to_radians().cos() * 3.0, deg.to_radians().sin() * 3.0);
        let b0 = -(half as f64);
        let pts = [at(start as f64), at(b0), at(half as f64), (0.0, 0.0)];
        let g = placed(&pts, rot, 1.0, 5.0, 5.0);
        let s0 = vec![
            Statement::on_circle(pt(1), pt(3), pt(3), pt(0)),
            Statement::on_circle(pt(2), pt(3), pt(3), pt(0)),
            Statement::angle_val(pt(1), pt(3), pt(2), Rational::from_integer(2 * half)),
        ];
        let s = derive_all(&g, s0);
        prop_assert!(s.contains(&Statement::angle_val(pt(1), pt(0), pt(2), Rational::from_integer(half))));
        for st in s.iter() {
            prop_assert!(holds(&g, st), "{}", st);
        }
    }
}
