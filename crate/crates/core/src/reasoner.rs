//! Forward closure of a scene's initial statements under the rule library.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructor::Scene;
use crate::numeric::{check_statement, SceneGeometry, Verdict};
use crate::rules::{catalog, match_rule_delta, FactIndex, Rule, Window};
use crate::statement::{Statement, StatementSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReasonerError {
    #[error("rule {rule} concluded {conclusion}, which fails numerically (residual {residual:e})")]
    VerifierContradiction {
        rule: String,
        conclusion: String,
        residual: f64,
    },
    #[error("unknown statement id {0}")]
    UnknownStatement(usize),
    #[error("budget values must be positive")]
    InvalidBudget,
    #[error("malformed graph: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Multi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_statements: usize,
    pub max_transitions: usize,
    pub max_rounds: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_statements: 5000,
            max_transitions: 20000,
            max_rounds: 50,
        }
    }
}

/// `premises ↪ conclusion` by `rule`. Premise ids are sorted and distinct.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transition {
    pub premises: Vec<usize>,
    pub rule: String,
    pub conclusion: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReasoningGraph {
    statements: StatementSet,
    num_initial: usize,
    transitions: Vec<Transition>,
    incoming: Vec<Vec<usize>>,
    mode: Mode,
    truncated: bool,
}

impl ReasoningGraph {
    fn empty(initial: &StatementSet, mode: Mode) -> Self {
        ReasoningGraph {
            statements: initial.clone(),
            num_initial: initial.len(),
            transitions: Vec::new(),
            incoming: vec![Vec::new(); initial.len()],
            mode,
            truncated: false,
        }
    }

    /// Assembles a graph from explicit parts, checking the structural
    /// invariants. Ids below `num_initial` are the initial statements.
    pub fn from_parts(
        statements: Vec<Statement>,
        num_initial: usize,
        transitions: Vec<Transition>,
        mode: Mode,
        truncated: bool,
    ) -> Result<Self, ReasonerError> {
        let n = statements.len();
        let set: StatementSet = statements.into_iter().collect();
        if set.len() != n {
            return Err(ReasonerError::Malformed("duplicate statements".into()));
        }
        if num_initial > n {
            return Err(ReasonerError::Malformed(
                "more initial statements than statements".into(),
            ));
        }
        let mut incoming = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        for (i, t) in transitions.iter().enumerate() {
            if t.premises.is_empty() {
                return Err(ReasonerError::Malformed(format!(
                    "transition {i} has no premises"
                )));
            }
            if t.conclusion >= n || t.premises.iter().any(|&p| p >= n) {
                return Err(ReasonerError::Malformed(format!(
                    "transition {i} references an unknown id"
                )));
            }
            if t.conclusion < num_initial {
                return Err(ReasonerError::Malformed(format!(
                    "transition {i} concludes an initial statement"
                )));
            }
            if !t.premises.windows(2).all(|w| w[0] < w[1]) {
                return Err(ReasonerError::Malformed(format!(
                    "transition {i} premises not sorted and distinct"
                )));
            }
            if t.premises.iter().any(|&p| p >= t.conclusion) {
                return Err(ReasonerError::Malformed(format!(
                    "transition {i} uses a premise added after its conclusion"
                )));
            }
            if !seen.insert(t.clone()) {
                return Err(ReasonerError::Malformed(format!(
                    "transition {i} is duplicated"
                )));
            }
            incoming[t.conclusion].push(i);
        }
        for (id, inc) in incoming.iter().enumerate().skip(num_initial) {
            let ok = match mode {
                Mode::Single => inc.len() == 1,
                Mode::Multi => !inc.is_empty(),
            };
            if !ok {
                return Err(ReasonerError::Malformed(format!(
                    "statement {id} has {} incoming transitions in {mode:?} mode",
                    inc.len()
                )));
            }
        }
        Ok(ReasoningGraph {
            statements: set,
            num_initial,
            transitions,
            incoming,
            mode,
            truncated,
        })
    }

    pub fn statements(&self) -> &StatementSet {
        &self.statements
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn statement(&self, id: usize) -> Result<&Statement, ReasonerError> {
        self.statements
            .get(id)
            .ok_or(ReasonerError::UnknownStatement(id))
    }

    pub fn id_of(&self, s: &Statement) -> Option<usize> {
        self.statements.index_of(s)
    }

    pub fn num_initial(&self) -> usize {
        self.num_initial
    }

    pub fn is_initial(&self, id: usize) -> bool {
        id < self.num_initial
    }

    pub fn initial_statements(&self) -> StatementSet {
        self.statements
            .iter()
            .take(self.num_initial)
            .cloned()
            .collect()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Indices into [`Self::transitions`] concluding `id`.
    pub fn incoming(&self, id: usize) -> &[usize] {
        self.incoming.get(id).map_or(&[], |v| v.as_slice())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// The single-mode view: each derived statement keeps its first incoming
    /// transition.
    pub fn first_derivations(&self) -> ReasoningGraph {
        let transitions: Vec<Transition> = self
            .transitions
            .iter()
            .enumerate()
            .filter(|(i, t)| self.incoming[t.conclusion].first() == Some(i))
            .map(|(_, t)| t.clone())
            .collect();
        ReasoningGraph::from_parts(
            self.statements.iter().cloned().collect(),
            self.num_initial,
            transitions,
            Mode::Single,
            self.truncated,
        )
        .expect("projection of a valid graph is valid")
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            statements: self
                .statements
                .iter()
                .enumerate()
                .map(|(id, s)| StatementJson {
                    id,
                    text: s.to_text(),
                    initial: self.is_initial(id),
                })
                .collect(),
            transitions: self.transitions.clone(),
            mode: self.mode,
            truncated: self.truncated,
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self, ReasonerError> {
        let mut statements = Vec::with_capacity(json.statements.len());
        let mut num_initial = 0;
        for (i, s) in json.statements.iter().enumerate() {
            if s.id != i {
                return Err(ReasonerError::Malformed(format!(
                    "statement ids not dense at {i}"
                )));
            }
            if s.initial {
                if num_initial != i {
                    return Err(ReasonerError::Malformed(
                        "initial statements must come first".into(),
                    ));
                }
                num_initial += 1;
            }
            statements.push(
                s.text
                    .parse::<Statement>()
                    .map_err(|e| ReasonerError::Malformed(format!("statement {i}: {e}")))?,
            );
        }
        ReasoningGraph::from_parts(
            statements,
            num_initial,
            json.transitions.clone(),
            json.mode,
            json.truncated,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatementJson {
    pub id: usize,
    pub text: String,
    pub initial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub statements: Vec<StatementJson>,
    pub transitions: Vec<Transition>,
    pub mode: Mode,
    pub truncated: bool,
}

/// Saturates the scene's initial statements with the full rule catalog.
pub fn saturate(
    scene: &Scene,
    mode: Mode,
    budget: Budget,
) -> Result<ReasoningGraph, ReasonerError> {
    saturate_with(
        &scene.geometry,
        &scene.initial_statements,
        catalog(),
        mode,
        budget,
    )
}

/// Semi-naive closure of `initial` under `rules`. Each round only matches
/// derivations that use at least one statement added in the previous round.
pub fn saturate_with(
    geometry: &SceneGeometry,
    initial: &StatementSet,
    rules: &[Rule],
    mode: Mode,
    budget: Budget,
) -> Result<ReasoningGraph, ReasonerError> {
    if budget.max_statements == 0 || budget.max_transitions == 0 || budget.max_rounds == 0 {
        return Err(ReasonerError::InvalidBudget);
    }
    let mut graph = ReasoningGraph::empty(initial, mode);
    let mut index = FactIndex::new();
    for s in initial {
        index.push(s);
    }
    let mut seen: HashSet<Transition> = HashSet::new();
    let mut delta = Window {
        lo: 0,
        hi: index.len() as u32,
    };
    let mut rounds = 0;
    'rounds: while delta.lo < delta.hi {
        if rounds == budget.max_rounds {
            graph.truncated = true;
            break;
        }
        rounds += 1;
        for rule in rules {
            for d in match_rule_delta(rule, &index, geometry, delta) {
                let mut premises: Vec<usize> = d.premises.iter().map(|&p| p as usize).collect();
                premises.sort_unstable();
                premises.dedup();
                match graph.statements.index_of(&d.conclusion) {
                    Some(c) => {
                        if mode == Mode::Single
                            || premises.iter().any(|&p| p >= c)
                            || c < graph.num_initial
                        {
                            continue;
                        }
                        let t = Transition {
                            premises,
                            rule: rule.name.to_string(),
                            conclusion: c,
                        };
                        if seen.contains(&t) {
                            continue;
                        }
                        if graph.transitions.len() >= budget.max_transitions {
                            graph.truncated = true;
                            break 'rounds;
                        }
                        seen.insert(t.clone());
                        graph.incoming[c].push(graph.transitions.len());
                        graph.transitions.push(t);
                    }
                    None => {
                        if graph.statements.len() >= budget.max_statements
                            || graph.transitions.len() >= budget.max_transitions
                        {
                            graph.truncated = true;
                            break 'rounds;
                        }
                        let residual = match check_statement(geometry, &d.conclusion) {
                            Ok(Verdict::Holds) => None,
                            Ok(Verdict::Fails { residual }) => Some(residual),
                            Err(_) => Some(f64::NAN),
                        };
                        if let Some(residual) = residual {
                            return Err(ReasonerError::VerifierContradiction {
                                rule: rule.name.to_string(),
                                conclusion: d.conclusion.to_text(),
                                residual,
                            });
                        }
                        index.push(&d.conclusion);
                        let (c, _) = graph.statements.insert(d.conclusion);
                        let t = Transition {
                            premises,
                            rule: rule.name.to_string(),
                            conclusion: c,
                        };
                        if mode == Mode::Multi {
                            seen.insert(t.clone());
                        }
                        graph.incoming.push(vec![graph.transitions.len()]);
                        graph.transitions.push(t);
                    }
                }
            }
        }
        delta = Window {
            lo: delta.hi,
            hi: index.len() as u32,
        };
    }
    Ok(graph)
}

/// Ids of every statement reachable backward from `id`, including `id`.
pub fn upstream_ids(g: &ReasoningGraph, id: usize) -> Result<BTreeSet<usize>, ReasonerError> {
    g.statement(id)?;
    let mut seen = BTreeSet::from([id]);
    let mut stack = vec![id];
    while let Some(s) = stack.pop() {
        for &t in g.incoming(s) {
            for &p in &g.transitions[t].premises {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
    }
    Ok(seen)
}

pub fn upstream_dependencies(g: &ReasoningGraph, id: usize) -> Result<StatementSet, ReasonerError> {
    Ok(upstream_ids(g, id)?
        .into_iter()
        .map(|i| g.statements.get(i).expect("id in range").clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructor::{extend_scene, generate_base_scene, GENERATORS};
    use crate::numeric::Coord;
    use crate::statement::tests::p;
    use crate::statement::Rational;

    fn geom(pts: &[(f64, f64)]) -> SceneGeometry {
        SceneGeometry::new(pts.iter().map(|&(x, y)| Coord::new(x, y)).collect())
    }

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    fn run(g: &SceneGeometry, s0: Vec<Statement>, mode: Mode) -> ReasoningGraph {
        saturate_with(
            g,
            &s0.into_iter().collect(),
            catalog(),
            mode,
            Budget::default(),
        )
        .unwrap()
    }

    fn corpus() -> Vec<Scene> {
        let mut out = Vec::new();
        for gen in GENERATORS {
            for seed in 0..4u64 {
                let base = generate_base_scene(gen, seed).unwrap();
                out.push(extend_scene(&base, 3, seed).scene);
            }
        }
        out
    }

    #[test]
    fn isosceles_base_angles_example() {
        let g = geom(&[(3.0, 5.0), (1.0, 1.0), (5.0, 1.0)]);
        let out = run(
            &g,
            vec![Statement::eq_seg(p("A"), p("B"), p("A"), p("C"))],
            Mode::Single,
        );
        let target = Statement::eq_angle([p("A"), p("B"), p("C")], [p("A"), p("C"), p("B")]);
        let id = out.id_of(&target).expect("base angles derived");
        let t = &out.transitions()[out.incoming(id)[0]];
        assert_eq!(t.rule, "isosceles_base_angles");
        assert_eq!(t.premises, vec![0]);
    }

    #[test]
    fn pythagoras_example() {
        let g = geom(&[(0.0, 3.0), (0.0, 0.0), (4.0, 0.0)]);
        let out = run(
            &g,
            vec![
                Statement::angle_val(p("A"), p("B"), p("C"), r(90)),
                Statement::seg_len(p("A"), p("B"), r(3)),
                Statement::seg_len(p("B"), p("C"), r(4)),
            ],
            Mode::Single,
        );
        let id = out
            .id_of(&Statement::seg_len(p("A"), p("C"), r(5)))
            .expect("hypotenuse derived");
        assert_eq!(out.transitions()[out.incoming(id)[0]].rule, "pythagoras");
    }

    #[test]
    fn false_premise_is_a_verifier_contradiction() {
        let g = geom(&[(0.0, 5.0), (1.0, 1.0), (6.0, 0.0)]);
        let err = saturate_with(
            &g,
            &[Statement::eq_seg(p("A"), p("B"), p("A"), p("C"))]
                .into_iter()
                .collect(),
            catalog(),
            Mode::Single,
            Budget::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, ReasonerError::VerifierContradiction { .. }),
            "{err}"
        );
    }

    #[test]
    fn zero_budget_is_rejected() {
        let g = geom(&[(0.0, 0.0)]);
        let b = Budget {
            max_rounds: 0,
            ..Budget::default()
        };
        assert_eq!(
            saturate_with(&g, &StatementSet::new(), catalog(), Mode::Single, b),
            Err(ReasonerError::InvalidBudget)
        );
    }

    #[test]
    fn budget_truncates() {
        let scene = extend_scene(&generate_base_scene("square", 1).unwrap(), 3, 1).scene;
        let b = Budget {
            max_statements: scene.initial_statements.len() + 5,
            ..Budget::default()
        };
        let g = saturate(&scene, Mode::Single, b).unwrap();
        assert!(g.truncated());
        assert_eq!(g.len(), scene.initial_statements.len() + 5);
        let b = Budget {
            max_rounds: 1,
            ..Budget::default()
        };
        assert!(saturate(&scene, Mode::Single, b).unwrap().truncated());
    }

    #[test]
    fn fixpoint_is_idempotent() {
        for scene in corpus() {
            let g = saturate(&scene, Mode::Single, Budget::default()).unwrap();
            assert!(!g.truncated());
            let again = saturate_with(
                &scene.geometry,
                g.statements(),
                catalog(),
                Mode::Single,
                Budget::default(),
            )
            .unwrap();
            assert_eq!(again.len(), g.len(), "{} {}", scene.generator, scene.seed);
            assert!(again.transitions().is_empty());
        }
    }

    #[test]
    fn graphs_satisfy_invariants() {
        for scene in corpus() {
            for mode in [Mode::Single, Mode::Multi] {
                let g = saturate(&scene, mode, Budget::default()).unwrap();
                for s in g.statements().iter().skip(g.num_initial()) {
                    assert!(check_statement(&scene.geometry, s).unwrap().holds(), "{s}");
                }
                // Round-tripping through from_parts re-checks every structural invariant.
                let json = g.to_json();
                assert_eq!(ReasoningGraph::from_json(&json).unwrap(), g);
            }
        }
    }

    #[test]
    fn single_mode_is_first_derivation_projection_of_multi() {
        for scene in corpus() {
            let single = saturate(&scene, Mode::Single, Budget::default()).unwrap();
            let multi = saturate(&scene, Mode::Multi, Budget::default()).unwrap();
            assert_eq!(multi.statements(), single.statements());
            assert!(multi.transitions().len() >= single.transitions().len());
            assert_eq!(multi.first_derivations(), single);
        }
    }

    #[test]
    fn saturation_is_deterministic() {
        for scene in corpus().into_iter().step_by(5) {
            let a = serde_json::to_string(
                &saturate(&scene, Mode::Multi, Budget::default())
                    .unwrap()
                    .to_json(),
            )
            .unwrap();
            let b = serde_json::to_string(
                &saturate(&scene, Mode::Multi, Budget::default())
                    .unwrap()
                    .to_json(),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    fn hand_graph(
        n: usize,
        num_initial: usize,
        edges: &[(&[usize], usize)],
        mode: Mode,
    ) -> ReasoningGraph {
        let statements = (0..n)
            .map(|i| Statement::seg_len(p("A"), p("B"), r(i as i64 + 1)))
            .collect();
        let transitions = edges
            .iter()
            .enumerate()
            .map(|(k, (prem, c))| Transition {
                premises: prem.to_vec(),
                rule: format!("r{k}"),
                conclusion: *c,
            })
            .collect();
        ReasoningGraph::from_parts(statements, num_initial, transitions, mode, false).unwrap()
    }

    /// Reachability by repeated relaxation over the whole edge list.
    fn brute_upstream(g: &ReasoningGraph, id: usize) -> BTreeSet<usize> {
        let mut reach = BTreeSet::from([id]);
        loop {
            let before = reach.len();
            for t in g.transitions() {
                if reach.contains(&t.conclusion) {
                    reach.extend(t.premises.iter().copied());
                }
            }
            if reach.len() == before {
                return reach;
            }
        }
    }

    #[test]
    fn upstream_of_initial_and_chain() {
        let g = hand_graph(3, 1, &[(&[0], 1), (&[1], 2)], Mode::Single);
        assert_eq!(upstream_ids(&g, 0).unwrap(), BTreeSet::from([0]));
        assert_eq!(upstream_ids(&g, 2).unwrap(), BTreeSet::from([0, 1, 2]));
        assert_eq!(upstream_dependencies(&g, 2).unwrap().len(), 3);
        assert_eq!(upstream_ids(&g, 9), Err(ReasonerError::UnknownStatement(9)));
    }

    #[test]
    fn upstream_diamond_matches_brute_force() {
        // Initial 0,1; b=2 from 0; c=3 from 1; d=4 from b and from c; e=5 from d.
        let g = hand_graph(
            6,
            2,
            &[(&[0], 2), (&[1], 3), (&[2], 4), (&[3], 4), (&[4], 5)],
            Mode::Multi,
        );
        for id in 0..6 {
            assert_eq!(
                upstream_ids(&g, id).unwrap(),
                brute_upstream(&g, id),
                "{id}"
            );
        }
        assert_eq!(
            upstream_ids(&g, 4).unwrap(),
            BTreeSet::from([0, 1, 2, 3, 4])
        );
    }

    #[test]
    fn from_parts_rejects_broken_graphs() {
        let s: Vec<Statement> = (0..3)
            .map(|i| Statement::seg_len(p("A"), p("B"), r(i + 1)))
            .collect();
        let t = |prem: Vec<usize>, c| Transition {
            premises: prem,
            rule: "r".into(),
            conclusion: c,
        };
        let bad = [
            vec![t(vec![], 2)],
            vec![t(vec![2], 2), t(vec![0], 1)],
            vec![t(vec![0], 1)],
            vec![t(vec![0], 1), t(vec![1], 2), t(vec![0], 2)],
            vec![t(vec![1, 0], 2), t(vec![0], 1)],
        ];
        for ts in bad {
            assert!(ReasoningGraph::from_parts(s.clone(), 1, ts, Mode::Single, false).is_err());
        }
        let ok = vec![t(vec![0], 1), t(vec![1], 2), t(vec![0], 2)];
        assert!(ReasoningGraph::from_parts(s, 1, ok, Mode::Multi, false).is_ok());
    }
}
