//! Reasoning-path extraction, filtering and problem formulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{answer_agrees, numeric_answer_for, NumericAnswer, SceneGeometry};
use crate::reasoner::{upstream_ids, Mode, ReasonerError, ReasoningGraph, Transition};
use crate::statement::{Rational, Statement, Unit};
use crate::translator::phrase;

pub const DEFAULT_TAU_L: usize = 5;
pub const DEFAULT_TAU_R: f64 = 0.5;
pub const DEFAULT_TAU_P: f64 = 0.5;
pub const DEFAULT_MAX_PATHS: usize = 16;
/// Sampling attempts for the erroneous statement of a traceback.
pub const TRACEBACK_ATTEMPTS: usize = 100;
/// Search nodes explored per multi-path enumeration.
pub const ENUMERATION_NODE_LIMIT: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("target {0} is an initial statement")]
    TargetIsInitial(usize),
    #[error("single-path tracing needs a single-mode graph")]
    GraphInMultiMode,
    #[error("no statement is eligible as an erroneous target")]
    NoEligibleErroneousStatement,
    #[error("reasoning length {0} is below the tier range")]
    BelowTierRange(usize),
    #[error("{kind} problems need a target with a value")]
    TargetHasNoValue { kind: &'static str },
    #[error("path answer {claimed} disagrees with the coordinate oracle {oracle}")]
    OracleMismatch { claimed: String, oracle: f64 },
    #[error("no paths to formulate from")]
    NoPaths,
    #[error(transparent)]
    Graph(#[from] ReasonerError),
}

/// An acyclic derivation of `target`, transitions ordered premises first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub transitions: Vec<Transition>,
    pub target: usize,
    /// Initial statements the path uses.
    pub used_premises: Vec<usize>,
    pub num_initial: usize,
}

impl ReasoningPath {
    fn from_transitions(
        g: &ReasoningGraph,
        target: usize,
        mut transitions: Vec<Transition>,
    ) -> ReasoningPath {
        transitions.sort_by(|a, b| a.conclusion.cmp(&b.conclusion).then_with(|| a.cmp(b)));
        let used: BTreeSet<usize> = transitions
            .iter()
            .flat_map(|t| t.premises.iter().copied())
            .filter(|&p| g.is_initial(p))
            .collect();
        ReasoningPath {
            transitions,
            target,
            used_premises: used.into_iter().collect(),
            num_initial: g.num_initial(),
        }
    }

    pub fn length(&self) -> usize {
        self.transitions.len()
    }

    pub fn premise_ratio(&self) -> f64 {
        if self.num_initial == 0 {
            0.0
        } else {
            self.used_premises.len() as f64 / self.num_initial as f64
        }
    }

    /// Every statement the path mentions, as premise or conclusion.
    pub fn statement_ids(&self) -> BTreeSet<usize> {
        self.transitions
            .iter()
            .flat_map(|t| t.premises.iter().copied().chain([t.conclusion]))
            .chain([self.target])
            .collect()
    }

    pub fn passes(&self, tau_l: usize, tau_r: f64) -> bool {
        self.rejection(tau_l, tau_r).is_none()
    }

    pub fn rejection(&self, tau_l: usize, tau_r: f64) -> Option<Rejection> {
        if self.length() < tau_l {
            Some(Rejection::Length {
                length: self.length(),
                tau_l,
            })
        } else if self.premise_ratio() < tau_r {
            Some(Rejection::PremiseRatio {
                ratio: self.premise_ratio(),
                tau_r,
            })
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rejection {
    Length { length: usize, tau_l: usize },
    PremiseRatio { ratio: f64, tau_r: f64 },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Length { length, tau_l } => write!(f, "length {length} < {tau_l}"),
            Rejection::PremiseRatio { ratio, tau_r } => {
                write!(f, "premise ratio {ratio:.3} < {tau_r}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Explored {
    Accepted(ReasoningPath),
    Rejected {
        path: ReasoningPath,
        reason: Rejection,
    },
}

fn check_target(g: &ReasoningGraph, target: usize) -> Result<(), SampleError> {
    g.statement(target)?;
    if g.is_initial(target) {
        return Err(SampleError::TargetIsInitial(target));
    }
    Ok(())
}

/// Backward trace through the unique derivation of each needed statement.
pub fn trace_single(g: &ReasoningGraph, target: usize) -> Result<ReasoningPath, SampleError> {
    check_target(g, target)?;
    if g.mode() != Mode::Single {
        return Err(SampleError::GraphInMultiMode);
    }
    let mut needed = vec![target];
    let mut done = BTreeSet::new();
    let mut transitions = Vec::new();
    while let Some(s) = needed.pop() {
        if g.is_initial(s) || !done.insert(s) {
            continue;
        }
        let t = &g.transitions()[g.incoming(s)[0]];
        needed.extend(t.premises.iter().copied());
        transitions.push(t.clone());
    }
    Ok(ReasoningPath::from_transitions(g, target, transitions))
}

pub fn geo_explore(
    g: &ReasoningGraph,
    target: usize,
    tau_l: usize,
    tau_r: f64,
) -> Result<Explored, SampleError> {
    let path = trace_single(g, target)?;
    Ok(match path.rejection(tau_l, tau_r) {
        None => Explored::Accepted(path),
        Some(reason) => Explored::Rejected { path, reason },
    })
}

/// Incoming transitions of `s`, ordered by (rule, premise ids).
fn options(g: &ReasoningGraph, s: usize) -> Vec<usize> {
    let mut opts = g.incoming(s).to_vec();
    opts.sort_by(|&a, &b| {
        let (ta, tb) = (&g.transitions()[a], &g.transitions()[b]);
        ta.rule
            .cmp(&tb.rule)
            .then_with(|| ta.premises.cmp(&tb.premises))
    });
    opts
}

struct Enumerator<'a> {
    g: &'a ReasoningGraph,
    tau_l: usize,
    tau_r: f64,
    max_paths: usize,
    nodes: usize,
    options: BTreeMap<usize, Vec<usize>>,
    found: Vec<ReasoningPath>,
}

impl Enumerator<'_> {
    fn done(&self) -> bool {
        self.found.len() >= self.max_paths || self.nodes >= ENUMERATION_NODE_LIMIT
    }

    /// Decides statements in decreasing id order. Premises always precede
    /// their conclusion, so every statement that could require `s` has been
    /// decided by the time `s` is.
    fn run(&mut self, target: usize, pending: &mut BTreeSet<usize>, chosen: &mut Vec<usize>) {
        if self.done() {
            return;
        }
        self.nodes += 1;
        let Some(s) = pending.pop_last() else {
            let transitions = chosen
                .iter()
                .map(|&t| self.g.transitions()[t].clone())
                .collect();
            let path = ReasoningPath::from_transitions(self.g, target, transitions);
            if path.passes(self.tau_l, self.tau_r) {
                self.found.push(path);
            }
            return;
        };
        let opts = self
            .options
            .entry(s)
            .or_insert_with(|| options(self.g, s))
            .clone();
        for t in opts {
            let added: Vec<usize> = self.g.transitions()[t]
                .premises
                .iter()
                .copied()
                .filter(|&p| !self.g.is_initial(p) && pending.insert(p))
                .collect();
            chosen.push(t);
            self.run(target, pending, chosen);
            chosen.pop();
            for p in added {
                pending.remove(&p);
            }
            if self.done() {
                break;
            }
        }
        pending.insert(s);
    }
}

/// Enumerates distinct derivation paths of `target` by choosing one incoming
/// transition per needed statement. Returns those passing both filters, at
/// most `max_paths`, in enumeration order.
pub fn geo_explore_m(
    g: &ReasoningGraph,
    target: usize,
    tau_l: usize,
    tau_r: f64,
    max_paths: usize,
) -> Result<Vec<ReasoningPath>, SampleError> {
    check_target(g, target)?;
    let mut e = Enumerator {
        g,
        tau_l,
        tau_r,
        max_paths: max_paths.max(1),
        nodes: 0,
        options: BTreeMap::new(),
        found: Vec::new(),
    };
    e.run(target, &mut BTreeSet::from([target]), &mut Vec::new());
    Ok(e.found)
}

/// Fraction of `wrong`'s transitions that also occur in `right`.
pub fn overlap(wrong: &ReasoningPath, right: &ReasoningPath) -> f64 {
    if wrong.transitions.is_empty() {
        return 0.0;
    }
    let shared = wrong
        .transitions
        .iter()
        .filter(|t| right.transitions.contains(t))
        .count();
    shared as f64 / wrong.transitions.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracebackRecord {
    pub wrong_branch: ReasoningPath,
    pub correct_path: ReasoningPath,
    pub overlap: f64,
    /// Last transition of the wrong branch that the correct path shares.
    pub backtrack_point: Option<Transition>,
}

impl TracebackRecord {
    /// Transitions of both paths, without repeats, premises first.
    pub fn combined_transitions(&self) -> Vec<Transition> {
        let mut all: Vec<Transition> = self.wrong_branch.transitions.clone();
        for t in &self.correct_path.transitions {
            if !all.contains(t) {
                all.push(t.clone());
            }
        }
        all.sort_by(|a, b| a.conclusion.cmp(&b.conclusion).then_with(|| a.cmp(b)));
        all
    }

    /// Wrong-branch transitions not on the correct path.
    pub fn divergent_transitions(&self) -> Vec<&Transition> {
        self.wrong_branch
            .transitions
            .iter()
            .filter(|t| !self.correct_path.transitions.contains(t))
            .collect()
    }
}

/// Statements that may serve as the erroneous target for `s_t`: derived,
/// outside every derivation of `s_t`, and not themselves built on `s_t`.
pub fn traceback_candidates(g: &ReasoningGraph, s_t: usize) -> Result<Vec<usize>, SampleError> {
    let up = upstream_ids(g, s_t)?;
    let mut out = Vec::new();
    for s in g.num_initial()..g.len() {
        if up.contains(&s) {
            continue;
        }
        if upstream_ids(g, s)?.contains(&s_t) {
            continue;
        }
        out.push(s);
    }
    Ok(out)
}

pub fn geo_explore_t(
    g: &ReasoningGraph,
    s_t: usize,
    tau_l: usize,
    tau_r: f64,
    tau_p: f64,
    max_paths: usize,
    seed: u64,
) -> Result<Option<TracebackRecord>, SampleError> {
    check_target(g, s_t)?;
    let correct = geo_explore_m(g, s_t, tau_l, tau_r, max_paths)?;
    let candidates = traceback_candidates(g, s_t)?;
    if candidates.is_empty() {
        return Err(SampleError::NoEligibleErroneousStatement);
    }
    if correct.is_empty() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..TRACEBACK_ATTEMPTS {
        let s_e = candidates[rng.random_range(0..candidates.len())];
        let mut best: Option<(f64, &ReasoningPath, ReasoningPath)> = None;
        for pe in geo_explore_m(g, s_e, 0, 0.0, max_paths)? {
            for pt in &correct {
                let o = overlap(&pe, pt);
                if best.as_ref().is_none_or(|(b, _, _)| o > *b) {
                    best = Some((o, pt, pe.clone()));
                }
            }
        }
        if let Some((o, pt, pe)) = best {
            if o >= tau_p && o > 0.0 {
                let backtrack_point = pe
                    .transitions
                    .iter()
                    .rev()
                    .find(|t| pt.transitions.contains(t))
                    .cloned();
                return Ok(Some(TracebackRecord {
                    wrong_branch: pe,
                    correct_path: pt.clone(),
                    overlap: o,
                    backtrack_point,
                }));
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DifficultyTier(pub u8);

impl DifficultyTier {
    /// Inclusive reasoning-length bounds; `None` means unbounded.
    pub fn bounds(self) -> (usize, Option<usize>) {
        match self.0 {
            1 => (5, Some(10)),
            2 => (11, Some(20)),
            3 => (21, Some(50)),
            _ => (51, None),
        }
    }

    pub fn contains(self, length: usize) -> bool {
        let (lo, hi) = self.bounds();
        length >= lo && hi.is_none_or(|h| length <= h)
    }
}

pub fn tier_of(length: usize) -> Result<DifficultyTier, SampleError> {
    match length {
        0..=4 => Err(SampleError::BelowTierRange(length)),
        5..=10 => Ok(DifficultyTier(1)),
        11..=20 => Ok(DifficultyTier(2)),
        21..=50 => Ok(DifficultyTier(3)),
        _ => Ok(DifficultyTier(4)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Numeric,
    Proof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorPolicy {
    #[default]
    AllInitial,
    UsedOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Deductive,
    MultiSolution,
    Traceback,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::Deductive => "deductive",
            Template::MultiSolution => "multi_solution",
            Template::Traceback => "traceback",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Answer {
    Numeric { value: String, unit: Unit },
    Proof { statement: Statement },
}

impl Answer {
    pub fn numeric_value(&self) -> Option<Rational> {
        match self {
            Answer::Numeric { value, .. } => value.parse::<Rational>().ok(),
            Answer::Proof { .. } => None,
        }
    }
}

pub enum PathSource<'a> {
    Single(&'a ReasoningPath),
    Multi(&'a [ReasoningPath]),
    Traceback(&'a TracebackRecord),
}

/// A problem ready to be rendered, narrated and emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct Formulated {
    pub kind: ProblemKind,
    pub template: Template,
    pub target: Statement,
    pub given: Vec<Statement>,
    pub question: String,
    pub answer: Answer,
    pub solutions: Vec<ReasoningPath>,
    pub traceback: Option<TracebackRecord>,
    pub reasoning_length: usize,
    pub premise_ratio: f64,
    pub tier: Option<DifficultyTier>,
}

fn query_text(target: &Statement, kind: ProblemKind) -> String {
    use crate::statement::Statement as S;
    match (kind, target) {
        (ProblemKind::Numeric, S::SegmentLength(s, _)) => {
            format!("Find the length of {}.", seg_name(*s))
        }
        (ProblemKind::Numeric, S::AngleMeasure(a, _)) => {
            format!("Find the measure of {}.", angle_name(*a))
        }
        (ProblemKind::Numeric, S::SegmentRatio(s1, s2, _)) => {
            format!("Find the ratio {} : {}.", seg_name(*s1), seg_name(*s2))
        }
        _ => format!("Prove that {}.", phrase(target)),
    }
}

pub fn seg_name(s: crate::statement::Segment) -> String {
    let (a, b) = s.ends();
    format!("{}{}", a.label(), b.label())
}

pub fn angle_name(a: crate::statement::Angle) -> String {
    let (p, v, q) = a.points();
    format!("∠{}{}{}", p.label(), v.label(), q.label())
}

/// Turns sampled paths into a problem. Numeric answers are cross-checked
/// against the coordinate oracle.
pub fn formulate_problem(
    geometry: &SceneGeometry,
    g: &ReasoningGraph,
    source: PathSource<'_>,
    kind: ProblemKind,
    policy: DistractorPolicy,
) -> Result<Formulated, SampleError> {
    let (template, solutions, traceback) = match source {
        PathSource::Single(p) => (Template::Deductive, vec![p.clone()], None),
        PathSource::Multi(ps) => (Template::MultiSolution, ps.to_vec(), None),
        PathSource::Traceback(t) => (
            Template::Traceback,
            vec![t.correct_path.clone()],
            Some(t.clone()),
        ),
    };
    let primary = solutions.first().ok_or(SampleError::NoPaths)?;
    let target = g.statement(primary.target)?.clone();
    let (reasoning_length, used): (usize, BTreeSet<usize>) = match &traceback {
        Some(t) => {
            let all = t.combined_transitions();
            let used = all
                .iter()
                .flat_map(|x| x.premises.iter().copied())
                .filter(|&p| g.is_initial(p))
                .collect();
            (all.len(), used)
        }
        None => (
            primary.length(),
            primary.used_premises.iter().copied().collect(),
        ),
    };
    let premise_ratio = if g.num_initial() == 0 {
        0.0
    } else {
        used.len() as f64 / g.num_initial() as f64
    };
    let answer = match kind {
        ProblemKind::Numeric => {
            let (Some(value), Some(unit)) = (target.value(), target.unit()) else {
                return Err(SampleError::TargetHasNoValue { kind: "numeric" });
            };
            let claimed = crate::statement::format_rational(value);
            let oracle = match numeric_answer_for(geometry, &target) {
                Ok(NumericAnswer::Exact(r)) => {
                    Some((NumericAnswer::Exact(r), crate::numeric::rational_to_f64(r)))
                }
                Ok(NumericAnswer::Float(x)) => Some((NumericAnswer::Float(x), x)),
                Err(_) => None,
            };
            match oracle {
                Some((o, _)) if answer_agrees(value, o) => {}
                other => {
                    return Err(SampleError::OracleMismatch {
                        claimed,
                        oracle: other.map_or(f64::NAN, |(_, x)| x),
                    })
                }
            }
            Answer::Numeric {
                value: crate::statement::format_rational(value),
                unit,
            }
        }
        ProblemKind::Proof => Answer::Proof {
            statement: target.clone(),
        },
    };
    let given: Vec<Statement> = (0..g.num_initial())
        .filter(|i| policy == DistractorPolicy::AllInitial || used.contains(i))
        .map(|i| g.statement(i).cloned())
        .collect::<Result<_, _>>()?;
    let shown: Vec<Statement> = given
        .iter()
        .filter(|s| !(kind == ProblemKind::Numeric && **s == target))
        .cloned()
        .collect();
    let facts: Vec<String> = shown.iter().map(phrase).collect();
    let question = format!(
        "Given that {}. {}",
        join_facts(&facts),
        query_text(&target, kind)
    );
    Ok(Formulated {
        kind,
        template,
        target,
        given,
        question,
        answer,
        solutions,
        traceback,
        reasoning_length,
        premise_ratio,
        tier: tier_of(reasoning_length).ok(),
    })
}

fn join_facts(facts: &[String]) -> String {
    match facts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{}, and {}", init.join(", "), last),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::statement::tests::p;
    use proptest::prelude::*;

    /// Graph over placeholder statements; each edge is (premises, conclusion).
    pub fn hand_graph(
        n: usize,
        num_initial: usize,
        edges: &[(Vec<usize>, usize)],
        mode: Mode,
    ) -> ReasoningGraph {
        let statements = (0..n)
            .map(|i| Statement::seg_len(p("A"), p("B"), Rational::from_integer(i as i64 + 1)))
            .collect();
        let transitions = edges
            .iter()
            .enumerate()
            .map(|(k, (prem, c))| Transition {
                premises: prem.clone(),
                rule: format!("r{k:02}"),
                conclusion: *c,
            })
            .collect();
        ReasoningGraph::from_parts(statements, num_initial, transitions, mode, false).unwrap()
    }

    /// Every distinct transition set obtained by fixing one incoming
    /// transition for every derived statement and collecting what the target
    /// needs.
    pub fn brute_force_paths(g: &ReasoningGraph, target: usize) -> BTreeSet<BTreeSet<Transition>> {
        let derived: Vec<usize> = (g.num_initial()..g.len()).collect();
        let mut choice = vec![0usize; derived.len()];
        let mut out = BTreeSet::new();
        loop {
            let pick = |s: usize| &g.transitions()[g.incoming(s)[choice[s - g.num_initial()]]];
            let mut set = BTreeSet::new();
            let mut stack = vec![target];
            while let Some(s) = stack.pop() {
                if g.is_initial(s) {
                    continue;
                }
                let t = pick(s);
                if set.insert(t.clone()) {
                    stack.extend(t.premises.iter().copied());
                }
            }
            out.insert(set);
            // Odometer increment.
            let mut i = 0;
            loop {
                if i == derived.len() {
                    return out;
                }
                choice[i] += 1;
                if choice[i] < g.incoming(derived[i]).len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn as_sets(paths: &[ReasoningPath]) -> BTreeSet<BTreeSet<Transition>> {
        paths
            .iter()
            .map(|p| p.transitions.iter().cloned().collect())
            .collect()
    }

    fn chain(len: usize, num_initial: usize) -> ReasoningGraph {
        // 0..num_initial initial; the first derived statement uses all of them.
        let mut edges = vec![((0..num_initial).collect::<Vec<_>>(), num_initial)];
        for k in 1..len {
            edges.push((vec![num_initial + k - 1], num_initial + k));
        }
        hand_graph(num_initial + len, num_initial, &edges, Mode::Single)
    }

    #[test]
    fn chain_path_and_filters() {
        let g = chain(6, 4);
        match geo_explore(&g, 9, 5, 0.5).unwrap() {
            Explored::Accepted(path) => {
                assert_eq!(path.length(), 6);
                assert_eq!(path.premise_ratio(), 1.0);
                assert_eq!(path.transitions.last().unwrap().conclusion, 9);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            geo_explore(&g, 9, 7, 0.5).unwrap(),
            Explored::Rejected {
                reason: Rejection::Length {
                    length: 6,
                    tau_l: 7
                },
                ..
            }
        ));
        assert_eq!(
            geo_explore(&g, 0, 5, 0.5),
            Err(SampleError::TargetIsInitial(0))
        );
    }

    #[test]
    fn ratio_filter_rejects() {
        let g = hand_graph(
            9,
            4,
            &[
                (vec![0], 4),
                (vec![4], 5),
                (vec![5], 6),
                (vec![6], 7),
                (vec![7], 8),
            ],
            Mode::Single,
        );
        assert!(matches!(
            geo_explore(&g, 8, 5, 0.5).unwrap(),
            Explored::Rejected {
                reason: Rejection::PremiseRatio { .. },
                ..
            }
        ));
    }

    #[test]
    fn single_tracing_refuses_multi_graph() {
        let g = hand_graph(2, 1, &[(vec![0], 1)], Mode::Multi);
        assert_eq!(trace_single(&g, 1), Err(SampleError::GraphInMultiMode));
    }

    fn diamond() -> ReasoningGraph {
        // 0,1,2 initial; 3 from 0; 4 from 1; 5 from 3 or from 4; 6 from 5 and 2.
        hand_graph(
            7,
            3,
            &[
                (vec![0], 3),
                (vec![1], 4),
                (vec![3], 5),
                (vec![4], 5),
                (vec![2, 5], 6),
            ],
            Mode::Multi,
        )
    }

    #[test]
    fn diamond_has_exactly_two_paths() {
        let g = diamond();
        let paths = geo_explore_m(&g, 6, 0, 0.0, 16).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(as_sets(&paths), brute_force_paths(&g, 6));
        for path in &paths {
            let ids: BTreeSet<usize> = path.transitions.iter().map(|t| t.conclusion).collect();
            assert_eq!(ids.len(), path.length(), "no statement derived twice");
        }
    }

    #[test]
    fn multi_agrees_with_single_on_unique_derivations() {
        let g = chain(6, 4);
        let paths = geo_explore_m(&g, 9, 0, 0.0, 16).unwrap();
        assert_eq!(paths, vec![trace_single(&g, 9).unwrap()]);
    }

    #[test]
    fn multi_filters_and_caps() {
        let g = diamond();
        assert!(geo_explore_m(&g, 6, 10, 0.0, 16).unwrap().is_empty());
        assert_eq!(geo_explore_m(&g, 6, 0, 0.0, 1).unwrap().len(), 1);
        for path in geo_explore_m(&g, 6, 3, 0.5, 16).unwrap() {
            assert!(path.length() >= 3 && path.premise_ratio() >= 0.5);
        }
    }

    fn traceback_graph() -> ReasoningGraph {
        // Correct path to 5: 2,3,4,5. Wrong target 6 shares 2,3,4. 7 shares nothing.
        hand_graph(
            8,
            2,
            &[
                (vec![0], 2),
                (vec![2], 3),
                (vec![1, 3], 4),
                (vec![4], 5),
                (vec![4], 6),
                (vec![1], 7),
            ],
            Mode::Multi,
        )
    }

    #[test]
    fn traceback_with_three_quarter_overlap() {
        let g = traceback_graph();
        let rec = geo_explore_t(&g, 5, 0, 0.0, 0.5, 16, 1)
            .unwrap()
            .expect("record");
        assert_eq!(rec.wrong_branch.target, 6);
        assert_eq!(rec.correct_path.length(), 4);
        // Independent overlap: intersect transition sets by hand.
        let we: BTreeSet<_> = rec.wrong_branch.transitions.iter().collect();
        let pt: BTreeSet<_> = rec.correct_path.transitions.iter().collect();
        assert_eq!(we.intersection(&pt).count(), 3);
        assert_eq!(rec.overlap, 0.75);
        assert_eq!(rec.backtrack_point.as_ref().unwrap().conclusion, 4);
        assert_eq!(rec.combined_transitions().len(), 5);
    }

    #[test]
    fn traceback_never_samples_upstream_statements() {
        let g = traceback_graph();
        let c = traceback_candidates(&g, 5).unwrap();
        assert_eq!(c, vec![6, 7]);
        assert!(geo_explore_t(&g, 5, 0, 0.0, 1.0, 16, 3).unwrap().is_none());
    }

    #[test]
    fn traceback_without_candidates_errors() {
        let g = chain(3, 1);
        assert_eq!(
            geo_explore_t(&g, 3, 0, 0.0, 0.5, 16, 0),
            Err(SampleError::NoEligibleErroneousStatement)
        );
    }

    #[test]
    fn tier_boundaries() {
        let table = [
            (5, 1),
            (10, 1),
            (11, 2),
            (20, 2),
            (21, 3),
            (50, 3),
            (51, 4),
            (500, 4),
        ];
        for (l, t) in table {
            assert_eq!(tier_of(l), Ok(DifficultyTier(t)), "L={l}");
            assert!(DifficultyTier(t).contains(l));
        }
        assert_eq!(tier_of(4), Err(SampleError::BelowTierRange(4)));
    }

    fn random_dag() -> impl Strategy<Value = ReasoningGraph> {
        (2usize..=4, 3usize..=6)
            .prop_flat_map(|(ni, nd)| {
                let n = ni + nd;
                let per_stmt: Vec<_> = (ni..n)
                    .map(|c| {
                        proptest::collection::vec(
                            proptest::collection::btree_set(0..c, 1..=3.min(c)),
                            1..=3,
                        )
                    })
                    .collect();
                (Just(ni), Just(n), per_stmt)
            })
            .prop_map(|(ni, n, per_stmt)| {
                let mut edges = Vec::new();
                for (k, options) in per_stmt.into_iter().enumerate() {
                    let c = ni + k;
                    let mut seen = BTreeSet::new();
                    for prem in options {
                        if seen.insert(prem.clone()) {
                            edges.push((prem.into_iter().collect::<Vec<_>>(), c));
                        }
                    }
                }
                hand_graph(n, ni, &edges, Mode::Multi)
            })
    }

    proptest! {
        #[test]
        fn multi_enumeration_matches_brute_force(g in random_dag()) {
            let target = g.len() - 1;
            let paths = geo_explore_m(&g, target, 0, 0.0, 100_000).unwrap();
            prop_assert_eq!(as_sets(&paths), brute_force_paths(&g, target));
            prop_assert_eq!(as_sets(&paths).len(), paths.len());
            for path in &paths {
                // Premises are initial or concluded earlier in the path.
                let mut known: BTreeSet<usize> = (0..g.num_initial()).collect();
                for t in &path.transitions {
                    prop_assert!(t.premises.iter().all(|q| known.contains(q)));
                    known.insert(t.conclusion);
                }
                prop_assert_eq!(path.transitions.last().unwrap().conclusion, target);
            }
        }

        #[test]
        fn filters_are_exact(g in random_dag(), tau_l in 0usize..6, tau_r in 0.0f64..1.0) {
            let target = g.len() - 1;
            let all = geo_explore_m(&g, target, 0, 0.0, 100_000).unwrap();
            let kept = geo_explore_m(&g, target, tau_l, tau_r, 100_000).unwrap();
            let expect: Vec<_> = all.into_iter().filter(|p| p.length() >= tau_l && p.premise_ratio() >= tau_r).collect();
            prop_assert_eq!(kept, expect);
        }

        #[test]
        fn traceback_records_are_valid(g in random_dag(), seed in any::<u64>(), tau_p in 0.0f64..1.0) {
            let target = g.len() - 1;
            if let Ok(Some(rec)) = geo_explore_t(&g, target, 0, 0.0, tau_p, 64, seed) {
                for pt in geo_explore_m(&g, target, 0, 0.0, 100_000).unwrap() {
                    prop_assert!(!pt.statement_ids().contains(&rec.wrong_branch.target));
                }
                prop_assert!(rec.overlap >= tau_p);
                prop_assert_eq!(rec.overlap, overlap(&rec.wrong_branch, &rec.correct_path));
            }
        }
    }
}
