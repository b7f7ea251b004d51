//! Independent replay of dataset records.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::constructor::Scene;
use crate::numeric::{answer_agrees, check_statement, numeric_answer_for};
use crate::reasoner::Transition;
use crate::rules::{rule_by_name, rule_derives};
use crate::sampler::{tier_of, Answer, ProblemKind, Template};
use crate::statement::Statement;

use super::record::{ProblemRecord, SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyFailure {
    pub record_id: String,
    /// Solution index (the wrong branch of a traceback is reported as
    /// `formal_solution.len()`) and step index, when a step failed.
    pub solution: Option<usize>,
    pub step: Option<usize>,
    pub reason: String,
}

impl std::fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.record_id)?;
        if let Some(s) = self.solution {
            write!(f, " solution {s}")?;
        }
        if let Some(k) = self.step {
            write!(f, " step {k}")?;
        }
        write!(f, ": {}", self.reason)
    }
}

struct Ctx<'a> {
    record: &'a ProblemRecord,
    scene: &'a Scene,
}

impl Ctx<'_> {
    fn fail(
        &self,
        solution: Option<usize>,
        step: Option<usize>,
        reason: impl Into<String>,
    ) -> VerifyFailure {
        VerifyFailure {
            record_id: self.record.id.clone(),
            solution,
            step,
            reason: reason.into(),
        }
    }

    fn statement(&self, id: usize, sol: usize, step: usize) -> Result<&Statement, VerifyFailure> {
        let s = self.record.statements.get(&id).ok_or_else(|| {
            self.fail(
                Some(sol),
                Some(step),
                format!("statement id {id} is not in the record"),
            )
        })?;
        if id < self.record.num_initial && self.scene.initial_statements.get(id) != Some(s) {
            return Err(self.fail(
                Some(sol),
                Some(step),
                format!("initial statement {id} does not match the scene"),
            ));
        }
        Ok(s)
    }

    /// Replays one derivation; returns the initial statements it uses.
    fn replay(
        &self,
        sol: usize,
        path: &[Transition],
        target: usize,
    ) -> Result<BTreeSet<usize>, VerifyFailure> {
        let mut known: BTreeSet<usize> = BTreeSet::new();
        let mut used = BTreeSet::new();
        for (k, t) in path.iter().enumerate() {
            let rule = rule_by_name(&t.rule).ok_or_else(|| {
                self.fail(Some(sol), Some(k), format!("unknown rule `{}`", t.rule))
            })?;
            let mut premises = Vec::with_capacity(t.premises.len());
            for &p in &t.premises {
                if p < self.record.num_initial {
                    used.insert(p);
                } else if !known.contains(&p) {
                    return Err(self.fail(
                        Some(sol),
                        Some(k),
                        format!("premise {p} is used before it is derived"),
                    ));
                }
                premises.push(self.statement(p, sol, k)?.clone());
            }
            if t.conclusion < self.record.num_initial {
                return Err(self.fail(Some(sol), Some(k), "conclusion is an initial statement"));
            }
            let conclusion = self.statement(t.conclusion, sol, k)?;
            if !rule_derives(rule, &premises, conclusion, &self.scene.geometry) {
                return Err(self.fail(
                    Some(sol),
                    Some(k),
                    format!("rule `{}` does not derive {conclusion}", t.rule),
                ));
            }
            if !check_statement(&self.scene.geometry, conclusion).is_ok_and(|v| v.holds()) {
                return Err(self.fail(
                    Some(sol),
                    Some(k),
                    format!("{conclusion} fails numerically"),
                ));
            }
            known.insert(t.conclusion);
        }
        if !known.contains(&target) {
            return Err(self.fail(Some(sol), None, "the path does not derive its target"));
        }
        Ok(used)
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Replays every transition on the scene geometry and re-checks filters, tier
/// and the numeric answer.
pub fn verify_record(record: &ProblemRecord, scene: &Scene) -> Result<(), VerifyFailure> {
    let cx = Ctx { record, scene };
    if record.schema_version != SCHEMA_VERSION {
        return Err(cx.fail(
            None,
            None,
            format!("schema version {}", record.schema_version),
        ));
    }
    if record.num_initial != scene.initial_statements.len() {
        return Err(cx.fail(None, None, "initial statement count differs from the scene"));
    }
    if record.statements.get(&record.target_id) != Some(&record.target) {
        return Err(cx.fail(None, None, "target id does not name the target"));
    }
    if record.formal_solution.is_empty() {
        return Err(cx.fail(None, None, "no formal solution"));
    }
    let meta = &record.metadata;
    let mut all_used = BTreeSet::new();
    for (i, path) in record.formal_solution.iter().enumerate() {
        let used = cx.replay(i, path, record.target_id)?;
        if path.len() < meta.tau_l {
            return Err(cx.fail(
                Some(i),
                None,
                format!("length {} below {}", path.len(), meta.tau_l),
            ));
        }
        let ratio = used.len() as f64 / record.num_initial as f64;
        if ratio < meta.tau_r {
            return Err(cx.fail(
                Some(i),
                None,
                format!("premise ratio {ratio:.3} below {}", meta.tau_r),
            ));
        }
        if i == 0 {
            all_used = used;
        }
    }
    let mut length = record.formal_solution[0].len();
    match (meta.template, &record.traceback) {
        (Template::Deductive, None) => {}
        (Template::MultiSolution, None) => {
            let distinct: BTreeSet<BTreeSet<&Transition>> = record
                .formal_solution
                .iter()
                .map(|p| p.iter().collect())
                .collect();
            if distinct.len() < 2 || distinct.len() != record.formal_solution.len() {
                return Err(cx.fail(
                    None,
                    None,
                    "multi-solution record needs at least two distinct solutions",
                ));
            }
        }
        (Template::Traceback, Some(tb)) => {
            let sol = record.formal_solution.len();
            let used = cx.replay(sol, &tb.wrong_branch, tb.wrong_target)?;
            all_used.extend(used);
            let correct = &record.formal_solution[0];
            let correct_ids: BTreeSet<usize> = correct
                .iter()
                .flat_map(|t| t.premises.iter().copied().chain([t.conclusion]))
                .collect();
            if correct_ids.contains(&tb.wrong_target) {
                return Err(cx.fail(
                    Some(sol),
                    None,
                    "the erroneous target lies on the correct path",
                ));
            }
            let shared = tb
                .wrong_branch
                .iter()
                .filter(|t| correct.contains(t))
                .count();
            let overlap = shared as f64 / tb.wrong_branch.len().max(1) as f64;
            if !approx_eq(overlap, tb.overlap) || overlap < meta.tau_p || overlap == 0.0 {
                return Err(cx.fail(Some(sol), None, format!("overlap {overlap:.3} invalid")));
            }
            let mut combined: BTreeSet<&Transition> = correct.iter().collect();
            combined.extend(tb.wrong_branch.iter());
            length = combined.len();
        }
        (t, _) => {
            return Err(cx.fail(
                None,
                None,
                format!("template {} has inconsistent traceback data", t.name()),
            ))
        }
    }
    if length != meta.reasoning_length {
        return Err(cx.fail(
            None,
            None,
            format!(
                "reasoning length {} recorded as {}",
                length, meta.reasoning_length
            ),
        ));
    }
    let ratio = all_used.len() as f64 / record.num_initial as f64;
    if !approx_eq(ratio, meta.premise_ratio) {
        return Err(cx.fail(None, None, "premise ratio does not match the solution"));
    }
    if meta.tier != tier_of(length).ok().map(|t| t.0) {
        return Err(cx.fail(
            None,
            None,
            format!("tier {:?} inconsistent with length {length}", meta.tier),
        ));
    }
    match (&record.kind, &record.answer) {
        (ProblemKind::Numeric, answer @ Answer::Numeric { value, .. }) => {
            let claimed = answer
                .numeric_value()
                .ok_or_else(|| cx.fail(None, None, format!("answer `{value}` is not a number")))?;
            let oracle = numeric_answer_for(&scene.geometry, &record.target)
                .map_err(|e| cx.fail(None, None, format!("oracle failed: {e}")))?;
            if !answer_agrees(claimed, oracle) {
                return Err(cx.fail(
                    None,
                    None,
                    format!("answer {value} disagrees with the coordinate oracle"),
                ));
            }
            if record.target.value() != Some(claimed) {
                return Err(cx.fail(
                    None,
                    None,
                    format!("answer {value} differs from the derived value"),
                ));
            }
        }
        (ProblemKind::Proof, Answer::Proof { statement }) if *statement == record.target => {}
        _ => return Err(cx.fail(None, None, "answer does not match the problem kind")),
    }
    if record.compute_id() != record.id {
        return Err(cx.fail(None, None, "content does not match the id"));
    }
    Ok(())
}
