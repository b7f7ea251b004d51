//! Dataset record schema.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constructor::{Scene, SceneJson};
use crate::reasoner::{ReasoningGraph, Transition};
use crate::sampler::{Answer, Formulated, ProblemKind, Template};
use crate::statement::Statement;
use crate::translator::ConnectedSolution;

pub const SCHEMA_VERSION: u32 = 1;

/// Short content hash used for record and scene ids.
pub fn content_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub scene_id: String,
    pub seed: u64,
    pub generation: u32,
    pub parent: Option<String>,
    pub scene: SceneJson,
}

impl SceneEntry {
    pub fn new(scene: &Scene, generation: u32, parent: Option<String>) -> SceneEntry {
        let json = scene.to_json();
        let scene_id = content_hash(&serde_json::to_string(&json).expect("scene serializes"));
        SceneEntry {
            scene_id,
            seed: scene.seed,
            generation,
            parent,
            scene: json,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Premises {
    pub formal: Vec<Statement>,
    pub nl: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracebackJson {
    pub wrong_target: usize,
    pub wrong_branch: Vec<Transition>,
    pub overlap: f64,
    pub backtrack_point: Option<Transition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub reasoning_length: usize,
    pub premise_ratio: f64,
    pub tier: Option<u8>,
    pub template: Template,
    pub bootstrap_generation: u32,
    pub tau_l: usize,
    pub tau_r: f64,
    pub tau_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub schema_version: u32,
    pub id: String,
    pub seed: u64,
    pub scene_id: String,
    pub kind: ProblemKind,
    pub question: String,
    pub premises: Premises,
    pub target: Statement,
    pub target_id: usize,
    pub answer: Answer,
    pub num_initial: usize,
    /// Every statement the formal solutions mention, by graph id.
    pub statements: BTreeMap<usize, Statement>,
    /// One transition list per solution, premises first.
    pub formal_solution: Vec<Vec<Transition>>,
    pub traceback: Option<TracebackJson>,
    pub nl_solution: Option<Vec<String>>,
    pub connection_thinking: Option<Vec<ConnectedSolution>>,
    /// Set when the external translator failed and only the formal solution
    /// is present.
    pub untranslated: bool,
    pub diagram: String,
    pub metadata: Metadata,
}

impl ProblemRecord {
    pub fn from_formulated(
        f: &Formulated,
        g: &ReasoningGraph,
        scene: &SceneEntry,
        thresholds: (usize, f64, f64),
    ) -> ProblemRecord {
        let mut ids: BTreeSet<usize> = BTreeSet::new();
        for p in &f.solutions {
            ids.extend(p.statement_ids());
        }
        let traceback = f.traceback.as_ref().map(|t| {
            ids.extend(t.wrong_branch.statement_ids());
            TracebackJson {
                wrong_target: t.wrong_branch.target,
                wrong_branch: t.wrong_branch.transitions.clone(),
                overlap: t.overlap,
                backtrack_point: t.backtrack_point.clone(),
            }
        });
        let statements = ids
            .into_iter()
            .map(|i| (i, g.statement(i).expect("path ids are graph ids").clone()))
            .collect();
        let (tau_l, tau_r, tau_p) = thresholds;
        let mut rec = ProblemRecord {
            schema_version: SCHEMA_VERSION,
            id: String::new(),
            seed: scene.seed,
            scene_id: scene.scene_id.clone(),
            kind: f.kind,
            question: f.question.clone(),
            premises: Premises {
                formal: f.given.clone(),
                nl: f.given.iter().map(crate::translator::phrase).collect(),
            },
            target: f.target.clone(),
            target_id: f.solutions[0].target,
            answer: f.answer.clone(),
            num_initial: g.num_initial(),
            statements,
            formal_solution: f.solutions.iter().map(|p| p.transitions.clone()).collect(),
            traceback,
            nl_solution: None,
            connection_thinking: None,
            untranslated: false,
            diagram: String::new(),
            metadata: Metadata {
                reasoning_length: f.reasoning_length,
                premise_ratio: f.premise_ratio,
                tier: f.tier.map(|t| t.0),
                template: f.template,
                bootstrap_generation: scene.generation,
                tau_l,
                tau_r,
                tau_p,
            },
        };
        rec.seal();
        rec
    }

    /// Hash of everything except the id and diagram reference.
    pub fn compute_id(&self) -> String {
        let mut c = self.clone();
        c.id = String::new();
        c.diagram = String::new();
        content_hash(&serde_json::to_string(&c).expect("record serializes"))
    }

    /// Recomputes the id and diagram path after the content changed.
    pub fn seal(&mut self) {
        self.id = self.compute_id();
        self.diagram = format!("svg/{}.svg", self.id);
    }

    pub fn template(&self) -> Template {
        self.metadata.template
    }
}

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub scene_id: String,
    pub kind: ProblemKind,
    pub template: Template,
    pub reasoning_length: usize,
    pub tier: Option<u8>,
    pub bootstrap_generation: u32,
    pub diagram: String,
}

impl From<&ProblemRecord> for ManifestEntry {
    fn from(r: &ProblemRecord) -> Self {
        ManifestEntry {
            id: r.id.clone(),
            scene_id: r.scene_id.clone(),
            kind: r.kind,
            template: r.metadata.template,
            reasoning_length: r.metadata.reasoning_length,
            tier: r.metadata.tier,
            bootstrap_generation: r.metadata.bootstrap_generation,
            diagram: r.diagram.clone(),
        }
    }
}
