//! Batch generation, bootstrap augmentation, curation and dataset checks.

pub mod answer;
pub mod record;
pub mod stats;
pub mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructor::{
    extend_scene, extend_scene_within, generate_base_scene, Scene, GENERATORS, MAX_POINTS,
};
use crate::reasoner::{saturate, Budget, Mode, ReasoningGraph};
use crate::renderer::{render_svg, DiagramStyle};
use crate::sampler::{
    formulate_problem, geo_explore, geo_explore_m, geo_explore_t, DistractorPolicy, Explored,
    Formulated, PathSource, ProblemKind, ReasoningPath, Template, DEFAULT_MAX_PATHS, DEFAULT_TAU_L,
    DEFAULT_TAU_P, DEFAULT_TAU_R,
};
use crate::translator::{
    connect_thinking, narrate_traceback, translate_steps, Backend, ConnectedSolution,
    TranslateError,
};

pub use answer::{check_answer, check_answer_text, AnswerCheck};
pub use record::{ManifestEntry, ProblemRecord, SceneEntry, SCHEMA_VERSION};
pub use stats::{stats, StatsReport};
pub use verify::{verify_record, VerifyFailure};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SCENES_FILE: &str = "scenes.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const SVG_DIR: &str = "svg";
pub const TEST_FILE: &str = "test.jsonl";
pub const KEY_FILE: &str = "key.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("tier {tier} has {have} numeric records, {need} needed")]
    InsufficientRecords { tier: u8, have: usize, need: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    /// Fraction of scenes kept, ranked by their longest sampled path.
    pub quantile: f64,
    pub extra_steps: usize,
    pub iterations: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            quantile: 0.1,
            extra_steps: 3,
            iterations: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed_start: u64,
    /// Number of base scenes.
    pub count: usize,
    /// Stop once this many records exist; scenes are taken in seed order.
    pub max_records: Option<usize>,
    pub generators: Vec<String>,
    /// Inclusive range the per-scene construction budget is drawn from.
    pub extension_steps: [usize; 2],
    pub tau_l: usize,
    pub tau_r: f64,
    pub tau_p: f64,
    pub max_paths: usize,
    pub templates: Vec<Template>,
    pub include_proof: bool,
    /// Records per template and scene.
    pub per_scene: usize,
    /// Targets tried per scene for the multi-solution and traceback templates.
    pub search_targets: usize,
    pub per_tier_quota: usize,
    pub budget: Budget,
    pub distractor_policy: DistractorPolicy,
    pub translator: Backend,
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
    pub bootstrap: BootstrapConfig,
    pub style: DiagramStyle,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed_start: 0,
            count: 100,
            max_records: None,
            generators: GENERATORS.iter().map(|g| g.to_string()).collect(),
            extension_steps: [2, 6],
            tau_l: DEFAULT_TAU_L,
            tau_r: DEFAULT_TAU_R,
            tau_p: DEFAULT_TAU_P,
            max_paths: DEFAULT_MAX_PATHS,
            templates: vec![
                Template::Deductive,
                Template::MultiSolution,
                Template::Traceback,
            ],
            include_proof: true,
            per_scene: 2,
            search_targets: 4,
            per_tier_quota: 60,
            budget: Budget::default(),
            distractor_policy: DistractorPolicy::AllInitial,
            translator: Backend::Template,
            workers: 0,
            bootstrap: BootstrapConfig::default(),
            style: DiagramStyle::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.tau_r) {
            return bad("tau_r must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau_p) {
            return bad("tau_p must lie in [0, 1]");
        }
        if self.generators.is_empty() {
            return bad("no generators");
        }
        if let Some(g) = self
            .generators
            .iter()
            .find(|g| !GENERATORS.contains(&g.as_str()))
        {
            return Err(PipelineError::Config(format!("unknown generator `{g}`")));
        }
        if self.budget.max_statements == 0
            || self.budget.max_transitions == 0
            || self.budget.max_rounds == 0
        {
            return bad("budgets must be positive");
        }
        if self.extension_steps[0] > self.extension_steps[1] {
            return bad("extension_steps must be an increasing range");
        }
        if self.max_paths == 0 {
            return bad("max_paths must be positive");
        }
        if !(self.bootstrap.quantile > 0.0 && self.bootstrap.quantile <= 1.0) {
            return bad("bootstrap quantile must lie in (0, 1]");
        }
        if !self.style.is_valid() {
            return bad("diagram dimensions must be positive");
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Corrupt {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn thresholds(&self) -> (usize, f64, f64) {
        (self.tau_l, self.tau_r, self.tau_p)
    }

    fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .expect("thread pool")
    }
}

/// Records and diagram produced from one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneOutcome {
    pub entry: Option<SceneEntry>,
    pub records: Vec<ProblemRecord>,
    pub svg: Option<String>,
    /// Skip reasons, for the run summary.
    pub failures: Vec<String>,
    /// Longest accepted deductive path, or 0.
    pub max_length: usize,
}

impl SceneOutcome {
    fn failed(reason: String) -> SceneOutcome {
        SceneOutcome {
            entry: None,
            records: Vec::new(),
            svg: None,
            failures: vec![reason],
            max_length: 0,
        }
    }
}

fn failure_kind(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split(['(', ' ', '{']).next().unwrap_or("").to_string()
}

/// Base figure plus extension for a seed.
pub fn base_scene(
    config: &PipelineConfig,
    seed: u64,
) -> Result<Scene, crate::constructor::ConstructError> {
    let generator = &config.generators[(seed % config.generators.len() as u64) as usize];
    let base = generate_base_scene(generator, seed)?;
    let [lo, hi] = config.extension_steps;
    let steps = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_57E9).random_range(lo..=hi);
    Ok(extend_scene(&base, steps, seed).scene)
}

fn traceback_seed(seed: u64, target: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ target as u64
}

fn translate(
    g: &ReasoningGraph,
    f: &Formulated,
    backend: &Backend,
) -> Result<Vec<ConnectedSolution>, TranslateError> {
    let numeric = f.kind == ProblemKind::Numeric;
    if let Some(tb) = &f.traceback {
        return Ok(vec![narrate_traceback(g, tb, numeric, backend)?]);
    }
    f.solutions
        .iter()
        .map(|p| {
            let steps = translate_steps(g, &p.transitions, backend)?;
            connect_thinking(g, &steps, p.target, numeric, backend)
        })
        .collect()
}

/// Saturates, samples every requested template and formulates records.
pub fn process_scene(
    config: &PipelineConfig,
    scene: &Scene,
    generation: u32,
    parent: Option<String>,
) -> SceneOutcome {
    let multi = match saturate(scene, Mode::Multi, config.budget) {
        Ok(g) => g,
        Err(e) => {
            log::warn!("scene seed {}: saturation failed: {e}", scene.seed);
            return SceneOutcome::failed(failure_kind(&e));
        }
    };
    if multi.truncated() {
        log::debug!("scene seed {}: saturation hit its budget", scene.seed);
    }
    let single = multi.first_derivations();
    let entry = SceneEntry::new(scene, generation, parent);
    let mut out = SceneOutcome {
        entry: None,
        records: Vec::new(),
        svg: None,
        failures: Vec::new(),
        max_length: 0,
    };

    let mut accepted: Vec<ReasoningPath> = Vec::new();
    for t in single.num_initial()..single.len() {
        match geo_explore(&single, t, config.tau_l, config.tau_r) {
            Ok(Explored::Accepted(p)) => accepted.push(p),
            Ok(Explored::Rejected { .. }) => {}
            Err(e) => out.failures.push(failure_kind(&e)),
        }
    }
    accepted.sort_by(|a, b| b.length().cmp(&a.length()).then(a.target.cmp(&b.target)));
    out.max_length = accepted.first().map_or(0, |p| p.length());
    let kind_of = |p: &ReasoningPath| {
        if multi.statement(p.target).is_ok_and(|s| s.value().is_some()) {
            ProblemKind::Numeric
        } else {
            ProblemKind::Proof
        }
    };
    let wanted = |k: ProblemKind| k == ProblemKind::Numeric || config.include_proof;
    let candidates: Vec<&ReasoningPath> = accepted.iter().filter(|p| wanted(kind_of(p))).collect();

    let mut formulated: Vec<(Formulated, &ReasoningGraph)> = Vec::new();
    let mut push = |res: Result<Formulated, crate::sampler::SampleError>,
                    g,
                    failures: &mut Vec<String>| match res {
        Ok(f) => {
            formulated.push((f, g));
            true
        }
        Err(e) => {
            log::warn!("scene seed {}: {e}", scene.seed);
            failures.push(failure_kind(&e));
            false
        }
    };
    let policy = config.distractor_policy;
    for template in &config.templates {
        match template {
            Template::Deductive => {
                for kind in [ProblemKind::Numeric, ProblemKind::Proof] {
                    for p in candidates
                        .iter()
                        .filter(|p| kind_of(p) == kind)
                        .take(config.per_scene)
                    {
                        let f = formulate_problem(
                            &scene.geometry,
                            &single,
                            PathSource::Single(p),
                            kind,
                            policy,
                        );
                        push(f, &single, &mut out.failures);
                    }
                }
            }
            Template::MultiSolution => {
                let mut made = 0;
                for p in candidates.iter().take(config.search_targets) {
                    if made >= config.per_scene {
                        break;
                    }
                    let paths = match geo_explore_m(
                        &multi,
                        p.target,
                        config.tau_l,
                        config.tau_r,
                        config.max_paths,
                    ) {
                        Ok(paths) => paths,
                        Err(e) => {
                            out.failures.push(failure_kind(&e));
                            continue;
                        }
                    };
                    if paths.len() >= 2 {
                        let f = formulate_problem(
                            &scene.geometry,
                            &multi,
                            PathSource::Multi(&paths),
                            kind_of(p),
                            policy,
                        );
                        made += usize::from(push(f, &multi, &mut out.failures));
                    }
                }
            }
            Template::Traceback => {
                let mut made = 0;
                for p in candidates.iter().take(config.search_targets) {
                    if made >= config.per_scene {
                        break;
                    }
                    let seed = traceback_seed(scene.seed, p.target);
                    match geo_explore_t(
                        &multi,
                        p.target,
                        config.tau_l,
                        config.tau_r,
                        config.tau_p,
                        config.max_paths,
                        seed,
                    ) {
                        Ok(Some(tb)) => {
                            let f = formulate_problem(
                                &scene.geometry,
                                &multi,
                                PathSource::Traceback(&tb),
                                kind_of(p),
                                policy,
                            );
                            made += usize::from(push(f, &multi, &mut out.failures));
                        }
                        Ok(None) => {}
                        Err(e) => out.failures.push(failure_kind(&e)),
                    }
                }
            }
        }
    }

    for (f, g) in formulated {
        let mut rec = ProblemRecord::from_formulated(&f, g, &entry, config.thresholds());
        match translate(g, &f, &config.translator) {
            Ok(sols) => {
                rec.nl_solution = Some(sols.iter().map(ConnectedSolution::text).collect());
                rec.connection_thinking = Some(sols);
            }
            Err(e) => {
                log::warn!("record {}: left untranslated: {e}", rec.id);
                rec.untranslated = true;
            }
        }
        rec.seal();
        out.records.push(rec);
    }
    if !out.records.is_empty() {
        out.svg = Some(render_svg(scene, &config.style));
        out.entry = Some(entry);
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub generation: u32,
    pub scenes_attempted: usize,
    pub scenes_emitted: usize,
    pub records: usize,
    pub failures: BTreeMap<String, usize>,
}

/// Runs `work` over `items` in parallel chunks, keeping input order, until
/// `max_records` records exist.
fn run_ordered<T: Sync>(
    config: &PipelineConfig,
    items: &[T],
    work: impl Fn(&T) -> SceneOutcome + Sync,
) -> Vec<SceneOutcome> {
    let pool = config.pool();
    let chunk = (pool.current_num_threads() * 4).max(1);
    let mut outcomes: Vec<SceneOutcome> = Vec::new();
    let mut records = 0;
    for part in items.chunks(chunk) {
        let batch: Vec<SceneOutcome> = pool.install(|| part.par_iter().map(&work).collect());
        for o in batch {
            if config.max_records.is_some_and(|m| records >= m) {
                break;
            }
            records += o.records.len();
            outcomes.push(o);
        }
        if config.max_records.is_some_and(|m| records >= m) {
            break;
        }
    }
    if let Some(m) = config.max_records {
        let mut left = m;
        for o in &mut outcomes {
            o.records.truncate(left);
            left -= o.records.len();
            if o.records.is_empty() {
                o.entry = None;
                o.svg = None;
            }
        }
    }
    outcomes
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item).expect("serializable");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| PipelineError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Writes a dataset directory through a single writer.
fn emit(
    config: &PipelineConfig,
    out_dir: &Path,
    outcomes: &[SceneOutcome],
    generation: u32,
    attempted: usize,
) -> Result<RunSummary, PipelineError> {
    let svg_dir = out_dir.join(SVG_DIR);
    fs::create_dir_all(&svg_dir).map_err(io_err(&svg_dir))?;
    let mut summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        generation,
        scenes_attempted: attempted,
        ..RunSummary::default()
    };
    for o in outcomes {
        for f in &o.failures {
            *summary.failures.entry(f.clone()).or_default() += 1;
        }
        if let Some(svg) = &o.svg {
            for r in &o.records {
                let path = out_dir.join(&r.diagram);
                fs::write(&path, svg).map_err(io_err(&path))?;
            }
        }
    }
    let records: Vec<&ProblemRecord> = outcomes.iter().flat_map(|o| &o.records).collect();
    let scenes: Vec<&SceneEntry> = outcomes.iter().filter_map(|o| o.entry.as_ref()).collect();
    summary.records = records.len();
    summary.scenes_emitted = scenes.len();
    write_jsonl(&out_dir.join(RECORDS_FILE), &records)?;
    write_jsonl(&out_dir.join(SCENES_FILE), &scenes)?;
    write_jsonl(
        &out_dir.join(MANIFEST_FILE),
        records.iter().map(|r| ManifestEntry::from(*r)),
    )?;
    let run = serde_json::json!({ "summary": summary, "config": config });
    let path = out_dir.join(RUN_FILE);
    fs::write(
        &path,
        serde_json::to_string_pretty(&run).expect("serializable") + "\n",
    )
    .map_err(io_err(&path))?;
    Ok(summary)
}

/// Generates a dataset from base scenes `seed_start..seed_start + count`.
pub fn generate(config: &PipelineConfig, out_dir: &Path) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let outcomes = generate_outcomes(config);
    emit(config, out_dir, &outcomes, 0, outcomes.len())
}

/// The in-memory part of `generate`.
pub fn generate_outcomes(config: &PipelineConfig) -> Vec<SceneOutcome> {
    let seeds: Vec<u64> = (0..config.count as u64)
        .map(|i| config.seed_start + i)
        .collect();
    run_ordered(config, &seeds, |&seed| match base_scene(config, seed) {
        Ok(scene) => process_scene(config, &scene, 0, None),
        Err(e) => {
            log::warn!("seed {seed}: {e}");
            SceneOutcome::failed(failure_kind(&e))
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<ProblemRecord>,
    pub scenes: Vec<SceneEntry>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Dataset, PipelineError> {
        Ok(Dataset {
            records: read_jsonl(&dir.join(RECORDS_FILE))?,
            scenes: read_jsonl(&dir.join(SCENES_FILE))?,
        })
    }

    pub fn scene(&self, id: &str) -> Option<&SceneEntry> {
        self.scenes.iter().find(|s| s.scene_id == id)
    }
}

/// Number of scenes kept from `n` at quantile `q`.
pub fn quantile_count(n: usize, q: f64) -> usize {
    if n == 0 {
        0
    } else {
        ((q * n as f64).ceil() as usize).clamp(1, n)
    }
}

/// Scenes ranked by their longest record, longest first; ties keep file order.
pub fn select_for_bootstrap(ds: &Dataset, quantile: f64) -> Vec<&SceneEntry> {
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &ds.records {
        let e = best.entry(r.scene_id.as_str()).or_default();
        *e = (*e).max(r.metadata.reasoning_length);
    }
    let mut ranked: Vec<(usize, usize, &SceneEntry)> = ds
        .scenes
        .iter()
        .enumerate()
        .filter_map(|(i, s)| best.get(s.scene_id.as_str()).map(|&l| (l, i, s)))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let k = quantile_count(ranked.len(), quantile);
    ranked.into_iter().take(k).map(|(_, _, s)| s).collect()
}

fn bootstrap_seed(seed: u64, generation: u32) -> u64 {
    seed ^ (u64::from(generation)).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Extends a scene with `extra` constructions for the next generation.
pub fn bootstrap_scene(
    entry: &SceneEntry,
    extra: usize,
) -> Result<Scene, crate::constructor::ConstructError> {
    let scene = Scene::try_from(entry.scene.clone())?;
    let seed = bootstrap_seed(entry.seed, entry.generation + 1);
    // Base scenes may already sit at the point cap; each extra construction
    // adds at most two points.
    let cap = scene.num_points().max(MAX_POINTS) + 2 * extra;
    let mut next = extend_scene_within(&scene, extra, seed, cap).scene;
    next.seed = entry.seed;
    Ok(next)
}

/// Selects the deepest scenes of `prior`, extends and re-samples them.
pub fn bootstrap_outcomes(
    config: &PipelineConfig,
    prior: &Dataset,
) -> Result<Vec<SceneOutcome>, PipelineError> {
    if prior.records.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let mut current = prior.clone();
    let mut all = Vec::new();
    for _ in 0..config.bootstrap.iterations.max(1) {
        let chosen: Vec<SceneEntry> = select_for_bootstrap(&current, config.bootstrap.quantile)
            .into_iter()
            .cloned()
            .collect();
        let outcomes = run_ordered(config, &chosen, |entry| {
            match bootstrap_scene(entry, config.bootstrap.extra_steps) {
                Ok(scene) => process_scene(
                    config,
                    &scene,
                    entry.generation + 1,
                    Some(entry.scene_id.clone()),
                ),
                Err(e) => SceneOutcome::failed(failure_kind(&e)),
            }
        });
        current = Dataset {
            records: outcomes.iter().flat_map(|o| o.records.clone()).collect(),
            scenes: outcomes.iter().filter_map(|o| o.entry.clone()).collect(),
        };
        all.extend(outcomes);
        if current.records.is_empty() {
            break;
        }
    }
    Ok(all)
}

pub fn bootstrap(
    config: &PipelineConfig,
    in_dir: &Path,
    out_dir: &Path,
) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let prior = Dataset::load(in_dir)?;
    let generation = prior.scenes.iter().map(|s| s.generation).max().unwrap_or(0) + 1;
    let outcomes = bootstrap_outcomes(config, &prior)?;
    emit(config, out_dir, &outcomes, generation, outcomes.len())
}

/// Question-only item of a test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestItem {
    pub id: String,
    pub tier: u8,
    pub question: String,
    pub diagram: String,
    pub unit: crate::statement::Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub id: String,
    pub answer: String,
}

/// Picks `quota` numeric records per tier, in id order.
pub fn curate_testset(
    records: &[ProblemRecord],
    quota: usize,
) -> Result<(Vec<TestItem>, Vec<KeyEntry>), PipelineError> {
    let mut by_tier: BTreeMap<u8, Vec<&ProblemRecord>> = (1..=4).map(|t| (t, Vec::new())).collect();
    for r in records {
        if let (ProblemKind::Numeric, Some(t)) = (r.kind, r.metadata.tier) {
            by_tier.entry(t).or_default().push(r);
        }
    }
    let mut items = Vec::new();
    let mut keys = Vec::new();
    for (tier, mut rs) in by_tier {
        if rs.len() < quota {
            return Err(PipelineError::InsufficientRecords {
                tier,
                have: rs.len(),
                need: quota,
            });
        }
        rs.sort_by(|a, b| a.id.cmp(&b.id));
        for r in rs.into_iter().take(quota) {
            let crate::sampler::Answer::Numeric { value, unit } = &r.answer else {
                continue;
            };
            items.push(TestItem {
                id: r.id.clone(),
                tier,
                question: r.question.clone(),
                diagram: r.diagram.clone(),
                unit: *unit,
            });
            keys.push(KeyEntry {
                id: r.id.clone(),
                answer: value.clone(),
            });
        }
    }
    Ok((items, keys))
}

pub fn curate(in_dir: &Path, out_dir: &Path, quota: usize) -> Result<usize, PipelineError> {
    let ds = Dataset::load(in_dir)?;
    let (items, keys) = curate_testset(&ds.records, quota)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_jsonl(&out_dir.join(TEST_FILE), &items)?;
    write_jsonl(&out_dir.join(KEY_FILE), &keys)?;
    Ok(items.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub total: usize,
    pub correct: usize,
    pub no_number: usize,
    pub missing: usize,
    pub accuracy: f64,
    pub results: BTreeMap<String, bool>,
}

/// Scores predictions against a key; unanswered ids count as wrong.
pub fn check_predictions(
    preds: &[Prediction],
    keys: &[KeyEntry],
) -> Result<CheckReport, PipelineError> {
    let by_id: BTreeMap<&str, &str> = preds
        .iter()
        .map(|p| (p.id.as_str(), p.prediction.as_str()))
        .collect();
    let mut rep = CheckReport {
        total: keys.len(),
        ..CheckReport::default()
    };
    for k in keys {
        let ok = match by_id.get(k.id.as_str()) {
            None => {
                rep.missing += 1;
                false
            }
            Some(p) => {
                let c = check_answer_text(p, &k.answer).ok_or_else(|| {
                    PipelineError::Config(format!("key for {} is not a number: {}", k.id, k.answer))
                })?;
                rep.no_number += usize::from(c.no_number);
                c.correct
            }
        };
        rep.correct += usize::from(ok);
        rep.results.insert(k.id.clone(), ok);
    }
    rep.accuracy = if rep.total == 0 {
        0.0
    } else {
        rep.correct as f64 / rep.total as f64
    };
    Ok(rep)
}

/// Verifies every record of a dataset directory.
pub fn verify_dataset(ds: &Dataset, dir: Option<&Path>) -> Vec<Result<(), VerifyFailure>> {
    let scenes: BTreeMap<&str, Result<Scene, String>> = ds
        .scenes
        .iter()
        .map(|s| {
            (
                s.scene_id.as_str(),
                Scene::try_from(s.scene.clone()).map_err(|e| e.to_string()),
            )
        })
        .collect();
    ds.records
        .par_iter()
        .map(|r| {
            let fail = |reason: String| VerifyFailure {
                record_id: r.id.clone(),
                solution: None,
                step: None,
                reason,
            };
            let scene = match scenes.get(r.scene_id.as_str()) {
                Some(Ok(s)) => s,
                Some(Err(e)) => return Err(fail(format!("scene {} is invalid: {e}", r.scene_id))),
                None => return Err(fail(format!("scene {} is missing", r.scene_id))),
            };
            verify_record(r, scene)?;
            if let Some(d) = dir {
                if !d.join(&r.diagram).is_file() {
                    return Err(fail(format!("diagram {} is missing", r.diagram)));
                }
            }
            Ok(())
        })
        .collect()
}
