//! Dataset statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::record::ProblemRecord;

/// Premise-ratio bins of width 0.1; ratio 1.0 falls in the last bin.
pub const RATIO_BINS: usize = 10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub records: usize,
    pub length_histogram: BTreeMap<usize, usize>,
    pub premise_ratio_histogram: Vec<usize>,
    pub tiers: BTreeMap<String, usize>,
    pub templates: BTreeMap<String, usize>,
    pub kinds: BTreeMap<String, usize>,
    /// Reasoning-length histogram per bootstrap generation.
    pub length_by_generation: BTreeMap<u32, BTreeMap<usize, usize>>,
    pub untranslated: usize,
}

fn ratio_bin(r: f64) -> usize {
    ((r * RATIO_BINS as f64).floor() as usize).min(RATIO_BINS - 1)
}

pub fn stats(records: &[ProblemRecord]) -> StatsReport {
    let mut rep = StatsReport {
        records: records.len(),
        premise_ratio_histogram: vec![0; RATIO_BINS],
        ..StatsReport::default()
    };
    for r in records {
        let m = &r.metadata;
        *rep.length_histogram.entry(m.reasoning_length).or_default() += 1;
        rep.premise_ratio_histogram[ratio_bin(m.premise_ratio)] += 1;
        let tier = m.tier.map_or("none".to_string(), |t| format!("tier{t}"));
        *rep.tiers.entry(tier).or_default() += 1;
        *rep.templates
            .entry(m.template.name().to_string())
            .or_default() += 1;
        let kind = serde_json::to_value(r.kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        *rep.kinds.entry(kind).or_default() += 1;
        *rep.length_by_generation
            .entry(m.bootstrap_generation)
            .or_default()
            .entry(m.reasoning_length)
            .or_default() += 1;
        rep.untranslated += usize::from(r.untranslated);
    }
    rep
}

fn bar(n: usize, max: usize) -> String {
    let width = if max == 0 { 0 } else { (n * 40).div_ceil(max) };
    "#".repeat(width)
}

impl StatsReport {
    /// Plain-text tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "records: {}", self.records);
        let _ = writeln!(out, "\nreasoning length");
        let max = self.length_histogram.values().copied().max().unwrap_or(0);
        for (len, n) in &self.length_histogram {
            let _ = writeln!(out, "{len:>5} {n:>7} {}", bar(*n, max));
        }
        let _ = writeln!(out, "\npremise ratio");
        let max = self
            .premise_ratio_histogram
            .iter()
            .copied()
            .max()
            .unwrap_or(0);
        for (i, n) in self.premise_ratio_histogram.iter().enumerate() {
            let lo = i as f64 / RATIO_BINS as f64;
            let _ = writeln!(out, "{:.1}-{:.1} {n:>7} {}", lo, lo + 0.1, bar(*n, max));
        }
        for (title, map) in [
            ("tiers", &self.tiers),
            ("templates", &self.templates),
            ("kinds", &self.kinds),
        ] {
            let _ = writeln!(out, "\n{title}");
            for (k, n) in map {
                let _ = writeln!(out, "{k:>16} {n:>7}");
            }
        }
        if self.length_by_generation.len() > 1 {
            let gens: Vec<u32> = self.length_by_generation.keys().copied().collect();
            let _ = write!(out, "\nlength by generation\n{:>5}", "len");
            for g in &gens {
                let _ = write!(out, " {:>7}", format!("gen{g}"));
            }
            out.push('\n');
            let lengths: std::collections::BTreeSet<usize> = self
                .length_by_generation
                .values()
                .flat_map(|h| h.keys().copied())
                .collect();
            for len in lengths {
                let _ = write!(out, "{len:>5}");
                for g in &gens {
                    let n = self.length_by_generation[g].get(&len).copied().unwrap_or(0);
                    let _ = write!(out, " {n:>7}");
                }
                out.push('\n');
            }
        }
        if self.untranslated > 0 {
            let _ = writeln!(out, "\nuntranslated: {}", self.untranslated);
        }
        out
    }
}
