//! Turning phase-annotated training logs into range rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::apriori::{mine_frequent, FrequentItemset};
use super::{
    describe, Item, ItemKind, LatencyRule, RangeRule, RuleError, RuleSet, RuleSource, Scope,
    Transaction,
};
use crate::phases::{MissionPhase, PhaseAnnotatedLog};
use crate::telemetry::Feature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    pub min_support: f64,
    pub holding_threshold: f64,
    /// Largest tolerated excursion beyond a bound, as a fraction of the
    /// rule's width, when absorbing a near-miss minority.
    pub widen_budget: f64,
    /// Equal-width bins per numeric feature per phase.
    pub bins: usize,
    /// Longest itemset Apriori grows. Rules use singletons; longer itemsets
    /// are reported only.
    pub max_itemset_len: usize,
    pub features: Vec<Feature>,
    pub max_latency_ms: i64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: 0.005,
            holding_threshold: 0.99,
            widen_budget: 0.01,
            bins: 4,
            max_itemset_len: 2,
            features: vec![
                Feature::Mode,
                Feature::RelAlt,
                Feature::Roll,
                Feature::Pitch,
                Feature::Throttle,
                Feature::Groundspeed,
                Feature::Climb,
                Feature::BaroStatus,
                Feature::GpsFix,
            ],
            max_latency_ms: 2000,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), RuleError> {
        let bad = |m: String| Err(RuleError::InvalidParams(m));
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(RuleError::InvalidSupport(self.min_support));
        }
        if !(self.holding_threshold > 0.0 && self.holding_threshold <= 1.0) {
            return bad(format!("holding_threshold {} outside (0, 1]", self.holding_threshold));
        }
        if !(self.widen_budget >= 0.0 && self.widen_budget.is_finite()) {
            return bad(format!("widen_budget {} must be non-negative", self.widen_budget));
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if self.max_itemset_len == 0 {
            return bad("max_itemset_len must be at least 1".into());
        }
        if self.features.is_empty() {
            return bad("no rule features configured".into());
        }
        if self.max_latency_ms <= 0 {
            return bad("max_latency_ms must be positive".into());
        }
        Ok(())
    }
}

/// One phase's share of the corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseTransactions {
    pub transactions: Vec<Transaction>,
    /// Observed `(min, max)` per feature.
    pub envelopes: BTreeMap<Feature, (f64, f64)>,
    /// Raw values per feature, aligned with `transactions`.
    pub values: BTreeMap<Feature, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscretizedCorpus {
    pub phases: BTreeMap<MissionPhase, PhaseTransactions>,
}

/// Splits every record into its phase and maps each configured feature to
/// an item: numeric features to one of `bins` equal-width bins spanning the
/// phase's observed range, categorical features to their value.
pub fn discretize(
    logs: &[PhaseAnnotatedLog],
    features: &[Feature],
    bins: usize,
) -> Result<DiscretizedCorpus, RuleError> {
    if bins == 0 {
        return Err(RuleError::InvalidParams("bins must be at least 1".into()));
    }
    let mut values: BTreeMap<MissionPhase, BTreeMap<Feature, Vec<f64>>> = BTreeMap::new();
    for log in logs {
        for (record, phase) in log.iter() {
            let per = values.entry(phase).or_default();
            for &f in features {
                per.entry(f).or_default().push(record.get(f));
            }
        }
    }
    if values.is_empty() {
        return Err(RuleError::EmptyCorpus);
    }

    let mut out = DiscretizedCorpus::default();
    for (phase, per) in values {
        let n = per.values().next().map_or(0, Vec::len);
        let mut pt = PhaseTransactions {
            transactions: vec![Transaction::default(); n],
            ..Default::default()
        };
        for (&feature, vals) in &per {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            pt.envelopes.insert(feature, (lo, hi));
            for (t, &v) in pt.transactions.iter_mut().zip(vals) {
                let kind = if feature.is_categorical() {
                    ItemKind::Categorical { value: v }
                } else {
                    let (lower, upper) = bin_of(v, lo, hi, bins);
                    ItemKind::RangeBin { lower, upper }
                };
                t.items.push(Item { feature, kind });
            }
        }
        pt.values = per;
        out.phases.insert(phase, pt);
    }
    Ok(out)
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> (f64, f64) {
    if hi <= lo {
        return (lo, hi);
    }
    let width = (hi - lo) / bins as f64;
    let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
    let lower = lo + idx as f64 * width;
    let upper = if idx + 1 == bins {
        hi
    } else {
        lo + (idx + 1) as f64 * width
    };
    (lower, upper)
}

/// A candidate that failed the holding threshold or the widening budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedCandidate {
    pub feature: Feature,
    pub phase: MissionPhase,
    pub holding_fraction: f64,
    pub lower: f64,
    pub upper: f64,
    /// Largest distance of a minority value beyond the candidate bounds.
    pub worst_excursion: f64,
}

/// A minority value absorbed by widening, kept for human review.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearMiss {
    pub feature: Feature,
    pub phase: MissionPhase,
    pub value: f64,
    pub candidate_lower: f64,
    pub candidate_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningReport {
    pub ruleset: RuleSet,
    pub itemsets: BTreeMap<MissionPhase, Vec<FrequentItemset>>,
    pub dropped: Vec<DroppedCandidate>,
    pub near_misses: Vec<NearMiss>,
}

impl MiningReport {
    /// Frequent itemsets spanning more than one feature.
    pub fn multi_feature_itemsets(&self) -> impl Iterator<Item = (MissionPhase, &FrequentItemset)> {
        self.itemsets
            .iter()
            .flat_map(|(&p, sets)| sets.iter().filter(|s| s.items.len() > 1).map(move |s| (p, s)))
    }
}

/// Builds range rules from frequent single-feature itemsets.
///
/// The candidate for a `(feature, phase)` spans the records whose values fall
/// within the hull of that feature's frequent items. Records outside it are
/// the minority: with none the candidate is kept, with few enough and each
/// close enough the bounds are stretched over them, otherwise the candidate
/// is dropped. A feature whose rule is identical in every phase present
/// becomes one universal rule.
pub fn derive_rules(
    itemsets: &BTreeMap<MissionPhase, Vec<FrequentItemset>>,
    corpus: &DiscretizedCorpus,
    config: &MiningConfig,
) -> MiningReport {
    let mut per_phase: BTreeMap<Feature, BTreeMap<MissionPhase, RangeRule>> = BTreeMap::new();
    let mut dropped = Vec::new();
    let mut near_misses = Vec::new();

    for (&phase, pt) in &corpus.phases {
        let Some(sets) = itemsets.get(&phase) else {
            continue;
        };
        for (&feature, vals) in &pt.values {
            let frequent: Vec<(&Item, f64)> = sets
                .iter()
                .filter(|s| s.items.len() == 1 && s.items[0].feature == feature)
                .map(|s| (&s.items[0], s.support()))
                .collect();
            if frequent.is_empty() || vals.is_empty() {
                continue;
            }
            let (hull_lo, hull_hi) = frequent.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), (item, _)| match item.kind {
                    ItemKind::RangeBin { lower, upper } => (lo.min(lower), hi.max(upper)),
                    ItemKind::Categorical { value } => (lo.min(value), hi.max(value)),
                },
            );
            let in_hull = |v: f64| hull_lo <= v && v <= hull_hi;
            let (lower, upper) = vals
                .iter()
                .copied()
                .filter(|&v| in_hull(v))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            let minority: Vec<f64> = vals.iter().copied().filter(|&v| !in_hull(v)).collect();
            let n = vals.len() as f64;
            let holding = 1.0 - minority.len() as f64 / n;
            let support = frequent.iter().map(|(_, s)| s).sum::<f64>().min(1.0);

            let excursion = |v: f64| (lower - v).max(v - upper).max(0.0);
            let worst = minority.iter().map(|&v| excursion(v)).fold(0.0, f64::max);
            let budget = config.widen_budget * (upper - lower);
            let (lo, hi, widened) = if minority.is_empty() {
                (lower, upper, false)
            } else if 1.0 - holding <= 1.0 - config.holding_threshold + 1e-12 && worst <= budget {
                for &v in &minority {
                    near_misses.push(NearMiss {
                        feature,
                        phase,
                        value: v,
                        candidate_lower: lower,
                        candidate_upper: upper,
                    });
                }
                let lo = minority.iter().copied().fold(lower, f64::min);
                let hi = minority.iter().copied().fold(upper, f64::max);
                (lo, hi, true)
            } else {
                dropped.push(DroppedCandidate {
                    feature,
                    phase,
                    holding_fraction: holding,
                    lower,
                    upper,
                    worst_excursion: worst,
                });
                continue;
            };
            let scope = Scope::Phase(phase);
            per_phase.entry(feature).or_default().insert(
                phase,
                RangeRule {
                    feature,
                    scope,
                    lower: lo,
                    upper: hi,
                    holding_fraction: holding,
                    support,
                    source: RuleSource::Mined,
                    widened,
                    description: describe(feature, scope, lo, hi),
                },
            );
        }
    }

    let phases_present = corpus.phases.len();
    let mut rules = Vec::new();
    for (feature, by_phase) in per_phase {
        let first = by_phase.values().next().expect("non-empty by construction");
        let identical = by_phase.len() == phases_present
            && phases_present > 1
            && by_phase
                .values()
                .all(|r| r.lower == first.lower && r.upper == first.upper);
        if identical {
            let weight = |p: &MissionPhase| corpus.phases[p].transactions.len() as f64;
            let total: f64 = by_phase.keys().map(weight).sum();
            let avg = |get: fn(&RangeRule) -> f64| {
                by_phase.iter().map(|(p, r)| weight(p) * get(r)).sum::<f64>() / total
            };
            rules.push(RangeRule {
                feature,
                scope: Scope::Universal,
                lower: first.lower,
                upper: first.upper,
                holding_fraction: avg(|r| r.holding_fraction),
                support: avg(|r| r.support),
                source: RuleSource::Mined,
                widened: by_phase.values().any(|r| r.widened),
                description: describe(feature, Scope::Universal, first.lower, first.upper),
            });
        } else {
            rules.extend(by_phase.into_values());
        }
    }
    rules.sort_by_key(|r| (r.scope, r.feature));

    MiningReport {
        ruleset: RuleSet {
            min_support: config.min_support,
            holding_threshold: config.holding_threshold,
            rules,
            latency_rule: Some(LatencyRule {
                max_latency_ms: config.max_latency_ms,
            }),
            provenance: Vec::new(),
        },
        itemsets: itemsets.clone(),
        dropped,
        near_misses,
    }
}

/// Discretizes, mines each phase and derives the rule set in one go.
pub fn mine_rules(
    logs: &[PhaseAnnotatedLog],
    provenance: Vec<String>,
    config: &MiningConfig,
) -> Result<MiningReport, RuleError> {
    config.validate()?;
    let corpus = discretize(logs, &config.features, config.bins)?;
    let mut itemsets = BTreeMap::new();
    for (&phase, pt) in &corpus.phases {
        itemsets.insert(
            phase,
            mine_frequent(
                &pt.transactions,
                config.min_support,
                Some(config.max_itemset_len),
            )?,
        );
    }
    let mut report = derive_rules(&itemsets, &corpus, config);
    report.ruleset.provenance = provenance;
    Ok(report)
}
