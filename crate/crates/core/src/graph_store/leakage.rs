//! Pre-distillation leakage verification.
//!
//! Checks run in order: remap into the overlap index space, deduplication,
//! range check, endpoint containment in the training-node set, and (for edge
//! hold-out, where every drug is a training node) absence of any held-out
//! pair. Failures are recorded, never raised; callers decide whether to abort.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{undirected, SplitPlan, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeakageCheck {
    Remap,
    Dedup,
    Range,
    EndpointContainment,
    HeldOutPair,
}

impl fmt::Display for LeakageCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LeakageCheck::Remap => "remap",
            LeakageCheck::Dedup => "dedup",
            LeakageCheck::Range => "range",
            LeakageCheck::EndpointContainment => "endpoint-containment",
            LeakageCheck::HeldOutPair => "held-out-pair",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageCheckResult {
    pub check: LeakageCheck,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub checks: Vec<LeakageCheckResult>,
    /// Items that failed remap, range or endpoint checks. Unlabelled pairs use relation `u32::MAX`.
    pub offending: Vec<Triple>,
    pub duplicates_removed: usize,
    /// Number of distinct KD items after deduplication.
    pub checked: usize,
}

impl LeakageReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, which: LeakageCheck) -> Option<&LeakageCheckResult> {
        self.checks.iter().find(|c| c.check == which)
    }

    /// Merges two reports check by check.
    pub fn merge(mut self, other: LeakageReport) -> LeakageReport {
        for c in other.checks {
            match self.checks.iter_mut().find(|x| x.check == c.check) {
                Some(x) => {
                    x.passed &= c.passed;
                    x.detail = format!("{}; {}", x.detail, c.detail);
                }
                None => self.checks.push(c),
            }
        }
        self.offending.extend(other.offending);
        self.duplicates_removed += other.duplicates_removed;
        self.checked += other.checked;
        self
    }

    pub fn summary(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{}: {}", c.check, if c.passed { "OK" } else { "FAIL" }))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Verifies a KD edge set against `plan`, with every drug in the overlap space.
pub fn verify_no_leakage(plan: &SplitPlan, kd_edges: &[Triple]) -> LeakageReport {
    verify_no_leakage_in_overlap(plan, kd_edges, None)
}

/// As [`verify_no_leakage`], restricting the remap target to drugs flagged in `overlap`
/// (for instance, drugs that have both a KG embedding and a feature vector).
pub fn verify_no_leakage_in_overlap(
    plan: &SplitPlan,
    kd_edges: &[Triple],
    overlap: Option<&[bool]>,
) -> LeakageReport {
    let items = kd_edges.iter().map(|t| (t.head, Some(t.relation), t.tail));
    run_checks(plan, items, overlap)
}

/// Verifies unlabelled KD pairs (negatives or extra teacher-scored pairs).
pub fn verify_kd_pairs(
    plan: &SplitPlan,
    pairs: &[(u32, u32)],
    overlap: Option<&[bool]>,
) -> LeakageReport {
    let items = pairs.iter().map(|&(h, t)| (h, None, t));
    run_checks(plan, items, overlap)
}

fn run_checks(
    plan: &SplitPlan,
    items: impl Iterator<Item = (u32, Option<u32>, u32)>,
    overlap: Option<&[bool]>,
) -> LeakageReport {
    let num_drugs = plan.num_drugs();
    let num_relations = plan.num_relations();
    let as_triple = |(h, r, t): (u32, Option<u32>, u32)| Triple::new(h, r.unwrap_or(u32::MAX), t);
    let mut offending = Vec::new();

    // 1. remap: every endpoint must have an index in the overlap space.
    let items: Vec<_> = items.collect();
    let in_overlap = |d: u32| match overlap {
        Some(mask) => mask.get(d as usize).copied().unwrap_or(false),
        None => (d as usize) < num_drugs,
    };
    let mut unmapped = 0usize;
    for &it in &items {
        if !in_overlap(it.0) || !in_overlap(it.2) {
            unmapped += 1;
            offending.push(as_triple(it));
        }
    }

    // 2. dedup.
    let mut seen = HashSet::with_capacity(items.len());
    let unique: Vec<_> = items.iter().copied().filter(|it| seen.insert(*it)).collect();
    let duplicates_removed = items.len() - unique.len();

    // 3. range.
    let mut out_of_range = 0usize;
    for &it in &unique {
        let (h, r, t) = it;
        let bad = h as usize >= num_drugs
            || t as usize >= num_drugs
            || r.is_some_and(|r| r as usize >= num_relations);
        if bad {
            out_of_range += 1;
            if !offending.contains(&as_triple(it)) {
                offending.push(as_triple(it));
            }
        }
    }

    // 4. both endpoints inside the training-node set.
    let mut escaped = 0usize;
    for &it in &unique {
        if !plan.is_train_node(it.0) || !plan.is_train_node(it.2) {
            escaped += 1;
            if !offending.contains(&as_triple(it)) {
                offending.push(as_triple(it));
            }
        }
    }

    // 5. no KD pair coincides with a validation or test pair, in either direction.
    let held_out: HashSet<(u32, u32)> = plan
        .valid_edges
        .iter()
        .chain(plan.test_edges.iter())
        .map(Triple::undirected_pair)
        .collect();
    let mut overlapping = 0usize;
    for &it in &unique {
        if held_out.contains(&undirected(it.0, it.2)) {
            overlapping += 1;
            if !offending.contains(&as_triple(it)) {
                offending.push(as_triple(it));
            }
        }
    }

    let checks = vec![
        LeakageCheckResult {
            check: LeakageCheck::Remap,
            passed: unmapped == 0,
            detail: format!("{unmapped} items outside the overlap index space"),
        },
        LeakageCheckResult {
            check: LeakageCheck::Dedup,
            passed: true,
            detail: format!("{duplicates_removed} duplicates removed"),
        },
        LeakageCheckResult {
            check: LeakageCheck::Range,
            passed: out_of_range == 0,
            detail: format!("{out_of_range} items out of range"),
        },
        LeakageCheckResult {
            check: LeakageCheck::EndpointContainment,
            passed: escaped == 0,
            detail: format!("{escaped} items with an endpoint outside the training nodes"),
        },
        LeakageCheckResult {
            check: LeakageCheck::HeldOutPair,
            passed: overlapping == 0,
            detail: format!("{overlapping} items on a held-out pair"),
        },
    ];
    LeakageReport {
        checks,
        offending,
        duplicates_removed,
        checked: unique.len(),
    }
}
