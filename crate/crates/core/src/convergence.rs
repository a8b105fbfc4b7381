//! Stable-strategy detection: a subject has converged by round n when some
//! strategy matches their last k decisions and is violated by at most a
//! consecutive deviations afterwards.

use crate::error::{Error, Result};
use crate::graph::{EnvironmentKind, HUB};
use crate::session::{Intervention, Part, SessionLog};
use serde::{Deserialize, Serialize};

/// Strategy families checked against a subject's (role, action) sequence.
/// The two role-dependent families only make sense when roles differ, i.e.
/// in the superspreader environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategySpec {
    /// Same action in every round.
    ConstantAction { distance: bool },
    /// One action as hub, the complement as recipient.
    RoleConstant { hub_distance: bool },
    /// Constant as hub; as recipient, alternates over the subject's own
    /// recipient-round subsequence (hub rounds do not break the alternation).
    HubConstantRecipientAlternating { hub_distance: bool },
}

impl StrategySpec {
    fn star_only(&self) -> bool {
        !matches!(self, StrategySpec::ConstantAction { .. })
    }

    /// Fixed tie-break order: ConstantAction < RoleConstant <
    /// HubConstantRecipientAlternating, distance-first within each family.
    pub fn candidates(env: EnvironmentKind) -> Vec<StrategySpec> {
        let mut all = vec![
            StrategySpec::ConstantAction { distance: true },
            StrategySpec::ConstantAction { distance: false },
        ];
        if env == EnvironmentKind::Superspreader {
            all.extend([
                StrategySpec::RoleConstant { hub_distance: true },
                StrategySpec::RoleConstant { hub_distance: false },
                StrategySpec::HubConstantRecipientAlternating { hub_distance: true },
                StrategySpec::HubConstantRecipientAlternating { hub_distance: false },
            ]);
        }
        all
    }

    /// Per-round adherence indicators. For the alternating family the
    /// prescription at a recipient round is the complement of the action at
    /// the previous recipient round, whatever that action was; the first
    /// recipient round always adheres.
    pub fn matches(&self, seq: &[(usize, bool)]) -> Vec<bool> {
        match *self {
            StrategySpec::ConstantAction { distance } => {
                seq.iter().map(|&(_, a)| a == distance).collect()
            }
            StrategySpec::RoleConstant { hub_distance } => seq
                .iter()
                .map(|&(role, a)| a == (if role == HUB { hub_distance } else { !hub_distance }))
                .collect(),
            StrategySpec::HubConstantRecipientAlternating { hub_distance } => {
                let mut out = Vec::with_capacity(seq.len());
                let mut prev_recipient: Option<bool> = None;
                for &(role, a) in seq {
                    if role == HUB {
                        out.push(a == hub_distance);
                    } else {
                        out.push(match prev_recipient {
                            Some(p) => a != p,
                            None => true,
                        });
                        prev_recipient = Some(a);
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub converged: bool,
    /// Earliest qualifying round (1-based), at least k.
    pub round_n: Option<usize>,
    pub strategy: Option<StrategySpec>,
}

/// Earliest round n at which `matches` has a clean k-window ending at n and
/// no run of consecutive mismatches longer than a afterwards. Runs truncated
/// by the end of the sequence still count against a.
fn earliest_round(matches: &[bool], k: usize, a: usize) -> Option<usize> {
    let t = matches.len();
    // suffix_ok[i]: no >a mismatch run within matches[i..].
    let mut suffix_ok = vec![true; t + 1];
    let mut run = 0usize;
    for i in (0..t).rev() {
        run = if matches[i] { 0 } else { run + 1 };
        suffix_ok[i] = run <= a && suffix_ok[i + 1];
    }
    let mut clean = 0usize;
    for (i, &m) in matches.iter().enumerate() {
        clean = if m { clean + 1 } else { 0 };
        if clean >= k && suffix_ok[i + 1] {
            return Some(i + 1);
        }
    }
    None
}

/// Applies Definition 1 to one part's (role, action) sequence. Ties across
/// strategies break by earliest round, then candidate order.
pub fn detect_convergence(
    seq: &[(usize, bool)],
    k: usize,
    a: usize,
    env: EnvironmentKind,
) -> Result<ConvergenceResult> {
    if seq.is_empty() || k == 0 || k > seq.len() {
        return Err(Error::BadSequenceLength {
            got: seq.len(),
            expected: k.max(1),
        });
    }
    let mut best: Option<(usize, StrategySpec)> = None;
    for spec in StrategySpec::candidates(env) {
        if let Some(n) = earliest_round(&spec.matches(seq), k, a) {
            if best.map_or(true, |(bn, _)| n < bn) {
                best = Some((n, spec));
            }
        }
    }
    Ok(match best {
        Some((n, s)) => ConvergenceResult {
            converged: true,
            round_n: Some(n),
            strategy: Some(s),
        },
        None => ConvergenceResult {
            converged: false,
            round_n: None,
            strategy: None,
        },
    })
}

/// All (strategy, earliest round) pairs that qualify, in candidate order.
pub fn qualifying_strategies(
    seq: &[(usize, bool)],
    k: usize,
    a: usize,
    env: EnvironmentKind,
) -> Result<Vec<(StrategySpec, usize)>> {
    if seq.is_empty() || k == 0 || k > seq.len() {
        return Err(Error::BadSequenceLength {
            got: seq.len(),
            expected: k.max(1),
        });
    }
    Ok(StrategySpec::candidates(env)
        .into_iter()
        .filter_map(|s| earliest_round(&s.matches(seq), k, a).map(|n| (s, n)))
        .collect())
}

/// Validates env/strategy compatibility for externally supplied specs.
pub fn check_strategy_env(spec: &StrategySpec, env: EnvironmentKind) -> Result<()> {
    if spec.star_only() && env != EnvironmentKind::Superspreader {
        return Err(Error::StarOnlyStrategy(format!("{spec:?}")));
    }
    Ok(())
}

/// One stratum of the cohort convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub environment: EnvironmentKind,
    pub intervention: Intervention,
    pub part: Part,
    pub n_subjects: usize,
    pub pct_converged: f64,
    /// First round by which more than 70% of subjects had converged.
    pub first_round_above_70pct: Option<usize>,
    pub pct_converged_by_round_11: f64,
}

/// Per-(environment, intervention, part) convergence statistics over all
/// subjects who were active decision-makers for the whole part. Empty strata
/// are omitted.
pub fn cohort_convergence_table(
    logs: &[SessionLog],
    k: usize,
    a: usize,
) -> Result<Vec<ConvergenceRow>> {
    if logs.is_empty() {
        return Err(Error::Other("no session logs supplied".into()));
    }
    let mut rows = Vec::new();
    for env in [EnvironmentKind::Homogeneous, EnvironmentKind::Superspreader] {
        for intervention in [Intervention::Fine, Intervention::Nudge] {
            for part in [Part::Baseline, Part::Intervention] {
                let mut rounds_converged: Vec<Option<usize>> = Vec::new();
                for log in logs
                    .iter()
                    .filter(|l| l.config.environment == env && l.config.intervention == intervention)
                {
                    for agent in &log.agents {
                        let Some(seq) = log.role_action_sequence(agent.id, part) else {
                            continue;
                        };
                        let res = detect_convergence(&seq, k, a, env)?;
                        rounds_converged.push(res.round_n);
                    }
                }
                if rounds_converged.is_empty() {
                    continue;
                }
                let n = rounds_converged.len();
                let by = |cutoff: usize| {
                    rounds_converged
                        .iter()
                        .filter(|r| r.map_or(false, |rn| rn <= cutoff))
                        .count() as f64
                        / n as f64
                };
                let horizon = logs[0].config.rounds_per_part;
                let first_above = (1..=horizon).find(|&r| by(r) > 0.7);
                rows.push(ConvergenceRow {
                    environment: env,
                    intervention,
                    part,
                    n_subjects: n,
                    pct_converged: by(horizon),
                    first_round_above_70pct: first_above,
                    pct_converged_by_round_11: by(11),
                });
            }
        }
    }
    Ok(rows)
}
