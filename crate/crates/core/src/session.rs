//! State machine of one experimental session: two 20-round parts, five
//! active players plus one ghost, role randomization, timeouts with
//! disqualification, ghost substitution, and payment computation.

use crate::contagion::{expected_payoff, simulate_round, RoundOutcome};
use crate::equilibrium::enumerate_nash;
use crate::error::{Error, Result};
use crate::graph::{make_environment, ActionProfile, EnvironmentKind, Network};
use crate::params::GameParams;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const TIMEOUT_PENALTY: f64 = 50.0;
pub const TIMEOUT_SECONDS: u32 = 80;
/// Review-phase timer, logged for fidelity; no behavioral consequence.
pub const REVIEW_SECONDS: u32 = 20;
pub const DEFAULT_FINE: f64 = 15.0;
pub const GROUP_SIZE: usize = 5;
/// Five active players plus one ghost.
pub const AGENTS_PER_GROUP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intervention {
    Fine,
    Nudge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Baseline,
    Intervention,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionConfig {
    pub environment: EnvironmentKind,
    pub intervention: Intervention,
    pub rounds_per_part: usize,
    pub params: GameParams<f64>,
    /// Fine level applied in part 2 of Fine sessions.
    pub fine_level: f64,
    /// Seconds each agent waited before the session started (payment input).
    pub waiting_seconds: Vec<u32>,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(environment: EnvironmentKind, intervention: Intervention, seed: u64) -> Self {
        SessionConfig {
            environment,
            intervention,
            rounds_per_part: 20,
            params: GameParams::default_calibration(),
            fine_level: DEFAULT_FINE,
            waiting_seconds: vec![0; AGENTS_PER_GROUP],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds_per_part == 0 {
            return Err(Error::BadSessionConfig("rounds_per_part must be positive".into()));
        }
        if self.params.n != GROUP_SIZE {
            return Err(Error::BadSessionConfig(format!(
                "group size is fixed at {GROUP_SIZE}, params.n = {}",
                self.params.n
            )));
        }
        if self.params.fine != 0.0 {
            return Err(Error::BadSessionConfig(
                "baseline fine must be 0; set fine_level for the intervention".into(),
            ));
        }
        if self.fine_level <= 0.0 {
            return Err(Error::BadSessionConfig("fine_level must be positive".into()));
        }
        if self.waiting_seconds.len() != AGENTS_PER_GROUP {
            return Err(Error::BadSessionConfig(format!(
                "need {AGENTS_PER_GROUP} waiting times, got {}",
                self.waiting_seconds.len()
            )));
        }
        Ok(())
    }

    /// Parameters in force for the given part, per the 2x2 design: the fine
    /// appears only in part 2 of Fine sessions, the nudge flag only in part 2
    /// of Nudge sessions.
    pub fn part_params(&self, part: Part) -> GameParams<f64> {
        let p = self.params.clone().with_fine(0.0).with_nudge(false);
        match (part, self.intervention) {
            (Part::Baseline, _) => p,
            (Part::Intervention, Intervention::Fine) => p.with_fine(self.fine_level),
            (Part::Intervention, Intervention::Nudge) => p.with_nudge(true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BotPolicy {
    /// Plays the prescription for one's position in the canonical (lowest
    /// bit-pattern) pure equilibrium of the current part's game.
    NashRole,
    ScriptedConstant { distance: bool },
    /// Alternates over the agent's own decision sequence.
    ScriptedAlternating { start_distance: bool },
    /// Best-responds to the empirical per-position distancing frequencies of
    /// the others, with probability `epsilon` of a uniform action instead.
    NoisyBestResponse { epsilon: f64 },
    /// Distances with a fixed per-part probability (computed upstream from a
    /// subject's covariates).
    Propensity { baseline: f64, intervention: f64 },
}

/// A policy plus its timeout script: global round indices (1-based across
/// both parts) on which the bot fails to answer within the 80 s limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotSpec {
    pub policy: BotPolicy,
    pub timeout_rounds: Vec<usize>,
}

impl BotSpec {
    pub fn new(policy: BotPolicy) -> Self {
        BotSpec {
            policy,
            timeout_rounds: Vec::new(),
        }
    }

    pub fn with_timeouts(mut self, rounds: Vec<usize>) -> Self {
        self.timeout_rounds = rounds;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    Active,
    Ghost,
    DroppedOut,
    Disqualified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub consecutive_timeouts: usize,
    pub status: AgentStatus,
}

/// Ghost shadow play: resolved against the active players' actions but never
/// fed back into their outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostShadow {
    pub agent: usize,
    pub role: usize,
    pub action_distance: bool,
    pub payoff: f64,
    pub infected: bool,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub part: Part,
    /// 1-based within the part.
    pub round: usize,
    /// Position -> agent id.
    pub roles: Vec<usize>,
    /// Position -> distancing decision actually resolved.
    pub actions: Vec<bool>,
    pub outcome: RoundOutcome,
    pub ghost: Option<GhostShadow>,
}

impl RoundRecord {
    pub fn position_of(&self, agent: usize) -> Option<usize> {
        self.roles.iter().position(|&a| a == agent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionEvent {
    pub part: Part,
    /// Round (1-based within part) from which the ghost plays actively.
    pub round: usize,
    pub removed_agent: usize,
    pub ghost_agent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPayment {
    pub agent: usize,
    pub fixed_yuan: f64,
    pub variable_baseline_yuan: f64,
    pub variable_intervention_yuan: f64,
    pub waiting_yuan: f64,
    pub total_yuan: f64,
    /// Rounds (1-based within part) drawn for payment, per part.
    pub selected_rounds: [Vec<usize>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentRecord {
    pub payments: Vec<AgentPayment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionLog {
    pub config: SessionConfig,
    pub rounds: Vec<RoundRecord>,
    pub substitutions: Vec<SubstitutionEvent>,
    pub agents: Vec<AgentState>,
    /// Set when a second dropout leaves the group without a substitute.
    pub lost: bool,
    pub payments: Option<PaymentRecord>,
}

impl SessionLog {
    pub fn rounds_in(&self, part: Part) -> impl Iterator<Item = &RoundRecord> {
        self.rounds.iter().filter(move |r| r.part == part)
    }

    /// The agent's (role, action) sequence over a part; None when the agent
    /// was not an active decision-maker for the whole part.
    pub fn role_action_sequence(&self, agent: usize, part: Part) -> Option<Vec<(usize, bool)>> {
        let mut seq = Vec::new();
        for rec in self.rounds_in(part) {
            let pos = rec.position_of(agent)?;
            seq.push((pos, rec.actions[pos]));
        }
        if seq.len() == self.config.rounds_per_part {
            Some(seq)
        } else {
            None
        }
    }

    /// Points of an agent in a (part, round), including timeout penalties.
    pub fn points(&self, agent: usize, part: Part, round: usize) -> Option<f64> {
        let rec = self.rounds_in(part).find(|r| r.round == round)?;
        if let Some(pos) = rec.position_of(agent) {
            return Some(rec.outcome.payoffs[pos]);
        }
        match &rec.ghost {
            Some(g) if g.agent == agent => Some(g.payoff),
            _ => None,
        }
    }
}

/// Decision context handed to a policy.
pub struct DecisionContext<'a> {
    pub part: Part,
    pub round: usize,
    pub role: usize,
    pub env: EnvironmentKind,
    pub params: &'a GameParams<f64>,
    pub history: &'a [RoundRecord],
    /// Decisions this agent has already made in the session.
    pub own_decisions: usize,
    /// Canonical equilibrium prescription for the current part.
    pub prescription: &'a ActionProfile,
}

/// Emits the bot's distancing decision.
pub fn policy_decide<R: Rng + ?Sized>(
    policy: &BotPolicy,
    ctx: &DecisionContext,
    rng: &mut R,
) -> bool {
    match policy {
        BotPolicy::NashRole => ctx.prescription.distances(ctx.role),
        BotPolicy::ScriptedConstant { distance } => *distance,
        BotPolicy::ScriptedAlternating { start_distance } => {
            (ctx.own_decisions % 2 == 0) == *start_distance
        }
        BotPolicy::NoisyBestResponse { epsilon } => {
            if *epsilon > 0.0 && rng.gen::<f64>() < *epsilon {
                return rng.gen::<bool>();
            }
            best_response(ctx)
        }
        BotPolicy::Propensity {
            baseline,
            intervention,
        } => {
            let p = match ctx.part {
                Part::Baseline => *baseline,
                Part::Intervention => *intervention,
            };
            rng.gen::<f64>() < p
        }
    }
}

/// Best response to independent per-position empirical frequencies, by exact
/// expected payoff over the 2^(n-1) profiles of the others. Positions with no
/// history default to frequency 1/2.
fn best_response(ctx: &DecisionContext) -> bool {
    let net = make_environment(ctx.env, ctx.params.n).expect("valid environment");
    let n = ctx.params.n;
    let mut freq = vec![0.5f64; n];
    for (j, f) in freq.iter_mut().enumerate() {
        let obs: Vec<bool> = ctx.history.iter().map(|r| r.actions[j]).collect();
        if !obs.is_empty() {
            *f = obs.iter().filter(|&&a| a).count() as f64 / obs.len() as f64;
        }
    }
    let mut value = [0.0f64; 2];
    for others in 0..(1u32 << (n - 1)) {
        let mut weight = 1.0;
        let mut bits = 0u32;
        let mut k = 0;
        for j in 0..n {
            if j == ctx.role {
                continue;
            }
            let on = others & (1 << k) != 0;
            weight *= if on { freq[j] } else { 1.0 - freq[j] };
            if on {
                bits |= 1 << j;
            }
            k += 1;
        }
        if weight == 0.0 {
            continue;
        }
        for (a, val) in value.iter_mut().enumerate() {
            let profile = ActionProfile::from_bits(n, bits | ((a as u32) << ctx.role))
                .expect("profile in range");
            *val += weight
                * expected_payoff(&net, &profile, ctx.params, ctx.role).expect("valid inputs");
        }
    }
    // Distances only on a strict improvement.
    value[1] > value[0]
}

/// Canonical prescription: the pure equilibrium with the lowest bit pattern.
fn canonical_equilibrium(net: &Network, params: &GameParams<f64>) -> Result<ActionProfile> {
    let mut nash = enumerate_nash(net, params)?;
    nash.sort_by_key(|p| p.bits());
    nash.into_iter().next().ok_or(Error::NoPureNash)
}

struct GroupState {
    agents: Vec<AgentState>,
    /// Agent ids currently holding the five active slots.
    active: Vec<usize>,
    ghost: Option<usize>,
    substitutions: Vec<SubstitutionEvent>,
    lost: bool,
}

impl GroupState {
    fn new() -> Self {
        GroupState {
            agents: (0..AGENTS_PER_GROUP)
                .map(|id| AgentState {
                    id,
                    consecutive_timeouts: 0,
                    status: if id < GROUP_SIZE {
                        AgentStatus::Active
                    } else {
                        AgentStatus::Ghost
                    },
                })
                .collect(),
            active: (0..GROUP_SIZE).collect(),
            ghost: Some(GROUP_SIZE),
            substitutions: Vec::new(),
            lost: false,
        }
    }
}

/// Removes a disqualified/dropped agent and promotes the ghost into its slot.
/// Errors with [`Error::NoGhostAvailable`] on a second dropout, which marks
/// the group lost.
fn apply_dropout_inner(
    state: &mut GroupState,
    agent: usize,
    part: Part,
    next_round: usize,
) -> Result<()> {
    let slot = state
        .active
        .iter()
        .position(|&a| a == agent)
        .ok_or_else(|| Error::BadSessionConfig(format!("agent {agent} is not active")))?;
    let ghost = state.ghost.take().ok_or(Error::NoGhostAvailable)?;
    state.active[slot] = ghost;
    state.agents[ghost].status = AgentStatus::Active;
    state.agents[ghost].consecutive_timeouts = 0;
    state.substitutions.push(SubstitutionEvent {
        part,
        round: next_round,
        removed_agent: agent,
        ghost_agent: ghost,
    });
    Ok(())
}

/// Runs the full 2x`rounds_per_part` session. Deterministic in
/// (config, policies): all randomness derives from `config.seed` via
/// independent ChaCha8 streams.
pub fn run_session(config: &SessionConfig, policies: &[BotSpec]) -> Result<SessionLog> {
    config.validate()?;
    if policies.len() != AGENTS_PER_GROUP {
        return Err(Error::BadSessionConfig(format!(
            "need {AGENTS_PER_GROUP} policies, got {}",
            policies.len()
        )));
    }
    let net = make_environment(config.environment, config.params.n)?;
    let mut state = GroupState::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut decisions_made = vec![0usize; AGENTS_PER_GROUP];

    let stream = |id: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(id);
        rng
    };
    let mut roles_rng = stream(0);
    let mut action_rng = stream(1);
    let mut outcome_rng = stream(2);
    let mut shadow_rng = stream(3);

    'parts: for part in [Part::Baseline, Part::Intervention] {
        let params = config.part_params(part);
        let prescription = canonical_equilibrium(&net, &params)?;
        for round in 1..=config.rounds_per_part {
            let global_round = match part {
                Part::Baseline => round,
                Part::Intervention => config.rounds_per_part + round,
            };
            let mut roles = state.active.clone();
            roles.shuffle(&mut roles_rng);
            let ghost_role = state
                .ghost
                .map(|_| roles_rng.gen_range(0..config.params.n));

            let mut actions = vec![false; config.params.n];
            let mut timed_out = vec![false; config.params.n];
            for (pos, &agent) in roles.iter().enumerate() {
                if policies[agent].timeout_rounds.contains(&global_round) {
                    // Unanswered within the 80 s limit: default "no".
                    timed_out[pos] = true;
                    actions[pos] = false;
                    continue;
                }
                let ctx = DecisionContext {
                    part,
                    round,
                    role: pos,
                    env: config.environment,
                    params: &params,
                    history: &rounds,
                    own_decisions: decisions_made[agent],
                    prescription: &prescription,
                };
                actions[pos] = policy_decide(&policies[agent].policy, &ctx, &mut action_rng);
                decisions_made[agent] += 1;
            }

            let profile = ActionProfile::from_actions(&actions)?;
            let mut outcome = simulate_round(&net, &profile, &params, &mut outcome_rng)?;
            for pos in 0..config.params.n {
                if timed_out[pos] {
                    outcome.apply_timeout(pos, TIMEOUT_PENALTY);
                }
            }

            // The ghost plays a shadow round: its action replaces the
            // occupant of its drawn role in a copy of the profile, resolved
            // from an independent stream so active outcomes never depend on
            // the ghost.
            let ghost = match (state.ghost, ghost_role) {
                (Some(g), Some(role)) => {
                    let (shadow_action, g_timeout) =
                        if policies[g].timeout_rounds.contains(&global_round) {
                            (false, true)
                        } else {
                            let ctx = DecisionContext {
                                part,
                                round,
                                role,
                                env: config.environment,
                                params: &params,
                                history: &rounds,
                                own_decisions: decisions_made[g],
                                prescription: &prescription,
                            };
                            let a = policy_decide(&policies[g].policy, &ctx, &mut shadow_rng);
                            decisions_made[g] += 1;
                            (a, false)
                        };
                    let shadow_profile = profile.with(role, shadow_action);
                    let mut shadow =
                        simulate_round(&net, &shadow_profile, &params, &mut shadow_rng)?;
                    if g_timeout {
                        shadow.apply_timeout(role, TIMEOUT_PENALTY);
                    }
                    Some(GhostShadow {
                        agent: g,
                        role,
                        action_distance: shadow_action,
                        payoff: shadow.payoffs[role],
                        infected: shadow.is_infected(role),
                        timed_out: g_timeout,
                    })
                }
                _ => None,
            };

            rounds.push(RoundRecord {
                part,
                round,
                roles: roles.clone(),
                actions,
                outcome,
                ghost,
            });

            // Timeout bookkeeping and disqualification after the round.
            let mut disqualified: Vec<usize> = Vec::new();
            for (pos, &agent) in roles.iter().enumerate() {
                let st = &mut state.agents[agent];
                if timed_out[pos] {
                    st.consecutive_timeouts += 1;
                    if st.consecutive_timeouts >= 3 {
                        st.status = AgentStatus::Disqualified;
                        disqualified.push(agent);
                    }
                } else {
                    st.consecutive_timeouts = 0;
                }
            }
            if let Some(g) = state.ghost {
                let g_timed_out = rounds
                    .last()
                    .and_then(|r| r.ghost.as_ref())
                    .map(|s| s.timed_out)
                    .unwrap_or(false);
                let st = &mut state.agents[g];
                if g_timed_out {
                    st.consecutive_timeouts += 1;
                    if st.consecutive_timeouts >= 3 {
                        st.status = AgentStatus::Disqualified;
                        state.ghost = None;
                    }
                } else {
                    st.consecutive_timeouts = 0;
                }
            }
            for agent in disqualified {
                let (next_part, next_round) = if round < config.rounds_per_part {
                    (part, round + 1)
                } else if part == Part::Baseline {
                    (Part::Intervention, 1)
                } else {
                    (Part::Intervention, config.rounds_per_part + 1)
                };
                match apply_dropout_inner(&mut state, agent, next_part, next_round) {
                    Ok(()) => {}
                    Err(Error::NoGhostAvailable) => {
                        state.lost = true;
                        break 'parts;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    Ok(SessionLog {
        config: config.clone(),
        rounds,
        substitutions: state.substitutions,
        agents: state.agents,
        lost: state.lost,
        payments: None,
    })
}

/// Promotes the ghost into a voluntarily dropping agent's slot outside the
/// timeout path. Used by callers modeling connection loss.
pub fn apply_dropout(log: &mut SessionLog, agent: usize, part: Part, round: usize) -> Result<()> {
    let ghost = log
        .agents
        .iter()
        .find(|a| a.status == AgentStatus::Ghost)
        .map(|a| a.id);
    match ghost {
        Some(g) => {
            for a in log.agents.iter_mut() {
                match a.id {
                    id if id == agent => a.status = AgentStatus::DroppedOut,
                    id if id == g => a.status = AgentStatus::Active,
                    _ => {}
                }
            }
            log.substitutions.push(SubstitutionEvent {
                part,
                round,
                removed_agent: agent,
                ghost_agent: g,
            });
            Ok(())
        }
        None => {
            log.lost = true;
            Err(Error::NoGhostAvailable)
        }
    }
}

/// Converts points to yuan at 50 points per yuan.
pub fn points_to_yuan(points: f64) -> f64 {
    points / 50.0
}

/// Waiting compensation: 0.2 yuan per full 20 s, capped at 5 yuan.
pub fn waiting_yuan(seconds: u32) -> f64 {
    (f64::from(seconds / 20) * 0.2).min(5.0)
}

pub const FIXED_FEE_YUAN: f64 = 5.0;

/// Draws 4 paid rounds per part and settles every agent. Disqualified and
/// dropped-out agents receive nothing.
pub fn compute_payment<R: Rng + ?Sized>(log: &SessionLog, rng: &mut R) -> Result<PaymentRecord> {
    let per_part = log.config.rounds_per_part;
    for part in [Part::Baseline, Part::Intervention] {
        if log.rounds_in(part).count() != per_part {
            return Err(Error::IncompleteLog(format!(
                "{part:?} has {} of {per_part} rounds",
                log.rounds_in(part).count()
            )));
        }
    }
    let draws = 4.min(per_part);
    let mut selected: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for sel in selected.iter_mut() {
        let mut all: Vec<usize> = (1..=per_part).collect();
        all.shuffle(rng);
        all.truncate(draws);
        all.sort_unstable();
        *sel = all;
    }

    let mut payments = Vec::new();
    for agent in &log.agents {
        if matches!(agent.status, AgentStatus::Disqualified | AgentStatus::DroppedOut) {
            payments.push(AgentPayment {
                agent: agent.id,
                fixed_yuan: 0.0,
                variable_baseline_yuan: 0.0,
                variable_intervention_yuan: 0.0,
                waiting_yuan: 0.0,
                total_yuan: 0.0,
                selected_rounds: selected.clone(),
            });
            continue;
        }
        let variable = |part: Part, sel: &[usize]| -> f64 {
            let points: f64 = sel
                .iter()
                .filter_map(|&r| log.points(agent.id, part, r))
                .sum();
            points_to_yuan(points)
        };
        let v1 = variable(Part::Baseline, &selected[0]);
        let v2 = variable(Part::Intervention, &selected[1]);
        let wait = waiting_yuan(log.config.waiting_seconds[agent.id]);
        payments.push(AgentPayment {
            agent: agent.id,
            fixed_yuan: FIXED_FEE_YUAN,
            variable_baseline_yuan: v1,
            variable_intervention_yuan: v2,
            waiting_yuan: wait,
            total_yuan: FIXED_FEE_YUAN + v1 + v2 + wait,
            selected_rounds: selected.clone(),
        });
    }
    Ok(PaymentRecord { payments })
}

/// On-disk JSON-lines form: a header record, one record per round, and a
/// trailer with substitutions, final statuses, and payments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type")]
enum LogLine {
    Header {
        config: SessionConfig,
        review_seconds: u32,
        timeout_seconds: u32,
    },
    Round(RoundRecord),
    Trailer {
        substitutions: Vec<SubstitutionEvent>,
        agents: Vec<AgentState>,
        lost: bool,
        payments: Option<PaymentRecord>,
    },
}

pub fn write_log<W: Write>(log: &SessionLog, mut out: W) -> Result<()> {
    let header = LogLine::Header {
        config: log.config.clone(),
        review_seconds: REVIEW_SECONDS,
        timeout_seconds: TIMEOUT_SECONDS,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for rec in &log.rounds {
        writeln!(out, "{}", serde_json::to_string(&LogLine::Round(rec.clone()))?)?;
    }
    let trailer = LogLine::Trailer {
        substitutions: log.substitutions.clone(),
        agents: log.agents.clone(),
        lost: log.lost,
        payments: log.payments.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&trailer)?)?;
    Ok(())
}

pub fn read_log<R: BufRead>(input: R) -> Result<SessionLog> {
    let mut config = None;
    let mut rounds = Vec::new();
    let mut trailer = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(&line)? {
            LogLine::Header { config: c, .. } => config = Some(c),
            LogLine::Round(r) => rounds.push(r),
            LogLine::Trailer {
                substitutions,
                agents,
                lost,
                payments,
            } => trailer = Some((substitutions, agents, lost, payments)),
        }
    }
    let config = config.ok_or_else(|| Error::IncompleteLog("missing header".into()))?;
    let (substitutions, agents, lost, payments) =
        trailer.ok_or_else(|| Error::IncompleteLog("missing trailer".into()))?;
    Ok(SessionLog {
        config,
        rounds,
        substitutions,
        agents,
        lost,
        payments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::HUB;

    fn fine_star(seed: u64) -> SessionConfig {
        SessionConfig::new(EnvironmentKind::Superspreader, Intervention::Fine, seed)
    }

    fn all_nash() -> Vec<BotSpec> {
        vec![BotSpec::new(BotPolicy::NashRole); AGENTS_PER_GROUP]
    }

    #[test]
    fn replay_determinism() {
        let config = fine_star(11);
        let a = run_session(&config, &all_nash()).unwrap();
        let b = run_session(&config, &all_nash()).unwrap();
        assert_eq!(a.rounds, b.rounds);
        assert_eq!(a.substitutions, b.substitutions);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_log(&a, &mut buf_a).unwrap();
        write_log(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn log_roundtrip() {
        let config = fine_star(3);
        let mut log = run_session(&config, &all_nash()).unwrap();
        let mut pay_rng = ChaCha8Rng::seed_from_u64(99);
        log.payments = Some(compute_payment(&log, &mut pay_rng).unwrap());
        let mut buf = Vec::new();
        write_log(&log, &mut buf).unwrap();
        let back = read_log(&buf[..]).unwrap();
        assert_eq!(back.rounds, log.rounds);
        assert_eq!(back.payments, log.payments);
        assert_eq!(back.lost, log.lost);
    }

    #[test]
    fn nash_bots_in_star_distance_once_per_round() {
        // {hub} is the baseline equilibrium; with fine 15 the canonical
        // equilibrium is still hub-only-or-lowest, so count per round follows
        // the prescription size.
        let config = fine_star(5);
        let log = run_session(&config, &all_nash()).unwrap();
        for rec in log.rounds_in(Part::Baseline) {
            assert_eq!(rec.actions.iter().filter(|&&a| a).count(), 1);
            assert!(rec.actions[HUB]);
        }
    }

    #[test]
    fn structure_and_part_params() {
        let config = fine_star(7);
        let log = run_session(&config, &all_nash()).unwrap();
        assert_eq!(log.rounds.len(), 40);
        assert_eq!(log.rounds_in(Part::Baseline).count(), 20);
        assert_eq!(log.rounds_in(Part::Intervention).count(), 20);
        for rec in &log.rounds {
            assert_eq!(rec.roles.len(), 5);
        }
        assert_eq!(config.part_params(Part::Baseline).fine, 0.0);
        assert_eq!(config.part_params(Part::Intervention).fine, 15.0);
        let nudge = SessionConfig::new(EnvironmentKind::Homogeneous, Intervention::Nudge, 1);
        assert_eq!(nudge.part_params(Part::Intervention).fine, 0.0);
        assert!(nudge.part_params(Part::Intervention).nudge);
        assert!(!nudge.part_params(Part::Baseline).nudge);
    }

    #[test]
    fn timeout_penalty_and_disqualification() {
        let config = fine_star(13);
        let mut policies = all_nash();
        // Agent 2 times out in global rounds 5-7: disqualified at round 7,
        // ghost promoted from round 8.
        policies[2] = BotSpec::new(BotPolicy::NashRole).with_timeouts(vec![5, 6, 7]);
        let log = run_session(&config, &policies).unwrap();
        assert!(!log.lost);
        assert_eq!(log.agents[2].status, AgentStatus::Disqualified);
        assert_eq!(log.agents[5].status, AgentStatus::Active);
        assert_eq!(log.substitutions.len(), 1);
        let sub = &log.substitutions[0];
        assert_eq!(sub.removed_agent, 2);
        assert_eq!(sub.ghost_agent, 5);
        assert_eq!(sub.part, Part::Baseline);
        assert_eq!(sub.round, 8);
        for round in [5usize, 6, 7] {
            let rec = log.rounds_in(Part::Baseline).find(|r| r.round == round).unwrap();
            let pos = rec.position_of(2).unwrap();
            assert!(rec.outcome.timed_out[pos]);
            assert!(!rec.actions[pos], "timeout defaults to no distancing");
            // Penalty applied on top of the contagion payoff.
            let base = if rec.outcome.is_infected(pos) { 0.0 } else { 100.0 };
            assert_eq!(rec.outcome.payoffs[pos], base - TIMEOUT_PENALTY);
        }
        for rec in log.rounds.iter() {
            let after = rec.part == Part::Intervention || rec.round >= 8;
            assert_eq!(rec.position_of(5).is_some(), after);
            assert!(rec.position_of(2).is_some() != after);
            assert_eq!(rec.ghost.is_some(), !after);
        }
    }

    #[test]
    fn nonconsecutive_timeouts_do_not_disqualify() {
        let config = fine_star(17);
        let mut policies = all_nash();
        policies[0] = BotSpec::new(BotPolicy::NashRole).with_timeouts(vec![2, 4, 6, 9]);
        let log = run_session(&config, &policies).unwrap();
        assert_eq!(log.agents[0].status, AgentStatus::Active);
        assert!(log.substitutions.is_empty());
    }

    #[test]
    fn second_dropout_loses_group() {
        let config = fine_star(19);
        let mut policies = all_nash();
        policies[1] = BotSpec::new(BotPolicy::NashRole).with_timeouts(vec![3, 4, 5]);
        policies[4] = BotSpec::new(BotPolicy::NashRole).with_timeouts(vec![10, 11, 12]);
        let log = run_session(&config, &policies).unwrap();
        assert!(log.lost);
        assert_eq!(log.agents[1].status, AgentStatus::Disqualified);
        assert_eq!(log.agents[4].status, AgentStatus::Disqualified);
        assert!(log.rounds.len() < 40);
    }

    #[test]
    fn ghost_neutrality_before_substitution() {
        // Same seed, ghost policy swapped out entirely: active-player rounds
        // must be bit-identical because the ghost's shadow never feeds back.
        let config = fine_star(23);
        let mut a = all_nash();
        a[5] = BotSpec::new(BotPolicy::ScriptedConstant { distance: true });
        let mut b = all_nash();
        b[5] = BotSpec::new(BotPolicy::ScriptedConstant { distance: false });
        let log_a = run_session(&config, &a).unwrap();
        let log_b = run_session(&config, &b).unwrap();
        for (ra, rb) in log_a.rounds.iter().zip(&log_b.rounds) {
            assert_eq!(ra.roles, rb.roles);
            assert_eq!(ra.actions, rb.actions);
            assert_eq!(ra.outcome, rb.outcome);
        }
    }

    #[test]
    fn fine_accounting_in_part_two() {
        // In Fine sessions every part-2 non-distancing round costs exactly 15
        // more than the part-1 formula, infected or not.
        let config = fine_star(29);
        let log = run_session(&config, &all_nash()).unwrap();
        for rec in log.rounds_in(Part::Intervention) {
            for pos in 0..5 {
                if rec.outcome.timed_out[pos] {
                    continue;
                }
                let healthy = !rec.outcome.is_infected(pos);
                let base = if healthy { 100.0 } else { 0.0 };
                let expected = if rec.actions[pos] {
                    base - 35.0
                } else {
                    base - 15.0
                };
                assert_eq!(rec.outcome.payoffs[pos], expected);
            }
        }
    }

    #[test]
    fn payment_conversion_examples() {
        assert_eq!(points_to_yuan(260.0), 5.2);
        assert_eq!(points_to_yuan(300.0), 6.0);
        assert_eq!(waiting_yuan(0), 0.0);
        assert_eq!(waiting_yuan(39), 0.2);
        assert_eq!(waiting_yuan(40), 0.4);
        assert_eq!(waiting_yuan(10_000), 5.0);
    }

    #[test]
    fn payment_decomposition() {
        let mut config = fine_star(31);
        config.waiting_seconds = vec![0, 20, 45, 600, 0, 0];
        let log = run_session(&config, &all_nash()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pay = compute_payment(&log, &mut rng).unwrap();
        for p in &pay.payments {
            assert_eq!(p.selected_rounds[0].len(), 4);
            assert_eq!(p.selected_rounds[1].len(), 4);
            let expect_v1: f64 = p.selected_rounds[0]
                .iter()
                .filter_map(|&r| log.points(p.agent, Part::Baseline, r))
                .sum::<f64>()
                / 50.0;
            assert!((p.variable_baseline_yuan - expect_v1).abs() < 1e-12);
            assert!(
                (p.total_yuan
                    - (p.fixed_yuan
                        + p.variable_baseline_yuan
                        + p.variable_intervention_yuan
                        + p.waiting_yuan))
                    .abs()
                    < 1e-12
            );
        }
        assert_eq!(pay.payments[1].waiting_yuan, 0.2);
        assert_eq!(pay.payments[3].waiting_yuan, 5.0);
    }

    #[test]
    fn disqualified_agents_paid_nothing() {
        let config = fine_star(37);
        let mut policies = all_nash();
        policies[0] = BotSpec::new(BotPolicy::NashRole).with_timeouts(vec![1, 2, 3]);
        let log = run_session(&config, &policies).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pay = compute_payment(&log, &mut rng).unwrap();
        assert_eq!(pay.payments[0].total_yuan, 0.0);
        assert!(pay.payments[1].total_yuan >= 5.0 - 1e-12 || pay.payments[1].total_yuan < 5.0);
    }

    #[test]
    fn incomplete_log_rejected() {
        let config = fine_star(41);
        let mut log = run_session(&config, &all_nash()).unwrap();
        log.rounds.truncate(25);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            compute_payment(&log, &mut rng),
            Err(Error::IncompleteLog(_))
        ));
    }

    #[test]
    fn scripted_and_alternating_policies() {
        let net_params: GameParams<f64> = GameParams::default_calibration();
        let presc = ActionProfile::from_bits(5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for own in 0..4 {
            let ctx = DecisionContext {
                part: Part::Baseline,
                round: own + 1,
                role: 2,
                env: EnvironmentKind::Homogeneous,
                params: &net_params,
                history: &[],
                own_decisions: own,
                prescription: &presc,
            };
            assert!(policy_decide(
                &BotPolicy::ScriptedConstant { distance: true },
                &ctx,
                &mut rng
            ));
            let alt = policy_decide(
                &BotPolicy::ScriptedAlternating { start_distance: true },
                &ctx,
                &mut rng,
            );
            assert_eq!(alt, own % 2 == 0);
        }
    }

    #[test]
    fn best_response_matches_payoff_comparison() {
        // K_5, three others always distancing: staying out pays 67 > 55.
        let params: GameParams<f64> = GameParams::default_calibration();
        let presc = ActionProfile::from_bits(5, 0b00111).unwrap();
        let history: Vec<RoundRecord> = (1..=5)
            .map(|round| {
                let actions = vec![true, true, true, false, false];
                RoundRecord {
                    part: Part::Baseline,
                    round,
                    roles: vec![0, 1, 2, 3, 4],
                    actions: actions.clone(),
                    outcome: RoundOutcome {
                        patient_zero: 0,
                        infected: vec![],
                        payoffs: vec![0.0; 5],
                        timed_out: vec![false; 5],
                    },
                    ghost: None,
                }
            })
            .collect();
        let ctx = DecisionContext {
            part: Part::Baseline,
            round: 6,
            role: 3,
            env: EnvironmentKind::Homogeneous,
            params: &params,
            history: &history,
            own_decisions: 5,
            prescription: &presc,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(!policy_decide(
            &BotPolicy::NoisyBestResponse { epsilon: 0.0 },
            &ctx,
            &mut rng
        ));
    }

    #[test]
    fn propensity_policy_rates() {
        let params: GameParams<f64> = GameParams::default_calibration();
        let presc = ActionProfile::from_bits(5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = BotPolicy::Propensity {
            baseline: 1.0,
            intervention: 0.0,
        };
        for part in [Part::Baseline, Part::Intervention] {
            let ctx = DecisionContext {
                part,
                round: 1,
                role: 0,
                env: EnvironmentKind::Homogeneous,
                params: &params,
                history: &[],
                own_decisions: 0,
                prescription: &presc,
            };
            let a = policy_decide(&policy, &ctx, &mut rng);
            assert_eq!(a, part == Part::Baseline);
        }
    }

    #[test]
    fn voluntary_dropout_path() {
        let config = fine_star(43);
        let mut log = run_session(&config, &all_nash()).unwrap();
        apply_dropout(&mut log, 3, Part::Baseline, 8).unwrap();
        assert_eq!(log.agents[3].status, AgentStatus::DroppedOut);
        assert_eq!(log.agents[5].status, AgentStatus::Active);
        // Second dropout: no ghost left.
        assert!(matches!(
            apply_dropout(&mut log, 4, Part::Baseline, 12),
            Err(Error::NoGhostAvailable)
        ));
        assert!(log.lost);
    }

    #[test]
    fn bad_configs_rejected() {
        let mut config = fine_star(1);
        config.rounds_per_part = 0;
        assert!(config.validate().is_err());
        let mut config = fine_star(1);
        config.params.fine = 15.0;
        assert!(config.validate().is_err());
        let config = fine_star(1);
        assert!(run_session(&config, &all_nash()[..4].to_vec()).is_err());
    }
}
