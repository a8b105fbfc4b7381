//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line (visible with `--nocapture` or on failure).

use distlab_core::cohort::{bret_optimal_boxes, classify_angle, SvoCategory};
use distlab_core::contagion::{
    infection_probability_exact, infection_probability_given_seed, infection_probability_mc,
};
use distlab_core::convergence::{detect_convergence, StrategySpec};
use distlab_core::econ::{
    average_marginal_effects, fit_binary_mle, fit_lpm_cluster, subgroup_effects,
    ClusterCorrection, Link, PanelDataset, PanelRow,
};
use distlab_core::equilibrium::{
    all_nash_have_size, corrective_fine_interval, enumerate_nash, predicted_uptake, social_optima,
};
use distlab_core::graph::{make_environment, ActionProfile, EnvironmentKind, Network};
use distlab_core::params::GameParams;
use distlab_core::scalar::Scalar;
use distlab_core::session::{
    points_to_yuan, run_session, AgentStatus, BotPolicy, BotSpec, Intervention, Part,
    SessionConfig, AGENTS_PER_GROUP,
};
use distlab_core::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn rat(num: i64, den: i64) -> Rational {
    Rational::from_ratio(num, den)
}

fn exact_params() -> GameParams<Rational> {
    GameParams::default_calibration()
}

fn bits_set(profiles: &[ActionProfile]) -> Vec<u32> {
    let mut bits: Vec<u32> = profiles.iter().map(|p| p.bits()).collect();
    bits.sort_unstable();
    bits
}

#[test]
fn criterion_1_equilibrium_reproduction() {
    let start = Instant::now();
    let params = exact_params();
    let k5 = make_environment(EnvironmentKind::Homogeneous, 5).unwrap();
    let star = make_environment(EnvironmentKind::Superspreader, 5).unwrap();

    // All 10 size-3 subsets of {0..4}.
    let size3: Vec<u32> = (0u32..32).filter(|b| b.count_ones() == 3).collect();
    let size4: Vec<u32> = (0u32..32).filter(|b| b.count_ones() == 4).collect();

    let k5_nash = enumerate_nash(&k5, &params).unwrap();
    let star_nash = enumerate_nash(&star, &params).unwrap();
    let k5_opt = social_optima(&k5, &params).unwrap();
    let star_opt = social_optima(&star, &params).unwrap();

    let ok = bits_set(&k5_nash) == size3
        && predicted_uptake(&k5, &params).unwrap() == rat(3, 5)
        && bits_set(&star_nash) == vec![0b00001]
        && predicted_uptake(&star, &params).unwrap() == rat(1, 5)
        && bits_set(&k5_opt) == size4
        && bits_set(&star_opt) == vec![0b00001]
        && start.elapsed().as_secs_f64() < 1.0;
    report(
        1,
        ok,
        &format!(
            "K5 NE {} size-3 uptake 3/5, star NE unique hub uptake 1/5, optima 5x size-4 / hub, {:.3}s",
            k5_nash.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_fine_calibration_and_nudge_neutrality() {
    let start = Instant::now();
    let params = exact_params();
    let k5 = make_environment(EnvironmentKind::Homogeneous, 5).unwrap();
    let star = make_environment(EnvironmentKind::Superspreader, 5).unwrap();

    let iv = corrective_fine_interval(&k5, &params, &all_nash_have_size(4)).unwrap();
    let interval_ok = iv.lo == rat(12, 1)
        && iv.lo_closed
        && iv.hi == rat(25, 1)
        && !iv.hi_closed
        && rat(15, 1) >= iv.lo
        && rat(15, 1) < iv.hi;

    let mut nudge_ok = true;
    for net in [&k5, &star] {
        for f in [0i64, 3, 5, 12, 15, 24, 25, 40] {
            let base = params.clone().with_fine(Rational::from_int(f));
            let plain = enumerate_nash(net, &base).unwrap();
            let nudged = enumerate_nash(net, &base.with_nudge(true)).unwrap();
            nudge_ok &= bits_set(&plain) == bits_set(&nudged);
        }
    }
    report(
        2,
        interval_ok && nudge_ok && start.elapsed().as_secs_f64() < 1.0,
        &format!(
            "fine interval [12, 25) contains 15; nudge bit-identity over 16 solves; {:.3}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_3_worked_probability() {
    // Instructions network: M-P, M-E, P-C; E and Q distance; seed C,
    // target M: two alpha hops, (13/20)^2 = 0.4225 exactly.
    let mut net = Network::empty(5).unwrap();
    net.add_edge(3, 0).unwrap();
    net.add_edge(3, 1).unwrap();
    net.add_edge(0, 2).unwrap();
    let profile = ActionProfile::from_actions(&[false, true, false, false, true]).unwrap();
    let p = infection_probability_given_seed(&net, &profile, &exact_params(), 3, 2).unwrap();
    report(
        3,
        p == rat(4225, 10000) && p.as_f64() == 0.4225,
        &format!("P(M infected | seed C) = {p} = 0.4225 exactly"),
    );
}

#[test]
fn criterion_4_mc_matches_exact() {
    let start = Instant::now();
    let params: GameParams<f64> = GameParams::default_calibration();
    let exact_params = exact_params();
    let reps = 100_000usize;
    let mut cells = 0usize;
    let mut outliers = 0usize;
    for kind in [EnvironmentKind::Homogeneous, EnvironmentKind::Superspreader] {
        let net = make_environment(kind, 5).unwrap();
        for bits in 0u32..32 {
            let profile = ActionProfile::from_bits(5, bits).unwrap();
            let exact = infection_probability_exact(&net, &profile, &exact_params).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + u64::from(bits));
            let mc = infection_probability_mc(&net, &profile, &params, reps, &mut rng).unwrap();
            for i in 0..5 {
                let p = exact.p[i].as_f64();
                let se = (p * (1.0 - p) / reps as f64).sqrt();
                cells += 1;
                if se > 0.0 && (mc.freq[i] - p).abs() > 3.0 * se {
                    outliers += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        4,
        outliers * 20 <= cells && elapsed < 60.0,
        &format!("{outliers}/{cells} cells outside 3 s.e. (cap 5%), {elapsed:.1}s"),
    );
}

#[test]
fn criterion_5_protocol_arithmetic() {
    let conversions = points_to_yuan(260.0) == 5.2 && points_to_yuan(300.0) == 6.0;

    let config = SessionConfig::new(EnvironmentKind::Superspreader, Intervention::Fine, 13);
    let nash = vec![BotSpec::new(BotPolicy::NashRole); AGENTS_PER_GROUP];
    let mut policies = nash.clone();
    policies[2] = BotSpec::new(BotPolicy::NashRole).with_timeouts(vec![5, 6, 7]);
    let log = run_session(&config, &policies).unwrap();
    let disqualified = log.agents[2].status == AgentStatus::Disqualified
        && log.agents[5].status == AgentStatus::Active
        && log.substitutions.len() == 1
        && log.substitutions[0].round == 8;
    // 5 active decision-makers in every round, before and after substitution.
    let five_active = log.rounds.iter().all(|r| r.roles.len() == 5);

    // Ghost neutrality: swapping the ghost's policy changes nothing in the
    // active rounds before substitution.
    let config_n = SessionConfig::new(EnvironmentKind::Superspreader, Intervention::Fine, 23);
    let mut a = nash.clone();
    a[5] = BotSpec::new(BotPolicy::ScriptedConstant { distance: true });
    let mut b = nash;
    b[5] = BotSpec::new(BotPolicy::ScriptedConstant { distance: false });
    let log_a = run_session(&config_n, &a).unwrap();
    let log_b = run_session(&config_n, &b).unwrap();
    let neutral = log_a
        .rounds
        .iter()
        .zip(&log_b.rounds)
        .all(|(ra, rb)| ra.roles == rb.roles && ra.actions == rb.actions && ra.outcome == rb.outcome);

    report(
        5,
        conversions && disqualified && five_active && neutral,
        "260 -> 5.2, 300 -> 6.0; 3 consecutive timeouts disqualify; ghost substitution neutral",
    );
}

#[test]
fn criterion_6_convergence_procedure() {
    // Perfect adherence: converged at round k with ConstantAction(distance).
    let all_distance: Vec<(usize, bool)> = (0..20).map(|i| (i % 5, true)).collect();
    let r = detect_convergence(&all_distance, 4, 2, EnvironmentKind::Homogeneous).unwrap();
    let ex1 = r.converged
        && r.round_n == Some(4)
        && r.strategy == Some(StrategySpec::ConstantAction { distance: true });
    // Earliest reportable round equals k for every k.
    let earliest = (1..=6).all(|k| {
        detect_convergence(&all_distance, k, 2, EnvironmentKind::Homogeneous)
            .unwrap()
            .round_n
            == Some(k)
    });

    // Distance 1-11, no-distance 12-14, distance 15-20, k=4, a=2 -> round 18.
    let blocked: Vec<(usize, bool)> = (1..=20)
        .map(|round| (round % 5, !(12..=14).contains(&round)))
        .collect();
    let r2 = detect_convergence(&blocked, 4, 2, EnvironmentKind::Homogeneous).unwrap();
    let ex2 = r2.converged && r2.round_n == Some(18);

    // Star: distance as hub, alternate as recipient.
    let mut alternating = Vec::new();
    let mut next_recipient = true;
    for i in 0..20 {
        if i % 2 == 0 {
            alternating.push((0usize, true));
        } else {
            alternating.push((1usize, next_recipient));
            next_recipient = !next_recipient;
        }
    }
    let r3 = detect_convergence(&alternating, 4, 2, EnvironmentKind::Superspreader).unwrap();
    let ex3 = r3.converged
        && r3.strategy
            == Some(StrategySpec::HubConstantRecipientAlternating { hub_distance: true });

    // Monotonicity in a over a 500-subject scripted cohort: subject s ends
    // the part with a terminal deviation run of length s % 4, which only the
    // tail rule can excuse.
    let mut shares = Vec::new();
    for a in [1usize, 2, 3] {
        let converged = (0..500)
            .filter(|s| {
                let run = s % 4;
                let seq: Vec<(usize, bool)> = (1..=20)
                    .map(|round| (round % 5, round <= 20 - run))
                    .collect();
                detect_convergence(&seq, 4, a, EnvironmentKind::Homogeneous)
                    .unwrap()
                    .converged
            })
            .count();
        shares.push(converged as f64 / 500.0);
    }
    let monotone = shares[0] <= shares[1] && shares[1] <= shares[2] && shares[0] < shares[2];

    report(
        6,
        ex1 && earliest && ex2 && ex3 && monotone,
        &format!(
            "Definition-1 examples exact; earliest round = k; shares by a {:?}",
            shares
        ),
    );
}

/// 83 groups x 5 subjects x 2 parts x 10 kept rounds, group shocks, DGP
/// coefficients from the main calibration column.
fn dgp_true() -> [(&'static str, f64); 4] {
    [
        ("fine", 0.0343),
        ("nudge", 0.0603),
        ("superspreader", -0.0494),
        ("hubei", 0.0852),
    ]
}

fn dgp_panel(seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = dgp_true();
    let mut rows = Vec::new();
    for g in 0..83usize {
        let fine_arm = g % 2 == 0;
        let star = (g / 2) % 2 == 0;
        let shock = 0.02 * normal(&mut rng);
        for s in 0..5usize {
            let sid = g * 5 + s;
            let hubei = rng.gen::<f64>() < 0.49;
            for part in [Part::Baseline, Part::Intervention] {
                let fine = part == Part::Intervention && fine_arm;
                let nudge = part == Part::Intervention && !fine_arm;
                for round in 11..=20usize {
                    let b = |v: bool| if v { 1.0 } else { 0.0 };
                    let p = (0.55
                        + truth[0].1 * b(fine)
                        + truth[1].1 * b(nudge)
                        + truth[2].1 * b(star)
                        + truth[3].1 * b(hubei)
                        + shock)
                        .clamp(0.01, 0.99);
                    let y = b(rng.gen::<f64>() < p);
                    rows.push(PanelRow {
                        subject_id: sid,
                        group_id: g,
                        part,
                        round,
                        y,
                        covariates: vec![b(fine), b(nudge), b(star), b(hubei)],
                    });
                }
            }
        }
    }
    PanelDataset {
        covariate_names: vec![
            "fine".into(),
            "nudge".into(),
            "superspreader".into(),
            "hubei".into(),
        ],
        rows,
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

const FORMULA: [&str; 4] = ["fine", "nudge", "superspreader", "hubei"];

#[test]
fn criterion_7_estimator_validity() {
    let start = Instant::now();
    let truth = dgp_true();
    let reps = 500usize;
    let mut covered = [0usize; 4];
    for seed in 0..reps as u64 {
        let data = dgp_panel(seed);
        let fit = fit_lpm_cluster(&data, &FORMULA, ClusterCorrection::Cr1).unwrap();
        for (i, (name, want)) in truth.iter().enumerate() {
            let (b, se) = fit.coefficient(name).unwrap();
            if (b - want).abs() <= 2.0 * se {
                covered[i] += 1;
            }
        }
    }
    let coverage: Vec<f64> = covered.iter().map(|&c| c as f64 / reps as f64).collect();
    let coverage_ok = coverage.iter().all(|&c| c >= 0.93);

    // AME agreement on one draw of the same DGP.
    let data = dgp_panel(424_242);
    let lpm = fit_lpm_cluster(&data, &FORMULA, ClusterCorrection::Cr1).unwrap();
    let lpm_ames = average_marginal_effects(&lpm, &data, &FORMULA).unwrap();
    let mut ame_ok = true;
    for link in [Link::Logit, Link::Probit] {
        let fit = fit_binary_mle(&data, &FORMULA, link).unwrap();
        let ames = average_marginal_effects(&fit, &data, &FORMULA).unwrap();
        for (a, b) in ames.iter().zip(&lpm_ames) {
            ame_ok &= (a.ame - b.ame).abs() < 0.01;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        7,
        coverage_ok && ame_ok && elapsed < 300.0,
        &format!("coverage {coverage:?} over {reps} seeds; AMEs within 0.01; {elapsed:.1}s"),
    );
}

#[test]
fn criterion_8_subgroup_machinery() {
    let data = dgp_panel(7);
    let formula = ["fine", "nudge", "superspreader", "hubei"];
    let sub = subgroup_effects(&data, &formula, "hubei", ClusterCorrection::Cr1).unwrap();
    let base: Vec<&str> = formula.iter().copied().filter(|f| *f != "hubei").collect();
    let hubei_col = data.column("hubei").unwrap();
    let mut max_gap: f64 = 0.0;
    for (value, effects) in [(0.0, &sub.group0), (1.0, &sub.group1)] {
        let split = PanelDataset {
            covariate_names: data.covariate_names.clone(),
            rows: data
                .rows
                .iter()
                .filter(|r| r.covariates[hubei_col] == value)
                .cloned()
                .collect(),
        };
        let fit = fit_lpm_cluster(&split, &base, ClusterCorrection::Cr1).unwrap();
        for me in effects {
            let (b, _) = fit.coefficient(&me.name).unwrap();
            max_gap = max_gap.max((me.ame - b).abs());
        }
    }
    report(
        8,
        max_gap < 1e-8,
        &format!("interacted vs split-sample max gap {max_gap:.2e}"),
    );
}

#[test]
fn criterion_9_preference_models() {
    // Integer brute force over m boxes: maximize P(no bomb) * u(m).
    let oracle = |r: f64| -> u32 {
        (0u32..=100)
            .max_by(|&a, &b| {
                let v = |m: u32| (1.0 - f64::from(m) / 100.0) * f64::from(m).powf(r);
                v(a).partial_cmp(&v(b)).unwrap()
            })
            .unwrap()
    };
    let bret_ok = bret_optimal_boxes(1.0).unwrap() == 50
        && bret_optimal_boxes(0.5).unwrap() == 33
        && bret_optimal_boxes(3.0).unwrap() == 75
        && bret_optimal_boxes(0.5).unwrap() == oracle(0.5)
        && bret_optimal_boxes(3.0).unwrap() == oracle(3.0)
        && bret_optimal_boxes(1.0).unwrap() == oracle(1.0);

    let eps = 1e-9;
    let svo_ok = classify_angle(57.15) == SvoCategory::Altruist
        && classify_angle(57.15 - eps) == SvoCategory::Prosocial
        && classify_angle(22.45) == SvoCategory::Prosocial
        && classify_angle(22.45 - eps) == SvoCategory::Individualist
        && classify_angle(-12.04) == SvoCategory::Individualist
        && classify_angle(-12.04 - eps) == SvoCategory::Competitive
        && classify_angle(90.0) == SvoCategory::Altruist
        && classify_angle(-45.0) == SvoCategory::Competitive;
    report(
        9,
        bret_ok && svo_ok,
        "bret 50/33/75 vs brute force; svo threshold behavior exact at all cutoffs",
    );
}
