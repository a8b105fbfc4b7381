//! Exact and Monte Carlo evaluation of the infection process and payoffs.
//!
//! Contagion is realized as bond percolation: every edge of the induced
//! contact graph is open independently with probability alpha and the
//! infection reaches the open component of patient zero. On undirected
//! graphs this is distribution-equivalent to the sequential wave-by-wave
//! description and has no scheduling ambiguity.

use crate::error::{Error, Result};
use crate::graph::{induced_contact_graph, ActionProfile, Network};
use crate::params::GameParams;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Edge-state enumeration guard: 2^24 states is the most the exact solver
/// will walk.
pub const EDGE_GUARD: usize = 24;

/// Per-position infection probabilities p_i given the distancing subset.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionProbabilities<S> {
    pub p: Vec<S>,
}

/// Realized outcome of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub patient_zero: usize,
    pub infected: Vec<usize>,
    pub payoffs: Vec<f64>,
    pub timed_out: Vec<bool>,
}

impl RoundOutcome {
    pub fn is_infected(&self, i: usize) -> bool {
        self.infected.contains(&i)
    }

    /// Injects the session-level timeout penalty.
    pub fn apply_timeout(&mut self, i: usize, penalty: f64) {
        if !self.timed_out[i] {
            self.timed_out[i] = true;
            self.payoffs[i] -= penalty;
        }
    }
}

fn check_inputs<S: Scalar>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<S>,
) -> Result<()> {
    if profile.n() != net.n() {
        return Err(Error::ProfileLengthMismatch {
            profile_len: profile.n(),
            n: net.n(),
        });
    }
    params.validate()?;
    Ok(())
}

struct Dsu {
    parent: [u8; 16],
}

impl Dsu {
    fn new(n: usize) -> Self {
        let mut parent = [0u8; 16];
        for (i, p) in parent.iter_mut().enumerate().take(n) {
            *p = i as u8;
        }
        Dsu { parent }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut cur = i;
        while cur != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u8;
            cur = next;
        }
        root
    }

    fn union(&mut self, i: usize, j: usize) {
        let (ri, rj) = (self.find(i), self.find(j));
        if ri != rj {
            self.parent[ri] = rj as u8;
        }
    }
}

/// Pairwise percolation connectivity on the induced contact graph.
///
/// Entry (z, i) is the probability that z and i lie in the same open
/// component when every induced edge is open independently with probability
/// alpha. Diagonal entries are 1 for non-distancers; rows and columns of
/// distancing positions are 0. Computed exactly by summing over all 2^|E'|
/// edge states.
pub fn percolation_connectivity<S: Scalar>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<S>,
) -> Result<Vec<Vec<S>>> {
    check_inputs(net, profile, params)?;
    let n = net.n();
    let contact = induced_contact_graph(net, profile)?;
    let edges = contact.edges();
    let m = edges.len();
    if m > EDGE_GUARD {
        return Err(Error::EnumerationGuard {
            edges: m,
            guard: EDGE_GUARD,
        });
    }

    let alpha = params.alpha.clone();
    let closed = S::one() - alpha.clone();
    let mut open_pow = vec![S::one()];
    let mut closed_pow = vec![S::one()];
    for k in 1..=m {
        open_pow.push(open_pow[k - 1].clone() * alpha.clone());
        closed_pow.push(closed_pow[k - 1].clone() * closed.clone());
    }

    let outsiders: Vec<usize> = (0..n).filter(|&i| !profile.distances(i)).collect();
    let mut conn = vec![vec![S::zero(); n]; n];
    for &i in &outsiders {
        conn[i][i] = S::one();
    }

    for mask in 0u32..(1u32 << m) {
        let k = mask.count_ones() as usize;
        let weight = open_pow[k].clone() * closed_pow[m - k].clone();
        let mut dsu = Dsu::new(n);
        for (e, &(u, v)) in edges.iter().enumerate() {
            if mask & (1 << e) != 0 {
                dsu.union(u, v);
            }
        }
        for (a, &i) in outsiders.iter().enumerate() {
            for &j in &outsiders[a + 1..] {
                if dsu.find(i) == dsu.find(j) {
                    let w = weight.clone();
                    conn[i][j] = conn[i][j].clone() + w.clone();
                    conn[j][i] = conn[j][i].clone() + w;
                }
            }
        }
    }
    Ok(conn)
}

/// Exact infection probability per position.
///
/// For i in S: p_i = gamma / n. For i not in S:
/// p_i = (1/n) * (1 + sum over z not in S, z != i of P(z and i connected)).
pub fn infection_probability_exact<S: Scalar>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<S>,
) -> Result<InfectionProbabilities<S>> {
    let conn = percolation_connectivity(net, profile, params)?;
    let n = net.n();
    let inv_n = S::one() / S::from_int(n as i64);
    let p = (0..n)
        .map(|i| {
            if profile.distances(i) {
                params.gamma.clone() * inv_n.clone()
            } else {
                let mut reach = S::one();
                for z in 0..n {
                    if z != i && !profile.distances(z) {
                        reach = reach + conn[z][i].clone();
                    }
                }
                inv_n.clone() * reach
            }
        })
        .collect();
    Ok(InfectionProbabilities { p })
}

/// Infection probability of position i conditional on patient zero being z.
pub fn infection_probability_given_seed<S: Scalar>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<S>,
    i: usize,
    z: usize,
) -> Result<S> {
    check_inputs(net, profile, params)?;
    net.check_position(i)?;
    net.check_position(z)?;
    if i == z {
        return Ok(if profile.distances(z) {
            params.gamma.clone()
        } else {
            S::one()
        });
    }
    // A distancing patient zero cannot pass the disease on; a distancing
    // target cannot catch it through contagion.
    if profile.distances(z) || profile.distances(i) {
        return Ok(S::zero());
    }
    let conn = percolation_connectivity(net, profile, params)?;
    Ok(conn[z][i].clone())
}

/// Expected points of position i: (1 - gamma/n) b - c for members,
/// (1 - p_i) b - f for non-members.
pub fn expected_payoff<S: Scalar>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<S>,
    i: usize,
) -> Result<S> {
    net.check_position(i)?;
    if profile.distances(i) {
        check_inputs(net, profile, params)?;
        let inv_n = S::one() / S::from_int(net.n() as i64);
        Ok((S::one() - params.gamma.clone() * inv_n) * params.b.clone() - params.c.clone())
    } else {
        let probs = infection_probability_exact(net, profile, params)?;
        Ok((S::one() - probs.p[i].clone()) * params.b.clone() - params.fine.clone())
    }
}

/// Draws patient zero and the open-edge realization; returns the infected
/// bitmask. Shared by `simulate_round` and the Monte Carlo validator.
fn simulate_infected_mask<R: Rng + ?Sized>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<f64>,
    rng: &mut R,
) -> (usize, u16) {
    let n = net.n();
    let patient_zero = rng.gen_range(0..n);
    if profile.distances(patient_zero) {
        let infected = if rng.gen::<f64>() < params.gamma {
            1u16 << patient_zero
        } else {
            0
        };
        return (patient_zero, infected);
    }
    // Realize each induced-contact edge, then take the component of
    // patient zero.
    let mut open_adj = [0u16; 16];
    for i in 0..n {
        if profile.distances(i) {
            continue;
        }
        for j in (i + 1)..n {
            if !profile.distances(j) && net.has_edge(i, j) && rng.gen::<f64>() < params.alpha {
                open_adj[i] |= 1 << j;
                open_adj[j] |= 1 << i;
            }
        }
    }
    let mut component = 1u16 << patient_zero;
    let mut frontier = component;
    while frontier != 0 {
        let mut next = 0u16;
        let mut f = frontier;
        while f != 0 {
            let i = f.trailing_zeros() as usize;
            f &= f - 1;
            next |= open_adj[i] & !component;
        }
        component |= next;
        frontier = next;
    }
    (patient_zero, component)
}

/// Simulates one round: uniform patient zero, bond-percolation spread, and
/// Eq.-style payoff realization. Timeout flags start false; the session layer
/// injects penalties.
pub fn simulate_round<R: Rng + ?Sized>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<f64>,
    rng: &mut R,
) -> Result<RoundOutcome> {
    check_inputs(net, profile, params)?;
    let n = net.n();
    let (patient_zero, mask) = simulate_infected_mask(net, profile, params, rng);
    let infected: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
    let payoffs = (0..n)
        .map(|i| {
            let healthy = mask & (1 << i) == 0;
            let mut pay = if healthy { params.b } else { 0.0 };
            if profile.distances(i) {
                pay -= params.c;
            } else {
                pay -= params.fine;
            }
            pay
        })
        .collect();
    Ok(RoundOutcome {
        patient_zero,
        infected,
        payoffs,
        timed_out: vec![false; n],
    })
}

/// Monte Carlo infection frequencies with binomial standard errors.
#[derive(Debug, Clone)]
pub struct McInfectionEstimate {
    pub freq: Vec<f64>,
    pub std_err: Vec<f64>,
    pub reps: usize,
}

pub fn infection_probability_mc<R: Rng + ?Sized>(
    net: &Network,
    profile: &ActionProfile,
    params: &GameParams<f64>,
    reps: usize,
    rng: &mut R,
) -> Result<McInfectionEstimate> {
    check_inputs(net, profile, params)?;
    if reps == 0 {
        return Err(Error::ZeroReplications);
    }
    let n = net.n();
    let mut counts = vec![0u64; n];
    for _ in 0..reps {
        let (_, mask) = simulate_infected_mask(net, profile, params, rng);
        let mut m = mask;
        while m != 0 {
            counts[m.trailing_zeros() as usize] += 1;
            m &= m - 1;
        }
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / reps as f64).collect();
    let std_err = freq
        .iter()
        .map(|&f| (f * (1.0 - f) / reps as f64).sqrt())
        .collect();
    Ok(McInfectionEstimate {
        freq,
        std_err,
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_environment, EnvironmentKind};
    use num_rational::BigRational;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Rat = BigRational;

    fn k5() -> Network {
        make_environment(EnvironmentKind::Homogeneous, 5).unwrap()
    }

    fn star5() -> Network {
        make_environment(EnvironmentKind::Superspreader, 5).unwrap()
    }

    fn rat(num: i64, den: i64) -> Rat {
        Rat::from_ratio(num, den)
    }

    #[test]
    fn distancer_marginal_is_gamma_over_n() {
        let params: GameParams<Rat> = GameParams::default_calibration();
        for bits in 0u32..32 {
            let profile = ActionProfile::from_bits(5, bits).unwrap();
            let probs = infection_probability_exact(&k5(), &profile, &params).unwrap();
            for i in 0..5 {
                if profile.distances(i) {
                    assert_eq!(probs.p[i], rat(1, 10));
                }
            }
        }
    }

    #[test]
    fn k5_three_distancers_outsider() {
        let params: GameParams<Rat> = GameParams::default_calibration();
        let profile = ActionProfile::from_actions(&[true, true, true, false, false]).unwrap();
        let probs = infection_probability_exact(&k5(), &profile, &params).unwrap();
        // (1/5)(1 + alpha) = 0.33
        assert_eq!(probs.p[3], rat(33, 100));
        assert_eq!(probs.p[3].as_f64(), 0.33);

        let pf: GameParams<f64> = GameParams::default_calibration();
        let probs = infection_probability_exact(&k5(), &profile, &pf).unwrap();
        assert!((probs.p[4] - 0.33).abs() < 1e-12);
    }

    #[test]
    fn star5_no_distancing_recipient() {
        let params: GameParams<Rat> = GameParams::default_calibration();
        let profile = ActionProfile::uniform(5, false).unwrap();
        let probs = infection_probability_exact(&star5(), &profile, &params).unwrap();
        // (1 + alpha + 3 alpha^2) / 5 = 0.5835
        assert_eq!(probs.p[2], rat(5835, 10000));
        // hub: (1 + 4 alpha) / 5 = 0.72
        assert_eq!(probs.p[0], rat(72, 100));
    }

    /// The instructions network: positions P,E,C,M,Q mapped to 0..4 with
    /// edges M-P, M-E, P-C; E and Q distance.
    fn instructions_setup() -> (Network, ActionProfile) {
        let mut net = Network::empty(5).unwrap();
        net.add_edge(3, 0).unwrap(); // M-P
        net.add_edge(3, 1).unwrap(); // M-E
        net.add_edge(0, 2).unwrap(); // P-C
        let profile = ActionProfile::from_actions(&[false, true, false, false, true]).unwrap();
        (net, profile)
    }

    #[test]
    fn worked_example_forty_two_and_a_quarter_percent() {
        let (net, profile) = instructions_setup();
        let params: GameParams<Rat> = GameParams::default_calibration();
        // M infected given patient zero C: two alpha hops C -> P -> M.
        let p = infection_probability_given_seed(&net, &profile, &params, 3, 2).unwrap();
        assert_eq!(p, rat(4225, 10000));
        assert_eq!(p.as_f64(), 0.4225);
    }

    #[test]
    fn given_seed_edge_cases() {
        let (net, profile) = instructions_setup();
        let params: GameParams<Rat> = GameParams::default_calibration();
        // non-distancing patient zero is infected for sure
        assert_eq!(
            infection_probability_given_seed(&net, &profile, &params, 2, 2).unwrap(),
            Rat::one()
        );
        // distancing patient zero infected with probability gamma
        assert_eq!(
            infection_probability_given_seed(&net, &profile, &params, 1, 1).unwrap(),
            rat(1, 2)
        );
        // distancers unreachable by contagion
        assert_eq!(
            infection_probability_given_seed(&net, &profile, &params, 1, 2).unwrap(),
            Rat::zero()
        );
        // a distancing patient zero passes nothing on
        assert_eq!(
            infection_probability_given_seed(&net, &profile, &params, 3, 1).unwrap(),
            Rat::zero()
        );
        assert!(infection_probability_given_seed(&net, &profile, &params, 7, 0).is_err());
        use num_traits::{One, Zero};
        let _ = (Rat::one(), Rat::zero()); // silence unused trait warning paths
    }

    #[test]
    fn expected_payoff_examples() {
        let params: GameParams<Rat> = GameParams::default_calibration();
        let profile = ActionProfile::from_actions(&[true, true, true, false, false]).unwrap();
        // member: (1 - 0.1) * 100 - 35 = 55, on any net/profile
        assert_eq!(
            expected_payoff(&k5(), &profile, &params, 0).unwrap(),
            Rat::from_int(55)
        );
        assert_eq!(
            expected_payoff(&star5(), &profile, &params, 1).unwrap(),
            Rat::from_int(55)
        );
        // K5 outsider with 3 distancers, f = 0: (1 - 0.33) * 100 = 67
        assert_eq!(
            expected_payoff(&k5(), &profile, &params, 3).unwrap(),
            Rat::from_int(67)
        );
        // f = 15: 67 - 15 = 52
        let fined = params.clone().with_fine(Rat::from_int(15));
        assert_eq!(
            expected_payoff(&k5(), &profile, &fined, 3).unwrap(),
            Rat::from_int(52)
        );
        // f64 path matches
        let pf: GameParams<f64> = GameParams::default_calibration();
        assert_eq!(expected_payoff(&k5(), &profile, &pf, 0).unwrap(), 55.0);
        assert_eq!(expected_payoff(&k5(), &profile, &pf, 3).unwrap(), 67.0);
    }

    #[test]
    fn monotonicity_in_distancing_set() {
        let params: GameParams<Rat> = GameParams::default_calibration();
        for net in [k5(), star5()] {
            for bits in 0u32..32 {
                let profile = ActionProfile::from_bits(5, bits).unwrap();
                let base = infection_probability_exact(&net, &profile, &params).unwrap();
                for add in 0..5 {
                    if profile.distances(add) {
                        continue;
                    }
                    let bigger = profile.with(add, true);
                    let probs = infection_probability_exact(&net, &bigger, &params).unwrap();
                    for i in 0..5 {
                        if i != add && !profile.distances(i) {
                            assert!(probs.p[i] <= base.p[i]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn alpha_limits() {
        let base: GameParams<Rat> = GameParams::default_calibration();
        let zero_alpha = GameParams {
            alpha: Rat::zero(),
            ..base.clone()
        };
        let one_alpha = GameParams {
            alpha: Rat::one(),
            ..base
        };
        use num_traits::{One, Zero};
        let profile = ActionProfile::from_actions(&[true, false, false, false, false]).unwrap();
        let p0 = infection_probability_exact(&k5(), &profile, &zero_alpha).unwrap();
        let p1 = infection_probability_exact(&k5(), &profile, &one_alpha).unwrap();
        for i in 1..5 {
            assert_eq!(p0.p[i], rat(1, 5));
            // connected induced graph, alpha = 1: |N \ S| / n = 4/5
            assert_eq!(p1.p[i], rat(4, 5));
        }
    }

    #[test]
    fn permutation_equivariance() {
        let params: GameParams<Rat> = GameParams::default_calibration();
        let perm = [2usize, 0, 4, 1, 3];
        let net = star5();
        for bits in 0u32..32 {
            let profile = ActionProfile::from_bits(5, bits).unwrap();
            let probs = infection_probability_exact(&net, &profile, &params).unwrap();
            let pnet = net.permuted(&perm).unwrap();
            let pprof = profile.permuted(&perm).unwrap();
            let pprobs = infection_probability_exact(&pnet, &pprof, &params).unwrap();
            for i in 0..5 {
                assert_eq!(pprobs.p[i], probs.p[perm[i]]);
            }
        }
    }

    #[test]
    fn enumeration_guard_trips() {
        let net = make_environment(EnvironmentKind::Homogeneous, 8).unwrap(); // 28 edges
        let profile = ActionProfile::uniform(8, false).unwrap();
        let mut params: GameParams<f64> = GameParams::default_calibration();
        params.n = 8;
        assert!(matches!(
            infection_probability_exact(&net, &profile, &params),
            Err(Error::EnumerationGuard { edges: 28, .. })
        ));
    }

    #[test]
    fn simulate_all_distancing() {
        let params: GameParams<f64> = GameParams::default_calibration();
        let profile = ActionProfile::uniform(5, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let out = simulate_round(&k5(), &profile, &params, &mut rng).unwrap();
            assert!(out.infected.iter().all(|&i| i == out.patient_zero));
            for &pay in &out.payoffs {
                assert!(pay == 65.0 || pay == -35.0);
            }
        }
    }

    #[test]
    fn simulate_full_connectivity() {
        let mut params: GameParams<f64> = GameParams::default_calibration();
        params.alpha = 1.0;
        let profile = ActionProfile::uniform(5, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = simulate_round(&k5(), &profile, &params, &mut rng).unwrap();
        assert_eq!(out.infected, vec![0, 1, 2, 3, 4]);
        assert!(out.payoffs.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn timeout_injection() {
        let params: GameParams<f64> = GameParams::default_calibration();
        let profile = ActionProfile::uniform(5, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut out = simulate_round(&k5(), &profile, &params, &mut rng).unwrap();
        let before = out.payoffs[2];
        out.apply_timeout(2, 50.0);
        assert_eq!(out.payoffs[2], before - 50.0);
        out.apply_timeout(2, 50.0); // idempotent
        assert_eq!(out.payoffs[2], before - 50.0);
    }

    #[test]
    fn mc_reps_guard_and_single_rep() {
        let params: GameParams<f64> = GameParams::default_calibration();
        let profile = ActionProfile::uniform(5, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            infection_probability_mc(&k5(), &profile, &params, 0, &mut rng),
            Err(Error::ZeroReplications)
        ));
        let est = infection_probability_mc(&k5(), &profile, &params, 1, &mut rng).unwrap();
        assert!(est.freq.iter().all(|&f| f == 0.0 || f == 1.0));
    }

    #[test]
    fn mc_matches_exact() {
        // Across every profile of both environments, at least 95% of
        // (profile, position) cells must land within 3 binomial standard
        // errors of the enumeration value. A per-cell hard cap of 5 s.e.
        // still catches systematic bias.
        let params: GameParams<f64> = GameParams::default_calibration();
        let reps = 100_000usize;
        for kind in [EnvironmentKind::Homogeneous, EnvironmentKind::Superspreader] {
            let net = make_environment(kind, 5).unwrap();
            let mut cells = 0usize;
            let mut outliers = 0usize;
            for bits in 0..32u32 {
                let profile = ActionProfile::from_bits(5, bits).unwrap();
                let exact = infection_probability_exact(&net, &profile, &params).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(42 + u64::from(bits));
                let est =
                    infection_probability_mc(&net, &profile, &params, reps, &mut rng).unwrap();
                for i in 0..5 {
                    let se = (exact.p[i] * (1.0 - exact.p[i]) / reps as f64)
                        .sqrt()
                        .max(1e-12);
                    let z = (est.freq[i] - exact.p[i]).abs() / se;
                    assert!(
                        z <= 5.0,
                        "{} bits={bits:05b} position {i}: {} vs {} (z={z:.2})",
                        kind.label(),
                        est.freq[i],
                        exact.p[i]
                    );
                    cells += 1;
                    if z > 3.0 {
                        outliers += 1;
                    }
                }
            }
            assert!(outliers * 20 <= cells, "{outliers}/{cells} cells beyond 3 s.e.");
        }
    }

    /// Independent oracle: iterated per-contact transmission (wave by wave)
    /// must match the one-shot percolation realization in distribution.
    #[test]
    fn sequential_transmission_equivalence() {
        fn simulate_waves<R: Rng>(
            net: &Network,
            profile: &ActionProfile,
            params: &GameParams<f64>,
            rng: &mut R,
        ) -> u16 {
            let n = net.n();
            let pz = rng.gen_range(0..n);
            if profile.distances(pz) {
                return if rng.gen::<f64>() < params.gamma {
                    1 << pz
                } else {
                    0
                };
            }
            let mut infected = 1u16 << pz;
            let mut frontier = vec![pz];
            while let Some(u) = frontier.pop() {
                for v in 0..n {
                    if net.has_edge(u, v)
                        && !profile.distances(v)
                        && infected & (1 << v) == 0
                        && rng.gen::<f64>() < params.alpha
                    {
                        infected |= 1 << v;
                        frontier.push(v);
                    }
                }
            }
            infected
        }

        let params: GameParams<f64> = GameParams::default_calibration();
        let net = star5();
        let profile = ActionProfile::from_actions(&[false, false, false, true, false]).unwrap();
        let reps = 200_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut wave_counts = vec![0u64; 5];
        for _ in 0..reps {
            let mask = simulate_waves(&net, &profile, &params, &mut rng);
            for i in 0..5 {
                if mask & (1 << i) != 0 {
                    wave_counts[i] += 1;
                }
            }
        }
        let exact = infection_probability_exact(&net, &profile, &params).unwrap();
        for i in 0..5 {
            let freq = wave_counts[i] as f64 / reps as f64;
            let se = (exact.p[i] * (1.0 - exact.p[i]) / reps as f64).sqrt();
            assert!(
                (freq - exact.p[i]).abs() <= 4.0 * se,
                "position {i}: wave {freq} vs exact {}",
                exact.p[i]
            );
        }
    }
}
