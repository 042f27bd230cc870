//! Finite MDPs, tabular policies, induced transition matrices, stationary
//! analysis, and seeded trajectory simulation.
//!
//! The discount is state-dependent throughout: `gamma(s)` is attached to the
//! *successor* state of a transition, matching the recursion
//! `G_t = R_{t+1} + gamma_{t+1} G_{t+1}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum slack accepted when validating probability tables.
pub const DISTRIBUTION_TOL: f64 = 1e-12;

/// Default tolerance for the stationary-distribution power iteration.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Default iteration cap for the stationary-distribution power iteration.
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// A finite MDP with dense transition tensor `p(s' | s, a)`, reward table
/// `r(s, a)`, and per-state discount `gamma(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>, // (s, a, s') row-major
    reward: Vec<f64>,     // (s, a)
    discount: Vec<f64>,   // gamma(s)
}

impl TabularMdp {
    /// Build and validate: every `(s, a)` transition row must be a probability
    /// distribution and every `gamma(s)` must lie in `[0, 1]`.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        discount: Vec<f64>,
    ) -> Result<Self> {
        let num_states = transition.len();
        if num_states == 0 {
            return Err(Error::Shape("MDP must have at least one state".into()));
        }
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(Error::Shape("MDP must have at least one action".into()));
        }
        if reward.len() != num_states || discount.len() != num_states {
            return Err(Error::Shape(format!(
                "reward has {} rows and discount has {} entries for {} states",
                reward.len(),
                discount.len(),
                num_states
            )));
        }

        let mut flat_p = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::Shape(format!(
                    "state {s} has {} action rows, expected {num_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::Shape(format!(
                        "transition row ({s}, {a}) has length {}, expected {num_states}",
                        row.len()
                    )));
                }
                validate_distribution(row, &format!("transition row (s={s}, a={a})"))?;
                flat_p.extend_from_slice(row);
            }
        }

        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for (s, row) in reward.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::Shape(format!(
                    "reward row {s} has length {}, expected {num_actions}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|r| !r.is_finite()) {
                return Err(Error::Shape(format!("reward row {s} contains {bad}")));
            }
            flat_r.extend_from_slice(row);
        }

        for (s, &g) in discount.iter().enumerate() {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Distribution(format!(
                    "gamma({s}) = {g} is outside [0, 1]"
                )));
            }
        }

        Ok(Self {
            num_states,
            num_actions,
            transition: flat_p,
            reward: flat_r,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `p(s' | s, a)`
    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + s_next]
    }

    /// `r(s, a)`
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// `gamma(s)`
    pub fn gamma(&self, s: usize) -> f64 {
        self.discount[s]
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discount
    }

    fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.transition[base..base + self.num_states]
    }
}

fn validate_distribution(row: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = row.iter().find(|&&p| p.is_nan() || p < 0.0 || !p.is_finite()) {
        return Err(Error::Distribution(format!("{what} contains {bad}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::Distribution(format!(
            "{what} sums to {sum} (must be 1 within {DISTRIBUTION_TOL:e})"
        )));
    }
    Ok(())
}

/// A stochastic policy as a dense `(s, a)` probability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = rows.len();
        if num_states == 0 {
            return Err(Error::Shape("policy must cover at least one state".into()));
        }
        let num_actions = rows[0].len();
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::Shape(format!(
                    "policy row {s} has length {}, expected {num_actions}",
                    row.len()
                )));
            }
            validate_distribution(row, &format!("policy row (s={s})"))?;
            probs.extend_from_slice(row);
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    /// Same action distribution in every state.
    pub fn homogeneous(num_states: usize, action_probs: Vec<f64>) -> Result<Self> {
        Self::new(vec![action_probs; num_states])
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let row = vec![1.0 / num_actions as f64; num_actions];
        Self::new(vec![row; num_states]).expect("uniform rows are valid")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `policy(a | s)`
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }
}

/// Target policy `pi` and behavior policy `mu`, validated for coverage:
/// `pi(a|s) > 0` implies `mu(a|s) > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPair {
    target: TabularPolicy,
    behavior: TabularPolicy,
}

impl PolicyPair {
    pub fn new(target: TabularPolicy, behavior: TabularPolicy) -> Result<Self> {
        if target.num_states != behavior.num_states || target.num_actions != behavior.num_actions {
            return Err(Error::Shape(format!(
                "target is {}x{} but behavior is {}x{}",
                target.num_states, target.num_actions, behavior.num_states, behavior.num_actions
            )));
        }
        for s in 0..target.num_states {
            for a in 0..target.num_actions {
                if target.prob(s, a) > 0.0 && behavior.prob(s, a) == 0.0 {
                    return Err(Error::Coverage {
                        state: s,
                        action: a,
                        pi: target.prob(s, a),
                    });
                }
            }
        }
        Ok(Self { target, behavior })
    }

    /// On-policy pair (`pi == mu`).
    pub fn on_policy(policy: TabularPolicy) -> Self {
        Self {
            target: policy.clone(),
            behavior: policy,
        }
    }

    pub fn target(&self) -> &TabularPolicy {
        &self.target
    }

    pub fn behavior(&self) -> &TabularPolicy {
        &self.behavior
    }

    /// Importance-sampling ratio `pi(a|s) / mu(a|s)`; finite for any action
    /// the behavior policy can actually select.
    pub fn rho(&self, s: usize, a: usize) -> f64 {
        self.target.prob(s, a) / self.behavior.prob(s, a)
    }
}

/// One sampled step, with its importance ratio and the successor's discount
/// cached so learners never touch the policies again.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// `pi(a|s) / mu(a|s)` for the sampled action.
    pub rho: f64,
    /// `gamma(next_state)`.
    pub gamma_next: f64,
}

/// `P_policy(s, s') = sum_a policy(a|s) p(s'|s, a)`.
pub fn transition_matrix(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<DMatrix<f64>> {
    if policy.num_states != mdp.num_states || policy.num_actions != mdp.num_actions {
        return Err(Error::Shape(format!(
            "policy is {}x{} but MDP has {} states and {} actions",
            policy.num_states, policy.num_actions, mdp.num_states, mdp.num_actions
        )));
    }
    let n = mdp.num_states;
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.num_actions {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (s_next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                m[(s, s_next)] += w * p;
            }
        }
    }
    Ok(m)
}

/// Stationary distribution of the chain induced by `policy`, by power
/// iteration from a deliberately non-uniform start (so periodic chains
/// oscillate instead of hiding behind symmetry).
///
/// Fails with an ergodicity error when the iteration does not converge, or
/// when a period-2 oscillation is detected.
pub fn stationary_distribution(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let p = transition_matrix(mdp, policy)?;
    let n = mdp.num_states;
    // ramp start breaks the symmetry of doubly-stochastic periodic chains
    let total = (n * (n + 1)) as f64 / 2.0;
    let mut d = DVector::from_fn(n, |i, _| (i + 1) as f64 / total);
    let mut prev = d.clone();
    let mut residual = f64::INFINITY;
    for iter in 0..max_iters {
        let mut next = (d.transpose() * &p).transpose();
        let mass = next.sum();
        next /= mass;
        residual = (&next - &d).amax();
        if residual <= tol {
            return Ok(next);
        }
        // period-2 oscillation: d_{t+1} ~ d_{t-1} while the chain is still
        // macroscopically flip-flopping (near convergence d_{t+1} ~ d_{t-1}
        // holds trivially, so a large residual is required too)
        if iter > 0 && (&next - &prev).amax() <= tol && residual > tol.sqrt() {
            return Err(Error::NonErgodic {
                iterations: iter + 1,
                residual,
            });
        }
        prev = d;
        d = next;
    }
    Err(Error::NonErgodic {
        iterations: max_iters,
        residual,
    })
}

/// `stationary_distribution` with the library-default tolerances.
pub fn stationary_default(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<DVector<f64>> {
    stationary_distribution(mdp, policy, STATIONARY_TOL, STATIONARY_MAX_ITERS)
}

/// Diagonal matrix `Gamma` with `Gamma(s, s) = gamma(s)`.
pub fn diag_discount(mdp: &TabularMdp) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(&mdp.discount))
}

/// Diagonal matrix with the given vector on the diagonal.
pub fn diag_weighting(weights: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(weights)
}

/// Seeded incremental sampler of the behavior-policy chain.
///
/// Each instance owns its RNG, so concurrent runs never share state and a
/// seed fully determines the emitted transitions.
#[derive(Debug, Clone)]
pub struct StreamSampler<'a> {
    mdp: &'a TabularMdp,
    pair: &'a PolicyPair,
    state: usize,
    rng: ChaCha8Rng,
}

impl<'a> StreamSampler<'a> {
    pub fn new(mdp: &'a TabularMdp, pair: &'a PolicyPair, start: usize, seed: u64) -> Result<Self> {
        if start >= mdp.num_states {
            return Err(Error::Shape(format!(
                "start state {start} out of range for {} states",
                mdp.num_states
            )));
        }
        if pair.target().num_states != mdp.num_states
            || pair.target().num_actions != mdp.num_actions
        {
            return Err(Error::Shape(format!(
                "policy pair is {}x{} but MDP has {} states and {} actions",
                pair.target().num_states,
                pair.target().num_actions,
                mdp.num_states,
                mdp.num_actions
            )));
        }
        Ok(Self {
            mdp,
            pair,
            state: start,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Restart the walk at `state` without reseeding; rollout-style users
    /// call this between episodes.
    pub fn jump_to(&mut self, state: usize) {
        debug_assert!(state < self.mdp.num_states());
        self.state = state;
    }

    /// Sample one transition under the behavior policy and advance.
    pub fn next_transition(&mut self) -> Transition {
        let s = self.state;
        let a = sample_index(&mut self.rng, self.pair.behavior().row(s));
        let s_next = sample_index(&mut self.rng, self.mdp.transition_row(s, a));
        let t = Transition {
            state: s,
            action: a,
            reward: self.mdp.reward(s, a),
            next_state: s_next,
            rho: self.pair.rho(s, a),
            gamma_next: self.mdp.gamma(s_next),
        };
        self.state = s_next;
        t
    }
}

/// Inverse-CDF sample from a probability row. The final positive entry
/// absorbs rounding slack, so zero-probability entries are never selected.
fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Simulate `length` transitions from `start` under the behavior policy.
pub fn simulate_stream(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    start: usize,
    rng_seed: u64,
    length: usize,
) -> Result<Vec<Transition>> {
    let mut sampler = StreamSampler::new(mdp, pair, start, rng_seed)?;
    Ok((0..length).map(|_| sampler.next_transition()).collect())
}
