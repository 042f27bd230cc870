//! Shared helpers for the integration suites: random problem generators,
//! literal direct-summation implementations of every update equation
//! (kept deliberately independent of the library's shared kernel), and
//! small statistics utilities.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use etd_lab::features::{FeatureMap, LinearFunction};
use etd_lab::learners::Segment;
use etd_lab::mdp::{PolicyPair, TabularMdp, TabularPolicy, Transition};

// ---------------------------------------------------------------------------
// random problems
// ---------------------------------------------------------------------------

pub struct RandomProblem {
    pub mdp: TabularMdp,
    pub pair: PolicyPair,
}

/// A random ergodic MDP: transition rows get a floor so every state reaches
/// every other, `gamma` is constant per MDP inside `gamma_range`, rewards
/// are in `[-1, 1]`.
pub fn random_ergodic_mdp(
    rng: &mut ChaCha8Rng,
    max_states: usize,
    max_actions: usize,
    gamma_range: (f64, f64),
) -> TabularMdp {
    let s = rng.random_range(2..=max_states);
    let a = rng.random_range(1..=max_actions);
    let gamma = rng.random_range(gamma_range.0..=gamma_range.1);
    let transition = (0..s)
        .map(|_| {
            (0..a)
                .map(|_| {
                    let mut row: Vec<f64> = (0..s).map(|_| rng.random_range(0.05..1.0)).collect();
                    let sum: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= sum);
                    // force exact normalization against rounding
                    let sum: f64 = row.iter().sum();
                    row[0] += 1.0 - sum;
                    row
                })
                .collect()
        })
        .collect();
    let reward = (0..s)
        .map(|_| (0..a).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    TabularMdp::new(transition, reward, vec![gamma; s]).expect("generated MDP is valid")
}

fn random_policy(rng: &mut ChaCha8Rng, s: usize, a: usize) -> Vec<Vec<f64>> {
    (0..s)
        .map(|_| {
            let mut row: Vec<f64> = (0..a).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
            let sum: f64 = row.iter().sum();
            row[0] += 1.0 - sum;
            row
        })
        .collect()
}

/// A mildly off-policy pair: the behavior policy is a mixture
/// `mix * target + (1 - mix) * uniform`, which bounds every IS ratio by
/// `1 / (1 - mix)` (choose `mix` small enough to keep trace variance finite).
pub fn random_mild_pair(
    rng: &mut ChaCha8Rng,
    mdp: &TabularMdp,
    mix: f64,
) -> PolicyPair {
    let s = mdp.num_states();
    let a = mdp.num_actions();
    let target_rows = random_policy(rng, s, a);
    let behavior_rows: Vec<Vec<f64>> = target_rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|p| mix * p + (1.0 - mix) / a as f64)
                .collect()
        })
        .collect();
    let target = TabularPolicy::new(target_rows).unwrap();
    let behavior = TabularPolicy::new(behavior_rows).unwrap();
    PolicyPair::new(target, behavior).unwrap()
}

/// Random full-column-rank features, `k <= |S|` columns of unit-scale noise.
pub fn random_full_rank_features(
    rng: &mut ChaCha8Rng,
    num_states: usize,
    k: usize,
) -> Arc<FeatureMap> {
    assert!(k <= num_states);
    loop {
        let rows = (0..num_states)
            .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let fm = FeatureMap::from_rows(rows).unwrap();
        if fm.rank() == k {
            return Arc::new(fm);
        }
    }
}

// ---------------------------------------------------------------------------
// random segments (not tied to any MDP; ratios and discounts are arbitrary)
// ---------------------------------------------------------------------------

pub struct SegmentCase {
    pub segment: Segment,
    pub features: Arc<FeatureMap>,
    pub value: LinearFunction,
    pub emphasis: LinearFunction,
}

pub fn random_segment_case(rng: &mut ChaCha8Rng, max_n: usize) -> SegmentCase {
    let n = rng.random_range(1..=max_n);
    let num_states = rng.random_range(2..=6);
    let k = rng.random_range(2..=num_states.max(2) + 2);
    let features = Arc::new(FeatureMap::from_rows(
        (0..num_states)
            .map(|_| (0..k).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect(),
    )
    .unwrap());

    let mut transitions = Vec::with_capacity(n);
    let mut state = rng.random_range(0..num_states);
    for _ in 0..n {
        let next_state = rng.random_range(0..num_states);
        transitions.push(Transition {
            state,
            action: rng.random_range(0..2),
            reward: rng.random_range(-1.0..1.0),
            next_state,
            rho: rng.random_range(0.0..2.5),
            gamma_next: rng.random_range(0.0..=1.0),
        });
        state = next_state;
    }
    let segment = Segment::new(transitions).unwrap();

    let value = LinearFunction::new(
        Arc::clone(&features),
        DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0)),
    )
    .unwrap();
    let emphasis = LinearFunction::new(
        Arc::clone(&features),
        DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0)),
    )
    .unwrap();

    SegmentCase {
        segment,
        features,
        value,
        emphasis,
    }
}

// ---------------------------------------------------------------------------
// literal transcriptions of the update equations
//
// Each function spells out its sum and products with naive loops and its own
// feature lookups; none of them call the library kernels.
// ---------------------------------------------------------------------------

fn phi(features: &FeatureMap, s: usize) -> DVector<f64> {
    DVector::from_fn(features.num_features(), |k, _| features.matrix()[(s, k)])
}

fn v_of(features: &FeatureMap, w: &DVector<f64>, s: usize) -> f64 {
    phi(features, s).dot(w)
}

/// Off-policy n-step TD:
/// `w + alpha * sum_k (prod_{i<k} rho_i gamma_{i+1}) rho_k delta_k phi(S_0)`.
pub fn direct_td_n(seg: &Segment, features: &FeatureMap, w: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let ts = seg.transitions();
    let mut total = 0.0;
    for k in 0..ts.len() {
        let mut prod = 1.0;
        for t in ts.iter().take(k) {
            prod *= t.rho * t.gamma_next;
        }
        let delta = ts[k].reward + ts[k].gamma_next * v_of(features, w, ts[k].next_state)
            - v_of(features, w, ts[k].state);
        total += prod * ts[k].rho * delta;
    }
    w + phi(features, ts[0].state) * (alpha * total)
}

/// The followon recursion, evaluated by definition from the factor stream:
/// `F_t = (prod_{i=t-n}^{t-1} rho_i gamma_{i+1}) F_{t-n} + 1`, `F_{<n} = 1`.
pub fn direct_followon(factors: &[f64], n: usize, t: usize) -> f64 {
    if t < n {
        return 1.0;
    }
    let mut prod = 1.0;
    for &f in &factors[t - n..t] {
        prod *= f;
    }
    prod * direct_followon(factors, n, t - n) + 1.0
}

/// ETD(n): the TD(n) correction scaled by the followon trace.
pub fn direct_etd_n(
    seg: &Segment,
    features: &FeatureMap,
    w: &DVector<f64>,
    followon: f64,
    alpha: f64,
) -> DVector<f64> {
    let ts = seg.transitions();
    let mut total = 0.0;
    for k in 0..ts.len() {
        let mut prod = 1.0;
        for t in ts.iter().take(k) {
            prod *= t.rho * t.gamma_next;
        }
        let delta = ts[k].reward + ts[k].gamma_next * v_of(features, w, ts[k].next_state)
            - v_of(features, w, ts[k].state);
        total += prod * ts[k].rho * delta;
    }
    w + phi(features, ts[0].state) * (alpha * followon * total)
}

/// V-trace: clipped products `min(c_bar, rho)` and clipped TD coefficients
/// `min(rho_bar, rho)`.
pub fn direct_vtrace(
    seg: &Segment,
    features: &FeatureMap,
    w: &DVector<f64>,
    rho_bar: f64,
    c_bar: f64,
    alpha: f64,
) -> DVector<f64> {
    let ts = seg.transitions();
    let mut total = 0.0;
    for k in 0..ts.len() {
        let mut prod = 1.0;
        for t in ts.iter().take(k) {
            prod *= t.rho.min(c_bar) * t.gamma_next;
        }
        let delta = ts[k].reward + ts[k].gamma_next * v_of(features, w, ts[k].next_state)
            - v_of(features, w, ts[k].state);
        total += prod * ts[k].rho.min(rho_bar) * delta;
    }
    w + phi(features, ts[0].state) * (alpha * total)
}

/// Time-reversed TD:
/// `theta + alpha [ (prod_t gamma_t rho_{t-1}) f(S_0) + 1 - f(S_n) ] phi(S_n)`.
pub fn direct_reversed_td(
    seg: &Segment,
    features: &FeatureMap,
    theta: &DVector<f64>,
    alpha: f64,
) -> DVector<f64> {
    let ts = seg.transitions();
    let mut prod = 1.0;
    for t in ts {
        prod *= t.gamma_next * t.rho;
    }
    let s0 = ts[0].state;
    let sn = ts[ts.len() - 1].next_state;
    let err = prod * v_of(features, theta, s0) + 1.0 - v_of(features, theta, sn);
    theta + phi(features, sn) * (alpha * err)
}

/// Time-reversed TD with clipped ratios.
pub fn direct_reversed_td_clipped(
    seg: &Segment,
    features: &FeatureMap,
    theta: &DVector<f64>,
    alpha: f64,
    rho_bar: f64,
) -> DVector<f64> {
    let ts = seg.transitions();
    let mut prod = 1.0;
    for t in ts {
        prod *= t.gamma_next * t.rho.min(rho_bar);
    }
    let s0 = ts[0].state;
    let sn = ts[ts.len() - 1].next_state;
    let err = prod * v_of(features, theta, s0) + 1.0 - v_of(features, theta, sn);
    theta + phi(features, sn) * (alpha * err)
}

/// Reversed TD plus the Monte Carlo regression on the online pair.
pub fn direct_reversed_td_mc(
    seg: &Segment,
    features: &FeatureMap,
    theta: &DVector<f64>,
    online_state: usize,
    online_followon: f64,
    alpha: f64,
    beta: f64,
) -> DVector<f64> {
    let ts = seg.transitions();
    let mut prod = 1.0;
    for t in ts {
        prod *= t.gamma_next * t.rho;
    }
    let s0 = ts[0].state;
    let sn = ts[ts.len() - 1].next_state;
    let err = prod * v_of(features, theta, s0) + 1.0 - v_of(features, theta, sn);
    let mc = online_followon - v_of(features, theta, online_state);
    theta + phi(features, sn) * (alpha * err) + phi(features, online_state) * (alpha * beta * mc)
}

/// X-ETD(n): the TD(n) correction scaled by the learned emphasis at `S_0`.
pub fn direct_xetd_n(
    seg: &Segment,
    features: &FeatureMap,
    w: &DVector<f64>,
    theta: &DVector<f64>,
    alpha: f64,
) -> DVector<f64> {
    let ts = seg.transitions();
    let mut total = 0.0;
    for k in 0..ts.len() {
        let mut prod = 1.0;
        for t in ts.iter().take(k) {
            prod *= t.gamma_next * t.rho;
        }
        let delta = ts[k].reward + ts[k].gamma_next * v_of(features, w, ts[k].next_state)
            - v_of(features, w, ts[k].state);
        total += prod * ts[k].rho * delta;
    }
    let f0 = v_of(features, theta, ts[0].state);
    w + phi(features, ts[0].state) * (alpha * f0 * total)
}

// ---------------------------------------------------------------------------
// statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl Stats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.count > 0 {
            self.std() / (self.count as f64).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

/// `|observed - expected| <= 3 * sem + slack`
pub fn within_3_sigma(observed: f64, expected: f64, sem: f64, slack: f64) -> bool {
    (observed - expected).abs() <= 3.0 * sem + slack
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
