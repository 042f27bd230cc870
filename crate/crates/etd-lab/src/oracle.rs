//! Closed-form ground truth for a target/behavior pair on a finite MDP.
//!
//! Everything here is a direct dense solve:
//!
//! - true values          `v_pi = (I - P_pi Gamma)^-1 r_pi`
//! - expected emphasis    `D_mu f = (Gamma P_pi^T)^n D_mu f + D_mu 1`
//! - n-step reward vector `r_pi^n = sum_{i<n} (P_pi Gamma)^i r_pi`
//! - unbiased fixed point `w* = (Phi^T D_mu^f L Phi)^-1 Phi^T D_mu^f r_pi^n`
//!
//! with `L = I - (P_pi Gamma)^n`.
//!
//! The expected-emphasis equation is the stationary backward form of the
//! n-step followon recursion: conditioning `F_t = (prod rho gamma) F_{t-n} + 1`
//! on `S_t = s` under the stationary chain turns the path weights
//! `mu * rho = pi` into `(P_pi Gamma)^n` rows, weighted by `d_mu`. It has a
//! finite solution exactly when the spectral radius of `P_pi Gamma` is below
//! one; otherwise the limiting expectation blows up and we report that
//! instead of a meaningless solve.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg;
use crate::mdp::{self, PolicyPair, TabularMdp, TabularPolicy};

/// Exact per-state quantities for one `(mdp, pair, n)` evaluation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True values under the target policy.
    pub v_pi: DVector<f64>,
    /// Limiting expected followon trace per state.
    pub f_star: DVector<f64>,
    /// Stationary distribution of the behavior chain.
    pub d_mu: DVector<f64>,
    /// n-step reward vector.
    pub r_pi_n: DVector<f64>,
    /// `I - (P_pi Gamma)^n`.
    pub l: DMatrix<f64>,
    /// Segment length the emphasis and reward vectors were built for.
    pub n: usize,
}

impl GroundTruth {
    pub fn compute(mdp: &TabularMdp, pair: &PolicyPair, n: usize) -> Result<Self> {
        let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
        let p_pi_gamma = discounted_transition(mdp, pair.target())?;
        let l = l_matrix_from(&p_pi_gamma, n);
        Ok(Self {
            v_pi: true_values(mdp, pair.target())?,
            f_star: expected_emphasis_from(&p_pi_gamma, &d_mu, n)?,
            r_pi_n: n_step_reward_from(mdp, pair.target(), &p_pi_gamma, n)?,
            d_mu,
            l,
            n,
        })
    }

    /// Dump the per-state vectors as a debugging sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "state,v_pi,f_star,d_mu,r_pi_n").expect("write to vec");
        for s in 0..self.v_pi.len() {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                s, self.v_pi[s], self.f_star[s], self.d_mu[s], self.r_pi_n[s]
            )
            .expect("write to vec");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `P_pi Gamma`: target-policy transition matrix, columns scaled by the
/// successor discount.
pub fn discounted_transition(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<DMatrix<f64>> {
    let mut p = mdp::transition_matrix(mdp, policy)?;
    for (j, mut col) in p.column_iter_mut().enumerate() {
        col *= mdp.gamma(j);
    }
    Ok(p)
}

fn l_matrix_from(p_pi_gamma: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let dim = p_pi_gamma.nrows();
    DMatrix::identity(dim, dim) - matrix_power(p_pi_gamma, n)
}

pub(crate) fn matrix_power(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..n {
        acc = &acc * m;
    }
    acc
}

/// Expected one-step reward under a policy: `r_pi(s) = sum_a pi(a|s) r(s, a)`.
pub fn expected_reward(mdp: &TabularMdp, policy: &TabularPolicy) -> DVector<f64> {
    DVector::from_fn(mdp.num_states(), |s, _| {
        (0..mdp.num_actions())
            .map(|a| policy.prob(s, a) * mdp.reward(s, a))
            .sum()
    })
}

/// True value function: solves `(I - P_pi Gamma) v = r_pi`.
pub fn true_values(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<DVector<f64>> {
    let p_pi_gamma = discounted_transition(mdp, policy)?;
    let dim = mdp.num_states();
    let a = DMatrix::identity(dim, dim) - &p_pi_gamma;
    let v = linalg::solve(&a, &expected_reward(mdp, policy), "true values")?;
    Ok(v)
}

/// Limiting expected followon trace, solving
/// `(D_mu - (Gamma P_pi^T)^n D_mu) f = d_mu`.
pub fn expected_emphasis(mdp: &TabularMdp, pair: &PolicyPair, n: usize) -> Result<DVector<f64>> {
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let p_pi_gamma = discounted_transition(mdp, pair.target())?;
    expected_emphasis_from(&p_pi_gamma, &d_mu, n)
}

fn expected_emphasis_from(
    p_pi_gamma: &DMatrix<f64>,
    d_mu: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    if n == 0 {
        return Err(Error::Shape("segment length n must be >= 1".into()));
    }
    // the limit exists iff the n-step target operator is a contraction;
    // the tolerance absorbs eigenvalue rounding at radius exactly 1
    let sr = linalg::spectral_radius(p_pi_gamma);
    if sr >= 1.0 - 1e-9 {
        return Err(Error::EmphasisDiverges { spectral_radius: sr });
    }
    let bn = matrix_power(&p_pi_gamma.transpose(), n); // (Gamma P_pi^T)^n
    let d = DMatrix::from_diagonal(d_mu);
    let system = &d - bn * &d;
    linalg::solve(&system, d_mu, "expected emphasis")
}

/// `r_pi^n = sum_{i=0}^{n-1} (P_pi Gamma)^i r_pi`.
pub fn n_step_reward_vector(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    n: usize,
) -> Result<DVector<f64>> {
    let p_pi_gamma = discounted_transition(mdp, policy)?;
    n_step_reward_from(mdp, policy, &p_pi_gamma, n)
}

fn n_step_reward_from(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    p_pi_gamma: &DMatrix<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    if n == 0 {
        return Err(Error::Shape("segment length n must be >= 1".into()));
    }
    let r_pi = expected_reward(mdp, policy);
    let mut acc = r_pi.clone();
    let mut propagated = r_pi;
    for _ in 1..n {
        propagated = p_pi_gamma * propagated;
        acc += &propagated;
    }
    Ok(acc)
}

/// The unbiased fixed point `w*` of the emphatically weighted n-step update,
/// built from the true emphasis `f_star`.
pub fn unbiased_fixed_point(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    features: &FeatureMap,
    n: usize,
) -> Result<DVector<f64>> {
    let truth = GroundTruth::compute(mdp, pair, n)?;
    unbiased_fixed_point_from(&truth, features)
}

/// `w*` from an already-computed [`GroundTruth`].
pub fn unbiased_fixed_point_from(
    truth: &GroundTruth,
    features: &FeatureMap,
) -> Result<DVector<f64>> {
    if features.num_states() != truth.d_mu.len() {
        return Err(Error::Shape(format!(
            "features have {} rows but the MDP has {} states",
            features.num_states(),
            truth.d_mu.len()
        )));
    }
    let d_f = DMatrix::from_diagonal(&truth.d_mu.component_mul(&truth.f_star));
    let phi = features.matrix();
    let a = phi.transpose() * &d_f * &truth.l * phi;
    let b = phi.transpose() * &d_f * &truth.r_pi_n;
    linalg::solve(&a, &b, "unbiased fixed point")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularPolicy;

    fn single_state(reward: f64, gamma: f64) -> (TabularMdp, PolicyPair) {
        let mdp =
            TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![reward]], vec![gamma]).unwrap();
        let pair = PolicyPair::on_policy(TabularPolicy::uniform(1, 1));
        (mdp, pair)
    }

    fn random_ish_mdp() -> (TabularMdp, PolicyPair) {
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1]],
                vec![vec![0.3, 0.3, 0.4], vec![0.25, 0.5, 0.25]],
                vec![vec![0.2, 0.2, 0.6], vec![0.4, 0.1, 0.5]],
            ],
            vec![vec![1.0, -0.5], vec![0.0, 2.0], vec![0.3, 0.3]],
            vec![0.9, 0.85, 0.8],
        )
        .unwrap();
        let target =
            TabularPolicy::new(vec![vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]]).unwrap();
        let behavior =
            TabularPolicy::new(vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.6, 0.4]]).unwrap();
        (mdp, PolicyPair::new(target, behavior).unwrap())
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let (mdp, pair) = single_state(0.0, 0.9);
        let v = true_values(&mdp, pair.target()).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn geometric_series_value() {
        let (mdp, pair) = single_state(1.0, 0.5);
        let v = true_values(&mdp, pair.target()).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn values_satisfy_bellman() {
        let (mdp, pair) = random_ish_mdp();
        let v = true_values(&mdp, pair.target()).unwrap();
        let p = discounted_transition(&mdp, pair.target()).unwrap();
        let residual = (&v - (expected_reward(&mdp, pair.target()) + p * &v)).amax();
        assert!(residual <= 1e-10, "residual {residual}");
    }

    #[test]
    fn gamma_zero_emphasis_is_one() {
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.5, 0.5]],
                vec![vec![0.5, 0.5]],
            ],
            vec![vec![0.0], vec![0.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let pair = PolicyPair::on_policy(TabularPolicy::uniform(2, 1));
        let f = expected_emphasis(&mdp, &pair, 3).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!((f[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn on_policy_constant_gamma_emphasis() {
        // on-policy, constant gamma: f = 1 / (1 - gamma^n)
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1]],
                vec![vec![0.3, 0.3, 0.4], vec![0.25, 0.5, 0.25]],
                vec![vec![0.2, 0.2, 0.6], vec![0.4, 0.1, 0.5]],
            ],
            vec![vec![0.0; 2]; 3],
            vec![0.8; 3],
        )
        .unwrap();
        let policy =
            TabularPolicy::new(vec![vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]]).unwrap();
        let pair = PolicyPair::on_policy(policy);
        for n in [1usize, 2, 4] {
            let f = expected_emphasis(&mdp, &pair, n).unwrap();
            let expected = 1.0 / (1.0 - 0.8f64.powi(n as i32));
            for s in 0..3 {
                assert!(
                    (f[s] - expected).abs() <= 1e-10,
                    "n={n} s={s}: {} vs {expected}",
                    f[s]
                );
            }
        }
    }

    #[test]
    fn emphasis_solves_defining_system() {
        let (mdp, pair) = random_ish_mdp();
        let n = 2;
        let f = expected_emphasis(&mdp, &pair, n).unwrap();
        let d_mu = mdp::stationary_default(&mdp, pair.behavior()).unwrap();
        let p = discounted_transition(&mdp, pair.target()).unwrap();
        let bn = matrix_power(&p.transpose(), n);
        let d = DMatrix::from_diagonal(&d_mu);
        let residual = (&d * &f - &bn * &d * &f - &d_mu).amax();
        assert!(residual <= 1e-10, "residual {residual}");
        assert!(f.min() >= 1.0 - 1e-12);
    }

    #[test]
    fn emphasis_divergence_detected() {
        // gamma = 1 everywhere: the n-step operator has spectral radius 1
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.5, 0.5]],
                vec![vec![0.5, 0.5]],
            ],
            vec![vec![0.0], vec![0.0]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let pair = PolicyPair::on_policy(TabularPolicy::uniform(2, 1));
        assert!(matches!(
            expected_emphasis(&mdp, &pair, 1),
            Err(Error::EmphasisDiverges { .. })
        ));
    }

    #[test]
    fn n_step_reward_basics() {
        let (mdp, pair) = random_ish_mdp();
        let r1 = n_step_reward_vector(&mdp, pair.target(), 1).unwrap();
        assert_eq!(r1, expected_reward(&mdp, pair.target()));
        assert!(n_step_reward_vector(&mdp, pair.target(), 0).is_err());
    }

    #[test]
    fn n_step_reward_scalar_partial_sum() {
        let (mdp, pair) = single_state(1.0, 0.5);
        let r3 = n_step_reward_vector(&mdp, pair.target(), 3).unwrap();
        assert!((r3[0] - 1.75).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_zero_rewards() {
        let (mdp, pair) = random_ish_mdp();
        let mdp_zero = TabularMdp::new(
            (0..3)
                .map(|s| {
                    (0..2)
                        .map(|a| (0..3).map(|s2| mdp.prob(s, a, s2)).collect())
                        .collect()
                })
                .collect(),
            vec![vec![0.0; 2]; 3],
            mdp.discounts().to_vec(),
        )
        .unwrap();
        let features = FeatureMap::tabular(3);
        let w = unbiased_fixed_point(&mdp_zero, &pair, &features, 2).unwrap();
        assert!(w.amax() < 1e-12);
    }

    #[test]
    fn tabular_fixed_point_solves_n_step_bellman() {
        let (mdp, pair) = random_ish_mdp();
        let n = 3;
        let features = FeatureMap::tabular(3);
        let w = unbiased_fixed_point(&mdp, &pair, &features, n).unwrap();
        // with Phi = I the fixed point solves v = r_pi^n + (P_pi Gamma)^n v
        let p = discounted_transition(&mdp, pair.target()).unwrap();
        let pn = matrix_power(&p, n);
        let r = n_step_reward_vector(&mdp, pair.target(), n).unwrap();
        let residual = (&w - (&r + &pn * &w)).amax();
        assert!(residual <= 1e-9, "residual {residual}");
        // and equals v_pi (the n-step and 1-step fixed points coincide)
        let v = true_values(&mdp, pair.target()).unwrap();
        assert!((&w - &v).amax() <= 1e-9);
    }
}
