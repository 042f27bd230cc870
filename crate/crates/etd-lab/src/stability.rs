//! Limiting update matrices, positive-definiteness certificates, and the
//! constructive stability thresholds.
//!
//! For each learner the limiting expected update has the form
//! `w <- w + alpha (b - A w)`; the update is stable when `A` is positive
//! definite. Every `A` here factors as `Phi^T K Phi` (up to transposition)
//! for a state-space *key matrix* `K` of the shape `D (I - P)` with `D`
//! positive diagonal and `P` substochastic:
//!
//! - emphatically weighted n-step TD: `K = D_mu^f (I - (P_pi Gamma)^n)`
//! - time-reversed TD, clipped at rho_bar: `K = D_mu (I - P_rho_bar^n)`
//! - time-reversed TD + Monte Carlo loss: `K = D_mu ((1+beta) I - (P_pi Gamma)^n)`
//!
//! `K` positive definite together with full-column-rank features makes `A`
//! positive definite. With rank-deficient features (the over-parameterized
//! counterexample does this on purpose) `A` acquires the nullspace of `Phi`
//! and can only be positive semidefinite, so reports carry both verdicts
//! plus the feature rank.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg;
use crate::mdp::{self, PolicyPair, TabularMdp};
use crate::oracle::{self, matrix_power};

/// Minimum symmetric eigenvalue above which a matrix counts as positive
/// definite.
pub const PD_TOL: f64 = 1e-10;

/// Positive-definiteness verdict from the symmetric part `(A + A^T)/2`:
/// returns `(pd, min_sym_eig)`.
pub fn is_positive_definite(a: &DMatrix<f64>) -> Result<(bool, f64)> {
    let min_eig = linalg::min_symmetric_eigenvalue(a)?;
    Ok((min_eig > PD_TOL, min_eig))
}

/// Limiting X-ETD(n) pair for an emphasis weighting `f_vector`:
/// `A = Phi^T D_mu^f (I - (P_pi Gamma)^n) Phi`, `b = Phi^T D_mu^f r_pi^n`.
///
/// `f_vector = 1` gives off-policy TD(n); `f_vector = f_star` gives ETD(n)'s
/// limiting matrix.
pub fn build_a_xetd(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    features: &FeatureMap,
    f_vector: &DVector<f64>,
    n: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let key = key_matrix_xetd(mdp, pair, f_vector, n)?;
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let r_n = oracle::n_step_reward_vector(mdp, pair.target(), n)?;
    let phi = check_features(mdp, features)?;
    let weighted = d_mu.component_mul(f_vector);
    let a = phi.transpose() * &key * phi;
    let b = phi.transpose() * DMatrix::from_diagonal(&weighted) * r_n;
    Ok((a, b))
}

/// Key matrix `D_mu^f (I - (P_pi Gamma)^n)` for a weighting `f_vector`.
pub fn key_matrix_xetd(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    f_vector: &DVector<f64>,
    n: usize,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Shape("segment length n must be >= 1".into()));
    }
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    if f_vector.len() != d_mu.len() {
        return Err(Error::Shape(format!(
            "emphasis weighting has length {} for {} states",
            f_vector.len(),
            d_mu.len()
        )));
    }
    let p = oracle::discounted_transition(mdp, pair.target())?;
    let dim = d_mu.len();
    let l = DMatrix::identity(dim, dim) - matrix_power(&p, n);
    Ok(DMatrix::from_diagonal(&d_mu.component_mul(f_vector)) * l)
}

/// The substochastic clipped-ratio matrix
/// `P_rho_bar(s, s') = sum_a mu(a|s) min(rho(a|s), rho_bar) p(s'|s, a) gamma(s')`.
///
/// With `rho_bar = inf` this is exactly `P_pi Gamma`.
pub fn clipped_discounted_matrix(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    rho_bar: f64,
) -> Result<DMatrix<f64>> {
    let num_states = mdp.num_states();
    if pair.target().num_states() != num_states || pair.target().num_actions() != mdp.num_actions()
    {
        return Err(Error::Shape(
            "policy pair does not match the MDP dimensions".into(),
        ));
    }
    let mut m = DMatrix::zeros(num_states, num_states);
    for s in 0..num_states {
        for a in 0..mdp.num_actions() {
            let mu = pair.behavior().prob(s, a);
            if mu == 0.0 {
                continue;
            }
            let clipped = pair.rho(s, a).min(rho_bar);
            for s2 in 0..num_states {
                m[(s, s2)] += mu * clipped * mdp.prob(s, a, s2) * mdp.gamma(s2);
            }
        }
    }
    Ok(m)
}

/// Limiting update matrix of time-reversed TD(n),
/// `A = Phi^T (I - (P_rho_bar^T)^n) D_mu Phi`; `rho_bar = inf` gives the
/// unclipped learner.
pub fn build_a_reversed_td(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    features: &FeatureMap,
    n: usize,
    rho_bar: f64,
) -> Result<DMatrix<f64>> {
    let key = key_matrix_reversed_td(mdp, pair, n, rho_bar)?;
    let phi = check_features(mdp, features)?;
    // A is the transpose of Phi^T K Phi; same quadratic form either way
    Ok((phi.transpose() * &key * phi).transpose())
}

/// Key matrix `D_mu (I - P_rho_bar^n)` of the (possibly clipped)
/// time-reversed TD learner.
pub fn key_matrix_reversed_td(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    n: usize,
    rho_bar: f64,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Shape("segment length n must be >= 1".into()));
    }
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let p = clipped_discounted_matrix(mdp, pair, rho_bar)?;
    let dim = d_mu.len();
    let l = DMatrix::identity(dim, dim) - matrix_power(&p, n);
    Ok(DMatrix::from_diagonal(&d_mu) * l)
}

/// Limiting update matrix of the Monte-Carlo-regularized reversed TD,
/// `A = Phi^T ((1 + beta) I - (Gamma P_pi^T)^n) D_mu Phi`.
pub fn build_a_reversed_td_mc(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    features: &FeatureMap,
    n: usize,
    beta: f64,
) -> Result<DMatrix<f64>> {
    let key = key_matrix_reversed_td_mc(mdp, pair, n, beta)?;
    let phi = check_features(mdp, features)?;
    Ok((phi.transpose() * &key * phi).transpose())
}

/// Key matrix `D_mu ((1 + beta) I - (P_pi Gamma)^n)` of the MC-regularized
/// reversed TD learner.
pub fn key_matrix_reversed_td_mc(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    n: usize,
    beta: f64,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Shape("segment length n must be >= 1".into()));
    }
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
    }
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let p = oracle::discounted_transition(mdp, pair.target())?;
    let dim = d_mu.len();
    let scaled = DMatrix::identity(dim, dim) * (1.0 + beta) - matrix_power(&p, n);
    Ok(DMatrix::from_diagonal(&d_mu) * scaled)
}

/// Constant vector `b = Phi^T D_mu 1` of the reversed TD learners (the "+1"
/// reward collected at the segment's last state).
pub fn reversed_td_b(mdp: &TabularMdp, pair: &PolicyPair, features: &FeatureMap) -> Result<DVector<f64>> {
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let phi = check_features(mdp, features)?;
    Ok(phi.transpose() * d_mu)
}

/// `b = Phi^T D_mu (1 + beta f_star)` of the MC-regularized learner.
pub fn reversed_td_mc_b(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    features: &FeatureMap,
    n: usize,
    beta: f64,
) -> Result<DVector<f64>> {
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let f_star = oracle::expected_emphasis(mdp, pair, n)?;
    let phi = check_features(mdp, features)?;
    let weights = DVector::from_fn(d_mu.len(), |s, _| d_mu[s] * (1.0 + beta * f_star[s]));
    Ok(phi.transpose() * weights)
}

/// Clip threshold of Proposition-style stability for the clipped reversed
/// TD learner: `tau = 1 / max_s gamma(s)`; infinite when all discounts are 0.
pub fn clip_threshold_tau(mdp: &TabularMdp) -> f64 {
    let max_gamma = mdp.discounts().iter().cloned().fold(0.0f64, f64::max);
    if max_gamma > 0.0 {
        1.0 / max_gamma
    } else {
        f64::INFINITY
    }
}

/// Monte Carlo mixing threshold:
/// `xi = max(0, max_s (d_mu^T (P_pi Gamma)^n)(s) / d_mu(s) - 1)`.
pub fn mc_threshold_xi(mdp: &TabularMdp, pair: &PolicyPair, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Shape("segment length n must be >= 1".into()));
    }
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let p = oracle::discounted_transition(mdp, pair.target())?;
    let pushed = (d_mu.transpose() * matrix_power(&p, n)).transpose();
    let ratio = (0..d_mu.len())
        .map(|s| pushed[s] / d_mu[s])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((ratio - 1.0).max(0.0))
}

/// How much diagonal error the true-emphasis key matrix tolerates before
/// positive definiteness can break:
/// `eta0 = eta / ||I - (P_pi Gamma)^n||` with `eta` the minimum of the
/// quadratic form of `D_mu^f (I - (P_pi Gamma)^n)` on the unit sphere.
pub fn emphasis_error_budget_eta0(mdp: &TabularMdp, pair: &PolicyPair, n: usize) -> Result<f64> {
    let d_mu = mdp::stationary_default(mdp, pair.behavior())?;
    let f_star = oracle::expected_emphasis(mdp, pair, n)?;
    let p = oracle::discounted_transition(mdp, pair.target())?;
    let dim = d_mu.len();
    let l = DMatrix::identity(dim, dim) - matrix_power(&p, n);
    let (_, eta0) = stability_margin(&d_mu.component_mul(&f_star), &l)?;
    Ok(eta0)
}

/// `(eta, eta0)` for an arbitrary positive diagonal weighting against the
/// operator `l`; errors when the weighted key matrix is not positive
/// definite.
pub fn stability_margin(weighting: &DVector<f64>, l: &DMatrix<f64>) -> Result<(f64, f64)> {
    let key = DMatrix::from_diagonal(weighting) * l;
    let eta = linalg::min_symmetric_eigenvalue(&key)?;
    if eta <= PD_TOL {
        return Err(Error::NotPositiveDefinite { min_eig: eta });
    }
    Ok((eta, eta / linalg::spectral_norm(l)))
}

/// The three measurable quantities of the fixed-point suboptimality bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalityTerms {
    /// Spectral norm of the weighted emphasis-approximation error matrix
    /// `D_mu^eps = D_mu^theta - D_mu^f`.
    pub emphasis_error_norm: f64,
    /// `||Phi w_inf - v_pi||_2` for the fixed point under `f_vector`.
    pub value_error_norm: f64,
    /// `||Pi_{D_mu^f} v_pi - v_pi||_{D_mu^f}`: the weighted projection error
    /// of the true values onto the feature span.
    pub projection_error: f64,
}

/// Evaluate the suboptimality terms for a given emphasis weighting.
pub fn suboptimality_terms(
    mdp: &TabularMdp,
    pair: &PolicyPair,
    features: &FeatureMap,
    f_vector: &DVector<f64>,
    n: usize,
) -> Result<SuboptimalityTerms> {
    let truth = oracle::GroundTruth::compute(mdp, pair, n)?;
    let phi = check_features(mdp, features)?;

    // || D_mu^eps ||: diagonal, so the spectral norm is the largest entry
    let emphasis_error_norm = (0..truth.d_mu.len())
        .map(|s| (truth.d_mu[s] * (f_vector[s] - truth.f_star[s])).abs())
        .fold(0.0f64, f64::max);

    let (a, b) = build_a_xetd(mdp, pair, features, f_vector, n)?;
    let w_inf = linalg::solve(&a, &b, "biased fixed point")?;
    let value_error_norm = (phi * &w_inf - &truth.v_pi).norm();

    // weighted projection of v_pi onto span(Phi) under D_mu^f
    let d_f = DMatrix::from_diagonal(&truth.d_mu.component_mul(&truth.f_star));
    let gram = phi.transpose() * &d_f * phi;
    let rhs = phi.transpose() * &d_f * &truth.v_pi;
    let coeffs = linalg::solve(&gram, &rhs, "weighted projection")?;
    let residual = &truth.v_pi - phi * coeffs;
    let projection_error = (residual.transpose() * &d_f * &residual)[(0, 0)].sqrt();

    Ok(SuboptimalityTerms {
        emphasis_error_norm,
        value_error_norm,
        projection_error,
    })
}

/// The constructive thresholds, computed per `(mdp, pair, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Clip threshold `tau`: the clipped reversed TD key matrix is p.d. for
    /// every `rho_bar < tau`.
    pub tau: f64,
    /// MC mixing threshold `xi`: the MC-regularized key matrix is p.d. for
    /// every `beta > xi`.
    pub xi: f64,
    /// Emphasis error budget `eta0`; `None` when the true-emphasis key
    /// matrix itself is not positive definite.
    pub eta0: Option<f64>,
}

impl Thresholds {
    pub fn compute(mdp: &TabularMdp, pair: &PolicyPair, n: usize) -> Result<Self> {
        Ok(Self {
            tau: clip_threshold_tau(mdp),
            xi: mc_threshold_xi(mdp, pair, n)?,
            eta0: emphasis_error_budget_eta0(mdp, pair, n).ok(),
        })
    }
}

/// Stability certificate for one algorithm on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub algorithm: String,
    /// Limiting update matrix in feature space.
    pub a: DMatrix<f64>,
    /// Limiting update constant.
    pub b: DVector<f64>,
    /// Positive definiteness of `a`.
    pub pd: bool,
    pub min_sym_eig: f64,
    /// Positive definiteness of the state-space key matrix.
    pub key_pd: bool,
    pub key_min_sym_eig: f64,
    /// `A^-1 b` when `a` is invertible.
    pub fixed_point: Option<DVector<f64>>,
    pub feature_rank: usize,
    pub num_features: usize,
    pub thresholds: Thresholds,
}

impl StabilityReport {
    pub fn assemble(
        algorithm: impl Into<String>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        key: &DMatrix<f64>,
        features: &FeatureMap,
        thresholds: Thresholds,
    ) -> Result<Self> {
        let (pd, min_sym_eig) = is_positive_definite(&a)?;
        let (key_pd, key_min_sym_eig) = is_positive_definite(key)?;
        let fixed_point = linalg::solve(&a, &b, "fixed point").ok();
        Ok(Self {
            algorithm: algorithm.into(),
            pd,
            min_sym_eig,
            key_pd,
            key_min_sym_eig,
            fixed_point,
            feature_rank: features.rank(),
            num_features: features.num_features(),
            a,
            b,
            thresholds,
        })
    }
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "algorithm: {}", self.algorithm)?;
        writeln!(
            f,
            "update matrix A ({dim}x{dim}): pd = {pd} (min symmetric eigenvalue {eig:.6e})",
            dim = self.a.nrows(),
            pd = self.pd,
            eig = self.min_sym_eig
        )?;
        writeln!(
            f,
            "key matrix: pd = {} (min symmetric eigenvalue {:.6e})",
            self.key_pd, self.key_min_sym_eig
        )?;
        writeln!(
            f,
            "feature rank: {} of {} columns{}",
            self.feature_rank,
            self.num_features,
            if self.feature_rank < self.num_features {
                " (rank-deficient: A inherits the nullspace of Phi)"
            } else {
                ""
            }
        )?;
        writeln!(
            f,
            "thresholds: tau = {:.12}, xi = {:.12}, eta0 = {}",
            self.thresholds.tau,
            self.thresholds.xi,
            match self.thresholds.eta0 {
                Some(e) => format!("{e:.12}"),
                None => "n/a (true-emphasis key matrix not p.d.)".into(),
            }
        )?;
        match &self.fixed_point {
            Some(w) => {
                let entries: Vec<String> = w.iter().map(|x| format!("{x:.6}")).collect();
                writeln!(f, "fixed point A^-1 b: [{}]", entries.join(", "))
            }
            None => writeln!(f, "fixed point A^-1 b: none (A singular)"),
        }
    }
}

fn check_features<'a>(mdp: &TabularMdp, features: &'a FeatureMap) -> Result<&'a DMatrix<f64>> {
    if features.num_states() != mdp.num_states() {
        return Err(Error::Shape(format!(
            "features have {} rows but the MDP has {} states",
            features.num_states(),
            mdp.num_states()
        )));
    }
    Ok(features.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baird;
    use crate::mdp::TabularPolicy;

    // Golden values computed independently from the closed forms
    // (dense solves in double precision, verified against Monte Carlo).
    const BAIRD_TAU: f64 = 1.0526315789473684;
    const BAIRD_XI_N1: f64 = 3.655;
    const BAIRD_ETA0_N1: f64 = 0.12537181113371262;
    const BAIRD_TD_KEY_MIN_EIG_N1: f64 = -0.016708292771315605;
    const BAIRD_ETD_KEY_MIN_EIG_N1: f64 = 0.1363264852479014;
    const BAIRD_CLIPPED_KEY_MIN_EIG_N1: f64 = 0.018848331449360954;

    fn on_policy_chain() -> (TabularMdp, PolicyPair) {
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.7, 0.3], vec![0.4, 0.6]],
                vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            ],
            vec![vec![1.0, 0.0], vec![0.5, -0.5]],
            vec![0.9, 0.8],
        )
        .unwrap();
        let policy = TabularPolicy::new(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        (mdp, PolicyPair::on_policy(policy))
    }

    #[test]
    fn pd_verdicts_on_canonical_matrices() {
        let (pd, eig) = is_positive_definite(&DMatrix::identity(3, 3)).unwrap();
        assert!(pd);
        assert!((eig - 1.0).abs() < 1e-12);

        let (pd, eig) = is_positive_definite(&DMatrix::zeros(2, 2)).unwrap();
        assert!(!pd);
        assert_eq!(eig, 0.0);

        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let (pd, eig) = is_positive_definite(&skew).unwrap();
        assert!(!pd);
        assert_eq!(eig, 0.0);

        assert!(is_positive_definite(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn tau_values() {
        let (mdp, _) = on_policy_chain();
        assert!((clip_threshold_tau(&mdp) - 1.0 / 0.9).abs() < 1e-15);

        let all_zero =
            TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![0.0]], vec![0.0]).unwrap();
        assert_eq!(clip_threshold_tau(&all_zero), f64::INFINITY);

        let half = TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![0.0]], vec![0.5]).unwrap();
        assert_eq!(clip_threshold_tau(&half), 2.0);
    }

    #[test]
    fn baird_tau_golden() {
        let (mdp, _, _) = baird::baird_modified();
        assert!((clip_threshold_tau(&mdp) - BAIRD_TAU).abs() < 1e-15);
    }

    #[test]
    fn xi_on_policy_constant_gamma_is_zero() {
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.7, 0.3], vec![0.4, 0.6]],
                vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            ],
            vec![vec![0.0; 2]; 2],
            vec![0.8, 0.8],
        )
        .unwrap();
        let pair = PolicyPair::on_policy(TabularPolicy::uniform(2, 2));
        for n in [1, 2, 3] {
            assert!(mc_threshold_xi(&mdp, &pair, n).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn xi_gamma_zero_is_zero() {
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.5, 0.5]],
                vec![vec![0.5, 0.5]],
            ],
            vec![vec![0.0]; 2],
            vec![0.0, 0.0],
        )
        .unwrap();
        let pair = PolicyPair::on_policy(TabularPolicy::uniform(2, 1));
        assert_eq!(mc_threshold_xi(&mdp, &pair, 1).unwrap(), 0.0);
    }

    #[test]
    fn baird_xi_golden() {
        let (mdp, pair, _) = baird::baird_modified();
        let xi = mc_threshold_xi(&mdp, &pair, 1).unwrap();
        assert!((xi - BAIRD_XI_N1).abs() < 1e-12, "xi = {xi}");
    }

    #[test]
    fn baird_eta0_golden() {
        let (mdp, pair, _) = baird::baird_modified();
        let eta0 = emphasis_error_budget_eta0(&mdp, &pair, 1).unwrap();
        assert!(
            (eta0 - BAIRD_ETA0_N1).abs() < 1e-12,
            "eta0 = {eta0:.17} vs {BAIRD_ETA0_N1:.17}"
        );
    }

    #[test]
    fn eta0_scales_linearly_with_weighting() {
        let (mdp, pair) = on_policy_chain();
        let d_mu = mdp::stationary_default(&mdp, pair.behavior()).unwrap();
        let f = oracle::expected_emphasis(&mdp, &pair, 1).unwrap();
        let p = oracle::discounted_transition(&mdp, pair.target()).unwrap();
        let l = DMatrix::identity(2, 2) - &p;
        let w = d_mu.component_mul(&f);
        let (eta, eta0) = stability_margin(&w, &l).unwrap();
        let (eta2, eta0_2) = stability_margin(&(&w * 2.0), &l).unwrap();
        assert!((eta2 - 2.0 * eta).abs() < 1e-12);
        assert!((eta0_2 - 2.0 * eta0).abs() < 1e-12);
    }

    #[test]
    fn eta0_positive_on_on_policy_chain() {
        let (mdp, pair) = on_policy_chain();
        assert!(emphasis_error_budget_eta0(&mdp, &pair, 1).unwrap() > 0.0);
    }

    #[test]
    fn baird_key_matrices_golden() {
        let (mdp, pair, _) = baird::baird_modified();
        let ones = DVector::from_element(7, 1.0);
        let td_key = key_matrix_xetd(&mdp, &pair, &ones, 1).unwrap();
        let (pd, eig) = is_positive_definite(&td_key).unwrap();
        assert!(!pd);
        assert!((eig - BAIRD_TD_KEY_MIN_EIG_N1).abs() < 1e-12, "eig = {eig:.17}");

        let f_star = oracle::expected_emphasis(&mdp, &pair, 1).unwrap();
        let etd_key = key_matrix_xetd(&mdp, &pair, &f_star, 1).unwrap();
        let (pd, eig) = is_positive_definite(&etd_key).unwrap();
        assert!(pd);
        assert!((eig - BAIRD_ETD_KEY_MIN_EIG_N1).abs() < 1e-12, "eig = {eig:.17}");

        let clipped = key_matrix_reversed_td(&mdp, &pair, 1, 1.0).unwrap();
        let (pd, eig) = is_positive_definite(&clipped).unwrap();
        assert!(pd);
        assert!(
            (eig - BAIRD_CLIPPED_KEY_MIN_EIG_N1).abs() < 1e-12,
            "eig = {eig:.17}"
        );
    }

    #[test]
    fn baird_feature_matrix_a_is_only_semidefinite() {
        // 8 features over 7 states: A inherits the nullspace of Phi even
        // under the true emphasis
        let (mdp, pair, features) = baird::baird_modified();
        let f_star = oracle::expected_emphasis(&mdp, &pair, 1).unwrap();
        let (a, b) = build_a_xetd(&mdp, &pair, &features, &f_star, 1).unwrap();
        let (pd, eig) = is_positive_definite(&a).unwrap();
        assert!(!pd);
        assert!(eig.abs() < 1e-10);
        assert!(b.amax() < 1e-14); // zero rewards
        assert_eq!(features.rank(), 7);
        assert_eq!(features.num_features(), 8);
    }

    #[test]
    fn unclipped_reversed_td_matches_gamma_ppi_transpose_form() {
        let (mdp, pair) = on_policy_chain();
        let features = FeatureMap::tabular(2);
        let n = 2;
        let a = build_a_reversed_td(&mdp, &pair, &features, n, f64::INFINITY).unwrap();
        let d_mu = mdp::stationary_default(&mdp, pair.behavior()).unwrap();
        let p = oracle::discounted_transition(&mdp, pair.target()).unwrap();
        let expected = DMatrix::identity(2, 2)
            - matrix_power(&p.transpose(), n);
        let expected = expected * DMatrix::from_diagonal(&d_mu);
        assert!((a - expected).amax() < 1e-12);
    }

    #[test]
    fn reversed_td_on_policy_unclipped_is_pd() {
        let (mdp, pair) = on_policy_chain();
        let features = FeatureMap::tabular(2);
        let a = build_a_reversed_td(&mdp, &pair, &features, 1, f64::INFINITY).unwrap();
        let (pd, _) = is_positive_definite(&a).unwrap();
        assert!(pd);
    }

    #[test]
    fn reversed_td_zero_clip_is_gram_matrix() {
        let (mdp, pair) = on_policy_chain();
        let features = FeatureMap::tabular(2);
        let a = build_a_reversed_td(&mdp, &pair, &features, 1, f64::MIN_POSITIVE).unwrap();
        let d_mu = mdp::stationary_default(&mdp, pair.behavior()).unwrap();
        // clip ~ 0 removes the bootstrap term entirely
        assert!((&a - DMatrix::from_diagonal(&d_mu)).amax() < 1e-12);
        let (pd, _) = is_positive_definite(&a).unwrap();
        assert!(pd);
    }

    #[test]
    fn mc_variant_beta_zero_equals_unclipped() {
        let (mdp, pair) = on_policy_chain();
        let features = FeatureMap::tabular(2);
        let a = build_a_reversed_td_mc(&mdp, &pair, &features, 2, 0.0).unwrap();
        let b = build_a_reversed_td(&mdp, &pair, &features, 2, f64::INFINITY).unwrap();
        assert!((a - b).amax() < 1e-14);
    }

    #[test]
    fn mc_variant_large_beta_dominates() {
        let (mdp, pair, _) = baird::baird_modified();
        let key = key_matrix_reversed_td_mc(&mdp, &pair, 1, 1000.0).unwrap();
        let (pd, _) = is_positive_definite(&key).unwrap();
        assert!(pd);
    }

    #[test]
    fn mc_variant_above_xi_is_pd_below_may_fail() {
        let (mdp, pair, _) = baird::baird_modified();
        let xi = mc_threshold_xi(&mdp, &pair, 1).unwrap();
        let above = key_matrix_reversed_td_mc(&mdp, &pair, 1, xi + 1e-6).unwrap();
        assert!(is_positive_definite(&above).unwrap().0);
        // just below xi the sufficient condition fails; on this problem the
        // verdict actually flips well below, at beta = 0
        let at_zero = key_matrix_reversed_td_mc(&mdp, &pair, 1, 0.0).unwrap();
        assert!(!is_positive_definite(&at_zero).unwrap().0);
    }

    #[test]
    fn suboptimality_zero_rewards_and_true_emphasis() {
        let (mdp, pair, _) = baird::baird_modified();
        // tabular features keep every matrix invertible
        let features = FeatureMap::tabular(7);
        let f_star = oracle::expected_emphasis(&mdp, &pair, 1).unwrap();
        let terms = suboptimality_terms(&mdp, &pair, &features, &f_star, 1).unwrap();
        assert!(terms.emphasis_error_norm < 1e-12);
        assert!(terms.value_error_norm < 1e-10);
        assert!(terms.projection_error < 1e-10);
    }

    #[test]
    fn suboptimality_tabular_features_recover_bellman_solution() {
        let (mdp, pair) = on_policy_chain();
        let features = FeatureMap::tabular(2);
        let f_star = oracle::expected_emphasis(&mdp, &pair, 2).unwrap();
        let terms = suboptimality_terms(&mdp, &pair, &features, &f_star, 2).unwrap();
        // representable: projection error vanishes and w_inf = v_pi
        assert!(terms.projection_error < 1e-10);
        assert!(terms.value_error_norm < 1e-9);
    }

    #[test]
    fn report_assembles_and_prints() {
        let (mdp, pair, features) = baird::baird_modified();
        let f_star = oracle::expected_emphasis(&mdp, &pair, 1).unwrap();
        let (a, b) = build_a_xetd(&mdp, &pair, &features, &f_star, 1).unwrap();
        let key = key_matrix_xetd(&mdp, &pair, &f_star, 1).unwrap();
        let thresholds = Thresholds::compute(&mdp, &pair, 1).unwrap();
        let report =
            StabilityReport::assemble("etd_n", a, b, &key, &features, thresholds).unwrap();
        assert!(report.key_pd);
        assert!(!report.pd);
        assert!(report.fixed_point.is_none());
        assert_eq!(report.feature_rank, 7);
        let text = report.to_string();
        assert!(text.contains("rank-deficient"));
        assert!(text.contains("tau = 1.05263157"));
        // machine-readable round trip
        let json = serde_json::to_string(&report).unwrap();
        let back: StabilityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
