//! Incremental off-policy update rules over n-step segments.
//!
//! All value learners share one forward kernel, the importance-weighted
//! n-step TD correction at the segment's first state:
//!
//! ```text
//! scalar = sum_{k=0}^{n-1} (prod_{i<k} c_i gamma_{i+1}) q_k delta_k,
//! delta_k = R_{k+1} + gamma_{k+1} v(S_{k+1}) - v(S_k)
//! ```
//!
//! with `c_i = min(c_bar, rho_i)` and `q_k = min(rho_bar, rho_k)`. Plain
//! TD(n) is the kernel with infinite clips, V-trace is the kernel with
//! finite clips, and the emphatic learners scale the kernel by a followon
//! trace (ETD) or a learned expected emphasis (X-ETD). Because `min(x, inf)`
//! is exactly `x`, the reduction identities between these rules hold
//! bit-for-bit, not just to rounding.
//!
//! The emphasis learners run in the reverse direction of time: the bootstrap
//! flows from the segment's first state to its last, and the semi-gradient
//! direction is the feature vector of the *last* state only.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LinearFunction;
use crate::mdp::Transition;

/// Followon traces saturate here instead of overflowing to infinity; the
/// importance-ratio products that feed them can have unbounded variance.
pub const FOLLOWON_SATURATION: f64 = 1e300;

/// An n-step window `(S_0, A_0, R_1, ..., S_n)` of chained transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    transitions: Vec<Transition>,
}

impl Segment {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Shape("segment must contain at least one transition".into()));
        }
        for pair in transitions.windows(2) {
            if pair[0].next_state != pair[1].state {
                return Err(Error::Shape(format!(
                    "segment breaks the chain: next_state {} followed by state {}",
                    pair[0].next_state, pair[1].state
                )));
            }
        }
        Ok(Self { transitions })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// `S_0`
    pub fn first_state(&self) -> usize {
        self.transitions[0].state
    }

    /// `S_n`
    pub fn last_state(&self) -> usize {
        self.transitions[self.transitions.len() - 1].next_state
    }

    /// Drop the oldest transition and append `next`, keeping the window
    /// chained. This is how the sequential run loop advances in place.
    pub fn slide(&mut self, next: Transition) -> Result<()> {
        if self.last_state() != next.state {
            return Err(Error::Shape(format!(
                "cannot slide: window ends at state {} but new transition starts at {}",
                self.last_state(),
                next.state
            )));
        }
        self.transitions.rotate_left(1);
        *self.transitions.last_mut().expect("non-empty") = next;
        Ok(())
    }
}

/// Incremental n-step followon trace
/// `F_t = (prod_{i=t-n}^{t-1} rho_i gamma_{i+1}) F_{t-n} + 1`,
/// with `F_0 = ... = F_{n-1} = 1`.
///
/// `current()` is `F_t`; feeding transition `t`'s factor to [`advance`]
/// moves the clock to `F_{t+1}`.
///
/// [`advance`]: FollowonState::advance
#[derive(Debug, Clone)]
pub struct FollowonState {
    n: usize,
    time: u64,
    /// Last n trace values, front = F_{t-n+1} (seeded with the initial ones).
    history: VecDeque<f64>,
    /// Last n factors rho_i * gamma_{i+1}, front = oldest.
    factors: VecDeque<f64>,
    saturated: bool,
}

impl FollowonState {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("segment length n must be >= 1".into()));
        }
        Ok(Self {
            n,
            time: 0,
            history: std::iter::repeat_n(1.0, n).collect(),
            factors: VecDeque::with_capacity(n),
            saturated: false,
        })
    }

    /// `F_t` for the current time `t`.
    pub fn current(&self) -> f64 {
        *self.history.back().expect("history is never empty")
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Consume transition `t`'s factor `rho_t * gamma_{t+1}` and return
    /// `F_{t+1}`. Inside the initialization window the trace stays 1.
    pub fn advance(&mut self, rho: f64, gamma_next: f64) -> f64 {
        self.factors.push_back(rho * gamma_next);
        if self.factors.len() > self.n {
            self.factors.pop_front();
        }
        self.time += 1;
        let next = if self.time < self.n as u64 {
            1.0
        } else {
            let product: f64 = self.factors.iter().product();
            let f = product * self.history.front().expect("seeded") + 1.0;
            if f > FOLLOWON_SATURATION || !f.is_finite() {
                if !self.saturated {
                    log::warn!(
                        "followon trace saturated at {FOLLOWON_SATURATION:e} (t = {})",
                        self.time
                    );
                    self.saturated = true;
                }
                FOLLOWON_SATURATION
            } else {
                f
            }
        };
        self.history.pop_front();
        self.history.push_back(next);
        next
    }
}

/// Hyperparameters shared by the learners. `rho_bar`/`c_bar` of infinity
/// mean unclipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Segment length.
    pub n: usize,
    /// Value step size.
    pub alpha_w: f64,
    /// Emphasis step size.
    pub alpha_theta: f64,
    /// Weight of the auxiliary Monte Carlo emphasis loss.
    pub beta: f64,
    /// IS clip applied to the TD-error coefficient.
    pub rho_bar: f64,
    /// IS clip applied inside the bootstrap products.
    pub c_bar: f64,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("learner.n must be >= 1".into()));
        }
        if !self.alpha_w.is_finite() || self.alpha_w <= 0.0 {
            return Err(Error::Config(format!(
                "learner.alpha_w must be a positive finite number, got {}",
                self.alpha_w
            )));
        }
        if !self.alpha_theta.is_finite() || self.alpha_theta <= 0.0 {
            return Err(Error::Config(format!(
                "learner.alpha_theta must be a positive finite number, got {}",
                self.alpha_theta
            )));
        }
        if self.beta.is_nan() || self.beta < 0.0 || self.beta == f64::INFINITY {
            return Err(Error::Config(format!(
                "learner.beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if self.rho_bar.is_nan() || self.rho_bar <= 0.0 {
            return Err(Error::Config(format!(
                "learner.rho_bar must be > 0 (inf for unclipped), got {}",
                self.rho_bar
            )));
        }
        if self.c_bar.is_nan() || self.c_bar <= 0.0 {
            return Err(Error::Config(format!(
                "learner.c_bar must be > 0 (inf for unclipped), got {}",
                self.c_bar
            )));
        }
        Ok(())
    }
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            n: 1,
            alpha_w: 2f64.powi(-10),
            alpha_theta: 2f64.powi(-10),
            beta: 0.0,
            rho_bar: f64::INFINITY,
            c_bar: f64::INFINITY,
        }
    }
}

/// The shared forward kernel: clipped importance-weighted n-step TD scalar
/// at the segment's first state.
pub fn clipped_n_step_scalar(
    seg: &Segment,
    v: &LinearFunction,
    rho_bar: f64,
    c_bar: f64,
) -> f64 {
    let features = v.features();
    let mut scalar = 0.0;
    let mut coeff = 1.0;
    let mut value_here = v.evaluate(seg.first_state());
    for t in seg.transitions() {
        let value_next = features.dot(t.next_state, v.weights());
        let delta = t.reward + t.gamma_next * value_next - value_here;
        scalar += coeff * t.rho.min(rho_bar) * delta;
        coeff *= t.rho.min(c_bar) * t.gamma_next;
        value_here = value_next;
    }
    scalar
}

/// The unclipped n-step TD correction and its gradient direction `phi(S_0)`.
pub fn n_step_delta(seg: &Segment, v: &LinearFunction) -> (f64, DVector<f64>) {
    let scalar = clipped_n_step_scalar(seg, v, f64::INFINITY, f64::INFINITY);
    let phi0 = v.features().row(seg.first_state()).transpose();
    (scalar, phi0)
}

fn step_first_state(seg: &Segment, v: &LinearFunction, step: f64) -> LinearFunction {
    let mut w = v.weights().clone();
    let features = v.features();
    let s0 = seg.first_state();
    for k in 0..w.len() {
        w[k] += step * features.matrix()[(s0, k)];
    }
    v.with_weights(w)
}

/// Off-policy TD(n): `w += alpha * scalar * phi(S_0)`.
pub fn td_n_update(seg: &Segment, v: &LinearFunction, alpha: f64) -> LinearFunction {
    let scalar = clipped_n_step_scalar(seg, v, f64::INFINITY, f64::INFINITY);
    step_first_state(seg, v, alpha * scalar)
}

/// ETD(n): TD(n) scaled by the followon trace at the segment's first state.
pub fn etd_n_update(seg: &Segment, v: &LinearFunction, followon: f64, alpha: f64) -> LinearFunction {
    let scalar = clipped_n_step_scalar(seg, v, f64::INFINITY, f64::INFINITY);
    step_first_state(seg, v, alpha * followon * scalar)
}

/// V-trace: the kernel with finite clips `c_bar` inside the products and
/// `rho_bar` on the TD errors.
pub fn vtrace_update(
    seg: &Segment,
    v: &LinearFunction,
    config: &LearnerConfig,
    alpha: f64,
) -> LinearFunction {
    let scalar = clipped_n_step_scalar(seg, v, config.rho_bar, config.c_bar);
    step_first_state(seg, v, alpha * scalar)
}

/// X-ETD(n): TD(n) scaled by the learned expected emphasis `f(S_0)`.
pub fn xetd_n_update(
    seg: &Segment,
    v: &LinearFunction,
    emphasis: &LinearFunction,
    alpha: f64,
) -> LinearFunction {
    xetd_n_update_weighted(seg, v, emphasis.evaluate(seg.first_state()), alpha, f64::INFINITY)
}

/// X-ETD(n) with the emphasis already evaluated at `S_0`, optionally clipping
/// the IS ratios inside the value correction (both product and TD-error
/// coefficients, V-trace style).
pub fn xetd_n_update_weighted(
    seg: &Segment,
    v: &LinearFunction,
    emphasis_at_start: f64,
    alpha: f64,
    value_clip: f64,
) -> LinearFunction {
    let scalar = clipped_n_step_scalar(seg, v, value_clip, value_clip);
    step_first_state(seg, v, alpha * emphasis_at_start * scalar)
}

/// Backward (time-reversed) bootstrap product and target for the emphasis
/// learner on one segment, with IS ratios clipped at `rho_bar`.
fn reversed_td_error(seg: &Segment, f: &LinearFunction, rho_bar: f64) -> f64 {
    let mut product = 1.0;
    for t in seg.transitions() {
        product *= t.gamma_next * t.rho.min(rho_bar);
    }
    product * f.evaluate(seg.first_state()) + 1.0 - f.evaluate(seg.last_state())
}

fn step_last_state(seg: &Segment, f: &LinearFunction, step: f64) -> LinearFunction {
    let mut w = f.weights().clone();
    let features = f.features();
    let sn = seg.last_state();
    for k in 0..w.len() {
        w[k] += step * features.matrix()[(sn, k)];
    }
    f.with_weights(w)
}

/// Time-reversed TD: semi-gradient step in the direction of `phi(S_n)` only;
/// no gradient flows through the bootstrap at `f(S_0)`.
pub fn reversed_td_update(seg: &Segment, f: &LinearFunction, alpha_theta: f64) -> LinearFunction {
    let err = reversed_td_error(seg, f, f64::INFINITY);
    step_last_state(seg, f, alpha_theta * err)
}

/// Time-reversed TD with every IS ratio replaced by `min(rho, rho_bar)`.
pub fn reversed_td_clipped_update(
    seg: &Segment,
    f: &LinearFunction,
    alpha_theta: f64,
    rho_bar: f64,
) -> LinearFunction {
    let err = reversed_td_error(seg, f, rho_bar);
    step_last_state(seg, f, alpha_theta * err)
}

/// Time-reversed TD on a replayed segment plus a Monte Carlo regression of
/// `f` onto the followon trace observed on the online stream:
/// `theta += alpha [td_error phi(S_n^k) + beta (F - f(S)) phi(S)]`.
///
/// The `(online_state, online_followon)` pair must come from the sequential
/// stream; replayed segments carry no valid followon trace.
pub fn reversed_td_mc_update(
    seg_iid: &Segment,
    online_state: usize,
    online_followon: f64,
    f: &LinearFunction,
    alpha_theta: f64,
    beta: f64,
) -> LinearFunction {
    // one simultaneous update: both residuals are evaluated at the incoming
    // weights before either term is applied
    let td_step = alpha_theta * reversed_td_error(seg_iid, f, f64::INFINITY);
    let mut w = f.weights().clone();
    let features = f.features();
    let sn = seg_iid.last_state();
    for k in 0..w.len() {
        w[k] += td_step * features.matrix()[(sn, k)];
    }
    if beta > 0.0 {
        let mc_step = alpha_theta * beta * (online_followon - f.evaluate(online_state));
        for k in 0..w.len() {
            w[k] += mc_step * features.matrix()[(online_state, k)];
        }
    }
    f.with_weights(w)
}
