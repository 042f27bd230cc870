//! The seven-state over-parameterized counterexample MDP used by the
//! benchmark harness.
//!
//! Six "top" states and one bottom state, two actions. The `solid` action
//! always moves to the bottom state (a self-loop from the bottom); the
//! `dashed` action moves uniformly to one of the six top states. The target
//! policy takes `solid` with probability 0.3 while the behavior policy takes
//! it with probability 6/7, so the bottom state is visited far more often
//! than the target policy would visit it. Values use 8 features over 7
//! states: representable, but deliberately rank-deficient.

use std::sync::Arc;

use crate::features::FeatureMap;
use crate::mdp::{PolicyPair, TabularMdp, TabularPolicy};

pub const BAIRD_NUM_STATES: usize = 7;
pub const BAIRD_NUM_FEATURES: usize = 8;
pub const BAIRD_GAMMA: f64 = 0.95;

/// Index of the `solid` action.
pub const ACTION_SOLID: usize = 0;
/// Index of the `dashed` action.
pub const ACTION_DASHED: usize = 1;

/// Build the modified counterexample: `(mdp, policies, features)`.
pub fn baird_modified() -> (TabularMdp, PolicyPair, Arc<FeatureMap>) {
    let bottom = BAIRD_NUM_STATES - 1;
    let mut transition = Vec::with_capacity(BAIRD_NUM_STATES);
    for _ in 0..BAIRD_NUM_STATES {
        let mut solid = vec![0.0; BAIRD_NUM_STATES];
        solid[bottom] = 1.0;
        let mut dashed = vec![1.0 / 6.0; BAIRD_NUM_STATES];
        dashed[bottom] = 0.0;
        transition.push(vec![solid, dashed]);
    }
    let reward = vec![vec![0.0, 0.0]; BAIRD_NUM_STATES];
    let discount = vec![BAIRD_GAMMA; BAIRD_NUM_STATES];
    let mdp = TabularMdp::new(transition, reward, discount).expect("builtin MDP is valid");

    let target = TabularPolicy::homogeneous(BAIRD_NUM_STATES, vec![0.3, 0.7])
        .expect("builtin policy is valid");
    let behavior = TabularPolicy::homogeneous(BAIRD_NUM_STATES, vec![6.0 / 7.0, 1.0 / 7.0])
        .expect("builtin policy is valid");
    let pair = PolicyPair::new(target, behavior).expect("builtin pair has coverage");

    let mut rows = vec![vec![0.0; BAIRD_NUM_FEATURES]; BAIRD_NUM_STATES];
    for (i, row) in rows.iter_mut().enumerate().take(6) {
        row[i] = 2.0;
        row[BAIRD_NUM_FEATURES - 1] = 1.0;
    }
    rows[bottom][BAIRD_NUM_FEATURES - 2] = 1.0;
    rows[bottom][BAIRD_NUM_FEATURES - 1] = 2.0;
    let features = Arc::new(FeatureMap::from_rows(rows).expect("builtin features are valid"));

    (mdp, pair, features)
}
