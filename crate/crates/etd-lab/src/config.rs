//! TOML experiment configuration.
//!
//! Sections: `[mdp]` (dense tables or `builtin = "baird_modified"`),
//! `[policies]`, `[features]`, `[learner]`, `[experiment]`, and an optional
//! `[sweep]` grid. Unknown keys are rejected so typos fail loudly instead of
//! silently running the defaults.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Deserialize;

use crate::baird;
use crate::bench::{Algorithm, EmphasisSource, Experiment, Setting, SweepSpec};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::learners::LearnerConfig;
use crate::mdp::{PolicyPair, TabularMdp, TabularPolicy};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mdp: RawMdp,
    policies: Option<RawPolicies>,
    features: Option<RawFeatures>,
    #[serde(default)]
    learner: RawLearner,
    experiment: RawExperiment,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMdp {
    builtin: Option<String>,
    transition: Option<Vec<Vec<Vec<f64>>>>,
    reward: Option<Vec<Vec<f64>>>,
    discount: Option<Discount>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Discount {
    Constant(f64),
    PerState(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicies {
    target: Vec<Vec<f64>>,
    behavior: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatures {
    kind: Option<String>,
    rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawLearner {
    n: usize,
    alpha_w: f64,
    alpha_theta: f64,
    beta: f64,
    rho_bar: f64,
    c_bar: f64,
}

impl Default for RawLearner {
    fn default() -> Self {
        let d = LearnerConfig::default();
        Self {
            n: d.n,
            alpha_w: d.alpha_w,
            alpha_theta: d.alpha_theta,
            beta: d.beta,
            rho_bar: d.rho_bar,
            c_bar: d.c_bar,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    algorithm: String,
    total_steps: Option<u64>,
    num_runs: Option<usize>,
    seed_base: Option<u64>,
    eval_every: Option<u64>,
    emphasis_source: Option<String>,
    setting: Option<String>,
    start_state: Option<usize>,
    replay_capacity: Option<usize>,
    init_w: Option<Init>,
    init_theta: Option<Init>,
    value_clip: Option<f64>,
    decouple_value_sample: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Init {
    Named(String),
    Values(Vec<f64>),
}

impl Init {
    fn resolve(&self, k: usize, what: &str) -> Result<DVector<f64>> {
        match self {
            Init::Named(name) => match name.as_str() {
                "ones" => Ok(DVector::from_element(k, 1.0)),
                "zeros" => Ok(DVector::zeros(k)),
                other => Err(Error::Config(format!(
                    "{what}: unknown initializer {other:?} (expected \"ones\", \"zeros\", or an array)"
                ))),
            },
            Init::Values(values) => {
                if values.len() != k {
                    return Err(Error::Config(format!(
                        "{what}: expected {k} entries, got {}",
                        values.len()
                    )));
                }
                Ok(DVector::from_column_slice(values))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    alpha_w: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    algorithms: Option<Vec<String>>,
}

/// A parsed configuration: the base experiment plus an optional sweep grid.
#[derive(Debug, Clone)]
pub struct LabConfig {
    pub experiment: Experiment,
    pub sweep: Option<SweepSpec>,
}

/// Parse a TOML string into a validated configuration.
pub fn parse_config(text: &str) -> Result<LabConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("toml: {e}")))?;

    let builtin = raw.mdp.builtin.as_deref();
    let (mdp, pair, features) = match builtin {
        Some("baird_modified") => {
            if raw.mdp.transition.is_some() || raw.mdp.reward.is_some() || raw.mdp.discount.is_some()
            {
                return Err(Error::Config(
                    "mdp.builtin and explicit mdp tables are mutually exclusive".into(),
                ));
            }
            let (mdp, builtin_pair, builtin_features) = baird::baird_modified();
            let pair = match raw.policies {
                Some(p) => resolve_policies(&p)?,
                None => builtin_pair,
            };
            let features = match raw.features {
                Some(f) => Arc::new(resolve_features(&f, mdp.num_states())?),
                None => builtin_features,
            };
            (mdp, pair, features)
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown builtin MDP {other:?} (available: baird_modified)"
            )))
        }
        None => {
            let transition = raw.mdp.transition.ok_or_else(|| {
                Error::Config("mdp.transition is required unless mdp.builtin is set".into())
            })?;
            let reward = raw.mdp.reward.ok_or_else(|| {
                Error::Config("mdp.reward is required unless mdp.builtin is set".into())
            })?;
            let num_states = transition.len();
            let discount = match raw.mdp.discount {
                Some(Discount::Constant(g)) => vec![g; num_states],
                Some(Discount::PerState(v)) => v,
                None => return Err(Error::Config("mdp.discount is required".into())),
            };
            let mdp = TabularMdp::new(transition, reward, discount)?;
            let policies = raw
                .policies
                .ok_or_else(|| Error::Config("[policies] is required for explicit MDPs".into()))?;
            let pair = resolve_policies(&policies)?;
            let features = match raw.features {
                Some(f) => Arc::new(resolve_features(&f, mdp.num_states())?),
                None => Arc::new(FeatureMap::tabular(mdp.num_states())),
            };
            (mdp, pair, features)
        }
    };

    let learner = LearnerConfig {
        n: raw.learner.n,
        alpha_w: raw.learner.alpha_w,
        alpha_theta: raw.learner.alpha_theta,
        beta: raw.learner.beta,
        rho_bar: raw.learner.rho_bar,
        c_bar: raw.learner.c_bar,
    };

    let algorithm = Algorithm::parse(&raw.experiment.algorithm)?;
    let emphasis_source = match &raw.experiment.emphasis_source {
        Some(s) => EmphasisSource::parse(s)?,
        None => match algorithm {
            Algorithm::XetdN | Algorithm::XetdNMc => EmphasisSource::Learned,
            _ => EmphasisSource::MonteCarlo,
        },
    };
    let setting = match &raw.experiment.setting {
        Some(s) => Setting::parse(s)?,
        None => Experiment::default_setting(algorithm, emphasis_source),
    };

    let k = features.num_features();
    let init_w = match &raw.experiment.init_w {
        Some(init) => init.resolve(k, "experiment.init_w")?,
        None => DVector::from_element(k, 1.0),
    };
    let init_theta = match &raw.experiment.init_theta {
        Some(init) => init.resolve(k, "experiment.init_theta")?,
        None => DVector::zeros(k),
    };

    let mut experiment = Experiment::new(mdp, pair, features);
    experiment.algorithm = algorithm;
    experiment.learner = learner;
    experiment.emphasis_source = emphasis_source;
    experiment.setting = setting;
    experiment.total_steps = raw.experiment.total_steps.unwrap_or(200_000);
    experiment.num_runs = raw.experiment.num_runs.unwrap_or(1);
    experiment.seed_base = raw.experiment.seed_base.unwrap_or(0);
    experiment.eval_every = raw.experiment.eval_every.unwrap_or(100);
    experiment.start_state = raw.experiment.start_state.unwrap_or(0);
    experiment.replay_capacity = raw.experiment.replay_capacity.unwrap_or(10_000);
    experiment.init_w = init_w;
    experiment.init_theta = init_theta;
    experiment.value_clip = raw.experiment.value_clip;
    experiment.decouple_value_sample = raw.experiment.decouple_value_sample.unwrap_or(false);
    experiment.validate()?;

    let sweep = match raw.sweep {
        None => None,
        Some(s) => {
            let algorithms = match s.algorithms {
                Some(names) => names
                    .iter()
                    .map(|n| Algorithm::parse(n))
                    .collect::<Result<Vec<_>>>()?,
                None => vec![experiment.algorithm],
            };
            let defaults = SweepSpec::benchmark_grid(vec![]);
            Some(SweepSpec {
                alpha_w: s.alpha_w.unwrap_or(defaults.alpha_w),
                beta: s.beta.unwrap_or(defaults.beta),
                algorithms,
            })
        }
    };

    Ok(LabConfig { experiment, sweep })
}

fn resolve_policies(raw: &RawPolicies) -> Result<PolicyPair> {
    let target = TabularPolicy::new(raw.target.clone())?;
    let behavior = TabularPolicy::new(raw.behavior.clone())?;
    PolicyPair::new(target, behavior)
}

fn resolve_features(raw: &RawFeatures, num_states: usize) -> Result<FeatureMap> {
    match (raw.kind.as_deref(), &raw.rows) {
        (Some("tabular"), None) => Ok(FeatureMap::tabular(num_states)),
        (Some(other), None) => Err(Error::Config(format!(
            "unknown feature kind {other:?} (expected \"tabular\" or explicit rows)"
        ))),
        (None, Some(rows)) => {
            let fm = FeatureMap::from_rows(rows.clone())?;
            if fm.num_states() != num_states {
                return Err(Error::Config(format!(
                    "features.rows has {} rows but the MDP has {num_states} states",
                    fm.num_states()
                )));
            }
            Ok(fm)
        }
        (Some(_), Some(_)) => Err(Error::Config(
            "features.kind and features.rows are mutually exclusive".into(),
        )),
        (None, None) => Err(Error::Config(
            "[features] needs either kind = \"tabular\" or explicit rows".into(),
        )),
    }
}

/// Load and parse a configuration file.
pub fn load_config(path: &Path) -> Result<LabConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
