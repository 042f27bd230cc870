//! The experiment harness: seeded runs, hyperparameter sweeps, and
//! stability analysis for a configured problem.
//!
//! A run simulates one behavior stream. Sequential learners update on the
//! sliding n-step window; replay learners push every window into a FIFO
//! buffer and update on uniformly sampled segments, while the followon trace
//! keeps ticking on the online stream (the Monte Carlo regression target
//! needs it, and so do the sequential baselines). Value RMSE is the
//! unweighted root-mean-square of `Phi w - v_pi` over states; trace RMSE is
//! the same against the true expected emphasis.
//!
//! Determinism contract: a record is a pure function of the experiment and
//! `seed_base + run_index`. Runs may execute in parallel; records are sorted
//! before emission.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv::{EvalRow, RunRecord};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, LinearFunction};
use crate::learners::{self, FollowonState, LearnerConfig, Segment};
use crate::mdp::{PolicyPair, StreamSampler, TabularMdp};
use crate::oracle::GroundTruth;
use crate::replay::ReplayBuffer;
use crate::stability::{self, StabilityReport, Thresholds};

/// Any weight beyond this magnitude marks the run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    TdN,
    EtdN,
    Vtrace,
    XetdN,
    XetdNMc,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::TdN => "td_n",
            Algorithm::EtdN => "etd_n",
            Algorithm::Vtrace => "vtrace",
            Algorithm::XetdN => "xetd_n",
            Algorithm::XetdNMc => "xetd_n_mc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "td_n" => Ok(Algorithm::TdN),
            "etd_n" => Ok(Algorithm::EtdN),
            "vtrace" => Ok(Algorithm::Vtrace),
            "xetd_n" => Ok(Algorithm::XetdN),
            "xetd_n_mc" => Ok(Algorithm::XetdNMc),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected td_n, etd_n, vtrace, xetd_n, xetd_n_mc)"
            ))),
        }
    }

    /// Does this algorithm sweep the beta axis (emphasis learner present)?
    pub fn uses_beta(&self) -> bool {
        matches!(self, Algorithm::XetdN | Algorithm::XetdNMc)
    }
}

/// Where the emphatic weighting comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmphasisSource {
    /// Time-reversed TD model trained alongside the values.
    Learned,
    /// The exact expected emphasis from the oracle.
    Oracle,
    /// The followon trace accumulated on the online stream.
    MonteCarlo,
}

impl EmphasisSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(EmphasisSource::Learned),
            "oracle" => Ok(EmphasisSource::Oracle),
            "monte_carlo" => Ok(EmphasisSource::MonteCarlo),
            other => Err(Error::Config(format!(
                "unknown emphasis source {other:?} (expected learned, oracle, monte_carlo)"
            ))),
        }
    }
}

/// Sequential (update along the stream) or i.i.d. (update on replayed
/// segments).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Sequential,
    Iid,
}

impl Setting {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Setting::Sequential),
            "iid" => Ok(Setting::Iid),
            other => Err(Error::Config(format!(
                "unknown setting {other:?} (expected sequential, iid)"
            ))),
        }
    }
}

/// Step-size schedule within a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    /// The swept fixed step sizes.
    Constant,
    /// `alpha_t = alpha_0 / (1 + t / t0)`: square-summable but not summable,
    /// for the convergence regime.
    Decaying { t0: f64 },
}

impl StepSchedule {
    fn factor(&self, step: u64) -> f64 {
        match self {
            StepSchedule::Constant => 1.0,
            StepSchedule::Decaying { t0 } => 1.0 / (1.0 + step as f64 / t0),
        }
    }
}

/// A fully resolved experiment: problem, algorithm, and run parameters.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub mdp: TabularMdp,
    pub pair: PolicyPair,
    pub features: Arc<FeatureMap>,
    pub algorithm: Algorithm,
    pub learner: LearnerConfig,
    pub total_steps: u64,
    pub num_runs: usize,
    pub seed_base: u64,
    pub eval_every: u64,
    pub emphasis_source: EmphasisSource,
    pub setting: Setting,
    pub start_state: usize,
    pub replay_capacity: usize,
    pub init_w: DVector<f64>,
    pub init_theta: DVector<f64>,
    /// Optional clip applied to the IS ratios inside the value correction.
    pub value_clip: Option<f64>,
    /// Sample a second independent segment for the value update instead of
    /// reusing the emphasis learner's segment.
    pub decouple_value_sample: bool,
    pub schedule: StepSchedule,
}

impl Experiment {
    /// Sensible defaults for a problem: X-ETD(n) with a learned emphasis in
    /// the i.i.d. setting.
    pub fn new(mdp: TabularMdp, pair: PolicyPair, features: Arc<FeatureMap>) -> Self {
        let k = features.num_features();
        Self {
            mdp,
            pair,
            features,
            algorithm: Algorithm::XetdN,
            learner: LearnerConfig::default(),
            total_steps: 200_000,
            num_runs: 1,
            seed_base: 0,
            eval_every: 100,
            emphasis_source: EmphasisSource::Learned,
            setting: Setting::Iid,
            start_state: 0,
            replay_capacity: 10_000,
            init_w: DVector::from_element(k, 1.0),
            init_theta: DVector::zeros(k),
            value_clip: None,
            decouple_value_sample: false,
            schedule: StepSchedule::Constant,
        }
    }

    /// Default setting for an algorithm: replay learners are i.i.d.,
    /// trace-based learners are sequential.
    pub fn default_setting(algorithm: Algorithm, source: EmphasisSource) -> Setting {
        match (algorithm, source) {
            (Algorithm::EtdN, _) => Setting::Sequential,
            (Algorithm::XetdN, EmphasisSource::MonteCarlo) => Setting::Sequential,
            _ => Setting::Iid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        if self.num_runs == 0 {
            return Err(Error::Config("experiment.num_runs must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("experiment.eval_every must be >= 1".into()));
        }
        if !self.total_steps.is_multiple_of(self.eval_every) {
            return Err(Error::Config(format!(
                "experiment.eval_every = {} must divide total_steps = {} evenly",
                self.eval_every, self.total_steps
            )));
        }
        if self.start_state >= self.mdp.num_states() {
            return Err(Error::Config(format!(
                "experiment.start_state = {} out of range for {} states",
                self.start_state,
                self.mdp.num_states()
            )));
        }
        if self.features.num_states() != self.mdp.num_states() {
            return Err(Error::Config(format!(
                "features have {} rows but the MDP has {} states",
                self.features.num_states(),
                self.mdp.num_states()
            )));
        }
        let k = self.features.num_features();
        if self.init_w.len() != k || self.init_theta.len() != k {
            return Err(Error::Config(format!(
                "initial weights must have length {k} (got {} for w, {} for theta)",
                self.init_w.len(),
                self.init_theta.len()
            )));
        }
        if self.replay_capacity == 0 {
            return Err(Error::Config("experiment.replay_capacity must be >= 1".into()));
        }
        if let Some(c) = self.value_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!(
                    "experiment.value_clip must be > 0, got {c}"
                )));
            }
        }
        match (self.algorithm, self.setting, self.emphasis_source) {
            (Algorithm::EtdN, Setting::Iid, _) => Err(Error::Config(
                "etd_n needs the sequential setting: its followon trace cannot be \
                 computed from replayed segments"
                    .into(),
            )),
            (Algorithm::XetdN, Setting::Iid, EmphasisSource::MonteCarlo) => Err(Error::Config(
                "xetd_n with a monte_carlo emphasis needs the sequential setting".into(),
            )),
            (Algorithm::XetdNMc, _, source) if source != EmphasisSource::Learned => {
                Err(Error::Config(
                    "xetd_n_mc trains a learned emphasis; emphasis_source must be learned".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// The stream seed of run `index`; the replay buffer draws from an
    /// independent seed derived by a fixed mix.
    pub fn run_seed(&self, index: usize) -> u64 {
        self.seed_base.wrapping_add(index as u64)
    }
}

fn buffer_seed(run_seed: u64) -> u64 {
    run_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0xD1B5_4A32_D192_ED03)
}

/// Emphasis bookkeeping inside a run.
enum Emphasis {
    Learned(LinearFunction),
    Oracle(DVector<f64>),
    /// Running per-state mean of the observed followon traces (the implicit
    /// estimate a Monte Carlo learner carries).
    MonteCarlo { means: Vec<f64>, counts: Vec<u64> },
    /// TD(n)/V-trace: implicit unit weighting.
    Unit(usize),
}

impl Emphasis {
    fn estimate_vector(&self) -> DVector<f64> {
        match self {
            Emphasis::Learned(f) => f.all_values(),
            Emphasis::Oracle(f) => f.clone(),
            Emphasis::MonteCarlo { means, .. } => DVector::from_column_slice(means),
            Emphasis::Unit(num_states) => DVector::from_element(*num_states, 1.0),
        }
    }

    fn norm(&self) -> f64 {
        match self {
            Emphasis::Learned(f) => f.weight_norm(),
            other => other.estimate_vector().norm(),
        }
    }

    fn observe(&mut self, state: usize, followon: f64) {
        if let Emphasis::MonteCarlo { means, counts } = self {
            counts[state] += 1;
            means[state] += (followon - means[state]) / counts[state] as f64;
        }
    }
}

fn rmse(estimate: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    ((estimate - truth).norm_squared() / truth.len() as f64).sqrt()
}

fn non_finite_or_huge(w: &DVector<f64>) -> bool {
    w.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT)
}

/// Run a single seeded trajectory of the experiment.
pub fn run_single(exp: &Experiment, truth: &GroundTruth, seed: u64) -> Result<RunRecord> {
    let n = exp.learner.n;
    let mut stream = StreamSampler::new(&exp.mdp, &exp.pair, exp.start_state, seed)?;
    let mut followon = FollowonState::new(n)?;
    let mut buffer = ReplayBuffer::new(exp.replay_capacity, n, buffer_seed(seed))?;
    let mut window: Vec<crate::mdp::Transition> = Vec::with_capacity(n);

    let mut value = LinearFunction::new(Arc::clone(&exp.features), exp.init_w.clone())?;
    let mut emphasis = match (exp.algorithm, exp.emphasis_source) {
        (Algorithm::TdN | Algorithm::Vtrace, _) => Emphasis::Unit(exp.mdp.num_states()),
        (Algorithm::EtdN, _) => Emphasis::MonteCarlo {
            means: vec![1.0; exp.mdp.num_states()],
            counts: vec![0; exp.mdp.num_states()],
        },
        (_, EmphasisSource::Learned) => Emphasis::Learned(LinearFunction::new(
            Arc::clone(&exp.features),
            exp.init_theta.clone(),
        )?),
        (_, EmphasisSource::Oracle) => Emphasis::Oracle(truth.f_star.clone()),
        (_, EmphasisSource::MonteCarlo) => Emphasis::MonteCarlo {
            means: vec![1.0; exp.mdp.num_states()],
            counts: vec![0; exp.mdp.num_states()],
        },
    };

    let mut rows = Vec::with_capacity((exp.total_steps / exp.eval_every + 1) as usize);
    let mut diverged = false;
    let value_clip = exp.value_clip.unwrap_or(f64::INFINITY);
    let theta_clip = exp.learner.rho_bar;

    let eval = |value: &LinearFunction, emphasis: &Emphasis, step: u64, diverged: bool| -> EvalRow {
        if diverged {
            return EvalRow {
                step,
                rmse_v: f64::INFINITY,
                rmse_f: f64::INFINITY,
                weight_norm: f64::INFINITY,
                emphasis_norm: f64::INFINITY,
            };
        }
        EvalRow {
            step,
            rmse_v: rmse(&value.all_values(), &truth.v_pi),
            rmse_f: rmse(&emphasis.estimate_vector(), &truth.f_star),
            weight_norm: value.weight_norm(),
            emphasis_norm: emphasis.norm(),
        }
    };

    rows.push(eval(&value, &emphasis, 0, diverged));

    for step in 1..=exp.total_steps {
        let t = stream.next_transition();
        let window_full = if window.len() < n {
            window.push(t);
            window.len() == n
        } else {
            window.rotate_left(1);
            window[n - 1] = t;
            true
        };

        if window_full && !diverged {
            // the window covers times [step - n, step - 1]; its start state
            // pairs with the current followon value
            let online_state = window[0].state;
            let online_followon = followon.current();
            emphasis.observe(online_state, online_followon);

            let seg = Segment::new(window.clone())?;
            let alpha_w = exp.learner.alpha_w * exp.schedule.factor(step);
            let alpha_theta = exp.learner.alpha_theta * exp.schedule.factor(step);

            match exp.algorithm {
                Algorithm::TdN => {
                    let seg = select_segment(exp, &mut buffer, seg)?;
                    value = learners::td_n_update(&seg, &value, alpha_w);
                }
                Algorithm::Vtrace => {
                    let seg = select_segment(exp, &mut buffer, seg)?;
                    value = learners::vtrace_update(&seg, &value, &exp.learner, alpha_w);
                }
                Algorithm::EtdN => {
                    value = learners::etd_n_update(&seg, &value, online_followon, alpha_w);
                }
                Algorithm::XetdN | Algorithm::XetdNMc => {
                    let (theta_seg, value_seg) = match exp.setting {
                        Setting::Sequential => (seg.clone(), seg),
                        Setting::Iid => {
                            buffer.push(seg)?;
                            let i = buffer.sample_index().expect("non-empty");
                            let first = buffer.get(i).clone();
                            let second = if exp.decouple_value_sample {
                                let j = buffer.sample_index().expect("non-empty");
                                buffer.get(j).clone()
                            } else {
                                first.clone()
                            };
                            (first, second)
                        }
                    };
                    if let Emphasis::Learned(theta) = &mut emphasis {
                        *theta = if exp.algorithm == Algorithm::XetdNMc {
                            learners::reversed_td_mc_update(
                                &theta_seg,
                                online_state,
                                online_followon,
                                theta,
                                alpha_theta,
                                exp.learner.beta,
                            )
                        } else if theta_clip.is_finite() {
                            learners::reversed_td_clipped_update(
                                &theta_seg, theta, alpha_theta, theta_clip,
                            )
                        } else {
                            learners::reversed_td_update(&theta_seg, theta, alpha_theta)
                        };
                    }
                    let weight = match &emphasis {
                        Emphasis::Learned(theta) => theta.evaluate(value_seg.first_state()),
                        Emphasis::Oracle(f) => f[value_seg.first_state()],
                        Emphasis::MonteCarlo { .. } => online_followon,
                        Emphasis::Unit(_) => 1.0,
                    };
                    value = learners::xetd_n_update_weighted(
                        &value_seg, &value, weight, alpha_w, value_clip,
                    );
                }
            }

            followon.advance(window[0].rho, window[0].gamma_next);

            if non_finite_or_huge(value.weights()) {
                diverged = true;
            }
            if let Emphasis::Learned(theta) = &emphasis {
                if non_finite_or_huge(theta.weights()) {
                    diverged = true;
                }
            }
        } else if window_full {
            // diverged runs keep consuming the stream so the row count stays
            // comparable, but stop updating
            followon.advance(window[0].rho, window[0].gamma_next);
        }

        if step % exp.eval_every == 0 {
            rows.push(eval(&value, &emphasis, step, diverged));
        }
    }

    Ok(RunRecord {
        algo: exp.algorithm.as_str().to_string(),
        seed,
        rows,
    })
}

fn select_segment(exp: &Experiment, buffer: &mut ReplayBuffer, seg: Segment) -> Result<Segment> {
    match exp.setting {
        Setting::Sequential => Ok(seg),
        Setting::Iid => {
            buffer.push(seg)?;
            let idx = buffer.sample_index().expect("buffer was just pushed");
            Ok(buffer.get(idx).clone())
        }
    }
}

/// Run `num_runs` seeded trajectories (in parallel) and return the records
/// sorted by seed.
pub fn run_experiment(exp: &Experiment) -> Result<Vec<RunRecord>> {
    exp.validate()?;
    let truth = GroundTruth::compute(&exp.mdp, &exp.pair, exp.learner.n)?;
    let mut records = (0..exp.num_runs)
        .into_par_iter()
        .map(|i| run_single(exp, &truth, exp.run_seed(i)))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.seed);
    Ok(records)
}

/// One evaluated sweep candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub alpha_w: f64,
    pub beta: f64,
    pub alpha_theta: f64,
    /// Mean final value RMSE across runs; infinite when any run diverged.
    pub mean_final_rmse_v: f64,
    /// Across-seed standard deviation of the final value RMSE.
    pub std_final_rmse_v: f64,
    pub diverged_runs: usize,
    pub selected: bool,
}

/// Sweep outcome: every candidate row plus, per algorithm, the records of
/// the selected configuration.
#[derive(Debug)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Records of the best configuration per algorithm, keyed by algorithm.
    pub best_records: Vec<(Algorithm, Vec<RunRecord>)>,
}

/// The sweep grid: step sizes, emphasis ratios, and the algorithms to cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alpha_w: Vec<f64>,
    pub beta: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
}

impl SweepSpec {
    /// The benchmark grid: `alpha_w in {2^-6 .. 2^-14}` and ten emphasis
    /// ratios, with `alpha_theta = alpha_w * beta`.
    pub fn benchmark_grid(algorithms: Vec<Algorithm>) -> Self {
        Self {
            alpha_w: (6..=14).map(|i| 2f64.powi(-i)).collect(),
            beta: vec![0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0],
            algorithms,
        }
    }

    /// Expand into concrete experiments. Algorithms without an emphasis
    /// learner ignore the beta axis and contribute one candidate per alpha.
    pub fn expand(&self, base: &Experiment) -> Result<Vec<Experiment>> {
        if self.alpha_w.is_empty() || self.algorithms.is_empty() {
            return Err(Error::Config("sweep grid must be non-empty".into()));
        }
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            let betas: &[f64] = if algorithm.uses_beta() {
                if self.beta.is_empty() {
                    return Err(Error::Config(
                        "sweep.beta must be non-empty for emphatic algorithms".into(),
                    ));
                }
                &self.beta
            } else {
                &[0.0]
            };
            for &alpha in &self.alpha_w {
                for &beta in betas {
                    let mut exp = base.clone();
                    exp.algorithm = algorithm;
                    exp.emphasis_source = match algorithm {
                        Algorithm::XetdN | Algorithm::XetdNMc => EmphasisSource::Learned,
                        _ => EmphasisSource::MonteCarlo,
                    };
                    exp.setting = Experiment::default_setting(algorithm, exp.emphasis_source);
                    exp.learner.alpha_w = alpha;
                    // the beta axis sets the emphasis step through
                    // alpha_theta = alpha_w * beta; the MC variant also uses
                    // it as the loss-mixing weight
                    exp.learner.alpha_theta = if algorithm.uses_beta() {
                        alpha * beta
                    } else {
                        alpha
                    };
                    exp.learner.beta = if algorithm == Algorithm::XetdNMc {
                        beta
                    } else {
                        0.0
                    };
                    exp.validate()?;
                    out.push(exp);
                }
            }
        }
        Ok(out)
    }
}

fn final_rmse_stats(records: &[RunRecord]) -> (f64, f64, usize) {
    let finals: Vec<f64> = records
        .iter()
        .map(|r| r.rows.last().map(|row| row.rmse_v).unwrap_or(f64::INFINITY))
        .collect();
    let diverged = finals.iter().filter(|x| !x.is_finite()).count();
    if diverged > 0 {
        return (f64::INFINITY, f64::INFINITY, diverged);
    }
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let var = if finals.len() > 1 {
        finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (finals.len() - 1) as f64
    } else {
        0.0
    };
    (mean, var.sqrt(), 0)
}

/// Run every candidate and pick the best configuration per algorithm by
/// mean final value RMSE. Ties break lexicographically: larger alpha first,
/// then smaller beta. Divergent candidates are never selected.
pub fn sweep(base: &Experiment, spec: &SweepSpec) -> Result<SweepSummary> {
    let candidates = spec.expand(base)?;
    let mut evaluated: Vec<(SweepRow, Vec<RunRecord>)> = candidates
        .iter()
        .map(|exp| {
            let records = run_experiment(exp)?;
            let (mean, std, diverged) = final_rmse_stats(&records);
            Ok((
                SweepRow {
                    algorithm: exp.algorithm,
                    alpha_w: exp.learner.alpha_w,
                    beta: if exp.algorithm == Algorithm::XetdNMc {
                        exp.learner.beta
                    } else if exp.algorithm.uses_beta() {
                        exp.learner.alpha_theta / exp.learner.alpha_w
                    } else {
                        0.0
                    },
                    alpha_theta: exp.learner.alpha_theta,
                    mean_final_rmse_v: mean,
                    std_final_rmse_v: std,
                    diverged_runs: diverged,
                    selected: false,
                },
                records,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best_records = Vec::new();
    for &algorithm in &spec.algorithms {
        let best = evaluated
            .iter()
            .enumerate()
            .filter(|(_, (row, _))| row.algorithm == algorithm && row.mean_final_rmse_v.is_finite())
            .min_by(|(_, (a, _)), (_, (b, _))| {
                (a.mean_final_rmse_v, std::cmp::Reverse(ordered(a.alpha_w)), ordered(a.beta))
                    .partial_cmp(&(
                        b.mean_final_rmse_v,
                        std::cmp::Reverse(ordered(b.alpha_w)),
                        ordered(b.beta),
                    ))
                    .expect("finite keys")
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            evaluated[i].0.selected = true;
            best_records.push((algorithm, evaluated[i].1.clone()));
        }
    }

    Ok(SweepSummary {
        rows: evaluated.into_iter().map(|(row, _)| row).collect(),
        best_records,
    })
}

fn ordered(x: f64) -> OrderedF64 {
    OrderedF64(x)
}

#[derive(PartialEq, PartialOrd)]
struct OrderedF64(f64);

/// Stability analysis for the configured algorithm: the value learner's
/// limiting pair, plus the emphasis learner's matrix when one is trained.
pub fn analyze(exp: &Experiment) -> Result<Vec<StabilityReport>> {
    let n = exp.learner.n;
    let thresholds = Thresholds::compute(&exp.mdp, &exp.pair, n)?;
    let mut reports = Vec::new();

    match exp.algorithm {
        Algorithm::TdN => {
            let ones = DVector::from_element(exp.mdp.num_states(), 1.0);
            let (a, b) = stability::build_a_xetd(&exp.mdp, &exp.pair, &exp.features, &ones, n)?;
            let key = stability::key_matrix_xetd(&exp.mdp, &exp.pair, &ones, n)?;
            reports.push(StabilityReport::assemble(
                "td_n", a, b, &key, &exp.features, thresholds,
            )?);
        }
        Algorithm::Vtrace => {
            return Err(Error::Config(
                "analyze: no closed-form limiting matrix is tracked for vtrace; \
                 analyze supports td_n, etd_n, xetd_n, xetd_n_mc"
                    .into(),
            ));
        }
        Algorithm::EtdN => {
            let f = crate::oracle::expected_emphasis(&exp.mdp, &exp.pair, n)?;
            let (a, b) = stability::build_a_xetd(&exp.mdp, &exp.pair, &exp.features, &f, n)?;
            let key = stability::key_matrix_xetd(&exp.mdp, &exp.pair, &f, n)?;
            reports.push(StabilityReport::assemble(
                "etd_n", a, b, &key, &exp.features, thresholds,
            )?);
        }
        Algorithm::XetdN | Algorithm::XetdNMc => {
            let f = crate::oracle::expected_emphasis(&exp.mdp, &exp.pair, n)?;
            let (a, b) = stability::build_a_xetd(&exp.mdp, &exp.pair, &exp.features, &f, n)?;
            let key = stability::key_matrix_xetd(&exp.mdp, &exp.pair, &f, n)?;
            reports.push(StabilityReport::assemble(
                format!("{} (value learner, true-emphasis weighting)", exp.algorithm.as_str()),
                a,
                b,
                &key,
                &exp.features,
                thresholds,
            )?);

            if exp.emphasis_source == EmphasisSource::Learned {
                if exp.algorithm == Algorithm::XetdNMc {
                    let a = stability::build_a_reversed_td_mc(
                        &exp.mdp,
                        &exp.pair,
                        &exp.features,
                        n,
                        exp.learner.beta,
                    )?;
                    let key = stability::key_matrix_reversed_td_mc(
                        &exp.mdp,
                        &exp.pair,
                        n,
                        exp.learner.beta,
                    )?;
                    let b = stability::reversed_td_mc_b(
                        &exp.mdp,
                        &exp.pair,
                        &exp.features,
                        n,
                        exp.learner.beta,
                    )?;
                    reports.push(StabilityReport::assemble(
                        format!("reversed_td_mc (emphasis learner, beta = {})", exp.learner.beta),
                        a,
                        b,
                        &key,
                        &exp.features,
                        thresholds,
                    )?);
                } else {
                    let rho_bar = exp.learner.rho_bar;
                    let a = stability::build_a_reversed_td(
                        &exp.mdp,
                        &exp.pair,
                        &exp.features,
                        n,
                        rho_bar,
                    )?;
                    let key = stability::key_matrix_reversed_td(&exp.mdp, &exp.pair, n, rho_bar)?;
                    let b = stability::reversed_td_b(&exp.mdp, &exp.pair, &exp.features)?;
                    let name = if rho_bar.is_finite() {
                        format!("reversed_td (emphasis learner, clipped at {rho_bar})")
                    } else {
                        "reversed_td (emphasis learner, unclipped)".to_string()
                    };
                    reports.push(StabilityReport::assemble(
                        name,
                        a,
                        b,
                        &key,
                        &exp.features,
                        thresholds,
                    )?);
                }
            }
        }
    }
    Ok(reports)
}
