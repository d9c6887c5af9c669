//! Evaluator contract and the closed-form surrogate evaluators.
//!
//! The surrogate scores a network from graph descriptors alone, rewarding
//! what the search operators can build: depth (add-node), layer-type
//! diversity (hyperparameter mutation), branching (add-connection), and
//! penalising parameter count so two objectives genuinely trade off.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{LayerSearchSpace, TrainConfig};
use crate::network::{count_parameters, deserialize_network, validate_dag, NetworkGraph, OpKind};
use crate::EngineRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTask {
    pub task_id: String,
    /// Interchange JSON text of the network.
    pub network_json: String,
    pub train_config: TrainConfig,
    /// Seconds since the submitter's epoch; stamped by the queue.
    #[serde(default)]
    pub submitted_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub task_id: String,
    pub primary: f64,
    pub raw_secondary: f64,
    pub status: EvaluationStatus,
    pub worker_id: String,
    /// Seconds the evaluator reports spending on the task.
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl EvaluationResult {
    pub fn failed(task_id: &str, worker_id: &str, reason: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            primary: 0.0,
            raw_secondary: 0.0,
            status: EvaluationStatus::Failed,
            worker_id: worker_id.into(),
            duration: 0.0,
            reason: Some(reason.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvaluationStatus::Ok && self.primary.is_finite() && self.raw_secondary.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    /// Same task (and seed) always yields the same result.
    pub deterministic: bool,
    pub remote: bool,
}

/// Scores one task. Implementations must tolerate concurrent calls on
/// distinct tasks.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, task: &EvaluationTask) -> EvaluationResult;

    fn capabilities(&self) -> Capabilities;
}

impl<E: Evaluator + ?Sized> Evaluator for alloc::boxed::Box<E> {
    fn evaluate(&self, task: &EvaluationTask) -> EvaluationResult {
        (**self).evaluate(task)
    }

    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for alloc::sync::Arc<E> {
    fn evaluate(&self, task: &EvaluationTask) -> EvaluationResult {
        (**self).evaluate(task)
    }

    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
}

/// Evaluates a whole generation. Results may come back in any order; a
/// task missing from the output counts as failed.
pub trait BatchEvaluator {
    fn evaluate_batch(&mut self, tasks: &[EvaluationTask]) -> Vec<EvaluationResult>;

    fn capabilities(&self) -> Capabilities;
}

/// Runs an [`Evaluator`] inline, one task after another.
#[derive(Debug, Clone)]
pub struct SequentialEvaluator<E>(pub E);

impl<E: Evaluator> BatchEvaluator for SequentialEvaluator<E> {
    fn evaluate_batch(&mut self, tasks: &[EvaluationTask]) -> Vec<EvaluationResult> {
        tasks.iter().map(|t| self.0.evaluate(t)).collect()
    }

    fn capabilities(&self) -> Capabilities {
        self.0.capabilities()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub depth_weight: f64,
    pub diversity_weight: f64,
    pub branching_weight: f64,
    pub params_weight: f64,
    /// Compute-layer depth at which the depth term saturates.
    pub depth_target: f64,
    /// Number of available layer types (diversity denominator).
    pub layer_type_count: usize,
    /// Extra merge inputs at which the branching term saturates.
    pub branching_target: f64,
    /// Parameter count at which the size penalty saturates.
    pub params_target: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self::for_space(&LayerSearchSpace::default())
    }
}

impl SurrogateConfig {
    /// Targets scaled to a search space: the size penalty saturates at
    /// `depth_target` maximal-width, maximal-kernel layers.
    pub fn for_space(space: &LayerSearchSpace) -> Self {
        let depth_target = 8.0;
        let width = space.layer_width[1].max(1) as f64;
        let kernel = space.kernel_sizes.iter().copied().max().unwrap_or(1).max(1) as f64;
        let spatial = space.input_shape.len().saturating_sub(1).max(1) as i32;
        Self {
            depth_weight: 0.35,
            diversity_weight: 0.2,
            branching_weight: 0.25,
            params_weight: 0.2,
            depth_target,
            layer_type_count: space.layer_types.len().max(1),
            branching_target: 4.0,
            params_target: depth_target * width * width * libm::pow(kernel, spatial as f64),
        }
    }

    fn weight_sum(&self) -> f64 {
        self.depth_weight + self.diversity_weight + self.branching_weight + self.params_weight
    }
}

/// Graph features the surrogate scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descriptors {
    /// Compute layers (conv, dense, recurrent) on the longest input-output path.
    pub depth: usize,
    /// Distinct module op kinds present.
    pub distinct_kinds: usize,
    /// Sum over merges of (inbound count - 1).
    pub branching: usize,
    pub params: u64,
}

fn is_compute(kind: OpKind) -> bool {
    matches!(kind, OpKind::Conv1d | OpKind::Conv2d | OpKind::Dense | OpKind::Lstm | OpKind::Gru)
}

pub fn descriptors(network: &NetworkGraph) -> crate::Result<Descriptors> {
    let params = count_parameters(network, None)?;
    let order = network
        .canonical_order()
        .map_err(|ids| crate::Error::InvalidNetwork(alloc::vec![crate::network::Violation::Cycle(ids)]))?;
    let index = network.index();
    let mut depth = alloc::vec![0usize; network.layers.len()];
    for &i in &order {
        let l = &network.layers[i];
        let best = l
            .inbound
            .iter()
            .filter_map(|s| index.get(s.as_str()))
            .map(|&j| depth[j])
            .max()
            .unwrap_or(0);
        depth[i] = best + usize::from(is_compute(l.op_kind));
    }
    let kinds: BTreeSet<OpKind> = network.layers.iter().map(|l| l.op_kind).filter(|k| k.is_module_layer()).collect();
    let branching = network
        .layers
        .iter()
        .filter(|l| l.op_kind == OpKind::ConcatMerge)
        .map(|l| l.inbound.len().saturating_sub(1))
        .sum();
    Ok(Descriptors {
        depth: depth.into_iter().max().unwrap_or(0),
        distinct_kinds: kinds.len(),
        branching,
        params,
    })
}

fn saturate(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

impl SurrogateConfig {
    /// Score in [0, 1] from descriptors.
    pub fn score(&self, d: &Descriptors) -> f64 {
        let total = self.weight_sum();
        if total <= 0.0 {
            return 0.0;
        }
        let depth = saturate(d.depth as f64 / self.depth_target);
        let diversity = saturate(d.distinct_kinds as f64 / self.layer_type_count as f64);
        let branching = saturate(d.branching as f64 / self.branching_target);
        let compact = 1.0 - saturate(d.params as f64 / self.params_target);
        (self.depth_weight * depth + self.diversity_weight * diversity + self.branching_weight * branching + self.params_weight * compact)
            / total
    }

    /// Supremum of [`score`](Self::score): every term saturated and zero
    /// parameters. Networks always have a head, so it is never attained.
    pub fn upper_bound(&self) -> f64 {
        if self.weight_sum() > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

pub fn surrogate_fitness(network: &NetworkGraph, config: &SurrogateConfig) -> crate::Result<f64> {
    Ok(config.score(&descriptors(network)?))
}

/// Deterministic in-process surrogate evaluator.
#[derive(Debug, Clone, Default)]
pub struct SurrogateEvaluator {
    pub config: SurrogateConfig,
}

impl SurrogateEvaluator {
    pub fn new(config: SurrogateConfig) -> Self {
        Self { config }
    }
}

pub(crate) const LOCAL_WORKER: &str = "local";

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, task: &EvaluationTask) -> EvaluationResult {
        let scored = deserialize_network(task.network_json.as_bytes()).and_then(|n| {
            validate_dag(&n).map_err(crate::Error::InvalidNetwork)?;
            descriptors(&n)
        });
        match scored {
            Ok(d) => EvaluationResult {
                task_id: task.task_id.clone(),
                primary: self.config.score(&d),
                raw_secondary: d.params as f64,
                status: EvaluationStatus::Ok,
                worker_id: LOCAL_WORKER.into(),
                duration: 0.0,
                reason: None,
            },
            Err(e) => EvaluationResult::failed(&task.task_id, LOCAL_WORKER, format!("{e}")),
        }
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            deterministic: true,
            remote: false,
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

/// Adds Gaussian noise to the wrapped evaluator's primary objective. The
/// noise depends only on `(task_id, seed)`, so replays are exact.
#[derive(Debug, Clone)]
pub struct NoisyEvaluator<E> {
    pub inner: E,
    pub sigma: f64,
    pub seed: u64,
}

impl<E> NoisyEvaluator<E> {
    pub fn new(inner: E, sigma: f64, seed: u64) -> crate::Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(crate::Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
        }
        Ok(Self { inner, sigma, seed })
    }

    pub fn noise(&self, task_id: &str) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let mut rng = EngineRng::seed_from_u64(fnv1a(task_id.as_bytes()) ^ self.seed.rotate_left(29));
        Normal::new(0.0, self.sigma).map(|n| n.sample(&mut rng)).unwrap_or(0.0)
    }
}

impl<E: Evaluator> Evaluator for NoisyEvaluator<E> {
    fn evaluate(&self, task: &EvaluationTask) -> EvaluationResult {
        let mut result = self.inner.evaluate(task);
        if result.status == EvaluationStatus::Ok {
            result.primary += self.noise(&task.task_id);
        }
        result
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
}

/// Evaluator named by a run config; `None` for remote evaluation.
pub fn evaluator_from_config(config: &crate::config::EvaluatorConfig) -> Option<alloc::boxed::Box<dyn Evaluator>> {
    use crate::config::EvaluatorConfig;
    match config {
        EvaluatorConfig::Surrogate { surrogate } => Some(alloc::boxed::Box::new(SurrogateEvaluator::new(surrogate.clone()))),
        EvaluatorConfig::NoisySurrogate { surrogate, sigma, seed } => Some(alloc::boxed::Box::new(NoisyEvaluator {
            inner: SurrogateEvaluator::new(surrogate.clone()),
            sigma: sigma.max(0.0),
            seed: *seed,
        })),
        EvaluatorConfig::Remote => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{attr, serialize_network, AttrValue, LayerSpec};
    use alloc::vec;

    fn layer(id: &str, kind: OpKind, width: i64, from: &[&str]) -> LayerSpec {
        let key = if matches!(kind, OpKind::Conv1d | OpKind::Conv2d) {
            attr::FILTERS
        } else {
            attr::UNITS
        };
        let mut l = LayerSpec::new(id, kind)
            .with_attr(key, AttrValue::Int(width))
            .with_attr(attr::ACTIVATION, AttrValue::Text("relu".into()))
            .with_attr(attr::INITIALIZER, AttrValue::Text("he".into()))
            .with_inbound(from);
        if matches!(kind, OpKind::Conv1d | OpKind::Conv2d) {
            l = l.with_attr(attr::KERNEL_SIZE, AttrValue::Int(3));
        }
        l
    }

    fn net(mut layers: Vec<LayerSpec>, last: &str) -> NetworkGraph {
        layers.insert(
            0,
            LayerSpec::new("input", OpKind::Input).with_attr(attr::SHAPE, AttrValue::IntList(vec![16, 8])),
        );
        layers.push(
            LayerSpec::new("output", OpKind::Output)
                .with_attr(attr::UNITS, AttrValue::Int(2))
                .with_inbound(&[last]),
        );
        NetworkGraph {
            layers,
            inputs: vec!["input".into()],
            outputs: vec!["output".into()],
            globals: Default::default(),
        }
    }

    fn task(id: &str, n: &NetworkGraph) -> EvaluationTask {
        EvaluationTask {
            task_id: id.into(),
            network_json: String::from_utf8(serialize_network(n).unwrap()).unwrap(),
            train_config: TrainConfig::default(),
            submitted_at: 0.0,
        }
    }

    #[test]
    fn descriptor_values() {
        let n = net(
            vec![
                layer("a", OpKind::Conv1d, 8, &["input"]),
                layer("b", OpKind::Lstm, 8, &["a"]),
                layer("c", OpKind::Conv1d, 8, &["input"]),
                LayerSpec::new("m", OpKind::ConcatMerge).with_inbound(&["b", "c"]),
            ],
            "m",
        );
        let d = descriptors(&n).unwrap();
        assert_eq!(d.depth, 2);
        assert_eq!(d.distinct_kinds, 2);
        assert_eq!(d.branching, 1);
        assert_eq!(d.params, count_parameters(&n, None).unwrap());
    }

    #[test]
    fn deeper_scores_higher_with_other_terms_fixed() {
        let cfg = SurrogateConfig {
            params_weight: 0.0,
            ..SurrogateConfig::default()
        };
        let shallow = Descriptors {
            depth: 2,
            distinct_kinds: 1,
            branching: 0,
            params: 100,
        };
        let deep = Descriptors { depth: 5, ..shallow };
        assert!(cfg.score(&shallow) < cfg.score(&deep));
        let with_params = SurrogateConfig::default();
        assert!(with_params.score(&shallow) < with_params.score(&deep));
    }

    #[test]
    fn score_formula_by_hand() {
        let cfg = SurrogateConfig {
            depth_weight: 1.0,
            diversity_weight: 1.0,
            branching_weight: 1.0,
            params_weight: 1.0,
            depth_target: 4.0,
            layer_type_count: 4,
            branching_target: 2.0,
            params_target: 1000.0,
        };
        let d = Descriptors {
            depth: 2,
            distinct_kinds: 1,
            branching: 3,
            params: 250,
        };
        // (0.5 + 0.25 + 1.0 + 0.75) / 4
        assert!((cfg.score(&d) - 0.625).abs() < 1e-12);
        assert!(cfg.score(&d) <= cfg.upper_bound());
    }

    #[test]
    fn isomorphic_networks_score_equally() {
        let a = net(
            vec![layer("x", OpKind::Conv1d, 8, &["input"]), layer("y", OpKind::Gru, 4, &["x"])],
            "y",
        );
        let mut b = net(
            vec![layer("p", OpKind::Conv1d, 8, &["input"]), layer("q", OpKind::Gru, 4, &["p"])],
            "q",
        );
        b.layers.reverse();
        let cfg = SurrogateConfig::default();
        assert_eq!(surrogate_fitness(&a, &cfg).unwrap(), surrogate_fitness(&b, &cfg).unwrap());
    }

    #[test]
    fn surrogate_reports_failures_per_task() {
        let e = SurrogateEvaluator::default();
        let good = net(vec![layer("x", OpKind::Conv1d, 8, &["input"])], "x");
        let r = e.evaluate(&task("t1", &good));
        assert!(r.is_ok());
        assert_eq!(r.raw_secondary, count_parameters(&good, None).unwrap() as f64);
        let mut bad = task("t2", &good);
        bad.network_json = "{not json".into();
        let r = e.evaluate(&bad);
        assert_eq!(r.status, EvaluationStatus::Failed);
        assert_eq!(r.task_id, "t2");
    }

    #[test]
    fn zero_sigma_is_transparent() {
        let n = net(vec![layer("x", OpKind::Conv1d, 8, &["input"])], "x");
        let clean = SurrogateEvaluator::default();
        let noisy = NoisyEvaluator::new(clean.clone(), 0.0, 9).unwrap();
        assert_eq!(noisy.evaluate(&task("a", &n)), clean.evaluate(&task("a", &n)));
        assert!(NoisyEvaluator::new(clean, -1.0, 0).is_err());
    }

    #[test]
    fn noise_is_unbiased_and_replayable() {
        let n = net(vec![layer("x", OpKind::Conv1d, 8, &["input"])], "x");
        let clean = SurrogateEvaluator::default().evaluate(&task("base", &n)).primary;
        let sigma = 0.1;
        let noisy = NoisyEvaluator::new(SurrogateEvaluator::default(), sigma, 3).unwrap();
        let samples: Vec<f64> = (0..1000).map(|i| noisy.evaluate(&task(&format!("t{i}"), &n)).primary).collect();
        let mean = samples.iter().sum::<f64>() / 1000.0;
        assert!((mean - clean).abs() < 3.0 * sigma / libm::sqrt(1000.0), "{mean} vs {clean}");
        assert_eq!(noisy.evaluate(&task("t7", &n)), noisy.evaluate(&task("t7", &n)));
    }

    #[test]
    fn sequential_batch_preserves_tasks() {
        let n = net(vec![layer("x", OpKind::Conv1d, 8, &["input"])], "x");
        let tasks: Vec<_> = (0..5).map(|i| task(&format!("t{i}"), &n)).collect();
        let mut batch = SequentialEvaluator(SurrogateEvaluator::default());
        let out = batch.evaluate_batch(&tasks);
        assert_eq!(
            out.iter().map(|r| r.task_id.clone()).collect::<Vec<_>>(),
            tasks.iter().map(|t| t.task_id.clone()).collect::<Vec<_>>()
        );
    }
}
