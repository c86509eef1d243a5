use serde::{Deserialize, Serialize};

use super::layers::{Activation, DenseStack, StackCache};
use super::{check_finite, Matrix, NnError};
use crate::rng::rng_for;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Architecture and initialization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorCriticSpec {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Gain of the hidden-layer orthogonal init.
    pub hidden_gain: f64,
    /// Gain of the policy-mean output row.
    pub policy_gain: f64,
    pub seed: u64,
}

impl Default for ActorCriticSpec {
    fn default() -> Self {
        Self {
            obs_dim: crate::env::OBS_DIM,
            hidden: vec![64, 64, 32],
            init_log_std: -0.5,
            hidden_gain: std::f64::consts::SQRT_2,
            policy_gain: 0.01,
            seed: 0,
        }
    }
}

/// Batched network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: f64,
    pub value: Vec<f64>,
}

/// Loss gradients with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads {
    pub mean: Vec<f64>,
    pub log_std: f64,
    pub value: Vec<f64>,
}

impl OutputGrads {
    pub fn zeros(n: usize) -> Self {
        Self { mean: vec![0.0; n], log_std: 0.0, value: vec![0.0; n] }
    }
}

/// Gaussian-policy actor-critic with a shared tanh trunk.
///
/// The trunk feeds a linear head with two outputs: row 0 is the action mean,
/// row 1 the state value. The log standard deviation is a free parameter,
/// independent of the state, clamped to [`LOG_STD_MIN`], [`LOG_STD_MAX`].
/// Parameters are stored flat as `trunk | head | log_std`.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    spec: ActorCriticSpec,
    trunk: DenseStack,
    head: DenseStack,
    params: Vec<f64>,
    cache: Option<(StackCache, StackCache)>,
}

impl PartialEq for ActorCritic {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params
    }
}

impl ActorCritic {
    pub fn new(spec: ActorCriticSpec) -> Self {
        let (trunk, head) = Self::stacks(&spec);
        let mut rng = rng_for(spec.seed, 0x00AC);
        let mut params = trunk.init_params(&vec![spec.hidden_gain; trunk.n_layers()], &mut rng);
        let mut head_params = head.init_params(&[1.0], &mut rng);
        let width = head.input_dim();
        head_params[..width].iter_mut().for_each(|w| *w *= spec.policy_gain);
        params.extend(head_params);
        params.push(spec.init_log_std);
        Self { spec, trunk, head, params, cache: None }
    }

    fn stacks(spec: &ActorCriticSpec) -> (DenseStack, DenseStack) {
        assert!(!spec.hidden.is_empty(), "at least one hidden layer");
        let mut sizes = vec![spec.obs_dim];
        sizes.extend(&spec.hidden);
        let trunk = DenseStack::uniform(sizes, Activation::Tanh);
        let head = DenseStack::uniform(vec![*spec.hidden.last().unwrap(), 2], Activation::Identity);
        (trunk, head)
    }

    /// Builds a network from explicit flat parameters.
    pub fn from_params(spec: ActorCriticSpec, params: Vec<f64>) -> Result<Self, NnError> {
        let (trunk, head) = Self::stacks(&spec);
        let expected = trunk.param_count() + head.param_count() + 1;
        if params.len() != expected {
            return Err(NnError::ShapeMismatch { expected, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFiniteParameter);
        }
        Ok(Self { spec, trunk, head, params, cache: None })
    }

    pub fn spec(&self) -> &ActorCriticSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.cache = None;
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64]) {
        let n_trunk = self.trunk.param_count();
        let n_head = self.head.param_count();
        (&self.params[..n_trunk], &self.params[n_trunk..n_trunk + n_head])
    }

    pub fn log_std_raw(&self) -> f64 {
        *self.params.last().unwrap()
    }

    pub fn log_std(&self) -> f64 {
        self.log_std_raw().clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    fn run(&self, obs: &Matrix) -> Result<(StackCache, StackCache), NnError> {
        check_finite(obs)?;
        let (tp, hp) = self.split();
        let trunk = self.trunk.forward(tp, obs)?;
        let head = self.head.forward(hp, trunk.output())?;
        Ok((trunk, head))
    }

    fn outputs(&self, head: &StackCache) -> PolicyOutput {
        let out = head.output();
        PolicyOutput {
            mean: (0..out.rows()).map(|r| out.get(r, 0)).collect(),
            log_std: self.log_std(),
            value: (0..out.rows()).map(|r| out.get(r, 1)).collect(),
        }
    }

    /// Batched forward pass, recorded for a following [`ActorCritic::backward`].
    pub fn forward(&mut self, obs: &Matrix) -> Result<PolicyOutput, NnError> {
        let (trunk, head) = self.run(obs)?;
        let out = self.outputs(&head);
        self.cache = Some((trunk, head));
        Ok(out)
    }

    /// Forward pass without recording, for rollout workers sharing a snapshot.
    pub fn evaluate(&self, obs: &Matrix) -> Result<PolicyOutput, NnError> {
        let (_, head) = self.run(obs)?;
        Ok(self.outputs(&head))
    }

    /// `(mean, log_std, value)` for one observation.
    pub fn infer(&self, obs: &[f64]) -> Result<(f64, f64, f64), NnError> {
        let out = self.evaluate(&Matrix::from_vec(1, obs.len(), obs.to_vec()))?;
        Ok((out.mean[0], out.log_std, out.value[0]))
    }

    /// Parameter gradients of a scalar loss, given its gradients with respect
    /// to the outputs of the last recorded forward pass.
    pub fn backward(&mut self, grads: &OutputGrads) -> Result<Vec<f64>, NnError> {
        let (trunk_cache, head_cache) = self.cache.take().ok_or(NnError::NoForwardPass)?;
        let n = head_cache.output().rows();
        if grads.mean.len() != n || grads.value.len() != n {
            return Err(NnError::ShapeMismatch { expected: n, got: grads.mean.len().min(grads.value.len()) });
        }
        let mut g_head = Matrix::zeros(n, 2);
        for r in 0..n {
            g_head.set(r, 0, grads.mean[r]);
            g_head.set(r, 1, grads.value[r]);
        }
        let n_trunk = self.trunk.param_count();
        let n_head = self.head.param_count();
        let mut out = vec![0.0; self.params.len()];
        let (tp, hp) = self.split();
        let g_trunk = self.head.backward(hp, &head_cache, &g_head, &mut out[n_trunk..n_trunk + n_head]);
        self.trunk.backward(tp, &trunk_cache, &g_trunk, &mut out[..n_trunk]);
        let raw = self.log_std_raw();
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
            *out.last_mut().unwrap() = grads.log_std;
        }
        Ok(out)
    }

    /// Named tensors in storage order: `(name, shape, values)`.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        let mut off = 0;
        for (prefix, stack) in [("trunk", &self.trunk), ("head", &self.head)] {
            for (l, (fan_in, fan_out)) in stack.layer_shapes().enumerate() {
                let w = self.params[off..off + fan_in * fan_out].to_vec();
                off += fan_in * fan_out;
                let b = self.params[off..off + fan_out].to_vec();
                off += fan_out;
                out.push((format!("{prefix}.{l}.weight"), vec![fan_out, fan_in], w));
                out.push((format!("{prefix}.{l}.bias"), vec![fan_out], b));
            }
        }
        out.push(("log_std".into(), vec![1], vec![self.log_std_raw()]));
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            spec: self.spec.clone(),
            tensors: self.tensors().into_iter().map(|(name, shape, data)| Tensor { name, shape, data }).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, NnError> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format `{}`", ckpt.format)));
        }
        let template = Self::from_params(ckpt.spec.clone(), vec![0.0; Self::new_shape_count(&ckpt.spec)])?;
        let expected = template.tensors();
        if expected.len() != ckpt.tensors.len() {
            return Err(NnError::Checkpoint(format!("expected {} tensors, found {}", expected.len(), ckpt.tensors.len())));
        }
        let mut params = Vec::with_capacity(template.param_count());
        for ((name, shape, _), t) in expected.iter().zip(&ckpt.tensors) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(NnError::Checkpoint(format!("tensor `{}` does not match `{name}` {shape:?}", t.name)));
            }
            params.extend_from_slice(&t.data);
        }
        Self::from_params(ckpt.spec.clone(), params)
    }

    fn new_shape_count(spec: &ActorCriticSpec) -> usize {
        let (trunk, head) = Self::stacks(spec);
        trunk.param_count() + head.param_count() + 1
    }

    pub fn save_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn load_json(text: &str) -> Result<Self, NnError> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ckpt)
    }
}

pub const CHECKPOINT_FORMAT: &str = "idtrade-actor-critic/1";

/// Serialized parameters: a manifest (format tag and architecture) followed
/// by a list of named row-major tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: ActorCriticSpec,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
