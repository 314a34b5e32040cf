//! Named parameters with paired gradient buffers and Adamax state.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    /// Adamax first moment.
    m: Tensor,
    /// Adamax infinity-norm accumulator.
    u: Tensor,
}

/// Insertion-ordered parameter map; the update walks parameters in a fixed
/// order so training trajectories are reproducible bit for bit.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let shape = value.shape().to_vec();
        let prev = self.entries.insert(
            name.to_string(),
            Param {
                value,
                grad: Tensor::zeros(&shape),
                m: Tensor::zeros(&shape),
                u: Tensor::zeros(&shape),
            },
        );
        assert!(prev.is_none(), "duplicate parameter `{name}`");
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self.entries.get(name).unwrap_or_else(|| missing(name)).value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| missing(name))
            .value
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        &self.entries.get(name).unwrap_or_else(|| missing(name)).grad
    }

    /// Accumulate `delta` into the gradient buffer of `name`.
    pub fn add_grad(&mut self, name: &str, delta: &Tensor) {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| missing(name))
            .grad
            .add_assign(delta);
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill_zero();
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    /// One Adamax update over every parameter:
    /// `m ← β1·m + (1-β1)·g`, `u ← max(β2·u, |g|)`,
    /// `θ ← θ - lr/(1-β1^t) · m/(u+ε)`, with the bias correction applied
    /// to the first moment only. The step counter increments once per call.
    pub fn adamax_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let correction = 1.0 - beta1.powi(self.step as i32);
        for p in self.entries.values_mut() {
            let g = p.grad.data();
            let m = p.m.data_mut();
            let u = p.u.data_mut();
            let theta = p.value.data_mut();
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                u[i] = (beta2 * u[i]).max(g[i].abs());
                theta[i] -= (lr / correction) * m[i] / (u[i] + eps);
            }
            p.value.debug_assert_finite("adamax_step");
        }
    }

    /// Clone of every parameter value, for best-epoch snapshots.
    pub fn snapshot(&self) -> Vec<(String, Tensor)> {
        self.entries
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }

    pub fn restore(&mut self, snapshot: &[(String, Tensor)]) {
        for (name, value) in snapshot {
            self.entries
                .get_mut(name)
                .unwrap_or_else(|| missing(name))
                .value = value.clone();
        }
    }
}

fn missing(name: &str) -> ! {
    panic!("unknown parameter `{name}`")
}

/// Uniform values in `[lo, hi)`, the embedding-table initializer.
pub fn uniform_init(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data)
}

/// Glorot-uniform initializer for weight matrices: `±sqrt(6/(fan_in+fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_init(&[fan_in, fan_out], -limit, limit, rng)
}
