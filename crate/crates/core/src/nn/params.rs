use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::RngState;

use super::layers::Network;

/// A named parameter with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Entry {
    pub name: String,
    pub tensor: Tensor,
    /// Running statistics are stored alongside weights but never optimised.
    pub trainable: bool,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Named parameters, gradients and Adam moments, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    pub(crate) entries: Vec<Entry>,
    index: BTreeMap<String, usize>,
    /// Number of Adam steps taken.
    pub step: u64,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter; names must be unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let n = tensor.len();
        self.entries.push(Entry {
            name: name.to_string(),
            tensor,
            trainable,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        self.index.insert(name.to_string(), self.entries.len() - 1);
        Ok(self.entries.len() - 1)
    }

    /// Appends every entry of `other`, moments included.
    pub fn merge(&mut self, other: ModelParams) -> Result<()> {
        for e in other.entries {
            let id = self.insert(&e.name, e.tensor, e.trainable)?;
            self.entries[id].m = e.m;
            self.entries[id].v = e.v;
        }
        Ok(())
    }

    /// Copy restricted to the parameters whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ModelParams {
        let mut out = ModelParams::new();
        for e in self.entries.iter().filter(|e| e.name.starts_with(prefix)) {
            let id = out
                .insert(&e.name, e.tensor.clone(), e.trainable)
                .expect("names are unique");
            out.entries[id].m.clone_from(&e.m);
            out.entries[id].v.clone_from(&e.v);
        }
        out.step = self.step;
        out
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].tensor)
    }

    pub(crate) fn by_id(&self, id: usize) -> &Tensor {
        &self.entries[id].tensor
    }

    pub(crate) fn by_id_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.entries[id].tensor
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.index.get(name).is_some_and(|&i| self.entries[i].trainable)
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.tensor.grad.fill(0.0);
        }
    }

    /// Fails on the first parameter holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        for e in &self.entries {
            if e.tensor.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter `{}`", e.name)));
            }
        }
        Ok(())
    }

    /// Adam first and second moments of a parameter.
    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.index
            .get(name)
            .map(|&i| (self.entries[i].m.as_slice(), self.entries[i].v.as_slice()))
    }

    pub(crate) fn set_moments(&mut self, name: &str, m: Vec<f64>, v: Vec<f64>) -> Result<()> {
        let id = self.id(name)?;
        let e = &mut self.entries[id];
        if m.len() != e.tensor.len() || v.len() != e.tensor.len() {
            return Err(Error::Shape(format!("moment length mismatch for `{name}`")));
        }
        e.m = m;
        e.v = v;
        Ok(())
    }

    /// Flattened view over every scalar: `(entry, offset)` for coordinate `k`.
    pub(crate) fn locate(&self, mut k: usize) -> Option<(usize, usize)> {
        for (i, e) in self.entries.iter().enumerate() {
            if k < e.tensor.len() {
                return Some((i, k));
            }
            k -= e.tensor.len();
        }
        None
    }

    pub(crate) fn entry_name(&self, id: usize) -> &str {
        &self.entries[id].name
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of every trainable parameter. `step` is the
/// 1-based step number used for bias correction.
pub fn adam_step(params: &mut ModelParams, cfg: &AdamConfig, step: u64) -> Result<()> {
    if step < 1 {
        return Err(Error::InvalidArgument("Adam step must be >= 1".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for e in params.entries.iter_mut().filter(|e| e.trainable) {
        for (((w, &g), m), v) in e
            .tensor
            .value
            .iter_mut()
            .zip(&e.tensor.grad)
            .zip(e.m.iter_mut())
            .zip(e.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    params.step = step;
    params.check_finite()
}

/// Allocates and initialises the parameters of every network: weights
/// uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_params(networks: &[&Network], seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::new();
    let mut rng = RngState::derive(seed, &[0x1417]);
    for net in networks {
        net.init_params(&mut params, &mut rng)?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>, grads: Vec<f64>) -> ModelParams {
        let mut p = ModelParams::new();
        let mut t = Tensor::zeros(&[values.len()]);
        t.value = values;
        t.grad = grads;
        p.insert("w", t, true).unwrap();
        p
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = store(vec![0.5, -2.0, 3.0], vec![1.0; 3]);
        adam_step(&mut p, &AdamConfig::with_lr(1e-3), 1).unwrap();
        let w = &p.get("w").unwrap().value;
        for (a, b) in w.iter().zip([0.5, -2.0, 3.0]) {
            assert!((a - (b - 1e-3)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = store(vec![0.5, -2.0], vec![0.0; 2]);
        adam_step(&mut p, &AdamConfig::with_lr(1e-3), 1).unwrap();
        assert_eq!(p.get("w").unwrap().value, vec![0.5, -2.0]);
    }

    #[test]
    fn step_zero_is_error() {
        let mut p = store(vec![1.0], vec![1.0]);
        assert!(adam_step(&mut p, &AdamConfig::with_lr(1e-3), 0).is_err());
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = store(vec![1.0, 2.0], vec![0.0; 2]);
            for s in 1..=20u64 {
                let w = p.get("w").unwrap().value.clone();
                p.get_mut("w").unwrap().grad = w.iter().map(|x| 2.0 * x).collect();
                adam_step(&mut p, &AdamConfig::with_lr(0.05), s).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ModelParams::new();
        p.insert("a", Tensor::zeros(&[1]), true).unwrap();
        assert!(p.insert("a", Tensor::zeros(&[2]), true).is_err());
    }

    #[test]
    fn non_finite_detected() {
        let p = store(vec![f64::NAN], vec![0.0]);
        assert!(matches!(p.check_finite(), Err(Error::NonFinite(_))));
    }
}
