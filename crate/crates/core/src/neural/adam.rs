use super::NeuralError;
use crate::tensor::{Gradients, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// First and second moment estimates for every parameter of one store.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    frozen: Vec<bool>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
            frozen: vec![false; store.len()],
        }
    }

    pub fn freeze(&mut self, id: ParamId) {
        self.frozen[id.index()] = true;
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.index()]
    }

    /// Freezes every parameter whose name starts with one of `prefixes`.
    pub fn freeze_prefixes(&mut self, store: &ParamStore, prefixes: &[String]) {
        for (id, name, _) in store.iter() {
            if prefixes.iter().any(|p| name.starts_with(p.as_str())) {
                self.frozen[id.index()] = true;
            }
        }
    }
}

/// One bias-corrected Adam update. Parameters absent from `grads` receive a
/// zero gradient. A non-finite gradient aborts before anything is modified.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<(), NeuralError> {
    for (id, g) in grads.params() {
        if !state.frozen[id.index()] && !g.all_finite() {
            return Err(NeuralError::NonFiniteGradient(store.name(id).to_string()));
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let i = id.index();
        if state.frozen[i] {
            continue;
        }
        let g = grads.param(id);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = store.get_mut(id).data_mut();
        for k in 0..p.len() {
            let gk = g.map_or(0.0, |g| g.data()[k]);
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            p[k] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tape};

    fn quad_grads(store: &ParamStore, target: f64) -> Gradients {
        let tape = Tape::new();
        let g = Graph::new(&tape, store);
        let w = g.param(ParamId(0));
        let loss = w.add_scalar(-target).square().sum();
        tape.backward(loss).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![0.0, 10.0]));
        let mut st = AdamState::new(&store, AdamConfig::with_lr(0.1));
        let grads = quad_grads(&store, 3.0);
        adam_step(&mut store, &grads, &mut st).unwrap();
        let w = store.get(ParamId(0)).data();
        assert!((w[0] - 0.1).abs() < 1e-8);
        assert!((w[1] - 9.9).abs() < 1e-8);
    }

    #[test]
    fn quadratic_converges() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(0.0));
        let mut st = AdamState::new(&store, AdamConfig::with_lr(0.1));
        for _ in 0..100 {
            let grads = quad_grads(&store, 3.0);
            adam_step(&mut store, &grads, &mut st).unwrap();
        }
        let w = store.get(ParamId(0)).item();
        assert!((w - 3.0).abs() < 0.05, "{w}");
        assert_eq!(st.step, 100);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.5, -2.0]));
        let before = store.clone();
        let mut st = AdamState::new(&store, AdamConfig::with_lr(0.0));
        for _ in 0..5 {
            let grads = quad_grads(&store, 3.0);
            adam_step(&mut store, &grads, &mut st).unwrap();
        }
        assert_eq!(store, before);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![3.0, 3.0]));
        let before = store.clone();
        let mut st = AdamState::new(&store, AdamConfig::with_lr(0.5));
        for _ in 0..10 {
            let grads = quad_grads(&store, 3.0);
            adam_step(&mut store, &grads, &mut st).unwrap();
        }
        assert_eq!(store, before);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        store.insert("a/w", Tensor::scalar(0.0));
        store.insert("b/w", Tensor::scalar(0.0));
        let mut st = AdamState::new(&store, AdamConfig::with_lr(0.1));
        st.freeze_prefixes(&store, &["a/".to_string()]);
        let tape = Tape::new();
        let g = Graph::new(&tape, &store);
        let loss = g
            .param(ParamId(0))
            .add(g.param(ParamId(1)))
            .unwrap()
            .add_scalar(-1.0)
            .square();
        let grads = tape.backward(loss).unwrap();
        adam_step(&mut store, &grads, &mut st).unwrap();
        assert_eq!(store.get(ParamId(0)).item(), 0.0);
        assert!(store.get(ParamId(1)).item() > 0.0);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut store = ParamStore::new();
        store.insert("enc/w", Tensor::scalar(-1.0));
        let before = store.clone();
        let mut st = AdamState::new(&store, AdamConfig::default());
        let tape = Tape::new();
        let g = Graph::new(&tape, &store);
        let loss = g.param(ParamId(0)).sqrt();
        let grads = tape.backward(loss).unwrap();
        let err = adam_step(&mut store, &grads, &mut st).unwrap_err();
        assert!(err.to_string().contains("enc/w"), "{err}");
        assert_eq!(store, before);
        assert_eq!(st.step, 0);
    }
}
