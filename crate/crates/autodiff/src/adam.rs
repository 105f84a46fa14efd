use crate::error::{shape_err, Result};
use crate::param::{Gradients, ParamStore};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = store.iter().map(|(_, _, t)| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update; parameters without a gradient are treated as having zero gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(shape_err(
                "adam_step",
                format!("state for {} tensors, store has {}", self.first.len(), store.len()),
            ));
        }
        for (id, _, t) in store.iter() {
            let expected = self.first[id.0].len();
            let grad_len = grads.get(id).map_or(expected, |g| g.len());
            if t.len() != expected || grad_len != expected {
                return Err(shape_err(
                    "adam_step",
                    format!("parameter {} has {} elements, gradient {grad_len}", id.0, t.len()),
                ));
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.learning_rate / bias1);
        let bias2_sqrt = T::of(bias2.sqrt());
        let eps = T::of(c.epsilon);

        for i in 0..store.len() {
            let id = crate::ParamId(i);
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let param = store.get_mut(id).data_mut();
            match grads.get(id) {
                Some(g) => {
                    for (((p, m), v), &g) in param.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                        *m = b1 * *m + one_b1 * g;
                        *v = b2 * *v + one_b2 * g * g;
                        *p -= step_size * *m / (v.sqrt() / bias2_sqrt + eps);
                    }
                }
                None => {
                    for ((p, m), v) in param.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m;
                        *v = b2 * *v;
                        *p -= step_size * *m / (v.sqrt() / bias2_sqrt + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Graph, Mode, Tensor};

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(x));
        s
    }

    fn grads_of(
        store: &ParamStore<f64>,
        f: impl Fn(&mut Graph<f64>, crate::Var) -> crate::Result<crate::Var>,
    ) -> Gradients<f64> {
        let mut g = Graph::new(Mode::Train);
        let p = g.bind_params(store).unwrap();
        let loss = f(&mut g, p[0]).unwrap();
        g.backward(loss).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = scalar_store(1.5);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        let grads = grads_of(&store, |g, x| g.scale(x, 0.0));
        for _ in 0..5 {
            adam.step(&mut store, &grads).unwrap();
        }
        assert_eq!(store.get(crate::ParamId(0)).data()[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
        let mut store = scalar_store(2.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &store);
        let grads = grads_of(&store, |_, x| Ok(x));
        adam.step(&mut store, &grads).unwrap();
        let expected = 2.0 - 0.1 / (1.0 + 1e-8);
        assert!((store.get(crate::ParamId(0)).data()[0] - expected).abs() < 1e-12);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // (x - 3)^2 + (y + 1)^2
        let mut store = ParamStore::new();
        store.insert("p", Tensor::new(vec![2], vec![0.0f64, 0.0]).unwrap());
        let target = Tensor::new(vec![2], vec![3.0, -1.0]).unwrap();
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            &store,
        );
        let mut steps = 0;
        for _ in 0..2000 {
            let mut g = Graph::new(Mode::Train);
            let p = g.bind_params(&store).unwrap();
            let t = g.input(target.clone()).unwrap();
            let d = g.sub(p[0], t).unwrap();
            let sq = g.mul(d, d).unwrap();
            let loss = g.sum(sq).unwrap();
            let grads = g.backward(loss).unwrap();
            adam.step(&mut store, &grads).unwrap();
            steps += 1;
            let v = store.get(crate::ParamId(0)).data();
            if (v[0] - 3.0).abs() < 1e-3 && (v[1] + 1.0).abs() < 1e-3 {
                break;
            }
        }
        let v = store.get(crate::ParamId(0)).data();
        assert!((v[0] - 3.0).abs() < 1e-3 && (v[1] + 1.0).abs() < 1e-3, "{v:?}");
        assert!(steps <= 2000);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let store = scalar_store(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        let mut other = ParamStore::new();
        other.insert("x", Tensor::scalar(1.0));
        other.insert("y", Tensor::scalar(1.0));
        let grads = grads_of(&store, |_, x| Ok(x));
        assert!(adam.step(&mut other, &grads).is_err());
    }
}
