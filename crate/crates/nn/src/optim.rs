//! Optimizers: Adam and a rectified-warmup + lookahead variant of adaptive
//! moments ("ranger-style"), used for encoder training.

use crate::params::{ParamRef, ParamStore};
use crate::real::Real;
use crate::tape::Arr;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    /// RAdam rectified warmup plus lookahead slow weights.
    Ranger {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        lookahead_k: usize,
        lookahead_alpha: f64,
    },
}

impl OptimizerConfig {
    pub fn adam(lr: f64, beta1: f64, beta2: f64) -> Self {
        OptimizerConfig::Adam { lr, beta1, beta2, eps: 1e-8 }
    }

    pub fn ranger(lr: f64) -> Self {
        OptimizerConfig::Ranger {
            lr,
            beta1: 0.95,
            beta2: 0.999,
            eps: 1e-8,
            lookahead_k: 6,
            lookahead_alpha: 0.5,
        }
    }
}

pub struct Optimizer<F: Real> {
    pub config: OptimizerConfig,
    pub step_count: u64,
    m: Vec<Arr<F>>,
    v: Vec<Arr<F>>,
    slow: Vec<Arr<F>>,
}

impl<F: Real> Optimizer<F> {
    pub fn new(config: OptimizerConfig, store: &ParamStore<F>) -> Self {
        let zeros: Vec<Arr<F>> = (0..store.len())
            .map(|i| Arr::zeros(store.value(ParamRef(i)).raw_dim()))
            .collect();
        let slow = match &config {
            OptimizerConfig::Ranger { .. } => (0..store.len())
                .map(|i| store.value(ParamRef(i)).clone())
                .collect(),
            _ => Vec::new(),
        };
        Optimizer { config, step_count: 0, m: zeros.clone(), v: zeros, slow }
    }

    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &[(ParamRef, Arr<F>)]) {
        self.step_count += 1;
        let t = self.step_count as f64;
        match self.config.clone() {
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                self.adaptive_update(store, grads, lr, beta1, beta2, eps, t, false);
            }
            OptimizerConfig::Ranger { lr, beta1, beta2, eps, lookahead_k, lookahead_alpha } => {
                self.adaptive_update(store, grads, lr, beta1, beta2, eps, t, true);
                if self.step_count % lookahead_k as u64 == 0 {
                    let alpha = F::from_f64(lookahead_alpha);
                    for i in 0..store.len() {
                        let fast = store.value_mut(ParamRef(i));
                        let slow = &mut self.slow[i];
                        ndarray::Zip::from(slow.view_mut()).and(fast.view()).for_each(
                            |s, f| *s = *s + alpha * (*f - *s),
                        );
                        fast.assign(slow);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn adaptive_update(
        &mut self,
        store: &mut ParamStore<F>,
        grads: &[(ParamRef, Arr<F>)],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: f64,
        rectified: bool,
    ) {
        let b1 = F::from_f64(beta1);
        let b2 = F::from_f64(beta2);
        let one = F::one();
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);

        // RAdam rectification term
        let (use_adaptive, rect) = if rectified {
            let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
            let rho_t = rho_inf - 2.0 * t * beta2.powf(t) / bias2;
            if rho_t > 4.0 {
                let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                    / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                    .sqrt();
                (true, r)
            } else {
                (false, 1.0)
            }
        } else {
            (true, 1.0)
        };

        for (pref, g) in grads {
            let i = pref.0;
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(m.view_mut()).and(g.view()).for_each(|m, g| {
                *m = b1 * *m + (one - b1) * *g;
            });
            ndarray::Zip::from(v.view_mut()).and(g.view()).for_each(|v, g| {
                *v = b2 * *v + (one - b2) * *g * *g;
            });
            let param = store.value_mut(*pref);
            if use_adaptive {
                let scale = F::from_f64(lr * rect / bias1);
                let b2c = F::from_f64(bias2);
                let e = F::from_f64(eps);
                ndarray::Zip::from(param.view_mut())
                    .and(m.view())
                    .and(v.view())
                    .for_each(|p, m, v| {
                        let vhat = (*v / b2c).sqrt();
                        *p = *p - scale * *m / (vhat + e);
                    });
            } else {
                // warmup phase: un-adapted momentum step
                let scale = F::from_f64(lr / bias1);
                ndarray::Zip::from(param.view_mut()).and(m.view()).for_each(|p, m| {
                    *p = *p - scale * *m;
                });
            }
        }
    }

    /// Serializes moment buffers for checkpointing.
    pub fn state_tensors(&self, store: &ParamStore<F>) -> Vec<(String, Arr<F>)> {
        let mut out = Vec::new();
        for i in 0..store.len() {
            out.push((format!("opt_m.{}", store.name(ParamRef(i))), self.m[i].clone()));
            out.push((format!("opt_v.{}", store.name(ParamRef(i))), self.v[i].clone()));
        }
        for (i, s) in self.slow.iter().enumerate() {
            out.push((format!("opt_slow.{}", store.name(ParamRef(i))), s.clone()));
        }
        out
    }

    pub fn load_state(
        &mut self,
        store: &ParamStore<F>,
        step: u64,
        mut lookup: impl FnMut(&str) -> Option<Arr<F>>,
    ) {
        self.step_count = step;
        for i in 0..store.len() {
            if let Some(m) = lookup(&format!("opt_m.{}", store.name(ParamRef(i)))) {
                self.m[i] = m;
            }
            if let Some(v) = lookup(&format!("opt_v.{}", store.name(ParamRef(i)))) {
                self.v[i] = v;
            }
            if !self.slow.is_empty() {
                if let Some(s) = lookup(&format!("opt_slow.{}", store.name(ParamRef(i)))) {
                    self.slow[i] = s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init;
    use ndarray::IxDyn;

    #[test]
    fn adam_descends_a_quadratic() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let p = store.add("x", init::constant(&[1], 5.0));
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1, 0.9, 0.999), &store);
        for _ in 0..200 {
            let x = store.value(p)[IxDyn(&[0])];
            let g = Arr::from_elem(IxDyn(&[1]), 2.0 * x);
            opt.step(&mut store, &[(p, g)]);
        }
        assert!(store.value(p)[IxDyn(&[0])].abs() < 0.1);
    }

    #[test]
    fn adam_with_zero_beta1_is_momentum_free() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let p = store.add("x", init::constant(&[1], 1.0));
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.01, 0.0, 0.99), &store);
        let g = Arr::from_elem(IxDyn(&[1]), 1.0);
        opt.step(&mut store, &[(p, g)]);
        // with beta1 = 0, m == g, so the first step is lr * g / sqrt(g^2) = lr
        let x = store.value(p)[IxDyn(&[0])];
        assert!((x - (1.0 - 0.01)).abs() < 1e-6, "x = {x}");
    }

    #[test]
    fn ranger_descends_and_uses_lookahead() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let p = store.add("x", init::constant(&[1], 4.0));
        let mut opt = Optimizer::new(OptimizerConfig::ranger(0.05), &store);
        for _ in 0..600 {
            let x = store.value(p)[IxDyn(&[0])];
            let g = Arr::from_elem(IxDyn(&[1]), 2.0 * x);
            opt.step(&mut store, &[(p, g)]);
        }
        assert!(store.value(p)[IxDyn(&[0])].abs() < 0.5);
    }
}
