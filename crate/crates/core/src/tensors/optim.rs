use std::sync::Arc;

use super::param::ParamStore;
use super::Real;

#[derive(Clone, Copy, Debug)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One AdamW update of a single value; `t` is the 1-based step index.
#[inline]
pub fn adamw_update(p: f64, g: f64, m: &mut f64, v: &mut f64, t: u64, cfg: &AdamWConfig) -> f64 {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let mhat = *m / (1.0 - cfg.beta1.powi(t as i32));
    let vhat = *v / (1.0 - cfg.beta2.powi(t as i32));
    p - cfg.lr * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * p)
}

/// Adaptive moments with decoupled weight decay. Holds one moment slot per
/// parameter of the store it was built for.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl AdamW {
    pub fn new<T: Real>(store: &ParamStore<T>, config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: vec![None; store.len()],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply accumulated gradients to every trainable parameter that has one.
    /// Frozen parameters are left untouched.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let t = self.step;
        let cfg = self.config;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let Some(grad) = p.grad.as_ref() else { continue };
            let (m, v) = self.moments[id.0].get_or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            let tensor = Arc::make_mut(&mut p.tensor);
            for (((w, &g), m), v) in tensor.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *w = T::of(adamw_update(w.as_f64(), g.as_f64(), m, v, t, &cfg));
            }
        }
    }
}
