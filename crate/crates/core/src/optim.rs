use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tape::ParamGrads;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers and step counter for one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            second: zeros.clone(),
            first: zeros,
        }
    }
}

/// Bias-corrected Adam update applied in place. Parameters whose gradient is
/// `None` (unreached by the loss) are left untouched.
pub fn adam_step(store: &mut ParamStore, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    if grads.0.len() != store.len() || state.first.len() != store.len() {
        return Err(Error::dim("adam_step", &[store.len()], &[grads.0.len(), state.first.len()]));
    }
    for (id, grad) in store.ids().zip(&grads.0) {
        if let Some(g) = grad {
            let p = store.get(id);
            if p.shape() != g.shape() || state.first[id.index()].len() != p.len() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(beta1, t);
    let c2 = 1.0 - libm::pow(beta2, t);
    let ids: Vec<_> = store.ids().collect();
    for (id, grad) in ids.into_iter().zip(&grads.0) {
        let Some(g) = grad else { continue };
        let i = id.index();
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for (k, (p, &gk)) in store.get_mut(id).data_mut().iter_mut().zip(g.data()).enumerate() {
            if !gk.is_finite() {
                return Err(Error::Data(format!("non-finite gradient in parameter #{i}")));
            }
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *p -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
        }
    }
    Ok(())
}
