use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        AdamState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients stored on `params`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Contract("optimizer built for a different parameter set".into()));
        }
        if let Some((_, p)) = params.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(Error::Contract(format!("parameter {} has no gradient", p.name)));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.as_ref().expect("checked above").data();
            for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store(vals: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        for (i, &v) in vals.iter().enumerate() {
            s.register(format!("p{i}"), Tensor::vector(vec![v])).unwrap();
        }
        s
    }

    fn set_grads(s: &mut ParamStore, g: &[f64]) {
        for (p, &gv) in s.iter_mut().zip(g) {
            p.grad = Some(Tensor::vector(vec![gv]));
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = store(&[0.7]);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        for _ in 0..5 {
            set_grads(&mut s, &[0.0]);
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.iter().next().unwrap().1.value.data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store(&[0.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        set_grads(&mut s, &[1.0]);
        adam.step(&mut s).unwrap();
        let w = s.iter().next().unwrap().1.value.data()[0];
        let expected = -1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((w - expected).abs() < 1e-15, "{w}");
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn identical_params_get_identical_updates() {
        let mut s = store(&[0.3, 0.3]);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        for g in [0.5, -1.2, 2.0] {
            set_grads(&mut s, &[g, g]);
            adam.step(&mut s).unwrap();
        }
        let vals: Vec<f64> = s.iter().map(|(_, p)| p.value.data()[0]).collect();
        assert_eq!(vals[0], vals[1]);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = store(&[1.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        assert!(matches!(adam.step(&mut s), Err(Error::Contract(_))));
    }
}
