use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::TcnAutoencoder;
use crate::numerics::{ops, Graph, Tensor, Var};

/// Weights of the two distortion terms in the rate-distortion loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1e5,
            lambda2: 1e5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("training.{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Mean squared error over every element.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    ops::mean(&ops::mul(&ops::sub(a, b)?, &ops::sub(a, b)?)?)
}

/// `rate + λ1·D(x, x̂) + λ2·D(x̂, x̃)` with `D` the mean squared error.
pub fn rdo_loss(x: &Tensor, x_hat: &Tensor, x_tilde: &Tensor, rate: f64, w: LossWeights) -> Result<f64> {
    if x.shape() != x_hat.shape() || x.shape() != x_tilde.shape() {
        return dim_err("rdo_loss operands differ in shape");
    }
    Ok(rate + w.lambda1 * mse(x, x_hat)? + w.lambda2 * mse(x_hat, x_tilde)?)
}

/// The three loss components recorded on a graph.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub distortion: Var,
    pub reconstruction: Var,
}

/// Graph form of [`rdo_loss`].
pub fn rdo_loss_var(
    g: &mut Graph,
    x: Var,
    x_hat: Var,
    x_tilde: Var,
    rate: Var,
    w: LossWeights,
) -> Result<LossVars> {
    let distortion = g.mse(x, x_hat)?;
    let reconstruction = g.mse(x_hat, x_tilde)?;
    let a = g.scale(distortion, w.lambda1);
    let b = g.scale(reconstruction, w.lambda2);
    let ab = g.add(a, b)?;
    let total = g.add(rate, ab)?;
    Ok(LossVars {
        total,
        distortion,
        reconstruction,
    })
}

/// Reconstruction MSE of the plain autoencoder, `D(x, g(f(x)))`.
pub fn ae_loss(x: &Tensor, model: &TcnAutoencoder) -> Result<f64> {
    if model.config().bottleneck_enabled {
        return Err(Error::Contract("ae_loss needs a model with the bottleneck disabled".into()));
    }
    mse(x, &model.forward_eval(x)?)
}
