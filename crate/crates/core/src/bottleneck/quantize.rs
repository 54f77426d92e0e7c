use serde::{Deserialize, Serialize};

use crate::numerics::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerMode {
    /// Additive `Uniform(−½, ½)` noise; the training-time relaxation.
    Noise,
    /// Round half away from zero; used at inference and for coding.
    Round,
}

/// Quantizes `y`. `Round` never touches `rng`.
pub fn quantize(y: &[f64], mode: QuantizerMode, rng: &mut RngState) -> Vec<f64> {
    match mode {
        QuantizerMode::Round => y.iter().map(|v| v.round()).collect(),
        QuantizerMode::Noise => {
            let u = uniform_noise(y.len(), rng);
            y.iter().zip(u).map(|(a, b)| a + b).collect()
        }
    }
}

/// `n` i.i.d. draws from `Uniform(−½, ½)`.
pub fn uniform_noise(n: usize, rng: &mut RngState) -> Vec<f64> {
    (0..n).map(|_| rng.uniform() - 0.5).collect()
}

/// Integer symbols of an already rounded latent.
pub fn to_symbols(y: &[f64]) -> Vec<i64> {
    y.iter().map(|v| v.round() as i64).collect()
}
