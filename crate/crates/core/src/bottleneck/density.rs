//! Factorized univariate density over latent dimensions.
//!
//! Each latent dimension owns a small monotone network mapping a real `u`
//! to a logit; the cumulative distribution is the sigmoid of that logit.
//! Layers alternate `H·h + b` (with `H` kept elementwise positive through a
//! softplus) and `h + a ⊙ tanh(h)` (with `|a| < 1` through a tanh), so every
//! layer is non-decreasing and so is the composition.

use crate::error::{dim_err, Result};
use crate::numerics::ops::{sigmoid_scalar, softplus_scalar};
use crate::numerics::{Graph, ParamId, ParamStore, RngState, Tensor, Var};

/// Default hidden filter sizes between the scalar input and scalar logit.
pub const DEFAULT_FILTERS: [usize; 3] = [3, 3, 3];
/// Default lower bound on the probability mass of any integer bin.
pub const DEFAULT_LIKELIHOOD_FLOOR: f64 = 1e-9;
const INIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct FactorizedDensity {
    latent_dim: usize,
    /// Layer widths including the scalar input and output: `[1, r_1, …, 1]`.
    widths: Vec<usize>,
    floor: f64,
    matrices: Vec<ParamId>,
    biases: Vec<ParamId>,
    factors: Vec<ParamId>,
}

/// Transformed density parameters, prepared once per graph.
pub struct DensityVars {
    matrices: Vec<Var>,
    biases: Vec<Var>,
    factors: Vec<Var>,
}

impl FactorizedDensity {
    /// Registers the density parameters under `prefix` in `store`.
    ///
    /// Matrices start at a constant chosen so that the initial CDF is a
    /// logistic with scale [`INIT_SCALE`]; biases and factors start at zero, so
    /// the initial CDF is symmetric about 0. The RNG is accepted for
    /// interface symmetry with other layers and is not consumed.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        latent_dim: usize,
        filters: &[usize],
        floor: f64,
        _rng: &mut RngState,
    ) -> Result<Self> {
        if latent_dim == 0 || filters.contains(&0) {
            return dim_err("density needs latent_dim >= 1 and non-zero filters");
        }
        let mut widths = vec![1];
        widths.extend_from_slice(filters);
        widths.push(1);
        let layers = widths.len() - 1;
        let scale = INIT_SCALE.powf(1.0 / layers as f64);
        let (mut matrices, mut biases, mut factors) = (vec![], vec![], vec![]);
        for k in 0..layers {
            let (r_in, r_out) = (widths[k], widths[k + 1]);
            let init = (1.0 / scale / r_out as f64).exp_m1().ln();
            matrices.push(store.register(
                format!("{prefix}.matrix{k}"),
                Tensor::full(&[latent_dim, r_out, r_in], init),
            )?);
            biases.push(store.register(
                format!("{prefix}.bias{k}"),
                Tensor::zeros(&[latent_dim, r_out, 1]),
            )?);
            if k + 1 < layers {
                factors.push(store.register(
                    format!("{prefix}.factor{k}"),
                    Tensor::zeros(&[latent_dim, r_out, 1]),
                )?);
            }
        }
        Ok(FactorizedDensity {
            latent_dim,
            widths,
            floor,
            matrices,
            biases,
            factors,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Logit of the CDF at `u` for dimension `dim`, evaluated directly.
    pub fn logit(&self, params: &ParamStore, u: f64, dim: usize) -> f64 {
        let mut h = vec![u];
        let layers = self.widths.len() - 1;
        for k in 0..layers {
            let (r_in, r_out) = (self.widths[k], self.widths[k + 1]);
            let m = params.value(self.matrices[k]).data();
            let b = params.value(self.biases[k]).data();
            let mut next = vec![0.0; r_out];
            for (i, nv) in next.iter_mut().enumerate() {
                let row = &m[(dim * r_out + i) * r_in..(dim * r_out + i + 1) * r_in];
                *nv = b[dim * r_out + i]
                    + row.iter().zip(&h).map(|(&w, &x)| softplus_scalar(w) * x).sum::<f64>();
            }
            if k + 1 < layers {
                let a = params.value(self.factors[k]).data();
                for (i, nv) in next.iter_mut().enumerate() {
                    *nv += a[dim * r_out + i].tanh() * nv.tanh();
                }
            }
            h = next;
        }
        h[0]
    }

    /// CDF of dimension `dim` at `u`.
    pub fn cumulative(&self, params: &ParamStore, u: f64, dim: usize) -> f64 {
        sigmoid_scalar(self.logit(params, u, dim))
    }

    /// Mass of the unit bin centred on each `z[i]` under dimension `i`,
    /// floored at the likelihood floor.
    pub fn likelihood(&self, params: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return dim_err(format!(
                "latent has {} entries, density covers {}",
                z.len(),
                self.latent_dim
            ));
        }
        Ok(z
            .iter()
            .enumerate()
            .map(|(i, &zi)| {
                let lo = self.logit(params, zi - 0.5, i);
                let hi = self.logit(params, zi + 0.5, i);
                bin_mass(lo, hi).max(self.floor)
            })
            .collect())
    }

    /// Estimated code length of `z` in bits.
    pub fn rate_bits(&self, params: &ParamStore, z: &[f64]) -> Result<f64> {
        Ok(self
            .likelihood(params, z)?
            .iter()
            .map(|p| -p.log2())
            .sum())
    }

    /// Records the reparameterised density parameters on `g`.
    pub fn prepare(&self, g: &mut Graph) -> DensityVars {
        let matrices = self
            .matrices
            .iter()
            .map(|&id| {
                let raw = g.param(id);
                g.softplus(raw)
            })
            .collect();
        let biases = self.biases.iter().map(|&id| g.param(id)).collect();
        let factors = self
            .factors
            .iter()
            .map(|&id| {
                let raw = g.param(id);
                g.tanh(raw)
            })
            .collect();
        DensityVars {
            matrices,
            biases,
            factors,
        }
    }

    /// Logits for a `[N, 1, M]` batch of CDF arguments.
    fn logits_var(&self, g: &mut Graph, dv: &DensityVars, u: Var) -> Result<Var> {
        let mut h = u;
        let layers = dv.matrices.len();
        for k in 0..layers {
            h = g.batch_matmul(dv.matrices[k], h)?;
            h = g.add_broadcast(h, dv.biases[k])?;
            if k + 1 < layers {
                let t = g.tanh(h);
                let scaled = g.mul_broadcast(t, dv.factors[k])?;
                h = g.add(h, scaled)?;
            }
        }
        Ok(h)
    }

    /// Differentiable likelihood of a length-`N` latent variable.
    pub fn likelihood_var(&self, g: &mut Graph, dv: &DensityVars, z: Var) -> Result<Var> {
        let zv = g.value(z).clone();
        if zv.len() != self.latent_dim {
            return dim_err(format!(
                "latent has {} entries, density covers {}",
                zv.len(),
                self.latent_dim
            ));
        }
        let n = self.latent_dim;
        let z3 = g.reshape(z, vec![n, 1, 1])?;
        let half = g.input(Tensor::full(&[n, 1, 1], 0.5));
        let upper_in = g.add(z3, half)?;
        let lower_in = g.sub(z3, half)?;
        let upper = self.logits_var(g, dv, upper_in)?;
        let lower = self.logits_var(g, dv, lower_in)?;
        // Evaluate the bin on the side of the sigmoid where it is far from
        // saturation; the sign is piecewise constant so it carries no gradient.
        let sign: Vec<f64> = g
            .value(upper)
            .data()
            .iter()
            .zip(g.value(lower).data())
            .map(|(u, l)| if u + l > 0.0 { -1.0 } else { 1.0 })
            .collect();
        let sign = g.input(Tensor::new(vec![n, 1, 1], sign)?);
        let su = g.mul(upper, sign)?;
        let sl = g.mul(lower, sign)?;
        let pu = g.sigmoid(su);
        let pl = g.sigmoid(sl);
        let diff = g.sub(pu, pl)?;
        let mass = g.abs(diff);
        let floored = g.clamp_min(mass, self.floor);
        g.reshape(floored, vec![n])
    }

    /// Differentiable `Σ −log2 likelihood(z)`.
    pub fn rate_bits_var(&self, g: &mut Graph, dv: &DensityVars, z: Var) -> Result<Var> {
        let lik = self.likelihood_var(g, dv, z)?;
        let ln = g.log(lik)?;
        let total = g.sum(ln)?;
        Ok(g.scale(total, -1.0 / std::f64::consts::LN_2))
    }
}

/// `sigmoid(hi) − sigmoid(lo)` computed on the non-saturated side.
fn bin_mass(lo: f64, hi: f64) -> f64 {
    let s = if lo + hi > 0.0 { -1.0 } else { 1.0 };
    (sigmoid_scalar(s * hi) - sigmoid_scalar(s * lo)).abs()
}
