use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::bottleneck::{uniform_noise, CodingTables, PmfTable};
use crate::error::{dim_err, Error, Result};
use crate::model::TcnAutoencoder;
use crate::numerics::{ops, AdamConfig, AdamState, Graph, ParamStore, RngState, Tensor};
use crate::training::loss::{rdo_loss_var, LossWeights};
use crate::training::normalizer::{ChannelNormalizer, DEFAULT_DECAY};
use crate::training::report::{EpochStats, TrainReport};

/// Coding tables span the observed latent range widened by this margin.
const TABLE_MARGIN: i64 = 2;
const MAX_TABLE_SPAN: i64 = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub omega_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        TrainConfig {
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            optimizer: AdamConfig::default(),
            batch_size: 32,
            epochs: 20,
            seed: 0,
            omega_decay: DEFAULT_DECAY,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("training.batch_size and training.epochs must be >= 1".into()));
        }
        if !(self.omega_decay >= 0.0 && self.omega_decay < 1.0) {
            return Err(Error::Config("training.omega_decay must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

struct Snapshot {
    total: f64,
    epoch: usize,
    params: ParamStore,
    omega: Vec<f64>,
}

/// Trains `model` on `windows` and returns the parameters of the epoch with
/// the lowest mean training loss. `report` is filled as epochs complete, so
/// it keeps every finite epoch when training aborts on a non-finite value.
pub fn fit(
    mut model: TcnAutoencoder,
    windows: &[Tensor],
    config: &TrainConfig,
    report: &mut TrainReport,
) -> Result<TcnAutoencoder> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::Contract("training corpus is empty".into()));
    }
    let want = [model.config().input_channels, model.config().window_length];
    if let Some(w) = windows.iter().find(|w| w.shape() != want) {
        return dim_err(format!("training window {:?}, model expects {:?}", w.shape(), want));
    }

    let rdo = model.config().bottleneck_enabled;
    let weights = config.weights();
    let mut root = RngState::new(config.seed);
    let mut order_rng = root.fork(1);
    let mut noise_rng = root.fork(2);
    let mut adam = AdamState::new(config.optimizer, model.params());
    let mut normalizer = ChannelNormalizer::new(want[0], config.omega_decay);
    let latent = model.config().latent_dim;
    let mut best: Option<Snapshot> = None;
    let mut order: Vec<usize> = (0..windows.len()).collect();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        order_rng.shuffle(&mut order);
        let mut sums = [0.0f64; 4];
        for batch in order.chunks(config.batch_size) {
            let inv = 1.0 / batch.len() as f64;
            model.params_mut().zero_grad();
            let mut residuals = Vec::with_capacity(batch.len());
            for &i in batch {
                let grads = {
                    let mut g = Graph::new(model.params());
                    let x = g.input(windows[i].clone());
                    let (total, parts, x_hat) = if rdo {
                        let noise = uniform_noise(latent, &mut noise_rng);
                        let out = model.forward_train(&mut g, x, &noise)?;
                        let lv = rdo_loss_var(&mut g, x, out.x_hat, out.x_tilde, out.rate, weights)?;
                        let parts = [
                            g.value(out.rate).item()?,
                            g.value(lv.distortion).item()?,
                            g.value(lv.reconstruction).item()?,
                        ];
                        (lv.total, parts, out.x_hat)
                    } else {
                        let x_hat = model.forward_ae(&mut g, x)?;
                        let d = g.mse(x, x_hat)?;
                        (d, [0.0, g.value(d).item()?, 0.0], x_hat)
                    };
                    let t = g.value(total).item()?;
                    if !t.is_finite() || parts.iter().any(|p| !p.is_finite()) {
                        return Err(Error::NonFinite(format!(
                            "loss became {t} in epoch {epoch} (last finite epoch: {:?})",
                            report.last().map(|e| e.epoch)
                        )));
                    }
                    for (s, v) in sums.iter_mut().zip([parts[0], parts[1], parts[2], t]) {
                        *s += v;
                    }
                    residuals.push(ops::sub(&windows[i], g.value(x_hat))?);
                    let scaled = g.scale(total, inv);
                    g.backward(scaled)?
                };
                model.params_mut().accumulate(&grads)?;
            }
            adam.step(model.params_mut())?;
            if !model.params().all_finite() {
                return Err(Error::NonFinite(format!("parameters became non-finite in epoch {epoch}")));
            }
            model.omega = normalizer.update(&residuals)?;
        }
        model.params_mut().clear_grad();

        let n = windows.len() as f64;
        let stats = EpochStats {
            epoch,
            rate: sums[0] / n,
            distortion: sums[1] / n,
            reconstruction: sums[2] / n,
            total: sums[3] / n,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: total {:.6e} rate {:.4} distortion {:.6e} reconstruction {:.6e}",
            stats.total, stats.rate, stats.distortion, stats.reconstruction
        );
        if best.as_ref().is_none_or(|b| stats.total < b.total) {
            best = Some(Snapshot {
                total: stats.total,
                epoch,
                params: model.params().clone(),
                omega: model.omega.clone(),
            });
        }
        report.epochs.push(stats);
    }

    let best = best.expect("at least one epoch ran");
    debug!("keeping parameters from epoch {}", best.epoch);
    model.params_mut().copy_values_from(&best.params)?;
    model.omega = best.omega;
    report.best_epoch = Some(best.epoch);
    if rdo {
        model.coding_tables = Some(build_coding_tables(&model, windows)?);
    }
    Ok(model)
}

/// Mean loss components of `model` over `windows` without updating
/// anything; the quantization noise is drawn from `noise_seed`.
pub fn evaluate(
    model: &TcnAutoencoder,
    windows: &[Tensor],
    weights: LossWeights,
    noise_seed: u64,
) -> Result<EpochStats> {
    if windows.is_empty() {
        return Err(Error::Contract("no windows to evaluate".into()));
    }
    let started = Instant::now();
    let mut rng = RngState::new(noise_seed);
    let mut sums = [0.0f64; 4];
    for w in windows {
        let mut g = Graph::new(model.params());
        let x = g.input(w.clone());
        let parts = if model.config().bottleneck_enabled {
            let noise = uniform_noise(model.config().latent_dim, &mut rng);
            let out = model.forward_train(&mut g, x, &noise)?;
            let lv = rdo_loss_var(&mut g, x, out.x_hat, out.x_tilde, out.rate, weights)?;
            [out.rate, lv.distortion, lv.reconstruction, lv.total].map(|v| g.value(v).data()[0])
        } else {
            let x_hat = model.forward_ae(&mut g, x)?;
            let d = g.mse(x, x_hat)?;
            let d = g.value(d).data()[0];
            [0.0, d, 0.0, d]
        };
        for (s, v) in sums.iter_mut().zip(parts) {
            *s += v;
        }
    }
    let n = windows.len() as f64;
    Ok(EpochStats {
        epoch: 0,
        rate: sums[0] / n,
        distortion: sums[1] / n,
        reconstruction: sums[2] / n,
        total: sums[3] / n,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Tabulates the learned density over the range of rounded latents seen on
/// `windows`, widened by a small margin on both sides.
pub fn build_coding_tables(model: &TcnAutoencoder, windows: &[Tensor]) -> Result<CodingTables> {
    let density = model
        .density()
        .ok_or_else(|| Error::Contract("autoencoder mode has no density to tabulate".into()))?;
    let n = model.config().latent_dim;
    let mut lo = vec![i64::MAX; n];
    let mut hi = vec![i64::MIN; n];
    for w in windows {
        for (i, s) in model.latent_symbols(w)?.into_iter().enumerate() {
            lo[i] = lo[i].min(s);
            hi[i] = hi[i].max(s);
        }
    }
    let mut tables = Vec::with_capacity(n);
    for dim in 0..n {
        let (mut a, mut b) = if lo[dim] <= hi[dim] { (lo[dim], hi[dim]) } else { (0, 0) };
        a -= TABLE_MARGIN;
        b += TABLE_MARGIN;
        if b - a >= MAX_TABLE_SPAN {
            let mid = a + (b - a) / 2;
            a = mid - MAX_TABLE_SPAN / 2;
            b = a + MAX_TABLE_SPAN - 1;
        }
        let probs: Vec<f64> = (a..=b)
            .map(|v| {
                let c = |u: f64| density.cumulative(model.params(), u, dim);
                (c(v as f64 + 0.5) - c(v as f64 - 0.5)).max(0.0)
            })
            .collect();
        tables.push(PmfTable::from_probabilities(a, &probs)?);
    }
    CodingTables::new(tables)
}
