use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

/// Number of consecutive time steps averaged into one subset score.
pub const SUBSET_SIZE: usize = 10;

/// `æ[c, j] = ω_c · |x[c, j] − x̂[c, j]|`.
pub fn scaled_abs_error(x: &Tensor, x_hat: &Tensor, omega: &[f64]) -> Result<Tensor> {
    if x.rank() != 2 || x.shape() != x_hat.shape() {
        return dim_err(format!("cannot compare {:?} with {:?}", x.shape(), x_hat.shape()));
    }
    let (c, t) = (x.shape()[0], x.shape()[1]);
    if omega.len() != c {
        return dim_err(format!("omega has {} entries for {c} channels", omega.len()));
    }
    let data = x
        .data()
        .iter()
        .zip(x_hat.data())
        .enumerate()
        .map(|(k, (a, b))| omega[k / t] * (a - b).abs())
        .collect();
    Tensor::new(vec![c, t], data)
}

/// Per-time maximum of `æ` over channels.
pub fn max_abs_error(ae: &Tensor) -> Result<Vec<f64>> {
    if ae.rank() != 2 {
        return dim_err(format!("expected a channels x time array, got {:?}", ae.shape()));
    }
    if ae.shape()[0] == 0 {
        return Err(Error::Domain("maximum over an empty channel axis".into()));
    }
    let t = ae.shape()[1];
    let mut out = ae.row(0).to_vec();
    for c in 1..ae.shape()[0] {
        for (m, &v) in out.iter_mut().zip(ae.row(c)) {
            if v > *m {
                *m = v;
            }
        }
    }
    debug_assert_eq!(out.len(), t);
    Ok(out)
}

/// Means of `mae` over `[10k, 10(k+1))` for every `k`.
pub fn subset_means(mae: &[f64]) -> Result<Vec<f64>> {
    if mae.is_empty() || !mae.len().is_multiple_of(SUBSET_SIZE) {
        return Err(Error::Contract(format!(
            "score length {} is not a positive multiple of {SUBSET_SIZE}",
            mae.len()
        )));
    }
    Ok(mae
        .chunks_exact(SUBSET_SIZE)
        .map(|c| c.iter().sum::<f64>() / SUBSET_SIZE as f64)
        .collect())
}

/// `d_k = 1` iff `M̄_k > δ`.
pub fn one_shot(means: &[f64], delta: f64) -> Vec<u8> {
    means.iter().map(|&m| u8::from(m > delta)).collect()
}

/// Repeats every subset decision over the time steps it covers.
pub fn expand_votes(decisions: &[u8]) -> Vec<u8> {
    decisions
        .iter()
        .flat_map(|&d| std::iter::repeat_n(d, SUBSET_SIZE))
        .collect()
}

/// `ζ_t = 1` iff `CS_t > limit`.
pub fn multi_shot(cs: f64, limit: f64) -> u8 {
    u8::from(cs > limit)
}

/// All intermediate scores of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSeries {
    pub ae: Tensor,
    pub mae: Vec<f64>,
    pub means: Vec<f64>,
    pub decisions: Vec<u8>,
    pub votes: Vec<u8>,
}

pub fn detect_window(x: &Tensor, x_hat: &Tensor, omega: &[f64], delta: f64) -> Result<DetectionSeries> {
    let ae = scaled_abs_error(x, x_hat, omega)?;
    let mae = max_abs_error(&ae)?;
    let means = subset_means(&mae)?;
    let decisions = one_shot(&means, delta);
    let votes = expand_votes(&decisions);
    Ok(DetectionSeries {
        ae,
        mae,
        means,
        decisions,
        votes,
    })
}
