#![allow(dead_code)]

use lossy_tcn::numerics::{Graph, ParamStore, RngState, Tensor, Var};
use lossy_tcn::Result;

pub const FD_STEP: f64 = 1e-5;

/// Below this magnitude both gradients count as zero; central differences
/// cannot resolve anything smaller at `FD_STEP` in f64.
pub const GRAD_FLOOR: f64 = 1e-8;

pub fn random_tensor(shape: &[usize], rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Largest relative error between the tape gradient of `loss` and central
/// differences, over every scalar in `store`.
pub fn max_relative_error(store: &mut ParamStore, loss: impl Fn(&mut Graph) -> Result<Var>) -> f64 {
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let l = loss(&mut g).unwrap();
        g.value(l).item().unwrap()
    };
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g).unwrap();
        g.backward(l).unwrap()
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut worst = 0.0f64;
    for id in ids {
        let n = store.value(id).len();
        let grad: Vec<f64> = analytic.get(id).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; n]);
        for k in 0..n {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + FD_STEP;
            let up = eval(store);
            store.get_mut(id).value.data_mut()[k] = orig - FD_STEP;
            let down = eval(store);
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let scale = grad[k].abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max((grad[k] - numeric).abs() / scale);
        }
    }
    worst
}
