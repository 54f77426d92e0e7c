mod common;

use common::{max_relative_error, random_tensor};
use lossy_tcn::numerics::{Graph, ParamStore, RngState, Tensor, Var};
use lossy_tcn::Result;

const TOL: f64 = 1e-4;

/// Registers `shapes` as random parameters and reduces `op` to a scalar
/// with a fixed random projection so every output entry matters.
fn check(seed: u64, shapes: &[&[usize]], op: impl Fn(&mut Graph, &[Var]) -> Result<Var>) -> f64 {
    let mut rng = RngState::new(seed);
    let mut store = ParamStore::new();
    let ids: Vec<_> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| store.register(format!("p{i}"), random_tensor(s, &mut rng)).unwrap())
        .collect();
    let probe_seed = rng.fork(9).seed();
    max_relative_error(&mut store, |g| {
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let y = op(g, &vars)?;
        let shape = g.value(y).shape().to_vec();
        let r = g.input(random_tensor(&shape, &mut RngState::new(probe_seed)));
        let p = g.mul(y, r)?;
        g.sum(p)
    })
}

macro_rules! grad_test {
    ($name:ident, $shapes:expr, $op:expr) => {
        #[test]
        fn $name() {
            for seed in 0..5 {
                let e = check(seed, $shapes, $op);
                assert!(e < TOL, "seed {seed}: relative error {e:e}");
            }
        }
    };
}

grad_test!(conv1d, &[&[3, 5], &[4, 3, 3], &[4]], |g, v| g.conv1d(v[0], v[1], v[2], 2));
grad_test!(conv_transpose1d, &[&[3, 7], &[3, 2, 3], &[2]], |g, v| g.conv_transpose1d(v[0], v[1], v[2], 2));
grad_test!(linear, &[&[6], &[4, 6], &[4]], |g, v| g.linear(v[0], v[1], v[2]));
grad_test!(batch_matmul, &[&[3, 2, 4], &[3, 4, 2]], |g, v| g.batch_matmul(v[0], v[1]));
grad_test!(relu, &[&[10]], |g, v| Ok(g.relu(v[0])));
grad_test!(tanh, &[&[10]], |g, v| Ok(g.tanh(v[0])));
grad_test!(sigmoid, &[&[10]], |g, v| Ok(g.sigmoid(v[0])));
grad_test!(softplus, &[&[10]], |g, v| Ok(g.softplus(v[0])));
grad_test!(abs, &[&[10]], |g, v| Ok(g.abs(v[0])));
grad_test!(exp, &[&[10]], |g, v| Ok(g.exp(v[0])));
grad_test!(log_of_exp, &[&[10]], |g, v| {
    let e = g.exp(v[0]);
    g.log(e)
});
grad_test!(scale, &[&[4, 3]], |g, v| Ok(g.scale(v[0], -2.5)));
grad_test!(clamp_min, &[&[12]], |g, v| Ok(g.clamp_min(v[0], 0.3)));
grad_test!(add, &[&[2, 3], &[2, 3]], |g, v| g.add(v[0], v[1]));
grad_test!(sub, &[&[2, 3], &[2, 3]], |g, v| g.sub(v[0], v[1]));
grad_test!(mul, &[&[2, 3], &[2, 3]], |g, v| g.mul(v[0], v[1]));
grad_test!(add_broadcast, &[&[3, 4, 2], &[3, 4, 1]], |g, v| g.add_broadcast(v[0], v[1]));
grad_test!(mul_broadcast, &[&[3, 4, 2], &[3, 4, 1]], |g, v| g.mul_broadcast(v[0], v[1]));
grad_test!(sum, &[&[3, 4]], |g, v| g.sum(v[0]));
grad_test!(mean, &[&[3, 4]], |g, v| g.mean(v[0]));
grad_test!(sum_axis, &[&[3, 4, 2]], |g, v| g.sum_axis(v[0], 1));
grad_test!(mean_axis, &[&[3, 4, 2]], |g, v| g.mean_axis(v[0], 2));
grad_test!(max_axis, &[&[3, 5]], |g, v| g.max_axis(v[0], 0));
grad_test!(reshape, &[&[3, 4]], |g, v| g.reshape(v[0], vec![2, 6]));
grad_test!(mse, &[&[3, 4], &[3, 4]], |g, v| g.mse(v[0], v[1]));

#[test]
fn density_rate_gradient() {
    use lossy_tcn::bottleneck::FactorizedDensity;
    for seed in 0..3 {
        let mut rng = RngState::new(seed);
        let mut store = ParamStore::new();
        let density = FactorizedDensity::new(&mut store, "d", 4, &[3, 3, 3], 1e-9, &mut rng).unwrap();
        let z = store
            .register("z", Tensor::vector((0..4).map(|_| 2.0 * rng.normal()).collect()))
            .unwrap();
        let e = max_relative_error(&mut store, |g| {
            let dv = density.prepare(g);
            let zv = g.param(z);
            density.rate_bits_var(g, &dv, zv)
        });
        assert!(e < TOL, "seed {seed}: relative error {e:e}");
    }
}
