//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its variables in execution
//! order. [`Graph::backward`] walks that tape in reverse and returns the
//! gradient of a scalar with respect to each reachable parameter. Parameters
//! are read in place from the borrowed [`ParamStore`]; nothing is copied.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::params::{Gradients, ParamId, ParamStore};
use crate::numerics::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Conv1d { x: Var, w: Var, b: Var, dilation: usize },
    ConvT1d { x: Var, w: Var, b: Var, dilation: usize },
    Linear { x: Var, w: Var, b: Var },
    BatchMatmul(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Abs(Var),
    Exp(Var),
    Log(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    MulBroadcast(Var, Var),
    Scale(Var, f64),
    ClampMin(Var, f64),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MaxAxis(Var, Vec<usize>),
    Reshape(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(128),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let out = ops::causal_conv1d(self.value(x), self.value(w), self.value(b), dilation)?;
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(out, Op::Conv1d { x, w, b, dilation }, ng))
    }

    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let out =
            ops::causal_transposed_conv1d(self.value(x), self.value(w), self.value(b), dilation)?;
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(out, Op::ConvT1d { x, w, b, dilation }, ng))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::linear(self.value(x), self.value(w), self.value(b))?;
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(out, Op::Linear { x, w, b }, ng))
    }

    pub fn batch_matmul(&mut self, a: Var, x: Var) -> Result<Var> {
        let out = ops::batch_matmul(self.value(a), self.value(x))?;
        let ng = self.ng(&[a, x]);
        Ok(self.push(out, Op::BatchMatmul(a, x), ng))
    }

    fn unary(&mut self, x: Var, out: Tensor, op: Op) -> Var {
        let ng = self.ng(&[x]);
        self.push(out, op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.unary(x, out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = ops::tanh(self.value(x));
        self.unary(x, out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = ops::sigmoid(self.value(x));
        self.unary(x, out, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = ops::softplus(self.value(x));
        self.unary(x, out, Op::Softplus(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = ops::abs(self.value(x));
        self.unary(x, out, Op::Abs(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = ops::exp(self.value(x));
        self.unary(x, out, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let out = ops::log(self.value(x))?;
        Ok(self.unary(x, out, Op::Log(x)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = ops::scale(self.value(x), s);
        self.unary(x, out, Op::Scale(x, s))
    }

    /// `max(x, floor)` elementwise; the gradient is zero where the floor binds.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        let out = self.value(x).map(|v| v.max(floor));
        self.unary(x, out, Op::ClampMin(x, floor))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::sub(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add_broadcast(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::AddBroadcast(a, b), ng))
    }

    pub fn mul_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul_broadcast(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::MulBroadcast(a, b), ng))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = ops::sum(self.value(x))?;
        Ok(self.unary(x, Tensor::scalar(s), Op::Sum(x)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let s = ops::mean(self.value(x))?;
        Ok(self.unary(x, Tensor::scalar(s), Op::Mean(x)))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = ops::sum_axis(self.value(x), axis)?;
        Ok(self.unary(x, out, Op::SumAxis(x, axis)))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = self.value(x).shape().get(axis).copied().unwrap_or(1);
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (out, arg) = ops::max_axis_with_index(self.value(x), axis)?;
        Ok(self.unary(x, out, Op::MaxAxis(x, arg)))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.unary(x, out, Op::Reshape(x)))
    }

    /// Mean squared difference between two same-shaped variables.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients {
            grads: vec![None; self.params.len()],
        };

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let mut send = |v: Var, contribution: Vec<f64>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => match &mut out.grads[id.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, c)| *a += c),
                    slot => *slot = Some(g),
                },
                Op::Conv1d { x, w, b, dilation } => {
                    let (gx, gw, gb) =
                        conv1d_backward(self.value(*x), self.value(*w), &g, *dilation);
                    send(*x, gx);
                    send(*w, gw);
                    send(*b, gb);
                }
                Op::ConvT1d { x, w, b, dilation } => {
                    let (gx, gw, gb) =
                        conv_t1d_backward(self.value(*x), self.value(*w), &g, *dilation);
                    send(*x, gx);
                    send(*w, gw);
                    send(*b, gb);
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (m, n) = (wv.shape()[0], wv.shape()[1]);
                    let mut gx = vec![0.0; n];
                    let mut gw = vec![0.0; m * n];
                    for r in 0..m {
                        let gr = g[r];
                        let wr = wv.row(r);
                        for c in 0..n {
                            gx[c] += wr[c] * gr;
                            gw[r * n + c] = gr * xv.data()[c];
                        }
                    }
                    send(*x, gx);
                    send(*w, gw);
                    send(*b, g);
                }
                Op::BatchMatmul(a, x) => {
                    let (av, xv) = (self.value(*a), self.value(*x));
                    let (bn, r, s) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                    let m = xv.shape()[2];
                    let mut ga = vec![0.0; av.len()];
                    let mut gx = vec![0.0; xv.len()];
                    for bi in 0..bn {
                        for i in 0..r {
                            for j in 0..s {
                                let aij = av.data()[(bi * r + i) * s + j];
                                let mut acc = 0.0;
                                for col in 0..m {
                                    let gy = g[(bi * r + i) * m + col];
                                    acc += gy * xv.data()[(bi * s + j) * m + col];
                                    gx[(bi * s + j) * m + col] += aij * gy;
                                }
                                ga[(bi * r + i) * s + j] = acc;
                            }
                        }
                    }
                    send(*a, ga);
                    send(*x, gx);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    send(*x, zipmap(&g, xv, |gi, v| if v > 0.0 { gi } else { 0.0 }));
                }
                Op::Tanh(x) => {
                    let y = node.value.as_ref().unwrap().data();
                    send(*x, zipmap(&g, y, |gi, t| gi * (1.0 - t * t)));
                }
                Op::Sigmoid(x) => {
                    let y = node.value.as_ref().unwrap().data();
                    send(*x, zipmap(&g, y, |gi, s| gi * s * (1.0 - s)));
                }
                Op::Softplus(x) => {
                    let xv = self.value(*x).data();
                    send(*x, zipmap(&g, xv, |gi, v| gi * ops::sigmoid_scalar(v)));
                }
                Op::Abs(x) => {
                    let xv = self.value(*x).data();
                    send(*x, zipmap(&g, xv, |gi, v| gi * sign(v)));
                }
                Op::Exp(x) => {
                    let y = node.value.as_ref().unwrap().data();
                    send(*x, zipmap(&g, y, |gi, e| gi * e));
                }
                Op::Log(x) => {
                    let xv = self.value(*x).data();
                    send(*x, zipmap(&g, xv, |gi, v| gi / v));
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.iter().map(|v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    send(*a, zipmap(&g, bv, |gi, y| gi * y));
                    send(*b, zipmap(&g, av, |gi, x| gi * x));
                }
                Op::AddBroadcast(a, b) => {
                    let m = ops::trailing_broadcast(self.value(*a), self.value(*b))?;
                    send(*b, g.chunks(m).map(|c| c.iter().sum()).collect());
                    send(*a, g);
                }
                Op::MulBroadcast(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let m = ops::trailing_broadcast(av, bv)?;
                    let ga = g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * bv.data()[i / m])
                        .collect();
                    let gb = g
                        .chunks(m)
                        .zip(av.data().chunks(m))
                        .map(|(gc, ac)| gc.iter().zip(ac).map(|(x, y)| x * y).sum())
                        .collect();
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::Scale(x, s) => send(*x, g.iter().map(|v| v * s).collect()),
                Op::ClampMin(x, floor) => {
                    let xv = self.value(*x).data();
                    send(*x, zipmap(&g, xv, |gi, v| if v > *floor { gi } else { 0.0 }));
                }
                Op::Sum(x) => send(*x, vec![g[0]; self.value(*x).len()]),
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    send(*x, vec![g[0] / n as f64; n]);
                }
                Op::SumAxis(x, axis) => {
                    let (outer, n, inner) = ops::axis_split(self.value(*x).shape(), *axis)?;
                    let mut gx = vec![0.0; outer * n * inner];
                    for o in 0..outer {
                        for k in 0..n {
                            for j in 0..inner {
                                gx[(o * n + k) * inner + j] = g[o * inner + j];
                            }
                        }
                    }
                    send(*x, gx);
                }
                Op::MaxAxis(x, arg) => {
                    let mut gx = vec![0.0; self.value(*x).len()];
                    for (slot, &src) in arg.iter().enumerate() {
                        gx[src] += g[slot];
                    }
                    send(*x, gx);
                }
                Op::Reshape(x) => send(*x, g),
            }
        }
        Ok(out)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zipmap(g: &[f64], v: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    g.iter().zip(v).map(|(&a, &b)| f(a, b)).collect()
}

fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    gout: &[f64],
    dilation: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (c_out, c_in, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let t = x.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let mut gx = vec![0.0; c_in * t];
    let mut gw = vec![0.0; wd.len()];
    let gb = gout.chunks(t).map(|r| r.iter().sum()).collect();
    for c in 0..c_out {
        let gr = &gout[c * t..(c + 1) * t];
        for i in 0..c_in {
            let xi = &xd[i * t..(i + 1) * t];
            let gxi = &mut gx[i * t..(i + 1) * t];
            for tap in 0..k {
                let shift = (k - 1 - tap) * dilation;
                if shift >= t {
                    continue;
                }
                let widx = (c * c_in + i) * k + tap;
                let wv = wd[widx];
                let mut acc = 0.0;
                for (gv, (xv, gxv)) in gr[shift..].iter().zip(xi.iter().zip(gxi.iter_mut())) {
                    acc += gv * xv;
                    *gxv += wv * gv;
                }
                gw[widx] = acc;
            }
        }
    }
    (gx, gw, gb)
}

fn conv_t1d_backward(
    x: &Tensor,
    w: &Tensor,
    gout: &[f64],
    dilation: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (c_in, c_out, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let t = x.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let mut gx = vec![0.0; c_in * t];
    let mut gw = vec![0.0; wd.len()];
    let gb = gout.chunks(t).map(|r| r.iter().sum()).collect();
    for i in 0..c_in {
        let xi = &xd[i * t..(i + 1) * t];
        let gxi = &mut gx[i * t..(i + 1) * t];
        for o in 0..c_out {
            let gr = &gout[o * t..(o + 1) * t];
            for tap in 0..k {
                let shift = (k - 1 - tap) * dilation;
                if shift >= t {
                    continue;
                }
                let widx = (i * c_out + o) * k + tap;
                let wv = wd[widx];
                let mut acc = 0.0;
                for (gv, (xv, gxv)) in gr[..t - shift]
                    .iter()
                    .zip(xi[shift..].iter().zip(gxi[shift..].iter_mut()))
                {
                    acc += gv * xv;
                    *gxv += wv * gv;
                }
                gw[widx] = acc;
            }
        }
    }
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_param_has_unit_gradient() {
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::vector(vec![1.0, -2.0, 3.0])).unwrap();
        let g = Graph::new(&store);
        let mut g = g;
        let x = g.param(id);
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(id).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn mse_gradient_matches_hand_derivative() {
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::vector(vec![2.0])).unwrap();
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let zero = g.input(Tensor::vector(vec![0.0]));
        let l = g.mse(x, zero).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(id).unwrap(), &[4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates_in_store() {
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let grads = {
            let mut g = Graph::new(&store);
            let x = g.param(id);
            let s = g.sum(x).unwrap();
            g.backward(s).unwrap()
        };
        store.accumulate(&grads).unwrap();
        store.accumulate(&grads).unwrap();
        assert_eq!(store.get(id).grad.as_ref().unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn shared_subexpression_gradients_add_up() {
        // loss = sum(x * x) => grad 2x
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::vector(vec![1.5, -0.5])).unwrap();
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(id).unwrap(), &[3.0, -1.0]);
    }
}
