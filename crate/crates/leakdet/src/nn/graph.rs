//! Define-by-run reverse-mode autodiff over the layer kernels.
//!
//! A [`Graph`] records a fresh forward pass each training step; leaves hold
//! inputs and parameters, interior nodes hold op outputs. [`Graph::backward`]
//! walks the tape in reverse and accumulates exact gradients for every node,
//! parameters and inputs alike.

use super::ops::{
    conv1d_backward, conv1d_forward, conv_transpose1d_backward, conv_transpose1d_forward, mse_grad,
    mse_loss, relu, relu_backward,
};
use super::Tensor3;
use crate::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    // output_padding only affects the forward shape, so it is not recorded.
    ConvTranspose1d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    Relu { x: NodeId },
    Mse { pred: NodeId, target: NodeId },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor3,
    grad: Option<Tensor3>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, op: Op, value: Tensor3) -> NodeId {
        self.nodes.push(Node { op, value, grad: None });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor3) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let value = conv1d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(Op::Conv1d { x, w, b, stride, pad }, value))
    }

    pub fn conv_transpose1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
        output_padding: usize,
    ) -> Result<NodeId> {
        let value =
            conv_transpose1d_forward(self.value(x), self.value(w), self.value(b), stride, pad, output_padding)?;
        Ok(self.push(Op::ConvTranspose1d { x, w, b, stride, pad }, value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = relu(self.value(x));
        self.push(Op::Relu { x }, value)
    }

    /// Scalar loss node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let value = Tensor3::scalar(mse_loss(self.value(pred), self.value(target))?);
        Ok(self.push(Op::Mse { pred, target }, value))
    }

    pub fn value(&self, id: NodeId) -> &Tensor3 {
        &self.nodes[id.0].value
    }

    /// Value of a scalar node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if v.numel() != 1 {
            return Err(Error::Shape(format!("node has shape {:?}, expected a scalar", v.shape())));
        }
        Ok(v.data()[0])
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor3) {
        match &mut self.nodes[id.0].grad {
            Some(g) => {
                for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gv += dv;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse pass from a scalar loss node. Fills gradients for every node
    /// that influences the loss.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Data("graph not built: no forward pass recorded".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape("backward requires a scalar loss node".into()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor3::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(gout) = self.nodes[i].grad.clone() else { continue };
            match self.nodes[i].op {
                Op::Leaf => {}
                Op::Conv1d { x, w, b, stride, pad } => {
                    let (dx, dw, db) = conv1d_backward(self.value(x), self.value(w), &gout, stride, pad);
                    self.accumulate(x, dx);
                    self.accumulate(w, dw);
                    self.accumulate(b, db);
                }
                Op::ConvTranspose1d { x, w, b, stride, pad } => {
                    let (dx, dw, db) =
                        conv_transpose1d_backward(self.value(x), self.value(w), &gout, stride, pad);
                    self.accumulate(x, dx);
                    self.accumulate(w, dw);
                    self.accumulate(b, db);
                }
                Op::Relu { x } => {
                    let dx = relu_backward(self.value(x), &gout);
                    self.accumulate(x, dx);
                }
                Op::Mse { pred, target } => {
                    let scale = gout.data()[0];
                    let mut dpred = mse_grad(self.value(pred), self.value(target));
                    for v in dpred.data_mut() {
                        *v *= scale;
                    }
                    let mut dtarget = dpred.clone();
                    for v in dtarget.data_mut() {
                        *v = -*v;
                    }
                    self.accumulate(pred, dpred);
                    self.accumulate(target, dtarget);
                }
            }
        }
        self.backward_done = true;
        Ok(())
    }

    /// Gradient of the loss with respect to a node's value.
    pub fn grad(&self, id: NodeId) -> Result<&Tensor3> {
        if !self.backward_done {
            return Err(Error::Data("gradients not available: backward has not run".into()));
        }
        self.nodes[id.0]
            .grad
            .as_ref()
            .ok_or_else(|| Error::Data("node does not influence the loss".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random small conv -> relu -> transposed-conv -> mse net used for the
    /// finite-difference checks.
    struct SmallNet {
        x: Tensor3,
        w1: Tensor3,
        b1: Tensor3,
        w2: Tensor3,
        b2: Tensor3,
        target: Tensor3,
        s1: usize,
        p1: usize,
        s2: usize,
        p2: usize,
        op2: usize,
    }

    impl SmallNet {
        fn random(seed: u64) -> SmallNet {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = rng.gen_range(1..=2);
            let in_ch = rng.gen_range(1..=3);
            let mid_ch = rng.gen_range(1..=3);
            let out_ch = rng.gen_range(1..=2);
            let len = rng.gen_range(8..=14);
            let kernel = if rng.gen::<bool>() { 3 } else { 5 };
            let s1 = rng.gen_range(1..=2);
            let p1 = kernel / 2;
            let s2 = rng.gen_range(1..=2);
            let p2 = kernel / 2;
            let op2 = if s2 == 2 { rng.gen_range(0..=1) } else { 0 };
            let x = Tensor3::uniform(batch, in_ch, len, 1.0, &mut rng);
            let w1 = Tensor3::uniform(mid_ch, in_ch, kernel, 0.8, &mut rng);
            let b1 = Tensor3::uniform(1, mid_ch, 1, 0.3, &mut rng);
            let w2 = Tensor3::uniform(out_ch, mid_ch, kernel, 0.8, &mut rng);
            let b2 = Tensor3::uniform(1, out_ch, 1, 0.3, &mut rng);
            let probe = SmallNet { x, w1, b1, w2, b2, target: Tensor3::scalar(0.0), s1, p1, s2, p2, op2 };
            let y = probe.forward().expect("net shapes are consistent");
            let target = Tensor3::uniform(y.batch, y.channels, y.len, 1.0, &mut rng);
            SmallNet { target, ..probe }
        }

        /// Forward-only evaluation through the layer kernels; the route the
        /// finite differences probe, independent of the backward code.
        fn forward(&self) -> crate::Result<Tensor3> {
            let c1 = super::conv1d_forward(&self.x, &self.w1, &self.b1, self.s1, self.p1)?;
            let r1 = super::relu(&c1);
            super::conv_transpose1d_forward(&r1, &self.w2, &self.b2, self.s2, self.p2, self.op2)
        }

        fn loss(&self) -> f64 {
            let y = self.forward().expect("consistent shapes");
            super::mse_loss(&y, &self.target).expect("matching shapes")
        }

        fn tensors(&self) -> [&Tensor3; 6] {
            [&self.x, &self.w1, &self.b1, &self.w2, &self.b2, &self.target]
        }

        fn tensor_mut(&mut self, which: usize) -> &mut Tensor3 {
            match which {
                0 => &mut self.x,
                1 => &mut self.w1,
                2 => &mut self.b1,
                3 => &mut self.w2,
                4 => &mut self.b2,
                _ => &mut self.target,
            }
        }

        /// Analytic gradients for all six leaves via the reverse pass.
        fn analytic_grads(&self) -> Vec<Tensor3> {
            let mut g = Graph::new();
            let x = g.leaf(self.x.clone());
            let w1 = g.leaf(self.w1.clone());
            let b1 = g.leaf(self.b1.clone());
            let w2 = g.leaf(self.w2.clone());
            let b2 = g.leaf(self.b2.clone());
            let target = g.leaf(self.target.clone());
            let c1 = g.conv1d(x, w1, b1, self.s1, self.p1).unwrap();
            let r1 = g.relu(c1);
            let y = g.conv_transpose1d(r1, w2, b2, self.s2, self.p2, self.op2).unwrap();
            let loss = g.mse(y, target).unwrap();
            g.backward(loss).unwrap();
            [x, w1, b1, w2, b2, target].iter().map(|id| g.grad(*id).unwrap().clone()).collect()
        }
    }

    /// Max relative disagreement between analytic and central-difference
    /// gradients over every entry of every leaf. Entries where both routes
    /// are below the finite-difference noise floor count as exact.
    pub(crate) fn max_fd_relative_error(seed: u64, h: f64) -> f64 {
        let mut net = SmallNet::random(seed);
        let analytic = net.analytic_grads();
        let mut worst = 0.0f64;
        for which in 0..6 {
            for i in 0..net.tensors()[which].numel() {
                let orig = net.tensors()[which].data()[i];
                net.tensor_mut(which).data_mut()[i] = orig + h;
                let up = net.loss();
                net.tensor_mut(which).data_mut()[i] = orig - h;
                let down = net.loss();
                net.tensor_mut(which).data_mut()[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic[which].data()[i];
                let scale = a.abs().max(fd.abs());
                if scale < 1e-7 {
                    continue;
                }
                worst = worst.max((a - fd).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..6u64 {
            let err = max_fd_relative_error(seed, 1e-4);
            assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
        }
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = g.leaf(Tensor3::uniform(1, 2, 8, 1.0, &mut rng));
        let w = g.leaf(Tensor3::uniform(2, 2, 3, 0.5, &mut rng));
        let b = g.leaf(Tensor3::zeros(1, 2, 1));
        let y = g.conv1d(x, w, b, 1, 1).unwrap();
        let loss = g.mse(y, y).unwrap();
        assert_eq!(g.scalar(loss).unwrap(), 0.0);
        g.backward(loss).unwrap();
        assert!(g.grad(w).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(g.grad(b).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grad_before_backward_is_an_error() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor3::scalar(1.0));
        assert!(g.grad(x).is_err());
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor3::zeros(1, 1, 4));
        assert!(g.backward(x).is_err());
    }
}
