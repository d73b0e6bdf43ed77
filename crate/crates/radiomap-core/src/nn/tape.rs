//! Define-by-run reverse-mode differentiation over a linear tape.
//!
//! Values are computed eagerly as nodes are pushed; `backward` walks the
//! tape in reverse from a scalar loss. The graph for one forward/backward
//! pass lives on one thread; data parallelism happens across tapes.

use crate::error::{Error, Result};
use crate::nn::ops::{
    self, conv2d_backward_input, conv2d_backward_kernel, maxpool2_backward,
    sigmoid_scalar, transpose_padding, Padding,
};
use crate::nn::tensor::{Scalar, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Ln(usize),
    /// x * scale + shift, elementwise with scalar constants.
    /// scale and shift constants; only the scale feeds the backward pass
    Affine(usize, f64, #[allow(dead_code)] f64),
    Relu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Softplus(usize),
    Conv2d { x: usize, k: usize, stride: usize, padding: Padding },
    ConvT2d { x: usize, k: usize, stride: usize },
    BiasChannel { x: usize, b: usize },
    Dense { x: usize, w: usize, b: usize },
    MaxPool2 { x: usize, argmax: Vec<u8> },
    ConcatCh(usize, usize),
    Reshape(usize),
    SumAll(usize),
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op,
    requires: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires: bool) -> Var {
        self.nodes.push(Node { value, grad: None, op, requires });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    /// Insert a leaf tensor; `requires_grad` marks trainable parameters.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Insert a constant (inputs, targets, masks).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last `backward` call, if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.nodes[a.0].value.shape() != self.nodes[b.0].value.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.nodes[a.0].value.shape(),
                self.nodes[b.0].value.shape()
            )));
        }
        Ok(())
    }

    fn zip_new(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(av.shape(), data).expect("shapes pre-checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.zip_new(a, b, |x, y| x + y);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(v, Op::Add(a.0, b.0), req))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.zip_new(a, b, |x, y| x - y);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(v, Op::Sub(a.0, b.0), req))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip_new(a, b, |x, y| x * y);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(v, Op::Mul(a.0, b.0), req))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "div")?;
        let v = self.zip_new(a, b, |x, y| x / y);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(v, Op::Div(a.0, b.0), req))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data_mut() {
            *x = x.ln();
        }
        let req = self.requires(a);
        self.push(v, Op::Ln(a.0), req)
    }

    /// Elementwise `x * scale + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (s, c) = (T::from_f64(scale), T::from_f64(shift));
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data_mut() {
            *x = *x * s + c;
        }
        let req = self.requires(a);
        self.push(v, Op::Affine(a.0, scale, shift), req)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = ops::relu(&self.nodes[a.0].value);
        let req = self.requires(a);
        self.push(v, Op::Relu(a.0), req)
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        let v = ops::leaky_relu(&self.nodes[a.0].value, alpha);
        let req = self.requires(a);
        self.push(v, Op::LeakyRelu(a.0, alpha), req)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = ops::tanh(&self.nodes[a.0].value);
        let req = self.requires(a);
        self.push(v, Op::Tanh(a.0), req)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = ops::softplus(&self.nodes[a.0].value);
        let req = self.requires(a);
        self.push(v, Op::Softplus(a.0), req)
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, padding: Padding) -> Result<Var> {
        let v = ops::conv2d_forward(&self.nodes[x.0].value, &self.nodes[k.0].value, stride, padding)?;
        let req = self.requires(x) || self.requires(k);
        Ok(self.push(v, Op::Conv2d { x: x.0, k: k.0, stride, padding }, req))
    }

    pub fn conv2d_transpose(&mut self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let v = ops::conv2d_transpose_forward(&self.nodes[x.0].value, &self.nodes[k.0].value, stride)?;
        let req = self.requires(x) || self.requires(k);
        Ok(self.push(v, Op::ConvT2d { x: x.0, k: k.0, stride }, req))
    }

    /// Add a per-channel bias to a `[C, H, W]` tensor.
    pub fn bias_channel(&mut self, x: Var, b: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let bv = &self.nodes[b.0].value;
        if xv.shape().len() != 3 || bv.len() != xv.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "bias of {} channels on tensor {:?}",
                bv.len(),
                xv.shape()
            )));
        }
        let (c, hw) = (xv.shape()[0], xv.shape()[1] * xv.shape()[2]);
        let mut v = xv.clone();
        for ch in 0..c {
            let bias = bv.data()[ch];
            for e in &mut v.data_mut()[ch * hw..(ch + 1) * hw] {
                *e += bias;
            }
        }
        let req = self.requires(x) || self.requires(b);
        Ok(self.push(v, Op::BiasChannel { x: x.0, b: b.0 }, req))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let v = ops::dense_forward(&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value)?;
        let req = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(v, Op::Dense { x: x.0, w: w.0, b: b.0 }, req))
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (v, argmax) = ops::maxpool2_forward(&self.nodes[x.0].value)?;
        let req = self.requires(x);
        Ok(self.push(v, Op::MaxPool2 { x: x.0, argmax }, req))
    }

    /// Concatenate two `[C, H, W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape().len() != 3 || bv.shape().len() != 3 || av.shape()[1..] != bv.shape()[1..] {
            return Err(Error::ShapeMismatch(format!(
                "concat {:?} with {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let shape = [av.shape()[0] + bv.shape()[0], av.shape()[1], av.shape()[2]];
        let mut data = Vec::with_capacity(av.len() + bv.len());
        data.extend_from_slice(av.data());
        data.extend_from_slice(bv.data());
        let v = Tensor::from_vec(&shape, data)?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(v, Op::ConcatCh(a.0, b.0), req))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.nodes[a.0].value.reshaped(shape)?;
        let req = self.requires(a);
        Ok(self.push(v, Op::Reshape(a.0), req))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let mut acc = T::zero();
        for v in self.nodes[a.0].value.data() {
            acc += *v;
        }
        let req = self.requires(a);
        self.push(Tensor::scalar(acc), Op::SumAll(a.0), req)
    }

    fn add_grad(&mut self, id: usize, delta: Tensor<T>) {
        match &mut self.nodes[id].grad {
            Some(g) => {
                g.add_assign(&delta).expect("gradient shapes agree by construction");
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate on every
    /// node that (transitively) requires grad.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(T::one()));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires || self.nodes[id].grad.is_none() {
                continue;
            }
            let grad = self.nodes[id].grad.clone().expect("checked above");
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].requires {
                        self.add_grad(a, grad.clone());
                    }
                    if self.nodes[b].requires {
                        self.add_grad(b, grad);
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].requires {
                        self.add_grad(a, grad.clone());
                    }
                    if self.nodes[b].requires {
                        let mut neg = grad;
                        for v in neg.data_mut() {
                            *v = -*v;
                        }
                        self.add_grad(b, neg);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].requires {
                        let mut da = grad.clone();
                        for (g, y) in da.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
                            *g *= *y;
                        }
                        self.add_grad(a, da);
                    }
                    if self.nodes[b].requires {
                        let mut db = grad;
                        for (g, x) in db.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                            *g *= *x;
                        }
                        self.add_grad(b, db);
                    }
                }
                Op::Div(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].requires {
                        let mut da = grad.clone();
                        for (g, y) in da.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
                            *g /= *y;
                        }
                        self.add_grad(a, da);
                    }
                    if self.nodes[b].requires {
                        let mut db = grad;
                        let av = self.nodes[a].value.data();
                        let bv = self.nodes[b].value.data();
                        for (i, g) in db.data_mut().iter_mut().enumerate() {
                            *g = -*g * av[i] / (bv[i] * bv[i]);
                        }
                        self.add_grad(b, db);
                    }
                }
                Op::Ln(a) => {
                    let a = *a;
                    let mut da = grad;
                    for (g, x) in da.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                        *g /= *x;
                    }
                    self.add_grad(a, da);
                }
                Op::Affine(a, scale, _) => {
                    let (a, s) = (*a, T::from_f64(*scale));
                    let mut da = grad;
                    for g in da.data_mut() {
                        *g *= s;
                    }
                    self.add_grad(a, da);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let mut da = grad;
                    for (g, x) in da.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                        if *x <= T::zero() {
                            *g = T::zero();
                        }
                    }
                    self.add_grad(a, da);
                }
                Op::LeakyRelu(a, alpha) => {
                    let (a, al) = (*a, T::from_f64(*alpha));
                    let mut da = grad;
                    for (g, x) in da.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                        if *x <= T::zero() {
                            *g *= al;
                        }
                    }
                    self.add_grad(a, da);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let mut da = grad;
                    for (g, y) in da.data_mut().iter_mut().zip(self.nodes[id].value.data()) {
                        *g *= T::one() - *y * *y;
                    }
                    self.add_grad(a, da);
                }
                Op::Softplus(a) => {
                    let a = *a;
                    let mut da = grad;
                    for (g, x) in da.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                        *g *= sigmoid_scalar(*x);
                    }
                    self.add_grad(a, da);
                }
                Op::Conv2d { x, k, stride, padding } => {
                    let (x, k, stride, padding) = (*x, *k, *stride, *padding);
                    if self.nodes[x].requires {
                        let dx = conv2d_backward_input(
                            &grad,
                            &self.nodes[k].value,
                            stride,
                            padding,
                            &self.nodes[x].value.shape().to_vec(),
                        )?;
                        self.add_grad(x, dx);
                    }
                    if self.nodes[k].requires {
                        let dk = conv2d_backward_kernel(
                            &grad,
                            &self.nodes[x].value,
                            stride,
                            padding,
                            &self.nodes[k].value.shape().to_vec(),
                        )?;
                        self.add_grad(k, dk);
                    }
                }
                Op::ConvT2d { x, k, stride } => {
                    let (x, k, stride) = (*x, *k, *stride);
                    let padding = transpose_padding(stride);
                    if self.nodes[x].requires {
                        let dx = ops::conv2d_forward(&grad, &self.nodes[k].value, stride, padding)?;
                        self.add_grad(x, dx);
                    }
                    if self.nodes[k].requires {
                        // <x, conv(g, K)> differentiated in K: cotangent is
                        // the transpose input, conv input is the cotangent g
                        let dk = conv2d_backward_kernel(
                            &self.nodes[x].value.clone(),
                            &grad,
                            stride,
                            padding,
                            &self.nodes[k].value.shape().to_vec(),
                        )?;
                        self.add_grad(k, dk);
                    }
                }
                Op::BiasChannel { x, b } => {
                    let (x, b) = (*x, *b);
                    if self.nodes[x].requires {
                        self.add_grad(x, grad.clone());
                    }
                    if self.nodes[b].requires {
                        let shape = self.nodes[x].value.shape();
                        let (c, hw) = (shape[0], shape[1] * shape[2]);
                        let mut db = Tensor::zeros(&[c]);
                        for ch in 0..c {
                            let mut acc = T::zero();
                            for g in &grad.data()[ch * hw..(ch + 1) * hw] {
                                acc += *g;
                            }
                            db.data_mut()[ch] = acc;
                        }
                        self.add_grad(b, db);
                    }
                }
                Op::Dense { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let (out_dim, in_dim) =
                        (self.nodes[w].value.shape()[0], self.nodes[w].value.shape()[1]);
                    if self.nodes[x].requires {
                        let mut dx = Tensor::zeros(&[in_dim]);
                        let wd = self.nodes[w].value.data();
                        for o in 0..out_dim {
                            let g = grad.data()[o];
                            let row = &wd[o * in_dim..(o + 1) * in_dim];
                            for (dxi, wv) in dx.data_mut().iter_mut().zip(row) {
                                *dxi += g * *wv;
                            }
                        }
                        self.add_grad(x, dx);
                    }
                    if self.nodes[w].requires {
                        let mut dw = Tensor::zeros(&[out_dim, in_dim]);
                        let xd = self.nodes[x].value.data();
                        for o in 0..out_dim {
                            let g = grad.data()[o];
                            let row = &mut dw.data_mut()[o * in_dim..(o + 1) * in_dim];
                            for (dwi, xv) in row.iter_mut().zip(xd) {
                                *dwi = g * *xv;
                            }
                        }
                        self.add_grad(w, dw);
                    }
                    if self.nodes[b].requires {
                        self.add_grad(b, grad.reshaped(&[out_dim])?);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let x = *x;
                    let dx = maxpool2_backward(&grad, argmax, &self.nodes[x].value.shape().to_vec());
                    self.add_grad(x, dx);
                }
                Op::ConcatCh(a, b) => {
                    let (a, b) = (*a, *b);
                    let alen = self.nodes[a].value.len();
                    if self.nodes[a].requires {
                        let da = Tensor::from_vec(
                            self.nodes[a].value.shape(),
                            grad.data()[..alen].to_vec(),
                        )?;
                        self.add_grad(a, da);
                    }
                    if self.nodes[b].requires {
                        let db = Tensor::from_vec(
                            self.nodes[b].value.shape(),
                            grad.data()[alen..].to_vec(),
                        )?;
                        self.add_grad(b, db);
                    }
                }
                Op::Reshape(a) => {
                    let a = *a;
                    let da = grad.reshaped(self.nodes[a].value.shape())?;
                    self.add_grad(a, da);
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let g = grad.data()[0];
                    let da = Tensor::filled(self.nodes[a].value.shape(), g);
                    self.add_grad(a, da);
                }
            }
        }
        Ok(())
    }

    /// Gradients of a scalar loss with respect to `params`; parameters the
    /// loss does not depend on get zero gradients.
    pub fn gradients(&mut self, loss: Var, params: &[Var]) -> Result<Vec<Tensor<T>>> {
        self.backward(loss)?;
        Ok(params
            .iter()
            .map(|p| match self.grad(*p) {
                Some(g) => g.clone(),
                None => Tensor::zeros(self.value(*p).shape()),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap(), true);
        assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true);
        let loss = tape.sum_all(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(p).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_sum_of_squares_gradient_is_p() {
        let mut tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true);
        let sq = tape.mul(p, p).unwrap();
        let s = tape.sum_all(sq);
        let loss = tape.scale(s, 0.5);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(p).unwrap().data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn unused_parameters_get_zero_gradients() {
        let mut tape = Tape::<f64>::new();
        let used = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap(), true);
        let unused = tape.leaf(Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap(), true);
        let loss = tape.sum_all(used);
        let grads = tape.gradients(loss, &[used, unused]).unwrap();
        assert_eq!(grads[0].data(), &[1.0, 1.0]);
        assert_eq!(grads[1].data(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap(), true);
        let c = tape.constant(Tensor::from_vec(&[2], vec![5.0, 7.0]).unwrap());
        let prod = tape.mul(p, c).unwrap();
        let loss = tape.sum_all(prod);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(p).unwrap().data(), &[5.0, 7.0]);
        assert!(tape.grad(c).is_none());
    }
}
