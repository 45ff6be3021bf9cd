//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] borrows a parameter list and records every operation applied
//! to it during a forward pass. Node indices are assigned in execution order,
//! so walking the node list backwards is a reverse topological traversal.

use crate::error::{contract, Result};
use crate::tensor::{axpy, dot, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(usize),
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        stride: usize,
        // im2col matrix of the input, [C*k*k, H'*W'].
        cols: Vec<T>,
    },
    Dense {
        input: Var,
        weights: Var,
        bias: Option<Var>,
    },
    Relu(Var),
    Softmax(Var),
    Log {
        input: Var,
        floor: T,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Pick(Var, usize),
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    // Empty for parameter nodes; their value lives in the borrowed list.
    value: Tensor<T>,
    requires_grad: bool,
}

/// One gradient tensor per parameter, in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T = f32> {
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(params: &[Tensor<T>]) -> Self {
        Self {
            grads: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn from_tensors(grads: Vec<Tensor<T>>) -> Self {
        Self { grads }
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.grads
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.grads
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.grads
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// `sqrt(sum_ij |g_ij|^2)` over every tensor, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    /// Checks that every gradient has the shape of the matching parameter.
    pub fn check_congruent(&self, params: &[Tensor<T>]) -> Result<()> {
        if self.grads.len() != params.len() {
            return Err(contract(format!(
                "{} gradients for {} parameters",
                self.grads.len(),
                params.len()
            )));
        }
        for (i, (g, p)) in self.grads.iter().zip(params).enumerate() {
            if g.shape() != p.shape() {
                return Err(contract(format!(
                    "gradient {i} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &GradientSet<T>) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(contract("gradient sets differ in length"));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            if a.shape() != b.shape() {
                return Err(contract("gradient shapes differ"));
            }
            axpy(T::one(), b.data(), a.data_mut());
        }
        Ok(())
    }
}

pub struct Tape<'p, T: Scalar = f32> {
    params: &'p [Tensor<T>],
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p [Tensor<T>]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &'p [Tensor<T>] {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(i) => &self.params[i],
            _ => &node.value,
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_needed(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a value that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Constant, value, false)
    }

    pub fn scalar(&mut self, value: T) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// The tape node for parameter `index`, created on first use.
    pub fn param(&mut self, index: usize) -> Result<Var> {
        if index >= self.params.len() {
            return Err(contract(format!(
                "parameter {index} out of range ({} parameters)",
                self.params.len()
            )));
        }
        if let Some(v) = self.param_vars[index] {
            return Ok(v);
        }
        let v = self.push(Op::Param(index), Tensor::zeros(&[0]), true);
        self.param_vars[index] = Some(v);
        Ok(v)
    }

    /// Valid (unpadded) 2-D convolution of a `[C,H,W]` input with
    /// `[F,C,k,k]` kernels. The output is `[F,H',W']` with
    /// `H' = (H-k)/stride + 1` (floor division).
    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        stride: usize,
    ) -> Result<Var> {
        let (x, w) = (self.value(input), self.value(kernels));
        let [c, h, wd] = dims3(x.shape(), "conv2d input")?;
        let [f, kc, kh, kw] = dims4(w.shape(), "conv2d kernels")?;
        if kc != c {
            return Err(contract(format!(
                "conv2d: input has {c} channels, kernels expect {kc}"
            )));
        }
        if kh != kw {
            return Err(contract("conv2d: kernels must be square"));
        }
        if stride == 0 {
            return Err(contract("conv2d: stride must be positive"));
        }
        if h < kh || wd < kw {
            return Err(contract(format!(
                "conv2d: {h}x{wd} input is smaller than the {kh}x{kw} kernel"
            )));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [f] {
                return Err(contract(format!(
                    "conv2d: bias shape {:?}, expected [{f}]",
                    self.value(b).shape()
                )));
            }
        }
        let k = kh;
        let oh = (h - k) / stride + 1;
        let ow = (wd - k) / stride + 1;
        let positions = oh * ow;
        let rows = c * k * k;

        let xd = x.data();
        let mut cols = vec![T::zero(); rows * positions];
        for ch in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let r = (ch * k + ki) * k + kj;
                    let dst = &mut cols[r * positions..(r + 1) * positions];
                    for oy in 0..oh {
                        let src_row = &xd[(ch * h + oy * stride + ki) * wd..][..wd];
                        for ox in 0..ow {
                            dst[oy * ow + ox] = src_row[ox * stride + kj];
                        }
                    }
                }
            }
        }

        let wdata = w.data();
        let mut out = vec![T::zero(); f * positions];
        for fi in 0..f {
            let orow = &mut out[fi * positions..(fi + 1) * positions];
            if let Some(b) = bias {
                let bv = self.value(b).data()[fi];
                orow.iter_mut().for_each(|o| *o = bv);
            }
            let wrow = &wdata[fi * rows..(fi + 1) * rows];
            for (r, &wv) in wrow.iter().enumerate() {
                axpy(wv, &cols[r * positions..(r + 1) * positions], orow);
            }
        }

        let requires_grad = self.grad_needed(input)
            || self.grad_needed(kernels)
            || bias.is_some_and(|b| self.grad_needed(b));
        let value = Tensor::new(vec![f, oh, ow], out)?;
        Ok(self.push(
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
                cols,
            },
            value,
            requires_grad,
        ))
    }

    /// Affine map `weights · input + bias`. `input` may have any shape with
    /// `n` elements; it is read in row-major order.
    pub fn dense(&mut self, input: Var, weights: Var, bias: Option<Var>) -> Result<Var> {
        let (x, w) = (self.value(input), self.value(weights));
        let [m, n] = dims2(w.shape(), "dense weights")?;
        if x.len() != n {
            return Err(contract(format!(
                "dense: weights expect {n} inputs, got {}",
                x.len()
            )));
        }
        let mut out = match bias {
            Some(b) => {
                let bv = self.value(b);
                if bv.shape() != [m] {
                    return Err(contract(format!(
                        "dense: bias shape {:?}, expected [{m}]",
                        bv.shape()
                    )));
                }
                bv.data().to_vec()
            }
            None => vec![T::zero(); m],
        };
        let (xd, wd) = (x.data(), w.data());
        for (i, o) in out.iter_mut().enumerate() {
            *o = *o + dot(&wd[i * n..(i + 1) * n], xd);
        }
        let requires_grad = self.grad_needed(input)
            || self.grad_needed(weights)
            || bias.is_some_and(|b| self.grad_needed(b));
        Ok(self.push(
            Op::Dense {
                input,
                weights,
                bias,
            },
            Tensor::vector(out),
            requires_grad,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let value = self
            .value(input)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.grad_needed(input);
        self.push(Op::Relu(input), value, rg)
    }

    /// Softmax over all elements, computed with max subtraction.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.is_empty() {
            return Err(contract("softmax of an empty tensor"));
        }
        let value = Tensor::new(x.shape().to_vec(), softmax_values(x.data()))?;
        let rg = self.grad_needed(input);
        Ok(self.push(Op::Softmax(input), value, rg))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_floored(&mut self, input: Var, floor: T) -> Var {
        let value = self.value(input).map(|v| v.max(floor).ln());
        let rg = self.grad_needed(input);
        self.push(Op::Log { input, floor }, value, rg)
    }

    fn binary(&self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(contract(format!(
                "{name}: shapes {:?} and {:?} differ",
                x.shape(),
                y.shape()
            )));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |p, q| p + q)?;
        let rg = self.grad_needed(a) || self.grad_needed(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "sub", |p, q| p - q)?;
        let rg = self.grad_needed(a) || self.grad_needed(b);
        Ok(self.push(Op::Sub(a, b), value, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |p, q| p * q)?;
        let rg = self.grad_needed(a) || self.grad_needed(b);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let value = self.value(input).map(|v| v * factor);
        let rg = self.grad_needed(input);
        self.push(Op::Scale(input, factor), value, rg)
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).data().iter().copied().sum();
        let rg = self.grad_needed(input);
        self.push(Op::Sum(input), Tensor::scalar(total), rg)
    }

    /// Element `index` (row-major) of `input` as a scalar.
    pub fn pick(&mut self, input: Var, index: usize) -> Result<Var> {
        let x = self.value(input);
        let v = *x.data().get(index).ok_or_else(|| {
            contract(format!("pick: index {index} out of range for {:?}", x.shape()))
        })?;
        let rg = self.grad_needed(input);
        Ok(self.push(Op::Pick(input, index), Tensor::scalar(v), rg))
    }

    /// Sums a non-empty list of same-shaped values.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| contract("add_all of an empty list"))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Smallest `|x|` over the inputs of every ReLU recorded so far. A
    /// perturbation that moves no input by more than this keeps every ReLU
    /// on the same side of its kink.
    pub fn relu_margin(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(input) => self
                    .value(input)
                    .data()
                    .iter()
                    .map(|v| v.abs())
                    .reduce(T::min),
                _ => None,
            })
            .reduce(T::min)
    }

    /// Gradient of the scalar `loss` with respect to every parameter.
    /// Parameters that do not influence `loss` get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<GradientSet<T>> {
        if self.value(loss).len() != 1 {
            return Err(contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut result = GradientSet::zeros_like(self.params);
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(i) => axpy(T::one(), &g, result.grads[*i].data_mut()),
                Op::Conv2d {
                    input,
                    kernels,
                    bias,
                    stride,
                    cols,
                } => self.conv2d_backward(&g, *input, *kernels, *bias, *stride, cols, &mut grads),
                Op::Dense {
                    input,
                    weights,
                    bias,
                } => {
                    let x = self.value(*input).data();
                    let w = self.value(*weights).data();
                    let n = x.len();
                    if self.grad_needed(*weights) {
                        let gw = grad_slot(&mut grads, *weights, w.len());
                        for (i, &gi) in g.iter().enumerate() {
                            axpy(gi, x, &mut gw[i * n..(i + 1) * n]);
                        }
                    }
                    if let Some(b) = bias.filter(|b| self.grad_needed(*b)) {
                        axpy(T::one(), &g, grad_slot(&mut grads, b, g.len()));
                    }
                    if self.grad_needed(*input) {
                        let gx = grad_slot(&mut grads, *input, n);
                        for (i, &gi) in g.iter().enumerate() {
                            axpy(gi, &w[i * n..(i + 1) * n], gx);
                        }
                    }
                }
                Op::Relu(input) => {
                    let x = self.value(*input).data();
                    let gx = grad_slot(&mut grads, *input, x.len());
                    for ((gxi, &gi), &xi) in gx.iter_mut().zip(&g).zip(x) {
                        if xi > T::zero() {
                            *gxi = *gxi + gi;
                        }
                    }
                }
                Op::Softmax(input) => {
                    let y = node.value.data();
                    let inner = dot(&g, y);
                    let gx = grad_slot(&mut grads, *input, y.len());
                    for ((gxi, &gi), &yi) in gx.iter_mut().zip(&g).zip(y) {
                        *gxi = *gxi + yi * (gi - inner);
                    }
                }
                Op::Log { input, floor } => {
                    let x = self.value(*input).data();
                    let gx = grad_slot(&mut grads, *input, x.len());
                    for ((gxi, &gi), &xi) in gx.iter_mut().zip(&g).zip(x) {
                        if xi > *floor {
                            *gxi = *gxi + gi / xi;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.grad_needed(v) {
                            axpy(T::one(), &g, grad_slot(&mut grads, v, g.len()));
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.grad_needed(*a) {
                        axpy(T::one(), &g, grad_slot(&mut grads, *a, g.len()));
                    }
                    if self.grad_needed(*b) {
                        axpy(-T::one(), &g, grad_slot(&mut grads, *b, g.len()));
                    }
                }
                Op::Mul(a, b) => {
                    // Evaluate both partials before touching either slot: `a`
                    // and `b` may be the same node.
                    let da: Vec<T> = mul_elems(&g, self.value(*b).data());
                    let db: Vec<T> = mul_elems(&g, self.value(*a).data());
                    if self.grad_needed(*a) {
                        axpy(T::one(), &da, grad_slot(&mut grads, *a, g.len()));
                    }
                    if self.grad_needed(*b) {
                        axpy(T::one(), &db, grad_slot(&mut grads, *b, g.len()));
                    }
                }
                Op::Scale(input, factor) => {
                    axpy(*factor, &g, grad_slot(&mut grads, *input, g.len()));
                }
                Op::Sum(input) => {
                    let n = self.value(*input).len();
                    let gx = grad_slot(&mut grads, *input, n);
                    gx.iter_mut().for_each(|v| *v = *v + g[0]);
                }
                Op::Pick(input, index) => {
                    let n = self.value(*input).len();
                    let gx = grad_slot(&mut grads, *input, n);
                    gx[*index] = gx[*index] + g[0];
                }
            }
        }
        Ok(result)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &self,
        g: &[T],
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        stride: usize,
        cols: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let x = self.value(input);
        let w = self.value(kernels);
        let [c, h, wd] = dims3(x.shape(), "").expect("validated in forward");
        let [f, _, k, _] = dims4(w.shape(), "").expect("validated in forward");
        let oh = (h - k) / stride + 1;
        let ow = (wd - k) / stride + 1;
        let positions = oh * ow;
        let rows = c * k * k;

        if self.grad_needed(kernels) {
            let gw = grad_slot(grads, kernels, f * rows);
            for fi in 0..f {
                let grow = &g[fi * positions..(fi + 1) * positions];
                for r in 0..rows {
                    let idx = fi * rows + r;
                    gw[idx] = gw[idx] + dot(grow, &cols[r * positions..(r + 1) * positions]);
                }
            }
        }
        if let Some(b) = bias.filter(|b| self.grad_needed(*b)) {
            let gb = grad_slot(grads, b, f);
            for fi in 0..f {
                gb[fi] = gb[fi] + g[fi * positions..(fi + 1) * positions].iter().copied().sum();
            }
        }
        if self.grad_needed(input) {
            let wdata = w.data();
            let mut gcols = vec![T::zero(); rows * positions];
            for fi in 0..f {
                let grow = &g[fi * positions..(fi + 1) * positions];
                for r in 0..rows {
                    axpy(
                        wdata[fi * rows + r],
                        grow,
                        &mut gcols[r * positions..(r + 1) * positions],
                    );
                }
            }
            let gx = grad_slot(grads, input, c * h * wd);
            for ch in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        let r = (ch * k + ki) * k + kj;
                        let src = &gcols[r * positions..(r + 1) * positions];
                        for oy in 0..oh {
                            let base = (ch * h + oy * stride + ki) * wd;
                            for ox in 0..ow {
                                let xi = base + ox * stride + kj;
                                gx[xi] = gx[xi] + src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn grad_slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn mul_elems<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}

/// Numerically stable softmax of a slice.
pub fn softmax_values<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn dims2(shape: &[usize], what: &str) -> Result<[usize; 2]> {
    shape
        .try_into()
        .map_err(|_| contract(format!("{what}: expected rank 2, got {shape:?}")))
}

fn dims3(shape: &[usize], what: &str) -> Result<[usize; 3]> {
    shape
        .try_into()
        .map_err(|_| contract(format!("{what}: expected rank 3, got {shape:?}")))
}

fn dims4(shape: &[usize], what: &str) -> Result<[usize; 4]> {
    shape
        .try_into()
        .map_err(|_| contract(format!("{what}: expected rank 4, got {shape:?}")))
}
