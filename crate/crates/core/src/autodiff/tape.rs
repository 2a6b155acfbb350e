use crate::autodiff::param::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::nn::{self, ConvGeom};
use crate::scalar::Scalar;
use crate::tensor::{broadcast_kind, for_each_reduced_index, Broadcast, Tensor};
use crate::train::loss;

/// Node handle on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation that produced a node, with whatever its backward rule needs.
#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add { a: Var, b: Var, bc: Broadcast },
    Mul { a: Var, b: Var, bc: Broadcast },
    Scale { x: Var, s: Var },
    MulConst { x: Var, c: Tensor<T> },
    ReduceSum { x: Var, reduced: Vec<bool> },
    Reshape { x: Var },
    Index { x: Var, flat: usize },
    Relu { x: Var },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    SoftmaxSpatial { x: Var },
    SoftmaxLast { x: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    Concat { a: Var, b: Var },
    Dense { x: Var, w: Var, b: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Cce { probs: Var, targets: Tensor<T> },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Record of a forward computation, replayed in reverse by [`Tape::backward`].
///
/// Nodes are appended in evaluation order, so every input id is smaller than
/// the id of the node that consumes it. A tape is single-threaded.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    stochastic: bool,
}

/// Adjoints of every node reached during a backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    adjoints: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adds parameter adjoints into the matching `grad` buffers of `store`.
    /// Frozen parameters are left untouched.
    pub fn accumulate_into(&self, tape: &Tape<T>, store: &mut ParamStore<T>) {
        for (node, adj) in tape.nodes.iter().zip(&self.adjoints) {
            let (Some(id), Some(adj)) = (node.param, adj) else { continue };
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            for (g, &a) in p.grad.data_mut().iter_mut().zip(adj.data()) {
                *g += a;
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), stochastic: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Whether a random op (train-mode dropout) was recorded.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub(crate) fn mark_stochastic(&mut self) {
        self.stochastic = true;
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Leaf holding the current value of a stored parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        self.nodes.push(Node { value: p.value.clone(), op: Op::Leaf, requires_grad: p.trainable, param: Some(id) });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = broadcast_kind(self.shape(a), self.shape(b))?;
        let value = self.value(a).ew_add(self.value(b))?;
        Ok(self.push(value, Op::Add { a, b, bc }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = broadcast_kind(self.shape(a), self.shape(b))?;
        let value = self.value(a).ew_mul(self.value(b))?;
        Ok(self.push(value, Op::Mul { a, b, bc }, &[a, b]))
    }

    /// `s * x` for a one-element `s`.
    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item()?;
        let value = self.value(x).map(|v| v * sv);
        Ok(self.push(value, Op::Scale { x, s }, &[x, s]))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Tensor<T>) -> Result<Var> {
        if c.shape() != self.shape(x) {
            return Err(Error::Shape("mul_const requires equal shapes".into()));
        }
        let value = self.value(x).ew_mul(&c)?;
        Ok(self.push(value, Op::MulConst { x, c }, &[x]))
    }

    pub fn reduce_sum(&mut self, x: Var, axes: &[usize], keep_dims: bool) -> Result<Var> {
        let value = self.value(x).reduce_sum(axes, keep_dims)?;
        let mut reduced = vec![false; self.value(x).rank()];
        for &a in axes {
            reduced[a] = true;
        }
        Ok(self.push(value, Op::ReduceSum { x, reduced }, &[x]))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.reduce_sum(x, &axes, false)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    /// Collapses everything after the batch axis: `[n, ..]` to `[n, rest]`.
    pub fn flatten_batch(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = shape[0];
        let rest: usize = shape[1..].iter().product();
        self.reshape(x, &[n, rest.max(1)])
    }

    /// One entry as a `[1]` tensor.
    pub fn index(&mut self, x: Var, flat: usize) -> Result<Var> {
        let v =
            *self.value(x).data().get(flat).ok_or_else(|| Error::Shape(format!("flat index {flat} out of range")))?;
        Ok(self.push(Tensor::scalar(v), Op::Index { x, flat }, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu { x }, &[x])
    }

    /// Reverse pass from a one-element `loss`, returning every adjoint.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::full(self.shape(loss), T::one())?);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.backward_node(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    /// [`backward`](Self::backward) followed by accumulation into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        let grads = self.backward(loss)?;
        grads.accumulate_into(self, store);
        Ok(grads)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, adj: &mut [Option<Tensor<T>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b, bc } => {
                if self.needs(*a) {
                    accumulate(adj, *a, g.data().to_vec(), g.shape());
                }
                if self.needs(*b) {
                    accumulate(adj, *b, unbroadcast(g.data(), *bc), self.shape(*b));
                }
            }
            Op::Mul { a, b, bc } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.needs(*a) {
                    let ga = match bc {
                        Broadcast::Same => zip(g.data(), bv.data(), |x, y| x * y),
                        Broadcast::LastAxis(d) => {
                            g.data().iter().enumerate().map(|(i, &x)| x * bv.data()[i / d]).collect()
                        }
                    };
                    accumulate(adj, *a, ga, av.shape());
                }
                if self.needs(*b) {
                    let prod = zip(g.data(), av.data(), |x, y| x * y);
                    accumulate(adj, *b, unbroadcast(&prod, *bc), bv.shape());
                }
            }
            Op::Scale { x, s } => {
                let sv = self.value(*s).data()[0];
                if self.needs(*x) {
                    accumulate(adj, *x, g.data().iter().map(|&v| v * sv).collect(), g.shape());
                }
                if self.needs(*s) {
                    let ds = g.data().iter().zip(self.value(*x).data()).map(|(&a, &b)| a * b).sum();
                    accumulate(adj, *s, vec![ds], &[1]);
                }
            }
            Op::MulConst { x, c } => {
                accumulate(adj, *x, zip(g.data(), c.data(), |a, b| a * b), g.shape());
            }
            Op::ReduceSum { x, reduced } => {
                let xs = self.shape(*x);
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for_each_reduced_index(xs, reduced, |src, dst| dx[src] = g.data()[dst]);
                accumulate(adj, *x, dx, xs);
            }
            Op::Reshape { x } => {
                accumulate(adj, *x, g.data().to_vec(), self.shape(*x));
            }
            Op::Index { x, flat } => {
                let mut dx = vec![T::zero(); self.value(*x).len()];
                dx[*flat] = g.data()[0];
                accumulate(adj, *x, dx, self.shape(*x));
            }
            Op::Relu { x } => {
                let dx = zip(g.data(), self.value(*x).data(), |gv, xv| if xv > T::zero() { gv } else { T::zero() });
                accumulate(adj, *x, dx, g.shape());
            }
            Op::Conv2d { x, w, b, geom } => {
                let (dx, dw) = nn::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g.data(),
                    self.needs(*x),
                    self.needs(*w),
                );
                if let Some(dx) = dx {
                    accumulate(adj, *x, dx, self.shape(*x));
                }
                if let Some(dw) = dw {
                    accumulate(adj, *w, dw, self.shape(*w));
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let co = geom.out_ch;
                        let mut db = vec![T::zero(); co];
                        for (i, &v) in g.data().iter().enumerate() {
                            db[i % co] += v;
                        }
                        accumulate(adj, *b, db, &[co]);
                    }
                }
            }
            Op::SoftmaxSpatial { x } => {
                let dx = nn::softmax_spatial_backward(out, g);
                accumulate(adj, *x, dx, g.shape());
            }
            Op::SoftmaxLast { x } => {
                let dx = nn::softmax_last_backward(out, g);
                accumulate(adj, *x, dx, g.shape());
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    dx[src] += gv;
                }
                accumulate(adj, *x, dx, self.shape(*x));
            }
            Op::Concat { a, b } => {
                let ca = *self.shape(*a).last().unwrap();
                let cb = *self.shape(*b).last().unwrap();
                let (ga, gb) = nn::concat_backward(g.data(), ca, cb);
                if self.needs(*a) {
                    accumulate(adj, *a, ga, self.shape(*a));
                }
                if self.needs(*b) {
                    accumulate(adj, *b, gb, self.shape(*b));
                }
            }
            Op::Dense { x, w, b } => {
                let (dx, dw, db) = nn::dense_backward(self.value(*x), self.value(*w), g, self.needs(*x));
                if let Some(dx) = dx {
                    accumulate(adj, *x, dx, self.shape(*x));
                }
                if self.needs(*w) {
                    accumulate(adj, *w, dw, self.shape(*w));
                }
                if self.needs(*b) {
                    accumulate(adj, *b, db, self.shape(*b));
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let gam = self.value(*gamma).data();
                let (dx, dgamma, dbeta) = nn::batchnorm_backward(g.data(), xhat, inv_std, gam, *batch_stats);
                if self.needs(*x) {
                    accumulate(adj, *x, dx, self.shape(*x));
                }
                if self.needs(*gamma) {
                    accumulate(adj, *gamma, dgamma, self.shape(*gamma));
                }
                if self.needs(*beta) {
                    accumulate(adj, *beta, dbeta, self.shape(*beta));
                }
            }
            Op::Cce { probs, targets } => {
                let dp = loss::cce_backward(self.value(*probs), targets, g.data()[0]);
                accumulate(adj, *probs, dp, self.shape(*probs));
            }
        }
    }
}

fn zip<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn unbroadcast<T: Scalar>(g: &[T], bc: Broadcast) -> Vec<T> {
    match bc {
        Broadcast::Same => g.to_vec(),
        Broadcast::LastAxis(d) => g.chunks(d).map(|c| c.iter().copied().sum()).collect(),
    }
}

fn accumulate<T: Scalar>(adj: &mut [Option<Tensor<T>>], v: Var, grad: Vec<T>, shape: &[usize]) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, g) in existing.data_mut().iter_mut().zip(grad) {
                *e += g;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), grad).expect("gradient matches input shape"));
        }
    }
}
