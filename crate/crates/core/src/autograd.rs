//! Two interpreters for the network definitions: [`Eager`] evaluates values
//! only, [`Graph`] records a tape and runs reverse-mode differentiation.
//!
//! Model code is written once against [`Exec`], so inference and training
//! share every kernel call and produce bit-identical forward values.

use std::collections::HashMap;
use std::sync::Arc;

use crate::losses;
use crate::map::BinaryMap;
use crate::ops;
use crate::tensor::{Real, Tensor};

/// Index of a tensor inside a parameter store.
pub type ParamId = usize;

/// Read access to a flat list of parameter tensors.
pub trait ParamStore<T> {
    fn tensor(&self, id: ParamId) -> &Arc<Tensor<T>>;
    fn count(&self) -> usize;
}

pub trait Exec<T: Real> {
    type Var: Clone;

    fn param(&mut self, id: ParamId) -> Self::Var;
    fn constant(&mut self, value: Tensor<T>) -> Self::Var;
    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor<T>;

    fn conv2d(
        &mut self,
        x: &Self::Var,
        w: &Self::Var,
        b: &Self::Var,
        stride: usize,
        pad: usize,
    ) -> Self::Var;
    fn linear(&mut self, x: &Self::Var, w: &Self::Var, b: &Self::Var) -> Self::Var;
    fn relu(&mut self, x: &Self::Var) -> Self::Var;
    fn tanh(&mut self, x: &Self::Var) -> Self::Var;
    fn sigmoid(&mut self, x: &Self::Var) -> Self::Var;
    fn adain(&mut self, x: &Self::Var, gamma: &Self::Var, eta: &Self::Var, eps: T) -> Self::Var;
    fn global_avg_pool(&mut self, x: &Self::Var) -> Self::Var;
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    /// Contiguous slice `[start, start + len)` of a flat vector.
    fn narrow(&mut self, x: &Self::Var, start: usize, len: usize) -> Self::Var;

    /// Scalar `mean((a - b)^2)`.
    fn mse(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    /// Scalar mask-guided alignment term; argument order as in
    /// [`losses::alignment_loss`].
    fn align(
        &mut self,
        codes: [&Self::Var; 4],
        mask: &Arc<BinaryMap>,
        m: T,
    ) -> Self::Var;
    /// Sum of scalars.
    fn sum(&mut self, terms: &[Self::Var]) -> Self::Var;

    fn scalar(&self, v: &Self::Var) -> T {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar");
        t.data()[0]
    }
}

fn narrow_tensor<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Tensor<T> {
    assert!(start + len <= x.len(), "narrow out of range");
    Tensor::from_vec(&[len], x.data()[start..start + len].to_vec())
}

fn sum_scalars<T: Real>(values: impl Iterator<Item = T>) -> Tensor<T> {
    Tensor::from_vec(&[1], vec![values.fold(T::zero(), |a, b| a + b)])
}

/// Forward-only interpreter; intermediates are dropped as soon as the model
/// code releases them.
pub struct Eager<'p, T, P: ?Sized> {
    params: &'p P,
    _marker: std::marker::PhantomData<T>,
}

impl<'p, T: Real, P: ParamStore<T> + ?Sized> Eager<'p, T, P> {
    pub fn new(params: &'p P) -> Self {
        Self {
            params,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Real, P: ParamStore<T> + ?Sized> Exec<T> for Eager<'_, T, P> {
    type Var = Arc<Tensor<T>>;

    fn param(&mut self, id: ParamId) -> Self::Var {
        Arc::clone(self.params.tensor(id))
    }

    fn constant(&mut self, value: Tensor<T>) -> Self::Var {
        Arc::new(value)
    }

    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor<T> {
        v
    }

    fn conv2d(&mut self, x: &Self::Var, w: &Self::Var, b: &Self::Var, stride: usize, pad: usize) -> Self::Var {
        Arc::new(ops::conv2d(x, w, b, stride, pad))
    }

    fn linear(&mut self, x: &Self::Var, w: &Self::Var, b: &Self::Var) -> Self::Var {
        Arc::new(ops::linear(x, w, b))
    }

    fn relu(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(ops::relu(x))
    }

    fn tanh(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(ops::tanh(x))
    }

    fn sigmoid(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(ops::sigmoid(x))
    }

    fn adain(&mut self, x: &Self::Var, gamma: &Self::Var, eta: &Self::Var, eps: T) -> Self::Var {
        Arc::new(ops::adain(x, gamma.data(), eta.data(), eps))
    }

    fn global_avg_pool(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(ops::global_avg_pool(x))
    }

    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var {
        let mut out = (**a).clone();
        out.add_assign(b);
        Arc::new(out)
    }

    fn narrow(&mut self, x: &Self::Var, start: usize, len: usize) -> Self::Var {
        Arc::new(narrow_tensor(x, start, len))
    }

    fn mse(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var {
        let v = losses::mse(a, b).expect("mse operands share a shape");
        Arc::new(Tensor::from_vec(&[1], vec![v]))
    }

    fn align(&mut self, codes: [&Self::Var; 4], mask: &Arc<BinaryMap>, m: T) -> Self::Var {
        let v = losses::alignment_unchecked(codes[0], codes[1], codes[2], codes[3], mask, m);
        Arc::new(Tensor::from_vec(&[1], vec![v]))
    }

    fn sum(&mut self, terms: &[Self::Var]) -> Self::Var {
        Arc::new(sum_scalars(terms.iter().map(|t| t.data()[0])))
    }
}

pub type NodeId = usize;

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    AdaIn {
        x: NodeId,
        gamma: NodeId,
        eta: NodeId,
        eps: T,
    },
    Pool(NodeId),
    Add(NodeId, NodeId),
    Narrow {
        x: NodeId,
        start: usize,
    },
    Mse(NodeId, NodeId),
    Align {
        codes: [NodeId; 4],
        mask: Arc<BinaryMap>,
        m: T,
    },
    Sum(Vec<NodeId>),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
}

/// Tape recording every operation for reverse-mode differentiation.
pub struct Graph<'p, T, P: ?Sized> {
    params: &'p P,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, NodeId>,
}

impl<'p, T: Real, P: ParamStore<T> + ?Sized> Graph<'p, T, P> {
    pub fn new(params: &'p P) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        self.nodes.len() - 1
    }

    fn val(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    /// Whether any parameter feeds into node `id`; constants need no gradient.
    fn requires_grad(&self, id: NodeId, memo: &mut [Option<bool>]) -> bool {
        if let Some(v) = memo[id] {
            return v;
        }
        let r = match &self.nodes[id].op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::Conv { x, w, b, .. } | Op::Linear { x, w, b } => {
                let (x, w, b) = (*x, *w, *b);
                self.requires_grad(x, memo) | self.requires_grad(w, memo) | self.requires_grad(b, memo)
            }
            Op::Relu(x) | Op::Tanh(x) | Op::Sigmoid(x) | Op::Pool(x) => {
                let x = *x;
                self.requires_grad(x, memo)
            }
            Op::Narrow { x, .. } => {
                let x = *x;
                self.requires_grad(x, memo)
            }
            Op::AdaIn { x, gamma, eta, .. } => {
                let (x, g, e) = (*x, *gamma, *eta);
                self.requires_grad(x, memo) | self.requires_grad(g, memo) | self.requires_grad(e, memo)
            }
            Op::Add(a, b) | Op::Mse(a, b) => {
                let (a, b) = (*a, *b);
                self.requires_grad(a, memo) | self.requires_grad(b, memo)
            }
            Op::Align { codes, .. } => {
                let codes = *codes;
                codes.iter().fold(false, |acc, &c| acc | self.requires_grad(c, memo))
            }
            Op::Sum(terms) => {
                let terms = terms.clone();
                terms.iter().fold(false, |acc, &c| acc | self.requires_grad(c, memo))
            }
        };
        memo[id] = Some(r);
        r
    }

    /// Gradient of the scalar node `output` with respect to every parameter
    /// reached by the tape. Parameters never touched get `None`.
    pub fn backward(&self, output: NodeId) -> Vec<Option<Tensor<T>>> {
        assert_eq!(self.val(output).len(), 1, "backward needs a scalar output");
        let mut memo = vec![None; self.nodes.len()];
        let needs: Vec<bool> = (0..self.nodes.len())
            .map(|i| self.requires_grad(i, &mut memo))
            .collect();

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Option<Tensor<T>>> =
            (0..self.params.count()).map(|_| None).collect();
        grads[output] = Some(Tensor::from_vec(&[1], vec![T::one()]));

        fn acc<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
            match slot {
                Some(s) => s.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for id in (0..=output).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => acc(&mut param_grads[*pid], g),
                Op::Conv { x, w, b, stride, pad } => {
                    let cg = ops::conv2d_backward(self.val(*x), self.val(*w), &g, *stride, *pad, needs[*x]);
                    if let Some(dx) = cg.input {
                        acc(&mut grads[*x], dx);
                    }
                    acc(&mut grads[*w], cg.weight);
                    acc(&mut grads[*b], cg.bias);
                }
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = ops::linear_backward(self.val(*x), self.val(*w), &g);
                    if needs[*x] {
                        acc(&mut grads[*x], dx);
                    }
                    acc(&mut grads[*w], dw);
                    acc(&mut grads[*b], db);
                }
                Op::Relu(x) => {
                    let dx = ops::pointwise_backward(&node.value, &g, |y| {
                        if y > T::zero() { T::one() } else { T::zero() }
                    });
                    acc(&mut grads[*x], dx);
                }
                Op::Tanh(x) => {
                    let dx = ops::pointwise_backward(&node.value, &g, |y| T::one() - y * y);
                    acc(&mut grads[*x], dx);
                }
                Op::Sigmoid(x) => {
                    let dx = ops::pointwise_backward(&node.value, &g, |y| y * (T::one() - y));
                    acc(&mut grads[*x], dx);
                }
                Op::AdaIn { x, gamma, eta, eps } => {
                    let (dx, dg, de) =
                        ops::adain_backward(self.val(*x), self.val(*gamma).data(), *eps, &g);
                    if needs[*x] {
                        acc(&mut grads[*x], dx);
                    }
                    let n = dg.len();
                    acc(&mut grads[*gamma], Tensor::from_vec(&[n], dg));
                    acc(&mut grads[*eta], Tensor::from_vec(&[n], de));
                }
                Op::Pool(x) => {
                    let dx = ops::global_avg_pool_backward(self.val(*x).shape(), &g);
                    acc(&mut grads[*x], dx);
                }
                Op::Add(a, b) => {
                    if needs[*b] {
                        acc(&mut grads[*b], g.clone());
                    }
                    acc(&mut grads[*a], g);
                }
                Op::Narrow { x, start } => {
                    let mut full = Tensor::zeros(self.val(*x).shape());
                    full.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                    acc(&mut grads[*x], full);
                }
                Op::Mse(a, b) => {
                    let (da, db) = losses::mse_backward(self.val(*a), self.val(*b), g.data()[0]);
                    if needs[*a] {
                        acc(&mut grads[*a], da);
                    }
                    if needs[*b] {
                        acc(&mut grads[*b], db);
                    }
                }
                Op::Align { codes, mask, m } => {
                    let ds = losses::alignment_backward(
                        self.val(codes[0]),
                        self.val(codes[1]),
                        self.val(codes[2]),
                        self.val(codes[3]),
                        mask,
                        *m,
                        g.data()[0],
                    );
                    for (c, d) in codes.iter().zip(ds) {
                        if needs[*c] {
                            acc(&mut grads[*c], d);
                        }
                    }
                }
                Op::Sum(terms) => {
                    for t in terms {
                        if needs[*t] {
                            acc(&mut grads[*t], g.clone());
                        }
                    }
                }
            }
        }
        param_grads
    }
}

impl<T: Real, P: ParamStore<T> + ?Sized> Exec<T> for Graph<'_, T, P> {
    type Var = NodeId;

    fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            value: Arc::clone(self.params.tensor(id)),
            op: Op::Param(id),
        });
        let n = self.nodes.len() - 1;
        self.param_nodes.insert(id, n);
        n
    }

    fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    fn value<'a>(&'a self, v: &'a NodeId) -> &'a Tensor<T> {
        self.val(*v)
    }

    fn conv2d(&mut self, x: &NodeId, w: &NodeId, b: &NodeId, stride: usize, pad: usize) -> NodeId {
        let v = ops::conv2d(self.val(*x), self.val(*w), self.val(*b), stride, pad);
        self.push(v, Op::Conv { x: *x, w: *w, b: *b, stride, pad })
    }

    fn linear(&mut self, x: &NodeId, w: &NodeId, b: &NodeId) -> NodeId {
        let v = ops::linear(self.val(*x), self.val(*w), self.val(*b));
        self.push(v, Op::Linear { x: *x, w: *w, b: *b })
    }

    fn relu(&mut self, x: &NodeId) -> NodeId {
        let v = ops::relu(self.val(*x));
        self.push(v, Op::Relu(*x))
    }

    fn tanh(&mut self, x: &NodeId) -> NodeId {
        let v = ops::tanh(self.val(*x));
        self.push(v, Op::Tanh(*x))
    }

    fn sigmoid(&mut self, x: &NodeId) -> NodeId {
        let v = ops::sigmoid(self.val(*x));
        self.push(v, Op::Sigmoid(*x))
    }

    fn adain(&mut self, x: &NodeId, gamma: &NodeId, eta: &NodeId, eps: T) -> NodeId {
        let v = ops::adain(self.val(*x), self.val(*gamma).data(), self.val(*eta).data(), eps);
        self.push(v, Op::AdaIn { x: *x, gamma: *gamma, eta: *eta, eps })
    }

    fn global_avg_pool(&mut self, x: &NodeId) -> NodeId {
        let v = ops::global_avg_pool(self.val(*x));
        self.push(v, Op::Pool(*x))
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let mut v = self.val(*a).clone();
        v.add_assign(self.val(*b));
        self.push(v, Op::Add(*a, *b))
    }

    fn narrow(&mut self, x: &NodeId, start: usize, len: usize) -> NodeId {
        let v = narrow_tensor(self.val(*x), start, len);
        self.push(v, Op::Narrow { x: *x, start })
    }

    fn mse(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let v = losses::mse(self.val(*a), self.val(*b)).expect("mse operands share a shape");
        self.push(Tensor::from_vec(&[1], vec![v]), Op::Mse(*a, *b))
    }

    fn align(&mut self, codes: [&NodeId; 4], mask: &Arc<BinaryMap>, m: T) -> NodeId {
        let v = losses::alignment_unchecked(
            self.val(*codes[0]),
            self.val(*codes[1]),
            self.val(*codes[2]),
            self.val(*codes[3]),
            mask,
            m,
        );
        self.push(
            Tensor::from_vec(&[1], vec![v]),
            Op::Align {
                codes: [*codes[0], *codes[1], *codes[2], *codes[3]],
                mask: Arc::clone(mask),
                m,
            },
        )
    }

    fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        let v = sum_scalars(terms.iter().map(|&t| self.val(t).data()[0]));
        self.push(v, Op::Sum(terms.to_vec()))
    }
}
