//! Reverse-mode automatic differentiation over whole-tensor ops.
//!
//! A [`Tape`] is an arena of values. Every op appends its output together
//! with a [`Backward`] rule; [`Tape::backward`] walks the arena in reverse
//! and returns a [`Gradients`] table. Ops are coarse (a full convolution, a
//! full recurrent sweep) so the tape stays short even for long sequences.
//!
//! The tape is meant to live for one forward/backward pass and be dropped.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{dot, sigmoid, vec_mat_acc};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Adjoint rule of one recorded op.
pub trait Backward<T: Scalar> {
    /// Accumulates input gradients from `g_out`. `grads[i]` is `Some` (and
    /// zero-initialised) only for inputs that need a gradient.
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, g_out: &[T], grads: &mut [Option<Vec<T>>]);
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    rule: Option<Box<dyn Backward<T>>>,
    tracked: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
    non_finite: Option<&'static str>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
            non_finite: None,
        }
    }

    /// A tape that records values only; `backward` on it always fails.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
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

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Whether an op on `inputs` has to keep what its backward rule needs.
    pub fn needs_grad(&self, inputs: &[Var]) -> bool {
        self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Name of the first op that produced a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.non_finite
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(op) => Err(Error::NonFinite { op }),
            None => Ok(()),
        }
    }

    /// Records a leaf. Leaves created with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.note_finite("leaf", &value);
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            rule: None,
            tracked: requires_grad && self.grad_enabled,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a copy of a parameter, tracked if the tensor requires grad.
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        let rg = t.requires_grad();
        let mut copy = Tensor::raw(t.shape().to_vec(), t.data().to_vec());
        copy.set_requires_grad(rg);
        self.leaf(copy, rg)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Appends an op output. `rule` is dropped when no input is tracked.
    pub fn push(&mut self, op: &'static str, value: Tensor<T>, inputs: &[Var], rule: Box<dyn Backward<T>>) -> Var {
        self.note_finite(op, &value);
        let tracked = self.needs_grad(inputs);
        self.nodes.push(Node {
            value,
            inputs: inputs.to_vec(),
            rule: tracked.then_some(rule),
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn note_finite(&mut self, op: &'static str, value: &Tensor<T>) {
        if self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some(op);
        }
    }

    /// Propagates adjoints from a scalar `loss` back to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ln = &self.nodes[loss.0];
        if ln.value.len() != 1 {
            return Err(Error::NonScalarLoss { elements: ln.value.len() });
        }
        if !ln.tracked {
            return Err(Error::NoGradPath);
        }
        self.check_finite()?;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(rule) = &node.rule else { continue };
            let Some(g_out) = grads[idx].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let mut local: Vec<Option<Vec<T>>> = node
                .inputs
                .iter()
                .map(|v| {
                    let n = &self.nodes[v.0];
                    n.tracked.then(|| vec![T::zero(); n.value.len()])
                })
                .collect();
            rule.backward(&inputs, &node.value, &g_out, &mut local);
            for (v, g) in node.inputs.iter().zip(local) {
                let Some(g) = g else { continue };
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    slot => *slot = Some(g),
                }
            }
            grads[idx] = Some(g_out);
        }
        Ok(Gradients { grads })
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, rule: Box<dyn Backward<T>>) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::raw(ta.shape().to_vec(), data);
        Ok(self.push(op, out, &[a, b], rule))
    }

    fn map(&mut self, op: &'static str, a: Var, f: impl Fn(T) -> T, rule: Box<dyn Backward<T>>) -> Var {
        let ta = self.value(a);
        let out = Tensor::raw(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect());
        self.push(op, out, &[a], rule)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Box::new(AddRule(T::one())))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Box::new(AddRule(-T::one())))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Box::new(MulRule))
    }

    /// Scalar-with-tensor product.
    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.map("scale", a, |x| x * s, Box::new(ScaleRule(s)))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        self.map("add_scalar", a, |x| x + s, Box::new(ScaleRule(T::one())))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map("relu", a, |x| if x > T::zero() { x } else { T::zero() }, Box::new(ReluRule))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map("sigmoid", a, sigmoid, Box::new(SigmoidRule))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map("tanh", a, |x| x.tanh(), Box::new(TanhRule))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(T::zero(), |acc, &x| acc + x);
        self.push("sum", Tensor::raw(vec![1], vec![s]), &[a], Box::new(SumRule(T::one())))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = T::of(t.len() as f64);
        let s = t.data().iter().fold(T::zero(), |acc, &x| acc + x) / n;
        self.push("mean", Tensor::raw(vec![1], vec![s]), &[a], Box::new(SumRule(T::one() / n)))
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, n) = (sa[0], sb[1]);
        let k = sa[1];
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            vec_mat_acc(&ta[i * k..(i + 1) * k], tb, &mut out[i * n..(i + 1) * n]);
        }
        Ok(self.push("matmul", Tensor::raw(vec![m, n], out), &[a, b], Box::new(MatMulRule { m, k, n })))
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let inner: usize = first[1..].iter().product();
        let mut lead = 0;
        let mut data = Vec::new();
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != first[1..] {
                return Err(shape_err("concat", &first, s));
            }
            lead += s[0];
            sizes.push(s[0] * inner);
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = first;
        shape[0] = lead;
        Ok(self.push("concat", Tensor::raw(shape, data), parts, Box::new(ConcatRule(sizes))))
    }

    /// Slice `index` of the leading axis, keeping a unit leading extent.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if index >= s[0] {
            return Err(shape_err("select", &[index + 1], &s));
        }
        let inner: usize = s[1..].iter().product();
        let data = self.value(a).data()[index * inner..(index + 1) * inner].to_vec();
        let mut shape = s;
        shape[0] = 1;
        Ok(self.push("select", Tensor::raw(shape, data), &[a], Box::new(SelectRule { index, inner })))
    }

    /// Repeats a unit leading axis `times` times.
    pub fn tile(&mut self, a: Var, times: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s[0] != 1 || times == 0 {
            return Err(shape_err("tile", &[1], &s));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(src.len() * times);
        for _ in 0..times {
            data.extend_from_slice(src);
        }
        let mut shape = s;
        shape[0] = times;
        Ok(self.push("tile", Tensor::raw(shape, data), &[a], Box::new(TileRule(times))))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.len() {
            return Err(shape_err("reshape", shape, t.shape()));
        }
        let out = Tensor::raw(shape.to_vec(), t.data().to_vec());
        Ok(self.push("reshape", out, &[a], Box::new(ScaleRule(T::one()))))
    }
}

/// Gradients produced by one [`Tape::backward`] call.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` (if any) into `t`'s accumulator.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor<T>) -> Result<()> {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

#[inline]
pub(crate) fn add_into<T: Scalar>(dst: &mut Option<Vec<T>>, f: impl FnOnce(&mut [T])) {
    if let Some(d) = dst {
        f(d);
    }
}

struct AddRule<T>(T);
impl<T: Scalar> Backward<T> for AddRule<T> {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (ga, gb) = grads.split_at_mut(1);
        add_into(&mut ga[0], |d| d.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b));
        add_into(&mut gb[0], |d| d.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + self.0 * b));
    }
}

struct MulRule;
impl<T: Scalar> Backward<T> for MulRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (ga, gb) = grads.split_at_mut(1);
        let (a, b) = (x[0].data(), x[1].data());
        add_into(&mut ga[0], |d| {
            for i in 0..d.len() {
                d[i] = d[i] + g[i] * b[i];
            }
        });
        add_into(&mut gb[0], |d| {
            for i in 0..d.len() {
                d[i] = d[i] + g[i] * a[i];
            }
        });
    }
}

struct ScaleRule<T>(T);
impl<T: Scalar> Backward<T> for ScaleRule<T> {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        add_into(&mut grads[0], |d| d.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + self.0 * b));
    }
}

struct ReluRule;
impl<T: Scalar> Backward<T> for ReluRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let xs = x[0].data();
        add_into(&mut grads[0], |d| {
            for i in 0..d.len() {
                if xs[i] > T::zero() {
                    d[i] = d[i] + g[i];
                }
            }
        });
    }
}

struct SigmoidRule;
impl<T: Scalar> Backward<T> for SigmoidRule {
    fn backward(&self, _: &[&Tensor<T>], y: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let ys = y.data();
        add_into(&mut grads[0], |d| {
            for i in 0..d.len() {
                d[i] = d[i] + g[i] * ys[i] * (T::one() - ys[i]);
            }
        });
    }
}

struct TanhRule;
impl<T: Scalar> Backward<T> for TanhRule {
    fn backward(&self, _: &[&Tensor<T>], y: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let ys = y.data();
        add_into(&mut grads[0], |d| {
            for i in 0..d.len() {
                d[i] = d[i] + g[i] * (T::one() - ys[i] * ys[i]);
            }
        });
    }
}

struct SumRule<T>(T);
impl<T: Scalar> Backward<T> for SumRule<T> {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let v = g[0] * self.0;
        add_into(&mut grads[0], |d| d.iter_mut().for_each(|a| *a = *a + v));
    }
}

struct MatMulRule {
    m: usize,
    k: usize,
    n: usize,
}
impl<T: Scalar> Backward<T> for MatMulRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (m, k, n) = (self.m, self.k, self.n);
        let (a, b) = (x[0].data(), x[1].data());
        let (ga, gb) = grads.split_at_mut(1);
        // dA = dC · Bᵀ
        add_into(&mut ga[0], |d| {
            for i in 0..m {
                let gi = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    d[i * k + p] = d[i * k + p] + dot(gi, &b[p * n..(p + 1) * n]);
                }
            }
        });
        // dB = Aᵀ · dC
        add_into(&mut gb[0], |d| {
            for i in 0..m {
                vec_mat_outer(&a[i * k..(i + 1) * k], &g[i * n..(i + 1) * n], d);
            }
        });
    }
}

/// `d += xᵀ · g` for a single row pair (`d` is `[x.len(), g.len()]`).
#[inline]
pub(crate) fn vec_mat_outer<T: Scalar>(x: &[T], g: &[T], d: &mut [T]) {
    let n = g.len();
    for (p, &xp) in x.iter().enumerate() {
        if xp != T::zero() {
            crate::kernels::axpy(&mut d[p * n..(p + 1) * n], xp, g);
        }
    }
}

struct ConcatRule(Vec<usize>);
impl<T: Scalar> Backward<T> for ConcatRule {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut off = 0;
        for (slot, &len) in grads.iter_mut().zip(&self.0) {
            add_into(slot, |d| d.iter_mut().zip(&g[off..off + len]).for_each(|(a, &b)| *a = *a + b));
            off += len;
        }
    }
}

struct SelectRule {
    index: usize,
    inner: usize,
}
impl<T: Scalar> Backward<T> for SelectRule {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let off = self.index * self.inner;
        add_into(&mut grads[0], |d| {
            d[off..off + self.inner].iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b)
        });
    }
}

struct TileRule(usize);
impl<T: Scalar> Backward<T> for TileRule {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        add_into(&mut grads[0], |d| {
            let inner = d.len();
            for r in 0..self.0 {
                d.iter_mut().zip(&g[r * inner..(r + 1) * inner]).for_each(|(a, &b)| *a = *a + b);
            }
        });
    }
}
