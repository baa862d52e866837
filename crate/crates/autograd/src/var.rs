use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::{SparseMap, Tensor};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Runs `f` without recording any graph; every `Var` it creates is a constant.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|c| c.replace(false)));
    f()
}

#[derive(Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Rc<Tensor>),
    AddConst(Var),
    Tanh(Var),
    Powf(Var, f64),
    SafeRecip(Var),
    NormLast(Var, usize),
    SumLast(Var, Vec<usize>),
    BcastLast(Var, usize),
    SumFirst(Var, Vec<usize>),
    BcastFirst(Var, usize),
    Bmm {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Sparse(Var, Arc<SparseMap>, bool),
    Reshape(Var),
}

struct Node {
    id: u64,
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A node in the computation graph.
///
/// Cloning is cheap (reference counted). Gradients produced with
/// `create_graph = true` are themselves differentiable `Var`s.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({:?}, grad={})", self.0.value, self.0.requires_grad)
    }
}

impl Var {
    fn from_op(value: Tensor, op: Op, parents: &[&Var]) -> Self {
        let requires_grad = grad_enabled() && parents.iter().any(|p| p.0.requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        Var(Rc::new(Node {
            id: next_id(),
            value,
            op,
            requires_grad,
        }))
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn param(value: Tensor) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            op: Op::Leaf,
            requires_grad: true,
        }))
    }

    pub fn constant(value: Tensor) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            op: Op::Leaf,
            requires_grad: false,
        }))
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn item(&self) -> f64 {
        self.0.value.item()
    }

    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub fn add(&self, other: &Var) -> Var {
        let value = self.value().zip_map(other.value(), |a, b| a + b);
        Var::from_op(value, Op::Add(self.clone(), other.clone()), &[self, other])
    }

    pub fn sub(&self, other: &Var) -> Var {
        let value = self.value().zip_map(other.value(), |a, b| a - b);
        Var::from_op(value, Op::Sub(self.clone(), other.clone()), &[self, other])
    }

    pub fn mul(&self, other: &Var) -> Var {
        let value = self.value().zip_map(other.value(), |a, b| a * b);
        Var::from_op(value, Op::Mul(self.clone(), other.clone()), &[self, other])
    }

    pub fn scale(&self, factor: f64) -> Var {
        let value = self.value().map(|a| a * factor);
        Var::from_op(value, Op::Scale(self.clone(), factor), &[self])
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let value = self.value().map(|a| a + c);
        Var::from_op(value, Op::AddScalar(self.clone()), &[self])
    }

    /// Elementwise product with a constant tensor (masks, fixed weights).
    pub fn mul_const(&self, c: Rc<Tensor>) -> Var {
        let value = self.value().zip_map(&c, |a, b| a * b);
        Var::from_op(value, Op::MulConst(self.clone(), c), &[self])
    }

    pub fn add_const(&self, c: &Tensor) -> Var {
        let value = self.value().zip_map(c, |a, b| a + b);
        Var::from_op(value, Op::AddConst(self.clone()), &[self])
    }

    pub fn tanh(&self) -> Var {
        let value = self.value().map(f64::tanh);
        Var::from_op(value, Op::Tanh(self.clone()), &[self])
    }

    pub fn powf(&self, p: f64) -> Var {
        let value = self.value().map(|a| a.powf(p));
        Var::from_op(value, Op::Powf(self.clone(), p), &[self])
    }

    pub fn square(&self) -> Var {
        self.mul(self)
    }

    /// `1/x`, with the value and derivative defined as zero where `x == 0`.
    pub fn safe_recip(&self) -> Var {
        let value = self.value().map(|a| if a == 0.0 { 0.0 } else { 1.0 / a });
        Var::from_op(value, Op::SafeRecip(self.clone()), &[self])
    }

    pub fn relu(&self) -> Var {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        let mask = self.value().map(|a| if a > 0.0 { 1.0 } else { slope });
        self.mul_const(Rc::new(mask))
    }

    /// Euclidean norm over trailing blocks of `k` values. The derivative at a
    /// zero block is taken as zero.
    pub fn norm_last(&self, k: usize) -> Var {
        let x = self.value();
        let out_shape = trailing_reduced_shape(x.shape(), k);
        let data = x
            .data()
            .chunks(k)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Var::from_op(Tensor::new(out_shape, data), Op::NormLast(self.clone(), k), &[self])
    }

    /// Sums over trailing blocks of `k` values, dropping the trailing axes
    /// whose product is `k`.
    pub fn sum_last(&self, k: usize) -> Var {
        let x = self.value();
        let out_shape = trailing_reduced_shape(x.shape(), k);
        let dropped = x.shape()[out_shape.len()..].to_vec();
        let data = x.data().chunks(k).map(|c| c.iter().sum()).collect();
        Var::from_op(Tensor::new(out_shape, data), Op::SumLast(self.clone(), dropped), &[self])
    }

    /// Repeats every value `trailing.product()` times along new trailing axes.
    pub fn bcast_last(&self, trailing: &[usize]) -> Var {
        let k: usize = trailing.iter().product();
        let x = self.value();
        let mut shape = x.shape().to_vec();
        shape.extend_from_slice(trailing);
        let mut data = Vec::with_capacity(x.len() * k);
        for &v in x.data() {
            data.extend(std::iter::repeat_n(v, k));
        }
        Var::from_op(Tensor::new(shape, data), Op::BcastLast(self.clone(), k), &[self])
    }

    /// Sums over the leading axes whose product is `n`.
    pub fn sum_first(&self, n: usize) -> Var {
        let x = self.value();
        let (lead, rest) = split_leading(x.shape(), n);
        let m: usize = rest.iter().product();
        let mut data = vec![0.0; m];
        for block in x.data().chunks(m.max(1)) {
            for (acc, v) in data.iter_mut().zip(block) {
                *acc += v;
            }
        }
        Var::from_op(Tensor::new(rest, data), Op::SumFirst(self.clone(), lead), &[self])
    }

    /// Tiles the whole tensor `leading.product()` times along new leading axes.
    pub fn bcast_first(&self, leading: &[usize]) -> Var {
        let n: usize = leading.iter().product();
        let x = self.value();
        let mut shape = leading.to_vec();
        shape.extend_from_slice(x.shape());
        let mut data = Vec::with_capacity(x.len() * n);
        for _ in 0..n {
            data.extend_from_slice(x.data());
        }
        Var::from_op(Tensor::new(shape, data), Op::BcastFirst(self.clone(), n), &[self])
    }

    pub fn sum(&self) -> Var {
        let k = self.value().len();
        self.reshape(&[k]).sum_last(k)
    }

    pub fn mean(&self) -> Var {
        let k = self.value().len();
        self.sum().scale(1.0 / k as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let value = self.value().clone().reshape(shape.to_vec());
        Var::from_op(value, Op::Reshape(self.clone()), &[self])
    }

    /// Batched matrix product `op(a) · op(b)` where `op` optionally transposes
    /// the trailing two axes. Rank-3 operands are batched; rank-2 operands
    /// are shared across the batch. With `batch = Some(n)` the output is
    /// `[n, m, p]`; with `None` the per-batch products are summed into `[m, p]`.
    pub fn bmm(a: &Var, b: &Var, ta: bool, tb: bool, batch: Option<usize>) -> Var {
        let value = bmm_value(a.value(), b.value(), ta, tb, batch);
        Var::from_op(
            value,
            Op::Bmm {
                a: a.clone(),
                b: b.clone(),
                ta,
                tb,
            },
            &[a, b],
        )
    }

    /// Plain matrix product of two rank-2 operands.
    pub fn matmul(&self, other: &Var) -> Var {
        Var::bmm(self, other, false, false, None)
    }

    pub fn sparse(&self, map: &Arc<SparseMap>) -> Var {
        self.sparse_apply(map, false)
    }

    pub fn sparse_adjoint(&self, map: &Arc<SparseMap>) -> Var {
        self.sparse_apply(map, true)
    }

    fn sparse_apply(&self, map: &Arc<SparseMap>, adjoint: bool) -> Var {
        let value = map.apply(self.value(), adjoint);
        Var::from_op(value, Op::Sparse(self.clone(), map.clone(), adjoint), &[self])
    }
}

fn trailing_reduced_shape(shape: &[usize], k: usize) -> Vec<usize> {
    let mut prod = 1;
    let mut cut = shape.len();
    while cut > 0 && prod < k {
        cut -= 1;
        prod *= shape[cut];
    }
    assert!(prod == k && k > 0, "cannot reduce trailing {k} values of shape {shape:?}");
    shape[..cut].to_vec()
}

fn split_leading(shape: &[usize], n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut prod = 1;
    let mut cut = 0;
    while cut < shape.len() && prod < n {
        prod *= shape[cut];
        cut += 1;
    }
    assert!(prod == n, "cannot reduce leading {n} values of shape {shape:?}");
    (shape[..cut].to_vec(), shape[cut..].to_vec())
}

struct MatView {
    batched: bool,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
    stride: usize,
}

fn mat_view(t: &Tensor, transposed: bool) -> MatView {
    let (batched, r, c) = match *t.shape() {
        [r, c] => (false, r, c),
        [_, r, c] => (true, r, c),
        ref s => panic!("bmm operand must be rank 2 or 3, got {s:?}"),
    };
    let stride = r * c;
    if transposed {
        MatView { batched, rows: c, cols: r, rs: 1, cs: c as isize, stride }
    } else {
        MatView { batched, rows: r, cols: c, rs: c as isize, cs: 1, stride }
    }
}

fn bmm_value(a: &Tensor, b: &Tensor, ta: bool, tb: bool, batch: Option<usize>) -> Tensor {
    let va = mat_view(a, ta);
    let vb = mat_view(b, tb);
    assert_eq!(
        va.cols, vb.rows,
        "bmm inner dimension mismatch: {:?} (t={ta}) x {:?} (t={tb})",
        a.shape(),
        b.shape()
    );
    let inferred = [(&va, a), (&vb, b)]
        .iter()
        .filter(|(v, _)| v.batched)
        .map(|(_, t)| t.shape()[0])
        .collect::<Vec<_>>();
    if inferred.len() == 2 {
        assert_eq!(inferred[0], inferred[1], "bmm batch mismatch");
    }
    let n = match (batch, inferred.first()) {
        (Some(n), Some(&m)) => {
            assert_eq!(n, m, "bmm batch mismatch");
            n
        }
        (Some(n), None) => n,
        (None, Some(&m)) => m,
        (None, None) => 1,
    };
    let (m, k, p) = (va.rows, va.cols, vb.cols);
    let out_stride = m * p;
    let mut out = vec![0.0; batch.map_or(1, |n| n) * out_stride];
    for i in 0..n {
        let a_off = if va.batched { i * va.stride } else { 0 };
        let b_off = if vb.batched { i * vb.stride } else { 0 };
        let c_off = if batch.is_some() { i * out_stride } else { 0 };
        let beta = if batch.is_none() && i > 0 { 1.0 } else { 0.0 };
        if m == 0 || p == 0 {
            continue;
        }
        // SAFETY: offsets and strides describe in-bounds row-major views of
        // the operand buffers, whose sizes were checked above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                p,
                1.0,
                a.data().as_ptr().add(a_off),
                va.rs,
                va.cs,
                b.data().as_ptr().add(b_off),
                vb.rs,
                vb.cs,
                beta,
                out.as_mut_ptr().add(c_off),
                p as isize,
                1,
            );
        }
    }
    let shape = match batch {
        Some(n) => vec![n, m, p],
        None => vec![m, p],
    };
    Tensor::new(shape, out)
}

fn is_batched(v: &Var) -> bool {
    v.shape().len() == 3
}

fn batch_of(v: &Var) -> Option<usize> {
    is_batched(v).then(|| v.shape()[0])
}

/// Gradients of `output` with respect to each of `wrt`, seeded with ones.
///
/// With `create_graph` the returned gradients are part of the graph and can
/// be differentiated again. Inputs that `output` does not depend on receive
/// zeros.
pub fn grad(output: &Var, wrt: &[&Var], create_graph: bool) -> Vec<Var> {
    grad_seeded(output, Tensor::ones(output.shape().to_vec()), wrt, create_graph)
}

pub fn grad_seeded(output: &Var, seed: Tensor, wrt: &[&Var], create_graph: bool) -> Vec<Var> {
    assert_eq!(seed.shape(), output.shape(), "seed shape must match output");
    if create_graph {
        backward(output, seed, wrt)
    } else {
        no_grad(|| backward(output, seed, wrt))
    }
}

fn backward(output: &Var, seed: Tensor, wrt: &[&Var]) -> Vec<Var> {
    let order = topo_order(output);
    let wanted: HashMap<u64, ()> = wrt.iter().map(|v| (v.0.id, ())).collect();
    let mut grads: HashMap<u64, Var> = HashMap::new();
    let mut found: HashMap<u64, Var> = HashMap::new();
    grads.insert(output.0.id, Var::constant(seed));

    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.0.id) else {
            continue;
        };
        if wanted.contains_key(&node.0.id) {
            found.insert(node.0.id, g.clone());
        }
        for (parent, pg) in node_backward(node, &g) {
            if !parent.0.requires_grad {
                continue;
            }
            match grads.remove(&parent.0.id) {
                Some(acc) => grads.insert(parent.0.id, acc.add(&pg)),
                None => grads.insert(parent.0.id, pg),
            };
        }
    }

    wrt.iter()
        .map(|v| {
            found
                .remove(&v.0.id)
                .unwrap_or_else(|| Var::constant(Tensor::zeros(v.shape().to_vec())))
        })
        .collect()
}

fn parents(op: &Op) -> Vec<&Var> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
        Op::Bmm { a, b, .. } => vec![a, b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::MulConst(a, _)
        | Op::AddConst(a)
        | Op::Tanh(a)
        | Op::Powf(a, _)
        | Op::SafeRecip(a)
        | Op::NormLast(a, _)
        | Op::SumLast(a, _)
        | Op::BcastLast(a, _)
        | Op::SumFirst(a, _)
        | Op::BcastFirst(a, _)
        | Op::Sparse(a, _, _)
        | Op::Reshape(a) => vec![a],
    }
}

fn topo_order(output: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    let mut visited: HashMap<u64, ()> = HashMap::new();
    let mut stack: Vec<(Var, bool)> = vec![(output.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if visited.insert(v.0.id, ()).is_some() || !v.0.requires_grad {
            continue;
        }
        stack.push((v.clone(), true));
        for p in parents(&v.0.op) {
            if p.0.requires_grad && !visited.contains_key(&p.0.id) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

fn node_backward(node: &Var, g: &Var) -> Vec<(Var, Var)> {
    match &node.0.op {
        Op::Leaf => vec![],
        Op::Add(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.clone())],
        Op::Sub(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.neg())],
        Op::Mul(a, b) => vec![(a.clone(), g.mul(b)), (b.clone(), g.mul(a))],
        Op::Scale(a, c) => vec![(a.clone(), g.scale(*c))],
        Op::AddScalar(a) | Op::AddConst(a) => vec![(a.clone(), g.clone())],
        Op::MulConst(a, c) => vec![(a.clone(), g.mul_const(c.clone()))],
        Op::Tanh(a) => {
            let y = node.clone();
            vec![(a.clone(), g.mul(&y.square().neg().add_scalar(1.0)))]
        }
        Op::Powf(a, p) => vec![(a.clone(), g.mul(&a.powf(p - 1.0).scale(*p)))],
        Op::SafeRecip(a) => {
            let r = node.clone();
            vec![(a.clone(), g.mul(&r.square().neg()))]
        }
        Op::NormLast(a, k) => {
            let n = node.clone();
            let coef = g.mul(&n.safe_recip());
            let trailing = &a.shape()[n.shape().len()..];
            debug_assert_eq!(trailing.iter().product::<usize>(), *k);
            vec![(a.clone(), a.mul(&coef.bcast_last(trailing)))]
        }
        Op::SumLast(a, dropped) => vec![(a.clone(), g.bcast_last(dropped))],
        Op::BcastLast(a, k) => vec![(a.clone(), g.sum_last(*k).reshape(a.shape()))],
        Op::SumFirst(a, lead) => vec![(a.clone(), g.bcast_first(lead))],
        Op::BcastFirst(a, n) => vec![(a.clone(), g.sum_first(*n).reshape(a.shape()))],
        Op::Reshape(a) => vec![(a.clone(), g.reshape(a.shape()))],
        Op::Sparse(a, map, adjoint) => {
            let ga = g.sparse_apply(map, !adjoint).reshape(a.shape());
            vec![(a.clone(), ga)]
        }
        // A shared operand's gradient sums over the batch; a batched operand
        // keeps its own batch.
        Op::Bmm { a, b, ta, tb, .. } => {
            let mut out = Vec::with_capacity(2);
            if a.requires_grad() {
                let ab = batch_of(a);
                let ga = if !ta {
                    Var::bmm(g, b, false, !tb, ab)
                } else {
                    Var::bmm(b, g, *tb, true, ab)
                };
                out.push((a.clone(), ga));
            }
            if b.requires_grad() {
                let bb = batch_of(b);
                let gb = if !tb {
                    Var::bmm(a, g, !ta, false, bb)
                } else {
                    Var::bmm(g, a, true, *ta, bb)
                };
                out.push((b.clone(), gb));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn product_rule() {
        let x = Var::param(Tensor::new([2], vec![2.0, 3.0]));
        let y = x.mul(&x).sum();
        let g = grad(&y, &[&x], false);
        assert_eq!(g[0].value().data(), &[4.0, 6.0]);
    }

    #[test]
    fn second_order_through_grad() {
        // f(x) = sum x^3 ; f'(x) = 3x^2 ; d/dx sum(f'(x)) = 6x
        let x = Var::param(Tensor::new([2], vec![1.0, -2.0]));
        let f = x.mul(&x).mul(&x).sum();
        let g = grad(&f, &[&x], true);
        let h = grad(&g[0].sum(), &[&x], false);
        assert_eq!(h[0].value().data(), &[6.0, -12.0]);
    }

    #[test]
    fn bmm_matches_naive_for_all_layouts() {
        let a = Tensor::from_fn([2, 3, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::from_fn([2, 4, 5], |i| (i as f64 * 0.11).cos());
        let c = bmm_value(&a, &b, false, false, Some(2));
        for n in 0..2 {
            for i in 0..3 {
                for j in 0..5 {
                    let want: f64 = (0..4)
                        .map(|k| a.data()[n * 12 + i * 4 + k] * b.data()[n * 20 + k * 5 + j])
                        .sum();
                    assert!(close(c.data()[n * 15 + i * 5 + j], want, 1e-14));
                }
            }
        }
        let summed = bmm_value(&a, &b, false, false, None);
        for idx in 0..15 {
            let want = c.data()[idx] + c.data()[15 + idx];
            assert!(close(summed.data()[idx], want, 1e-14));
        }
    }

    #[test]
    fn bmm_gradients_match_finite_differences() {
        for (ta, tb, batched_a, batched_b, batch) in [
            (false, false, false, true, Some(3)),
            (true, false, false, true, Some(3)),
            (false, true, true, false, Some(3)),
            (true, true, true, true, None),
            (false, false, false, false, None),
            (true, false, false, false, Some(3)),
        ] {
            let shape = |batched: bool, r: usize, c: usize| {
                if batched {
                    vec![3, r, c]
                } else {
                    vec![r, c]
                }
            };
            let (ar, ac) = if ta { (4, 2) } else { (2, 4) };
            let (br, bc) = if tb { (5, 4) } else { (4, 5) };
            let a0 = Tensor::from_fn(shape(batched_a, ar, ac), |i| ((i * 7 % 11) as f64 - 5.0) / 3.0);
            let b0 = Tensor::from_fn(shape(batched_b, br, bc), |i| ((i * 5 % 13) as f64 - 6.0) / 4.0);
            let w = Tensor::from_fn(
                if batch.is_some() { vec![3, 2, 5] } else { vec![2, 5] },
                |i| (i as f64 * 0.3).sin(),
            );
            let f = |a: &Tensor, b: &Tensor| -> f64 {
                bmm_value(a, b, ta, tb, batch)
                    .data()
                    .iter()
                    .zip(w.data())
                    .map(|(x, y)| x * y)
                    .sum()
            };
            let a = Var::param(a0.clone());
            let b = Var::param(b0.clone());
            let out = Var::bmm(&a, &b, ta, tb, batch).mul_const(Rc::new(w.clone())).sum();
            let g = grad(&out, &[&a, &b], false);
            for (which, base, gv) in [(0, &a0, &g[0]), (1, &b0, &g[1])] {
                for i in 0..base.len() {
                    let mut p = base.clone();
                    let mut m = base.clone();
                    p.data_mut()[i] += 1e-6;
                    m.data_mut()[i] -= 1e-6;
                    let fd = if which == 0 {
                        (f(&p, &b0) - f(&m, &b0)) / 2e-6
                    } else {
                        (f(&a0, &p) - f(&a0, &m)) / 2e-6
                    };
                    assert!(
                        close(gv.value().data()[i], fd, 1e-6),
                        "layout {ta} {tb} {batched_a} {batched_b} {batch:?} operand {which}"
                    );
                }
            }
        }
    }

    #[test]
    fn unit_axes_survive_broadcast_gradients() {
        let a = Var::param(Tensor::new([3, 1], vec![1.0, 2.0, 3.0]));
        let y = a.bcast_last(&[1]).bcast_first(&[1]).sum();
        let g = grad(&y, &[&a], false).remove(0);
        assert_eq!(g.shape(), &[3, 1]);
        assert_eq!(g.value().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn no_grad_records_nothing() {
        let x = Var::param(Tensor::scalar(1.0));
        let y = no_grad(|| x.scale(2.0));
        assert!(!y.requires_grad());
        assert!(x.scale(2.0).requires_grad());
    }

    #[test]
    fn norm_gradient_is_zero_at_origin() {
        let x = Var::param(Tensor::zeros([1, 2]));
        let n = x.norm_last(2).sum();
        let g = grad(&n, &[&x], false);
        assert_eq!(g[0].value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn unreached_inputs_get_zero_gradients() {
        let x = Var::param(Tensor::scalar(1.0));
        let y = Var::param(Tensor::new([2], vec![1.0, 2.0]));
        let g = grad(&x.scale(3.0), &[&x, &y], false);
        assert_eq!(g[0].item(), 3.0);
        assert_eq!(g[1].value().data(), &[0.0, 0.0]);
    }
}
