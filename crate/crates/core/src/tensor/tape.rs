use rand::Rng;

use super::{softmax, Gradients, ParamId, ParamSet, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Const,
    Param(ParamId),
    Lookup { param: ParamId, row: usize },
    MatVec { w: Var, x: Var },
    MatVecRows { w: Var, rows: Vec<usize>, x: Var },
    MatTVec { w: Var, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<T>),
    AddConst(Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    Log1mExp(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Stack(Vec<Var>),
    Gather { x: Var, idx: Vec<usize> },
    Softmax(Var),
    LogSoftmax { x: Var, probs: Vec<T> },
    CrossEntropy { logits: Var, target: usize, probs: Vec<T> },
    Dot(Var, Var),
    Sum(Var),
    AddAll(Vec<Var>),
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    // `None` for parameter nodes, whose value lives in the parameter set.
    value: Option<Tensor<T>>,
}

/// Record of a forward computation, replayed in reverse by [`Tape::backward`].
///
/// Shape errors inside the primitive ops are programming errors and panic;
/// operations that can fail on data (empty softmax support) return `Result`.
pub struct Tape<'p, T> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
    consumed: bool,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Tape { params, nodes: Vec::new(), param_vars: vec![None; params.len()], consumed: false }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.consumed = false;
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    fn push_vec(&mut self, op: Op<T>, data: Vec<T>) -> Var {
        self.push(op, Tensor::vector(data))
    }

    pub fn tensor(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => self.params.get(*id),
            (_, Some(t)) => t,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn value(&self, v: Var) -> &[T] {
        self.tensor(v).data()
    }

    pub fn scalar(&self, v: Var) -> T {
        let d = self.value(v);
        assert_eq!(d.len(), 1, "scalar() on a value of length {}", d.len());
        d[0]
    }

    fn dim(&self, v: Var) -> usize {
        self.value(v).len()
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Const, t)
    }

    pub fn vector(&mut self, data: Vec<T>) -> Var {
        self.push_vec(Op::Const, data)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.vector(vec![T::zero(); n])
    }

    /// The node for a parameter tensor; created once per tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.consumed = false;
        self.nodes.push(Node { op: Op::Param(id), value: None });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Row `row` of a parameter matrix; gradients scatter back into that row only.
    pub fn lookup(&mut self, param: ParamId, row: usize) -> Var {
        let t = self.params.get(param);
        assert!(row < t.rows(), "row {row} out of range for {}", self.params.name(param));
        let data = t.row(row).to_vec();
        self.push_vec(Op::Lookup { param, row }, data)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (m, n) = {
            let wt = self.tensor(w);
            (wt.rows(), wt.cols())
        };
        assert_eq!(self.dim(x), n, "matvec: matrix has {n} columns, vector has {}", self.dim(x));
        let wd = self.value(w);
        let xd = self.value(x);
        let out: Vec<T> = (0..m).map(|r| dot(&wd[r * n..(r + 1) * n], xd)).collect();
        self.push_vec(Op::MatVec { w, x }, out)
    }

    /// `W[rows] · x`, touching only the selected rows.
    pub fn matvec_rows(&mut self, w: Var, rows: &[usize], x: Var) -> Var {
        let (m, n) = {
            let wt = self.tensor(w);
            (wt.rows(), wt.cols())
        };
        assert_eq!(self.dim(x), n);
        assert!(rows.iter().all(|&r| r < m), "matvec_rows: row out of range");
        let wd = self.value(w);
        let xd = self.value(x);
        let out: Vec<T> = rows.iter().map(|&r| dot(&wd[r * n..(r + 1) * n], xd)).collect();
        self.push_vec(Op::MatVecRows { w, rows: rows.to_vec(), x }, out)
    }

    /// `Wᵀ · x`.
    pub fn matvec_t(&mut self, w: Var, x: Var) -> Var {
        let (m, n) = {
            let wt = self.tensor(w);
            (wt.rows(), wt.cols())
        };
        assert_eq!(self.dim(x), m, "matvec_t: matrix has {m} rows, vector has {}", self.dim(x));
        let wd = self.value(w);
        let xd = self.value(x);
        let mut out = vec![T::zero(); n];
        for r in 0..m {
            let xr = xd[r];
            for (o, &wv) in out.iter_mut().zip(&wd[r * n..(r + 1) * n]) {
                *o += wv * xr;
            }
        }
        self.push_vec(Op::MatTVec { w, x }, out)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "elementwise op on lengths {} and {}", av.len(), bv.len());
        av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push_vec(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push_vec(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push_vec(Op::Mul(a, b), out)
    }

    /// Elementwise product with a constant vector.
    pub fn mul_const(&mut self, x: Var, c: Vec<T>) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), c.len());
        let out = xv.iter().zip(&c).map(|(&a, &b)| a * b).collect();
        self.push_vec(Op::MulConst(x, c), out)
    }

    pub fn add_const(&mut self, x: Var, c: &[T]) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), c.len());
        let out = xv.iter().zip(c).map(|(&a, &b)| a + b).collect();
        self.push_vec(Op::AddConst(x), out)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).iter().map(|&a| a * c).collect();
        self.push_vec(Op::Scale(x, c), out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push_vec(Op::Tanh(x), out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push_vec(Op::Sigmoid(x), out)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.ln()).collect();
        self.push_vec(Op::Ln(x), out)
    }

    /// `ln(1 - exp(x))` for `x < 0`.
    pub fn log1m_exp(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| (-v.exp()).ln_1p()).collect();
        self.push_vec(Op::Log1mExp(x), out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::with_capacity(parts.iter().map(|&p| self.dim(p)).sum());
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        self.push_vec(Op::Concat(parts.to_vec()), out)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x)[start..start + len].to_vec();
        self.push_vec(Op::Slice { x, start }, out)
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack of zero rows");
        let d = self.dim(rows[0]);
        let mut out = Vec::with_capacity(d * rows.len());
        for &r in rows {
            assert_eq!(self.dim(r), d, "stack: ragged rows");
            out.extend_from_slice(self.value(r));
        }
        let t = Tensor::matrix(rows.len(), d, out).expect("stack shape");
        self.push(Op::Stack(rows.to_vec()), t)
    }

    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Var {
        let xv = self.value(x);
        let out = idx.iter().map(|&i| xv[i]).collect();
        self.push_vec(Op::Gather { x, idx: idx.to_vec() }, out)
    }

    pub fn pick(&mut self, x: Var, i: usize) -> Var {
        self.gather(x, &[i])
    }

    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let out = softmax(self.value(x), mask)?;
        Ok(self.push_vec(Op::Softmax(x), out))
    }

    /// Log-probabilities; masked entries hold 0 and receive no gradient.
    pub fn log_softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let probs = softmax(self.value(x), mask)?;
        let lse = super::log_sum_exp(self.value(x), mask)?;
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| if mask.is_none_or(|m| m[i]) { v - lse } else { T::zero() })
            .collect();
        Ok(self.push_vec(Op::LogSoftmax { x, probs }, out))
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, target: usize, mask: Option<&[bool]>) -> Result<Var> {
        let xv = self.value(logits);
        if target >= xv.len() || mask.is_some_and(|m| !m[target]) {
            return Err(Error::Invalid(format!("target {target} outside the support of {} classes", xv.len())));
        }
        let probs = softmax(xv, mask)?;
        let lse = super::log_sum_exp(xv, mask)?;
        let loss = lse - xv[target];
        Ok(self.push_vec(Op::CrossEntropy { logits, target, probs }, vec![loss]))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len());
        let out = dot(av, bv);
        self.push_vec(Op::Dot(a, b), vec![out])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().copied().sum();
        self.push_vec(Op::Sum(x), vec![out])
    }

    /// Sum of scalar nodes.
    pub fn add_all(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "add_all of nothing");
        let total = xs.iter().map(|&x| self.scalar(x)).sum();
        self.push_vec(Op::AddAll(xs.to_vec()), vec![total])
    }

    /// Inverted dropout: training mode scales kept units by `1/(1-rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: Option<&mut R>) -> Var {
        let Some(rng) = rng else { return x };
        if rate <= 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.dim(x))
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        self.mul_const(x, mask)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::BackwardTwice);
        }
        let loss_val = self.value(loss);
        if loss_val.len() != 1 {
            return Err(Error::Shape(format!("backward from a value of length {}", loss_val.len())));
        }
        if !loss_val[0].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        self.consumed = true;

        let mut out = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    let dst = out.slot_mut(*id);
                    for (d, &s) in dst.iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                Op::Lookup { param, row } => {
                    let cols = self.params.get(*param).cols();
                    let dst = out.slot_mut(*param);
                    for (d, &s) in dst[row * cols..(row + 1) * cols].iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                Op::MatVec { w, x } => {
                    let wt = self.tensor(*w);
                    let (m, n) = (wt.rows(), wt.cols());
                    let wd = wt.data();
                    let xd = self.value(*x);
                    let gw = acc_slot(&mut grads, *w, m * n);
                    for r in 0..m {
                        let gr = g[r];
                        if gr == T::zero() {
                            continue;
                        }
                        for (d, &xv) in gw[r * n..(r + 1) * n].iter_mut().zip(xd) {
                            *d += gr * xv;
                        }
                    }
                    let gx = acc_slot(&mut grads, *x, n);
                    for r in 0..m {
                        let gr = g[r];
                        if gr == T::zero() {
                            continue;
                        }
                        for (d, &wv) in gx.iter_mut().zip(&wd[r * n..(r + 1) * n]) {
                            *d += gr * wv;
                        }
                    }
                }
                Op::MatVecRows { w, rows, x } => {
                    let wt = self.tensor(*w);
                    let (m, n) = (wt.rows(), wt.cols());
                    let wd = wt.data();
                    let xd = self.value(*x);
                    let gw = acc_slot(&mut grads, *w, m * n);
                    for (k, &r) in rows.iter().enumerate() {
                        for (d, &xv) in gw[r * n..(r + 1) * n].iter_mut().zip(xd) {
                            *d += g[k] * xv;
                        }
                    }
                    let gx = acc_slot(&mut grads, *x, n);
                    for (k, &r) in rows.iter().enumerate() {
                        for (d, &wv) in gx.iter_mut().zip(&wd[r * n..(r + 1) * n]) {
                            *d += g[k] * wv;
                        }
                    }
                }
                Op::MatTVec { w, x } => {
                    let wt = self.tensor(*w);
                    let (m, n) = (wt.rows(), wt.cols());
                    let wd = wt.data();
                    let xd = self.value(*x);
                    let gw = acc_slot(&mut grads, *w, m * n);
                    for r in 0..m {
                        for (d, &gc) in gw[r * n..(r + 1) * n].iter_mut().zip(&g) {
                            *d += xd[r] * gc;
                        }
                    }
                    let gx = acc_slot(&mut grads, *x, m);
                    for (r, d) in gx.iter_mut().enumerate() {
                        *d += dot(&wd[r * n..(r + 1) * n], &g);
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc_slot(&mut grads, *a, g.len()), &g);
                    add_into(acc_slot(&mut grads, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(acc_slot(&mut grads, *a, g.len()), &g);
                    let gb = acc_slot(&mut grads, *b, g.len());
                    for (d, &s) in gb.iter_mut().zip(&g) {
                        *d -= s;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga: Vec<T> = g.iter().zip(bv).map(|(&s, &y)| s * y).collect();
                    let gb: Vec<T> = g.iter().zip(av).map(|(&s, &x)| s * x).collect();
                    add_into(acc_slot(&mut grads, *a, g.len()), &ga);
                    add_into(acc_slot(&mut grads, *b, g.len()), &gb);
                }
                Op::MulConst(x, c) => {
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for ((d, &s), &cv) in gx.iter_mut().zip(&g).zip(c) {
                        *d += s * cv;
                    }
                }
                Op::AddConst(x) => add_into(acc_slot(&mut grads, *x, g.len()), &g),
                Op::Scale(x, c) => {
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for (d, &s) in gx.iter_mut().zip(&g) {
                        *d += s * *c;
                    }
                }
                Op::Tanh(x) => {
                    let y = node.value.as_ref().unwrap().data();
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for ((d, &s), &yv) in gx.iter_mut().zip(&g).zip(y) {
                        *d += s * (T::one() - yv * yv);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = node.value.as_ref().unwrap().data();
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for ((d, &s), &yv) in gx.iter_mut().zip(&g).zip(y) {
                        *d += s * yv * (T::one() - yv);
                    }
                }
                Op::Ln(x) => {
                    let xv = self.value(*x);
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for ((d, &s), &v) in gx.iter_mut().zip(&g).zip(xv) {
                        *d += s / v;
                    }
                }
                Op::Log1mExp(x) => {
                    let xv = self.value(*x);
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for ((d, &s), &v) in gx.iter_mut().zip(&g).zip(xv) {
                        // d/dx ln(1 - e^x) = -1 / (e^{-x} - 1)
                        *d -= s / (-v).exp_m1();
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.dim(p);
                        add_into(acc_slot(&mut grads, p, n), &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.dim(*x);
                    let gx = acc_slot(&mut grads, *x, n);
                    add_into(&mut gx[*start..*start + g.len()], &g);
                }
                Op::Stack(rows) => {
                    let d = self.dim(rows[0]);
                    for (k, &r) in rows.iter().enumerate() {
                        add_into(acc_slot(&mut grads, r, d), &g[k * d..(k + 1) * d]);
                    }
                }
                Op::Gather { x, idx } => {
                    let n = self.dim(*x);
                    let gx = acc_slot(&mut grads, *x, n);
                    for (&i, &s) in idx.iter().zip(&g) {
                        gx[i] += s;
                    }
                }
                Op::Softmax(x) => {
                    let y = node.value.as_ref().unwrap().data();
                    let inner: T = g.iter().zip(y).map(|(&s, &p)| s * p).sum();
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for ((d, &s), &p) in gx.iter_mut().zip(&g).zip(y) {
                        *d += p * (s - inner);
                    }
                }
                Op::LogSoftmax { x, probs } => {
                    // Masked entries have zero probability; their incoming
                    // gradient is ignored.
                    let total: T = g.iter().zip(probs).filter(|(_, &p)| p > T::zero()).map(|(&s, _)| s).sum();
                    let gx = acc_slot(&mut grads, *x, g.len());
                    for ((d, &s), &p) in gx.iter_mut().zip(&g).zip(probs) {
                        if p > T::zero() {
                            *d += s - p * total;
                        }
                    }
                }
                Op::CrossEntropy { logits, target, probs } => {
                    let s = g[0];
                    let gx = acc_slot(&mut grads, *logits, probs.len());
                    for (i, (d, &p)) in gx.iter_mut().zip(probs).enumerate() {
                        let t = if i == *target { T::one() } else { T::zero() };
                        *d += s * (p - t);
                    }
                }
                Op::Dot(a, b) => {
                    let s = g[0];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga: Vec<T> = bv.iter().map(|&y| s * y).collect();
                    let gb: Vec<T> = av.iter().map(|&x| s * x).collect();
                    add_into(acc_slot(&mut grads, *a, ga.len()), &ga);
                    add_into(acc_slot(&mut grads, *b, gb.len()), &gb);
                }
                Op::Sum(x) => {
                    let n = self.dim(*x);
                    let gx = acc_slot(&mut grads, *x, n);
                    for d in gx.iter_mut() {
                        *d += g[0];
                    }
                }
                Op::AddAll(xs) => {
                    for &x in xs {
                        acc_slot(&mut grads, x, 1)[0] += g[0];
                    }
                }
            }
        }
        Ok(out)
    }
}

fn acc_slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, n: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); n])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(values: Vec<f64>) -> (ParamSet<f64>, ParamId) {
        let mut ps = ParamSet::new();
        let id = ps.insert("x", Tensor::vector(values));
        (ps, id)
    }

    #[test]
    fn tanh_sum_gradient_at_zero_is_ones() {
        let (ps, id) = single(vec![0.0; 4]);
        let mut tape = Tape::new(&ps);
        let x = tape.param(id);
        let y = tape.tanh(x);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.dense(id), vec![1.0; 4]);
    }

    #[test]
    fn uniform_cross_entropy_gradient() {
        let k = 5;
        let (ps, id) = single(vec![0.3; k]);
        let mut tape = Tape::new(&ps);
        let x = tape.param(id);
        let loss = tape.cross_entropy(x, 2, None).unwrap();
        assert!((tape.scalar(loss) - (k as f64).ln()).abs() < 1e-12);
        let g = tape.backward(loss).unwrap().dense(id);
        for (i, v) in g.iter().enumerate() {
            let want = if i == 2 { 1.0 / k as f64 - 1.0 } else { 1.0 / k as f64 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_twice_is_rejected() {
        let (ps, id) = single(vec![1.0]);
        let mut tape = Tape::new(&ps);
        let x = tape.param(id);
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::BackwardTwice)));
        let again = tape.scale(loss, 2.0);
        assert!(tape.backward(again).is_ok());
    }

    #[test]
    fn unreachable_parameter_has_zero_gradient() {
        let mut ps = ParamSet::new();
        let a = ps.insert("a", Tensor::vector(vec![1.0f64, 2.0]));
        let b = ps.insert("b", Tensor::vector(vec![3.0f64]));
        let mut tape = Tape::new(&ps);
        let x = tape.param(a);
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.dense(b), vec![0.0]);
        assert!(!g.is_nonzero(b));
    }

    #[test]
    fn lookup_scatters_into_one_row() {
        let mut ps = ParamSet::new();
        let e = ps.insert("e", Tensor::matrix(3, 2, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let mut tape = Tape::new(&ps);
        let r = tape.lookup(e, 1);
        assert_eq!(tape.value(r), &[3.0, 4.0]);
        let r2 = tape.lookup(e, 1);
        let s = tape.add(r, r2);
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap().dense(e);
        assert_eq!(g, vec![0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn masked_log_softmax_ignores_masked_entries() {
        let (ps, id) = single(vec![1.0, 2.0, 3.0]);
        let mut tape = Tape::new(&ps);
        let x = tape.param(id);
        let mask = [true, false, true];
        let ls = tape.log_softmax(x, Some(&mask)).unwrap();
        let v = tape.value(ls).to_vec();
        assert_eq!(v[1], 0.0);
        let lse = (1f64.exp() + 3f64.exp()).ln();
        assert!((v[0] - (1.0 - lse)).abs() < 1e-12);
        let loss = tape.sum(ls);
        let g = tape.backward(loss).unwrap().dense(id);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn dropout_identity_without_rng() {
        let (ps, id) = single(vec![1.0, 2.0]);
        let mut tape = Tape::new(&ps);
        let x = tape.param(id);
        let y = tape.dropout::<ChaCha8Rng>(x, 0.2, None);
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let (ps, id) = single(vec![1.5; 1000]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut total = 0.0;
        let mut count = 0usize;
        let mut tape = Tape::new(&ps);
        let x = tape.param(id);
        for _ in 0..100 {
            let y = tape.dropout(x, 0.2, Some(&mut rng));
            total += tape.value(y).iter().sum::<f64>();
            count += 1000;
        }
        let mean = total / count as f64;
        assert!((mean - 1.5).abs() / 1.5 < 0.01, "mean {mean}");
    }
}
