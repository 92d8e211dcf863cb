use std::collections::HashMap;

use super::kernels::{self, elu, sigmoid, LEAKY_SLOPE};
use super::{shape_err, ParamId, ParamStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Max(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConstCol(Var, Vec<f64>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    SumRows(Var),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    SumAll(Var),
    RowDot(Var, Var),
    SegmentSoftmax(Var, Vec<usize>),
    BroadcastRows(Var),
    Elu(Var),
    LeakyRelu(Var),
    Sigmoid(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    Log(Var),
    Square(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Bilinear(Var, Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so gradients can be pulled back through it.
///
/// Every operation validates shapes and rejects non-finite outputs. A tape can
/// run `backward` once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    consumed: bool,
}

fn matrix_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    if t.shape().len() != 2 {
        return Err(shape_err(op, format!("expected a matrix, got {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

// out[k×c] += aᵀ · g where a is r×k and g is r×c
fn mm_tn_acc(out: &mut [f64], a: &[f64], g: &[f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let grow = &g[i * c..(i + 1) * c];
        for (p, &aval) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aval == 0.0 {
                continue;
            }
            for (o, &gv) in out[p * c..(p + 1) * c].iter_mut().zip(grow) {
                *o += aval * gv;
            }
        }
    }
}

// out[r×k] += g · bᵀ where g is r×c and b is k×c
fn mm_nt_acc(out: &mut [f64], g: &[f64], b: &[f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let grow = &g[i * c..(i + 1) * c];
        for p in 0..k {
            let brow = &b[p * c..(p + 1) * c];
            out[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let src = &self.nodes[a.0].value;
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push(name, value, op)
    }

    /// A value that receives no parameter gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.push("constant", value, Op::Leaf)
    }

    /// The current value of a parameter; repeated calls share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var, TensorError> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.push("param", store.value(id).clone(), Op::Param(id))?;
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn param_by_name(&mut self, store: &ParamStore, name: &str) -> Result<Var, TensorError> {
        let id = store.id(name)?;
        self.param(store, id)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, k) = matrix_dims("matmul", self.value(a))?;
        let (k2, c) = matrix_dims("matmul", self.value(b))?;
        if k != k2 {
            return Err(shape_err("matmul", format!("{r}x{k} · {k2}x{c}")));
        }
        let mut out = vec![0.0; r * c];
        kernels::matmul_acc(&mut out, self.value(a).data(), self.value(b).data(), r, k, c);
        self.push("matmul", Tensor::matrix(r, c, out)?, Op::MatMul(a, b))
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("max", a, b, f64::max, Op::Max(a, b))
    }

    /// `a + 1·b` with `b` a single row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("add_row", self.value(a))?;
        if matrix_dims("add_row", self.value(b))? != (1, c) {
            return Err(shape_err("add_row", format!("bias {:?} for {r}x{c}", self.value(b).shape())));
        }
        let mut out = self.value(a).data().to_vec();
        kernels::add_row_bias(&mut out, self.value(b).data());
        self.push("add_row", Tensor::matrix(r, c, out)?, Op::AddRow(a, b))
    }

    /// Scales row `i` of `a` by `s[i]`, with `s` an `r×1` column.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("mul_col", self.value(a))?;
        if matrix_dims("mul_col", self.value(s))? != (r, 1) {
            return Err(shape_err("mul_col", format!("scale {:?} for {r}x{c}", self.value(s).shape())));
        }
        let sv = self.value(s).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for (i, row) in out.chunks_mut(c.max(1)).enumerate() {
            row.iter_mut().for_each(|x| *x *= sv[i]);
        }
        self.push("mul_col", Tensor::matrix(r, c, out)?, Op::MulCol(a, s))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, TensorError> {
        self.map("scale", a, |x| x * k, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Result<Var, TensorError> {
        self.map("add_const", a, |x| x + k, Op::AddConst(a))
    }

    /// Scales row `i` of `a` by the constant `w[i]`.
    pub fn mul_const_col(&mut self, a: Var, w: Vec<f64>) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("mul_const_col", self.value(a))?;
        if w.len() != r {
            return Err(shape_err("mul_const_col", format!("{} weights for {r} rows", w.len())));
        }
        let mut out = self.value(a).data().to_vec();
        for (i, row) in out.chunks_mut(c.max(1)).enumerate() {
            row.iter_mut().for_each(|x| *x *= w[i]);
        }
        self.push("mul_const_col", Tensor::matrix(r, c, out)?, Op::MulConstCol(a, w))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_cols", "no inputs"));
        };
        let (r, _) = matrix_dims("concat_cols", self.value(*first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = matrix_dims("concat_cols", self.value(p))?;
            if pr != r {
                return Err(shape_err("concat_cols", format!("row counts {r} vs {pr}")));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push("concat_cols", Tensor::matrix(r, total, out)?, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("gather_rows", self.value(a))?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(shape_err("gather_rows", format!("row {bad} of {r}")));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(src.row(i));
        }
        self.push("gather_rows", Tensor::matrix(idx.len(), c, out)?, Op::GatherRows(a, idx.to_vec()))
    }

    /// Sums row `e` of `a` into output row `idx[e]` of an `n`-row result.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n: usize) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("scatter_add_rows", self.value(a))?;
        if idx.len() != r {
            return Err(shape_err("scatter_add_rows", format!("{} targets for {r} rows", idx.len())));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err("scatter_add_rows", format!("target {bad} of {n}")));
        }
        let src = self.value(a);
        let mut out = vec![0.0; n * c];
        for (e, &t) in idx.iter().enumerate() {
            for (o, v) in out[t * c..(t + 1) * c].iter_mut().zip(src.row(e)) {
                *o += v;
            }
        }
        self.push("scatter_add_rows", Tensor::matrix(n, c, out)?, Op::ScatterAddRows(a, idx.to_vec()))
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (_, c) = matrix_dims("sum_rows", self.value(a))?;
        let mut out = vec![0.0; c];
        for row in self.value(a).data().chunks(c.max(1)) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        self.push("sum_rows", Tensor::matrix(1, c, out)?, Op::SumRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("mean_rows", self.value(a))?;
        if r == 0 {
            return Err(shape_err("mean_rows", "no rows"));
        }
        let out = kernels::mean_rows(self.value(a).data(), r, c);
        self.push("mean_rows", Tensor::matrix(1, c, out)?, Op::MeanRows(a))
    }

    /// Column-wise maximum over rows; ties go to the lowest row.
    pub fn max_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("max_rows", self.value(a))?;
        if r == 0 {
            return Err(shape_err("max_rows", "no rows"));
        }
        let (out, arg) = kernels::max_rows(self.value(a).data(), r, c);
        self.push("max_rows", Tensor::matrix(1, c, out)?, Op::MaxRows(a, arg))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).data().iter().fold(0.0, |acc, x| acc + x);
        self.push("sum_all", Tensor::matrix(1, 1, vec![s])?, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(shape_err("mean_all", "empty tensor"));
        }
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Per-row inner products, giving an `r×1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, _) = matrix_dims("row_dot", self.value(a))?;
        same_shape("row_dot", self.value(a), self.value(b))?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = (0..r).map(|i| kernels::dot(ta.row(i), tb.row(i))).collect();
        self.push("row_dot", Tensor::matrix(r, 1, out)?, Op::RowDot(a, b))
    }

    /// Softmax of an `E×1` column within each group of rows sharing `segment[e]`.
    pub fn segment_softmax(&mut self, a: Var, segment: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("segment_softmax", self.value(a))?;
        if c != 1 || segment.len() != r {
            return Err(shape_err("segment_softmax", format!("{r}x{c} with {} segment ids", segment.len())));
        }
        let out = kernels::segment_softmax(self.value(a).data(), segment);
        self.push("segment_softmax", Tensor::matrix(r, 1, out)?, Op::SegmentSoftmax(a, segment.to_vec()))
    }

    /// Repeats a single row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("broadcast_rows", self.value(a))?;
        if r != 1 {
            return Err(shape_err("broadcast_rows", format!("expected one row, got {r}")));
        }
        let row = self.value(a).data().to_vec();
        let out = row.iter().copied().cycle().take(n * c).collect();
        self.push("broadcast_rows", Tensor::matrix(n, c, out)?, Op::BroadcastRows(a))
    }

    pub fn elu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("elu", a, elu, Op::Elu(a))
    }

    pub fn leaky_relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("leaky_relu", a, |x| if x > 0.0 { x } else { LEAKY_SLOPE * x }, Op::LeakyRelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        self.map("clamp", a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("log", a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("square", a, |x| x * x, Op::Square(a))
    }

    /// Row-wise normalization with learned `1×c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, TensorError> {
        let (r, c) = matrix_dims("layer_norm", self.value(x))?;
        for p in [gamma, beta] {
            if matrix_dims("layer_norm", self.value(p))? != (1, c) {
                return Err(shape_err("layer_norm", format!("affine {:?} for width {c}", self.value(p).shape())));
            }
        }
        let kernels::LayerNormOut { out, xhat, inv_std } = kernels::layer_norm_rows(
            self.value(x).data(),
            r,
            c,
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        );
        let op = Op::LayerNorm { x, gamma, beta, xhat, inv_std };
        self.push("layer_norm", Tensor::matrix(r, c, out)?, op)
    }

    /// `out[i, f] = u[i]ᵀ · W[f] · v[i]` for `W` shaped `[F, D, D]`.
    pub fn bilinear(&mut self, u: Var, w: Var, v: Var) -> Result<Var, TensorError> {
        let (r, d) = matrix_dims("bilinear", self.value(u))?;
        same_shape("bilinear", self.value(u), self.value(v))?;
        let ws = self.value(w).shape();
        if ws.len() != 3 || ws[1] != d || ws[2] != d {
            return Err(shape_err("bilinear", format!("weight {ws:?} for width {d}")));
        }
        let f = ws[0];
        let out = kernels::bilinear_rows(self.value(u).data(), self.value(w).data(), self.value(v).data(), r, d, f);
        self.push("bilinear", Tensor::matrix(r, f, out)?, Op::Bilinear(u, w, v))
    }

    /// Back-propagates from a scalar `loss`, adding parameter gradients into
    /// `store`. The tape cannot be reused afterwards.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.pull(i, &g, &mut grads, store);
        }
        Ok(())
    }

    fn pull(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>], store: &mut ParamStore) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let dims = |v: Var| {
            let t = &self.nodes[v.0].value;
            (t.rows(), t.cols())
        };
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(grads, &self.nodes, $v)
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                store.grad_mut(*id).data_mut().iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            Op::MatMul(a, b) => {
                let (r, k) = dims(*a);
                let c = dims(*b).1;
                mm_nt_acc(slot!(*a), g, val(*b), r, k, c);
                mm_tn_acc(slot!(*b), val(*a), g, r, k, c);
            }
            Op::Add(a, b) => {
                add_into(slot!(*a), g);
                add_into(slot!(*b), g);
            }
            Op::Sub(a, b) => {
                add_into(slot!(*a), g);
                slot!(*b).iter_mut().zip(g).for_each(|(o, x)| *o -= x);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                slot!(*a).iter_mut().zip(g.iter().zip(vb)).for_each(|(o, (x, y))| *o += x * y);
                slot!(*b).iter_mut().zip(g.iter().zip(va)).for_each(|(o, (x, y))| *o += x * y);
            }
            Op::Max(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let ga = slot!(*a);
                for (k, &x) in g.iter().enumerate() {
                    if va[k] >= vb[k] {
                        ga[k] += x;
                    }
                }
                let gb = slot!(*b);
                for (k, &x) in g.iter().enumerate() {
                    if va[k] < vb[k] {
                        gb[k] += x;
                    }
                }
            }
            Op::AddRow(a, b) => {
                add_into(slot!(*a), g);
                let c = dims(*b).1;
                let gb = slot!(*b);
                for row in g.chunks(c.max(1)) {
                    add_into(gb, row);
                }
            }
            Op::MulCol(a, s) => {
                let c = dims(*a).1;
                let (va, vs) = (val(*a), val(*s));
                let ga = slot!(*a);
                for (k, x) in g.iter().enumerate() {
                    ga[k] += x * vs[k / c];
                }
                let gs = slot!(*s);
                for (k, x) in g.iter().enumerate() {
                    gs[k / c] += x * va[k];
                }
            }
            Op::Scale(a, k) => slot!(*a).iter_mut().zip(g).for_each(|(o, x)| *o += k * x),
            Op::AddConst(a) => add_into(slot!(*a), g),
            Op::MulConstCol(a, w) => {
                let c = dims(*a).1;
                let ga = slot!(*a);
                for (k, x) in g.iter().enumerate() {
                    ga[k] += x * w[k / c];
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = dims(p);
                    let gp = slot!(p);
                    for row in 0..r {
                        add_into(&mut gp[row * c..(row + 1) * c], &g[row * total + offset..row * total + offset + c]);
                    }
                    offset += c;
                }
            }
            Op::GatherRows(a, idx) => {
                let c = dims(*a).1;
                let ga = slot!(*a);
                for (e, &src) in idx.iter().enumerate() {
                    add_into(&mut ga[src * c..(src + 1) * c], &g[e * c..(e + 1) * c]);
                }
            }
            Op::ScatterAddRows(a, idx) => {
                let c = dims(*a).1;
                let ga = slot!(*a);
                for (e, &dst) in idx.iter().enumerate() {
                    add_into(&mut ga[e * c..(e + 1) * c], &g[dst * c..(dst + 1) * c]);
                }
            }
            Op::SumRows(a) => {
                let c = dims(*a).1;
                for row in slot!(*a).chunks_mut(c.max(1)) {
                    add_into(row, g);
                }
            }
            Op::MeanRows(a) => {
                let (r, c) = dims(*a);
                for row in slot!(*a).chunks_mut(c.max(1)) {
                    row.iter_mut().zip(g).for_each(|(o, x)| *o += x / r as f64);
                }
            }
            Op::MaxRows(a, arg) => {
                let c = dims(*a).1;
                let ga = slot!(*a);
                for (j, &r) in arg.iter().enumerate() {
                    ga[r * c + j] += g[j];
                }
            }
            Op::SumAll(a) => slot!(*a).iter_mut().for_each(|o| *o += g[0]),
            Op::RowDot(a, b) => {
                let c = dims(*a).1;
                let (va, vb) = (val(*a), val(*b));
                let ga = slot!(*a);
                for (k, o) in ga.iter_mut().enumerate() {
                    *o += g[k / c] * vb[k];
                }
                let gb = slot!(*b);
                for (k, o) in gb.iter_mut().enumerate() {
                    *o += g[k / c] * va[k];
                }
            }
            Op::SegmentSoftmax(a, seg) => {
                let y = node.value.data();
                let nseg = seg.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; nseg];
                for (e, &s) in seg.iter().enumerate() {
                    dot[s] += y[e] * g[e];
                }
                let ga = slot!(*a);
                for (e, &s) in seg.iter().enumerate() {
                    ga[e] += y[e] * (g[e] - dot[s]);
                }
            }
            Op::BroadcastRows(a) => {
                let c = dims(*a).1;
                let ga = slot!(*a);
                for row in g.chunks(c.max(1)) {
                    add_into(ga, row);
                }
            }
            Op::Elu(a) => {
                let (x, y) = (val(*a), node.value.data());
                let ga = slot!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] * if x[k] > 0.0 { 1.0 } else { y[k] + 1.0 };
                }
            }
            Op::LeakyRelu(a) => {
                let x = val(*a);
                let ga = slot!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] * if x[k] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let ga = slot!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }
            Op::Relu(a) => {
                let x = val(*a);
                let ga = slot!(*a);
                for k in 0..g.len() {
                    if x[k] > 0.0 {
                        ga[k] += g[k];
                    }
                }
            }
            Op::Clamp(a, lo, hi) => {
                let x = val(*a);
                let ga = slot!(*a);
                for k in 0..g.len() {
                    if x[k] >= *lo && x[k] <= *hi {
                        ga[k] += g[k];
                    }
                }
            }
            Op::Log(a) => {
                let x = val(*a);
                let ga = slot!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] / x[k];
                }
            }
            Op::Square(a) => {
                let x = val(*a);
                let ga = slot!(*a);
                for k in 0..g.len() {
                    ga[k] += 2.0 * g[k] * x[k];
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let (r, c) = dims(*x);
                let gam = val(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; r * c];
                let mut dh = vec![0.0; c];
                for i in 0..r {
                    let gi = &g[i * c..(i + 1) * c];
                    let hi = &xhat[i * c..(i + 1) * c];
                    for j in 0..c {
                        dgamma[j] += gi[j] * hi[j];
                        dbeta[j] += gi[j];
                        dh[j] = gi[j] * gam[j];
                    }
                    let sum_dh: f64 = dh.iter().sum();
                    let sum_dh_h: f64 = dh.iter().zip(hi).map(|(a, b)| a * b).sum();
                    let scale = inv_std[i] / c as f64;
                    for j in 0..c {
                        dx[i * c + j] = scale * (c as f64 * dh[j] - sum_dh - hi[j] * sum_dh_h);
                    }
                }
                add_into(slot!(*x), &dx);
                add_into(slot!(*gamma), &dgamma);
                add_into(slot!(*beta), &dbeta);
            }
            Op::Bilinear(u, w, v) => {
                let (r, d) = dims(*u);
                let f = node.value.cols();
                let (vu, vw, vv) = (val(*u), val(*w), val(*v));
                let mut du = vec![0.0; r * d];
                let mut dv = vec![0.0; r * d];
                let mut dw = vec![0.0; f * d * d];
                for i in 0..r {
                    let (ui, vi) = (&vu[i * d..(i + 1) * d], &vv[i * d..(i + 1) * d]);
                    for k in 0..f {
                        let gk = g[i * f + k];
                        if gk == 0.0 {
                            continue;
                        }
                        let wk = &vw[k * d * d..(k + 1) * d * d];
                        let dwk = &mut dw[k * d * d..(k + 1) * d * d];
                        for a in 0..d {
                            let wrow = &wk[a * d..(a + 1) * d];
                            let wv: f64 = wrow.iter().zip(vi).map(|(x, y)| x * y).sum();
                            du[i * d + a] += gk * wv;
                            let gu = gk * ui[a];
                            for b in 0..d {
                                dv[i * d + b] += gu * wrow[b];
                                dwk[a * d + b] += gu * vi[b];
                            }
                        }
                    }
                }
                add_into(slot!(*u), &du);
                add_into(slot!(*v), &dv);
                add_into(slot!(*w), &dw);
            }
        }
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(entries: &[(&str, &[usize], Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, shape, data) in entries {
            s.insert(name, Tensor::new(shape.to_vec(), data.clone()).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn matmul_gradients_by_hand() {
        let mut s = store_with(&[("a", &[1, 2], vec![1.0, 2.0]), ("b", &[2, 1], vec![3.0, 4.0])]);
        let mut t = Tape::new();
        let a = t.param(&s, 0).unwrap();
        let b = t.param(&s, 1).unwrap();
        let y = t.matmul(a, b).unwrap();
        assert_eq!(t.scalar_value(y), 11.0);
        t.backward(y, &mut s).unwrap();
        assert_eq!(s.grad(0).data(), &[3.0, 4.0]);
        assert_eq!(s.grad(1).data(), &[1.0, 2.0]);
    }

    #[test]
    fn gradients_accumulate_linearly() {
        let mut s = store_with(&[("x", &[1, 1], vec![2.0])]);
        for _ in 0..2 {
            let mut t = Tape::new();
            let x = t.param(&s, 0).unwrap();
            let y = t.square(x).unwrap();
            t.backward(y, &mut s).unwrap();
        }
        assert_eq!(s.grad(0).data(), &[8.0]);
    }

    #[test]
    fn backward_twice_is_rejected() {
        let mut s = store_with(&[("x", &[1, 1], vec![2.0])]);
        let mut t = Tape::new();
        let x = t.param(&s, 0).unwrap();
        t.backward(x, &mut s).unwrap();
        assert_eq!(t.backward(x, &mut s), Err(TensorError::TapeConsumed));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut s = store_with(&[("x", &[1, 2], vec![2.0, 1.0])]);
        let mut t = Tape::new();
        let x = t.param(&s, 0).unwrap();
        assert!(matches!(t.backward(x, &mut s), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        let b = t.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        assert!(matches!(t.matmul(a, b), Err(TensorError::Shape { .. })));
        let z = t.constant(Tensor::matrix(1, 1, vec![0.0]).unwrap()).unwrap();
        assert_eq!(t.log(z), Err(TensorError::NonFinite { op: "log" }));
    }

    #[test]
    fn segment_softmax_sums_to_one_per_segment() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(5, 1, vec![1.0, 2.0, 3.0, -1.0, 0.5]).unwrap()).unwrap();
        let y = t.segment_softmax(x, &[0, 0, 1, 1, 1]).unwrap();
        let v = t.value(y).data();
        assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
        assert!((v[2] + v[3] + v[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let mut s = store_with(&[("g", &[1, 4], vec![1.0; 4]), ("b", &[1, 4], vec![0.0; 4])]);
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 4, vec![1.0, 2.0, 3.0, 6.0]).unwrap()).unwrap();
        let g = t.param(&s, 0).unwrap();
        let b = t.param(&s, 1).unwrap();
        let y = t.layer_norm(x, g, b, 1e-5).unwrap();
        let v = t.value(y).data();
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-4);
        let l = t.sum_all(y).unwrap();
        t.backward(l, &mut s).unwrap();
        assert_eq!(s.grad(1).data(), &[1.0; 4]);
    }
}
