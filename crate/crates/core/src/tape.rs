//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value is a 2-D array; scalars are `1 x 1`. A [`Tape`] records the
//! forward computation and [`Tape::backward`] returns gradients for every
//! recorded value that depends on a parameter.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::losses::{self, LossError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Transpose(Var),
    RmsNorm { x: Var, gain: Var, inv_rms: Vec<f64> },
    CausalSoftmax(Var),
    GatherRows { table: Var, rows: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    WeightedSum(Vec<(Var, f64)>),
    /// Scalar with precomputed local gradients w.r.t. each input.
    Reduced { inputs: Vec<Var>, local: Vec<Array2<f64>> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, like: &Array2<f64>) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(like.raw_dim()))
    }
}

const RMS_EPS: f64 = 1e-5;

fn accumulate(slot: &mut Option<Array2<f64>>, delta: Array2<f64>) {
    match slot {
        Some(g) => *g += &delta,
        None => *slot = Some(delta),
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

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a trainable value.
    pub fn param(&mut self, value: &Array2<f64>) -> Var {
        self.push(value.clone(), Op::Leaf, true)
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let rg = self.rg(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds a `1 x m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        let rg = self.rg(&[a, row]);
        self.push(value, Op::AddRow(a, row), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let rg = self.rg(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let rg = self.rg(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Row-wise RMS normalization with a learned `1 x m` gain.
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Var {
        let xv = self.value(x);
        let m = xv.ncols() as f64;
        let inv_rms: Vec<f64> = xv
            .rows()
            .into_iter()
            .map(|r| 1.0 / (r.dot(&r) / m + RMS_EPS).sqrt())
            .collect();
        let mut value = xv.clone();
        for (mut row, r) in value.rows_mut().into_iter().zip(&inv_rms) {
            row *= *r;
        }
        value *= self.value(gain);
        let rg = self.rg(&[x, gain]);
        self.push(value, Op::RmsNorm { x, gain, inv_rms }, rg)
    }

    /// Row softmax of a square score matrix with future positions masked out.
    pub fn causal_softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for (i, mut row) in value.rows_mut().into_iter().enumerate() {
            let max = row.slice(s![..=i]).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut sum = 0.0;
            for (j, x) in row.iter_mut().enumerate() {
                if j <= i {
                    *x = (*x - max).exp();
                    sum += *x;
                } else {
                    *x = 0.0;
                }
            }
            row.slice_mut(s![..=i]).mapv_inplace(|x| x / sum);
        }
        let rg = self.rg(&[a]);
        self.push(value, Op::CausalSoftmax(a), rg)
    }

    /// Selects rows of `table` (embedding lookup, row pooling).
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Var {
        let value = self.value(table).select(Axis(0), rows);
        let rg = self.rg(&[table]);
        self.push(value, Op::GatherRows { table, rows: rows.to_vec() }, rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        let rg = self.rg(&[x]);
        self.push(value, Op::SliceCols { x, start }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = concatenate(Axis(1), &views).expect("row counts agree");
        let rg = self.rg(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = concatenate(Axis(0), &views).expect("column counts agree");
        let rg = self.rg(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Column means as a `1 x m` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = av.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let rg = self.rg(&[a]);
        self.push(value, Op::MeanRows(a), rg)
    }

    /// `Σ coeff_i · x_i` over `1 x 1` scalars.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total: f64 = terms.iter().map(|(v, c)| c * self.scalar(*v)).sum();
        let vars: Vec<Var> = terms.iter().map(|(v, _)| *v).collect();
        let rg = self.rg(&vars);
        self.push(Array2::from_elem((1, 1), total), Op::WeightedSum(terms.to_vec()), rg)
    }

    fn reduced(&mut self, value: f64, inputs: Vec<Var>, local: Vec<Array2<f64>>) -> Var {
        let rg = self.rg(&inputs);
        self.push(Array2::from_elem((1, 1), value), Op::Reduced { inputs, local }, rg)
    }

    /// Masked next-token cross-entropy over `[T, V]` logits.
    pub fn lm_loss(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var, LossError> {
        let (value, grad) = losses::lm_loss_grad(self.value(logits).view(), targets, mask)?;
        Ok(self.reduced(value, vec![logits], vec![grad]))
    }

    /// Node correctness BCE over `[B, N]` logits.
    pub fn node_loss(
        &mut self,
        logits: Var,
        labels: ArrayView2<f64>,
        mask: ArrayView2<bool>,
    ) -> Result<Var, LossError> {
        let (value, grad) = losses::node_loss_grad(self.value(logits).view(), labels, mask)?;
        Ok(self.reduced(value, vec![logits], vec![grad]))
    }

    /// Margin ranking loss over `[N, 1]` positive and negative scores.
    pub fn contrastive_loss(&mut self, pos: Var, neg: Var) -> Result<Var, LossError> {
        let p: Vec<f64> = self.value(pos).iter().copied().collect();
        let n: Vec<f64> = self.value(neg).iter().copied().collect();
        let (value, gp, gn) = losses::contrastive_loss_grad(&p, &n)?;
        let shape = self.value(pos).raw_dim();
        let gp = Array2::from_shape_vec(shape, gp).expect("same length");
        let gn = Array2::from_shape_vec(self.value(neg).raw_dim(), gn).expect("same length");
        Ok(self.reduced(value, vec![pos, neg], vec![gp, gn]))
    }

    /// Mean squared distance between paired `[N, P]` embeddings.
    pub fn alignment_loss(&mut self, z_dec: Var, z_sol: Var) -> Result<Var, LossError> {
        let (value, gd, gs) =
            losses::alignment_loss_grad(self.value(z_dec).view(), self.value(z_sol).view())?;
        Ok(self.reduced(value, vec![z_dec, z_sol], vec![gd, gs]))
    }

    /// Gradients of the scalar `root` with respect to every recorded value.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones(self.value(root).raw_dim()));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let wants = |v: &Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if wants(a) {
                        accumulate(&mut grads[a.0], g.dot(&self.value(*b).t()));
                    }
                    if wants(b) {
                        accumulate(&mut grads[b.0], self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if wants(a) {
                        accumulate(&mut grads[a.0], g.dot(self.value(*b)));
                    }
                    if wants(b) {
                        accumulate(&mut grads[b.0], g.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if wants(a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if wants(b) {
                        accumulate(&mut grads[b.0], g.clone());
                    }
                }
                Op::AddRow(a, row) => {
                    if wants(row) {
                        accumulate(&mut grads[row.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if wants(a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                }
                Op::Scale(a, f) => {
                    if wants(a) {
                        accumulate(&mut grads[a.0], &g * *f);
                    }
                }
                Op::Relu(a) => {
                    if wants(a) {
                        let mut d = g.clone();
                        d.zip_mut_with(self.value(*a), |d, &x| {
                            if x <= 0.0 {
                                *d = 0.0
                            }
                        });
                        accumulate(&mut grads[a.0], d);
                    }
                }
                Op::Transpose(a) => {
                    if wants(a) {
                        accumulate(&mut grads[a.0], g.t().to_owned());
                    }
                }
                Op::RmsNorm { x, gain, inv_rms } => {
                    let xv = self.value(*x);
                    let gv = self.value(*gain);
                    let m = xv.ncols() as f64;
                    if wants(gain) {
                        let mut dgain = Array2::<f64>::zeros(gv.raw_dim());
                        for ((gr, xr), r) in g.rows().into_iter().zip(xv.rows()).zip(inv_rms) {
                            let mut row = dgain.row_mut(0);
                            row.scaled_add(*r, &(&gr * &xr));
                        }
                        accumulate(&mut grads[gain.0], dgain);
                    }
                    if wants(x) {
                        let mut dx = Array2::<f64>::zeros(xv.raw_dim());
                        for (((mut dr, gr), xr), r) in dx
                            .rows_mut()
                            .into_iter()
                            .zip(g.rows())
                            .zip(xv.rows())
                            .zip(inv_rms)
                        {
                            let gg = &gr * &gv.row(0);
                            let dot = gg.dot(&xr);
                            dr.assign(&(&gg * *r - &(&xr * (r * r * r * dot / m))));
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::CausalSoftmax(a) => {
                    if wants(a) {
                        let p = &node.value;
                        let mut d = Array2::<f64>::zeros(p.raw_dim());
                        for ((mut dr, pr), gr) in d.rows_mut().into_iter().zip(p.rows()).zip(g.rows()) {
                            let inner = pr.dot(&gr);
                            for ((dv, &pv), &gv) in dr.iter_mut().zip(pr).zip(gr) {
                                *dv = pv * (gv - inner);
                            }
                        }
                        accumulate(&mut grads[a.0], d);
                    }
                }
                Op::GatherRows { table, rows } => {
                    if wants(table) {
                        let mut d = Array2::<f64>::zeros(self.value(*table).raw_dim());
                        for (gr, &r) in g.rows().into_iter().zip(rows) {
                            let mut target = d.row_mut(r);
                            target += &gr;
                        }
                        accumulate(&mut grads[table.0], d);
                    }
                }
                Op::SliceCols { x, start } => {
                    if wants(x) {
                        let mut d = Array2::<f64>::zeros(self.value(*x).raw_dim());
                        d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                        accumulate(&mut grads[x.0], d);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if wants(p) {
                            accumulate(&mut grads[p.0], g.slice(s![.., offset..offset + w]).to_owned());
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        if wants(p) {
                            accumulate(&mut grads[p.0], g.slice(s![offset..offset + h, ..]).to_owned());
                        }
                        offset += h;
                    }
                }
                Op::MeanRows(a) => {
                    if wants(a) {
                        let av = self.value(*a);
                        let n = av.nrows() as f64;
                        let row = g.row(0).mapv(|x| x / n);
                        let d = Array2::from_shape_fn(av.raw_dim(), |(_, j)| row[j]);
                        accumulate(&mut grads[a.0], d);
                    }
                }
                Op::WeightedSum(terms) => {
                    let up = g[[0, 0]];
                    for (v, c) in terms {
                        if wants(v) {
                            accumulate(&mut grads[v.0], Array2::from_elem((1, 1), up * c));
                        }
                    }
                }
                Op::Reduced { inputs, local } => {
                    let up = g[[0, 0]];
                    for (v, l) in inputs.iter().zip(local) {
                        if wants(v) {
                            accumulate(&mut grads[v.0], l * up);
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

/// Largest relative discrepancy between reverse-mode gradients of `build`
/// and central differences with step `h`, over every entry of every input.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn max_gradient_error(inputs: &[Array2<f64>], build: impl Fn(&mut Tape, &[Var]) -> Var, h: f64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x)).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out);
    let eval = |xs: &[Array2<f64>]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.param(x)).collect();
        let o = build(&mut t, &vs);
        t.scalar(o)
    };
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], x);
        for (idx, &orig) in x.indexed_iter() {
            probe[k][idx] = orig + h;
            let plus = eval(&probe);
            probe[k][idx] = orig - h;
            let minus = eval(&probe);
            probe[k][idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
    }
    worst
}
