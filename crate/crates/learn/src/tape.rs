//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Scalars are `1×1`
//! matrices. Calling [`Tape::backward`] on a scalar returns the gradient of
//! every recorded node, from which callers pick the leaves they care about.

use ndarray::{Array2, Axis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    ConcatCols(Var, Var),
    SelectRows(Var, Vec<usize>),
    Mean(Var),
    LogMeanExp(Var),
    CrossEntropy(Var, Vec<usize>),
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Array2<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max shift.
pub fn softmax_rows(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v.0]
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.values[v.0][[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].dot(&self.values[b.0]);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.values[row.0].nrows(), 1, "broadcast operand must be a single row");
        let v = &self.values[a.0] + &self.values[row.0];
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a.0] + &self.values[b.0];
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a.0] - &self.values[b.0];
        self.push(v, Op::Sub(a, b))
    }

    /// Entry-wise product of equally shaped operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.values[a.0].dim(), self.values[b.0].dim());
        let v = &self.values[a.0] * &self.values[b.0];
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = &self.values[a.0] * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.values[a.0].mapv(|x| 1.0 - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.values[a.0].mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.values[a.0].mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_rows(&self.values[a.0]);
        self.push(v, Op::Softmax(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.values[a.0].view(), self.values[b.0].view()])
            .expect("operands share a row count");
        self.push(v, Op::ConcatCols(a, b))
    }

    /// Rows of `a` in the order given by `rows` (repeats allowed).
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let v = self.values[a.0].select(Axis(0), rows);
        self.push(v, Op::SelectRows(a, rows.to_vec()))
    }

    /// Mean over all entries.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.values[a.0].mean().expect("mean of an empty matrix");
        self.push(scalar(v), Op::Mean(a))
    }

    /// `log(mean(exp(a)))` over all entries, shifted by the maximum.
    pub fn log_mean_exp(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let m = x.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let v = m + x.mapv(|v| (v - m).exp()).mean().expect("log-mean-exp of an empty matrix").ln();
        self.push(scalar(v), Op::LogMeanExp(a))
    }

    /// Mean cross-entropy (nats) of row-wise softmax(`logits`) against `labels`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let x = &self.values[logits.0];
        assert_eq!(x.nrows(), labels.len());
        let mut total = 0.0;
        for (row, &y) in x.rows().into_iter().zip(labels) {
            let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = m + row.mapv(|v| (v - m).exp()).sum().ln();
            total += lse - row[y];
        }
        let v = total / labels.len() as f64;
        self.push(scalar(v), Op::CrossEntropy(logits, labels.to_vec()))
    }

    /// Gradients of the scalar `out` with respect to every recorded node.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.values[out.0].dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(scalar(1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.values.len(), None);
        Gradients { grads, shapes: self.values.iter().map(Array2::dim).collect() }
    }

    fn propagate(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let val = |v: Var| &self.values[v.0];
        let mut acc = |v: Var, d: Array2<f64>| match &mut grads[v.0] {
            Some(existing) => *existing += &d,
            slot => *slot = Some(d),
        };
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.dot(&val(*b).t()));
                acc(*b, val(*a).t().dot(g));
            }
            Op::AddRow(a, r) => {
                acc(*a, g.clone());
                acc(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g * val(*b));
                acc(*b, g * val(*a));
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::OneMinus(a) => acc(*a, -g),
            Op::Sigmoid(a) => {
                let y = &self.values[i];
                acc(*a, g * &y.mapv(|s| s * (1.0 - s)));
            }
            Op::Relu(a) => acc(*a, g * &val(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 })),
            Op::Softmax(a) => {
                let y = &self.values[i];
                let dot = (g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(*a, y * &(g - &dot));
            }
            Op::ConcatCols(a, b) => {
                let split = val(*a).ncols();
                acc(*a, g.slice(ndarray::s![.., ..split]).to_owned());
                acc(*b, g.slice(ndarray::s![.., split..]).to_owned());
            }
            Op::SelectRows(a, rows) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (src, &dst) in g.rows().into_iter().zip(rows) {
                    let mut target = d.row_mut(dst);
                    target += &src;
                }
                acc(*a, d);
            }
            Op::Mean(a) => {
                let x = val(*a);
                acc(*a, Array2::from_elem(x.dim(), g[[0, 0]] / x.len() as f64));
            }
            Op::LogMeanExp(a) => {
                let x = val(*a);
                let m = x.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let e = x.mapv(|v| (v - m).exp());
                let s = e.sum();
                acc(*a, e * (g[[0, 0]] / s));
            }
            Op::CrossEntropy(logits, labels) => {
                let mut d = softmax_rows(val(*logits));
                for (mut row, &y) in d.rows_mut().into_iter().zip(labels) {
                    row[y] -= 1.0;
                }
                acc(*logits, d * (g[[0, 0]] / labels.len() as f64));
            }
        }
    }
}
