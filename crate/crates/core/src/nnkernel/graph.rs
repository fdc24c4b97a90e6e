use std::collections::HashMap;

use rand::Rng as _;

use super::lstm::{lstm_backward, lstm_forward, LstmCache, LstmWeights};
use super::scalar::{axpy, matmul};
use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        /// im2col buffer `[c_in*width, l_out]`
        cols: Vec<T>,
    },
    Relu(Var),
    Dropout {
        x: Var,
        /// 0 or 1/(1-p) per element
        mask: Vec<T>,
    },
    SumSpans {
        x: Var,
        spans: Vec<(usize, usize)>,
    },
    MaxSpans {
        x: Var,
        /// Winning frame per (token, channel).
        argmax: Vec<usize>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Lstm {
        x: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        h0: Option<Var>,
        c0: Option<Var>,
        cache: LstmCache<T>,
    },
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<T>,
        count: usize,
    },
    Dot {
        x: Var,
        weights: Vec<T>,
    },
    WeightedSum {
        terms: Vec<(Var, T)>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Conv1d { .. } => "conv1d",
            Op::Relu(_) => "relu",
            Op::Dropout { .. } => "dropout",
            Op::SumSpans { .. } => "sum_over_span",
            Op::MaxSpans { .. } => "max_over_span",
            Op::Embedding { .. } => "embedding_lookup",
            Op::Concat { .. } => "concat",
            Op::Linear { .. } => "linear",
            Op::Lstm { .. } => "lstm",
            Op::SoftmaxXent { .. } => "softmax_xent",
            Op::Dot { .. } => "dot",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

struct Node<T> {
    shape: Vec<usize>,
    /// Empty for parameter nodes, whose value lives in the store.
    value: Vec<T>,
    op: Op<T>,
}

/// Tape of operations over a borrowed parameter store.
pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

fn check_finite<T: Scalar>(op: &'static str, stage: &'static str, v: &[T]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op, stage })
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.params.get(id).data,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor {
            shape: self.shape(v).to_vec(),
            data: self.value(v).to_vec(),
        }
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>) -> Result<Var> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        check_finite(op.name(), "forward", &value)?;
        self.nodes.push(Node { shape, value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant leaf. Gradients are still reported for it.
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t.shape, t.data, Op::Input)
    }

    /// Parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let shape = self.params.get(id).shape.clone();
        self.nodes.push(Node {
            shape,
            value: Vec::new(),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [a, b] => Ok((a, b)),
            ref s => Err(Error::shape(op, format!("expected a 2-d tensor, got shape {s:?}"))),
        }
    }

    /// Strided 1-D cross-correlation. `x: [c_in, len]`,
    /// `w: [c_out, c_in, width]`, `b: [c_out]` → `[c_out, len']` with
    /// `len' = (len + 2*pad - width) / stride + 1`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        const OP: &str = "conv1d";
        let (c_in, len) = self.dims2(OP, x)?;
        let (c_out, wc_in, width) = match *self.shape(w) {
            [a, b, c] => (a, b, c),
            ref s => return Err(Error::shape(OP, format!("kernel must be 3-d, got {s:?}"))),
        };
        if wc_in != c_in {
            return Err(Error::shape(OP, format!("input has {c_in} channels, kernel expects {wc_in}")));
        }
        if self.shape(b) != [c_out] {
            return Err(Error::shape(OP, format!("bias shape {:?} != [{c_out}]", self.shape(b))));
        }
        if stride == 0 {
            return Err(Error::shape(OP, "stride must be positive"));
        }
        if len + 2 * pad < width {
            return Err(Error::shape(
                OP,
                format!("input length {len} with padding {pad} is shorter than kernel width {width}"),
            ));
        }
        let l_out = (len + 2 * pad - width) / stride + 1;
        let xv = self.value(x);
        let rows = c_in * width;
        let mut cols = vec![T::zero(); rows * l_out];
        for c in 0..c_in {
            let xrow = &xv[c * len..(c + 1) * len];
            for k in 0..width {
                let dst = &mut cols[(c * width + k) * l_out..(c * width + k + 1) * l_out];
                for (j, d) in dst.iter_mut().enumerate() {
                    let pos = j * stride + k;
                    if pos >= pad && pos - pad < len {
                        *d = xrow[pos - pad];
                    }
                }
            }
        }
        let mut out = vec![T::zero(); c_out * l_out];
        let bv = self.value(b);
        for (o, row) in out.chunks_mut(l_out).enumerate() {
            row.fill(bv[o]);
        }
        matmul(self.value(w), false, &cols, false, &mut out, c_out, rows, l_out, true);
        self.push(
            vec![c_out, l_out],
            out,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        self.push(self.shape(x).to_vec(), out, Op::Relu(x))
    }

    /// Inverted dropout: zero each element with probability `p`, scale the
    /// survivors by `1/(1-p)`. Callers skip this op at evaluation time.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::shape("dropout", format!("probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push(self.shape(x).to_vec(), out, Op::Dropout { x, mask })
    }

    fn check_spans(op: &'static str, spans: &[(usize, usize)], frames: usize) -> Result<()> {
        for &(i, j) in spans {
            if i >= j {
                return Err(Error::shape(op, format!("empty span [{i}, {j})")));
            }
            if j > frames {
                return Err(Error::shape(op, format!("span [{i}, {j}) exceeds {frames} frames")));
            }
        }
        Ok(())
    }

    /// Sum frame columns of `x: [channels, frames]` over each `[i, j)` span,
    /// giving `[spans, channels]`.
    pub fn sum_over_spans(&mut self, x: Var, spans: &[(usize, usize)]) -> Result<Var> {
        const OP: &str = "sum_over_span";
        let (ch, k) = self.dims2(OP, x)?;
        Self::check_spans(OP, spans, k)?;
        let xv = self.value(x);
        let mut out = vec![T::zero(); spans.len() * ch];
        for (t, &(i, j)) in spans.iter().enumerate() {
            for c in 0..ch {
                out[t * ch + c] = xv[c * k + i..c * k + j].iter().copied().sum();
            }
        }
        self.push(
            vec![spans.len(), ch],
            out,
            Op::SumSpans {
                x,
                spans: spans.to_vec(),
            },
        )
    }

    /// Max over each span instead of the sum.
    pub fn max_over_spans(&mut self, x: Var, spans: &[(usize, usize)]) -> Result<Var> {
        const OP: &str = "max_over_span";
        let (ch, k) = self.dims2(OP, x)?;
        Self::check_spans(OP, spans, k)?;
        let xv = self.value(x);
        let mut out = vec![T::zero(); spans.len() * ch];
        let mut argmax = vec![0; spans.len() * ch];
        for (t, &(i, j)) in spans.iter().enumerate() {
            for c in 0..ch {
                let row = &xv[c * k..(c + 1) * k];
                let mut best = i;
                for f in i + 1..j {
                    if row[f] > row[best] {
                        best = f;
                    }
                }
                out[t * ch + c] = row[best];
                argmax[t * ch + c] = best;
            }
        }
        self.push(vec![spans.len(), ch], out, Op::MaxSpans { x, argmax })
    }

    /// Rows of `table: [vocab, dim]` → `[ids, dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        const OP: &str = "embedding_lookup";
        let (v, d) = self.dims2(OP, table)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape(OP, format!("id {bad} out of range for vocabulary of {v}")));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        self.push(
            vec![ids.len(), d],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Row-wise concatenation `[m, da] ++ [m, db]` → `[m, da+db]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        const OP: &str = "concat";
        let (ma, da) = self.dims2(OP, a)?;
        let (mb, db) = self.dims2(OP, b)?;
        if ma != mb {
            return Err(Error::shape(OP, format!("row counts differ: {ma} vs {mb}")));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(ma * (da + db));
        for r in 0..ma {
            out.extend_from_slice(&av[r * da..(r + 1) * da]);
            out.extend_from_slice(&bv[r * db..(r + 1) * db]);
        }
        self.push(vec![ma, da + db], out, Op::Concat { a, b })
    }

    /// `x: [m, in]`, `w: [out, in]`, `b: [out]` → `x wᵀ + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        const OP: &str = "linear";
        let (m, d_in) = self.dims2(OP, x)?;
        let (d_out, w_in) = self.dims2(OP, w)?;
        if w_in != d_in || self.shape(b) != [d_out] {
            return Err(Error::shape(
                OP,
                format!("x {:?}, w {:?}, b {:?}", self.shape(x), self.shape(w), self.shape(b)),
            ));
        }
        let mut out = vec![T::zero(); m * d_out];
        let bv = self.value(b);
        for row in out.chunks_mut(d_out) {
            row.copy_from_slice(bv);
        }
        matmul(self.value(x), false, self.value(w), true, &mut out, m, d_in, d_out, true);
        self.push(vec![m, d_out], out, Op::Linear { x, w, b })
    }

    /// One LSTM direction over `x: [steps, input]`. Weights:
    /// `w_ih: [4H, input]`, `w_hh: [4H, H]`, `bias: [4H]`, gate order
    /// input, forget, cell, output. Optional initial states are `[H]`.
    /// Output `[steps, H]` is indexed by time in both directions.
    #[allow(clippy::too_many_arguments)]
    pub fn lstm(
        &mut self,
        x: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        h0: Option<Var>,
        c0: Option<Var>,
        reverse: bool,
    ) -> Result<Var> {
        const OP: &str = "lstm";
        let (steps, d_in) = self.dims2(OP, x)?;
        let (g4, h) = self.dims2(OP, w_hh)?;
        if g4 != 4 * h || self.shape(w_ih) != [4 * h, d_in] || self.shape(bias) != [4 * h] {
            return Err(Error::shape(
                OP,
                format!(
                    "x {:?}, w_ih {:?}, w_hh {:?}, bias {:?}",
                    self.shape(x),
                    self.shape(w_ih),
                    self.shape(w_hh),
                    self.shape(bias)
                ),
            ));
        }
        if steps == 0 {
            return Err(Error::shape(OP, "empty sequence"));
        }
        for s in [h0, c0].into_iter().flatten() {
            if self.shape(s) != [h] {
                return Err(Error::shape(OP, format!("initial state shape {:?} != [{h}]", self.shape(s))));
            }
        }
        let weights = LstmWeights {
            w_ih: self.value(w_ih),
            w_hh: self.value(w_hh),
            bias: self.value(bias),
            hidden: h,
            input: d_in,
        };
        let (out, cache) = lstm_forward(
            &weights,
            self.value(x),
            steps,
            h0.map(|v| self.value(v)),
            c0.map(|v| self.value(v)),
            reverse,
        );
        self.push(
            vec![steps, h],
            out,
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                bias,
                h0,
                c0,
                cache,
            },
        )
    }

    /// Mean over unmasked rows of `-log softmax(logits)[label]`.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize], mask: Option<&[bool]>) -> Result<Var> {
        const OP: &str = "softmax_xent";
        let (rows, classes) = self.dims2(OP, logits)?;
        if labels.len() != rows {
            return Err(Error::shape(OP, format!("{} labels for {rows} rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::shape(OP, format!("label {bad} out of range for {classes} classes")));
        }
        let mask: Vec<bool> = match mask {
            Some(m) if m.len() == rows => m.to_vec(),
            Some(m) => return Err(Error::shape(OP, format!("mask length {} != {rows}", m.len()))),
            None => vec![true; rows],
        };
        let lv = self.value(logits);
        let mut probs = vec![T::zero(); rows * classes];
        let mut total = T::zero();
        let mut count = 0;
        for r in 0..rows {
            let row = &lv[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - max).exp()).sum();
            for c in 0..classes {
                probs[r * classes + c] = (row[c] - max).exp() / z;
            }
            if mask[r] {
                total += z.ln() + max - row[labels[r]];
                count += 1;
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::from_f64(count as f64)
        };
        self.push(
            vec![1],
            vec![loss],
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                mask,
                probs,
                count,
            },
        )
    }

    /// Scalar `Σ xᵢ wᵢ` against a constant weight vector.
    pub fn dot_const(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::shape("dot", "weight length differs from input length"));
        }
        let s = super::scalar::dot(self.value(x), &weights);
        self.push(vec![1], vec![s], Op::Dot { x, weights })
    }

    /// Scalar `Σ cₖ sₖ` of scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut s = T::zero();
        for &(v, c) in terms {
            if self.value(v).len() != 1 {
                return Err(Error::shape("weighted_sum", "terms must be scalars"));
            }
            s += c * self.value(v)[0];
        }
        self.push(vec![1], vec![s], Op::WeightedSum { terms: terms.to_vec() })
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Option<Vec<T>>> = (0..self.params.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            check_finite(node.op.name(), "backward", &g)?;
            self.backprop_node(node, &g, &mut grads, &mut param_grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            nodes: grads,
            params: param_grads,
        })
    }

    fn backprop_node(
        &self,
        node: &Node<T>,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
        param_grads: &mut [Option<Vec<T>>],
    ) {
        let zeros = |n: usize| vec![T::zero(); n];
        macro_rules! slot {
            ($v:expr) => {{
                let v: Var = $v;
                let n = self.value(v).len();
                grads[v.0].get_or_insert_with(|| zeros(n))
            }};
        }
        match &node.op {
            Op::Input => {}
            Op::Param(id) => {
                let acc = param_grads[id.0].get_or_insert_with(|| zeros(g.len()));
                axpy(T::one(), g, acc);
            }
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            } => {
                let (c_out, l_out) = (node.shape[0], node.shape[1]);
                let (c_in, len) = (self.shape(*x)[0], self.shape(*x)[1]);
                let width = self.shape(*w)[2];
                let rows = c_in * width;
                {
                    let db = slot!(*b);
                    for (o, row) in g.chunks(l_out).enumerate() {
                        db[o] += row.iter().copied().sum();
                    }
                }
                {
                    let dw = slot!(*w);
                    matmul(g, false, cols, true, dw, c_out, l_out, rows, true);
                }
                let mut dcols = zeros(rows * l_out);
                matmul(self.value(*w), true, g, false, &mut dcols, rows, c_out, l_out, false);
                let dx = slot!(*x);
                for c in 0..c_in {
                    for k in 0..width {
                        let src = &dcols[(c * width + k) * l_out..(c * width + k + 1) * l_out];
                        for (j, &d) in src.iter().enumerate() {
                            let pos = j * stride + k;
                            if pos >= *pad && pos - pad < len {
                                dx[c * len + pos - pad] += d;
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = slot!(*x);
                for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    if xi > T::zero() {
                        *d += gi;
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let dx = slot!(*x);
                for ((d, &gi), &m) in dx.iter_mut().zip(g).zip(mask) {
                    *d += gi * m;
                }
            }
            Op::SumSpans { x, spans } => {
                let (ch, k) = (self.shape(*x)[0], self.shape(*x)[1]);
                let dx = slot!(*x);
                for (t, &(i, j)) in spans.iter().enumerate() {
                    for c in 0..ch {
                        let gv = g[t * ch + c];
                        for d in &mut dx[c * k + i..c * k + j] {
                            *d += gv;
                        }
                    }
                }
            }
            Op::MaxSpans { x, argmax } => {
                let (ch, k) = (self.shape(*x)[0], self.shape(*x)[1]);
                let dx = slot!(*x);
                for (idx, &f) in argmax.iter().enumerate() {
                    let c = idx % ch;
                    dx[c * k + f] += g[idx];
                }
            }
            Op::Embedding { table, ids } => {
                let d = self.shape(*table)[1];
                let dt = slot!(*table);
                for (r, &i) in ids.iter().enumerate() {
                    axpy(T::one(), &g[r * d..(r + 1) * d], &mut dt[i * d..(i + 1) * d]);
                }
            }
            Op::Concat { a, b } => {
                let (m, da) = (self.shape(*a)[0], self.shape(*a)[1]);
                let db_ = self.shape(*b)[1];
                let w = da + db_;
                {
                    let ga = slot!(*a);
                    for r in 0..m {
                        axpy(T::one(), &g[r * w..r * w + da], &mut ga[r * da..(r + 1) * da]);
                    }
                }
                let gb = slot!(*b);
                for r in 0..m {
                    axpy(T::one(), &g[r * w + da..(r + 1) * w], &mut gb[r * db_..(r + 1) * db_]);
                }
            }
            Op::Linear { x, w, b } => {
                let (m, d_in) = (self.shape(*x)[0], self.shape(*x)[1]);
                let d_out = node.shape[1];
                {
                    let gb = slot!(*b);
                    for row in g.chunks(d_out) {
                        axpy(T::one(), row, gb);
                    }
                }
                {
                    let gw = slot!(*w);
                    matmul(g, true, self.value(*x), false, gw, d_out, m, d_in, true);
                }
                let gx = slot!(*x);
                matmul(g, false, self.value(*w), false, gx, m, d_out, d_in, true);
            }
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                bias,
                h0,
                c0,
                cache,
            } => {
                let h = self.shape(*w_hh)[1];
                let d_in = self.shape(*x)[1];
                let weights = LstmWeights {
                    w_ih: self.value(*w_ih),
                    w_hh: self.value(*w_hh),
                    bias: self.value(*bias),
                    hidden: h,
                    input: d_in,
                };
                let lg = lstm_backward(
                    &weights,
                    self.value(*x),
                    h0.map(|v| self.value(v)),
                    c0.map(|v| self.value(v)),
                    cache,
                    g,
                );
                axpy(T::one(), &lg.dx, slot!(*x));
                axpy(T::one(), &lg.dw_ih, slot!(*w_ih));
                axpy(T::one(), &lg.dw_hh, slot!(*w_hh));
                axpy(T::one(), &lg.dbias, slot!(*bias));
                if let Some(v) = h0 {
                    axpy(T::one(), &lg.dh0, slot!(*v));
                }
                if let Some(v) = c0 {
                    axpy(T::one(), &lg.dc0, slot!(*v));
                }
            }
            Op::SoftmaxXent {
                logits,
                labels,
                mask,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let classes = self.shape(*logits)[1];
                let scale = g[0] / T::from_f64(*count as f64);
                let gl = slot!(*logits);
                for (r, &on) in mask.iter().enumerate() {
                    if !on {
                        continue;
                    }
                    for c in 0..classes {
                        let target = if c == labels[r] { T::one() } else { T::zero() };
                        gl[r * classes + c] += scale * (probs[r * classes + c] - target);
                    }
                }
            }
            Op::Dot { x, weights } => {
                axpy(g[0], weights, slot!(*x));
            }
            Op::WeightedSum { terms } => {
                for &(v, c) in terms {
                    slot!(v)[0] += c * g[0];
                }
            }
        }
    }

    /// Row-wise softmax probabilities of a `[rows, classes]` node.
    pub fn softmax_rows(&self, logits: Var) -> Vec<Vec<T>> {
        let classes = self.shape(logits)[1];
        self.value(logits)
            .chunks(classes)
            .map(|row| {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let e: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
                let z: T = e.iter().copied().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect()
    }

    pub fn sigmoid(x: T) -> T {
        sigmoid(x)
    }
}

/// Result of [`Graph::backward`]: gradients for parameters and for every
/// node that the loss depends on.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    nodes: Vec<Option<Vec<T>>>,
    params: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn node(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params.get(id.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.params.iter_mut().flatten()
    }

    pub fn param_norm(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Drop per-node gradients, keeping parameter gradients only.
    pub fn into_params(self) -> Vec<Option<Vec<T>>> {
        self.params
    }

    pub fn from_params(params: Vec<Option<Vec<T>>>) -> Self {
        Gradients {
            nodes: Vec::new(),
            params,
        }
    }

    /// Add another set of parameter gradients into this one.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        if self.params.len() < other.params.len() {
            self.params.resize(other.params.len(), None);
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => axpy(T::one(), t, m),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }
}
