//! Fused single-direction LSTM with full backpropagation through time.
//!
//! Gates, in order: input `i`, forget `f`, cell candidate `g`, output `o`.
//!
//! ```text
//! i = σ(W_ii x + W_hi h + b_i)    g = tanh(W_ig x + W_hg h + b_g)
//! f = σ(W_if x + W_hf h + b_f)    o = σ(W_io x + W_ho h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```

use super::scalar::{axpy, dot, matmul};
use super::Scalar;

pub(super) struct LstmWeights<'a, T> {
    pub w_ih: &'a [T],
    pub w_hh: &'a [T],
    pub bias: &'a [T],
    pub hidden: usize,
    pub input: usize,
}

pub(super) struct LstmCache<T> {
    steps: usize,
    reverse: bool,
    /// Activated gates `[steps, 4H]`, indexed by time.
    gates: Vec<T>,
    cells: Vec<T>,
    tanh_cells: Vec<T>,
    hidden: Vec<T>,
}

pub(super) struct LstmGrads<T> {
    pub dx: Vec<T>,
    pub dw_ih: Vec<T>,
    pub dw_hh: Vec<T>,
    pub dbias: Vec<T>,
    pub dh0: Vec<T>,
    pub dc0: Vec<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn time_order(steps: usize, reverse: bool) -> Vec<usize> {
    if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    }
}

pub(super) fn lstm_forward<T: Scalar>(
    w: &LstmWeights<'_, T>,
    x: &[T],
    steps: usize,
    h0: Option<&[T]>,
    c0: Option<&[T]>,
    reverse: bool,
) -> (Vec<T>, LstmCache<T>) {
    let h = w.hidden;
    let g4 = 4 * h;
    // Input projections for all steps at once.
    let mut pre = vec![T::zero(); steps * g4];
    for row in pre.chunks_mut(g4) {
        row.copy_from_slice(w.bias);
    }
    matmul(x, false, w.w_ih, true, &mut pre, steps, w.input, g4, true);

    let mut gates = pre;
    let mut cells = vec![T::zero(); steps * h];
    let mut tanh_cells = vec![T::zero(); steps * h];
    let mut hidden = vec![T::zero(); steps * h];
    let zeros = vec![T::zero(); h];
    let mut h_prev: Vec<T> = h0.map_or_else(|| zeros.clone(), <[T]>::to_vec);
    let mut c_prev: Vec<T> = c0.map_or_else(|| zeros.clone(), <[T]>::to_vec);

    for t in time_order(steps, reverse) {
        let gt = &mut gates[t * g4..(t + 1) * g4];
        for (r, gv) in gt.iter_mut().enumerate() {
            *gv += dot(&w.w_hh[r * h..(r + 1) * h], &h_prev);
        }
        for u in 0..h {
            let i = sigmoid(gt[u]);
            let f = sigmoid(gt[h + u]);
            let g = gt[2 * h + u].tanh();
            let o = sigmoid(gt[3 * h + u]);
            gt[u] = i;
            gt[h + u] = f;
            gt[2 * h + u] = g;
            gt[3 * h + u] = o;
            let c = f * c_prev[u] + i * g;
            let tc = c.tanh();
            cells[t * h + u] = c;
            tanh_cells[t * h + u] = tc;
            hidden[t * h + u] = o * tc;
        }
        h_prev.copy_from_slice(&hidden[t * h..(t + 1) * h]);
        c_prev.copy_from_slice(&cells[t * h..(t + 1) * h]);
    }
    let out = hidden.clone();
    (
        out,
        LstmCache {
            steps,
            reverse,
            gates,
            cells,
            tanh_cells,
            hidden,
        },
    )
}

pub(super) fn lstm_backward<T: Scalar>(
    w: &LstmWeights<'_, T>,
    x: &[T],
    h0: Option<&[T]>,
    c0: Option<&[T]>,
    cache: &LstmCache<T>,
    dout: &[T],
) -> LstmGrads<T> {
    let h = w.hidden;
    let g4 = 4 * h;
    let steps = cache.steps;
    let order = time_order(steps, cache.reverse);
    let zeros = vec![T::zero(); h];
    let h_init = h0.unwrap_or(&zeros);
    let c_init = c0.unwrap_or(&zeros);

    let mut dpre = vec![T::zero(); steps * g4];
    // Row t holds the hidden state fed into step t.
    let mut h_in = vec![T::zero(); steps * h];
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let one = T::one();

    for s in (0..steps).rev() {
        let t = order[s];
        let (h_prev, c_prev) = if s == 0 {
            (h_init, c_init)
        } else {
            let p = order[s - 1];
            (&cache.hidden[p * h..(p + 1) * h], &cache.cells[p * h..(p + 1) * h])
        };
        h_in[t * h..(t + 1) * h].copy_from_slice(h_prev);
        let gt = &cache.gates[t * g4..(t + 1) * g4];
        let dp = &mut dpre[t * g4..(t + 1) * g4];
        for u in 0..h {
            let (i, f, g, o) = (gt[u], gt[h + u], gt[2 * h + u], gt[3 * h + u]);
            let tc = cache.tanh_cells[t * h + u];
            let dh = dout[t * h + u] + dh_next[u];
            let d_o = dh * tc;
            let dc = dh * o * (one - tc * tc) + dc_next[u];
            let di = dc * g;
            let dg = dc * i;
            let df = dc * c_prev[u];
            dc_next[u] = dc * f;
            dp[u] = di * i * (one - i);
            dp[h + u] = df * f * (one - f);
            dp[2 * h + u] = dg * (one - g * g);
            dp[3 * h + u] = d_o * o * (one - o);
        }
        dh_next.fill(T::zero());
        for (r, &d) in dp.iter().enumerate() {
            axpy(d, &w.w_hh[r * h..(r + 1) * h], &mut dh_next);
        }
    }

    let mut dw_hh = vec![T::zero(); g4 * h];
    matmul(&dpre, true, &h_in, false, &mut dw_hh, g4, steps, h, false);
    let mut dw_ih = vec![T::zero(); g4 * w.input];
    matmul(&dpre, true, x, false, &mut dw_ih, g4, steps, w.input, false);
    let mut dbias = vec![T::zero(); g4];
    for row in dpre.chunks(g4) {
        axpy(one, row, &mut dbias);
    }
    let mut dx = vec![T::zero(); steps * w.input];
    matmul(&dpre, false, w.w_ih, false, &mut dx, steps, g4, w.input, false);

    LstmGrads {
        dx,
        dw_ih,
        dw_hh,
        dbias,
        dh0: dh_next,
        dc0: dc_next,
    }
}
