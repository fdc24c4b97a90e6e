//! Central finite-difference gradient checks (64-bit).

use rand::Rng as _;

use super::{Graph, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::rng;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` per input.
    pub rel_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn evaluate<F>(
    inputs: &[Tensor<f64>],
    build: &F,
    projection: &mut Option<Vec<f64>>,
    seed: u64,
    with_grads: bool,
) -> Result<(f64, Option<Vec<Vec<f64>>>)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let vars = inputs
        .iter()
        .map(|t| g.input(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&mut g, &vars)?;
    let n = g.value(out).len();
    let weights = projection.get_or_insert_with(|| {
        let mut r = rng::stream(seed, "gradcheck/projection", &[n as u64]);
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    });
    let loss = g.dot_const(out, weights.clone())?;
    if !with_grads {
        return Ok((g.scalar(loss), None));
    }
    let grads = g.backward(loss)?;
    let analytic = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.node(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    Ok((g.scalar(loss), Some(analytic)))
}

/// Compare the analytic gradient of `build` (projected onto a fixed random
/// direction when its output is not scalar) with central differences of
/// step `h` for every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], build: F, h: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut projection = None;
    let (_, analytic) = evaluate(inputs, &build, &mut projection, seed, true)?;
    let analytic = analytic.expect("analytic gradients");
    let mut rel_errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; a.len()];
        for j in 0..a.len() {
            let orig = work[i].data[j];
            work[i].data[j] = orig + h;
            let (fp, _) = evaluate(&work, &build, &mut projection, seed, false)?;
            work[i].data[j] = orig - h;
            let (fm, _) = evaluate(&work, &build, &mut projection, seed, false)?;
            work[i].data[j] = orig;
            numeric[j] = (fp - fm) / (2.0 * h);
        }
        let diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = na.max(nn);
        rel_errors.push(if denom < 1e-12 { diff } else { diff / denom });
    }
    Ok(GradCheckReport { rel_errors })
}

/// Uniform random tensor in `[-scale, scale]`.
pub fn random_tensor(shape: &[usize], scale: f64, r: &mut rng::Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| r.gen_range(-scale..=scale)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
}

type Case = (Vec<Tensor<f64>>, Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>);

fn spans_for(len: usize, r: &mut rng::Rng) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut t = r.gen_range(0..2);
    while t < len {
        let end = (t + r.gen_range(1..4)).min(len);
        spans.push((t, end));
        t = end + r.gen_range(0..2);
    }
    spans
}

fn case(op: &str, r: &mut rng::Rng) -> Case {
    match op {
        "conv1d" => {
            let (c_in, c_out, w) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..6));
            let len = r.gen_range(w.max(2)..12);
            let stride = r.gen_range(1..3);
            let pad = w / 2;
            (
                vec![
                    random_tensor(&[c_in, len], 1.0, r),
                    random_tensor(&[c_out, c_in, w], 1.0, r),
                    random_tensor(&[c_out], 1.0, r),
                ],
                Box::new(move |g, v| g.conv1d(v[0], v[1], v[2], stride, pad)),
            )
        }
        "lstm_cell" => {
            let (d, h) = (r.gen_range(1..5), r.gen_range(1..5));
            (
                vec![
                    random_tensor(&[1, d], 1.0, r),
                    random_tensor(&[4 * h, d], 0.8, r),
                    random_tensor(&[4 * h, h], 0.8, r),
                    random_tensor(&[4 * h], 0.5, r),
                    random_tensor(&[h], 1.0, r),
                    random_tensor(&[h], 1.0, r),
                ],
                Box::new(|g, v| g.lstm(v[0], v[1], v[2], v[3], Some(v[4]), Some(v[5]), false)),
            )
        }
        "lstm" => {
            let (t, d, h) = (r.gen_range(2..6), r.gen_range(1..4), r.gen_range(1..4));
            let reverse = r.gen_bool(0.5);
            (
                vec![
                    random_tensor(&[t, d], 1.0, r),
                    random_tensor(&[4 * h, d], 0.8, r),
                    random_tensor(&[4 * h, h], 0.8, r),
                    random_tensor(&[4 * h], 0.5, r),
                ],
                Box::new(move |g, v| g.lstm(v[0], v[1], v[2], v[3], None, None, reverse)),
            )
        }
        "bilstm" => {
            let (t, d, h) = (r.gen_range(2..5), r.gen_range(1..4), r.gen_range(1..3));
            let mut inputs = vec![random_tensor(&[t, d], 1.0, r)];
            for width in [d, d, 2 * h, 2 * h] {
                inputs.push(random_tensor(&[4 * h, width], 0.8, r));
                inputs.push(random_tensor(&[4 * h, h], 0.8, r));
                inputs.push(random_tensor(&[4 * h], 0.5, r));
            }
            (
                inputs,
                Box::new(|g, v| {
                    let mut x = v[0];
                    for layer in 0..2 {
                        let k = 1 + 6 * layer;
                        let f = g.lstm(x, v[k], v[k + 1], v[k + 2], None, None, false)?;
                        let b = g.lstm(x, v[k + 3], v[k + 4], v[k + 5], None, None, true)?;
                        x = g.concat(f, b)?;
                    }
                    Ok(x)
                }),
            )
        }
        "linear" => {
            let (m, i, o) = (r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..4));
            (
                vec![random_tensor(&[m, i], 1.0, r), random_tensor(&[o, i], 1.0, r), random_tensor(&[o], 1.0, r)],
                Box::new(|g, v| g.linear(v[0], v[1], v[2])),
            )
        }
        "embedding" => {
            let (vocab, d) = (r.gen_range(2..7), r.gen_range(1..5));
            let ids: Vec<usize> = (0..r.gen_range(1..8)).map(|_| r.gen_range(0..vocab)).collect();
            (
                vec![random_tensor(&[vocab, d], 1.0, r)],
                Box::new(move |g, v| g.embedding(v[0], &ids)),
            )
        }
        "sum_over_span" => {
            let (c, len) = (r.gen_range(1..5), r.gen_range(2..14));
            let spans = spans_for(len, r);
            (
                vec![random_tensor(&[c, len], 1.0, r)],
                Box::new(move |g, v| g.sum_over_spans(v[0], &spans)),
            )
        }
        "softmax_xent" => {
            let (m, k) = (r.gen_range(1..6), r.gen_range(2..4));
            let labels: Vec<usize> = (0..m).map(|_| r.gen_range(0..k)).collect();
            let mut mask: Vec<bool> = (0..m).map(|_| r.gen_bool(0.7)).collect();
            mask[0] = true;
            (
                vec![random_tensor(&[m, k], 2.0, r)],
                Box::new(move |g, v| g.softmax_xent(v[0], &labels, Some(&mask))),
            )
        }
        other => panic!("no gradient case for `{other}`"),
    }
}

/// Differentiable ops covered by [`op_suite`].
pub const SUITE_OPS: [&str; 8] = [
    "conv1d",
    "lstm_cell",
    "lstm",
    "bilstm",
    "linear",
    "embedding",
    "sum_over_span",
    "softmax_xent",
];

/// Finite-difference check of every op in [`SUITE_OPS`] on `instances`
/// random shapes and values each.
pub fn op_suite(instances: usize, seed: u64) -> Result<Vec<OpCheck>> {
    SUITE_OPS
        .iter()
        .map(|&op| {
            let mut worst: f64 = 0.0;
            for i in 0..instances {
                let mut r = rng::stream(seed, &format!("gradcheck/{op}"), &[i as u64]);
                let (inputs, build) = case(op, &mut r);
                let report = check_gradients(&inputs, build, DEFAULT_STEP, seed ^ i as u64)?;
                worst = worst.max(report.max_rel_error());
            }
            Ok(OpCheck {
                op,
                instances,
                max_rel_error: worst,
            })
        })
        .collect()
}
