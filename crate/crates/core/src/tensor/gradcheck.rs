//! Central finite-difference checks of autodiff gradients.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Bound, ConvGeom, Graph, NodeId, ParamStore, Tensor};

/// Finite-difference step used by every check.
pub const FD_STEP: f64 = 1e-5;

/// Op kinds accepted by [`grad_check`].
pub const PRIMITIVE_OPS: &[&str] = &[
    "matmul",
    "conv2d",
    "modulated-conv2d",
    "leaky-relu",
    "upsample-nearest-2x",
    "concat",
    "reduce-mean",
    "reduce-sum",
    "square",
    "sqrt",
    "softplus",
    "sigmoid",
    "reshape",
    "broadcast-add",
    "broadcast-mul",
    "div",
    "scale",
    "add-scalar",
    "reciprocal",
    "transpose",
    "broadcast-to",
    "sum-to",
    "slice",
    "embed",
    "sum-pool-2x",
    "conv2d-stride2",
    "conv2d-input-grad",
    "conv2d-weight-grad",
];

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    /// Largest `|a - b| / max(|a|, |b|, 1e-8)` over all checked elements.
    pub max_relative_error: f64,
    /// (input index, element index) where the maximum occurred.
    pub worst: (usize, usize),
    pub elements_checked: usize,
    /// Probes dropped because the finite-difference step moved a leaky-ReLU
    /// input across zero, where the function is not differentiable.
    pub kinks_skipped: usize,
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of `build(inputs)` against central
/// differences at every input element. Non-scalar outputs are contracted
/// with a seeded random projection so every output element contributes.
pub fn check_gradients<F>(inputs: &[Tensor], seed: u64, build: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    check_gradients_sampled(inputs, seed, usize::MAX, build)
}

/// Like [`check_gradients`], but probes at most `per_input` seeded random
/// elements of each input (all of them when the input is smaller).
pub fn check_gradients_sampled<F>(inputs: &[Tensor], seed: u64, per_input: usize, build: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let leaves: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &leaves)?;
    let out_shape = g.shape(out).to_vec();
    let mut rng = Rng::derive(seed, 0x9a0d);
    let projection = Tensor::randn(&out_shape, 1.0, &mut rng);
    let p = g.leaf(projection.clone());
    let weighted = g.mul(out, p)?;
    let objective = g.sum_all(weighted)?;
    let grads = g.backward(objective, &leaves)?;
    let analytic: Vec<Tensor> = grads.iter().map(|&id| g.value(id).clone()).collect();

    let mut report = GradReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        elements_checked: 0,
        kinks_skipped: 0,
    };
    for (which, input) in inputs.iter().enumerate() {
        let deps = g.dependents(leaves[which], out);
        let pattern = g.kink_pattern(&deps);
        let elements: Vec<usize> = if input.len() <= per_input {
            (0..input.len()).collect()
        } else {
            (0..per_input).map(|_| rng.below(input.len())).collect()
        };
        for e in elements {
            let x = input.data()[e];
            let (xp, xm) = (x + FD_STEP, x - FD_STEP);
            let probe = |v: f64, g: &mut Graph| -> Result<Tensor> {
                let mut t = input.clone();
                t.data_mut()[e] = v;
                g.set_leaf(leaves[which], t)?;
                g.recompute_nodes(&deps)?;
                Ok(g.value(out).clone())
            };
            let plus = probe(xp, &mut g)?;
            let crossed = g.kink_pattern(&deps) != pattern;
            let minus = probe(xm, &mut g)?;
            if crossed || g.kink_pattern(&deps) != pattern {
                report.kinks_skipped += 1;
                continue;
            }
            let span = xp - xm;
            let numeric: f64 = plus
                .data()
                .iter()
                .zip(minus.data())
                .zip(projection.data())
                .map(|((a, b), r)| r * ((a - b) / span))
                .sum();
            let err = relative_error(analytic[which].data()[e], numeric);
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (which, e);
            }
            report.elements_checked += 1;
        }
        g.set_leaf(leaves[which], input.clone())?;
        g.recompute_nodes(&deps)?;
    }
    Ok(report)
}

/// [`check_gradients`] over every tensor of `params` followed by `extra`
/// inputs. `build` receives the parameters bound to their leaves.
///
/// Probes at most `per_input` elements of each tensor.
pub fn check_param_gradients<F>(
    params: &ParamStore,
    extra: &[Tensor],
    seed: u64,
    per_input: usize,
    build: F,
) -> Result<GradReport>
where
    F: Fn(&mut Graph, &Bound, &[NodeId]) -> Result<NodeId>,
{
    let n = params.len();
    let mut inputs: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    inputs.extend(extra.iter().cloned());
    check_gradients_sampled(&inputs, seed, per_input, |g, leaves| {
        let bound = Bound::from_ids(params, &leaves[..n])?;
        build(g, &bound, &leaves[n..])
    })
}

fn pad_shapes(shapes: &[Vec<usize>], want: usize, op: &str) -> Result<()> {
    if shapes.len() != want {
        return Err(Error::InvalidArgument(format!(
            "{op} expects {want} input shapes, got {}",
            shapes.len()
        )));
    }
    Ok(())
}

/// Gradient check of one primitive op on seeded `N(0, 1)` inputs.
pub fn grad_check(op_kind: &str, input_shapes: &[Vec<usize>], seed: u64) -> Result<GradReport> {
    if !PRIMITIVE_OPS.contains(&op_kind) {
        return Err(Error::UnknownOp(op_kind.to_string()));
    }
    let mut rng = Rng::new(seed);
    let mut inputs: Vec<Tensor> = input_shapes
        .iter()
        .map(|s| {
            if s.is_empty() || s.contains(&0) {
                Err(Error::InvalidArgument(format!("bad input shape {s:?}")))
            } else {
                Ok(Tensor::randn(s, 1.0, &mut rng))
            }
        })
        .collect::<Result<_>>()?;
    match op_kind {
        "matmul" | "conv2d" | "broadcast-add" | "broadcast-mul" | "div" | "conv2d-stride2" | "conv2d-input-grad"
        | "conv2d-weight-grad" => pad_shapes(input_shapes, 2, op_kind)?,
        "modulated-conv2d" => pad_shapes(input_shapes, 3, op_kind)?,
        "concat" => {
            if input_shapes.is_empty() {
                return Err(Error::InvalidArgument("concat needs inputs".into()));
            }
        }
        _ => pad_shapes(input_shapes, 1, op_kind)?,
    }
    match op_kind {
        // Keep away from the kink so the central difference is one-sided-free.
        "leaky-relu" => {
            for v in inputs[0].data_mut() {
                if v.abs() < 1e-3 {
                    *v = if *v < 0.0 { -1e-3 } else { 1e-3 };
                }
            }
        }
        "sqrt" | "reciprocal" => inputs[0] = inputs[0].map(|v| v.abs() + 0.5),
        "div" => inputs[1] = inputs[1].map(|v| v.signum() * (v.abs() + 0.5)),
        _ => {}
    }
    let kind = op_kind.to_string();
    check_gradients(&inputs, seed, move |g, x| match kind.as_str() {
        "matmul" => g.matmul(x[0], x[1]),
        "conv2d" => {
            let k = g.shape(x[1])[2];
            g.conv2d(x[0], x[1], ConvGeom { stride: 1, pad: k / 2 })
        }
        "modulated-conv2d" => crate::synthgen::modulated_conv2d(g, x[0], x[1], x[2], true),
        "leaky-relu" => g.leaky_relu(x[0]),
        "upsample-nearest-2x" => g.upsample2x(x[0]),
        "concat" => {
            let axis = if g.shape(x[0]).len() > 1 { 1 } else { 0 };
            g.concat(x, axis)
        }
        "reduce-mean" => {
            let last = g.shape(x[0]).len() - 1;
            g.reduce_mean(x[0], &[last])
        }
        "reduce-sum" => {
            let last = g.shape(x[0]).len() - 1;
            g.reduce_sum(x[0], &[last])
        }
        "square" => g.square(x[0]),
        "sqrt" => g.sqrt(x[0]),
        "softplus" => g.softplus(x[0]),
        "sigmoid" => g.sigmoid(x[0]),
        "reshape" => {
            let mut s = g.shape(x[0]).to_vec();
            s.reverse();
            g.reshape(x[0], &s)
        }
        "broadcast-add" => g.add(x[0], x[1]),
        "broadcast-mul" => g.mul(x[0], x[1]),
        "div" => g.div(x[0], x[1]),
        "scale" => g.scale(x[0], -1.7),
        "add-scalar" => g.add_scalar(x[0], 0.3),
        "reciprocal" => g.recip(x[0]),
        "transpose" => g.transpose(x[0]),
        "broadcast-to" => {
            let mut s: Vec<usize> = g.shape(x[0]).iter().map(|&d| if d == 1 { 3 } else { d }).collect();
            s.insert(0, 2);
            g.broadcast_to(x[0], &s)
        }
        "sum-to" => {
            let s: Vec<usize> = g
                .shape(x[0])
                .iter()
                .enumerate()
                .map(|(i, &d)| if i % 2 == 0 { 1 } else { d })
                .collect();
            g.sum_to(x[0], &s)
        }
        "slice" => {
            let n = g.shape(x[0])[0];
            g.slice(x[0], 0, 1, n - 1)
        }
        "embed" => {
            let n = g.shape(x[0])[0];
            g.embed(x[0], 0, 1, n + 2)
        }
        "sum-pool-2x" => g.sum_pool2x(x[0]),
        "conv2d-stride2" => g.conv2d(x[0], x[1], ConvGeom::DOWN3),
        "conv2d-input-grad" => {
            let s = g.shape(x[0]);
            let hw = (s[2], s[3]);
            g.conv2d_input_grad(x[0], x[1], ConvGeom::SAME3, hw)
        }
        "conv2d-weight-grad" => {
            let per_sample = g.shape(x[0])[0] > 1 && g.shape(x[0])[1] == 2;
            g.conv2d_weight_grad(x[0], x[1], ConvGeom::SAME3, (3, 3), per_sample)
        }
        other => Err(Error::UnknownOp(other.to_string())),
    })
}

/// Default shape/seed cases per primitive, used by the gradcheck command and
/// the acceptance suite (five per op).
pub fn default_cases(op_kind: &str) -> Vec<(Vec<Vec<usize>>, u64)> {
    let shapes: Vec<Vec<Vec<usize>>> = match op_kind {
        "matmul" => vec![
            vec![vec![3, 4], vec![4, 2]],
            vec![vec![1, 5], vec![5, 3]],
            vec![vec![4, 4], vec![4, 4]],
            vec![vec![2, 7], vec![7, 1]],
            vec![vec![6, 3], vec![3, 5]],
        ],
        "conv2d" => vec![
            vec![vec![1, 2, 5, 5], vec![3, 2, 3, 3]],
            vec![vec![2, 3, 4, 4], vec![2, 3, 3, 3]],
            vec![vec![2, 2, 3, 3], vec![2, 2, 1, 1]],
            vec![vec![1, 1, 6, 6], vec![1, 1, 3, 3]],
            vec![vec![2, 3, 4, 4], vec![2, 2, 3, 3, 3]],
        ],
        "modulated-conv2d" => vec![
            vec![vec![1, 2, 4, 4], vec![3, 2, 3, 3], vec![1, 2]],
            vec![vec![2, 3, 4, 4], vec![2, 3, 3, 3], vec![2, 3]],
            vec![vec![2, 2, 3, 3], vec![3, 2, 1, 1], vec![2, 2]],
            vec![vec![1, 3, 5, 5], vec![2, 3, 3, 3], vec![1, 3]],
            vec![vec![2, 2, 4, 4], vec![2, 2, 2, 3, 3], vec![2, 2]],
        ],
        "concat" => vec![
            vec![vec![2, 3], vec![2, 2]],
            vec![vec![4], vec![3]],
            vec![vec![2, 1, 3], vec![2, 2, 3], vec![2, 1, 3]],
            vec![vec![1, 2, 2, 2], vec![1, 3, 2, 2]],
            vec![vec![3, 1], vec![3, 4]],
        ],
        "upsample-nearest-2x" => vec![
            vec![vec![1, 1, 2, 2]],
            vec![vec![2, 3, 3, 3]],
            vec![vec![4, 4]],
            vec![vec![1, 2, 1, 5]],
            vec![vec![3, 2, 2]],
        ],
        "broadcast-add" | "broadcast-mul" => vec![
            vec![vec![2, 3], vec![3]],
            vec![vec![2, 3, 4], vec![1, 3, 1]],
            vec![vec![4], vec![4]],
            vec![vec![2, 1], vec![1, 5]],
            vec![vec![2, 3, 2, 2], vec![2, 3, 1, 1]],
        ],
        "div" => vec![
            vec![vec![2, 3], vec![3]],
            vec![vec![4], vec![4]],
            vec![vec![2, 1, 3], vec![2, 4, 1]],
            vec![vec![1], vec![5]],
            vec![vec![2, 2, 2, 2], vec![2, 2, 2, 2]],
        ],
        "transpose" => vec![
            vec![vec![3, 4]],
            vec![vec![1, 5]],
            vec![vec![4, 4]],
            vec![vec![6, 2]],
            vec![vec![2, 7]],
        ],
        "slice" | "embed" => vec![
            vec![vec![3]],
            vec![vec![4, 2]],
            vec![vec![2, 3, 2]],
            vec![vec![5, 1]],
            vec![vec![3, 2, 2, 2]],
        ],
        "sum-pool-2x" => vec![
            vec![vec![1, 1, 4, 4]],
            vec![vec![2, 3, 2, 2]],
            vec![vec![3, 6, 4]],
            vec![vec![1, 2, 8, 2]],
            vec![vec![2, 2, 4, 6]],
        ],
        "conv2d-stride2" => vec![
            vec![vec![1, 2, 6, 6], vec![3, 2, 3, 3]],
            vec![vec![2, 3, 4, 4], vec![2, 3, 3, 3]],
            vec![vec![2, 2, 5, 5], vec![2, 2, 3, 3]],
            vec![vec![1, 1, 8, 8], vec![2, 1, 3, 3]],
            vec![vec![2, 3, 4, 4], vec![2, 2, 3, 3, 3]],
        ],
        "conv2d-input-grad" => vec![
            vec![vec![1, 3, 4, 4], vec![3, 2, 3, 3]],
            vec![vec![2, 2, 3, 3], vec![2, 3, 3, 3]],
            vec![vec![2, 1, 5, 5], vec![1, 2, 3, 3]],
            vec![vec![1, 2, 6, 6], vec![2, 2, 3, 3]],
            vec![vec![2, 2, 4, 4], vec![2, 2, 3, 3, 3]],
        ],
        "conv2d-weight-grad" => vec![
            vec![vec![1, 3, 4, 4], vec![1, 2, 4, 4]],
            vec![vec![2, 3, 3, 3], vec![2, 4, 3, 3]],
            vec![vec![1, 1, 5, 5], vec![1, 1, 5, 5]],
            vec![vec![2, 2, 4, 4], vec![2, 3, 4, 4]],
            vec![vec![3, 2, 3, 3], vec![3, 2, 3, 3]],
        ],
        "leaky-relu" => vec![
            vec![vec![8]],
            vec![vec![3, 4]],
            vec![vec![2, 2, 3]],
            vec![vec![16]],
            vec![vec![1, 9]],
        ],
        "reshape" => vec![
            vec![vec![2, 6]],
            vec![vec![3, 4]],
            vec![vec![2, 3, 2]],
            vec![vec![12]],
            vec![vec![1, 5]],
        ],
        _ => vec![
            vec![vec![8]],
            vec![vec![3, 4]],
            vec![vec![2, 2, 3]],
            vec![vec![2, 5]],
            vec![vec![1, 2, 3, 2]],
        ],
    };
    shapes.into_iter().zip([7u64, 1, 0, 42, 1234]).collect()
}
