//! Central finite-difference gradient checks.
//!
//! Used by the test suite and by the `selftest` command. The numeric side
//! only ever evaluates forward values; it never touches the backward sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{DiffError, Graph, Tensor, Var};
use crate::model::{InitMode, Spoter, SpoterConfig};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Threshold for single primitive ops.
pub const OP_TOLERANCE: f64 = 1e-6;
/// Threshold for the end-to-end model check.
pub const MODEL_TOLERANCE: f64 = 1e-4;

/// Denominator floor of [`relative_error`]. Some gradients are exactly zero
/// by symmetry (attention key biases shift every score of a query equally),
/// and for those the central difference returns pure rounding noise of order
/// 1e-11; below this norm the check is effectively absolute.
pub const NORM_FLOOR: f64 = 1e-6;

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, NORM_FLOOR)`.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let norm = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, b)| a - b)
        .collect();
    norm(&diff) / norm(analytic.data()).max(norm(numeric.data())).max(NORM_FLOOR)
}

/// Compares backward gradients of `f` with central differences for every
/// input tensor. Returns one relative error per input.
pub fn check<F>(inputs: &[Tensor], f: F) -> Result<Vec<f64>, DiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, DiffError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, DiffError> {
        let mut g = Graph::new();
        let vars = values
            .iter()
            .map(|t| g.constant(t.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| g.param(t.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut errors = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("every input is a parameter");
        let mut numeric = Tensor::zeros(inputs[i].shape());
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + STEP;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - STEP;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            numeric.data_mut()[j] = (plus - minus) / (2.0 * STEP);
        }
        errors.push(relative_error(analytic, &numeric));
    }
    Ok(errors)
}

/// Reduces an arbitrary-shaped output to a scalar with fixed non-uniform
/// weights, so that outputs with constant sums (softmax) still carry signal.
pub fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Result<Var, DiffError> {
    let shape = g.value(out).shape().to_vec();
    let weights = random_tensor(&shape, seed, -1.0, 1.0);
    let w = g.constant(weights)?;
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

pub fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive shape")
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub op: &'static str,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

pub const SUITE_OPS: &[&str] = &[
    "matmul",
    "add",
    "add_row",
    "mul",
    "scale",
    "relu",
    "softmax",
    "layer_norm",
    "linear",
    "transpose",
    "concat",
    "slice",
    "cross_entropy",
    "spoter",
];

/// Runs the gradient suite. `only` restricts it to a single op name from
/// [`SUITE_OPS`]; `tolerance` overrides both default thresholds.
pub fn run_suite(only: Option<&str>, tolerance: Option<f64>) -> Result<Vec<CheckReport>, DiffError> {
    let mut reports = Vec::new();
    for &op in SUITE_OPS {
        if only.is_some_and(|o| o != op) {
            continue;
        }
        let default_tol = if op == "spoter" { MODEL_TOLERANCE } else { OP_TOLERANCE };
        let max_relative_error = run_one(op)?;
        reports.push(CheckReport {
            op,
            max_relative_error,
            tolerance: tolerance.unwrap_or(default_tol),
        });
    }
    Ok(reports)
}

fn max_of(errors: Vec<f64>) -> f64 {
    errors.into_iter().fold(0.0, f64::max)
}

fn run_one(op: &str) -> Result<f64, DiffError> {
    let a = random_tensor(&[3, 4], 1, -1.0, 1.0);
    let b = random_tensor(&[4, 5], 2, -1.0, 1.0);
    let same = random_tensor(&[3, 4], 3, -1.0, 1.0);
    let row = random_tensor(&[4], 4, -1.0, 1.0);
    let errs = match op {
        "matmul" => check(&[a, b], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            weighted_sum(g, y, 10)
        })?,
        "add" => check(&[a, same], |g, v| {
            let y = g.add(v[0], v[1])?;
            weighted_sum(g, y, 11)
        })?,
        "add_row" => check(&[a, row], |g, v| {
            let y = g.add_row(v[0], v[1])?;
            weighted_sum(g, y, 12)
        })?,
        "mul" => check(&[a, same], |g, v| {
            let y = g.mul(v[0], v[1])?;
            weighted_sum(g, y, 13)
        })?,
        "scale" => check(&[a], |g, v| {
            let y = g.scale(v[0], -2.5)?;
            weighted_sum(g, y, 14)
        })?,
        "relu" => {
            // keep entries away from the kink at 0
            let mut x = a;
            for v in x.data_mut() {
                *v += v.signum() * 0.1;
            }
            check(&[x], |g, v| {
                let y = g.relu(v[0])?;
                weighted_sum(g, y, 15)
            })?
        }
        "softmax" => {
            let mut errs = check(std::slice::from_ref(&a), |g, v| {
                let y = g.softmax(v[0], 1)?;
                weighted_sum(g, y, 16)
            })?;
            errs.extend(check(&[a], |g, v| {
                let y = g.softmax(v[0], 0)?;
                weighted_sum(g, y, 17)
            })?);
            errs
        }
        "layer_norm" => {
            let gain = random_tensor(&[4], 5, 0.5, 1.5);
            check(&[a, gain, row], |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
                weighted_sum(g, y, 18)
            })?
        }
        "linear" => {
            let bias = random_tensor(&[5], 6, -1.0, 1.0);
            check(&[a, b, bias], |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                weighted_sum(g, y, 19)
            })?
        }
        "transpose" => check(&[a], |g, v| {
            let y = g.transpose(v[0])?;
            weighted_sum(g, y, 20)
        })?,
        "concat" => {
            let c = random_tensor(&[3, 2], 7, -1.0, 1.0);
            let d = random_tensor(&[2, 4], 8, -1.0, 1.0);
            let mut errs = check(&[a.clone(), c], |g, v| {
                let y = g.concat(&[v[0], v[1]], 1)?;
                weighted_sum(g, y, 21)
            })?;
            errs.extend(check(&[a, d], |g, v| {
                let y = g.concat(&[v[0], v[1]], 0)?;
                weighted_sum(g, y, 22)
            })?);
            errs
        }
        "slice" => check(&[a], |g, v| {
            let c = g.slice_cols(v[0], 1, 3)?;
            let r = g.slice_rows(c, 0, 2)?;
            weighted_sum(g, r, 23)
        })?,
        "cross_entropy" => {
            let logits = random_tensor(&[6], 9, -3.0, 3.0);
            check(&[logits], |g, v| g.cross_entropy(v[0], 2))?
        }
        "spoter" => spoter_errors()?,
        other => unreachable!("unknown suite op {other}"),
    };
    Ok(max_of(errs))
}

/// Small model used by the end-to-end check: width 8, 2 heads, one encoder
/// and one decoder layer, 3 classes, 4 frames.
pub fn toy_config() -> SpoterConfig {
    SpoterConfig {
        input_dim: 8,
        num_classes: 3,
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 2,
        ff_dim: 6,
        max_frames: 4,
        dropout_rate: 0.0,
        layer_norm_eps: 1e-5,
    }
}

/// Relative error of every model parameter's gradient of the cross-entropy.
pub fn spoter_errors() -> Result<Vec<f64>, DiffError> {
    let cfg = toy_config();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let model = Spoter::init(cfg.clone(), InitMode::Standard, &mut rng).expect("toy config is valid");
    let input = random_tensor(&[4, cfg.input_dim], 99, 0.0, 1.0);
    let target = 1;
    let params: Vec<Tensor> = model.params().tensors().to_vec();
    check(&params, |g, vars| {
        let x = g.constant(input.clone())?;
        let logits = model.forward_with(g, vars, x, false, None)?;
        g.cross_entropy(logits, target)
    })
}
