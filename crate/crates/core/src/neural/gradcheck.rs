use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::net::{ClassifierNet, Mode};
use super::{bce_logit_loss, sigmoid};

const STEP: f64 = 1e-4;
/// Retry step for weights whose first difference straddles a ReLU kink.
const FINE_STEP: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckFailure {
    pub index: usize,
    pub layer: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Weights that needed the finer step.
    pub refined: usize,
    pub failures: Vec<GradCheckFailure>,
    pub passed: bool,
}

fn mean_loss(net: &ClassifierNet, inputs: &[f64], labels: &[f64], mode: Mode) -> f64 {
    let (f, _) = net.forward(inputs, labels.len(), mode, false, None);
    f.iter().zip(labels).map(|(&f, &y)| bce_logit_loss(f, y)).sum::<f64>() / labels.len() as f64
}

/// Compares backpropagated gradients of the mean BCE loss against central
/// differences on `n_weights` randomly chosen parameters. Batchnorm runs in
/// evaluation mode. A weight fails when
/// `|g_a − g_f| / (|g_a| + |g_f| + 1e-8)` exceeds `tolerance`; a tolerance of
/// zero therefore fails every weight. A weight that fails with the default
/// step is retried with a 100× smaller one, since a ReLU kink inside the
/// stencil biases the central difference.
pub fn finite_difference_check<R: Rng + ?Sized>(
    net: &ClassifierNet,
    inputs: &[f64],
    labels: &[f64],
    tolerance: f64,
    n_weights: usize,
    rng: &mut R,
) -> GradCheckReport {
    finite_difference_check_in_mode(net, inputs, labels, tolerance, n_weights, Mode::Eval, rng)
}

pub fn finite_difference_check_in_mode<R: Rng + ?Sized>(
    net: &ClassifierNet,
    inputs: &[f64],
    labels: &[f64],
    tolerance: f64,
    n_weights: usize,
    mode: Mode,
    rng: &mut R,
) -> GradCheckReport {
    let n = labels.len();
    let (logits, tape) = net.forward(inputs, n, mode, true, None);
    let dout: Vec<f64> = logits.iter().zip(labels).map(|(&f, &y)| (sigmoid(f) - y) / n as f64).collect();
    let grads = net.backward(tape.as_ref().expect("tape requested"), &dout);

    let k = n_weights.min(net.num_params());
    let mut probe = net.clone();
    let mut failures = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut refined = 0;
    for i in sample(rng, net.num_params(), k).into_iter() {
        let w = net.params()[i];
        let mut central = |h: f64| {
            probe.params_mut()[i] = w + h;
            let up = mean_loss(&probe, inputs, labels, mode);
            probe.params_mut()[i] = w - h;
            let down = mean_loss(&probe, inputs, labels, mode);
            probe.params_mut()[i] = w;
            (up - down) / (2.0 * h)
        };
        let analytic = grads[i];
        let rel_of = |numeric: f64| (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-8);
        let mut numeric = central(STEP);
        let mut rel = rel_of(numeric);
        if !(rel < tolerance) && tolerance > 0.0 {
            refined += 1;
            numeric = central(FINE_STEP);
            rel = rel_of(numeric);
        }
        max_rel = max_rel.max(rel);
        if !(rel < tolerance) {
            failures.push(GradCheckFailure {
                index: i,
                layer: net.layer_of(i).to_string(),
                analytic,
                numeric,
                rel_error: rel,
            });
        }
    }
    GradCheckReport {
        checked: k,
        max_rel_error: max_rel,
        refined,
        passed: failures.is_empty(),
        failures,
    }
}
