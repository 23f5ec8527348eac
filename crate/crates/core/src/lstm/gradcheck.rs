use serde::{Deserialize, Serialize};

use super::net::{self, Batch, Params, State};
use super::LstmModel;

const STEP: f64 = 1e-4;
/// Denominator floor, so parameters with vanishing gradients do not turn
/// rounding noise into large relative errors.
const FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Worst relative error per tensor, in serialization order.
    pub blocks: Vec<(String, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.1).fold(0.0, f64::max)
    }
}

/// Compares backpropagated gradients of the batch-mean sentence loss with
/// central differences over every parameter.
pub fn check_gradients(model: &LstmModel, sentences: &[Vec<&str>]) -> GradCheckReport {
    check_gradients_with(model, sentences, |_| {})
}

/// As [`check_gradients`], letting `tamper` modify the analytic gradients
/// before comparison.
pub fn check_gradients_with(
    model: &LstmModel,
    sentences: &[Vec<&str>],
    tamper: impl FnOnce(&mut Params),
) -> GradCheckReport {
    let seqs: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| model.vocab().encode(s, model.direction()))
        .collect();
    let batch = Batch::from_sequences(&seqs, 0);
    let params = model.params();
    let state = State::zeros(params.layers.len(), batch.width(), params.hidden());
    let mut analytic = net::run(params, &batch, &state, true).grads.expect("requested");
    tamper(&mut analytic);
    let loss = |p: &Params| net::run(p, &batch, &state, false).loss_sum() / batch.width().max(1) as f64;

    let mut probe = params.clone();
    let mut blocks = Vec::new();
    let mut checked = 0;
    let analytic = analytic.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect::<Vec<_>>();
    for (k, (name, grad)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (j, &a) in grad.iter().enumerate() {
            let orig = params.tensors()[k].1[j];
            set(&mut probe, k, j, orig + STEP);
            let up = loss(&probe);
            set(&mut probe, k, j, orig - STEP);
            let down = loss(&probe);
            set(&mut probe, k, j, orig);
            let numeric = (up - down) / (2.0 * STEP);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
            checked += 1;
        }
        blocks.push((name.clone(), worst));
    }
    GradCheckReport { blocks, checked }
}

fn set(p: &mut Params, tensor: usize, index: usize, value: f64) {
    p.tensors_mut()[tensor].1[index] = value;
}
