use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{self, Batch, Params, State};
use super::{LstmConfig, LstmError, LstmModel, Vocab};

/// Mean per-token training loss (natural log) for each epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub tokens_per_epoch: usize,
}

/// Trains from scratch on `sentences`. Sentences are read in the configured
/// direction and truncated to `max_len` tokens; the vocabulary is every word
/// seen in training.
pub fn train_lstm<S: AsRef<str>>(
    sentences: &[Vec<S>],
    config: &LstmConfig,
) -> Result<(LstmModel, TrainReport), LstmError> {
    config.validate()?;
    if sentences.is_empty() {
        return Err(LstmError::EmptyCorpus);
    }
    let vocab = Vocab::build(sentences);
    let mut model = LstmModel::init(config.clone(), vocab)?;
    // the init consumed its own stream; shuffling uses a second one
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_5a_u64);
    let seqs: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| {
            let mut ids = model.vocab.encode(s, config.direction);
            ids.truncate(config.max_len);
            ids
        })
        .collect();
    let tokens: usize = seqs.iter().map(|s| s.len() + 1).sum();
    let mut report = TrainReport {
        epoch_loss: Vec::with_capacity(config.epochs),
        tokens_per_epoch: tokens,
    };
    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        let mut loss = 0.0;
        for group in batches(&seqs, config.batch, &mut rng) {
            loss += train_batch(&mut model.params, &group, config, lr);
        }
        let mean = loss / tokens as f64;
        if !mean.is_finite() || !model.params.is_finite() {
            return Err(LstmError::Diverged { epoch });
        }
        report.epoch_loss.push(mean);
    }
    Ok((model, report))
}

/// Shuffled minibatches of similar-length sentences.
fn batches(seqs: &[Vec<usize>], size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<usize>>> {
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.shuffle(rng);
    let mut rank = vec![0; seqs.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    order.sort_by_key(|&i| (seqs[i].len(), rank[i]));
    let mut groups: Vec<Vec<Vec<usize>>> = order
        .chunks(size)
        .map(|c| c.iter().map(|&i| seqs[i].clone()).collect())
        .collect();
    groups.shuffle(rng);
    groups
}

/// One pass over a minibatch in BPTT windows, with an SGD step per window.
/// Returns the summed loss.
fn train_batch(params: &mut Params, seqs: &[Vec<usize>], config: &LstmConfig, lr: f64) -> f64 {
    let batch = Batch::from_sequences(seqs, 0);
    let mut state = State::zeros(params.layers.len(), batch.width(), params.hidden());
    let mut total = 0.0;
    let mut start = 0;
    while start < batch.steps() {
        let end = (start + config.bptt).min(batch.steps());
        let out = net::run(params, &batch.window(start, end), &state, true);
        total += out.loss_sum();
        let mut grads = out.grads.expect("requested");
        clip(&mut grads, config.clip);
        for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        }
        state = out.state;
        start = end;
    }
    total
}

/// Rescales all gradients together so their global L2 norm is at most `max`.
pub(crate) fn clip(grads: &mut Params, max: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max {
        let s = max / norm;
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
