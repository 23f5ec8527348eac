//! Parameter tensors and the batched forward/backward pass.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `(input + hidden) x 4 hidden`; gate blocks are input, forget, cell, output.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// `vocab x embed`
    pub embedding: Array2<f64>,
    pub layers: Vec<Layer>,
    /// `hidden x vocab`
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl Params {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, layers: usize) -> Params {
        Params {
            embedding: Array2::zeros((vocab, embed)),
            layers: (0..layers)
                .map(|l| {
                    let input = if l == 0 { embed } else { hidden };
                    Layer {
                        w: Array2::zeros((input + hidden, 4 * hidden)),
                        b: Array1::zeros(4 * hidden),
                    }
                })
                .collect(),
            w_out: Array2::zeros((hidden, vocab)),
            b_out: Array1::zeros(vocab),
        }
    }

    pub fn uniform<R: Rng>(vocab: usize, embed: usize, hidden: usize, layers: usize, scale: f64, rng: &mut R) -> Params {
        let mut p = Params::zeros(vocab, embed, hidden, layers);
        for (_, t) in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-scale..scale));
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn vocab(&self) -> usize {
        self.w_out.ncols()
    }

    /// Every tensor as a flat slice, in the fixed serialization order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_slice().expect("standard layout"))];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w"), layer.w.as_slice().expect("standard layout")));
            out.push((format!("layer{l}.b"), layer.b.as_slice().expect("standard layout")));
        }
        out.push(("w_out".into(), self.w_out.as_slice().expect("standard layout")));
        out.push(("b_out".into(), self.b_out.as_slice().expect("standard layout")));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![(
            "embedding".to_string(),
            self.embedding.as_slice_mut().expect("standard layout"),
        )];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.w"), layer.w.as_slice_mut().expect("standard layout")));
            out.push((format!("layer{l}.b"), layer.b.as_slice_mut().expect("standard layout")));
        }
        out.push(("w_out".into(), self.w_out.as_slice_mut().expect("standard layout")));
        out.push(("b_out".into(), self.b_out.as_slice_mut().expect("standard layout")));
        out
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![self.embedding.shape().to_vec()];
        for layer in &self.layers {
            out.push(layer.w.shape().to_vec());
            out.push(layer.b.shape().to_vec());
        }
        out.push(self.w_out.shape().to_vec());
        out.push(self.b_out.shape().to_vec());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

/// Time-major minibatch: `inputs[t][b]`, `targets[t][b]`, `mask[t][b]`.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    pub mask: Vec<Vec<f64>>,
}

impl Batch {
    /// Builds a padded batch from id sequences. Each row is `<eos> w1 .. wn`
    /// predicting `w1 .. wn <eos>`; `eos` is the shared boundary id.
    pub fn from_sequences(seqs: &[Vec<usize>], eos: usize) -> Batch {
        let steps = seqs.iter().map(|s| s.len() + 1).max().unwrap_or(0);
        let mut batch = Batch::default();
        for t in 0..steps {
            let mut inp = Vec::with_capacity(seqs.len());
            let mut tgt = Vec::with_capacity(seqs.len());
            let mut m = Vec::with_capacity(seqs.len());
            for s in seqs {
                let live = t <= s.len();
                inp.push(if t == 0 || !live { eos } else { s[t - 1] });
                tgt.push(if t < s.len() { s[t] } else { eos });
                m.push(if live { 1.0 } else { 0.0 });
            }
            batch.inputs.push(inp);
            batch.targets.push(tgt);
            batch.mask.push(m);
        }
        batch
    }

    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn width(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn window(&self, start: usize, end: usize) -> Batch {
        Batch {
            inputs: self.inputs[start..end].to_vec(),
            targets: self.targets[start..end].to_vec(),
            mask: self.mask[start..end].to_vec(),
        }
    }
}

/// Recurrent state per layer, each `batch x hidden`.
#[derive(Clone, Debug)]
pub struct State {
    pub h: Vec<Array2<f64>>,
    pub c: Vec<Array2<f64>>,
}

impl State {
    pub fn zeros(layers: usize, width: usize, hidden: usize) -> State {
        State {
            h: vec![Array2::zeros((width, hidden)); layers],
            c: vec![Array2::zeros((width, hidden)); layers],
        }
    }
}

struct StepCache {
    zin: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c_prev: Array2<f64>,
    tc: Array2<f64>,
}

pub struct Outcome {
    /// `log p(target)` per step and row, zero where masked.
    pub logp: Array2<f64>,
    pub state: State,
    pub grads: Option<Params>,
}

impl Outcome {
    pub fn loss_sum(&self) -> f64 {
        -self.logp.sum()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn embed(params: &Params, ids: &[usize]) -> Array2<f64> {
    params.embedding.select(Axis(0), ids)
}

/// Layer stack over a batch; returns top-layer outputs per step, the final
/// state and (when `keep`) the per-step caches.
fn forward_layers(
    params: &Params,
    inputs: &[Vec<usize>],
    state: &State,
    keep: bool,
) -> (Vec<Array2<f64>>, State, Vec<Vec<StepCache>>) {
    let hidden = params.hidden();
    let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(params.layers.len());
    let mut out_state = state.clone();
    let mut below: Vec<Array2<f64>> = inputs.iter().map(|ids| embed(params, ids)).collect();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut h = state.h[l].clone();
        let mut c = state.c[l].clone();
        let mut cache = Vec::with_capacity(if keep { inputs.len() } else { 0 });
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &below {
            let zin = concatenate(Axis(1), &[x.view(), h.view()]).expect("matching rows");
            let mut z = zin.dot(&layer.w);
            z += &layer.b;
            let i = z.slice(s![.., 0..hidden]).mapv(sigmoid);
            let f = z.slice(s![.., hidden..2 * hidden]).mapv(sigmoid);
            let g = z.slice(s![.., 2 * hidden..3 * hidden]).mapv(f64::tanh);
            let o = z.slice(s![.., 3 * hidden..4 * hidden]).mapv(sigmoid);
            let c_next = &f * &c + &i * &g;
            let tc = c_next.mapv(f64::tanh);
            h = &o * &tc;
            outputs.push(h.clone());
            if keep {
                cache.push(StepCache {
                    zin,
                    i,
                    f,
                    g,
                    o,
                    c_prev: c,
                    tc,
                });
            }
            c = c_next;
        }
        out_state.h[l] = h;
        out_state.c[l] = c;
        caches.push(cache);
        below = outputs;
    }
    (below, out_state, caches)
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
}

/// Next-word distribution after feeding `ids` to a single-row batch.
pub fn final_distribution(params: &Params, ids: &[usize]) -> Vec<f64> {
    let inputs: Vec<Vec<usize>> = ids.iter().map(|&i| vec![i]).collect();
    let state = State::zeros(params.layers.len(), 1, params.hidden());
    let (top, _, _) = forward_layers(params, &inputs, &state, false);
    let last = top.last().expect("at least one input");
    let mut logits = last.dot(&params.w_out);
    logits += &params.b_out;
    softmax_rows(&mut logits);
    logits.row(0).to_vec()
}

/// Runs the network over a batch from `state`. With `backward`, also returns
/// gradients of `loss_sum / width` (state entering the batch is a constant).
pub fn run(params: &Params, batch: &Batch, state: &State, backward: bool) -> Outcome {
    let steps = batch.steps();
    let width = batch.width();
    let hidden = params.hidden();
    let n_layers = params.layers.len();
    let (below, out_state, caches) = forward_layers(params, &batch.inputs, state, backward);

    // output layer over all steps at once
    let stacked = if steps > 0 {
        let views: Vec<ArrayView2<f64>> = below.iter().map(|a| a.view()).collect();
        concatenate(Axis(0), &views).expect("matching columns")
    } else {
        Array2::zeros((0, hidden))
    };
    let mut logits = stacked.dot(&params.w_out);
    logits += &params.b_out;
    softmax_rows(&mut logits);
    let mut logp = Array2::zeros((steps, width));
    for (r, row) in logits.rows().into_iter().enumerate() {
        let (t, b) = (r / width, r % width);
        let m = batch.mask[t][b];
        if m > 0.0 {
            logp[[t, b]] = m * row[batch.targets[t][b]].ln();
        }
    }
    if !backward {
        return Outcome {
            logp,
            state: out_state,
            grads: None,
        };
    }

    // `logits` now holds probabilities
    let mut grads = Params::zeros(params.vocab(), params.embedding.ncols(), hidden, n_layers);
    let scale = 1.0 / width as f64;
    let mut dlogits = logits;
    for (r, mut row) in dlogits.rows_mut().into_iter().enumerate() {
        let (t, b) = (r / width, r % width);
        let m = batch.mask[t][b] * scale;
        row[batch.targets[t][b]] -= 1.0;
        row.mapv_inplace(|v| v * m);
    }
    general_mat_mul(1.0, &stacked.t(), &dlogits, 0.0, &mut grads.w_out);
    grads.b_out = dlogits.sum_axis(Axis(0));
    let dstacked = dlogits.dot(&params.w_out.t());
    let mut dabove: Vec<Array2<f64>> = (0..steps)
        .map(|t| dstacked.slice(s![t * width..(t + 1) * width, ..]).to_owned())
        .collect();

    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let input = layer.w.nrows() - hidden;
        let gl = &mut grads.layers[l];
        let mut dh_next = Array2::<f64>::zeros((width, hidden));
        let mut dc_next = Array2::<f64>::zeros((width, hidden));
        let mut dbelow = vec![Array2::<f64>::zeros((0, 0)); steps];
        for t in (0..steps).rev() {
            let k = &caches[l][t];
            let dh = &dabove[t] + &dh_next;
            let d_o = &dh * &k.tc;
            let dc = &dc_next + &(&dh * &k.o * &k.tc.mapv(|v| 1.0 - v * v));
            let di = &dc * &k.g;
            let dg = &dc * &k.i;
            let df = &dc * &k.c_prev;
            dc_next = &dc * &k.f;
            let mut dz = Array2::<f64>::zeros((width, 4 * hidden));
            dz.slice_mut(s![.., 0..hidden]).assign(&(&di * &k.i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., hidden..2 * hidden]).assign(&(&df * &k.f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., 2 * hidden..3 * hidden]).assign(&(&dg * &k.g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![.., 3 * hidden..]).assign(&(&d_o * &k.o.mapv(|v| v * (1.0 - v))));
            general_mat_mul(1.0, &k.zin.t(), &dz, 1.0, &mut gl.w);
            gl.b += &dz.sum_axis(Axis(0));
            let dzin = dz.dot(&layer.w.t());
            dbelow[t] = dzin.slice(s![.., 0..input]).to_owned();
            dh_next = dzin.slice(s![.., input..]).to_owned();
        }
        dabove = dbelow;
    }
    for (t, dx) in dabove.iter().enumerate() {
        for (b, &id) in batch.inputs[t].iter().enumerate() {
            let mut row = grads.embedding.row_mut(id);
            row += &dx.row(b);
        }
    }
    Outcome {
        logp,
        state: out_state,
        grads: Some(grads),
    }
}
