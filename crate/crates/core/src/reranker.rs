//! Log-linear reranker over n-best candidates, trained to maximize the
//! expected-statistics f-score `2A / (E + G)` minus an L2 penalty, where `A`
//! and `E` are posterior-expected correct and predicted EDITED counts and `G`
//! is the number of gold EDITED tokens.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::eval::Counts;
use crate::features::{FeatureSpace, FeatureVector};

const MAGIC: &str = "DFRR1";
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum RerankerError {
    #[error("no training instances")]
    NoInstances,
    #[error("training data has no gold EDITED tokens")]
    Degenerate,
    #[error("instance {0} has no candidates")]
    EmptyInstance(usize),
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("bad model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One utterance's candidates with their EDITED statistics against gold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub features: Vec<FeatureVector>,
    /// Correctly predicted EDITED tokens per candidate.
    pub correct: Vec<f64>,
    /// Predicted EDITED tokens per candidate.
    pub predicted: Vec<f64>,
    pub gold: f64,
}

impl TrainingInstance {
    pub fn new(features: Vec<FeatureVector>, candidates: &[Vec<Label>], gold: &[Label]) -> TrainingInstance {
        let counts: Vec<Counts> = candidates.iter().map(|c| Counts::of(c, gold)).collect();
        TrainingInstance {
            features,
            correct: counts.iter().map(|c| c.true_positives as f64).collect(),
            predicted: counts.iter().map(|c| c.predicted() as f64).collect(),
            gold: gold.iter().filter(|l| **l == Label::Edited).count() as f64,
        }
    }
}

/// Dense instance in standardized coordinates.
#[derive(Clone, Debug)]
pub struct DenseInstance {
    pub x: Vec<Vec<f64>>,
    pub correct: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// `EF(w) - lambda |w|^2` over dense instances.
#[derive(Clone, Debug)]
pub struct Objective {
    pub instances: Vec<DenseInstance>,
    pub gold: f64,
    pub lambda: f64,
    pub dim: usize,
}

fn softmax(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    scores.iter_mut().for_each(|s| *s /= total);
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

impl Objective {
    fn posterior(&self, inst: &DenseInstance, w: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = inst.x.iter().map(|x| dot(w, x)).collect();
        softmax(&mut p);
        p
    }

    /// Expected correct and predicted counts.
    fn expectations(&self, w: &[f64]) -> (f64, f64) {
        let (mut a, mut e) = (0.0, 0.0);
        for inst in &self.instances {
            let p = self.posterior(inst, w);
            a += dot(&p, &inst.correct);
            e += dot(&p, &inst.predicted);
        }
        (a, e)
    }

    pub fn expected_f(&self, w: &[f64]) -> f64 {
        let (a, e) = self.expectations(w);
        2.0 * a / (e + self.gold)
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.expected_f(w) - self.lambda * dot(w, w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let (mut a, mut e) = (0.0, 0.0);
        let mut da = vec![0.0; self.dim];
        let mut de = vec![0.0; self.dim];
        for inst in &self.instances {
            let p = self.posterior(inst, w);
            let mut mean = vec![0.0; self.dim];
            for (pc, x) in p.iter().zip(&inst.x) {
                mean.iter_mut().zip(x).for_each(|(m, v)| *m += pc * v);
            }
            for (c, x) in inst.x.iter().enumerate() {
                let (gc, ec) = (p[c] * inst.correct[c], p[c] * inst.predicted[c]);
                a += gc;
                e += ec;
                for k in 0..self.dim {
                    let centered = x[k] - mean[k];
                    da[k] += gc * centered;
                    de[k] += ec * centered;
                }
            }
        }
        let denom = e + self.gold;
        (0..self.dim)
            .map(|k| 2.0 * (da[k] * denom - a * de[k]) / (denom * denom) - 2.0 * self.lambda * w[k])
            .collect()
    }

    /// Gradient ascent from zero with backtracking line search.
    pub fn maximize(&self, iterations: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        let mut f = self.value(&w);
        let mut step = 1.0;
        for _ in 0..iterations {
            let g = self.gradient(&w);
            let gg = dot(&g, &g);
            if gg < 1e-24 {
                break;
            }
            step *= 2.0;
            loop {
                let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                let ft = self.value(&trial);
                if ft >= f + ARMIJO * step * gg {
                    w = trial;
                    f = ft;
                    break;
                }
                step *= 0.5;
                if step < MIN_STEP {
                    return w;
                }
            }
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankerModel {
    pub names: Vec<String>,
    /// Standardization: feature `k` enters as `(x - shift[k]) / scale[k]`.
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambda: f64,
    #[serde(skip)]
    space: FeatureSpace,
}

impl RerankerModel {
    pub fn new(names: Vec<String>, shift: Vec<f64>, scale: Vec<f64>, weights: Vec<f64>, lambda: f64) -> Self {
        let space = FeatureSpace::frozen(names.clone());
        RerankerModel {
            names,
            shift,
            scale,
            weights,
            lambda,
            space,
        }
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn weight(&self, name: &str) -> Option<f64> {
        self.space.index_of(name).map(|i| self.weights[i])
    }

    fn standardize(&self, fv: &FeatureVector) -> Vec<f64> {
        let raw = self.space.dense(fv);
        raw.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn score(&self, fv: &FeatureVector) -> f64 {
        dot(&self.weights, &self.standardize(fv))
    }

    pub fn posterior(&self, candidates: &[FeatureVector]) -> Vec<f64> {
        let mut p: Vec<f64> = candidates.iter().map(|fv| self.score(fv)).collect();
        softmax(&mut p);
        p
    }

    /// Highest-scoring candidate; ties go to the earlier (better NCM rank) one.
    pub fn choose(&self, candidates: &[FeatureVector]) -> Result<usize, RerankerError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, fv) in candidates.iter().enumerate() {
            let s = self.score(fv);
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|b| b.0).ok_or(RerankerError::EmptyCandidates)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), RerankerError> {
        writeln!(w, "{MAGIC}")?;
        serde_json::to_writer(&mut w, self).map_err(|e| RerankerError::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<RerankerModel, RerankerError> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(RerankerError::Format(format!("expected {MAGIC} header")));
        }
        let m: RerankerModel = serde_json::from_reader(r).map_err(|e| RerankerError::Format(e.to_string()))?;
        let n = m.names.len();
        if m.shift.len() != n || m.scale.len() != n || m.weights.len() != n {
            return Err(RerankerError::Format("vector lengths differ".into()));
        }
        if m.weights.iter().chain(&m.shift).chain(&m.scale).any(|x| !x.is_finite()) || m.lambda < 0.0 {
            return Err(RerankerError::Format("non-finite parameters".into()));
        }
        Ok(RerankerModel::new(m.names, m.shift, m.scale, m.weights, m.lambda))
    }
}

fn is_indicator(name: &str) -> bool {
    name.contains("Flags_")
}

/// Feature space, standardization and dense instances for training. Features
/// constant over all training candidates are dropped.
pub fn prepare(instances: &[TrainingInstance], lambda: f64) -> Result<(RerankerModel, Objective), RerankerError> {
    if instances.is_empty() {
        return Err(RerankerError::NoInstances);
    }
    if let Some(i) = instances.iter().position(|s| s.features.is_empty()) {
        return Err(RerankerError::EmptyInstance(i));
    }
    let gold: f64 = instances.iter().map(|s| s.gold).sum();
    if gold <= 0.0 {
        return Err(RerankerError::Degenerate);
    }
    let all = FeatureSpace::from_vectors(instances.iter().flat_map(|s| &s.features));
    let rows: Vec<Vec<f64>> = instances
        .iter()
        .flat_map(|s| s.features.iter().map(|fv| all.dense(fv)))
        .collect();
    let n = rows.len() as f64;
    let mut names = Vec::new();
    let mut shift = Vec::new();
    let mut scale = Vec::new();
    for (k, name) in all.names().iter().enumerate() {
        let first = rows[0][k];
        if rows.iter().all(|r| r[k] == first) {
            continue;
        }
        names.push(name.clone());
        if is_indicator(name) {
            shift.push(0.0);
            scale.push(1.0);
        } else {
            let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
            shift.push(mean);
            scale.push(var.sqrt());
        }
    }
    let dim = names.len();
    let model = RerankerModel::new(names, shift, scale, vec![0.0; dim], lambda);
    let dense = instances
        .iter()
        .map(|s| DenseInstance {
            x: s.features.iter().map(|fv| model.standardize(fv)).collect(),
            correct: s.correct.clone(),
            predicted: s.predicted.clone(),
        })
        .collect();
    let objective = Objective {
        instances: dense,
        gold,
        lambda,
        dim,
    };
    Ok((model, objective))
}

pub fn train_reranker(
    instances: &[TrainingInstance],
    lambda: f64,
    iterations: usize,
) -> Result<RerankerModel, RerankerError> {
    let (mut model, objective) = prepare(instances, lambda)?;
    model.weights = objective.maximize(iterations);
    Ok(model)
}
