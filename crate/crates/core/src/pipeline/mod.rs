//! End-to-end runs: data, channel and bigram, n-best lists, cross-validated
//! LM scores, features, reranker training with dev-tuned regularization, and
//! evaluation, for one or many LM-feature conditions.

mod cache;
mod config;
mod provenance;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{write_atomic, Cache, Key};
pub use config::{DataSource, FileFormat, LstmPreset, LstmSettings, PipelineConfig, RerankerSettings};
pub use provenance::{AuditSummary, FoldViolation, ModelRecord, Provenance, ScoreRecord, Split};

use crate::channel::{nbest, read_candidates_jsonl, train_channel, write_candidates_jsonl, CandidateList, ChannelModel};
use crate::corpus::grammar::Grammar;
use crate::corpus::{
    grammar_channel, make_folds, normalize, parse_dps, parse_tsv, synthesize_corpus, CorpusSplit, FillerLexicon,
    Label, Utterance,
};
use crate::eval::{self, EvalReport};
use crate::features::{self, FeatureVector, LmScores, LmSelection};
use crate::lm::{Direction, LanguageModel};
use crate::lstm::{train_lstm, LstmError, LstmModel};
use crate::ngram::{train_ngram, NgramConfig, NgramModel};
use crate::reranker::{train_reranker, RerankerError, RerankerModel, TrainingInstance};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Numeric { stage: &'static str, message: String },
    #[error("{stage}: {source}")]
    Io {
        stage: &'static str,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    fn data(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Data {
            stage,
            message: e.to_string(),
        }
    }

    fn io(stage: &'static str) -> impl Fn(std::io::Error) -> PipelineError {
        move |source| PipelineError::Io { stage, source }
    }
}

/// A row of an ablation table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    /// False reports the NCM top candidate as is.
    pub rerank: bool,
    pub lms: LmSelection,
}

impl Condition {
    fn with(name: &str, fwd_lstm: bool, bwd_lstm: bool, fwd_4g: bool, bwd_4g: bool) -> Condition {
        Condition {
            name: name.into(),
            rerank: true,
            lms: LmSelection {
                fwd_lstm,
                bwd_lstm,
                fwd_4g,
                bwd_4g,
            },
        }
    }

    pub fn ncm_alone() -> Condition {
        Condition {
            name: "ncm-alone".into(),
            rerank: false,
            lms: LmSelection::NONE,
        }
    }

    pub fn baseline() -> Condition {
        Condition::with("baseline", false, false, false, false)
    }

    pub fn forward() -> Condition {
        Condition::with("forward", true, false, false, false)
    }

    pub fn backward() -> Condition {
        Condition::with("backward", false, true, false, false)
    }

    pub fn both() -> Condition {
        Condition::with("both", true, true, false, false)
    }

    pub fn fourgram() -> Condition {
        Condition::with("4-gram", false, false, true, true)
    }

    pub fn fourgram_and_lstm() -> Condition {
        Condition::with("4-gram+lstm", true, true, true, true)
    }

    /// Baseline and the three LSTM direction settings.
    pub fn directions() -> Vec<Condition> {
        vec![Condition::baseline(), Condition::forward(), Condition::backward(), Condition::both()]
    }

    /// Baseline, 4-gram, LSTM and both LM families.
    pub fn lm_families() -> Vec<Condition> {
        let mut lstm = Condition::both();
        lstm.name = "lstm".into();
        vec![Condition::baseline(), Condition::fourgram(), lstm, Condition::fourgram_and_lstm()]
    }

    /// The single condition described by a config's `rerank` and `lms`.
    pub fn from_config(cfg: &PipelineConfig) -> Condition {
        if !cfg.rerank {
            return Condition::ncm_alone();
        }
        let l = cfg.lms;
        let name = match (l.fwd_lstm, l.bwd_lstm, l.fwd_4g, l.bwd_4g) {
            (false, false, false, false) => "baseline",
            (true, false, false, false) => "forward",
            (false, true, false, false) => "backward",
            (true, true, false, false) => "both",
            (false, false, true, true) => "4-gram",
            (true, true, true, true) => "4-gram+lstm",
            _ => "custom",
        };
        Condition::with(name, l.fwd_lstm, l.bwd_lstm, l.fwd_4g, l.bwd_4g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    /// Chosen L2 strength; `None` without reranking.
    pub lambda: Option<f64>,
    pub dev: EvalReport,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub results: Vec<ConditionResult>,
    pub split: CorpusSplit,
    pub provenance: Provenance,
}

impl RunOutput {
    pub fn result(&self, name: &str) -> Option<&ConditionResult> {
        self.results.iter().find(|r| r.condition.name == name)
    }

    /// Test-set table, one row per condition.
    pub fn table(&self) -> String {
        let rows: Vec<(String, EvalReport)> = self
            .results
            .iter()
            .map(|r| (r.condition.name.clone(), r.test.clone()))
            .collect();
        EvalReport::table(&rows)
    }
}

/// Loaded, normalized corpora.
#[derive(Clone, Debug)]
pub struct Corpora {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub split: CorpusSplit,
}

impl Corpora {
    pub fn get(&self, s: Split) -> &[Utterance] {
        match s {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

struct Log {
    on: bool,
    start: Instant,
}

impl Log {
    fn say(&self, msg: &str) {
        if self.on {
            eprintln!("[{:>7.1}s] {msg}", self.start.elapsed().as_secs_f64());
        }
    }
}

pub fn load_corpora(cfg: &PipelineConfig) -> Result<Corpora, PipelineError> {
    let (train, dev, test) = match &cfg.data {
        DataSource::Synthetic {
            utterances,
            rate,
            seed,
            dev_fraction,
            test_fraction,
        } => synthetic_corpora(*utterances, *rate, *seed, *dev_fraction, *test_fraction),
        DataSource::Files { train, dev, test, format } => (
            read_corpus(train, *format, "train-")?,
            read_corpus(dev, *format, "dev-")?,
            read_corpus(test, *format, "test-")?,
        ),
    };
    for u in train.iter().chain(&dev).chain(&test) {
        if u.gold.is_none() {
            return Err(PipelineError::data("load", format!("utterance {} has no gold labels", u.id)));
        }
    }
    let split = make_folds(&train, cfg.k_folds, cfg.seed)
        .map_err(|e| PipelineError::data("folds", e))?
        .with_held_out(dev.iter().map(|u| u.id.clone()).collect(), test.iter().map(|u| u.id.clone()).collect());
    if !split.is_consistent() {
        return Err(PipelineError::data("folds", "train, dev and test ids overlap"));
    }
    Ok(Corpora { train, dev, test, split })
}

/// Grammar sentences, disfluencies injected by the reference channel, then a
/// seeded shuffle into dev, test and train.
pub fn synthetic_corpora(
    n: usize,
    rate: f64,
    seed: u64,
    dev_fraction: f64,
    test_fraction: f64,
) -> (Vec<Utterance>, Vec<Utterance>, Vec<Utterance>) {
    let g = Grammar::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fluent: Vec<Utterance> = (0..n)
        .map(|i| Utterance::new(format!("syn{i:05}"), &g.sentence(&mut rng)))
        .collect();
    let mut all = synthesize_corpus(&fluent, &grammar_channel(), rate, seed.wrapping_add(1));
    all.shuffle(&mut rng);
    let n_dev = (n as f64 * dev_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    let rest = all.split_off(n_dev + n_test);
    let test = all.split_off(n_dev);
    (rest, all, test)
}

fn read_corpus(path: &Path, format: FileFormat, prefix: &str) -> Result<Vec<Utterance>, PipelineError> {
    let f = File::open(path).map_err(PipelineError::io("load"))?;
    let raw = match format {
        FileFormat::Tsv => parse_tsv(BufReader::new(f), prefix),
        FileFormat::Dps => parse_dps(BufReader::new(f), prefix),
    }
    .map_err(|e| PipelineError::data("load", format!("{}: {e}", path.display())))?;
    Ok(raw.iter().map(normalize).filter(|u| !u.is_empty()).collect())
}

fn fluent_sentences(utts: &[&Utterance]) -> Vec<Vec<String>> {
    utts.iter()
        .map(|u| u.fluent_words().into_iter().map(String::from).collect())
        .collect()
}

/// Everything shared by all conditions of a run.
pub struct Prepared {
    pub corpora: Corpora,
    pub channel: ChannelModel,
    pub bigram: NgramModel,
    pub lists: [Vec<CandidateList>; 3],
    /// Per split, per utterance, per candidate.
    pub scores: [Vec<Vec<LmScores>>; 3],
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LmKind {
    LstmFwd,
    LstmBwd,
    NgramFwd,
    NgramBwd,
}

impl LmKind {
    fn selected(sel: &LmSelection) -> Vec<LmKind> {
        let all = [
            (sel.fwd_lstm, LmKind::LstmFwd),
            (sel.bwd_lstm, LmKind::LstmBwd),
            (sel.fwd_4g, LmKind::NgramFwd),
            (sel.bwd_4g, LmKind::NgramBwd),
        ];
        all.into_iter().filter(|a| a.0).map(|a| a.1).collect()
    }

    fn name(self) -> &'static str {
        match self {
            LmKind::LstmFwd => features::LSTM_FWD,
            LmKind::LstmBwd => features::LSTM_BWD,
            LmKind::NgramFwd => features::NGRAM_FWD,
            LmKind::NgramBwd => features::NGRAM_BWD,
        }
    }

    fn direction(self) -> Direction {
        match self {
            LmKind::LstmFwd | LmKind::NgramFwd => Direction::Forward,
            LmKind::LstmBwd | LmKind::NgramBwd => Direction::Backward,
        }
    }

    fn set(self, scores: &mut LmScores, v: f64) {
        match self {
            LmKind::LstmFwd => scores.lstm_fwd = Some(v),
            LmKind::LstmBwd => scores.lstm_bwd = Some(v),
            LmKind::NgramFwd => scores.ngram_fwd = Some(v),
            LmKind::NgramBwd => scores.ngram_bwd = Some(v),
        }
    }
}

enum TrainedLm {
    Lstm(LstmModel),
    Ngram(NgramModel),
}

impl TrainedLm {
    fn as_lm(&self) -> &dyn LanguageModel {
        match self {
            TrainedLm::Lstm(m) => m,
            TrainedLm::Ngram(m) => m,
        }
    }

    fn bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        match self {
            TrainedLm::Lstm(m) => m.write(&mut buf).expect("in-memory write"),
            TrainedLm::Ngram(m) => m.write(&mut buf).expect("in-memory write"),
        }
        buf
    }

    fn ext(&self) -> &'static str {
        match self {
            TrainedLm::Lstm(_) => "dfls",
            TrainedLm::Ngram(_) => "dfng",
        }
    }
}

fn train_lm(
    kind: LmKind,
    sentences: &[Vec<String>],
    cfg: &PipelineConfig,
    cache: &Cache,
) -> Result<TrainedLm, PipelineError> {
    match kind {
        LmKind::LstmFwd | LmKind::LstmBwd => {
            let lc = cfg.lstm.config(kind.direction(), cfg.seed);
            let mut key = Key::new("lstm");
            key.add_json(&lc).add_sentences(sentences);
            if let Some(bytes) = cache.read(&key, "dfls") {
                if let Ok(m) = LstmModel::read(bytes.as_slice()) {
                    return Ok(TrainedLm::Lstm(m));
                }
            }
            let (m, _) = train_lstm(sentences, &lc).map_err(|e| match e {
                LstmError::Diverged { .. } => PipelineError::Numeric {
                    stage: "train-lstm",
                    message: e.to_string(),
                },
                other => PipelineError::data("train-lstm", other),
            })?;
            let lm = TrainedLm::Lstm(m);
            cache.write(&key, "dfls", &lm.bytes()).map_err(PipelineError::io("cache"))?;
            Ok(lm)
        }
        LmKind::NgramFwd | LmKind::NgramBwd => {
            let m = train_ngram(sentences, NgramConfig::fourgram(kind.direction()))
                .map_err(|e| PipelineError::data("train-ngram", e))?;
            Ok(TrainedLm::Ngram(m))
        }
    }
}

fn score_lists(lm: &dyn LanguageModel, lists: &[&CandidateList]) -> Vec<Vec<f64>> {
    let sentences: Vec<Vec<&str>> = lists
        .iter()
        .flat_map(|l| l.candidates.iter().map(|a| a.fluent_refs()))
        .collect();
    let flat = lm.logprob_batch(&sentences);
    let mut out = Vec::with_capacity(lists.len());
    let mut k = 0;
    for l in lists {
        out.push(flat[k..k + l.candidates.len()].to_vec());
        k += l.candidates.len();
    }
    out
}

fn nbest_lists(
    utts: &[Utterance],
    channel: &ChannelModel,
    bigram: &NgramModel,
    cfg: &PipelineConfig,
    cache: &Cache,
) -> Result<Vec<CandidateList>, PipelineError> {
    let nc = cfg.nbest_config();
    let mut key = Key::new("nbest");
    key.add_json(&nc).add_json(channel).add(&model_bytes(bigram)).add_json(&utts);
    if let Some(bytes) = cache.read(&key, "jsonl") {
        if let Ok(records) = read_candidates_jsonl(bytes.as_slice()) {
            if records.len() == utts.len() {
                let lists: Result<Vec<CandidateList>, String> = records
                    .into_iter()
                    .zip(utts)
                    .map(|(r, u)| r.into_list(u.gold.clone()))
                    .collect();
                if let Ok(lists) = lists {
                    return Ok(lists);
                }
            }
        }
    }
    let lists: Vec<CandidateList> = utts.iter().map(|u| nbest(u, channel, bigram, &nc)).collect();
    if let Some(bad) = lists.iter().flat_map(|l| &l.candidates).find(|a| !a.ncm_total_logprob.is_finite()) {
        return Err(PipelineError::Numeric {
            stage: "nbest",
            message: format!("non-finite score for {}", bad.utterance_id),
        });
    }
    let mut buf = Vec::new();
    write_candidates_jsonl(&mut buf, &lists).map_err(PipelineError::io("nbest"))?;
    cache.write(&key, "jsonl", &buf).map_err(PipelineError::io("cache"))?;
    Ok(lists)
}

fn model_bytes(m: &NgramModel) -> Vec<u8> {
    let mut buf = Vec::new();
    m.write(&mut buf).expect("in-memory write");
    buf
}

/// Runs every stage up to LM scoring; `needed` picks which LMs to train.
pub fn prepare(cfg: &PipelineConfig, needed: &LmSelection) -> Result<Prepared, PipelineError> {
    cfg.validate()?;
    let log = Log {
        on: cfg.verbose,
        start: Instant::now(),
    };
    let cache = Cache::new(cfg.cache_dir.clone());
    let corpora = load_corpora(cfg)?;
    log.say(&format!(
        "corpora: {} train, {} dev, {} test, {} folds",
        corpora.train.len(),
        corpora.dev.len(),
        corpora.test.len(),
        corpora.split.k()
    ));

    let channel = train_channel(&corpora.train, &FillerLexicon::default(), cfg.channel_alpha)
        .map_err(|e| PipelineError::data("train-channel", e))?;
    let train_refs: Vec<&Utterance> = corpora.train.iter().collect();
    let fluent_train = fluent_sentences(&train_refs);
    let bigram = train_ngram(&fluent_train, NgramConfig::bigram()).map_err(|e| PipelineError::data("train-ngram", e))?;
    log.say("channel and bigram trained");

    let mut lists: [Vec<CandidateList>; 3] = Default::default();
    for s in Split::ALL {
        lists[s as usize] = nbest_lists(corpora.get(s), &channel, &bigram, cfg, &cache)?;
        log.say(&format!("n-best lists for {}", s.name()));
    }

    let mut scores: [Vec<Vec<LmScores>>; 3] =
        std::array::from_fn(|s| lists[s].iter().map(|l| vec![LmScores::default(); l.candidates.len()]).collect());
    let mut provenance = Provenance::default();
    let train_index: std::collections::BTreeMap<&str, usize> =
        corpora.train.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();

    for kind in LmKind::selected(needed) {
        // fold-complement models for training utterances
        for (f, fold) in corpora.split.folds.iter().enumerate() {
            let held: BTreeSet<&str> = fold.iter().map(String::as_str).collect();
            let rest: Vec<&Utterance> = corpora.train.iter().filter(|u| !held.contains(u.id.as_str())).collect();
            let lm = train_lm(kind, &fluent_sentences(&rest), cfg, &cache)?;
            let id = format!("{}/fold{f:02}", kind.name());
            provenance.models.push(ModelRecord {
                id: id.clone(),
                lm: kind.name().into(),
                held_out_fold: Some(f),
                training_ids: rest.iter().map(|u| u.id.clone()).collect(),
            });
            let idx: Vec<usize> = fold.iter().map(|u| train_index[u.as_str()]).collect();
            let targets: Vec<&CandidateList> = idx.iter().map(|&i| &lists[0][i]).collect();
            for (&i, vals) in idx.iter().zip(score_lists(lm.as_lm(), &targets)) {
                for (slot, v) in scores[0][i].iter_mut().zip(vals) {
                    kind.set(slot, v);
                }
                provenance.scores.push(ScoreRecord {
                    utterance: corpora.train[i].id.clone(),
                    split: Split::Train,
                    lm: kind.name().into(),
                    model: id.clone(),
                });
            }
            log.say(&format!("{id} trained and applied"));
        }
        // all-train model for dev and test
        let lm = train_lm(kind, &fluent_train, cfg, &cache)?;
        let id = format!("{}/all", kind.name());
        provenance.models.push(ModelRecord {
            id: id.clone(),
            lm: kind.name().into(),
            held_out_fold: None,
            training_ids: corpora.train.iter().map(|u| u.id.clone()).collect(),
        });
        for s in [Split::Dev, Split::Test] {
            let targets: Vec<&CandidateList> = lists[s as usize].iter().collect();
            for (i, vals) in score_lists(lm.as_lm(), &targets).into_iter().enumerate() {
                for (slot, v) in scores[s as usize][i].iter_mut().zip(vals) {
                    kind.set(slot, v);
                }
                provenance.scores.push(ScoreRecord {
                    utterance: corpora.get(s)[i].id.clone(),
                    split: s,
                    lm: kind.name().into(),
                    model: id.clone(),
                });
            }
        }
        if let Some(dir) = &cfg.out_dir {
            let path = dir.join("lm").join(format!("{}.{}", kind.name(), lm.ext()));
            write_atomic(&path, &lm.bytes()).map_err(PipelineError::io("write"))?;
        }
        log.say(&format!("{id} trained and applied"));
    }

    Ok(Prepared {
        corpora,
        channel,
        bigram,
        lists,
        scores,
        provenance,
    })
}

fn split_features(
    lists: &[CandidateList],
    scores: &[Vec<LmScores>],
    sel: &LmSelection,
) -> Result<Vec<Vec<FeatureVector>>, PipelineError> {
    lists
        .iter()
        .zip(scores)
        .map(|(l, sc)| {
            (0..l.candidates.len())
                .map(|r| features::extract(l, r, &sc[r], sel))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::data("features", e))
}

fn gold_of(lists: &[CandidateList]) -> Vec<Vec<Label>> {
    lists
        .iter()
        .map(|l| l.utterance.gold.clone().expect("checked at load"))
        .collect()
}

fn ids_of(lists: &[CandidateList]) -> Vec<String> {
    lists.iter().map(|l| l.utterance.id.clone()).collect()
}

fn evaluate(lists: &[CandidateList], choice: &[usize]) -> EvalReport {
    let predicted: Vec<Vec<Label>> = lists
        .iter()
        .zip(choice)
        .map(|(l, &c)| l.candidates[c].labels.clone())
        .collect();
    eval::score(&ids_of(lists), &predicted, &gold_of(lists)).expect("labels align with tokens")
}

fn choose_all(model: &RerankerModel, feats: &[Vec<FeatureVector>]) -> Result<Vec<usize>, PipelineError> {
    feats
        .iter()
        .map(|f| model.choose(f))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::data("predict", e))
}

fn rerank_error(e: RerankerError) -> PipelineError {
    match e {
        RerankerError::Io(source) => PipelineError::Io {
            stage: "train-reranker",
            source,
        },
        other => PipelineError::data("train-reranker", other),
    }
}

/// Trains the reranker for one condition, tunes lambda on dev and scores dev
/// and test. Writes the model and test predictions under `out`.
pub fn run_condition(
    cfg: &PipelineConfig,
    prep: &Prepared,
    cond: &Condition,
    out: Option<&Path>,
) -> Result<ConditionResult, PipelineError> {
    let [train, dev, test] = &prep.lists;
    let (lambda, dev_choice, test_choice, model) = if cond.rerank {
        let feats: Vec<Vec<Vec<FeatureVector>>> = Split::ALL
            .iter()
            .map(|&s| split_features(&prep.lists[s as usize], &prep.scores[s as usize], &cond.lms))
            .collect::<Result<_, _>>()?;
        let instances: Vec<TrainingInstance> = train
            .iter()
            .zip(&feats[0])
            .map(|(l, f)| {
                let labels: Vec<Vec<Label>> = l.candidates.iter().map(|a| a.labels.clone()).collect();
                TrainingInstance::new(f.clone(), &labels, l.utterance.gold.as_deref().expect("checked at load"))
            })
            .collect();
        let mut best: Option<(f64, f64, RerankerModel, Vec<usize>)> = None;
        for &lambda in &cfg.reranker.lambdas {
            let model = train_reranker(&instances, lambda, cfg.reranker.iterations).map_err(rerank_error)?;
            if model.weights.iter().any(|w| !w.is_finite()) {
                return Err(PipelineError::Numeric {
                    stage: "train-reranker",
                    message: format!("non-finite weights at lambda {lambda}"),
                });
            }
            let choice = choose_all(&model, &feats[1])?;
            let f = evaluate(dev, &choice).f_score;
            if best.as_ref().map_or(true, |b| f > b.1) {
                best = Some((lambda, f, model, choice));
            }
        }
        let (lambda, _, model, dev_choice) = best.expect("lambdas validated non-empty");
        let test_choice = choose_all(&model, &feats[2])?;
        if cfg.dump_features {
            if let Some(dir) = out {
                for (s, f) in [(Split::Dev, &feats[1]), (Split::Test, &feats[2])] {
                    let rows: Vec<(String, Vec<FeatureVector>)> =
                        ids_of(&prep.lists[s as usize]).into_iter().zip(f.iter().cloned()).collect();
                    let mut buf = Vec::new();
                    features::write_features_jsonl(&mut buf, &rows).map_err(PipelineError::io("features"))?;
                    write_atomic(&dir.join(format!("features_{}.jsonl", s.name())), &buf)
                        .map_err(PipelineError::io("write"))?;
                }
            }
        }
        (Some(lambda), dev_choice, test_choice, Some(model))
    } else {
        (None, vec![0; dev.len()], vec![0; test.len()], None)
    };
    if let Some(dir) = out {
        if let Some(m) = &model {
            let mut buf = Vec::new();
            m.write(&mut buf).map_err(rerank_error)?;
            write_atomic(&dir.join("reranker.dfrr"), &buf).map_err(PipelineError::io("write"))?;
        }
        let predicted: Vec<Utterance> = test
            .iter()
            .zip(&test_choice)
            .map(|(l, &c)| Utterance {
                gold: Some(l.candidates[c].labels.clone()),
                ..l.utterance.clone()
            })
            .collect();
        let mut buf = Vec::new();
        crate::corpus::write_tsv(&mut buf, &predicted).map_err(PipelineError::io("write"))?;
        write_atomic(&dir.join("test_predictions.tsv"), &buf).map_err(PipelineError::io("write"))?;
    }
    Ok(ConditionResult {
        condition: cond.clone(),
        lambda,
        dev: evaluate(dev, &dev_choice),
        test: evaluate(test, &test_choice),
    })
}

/// Shared artifacts of a prepared run.
fn write_prepared(cfg: &PipelineConfig, prep: &Prepared, dir: &Path) -> Result<(), PipelineError> {
    let w = |name: &str, bytes: Vec<u8>| write_atomic(&dir.join(name), &bytes).map_err(PipelineError::io("write"));
    let mut portable = cfg.clone();
    portable.out_dir = None;
    portable.cache_dir = None;
    w("config.toml", portable.to_toml().into_bytes())?;
    w("split.json", json_bytes(&prep.corpora.split))?;
    w("channel.json", json_bytes(&prep.channel))?;
    w("bigram.dfng", model_bytes(&prep.bigram))?;
    for s in Split::ALL {
        let mut buf = Vec::new();
        write_candidates_jsonl(&mut buf, &prep.lists[s as usize]).map_err(PipelineError::io("write"))?;
        w(&format!("nbest_{}.jsonl", s.name()), buf)?;
    }
    w("provenance.json", json_bytes(&prep.provenance))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

fn union(conditions: &[Condition]) -> LmSelection {
    conditions.iter().fold(LmSelection::NONE, |a, c| LmSelection {
        fwd_lstm: a.fwd_lstm || c.lms.fwd_lstm,
        bwd_lstm: a.bwd_lstm || c.lms.bwd_lstm,
        fwd_4g: a.fwd_4g || c.lms.fwd_4g,
        bwd_4g: a.bwd_4g || c.lms.bwd_4g,
    })
}

fn condition_dir(out: Option<&PathBuf>, cond: &Condition) -> Option<PathBuf> {
    out.map(|d| d.join("conditions").join(&cond.name))
}

/// Runs every condition over shared n-best lists and LM scores. An empty
/// condition list yields an empty table without touching any data.
pub fn ablation_matrix(cfg: &PipelineConfig, conditions: &[Condition]) -> Result<RunOutput, PipelineError> {
    if conditions.is_empty() {
        cfg.validate()?;
        return Ok(RunOutput {
            results: Vec::new(),
            split: CorpusSplit {
                train: BTreeSet::new(),
                dev: BTreeSet::new(),
                test: BTreeSet::new(),
                folds: Vec::new(),
            },
            provenance: Provenance::default(),
        });
    }
    let prep = prepare(cfg, &union(conditions))?;
    let log = Log {
        on: cfg.verbose,
        start: Instant::now(),
    };
    if let Some(dir) = &cfg.out_dir {
        write_prepared(cfg, &prep, dir)?;
    }
    let mut results = Vec::with_capacity(conditions.len());
    for cond in conditions {
        let out = condition_dir(cfg.out_dir.as_ref(), cond);
        results.push(run_condition(cfg, &prep, cond, out.as_deref())?);
        log.say(&format!("condition {} done", cond.name));
    }
    let output = RunOutput {
        results,
        split: prep.corpora.split.clone(),
        provenance: prep.provenance,
    };
    if let Some(dir) = &cfg.out_dir {
        write_atomic(&dir.join("report.json"), &json_bytes(&output.results)).map_err(PipelineError::io("write"))?;
        write_atomic(&dir.join("report.txt"), output.table().as_bytes()).map_err(PipelineError::io("write"))?;
    }
    Ok(output)
}

/// The single condition named by the config.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    ablation_matrix(cfg, &[Condition::from_config(cfg)])
}
