use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use disfluency::channel::{nbest, read_candidates_jsonl, train_channel, write_candidates_jsonl, CandidateList, ChannelModel};
use disfluency::corpus::{normalize, parse_dps, parse_tsv, write_tsv, FillerLexicon, Label, Utterance};
use disfluency::eval::{self, EvalReport};
use disfluency::features::{self, FeatureVector, LmScores, LmSelection};
use disfluency::lm::{Direction, LanguageModel};
use disfluency::lstm::{train_lstm, LstmModel};
use disfluency::ngram::{train_ngram, NgramConfig, NgramModel};
use disfluency::pipeline::{
    ablation_matrix, run_pipeline, synthetic_corpora, Condition, LstmPreset, LstmSettings, PipelineConfig,
    PipelineError,
};
use disfluency::reranker::{train_reranker, RerankerModel, TrainingInstance};

use crate::{Command, Dir, Format, LmPaths, Preset, RunArgs, Table};

pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => Failure::Usage(e.to_string()),
            PipelineError::Numeric { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn data(context: impl fmt::Display) -> impl FnOnce(Box<dyn std::error::Error>) -> Failure {
    move |e| Failure::Data(format!("{context}: {e}"))
}

type Result<T> = std::result::Result<T, Failure>;

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Normalize { input, format, output } => {
            let utts = read_corpus(&input, format)?;
            write_corpus(&output, &utts)
        }
        Command::Synth {
            utterances,
            rate,
            seed,
            output,
        } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Failure::Usage(format!("rate {rate} outside [0, 1]")));
            }
            let (mut train, dev, test) = synthetic_corpora(utterances, rate, seed, 0.0, 0.0);
            train.extend(dev);
            train.extend(test);
            train.sort_by(|a, b| a.id.cmp(&b.id));
            write_corpus(&output, &train)
        }
        Command::TrainChannel {
            train,
            format,
            alpha,
            output,
        } => {
            let utts = read_corpus(&train, format)?;
            let m = train_channel(&utts, &FillerLexicon::default(), alpha).map_err(|e| Failure::Data(e.to_string()))?;
            let text = serde_json::to_string_pretty(&m).expect("channel serializes");
            write_file(&output, text.as_bytes())
        }
        Command::TrainNgram {
            train,
            format,
            order,
            min_count,
            direction,
            output,
        } => {
            let utts = read_corpus(&train, format)?;
            let config = NgramConfig {
                order,
                min_count: min_count.unwrap_or(if order >= 3 { 2 } else { 1 }),
                direction: direction.into(),
            };
            let m = train_ngram(&fluent(&utts), config).map_err(|e| Failure::Data(e.to_string()))?;
            let mut buf = Vec::new();
            m.write(&mut buf).map_err(|e| Failure::Data(e.to_string()))?;
            write_file(&output, &buf)
        }
        Command::TrainLstm {
            train,
            format,
            direction,
            preset,
            epochs,
            seed,
            output,
        } => {
            let utts = read_corpus(&train, format)?;
            let settings = LstmSettings {
                preset: preset.into(),
                epochs,
                ..Default::default()
            };
            let config = settings.config(direction.into(), seed);
            let (m, report) = train_lstm(&fluent(&utts), &config).map_err(|e| match e {
                disfluency::lstm::LstmError::Diverged { .. } => Failure::Numeric(e.to_string()),
                other => Failure::Data(other.to_string()),
            })?;
            for (i, l) in report.epoch_loss.iter().enumerate() {
                eprintln!("epoch {:>2}  loss {l:.4}", i + 1);
            }
            let mut buf = Vec::new();
            m.write(&mut buf).map_err(|e| Failure::Data(e.to_string()))?;
            write_file(&output, &buf)
        }
        Command::Nbest {
            input,
            format,
            channel,
            bigram,
            n,
            output,
        } => {
            if n == 0 {
                return Err(Failure::Usage("n must be at least 1".into()));
            }
            let utts = read_corpus(&input, format)?;
            let text = fs::read_to_string(&channel).map_err(|e| data(channel.display())(e.into()))?;
            let ch: ChannelModel = serde_json::from_str(&text).map_err(|e| data(channel.display())(e.into()))?;
            let lm = read_ngram(&bigram)?;
            let cfg = disfluency::channel::NbestConfig {
                n,
                ..Default::default()
            };
            let lists: Vec<CandidateList> = utts.iter().map(|u| nbest(u, &ch, &lm, &cfg)).collect();
            let mut buf = Vec::new();
            write_candidates_jsonl(&mut buf, &lists).map_err(|e| Failure::Data(e.to_string()))?;
            write_file(&output, &buf)
        }
        Command::ExtractFeatures { nbest, lms, output } => {
            let lists = read_nbest(&nbest, None)?;
            let loaded = Lms::load(&lms)?;
            let feats = features_for(&lists, &loaded, &loaded.selection())?;
            let rows: Vec<(String, Vec<FeatureVector>)> =
                lists.iter().map(|l| l.utterance.id.clone()).zip(feats).collect();
            let mut buf = Vec::new();
            features::write_features_jsonl(&mut buf, &rows).map_err(|e| Failure::Data(e.to_string()))?;
            write_file(&output, &buf)
        }
        Command::TrainReranker {
            nbest,
            gold,
            format,
            lms,
            lambda,
            iterations,
            output,
        } => {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(Failure::Usage(format!("lambda {lambda} must be finite and non-negative")));
            }
            let gold = read_corpus(&gold, format)?;
            let lists = read_nbest(&nbest, Some(&gold))?;
            let loaded = Lms::load(&lms)?;
            let feats = features_for(&lists, &loaded, &loaded.selection())?;
            let instances: Vec<TrainingInstance> = lists
                .iter()
                .zip(feats)
                .map(|(l, f)| {
                    let labels: Vec<Vec<Label>> = l.candidates.iter().map(|a| a.labels.clone()).collect();
                    TrainingInstance::new(f, &labels, l.utterance.gold.as_deref().unwrap_or(&[]))
                })
                .collect();
            let m = train_reranker(&instances, lambda, iterations).map_err(|e| Failure::Data(e.to_string()))?;
            if m.weights.iter().any(|w| !w.is_finite()) {
                return Err(Failure::Numeric("reranker weights are not finite".into()));
            }
            let mut buf = Vec::new();
            m.write(&mut buf).map_err(|e| Failure::Data(e.to_string()))?;
            write_file(&output, &buf)
        }
        Command::Predict {
            nbest,
            reranker,
            lms,
            output,
        } => {
            let lists = read_nbest(&nbest, None)?;
            let choice: Vec<usize> = match reranker {
                None => vec![0; lists.len()],
                Some(path) => {
                    let f = File::open(&path).map_err(|e| data(path.display())(e.into()))?;
                    let m = RerankerModel::read(BufReader::new(f)).map_err(|e| data(path.display())(e.into()))?;
                    let loaded = Lms::load(&lms)?;
                    let sel = required_lms(&m);
                    let feats = features_for(&lists, &loaded, &sel)?;
                    feats
                        .iter()
                        .map(|f| m.choose(f).map_err(|e| Failure::Data(e.to_string())))
                        .collect::<Result<_>>()?
                }
            };
            let predicted: Vec<Utterance> = lists
                .iter()
                .zip(choice)
                .map(|(l, c)| Utterance {
                    gold: Some(l.candidates[c].labels.clone()),
                    ..l.utterance.clone()
                })
                .collect();
            write_corpus(&output, &predicted)
        }
        Command::Evaluate {
            gold,
            predicted,
            format,
            json,
        } => {
            let g = read_corpus(&gold, format)?;
            let p = read_corpus(&predicted, Some(Format::Tsv))?;
            if g.len() != p.len() {
                return Err(Failure::Data(format!("{} gold but {} predicted utterances", g.len(), p.len())));
            }
            for (a, b) in g.iter().zip(&p) {
                if a.words() != b.words() {
                    return Err(Failure::Data(format!("utterance {} differs between files", a.id)));
                }
            }
            let ids: Vec<String> = g.iter().map(|u| u.id.clone()).collect();
            let labels = |c: &[Utterance]| -> Result<Vec<Vec<Label>>> {
                c.iter()
                    .map(|u| u.gold.clone().ok_or_else(|| Failure::Data(format!("{} has no labels", u.id))))
                    .collect()
            };
            let report = eval::score(&ids, &labels(&p)?, &labels(&g)?).map_err(|e| Failure::Data(e.to_string()))?;
            print!("{}", EvalReport::table(&[("predicted".into(), report.clone())]));
            if let Some(path) = json {
                write_file(&path, report.to_json().as_bytes())?;
            }
            Ok(())
        }
        Command::Run(args) => {
            let cfg = build_config(&args)?;
            let out = run_pipeline(&cfg)?;
            print!("{}", out.table());
            Ok(())
        }
        Command::Ablate { run, table } => {
            let cfg = build_config(&run)?;
            let conditions = match table {
                Table::Directions => Condition::directions(),
                Table::Families => Condition::lm_families(),
                Table::Full => vec![
                    Condition::ncm_alone(),
                    Condition::baseline(),
                    Condition::forward(),
                    Condition::backward(),
                    Condition::both(),
                    Condition::fourgram(),
                    Condition::fourgram_and_lstm(),
                ],
            };
            let out = ablation_matrix(&cfg, &conditions)?;
            print!("{}", out.table());
            Ok(())
        }
    }
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Self {
        match d {
            Dir::Forward => Direction::Forward,
            Dir::Backward => Direction::Backward,
        }
    }
}

impl From<Preset> for LstmPreset {
    fn from(p: Preset) -> Self {
        match p {
            Preset::Tiny => LstmPreset::Tiny,
            Preset::Desk => LstmPreset::Desk,
            Preset::Large => LstmPreset::Large,
        }
    }
}

fn read_corpus(path: &Path, format: Option<Format>) -> Result<Vec<Utterance>> {
    let f = File::open(path).map_err(|e| data(path.display())(e.into()))?;
    let format = format.unwrap_or(match path.extension().and_then(|e| e.to_str()) {
        Some("dps") => Format::Dps,
        _ => Format::Tsv,
    });
    let raw = match format {
        Format::Tsv => parse_tsv(BufReader::new(f), ""),
        Format::Dps => parse_dps(BufReader::new(f), ""),
    }
    .map_err(|e| data(path.display())(e.into()))?;
    Ok(raw.iter().map(normalize).filter(|u| !u.is_empty()).collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| data(dir.display())(e.into()))?;
    }
    fs::write(path, bytes).map_err(|e| data(path.display())(e.into()))
}

fn write_corpus(path: &Path, utts: &[Utterance]) -> Result<()> {
    let f = File::create(path).map_err(|e| data(path.display())(e.into()))?;
    let mut w = BufWriter::new(f);
    write_tsv(&mut w, utts).map_err(|e| data(path.display())(e.into()))?;
    w.flush().map_err(|e| data(path.display())(e.into()))
}

fn fluent(utts: &[Utterance]) -> Vec<Vec<String>> {
    utts.iter()
        .map(|u| u.fluent_words().into_iter().map(String::from).collect())
        .collect()
}

fn read_ngram(path: &Path) -> Result<NgramModel> {
    let f = File::open(path).map_err(|e| data(path.display())(e.into()))?;
    NgramModel::read(BufReader::new(f)).map_err(|e| data(path.display())(e.into()))
}

fn read_lstm(path: &Path) -> Result<LstmModel> {
    let f = File::open(path).map_err(|e| data(path.display())(e.into()))?;
    LstmModel::read(BufReader::new(f)).map_err(|e| data(path.display())(e.into()))
}

/// Reads n-best JSON lines; with `gold`, labels are attached by position.
fn read_nbest(path: &Path, gold: Option<&[Utterance]>) -> Result<Vec<CandidateList>> {
    let f = File::open(path).map_err(|e| data(path.display())(e.into()))?;
    let records = read_candidates_jsonl(BufReader::new(f)).map_err(|e| data(path.display())(e.into()))?;
    if let Some(g) = gold {
        if g.len() != records.len() {
            return Err(Failure::Data(format!(
                "{} n-best lists but {} gold utterances",
                records.len(),
                g.len()
            )));
        }
    }
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let labels = match gold {
                Some(g) => {
                    if g[i].words() != r.tokens {
                        return Err(Failure::Data(format!("gold utterance {} does not match n-best {}", g[i].id, r.id)));
                    }
                    g[i].gold.clone()
                }
                None => None,
            };
            r.into_list(labels).map_err(Failure::Data)
        })
        .collect()
}

struct Lms {
    lstm_fwd: Option<LstmModel>,
    lstm_bwd: Option<LstmModel>,
    ngram_fwd: Option<NgramModel>,
    ngram_bwd: Option<NgramModel>,
}

impl Lms {
    fn load(p: &LmPaths) -> Result<Lms> {
        let lstm = |x: &Option<PathBuf>| x.as_deref().map(read_lstm).transpose();
        let ngram = |x: &Option<PathBuf>| x.as_deref().map(read_ngram).transpose();
        Ok(Lms {
            lstm_fwd: lstm(&p.lstm_fwd)?,
            lstm_bwd: lstm(&p.lstm_bwd)?,
            ngram_fwd: ngram(&p.ngram_fwd)?,
            ngram_bwd: ngram(&p.ngram_bwd)?,
        })
    }

    fn selection(&self) -> LmSelection {
        LmSelection {
            fwd_lstm: self.lstm_fwd.is_some(),
            bwd_lstm: self.lstm_bwd.is_some(),
            fwd_4g: self.ngram_fwd.is_some(),
            bwd_4g: self.ngram_bwd.is_some(),
        }
    }

    fn scores(&self, list: &CandidateList) -> Vec<LmScores> {
        let sents: Vec<Vec<&str>> = list.candidates.iter().map(|a| a.fluent_refs()).collect();
        let run = |m: Option<&dyn LanguageModel>| m.map(|m| m.logprob_batch(&sents));
        let lf = run(self.lstm_fwd.as_ref().map(|m| m as &dyn LanguageModel));
        let lb = run(self.lstm_bwd.as_ref().map(|m| m as &dyn LanguageModel));
        let nf = run(self.ngram_fwd.as_ref().map(|m| m as &dyn LanguageModel));
        let nb = run(self.ngram_bwd.as_ref().map(|m| m as &dyn LanguageModel));
        (0..sents.len())
            .map(|i| LmScores {
                lstm_fwd: lf.as_ref().map(|v| v[i]),
                lstm_bwd: lb.as_ref().map(|v| v[i]),
                ngram_fwd: nf.as_ref().map(|v| v[i]),
                ngram_bwd: nb.as_ref().map(|v| v[i]),
            })
            .collect()
    }
}

/// LM score features a trained reranker expects.
fn required_lms(m: &RerankerModel) -> LmSelection {
    let has = |n: &str| m.names.iter().any(|x| x == n);
    LmSelection {
        fwd_lstm: has(features::LSTM_FWD),
        bwd_lstm: has(features::LSTM_BWD),
        fwd_4g: has(features::NGRAM_FWD),
        bwd_4g: has(features::NGRAM_BWD),
    }
}

fn features_for(lists: &[CandidateList], lms: &Lms, sel: &LmSelection) -> Result<Vec<Vec<FeatureVector>>> {
    lists
        .iter()
        .map(|l| {
            let scores = lms.scores(l);
            (0..l.candidates.len())
                .map(|r| {
                    features::extract(l, r, &scores[r], sel).map_err(|e| match e {
                        features::FeatureError::NonFinite(_) => Failure::Numeric(e.to_string()),
                        features::FeatureError::MissingScore(_) => {
                            Failure::Usage(format!("{e}: pass the matching --lstm-*/--ngram-* model"))
                        }
                        other => Failure::Data(other.to_string()),
                    })
                })
                .collect()
        })
        .collect()
}

/// Config file, then `--set` entries, then the dedicated flags.
fn build_config(args: &RunArgs) -> Result<PipelineConfig> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e| Failure::Usage(format!("config: {e}")))?;
    let defaults = toml::Table::try_from(PipelineConfig::default()).expect("default config serializes");
    for entry in &args.overrides {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set {entry}: expected KEY=VALUE")))?;
        set_path(&mut doc, &defaults, key.trim(), parse_value(value.trim()))?;
    }
    let mut cfg: PipelineConfig = doc.try_into().map_err(|e| Failure::Usage(format!("config: {e}")))?;
    if let Some(d) = &args.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    if let Some(d) = &args.cache_dir {
        cfg.cache_dir = Some(d.clone());
    }
    if let Some(n) = args.n_best {
        cfg.n_best = n;
    }
    if let Some(k) = args.k_folds {
        cfg.k_folds = k;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.lstm_preset {
        cfg.lstm.preset = p.into();
    }
    if let Some(e) = args.lstm_epochs {
        cfg.lstm.epochs = Some(e);
    }
    cfg.verbose |= args.verbose;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// Tables missing from the document start as their defaults, so
/// `--set data.rate=0.2` keeps the rest of the default data source.
fn set_path(doc: &mut toml::Table, defaults: &toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| Failure::Usage(format!("empty key in --set {key}")))?;
    let mut table = doc;
    let mut fallback = Some(defaults);
    for p in parts {
        let seed = fallback.and_then(|d| d.get(p)).and_then(toml::Value::as_table);
        fallback = seed;
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(seed.cloned().unwrap_or_default()))
            .as_table_mut()
            .ok_or_else(|| Failure::Usage(format!("--set {key}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
