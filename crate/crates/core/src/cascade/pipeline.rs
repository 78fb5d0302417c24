use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    build_vocab, generate_synthetic, load_word_vectors, make_splits, random_embeddings, read_treebank, DataError,
    DataSplits, EmbeddingTable, Example, SentTree, SyntheticConfig, Vocab,
};
use crate::eval::{
    export_report, speed_accuracy_curve_with_overhead, ActivationRow, EvalError, EvalPredictions, Report,
    SplitSummary, StrategyKind, StrategyResult, DEFAULT_GRID_SIZE, INTERPOLATION,
};
use crate::models::{
    predict_all, train_classifier, train_decision_net, BowClassifier, Checkpoint, DecisionNet, DecisionValidation,
    LstmClassifier, ModelDims, ModelError, SelectionMetric, TrainConfig, TrainHistory,
};
use crate::nn::Rng;

use super::{confusion, generate_decision_labels, CascadeError, CostModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreebankPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Treebank(TreebankPaths),
}

/// Which BoW trunk the decision network reads at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionTrunk {
    /// The trunk it was trained on.
    #[default]
    ModelTrain,
    /// Swap in the fine-tuned BoW's trunk.
    FineTuned,
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_min_freq() -> usize {
    1
}

fn default_decision_training() -> TrainConfig {
    TrainConfig {
        selection_metric: SelectionMetric::Auc,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSource,
    /// Word-vector text file; random embeddings when absent.
    #[serde(default)]
    pub vectors: Option<PathBuf>,
    #[serde(default = "default_min_freq")]
    pub min_freq: usize,
    /// Every other seed is derived from this one; the `seed` fields of the
    /// training configs are overwritten.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dims: ModelDims,
    #[serde(default)]
    pub bow_training: TrainConfig,
    #[serde(default)]
    pub lstm_training: TrainConfig,
    #[serde(default = "default_decision_training")]
    pub decision_training: TrainConfig,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub decision_trunk: DecisionTrunk,
    /// Per-sample decision-network cost in ms, charged on top of the BoW.
    #[serde(default)]
    pub decision_overhead: f64,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, StageError> {
        let config: Self = serde_json::from_str(text).map_err(|e| StageError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), StageError> {
        let bad = |m: String| Err(StageError::Config(m));
        self.cost_model.validate()?;
        if self.grid_size < 2 {
            return bad(format!("grid_size must be at least 2, got {}", self.grid_size));
        }
        if self.min_freq == 0 {
            return bad("min_freq must be at least 1".into());
        }
        if !(self.decision_overhead >= 0.0 && self.decision_overhead.is_finite()) {
            return bad(format!("decision_overhead {} must be non-negative", self.decision_overhead));
        }
        let d = &self.dims;
        let widths = [
            d.embedding_dim,
            d.bow_hidden,
            d.lstm_projection,
            d.lstm_hidden,
            d.lstm_mlp_hidden,
            d.decision_hidden,
        ];
        if widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&d.dropout) {
            return bad(format!("dropout {} not in [0, 1)", d.dropout));
        }
        for (name, cfg, metric) in [
            ("bow_training", &self.bow_training, SelectionMetric::Accuracy),
            ("lstm_training", &self.lstm_training, SelectionMetric::Accuracy),
            ("decision_training", &self.decision_training, SelectionMetric::Auc),
        ] {
            cfg.validate().map_err(|e| StageError::Config(format!("{name}: {e}")))?;
            if cfg.selection_metric != metric {
                return bad(format!("{name} must select on {metric:?}"));
            }
        }
        let mut paths: Vec<&Path> = self.vectors.iter().map(PathBuf::as_path).collect();
        if let DataSource::Treebank(t) = &self.data {
            paths.extend([t.train.as_path(), t.valid.as_path(), t.test.as_path()]);
        }
        if let Some(p) = paths.iter().find(|p| !p.exists()) {
            return bad(format!("{} does not exist", p.display()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> SeedSet {
        SeedSet::from_seed(self.seed)
    }
}

/// Seeds for every random step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub split: u64,
    pub embeddings: u64,
    pub bow_init: u64,
    pub lstm_init: u64,
    pub decision_init: u64,
    pub bow_train: u64,
    pub lstm_train: u64,
    pub decision_train: u64,
    pub bow_fine_tune: u64,
    pub lstm_fine_tune: u64,
}

impl SeedSet {
    pub fn from_seed(seed: u64) -> Self {
        let s = |k: u64| seed.wrapping_mul(16).wrapping_add(k);
        Self {
            split: s(0),
            embeddings: s(1),
            bow_init: s(2),
            lstm_init: s(3),
            decision_init: s(4),
            bow_train: s(5),
            lstm_train: s(6),
            decision_train: s(7),
            bow_fine_tune: s(8),
            lstm_fine_tune: s(9),
        }
    }

    fn to_map(self, root: u64) -> BTreeMap<String, u64> {
        let value = serde_json::to_value(self).expect("seed set serializes");
        let mut map: BTreeMap<String, u64> = serde_json::from_value(value).expect("flat map of integers");
        map.insert("root".into(), root);
        map
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PrepareData,
    TrainModels,
    GenerateLabels,
    TrainDecision,
    FineTune,
    Evaluate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PrepareData => "prepare_data",
            Stage::TrainModels => "train_models",
            Stage::GenerateLabels => "generate_labels",
            Stage::TrainDecision => "train_decision",
            Stage::FineTune => "fine_tune",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

pub const RUN_LOG: &str = "run.log";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// `stage=<name> status=<ok|fail> seconds=<float>` lines, mirrored to
/// `run.log` in the output directory. An `INCOMPLETE` file sits next to it
/// until the run finishes.
#[derive(Debug)]
pub struct RunLog {
    dir: PathBuf,
    lines: Vec<String>,
}

impl RunLog {
    pub fn create(dir: &Path) -> Result<Self, StageError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let marker = dir.join(INCOMPLETE_MARKER);
        fs::write(&marker, "running\n").map_err(io_err(&marker))?;
        let log = dir.join(RUN_LOG);
        fs::write(&log, "").map_err(io_err(&log))?;
        Ok(Self {
            dir: dir.to_owned(),
            lines: Vec::new(),
        })
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    fn append(&mut self, line: String) {
        log::info!("{line}");
        let path = self.dir.join(RUN_LOG);
        let written = fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::warn!("{}: {e}", path.display());
        }
        self.lines.push(line);
    }

    pub fn run<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T, StageError>) -> Result<T, PipelineError> {
        let start = Instant::now();
        let result = f();
        let seconds = start.elapsed().as_secs_f64();
        let status = if result.is_ok() { "ok" } else { "fail" };
        self.append(format!("stage={stage} status={status} seconds={seconds:.3}"));
        result.map_err(|source| {
            let marker = self.dir.join(INCOMPLETE_MARKER);
            let _ = fs::write(&marker, format!("stage={stage}\nerror={source}\n"));
            PipelineError { stage, source }
        })
    }

    fn finish(self) -> Vec<String> {
        let _ = fs::remove_file(self.dir.join(INCOMPLETE_MARKER));
        self.lines
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocab,
    pub embeddings: EmbeddingTable,
    pub splits: DataSplits,
}

fn load_trees(source: &DataSource) -> Result<(Vec<SentTree>, Vec<SentTree>, Vec<SentTree>), StageError> {
    match source {
        DataSource::Synthetic(cfg) => {
            let c = generate_synthetic(cfg)?;
            Ok((c.train, c.valid, c.test))
        }
        DataSource::Treebank(p) => Ok((read_treebank(&p.train)?, read_treebank(&p.valid)?, read_treebank(&p.test)?)),
    }
}

/// Loads or generates the corpus, builds the vocabulary from the training
/// sentences, initializes embeddings and splits the training data.
pub fn prepare_data(config: &PipelineConfig) -> Result<PreparedData, StageError> {
    let seeds = config.seeds();
    let (train, valid, test) = load_trees(&config.data)?;
    let vocab = build_vocab(train.iter().map(|t| t.tokens()), config.min_freq);
    let mut rng = Rng::new(seeds.embeddings);
    let embeddings = match &config.vectors {
        Some(path) => load_word_vectors(path, &vocab, config.dims.embedding_dim, &mut rng)?,
        None => random_embeddings(&vocab, config.dims.embedding_dim, &mut rng),
    };
    let splits = make_splits(&train, &valid, &test, seeds.split, &vocab)?;
    if splits.valid.is_empty() || splits.test.is_empty() {
        return Err(StageError::Config(
            "validation and test sets need at least one non-neutral sentence".into(),
        ));
    }
    Ok(PreparedData {
        vocab,
        embeddings,
        splits,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub bow: BowClassifier,
    pub lstm: LstmClassifier,
    pub bow_history: TrainHistory,
    pub lstm_history: TrainHistory,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub log: Vec<String>,
    /// Classifiers fitted on the model-train split only.
    pub model_train: TrainedModels,
    pub fine_tuned: TrainedModels,
    pub decision: DecisionNet,
    pub decision_history: TrainHistory,
    pub decision_labels: Vec<usize>,
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

fn train_pair(
    bow: BowClassifier,
    lstm: LstmClassifier,
    train: &[Example],
    valid: &[Example],
    bow_cfg: &TrainConfig,
    lstm_cfg: &TrainConfig,
) -> Result<TrainedModels, StageError> {
    let (b, l) = rayon::join(
        || train_classifier(bow, train, valid, bow_cfg),
        || train_classifier(lstm, train, valid, lstm_cfg),
    );
    let (bow, bow_history) = b?;
    let (lstm, lstm_history) = l?;
    log::info!(
        "BoW valid accuracy {:.4} (epoch {}), LSTM {:.4} (epoch {})",
        bow_history.best_metric,
        bow_history.best_epoch,
        lstm_history.best_metric,
        lstm_history.best_epoch
    );
    Ok(TrainedModels {
        bow,
        lstm,
        bow_history,
        lstm_history,
    })
}

fn predictions(bow: &BowClassifier, lstm: &LstmClassifier, examples: &[Example]) -> Result<EvalPredictions, StageError> {
    let (b, l) = rayon::join(|| predict_all(bow, examples), || predict_all(lstm, examples));
    let gold = examples.iter().map(|e| e.label).collect();
    Ok(EvalPredictions::new(gold, b?, l?)?)
}

/// Relabels `decision_train` with "which model should run" targets.
fn decision_examples(models: &TrainedModels, decision_train: &[Example]) -> Result<Vec<Example>, StageError> {
    if decision_train.is_empty() {
        return Err(StageError::Config("the decision-train split is empty".into()));
    }
    let preds = predictions(&models.bow, &models.lstm, decision_train)?;
    let labels = generate_decision_labels(&preds.bow_preds(), &preds.lstm_preds(), &preds.gold)?;
    Ok(decision_train
        .iter()
        .zip(labels)
        .map(|(e, label)| Example { label, ..e.clone() })
        .collect())
}

/// Scores the three routing strategies on the validation and test sets.
pub fn evaluate_models(
    config: &PipelineConfig,
    data: &PreparedData,
    bow: &BowClassifier,
    lstm: &LstmClassifier,
    decision: &DecisionNet,
) -> Result<(Report, BTreeMap<String, Vec<ActivationRow>>), StageError> {
    use rayon::prelude::*;

    let mut splits = Vec::new();
    let mut results = Vec::new();
    let mut activations = BTreeMap::new();
    for (name, examples) in [("valid", &data.splits.valid), ("test", &data.splits.test)] {
        let probs: Vec<f64> = examples
            .par_iter()
            .map(|e| decision.p_lstm(&e.tokens))
            .collect::<Result<_, _>>()?;
        let preds = predictions(bow, lstm, examples)?.with_decision_probs(probs.clone())?;
        let m = confusion(&preds.bow_preds(), &preds.lstm_preds(), &preds.gold)?;
        splits.push(SplitSummary {
            split: name.into(),
            examples: preds.len(),
            bow_accuracy: preds.bow_accuracy(),
            lstm_accuracy: preds.lstm_accuracy(),
            confusion: m,
        });
        for kind in StrategyKind::ALL {
            let curve = speed_accuracy_curve_with_overhead(
                kind,
                &preds,
                &config.cost_model,
                config.grid_size,
                config.decision_overhead,
            )?;
            results.push(StrategyResult {
                strategy: kind,
                split: name.into(),
                auc: crate::eval::auc(&curve)?,
                points: curve.points,
            });
        }
        let hidden: Vec<Vec<f64>> = examples
            .par_iter()
            .map(|e| bow.trunk.last_hidden(&e.tokens))
            .collect::<Result<_, _>>()?;
        let (bow_ok, lstm_ok) = (preds.bow_correct(), preds.lstm_correct());
        let rows = hidden
            .into_iter()
            .enumerate()
            .map(|(id, hidden)| ActivationRow {
                id,
                label: preds.gold[id],
                bow_correct: bow_ok[id],
                lstm_correct: lstm_ok[id],
                decision_prob: probs[id],
                hidden,
            })
            .collect();
        activations.insert(name.to_string(), rows);
    }
    let report = Report {
        interpolation: INTERPOLATION.into(),
        cost_model: config.cost_model,
        decision_overhead: config.decision_overhead,
        grid_size: config.grid_size,
        seeds: config.seeds().to_map(config.seed),
        splits,
        results,
    };
    Ok((report, activations))
}

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const BOW_CHECKPOINT: &str = "bow.skrd";
pub const LSTM_CHECKPOINT: &str = "lstm.skrd";
pub const DECISION_CHECKPOINT: &str = "decision.skrd";

pub fn save_checkpoints(
    dir: &Path,
    vocab: &Vocab,
    bow: &BowClassifier,
    lstm: &LstmClassifier,
    decision: &DecisionNet,
) -> Result<(), StageError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let hash = vocab.hash();
    bow.to_checkpoint(hash).save(dir.join(BOW_CHECKPOINT))?;
    lstm.to_checkpoint(hash).save(dir.join(LSTM_CHECKPOINT))?;
    decision.to_checkpoint(hash).save(dir.join(DECISION_CHECKPOINT))?;
    Ok(())
}

/// Loads the three checkpoints in `dir`, refusing any trained against a
/// different vocabulary.
pub fn load_checkpoints(dir: &Path, vocab: &Vocab) -> Result<(BowClassifier, LstmClassifier, DecisionNet), StageError> {
    let load = |name: &str| -> Result<Checkpoint, StageError> {
        let ck = Checkpoint::load(dir.join(name))?;
        if ck.vocab_hash != vocab.hash() {
            return Err(StageError::Config(format!(
                "{name} was trained with a different vocabulary"
            )));
        }
        Ok(ck)
    };
    Ok((
        BowClassifier::from_checkpoint(&load(BOW_CHECKPOINT)?)?,
        LstmClassifier::from_checkpoint(&load(LSTM_CHECKPOINT)?)?,
        DecisionNet::from_checkpoint(&load(DECISION_CHECKPOINT)?)?,
    ))
}

/// Trains everything and writes the run's artifacts to `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let mut log = RunLog::create(&config.out_dir).map_err(|source| PipelineError {
        stage: Stage::PrepareData,
        source,
    })?;
    let data = log.run(Stage::PrepareData, || {
        config.validate()?;
        prepare_data(config)
    })?;
    run_stages(config, &data, log)
}

/// As [`run_pipeline`], on data that has already been prepared.
pub fn run_prepared(config: &PipelineConfig, data: &PreparedData) -> Result<PipelineOutput, PipelineError> {
    let log = RunLog::create(&config.out_dir).map_err(|source| PipelineError {
        stage: Stage::PrepareData,
        source,
    })?;
    run_stages(config, data, log)
}

fn run_stages(config: &PipelineConfig, data: &PreparedData, mut log: RunLog) -> Result<PipelineOutput, PipelineError> {
    let seeds = config.seeds();
    let dims = &config.dims;
    let splits = &data.splits;

    let model_train = log.run(Stage::TrainModels, || {
        let bow = BowClassifier::new(data.embeddings.clone(), dims, &mut Rng::new(seeds.bow_init));
        let lstm = LstmClassifier::new(data.embeddings.clone(), dims, &mut Rng::new(seeds.lstm_init));
        train_pair(
            bow,
            lstm,
            &splits.model_train,
            &splits.valid,
            &with_seed(&config.bow_training, seeds.bow_train),
            &with_seed(&config.lstm_training, seeds.lstm_train),
        )
    })?;

    let labelled = log.run(Stage::GenerateLabels, || decision_examples(&model_train, &splits.decision_train))?;

    let (decision, decision_history) = log.run(Stage::TrainDecision, || {
        let net = DecisionNet::from_bow(&model_train.bow, dims, &mut Rng::new(seeds.decision_init));
        let validation = DecisionValidation {
            examples: &splits.valid,
            predictions: predictions(&model_train.bow, &model_train.lstm, &splits.valid)?,
            costs: config.cost_model,
            grid_size: config.grid_size,
        };
        let cfg = with_seed(&config.decision_training, seeds.decision_train);
        Ok(train_decision_net(net, &labelled, &validation, &cfg)?)
    })?;

    let fine_tuned = log.run(Stage::FineTune, || {
        train_pair(
            model_train.bow.clone(),
            model_train.lstm.clone(),
            &splits.full_train,
            &splits.valid,
            &with_seed(&config.bow_training, seeds.bow_fine_tune),
            &with_seed(&config.lstm_training, seeds.lstm_fine_tune),
        )
    })?;

    let report = log.run(Stage::Evaluate, || {
        let mut routed = decision.clone();
        if config.decision_trunk == DecisionTrunk::FineTuned {
            routed.trunk = fine_tuned.bow.trunk.clone();
        }
        let (report, activations) = evaluate_models(config, data, &fine_tuned.bow, &fine_tuned.lstm, &routed)?;
        let out = &config.out_dir;
        save_checkpoints(&out.join(CHECKPOINT_DIR), &data.vocab, &fine_tuned.bow, &fine_tuned.lstm, &routed)?;
        data.vocab.save(out.join("vocab.txt"))?;
        let config_path = out.join("config.json");
        let echo = serde_json::to_string_pretty(config).map_err(|e| StageError::Config(e.to_string()))?;
        fs::write(&config_path, echo + "\n").map_err(io_err(&config_path))?;
        export_report(&report, &activations, out)?;
        Ok(report)
    })?;

    Ok(PipelineOutput {
        report,
        log: log.finish(),
        model_train,
        fine_tuned,
        decision,
        decision_history,
        decision_labels: labelled.iter().map(|e| e.label).collect(),
    })
}
