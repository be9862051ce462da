//! File-in, file-out batch commands. Each is a pure function of its inputs,
//! the run configuration and the seed, and writes the effective
//! configuration next to its output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{self, DatasetError, FeatureMatrix};
use crate::explain::{self, ExplainError};
use crate::features::{self, FeatureConfig, FeatureError};
use crate::models::{Dataset, ModelError, TreeEnsemble};
use crate::pipeline::{self, ClassCounts, PipelineError, ResampleRow, TrainConfig};
use crate::signal::Condition;
use crate::stats::{StatsError, DEFAULT_DRAWS};
use crate::synth::{self, CohortConfig, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnovaConfig {
    pub alpha: f64,
    pub draws: usize,
}

impl Default for AnovaConfig {
    fn default() -> Self {
        Self { alpha: 0.05, draws: DEFAULT_DRAWS }
    }
}

/// Every tunable of a run. Unknown keys are rejected on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub exclude_fa: bool,
    /// Tune inside each outer fold during `evaluate`.
    pub nested_cv: bool,
    pub features: FeatureConfig,
    pub cohort: CohortConfig,
    pub train: TrainConfig,
    pub anova: AnovaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            exclude_fa: false,
            nested_cv: true,
            features: FeatureConfig::default(),
            cohort: CohortConfig::default(),
            train: TrainConfig::default(),
            anova: AnovaConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    /// Bad flags, keys or config files; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_path_buf(), source }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CommandError> {
        serde_json::from_str(text).map_err(|e| CommandError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CommandError> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        Self::from_json(&text).map_err(|e| CommandError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    /// `key=value` with a dotted key such as `train.n_iter`. The value is
    /// read as JSON when it parses, otherwise as a string.
    pub fn set(&mut self, assignment: &str) -> Result<(), CommandError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CommandError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self).expect("config serialises");
        let mut slot = &mut tree;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| CommandError::Usage(format!("unknown config key {key:?}")))?;
        }
        *slot = value;
        *self = serde_json::from_value(tree).map_err(|e| CommandError::Usage(format!("--set {key}: {e}")))?;
        Ok(())
    }
}

/// Where the effective configuration of a run writing `out` is echoed.
pub fn echo_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("run_config.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".config.json");
        PathBuf::from(s)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CommandError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, text).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    write_text(path, &text)
}

fn echo(cfg: &RunConfig, out: &Path) -> Result<(), CommandError> {
    write_text(&echo_path(out), &cfg.to_json())
}

fn read_model(path: &Path) -> Result<TreeEnsemble, CommandError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    Ok(TreeEnsemble::from_json(&text)?)
}

fn read_features(path: &Path) -> Result<FeatureMatrix, CommandError> {
    Ok(dataset::read_matrix(path)?)
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CommandError> {
    let cohort_cfg = CohortConfig { seed: cfg.seed, ..cfg.cohort.clone() };
    let cohort = synth::generate_cohort(&cohort_cfg)?;
    fs::create_dir_all(out).map_err(io(out))?;
    synth::write_cohort(out, &cohort)?;
    echo(&RunConfig { cohort: cohort_cfg, ..cfg.clone() }, out)
}

pub fn features(cfg: &RunConfig, sessions: &Path, out: &Path) -> Result<(), CommandError> {
    let loaded = dataset::list_sessions(sessions)?
        .iter()
        .map(|d| dataset::read_session(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut matrix = features::extract_features(&loaded, &cfg.features)?;
    if cfg.exclude_fa {
        matrix = dataset::filter_condition(&matrix, &[Condition::Fa]);
    }
    dataset::write_matrix(out, &matrix)?;
    echo(cfg, out)
}

pub fn train(cfg: &RunConfig, features: &Path, out: &Path) -> Result<(), CommandError> {
    let matrix = read_features(features)?;
    let fitted = pipeline::fit_model(&Dataset::from_matrix(&matrix), &cfg.train, cfg.seed)?;
    write_text(out, &fitted.ensemble.to_json())?;
    if let Some(search) = &fitted.search {
        let mut p = out.as_os_str().to_owned();
        p.push(".search.json");
        write_json(Path::new(&p), search)?;
    }
    echo(cfg, out)
}

pub fn evaluate(cfg: &RunConfig, features: &Path, model: &Path, out: &Path) -> Result<(), CommandError> {
    let matrix = read_features(features)?;
    let model = read_model(model)?;
    let report = pipeline::evaluate(&matrix, &cfg.train, cfg.nested_cv, &model.hyperparameters, Some(&model), cfg.seed)?;
    write_json(out, &report)?;
    echo(cfg, out)
}

/// Per-row attributions as CSV plus the global ranking in `<out>.ranking.json`.
pub fn explain(cfg: &RunConfig, features: &Path, model: &Path, out: &Path) -> Result<(), CommandError> {
    let matrix = read_features(features)?;
    let model = read_model(model)?;
    let ds = Dataset::from_matrix(&matrix);
    if let Some(row) = (0..ds.len()).next() {
        model.check_width(ds.x.row(row))?;
    }
    let shap = explain::shap_matrix(&model, &ds.x)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    explain::write_attributions(out, &ds.names, &shap)?;
    let ranking = explain::ranking_from_attributions(&shap, &ds.names);
    let mut p = out.as_os_str().to_owned();
    p.push(".ranking.json");
    write_json(Path::new(&p), &ranking)?;
    echo(cfg, out)
}

pub fn select(cfg: &RunConfig, features: &Path, out: &Path) -> Result<(), CommandError> {
    let matrix = read_features(features)?;
    let fitted = pipeline::fit_model(&Dataset::from_matrix(&matrix), &cfg.train, cfg.seed)?;
    let report = pipeline::select_features(&matrix, &fitted.ensemble, cfg.seed)?;
    write_json(out, &report)?;
    echo(cfg, out)
}

/// Reads `participant_id`, `condition` and `rating` columns by name from any
/// CSV that has them (a features file qualifies).
pub fn read_ratings(path: &Path) -> Result<Vec<(String, Condition, f64)>, CommandError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |m: String| CommandError::Dataset(DatasetError::SchemaMismatch(format!("{}: {m}", path.display())));
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| bad(format!("no {name} column")));
    let (p, c, r) = (col("participant_id")?, col("condition")?, col("rating")?);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map_or(0, |q| q.line());
        let parse = |m: String| {
            CommandError::Dataset(DatasetError::Parse { path: path.to_path_buf(), line, column: 0, message: m })
        };
        let condition = Condition::parse(&rec[c]).ok_or_else(|| parse(format!("unknown condition {:?}", &rec[c])))?;
        let rating: f64 = rec[r].parse().map_err(|_| parse(format!("cannot parse rating {:?}", &rec[r])))?;
        out.push((rec[p].to_string(), condition, rating));
    }
    Ok(out)
}

pub fn anova(cfg: &RunConfig, ratings: &Path, out: &Path) -> Result<(), CommandError> {
    let mut rows = read_ratings(ratings)?;
    if cfg.exclude_fa {
        rows.retain(|r| r.1 != Condition::Fa);
    }
    let report = pipeline::condition_anova(&rows, cfg.anova.alpha, cfg.anova.draws, cfg.seed)?;
    write_json(out, &report)?;
    echo(cfg, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub input: ClassCounts,
    pub rows: Vec<ResampleRow>,
}

pub fn resample_study(cfg: &RunConfig, features: &Path, out: &Path) -> Result<(), CommandError> {
    let matrix = read_features(features)?;
    let rows = pipeline::resample_study(&matrix, &cfg.train.hyperparameters, cfg.seed)?;
    write_json(out, &ResampleReport { input: ClassCounts::of(&matrix), rows })?;
    echo(cfg, out)
}

/// Every regular file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, CommandError> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> Result<(), CommandError> {
        for entry in fs::read_dir(dir).map_err(io(dir))? {
            let p = entry.map_err(io(dir))?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let bytes = fs::read(&p).map_err(io(&p))?;
                out.insert(p.strip_prefix(root).expect("under root").to_path_buf(), bytes);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}
