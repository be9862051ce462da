//! The 17-column feature matrix, label rule, condition filter, class
//! resampling, and the on-disk session and matrix formats.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::DesignMatrix;
use crate::signal::{self, Condition, GazePoint, RawStreams, Screen, Session, SessionMeta, SignalError};

pub const SCHEMA_VERSION: u32 = 1;
pub const N_FEATURES: usize = 17;

/// Canonical column order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "hr_max",
    "hrv",
    "ibi_mean",
    "fix_count_center",
    "fix_count_left",
    "fix_count_right",
    "fix_count_ndrt",
    "fix_dur_center",
    "fix_dur_left",
    "fix_dur_right",
    "fix_dur_ndrt",
    "fix_disp_center",
    "fix_disp_left",
    "fix_disp_right",
    "fix_disp_ndrt",
    "gsr_phasic_mean",
    "gsr_phasic_max",
];

/// Names used in published SHAP plots for the same columns, index-aligned
/// with [`FEATURE_NAMES`].
pub const REPORTED_NAMES: [&str; N_FEATURES] = [
    "mean_HR_max",
    "mean_HRV",
    "mean_IBI",
    "number_of_fixations_center",
    "number_of_fixations_left",
    "number_of_fixations_right",
    "number_of_fixations_tablet",
    "mean_duration_center",
    "mean_duration_left",
    "mean_duration_right",
    "mean_duration_tablet",
    "mean_dispersion_center",
    "mean_dispersion_left",
    "mean_dispersion_right",
    "mean_dispersion_tablet",
    "mean_GSR",
    "max_GSR",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&n| n == name)
}

pub fn reported_name(name: &str) -> Option<&'static str> {
    feature_index(name).map(|i| REPORTED_NAMES[i])
}

pub fn fix_count_index(screen: Screen) -> usize {
    3 + screen.index()
}

pub fn fix_dur_index(screen: Screen) -> usize {
    7 + screen.index()
}

pub fn fix_disp_index(screen: Screen) -> usize {
    11 + screen.index()
}

const META_COLUMNS: [&str; 5] = ["participant_id", "condition", "label_time", "rating", "label"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("trust rating {0} outside 0..=10")]
    RatingOutOfRange(i64),
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse { path: PathBuf, line: u64, column: usize, message: String },
    #[error("{path}: unsupported schema version {found}")]
    VersionMismatch { path: PathBuf, found: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("cannot draw {needed} majority rows from {available}")]
    InsufficientMajority { needed: usize, available: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// 1 (trust) iff the rating is at least 5.
pub fn binarize_label(rating: i64) -> Result<u8, DatasetError> {
    match rating {
        0..=4 => Ok(0),
        5..=10 => Ok(1),
        other => Err(DatasetError::RatingOutOfRange(other)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub participant_id: String,
    pub condition: Condition,
    pub label_time: f64,
    pub rating: u8,
    pub label: u8,
    pub features: [Option<f64>; N_FEATURES],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    /// Set when the matrix came out of [`resample_majority`].
    pub seed: Option<u64>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<FeatureVector>) -> Self {
        Self { rows, seed: None }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(distrust, trust)` row counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let trust = self.rows.iter().filter(|r| r.label == 1).count();
        (self.rows.len() - trust, trust)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Dense design matrix with `NaN` for missing entries.
    pub fn design(&self) -> DesignMatrix {
        let values = self
            .rows
            .iter()
            .flat_map(|r| r.features.iter().map(|f| f.unwrap_or(f64::NAN)))
            .collect();
        DesignMatrix::new(self.rows.len(), N_FEATURES, values)
    }
}

/// Group rows by participant, then by label time.
pub fn assemble_matrix(per_session: Vec<Vec<FeatureVector>>) -> FeatureMatrix {
    let mut rows: Vec<FeatureVector> = per_session.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.participant_id
            .cmp(&b.participant_id)
            .then(a.label_time.total_cmp(&b.label_time))
    });
    FeatureMatrix::new(rows)
}

pub fn filter_condition(matrix: &FeatureMatrix, excluded: &[Condition]) -> FeatureMatrix {
    FeatureMatrix {
        rows: matrix
            .rows
            .iter()
            .filter(|r| !excluded.contains(&r.condition))
            .cloned()
            .collect(),
        seed: matrix.seed,
    }
}

/// Keep every minority row and a uniform draw without replacement of
/// `multiplier x minority` majority rows. Row order is preserved.
pub fn resample_majority(
    matrix: &FeatureMatrix,
    multiplier: usize,
    seed: u64,
) -> Result<FeatureMatrix, DatasetError> {
    let (n0, n1) = matrix.class_counts();
    let (minority_label, minority, majority) = if n1 >= n0 { (0u8, n0, n1) } else { (1u8, n1, n0) };
    let needed = multiplier.max(1) * minority;
    if needed > majority {
        return Err(DatasetError::InsufficientMajority { needed, available: majority });
    }
    let majority_rows: Vec<usize> = (0..matrix.rows.len())
        .filter(|&i| matrix.rows[i].label != minority_label)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; matrix.rows.len()];
    for k in index::sample(&mut rng, majority, needed) {
        keep[majority_rows[k]] = true;
    }
    let rows = matrix
        .rows
        .iter()
        .zip(&keep)
        .filter(|(r, &k)| k || r.label == minority_label)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(FeatureMatrix { rows, seed: Some(seed) })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> DatasetError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DatasetError::Io { path: path.to_path_buf(), source },
        kind => DatasetError::Parse {
            path: path.to_path_buf(),
            line,
            column: 0,
            message: format!("{kind:?}"),
        },
    }
}

fn write_all(path: &Path, mut w: csv::Writer<fs::File>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), DatasetError> {
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_matrix(path: &Path, matrix: &FeatureMatrix) -> Result<(), DatasetError> {
    for r in &matrix.rows {
        if r.participant_id.contains([',', '"', '\n', '\r']) || r.participant_id.starts_with('#') {
            return Err(DatasetError::SchemaMismatch(format!(
                "participant id {:?} is not representable",
                r.participant_id
            )));
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    if let Some(seed) = matrix.seed {
        use std::io::Write;
        writeln!(file, "#schema={SCHEMA_VERSION},seed={seed}").map_err(io_err(path))?;
    }
    let w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let header = META_COLUMNS.iter().chain(FEATURE_NAMES.iter()).map(|s| s.to_string()).collect();
    let rows = matrix.rows.iter().map(|r| {
        let mut rec = vec![
            r.participant_id.clone(),
            r.condition.to_string(),
            r.label_time.to_string(),
            r.rating.to_string(),
            r.label.to_string(),
        ];
        rec.extend(r.features.iter().map(|&f| fmt_opt(f)));
        rec
    });
    write_all(path, w, std::iter::once(header).chain(rows))
}

fn parse_err(path: &Path, line: u64, column: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse { path: path.to_path_buf(), line, column, message: message.into() }
}

/// Reads a CSV body (header already consumed by the caller's check) with
/// `line_offset` lines preceding it in the file.
fn csv_records(
    path: &Path,
    body: &str,
    expected_header: &[&str],
    line_offset: u64,
) -> Result<Vec<(u64, csv::StringRecord)>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(expected_header.iter().copied()) {
        return Err(DatasetError::SchemaMismatch(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            expected_header
        )));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0) + line_offset;
        if rec.len() != expected_header.len() {
            return Err(parse_err(
                path,
                line,
                rec.len().min(expected_header.len()) + 1,
                format!("expected {} fields, found {}", expected_header.len(), rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, col: usize) -> Result<T, DatasetError> {
    rec[col]
        .parse()
        .map_err(|_| parse_err(path, line, col + 1, format!("cannot parse {:?}", &rec[col])))
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix, DatasetError> {
    let text = read_text(path)?;
    let (seed, body, offset) = match text.strip_prefix('#') {
        Some(rest) => {
            let (first, body) = rest.split_once('\n').unwrap_or((rest, ""));
            let mut seed = None;
            for kv in first.split(',') {
                match kv.split_once('=') {
                    Some(("schema", v)) if v == SCHEMA_VERSION.to_string() => {}
                    Some(("schema", v)) => {
                        return Err(DatasetError::VersionMismatch { path: path.into(), found: v.into() })
                    }
                    Some(("seed", v)) => {
                        seed = Some(v.parse().map_err(|_| parse_err(path, 1, 1, "bad seed"))?)
                    }
                    _ => return Err(parse_err(path, 1, 1, format!("unknown header entry {kv:?}"))),
                }
            }
            (seed, body, 1)
        }
        None => (None, text.as_str(), 0),
    };
    let header: Vec<&str> = META_COLUMNS.iter().chain(FEATURE_NAMES.iter()).copied().collect();
    let mut rows = Vec::new();
    for (line, rec) in csv_records(path, body, &header, offset)? {
        let condition = Condition::parse(&rec[1])
            .ok_or_else(|| parse_err(path, line, 2, format!("unknown condition {:?}", &rec[1])))?;
        let rating: i64 = field(path, line, &rec, 3)?;
        let label: u8 = field(path, line, &rec, 4)?;
        let expected = binarize_label(rating).map_err(|_| parse_err(path, line, 4, "rating outside 0..=10"))?;
        if label != expected {
            return Err(parse_err(path, line, 5, "label disagrees with rating"));
        }
        let mut features = [None; N_FEATURES];
        for (k, slot) in features.iter_mut().enumerate() {
            let col = META_COLUMNS.len() + k;
            if !rec[col].is_empty() {
                *slot = Some(field(path, line, &rec, col)?);
            }
        }
        rows.push(FeatureVector {
            participant_id: rec[0].to_string(),
            condition,
            label_time: field(path, line, &rec, 2)?,
            rating: rating as u8,
            label,
            features,
        });
    }
    Ok(FeatureMatrix { rows, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFiles {
    pub gsr: String,
    pub ppg: String,
    pub gaze: String,
    pub labels: String,
}

impl Default for SessionFiles {
    fn default() -> Self {
        Self {
            gsr: "gsr.csv".into(),
            ppg: "ppg.csv".into(),
            gaze: "gaze.csv".into(),
            labels: "labels.csv".into(),
        }
    }
}

/// Nominal sampling rates; inferred from the median sample spacing when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionRates {
    pub gsr: f64,
    pub ppg: f64,
    pub gaze: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub meta: SessionMeta,
    pub files: SessionFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<SessionRates>,
}

pub const MANIFEST: &str = "manifest.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| DatasetError::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_session(dir: &Path, session: &Session) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = SessionFiles::default();
    let manifest = Manifest {
        meta: session.meta.clone(),
        files: files.clone(),
        rates: Some(SessionRates {
            gsr: session.gsr.nominal_rate(),
            ppg: session.ppg.nominal_rate(),
            gaze: session.gaze.nominal_rate(),
        }),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;

    let scalar = |name: &str, header: &str, stream: &signal::ScalarStream| -> Result<(), DatasetError> {
        let path = dir.join(name);
        let w = csv_writer(&path)?;
        let head = std::iter::once(vec!["t".to_string(), header.to_string()]);
        let rows = stream.samples().map(|(t, v)| vec![t.to_string(), v.to_string()]);
        write_all(&path, w, head.chain(rows))
    };
    scalar(&files.gsr, "sc_microsiemens", &session.gsr)?;
    scalar(&files.ppg, "ppg", &session.ppg)?;

    let path = dir.join(&files.gaze);
    let head = std::iter::once(["t", "x", "y", "screen"].map(String::from).to_vec());
    let rows = session
        .gaze
        .samples()
        .map(|(t, g)| vec![t.to_string(), g.x.to_string(), g.y.to_string(), g.screen.as_str().to_string()]);
    write_all(&path, csv_writer(&path)?, head.chain(rows))?;

    let path = dir.join(&files.labels);
    let head = std::iter::once(vec!["t".to_string(), "rating".to_string()]);
    let rows = session.labels.samples().map(|(t, r)| vec![t.to_string(), r.to_string()]);
    write_all(&path, csv_writer(&path)?, head.chain(rows))
}

fn read_pairs<V>(
    path: &Path,
    header: &[&str],
    parse: impl Fn(u64, &csv::StringRecord) -> Result<V, DatasetError>,
) -> Result<Vec<(f64, V)>, DatasetError> {
    let text = read_text(path)?;
    csv_records(path, &text, header, 0)?
        .into_iter()
        .map(|(line, rec)| Ok((field(path, line, &rec, 0)?, parse(line, &rec)?)))
        .collect()
}

fn median_rate(samples: &[f64]) -> f64 {
    let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    1.0 / gaps[gaps.len() / 2]
}

pub fn read_session(dir: &Path) -> Result<Session, DatasetError> {
    let mpath = dir.join(MANIFEST);
    let manifest: Manifest = serde_json::from_str(&read_text(&mpath)?)
        .map_err(|source| DatasetError::Json { path: mpath.clone(), source })?;
    let files = &manifest.files;

    let gsr_path = dir.join(&files.gsr);
    let gsr = read_pairs(&gsr_path, &["t", "sc_microsiemens"], |l, r| field(&gsr_path, l, r, 1))?;
    let ppg_path = dir.join(&files.ppg);
    let ppg = read_pairs(&ppg_path, &["t", "ppg"], |l, r| field(&ppg_path, l, r, 1))?;
    let gaze_path = dir.join(&files.gaze);
    let gaze = read_pairs(&gaze_path, &["t", "x", "y", "screen"], |l, r| {
        Ok(GazePoint {
            x: field(&gaze_path, l, r, 1)?,
            y: field(&gaze_path, l, r, 2)?,
            screen: Screen::parse(&r[3])
                .ok_or_else(|| parse_err(&gaze_path, l, 4, format!("unknown screen {:?}", &r[3])))?,
        })
    })?;
    let label_path = dir.join(&files.labels);
    let labels = read_pairs(&label_path, &["t", "rating"], |l, r| field(&label_path, l, r, 1))?;

    let times = |v: &[(f64, f64)]| v.iter().map(|p| p.0).collect::<Vec<_>>();
    let rates = manifest.rates.unwrap_or_else(|| SessionRates {
        gsr: median_rate(&times(&gsr)),
        ppg: median_rate(&times(&ppg)),
        gaze: median_rate(&gaze.iter().map(|p| p.0).collect::<Vec<_>>()),
    });
    let raw = RawStreams {
        gsr_rate: rates.gsr,
        gsr,
        ppg_rate: rates.ppg,
        ppg,
        gaze_rate: rates.gaze,
        gaze,
        labels,
    };
    Ok(signal::assemble_session(raw, manifest.meta)?)
}

/// Session directories directly under `root` that carry a manifest, sorted by name.
pub fn list_sessions(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut dirs: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let p = entry.path();
        if p.join(MANIFEST).is_file() {
            dirs.insert(entry.file_name().to_string_lossy().into_owned(), p);
        }
    }
    Ok(dirs.into_values().collect())
}
