//! Prediction ingestion and the subprocess predictor protocol.
//!
//! Wire format, UTF-8 JSON lines:
//!
//! * request (toolkit to child): `{"id": str, "path": str}`
//! * response (child to toolkit): `{"id": str, "scores": [num], "prob": bool}`
//!   or `{"id": str, "error": str}`
//! * an empty request line asks the child to exit.
//!
//! Responses may arrive in any order and are matched by id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageId;

pub const TIMEOUT_ENV: &str = "SUPPRESSKIT_PREDICTOR_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
pub const DEFAULT_WINDOW: usize = 64;
/// Condition name passed to predictors for untransformed images.
pub const BASELINE: &str = "baseline";
/// Environment variable carrying the condition name to subprocess predictors.
pub const CONDITION_ENV: &str = "SUPPRESSKIT_CONDITION";

const PROB_SUM_TOLERANCE: f64 = 1e-4;

/// Class probabilities for one image. `is_probability` records whether the
/// source supplied probabilities (`true`) or logits that were softmaxed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(rename = "id")]
    pub image_id: ImageId,
    pub scores: Vec<f64>,
    #[serde(rename = "prob")]
    pub is_probability: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Response {
    Scores {
        id: ImageId,
        scores: Vec<f64>,
        prob: bool,
    },
    Failure {
        id: ImageId,
        error: String,
    },
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / total).collect()
}

impl PredictionRecord {
    /// Validates raw scores; logits are converted to probabilities.
    pub fn from_scores(image_id: ImageId, scores: Vec<f64>, prob: bool) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidPredictions(format!("{image_id}: empty score vector")));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPredictions(format!("{image_id}: non-finite score")));
        }
        let scores = if prob {
            if scores.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidPredictions(format!(
                    "{image_id}: probabilities must lie in [0, 1]"
                )));
            }
            let sum: f64 = scores.iter().sum();
            if sum > 1.0 + PROB_SUM_TOLERANCE {
                return Err(Error::InvalidPredictions(format!(
                    "{image_id}: probabilities sum to {sum}, above 1"
                )));
            }
            scores
        } else {
            softmax(&scores)
        };
        Ok(Self {
            image_id,
            scores,
            is_probability: prob,
        })
    }
}

fn parse_response(line: &str) -> std::result::Result<Response, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

/// Collects records, rejecting duplicate ids and ragged score lengths.
#[derive(Default)]
struct RecordSet {
    records: BTreeMap<ImageId, PredictionRecord>,
    width: Option<usize>,
}

impl RecordSet {
    fn insert(&mut self, record: PredictionRecord, origin: &str) -> Result<()> {
        let n = record.scores.len();
        match self.width {
            Some(w) if w != n => {
                return Err(Error::InvalidPredictions(format!(
                    "{origin}: {} has {n} scores, expected {w}",
                    record.image_id
                )))
            }
            _ => self.width = Some(n),
        }
        if self.records.contains_key(&record.image_id) {
            return Err(Error::InvalidPredictions(format!(
                "{origin}: duplicate prediction for id {}",
                record.image_id
            )));
        }
        self.records.insert(record.image_id.clone(), record);
        Ok(())
    }
}

/// Reads a JSON-lines prediction file; records come back sorted by id.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut set = RecordSet::default();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let origin = format!("{}:{}", path.display(), n + 1);
        let record = match parse_response(&line) {
            Ok(Response::Scores { id, scores, prob }) => PredictionRecord::from_scores(id, scores, prob)
                .map_err(|e| Error::InvalidPredictions(format!("{origin}: {e}")))?,
            Ok(Response::Failure { id, error }) => {
                return Err(Error::InvalidPredictions(format!(
                    "{origin}: prediction error for {id}: {error}"
                )))
            }
            Err(e) => return Err(Error::InvalidPredictions(format!("{origin}: malformed line: {e}"))),
        };
        set.insert(record, &origin)?;
    }
    Ok(set.records.into_values().collect())
}

pub fn write_predictions<W: Write>(mut out: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::json("prediction record", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}

/// One image for a predictor to score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: ImageId,
    pub path: PathBuf,
}

fn missing_error(prefix: &str, missing: &BTreeSet<&ImageId>) -> Error {
    let ids: Vec<&str> = missing.iter().map(|id| id.as_str()).collect();
    Error::Predictor(format!("{prefix}missing predictions: {ids:?}"))
}

/// Keeps exactly the requested ids; fails if any is absent.
pub fn restrict_to_requests(
    records: Vec<PredictionRecord>,
    requests: &[PredictRequest],
) -> Result<Vec<PredictionRecord>> {
    let wanted: BTreeSet<&ImageId> = requests.iter().map(|r| &r.id).collect();
    let have: BTreeSet<&ImageId> = records.iter().map(|r| &r.image_id).collect();
    let missing: BTreeSet<&ImageId> = wanted.difference(&have).copied().collect();
    if !missing.is_empty() {
        return Err(missing_error("", &missing));
    }
    let wanted: BTreeSet<ImageId> = wanted.into_iter().cloned().collect();
    Ok(records.into_iter().filter(|r| wanted.contains(&r.image_id)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "location", rename_all = "lowercase")]
pub enum PredictorMode {
    /// Directory of `<condition>.jsonl` prediction files.
    File(PathBuf),
    /// Shell command line speaking the JSON-lines protocol.
    Subprocess(String),
}

/// A named predictor. Parsed from `[name=]file:<dir>` or `[name=]cmd:<command>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorHandle {
    pub name: String,
    #[serde(flatten)]
    pub mode: PredictorMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
}

impl FromStr for PredictorHandle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once('=') {
            Some((n, r)) if !n.contains(':') => (Some(n.to_string()), r),
            _ => (None, s),
        };
        let bad = || {
            Error::InvalidParameter(format!(
                "predictor must be [name=]file:<dir> or [name=]cmd:<command>, got {s:?}"
            ))
        };
        let (kind, location) = rest.split_once(':').ok_or_else(bad)?;
        if location.is_empty() {
            return Err(bad());
        }
        let mode = match kind {
            "file" => PredictorMode::File(PathBuf::from(location)),
            "cmd" => PredictorMode::Subprocess(location.to_string()),
            _ => return Err(bad()),
        };
        let name = name.unwrap_or_else(|| match &mode {
            PredictorMode::File(dir) => dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "predictor".into()),
            PredictorMode::Subprocess(_) => "predictor".into(),
        });
        if name.is_empty() {
            return Err(bad());
        }
        Ok(Self {
            name,
            mode,
            class_count: None,
        })
    }
}

impl fmt::Display for PredictorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.mode {
            PredictorMode::File(dir) => write!(f, "{}=file:{}", self.name, dir.display()),
            PredictorMode::Subprocess(cmd) => write!(f, "{}=cmd:{cmd}", self.name),
        }
    }
}

/// Anything that turns a set of images into prediction records.
pub trait Predictor {
    fn name(&self) -> &str;

    /// Whether `predict` reads the image files; file-mode predictors do not,
    /// so callers can skip writing transformed images.
    fn needs_images(&self) -> bool;

    /// Records for exactly the requested ids, sorted by id.
    fn predict(&mut self, condition: &str, requests: &[PredictRequest]) -> Result<Vec<PredictionRecord>>;
}

fn check_class_count(records: &[PredictionRecord], class_count: Option<usize>) -> Result<()> {
    if let Some(c) = class_count {
        if let Some(r) = records.iter().find(|r| r.scores.len() != c) {
            return Err(Error::InvalidPredictions(format!(
                "{} has {} scores, predictor declares {c} classes",
                r.image_id,
                r.scores.len()
            )));
        }
    }
    Ok(())
}

/// Reads `<dir>/<condition>.jsonl`.
pub struct FilePredictor {
    name: String,
    dir: PathBuf,
    class_count: Option<usize>,
}

impl FilePredictor {
    pub fn new(name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            dir: dir.into(),
            class_count: None,
        }
    }

    pub fn file_for(&self, condition: &str) -> PathBuf {
        self.dir.join(format!("{condition}.jsonl"))
    }
}

impl Predictor for FilePredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn needs_images(&self) -> bool {
        false
    }

    fn predict(&mut self, condition: &str, requests: &[PredictRequest]) -> Result<Vec<PredictionRecord>> {
        let path = self.file_for(condition);
        let records = restrict_to_requests(load_predictions(&path)?, requests)
            .map_err(|e| Error::Predictor(format!("{}: {e}", path.display())))?;
        check_class_count(&records, self.class_count)?;
        Ok(records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubprocessOptions {
    /// Longest wait for any single response.
    pub timeout: Duration,
    /// Maximum number of unanswered requests in flight.
    pub window: usize,
}

impl Default for SubprocessOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_millis(DEFAULT_TIMEOUT_MS),
            window: DEFAULT_WINDOW,
        }
    }
}

impl SubprocessOptions {
    /// Defaults with the timeout taken from the environment when set.
    pub fn from_env() -> Result<Self> {
        let mut opts = Self::default();
        if let Ok(raw) = std::env::var(TIMEOUT_ENV) {
            let ms: u64 = raw.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("{TIMEOUT_ENV} must be milliseconds, got {raw:?}"))
            })?;
            opts.timeout = Duration::from_millis(ms);
        }
        Ok(opts)
    }
}

/// Spawns `command` per condition and streams requests to it.
pub struct SubprocessPredictor {
    name: String,
    command: String,
    options: SubprocessOptions,
    class_count: Option<usize>,
}

impl SubprocessPredictor {
    pub fn new(name: impl Into<String>, command: impl Into<String>, options: SubprocessOptions) -> Self {
        Self {
            name: name.into(),
            command: command.into(),
            options,
            class_count: None,
        }
    }
}

impl Predictor for SubprocessPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn needs_images(&self) -> bool {
        true
    }

    fn predict(&mut self, condition: &str, requests: &[PredictRequest]) -> Result<Vec<PredictionRecord>> {
        let mut cmd = shell(&self.command);
        cmd.env(CONDITION_ENV, condition);
        let records = run_subprocess_predictor(cmd, requests, &self.options)?;
        check_class_count(&records, self.class_count)?;
        Ok(records)
    }
}

/// Builds the predictor for a handle.
pub fn open_predictor(handle: &PredictorHandle) -> Result<Box<dyn Predictor + Send>> {
    Ok(match &handle.mode {
        PredictorMode::File(dir) => Box::new(FilePredictor {
            name: handle.name.clone(),
            dir: dir.clone(),
            class_count: handle.class_count,
        }),
        PredictorMode::Subprocess(command) => Box::new(SubprocessPredictor {
            name: handle.name.clone(),
            command: command.clone(),
            options: SubprocessOptions::from_env()?,
            class_count: handle.class_count,
        }),
    })
}

fn shell(command: &str) -> Command {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(command);
    cmd
}

enum Event {
    Line(usize, String),
    ReadError(String),
    Eof,
}

fn kill(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

/// Runs one protocol session: sends every request (at most `window`
/// unanswered at a time), then the shutdown line, and collects responses
/// until the child closes its output.
pub fn run_subprocess_predictor(
    mut command: Command,
    requests: &[PredictRequest],
    options: &SubprocessOptions,
) -> Result<Vec<PredictionRecord>> {
    let window = options.window.max(1);
    let mut child = command
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Predictor(format!("failed to start predictor: {e}")))?;
    let stdout = child.stdout.take().expect("stdout is piped");
    let mut stdin = Some(child.stdin.take().expect("stdin is piped"));

    let (tx, rx) = mpsc::channel();
    let reader = thread::spawn(move || {
        for (n, line) in BufReader::new(stdout).lines().enumerate() {
            let event = match line {
                Ok(l) => Event::Line(n + 1, l),
                Err(e) => Event::ReadError(e.to_string()),
            };
            let stop = matches!(event, Event::ReadError(_));
            if tx.send(event).is_err() || stop {
                return;
            }
        }
        let _ = tx.send(Event::Eof);
    });

    let requested: BTreeSet<&ImageId> = requests.iter().map(|r| &r.id).collect();
    if requested.len() != requests.len() {
        kill(&mut child);
        return Err(Error::Predictor("duplicate ids in predictor requests".into()));
    }

    let mut set = RecordSet::default();
    let mut answered: BTreeSet<ImageId> = BTreeSet::new();
    let mut failures: Vec<String> = Vec::new();
    let mut sent = 0;
    let mut child_closed_input = false;

    let outcome: Result<()> = loop {
        while sent < requests.len() && sent - answered.len() < window && !child_closed_input {
            let req = &requests[sent];
            let line = serde_json::json!({"id": req.id, "path": req.path}).to_string();
            let pipe = stdin.as_mut().expect("open until shutdown");
            if writeln!(pipe, "{line}").and_then(|_| pipe.flush()).is_err() {
                child_closed_input = true;
                break;
            }
            sent += 1;
        }
        if sent == requests.len() && stdin.is_some() {
            if let Some(mut pipe) = stdin.take() {
                let _ = writeln!(pipe).and_then(|_| pipe.flush());
            }
        }
        if answered.len() == requests.len() && stdin.is_none() {
            break Ok(());
        }
        match rx.recv_timeout(options.timeout) {
            Ok(Event::Line(n, line)) => {
                if line.trim().is_empty() {
                    continue;
                }
                let origin = format!("predictor output line {n}");
                let (id, record) = match parse_response(&line) {
                    Ok(Response::Scores { id, scores, prob }) => {
                        match PredictionRecord::from_scores(id.clone(), scores, prob) {
                            Ok(r) => (id, Some(r)),
                            Err(e) => break Err(Error::Predictor(format!("{origin}: {e}"))),
                        }
                    }
                    Ok(Response::Failure { id, error }) => {
                        failures.push(format!("{id}: {error}"));
                        (id, None)
                    }
                    Err(e) => break Err(Error::Predictor(format!("{origin}: malformed line: {e}"))),
                };
                if !requested.contains(&id) {
                    break Err(Error::Predictor(format!("{origin}: unexpected id {id}")));
                }
                if !answered.insert(id.clone()) {
                    break Err(Error::Predictor(format!("{origin}: duplicate response for id {id}")));
                }
                if let Some(r) = record {
                    if let Err(e) = set.insert(r, &origin) {
                        break Err(Error::Predictor(e.to_string()));
                    }
                }
            }
            Ok(Event::ReadError(e)) => break Err(Error::Predictor(format!("reading predictor output: {e}"))),
            Ok(Event::Eof) | Err(mpsc::RecvTimeoutError::Disconnected) => {
                let missing: BTreeSet<&ImageId> = requested
                    .iter()
                    .copied()
                    .filter(|id| !answered.contains(*id))
                    .collect();
                let prefix = if sent < requests.len() {
                    "predictor exited before all requests were sent; "
                } else {
                    "predictor closed its output early; "
                };
                break Err(missing_error(prefix, &missing));
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {
                break Err(Error::Predictor(format!(
                    "predictor timed out after {} ms with {} outstanding requests",
                    options.timeout.as_millis(),
                    sent - answered.len()
                )))
            }
        }
    };

    drop(stdin);
    // The reader is detached rather than joined: a descendant of the child
    // may still hold the output pipe open.
    drop(reader);
    if let Err(e) = outcome {
        kill(&mut child);
        return Err(e);
    }
    // All answers are in and shutdown was sent; give the child the usual
    // timeout to exit on its own.
    let deadline = Instant::now() + options.timeout;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            _ => {
                kill(&mut child);
                break;
            }
        }
    }
    if !failures.is_empty() {
        return Err(Error::Predictor(format!(
            "predictor reported errors for {} images: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok(set.records.into_values().collect())
}
