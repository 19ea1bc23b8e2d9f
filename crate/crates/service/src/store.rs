//! Annotation state and its append-only event log.
//!
//! Every mutation is an [`Event`]: it is validated, appended to the log and
//! synced to disk, and only then applied in memory. Replaying the log at
//! startup therefore rebuilds exactly the acknowledged state.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use segclf_core::data::{load_embeddings, load_segments};
use segclf_core::evaluate::EvalReport;
use segclf_core::featurize::DEFAULT_SCORE_THRESHOLD;
use segclf_core::ops::{
    match_objects, reliability_report, uniform_sample, weighted_sample, MatchReport, ReliabilityReport, SamplingPlan,
    SynonymDictionary,
};
use segclf_core::{binary_targets, seed, ImageSegments, Label, LabelRecord, SegmentRecord, Vocabulary};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ApiError;
use crate::scorer::Scoring;

pub const MAX_OBJECTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub batch: usize,
    pub round: u32,
    pub coder: String,
    pub plan: SamplingPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Naming {
    pub image_id: String,
    pub coder_id: String,
    pub objects: Vec<String>,
    /// Object name to the 1-based segment number it was matched to.
    #[serde(default)]
    pub matches: BTreeMap<String, Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Registered {
        dataset_id: String,
        segments: PathBuf,
        vocabulary: String,
        embeddings: Option<PathBuf>,
    },
    Served(Batch),
    Labeled(LabelRecord),
    Retrained {
        round: u32,
        n_labels: usize,
        scores: BTreeMap<String, f64>,
        report: Vec<EvalReport>,
    },
    Named(Naming),
}

pub struct Dataset {
    pub id: String,
    pub vocabulary: Vocabulary,
    pub images: Arc<Vec<ImageSegments>>,
    pub n_embeddings: Option<usize>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn load(id: &str, segments: &Path, vocabulary: &str, embeddings: Option<&Path>) -> Result<Self, ApiError> {
        if id.trim().is_empty() {
            return Err(ApiError::Unprocessable("dataset_id must not be empty".into()));
        }
        let vocab = Vocabulary::resolve(vocabulary)?;
        let images = load_segments(segments, &vocab)?;
        let index: HashMap<String, usize> = images.iter().enumerate().map(|(i, img)| (img.image_id.clone(), i)).collect();
        let n_embeddings = match embeddings {
            None => None,
            Some(path) => {
                let emb = load_embeddings(path)?;
                if let Some(id) = emb.image_ids().iter().find(|id| !index.contains_key(*id)) {
                    return Err(ApiError::Unprocessable(format!("embedding for unknown image {id:?}")));
                }
                Some(emb.len())
            }
        };
        Ok(Dataset {
            id: id.to_string(),
            vocabulary: vocab,
            images: Arc::new(images),
            n_embeddings,
            index,
        })
    }

    pub fn image(&self, id: &str) -> Result<&ImageSegments, ApiError> {
        self.index
            .get(id)
            .map(|&i| &self.images[i])
            .ok_or_else(|| ApiError::NotFound(format!("unknown image {id:?}")))
    }
}

/// Segments shown to coders: those above the detection threshold, numbered
/// from 1 in file order.
pub fn shown_segments(image: &ImageSegments) -> impl Iterator<Item = (usize, &SegmentRecord)> {
    image
        .segments
        .iter()
        .filter(|s| s.score >= DEFAULT_SCORE_THRESHOLD)
        .enumerate()
        .map(|(i, s)| (i + 1, s))
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentView {
    pub number: usize,
    pub area: f64,
    pub polygon: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageView {
    pub image_id: String,
    pub image_uri: Option<String>,
    pub segments: Vec<SegmentView>,
}

impl ImageView {
    pub fn new(image: &ImageSegments, reveal: bool) -> Self {
        ImageView {
            image_id: image.image_id.clone(),
            image_uri: image.image_uri.clone(),
            segments: shown_segments(image)
                .map(|(number, s)| SegmentView {
                    number,
                    area: s.area,
                    polygon: s.polygon.clone(),
                    category: reveal.then(|| s.category.clone()),
                    score: reveal.then_some(s.score),
                })
                .collect(),
        }
    }
}

/// What a retrain job needs, copied out so the lock is not held while it runs.
pub struct RetrainInput {
    pub images: Arc<Vec<ImageSegments>>,
    pub vocabulary: Vocabulary,
    pub targets: BTreeMap<String, bool>,
    pub n_labels: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NamingReport {
    pub submissions: usize,
    /// Names the coders linked to a segment themselves.
    pub coder_matched: usize,
    pub coder_unmatched: usize,
    #[serde(flatten)]
    pub matching: MatchReport,
}

struct EventLog {
    file: File,
}

impl EventLog {
    /// Opens (creating) the log and returns it with the events it holds. A
    /// torn final line, which was never acknowledged, is cut off.
    fn open(path: &Path) -> Result<(Self, Vec<Event>), ApiError> {
        let io = |e: std::io::Error| ApiError::Internal(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path).map_err(io)?;
        let mut events = Vec::new();
        let mut good = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(io)?;
            if read == 0 {
                break;
            }
            n += 1;
            let complete = line.ends_with('\n');
            match serde_json::from_str::<Event>(line.trim_end()) {
                Ok(e) if complete => {
                    events.push(e);
                    good += read as u64;
                }
                _ if !complete => break,
                Err(e) => return Err(ApiError::Internal(format!("{} line {n}: {e}", path.display()))),
                Ok(_) => unreachable!(),
            }
        }
        drop(reader);
        if good < file.metadata().map_err(io)?.len() {
            tracing::warn!("dropping torn record at the end of {}", path.display());
            file.set_len(good).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
        }
        Ok((EventLog { file }, events))
    }

    fn append(&mut self, event: &Event) -> Result<(), ApiError> {
        let mut line = serde_json::to_string(event).map_err(|e| ApiError::Internal(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ApiError::Internal(format!("event log: {e}")))
    }
}

pub struct Store {
    log: Option<EventLog>,
    seed: u64,
    free_labeling: bool,
    dataset: Option<Dataset>,
    round: u32,
    labels: Vec<LabelRecord>,
    /// (coder, image) pairs already labeled.
    labeled: HashSet<(String, String)>,
    served: HashMap<String, HashSet<String>>,
    batches: Vec<Batch>,
    scores: Option<BTreeMap<String, f64>>,
    namings: Vec<Naming>,
}

impl Store {
    /// A store backed by `log` (replayed first), or purely in memory.
    pub fn open(log: Option<&Path>, seed: u64, free_labeling: bool) -> Result<Self, ApiError> {
        let mut store = Store {
            log: None,
            seed,
            free_labeling,
            dataset: None,
            round: 0,
            labels: Vec::new(),
            labeled: HashSet::new(),
            served: HashMap::new(),
            batches: Vec::new(),
            scores: None,
            namings: Vec::new(),
        };
        if let Some(path) = log {
            let (log, events) = EventLog::open(path)?;
            for e in events {
                if let Event::Registered {
                    dataset_id,
                    segments,
                    vocabulary,
                    embeddings,
                } = &e
                {
                    store.dataset = Some(Dataset::load(dataset_id, segments, vocabulary, embeddings.as_deref())?);
                }
                store.apply(e);
            }
            store.log = Some(log);
        }
        Ok(store)
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::Registered { .. } => self.round = 1,
            Event::Served(b) => {
                self.served.entry(b.coder.clone()).or_default().extend(b.plan.drawn.iter().cloned());
                self.batches.push(b);
            }
            Event::Labeled(l) => {
                self.labeled.insert((l.coder_id.clone(), l.image_id.clone()));
                self.labels.push(l);
            }
            Event::Retrained { round, scores, .. } => {
                self.round = round;
                self.scores = Some(scores);
            }
            Event::Named(n) => self.namings.push(n),
        }
    }

    fn commit(&mut self, event: Event) -> Result<(), ApiError> {
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        self.apply(event);
        Ok(())
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn dataset_id(&self) -> Option<&str> {
        self.dataset.as_ref().map(|d| d.id.as_str())
    }

    pub fn dataset(&self) -> Result<&Dataset, ApiError> {
        self.dataset
            .as_ref()
            .ok_or_else(|| ApiError::NotFound("no dataset registered".into()))
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn scores(&self) -> Option<&BTreeMap<String, f64>> {
        self.scores.as_ref()
    }

    pub fn register(&mut self, dataset: Dataset, segments: PathBuf, vocabulary: String, embeddings: Option<PathBuf>) -> Result<(), ApiError> {
        if let Some(d) = &self.dataset {
            let message = if d.id == dataset.id {
                format!("dataset {:?} is already registered", d.id)
            } else {
                format!("this service already hosts dataset {:?}", d.id)
            };
            return Err(ApiError::conflict(message));
        }
        let event = Event::Registered {
            dataset_id: dataset.id.clone(),
            segments,
            vocabulary,
            embeddings,
        };
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        self.dataset = Some(dataset);
        self.apply(event);
        Ok(())
    }

    /// Images `coder` has neither been served nor labeled, in dataset order.
    pub fn pool(&self, coder: &str) -> Result<Vec<String>, ApiError> {
        let served = self.served.get(coder);
        Ok(self
            .dataset()?
            .images
            .iter()
            .map(|i| &i.image_id)
            .filter(|id| !served.is_some_and(|s| s.contains(*id)))
            .filter(|id| !self.labeled.contains(&(coder.to_string(), (*id).clone())))
            .cloned()
            .collect())
    }

    /// Draws the next batch for `coder`: uniform before the first retrain,
    /// weighted by the cached scores afterwards.
    pub fn next_batch(&mut self, coder: &str, size: usize) -> Result<Batch, ApiError> {
        if coder.trim().is_empty() {
            return Err(ApiError::Unprocessable("coder must not be empty".into()));
        }
        if size == 0 {
            return Err(ApiError::Unprocessable("size must be at least 1".into()));
        }
        let pool = self.pool(coder)?;
        if size > pool.len() {
            let mut details = Map::new();
            details.insert("remaining".into(), Value::from(pool.len()));
            return Err(ApiError::Conflict {
                message: format!("{size} images requested but only {} remain for {coder:?}", pool.len()),
                details,
            });
        }
        let number = self.batches.len();
        let batch_seed = seed::derive(self.seed, &[u64::from(self.round), number as u64]);
        let plan = match &self.scores {
            None => uniform_sample(&pool, size, batch_seed)?,
            Some(scores) => {
                let scored: Vec<(String, f64)> = pool
                    .into_iter()
                    .map(|id| {
                        let s = scores.get(&id).copied().unwrap_or(0.0);
                        (id, s)
                    })
                    .collect();
                weighted_sample(&scored, size, batch_seed)?
            }
        };
        let batch = Batch {
            batch: number,
            round: self.round,
            coder: coder.to_string(),
            plan,
        };
        self.commit(Event::Served(batch.clone()))?;
        Ok(batch)
    }

    pub fn add_label(&mut self, image_id: &str, coder_id: &str, label: i64) -> Result<LabelRecord, ApiError> {
        let label = u8::try_from(label)
            .ok()
            .and_then(|v| Label::try_from(v).ok())
            .ok_or_else(|| ApiError::Unprocessable(format!("label {label} outside 0..=3")))?;
        if coder_id.trim().is_empty() {
            return Err(ApiError::Unprocessable("coder_id must not be empty".into()));
        }
        self.dataset()?.image(image_id)?;
        let key = (coder_id.to_string(), image_id.to_string());
        if self.labeled.contains(&key) {
            return Err(ApiError::conflict(format!("{coder_id:?} already labeled {image_id:?}")));
        }
        let served = self.served.get(coder_id).is_some_and(|s| s.contains(image_id));
        if !served && !self.free_labeling {
            return Err(ApiError::conflict(format!("{image_id:?} was not served to {coder_id:?}")));
        }
        let record = LabelRecord {
            image_id: image_id.to_string(),
            coder_id: coder_id.to_string(),
            round: self.round,
            label,
        };
        self.commit(Event::Labeled(record.clone()))?;
        Ok(record)
    }

    pub fn retrain_input(&self) -> Result<RetrainInput, ApiError> {
        let d = self.dataset()?;
        let targets = binary_targets(&self.labels);
        let positives = targets.values().filter(|&&t| t).count();
        if positives == 0 || positives == targets.len() {
            let mut details = Map::new();
            details.insert("labeled_images".into(), Value::from(targets.len()));
            details.insert("positives".into(), Value::from(positives));
            return Err(ApiError::Conflict {
                message: "labels contain a single class; need at least one protest and one non-protest image".into(),
                details,
            });
        }
        Ok(RetrainInput {
            images: d.images.clone(),
            vocabulary: d.vocabulary.clone(),
            targets,
            n_labels: self.labels.len(),
        })
    }

    pub fn finish_retrain(&mut self, n_labels: usize, scoring: Scoring) -> Result<(u32, Vec<EvalReport>), ApiError> {
        let round = self.round + 1;
        let report = scoring.report;
        self.commit(Event::Retrained {
            round,
            n_labels,
            scores: scoring.scores,
            report: report.clone(),
        })?;
        Ok((round, report))
    }

    pub fn image_view(&self, image_id: &str, reveal: bool) -> Result<ImageView, ApiError> {
        Ok(ImageView::new(self.dataset()?.image(image_id)?, reveal))
    }

    pub fn add_naming(&mut self, n: Naming) -> Result<(), ApiError> {
        if n.objects.len() > MAX_OBJECTS {
            return Err(ApiError::Unprocessable(format!(
                "at most {MAX_OBJECTS} objects may be named, got {}",
                n.objects.len()
            )));
        }
        if n.coder_id.trim().is_empty() {
            return Err(ApiError::Unprocessable("coder_id must not be empty".into()));
        }
        if n.objects.iter().any(|o| o.trim().is_empty()) {
            return Err(ApiError::Unprocessable("object names must not be empty".into()));
        }
        let shown = shown_segments(self.dataset()?.image(&n.image_id)?).count();
        for (name, number) in &n.matches {
            if !n.objects.contains(name) {
                return Err(ApiError::Unprocessable(format!("match for {name:?}, which was not named")));
            }
            if let Some(k) = number {
                if *k == 0 || *k > shown {
                    return Err(ApiError::Unprocessable(format!(
                        "segment {k} does not exist; {:?} shows segments 1..={shown}",
                        n.image_id
                    )));
                }
            }
        }
        if self.namings.iter().any(|o| o.image_id == n.image_id && o.coder_id == n.coder_id) {
            return Err(ApiError::conflict(format!("{:?} already named objects on {:?}", n.coder_id, n.image_id)));
        }
        self.commit(Event::Named(n))
    }

    /// Strict and lenient agreement of every submission's names with the
    /// categories of the segments shown on its image.
    pub fn naming_report(&self, dict: &SynonymDictionary) -> Result<NamingReport, ApiError> {
        let d = self.dataset()?;
        let mut out = NamingReport::default();
        for n in &self.namings {
            let detected: Vec<String> = shown_segments(d.image(&n.image_id)?).map(|(_, s)| s.category.clone()).collect();
            out.matching.merge(&match_objects(&n.objects, &detected, dict));
            let linked = n.objects.iter().filter(|o| n.matches.get(*o).is_some_and(Option::is_some)).count();
            out.submissions += 1;
            out.coder_matched += linked;
            out.coder_unmatched += n.objects.len() - linked;
        }
        Ok(out)
    }

    pub fn reliability(&self) -> Result<ReliabilityReport, ApiError> {
        self.dataset()?;
        reliability_report(&self.labels).map_err(|e| ApiError::conflict(e.to_string()))
    }
}
