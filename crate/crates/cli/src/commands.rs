//! One function per subcommand. Each reads its inputs, writes its outputs
//! into `--out`, and finishes with `run.json`.

use std::collections::BTreeSet;

use segclf_core::evaluate::{
    cross_validate, evaluate_grouped, permutation_importance, write_reports_csv, CvResult, ImportanceOptions,
};
use segclf_core::learners::train as fit;
use segclf_core::ops::{self, KMeansOptions, SplitItem};
use segclf_core::synthetic::{self, SyntheticConfig};
use segclf_core::{binary_targets, featurize_dataset, FeatureSpec, Hyperparams, LearnerKind, Vocabulary};
use serde_json::Value;

use crate::failure::{Context, Failure};
use crate::inputs::{self, vocabulary};
use crate::manifest::Run;
use crate::*;

type Outcome = Result<(), Failure>;

fn read_json(run: &mut Run, path: &std::path::Path) -> Result<Value, Failure> {
    run.input(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Parses one hyperparameter object as overrides of the learner's defaults.
/// The learner comes from the `"learner"` tag or `--learner`; forest and
/// boosted seeds always come from `--seed`.
fn hyperparams(v: Value, learner: Option<LearnerKind>, seed: u64) -> Result<Hyperparams, Failure> {
    let Value::Object(fields) = v else {
        return Err(Failure::usage("hyperparameters must be JSON objects"));
    };
    let kind = match (fields.get("learner"), learner) {
        (None, Some(k)) => k,
        (None, None) => return Err(Failure::usage("hyperparameters name no learner; pass --learner")),
        (Some(tag), k) => {
            let parsed: LearnerKind = tag
                .as_str()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Failure::usage(format!("unknown learner {tag}")))?;
            if k.is_some_and(|k| k != parsed) {
                return Err(Failure::usage(format!(
                    "--learner {} conflicts with {} hyperparameters",
                    k.unwrap().as_str(),
                    parsed.as_str()
                )));
            }
            parsed
        }
    };
    let mut base = serde_json::to_value(Hyperparams::default_for(kind, seed)).expect("hyperparameters serialize");
    let obj = base.as_object_mut().expect("tagged object");
    for (key, value) in fields {
        if !obj.contains_key(&key) {
            return Err(Failure::usage(format!("unknown {} hyperparameter {key:?}", kind.as_str())));
        }
        if key != "seed" {
            obj.insert(key, value);
        }
    }
    let hp: Hyperparams = serde_json::from_value(base).map_err(|e| Failure::usage(format!("hyperparameters: {e}")))?;
    hp.validate()?;
    Ok(hp)
}

pub fn featurize(a: &FeaturizeArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let vocab = vocabulary(a.input.vocab.as_deref())?;
    let cfg = inputs::config(a.kind, a.input.threshold)?;
    let images = inputs::segments(&mut run, &a.input.segments, &vocab)?;
    let fm = featurize_dataset(&images, &cfg, &vocab)?;
    run.write("features.csv", |w| fm.write_csv(w))?;
    run.finish("featurize", config, None)
}

pub fn train(a: &TrainArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let vocab = vocabulary(a.input.vocab.as_deref())?;
    let cfg = inputs::config(a.kind, a.input.threshold)?;
    let hp = match &a.params {
        Some(path) => {
            let v = read_json(&mut run, path)?;
            hyperparams(v, a.learner, a.seed)?
        }
        None => Hyperparams::default_for(a.learner.expect("clap requires --learner"), a.seed),
    };
    let images = inputs::segments(&mut run, &a.input.segments, &vocab)?;
    let labels = inputs::labels(&mut run, &a.labels)?;
    let (fm, y) = inputs::labeled_rows(&mut run, &images, &cfg, &vocab, &labels, &a.subset)?;
    let mut model = fit(&fm.x, &y, &hp).context("training")?;
    model.features = Some(FeatureSpec::new(&vocab, &cfg));
    let reports = evaluate_grouped(&model, &fm.x, &y, &fm.countries)?;
    run.write("model.json", |w| {
        use std::io::Write;
        w.write_all(model.to_json().as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| segclf_core::Error::Computation(e.to_string()))
    })?;
    run.write("train_report.csv", |w| write_reports_csv(w, &reports))?;
    run.finish("train", config, Some(a.seed))
}

pub fn eval(a: &EvalArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let model = inputs::load_model(&mut run, &a.model)?;
    let (vocab, cfg) = inputs::model_features(&model, &a.input, a.kind)?;
    let images = inputs::segments(&mut run, &a.input.segments, &vocab)?;
    let labels = inputs::labels(&mut run, &a.labels)?;
    let (fm, y) = inputs::labeled_rows(&mut run, &images, &cfg, &vocab, &labels, &a.subset)?;
    let groups = match &a.clusters {
        None => fm.countries.clone(),
        Some(path) => {
            let clusters = inputs::read_clusters(&mut run, path)?;
            fm.image_ids
                .iter()
                .map(|id| {
                    clusters
                        .get(id)
                        .cloned()
                        .ok_or_else(|| Failure::data(format!("{id} has no cluster in {}", path.display())))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let reports = evaluate_grouped(&model, &fm.x, &y, &groups)?;
    run.write("eval.csv", |w| write_reports_csv(w, &reports))?;
    run.finish("eval", config, None)
}

fn write_cv_csv<W: std::io::Write>(w: W, res: &CvResult) -> segclf_core::Result<()> {
    let err = |e: csv::Error| segclf_core::Error::Computation(e.to_string());
    let k = res.scores.first().map_or(0, |s| s.fold_f1.len());
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["config".to_string(), "learner".into(), "params".into()];
    header.extend((1..=k).map(|f| format!("fold_{f}")));
    header.push("mean_f1".into());
    w.write_record(&header).map_err(err)?;
    for (i, s) in res.scores.iter().enumerate() {
        let params = serde_json::to_string(&s.hyperparams).map_err(|e| segclf_core::Error::Computation(e.to_string()))?;
        let mut rec = vec![i.to_string(), s.hyperparams.kind().as_str().to_string(), params];
        rec.extend(s.fold_f1.iter().map(|f| f.map(|v| format!("{v:.6}")).unwrap_or_default()));
        rec.push(format!("{:.6}", s.mean_f1));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| segclf_core::Error::Computation(e.to_string()))
}

pub fn cv(a: &CvArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let vocab = vocabulary(a.input.vocab.as_deref())?;
    let cfg = inputs::config(a.kind, a.input.threshold)?;
    let grid = match &a.grid {
        Some(path) => match read_json(&mut run, path)? {
            Value::Array(items) => items
                .into_iter()
                .map(|v| hyperparams(v, a.learner, a.seed))
                .collect::<Result<Vec<_>, _>>()?,
            _ => return Err(Failure::usage(format!("{}: expected a JSON array", path.display()))),
        },
        None => Hyperparams::default_grid(a.learner.expect("clap requires --learner"), a.seed),
    };
    let images = inputs::segments(&mut run, &a.input.segments, &vocab)?;
    let labels = inputs::labels(&mut run, &a.labels)?;
    let (fm, y) = inputs::labeled_rows(&mut run, &images, &cfg, &vocab, &labels, &a.subset)?;
    let res = cross_validate(&fm.x, &y, &grid, a.folds, a.seed).context("cross-validation")?;
    run.write("cv.csv", |w| write_cv_csv(w, &res))?;
    run.write_json("cv.json", &res)?;
    run.write_json("best_params.json", &res.best)?;
    run.finish("cv", config, Some(a.seed))
}

pub fn importance(a: &ImportanceArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let model = inputs::load_model(&mut run, &a.model)?;
    let (vocab, cfg) = inputs::model_features(&model, &a.input, a.kind)?;
    let features = match &a.categories {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .map(|n| {
                    vocab
                        .index_of(n)
                        .ok_or_else(|| Failure::usage(format!("{n:?} is not in vocabulary {:?}", vocab.name())))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let images = inputs::segments(&mut run, &a.input.segments, &vocab)?;
    let labels = inputs::labels(&mut run, &a.labels)?;
    let (fm, y) = inputs::labeled_rows(&mut run, &images, &cfg, &vocab, &labels, &a.subset)?;
    let opts = ImportanceOptions {
        repeats: a.repeats,
        seed: a.seed,
        features,
    };
    let rep = permutation_importance(&model, &fm.x, &y, &fm.countries, &fm.columns, &opts)?;
    run.write("importance.csv", |w| rep.write_csv(w))?;
    run.write("importance_mean.csv", |w| rep.write_mean_csv(w))?;
    run.finish("importance", config, Some(a.seed))
}

pub fn dedup(a: &DedupArgs, config: Value) -> Outcome {
    if !(a.similarity.is_finite() && (-1.0..=1.0).contains(&a.similarity)) {
        return Err(Failure::usage(format!("--similarity must be in [-1, 1], got {}", a.similarity)));
    }
    let mut run = Run::new(&a.out)?;
    run.input(&a.embeddings)?;
    let emb = segclf_core::data::load_embeddings(&a.embeddings).context(format!("reading {}", a.embeddings.display()))?;
    let clusters = ops::deduplicate(&emb, a.similarity);
    run.write("duplicates.csv", |w| clusters.write_csv(w))?;
    run.finish("dedup", config, None)
}

pub fn reliability(a: &ReliabilityArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let labels = inputs::labels(&mut run, &a.labels)?;
    let rep = ops::reliability_report(&labels)?;
    run.write("reliability.csv", |w| rep.write_csv(w))?;
    run.finish("reliability", config, None)
}

pub fn split(a: &SplitArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let vocab = vocabulary(a.input.vocab.as_deref())?;
    let images = inputs::segments(&mut run, &a.input.segments, &vocab)?;
    let targets = binary_targets(&inputs::labels(&mut run, &a.labels)?);
    let items: Vec<SplitItem> = images
        .iter()
        .filter_map(|img| {
            targets.get(&img.image_id).map(|&label| SplitItem {
                image_id: img.image_id.clone(),
                country: img.country.clone(),
                label,
            })
        })
        .collect();
    if items.is_empty() {
        return Err(Failure::data("no labeled images match the segments file"));
    }
    let split = ops::split_train_test(&items, a.train_fraction, a.seed)?;
    run.write("split.csv", |w| split.write_csv(w))?;
    run.finish("split", config, Some(a.seed))
}

pub fn sample(a: &SampleArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let exclude: BTreeSet<String> = match &a.labels {
        Some(path) => inputs::labels(&mut run, path)?.into_iter().map(|l| l.image_id).collect(),
        None => BTreeSet::new(),
    };
    let plan = if let Some(path) = &a.scores {
        let mut scores = inputs::read_scores(&mut run, path)?;
        scores.retain(|(id, _)| !exclude.contains(id));
        ops::weighted_sample(&scores, a.size, a.seed)?
    } else {
        let path = a.segments.as_ref().expect("clap requires --segments");
        if let Some(model_path) = &a.model {
            let model = inputs::load_model(&mut run, model_path)?;
            let input = SegmentArgs {
                segments: path.clone(),
                vocab: a.vocab.clone(),
                threshold: None,
            };
            let (vocab, cfg) = inputs::model_features(&model, &input, None)?;
            let mut images = inputs::segments(&mut run, path, &vocab)?;
            images.retain(|i| !exclude.contains(&i.image_id));
            let fm = featurize_dataset(&images, &cfg, &vocab)?;
            let proba = model.predict_proba(&fm.x)?;
            let scores: Vec<(String, f64)> = fm.image_ids.into_iter().zip(proba).collect();
            ops::weighted_sample(&scores, a.size, a.seed)?
        } else {
            let vocab = vocabulary(a.vocab.as_deref())?;
            let ids: Vec<String> = inputs::segments(&mut run, path, &vocab)?
                .into_iter()
                .map(|i| i.image_id)
                .filter(|id| !exclude.contains(id))
                .collect();
            ops::uniform_sample(&ids, a.size, a.seed)?
        }
    };
    run.write("plan.csv", |w| plan.write_csv(w))?;
    run.write_json("plan.json", &plan)?;
    run.finish("sample", config, Some(a.seed))
}

pub fn kmeans(a: &KMeansArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    run.input(&a.embeddings)?;
    let emb = segclf_core::data::load_embeddings(&a.embeddings).context(format!("reading {}", a.embeddings.display()))?;
    let opts = KMeansOptions {
        k: a.k,
        seed: a.seed,
        max_iters: a.max_iters,
        tol: a.tol,
    };
    let res = ops::kmeans(&emb, &opts)?;
    run.write("clusters.csv", |w| res.write_csv(w))?;
    run.write_json("kmeans.json", &res)?;
    run.finish("kmeans", config, Some(a.seed))
}

pub fn temporal(a: &TemporalArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let vocab = vocabulary(a.input.vocab.as_deref())?;
    // Counting ignores the feature kind; only the threshold matters.
    let cfg = inputs::config(segclf_core::FeatureKind::Count, a.input.threshold)?;
    let images = inputs::segments(&mut run, &a.input.segments, &vocab)?;
    let rep = ops::temporal_counts(&images, &cfg);
    run.write("temporal.csv", |w| rep.write_csv(w))?;
    run.write("temporal_top.csv", |w| rep.write_top_csv(w, a.top))?;
    run.finish("temporal", config, None)
}

pub fn synth(a: &SynthArgs, config: Value) -> Outcome {
    let mut run = Run::new(&a.out)?;
    let mut cfg = SyntheticConfig::protest_like(a.seed);
    cfg.n_images = a.n_images;
    cfg.positive_rate = a.positive_rate;
    cfg.label_noise = a.label_noise;
    if let Some(c) = &a.countries {
        cfg.countries = c.clone();
    }
    let data = synthetic::generate(&cfg, &Vocabulary::lvis())?;
    segclf_core::data::write_segments(&run.path("segments.jsonl"), &data.images)?;
    run.record("segments.jsonl");
    segclf_core::data::write_labels(&run.path("labels.csv"), &data.labels)?;
    run.record("labels.csv");
    run.finish("synth", config, Some(a.seed))
}
