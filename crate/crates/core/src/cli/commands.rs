use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use serde_json::json;

use lgvqa::backends::plugin::PluginRegistry;
use lgvqa::backends::{
    extend_positional_table, toy_backend, BackendKind, BackendRef, BackendSpec, DualEncoder, ImageSource,
    ToyBackend, TrainableBackend, EXTENDED_TEXT_LEN,
};
use lgvqa::data::{self, synth_dataset, LoadOutput};
use lgvqa::evalreport::{
    comparison_csv, compare_modes, mean_of_runs, render_comparison, render_report, report_csv,
    report_from_predictions, EvalReport, PaperReference,
};
use lgvqa::guidance::{
    ingest, serialize_objects, serialize_scene_graph, GeneratorContract, GuidanceCache, StubGenerator,
};
use lgvqa::scoring::{
    check_mode, guidance_text, read_predictions, score_dataset, write_predictions, PredictionRecord, ScoringMode,
};
use lgvqa::training::{self, write_metrics_csv, MissingGuidancePolicy, TrainConfig, TOY_LEARNING_RATE};
use lgvqa::types::write_instances_jsonl;
use lgvqa::{GuidanceBundle, GuidanceKind, MultiChoiceInstance};

use super::{Failure, GuidanceSources, OrExit, Settings};

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(Failure::data)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::data)
}

fn load_dataset(settings: &Settings, path: &Path) -> Result<LoadOutput, Failure> {
    if !path.exists() {
        return Err(Failure::data(anyhow!("dataset not found: {}", path.display())));
    }
    let out = data::load(settings.adapter()?, path)
        .with_context(|| format!("cannot load dataset {}", path.display()))
        .map_err(Failure::data)?;
    if !out.skipped.is_empty() {
        log::warn!("{}: skipped {} records", path.display(), out.skipped.len());
        eprintln!("skipped {} records from {}", out.skipped.len(), path.display());
    }
    if out.instances.is_empty() {
        return Err(Failure::data(anyhow!("dataset {} has no usable instances", path.display())));
    }
    Ok(out)
}

fn image_source(settings: &Settings) -> Result<ImageSource, Failure> {
    match &settings.image_features {
        None => Ok(ImageSource::Hashed),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read image features {}", path.display()))
                .map_err(Failure::data)?;
            let table: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text)
                .with_context(|| format!("invalid image features {}", path.display()))
                .map_err(Failure::data)?;
            Ok(ImageSource::Table(Arc::new(table)))
        }
    }
}

/// Builds or loads the toy backend and applies mode-specific adjustments.
fn toy(settings: &Settings, mode: ScoringMode) -> Result<ToyBackend, Failure> {
    let spec = settings.backend()?;
    let mut backend = match (&spec, &settings.checkpoint) {
        (BackendSpec::Plugin(name), _) => {
            let err = match PluginRegistry::new().build(name, &json!({})) {
                Err(e) => anyhow!(e),
                Ok(_) => anyhow!("plugin {name} is not a trainable backend"),
            };
            return Err(Failure::config(err.context("this binary registers no backend plugins")));
        }
        (_, Some(path)) => {
            let b = ToyBackend::load_checkpoint(path)
                .with_context(|| format!("cannot load checkpoint {}", path.display()))
                .map_err(Failure::data)?;
            if settings.backend.is_some() && spec_kind(&spec) != Some(b.kind()) {
                return Err(Failure::config(anyhow!(
                    "checkpoint holds a {} backend but --backend asks for {spec:?}",
                    b.kind()
                )));
            }
            b
        }
        (spec, None) => {
            let kind = spec_kind(spec).expect("toy spec");
            toy_backend(kind, settings.seed(), settings.dim()).or_config()?
        }
    };
    backend.set_image_source(image_source(settings)?);
    let has_head = match backend.scorer() {
        BackendRef::Fusion(f) => f.has_guided_head(),
        BackendRef::Dual(_) => false,
    };
    check_mode(backend.kind(), has_head, mode).or_config()?;
    if mode == ScoringMode::GuidedConcat {
        if let ToyBackend::Dual(enc) = &mut backend {
            if enc.max_text_len() < EXTENDED_TEXT_LEN {
                log::info!("extending positional table to {EXTENDED_TEXT_LEN}");
                *enc = extend_positional_table(enc, EXTENDED_TEXT_LEN).or_config()?;
            }
        }
    }
    Ok(backend)
}

fn spec_kind(spec: &BackendSpec) -> Option<BackendKind> {
    match spec {
        BackendSpec::ToyDual => Some(BackendKind::Dual),
        BackendSpec::ToyFusion => Some(BackendKind::Fusion),
        BackendSpec::Plugin(_) => None,
    }
}

/// Cache path for guided modes; absent for the others.
fn guided_cache(settings: &Settings, mode: ScoringMode) -> Result<Option<PathBuf>, Failure> {
    if !mode.is_guided() {
        return Ok(None);
    }
    settings
        .cache_path()
        .map(Some)
        .ok_or_else(|| Failure::config(anyhow!("mode {mode} needs --guidance-cache (or {})", super::CACHE_DIR_ENV)))
}

/// Cached guidance with the dataset's own guidance filling kinds the cache
/// does not hold.
fn bundles(
    cache_path: Option<&Path>,
    instances: &[MultiChoiceInstance],
    shipped: &BTreeMap<String, GuidanceBundle>,
) -> Result<BTreeMap<String, GuidanceBundle>, Failure> {
    let Some(path) = cache_path else {
        return Ok(BTreeMap::new());
    };
    let cache = GuidanceCache::open(path).or_data()?;
    let mut out = BTreeMap::new();
    for inst in instances {
        let mut bundle = cache.bundle(&inst.id).unwrap_or_else(|| GuidanceBundle::new(&inst.id));
        if let Some(extra) = shipped.get(&inst.id) {
            for kind in extra.kinds() {
                if !bundle.contains(kind) {
                    bundle.insert(kind, extra.get(kind).expect("listed kind")).or_data()?;
                }
            }
        }
        if !bundle.is_empty() {
            out.insert(inst.id.clone(), bundle);
        }
    }
    Ok(out)
}

fn reference_text(name: &str) -> Result<String, Failure> {
    let reference = PaperReference::embedded();
    let (_, table) = reference.table(name).or_config()?;
    let mut text = table.render(&reference.source);
    let has = |label: &str| table.rows.iter().any(|r| r.label == label);
    if has("No Guidance") && has("All") {
        let deltas: Vec<String> = table
            .columns
            .iter()
            .filter_map(|c| table.delta("No Guidance", "All", c).map(|d| format!("{c} {d:+.2}")))
            .collect();
        text.push_str(&format!("No Guidance -> All: {}\n", deltas.join(", ")));
    }
    Ok(text)
}

/// Writes predictions plus JSON, text and CSV reports into `dir`.
fn write_outputs(
    dir: &Path,
    title: &str,
    preds: &[PredictionRecord],
    paper_ref: Option<&str>,
) -> Result<EvalReport, Failure> {
    write_predictions(&dir.join("predictions.jsonl"), preds).or_data()?;
    let report = report_from_predictions(preds).or_data()?;
    write_report_files(dir, title, &report, paper_ref)?;
    Ok(report)
}

fn write_report_files(dir: &Path, title: &str, report: &EvalReport, paper_ref: Option<&str>) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(report).or_data()?;
    write_text(&dir.join("report.json"), &(json + "\n"))?;
    let mut text = render_report(report, title);
    if let Some(name) = paper_ref {
        text.push('\n');
        text.push_str(&reference_text(name)?);
    }
    write_text(&dir.join("report.txt"), &text)?;
    write_text(&dir.join("report.csv"), &report_csv(report))?;
    print!("{text}");
    Ok(())
}

pub fn synth(settings: &Settings, n: usize, choices: usize, out: Option<PathBuf>) -> Result<(), Failure> {
    let d = synth_dataset(settings.seed(), n, choices).or_config()?;
    let path = out.unwrap_or_else(|| settings.out_dir().join("synth.jsonl"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_instances_jsonl(&path, &d.instances).or_data()?;
    let features = path.with_extension("features.json");
    write_text(&features, &serde_json::to_string(&d.image_features).or_data()?)?;
    println!("wrote {} instances to {} ({})", d.instances.len(), path.display(), features.display());
    Ok(())
}

pub fn zero_shot(settings: &Settings) -> Result<(), Failure> {
    let mode = settings.mode(ScoringMode::ZeroShot)?;
    let kinds = settings.kinds(mode)?;
    let cache = guided_cache(settings, mode)?;
    let dataset = settings.require_dataset()?;
    let backend = toy(settings, mode)?;
    let loaded = load_dataset(settings, dataset)?;
    let bundles = bundles(cache.as_deref(), &loaded.instances, &loaded.bundles)?;
    let guidance: Vec<Option<String>> = loaded
        .instances
        .iter()
        .map(|i| guidance_text(bundles.get(&i.id), &kinds))
        .collect();
    let preds = score_dataset(backend.scorer(), &loaded.instances, &guidance, mode).or_data()?;
    let dir = settings.out_dir();
    ensure_dir(&dir)?;
    write_outputs(&dir, mode.as_str(), &preds, settings.paper_ref.as_deref())?;
    Ok(())
}

pub fn train(settings: &Settings) -> Result<(), Failure> {
    let mode = settings.mode(ScoringMode::Unguided)?;
    let kinds = settings.kinds(mode)?;
    let cache = guided_cache(settings, mode)?;
    let dataset = settings.require_dataset()?;
    let mut backend = toy(settings, mode)?;
    let config = TrainConfig {
        batch_size: settings.batch_size.unwrap_or(TrainConfig::default().batch_size),
        epochs: settings.epochs.unwrap_or(TrainConfig::default().epochs),
        learning_rate: settings.lr.unwrap_or(TOY_LEARNING_RATE),
        mode,
        guidance_kinds: kinds,
        seed: settings.seed(),
        freeze: settings.freeze(),
        missing_guidance: if settings.skip_missing_guidance {
            MissingGuidancePolicy::Skip
        } else {
            MissingGuidancePolicy::Error
        },
        ..TrainConfig::default()
    };
    config.validate().or_config()?;

    let loaded = load_dataset(settings, dataset)?;
    let validation = match &settings.validation {
        Some(p) => Some(load_dataset(settings, p)?),
        None => None,
    };
    let mut shipped = loaded.bundles.clone();
    let mut all_instances = loaded.instances.clone();
    if let Some(v) = &validation {
        shipped.extend(v.bundles.clone());
        all_instances.extend(v.instances.iter().cloned());
    }
    let bundles = bundles(cache.as_deref(), &all_instances, &shipped)?;

    let init_hash = backend.params().content_hash();
    let outcome = training::train(
        &mut backend,
        &loaded.instances,
        &bundles,
        &config,
        validation.as_ref().map(|v| v.instances.as_slice()),
    )
    .map_err(|e| match e {
        training::TrainError::Config(_) => Failure::config(e.into()),
        other => Failure::data(other.into()),
    })?;

    let dir = settings.out_dir();
    ensure_dir(&dir)?;
    backend.save_checkpoint(&dir.join("checkpoint.json")).or_data()?;
    write_metrics_csv(&dir.join("metrics.csv"), &outcome.history).or_data()?;

    let eval_set = validation.as_ref().map(|v| &v.instances).unwrap_or(&loaded.instances);
    let prepared = training::prepare(eval_set, &bundles, &config).or_data()?;
    let eval_instances: Vec<MultiChoiceInstance> = prepared.instances.iter().map(|i| (*i).clone()).collect();
    let preds = score_dataset(backend.scorer(), &eval_instances, &prepared.guidance, mode).or_data()?;
    let report = write_outputs(&dir, mode.as_str(), &preds, settings.paper_ref.as_deref())?;

    let last = outcome.history.last().expect("at least one epoch");
    let summary = json!({
        "backend": backend.kind().to_string(),
        "mode": mode.as_str(),
        "guidance_kinds": config.guidance_kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>(),
        "seed": config.seed,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "instances": loaded.instances.len() - outcome.skipped.len(),
        "skipped": outcome.skipped,
        "trainable": outcome.trainer.trainable(),
        "selected_epoch": outcome.selected_epoch,
        "final_train_acc": last.train_acc,
        "final_mean_loss": last.mean_loss,
        "eval_set": if validation.is_some() { "validation" } else { "train" },
        "eval_accuracy": report.overall.accuracy,
        "init_param_hash": init_hash,
        "param_hash": backend.params().content_hash(),
    });
    write_text(
        &dir.join("train_summary.json"),
        &(serde_json::to_string_pretty(&summary).or_data()? + "\n"),
    )?;
    Ok(())
}

pub fn guidance(settings: &Settings, sources: &GuidanceSources) -> Result<(), Failure> {
    let cache_path = settings
        .cache_path()
        .ok_or_else(|| Failure::config(anyhow!("--guidance-cache (or {}) is required", super::CACHE_DIR_ENV)))?;
    let use_stub = match sources.generator.as_deref() {
        Some("stub") => true,
        Some(other) => {
            return Err(Failure::config(anyhow!(
                "unknown generator {other:?}; only the stub generator is built in"
            )))
        }
        None => sources.triplets.is_none() && sources.detections.is_none() && !sources.from_dataset,
    };
    let stub_kinds: Vec<GuidanceKind> = if use_stub {
        settings.kinds(ScoringMode::GuidedConcat)?
    } else {
        Vec::new()
    };
    let dataset = settings.require_dataset()?;
    let loaded = load_dataset(settings, dataset)?;
    let mut cache = GuidanceCache::open(&cache_path).or_data()?;

    // (instance id, kind) -> text, or the reason it could not be produced.
    let mut produced: Vec<(String, GuidanceKind, Result<String, String>, String)> = Vec::new();
    for kind in &stub_kinds {
        let generator = StubGenerator::new(*kind, settings.seed());
        for inst in &loaded.instances {
            let text = generator
                .generate(&inst.image_ref, &inst.question, None)
                .map_err(|e| e.to_string());
            produced.push((inst.id.clone(), *kind, text, generator.source()));
        }
    }
    if let Some(path) = &sources.triplets {
        let triplets = ingest::read_triplet_file(path).or_data()?;
        let source = format!("file:{}", file_name(path));
        for inst in &loaded.instances {
            let text = triplets
                .get(&inst.image_ref)
                .and_then(|t| serialize_scene_graph(t))
                .ok_or_else(|| format!("no triplets for {}", inst.image_ref));
            produced.push((inst.id.clone(), GuidanceKind::SceneGraph, text, source.clone()));
        }
    }
    if let Some(path) = &sources.detections {
        let detections = ingest::read_detection_file(path).or_data()?;
        let source = format!("file:{}", file_name(path));
        for inst in &loaded.instances {
            let text = match detections.get(&inst.image_ref) {
                Some(d) => serialize_objects(d).map_err(|e| e.to_string()),
                None => Err(format!("no detections for {}", inst.image_ref)),
            };
            produced.push((inst.id.clone(), GuidanceKind::Objects, text, source.clone()));
        }
    }
    if sources.from_dataset {
        for (id, bundle) in &loaded.bundles {
            for kind in bundle.kinds() {
                let text = bundle.get(kind).expect("listed kind").to_string();
                produced.push((id.clone(), kind, Ok(text), format!("file:{}", file_name(dataset))));
            }
        }
    }

    if !settings.overwrite {
        let conflicts: Vec<String> = produced
            .iter()
            .filter(|(id, kind, text, _)| text.is_ok() && cache.contains(id, *kind))
            .map(|(id, kind, _, _)| format!("{id}/{kind}"))
            .collect();
        if !conflicts.is_empty() {
            return Err(Failure::data(anyhow!(
                "{} entries already cached (first: {}); pass --overwrite to replace them",
                conflicts.len(),
                conflicts[0]
            )));
        }
    }
    let mut failed: Vec<String> = Vec::new();
    let mut stored = 0usize;
    for (id, kind, text, source) in &produced {
        match text {
            Ok(text) => match cache.put(id, *kind, text, source, settings.overwrite) {
                Ok(()) => stored += 1,
                Err(e) => failed.push(format!("{id}/{kind}: {e}")),
            },
            Err(reason) => failed.push(format!("{id}/{kind}: {reason}")),
        }
    }
    cache.save().or_data()?;
    let mut per_kind: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, kind, text, _) in &produced {
        if text.is_ok() {
            *per_kind.entry(kind.as_str()).or_default() += 1;
        }
    }
    let counts: Vec<String> = per_kind.iter().map(|(k, n)| format!("{k}={n}")).collect();
    println!(
        "stored {stored} entries in {} ({}); {} total; {} failed",
        cache_path.display(),
        counts.join(", "),
        cache.len(),
        failed.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        for f in &failed {
            eprintln!("failed: {f}");
        }
        Err(Failure::partial(anyhow!("{} of {} requested entries failed", failed.len(), produced.len())))
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_prediction_file(path: &Path) -> Result<Vec<PredictionRecord>, Failure> {
    read_predictions(path)
        .with_context(|| format!("cannot read predictions {}", path.display()))
        .map_err(Failure::data)
}

pub fn eval(settings: &Settings, predictions: &[PathBuf]) -> Result<(), Failure> {
    if let Some(name) = &settings.paper_ref {
        PaperReference::embedded().table(name).or_config()?;
    }
    let mut reports = Vec::with_capacity(predictions.len());
    let mut modes = Vec::new();
    for path in predictions {
        let preds = read_prediction_file(path)?;
        if let Some(p) = preds.first() {
            modes.push(p.mode.as_str());
        }
        reports.push(
            report_from_predictions(&preds)
                .with_context(|| format!("{}", path.display()))
                .map_err(Failure::data)?,
        );
    }
    let report = mean_of_runs(&reports).or_data()?;
    modes.dedup();
    let title = if reports.len() > 1 {
        format!("{} (mean of {} runs)", modes.join("+"), reports.len())
    } else {
        modes.join("+")
    };
    let dir = settings.out_dir();
    ensure_dir(&dir)?;
    write_report_files(&dir, &title, &report, settings.paper_ref.as_deref())
}

pub fn compare(settings: &Settings, inputs: &[String], baseline: &str) -> Result<(), Failure> {
    if let Some(name) = &settings.paper_ref {
        PaperReference::embedded().table(name).or_config()?;
    }
    let mut reports = BTreeMap::new();
    for input in inputs {
        let (label, path) = match input.split_once('=') {
            Some((label, path)) => (Some(label.to_string()), PathBuf::from(path)),
            None => (None, PathBuf::from(input)),
        };
        let preds = read_prediction_file(&path)?;
        let label = match label {
            Some(l) => l,
            None => preds
                .first()
                .map(|p| p.mode.as_str().to_string())
                .ok_or_else(|| Failure::data(anyhow!("{} holds no predictions", path.display())))?,
        };
        let report = report_from_predictions(&preds)
            .with_context(|| format!("{}", path.display()))
            .map_err(Failure::data)?;
        if reports.insert(label.clone(), report).is_some() {
            return Err(Failure::config(anyhow!(
                "label {label:?} given twice; use label=path to disambiguate"
            )));
        }
    }
    let comparison = match compare_modes(&reports, baseline) {
        Ok(c) => c,
        Err(e @ lgvqa::evalreport::EvalError::UnknownBaseline(_)) => return Err(Failure::config(e.into())),
        Err(e) => return Err(Failure::data(e.into())),
    };
    let dir = settings.out_dir();
    ensure_dir(&dir)?;
    let mut text = render_comparison(&comparison);
    if let Some(name) = &settings.paper_ref {
        text.push('\n');
        text.push_str(&reference_text(name)?);
    }
    write_text(
        &dir.join("comparison.json"),
        &(serde_json::to_string_pretty(&comparison).or_data()? + "\n"),
    )?;
    write_text(&dir.join("comparison.txt"), &text)?;
    write_text(&dir.join("comparison.csv"), &comparison_csv(&comparison))?;
    print!("{text}");
    Ok(())
}
