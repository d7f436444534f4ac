//! Exit-gate checks, one line per criterion. Runs without the libtest
//! harness so the lines are always printed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lgvqa::backends::{
    dual_match, extend_positional_table, merge_features, BackendError, BackendRef, DualEncoder, MatchRoute,
    ToyDualEncoder, TrainableBackend, BASE_TEXT_LEN, EXTENDED_TEXT_LEN,
};
use lgvqa::data::synth_dataset;
use lgvqa::evalreport::{accuracy, Outcome};
use lgvqa::guidance::{serialize_objects, serialize_scene_graph, DetectionSet, GuidanceCache, SceneTriplet, SEP_TOKEN};
use lgvqa::scoring::{score_instance, ScoringMode};
use lgvqa::training::{choice_cross_entropy, cross_entropy_grad};
use lgvqa::{ChoiceScores, Difficulty, GuidanceKind};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

/// Reference softmax and loss, written independently of the crate.
fn oracle_softmax(raw: &[f64], mask: &[bool]) -> Vec<f64> {
    let m = raw
        .iter()
        .zip(mask)
        .filter(|(_, &v)| v)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = raw
        .iter()
        .zip(mask)
        .map(|(x, &v)| if v { (x - m).exp() } else { 0.0 })
        .collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>, usize) {
    let n = rng.random_range(2..=5);
    let width = rng.random_range(n..=5);
    let raw: Vec<f64> = (0..width).map(|_| rng.random_range(-4.0..4.0)).collect();
    let mask: Vec<bool> = (0..width).map(|i| i < n).collect();
    let gold = rng.random_range(0..n);
    (raw, mask, gold)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_sum = 0.0f64;
    let mut worst_loss = 0.0f64;
    for _ in 0..1000 {
        let (raw, mask, gold) = random_case(&mut rng);
        let s = ChoiceScores::masked(raw.clone(), mask.clone()).map_err(|e| e.to_string())?;
        let sum: f64 = s.normalized().iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        let loss = choice_cross_entropy(&s, gold).map_err(|e| e.to_string())?.value;
        let p = oracle_softmax(&raw, &mask);
        worst_loss = worst_loss.max((loss - (-p[gold].ln())).abs());
    }
    ensure(worst_sum <= 1e-9, || format!("normalized sum off by {worst_sum:e}"))?;
    ensure(worst_loss <= 1e-9, || format!("loss off by {worst_loss:e}"))?;
    let uniform = ChoiceScores::from_raw(vec![0.37; 4]).map_err(|e| e.to_string())?;
    let l = choice_cross_entropy(&uniform, 2).map_err(|e| e.to_string())?.value;
    ensure((l - 4f64.ln()).abs() <= 1e-12, || format!("uniform loss {l} vs ln 4"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "max |sum-1| {worst_sum:.1e}, max loss err {worst_loss:.1e}, uniform err {:.1e}",
        (l - 4f64.ln()).abs()
    ))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    let mut worst_sum = 0.0f64;
    for _ in 0..100 {
        let (raw, mask, gold) = random_case(&mut rng);
        let s = ChoiceScores::masked(raw.clone(), mask.clone()).map_err(|e| e.to_string())?;
        let g = cross_entropy_grad(&s, gold).map_err(|e| e.to_string())?;
        let loss_at = |r: Vec<f64>| -> Result<f64, String> {
            let s = ChoiceScores::masked(r, mask.clone()).map_err(|e| e.to_string())?;
            Ok(choice_cross_entropy(&s, gold).map_err(|e| e.to_string())?.value)
        };
        for i in 0..raw.len() {
            if !mask[i] {
                ensure(g[i] == 0.0, || format!("masked slot {i} has gradient {}", g[i]))?;
                continue;
            }
            let mut plus = raw.clone();
            plus[i] += h;
            let mut minus = raw.clone();
            minus[i] -= h;
            let fd = (loss_at(plus)? - loss_at(minus)?) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(f64::MIN_POSITIVE);
            worst_rel = worst_rel.max(rel);
        }
        worst_sum = worst_sum.max(g.iter().sum::<f64>().abs());
    }
    ensure(worst_rel <= 1e-5, || format!("relative gradient error {worst_rel:e}"))?;
    ensure(worst_sum <= 1e-9, || format!("gradient sum {worst_sum:e}"))?;
    Ok(format!("max rel err {worst_rel:.1e}, max |sum| {worst_sum:.1e}"))
}

/// Scales the toy encoder's embeddings before normalization.
struct Scaled<'a> {
    inner: &'a ToyDualEncoder,
    image: f64,
    text: f64,
}

impl DualEncoder for Scaled<'_> {
    fn encode_image(&self, image_ref: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.inner.encode_image(image_ref)?.iter().map(|x| x * self.image).collect())
    }
    fn encode_text(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.inner.encode_text(text)?.iter().map(|x| x * self.text).collect())
    }
    fn log_temperature(&self) -> f64 {
        self.inner.log_temperature()
    }
    fn max_text_len(&self) -> usize {
        self.inner.max_text_len()
    }
}

fn criterion_3() -> Check {
    let enc = ToyDualEncoder::new(3, 16).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs = [
        ("coco/000000461751.jpg", "What is in the motorcyclist's mouth? cigarette"),
        ("synth/7/0001/dog+tree", "a photo of a dog"),
        ("vsr/85637.jpg", "The cat is on the bench. true"),
    ];
    let mut worst_scale = 0.0f64;
    for (img, text) in pairs {
        let base = dual_match(&enc, img, text).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let scaled = Scaled {
                inner: &enc,
                image: 10f64.powf(rng.random_range(-3.0..3.0)),
                text: 10f64.powf(rng.random_range(-3.0..3.0)),
            };
            let s = dual_match(&scaled, img, text).map_err(|e| e.to_string())?;
            worst_scale = worst_scale.max((s - base).abs());
        }
    }
    ensure(worst_scale <= 1e-9, || format!("rescaling changed score by {worst_scale:e}"))?;

    let h = 1e-6;
    let mut worst_dt = 0.0f64;
    for (img, text) in pairs {
        let t0 = enc.log_temperature();
        let score = dual_match(&enc, img, text).map_err(|e| e.to_string())?;
        let mut plus = enc.clone();
        plus.set_log_temperature(t0 + h);
        let mut minus = enc.clone();
        minus.set_log_temperature(t0 - h);
        let fd = (dual_match(&plus, img, text).map_err(|e| e.to_string())?
            - dual_match(&minus, img, text).map_err(|e| e.to_string())?)
            / (2.0 * h);
        worst_dt = worst_dt.max((fd - score).abs() / score.abs());
    }
    ensure(worst_dt <= 1e-4, || format!("d score/dt relative error {worst_dt:e}"))?;
    Ok(format!("rescaling err {worst_scale:.1e}, d/dt rel err {worst_dt:.1e}"))
}

fn criterion_4() -> Check {
    let m = merge_features(&[1.0, 2.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    ensure(m == [1.0, 2.0, 3.0, 4.0, -2.0, -2.0, 3.0, 8.0], || format!("got {m:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let d = rng.random_range(1..64);
        let x1: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x2: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = merge_features(&x1, &x2).map_err(|e| e.to_string())?;
        ensure(m.len() == 4 * d, || format!("dim {} for d={d}", m.len()))?;
        let same = merge_features(&x1, &x1).map_err(|e| e.to_string())?;
        ensure(same[2 * d..3 * d].iter().all(|&x| x == 0.0), || "x1=x2 difference block nonzero".into())?;
    }
    Ok("exact small case, 200 random dims".into())
}

fn criterion_5() -> Check {
    let data = synth_dataset(5, 50, 4).map_err(|e| e.to_string())?;
    let base = ToyDualEncoder::new(5, 16).map_err(|e| e.to_string())?;
    let extended = extend_positional_table(&base, EXTENDED_TEXT_LEN).map_err(|e| e.to_string())?;
    for enc in [&base, &extended] {
        for inst in &data.instances {
            let unguided = score_instance(BackendRef::Dual(enc), inst, None, ScoringMode::Unguided)
                .map_err(|e| e.to_string())?;
            let concat = score_instance(BackendRef::Dual(enc), inst, Some(""), ScoringMode::GuidedConcat)
                .map_err(|e| e.to_string())?;
            let same = unguided
                .raw()
                .iter()
                .zip(concat.raw())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("{}: {:?} vs {:?}", inst.id, unguided.raw(), concat.raw()))?;
        }
    }
    Ok("50 instances, base and extended encoders, bit-identical".into())
}

fn criterion_6() -> Check {
    let det = DetectionSet::new(&["dog", "toy", "girl", "toy", "dog", "toy"]);
    let objects = serialize_objects(&det).map_err(|e| e.to_string())?;
    let det2 = DetectionSet::new(&["dog", "dog", "girl", "toy", "toy", "toy"]);
    let objects2 = serialize_objects(&det2).map_err(|e| e.to_string())?;
    ensure(objects2 == "two dogs, one girl, three toys", || format!("got {objects2:?}"))?;
    ensure(objects == "two dogs, three toys, one girl", || format!("first-seen order broken: {objects:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 1..=12 {
        let triplets: Vec<SceneTriplet> = (0..k)
            .map(|i| SceneTriplet::new(&format!("man{i}"), "riding", if rng.random_bool(0.5) { "horse" } else { "bike" }))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let text = serialize_scene_graph(&triplets).ok_or("empty serialization")?;
        let seps = text.split_whitespace().filter(|t| *t == SEP_TOKEN).count();
        ensure(seps == k - 1, || format!("k={k}: {seps} separators in {text:?}"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("cache.jsonl");
    let samples = [
        ("q1", GuidanceKind::Rationale, "Le garçon mange une crêpe 🥞 près du café"),
        ("q2", GuidanceKind::Caption, "一只猫坐在长椅上 and a dog"),
        ("q3", GuidanceKind::Objects, "two dogs, one girl, three toys \u{200d}👨\u{200d}👩\u{200d}👧"),
        ("q4", GuidanceKind::SceneGraph, "رجل يركب حصانا [SEP] e\u{301}te\u{301} \"quoted\" \\ back"),
        ("q5", GuidanceKind::Lecture, "Ωμέγα 𝔘𝔫𝔦𝔠𝔬𝔡𝔢 \u{feff}bom"),
    ];
    let mut cache = GuidanceCache::open(&path).map_err(|e| e.to_string())?;
    for (id, kind, text) in samples {
        cache.put(id, kind, text, "stub", false).map_err(|e| e.to_string())?;
    }
    cache.save().map_err(|e| e.to_string())?;
    let reopened = GuidanceCache::open(&path).map_err(|e| e.to_string())?;
    for (id, kind, text) in samples {
        let got = reopened.get(id, kind).ok_or_else(|| format!("{id} missing"))?;
        ensure(got.as_bytes() == text.as_bytes(), || format!("{id}: {got:?} != {text:?}"))?;
    }
    Ok(format!("{objects2:?}, k-1 separators for k=1..12, 5 unicode entries"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lgvqa")
}

fn lgvqa(args: &[&str], dir: &Path) -> Result<(i32, String, String), String> {
    let out = Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("LGVQA_CACHE_DIR")
        .env_remove("RUST_LOG")
        .output()
        .map_err(|e| e.to_string())?;
    Ok((
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    ))
}

fn lgvqa_ok(args: &[&str], dir: &Path) -> Result<String, String> {
    let (code, stdout, stderr) = lgvqa(args, dir)?;
    ensure(code == 0, || format!("`lgvqa {}` exited {code}: {stderr}", args.join(" ")))?;
    Ok(stdout)
}

fn criterion_7() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let start = Instant::now();
    lgvqa_ok(&["synth", "--n", "32", "--choices", "4", "--seed", "7", "--out", "synth.jsonl"], d)?;
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        lgvqa_ok(
            &[
                "train", "--dataset", "synth.jsonl", "--backend", "toy-dual", "--mode", "unguided", "--lr", "0.01",
                "--epochs", "200", "--batch-size", "8", "--seed", "7", "--out-dir", run,
            ],
            d,
        )?;
        csvs.push(std::fs::read(d.join(run).join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    let elapsed = start.elapsed();
    ensure(csvs[0] == csvs[1], || "metrics CSVs differ between seeded reruns".into())?;
    let text = String::from_utf8_lossy(&csvs[0]).into_owned();
    let accs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap_or("")).collect();
    ensure(accs.len() == 200, || format!("{} epochs logged", accs.len()))?;
    let first = accs.iter().position(|a| *a == "100.00");
    ensure(first.is_some(), || format!("never reached 100.00; last {}", accs[accs.len() - 1]))?;
    ensure(accs[accs.len() - 1] == "100.00", || format!("final train acc {}", accs[accs.len() - 1]))?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "100.00 first at epoch {}, identical CSVs, {:.1}s",
        first.map(|i| i + 1).unwrap_or(0),
        elapsed.as_secs_f64()
    ))
}

fn criterion_8() -> Check {
    let base = ToyDualEncoder::new(8, 12).map_err(|e| e.to_string())?;
    let ext = extend_positional_table(&base, EXTENDED_TEXT_LEN).map_err(|e| e.to_string())?;
    ensure(base.max_text_len() == BASE_TEXT_LEN && ext.max_text_len() == EXTENDED_TEXT_LEN, || {
        "unexpected table lengths".into()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let words = ["dog", "cat", "ball", "red", "the", "on", "girl", "plays", "with", "a", "toy", "near"];
    for _ in 0..200 {
        let len = rng.random_range(1..=BASE_TEXT_LEN);
        let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())]).collect();
        let text = text.join(" ");
        let a = base.encode_text(&text).map_err(|e| e.to_string())?;
        let b = ext.encode_text(&text).map_err(|e| e.to_string())?;
        ensure(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), || {
            format!("{len}-token text changed after extension")
        })?;
    }
    let long: Vec<String> = (0..120).map(|i| format!("w{i}")).collect();
    let long = long.join(" ");
    let mut grads = ext.params().zeros_like();
    ext.match_with_grad("synth/8/0000/dog+tree", MatchRoute::Single(&long), 1.0, &mut grads)
        .map_err(|e| e.to_string())?;
    let pos = grads.get("text_encoder.positional");
    let new_rows_norm: f64 = (BASE_TEXT_LEN..120).map(|r| pos.row(r).iter().map(|x| x * x).sum::<f64>()).sum();
    let untouched: f64 = (120..EXTENDED_TEXT_LEN).map(|r| pos.row(r).iter().map(|x| x.abs()).sum::<f64>()).sum();
    ensure(new_rows_norm > 0.0, || "no gradient on rows 77..120".into())?;
    ensure(untouched == 0.0, || "gradient on rows past the text".into())?;
    Ok(format!(
        "200 texts <=77 tokens bit-identical, new-row grad norm {:.2e}",
        new_rows_norm.sqrt()
    ))
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let outcomes: Vec<Outcome> = (0..10_000)
        .map(|i| Outcome {
            id: format!("q{i:05}"),
            predicted_index: rng.random_range(0..4),
            gold_index: rng.random_range(0..4),
            difficulty: Difficulty::ALL[rng.random_range(0..3)],
            question_type: lgvqa::data::QuestionType::ALL[rng.random_range(0..6)],
        })
        .collect();
    let report = accuracy(&outcomes).map_err(|e| e.to_string())?;
    let mut hits = 0u64;
    for o in &outcomes {
        if o.predicted_index == o.gold_index {
            hits += 1;
        }
    }
    let brute = hits as f64 / outcomes.len() as f64 * 100.0;
    ensure((report.overall.accuracy - brute).abs() <= 1e-12, || {
        format!("{} vs brute force {brute}", report.overall.accuracy)
    })?;
    let mut sizes: BTreeMap<Difficulty, (f64, f64)> = BTreeMap::new();
    for (d, s) in &report.by_difficulty {
        sizes.insert(*d, (s.accuracy, s.total as f64));
    }
    let weighted: f64 = sizes.values().map(|(a, n)| a * n).sum::<f64>() / sizes.values().map(|(_, n)| n).sum::<f64>();
    ensure((weighted - report.overall.accuracy).abs() <= 1e-9, || {
        format!("weighted slices {weighted} vs overall {}", report.overall.accuracy)
    })?;

    // --paper-ref renders the stored constants verbatim.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    lgvqa_ok(&["synth", "--n", "8", "--seed", "1", "--out", "s.jsonl"], d)?;
    lgvqa_ok(&["zero-shot", "--dataset", "s.jsonl", "--out-dir", "zs"], d)?;
    let stdout = lgvqa_ok(
        &["eval", "zs/predictions.jsonl", "--paper-ref", "aokvqa", "--out-dir", "ev"],
        d,
    )?;
    let file: serde_json::Value = serde_json::from_str(include_str!("../data/paper_reference.json"))
        .map_err(|e| e.to_string())?;
    let table = &file["tables"]["aokvqa"];
    let cols = table["columns"].as_array().ok_or("columns")?;
    let col = |name: &str| cols.iter().position(|c| c == name).ok_or(format!("column {name}"));
    let row = |label: &str| {
        table["rows"]
            .as_array()
            .and_then(|rows| rows.iter().find(|r| r["label"] == label))
            .ok_or(format!("row {label}"))
    };
    let expected = [
        ("Zero-Shot", "CLIP Overall", "58.52"),
        ("No Guidance", "CLIP Overall", "68.30"),
        ("All", "CLIP Overall", "75.98"),
        ("Zero-Shot", "BLIP-2 Overall", "64.98"),
        ("No Guidance", "BLIP-2 Overall", "75.02"),
        ("All", "BLIP-2 Overall", "79.83"),
    ];
    let rendered_file = std::fs::read_to_string(d.join("ev/report.txt")).map_err(|e| e.to_string())?;
    for (label, column, value) in expected {
        let stored = row(label)?["values"][col(column)?].as_str().unwrap_or("");
        ensure(stored == value, || format!("reference file has {stored} for {label}/{column}"))?;
        let line = stdout
            .lines()
            .find(|l| l.starts_with(label) && l[label.len()..].starts_with(' '))
            .ok_or(format!("no rendered row {label}"))?;
        ensure(line.split_whitespace().any(|t| t == value), || format!("{value} missing from {line:?}"))?;
        ensure(rendered_file.contains(line), || "report.txt lacks reference rows".into())?;
    }
    ensure(stdout.contains("CLIP Overall +7.68"), || "missing +7.68 delta".into())?;
    Ok(format!("10,000 cases exact, weighted err {:.1e}, reference rows verbatim", (weighted - report.overall.accuracy).abs()))
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let start = Instant::now();
    lgvqa_ok(&["synth", "--n", "32", "--seed", "11", "--out", "data/synth.jsonl"], d)?;
    lgvqa_ok(
        &[
            "guidance", "--dataset", "data/synth.jsonl", "--generator", "stub", "--guidance-kinds", "all",
            "--guidance-cache", "cache/guidance.jsonl", "--seed", "11",
        ],
        d,
    )?;
    let common = ["--dataset", "data/synth.jsonl", "--backend", "toy-fusion", "--epochs", "20", "--seed", "11"];
    let mut merge = vec!["train", "--mode", "guided_merge", "--guidance-cache", "cache/guidance.jsonl", "--out-dir", "runs/merge"];
    merge.extend(common);
    lgvqa_ok(&merge, d)?;
    let mut unguided = vec!["train", "--mode", "unguided", "--out-dir", "runs/unguided"];
    unguided.extend(common);
    lgvqa_ok(&unguided, d)?;
    lgvqa_ok(&["eval", "runs/merge/predictions.jsonl", "--out-dir", "eval"], d)?;
    lgvqa_ok(
        &[
            "compare",
            "unguided=runs/unguided/predictions.jsonl",
            "guided_merge=runs/merge/predictions.jsonl",
            "--baseline",
            "unguided",
            "--out-dir",
            "compare",
        ],
        d,
    )?;
    let elapsed = start.elapsed();
    let mut expected: Vec<PathBuf> = vec![
        "data/synth.jsonl".into(),
        "data/synth.features.json".into(),
        "cache/guidance.jsonl".into(),
    ];
    for run in ["runs/merge", "runs/unguided"] {
        for f in [
            "checkpoint.json",
            "metrics.csv",
            "predictions.jsonl",
            "report.json",
            "report.txt",
            "report.csv",
            "train_summary.json",
        ] {
            expected.push(Path::new(run).join(f));
        }
    }
    for f in ["eval/report.json", "eval/report.txt", "eval/report.csv"] {
        expected.push(f.into());
    }
    for f in ["compare/comparison.json", "compare/comparison.txt", "compare/comparison.csv"] {
        expected.push(f.into());
    }
    for p in &expected {
        let meta = std::fs::metadata(d.join(p)).map_err(|_| format!("missing artifact {}", p.display()))?;
        ensure(meta.len() > 0, || format!("empty artifact {}", p.display()))?;
    }
    let cache_lines = std::fs::read_to_string(d.join("cache/guidance.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .count();
    ensure(cache_lines == 32 * 5, || format!("{cache_lines} cache lines"))?;
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!("{} artifacts, {:.1}s", expected.len(), elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("softmax/CE correctness", criterion_1),
        ("gradient fidelity", criterion_2),
        ("dual-encoder score properties", criterion_3),
        ("merge correctness", criterion_4),
        ("guidance degeneracy", criterion_5),
        ("serialization fidelity", criterion_6),
        ("overfit smoke", criterion_7),
        ("positional extension", criterion_8),
        ("metric arithmetic", criterion_9),
        ("CLI end-to-end", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
