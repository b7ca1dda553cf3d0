//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails. Positional arguments select criteria by number.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;

use selmask::corpus::Sentence;
use selmask::identify::{lexicon_identify, Lexicon, TaggedSentence, DEFAULT_THRESHOLD};
use selmask::masking::{make_instances, MaskMode, MaskPolicy, MaskedInstance};
use selmask::metrics::{fkgl, sari, sg_prf};
use selmask::mlm::{self, MlmModel, ModelConfig, TrainConfig, Vocab};
use selmask::sentsimp::{self, DecodeConfig, DecoderConfig};
use selmask::synth::{self, SynthConfig};
use selmask::{lexsimp, seed};

type Check = fn() -> Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Option<Duration>,
    check: Check,
}

const fn minutes(m: u64) -> Option<Duration> {
    Some(Duration::from_secs(m * 60))
}

const fn seconds(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "masking contract", budget: seconds(10), check: masking_contract },
    Criterion { id: 2, name: "mechanism effect", budget: minutes(15), check: mechanism_effect },
    Criterion { id: 3, name: "gradient correctness", budget: minutes(1), check: gradient_correctness },
    Criterion { id: 4, name: "metric oracles", budget: seconds(10), check: metric_oracles },
    Criterion { id: 5, name: "optimizer fidelity", budget: minutes(2), check: optimizer_fidelity },
    Criterion { id: 6, name: "dedup guarantee", budget: None, check: dedup_guarantee },
    Criterion { id: 7, name: "encoder transfer", budget: minutes(10), check: encoder_transfer },
    Criterion { id: 8, name: "ablation harness", budget: minutes(45), check: ablation_harness },
    Criterion { id: 9, name: "reproducibility", budget: None, check: reproducibility },
];

fn main() {
    let wanted: BTreeSet<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(d), Some(b)) if elapsed > b => Err(format!("{d}; took {:.1}s, budget {}s", elapsed.as_secs_f64(), b.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS [{}] {}: {detail} ({:.1}s)", c.id, c.name, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {}: {why} ({:.1}s)", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn data(name: &str) -> String {
    data_dir().join(name).display().to_string()
}

fn selmask(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_selmask"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("cannot run selmask: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "selmask {} exited with {}: {}",
            args.first().unwrap_or(&""),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn tag(sentences: impl IntoIterator<Item = Vec<String>>) -> Vec<TaggedSentence> {
    let lex = Lexicon::from_entries(synth::lexicon_entries(), DEFAULT_THRESHOLD).unwrap();
    sentences.into_iter().map(|t| lexicon_identify(&Sentence::new(t), &lex)).collect()
}

// 1 ---------------------------------------------------------------------

fn masking_contract() -> Result<String, String> {
    let mut rng = seed::rng(101);
    let sentences = synth::generate_sentences(&mut rng, 3000, synth::ORDINARY_COMPLEX_RATE);
    let tagged = tag(sentences.into_iter().map(|s| s.tokens));
    let simple: usize = tagged.iter().map(|t| t.simple_positions().count()).sum();
    ensure(simple >= 10_000, || format!("only {simple} simple tokens"))?;
    let vocab = Vocab::build(tagged.iter().map(|t| &t.tokens[..]), 1);
    let policy = MaskPolicy {
        mode: MaskMode::Selective,
        rate: 0.15,
        seed: 7,
        ..MaskPolicy::default()
    };
    let (instances, _) = make_instances(&tagged, &vocab, &policy, 64).map_err(|e| e.to_string())?;
    let (mut on_simple, mut on_complex) = (0usize, 0usize);
    for inst in &instances {
        for &p in &inst.mask_positions {
            if tagged[inst.sentence_index].tags[p - 1].is_simple() {
                on_simple += 1;
            } else {
                on_complex += 1;
            }
        }
    }
    let rate = on_simple as f64 / simple as f64;
    ensure(on_complex == 0, || format!("{on_complex} complex tokens masked"))?;
    ensure((0.13..=0.17).contains(&rate), || format!("simple mask rate {rate:.4}"))?;
    Ok(format!("{simple} simple tokens, rate {rate:.4}, 0 complex masked"))
}

// 2 ---------------------------------------------------------------------

fn mechanism_effect() -> Result<String, String> {
    let data = synth::generate(&SynthConfig::default());
    ensure(data.ls.len() >= 500, || format!("{} held-out slots", data.ls.len()))?;
    let tagged = tag(data.ordinary.iter().map(|s| s.tokens.clone()));
    let vocab = Vocab::build(tagged.iter().map(|t| &t.tokens[..]), 1);
    let mut cfg = ModelConfig::tiny(vocab.len());
    cfg.max_seq_len = 32;
    cfg.seed = 1;
    let tc = TrainConfig {
        epochs: 30,
        batch_size: 16,
        grad_accum: 1,
        learning_rate: 2e-3,
        max_seq_len: 32,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut mass = BTreeMap::new();
    for mode in [MaskMode::Selective, MaskMode::Random] {
        let mut model = MlmModel::new(cfg).map_err(|e| e.to_string())?;
        let policy = MaskPolicy {
            mode,
            seed: 9,
            ..MaskPolicy::default()
        };
        mlm::train_dynamic(&mut model, &tc, |epoch| {
            Ok(std::borrow::Cow::Owned(make_instances(&tagged, &vocab, &policy.for_epoch(epoch), 32)?.0))
        })
        .map_err(|e| e.to_string())?;
        let m = lexsimp::simple_mass(&model, &vocab, &data.ls).map_err(|e| e.to_string())?;
        mass.insert(format!("{mode:?}"), m);
    }
    let (sel, rnd) = (mass["Selective"], mass["Random"]);
    ensure(sel - rnd >= 0.05, || format!("selective {sel:.4} vs random {rnd:.4}"))?;
    Ok(format!(
        "simple mass selective {sel:.4} vs random {rnd:.4} over {} slots",
        data.ls.len()
    ))
}

// 3 ---------------------------------------------------------------------

fn gradient_correctness() -> Result<String, String> {
    let cfg = ModelConfig {
        num_layers: 2,
        num_heads: 2,
        d_model: 8,
        d_ff: 16,
        max_seq_len: 8,
        vocab_size: 20,
        seed: 3,
        init_std: 0.3,
    };
    let model = MlmModel::new(cfg).map_err(|e| e.to_string())?;
    let n = model.params.num_params();
    ensure(n <= 5000, || format!("{n} parameters"))?;
    let batch = [
        MaskedInstance::new(vec![2, 7, 4, 9, 12, 3, 0], vec![2], vec![10], 0),
        MaskedInstance::new(vec![2, 4, 15, 4, 3], vec![1, 3], vec![6, 19], 1),
    ];
    let (_, g) = model.loss_and_grad(&batch).map_err(|e| e.to_string())?;
    let samples = 150;
    let worst = support::grad_check(&model.params, &g, samples, |p| {
        MlmModel::from_params(cfg, p.clone()).unwrap().mlm_loss(&batch).unwrap()
    });
    ensure(worst <= 1e-4, || format!("worst relative error {worst:.2e}"))?;
    Ok(format!("{samples} of {n} parameters, worst relative error {worst:.2e}"))
}

// 4 ---------------------------------------------------------------------

fn metric_oracles() -> Result<String, String> {
    let mut r = support::rng(404);
    for i in 0..200 {
        let (c, g) = support::random_sg_case(&mut r);
        let got = sg_prf(&c, &g).map_err(|e| e.to_string())?;
        let want = support::sg_oracle(&c, &g);
        ensure((got.precision, got.recall, got.f1) == want, || format!("sg case {i}: {got:?} vs {want:?}"))?;
    }
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let (s, o, refs) = support::random_sari_case(&mut r);
        let got = sari(&s, &o, &refs).map_err(|e| e.to_string())?.total;
        let want = support::sari_oracle(&s, &o, &refs);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("sari case {i}: {got} vs {want}"))?;
    }
    ensure(support::FKGL_FIXTURES.len() >= 5, || "too few readability fixtures".into())?;
    ensure(support::FKGL_FIXTURES.iter().any(|f| f.1 == -1.45), || "missing -1.45 fixture".into())?;
    for (lines, want) in support::FKGL_FIXTURES {
        let got = fkgl(lines).map_err(|e| e.to_string())?;
        ensure((got - want).abs() <= 1e-9, || format!("fkgl {lines:?}: {got} vs {want}"))?;
    }
    Ok(format!(
        "200 sg cases exact, 200 sari cases (max diff {worst:.1e}), {} fkgl fixtures",
        support::FKGL_FIXTURES.len()
    ))
}

// 5 ---------------------------------------------------------------------

fn optimizer_fidelity() -> Result<String, String> {
    let mut rng = seed::rng(55);
    let tagged = tag(synth::generate_sentences(&mut rng, 256, 0.5).into_iter().map(|s| s.tokens));
    let vocab = Vocab::build(tagged.iter().map(|t| &t.tokens[..]), 1);
    let policy = MaskPolicy {
        mode: MaskMode::Random,
        seed: 5,
        ..MaskPolicy::default()
    };
    let (instances, _) = make_instances(&tagged, &vocab, &policy, 32).map_err(|e| e.to_string())?;
    let mut cfg = ModelConfig::tiny(vocab.len());
    cfg.max_seq_len = 32;
    cfg.d_model = 32;
    cfg.d_ff = 64;
    let accumulated = TrainConfig {
        epochs: 2,
        max_seq_len: 32,
        seed: 6,
        shuffle: false,
        ..TrainConfig::default()
    };
    ensure(accumulated.batch_size == 4 && accumulated.grad_accum == 4, || "unexpected defaults".into())?;
    let wide = TrainConfig {
        batch_size: 16,
        grad_accum: 1,
        ..accumulated
    };
    let start = MlmModel::new(cfg).map_err(|e| e.to_string())?;
    let mut a = start.clone();
    let mut b = start.clone();
    mlm::train(&mut a, &instances, &accumulated).map_err(|e| e.to_string())?;
    mlm::train(&mut b, &instances, &wide).map_err(|e| e.to_string())?;
    let diff = a.params.max_relative_diff(&b.params);
    let moved = a.params.max_relative_diff(&start.params);
    ensure(moved > 0.0, || "training did not change the parameters".into())?;
    ensure(diff <= 1e-5, || format!("relative parameter difference {diff:.2e}"))?;
    Ok(format!(
        "{} instances, relative difference {diff:.2e} (training moved weights by {moved:.2e})",
        instances.len()
    ))
}

// 6 ---------------------------------------------------------------------

fn normalized(line: &str) -> String {
    selmask::text::tokenize(line)
        .iter()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn dedup_guarantee() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("prep");
    let tests = [data("test.src"), data("test.ref")];
    let ls = data("ls.tsv");
    selmask(&[
        "prepare",
        "--corpus",
        &data("ordinary.txt"),
        "--corpus",
        &format!("{}:leveled", data("simple_leveled.txt")),
        "--test-sets",
        &tests[0],
        "--test-sets",
        &tests[1],
        "--ls-test-sets",
        &ls,
        "--out",
        out.to_str().unwrap(),
    ])?;
    let corpus: BTreeSet<String> = fs::read_to_string(out.join("corpus.txt"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(normalized)
        .collect();
    let mut sets: Vec<(String, BTreeSet<String>)> = Vec::new();
    for t in &tests {
        let lines = fs::read_to_string(t).map_err(|e| e.to_string())?;
        sets.push((t.clone(), lines.lines().map(normalized).filter(|l| !l.is_empty()).collect()));
    }
    let ls_lines = fs::read_to_string(&ls).map_err(|e| e.to_string())?;
    sets.push((ls.clone(), ls_lines.lines().map(|l| normalized(l.split('\t').next().unwrap_or(""))).collect()));
    for (name, set) in &sets {
        let overlap = corpus.intersection(set).count();
        ensure(overlap == 0, || format!("{overlap} sentences shared with {name}"))?;
    }
    let stats = read_json(&out.join("stats.json"))?;
    let removed = stats["dedup_removed"].as_u64().unwrap_or(0);
    ensure(removed > 0, || "nothing was removed, the check is vacuous".into())?;
    Ok(format!(
        "{} corpus sentences, {removed} removed, empty intersection with {} test sets",
        corpus.len(),
        sets.len()
    ))
}

// 7 ---------------------------------------------------------------------

fn encoder_transfer() -> Result<String, String> {
    let pairs = synth::copy_pairs(5, 100);
    let vocab = Vocab::build(pairs.iter().map(|p| &p.source.tokens[..]), 1);
    let cfg = ModelConfig {
        num_layers: 1,
        num_heads: 4,
        d_model: 32,
        d_ff: 64,
        max_seq_len: 24,
        vocab_size: vocab.len(),
        seed: 1,
        init_std: 0.02,
    };
    let mlm_model = MlmModel::new(cfg).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ckpt = tmp.path().join("mlm.ckpt");
    mlm::save_checkpoint(&mlm_model, &vocab, &ckpt).map_err(|e| e.to_string())?;
    let (mut model, v2) = sentsimp::init_seq2seq(&ckpt, DecoderConfig::matching(&cfg), 2).map_err(|e| e.to_string())?;
    ensure(v2.tokens() == vocab.tokens(), || "vocabulary changed".into())?;
    let source = mlm_model.params.tensors();
    let tensors = {
        let encoder = model.encoder_params();
        ensure(encoder.len() == source.len() - 2, || format!("{} encoder tensors", encoder.len()))?;
        for (a, b) in encoder.iter().zip(source) {
            let same = a.name == b.name
                && a.shape == b.shape
                && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(same, || format!("tensor {} differs from the checkpoint", a.name))?;
        }
        encoder.len()
    };
    let tc = TrainConfig {
        epochs: 40,
        batch_size: 8,
        grad_accum: 1,
        learning_rate: 2e-3,
        max_seq_len: 24,
        seed: 3,
        ..TrainConfig::default()
    };
    sentsimp::finetune(&mut model, &vocab, &pairs, &tc).map_err(|e| e.to_string())?;
    let dc = DecodeConfig {
        beam_size: 1,
        max_output_len: 24,
        length_penalty: 1.0,
    };
    let exact = pairs
        .iter()
        .filter(|p| {
            let h = sentsimp::greedy_ids(&model, &vocab, &p.source, &dc);
            sentsimp::ids_to_sentence(&vocab, &h.ids).tokens == p.source.tokens
        })
        .count();
    ensure(exact >= 90, || format!("greedy decoding copied {exact}/100 sources"))?;
    Ok(format!("{tensors} encoder tensors bit-identical, {exact}/100 sources copied"))
}

// 8 ---------------------------------------------------------------------

fn ablation_harness() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("ablate");
    selmask(&[
        "ablate",
        "--ordinary",
        &data("ordinary.txt"),
        "--simple",
        &format!("{}:leveled", data("simple_leveled.txt")),
        "--lexicon",
        &data("lexicon.tsv"),
        "--ls",
        &data("ls.tsv"),
        "--out",
        out.to_str().unwrap(),
    ])?;
    let report = read_json(&out.join("report.json"))?;
    let rows = report["rows"].as_array().ok_or("report has no rows")?;
    let names: Vec<&str> = rows.iter().filter_map(|r| r["model"].as_str()).collect();
    ensure(names == ["BERT", "BERT-C", "BERT-M", "SimpleBERT"], || format!("rows {names:?}"))?;
    let base = &rows[0];
    ensure(
        base["delta_simple_mass"].as_f64() == Some(0.0) && base["delta_f1"].as_f64() == Some(0.0),
        || format!("baseline deltas {} {}", base["delta_simple_mass"], base["delta_f1"]),
    )?;
    let tsv = fs::read_to_string(out.join("report.tsv")).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = tsv.lines().collect();
    ensure(lines.len() == 5 && lines[0].contains("delta"), || format!("report.tsv:\n{tsv}"))?;
    let mass: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.3}", r["model"].as_str().unwrap_or("?"), r["simple_mass"].as_f64().unwrap_or(f64::NAN)))
        .collect();
    Ok(format!(
        "4 variants, baseline delta 0, simple mass {}, ordering holds: {}",
        mass.join(", "),
        report["ordering_holds"]
    ))
}

// 9 ---------------------------------------------------------------------

fn rerun_matches(out: &Path) -> Result<usize, String> {
    let first = read_json(&out.join("manifest.json"))?;
    let again = out.with_extension("rerun");
    selmask(&[
        first["command"].as_str().ok_or("manifest has no command")?,
        "--config",
        out.join("manifest.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ])?;
    let second = read_json(&again.join("manifest.json"))?;
    let outputs = first["outputs"].as_object().ok_or("manifest has no outputs")?;
    ensure(!outputs.is_empty(), || format!("{}: no outputs recorded", out.display()))?;
    ensure(first["outputs"] == second["outputs"], || {
        format!("{}: output hashes differ on rerun", out.display())
    })?;
    ensure(first["seed"] == second["seed"] && first["config"].get("seed") == second["config"].get("seed"), || {
        "seed not carried over".into()
    })?;
    for name in outputs.keys() {
        let a = fs::read(out.join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(again.join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs on rerun"))?;
    }
    // Inputs are left as they were.
    for (path, hash) in first["inputs"].as_object().ok_or("manifest has no inputs")? {
        let bytes = fs::read(path).map_err(|e| format!("{path}: {e}"))?;
        let now = selmask_cli::manifest::sha256_bytes(&bytes);
        ensure(Some(now.as_str()) == hash.as_str(), || format!("input {path} was modified"))?;
    }
    Ok(outputs.len())
}

fn reproducibility() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = |n: &str| tmp.path().join(n).display().to_string();
    let small = ["--layers", "1", "--heads", "2", "--d-model", "16", "--d-ff", "32", "--max-seq-len", "32"];
    let with = |base: &[&str], more: &[&str]| -> Vec<String> { base.iter().chain(more).map(|s| s.to_string()).collect() };
    let leveled = format!("{}:leveled", data("simple_leveled.txt"));
    let steps: Vec<Vec<String>> = vec![
        with(
            &["prepare", "--corpus", &data("ordinary.txt"), "--corpus", &leveled, "--ls-test-sets", &data("ls.tsv")],
            &["--out", &dir("prepare")],
        ),
        with(
            &["train-tagger", "--data", &data("tagged.txt"), "--lexicon", &data("lexicon.tsv"), "--epochs", "2"],
            &["--out", &dir("tagger")],
        ),
        with(
            &["pretrain", "--corpus", &format!("{}/corpus.txt", dir("prepare")), "--identifier", "tagger"],
            &[&["--tagger", &format!("{}/tagger.ckpt", dir("tagger")), "--epochs", "2", "--lr", "1e-3"][..], &small, &["--out", &dir("pretrain")]].concat(),
        ),
        with(
            &["pretrain", "--corpus", &data("ordinary.txt"), "--mode", "random", "--epochs", "1", "--out", &dir("pretrain-random")],
            &small,
        ),
        with(
            &["eval-sg", "--checkpoint", &format!("{}/model.ckpt", dir("pretrain")), "--dataset", &data("ls.tsv")],
            &["--out", &dir("eval-sg")],
        ),
        with(
            &["eval-pipeline", "--checkpoint", &format!("{}/model.ckpt", dir("pretrain")), "--dataset", &data("ls.tsv")],
            &["--freq", &data("frequency.tsv"), "--out", &dir("eval-pipeline")],
        ),
        with(
            &["eval-ss", "--checkpoint", &format!("{}/model.ckpt", dir("pretrain")), "--epochs", "2"],
            &[
                "--train-src", &data("train.src"), "--train-ref", &data("train.ref"),
                "--test-src", &data("test.src"), "--test-ref", &data("test.ref"), "--out", &dir("eval-ss"),
            ],
        ),
        with(
            &["score", "--source", &data("test.src"), "--system", &data("test.ref"), "--refs", &data("test.ref")],
            &["--out", &dir("score")],
        ),
        with(
            &["ablate", "--ordinary", &data("ordinary.txt"), "--simple", &leveled, "--lexicon", &data("lexicon.tsv")],
            &[&["--ls", &data("ls.tsv"), "--base-epochs", "1", "--epochs", "1", "--out", &dir("ablate")][..], &small].concat(),
        ),
    ];
    let mut files = 0;
    let mut commands = Vec::new();
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        selmask(&args)?;
        let out = args[args.iter().position(|a| *a == "--out").unwrap() + 1];
        files += rerun_matches(Path::new(out))?;
        commands.push(args[0]);
    }
    let distinct: BTreeSet<&str> = commands.iter().copied().collect();
    ensure(distinct.len() == 8, || format!("covered {distinct:?}"))?;
    Ok(format!(
        "{} runs of all 8 commands re-run from their manifests, {files} output files bit-identical",
        steps.len()
    ))
}
