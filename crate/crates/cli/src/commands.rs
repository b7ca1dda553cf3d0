//! Subcommand implementations.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use selmask::corpus::{
    self, load_corpus, load_ls_dataset, load_parallel_dataset, CorpusFormat, CorpusManifest, CorpusSource, LsInstance,
    PrepareOptions, Sentence,
};
use selmask::identify::{load_tagger, save_tagger, train_tagger, TaggerConfig};
use selmask::identify::{build_lexicon, disagreement_report, load_tagged, Identifier, TaggedSentence};
use selmask::lexsimp::{self, FreqTable, RankWeights};
use selmask::masking::{make_instances, mask_rate_report, MaskMode, MaskPolicy, MaskRateReport, MaskingStats, Replacement};
use selmask::metrics::{fkgl_sentences, sari, SariBreakdown};
use selmask::metrics::{pipeline_pa, sg_prf, SgScore};
use selmask::mlm::{self, ModelConfig, MlmModel, TrainConfig, Vocab};
use selmask::nn::optim::LossTrace;
use selmask::sentsimp::{self, DecodeConfig, DecoderConfig};
use selmask::text::tokenize;
use selmask::{seed, Error, Result};

use crate::manifest::Run;
use crate::settings::{key, list, Key, Settings};

pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: fn() -> Vec<Key>,
    pub run: fn(Settings) -> Result<()>,
}

pub const SPECS: &[CommandSpec] = &[
    CommandSpec {
        name: "prepare",
        about: "Filter and deduplicate pre-training text",
        keys: prepare_keys,
        run: cmd_prepare,
    },
    CommandSpec {
        name: "train-tagger",
        about: "Train the contextual simple/complex tagger",
        keys: tagger_keys,
        run: cmd_train_tagger,
    },
    CommandSpec {
        name: "pretrain",
        about: "Identify, mask and train a masked language model",
        keys: pretrain_keys,
        run: cmd_pretrain,
    },
    CommandSpec {
        name: "ablate",
        about: "Run the corpus x masking ablation matrix",
        keys: ablate_keys,
        run: cmd_ablate,
    },
    CommandSpec {
        name: "eval-sg",
        about: "Score substitution generation against gold sets",
        keys: eval_sg_keys,
        run: cmd_eval_sg,
    },
    CommandSpec {
        name: "eval-pipeline",
        about: "Score one-word lexical simplification",
        keys: eval_pipeline_keys,
        run: cmd_eval_pipeline,
    },
    CommandSpec {
        name: "eval-ss",
        about: "Fine-tune and score an encoder-decoder sentence simplifier",
        keys: eval_ss_keys,
        run: cmd_eval_ss,
    },
    CommandSpec {
        name: "score",
        about: "SARI and FKGL of a system output file",
        keys: score_keys,
        run: cmd_score,
    },
];

fn common() -> Vec<Key> {
    vec![
        key("out", None, "output directory"),
        key("seed", Some("42"), "root seed; every random stream is derived from it"),
    ]
}

fn with(mut base: Vec<Key>, more: &[Key]) -> Vec<Key> {
    base.extend_from_slice(more);
    base
}

const MODEL_KEYS: &[Key] = &[
    key("layers", Some("2"), "transformer layers"),
    key("heads", Some("4"), "attention heads"),
    key("d-model", Some("64"), "hidden size"),
    key("d-ff", Some("128"), "feed-forward size"),
    key("max-seq-len", Some("64"), "maximum sequence length including [CLS]/[SEP]"),
    key("init-std", Some("0.02"), "weight initialization standard deviation"),
    key("min-freq", Some("1"), "minimum word count for the vocabulary"),
];

const TRAIN_KEYS: &[Key] = &[
    key("epochs", Some("10"), "training epochs"),
    key("batch-size", Some("4"), "examples per micro-batch"),
    key("grad-accum", Some("4"), "micro-batches per optimizer step"),
    key("lr", Some("5e-5"), "Adam learning rate"),
    key("adam-eps", Some("1e-8"), "Adam epsilon"),
    key("adam-beta1", Some("0.9"), "Adam beta1"),
    key("adam-beta2", Some("0.999"), "Adam beta2"),
    key("shuffle", Some("true"), "shuffle examples every epoch"),
];

const MASK_KEYS: &[Key] = &[
    key("rate", Some("0.15"), "masking rate over eligible words"),
    key("replacement", Some("mask"), "mask | bert (80-10-10)"),
    key("redraw", Some("true"), "draw new masks every epoch"),
];

/// Overrides the defaults of keys already in `keys`.
fn defaults(mut keys: Vec<Key>, over: &[(&str, &'static str)]) -> Vec<Key> {
    for (name, value) in over {
        let k = keys.iter_mut().find(|k| k.name == *name).expect("known key");
        k.default = Some(value);
    }
    keys
}

fn model_config(s: &Settings, vocab_size: usize) -> Result<ModelConfig> {
    let c = ModelConfig {
        num_layers: s.parse("layers")?,
        num_heads: s.parse("heads")?,
        d_model: s.parse("d-model")?,
        d_ff: s.parse("d-ff")?,
        max_seq_len: s.parse("max-seq-len")?,
        vocab_size,
        seed: seed::derive(s.seed()?, "model"),
        init_std: s.parse("init-std")?,
    };
    c.validate()?;
    Ok(c)
}

fn train_config(s: &Settings, label: &str) -> Result<TrainConfig> {
    let tc = TrainConfig {
        epochs: s.parse("epochs")?,
        batch_size: s.parse("batch-size")?,
        grad_accum: s.parse("grad-accum")?,
        learning_rate: s.parse("lr")?,
        adam_eps: s.parse("adam-eps")?,
        adam_betas: (s.parse("adam-beta1")?, s.parse("adam-beta2")?),
        max_seq_len: s.parse("max-seq-len").unwrap_or(TrainConfig::default().max_seq_len),
        seed: seed::derive(s.seed()?, label),
        shuffle: s.flag("shuffle")?,
    };
    tc.fit_config().validate()?;
    Ok(tc)
}

fn mask_policy(s: &Settings, mode: MaskMode, label: &str) -> Result<MaskPolicy> {
    let p = MaskPolicy {
        mode,
        rate: s.parse("rate")?,
        replacement: s.parse::<String>("replacement")?.parse::<Replacement>()?,
        whole_word: true,
        seed: seed::derive(s.seed()?, label),
    };
    p.validate()?;
    Ok(p)
}

/// `path` or `path:plain` / `path:leveled`.
fn corpus_source(spec: &str) -> CorpusSource {
    if let Some((path, fmt)) = spec.rsplit_once(':') {
        if let Ok(format) = fmt.parse::<CorpusFormat>() {
            return CorpusSource {
                path: PathBuf::from(path),
                format,
            };
        }
    }
    CorpusSource {
        path: PathBuf::from(spec),
        format: CorpusFormat::PlainLines,
    }
}

fn corpus_text(sentences: &[Sentence]) -> String {
    let mut s = String::new();
    for sent in sentences {
        s.push_str(&sent.text());
        s.push('\n');
    }
    s
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)
        .map_err(|e| Error::io(path, e))?
        .lines()
        .map(str::to_string)
        .collect())
}

// ---------------------------------------------------------------- prepare

fn prepare_keys() -> Vec<Key> {
    with(
        common(),
        &[
            list("corpus", "corpus files as path[:plain|:leveled]"),
            list("test-sets", "plain-lines test files to remove"),
            list("ls-test-sets", "lexical-simplification datasets whose sentences are removed"),
            key("levels", Some("2,3,4"), "levels kept from leveled corpora"),
            key("min-words", Some("6"), "minimum letter-bearing words per sentence"),
        ],
    )
}

fn cmd_prepare(s: Settings) -> Result<()> {
    let sources: Vec<CorpusSource> = s.list("corpus").iter().map(|c| corpus_source(c)).collect();
    if sources.is_empty() {
        return Err(Error::usage("--corpus is required"));
    }
    let tests: Vec<PathBuf> = s.list("test-sets").into_iter().map(PathBuf::from).collect();
    let ls_tests: Vec<PathBuf> = s.list("ls-test-sets").into_iter().map(PathBuf::from).collect();
    let levels = s
        .list("levels")
        .iter()
        .map(|l| l.parse::<u8>().map_err(|_| Error::usage(format!("invalid level '{l}'"))))
        .collect::<Result<BTreeSet<u8>>>()?;
    let opts = PrepareOptions {
        levels,
        min_words: s.parse("min-words")?,
    };
    let inputs = sources.iter().map(|c| c.path.clone()).chain(tests.clone()).chain(ls_tests.clone()).collect();
    let mut run = Run::start(s, inputs)?;

    let mut test_set = corpus::load_test_sentences(&tests)?;
    test_set.extend(corpus::ls_test_sentences(&ls_tests)?);
    let (kept, stats) = corpus::prepare(&sources, &test_set, &opts)?;
    if stats.loaded == 0 {
        return Err(Error::format("no sentences in the input corpora"));
    }
    if kept.is_empty() {
        return Err(Error::format("no sentences remain after filtering"));
    }
    log::info!(
        "prepare: {} loaded, {} after level, {} after length, {} kept ({} removed as test overlap)",
        stats.loaded,
        stats.after_level,
        stats.after_short,
        stats.after_dedup,
        stats.dedup_removed
    );
    run.write("corpus.txt", corpus_text(&kept))?;
    run.write_json("stats.json", &stats)?;
    run.finish(serde_json::to_value(&stats).expect("serializable"))?;
    Ok(())
}

// ---------------------------------------------------------------- train-tagger

fn tagger_keys() -> Vec<Key> {
    let mut keys = with(common(), &[key("data", None, "tagged training sentences (word/S word/C ...)")]);
    keys.extend_from_slice(MODEL_KEYS);
    keys.extend_from_slice(TRAIN_KEYS);
    keys.extend_from_slice(&[
        key("lexicon", None, "optional lexicon to compare the tagger against"),
        key("threshold", Some("4.0"), "lexicon threshold"),
        key("cutoff", Some("0.5"), "tagger probability cutoff for Simple"),
    ]);
    defaults(
        keys,
        &[
            ("layers", "1"),
            ("heads", "2"),
            ("d-model", "32"),
            ("d-ff", "64"),
            ("init-std", "0.1"),
            ("epochs", "30"),
            ("batch-size", "8"),
            ("grad-accum", "1"),
            ("lr", "3e-3"),
        ],
    )
}

fn cmd_train_tagger(s: Settings) -> Result<()> {
    let data_path = s.path("data")?;
    let lexicon_path = s.path_opt("lexicon");
    let mut inputs = vec![data_path.clone()];
    inputs.extend(lexicon_path.clone());
    let mut model = model_config(&s, Vocab::NUM_SPECIAL + 1)?;
    model.seed = seed::derive(s.seed()?, "tagger");
    let cfg = TaggerConfig {
        model,
        train: train_config(&s, "tagger-train")?,
        min_freq: s.parse("min-freq")?,
    };
    let cutoff: f64 = s.parse("cutoff")?;
    let threshold: f64 = s.parse("threshold")?;
    let mut run = Run::start(s, inputs)?;

    let data = load_tagged(&data_path)?;
    let (tagger, trace) = train_tagger(&data, &cfg)?;
    save_tagger(&tagger, &run.path("tagger.ckpt"))?;
    run.record("tagger.ckpt");
    run.write("loss.csv", trace.to_csv())?;
    let mut summary = json!({ "sentences": data.len(), "final_epoch_loss": trace.epoch_means.last() });
    if let Some(lp) = lexicon_path {
        let lexicon = build_lexicon(&lp, threshold)?;
        let sentences: Vec<Sentence> = data.iter().map(|t| Sentence::new(t.tokens.clone())).collect();
        let report = disagreement_report(&sentences, &lexicon, &tagger, cutoff)?;
        run.write_json("disagreement.json", &report)?;
        summary["disagreement"] = serde_json::to_value(report).expect("serializable");
    }
    run.finish(summary)?;
    Ok(())
}

// ---------------------------------------------------------------- pretrain

fn pretrain_keys() -> Vec<Key> {
    let mut keys = with(
        common(),
        &[
            key("corpus", None, "training corpus, path[:plain|:leveled]"),
            key("mode", Some("selective"), "selective | random"),
            key("identifier", Some("lexicon"), "lexicon | tagger"),
            key("lexicon", None, "word<TAB>score lexicon"),
            key("threshold", Some("4.0"), "lexicon threshold; scores at or below are simple"),
            key("tagger", None, "tagger checkpoint"),
            key("cutoff", Some("0.5"), "tagger probability cutoff for Simple"),
            key("init", None, "MLM checkpoint to continue from; a fresh model when absent"),
        ],
    );
    keys.extend_from_slice(MASK_KEYS);
    keys.extend_from_slice(MODEL_KEYS);
    keys.extend_from_slice(TRAIN_KEYS);
    keys
}

/// Builds the identifier named by the settings; `None` when the mode does
/// not need one and none was configured.
fn identifier(s: &Settings, mode: MaskMode) -> Result<Option<Identifier>> {
    match s.required("identifier")? {
        "lexicon" => match s.path_opt("lexicon") {
            Some(p) => Ok(Some(Identifier::Lexicon(build_lexicon(&p, s.parse("threshold")?)?))),
            None if mode == MaskMode::Random => Ok(None),
            None => Err(Error::usage("--lexicon is required for selective masking with the lexicon identifier")),
        },
        "tagger" => match s.path_opt("tagger") {
            Some(p) => Ok(Some(Identifier::Tagger {
                model: Box::new(load_tagger(&p)?),
                cutoff: s.parse("cutoff")?,
            })),
            None if mode == MaskMode::Random => Ok(None),
            None => Err(Error::usage("--tagger is required for selective masking with the tagger identifier")),
        },
        other => Err(Error::usage(format!("unknown identifier '{other}'"))),
    }
}

fn tag_all(sentences: &[Sentence], id: Option<&Identifier>) -> Result<Vec<TaggedSentence>> {
    sentences
        .par_iter()
        .map(|s| match id {
            Some(id) => id.identify(s),
            None => TaggedSentence::new(s.tokens.clone(), vec![selmask::identify::ComplexityTag::Complex; s.tokens.len()]),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskSummary {
    pub first_epoch: MaskRateReport,
    pub stats: MaskingStats,
}

/// Masks (re-drawing per epoch when `redraw`) and trains.
fn train_masked(
    model: &mut MlmModel,
    vocab: &Vocab,
    tagged: &[TaggedSentence],
    policy: &MaskPolicy,
    redraw: bool,
    tc: &TrainConfig,
) -> Result<(LossTrace, MaskSummary)> {
    let max_len = model.config().max_seq_len;
    let (first, stats) = make_instances(tagged, vocab, &policy.for_epoch(0), max_len)?;
    let summary = MaskSummary {
        first_epoch: mask_rate_report(&first, tagged),
        stats,
    };
    if first.is_empty() && tc.epochs > 0 {
        return Err(Error::usage("masking left no training instances"));
    }
    let trace = mlm::train_dynamic(model, tc, |epoch| {
        if epoch == 0 || !redraw {
            Ok(Cow::Borrowed(&first[..]))
        } else {
            Ok(Cow::Owned(make_instances(tagged, vocab, &policy.for_epoch(epoch), max_len)?.0))
        }
    })?;
    Ok((trace, summary))
}

fn cmd_pretrain(s: Settings) -> Result<()> {
    let source = corpus_source(s.required("corpus")?);
    let init = s.path_opt("init");
    let mode: MaskMode = s.required("mode")?.parse()?;
    let mut inputs = vec![source.path.clone()];
    match s.required("identifier")? {
        "tagger" => inputs.extend(s.path_opt("tagger")),
        _ => inputs.extend(s.path_opt("lexicon")),
    }
    inputs.extend(init.clone());
    let policy = mask_policy(&s, mode, "masking")?;
    let redraw = s.flag("redraw")?;
    let tc = train_config(&s, "train")?;
    let mut run = Run::start(s, inputs)?;
    let s = &run.settings.clone();

    let sentences = load_corpus(&source.path, source.format)?;
    if sentences.is_empty() {
        return Err(Error::format(format!("no sentences in {}", source.path.display())));
    }
    let id = identifier(s, mode)?;
    let tagged = tag_all(&sentences, id.as_ref())?;
    let (mut model, vocab) = match &init {
        Some(p) => mlm::load_checkpoint(p)?,
        None => {
            let vocab = Vocab::build(sentences.iter().map(|x| &x.tokens[..]), s.parse("min-freq")?);
            (MlmModel::new(model_config(s, vocab.len())?)?, vocab)
        }
    };
    log::info!(
        "pretrain: {} sentences, vocab {}, {} parameters, mode {:?}",
        sentences.len(),
        vocab.len(),
        model.params.num_params(),
        mode
    );
    let (trace, masking) = train_masked(&mut model, &vocab, &tagged, &policy, redraw, &tc)?;
    mlm::save_checkpoint(&model, &vocab, &run.path("model.ckpt"))?;
    run.record("model.ckpt");
    run.write("loss.csv", trace.to_csv())?;
    run.write_json("masking.json", &masking)?;
    run.finish(json!({
        "sentences": sentences.len(),
        "vocab_size": vocab.len(),
        "model": model.config(),
        "epoch_losses": trace.epoch_means,
        "masking": masking,
    }))?;
    Ok(())
}

// ---------------------------------------------------------------- ablate

fn ablate_keys() -> Vec<Key> {
    let mut keys = with(
        common(),
        &[
            key("ordinary", None, "ordinary corpus, path[:plain|:leveled]"),
            key("simple", None, "simple corpus, path[:plain|:leveled]"),
            key("lexicon", None, "word<TAB>score lexicon for selective masking"),
            key("threshold", Some("4.0"), "lexicon threshold"),
            key("ls", None, "lexical-simplification dataset used for evaluation"),
            key("k", Some("10"), "candidates per instance for SG scoring"),
            key("levels", Some("2,3,4"), "levels kept from leveled corpora"),
            key("min-words", Some("6"), "minimum letter-bearing words per sentence"),
            key("base-epochs", Some("30"), "epochs of random-masking training for the base model"),
        ],
    );
    keys.extend_from_slice(MASK_KEYS);
    keys.extend_from_slice(MODEL_KEYS);
    keys.extend_from_slice(TRAIN_KEYS);
    defaults(
        keys,
        &[
            ("max-seq-len", "32"),
            ("batch-size", "16"),
            ("grad-accum", "1"),
            ("lr", "2e-3"),
        ],
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub model: String,
    pub corpus: String,
    pub masking: String,
    pub simple_mass: f64,
    pub delta_simple_mass: f64,
    pub sg: SgScore,
    pub delta_f1: f64,
}

fn sg_candidates(model: &MlmModel, vocab: &Vocab, data: &[LsInstance], k: usize) -> Result<Vec<Vec<String>>> {
    data.par_iter()
        .map(|inst| Ok(lexsimp::generate_candidates(model, vocab, inst, k)?.words()))
        .collect()
}

fn evaluate_ls(model: &MlmModel, vocab: &Vocab, data: &[LsInstance], k: usize) -> Result<(f64, SgScore)> {
    let mass = lexsimp::simple_mass(model, vocab, data)?;
    let cands = sg_candidates(model, vocab, data, k)?;
    let gold: Vec<&BTreeSet<String>> = data.iter().map(|d| &d.gold).collect();
    Ok((mass, sg_prf(&cands, &gold)?))
}

fn prepared(spec: &str, test: &HashSet<String>, opts: &PrepareOptions) -> Result<(Vec<Sentence>, CorpusManifest)> {
    let (kept, stats) = corpus::prepare(&[corpus_source(spec)], test, opts)?;
    if kept.is_empty() {
        return Err(Error::format(format!("no sentences remain in {spec}")));
    }
    Ok((kept, stats))
}

fn cmd_ablate(s: Settings) -> Result<()> {
    let ordinary_spec = s.required("ordinary")?.to_string();
    let simple_spec = s.required("simple")?.to_string();
    let lexicon_path = s.path("lexicon")?;
    let ls_path = s.path("ls")?;
    let inputs = vec![
        corpus_source(&ordinary_spec).path,
        corpus_source(&simple_spec).path,
        lexicon_path.clone(),
        ls_path.clone(),
    ];
    let k: usize = s.parse("k")?;
    let base_epochs: usize = s.parse("base-epochs")?;
    let levels = s
        .list("levels")
        .iter()
        .map(|l| l.parse::<u8>().map_err(|_| Error::usage(format!("invalid level '{l}'"))))
        .collect::<Result<BTreeSet<u8>>>()?;
    let opts = PrepareOptions {
        levels,
        min_words: s.parse("min-words")?,
    };
    let tc = train_config(&s, "variant-train")?;
    let base_tc = TrainConfig {
        epochs: base_epochs,
        seed: seed::derive(s.seed()?, "base-train"),
        ..tc
    };
    let base_policy = mask_policy(&s, MaskMode::Random, "base-masking")?;
    let redraw = s.flag("redraw")?;
    let mut run = Run::start(s, inputs)?;
    let s = &run.settings.clone();

    let ls = load_ls_dataset(&ls_path)?;
    let test: HashSet<String> = corpus::ls_test_sentences(std::slice::from_ref(&ls_path))?;
    let (ordinary, ordinary_stats) = prepared(&ordinary_spec, &test, &opts)?;
    let (simple, simple_stats) = prepared(&simple_spec, &test, &opts)?;
    let lexicon = Identifier::Lexicon(build_lexicon(&lexicon_path, s.parse("threshold")?)?);
    let ordinary_tagged = tag_all(&ordinary, Some(&lexicon))?;
    let simple_tagged = tag_all(&simple, Some(&lexicon))?;
    let vocab = Vocab::build(
        ordinary.iter().chain(&simple).map(|x| &x.tokens[..]),
        s.parse("min-freq")?,
    );
    let mut base = MlmModel::new(model_config(s, vocab.len())?)?;
    log::info!(
        "ablate: {} ordinary / {} simple sentences, vocab {}, {} parameters",
        ordinary.len(),
        simple.len(),
        vocab.len(),
        base.params.num_params()
    );
    let (base_trace, _) = train_masked(&mut base, &vocab, &ordinary_tagged, &base_policy, redraw, &base_tc)
        .map_err(|e| e.context("base model"))?;
    mlm::save_checkpoint(&base, &vocab, &run.path("base.ckpt"))?;
    run.record("base.ckpt");
    run.write("loss_base.csv", base_trace.to_csv())?;

    let variants: [(&str, &str, MaskMode, Option<&[TaggedSentence]>); 4] = [
        ("BERT", "-", MaskMode::Random, None),
        ("BERT-C", "simple", MaskMode::Random, Some(&simple_tagged)),
        ("BERT-M", "ordinary", MaskMode::Selective, Some(&ordinary_tagged)),
        ("SimpleBERT", "simple", MaskMode::Selective, Some(&simple_tagged)),
    ];
    let mut rows: Vec<AblationRow> = Vec::new();
    for (name, corpus_name, mode, data) in variants {
        let mut model = base.clone();
        let masking = match data {
            None => "-".to_string(),
            Some(tagged) => {
                let policy = mask_policy(s, mode, "variant-masking")?;
                let (trace, _) = train_masked(&mut model, &vocab, tagged, &policy, redraw, &tc)
                    .map_err(|e| e.context(&format!("variant {name}")))?;
                let file = format!("{}.ckpt", name.to_lowercase());
                mlm::save_checkpoint(&model, &vocab, &run.path(&file))?;
                run.record(&file);
                run.write(&format!("loss_{}.csv", name.to_lowercase()), trace.to_csv())?;
                format!("{mode:?}").to_lowercase()
            }
        };
        let (mass, sg) = evaluate_ls(&model, &vocab, &ls, k).map_err(|e| e.context(&format!("variant {name}")))?;
        log::info!("ablate: {name} simple mass {mass:.4}, SG F1 {:.4}", sg.f1);
        rows.push(AblationRow {
            model: name.to_string(),
            corpus: corpus_name.to_string(),
            masking,
            simple_mass: mass,
            delta_simple_mass: 0.0,
            sg,
            delta_f1: 0.0,
        });
    }
    let (base_mass, base_f1) = (rows[0].simple_mass, rows[0].sg.f1);
    for r in rows.iter_mut() {
        r.delta_simple_mass = r.simple_mass - base_mass;
        r.delta_f1 = r.sg.f1 - base_f1;
    }
    let both = rows[3].simple_mass;
    let ordering_holds = both >= rows[1].simple_mass && both >= rows[2].simple_mass;
    if !ordering_holds {
        log::warn!("ablate: SimpleBERT simple mass {both:.4} is below a single-change variant");
    }
    let mut tsv = String::from("model\tcorpus\tmasking\tsimple_mass\tdelta_simple_mass\tsg_precision\tsg_recall\tsg_f1\tdelta_f1\n");
    for r in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{:.4}\t{:+.4}\t{:.4}\t{:.4}\t{:.4}\t{:+.4}\n",
            r.model, r.corpus, r.masking, r.simple_mass, r.delta_simple_mass, r.sg.precision, r.sg.recall, r.sg.f1, r.delta_f1
        ));
    }
    print!("{tsv}");
    run.write("report.tsv", &tsv)?;
    let report = json!({
        "rows": rows,
        "ordering_holds": ordering_holds,
        "corpora": { "ordinary": ordinary_stats, "simple": simple_stats },
        "vocab_size": vocab.len(),
    });
    run.write_json("report.json", &report)?;
    run.finish(report)?;
    Ok(())
}

// ---------------------------------------------------------------- eval-sg / eval-pipeline

fn eval_sg_keys() -> Vec<Key> {
    with(
        common(),
        &[
            key("checkpoint", None, "MLM checkpoint"),
            key("dataset", None, "lexical-simplification dataset"),
            key("k", Some("10"), "candidates per instance"),
        ],
    )
}

fn cmd_eval_sg(s: Settings) -> Result<()> {
    let ckpt = s.path("checkpoint")?;
    let dataset = s.path("dataset")?;
    let k: usize = s.parse("k")?;
    let mut run = Run::start(s, vec![ckpt.clone(), dataset.clone()])?;
    let (model, vocab) = mlm::load_checkpoint(&ckpt)?;
    let data = load_ls_dataset(&dataset)?;
    let cands = sg_candidates(&model, &vocab, &data, k)?;
    let gold: Vec<&BTreeSet<String>> = data.iter().map(|d| &d.gold).collect();
    let score = sg_prf(&cands, &gold)?;
    let mut tsv = String::new();
    for (inst, c) in data.iter().zip(&cands) {
        tsv.push_str(&format!("{}\t{}\n", inst.target(), c.join(",")));
    }
    run.write("candidates.tsv", tsv)?;
    run.write_json("scores.json", &score)?;
    println!("{}", serde_json::to_string(&score).expect("serializable"));
    run.finish(serde_json::to_value(score).expect("serializable"))?;
    Ok(())
}

fn eval_pipeline_keys() -> Vec<Key> {
    with(
        common(),
        &[
            key("checkpoint", None, "MLM checkpoint"),
            key("dataset", None, "lexical-simplification dataset"),
            key("k", Some("10"), "candidates generated before ranking"),
            key("freq", None, "word<TAB>count frequency table"),
            key("w-lm", Some("1"), "weight of the MLM probability rank"),
            key("w-freq", Some("1"), "weight of the frequency rank"),
            key("w-ctx", Some("1"), "weight of the context-fit rank"),
        ],
    )
}

fn cmd_eval_pipeline(s: Settings) -> Result<()> {
    let ckpt = s.path("checkpoint")?;
    let dataset = s.path("dataset")?;
    let freq_path = s.path_opt("freq");
    let weights = RankWeights {
        lm: s.parse("w-lm")?,
        freq: s.parse("w-freq")?,
        ctx: s.parse("w-ctx")?,
    };
    weights.validate()?;
    if weights.freq > 0.0 && freq_path.is_none() {
        return Err(Error::usage("--freq is required when --w-freq is positive"));
    }
    let k: usize = s.parse("k")?;
    let mut inputs = vec![ckpt.clone(), dataset.clone()];
    inputs.extend(freq_path.clone());
    let mut run = Run::start(s, inputs)?;
    let (model, vocab) = mlm::load_checkpoint(&ckpt)?;
    let data = load_ls_dataset(&dataset)?;
    let freq = match &freq_path {
        Some(p) => FreqTable::load(p)?,
        None => FreqTable::default(),
    };
    let results = data
        .par_iter()
        .map(|inst| lexsimp::simplify_word(&model, &vocab, inst, k, &freq, &weights))
        .collect::<Result<Vec<_>>>()?;
    let chosen: Vec<Option<String>> = results.iter().map(|r| r.chosen.clone()).collect();
    let gold: Vec<&BTreeSet<String>> = data.iter().map(|d| &d.gold).collect();
    let targets: Vec<String> = data.iter().map(|d| d.target().to_string()).collect();
    let score = pipeline_pa(&chosen, &gold, &targets)?;
    let mut tsv = String::new();
    for (inst, r) in data.iter().zip(&results) {
        tsv.push_str(&lexsimp::output_line(inst, r));
        tsv.push('\n');
    }
    run.write("outputs.tsv", tsv)?;
    run.write_json("scores.json", &score)?;
    println!("{}", serde_json::to_string(&score).expect("serializable"));
    run.finish(serde_json::to_value(score).expect("serializable"))?;
    Ok(())
}

// ---------------------------------------------------------------- eval-ss / score

fn eval_ss_keys() -> Vec<Key> {
    let mut keys = with(
        common(),
        &[
            key("checkpoint", None, "MLM checkpoint for the encoder"),
            key("train-src", None, "training sources, one per line"),
            key("train-ref", None, "training references aligned with --train-src"),
            key("test-src", None, "test sources"),
            list("test-ref", "test reference files aligned with --test-src"),
            key("dec-layers", None, "decoder layers [default: encoder layers]"),
            key("dec-heads", None, "decoder heads [default: encoder heads]"),
            key("dec-d-ff", None, "decoder feed-forward size [default: encoder d-ff]"),
            key("dec-max-len", None, "decoder maximum length [default: encoder max-seq-len]"),
            key("beam", Some("4"), "beam size"),
            key("max-output-len", Some("64"), "maximum generated tokens"),
            key("length-penalty", Some("1.0"), "length normalization exponent"),
        ],
    );
    keys.extend_from_slice(TRAIN_KEYS);
    defaults(keys, &[("epochs", "20"), ("batch-size", "16"), ("grad-accum", "1"), ("lr", "1e-3")])
}

#[derive(Debug, Clone, Serialize)]
struct TextScores {
    sari: SariBreakdown,
    fkgl_system: Option<f64>,
    fkgl_source: Option<f64>,
    sentences: usize,
}

fn text_scores(sources: &[String], outputs: &[String], refs: &[Vec<String>]) -> Result<TextScores> {
    let fk = |lines: &[String]| fkgl_sentences(&lines.iter().map(|l| tokenize(l)).collect::<Vec<_>>()).ok();
    Ok(TextScores {
        sari: sari(sources, outputs, refs)?,
        fkgl_system: fk(outputs),
        fkgl_source: fk(sources),
        sentences: sources.len(),
    })
}

fn cmd_eval_ss(s: Settings) -> Result<()> {
    let ckpt = s.path("checkpoint")?;
    let train_src = s.path("train-src")?;
    let train_ref = s.path("train-ref")?;
    let test_src = s.path("test-src")?;
    let test_refs: Vec<PathBuf> = s.list("test-ref").into_iter().map(PathBuf::from).collect();
    if test_refs.is_empty() {
        return Err(Error::usage("--test-ref is required"));
    }
    let dc = DecodeConfig {
        beam_size: s.parse("beam")?,
        max_output_len: s.parse("max-output-len")?,
        length_penalty: s.parse("length-penalty")?,
    };
    dc.validate()?;
    let tc = train_config(&s, "finetune")?;
    let mut inputs = vec![ckpt.clone(), train_src.clone(), train_ref.clone(), test_src.clone()];
    inputs.extend(test_refs.clone());
    let mut run = Run::start(s, inputs)?;
    let s = &run.settings.clone();

    let (mlm_model, vocab) = mlm::load_checkpoint(&ckpt)?;
    let enc = *mlm_model.config();
    let mut dec = DecoderConfig::matching(&enc);
    dec.num_layers = s.parse_opt("dec-layers")?.unwrap_or(dec.num_layers);
    dec.num_heads = s.parse_opt("dec-heads")?.unwrap_or(dec.num_heads);
    dec.d_ff = s.parse_opt("dec-d-ff")?.unwrap_or(dec.d_ff);
    dec.max_len = s.parse_opt("dec-max-len")?.unwrap_or(dec.max_len);
    let mut model = sentsimp::Seq2SeqModel::from_mlm(&mlm_model, dec, seed::derive(s.seed()?, "decoder"))?;
    let train = load_parallel_dataset(&train_src, std::slice::from_ref(&train_ref))?;
    let test = load_parallel_dataset(&test_src, &test_refs)?;
    let trace = sentsimp::finetune(&mut model, &vocab, &train, &tc)?;
    sentsimp::save_seq2seq(&model, &vocab, &run.path("seq2seq.ckpt"))?;
    run.record("seq2seq.ckpt");
    run.write("loss.csv", trace.to_csv())?;
    let outputs: Vec<String> = test
        .par_iter()
        .map(|p| Ok(sentsimp::decode(&model, &vocab, &p.source, &dc)?.text()))
        .collect::<Result<_>>()?;
    let mut text = outputs.join("\n");
    text.push('\n');
    run.write("outputs.txt", text)?;
    let sources: Vec<String> = test.iter().map(|p| p.source.text()).collect();
    let refs: Vec<Vec<String>> = test.iter().map(|p| p.references.iter().map(Sentence::text).collect()).collect();
    let scores = text_scores(&sources, &outputs, &refs)?;
    run.write_json("scores.json", &scores)?;
    println!("{}", serde_json::to_string(&scores).expect("serializable"));
    run.finish(json!({ "scores": scores, "epoch_losses": trace.epoch_means }))?;
    Ok(())
}

fn score_keys() -> Vec<Key> {
    with(
        common(),
        &[
            key("source", None, "source sentences"),
            key("system", None, "system outputs aligned with --source"),
            list("refs", "reference files aligned with --source"),
        ],
    )
}

fn cmd_score(s: Settings) -> Result<()> {
    let source = s.path("source")?;
    let system = s.path("system")?;
    let refs: Vec<PathBuf> = s.list("refs").into_iter().map(PathBuf::from).collect();
    if refs.is_empty() {
        return Err(Error::usage("--refs is required"));
    }
    let mut inputs = vec![source.clone(), system.clone()];
    inputs.extend(refs.clone());
    let mut run = Run::start(s, inputs)?;
    let src = read_lines(&source)?;
    let sys = read_lines(&system)?;
    let mut per_sentence: Vec<Vec<String>> = vec![Vec::new(); src.len()];
    for p in std::iter::once(&system).chain(&refs) {
        let n = if p == &system { sys.len() } else { read_lines(p)?.len() };
        if n != src.len() {
            return Err(Error::Format {
                path: Some(p.clone()),
                line: None,
                message: format!("line count mismatch: source has {} lines, this file has {n}", src.len()),
            });
        }
    }
    for p in &refs {
        for (i, l) in read_lines(p)?.into_iter().enumerate() {
            per_sentence[i].push(l);
        }
    }
    let scores = text_scores(&src, &sys, &per_sentence)?;
    run.write_json("scores.json", &scores)?;
    println!("{}", serde_json::to_string(&scores).expect("serializable"));
    run.finish(serde_json::to_value(&scores).expect("serializable"))?;
    Ok(())
}
