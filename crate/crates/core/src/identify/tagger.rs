//! Contextual simple/complex tagger: a small bidirectional transformer
//! encoder with a per-token logistic head, trained with binary
//! cross-entropy.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Axis};

use super::{ComplexityTag, TaggedSentence};
use crate::checkpoint::{self, Container};
use crate::corpus::Sentence;
use crate::mlm::{ModelConfig, TrainConfig, Vocab};
use crate::nn::optim::{self, ExampleGrad, LossTrace};
use crate::nn::transformer::EncoderStack;
use crate::nn::{AttnMask, Linear, ParamBuilder, ParamSet};
use crate::text::has_letter;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerConfig {
    /// `vocab_size` is overwritten with the size of the vocabulary built
    /// from the training data.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub min_freq: usize,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            model: ModelConfig {
                num_layers: 1,
                num_heads: 2,
                d_model: 32,
                d_ff: 64,
                max_seq_len: 64,
                vocab_size: 0,
                seed: 0,
                init_std: 0.1,
            },
            train: TrainConfig {
                epochs: 30,
                batch_size: 8,
                grad_accum: 1,
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
            min_freq: 1,
        }
    }
}

#[derive(Debug, Clone)]
struct TaggerArch {
    config: ModelConfig,
    encoder: EncoderStack,
    head: Linear,
}

impl TaggerArch {
    fn build(config: &ModelConfig, pb: &mut ParamBuilder<'_>) -> Self {
        TaggerArch {
            config: *config,
            encoder: EncoderStack::new(pb, "encoder", &config.dims()),
            head: Linear::new(pb, "tag_head", config.d_model, 1, config.init_std),
        }
    }

    fn logits(&self, p: &ParamSet, ids: &[u32]) -> Vec<f64> {
        let (h, _) = self.encoder.forward(p, ids, &AttnMask::default());
        self.head.forward(p, &h).column(0).to_vec()
    }

    /// ids include `[CLS]`/`[SEP]`; `labels[i]` is the label of `ids[i + 1]`.
    fn grad(&self, p: &ParamSet, ex: &(Vec<u32>, Vec<f64>)) -> Result<ExampleGrad> {
        let (ids, labels) = ex;
        let (h, cache) = self.encoder.forward(p, ids, &AttnMask::default());
        let words: Vec<usize> = (1..=labels.len()).collect();
        let selected = h.select(Axis(0), &words);
        let z = self.head.forward(p, &selected);
        let mut dz = Array2::zeros(z.raw_dim());
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let zi = z[[i, 0]];
            // -[y ln s(z) + (1-y) ln(1-s(z))] = softplus(z) - y z
            loss += softplus(zi) - y * zi;
            dz[[i, 0]] = sigmoid(zi) - y;
        }
        let mut g = p.zeros_like();
        let dsel = self.head.backward(p, &mut g, &selected, &dz);
        let mut dh = Array2::zeros(h.raw_dim());
        for (r, &pos) in words.iter().enumerate() {
            dh.row_mut(pos).assign(&dsel.row(r));
        }
        self.encoder.backward(p, &mut g, &cache, dh);
        Ok((loss, labels.len(), g))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct TaggerModel {
    arch: TaggerArch,
    pub params: ParamSet,
    pub vocab: Vocab,
}

impl TaggerModel {
    pub fn new(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        if config.vocab_size != vocab.len() {
            return Err(Error::usage(format!(
                "vocab_size {} does not match vocabulary of {}",
                config.vocab_size,
                vocab.len()
            )));
        }
        config.validate()?;
        let mut rng = seed::rng(seed::derive(config.seed, "tagger-init"));
        let mut pb = ParamBuilder::new(&mut rng);
        let arch = TaggerArch::build(&config, &mut pb);
        Ok(TaggerModel {
            arch,
            params: pb.finish(),
            vocab,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    fn window(&self) -> usize {
        self.arch.config.max_seq_len - 2
    }

    fn encode(&self, tokens: &[String]) -> Vec<u32> {
        std::iter::once(Vocab::CLS_ID)
            .chain(tokens.iter().map(|t| self.vocab.id(t)))
            .chain(std::iter::once(Vocab::SEP_ID))
            .collect()
    }

    /// Probability that each token is simple, as scored by the network.
    pub fn probabilities(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = Vec::with_capacity(tokens.len());
        for chunk in tokens.chunks(self.window()) {
            let logits = self.arch.logits(&self.params, &self.encode(chunk));
            out.extend(logits[1..=chunk.len()].iter().map(|&z| sigmoid(z)));
        }
        out
    }

    /// Simple iff letter-bearing and probability at least `cutoff`.
    pub fn identify(&self, sentence: &Sentence, cutoff: f64) -> Result<TaggedSentence> {
        let probs = self.probabilities(&sentence.tokens);
        let tags = sentence
            .tokens
            .iter()
            .zip(probs)
            .map(|(t, p)| {
                if has_letter(t) && p >= cutoff {
                    ComplexityTag::Simple
                } else {
                    ComplexityTag::Complex
                }
            })
            .collect();
        TaggedSentence::new(sentence.tokens.clone(), tags)
    }
}

pub fn train_tagger(data: &[TaggedSentence], cfg: &TaggerConfig) -> Result<(TaggerModel, LossTrace)> {
    if data.is_empty() {
        return Err(Error::usage("tagger training data is empty"));
    }
    for (i, s) in data.iter().enumerate() {
        if s.tokens.len() != s.tags.len() || s.tokens.is_empty() {
            return Err(Error::usage(format!("training sentence {i} violates the tagging invariants")));
        }
    }
    let vocab = Vocab::build(data.iter().map(|s| &s.tokens[..]), cfg.min_freq);
    let mut model_cfg = cfg.model;
    model_cfg.vocab_size = vocab.len();
    let mut model = TaggerModel::new(model_cfg, vocab)?;
    let window = model.window();
    let mut examples = Vec::new();
    for s in data {
        for (toks, tags) in s.tokens.chunks(window).zip(s.tags.chunks(window)) {
            let labels = tags.iter().map(|t| if t.is_simple() { 1.0 } else { 0.0 }).collect();
            examples.push((model.encode(toks), labels));
        }
    }
    let arch = model.arch.clone();
    let trace = optim::fit(
        &mut model.params,
        &cfg.train.fit_config(),
        |_| Ok(Cow::Borrowed(&examples[..])),
        |p, ex| arch.grad(p, ex),
    )?;
    Ok((model, trace))
}

pub const KIND_TAGGER: &str = "tagger";

pub fn save_tagger(model: &TaggerModel, path: &Path) -> Result<()> {
    let mut header = BTreeMap::new();
    header.insert("kind".to_string(), KIND_TAGGER.to_string());
    model.config().to_header("", &mut header);
    checkpoint::write(
        path,
        &Container {
            header,
            vocab: model.vocab.tokens().to_vec(),
            params: model.params.clone(),
        },
    )
}

pub fn load_tagger(path: &Path) -> Result<TaggerModel> {
    let c = checkpoint::read(path)?;
    let kind = c.header_value("kind")?;
    if kind != KIND_TAGGER {
        return Err(Error::format(format!("expected a {KIND_TAGGER} checkpoint, found '{kind}'")));
    }
    let config = ModelConfig::from_header(&c, "")?;
    let mut model = TaggerModel::new(config, Vocab::from_tokens(c.vocab.clone())?)?;
    checkpoint::check_layout(&model.params, &c.params)?;
    model.params = c.params;
    Ok(model)
}
