//! Encoder-decoder sentence simplification. The encoder comes from an MLM
//! checkpoint, the decoder is initialized fresh; `[CLS]` starts and `[SEP]`
//! ends every decoded sequence.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::checkpoint::{self, Container};
use crate::corpus::{ParallelPair, Sentence};
use crate::mlm::{self, padding_mask, ModelConfig, MlmModel, TrainConfig, Vocab};
use crate::nn::optim::{self, ExampleGrad, LossTrace};
use crate::nn::transformer::{DecoderStack, EncoderStack, StackDims};
use crate::nn::{log_softmax_at, softmax_in_place, AttnMask, Linear, ParamBuilder, ParamSet, Tensor};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub init_std: f64,
}

impl DecoderConfig {
    /// Same shape as the encoder.
    pub fn matching(enc: &ModelConfig) -> Self {
        DecoderConfig {
            num_layers: enc.num_layers,
            num_heads: enc.num_heads,
            d_model: enc.d_model,
            d_ff: enc.d_ff,
            max_len: enc.max_seq_len,
            init_std: enc.init_std,
        }
    }

    pub fn validate(&self, enc: &ModelConfig) -> Result<()> {
        if self.d_model != enc.d_model {
            return Err(Error::usage(format!(
                "decoder d_model {} does not match encoder d_model {}",
                self.d_model, enc.d_model
            )));
        }
        if self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::usage(format!(
                "decoder d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.num_layers == 0 || self.d_ff == 0 || self.max_len < 2 {
            return Err(Error::usage("decoder num_layers, d_ff must be positive and max_len at least 2"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::usage("decoder init_std must be positive"));
        }
        Ok(())
    }

    fn dims(&self, vocab_size: usize) -> StackDims {
        StackDims {
            vocab_size,
            d_model: self.d_model,
            num_heads: self.num_heads,
            d_ff: self.d_ff,
            num_layers: self.num_layers,
            max_len: self.max_len,
            init_std: self.init_std,
        }
    }

    fn to_header(self, header: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: String| {
            header.insert(format!("decoder.{k}"), v);
        };
        put("num_layers", self.num_layers.to_string());
        put("num_heads", self.num_heads.to_string());
        put("d_model", self.d_model.to_string());
        put("d_ff", self.d_ff.to_string());
        put("max_len", self.max_len.to_string());
        put("init_std", format!("{:e}", self.init_std));
    }

    fn from_header(c: &Container) -> Result<Self> {
        Ok(DecoderConfig {
            num_layers: c.header_parse("decoder.num_layers")?,
            num_heads: c.header_parse("decoder.num_heads")?,
            d_model: c.header_parse("decoder.d_model")?,
            d_ff: c.header_parse("decoder.d_ff")?,
            max_len: c.header_parse("decoder.max_len")?,
            init_std: c.header_parse("decoder.init_std")?,
        })
    }
}

#[derive(Debug, Clone)]
struct Seq2SeqArch {
    enc_config: ModelConfig,
    dec_config: DecoderConfig,
    encoder: EncoderStack,
    decoder: DecoderStack,
    out: Linear,
}

/// Parameters are laid out encoder first, then `decoder.*`.
#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    arch: Seq2SeqArch,
    pub params: ParamSet,
    encoder_tensors: usize,
}

type Example = (Vec<u32>, Vec<u32>);

impl Seq2SeqModel {
    /// Takes the encoder from `mlm` and draws a fresh decoder from `seed`.
    pub fn from_mlm(mlm: &MlmModel, dec_config: DecoderConfig, seed_value: u64) -> Result<Self> {
        let enc_config = *mlm.config();
        dec_config.validate(&enc_config)?;
        let mut params = mlm.params.clone();
        // The MLM head (weight, bias) is the last pair of tensors.
        let encoder_tensors = params.len() - 2;
        params.split_off(encoder_tensors);
        let mut rng = seed::rng(seed::derive(seed_value, "decoder-init"));
        let mut pb = ParamBuilder::extend(params, &mut rng);
        let decoder = DecoderStack::new(&mut pb, "decoder", &dec_config.dims(enc_config.vocab_size));
        let out = Linear::new(
            &mut pb,
            "decoder.output",
            dec_config.d_model,
            enc_config.vocab_size,
            dec_config.init_std,
        );
        Ok(Seq2SeqModel {
            arch: Seq2SeqArch {
                enc_config,
                dec_config,
                encoder: mlm.arch.encoder.clone(),
                decoder,
                out,
            },
            params: pb.finish(),
            encoder_tensors,
        })
    }

    pub fn encoder_config(&self) -> &ModelConfig {
        &self.arch.enc_config
    }

    pub fn decoder_config(&self) -> &DecoderConfig {
        &self.arch.dec_config
    }

    pub fn encoder_params(&self) -> &[Tensor] {
        &self.params.tensors()[..self.encoder_tensors]
    }

    fn encode_source(&self, vocab: &Vocab, tokens: &[String]) -> Vec<u32> {
        let window = self.arch.enc_config.max_seq_len - 2;
        let mut ids = vec![Vocab::CLS_ID];
        ids.extend(tokens.iter().take(window).map(|t| vocab.id(t)));
        ids.push(Vocab::SEP_ID);
        ids
    }

    /// `[CLS] tokens [SEP]`, cut so the decoder input fits `max_len`.
    fn encode_target(&self, vocab: &Vocab, tokens: &[String]) -> Vec<u32> {
        let window = self.arch.dec_config.max_len - 1;
        let mut ids = vec![Vocab::CLS_ID];
        ids.extend(tokens.iter().take(window).map(|t| vocab.id(t)));
        ids.push(Vocab::SEP_ID);
        ids
    }

    /// Teacher-forced mean cross-entropy of reference 0 over `pairs`, with
    /// its gradient.
    pub fn loss_and_grad(&self, vocab: &Vocab, pairs: &[ParallelPair]) -> Result<(f64, ParamSet)> {
        let mut g = self.params.zeros_like();
        let (mut total, mut count) = (0.0, 0usize);
        for (i, pair) in pairs.iter().enumerate() {
            let reference = pair
                .references
                .first()
                .ok_or_else(|| Error::usage(format!("pair {i} has no reference")))?;
            let ex = (
                self.encode_source(vocab, &pair.source.tokens),
                self.encode_target(vocab, &reference.tokens),
            );
            let (l, c, gi) = self.arch.grad(&self.params, &ex)?;
            total += l;
            count += c;
            g.add_assign(&gi);
        }
        if count == 0 {
            return Err(Error::usage("no target tokens"));
        }
        g.scale(1.0 / count as f64);
        Ok((total / count as f64, g))
    }

    fn memory(&self, src: &[u32]) -> Array2<f64> {
        self.arch.encoder.forward(&self.params, src, &padding_mask(src)).0
    }

    /// Log-probabilities of the next token after `prefix`.
    fn next_log_probs(&self, memory: &Array2<f64>, mem_mask: &AttnMask, prefix: &[u32]) -> Vec<f64> {
        let a = &self.arch;
        let (h, _) = a.decoder.forward(&self.params, prefix, memory, mem_mask);
        let last = h.row(h.nrows() - 1);
        let w = self.params.mat(a.out.w);
        let b = self.params.vec(a.out.b);
        let logits = (w.dot(&last) + b).to_vec();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        logits.iter().map(|z| z - lse).collect()
    }
}

impl Seq2SeqArch {
    fn grad(&self, p: &ParamSet, ex: &Example) -> Result<ExampleGrad> {
        let (src, tgt) = ex;
        let mem_mask = padding_mask(src);
        let (memory, enc_cache) = self.encoder.forward(p, src, &mem_mask);
        let input = &tgt[..tgt.len() - 1];
        let (h, dec_cache) = self.decoder.forward(p, input, &memory, &mem_mask);
        let logits = self.out.forward(p, &h);
        let mut dlogits = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (i, &t) in tgt[1..].iter().enumerate() {
            let row = logits.row(i).to_vec();
            loss -= log_softmax_at(&row, t as usize);
            let mut probs = row;
            softmax_in_place(&mut probs);
            probs[t as usize] -= 1.0;
            dlogits.row_mut(i).assign(&ndarray::ArrayView1::from(&probs[..]));
        }
        let mut g = p.zeros_like();
        let dh = self.out.backward(p, &mut g, &h, &dlogits);
        let dmem = self.decoder.backward(p, &mut g, &dec_cache, dh);
        self.encoder.backward(p, &mut g, &enc_cache, dmem);
        Ok((loss, input.len(), g))
    }
}

/// Loads the encoder from an MLM checkpoint; the decoder is drawn from `seed`.
pub fn init_seq2seq(ckpt: &Path, dec_config: DecoderConfig, seed_value: u64) -> Result<(Seq2SeqModel, Vocab)> {
    let (mlm_model, vocab) = mlm::load_checkpoint(ckpt)?;
    Ok((Seq2SeqModel::from_mlm(&mlm_model, dec_config, seed_value)?, vocab))
}

/// Teacher-forced cross-entropy on reference 0 of each pair; every
/// parameter is trained.
pub fn finetune(model: &mut Seq2SeqModel, vocab: &Vocab, pairs: &[ParallelPair], tc: &TrainConfig) -> Result<LossTrace> {
    if pairs.is_empty() {
        return Err(Error::usage("no training pairs"));
    }
    let mut examples: Vec<Example> = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let reference = pair
            .references
            .first()
            .ok_or_else(|| Error::usage(format!("pair {i} has no reference")))?;
        examples.push((
            model.encode_source(vocab, &pair.source.tokens),
            model.encode_target(vocab, &reference.tokens),
        ));
    }
    let arch = model.arch.clone();
    optim::fit(
        &mut model.params,
        &tc.fit_config(),
        |_| Ok(Cow::Borrowed(&examples[..])),
        |p, ex| arch.grad(p, ex),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_output_len: usize,
    /// Hypotheses are compared by `log p / len^length_penalty`.
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 4,
            max_output_len: 64,
            length_penalty: 1.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::usage("beam_size must be at least 1"));
        }
        if self.max_output_len == 0 {
            return Err(Error::usage("max_output_len must be at least 1"));
        }
        if !self.length_penalty.is_finite() || self.length_penalty < 0.0 {
            return Err(Error::usage("length_penalty must be non-negative"));
        }
        Ok(())
    }
}

/// Generated token ids (without `[CLS]`, with a trailing `[SEP]` when
/// finished) and their summed log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub ids: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    pub fn score(&self, length_penalty: f64) -> f64 {
        self.log_prob / (self.ids.len().max(1) as f64).powf(length_penalty)
    }
}

fn banned(id: u32) -> bool {
    id == Vocab::PAD_ID || id == Vocab::MASK_ID || id == Vocab::CLS_ID
}

fn decode_limit(model: &Seq2SeqModel, dc: &DecodeConfig) -> usize {
    dc.max_output_len.min(model.arch.dec_config.max_len - 1)
}

/// Plain argmax decoding; ties go to the lower id.
pub fn greedy_ids(model: &Seq2SeqModel, vocab: &Vocab, source: &Sentence, dc: &DecodeConfig) -> Hypothesis {
    let src = model.encode_source(vocab, &source.tokens);
    let memory = model.memory(&src);
    let mask = padding_mask(&src);
    let mut prefix = vec![Vocab::CLS_ID];
    let mut log_prob = 0.0;
    for _ in 0..decode_limit(model, dc) {
        let lp = model.next_log_probs(&memory, &mask, &prefix);
        let mut best = None::<(u32, f64)>;
        for (id, &v) in lp.iter().enumerate() {
            let id = id as u32;
            if !banned(id) && best.is_none_or(|(_, b)| v > b) {
                best = Some((id, v));
            }
        }
        let (id, v) = best.expect("vocabulary has non-special entries");
        prefix.push(id);
        log_prob += v;
        if id == Vocab::SEP_ID {
            return Hypothesis {
                ids: prefix[1..].to_vec(),
                log_prob,
                finished: true,
            };
        }
    }
    Hypothesis {
        ids: prefix[1..].to_vec(),
        log_prob,
        finished: false,
    }
}

fn beam_at_width(
    model: &Seq2SeqModel,
    memory: &Array2<f64>,
    mask: &AttnMask,
    width: usize,
    limit: usize,
    penalty: f64,
) -> Hypothesis {
    let mut live = vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for _ in 0..limit {
        let mut next: Vec<Hypothesis> = Vec::new();
        for h in &live {
            let mut prefix = vec![Vocab::CLS_ID];
            prefix.extend(&h.ids);
            let lp = model.next_log_probs(memory, mask, &prefix);
            let mut order: Vec<u32> = (0..lp.len() as u32).filter(|&id| !banned(id)).collect();
            order.sort_by(|&a, &b| lp[b as usize].total_cmp(&lp[a as usize]).then(a.cmp(&b)));
            for &id in order.iter().take(width) {
                let mut ids = h.ids.clone();
                ids.push(id);
                next.push(Hypothesis {
                    ids,
                    log_prob: h.log_prob + lp[id as usize],
                    finished: id == Vocab::SEP_ID,
                });
            }
        }
        // Rank expansions by raw log-probability, as greedy search does.
        next.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then_with(|| a.ids.cmp(&b.ids)));
        next.truncate(width);
        live.clear();
        for h in next {
            if h.finished {
                done.push(h);
            } else {
                live.push(h);
            }
        }
        let best_done = done.iter().map(|h| h.score(penalty)).fold(f64::NEG_INFINITY, f64::max);
        // Log-probabilities only fall, so with no length penalty a live
        // hypothesis can no longer overtake a finished one.
        let live_bound = live.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        if live.is_empty() || (penalty == 0.0 && live_bound <= best_done) || done.len() >= width {
            break;
        }
    }
    let pick = |pool: &[Hypothesis]| {
        pool.iter()
            .max_by(|a, b| a.score(penalty).total_cmp(&b.score(penalty)).then_with(|| b.ids.cmp(&a.ids)))
            .cloned()
    };
    pick(&done).or_else(|| pick(&live)).unwrap_or(Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        finished: false,
    })
}

/// Beam search. The result is the best-scoring hypothesis found with any
/// width up to `beam_size`, so a wider beam never returns a worse score and
/// width 1 is greedy decoding.
pub fn decode_ids(model: &Seq2SeqModel, vocab: &Vocab, source: &Sentence, dc: &DecodeConfig) -> Result<Hypothesis> {
    dc.validate()?;
    let src = model.encode_source(vocab, &source.tokens);
    let memory = model.memory(&src);
    let mask = padding_mask(&src);
    let limit = decode_limit(model, dc);
    let mut best: Option<Hypothesis> = None;
    for width in 1..=dc.beam_size {
        let h = beam_at_width(model, &memory, &mask, width, limit, dc.length_penalty);
        let better = match &best {
            None => true,
            Some(b) => (h.finished && !b.finished) || (h.finished == b.finished && h.score(dc.length_penalty) > b.score(dc.length_penalty)),
        };
        if better {
            best = Some(h);
        }
    }
    Ok(best.expect("beam_size is at least 1"))
}

pub fn ids_to_sentence(vocab: &Vocab, ids: &[u32]) -> Sentence {
    Sentence::new(
        ids.iter()
            .take_while(|&&id| id != Vocab::SEP_ID)
            .map(|&id| vocab.token(id).to_string())
            .collect(),
    )
}

pub fn decode(model: &Seq2SeqModel, vocab: &Vocab, source: &Sentence, dc: &DecodeConfig) -> Result<Sentence> {
    Ok(ids_to_sentence(vocab, &decode_ids(model, vocab, source, dc)?.ids))
}

pub const KIND_SEQ2SEQ: &str = "seq2seq";

pub fn save_seq2seq(model: &Seq2SeqModel, vocab: &Vocab, path: &Path) -> Result<()> {
    let mut header = BTreeMap::new();
    header.insert("kind".to_string(), KIND_SEQ2SEQ.to_string());
    model.encoder_config().to_header("encoder.", &mut header);
    model.decoder_config().to_header(&mut header);
    checkpoint::write(
        path,
        &Container {
            header,
            vocab: vocab.tokens().to_vec(),
            params: model.params.clone(),
        },
    )
}

pub fn load_seq2seq(path: &Path) -> Result<(Seq2SeqModel, Vocab)> {
    let c = checkpoint::read(path)?;
    let kind = c.header_value("kind")?;
    if kind != KIND_SEQ2SEQ {
        return Err(Error::format(format!("expected a {KIND_SEQ2SEQ} checkpoint, found '{kind}'")));
    }
    let enc = ModelConfig::from_header(&c, "encoder.")?;
    let dec = DecoderConfig::from_header(&c)?;
    let vocab = Vocab::from_tokens(c.vocab.clone())?;
    let mut model = Seq2SeqModel::from_mlm(&MlmModel::new(enc)?, dec, 0)?;
    checkpoint::check_layout(&model.params, &c.params)?;
    model.params = c.params;
    Ok((model, vocab))
}
