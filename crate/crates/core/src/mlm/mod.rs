//! Bidirectional transformer encoder with a masked-language-model head.
//!
//! The probability of the original token at a masked position `l` is
//! `softmax(W h_l + b)`, where `h_l` is the encoder output at `l` and the
//! rows of `W` (`vocab_size x d_model`) are the output word vectors.

mod vocab;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

pub use vocab::{Vocab, CLS, MASK, PAD, SEP, SPECIALS, UNK};

use crate::checkpoint::{self, Container};
use crate::masking::MaskedInstance;
use crate::nn::optim::{self, AdamConfig, ExampleGrad, FitConfig, LossTrace};
use crate::nn::transformer::{EncoderStack, StackDims};
use crate::nn::{log_softmax_at, softmax_in_place, AttnMask, Linear, ParamBuilder, ParamSet};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Standard deviation of the truncated-normal weight initialization.
    pub init_std: f64,
}

impl ModelConfig {
    pub fn tiny(vocab_size: usize) -> Self {
        ModelConfig {
            num_layers: 2,
            num_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_seq_len: 64,
            vocab_size,
            seed: 0,
            init_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::usage(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.max_seq_len < 8 {
            return Err(Error::usage(format!("max_seq_len {} is below 8", self.max_seq_len)));
        }
        if self.num_layers == 0 || self.d_ff == 0 {
            return Err(Error::usage("num_layers and d_ff must be positive"));
        }
        if self.vocab_size <= Vocab::NUM_SPECIAL {
            return Err(Error::usage(format!("vocab_size {} leaves no word entries", self.vocab_size)));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::usage("init_std must be positive"));
        }
        Ok(())
    }

    pub fn dims(&self) -> StackDims {
        StackDims {
            vocab_size: self.vocab_size,
            d_model: self.d_model,
            num_heads: self.num_heads,
            d_ff: self.d_ff,
            num_layers: self.num_layers,
            max_len: self.max_seq_len,
            init_std: self.init_std,
        }
    }

    pub fn to_header(&self, prefix: &str, header: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: String| {
            header.insert(format!("{prefix}{k}"), v);
        };
        put("num_layers", self.num_layers.to_string());
        put("num_heads", self.num_heads.to_string());
        put("d_model", self.d_model.to_string());
        put("d_ff", self.d_ff.to_string());
        put("max_seq_len", self.max_seq_len.to_string());
        put("vocab_size", self.vocab_size.to_string());
        put("seed", self.seed.to_string());
        put("init_std", format!("{:e}", self.init_std));
    }

    pub fn from_header(c: &Container, prefix: &str) -> Result<Self> {
        let k = |name: &str| format!("{prefix}{name}");
        Ok(ModelConfig {
            num_layers: c.header_parse(&k("num_layers"))?,
            num_heads: c.header_parse(&k("num_heads"))?,
            d_model: c.header_parse(&k("d_model"))?,
            d_ff: c.header_parse(&k("d_ff"))?,
            max_seq_len: c.header_parse(&k("max_seq_len"))?,
            vocab_size: c.header_parse(&k("vocab_size"))?,
            seed: c.header_parse(&k("seed"))?,
            init_std: c.header_parse(&k("init_std"))?,
        })
    }
}

/// Model structure: tensor indices into a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct MlmArch {
    pub config: ModelConfig,
    pub encoder: EncoderStack,
    pub head: Linear,
}

impl MlmArch {
    pub fn build(config: &ModelConfig, pb: &mut ParamBuilder<'_>) -> Self {
        let dims = config.dims();
        let encoder = EncoderStack::new(pb, "encoder", &dims);
        let head = Linear::new(pb, "mlm_head", config.d_model, config.vocab_size, config.init_std);
        MlmArch {
            config: *config,
            encoder,
            head,
        }
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() || ids.len() > self.config.max_seq_len {
            return Err(Error::usage(format!(
                "sequence length {} outside 1..={}",
                ids.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::usage(format!(
                "token id {bad} out of range for vocab size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Final encoder states for `ids`. `[PAD]` keys are excluded from attention.
    pub fn hidden(&self, p: &ParamSet, ids: &[u32]) -> Result<Array2<f64>> {
        self.check_ids(ids)?;
        Ok(self.encoder.forward(p, ids, &padding_mask(ids)).0)
    }

    pub fn logits_at(&self, p: &ParamSet, hidden: &Array2<f64>, pos: usize) -> Vec<f64> {
        let h = hidden.row(pos);
        let w = p.mat(self.head.w);
        let b = p.vec(self.head.b);
        (w.dot(&h) + b).to_vec()
    }

    /// Summed negative log-likelihood of the targets, their count, and the
    /// gradient of the summed loss.
    pub fn instance_grad(&self, p: &ParamSet, inst: &MaskedInstance) -> Result<ExampleGrad> {
        let ids = inst.ids();
        self.check_ids(ids)?;
        let (hidden, cache) = self.encoder.forward(p, ids, &padding_mask(ids));
        let mut g = p.zeros_like();
        let rows: Vec<usize> = inst.mask_positions.clone();
        let selected = hidden.select(ndarray::Axis(0), &rows);
        let logits = self.head.forward(p, &selected);
        let mut dlogits = logits.clone();
        let mut loss = 0.0;
        for (r, &target) in inst.targets.iter().enumerate() {
            let row = logits.row(r).to_vec();
            loss -= log_softmax_at(&row, target as usize);
            let mut probs = row;
            softmax_in_place(&mut probs);
            probs[target as usize] -= 1.0;
            dlogits.row_mut(r).assign(&ndarray::ArrayView1::from(&probs[..]));
        }
        let dsel = self.head.backward(p, &mut g, &selected, &dlogits);
        let mut dhidden = Array2::zeros(hidden.raw_dim());
        for (r, &pos) in rows.iter().enumerate() {
            let mut row = dhidden.row_mut(pos);
            row += &dsel.row(r);
        }
        self.encoder.backward(p, &mut g, &cache, dhidden);
        Ok((loss, inst.targets.len(), g))
    }
}

pub(crate) fn padding_mask(ids: &[u32]) -> AttnMask {
    if ids.contains(&Vocab::PAD_ID) {
        AttnMask {
            causal: false,
            key_valid: Some(ids.iter().map(|&id| id != Vocab::PAD_ID).collect()),
        }
    } else {
        AttnMask::default()
    }
}

#[derive(Debug, Clone)]
pub struct MlmModel {
    pub arch: MlmArch,
    pub params: ParamSet,
}

impl MlmModel {
    /// Fresh model; weights drawn from the config seed.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(config.seed, "init"));
        let mut pb = ParamBuilder::new(&mut rng);
        let arch = MlmArch::build(&config, &mut pb);
        Ok(MlmModel {
            arch,
            params: pb.finish(),
        })
    }

    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut model = MlmModel::new(config)?;
        checkpoint::check_layout(&model.params, &params)?;
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn hidden(&self, ids: &[u32]) -> Result<Array2<f64>> {
        self.arch.hidden(&self.params, ids)
    }

    /// Distribution over the vocabulary at `pos` of `ids`.
    pub fn distribution_at(&self, ids: &[u32], pos: usize) -> Result<Vec<f64>> {
        let hidden = self.hidden(ids)?;
        if pos >= ids.len() {
            return Err(Error::usage(format!("position {pos} outside sequence of {}", ids.len())));
        }
        let mut d = self.arch.logits_at(&self.params, &hidden, pos);
        softmax_in_place(&mut d);
        Ok(d)
    }

    /// One distribution per masked position of `inst`.
    pub fn forward_mlm(&self, inst: &MaskedInstance) -> Result<Vec<Vec<f64>>> {
        let hidden = self.hidden(inst.ids())?;
        Ok(inst
            .mask_positions
            .iter()
            .map(|&pos| {
                let mut d = self.arch.logits_at(&self.params, &hidden, pos);
                softmax_in_place(&mut d);
                d
            })
            .collect())
    }

    /// Mean negative log-probability of the targets over all masked positions.
    pub fn mlm_loss(&self, batch: &[MaskedInstance]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for inst in batch {
            let hidden = self.hidden(inst.ids())?;
            for (&pos, &t) in inst.mask_positions.iter().zip(&inst.targets) {
                total -= log_softmax_at(&self.arch.logits_at(&self.params, &hidden, pos), t as usize);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::usage("batch has no masked positions"));
        }
        Ok(total / count as f64)
    }

    pub fn loss_and_grad(&self, batch: &[MaskedInstance]) -> Result<(f64, ParamSet)> {
        let mut g = self.params.zeros_like();
        let mut total = 0.0;
        let mut count = 0;
        for inst in batch {
            let (l, c, gi) = self.arch.instance_grad(&self.params, inst)?;
            total += l;
            count += c;
            g.add_assign(&gi);
        }
        if count == 0 {
            return Err(Error::usage("batch has no masked positions"));
        }
        g.scale(1.0 / count as f64);
        Ok((total / count as f64, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub learning_rate: f64,
    pub adam_eps: f64,
    pub adam_betas: (f64, f64),
    pub max_seq_len: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 4,
            grad_accum: 4,
            learning_rate: 5e-5,
            adam_eps: 1e-8,
            adam_betas: (0.9, 0.999),
            max_seq_len: 256,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.grad_accum
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            grad_accum: self.grad_accum,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.adam_betas.0,
                beta2: self.adam_betas.1,
                eps: self.adam_eps,
            },
            seed: seed::derive(self.seed, "train"),
            shuffle: self.shuffle,
        }
    }
}

/// Trains on a fixed instance list.
pub fn train(model: &mut MlmModel, instances: &[MaskedInstance], tc: &TrainConfig) -> Result<LossTrace> {
    if instances.is_empty() && tc.epochs > 0 {
        return Err(Error::usage("no training instances"));
    }
    train_dynamic(model, tc, |_| Ok(Cow::Borrowed(instances)))
}

/// Trains with instances produced per epoch (e.g. masks re-drawn each epoch).
pub fn train_dynamic<'a, S>(model: &mut MlmModel, tc: &TrainConfig, instances_for_epoch: S) -> Result<LossTrace>
where
    S: FnMut(usize) -> Result<Cow<'a, [MaskedInstance]>>,
{
    let arch = model.arch.clone();
    optim::fit(&mut model.params, &tc.fit_config(), instances_for_epoch, |p, inst| {
        arch.instance_grad(p, inst)
    })
}

pub const KIND_MLM: &str = "mlm";

pub fn save_checkpoint(model: &MlmModel, vocab: &Vocab, path: &Path) -> Result<()> {
    checkpoint::write(path, &to_container(model, vocab))
}

pub fn to_container(model: &MlmModel, vocab: &Vocab) -> Container {
    let mut header = BTreeMap::new();
    header.insert("kind".to_string(), KIND_MLM.to_string());
    model.config().to_header("", &mut header);
    Container {
        header,
        vocab: vocab.tokens().to_vec(),
        params: model.params.clone(),
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(MlmModel, Vocab)> {
    from_container(&checkpoint::read(path)?)
}

pub fn from_container(c: &Container) -> Result<(MlmModel, Vocab)> {
    let kind = c.header_value("kind")?;
    if kind != KIND_MLM {
        return Err(Error::format(format!("expected an {KIND_MLM} checkpoint, found '{kind}'")));
    }
    let config = ModelConfig::from_header(c, "")?;
    let vocab = Vocab::from_tokens(c.vocab.clone())?;
    if vocab.len() != config.vocab_size {
        return Err(Error::format(format!(
            "checkpoint vocabulary has {} entries but vocab_size is {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    Ok((MlmModel::from_params(config, c.params.clone())?, vocab))
}

/// Loads a checkpoint and requires its config to equal `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<(MlmModel, Vocab)> {
    let (model, vocab) = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(Error::format(format!(
            "checkpoint config {:?} does not match expected config {:?}",
            model.config(),
            expected
        )));
    }
    Ok((model, vocab))
}
