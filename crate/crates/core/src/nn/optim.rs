//! Adam and the shared mini-batch training loop.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::ParamSet;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Parameters are rounded to `f32` after every
/// update so they stay exactly representable in checkpoints.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: ParamSet,
    v: ParamSet,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamSet, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grad: &ParamSet) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] = (p.data[i] - c.learning_rate * mhat / (vhat.sqrt() + c.eps)) as f32 as f64;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Reshuffle example order every epoch (seeded).
    pub shuffle: bool,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.grad_accum == 0 {
            return Err(Error::usage("batch_size and grad_accum must be positive"));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::usage("invalid Adam hyperparameters"));
        }
        Ok(())
    }
}

/// Per-optimizer-step mean losses and per-epoch mean losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossTrace {
    pub steps: Vec<f64>,
    pub epoch_means: Vec<f64>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.steps.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Output of a per-example gradient computation: summed loss, number of
/// scored targets, gradient of the summed loss.
pub type ExampleGrad = (f64, usize, ParamSet);

/// Mini-batch training with gradient accumulation.
///
/// Each optimizer step consumes `grad_accum` micro-batches of `batch_size`
/// examples. The accumulated gradient is divided by the total number of
/// scored targets in the step, so the update does not depend on how the
/// step is split into micro-batches.
pub fn fit<'a, E, S, G>(params: &mut ParamSet, cfg: &FitConfig, mut examples_for_epoch: S, grad: G) -> Result<LossTrace>
where
    E: Sync + Clone + 'a,
    S: FnMut(usize) -> Result<Cow<'a, [E]>>,
    G: Fn(&ParamSet, &E) -> Result<ExampleGrad> + Sync,
{
    cfg.validate()?;
    let mut adam = Adam::new(params, cfg.adam);
    let mut trace = LossTrace::default();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let examples = examples_for_epoch(epoch)?;
        if examples.is_empty() {
            return Err(Error::usage("no training examples"));
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        if cfg.shuffle {
            order.shuffle(&mut seed::rng(seed::derive_indexed(cfg.seed, "shuffle", epoch as u64)));
        }
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for window in order.chunks(cfg.batch_size * cfg.grad_accum) {
            let mut acc = params.zeros_like();
            let mut loss_sum = 0.0;
            let mut count = 0usize;
            for micro in window.chunks(cfg.batch_size) {
                let shared: &ParamSet = params;
                let results: Vec<Result<ExampleGrad>> =
                    micro.par_iter().map(|&i| grad(shared, &examples[i])).collect();
                let mut micro_grad = params.zeros_like();
                for r in results {
                    let (l, c, g) = r?;
                    loss_sum += l;
                    count += c;
                    micro_grad.add_assign(&g);
                }
                acc.add_assign(&micro_grad);
            }
            if count == 0 {
                continue;
            }
            step += 1;
            let mean = loss_sum / count as f64;
            if !mean.is_finite() {
                return Err(Error::Numeric {
                    step,
                    message: format!("loss is {mean} in epoch {}", epoch + 1),
                });
            }
            acc.scale(1.0 / count as f64);
            adam.step(params, &acc);
            if !params.is_finite() {
                return Err(Error::Numeric {
                    step,
                    message: "non-finite parameters after update".into(),
                });
            }
            trace.steps.push(mean);
            epoch_loss += loss_sum;
            epoch_count += count;
        }
        let epoch_mean = if epoch_count > 0 {
            epoch_loss / epoch_count as f64
        } else {
            f64::NAN
        };
        log::debug!("epoch {} mean loss {:.5}", epoch + 1, epoch_mean);
        trace.epoch_means.push(epoch_mean);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Least squares on a single weight: loss = (w x - y)^2 per example.
    fn quadratic(p: &ParamSet, ex: &(f64, f64)) -> Result<ExampleGrad> {
        let w = p.tensor(0).data[0];
        let r = w * ex.0 - ex.1;
        let mut g = p.zeros_like();
        g.tensors_mut()[0].data[0] = 2.0 * r * ex.0;
        Ok((r * r, 1, g))
    }

    fn params() -> ParamSet {
        let mut p = ParamSet::default();
        p.push("w", vec![1], vec![0.0]);
        p
    }

    fn cfg(epochs: usize) -> FitConfig {
        FitConfig {
            epochs,
            batch_size: 2,
            grad_accum: 1,
            adam: AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            seed: 1,
            shuffle: true,
        }
    }

    #[test]
    fn converges_on_linear_fit() {
        let data: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, 3.0 * i as f64)).collect();
        let mut p = params();
        let trace = fit(&mut p, &cfg(200), |_| Ok(Cow::Borrowed(&data[..])), quadratic).unwrap();
        assert!((p.tensor(0).data[0] - 3.0).abs() < 1e-2);
        assert!(trace.epoch_means.last().unwrap() < &trace.epoch_means[0]);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = [(1.0, 1.0)];
        let mut p = params();
        let before = p.clone();
        fit(&mut p, &cfg(0), |_| Ok(Cow::Borrowed(&data[..])), quadratic).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_loss_names_step() {
        let data = [(f64::INFINITY, 1.0)];
        let mut p = params();
        let err = fit(&mut p, &cfg(1), |_| Ok(Cow::Borrowed(&data[..])), quadratic).unwrap_err();
        assert!(matches!(err, Error::Numeric { step: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_zero_batch() {
        let mut c = cfg(1);
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
