use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Architecture, Gradient, LossBreakdown, VaeParams};
use crate::error::{Error, Result};
use crate::frame::FrameTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// KL weight; values above 1 favour disentangled latents.
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 4.0,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            rng_seed: 42,
            optimizer: Optimizer::adam(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(m.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite non-negative number");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon.is_nan() || epsilon <= 0.0 {
                return bad("Adam moments must lie in [0, 1) and epsilon must be positive");
            }
        }
        Ok(())
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        let moments = if matches!(kind, Optimizer::Adam { .. }) { n } else { 0 };
        OptimizerState {
            kind,
            lr,
            step: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        }
    }

    /// Applies one update. Parameters and gradients are visited encoder first.
    fn apply(&mut self, params: [&mut [f64]; 2], grads: [&[f64]; 2]) {
        self.step += 1;
        let params = params.into_iter().flat_map(|p| p.iter_mut());
        let grads = grads.into_iter().flat_map(|g| g.iter());
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                }
            }
        }
    }
}

/// Trains a fresh model with minibatch gradient descent.
///
/// Initialization, shuffling and reparameterization noise all come from one
/// generator seeded with `config.rng_seed`, so the result is bit-reproducible.
/// Returns the trained parameters and the per-epoch mean loss.
pub fn train(
    dataset: &[FrameTensor],
    arch: Architecture,
    config: &TrainConfig,
) -> Result<(VaeParams, Vec<LossBreakdown>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let shape = arch.input_shape();
    if let Some(f) = dataset.iter().find(|f| f.shape() != shape) {
        return Err(Error::InputShape {
            expected: shape.to_string(),
            actual: f.shape().to_string(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut params = VaeParams::init(arch, &mut rng);
    let d = params.latent_dim();
    let mut opt = OptimizerState::new(
        config.optimizer,
        config.learning_rate,
        params.encoder.len() + params.decoder.len(),
    );
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut grad = Gradient {
        encoder: vec![0.0; params.encoder.len()],
        decoder: vec![0.0; params.decoder.len()],
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut recon_sum, mut kl_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            grad.encoder.fill(0.0);
            grad.decoder.fill(0.0);
            for &i in batch {
                let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let loss = params
                    .accumulate_gradient(&dataset[i], config.beta, &eps, &mut grad)
                    .map_err(|e| match e {
                        Error::Numeric(_) => Error::TrainingDiverged { epoch },
                        other => other,
                    })?;
                recon_sum += loss.reconstruction;
                kl_sum += loss.kl;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.encoder.iter_mut().chain(&mut grad.decoder).for_each(|g| *g *= scale);
            opt.apply(
                [&mut params.encoder, &mut params.decoder],
                [&grad.encoder, &grad.decoder],
            );
        }
        let n = dataset.len() as f64;
        let mean = LossBreakdown::compose(recon_sum / n, kl_sum / n, config.beta);
        if !mean.is_finite() || params.encoder.iter().chain(&params.decoder).any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        log::debug!(
            "epoch {epoch}: total {:.4} (recon {:.4}, kl {:.4})",
            mean.total,
            mean.reconstruction,
            mean.kl
        );
        history.push(mean);
    }
    Ok((params, history))
}
