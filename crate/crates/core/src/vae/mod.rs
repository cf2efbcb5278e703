//! β-VAE with explicit forward and backward passes.
//!
//! ```text
//! x ─ encoder ─> (mu, logvar) ─ z = mu + exp(logvar/2)·eps ─ decoder ─> x̂
//!
//! L = BCE(x, x̂) + β · KL(N(mu, σ²) || N(0, I))
//! ```
//!
//! Everything is `f64`. The expectation in the reconstruction term is estimated
//! from one reparameterized sample whose noise `eps` is supplied by the caller.

mod arch;
mod checkpoint;
mod layers;
mod train;

pub use arch::{Architecture, DEFAULT_HIDDEN, DEFAULT_LATENT_DIM};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use layers::{Activation, ChwShape, ConvGeometry, LayerKind, LayerSpec};
pub use train::{train, Optimizer, TrainConfig};

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::FrameTensor;
use layers::Stack;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logarithms.
pub const PROB_EPS: f64 = 1e-7;

/// Diagonal Gaussian `q(z|x)`; the variance is stored as its natural log.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mu: Vec<f64>, logvar: Vec<f64>) -> Result<Self> {
        if mu.len() != logvar.len() {
            return Err(Error::dim(mu.len(), logvar.len()));
        }
        Ok(GaussianPosterior { mu, logvar })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.logvar.iter().map(|lv| (0.5 * lv).exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

impl LossBreakdown {
    fn compose(reconstruction: f64, kl: f64, beta: f64) -> Self {
        LossBreakdown {
            total: reconstruction + beta * kl,
            reconstruction,
            kl,
        }
    }

    fn is_finite(&self) -> bool {
        self.total.is_finite() && self.reconstruction.is_finite() && self.kl.is_finite()
    }
}

/// Gradient of the loss with respect to the encoder and decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

/// Encoder (φ) and decoder (θ) parameters together with the topology they fill.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    arch: Architecture,
    encoder: Vec<f64>,
    decoder: Vec<f64>,
}

impl VaeParams {
    pub fn new(arch: Architecture, encoder: Vec<f64>, decoder: Vec<f64>) -> Result<Self> {
        if encoder.len() != arch.encoder_param_count() {
            return Err(Error::dim(arch.encoder_param_count(), encoder.len()));
        }
        if decoder.len() != arch.decoder_param_count() {
            return Err(Error::dim(arch.decoder_param_count(), decoder.len()));
        }
        if encoder.iter().chain(&decoder).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameter vector contains non-finite values".into()));
        }
        Ok(VaeParams { arch, encoder, decoder })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let encoder = vec![0.0; arch.encoder_param_count()];
        let decoder = vec![0.0; arch.decoder_param_count()];
        VaeParams { arch, encoder, decoder }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut fill = |layers: &[LayerSpec]| {
            let mut out = Vec::new();
            for l in layers {
                let (fi, fo) = l.init_fans();
                let bound = (6.0 / (fi + fo) as f64).sqrt();
                out.extend((0..l.weight_count()).map(|_| rng.random_range(-bound..=bound)));
                out.extend(std::iter::repeat_n(0.0, l.param_count() - l.weight_count()));
            }
            out
        };
        let encoder = fill(arch.encoder());
        let decoder = fill(arch.decoder());
        VaeParams { arch, encoder, decoder }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim()
    }

    pub fn encoder_params(&self) -> &[f64] {
        &self.encoder
    }

    pub fn decoder_params(&self) -> &[f64] {
        &self.decoder
    }

    fn check_input(&self, x: &FrameTensor) -> Result<()> {
        let want = self.arch.input_shape();
        if x.shape() != want {
            return Err(Error::InputShape {
                expected: want.to_string(),
                actual: x.shape().to_string(),
            });
        }
        Ok(())
    }

    fn split_posterior(&self, out: &[f64]) -> Result<GaussianPosterior> {
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("encoder produced non-finite output".into()));
        }
        let d = self.latent_dim();
        Ok(GaussianPosterior {
            mu: out[..d].to_vec(),
            logvar: out[d..].to_vec(),
        })
    }

    pub fn encode(&self, x: &FrameTensor) -> Result<GaussianPosterior> {
        self.check_input(x)?;
        let out = Stack::new(self.arch.encoder()).forward(&self.encoder, &x.to_chw());
        self.split_posterior(&out)
    }

    /// Decodes a latent vector. Output pixels are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn decode(&self, z: &[f64]) -> Result<FrameTensor> {
        if z.len() != self.latent_dim() {
            return Err(Error::dim(self.latent_dim(), z.len()));
        }
        let raw = Stack::new(self.arch.decoder()).forward(&self.decoder, z);
        if raw.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("decoder produced NaN".into()));
        }
        let px: Vec<f64> = raw.iter().map(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS)).collect();
        Ok(FrameTensor::from_chw(self.arch.input_shape(), &px))
    }

    /// Single-sample estimate of the β-VAE loss using noise `eps`.
    pub fn loss(&self, x: &FrameTensor, beta: f64, eps: &[f64]) -> Result<LossBreakdown> {
        let post = self.encode(x)?;
        let z = reparameterize(&post, eps)?;
        let xhat = self.decode(&z)?;
        let recon = reconstruction_loss(x, &xhat)?;
        let kl = kl_divergence(&post)?;
        Ok(LossBreakdown::compose(recon, kl, beta))
    }

    pub fn loss_gradient(&self, x: &FrameTensor, beta: f64, eps: &[f64]) -> Result<Gradient> {
        self.loss_and_gradient(x, beta, eps).map(|(_, g)| g)
    }

    /// Loss and its exact reverse-mode gradient.
    pub fn loss_and_gradient(&self, x: &FrameTensor, beta: f64, eps: &[f64]) -> Result<(LossBreakdown, Gradient)> {
        let mut grad = Gradient {
            encoder: vec![0.0; self.encoder.len()],
            decoder: vec![0.0; self.decoder.len()],
        };
        let loss = self.accumulate_gradient(x, beta, eps, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds this sample's gradient into `grad` and returns its loss.
    pub(crate) fn accumulate_gradient(
        &self,
        x: &FrameTensor,
        beta: f64,
        eps: &[f64],
        grad: &mut Gradient,
    ) -> Result<LossBreakdown> {
        self.check_input(x)?;
        let d = self.latent_dim();
        if eps.len() != d {
            return Err(Error::dim(d, eps.len()));
        }
        let enc = Stack::new(self.arch.encoder());
        let dec = Stack::new(self.arch.decoder());

        let enc_trace = enc.forward_trace(&self.encoder, &x.to_chw());
        let post = self.split_posterior(enc_trace.output())?;
        let sigma = post.std_dev();
        let z: Vec<f64> = (0..d).map(|j| post.mu[j] + sigma[j] * eps[j]).collect();

        let dec_trace = dec.forward_trace(&self.decoder, &z);
        let raw = dec_trace.output();
        let target = x.to_chw();

        let mut recon = 0.0;
        let mut grad_xhat = vec![0.0; raw.len()];
        for ((g, &r), &t) in grad_xhat.iter_mut().zip(raw).zip(&target) {
            let p = r.clamp(PROB_EPS, 1.0 - PROB_EPS);
            recon -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
            // d/dp of -[t ln p + (1-t) ln(1-p)]; zero where the clamp is active.
            if r > PROB_EPS && r < 1.0 - PROB_EPS {
                *g = (p - t) / (p * (1.0 - p));
            }
        }
        let kl = kl_divergence(&post)?;
        let loss = LossBreakdown::compose(recon, kl, beta);
        if !loss.is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }

        let grad_z = dec
            .backward(&self.decoder, &dec_trace, &grad_xhat, &mut grad.decoder, true)
            .expect("input gradient requested");

        let mut grad_out = vec![0.0; 2 * d];
        for j in 0..d {
            let var = post.logvar[j].exp();
            grad_out[j] = grad_z[j] + beta * post.mu[j];
            grad_out[d + j] = grad_z[j] * eps[j] * 0.5 * sigma[j] + beta * 0.5 * (var - 1.0);
        }
        enc.backward(&self.encoder, &enc_trace, &grad_out, &mut grad.encoder, false);
        Ok(loss)
    }
}

/// `z = mu + exp(logvar / 2) ⊙ eps`
pub fn reparameterize(post: &GaussianPosterior, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != post.dim() || post.logvar.len() != post.dim() {
        return Err(Error::dim(post.dim(), eps.len()));
    }
    Ok(post
        .mu
        .iter()
        .zip(&post.logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))`.
pub fn kl_divergence(post: &GaussianPosterior) -> Result<f64> {
    if post.mu.len() != post.logvar.len() {
        return Err(Error::dim(post.mu.len(), post.logvar.len()));
    }
    if post.mu.iter().chain(&post.logvar).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("posterior has non-finite entries".into()));
    }
    let kl = 0.5
        * post
            .mu
            .iter()
            .zip(&post.logvar)
            .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
            .sum::<f64>();
    // Each term is >= 0 analytically; rounding can leave a tiny negative.
    Ok(kl.max(0.0))
}

/// Summed Bernoulli negative log-likelihood of `x` under pixel probabilities `xhat`.
pub fn reconstruction_loss(x: &FrameTensor, xhat: &FrameTensor) -> Result<f64> {
    if x.shape() != xhat.shape() {
        return Err(Error::InputShape {
            expected: x.shape().to_string(),
            actual: xhat.shape().to_string(),
        });
    }
    Ok(x.pixels()
        .iter()
        .zip(xhat.pixels())
        .map(|(&t, &p)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(shape: Shape, v: &[f64]) -> FrameTensor {
        FrameTensor::new(shape, v.to_vec()).unwrap()
    }

    fn tiny_arch() -> Architecture {
        Architecture::mlp(Shape::new(2, 2, 1), 3, 2).unwrap()
    }

    #[test]
    fn zero_params_encode_to_standard_normal() {
        let p = VaeParams::zeros(tiny_arch());
        let post = p.encode(&frame(Shape::new(2, 2, 1), &[0.1, 0.9, 0.3, 0.0])).unwrap();
        assert_eq!(post.mu, vec![0.0, 0.0]);
        assert_eq!(post.logvar, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_params_decode_to_half() {
        let p = VaeParams::zeros(tiny_arch());
        let out = p.decode(&[3.0, -7.0]).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hand_set_affine_encoder() {
        let arch = Architecture::new(
            Shape::new(1, 2, 1),
            2,
            vec![LayerSpec::dense(2, 4, Activation::Identity)],
            vec![LayerSpec::dense(2, 2, Activation::Sigmoid)],
        )
        .unwrap();
        // rows for mu are the identity, rows for logvar are zero; biases zero
        let mut enc = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        enc.extend([0.0; 4]);
        let p = VaeParams::new(arch.clone(), enc, vec![0.0; arch.decoder_param_count()]).unwrap();
        let post = p.encode(&frame(Shape::new(1, 2, 1), &[0.5, 0.25])).unwrap();
        assert_eq!(post.mu, vec![0.5, 0.25]);
        assert_eq!(post.logvar, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_set_decoder_weight_ten() {
        let arch = Architecture::new(
            Shape::new(1, 1, 1),
            1,
            vec![LayerSpec::dense(1, 2, Activation::Identity)],
            vec![LayerSpec::dense(1, 1, Activation::Sigmoid)],
        )
        .unwrap();
        let p = VaeParams::new(arch, vec![0.0; 4], vec![10.0, 0.0]).unwrap();
        let px = p.decode(&[1.0]).unwrap().pixels()[0];
        assert!((px - 0.999_954_6).abs() < 1e-7, "{px}");
    }

    #[test]
    fn encode_rejects_wrong_shape_and_decode_wrong_length() {
        let p = VaeParams::zeros(tiny_arch());
        assert!(matches!(
            p.encode(&FrameTensor::zeros(Shape::new(3, 3, 1))),
            Err(Error::InputShape { .. })
        ));
        assert!(matches!(p.decode(&[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reparameterize_examples() {
        let post = GaussianPosterior::new(vec![2.0, -1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(reparameterize(&post, &[0.0, 0.0]).unwrap(), vec![2.0, -1.0]);
        let post = GaussianPosterior::new(vec![2.0, -1.0], vec![4f64.ln(), 0.0]).unwrap();
        let z = reparameterize(&post, &[1.0, 1.0]).unwrap();
        assert!((z[0] - 4.0).abs() < 1e-12 && z[1] == 0.0);
        let post = GaussianPosterior::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(reparameterize(&post, &[0.3, -1.2, 2.0]).unwrap(), vec![0.3, -1.2, 2.0]);
        assert!(reparameterize(&post, &[0.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        let kl = |mu: Vec<f64>, lv: Vec<f64>| kl_divergence(&GaussianPosterior::new(mu, lv).unwrap()).unwrap();
        assert_eq!(kl(vec![0.0, 0.0], vec![0.0, 0.0]), 0.0);
        assert!((kl(vec![1.0], vec![0.0]) - 0.5).abs() < 1e-15);
        assert!((kl(vec![0.0], vec![4f64.ln()]) - 0.806_852_8).abs() < 1e-7);
        let bad = GaussianPosterior::new(vec![f64::NAN], vec![0.0]).unwrap();
        assert!(matches!(kl_divergence(&bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn reconstruction_examples() {
        let one = Shape::new(1, 1, 1);
        let r = reconstruction_loss(&frame(one, &[1.0]), &frame(one, &[0.5])).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-7);
        let r = reconstruction_loss(&frame(one, &[0.5]), &frame(one, &[0.5])).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-15);
        let four = Shape::new(2, 2, 1);
        let r = reconstruction_loss(&frame(four, &[0.0; 4]), &frame(four, &[0.1; 4])).unwrap();
        assert!((r - 0.421_442_0).abs() < 1e-7, "{r}");
        // clamping keeps the loss finite
        let r = reconstruction_loss(&frame(one, &[1.0]), &frame(one, &[0.0])).unwrap();
        assert!(r.is_finite());
        assert!(reconstruction_loss(&frame(one, &[1.0]), &frame(four, &[0.1; 4])).is_err());
    }

    #[test]
    fn loss_composition_and_beta_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = VaeParams::init(tiny_arch(), &mut rng);
        let x = frame(Shape::new(2, 2, 1), &[0.2, 0.8, 0.0, 1.0]);
        let eps = [0.4, -0.9];
        let l0 = p.loss(&x, 0.0, &eps).unwrap();
        let l1 = p.loss(&x, 1.0, &eps).unwrap();
        let l4 = p.loss(&x, 4.0, &eps).unwrap();
        assert_eq!(l0.total, l0.reconstruction);
        assert!(((l4.total - l1.total) - 3.0 * l1.kl).abs() < 1e-12);
        assert_eq!(l1.reconstruction, l4.reconstruction);

        let zp = VaeParams::zeros(Architecture::mlp(Shape::new(1, 1, 1), 2, 1).unwrap());
        let l = zp.loss(&frame(Shape::new(1, 1, 1), &[0.5]), 4.0, &[1.3]).unwrap();
        assert!((l.reconstruction - 2f64.ln()).abs() < 1e-15);
        assert_eq!(l.kl, 0.0);
        assert!((l.total - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_gradient_vanishes_at_prior() {
        // With a zero decoder the reconstruction term does not depend on z,
        // so the only mu/logvar gradient comes from KL: beta*mu and beta/2*(exp(lv)-1).
        let arch = Architecture::new(
            Shape::new(1, 1, 1),
            1,
            vec![LayerSpec::dense(1, 2, Activation::Identity)],
            vec![LayerSpec::dense(1, 1, Activation::Sigmoid)],
        )
        .unwrap();
        let x = frame(Shape::new(1, 1, 1), &[1.0]);
        // encoder bias sets mu = 0, logvar = 0
        let p = VaeParams::new(arch.clone(), vec![0.0; 4], vec![0.0, 0.0]).unwrap();
        let g = p.loss_gradient(&x, 4.0, &[0.7]).unwrap();
        // bias gradients of mu and logvar outputs
        assert_eq!(g.encoder[2], 0.0);
        assert_eq!(g.encoder[3], 0.0);

        // mu = 0.5 via bias: d(beta*KL)/dmu = beta*mu = 2
        let p = VaeParams::new(arch, vec![0.0, 0.0, 0.5, 0.0], vec![0.0, 0.0]).unwrap();
        let g = p.loss_gradient(&x, 4.0, &[0.7]).unwrap();
        assert!((g.encoder[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn decode_output_strictly_inside_unit_interval() {
        let arch = Architecture::new(
            Shape::new(1, 2, 1),
            1,
            vec![LayerSpec::dense(2, 2, Activation::Identity)],
            vec![LayerSpec::dense(1, 2, Activation::Sigmoid)],
        )
        .unwrap();
        let p = VaeParams::new(arch, vec![0.0; 6], vec![1000.0, -1000.0, 0.0, 0.0]).unwrap();
        let out = p.decode(&[1.0]).unwrap();
        assert!(out.pixels().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
