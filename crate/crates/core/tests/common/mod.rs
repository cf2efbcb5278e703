//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance harness. Nothing here calls the library routine it checks.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use trajmap_core::latent::{synth_moving_dot, write_dataset, LatentTrajectory, LoadOptions};
use trajmap_core::pipeline::{AbstractOptions, ModelSource, PipelineConfig};
use trajmap_core::vae::{
    Activation, Architecture, ChwShape, ConvGeometry, GaussianPosterior, Gradient, LayerSpec, TrainConfig,
    VaeParams,
};
use trajmap_core::{FrameTensor, Shape};

pub const FD_STEP: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-8;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Central finite differences of the total loss with respect to every parameter.
pub fn fd_gradient(p: &VaeParams, x: &FrameTensor, beta: f64, eps: &[f64]) -> Gradient {
    let total = |enc: &[f64], dec: &[f64]| {
        let q = VaeParams::new(p.arch().clone(), enc.to_vec(), dec.to_vec()).unwrap();
        q.loss(x, beta, eps).unwrap().total
    };
    let mut enc = p.encoder_params().to_vec();
    let mut dec = p.decoder_params().to_vec();
    let mut g_enc = vec![0.0; enc.len()];
    for i in 0..enc.len() {
        let v = enc[i];
        enc[i] = v + FD_STEP;
        let up = total(&enc, &dec);
        enc[i] = v - FD_STEP;
        let down = total(&enc, &dec);
        enc[i] = v;
        g_enc[i] = (up - down) / (2.0 * FD_STEP);
    }
    let mut g_dec = vec![0.0; dec.len()];
    for i in 0..dec.len() {
        let v = dec[i];
        dec[i] = v + FD_STEP;
        let up = total(&enc, &dec);
        dec[i] = v - FD_STEP;
        let down = total(&enc, &dec);
        dec[i] = v;
        g_dec[i] = (up - down) / (2.0 * FD_STEP);
    }
    Gradient {
        encoder: g_enc,
        decoder: g_dec,
    }
}

/// Largest relative error between analytic and finite-difference gradients.
pub fn max_gradient_error(p: &VaeParams, x: &FrameTensor, beta: f64, eps: &[f64]) -> f64 {
    let analytic = p.loss_gradient(x, beta, eps).unwrap();
    let numeric = fd_gradient(p, x, beta, eps);
    analytic
        .encoder
        .iter()
        .zip(&numeric.encoder)
        .chain(analytic.decoder.iter().zip(&numeric.decoder))
        .map(|(a, n)| rel_error(*a, *n))
        .fold(0.0, f64::max)
}

/// A tiny smooth network (input at most 16 pixels, latent at most 4) with a
/// random input, beta and noise. Every third case uses convolutions.
pub struct GradCase {
    pub params: VaeParams,
    pub x: FrameTensor,
    pub beta: f64,
    pub eps: Vec<f64>,
}

pub fn tiny_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = rng.random_range(1..=4);
    let arch = if seed % 3 == 2 {
        // 1x4x4 -> conv(2ch, k2 s2) -> 2x2x2 -> dense -> 2d ; d -> dense 8 -> deconv -> 1x4x4
        let g = ConvGeometry {
            input: ChwShape::new(1, 4, 4),
            out_channels: 2,
            kernel: 2,
            stride: 2,
            padding: 0,
        };
        let up = ConvGeometry {
            input: ChwShape::new(2, 2, 2),
            out_channels: 1,
            kernel: 2,
            stride: 2,
            padding: 0,
        };
        Architecture::new(
            Shape::new(4, 4, 1),
            latent,
            vec![
                LayerSpec::conv(g, Activation::Tanh),
                LayerSpec::dense(8, 2 * latent, Activation::Identity),
            ],
            vec![
                LayerSpec::dense(latent, 8, Activation::Tanh),
                LayerSpec::deconv(up, Activation::Sigmoid),
            ],
        )
        .unwrap()
    } else {
        let h = rng.random_range(1..=4);
        let w = rng.random_range(1..=16 / h);
        let n = h * w;
        let hidden = rng.random_range(2..=5);
        Architecture::new(
            Shape::new(h, w, 1),
            latent,
            vec![
                LayerSpec::dense(n, hidden, Activation::Tanh),
                LayerSpec::dense(hidden, 2 * latent, Activation::Identity),
            ],
            vec![
                LayerSpec::dense(latent, hidden, Activation::Tanh),
                LayerSpec::dense(hidden, n, Activation::Sigmoid),
            ],
        )
        .unwrap()
    };
    let shape = arch.input_shape();
    let params = VaeParams::init(arch, &mut rng);
    let x = FrameTensor::new(shape, (0..shape.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
    let eps = (0..latent).map(|_| rng.sample(StandardNormal)).collect();
    GradCase {
        params,
        x,
        beta: rng.random_range(0.5..8.0),
        eps,
    }
}

/// Monte-Carlo estimate of KL(q || N(0, I)) as the mean of log q(z) - log p(z), z ~ q.
pub fn kl_monte_carlo(post: &GaussianPosterior, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut sum = 0.0;
    for _ in 0..samples {
        let mut log_ratio = 0.0;
        for (m, lv) in post.mu.iter().zip(&post.logvar) {
            let s = (0.5 * lv).exp();
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = m + s * e;
            let log_q = -0.5 * (ln_2pi + lv + e * e);
            let log_p = -0.5 * (ln_2pi + z * z);
            log_ratio += log_q - log_p;
        }
        sum += log_ratio;
    }
    sum / samples as f64
}

/// Random posterior for the Monte-Carlo KL check. Means are drawn from
/// [-3, 3] so the KL is well away from zero, where a relative comparison of a
/// sampled estimate is meaningless.
pub fn random_posterior(seed: u64) -> GaussianPosterior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=4);
    let mu = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let lv = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    GaussianPosterior::new(mu, lv).unwrap()
}

/// Componentwise median via selection rather than a full sort.
pub fn median_oracle(members: &[Vec<f64>]) -> Vec<f64> {
    let n = members.len();
    (0..members[0].len())
        .map(|j| {
            let mut col: Vec<f64> = members.iter().map(|m| m[j]).collect();
            let upper = *col.select_nth_unstable_by(n / 2, |a, b| a.partial_cmp(b).unwrap()).1;
            if n % 2 == 1 {
                upper
            } else {
                let lower = col[..n / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                0.5 * (lower + upper)
            }
        })
        .collect()
}

/// Eigenvalues (descending) and unit eigenvectors of the sample covariance,
/// from nalgebra, with the first coordinate above 1e-12 in magnitude made positive.
pub fn pca_oracle(points: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = points.len();
    let d = points[0].len();
    let data = nalgebra::DMatrix::from_fn(n, d, |i, j| points[i][j]);
    let mean = data.row_mean();
    let centered = nalgebra::DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = idx
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().cloned().collect();
            if v.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0) {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    (values, vectors)
}

/// Random latent trajectory: a few Gaussian blobs visited in runs, plus scattered outliers.
pub fn random_trajectory(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> LatentTrajectory {
    let centers: Vec<Vec<f64>> = (0..rng.random_range(1..=4))
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let spread = rng.random_range(0.05..1.0);
    let mut current = 0;
    let zs = (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                current = rng.random_range(0..centers.len());
            }
            if rng.random_bool(0.1) {
                (0..dim).map(|_| rng.random_range(-8.0..8.0)).collect()
            } else {
                centers[current]
                    .iter()
                    .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        })
        .collect();
    LatentTrajectory::from_vectors("rand", zs)
}

pub fn rank2_in_8d(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..8).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let offset: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
    (0..20)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            (0..8).map(|j| offset[j] + a * basis[0][j] + b * basis[1][j]).collect()
        })
        .collect()
}

/// The planted three-plateau moving-dot episode used across tests.
pub const PLATEAU_SEED: u64 = 7;

pub fn plateau_training() -> TrainConfig {
    TrainConfig {
        beta: 4.0,
        learning_rate: 1e-3,
        epochs: 200,
        rng_seed: PLATEAU_SEED,
        ..TrainConfig::default()
    }
}

pub fn plateau_arch() -> Architecture {
    Architecture::mlp(Shape::new(16, 16, 1), 128, 4).unwrap()
}

/// Writes the planted episode(s) as a dataset under `dir` and returns a
/// config that trains on it and exports to `dir/out`.
pub fn plateau_config(dir: &Path, copies: usize) -> PipelineConfig {
    let ep = synth_moving_dot(300, 16, PLATEAU_SEED, 3).unwrap();
    let episodes: Vec<_> = (0..copies)
        .map(|i| {
            let mut e = ep.clone();
            e.episode_id = format!("plateau-{i}");
            e.agent_label = format!("agent-{i}");
            e
        })
        .collect();
    let manifest = write_dataset(&episodes, &dir.join("data")).unwrap();
    PipelineConfig {
        manifest,
        model: ModelSource::Train {
            arch: Some(plateau_arch()),
            config: plateau_training(),
            save_to: Some(dir.join("model.bvae")),
        },
        load: LoadOptions::default(),
        options: AbstractOptions {
            application: "moving-dot".into(),
            seed: PLATEAU_SEED,
            ..AbstractOptions::default()
        },
        out_dir: Some(dir.join("out")),
    }
}

pub fn read_dir_sorted(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect()
}

/// Expected P5 bytes for a decoded thumbnail, quantized independently.
pub fn expected_pgm(frame: &FrameTensor) -> Vec<u8> {
    assert_eq!(frame.channels(), 1);
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.pixels().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}
