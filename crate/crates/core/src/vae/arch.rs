use std::fmt;
use std::str::FromStr;

use super::layers::{Activation, ChwShape, ConvGeometry, LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::frame::Shape;

/// Network topology: input frame shape, latent size, encoder and decoder layers.
///
/// The encoder ends in `2 * latent_dim` outputs (means then log-variances); the
/// decoder maps `latent_dim` values to one value per input pixel and ends in a
/// sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    input: Shape,
    latent_dim: usize,
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
}

pub const DEFAULT_LATENT_DIM: usize = 32;
pub const DEFAULT_HIDDEN: usize = 128;

impl Architecture {
    pub fn new(
        input: Shape,
        latent_dim: usize,
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Input("latent_dim must be positive".into()));
        }
        if input.is_empty() {
            return Err(Error::Input(format!("input shape {input} has a zero dimension")));
        }
        if encoder.is_empty() || decoder.is_empty() {
            return Err(Error::Input("encoder and decoder need at least one layer".into()));
        }
        check_chain("encoder", &encoder, input.len(), 2 * latent_dim)?;
        check_chain("decoder", &decoder, latent_dim, input.len())?;
        if let LayerKind::Conv2d(g) = encoder[0].kind {
            let expect = ChwShape::new(input.channels, input.height, input.width);
            if g.input != expect {
                return Err(Error::Input(format!(
                    "first encoder convolution expects {}x{}x{} (CxHxW) for input {input}",
                    input.channels, input.height, input.width
                )));
            }
        }
        if decoder.last().unwrap().activation != Activation::Sigmoid {
            return Err(Error::Input("decoder must end in a sigmoid".into()));
        }
        Ok(Architecture {
            input,
            latent_dim,
            encoder,
            decoder,
        })
    }

    /// Desk-scale MLP: flattened input, one hidden ReLU layer each way.
    pub fn mlp(input: Shape, hidden: usize, latent_dim: usize) -> Result<Self> {
        let n = input.len();
        Self::new(
            input,
            latent_dim,
            vec![
                LayerSpec::dense(n, hidden, Activation::Relu),
                LayerSpec::dense(hidden, 2 * latent_dim, Activation::Identity),
            ],
            vec![
                LayerSpec::dense(latent_dim, hidden, Activation::Relu),
                LayerSpec::dense(hidden, n, Activation::Sigmoid),
            ],
        )
    }

    /// Small strided-convolution stack for 32x32 grayscale frames.
    pub fn conv32(latent_dim: usize) -> Result<Self> {
        let g = |c, side, oc| ConvGeometry {
            input: ChwShape::new(c, side, side),
            out_channels: oc,
            kernel: 4,
            stride: 2,
            padding: 1,
        };
        let flat = 16 * 8 * 8;
        Self::new(
            Shape::new(32, 32, 1),
            latent_dim,
            vec![
                LayerSpec::conv(g(1, 32, 8), Activation::Relu),
                LayerSpec::conv(g(8, 16, 16), Activation::Relu),
                LayerSpec::dense(flat, 2 * latent_dim, Activation::Identity),
            ],
            vec![
                LayerSpec::dense(latent_dim, flat, Activation::Relu),
                LayerSpec::deconv(g(16, 8, 8), Activation::Relu),
                LayerSpec::deconv(g(8, 16, 1), Activation::Sigmoid),
            ],
        )
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn encoder(&self) -> &[LayerSpec] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[LayerSpec] {
        &self.decoder
    }

    pub fn encoder_param_count(&self) -> usize {
        self.encoder.iter().map(LayerSpec::param_count).sum()
    }

    pub fn decoder_param_count(&self) -> usize {
        self.decoder.iter().map(LayerSpec::param_count).sum()
    }

    /// Layer description used in checkpoint headers:
    /// `<H>x<W>x<C>|<encoder layers>|<decoder layers>`, layers comma-separated.
    pub fn layers_descriptor(&self) -> String {
        let join = |ls: &[LayerSpec]| ls.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        format!("{}|{}|{}", self.input, join(&self.encoder), join(&self.decoder))
    }

    pub fn from_descriptor(latent_dim: usize, descriptor: &str) -> Result<Self> {
        let bad = || Error::Input(format!("malformed layer descriptor `{descriptor}`"));
        let mut parts = descriptor.split('|');
        let (Some(shape), Some(enc), Some(dec), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let dims: Vec<usize> = shape
            .split('x')
            .map(|t| t.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [h, w, c] = dims[..] else {
            return Err(bad());
        };
        let layers = |s: &str| s.split(',').map(LayerSpec::from_str).collect::<Result<Vec<_>>>();
        Self::new(Shape::new(h, w, c), latent_dim, layers(enc)?, layers(dec)?)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "latent_dim={};layers={}", self.latent_dim, self.layers_descriptor())
    }
}

fn check_chain(name: &str, layers: &[LayerSpec], first_in: usize, last_out: usize) -> Result<()> {
    let mut expected = first_in;
    for (i, l) in layers.iter().enumerate() {
        l.validate()?;
        if l.fan_in() != expected {
            return Err(Error::Input(format!(
                "{name} layer {i} (`{l}`) takes {} values but receives {expected}",
                l.fan_in()
            )));
        }
        expected = l.fan_out();
    }
    if expected != last_out {
        return Err(Error::Input(format!(
            "{name} produces {expected} values, expected {last_out}"
        )));
    }
    Ok(())
}
