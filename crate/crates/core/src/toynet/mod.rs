//! A small fully convolutional network with hand-written backpropagation.
//!
//! Every layer is a same-padded `k×k` convolution; hidden layers are
//! followed by a leaky rectifier, the last layer is linear and produces the
//! embedding. Input and activations are channel-major planes.

mod adam;
mod conv;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{train, train_from, Sample, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::loss::GradientMap;
use crate::maps::EmbeddingMap;
use crate::synthdata::{coordinate_maps, rng_from_seed, uniform_f64, RgbImage};

static PARAM_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    PARAM_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub num_layers: usize,
    pub kernel_size: usize,
    pub out_dims: usize,
    pub weight_init_seed: u64,
    pub negative_slope: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            in_channels: 5,
            hidden_channels: 32,
            num_layers: 4,
            kernel_size: 3,
            out_dims: 2,
            weight_init_seed: 0,
            negative_slope: 0.1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if self.out_dims < 2 {
            return Err(Error::InvalidConfig(format!("out_dims must be >= 2, got {}", self.out_dims)));
        }
        if self.num_layers == 0 || self.in_channels == 0 {
            return Err(Error::InvalidConfig("num_layers and in_channels must be >= 1".into()));
        }
        if self.num_layers > 1 && self.hidden_channels == 0 {
            return Err(Error::InvalidConfig("hidden_channels must be >= 1".into()));
        }
        Ok(())
    }

    /// `(in, out)` channel counts of each layer.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|i| {
                let cin = if i == 0 { self.in_channels } else { self.hidden_channels };
                let cout = if i + 1 == self.num_layers { self.out_dims } else { self.hidden_channels };
                (cin, cout)
            })
            .collect()
    }
}

/// Weights `[out][in][ky][kx]` and biases of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            weight: vec![0.0; out_channels * in_channels * kernel_size * kernel_size],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_size, self.kernel_size]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    config: NetConfig,
    layers: Vec<ConvLayer>,
    version: u64,
}

impl NetParams {
    /// Fan-in scaled uniform initialization with zero biases. Hidden layers
    /// use bound `sqrt(6 / fan_in)`, the linear output layer `sqrt(3 / fan_in)`.
    /// Weights are drawn layer by layer in storage order from the generator
    /// seeded with `weight_init_seed`.
    pub fn init(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(config.weight_init_seed);
        let channels = config.layer_channels();
        let last = channels.len() - 1;
        let layers = channels
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout))| {
                let mut layer = ConvLayer::zeros(cin, cout, config.kernel_size);
                let fan_in = (cin * config.kernel_size * config.kernel_size) as f64;
                let bound = if i == last { (3.0 / fan_in).sqrt() } else { (6.0 / fan_in).sqrt() };
                for w in layer.weight.iter_mut() {
                    *w = (2.0 * uniform_f64(&mut rng) - 1.0) * bound;
                }
                layer
            })
            .collect();
        Ok(Self { config: *config, layers, version: next_version() })
    }

    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_channels()
            .into_iter()
            .map(|(cin, cout)| ConvLayer::zeros(cin, cout, config.kernel_size))
            .collect();
        Ok(Self { config: *config, layers, version: next_version() })
    }

    /// Builds parameters from explicit layers, checking them against `config`.
    pub fn from_layers(config: &NetConfig, layers: Vec<ConvLayer>) -> Result<Self> {
        let template = Self::zeros(config)?;
        if template.layers.len() != layers.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} layers", template.layers.len()),
                found: format!("{} layers", layers.len()),
            });
        }
        for (i, (t, l)) in template.layers.iter().zip(&layers).enumerate() {
            if t.weight_dims() != l.weight_dims() || t.weight.len() != l.weight.len() || t.bias.len() != l.bias.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {i} weight {:?}", t.weight_dims()),
                    found: format!("{:?} with {} weights", l.weight_dims(), l.weight.len()),
                });
            }
            if l.weight.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { config: *config, layers, version: next_version() })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        self.version = next_version();
        &mut self.layers
    }

    /// Named parameter tensors in a fixed order: `layer{i}.weight`, `layer{i}.bias`.
    pub fn tensors(&self) -> impl Iterator<Item = (String, &[f64])> {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            [(format!("layer{i}.weight"), l.weight.as_slice()), (format!("layer{i}.bias"), l.bias.as_slice())]
        })
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.version = next_version();
        self.layers.iter_mut().flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().map(|(_, t)| t.len()).sum()
    }
}

/// Gradients with the same layout as [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl NetGrads {
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub fn len(&self) -> usize {
        self.layers.len() * 2
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Channel-major input tensor `[channel][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Planes {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Planes {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{channels}x{height}x{width}"),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { channels, height, width, data })
    }
}

/// RGB planes followed by the x and y coordinate maps.
pub fn network_input(image: &RgbImage) -> Planes {
    let (h, w) = (image.height(), image.width());
    let mut data = image.to_planes();
    data.extend(coordinate_maps(h, w));
    Planes { channels: 5, height: h, width: w, data }
}

/// Activations kept from [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    height: usize,
    width: usize,
    /// Input to each layer; entry `i > 0` is the rectified output of layer `i − 1`.
    inputs: Vec<Vec<f64>>,
}

pub fn forward(params: &NetParams, input: &Planes) -> Result<(EmbeddingMap, ForwardCache)> {
    if input.channels != params.config.in_channels {
        return Err(Error::ShapeMismatch {
            expected: format!("{} input channels", params.config.in_channels),
            found: format!("{}", input.channels),
        });
    }
    let geom = conv::Geometry { height: input.height, width: input.width, kernel: params.config.kernel_size };
    let slope = params.config.negative_slope;
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut x = input.data.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut y = conv::forward(&geom, &x, layer.in_channels, &layer.weight, &layer.bias, layer.out_channels);
        if i != last {
            for v in y.iter_mut() {
                if *v < 0.0 {
                    *v *= slope;
                }
            }
        }
        inputs.push(std::mem::replace(&mut x, y));
    }
    let n = input.height * input.width;
    let d = params.config.out_dims;
    let mut values = vec![0.0; n * d];
    for c in 0..d {
        for p in 0..n {
            values[p * d + c] = x[c * n + p];
        }
    }
    let emb = EmbeddingMap::from_vec(input.height, input.width, d, values)?;
    Ok((emb, ForwardCache { version: params.version, height: input.height, width: input.width, inputs }))
}

/// Chain rule from `∂L/∂embedding` back to every weight and bias.
pub fn backward(params: &NetParams, cache: &ForwardCache, grad: &GradientMap) -> Result<NetGrads> {
    if cache.version != params.version {
        return Err(Error::StaleCache);
    }
    if grad.height() != cache.height || grad.width() != cache.width || grad.dims() != params.config.out_dims {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}x{}", cache.height, cache.width, params.config.out_dims),
            found: format!("{}x{}x{}", grad.height(), grad.width(), grad.dims()),
        });
    }
    let geom = conv::Geometry { height: cache.height, width: cache.width, kernel: params.config.kernel_size };
    let n = cache.height * cache.width;
    let d = params.config.out_dims;
    let mut gout = vec![0.0; n * d];
    for (p, g) in grad.as_slice().chunks_exact(d).enumerate() {
        for (c, &v) in g.iter().enumerate() {
            gout[c * n + p] = v;
        }
    }
    let slope = params.config.negative_slope;
    let mut out = vec![(Vec::new(), Vec::new()); params.layers.len()];
    for i in (0..params.layers.len()).rev() {
        let layer = &params.layers[i];
        let input = &cache.inputs[i];
        let (dw, db, din) =
            conv::backward(&geom, input, layer.in_channels, &layer.weight, layer.out_channels, &gout, i > 0);
        out[i] = (dw, db);
        if let Some(mut din) = din {
            // input[i] is the leaky-rectified output of layer i − 1; its sign
            // matches the pre-activation
            for (g, &a) in din.iter_mut().zip(input) {
                if a <= 0.0 {
                    *g *= slope;
                }
            }
            gout = din;
        }
    }
    Ok(NetGrads { layers: out })
}
