use std::f64::consts::PI;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
    /// Forward-only; has no usable second derivative.
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    /// `[φ, φ', φ'', φ''']` at `z`, or `None` when the activation is not C³.
    #[inline]
    pub fn derivatives(self, z: f64) -> Option<[f64; 4]> {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                Some([t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)])
            }
            Activation::Sigmoid => {
                let y = 1.0 / (1.0 + (-z).exp());
                let d1 = y * (1.0 - y);
                let d2 = d1 * (1.0 - 2.0 * y);
                let d3 = d1 * (1.0 - 6.0 * y + 6.0 * y * y);
                Some([y, d1, d2, d3])
            }
            Activation::Identity => Some([z, 1.0, 0.0, 0.0]),
            Activation::Relu => None,
        }
    }

    /// First derivative; defined for every activation (ReLU uses the step).
    #[inline]
    pub fn slope(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            other => other.derivatives(z).expect("smooth")[1],
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

/// Input feature map applied before the first affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Embedding {
    /// Raw coordinates.
    None,
    /// Every coordinate `x` becomes `(sin 2πx, cos 2πx)`: exact periodicity on the unit torus.
    Torus,
    /// Coordinate 0 is time and passed through; the rest use the torus map.
    TimeTorus,
}

impl Embedding {
    pub fn name(self) -> &'static str {
        match self {
            Embedding::None => "none",
            Embedding::Torus => "torus",
            Embedding::TimeTorus => "time-torus",
        }
    }

    pub fn feature_dim(self, input_dim: usize) -> usize {
        match self {
            Embedding::None => input_dim,
            Embedding::Torus => 2 * input_dim,
            Embedding::TimeTorus => 1 + 2 * input_dim.saturating_sub(1),
        }
    }

    /// Writes features (and, if `cols > 1`, their first and diagonal second
    /// derivatives in the stacked column layout of [`super::jet`]) into `out`.
    pub(crate) fn embed(self, x: &[f64], cols: usize, out: &mut [f64]) {
        let d = x.len();
        out.fill(0.0);
        let full = cols > 1;
        let mut put = |feature: usize, coord: usize, v: f64, g: f64, h: f64| {
            out[feature * cols] = v;
            if full {
                out[feature * cols + 1 + coord] = g;
                out[feature * cols + 1 + d + coord] = h;
            }
        };
        let torus = |put: &mut dyn FnMut(usize, usize, f64, f64, f64), feature: usize, k: usize| {
            let (s, c) = (TWO_PI * x[k]).sin_cos();
            put(feature, k, s, TWO_PI * c, -TWO_PI * TWO_PI * s);
            put(feature + 1, k, c, -TWO_PI * s, -TWO_PI * TWO_PI * c);
        };
        match self {
            Embedding::None => {
                for (k, &xk) in x.iter().enumerate() {
                    put(k, k, xk, 1.0, 0.0);
                }
            }
            Embedding::Torus => {
                for k in 0..d {
                    torus(&mut put, 2 * k, k);
                }
            }
            Embedding::TimeTorus => {
                put(0, 0, x[0], 1.0, 0.0);
                for k in 1..d {
                    torus(&mut put, 2 * k - 1, k);
                }
            }
        }
    }
}

impl FromStr for Embedding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Embedding::None),
            "torus" => Ok(Embedding::Torus),
            "time-torus" => Ok(Embedding::TimeTorus),
            other => Err(Error::invalid(format!("unknown embedding `{other}`"))),
        }
    }
}

/// Architecture of a fully connected network. Parameters live separately in
/// a [`ParamVector`] so one architecture can be evaluated under many
/// parameter snapshots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    input_dim: usize,
    /// Feature width after the embedding, hidden widths, output width.
    widths: Vec<usize>,
    activation: Activation,
    embedding: Embedding,
    /// Trainable scalars appended after the layer parameters.
    extras: usize,
}

impl Mlp {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        embedding: Embedding,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if embedding == Embedding::TimeTorus && input_dim < 2 {
            return Err(Error::invalid("time-torus embedding needs (s, x) inputs"));
        }
        let mut widths = vec![embedding.feature_dim(input_dim)];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);
        Ok(Mlp {
            input_dim,
            widths,
            activation,
            embedding,
            extras: 0,
        })
    }

    /// Builds an architecture from explicit widths (feature width first).
    pub fn from_widths(
        input_dim: usize,
        widths: Vec<usize>,
        activation: Activation,
        embedding: Embedding,
        extras: usize,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let features = embedding.feature_dim(input_dim);
        if widths[0] != features {
            return Err(Error::shape("embedding output", features, widths[0]));
        }
        Ok(Mlp {
            input_dim,
            widths,
            activation,
            embedding,
            extras,
        })
    }

    pub fn with_extras(mut self, extras: usize) -> Self {
        self.extras = extras;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("widths nonempty")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    pub fn extras(&self) -> usize {
        self.extras
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(fan_in, fan_out)` of layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l], self.widths[l + 1])
    }

    pub fn layer_param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layer_param_count() + self.extras
    }

    /// Offsets of each layer's weights within a parameter vector; the bias
    /// follows the `out × in` row-major weight block.
    pub(crate) fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut at = 0;
        for w in self.widths.windows(2) {
            offsets.push(at);
            at += w[0] * w[1] + w[1];
        }
        offsets
    }

    /// Glorot-uniform weights, zero biases, zero extras.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut p = Vec::with_capacity(self.param_count());
        for w in self.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            p.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            p.extend(std::iter::repeat_n(0.0, fan_out));
        }
        p.extend(std::iter::repeat_n(0.0, self.extras));
        ParamVector(p)
    }

    pub(crate) fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape("parameter vector", self.param_count(), params.len()));
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape("layer 0 input", self.input_dim, x.len()));
        }
        Ok(())
    }

    /// Network output at `x`.
    pub fn forward(&self, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_input(x)?;
        Ok(super::jet::propagate(self, params, x, 1, None))
    }

    /// Splits a parameter vector into per-layer storage.
    pub fn to_layers(&self, params: &ParamVector) -> Result<Vec<Layer>> {
        self.check_params(params)?;
        let offsets = self.layer_offsets();
        Ok((0..self.n_layers())
            .map(|l| {
                let (n_in, n_out) = self.layer_shape(l);
                let w0 = offsets[l];
                Layer {
                    weights: params[w0..w0 + n_in * n_out].to_vec(),
                    bias: params[w0 + n_in * n_out..w0 + n_in * n_out + n_out].to_vec(),
                    fan_in: n_in,
                    fan_out: n_out,
                }
            })
            .collect())
    }

    /// Packs per-layer storage (and the trailing extras) into a flat vector.
    pub fn from_layers(&self, layers: &[Layer], extras: &[f64]) -> Result<ParamVector> {
        if layers.len() != self.n_layers() {
            return Err(Error::shape("layer count", self.n_layers(), layers.len()));
        }
        if extras.len() != self.extras {
            return Err(Error::shape("extra scalars", self.extras, extras.len()));
        }
        let mut p = Vec::with_capacity(self.param_count());
        for (l, layer) in layers.iter().enumerate() {
            let (n_in, n_out) = self.layer_shape(l);
            if layer.fan_in != n_in || layer.weights.len() != n_in * n_out {
                return Err(Error::shape(format!("layer {l} weights"), n_in * n_out, layer.weights.len()));
            }
            if layer.fan_out != n_out || layer.bias.len() != n_out {
                return Err(Error::shape(format!("layer {l} bias"), n_out, layer.bias.len()));
            }
            p.extend_from_slice(&layer.weights);
            p.extend_from_slice(&layer.bias);
        }
        p.extend_from_slice(extras);
        Ok(ParamVector(p))
    }
}

/// One affine layer: `z = W a + b` with `W` stored row-major (`fan_out × fan_in`).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Flat parameter storage: layer blocks in order, then extras.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// The trailing extras of `net`.
    pub fn extras<'a>(&'a self, net: &Mlp) -> &'a [f64] {
        &self.0[net.layer_param_count()..]
    }

    pub fn extras_mut<'a>(&'a mut self, net: &Mlp) -> &'a mut [f64] {
        let start = net.layer_param_count();
        &mut self.0[start..]
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}
